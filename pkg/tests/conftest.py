import warnings

import numpy as np
import pytest

from relaymag import probes


@pytest.fixture(autouse=True)
def _quiet_field_warnings():
    # many tests intentionally run with bc or b0 comparable to B0
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="bias field B0 should dominate")
        warnings.filterwarnings("ignore", message="pulse interval misses the magic")
        yield


@pytest.fixture
def css_x():
    def _make(J: float) -> np.ndarray:
        return probes.prepare_css(J)

    return _make
