"""DC magnetometry with a collective spin-J probe under dynamical decoupling.

Subpackages cover exact spin-J algebra and propagation (``spinalg``), probe
state preparation (``probes``), field configuration and stray-field sampling
(``fields``), pulse-sequence scheduling and single-realization runs
(``ddsim``), Monte Carlo ensembles (``ensemble``), phase-relay signal
estimation (``prm``), sensitivity metrics and reference limits (``metrics``),
closed-form dephasing cross-checks (``oracle``) and the experiment CLI
(``config``/``scenarios``/``cli``).
"""

from relaymag.fields import GAMMA_RB, FieldConfig, magic_tau

__all__ = ["GAMMA_RB", "FieldConfig", "magic_tau"]
__version__ = "0.1.0"
