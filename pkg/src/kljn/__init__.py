"""Kirchhoff-Law-Johnson-Noise secure key exchange: simulation and analysis.

Subpackage map:

* :mod:`kljn.noise` -- band-limited Johnson-noise synthesis and PSD tools
* :mod:`kljn.circuit` -- loop solvers (ideal and non-ideal wire)
* :mod:`kljn.protocol` -- the key-exchange session and defense alarm
* :mod:`kljn.attacks` -- eavesdropper catalog and leak quantification
* :mod:`kljn.privacy` -- XOR-pair privacy amplification
* :mod:`kljn.qkd` -- BB84 intercept-resend detection baseline
* :mod:`kljn.harness` -- seeded experiment runner, CSV/JSON reports
* :mod:`kljn.netwire` -- framed-TCP distributed demonstration
* :mod:`kljn.cli` -- command-line interface
"""

__version__ = "0.1.0"

from .circuit import ResistorPair, WireModel
from .noise import NoiseConfig
from .protocol import SessionConfig, run_session

__all__ = [
    "NoiseConfig",
    "ResistorPair",
    "SessionConfig",
    "WireModel",
    "run_session",
    "__version__",
]
