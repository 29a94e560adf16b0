"""Single-photon buffering in a Mn-doped quantum dot-cavity system.

Simulates the write/store/read protocol on the driven, lossy
Lambda system (ground, bright exciton, dark exciton) coupled to one
cavity mode, optionally with LA-phonon coupling treated by an iterated
path integral, and provides the analysis tools used to characterise the
storage (exponential fits, the effective dark-state decay rate and
Gaussian pulse optimisation).
"""

__version__ = "0.1.0"

from .constants import HBAR, KB, MU_B
from .hilbert import Space, build_space
from .model import ModelParams, DerivedCouplings, derive_couplings
from .pulses import RectPulse, GaussPulse, PulseSequence

__all__ = [
    "HBAR",
    "KB",
    "MU_B",
    "Space",
    "build_space",
    "ModelParams",
    "DerivedCouplings",
    "derive_couplings",
    "RectPulse",
    "GaussPulse",
    "PulseSequence",
]
