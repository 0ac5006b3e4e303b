"""Heart- and breathing-rate estimators."""
from ._common import SpectrumResult
from .ctf import CtfDiagnostics, CtfMode, ctf_estimate
from .fft import improved_fft
from .music import music_estimate
from .prony import PronyComponent, prony_estimate, prony_fit

__all__ = [
    "CtfDiagnostics",
    "CtfMode",
    "PronyComponent",
    "SpectrumResult",
    "ctf_estimate",
    "improved_fft",
    "music_estimate",
    "prony_estimate",
    "prony_fit",
]
