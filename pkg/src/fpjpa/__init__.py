"""Flux-driven Josephson parametric amplifier in a Fabry-Perot environment.

The modules follow the modelling chain: ``circuit_model`` and
``design`` map circuit elements to Hamiltonian parameters, ``interference``
evaluates reflection and gain spectra, ``noise`` decomposes the full
input-output relation into an effective amplifier, ``metrics`` extracts
figures of merit, ``fitting`` inverts the spectra, and ``oracle`` holds
brute-force reference implementations used for validation.
"""

from fpjpa.circuit_model import BiasState, CircuitParams, JpaParams
from fpjpa.interference import DriveParams, FabryPerotParams, Spectrum

__all__ = [
    "BiasState",
    "CircuitParams",
    "DriveParams",
    "FabryPerotParams",
    "JpaParams",
    "Spectrum",
]

__version__ = "0.1.0"
