"""Reflection and gain spectra of a JPA inside a Fabry-Perot environment.

A partially reflecting element with power transmittance ``eta`` sits a
propagation distance away from the amplifier. Waves bouncing between the
element and the amplifier accumulate the round-trip coefficient

    R(delta) = eta0 * sqrt(1 - eta) * exp(i(+-2 pi delta/Delta + phi0)),

where ``eta0`` is the one-way propagation transmittance, ``Delta`` the free
spectral range and ``phi0`` the round-trip phase at the amplifier frequency.
Time delays are treated as frequency-dependent phase shifts, which is
accurate when the amplifier bandwidth is small compared with the carrier.

All rates and detunings are angular frequencies (rad/s). The detuning is
``delta = omega_s - omega_a`` and the pump sits at ``2 omega_a`` so the
idler is at ``-delta``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from fpjpa.circuit_model import JpaParams
from fpjpa.constants import REFERENCE_FLOOR, THRESHOLD_FLOOR, TWO_PI
from fpjpa.errors import NormalizationError, ThresholdError, ValidationError

ArrayLike = Union[float, Sequence[float], np.ndarray]

SPECTRUM_KINDS = ("complex_s11", "normalized_s11", "net_gain_linear", "net_gain_dB")
COMPLEX_KINDS = ("complex_s11", "normalized_s11")
GAIN_KINDS = ("net_gain_linear", "net_gain_dB")


def wrap_phase(phi):
    """Wrap angles to the half-open interval (-pi, pi]."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(phi, dtype=float), TWO_PI)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class FabryPerotParams:
    """Environment parameters.

    Attributes
    ----------
    eta : float
        Power transmittance of the reflecting element, in (0, 1].
    eta0 : float
        One-way propagation power transmittance, in (0, 1].
    fsr : float
        Free spectral range ``Delta`` (rad/s).
    phi0 : float
        Round-trip phase at the amplifier frequency (rad), stored wrapped.
    phi_ref : float
        Phase of the reflection reference (rad).
    """

    eta: float
    eta0: float
    fsr: float
    phi0: float = 0.0
    phi_ref: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.eta <= 1.0):
            raise ValidationError(f"eta must lie in (0, 1], got {self.eta}")
        if not (0.0 < self.eta0 <= 1.0):
            raise ValidationError(f"eta0 must lie in (0, 1], got {self.eta0}")
        if not (math.isfinite(self.fsr) and self.fsr > 0):
            raise ValidationError(f"fsr must be positive, got {self.fsr}")
        if not (math.isfinite(self.phi0) and math.isfinite(self.phi_ref)):
            raise ValidationError("phases must be finite")
        object.__setattr__(self, "phi0", wrap_phase(self.phi0))
        if not self.round_trip_magnitude < 1.0:
            raise ValidationError("round-trip magnitude must be below one")

    @property
    def round_trip_magnitude(self) -> float:
        """``|R| = eta0 sqrt(1 - eta)``."""
        return self.eta0 * math.sqrt(1.0 - self.eta)

    @property
    def tau(self) -> float:
        """One-way delay ``pi/Delta`` (s)."""
        return math.pi / self.fsr


@dataclass(frozen=True)
class DriveParams:
    """Parametric pump at twice the amplifier frequency.

    Attributes
    ----------
    omega_pump_amp : float
        Two-photon drive amplitude ``Omega_p`` (rad/s).
    """

    omega_pump_amp: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.omega_pump_amp) and self.omega_pump_amp >= 0):
            raise ValidationError("omega_pump_amp must be non-negative and finite")


@dataclass(frozen=True)
class Spectrum:
    """Sampled spectrum.

    Attributes
    ----------
    detunings : numpy.ndarray
        Strictly increasing detunings ``omega_s - omega_a`` (rad/s).
    values : numpy.ndarray
        Complex amplitudes or real gains.
    kind : str
        One of ``complex_s11``, ``normalized_s11``, ``net_gain_linear``,
        ``net_gain_dB``.
    center : float
        Absolute angular frequency corresponding to zero detuning; zero when
        unknown.
    """

    detunings: np.ndarray
    values: np.ndarray
    kind: str
    center: float = 0.0
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        d = np.asarray(self.detunings, dtype=float)
        if self.kind not in SPECTRUM_KINDS:
            raise ValidationError(f"unknown spectrum kind {self.kind!r}")
        dtype = complex if self.kind in COMPLEX_KINDS else float
        v = np.asarray(self.values, dtype=dtype)
        if d.ndim != 1 or v.shape != d.shape:
            raise ValidationError("detunings and values must be 1-D of equal length")
        if d.size >= 2 and not np.all(np.diff(d) > 0):
            raise ValidationError("detunings must be strictly increasing")
        object.__setattr__(self, "detunings", d)
        object.__setattr__(self, "values", v)

    def gain_linear(self) -> np.ndarray:
        """Power gain on a linear scale for any spectrum kind."""
        if self.kind == "net_gain_linear":
            return self.values
        if self.kind == "net_gain_dB":
            return 10.0 ** (self.values / 10.0)
        return np.abs(self.values) ** 2


def round_trip_coeff(delta: ArrayLike, fp: FabryPerotParams, branch: str = "signal"):
    """Round-trip coefficient ``R`` at detuning ``delta``.

    Parameters
    ----------
    delta : float or array
        Detuning (rad/s).
    fp : FabryPerotParams
    branch : {"signal", "idler"}
        The idler branch reverses the sign of the detuning phase.
    """
    sign = _branch_sign(branch)
    delta = np.asarray(delta, dtype=float)
    phase = sign * TWO_PI * delta / fp.fsr + fp.phi0
    return fp.round_trip_magnitude * np.exp(1j * phase)


def _branch_sign(branch: str) -> int:
    if branch == "signal":
        return 1
    if branch == "idler":
        return -1
    raise ValidationError(f"branch must be 'signal' or 'idler', got {branch!r}")


def response_inverse(delta: ArrayLike, jpa: JpaParams, fp: FabryPerotParams, branch: str = "signal"):
    """Inverse susceptibility dressed by the environment.

    ``chi^-1 = +-i delta - (kappa + kappa0)/2 - kappa R/(1 - R)``
    """
    sign = _branch_sign(branch)
    r = round_trip_coeff(delta, fp, branch)
    delta = np.asarray(delta, dtype=float)
    return sign * 1j * delta - 0.5 * jpa.kappa_tot - jpa.kappa * r / (1.0 - r)


def reflection_spectrum(delta: ArrayLike, jpa: JpaParams, fp: FabryPerotParams):
    """Unpumped reflection ``S11(delta)`` seen from the far side of the element."""
    r = round_trip_coeff(delta, fp, "signal")
    chi_inv = response_inverse(delta, jpa, fp, "signal")
    one_minus = 1.0 - r
    ee = fp.eta * fp.eta0
    return -np.conj(r) / fp.eta0 + ee / one_minus + ee * jpa.kappa / (one_minus**2 * chi_inv)


def signal_idler_determinant(delta: ArrayLike, jpa: JpaParams, fp: FabryPerotParams, omega_pump_amp: float):
    """``chi_s^-1 chi_i^-1* - Omega_p^2/4`` together with both factors."""
    chi_s = response_inverse(delta, jpa, fp, "signal")
    chi_i_conj = np.conj(response_inverse(delta, jpa, fp, "idler"))
    det = chi_s * chi_i_conj - 0.25 * omega_pump_amp**2
    return det, chi_s, chi_i_conj


def _check_threshold(det) -> None:
    """Reject a signal-idler determinant that has collapsed onto the threshold floor."""
    if np.any(np.abs(det) < THRESHOLD_FLOOR) or not np.all(np.isfinite(det)):
        raise ThresholdError("parametric drive at threshold (singular signal-idler system)")


def check_below_threshold(detunings: ArrayLike, jpa: JpaParams, fp: FabryPerotParams,
                          drive: Optional[DriveParams] = None) -> None:
    """Raise :class:`ThresholdError` unless ``|Omega_p|^2/4 < |chi_s^-1 chi_i^-1*|`` on every detuning.

    The closed-form spectra stay finite past this pointwise bound, so they only
    guard the singular determinant; callers that accept untrusted drive
    settings use this stricter test.
    """
    om = _pump(jpa, drive)
    if om == 0:
        return
    if np.any(om >= parametric_threshold(detunings, jpa, fp)):
        raise ThresholdError("parametric drive at or above the pointwise threshold on the requested grid")


def parametric_threshold(delta: ArrayLike, jpa: JpaParams, fp: FabryPerotParams):
    """Drive amplitude ``2 sqrt|chi_s^-1 chi_i^-1*|`` at each detuning.

    A drive below this value keeps the pointwise signal-idler system away
    from its singularity.
    """
    _, chi_s, chi_i_conj = signal_idler_determinant(delta, jpa, fp, 0.0)
    return 2.0 * np.sqrt(np.abs(chi_s * chi_i_conj))


def _pump(jpa: JpaParams, drive: Optional[DriveParams]) -> float:
    return jpa.omega_pump_amp if drive is None else drive.omega_pump_amp


def gain_spectrum(delta: ArrayLike, jpa: JpaParams, fp: FabryPerotParams, drive: Optional[DriveParams] = None):
    """Reflection ``S11`` of the pumped amplifier.

    Parameters
    ----------
    delta : float or array
        Signal detuning (rad/s).
    jpa : JpaParams
    fp : FabryPerotParams
    drive : DriveParams, optional
        Overrides ``jpa.omega_pump_amp`` when given.

    Raises
    ------
    ThresholdError
        If the signal-idler determinant vanishes on the grid.
    """
    omega_p = _pump(jpa, drive)
    r = round_trip_coeff(delta, fp, "signal")
    det, chi_s, chi_i_conj = signal_idler_determinant(delta, jpa, fp, omega_p)
    _check_threshold(det)
    one_minus = 1.0 - r
    ee = fp.eta * fp.eta0
    return (
        -np.conj(r) / fp.eta0
        + ee / one_minus
        + ee * jpa.kappa * chi_i_conj / (one_minus**2 * det)
    )


def reference_spectrum(delta: ArrayLike, fp: FabryPerotParams):
    """Reflection with the amplifier replaced by a pure phase ``exp(i phi_ref)``."""
    r = round_trip_coeff(delta, fp, "signal")
    rot = np.exp(1j * fp.phi_ref)
    return -np.conj(r) / fp.eta0 + fp.eta * fp.eta0 * rot / (1.0 - r * rot)


def normalized_spectrum(
    delta: ArrayLike,
    jpa: JpaParams,
    fp: FabryPerotParams,
    drive: Optional[DriveParams] = None,
):
    """Reflection normalized by the reference, and the net gain.

    Returns
    -------
    s_tilde : complex or array
        ``S11/S11_ref``.
    g_net : float or array
        ``eta0^2 |S11/S11_ref|^2``.
    """
    s11 = gain_spectrum(delta, jpa, fp, drive)
    ref = reference_spectrum(delta, fp)
    if np.any(np.abs(ref) < REFERENCE_FLOOR):
        raise NormalizationError("reference reflection magnitude below floor")
    s_tilde = s11 / ref
    return s_tilde, fp.eta0**2 * np.abs(s_tilde) ** 2


def net_gain(delta: ArrayLike, jpa: JpaParams, fp: FabryPerotParams, drive: Optional[DriveParams] = None):
    """Net gain ``eta0^2 |S11/S11_ref|^2``."""
    return normalized_spectrum(delta, jpa, fp, drive)[1]


def to_db(gain):
    """Power ratio in decibels, ``10 log10(G)``."""
    return 10.0 * np.log10(gain)


def from_db(gain_db):
    """Inverse of :func:`to_db`."""
    return 10.0 ** (np.asarray(gain_db, dtype=float) / 10.0)


def grid(start: float, stop: float, n: int) -> np.ndarray:
    """Detuning grid of ``n >= 2`` strictly increasing points."""
    n = int(n)
    if n < 2:
        raise ValidationError("a grid needs at least two points")
    if not stop > start:
        raise ValidationError("grid must be increasing (stop > start)")
    return np.linspace(start, stop, n)


def _evaluate(kind: str, delta, jpa, fp, drive):
    if kind == "complex_s11":
        return gain_spectrum(delta, jpa, fp, drive)
    if kind == "normalized_s11":
        return normalized_spectrum(delta, jpa, fp, drive)[0]
    g = normalized_spectrum(delta, jpa, fp, drive)[1]
    return g if kind == "net_gain_linear" else to_db(g)


def sweep(
    detunings: ArrayLike,
    jpa: JpaParams,
    fp: FabryPerotParams,
    drive: Optional[DriveParams] = None,
    kind: str = "complex_s11",
    jobs: int = 1,
    center: float = 0.0,
) -> Spectrum:
    """Evaluate a spectrum over a detuning grid.

    Parameters
    ----------
    detunings : array
        Strictly increasing detunings (rad/s).
    kind : str
        Spectrum kind to produce.
    jobs : int
        Number of worker threads. Chunks are reassembled in grid order so
        the result does not depend on ``jobs``.
    """
    d = np.asarray(detunings, dtype=float)
    if d.ndim != 1 or d.size < 2:
        raise ValidationError("a sweep needs a 1-D grid of at least two points")
    if not np.all(np.diff(d) > 0):
        raise ValidationError("sweep grid must be strictly increasing")
    if kind not in SPECTRUM_KINDS:
        raise ValidationError(f"unknown spectrum kind {kind!r}")
    jobs = max(1, int(jobs))
    if jobs == 1:
        values = _evaluate(kind, d, jpa, fp, drive)
    else:
        chunks = np.array_split(d, jobs)
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(lambda c: _evaluate(kind, c, jpa, fp, drive), chunks))
        values = np.concatenate(parts)
    return Spectrum(detunings=d, values=values, kind=kind, center=center)
