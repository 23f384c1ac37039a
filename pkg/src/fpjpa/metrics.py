"""Figures of merit of gain spectra.

Bandwidth convention
--------------------
:func:`bandwidth_3db` returns the full width at half maximum (FWHM) of the
lobe containing the gain peak. The gain-bandwidth relation
``B G^alpha = kappa_tot/2`` is calibrated so that a single-pole amplifier
(``B ~ kappa_tot/(2 sqrt(G))``) has ``alpha = 1/2``. The exact single-pole
FWHM is ``kappa_tot/sqrt(G)``, so the ``B`` entering that relation is the
half width at half maximum, ``FWHM/2``. :func:`gain_metrics` applies this
convention; :func:`gb_exponent` itself takes ``B`` as given.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from fpjpa.circuit_model import JpaParams
from fpjpa.constants import ONE_DB_VISIBILITY
from fpjpa.errors import BandwidthError, ValidationError
from fpjpa.interference import (
    DriveParams,
    FabryPerotParams,
    Spectrum,
    gain_spectrum,
)


@dataclass(frozen=True)
class BandwidthResult:
    """Half-maximum lobe around the gain peak.

    Attributes
    ----------
    fwhm : float
        Full width at half maximum (rad/s).
    lower, upper : float
        Interpolated half-maximum crossings (rad/s).
    peak_detuning : float
        Detuning of the sampled maximum (rad/s).
    max_gain : float
        Sampled maximum gain (linear).
    multi_lobe : bool
        True when samples outside the lobe also reach half maximum.
    """

    fwhm: float
    lower: float
    upper: float
    peak_detuning: float
    max_gain: float
    multi_lobe: bool


@dataclass(frozen=True)
class GainMetrics:
    """Summary of a gain spectrum.

    Attributes
    ----------
    max_gain_linear : float
    bandwidth_3db : float
        FWHM of the peak lobe (rad/s).
    gb_exponent : float or None
        Gain-bandwidth exponent with ``B = bandwidth_3db/2``; None when the
        total decay rate is unknown.
    visibility : float or None
        Ripple visibility; None when ``delta = 0`` is outside the spectrum.
    multi_lobe : bool
    """

    max_gain_linear: float
    bandwidth_3db: float
    gb_exponent: Optional[float]
    visibility: Optional[float]
    multi_lobe: bool


def _interp_crossing(x0, x1, y0, y1, level):
    return x0 + (level - y0) * (x1 - x0) / (y1 - y0)


def bandwidth_details(spec: Spectrum) -> BandwidthResult:
    """Locate the half-maximum lobe containing the global gain maximum.

    Raises
    ------
    BandwidthError
        For a flat spectrum, a peak on the grid boundary, or a lobe that
        extends past the sampled range.
    """
    d = spec.detunings
    g = spec.gain_linear()
    if g.size < 3:
        raise BandwidthError("need at least three samples")
    if not np.all(np.isfinite(g)):
        raise BandwidthError("non-finite gain samples")
    if np.ptp(g) == 0:
        raise BandwidthError("flat spectrum has no unique peak")
    i = int(np.argmax(g))
    if i == 0 or i == g.size - 1:
        raise BandwidthError("gain peak lies on the grid boundary; bandwidth inconclusive")
    half = 0.5 * g[i]
    below = g < half
    left_idx = np.nonzero(below[:i])[0]
    right_idx = np.nonzero(below[i + 1:])[0]
    if left_idx.size == 0 or right_idx.size == 0:
        raise BandwidthError("half-maximum lobe extends beyond the sampled range")
    lo = int(left_idx[-1])
    hi = int(right_idx[0]) + i + 1
    lower = _interp_crossing(d[lo], d[lo + 1], g[lo], g[lo + 1], half)
    upper = _interp_crossing(d[hi - 1], d[hi], g[hi - 1], g[hi], half)
    outside = np.concatenate([g[:lo + 1], g[hi:]])
    multi = bool(np.any(outside >= half))
    return BandwidthResult(upper - lower, lower, upper, float(d[i]), float(g[i]), multi)


def bandwidth_3db(spec: Spectrum) -> float:
    """Full width at half maximum of the peak lobe (rad/s)."""
    return bandwidth_details(spec).fwhm


def gb_exponent(bandwidth: float, gain: float, kappa_tot: float) -> float:
    """Exponent ``alpha`` of ``B G^alpha = kappa_tot/2``.

    Parameters
    ----------
    bandwidth : float
        ``B`` (rad/s). For the single-pole calibration described in the
        module docstring pass the half width, ``bandwidth_3db/2``.
    gain : float
        Linear peak gain, greater than one.
    kappa_tot : float
        Total decay rate without pump (rad/s).
    """
    if not gain > 1:
        raise ValidationError(f"gain must exceed 1, got {gain}")
    if not bandwidth > 0:
        raise ValidationError("bandwidth must be positive")
    return math.log(kappa_tot / (2.0 * bandwidth)) / math.log(gain)


def visibility_from_gain(max_gain: float, center_gain: float) -> float:
    """``(max - center)/(max + center)``."""
    return (max_gain - center_gain) / (max_gain + center_gain)


def visibility_grid(fp: FabryPerotParams, n_points: int = 2001, span: float = 2.0) -> np.ndarray:
    """Default detuning grid ``[-span*Delta, span*Delta]`` with zero exactly included."""
    n_points = int(n_points)
    if n_points < 3:
        raise ValidationError("visibility grid needs at least three points")
    if n_points % 2 == 0:
        n_points += 1
    d = np.linspace(-span * fp.fsr, span * fp.fsr, n_points)
    d[n_points // 2] = 0.0
    return d


def ripple_visibility(
    jpa: JpaParams,
    fp: FabryPerotParams,
    drive: Optional[DriveParams] = None,
    n_points: int = 2001,
    span: float = 2.0,
) -> float:
    """Visibility of interference ripples around the amplifier frequency.

    ``V = (max|S11|^2 - |S11(0)|^2)/(max|S11|^2 + |S11(0)|^2)`` with the
    maximum taken over ``delta in [-span*Delta, span*Delta]``.
    """
    d = visibility_grid(fp, n_points, span)
    g = np.abs(gain_spectrum(d, jpa, fp, drive)) ** 2
    return visibility_from_gain(float(np.max(g)), float(g[d.size // 2]))


def single_pole_gain(delta, jpa: JpaParams, omega_pump_amp: float, eta0: float = 1.0):
    """Reflection gain without interference (``eta = 1``)."""
    fp = FabryPerotParams(eta=1.0, eta0=eta0, fsr=1.0)
    return np.abs(gain_spectrum(delta, jpa, fp, DriveParams(omega_pump_amp))) ** 2


def pump_for_gain(jpa: JpaParams, gain: float, eta0: float = 1.0) -> float:
    """Drive amplitude giving reflection gain ``gain`` at ``delta = 0`` for ``eta = 1``."""
    if not gain > 1:
        raise ValidationError("target gain must exceed 1")
    k_tot = jpa.kappa_tot

    def f(om):
        return math.log(float(single_pole_gain(0.0, jpa, om, eta0))) - math.log(gain)

    lo, hi = 0.0, k_tot * (1.0 - 1e-12)
    if f(lo) >= 0:
        raise ValidationError("target gain is below the unpumped reflection")
    return brentq(f, lo, hi, xtol=1e-12 * k_tot, rtol=1e-15)


def effective_bandwidth(jpa: JpaParams, omega_pump_amp: float) -> float:
    """FWHM of the interference-free gain profile (rad/s).

    The half-maximum detuning is found by bracketing on the monotone
    flank, which is exact up to root-finder tolerance.
    """
    g0 = float(single_pole_gain(0.0, jpa, omega_pump_amp))
    k_tot = jpa.kappa_tot

    def f(d):
        return float(single_pole_gain(d, jpa, omega_pump_amp)) - 0.5 * g0

    hi = k_tot
    while f(hi) > 0:
        hi *= 2.0
        if hi > 1e6 * k_tot:
            raise BandwidthError("half maximum not found")
    half = brentq(f, 0.0, hi, xtol=1e-14 * k_tot, rtol=1e-15)
    return 2.0 * half


@dataclass(frozen=True)
class VisibilityMapBase:
    """Amplifier baseline for visibility maps.

    Attributes
    ----------
    kappa : float
        Coupling rate (rad/s).
    kappa0 : float
        Intrinsic loss (rad/s).
    omega_pump_amp : float
        Drive amplitude held fixed over the map (rad/s).
    eta0 : float
    phi0 : float
    n_points : int
        Detuning samples per cell.
    """

    kappa: float
    kappa0: float
    omega_pump_amp: float
    eta0: float = 0.9
    phi0: float = 0.0
    n_points: int = 2001

    @property
    def jpa(self) -> JpaParams:
        return JpaParams(omega_a=0.0, kappa=self.kappa, kappa0=self.kappa0)


def visibility_map(
    one_minus_eta,
    fsr_over_beff,
    base: VisibilityMapBase,
    jobs: int = 1,
):
    """Ripple visibility over reflectivity and free spectral range.

    Parameters
    ----------
    one_minus_eta : array
        Reflectivities ``1 - eta`` (rows).
    fsr_over_beff : array
        Free spectral ranges in units of the interference-free FWHM
        (columns).
    base : VisibilityMapBase
    jobs : int
        Worker threads; rows are distributed and reassembled in order.

    Returns
    -------
    field : numpy.ndarray
        Shape ``(len(one_minus_eta), len(fsr_over_beff))``.
    b_eff : float
        The interference-free FWHM used for the column axis (rad/s).
    """
    rows = np.asarray(one_minus_eta, dtype=float)
    cols = np.asarray(fsr_over_beff, dtype=float)
    if np.any(rows < 0) or np.any(rows >= 1):
        raise ValidationError("1 - eta must lie in [0, 1)")
    if np.any(cols <= 0):
        raise ValidationError("fsr/B_eff must be positive")
    jpa = base.jpa
    drive = DriveParams(base.omega_pump_amp)
    b_eff = effective_bandwidth(jpa, base.omega_pump_amp)

    def row(x):
        out = np.empty(cols.size)
        for j, y in enumerate(cols):
            fp = FabryPerotParams(eta=1.0 - x, eta0=base.eta0, fsr=y * b_eff, phi0=base.phi0)
            out[j] = ripple_visibility(jpa, fp, drive, base.n_points)
        return out

    jobs = max(1, int(jobs))
    if jobs == 1:
        field = [row(x) for x in rows]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            field = list(pool.map(row, rows))
    return np.array(field).reshape(rows.size, cols.size), b_eff


def contour_crossing(xs, values, level: float = ONE_DB_VISIBILITY) -> Optional[float]:
    """First abscissa where a decreasing sampled curve drops through ``level``.

    Linear interpolation between the bracketing samples; None if the curve
    never crosses.
    """
    xs = np.asarray(xs, dtype=float)
    values = np.asarray(values, dtype=float)
    for k in range(xs.size - 1):
        if values[k] >= level > values[k + 1]:
            return float(_interp_crossing(xs[k], xs[k + 1], values[k], values[k + 1], level))
    return None


def saturation_input_flux(kappa: float, gain: float, kerr: float, prefactor: float = 1.0) -> float:
    """Input photon flux at compression, ``prefactor kappa^2/(G |K|)`` (1/s).

    ``prefactor`` is a device-dependent calibration constant; only the
    scaling with ``kappa``, ``G`` and ``K`` is fixed.
    """
    if not gain > 1:
        raise ValidationError("gain must exceed 1")
    if kerr == 0:
        warnings.warn("zero Kerr coefficient: saturation flux is unbounded", RuntimeWarning, stacklevel=2)
        return math.inf
    return prefactor * kappa**2 / (gain * abs(kerr))


def gain_metrics(spec: Spectrum, kappa_tot: Optional[float] = None) -> GainMetrics:
    """Peak gain, bandwidth, exponent and visibility of a gain spectrum."""
    bw = bandwidth_details(spec)
    alpha = None
    if kappa_tot is not None and bw.max_gain > 1:
        alpha = gb_exponent(0.5 * bw.fwhm, bw.max_gain, kappa_tot)
    vis = None
    d = spec.detunings
    if d[0] <= 0.0 <= d[-1]:
        g = spec.gain_linear()
        center = float(np.interp(0.0, d, g))
        vis = visibility_from_gain(float(np.max(g)), center)
    return GainMetrics(bw.max_gain, bw.fwhm, alpha, vis, bw.multi_lobe)
