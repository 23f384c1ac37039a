"""Brute-force reference implementations.

Each function here reaches a closed-form result of the main modules by a
different route: explicit multiple-reflection sums, a numerical linear
solve of the coupled signal-idler equations, a root solve of the full
transcendental SQUID relations, and a direct time-domain integration of
the delayed-feedback amplitude equations. None of them imports the closed
forms they are meant to check.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from fpjpa.circuit_model import JpaParams
from fpjpa.constants import THRESHOLD_FLOOR, TWO_PI
from fpjpa.errors import ConvergenceError, ThresholdError, ValidationError
from fpjpa.interference import DriveParams, FabryPerotParams


@dataclass(frozen=True)
class TruncationSpec:
    """Stopping rule for the multiple-reflection sums.

    Attributes
    ----------
    max_terms : int
        Largest number of round trips included.
    tail_tolerance : float
        Stop once the magnitude of the next term drops below this value.
    """

    max_terms: int = 200
    tail_tolerance: float = 1e-18

    def __post_init__(self):
        if self.max_terms < 1:
            raise ValidationError("max_terms must be at least 1")
        if not self.tail_tolerance > 0:
            raise ValidationError("tail_tolerance must be positive")


def _round_trip(delta, fp: FabryPerotParams, sign: int = 1):
    """Round-trip coefficient rebuilt from the delay ``2 tau = 2 pi/Delta``."""
    two_tau = TWO_PI / fp.fsr
    mag = fp.eta0 * math.sqrt(1.0 - fp.eta)
    return mag * np.exp(1j * (sign * np.asarray(delta, dtype=float) * two_tau + fp.phi0))


def _powers(rho, spec: TruncationSpec, start: int):
    """Sum ``rho**n`` for ``n >= start`` term by term."""
    mag = float(np.max(np.abs(rho))) if np.size(rho) else 0.0
    total = np.zeros_like(np.asarray(rho, dtype=complex))
    n = start
    while True:
        term = rho**n
        total = total + term
        n += 1
        if mag**n < spec.tail_tolerance or mag == 0.0:
            break
        if n > spec.max_terms:
            bound = mag**n / (1.0 - mag)
            warnings.warn(
                f"series truncated at {spec.max_terms} terms; tail bound {bound:.3e}",
                RuntimeWarning,
                stacklevel=3,
            )
            break
    return total


def truncated_series_reflection(
    delta,
    jpa: JpaParams,
    fp: FabryPerotParams,
    spec: TruncationSpec = TruncationSpec(),
    reflector: Union[str, Tuple[str, float]] = "jpa_model",
):
    """Reflection from the explicit multiple-delay sums.

    The amplifier mode is driven by the incoming field at the discrete
    times ``t - 2n tau``; each delay contributes a phase factor. The sums
    are evaluated term by term and the resulting scalar mode equation is
    then solved for the intracavity amplitude.

    Parameters
    ----------
    reflector : "jpa_model" or ("pure_phase", phi_r)
        The amplifier itself, or a lossless element reflecting with a
        fixed phase.
    """
    rho = _round_trip(delta, fp)
    t_amp = math.sqrt(fp.eta)
    eta0 = fp.eta0
    direct = -np.conj(rho) / eta0

    if reflector == "jpa_model":
        s0 = _powers(rho, spec, 0)
        s1 = _powers(rho, spec, 1)
        drive = t_amp * math.sqrt(eta0 * jpa.kappa) * s0
        lhs = 1j * np.asarray(delta, dtype=float) - 0.5 * (jpa.kappa + jpa.kappa0) - jpa.kappa * s1
        a = 1j * drive / lhs
        return direct - 1j * t_amp * math.sqrt(eta0 * jpa.kappa) * s0 * a + t_amp**2 * eta0 * s0

    if isinstance(reflector, tuple) and reflector[0] == "pure_phase":
        rot = np.exp(1j * float(reflector[1]))
        s = _powers(rho * rot, spec, 0)
        return direct + t_amp**2 * eta0 * rot * s
    raise ValidationError(f"unknown reflector {reflector!r}")


def bounce_sum_reflection(delta, jpa: JpaParams, fp: FabryPerotParams, spec: TruncationSpec = TruncationSpec()):
    """Reflection as a sum over bounces between element and bare amplifier.

    The bare amplifier reflects with ``r = 1 + kappa/(i delta - kappa_tot/2)``
    and every additional bounce multiplies by ``rho * r``.
    """
    rho = _round_trip(delta, fp)
    r_bare = 1.0 + jpa.kappa / (1j * np.asarray(delta, dtype=float) - 0.5 * (jpa.kappa + jpa.kappa0))
    series = _powers(rho * r_bare, spec, 0)
    return -np.conj(rho) / fp.eta0 + fp.eta * fp.eta0 * r_bare * series


def _chi_inv(delta, jpa: JpaParams, fp: FabryPerotParams, sign: int):
    rho = _round_trip(delta, fp, sign)
    return sign * 1j * np.asarray(delta, dtype=float) - 0.5 * (jpa.kappa + jpa.kappa0) - jpa.kappa * rho / (1.0 - rho)


def _signal_idler_system(delta, jpa: JpaParams, fp: FabryPerotParams, omega_p: float):
    """Matrix, source rows and output rows of the coupled equations.

    Source columns are ordered ``(c, c', u, u', v, v', d, d')``.
    """
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    n = delta.size
    eta, eta0, kappa, kappa0 = fp.eta, fp.eta0, jpa.kappa, jpa.kappa0
    t_amp = math.sqrt(eta)
    r_s = _round_trip(delta, fp, 1)
    r_ic = np.conj(_round_trip(delta, fp, -1))
    chi_s = _chi_inv(delta, jpa, fp, 1)
    chi_ic = np.conj(_chi_inv(delta, jpa, fp, -1))

    m = np.zeros((n, 2, 2), dtype=complex)
    m[:, 0, 0] = chi_s
    m[:, 0, 1] = 0.5j * omega_p
    m[:, 1, 0] = -0.5j * omega_p
    m[:, 1, 1] = chi_ic

    a_s = 1.0 / (1.0 - r_s)
    a_i = 1.0 / (1.0 - r_ic)
    src_s = np.zeros((n, 8), dtype=complex)
    src_s[:, 0] = t_amp * math.sqrt(eta0 * kappa) * a_s
    src_s[:, 2] = math.sqrt((1.0 - eta0) * kappa) * a_s
    src_s[:, 4] = math.sqrt((1.0 - eta0) * kappa / eta0) * r_s * a_s
    src_s[:, 6] = math.sqrt(kappa0)
    src_i = np.zeros((n, 8), dtype=complex)
    src_i[:, 1] = t_amp * math.sqrt(eta0 * kappa) * a_i
    src_i[:, 3] = math.sqrt((1.0 - eta0) * kappa) * a_i
    src_i[:, 5] = math.sqrt((1.0 - eta0) * kappa / eta0) * r_ic * a_i
    src_i[:, 7] = math.sqrt(kappa0)
    rhs = 1j * np.stack([src_s, -src_i], axis=1)

    out_mode = -1j * t_amp * math.sqrt(eta0 * kappa) * a_s
    out_direct = np.zeros((n, 8), dtype=complex)
    out_direct[:, 0] = -np.conj(r_s) / eta0 + eta * eta0 * a_s
    out_direct[:, 2] = t_amp * math.sqrt(eta0 * (1.0 - eta0)) * a_s
    out_direct[:, 4] = t_amp * math.sqrt(1.0 - eta0) * a_s
    return m, rhs, out_mode, out_direct


def _solve(delta, jpa, fp, drive):
    omega_p = jpa.omega_pump_amp if drive is None else drive.omega_pump_amp
    m, rhs, out_mode, out_direct = _signal_idler_system(delta, jpa, fp, omega_p)
    det = np.linalg.det(m)
    if np.any(np.abs(det) < THRESHOLD_FLOOR):
        raise ThresholdError("signal-idler matrix is singular")
    modes = np.linalg.solve(m, rhs)
    return out_mode[:, None] * modes[:, 0, :] + out_direct


def signal_idler_matrix_solve(delta, jpa: JpaParams, fp: FabryPerotParams, drive: Optional[DriveParams] = None):
    """Pumped reflection from a numerical 2x2 solve of the mode equations."""
    coeffs = _solve(delta, jpa, fp, drive)[:, 0]
    return coeffs[0] if np.ndim(delta) == 0 else coeffs


def io_matrix_solve(delta, jpa: JpaParams, fp: FabryPerotParams, drive: Optional[DriveParams] = None):
    """All eight output coefficients from the numerical solve.

    Returns
    -------
    numpy.ndarray
        Shape ``(n, 8)``, columns ordered ``(c, c', u, u', v, v', d, d')``.
    """
    return _solve(delta, jpa, fp, drive)


def squid_numeric_charge_flux(phi: float, beta: float, phi_c: float, tol: float = 1e-13) -> float:
    """Solve the coupled SQUID current-flux relations for ``theta``.

    ``theta = |cos(phi_c - beta theta_c)| sin(phi - beta theta)`` and
    ``theta_c = +-sin(phi_c - beta theta_c) cos(phi - beta theta)``, the
    sign being that of ``cos(phi_c - beta theta_c)``. The inner equation
    for ``theta`` is monotone and solved by bracketing; the outer one for
    ``theta_c`` is bracketed on ``[-1, 1]``; a final damped Newton pass on
    the pair polishes the root.
    """
    if not (0.0 <= beta <= 1.0):
        raise ValidationError("beta must lie in [0, 1]")

    def theta_of(theta_c):
        cc = abs(math.cos(phi_c - beta * theta_c))
        if cc == 0.0 or phi == 0.0:
            return 0.0
        f = lambda t: t - cc * math.sin(phi - beta * t)
        return brentq(f, -1.5, 1.5, xtol=1e-300, rtol=1e-15, maxiter=500)

    def outer(theta_c):
        arg = phi_c - beta * theta_c
        sign = 1.0 if math.cos(arg) >= 0 else -1.0
        return theta_c - sign * math.sin(arg) * math.cos(phi - beta * theta_of(theta_c))

    theta_c = brentq(outer, -1.5, 1.5, xtol=1e-300, rtol=1e-15, maxiter=500)
    theta = theta_of(theta_c)

    def residual(x):
        t, tc = x
        arg_c = phi_c - beta * tc
        sign = 1.0 if math.cos(arg_c) >= 0 else -1.0
        return np.array([
            t - abs(math.cos(arg_c)) * math.sin(phi - beta * t),
            tc - sign * math.sin(arg_c) * math.cos(phi - beta * t),
        ])

    x = np.array([theta, theta_c])
    res = residual(x)
    for _ in range(20):
        if np.max(np.abs(res)) < 1e-16:
            break
        h = 1e-7
        jac = np.empty((2, 2))
        for j in range(2):
            dx = np.zeros(2)
            dx[j] = h
            jac[:, j] = (residual(x + dx) - residual(x - dx)) / (2 * h)
        step = np.linalg.solve(jac, res)
        lam = 1.0
        while lam > 1e-4:
            trial = x - lam * step
            r_trial = residual(trial)
            if np.max(np.abs(r_trial)) < np.max(np.abs(res)):
                x, res = trial, r_trial
                break
            lam *= 0.5
        else:
            break
    if np.max(np.abs(res)) > max(tol, 1e-12):
        raise ConvergenceError("SQUID solve did not converge", residual=float(np.max(np.abs(res))))
    return float(x[0])


@dataclass(frozen=True)
class TimeDomainResult:
    """Steady-state phasor of a time-domain run."""

    response: complex
    drift: float
    steps: int


def _hermite(t, t0, h, y0, y1, f0, f1):
    s = (t - t0) / h
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def time_domain_delay_simulation(
    jpa: JpaParams,
    fp: FabryPerotParams,
    delta: float,
    duration: float,
    steps_per_round_trip: int = 200,
    tau: Optional[float] = None,
    average_fraction: float = 0.2,
    drift_tolerance: float = 1e-6,
) -> TimeDomainResult:
    """Integrate the delayed-feedback amplitude equations for a probe tone.

    The equations are written for envelopes in the frame rotating at the
    amplifier frequency:

        a_in(t)  = rho0 [a_in(t - 2 tau) - i sqrt(kappa) a(t - 2 tau)] + sqrt(eta eta0) c_in(t)
        da/dt    = -(kappa + kappa0)/2 a - i sqrt(kappa) a_in(t)
        c_out(t) = -(rho0*/eta0) c_in(t + 2 tau) + sqrt(eta eta0) [a_in(t) - i sqrt(kappa) a(t)]

    with ``rho0 = eta0 sqrt(1 - eta) exp(i phi0)`` and a probe
    ``c_in(t) = exp(-i delta t)`` switched on at ``t = 0``. Fixed-step RK4
    advances ``a``; delayed values between grid points come from cubic
    Hermite interpolation of the stored history. The steady-state response
    is ``c_out conj(c_in)`` averaged over the final part of the run.

    Parameters
    ----------
    delta : float
        Probe detuning (rad/s).
    duration : float
        Integration time (s); must exceed the ring-down time.
    steps_per_round_trip : int
        Number of RK4 steps per delay ``2 tau``.
    tau : float, optional
        One-way delay (s). Defaults to ``pi/fsr``; ``0`` removes the delay.

    Returns
    -------
    TimeDomainResult
        Response, relative drift between the two halves of the averaging
        window, and the number of steps.
    """
    tau = fp.tau if tau is None else float(tau)
    kappa, kappa_tot = jpa.kappa, jpa.kappa + jpa.kappa0
    sk = math.sqrt(kappa)
    g = math.sqrt(fp.eta * fp.eta0)
    rho0 = fp.eta0 * math.sqrt(1.0 - fp.eta) * complex(math.cos(fp.phi0), math.sin(fp.phi0))
    two_tau = 2.0 * tau
    if two_tau > 0:
        h = two_tau / steps_per_round_trip
    else:
        h = min(duration, 1.0 / kappa_tot) / steps_per_round_trip
    n_steps = int(math.ceil(duration / h))
    max_bounces = 0
    if two_tau > 0 and abs(rho0) > 0:
        max_bounces = int(math.ceil(math.log(1e-18) / math.log(abs(rho0))))
    if two_tau == 0 and abs(rho0) > 0:
        raise ValidationError("zero delay requires a transparent element (eta = 1)")

    a_hist = np.zeros(n_steps + 2, dtype=complex)
    f_hist = np.zeros(n_steps + 2, dtype=complex)

    def c_in(t):
        return complex(math.cos(delta * t), -math.sin(delta * t)) if t >= 0 else 0j

    def a_past(s):
        if s <= 0:
            return 0j
        k = int(s // h)
        t0 = k * h
        if s - t0 < 1e-12 * h:
            return a_hist[k]
        return _hermite(s, t0, h, a_hist[k], a_hist[k + 1], f_hist[k], f_hist[k + 1])

    def a_in(t):
        total = g * c_in(t)
        factor = 1.0 + 0j
        for n in range(1, max_bounces + 1):
            s = t - n * two_tau
            if s < 0:
                break
            factor *= rho0
            total += factor * (g * c_in(s) - 1j * sk * a_past(s))
        return total

    def rhs(t, a):
        return -0.5 * kappa_tot * a - 1j * sk * a_in(t)

    a = 0j
    a_hist[0] = a
    f_hist[0] = rhs(0.0, a)
    start = int(n_steps * (1.0 - average_fraction))
    acc = []
    for k in range(n_steps):
        t = k * h
        k1 = f_hist[k]
        k2 = rhs(t + 0.5 * h, a + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, a + 0.5 * h * k2)
        k4 = rhs(t + h, a + h * k3)
        a = a + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        a_hist[k + 1] = a
        f_hist[k + 1] = rhs(t + h, a)
        if k + 1 >= start:
            tn = t + h
            out = -np.conj(rho0) / fp.eta0 * c_in(tn + two_tau) + g * (a_in(tn) - 1j * sk * a)
            acc.append(out * np.conj(c_in(tn)))
    acc = np.array(acc)
    half = acc.size // 2
    first, second = acc[:half].mean(), acc[half:].mean()
    response = acc.mean()
    drift = abs(first - second) / max(abs(response), 1e-300)
    if drift > drift_tolerance:
        warnings.warn(
            f"time-domain run may not be in steady state (drift {drift:.2e})",
            RuntimeWarning,
            stacklevel=2,
        )
    return TimeDomainResult(complex(response), float(drift), n_steps)
