"""Circuit model of a SQUID-array resonator with finite loop inductance.

Every SQUID contributes a loop inductance ``L_loop/4`` in series with its
flux-tunable Josephson inductance ``L_J/(2|cos phi_ex_eff|)``. The array of
``N`` SQUIDs is in series with a geometric inductance ``L_g`` and shunted by
``C_i + C_kappa``. The functions here map those circuit values onto the
Hamiltonian-level parameters (resonance frequency, coupling rate, self-Kerr
coefficient, two-photon drive amplitude) together with the dimensionless
participation ratios used for design.

Fluxes are stored as dimensionless phases. ``phi_c`` is the applied flux
per SQUID in units of ``2*PHI0`` and ``phi_ex_eff`` is the effective flux
after the self-consistent circulating current has been accounted for.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

from fpjpa.constants import (
    BIAS_COS_FLOOR,
    FIXED_POINT_TOL,
    PHI0,
    Z_Q,
)
from fpjpa.errors import ConvergenceError, DegenerateBiasError, ValidationError


@dataclass(frozen=True)
class CircuitParams:
    """Lumped circuit values of the amplifier.

    Attributes
    ----------
    n_squids : int
        Number of SQUIDs in the array, at least one.
    l_loop : float
        Geometric loop inductance of one SQUID (H).
    l_josephson : float
        Josephson inductance of a single junction (H).
    l_geometric : float
        Series geometric inductance of the resonator (H).
    c_internal : float
        Shunt capacitance to ground (F).
    c_coupling : float
        Coupling capacitance to the waveguide (F).
    z_waveguide : float
        Characteristic impedance of the input-output waveguide (Ohm).
    mutual : float
        Mutual inductance between pump line and one SQUID loop (H).
    l_pump_shunt : float
        Inductance terminating the pump line to ground (H).
    """

    n_squids: int
    l_loop: float
    l_josephson: float
    l_geometric: float
    c_internal: float
    c_coupling: float
    z_waveguide: float = 50.0
    mutual: float = 0.0
    l_pump_shunt: float = 0.0

    def __post_init__(self):
        if int(self.n_squids) != self.n_squids or self.n_squids < 1:
            raise ValidationError(f"n_squids must be a positive integer, got {self.n_squids}")
        for name in ("l_josephson", "c_internal", "c_coupling", "z_waveguide"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be positive and finite, got {value}")
        for name in ("l_loop", "l_geometric", "mutual", "l_pump_shunt"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValidationError(f"{name} must be non-negative and finite, got {value}")
        if self.beta > 1.0:
            raise ValidationError(
                "loop inductance too large: L_loop/2 must not exceed L_J "
                f"(beta = {self.beta:.6g}), the SQUID would be hysteretic"
            )

    @property
    def beta(self) -> float:
        """Screening parameter ``(L_loop/2)/L_J``."""
        return 0.5 * self.l_loop / self.l_josephson

    @property
    def c_total(self) -> float:
        """Total shunt capacitance ``C_i + C_kappa`` (F)."""
        return self.c_internal + self.c_coupling


class CirculatingFlux(NamedTuple):
    """Solution of the zero-flux circulating-current condition."""

    x: float
    phi_ex_eff: float
    branch: int
    residual: float


@dataclass(frozen=True)
class BiasState:
    """Static flux bias of every SQUID in the array.

    Attributes
    ----------
    phi_ex : float
        Applied flux ``Phi_ex/(2 PHI0)``.
    phi_ex_eff : float
        Effective flux seen by the junctions.
    branch : int
        Sign of ``cos(phi_ex_eff)`` selecting the potential minimum.
    """

    phi_ex: float
    phi_ex_eff: float
    branch: int = 1


@dataclass(frozen=True)
class JpaParams:
    """Hamiltonian-level amplifier parameters.

    Rates are angular (rad/s). The dimensionless ratios are optional so
    that parameter sets obtained from spectrum fits, which only determine
    the rates, can use the same type.
    """

    omega_a: float
    kappa: float
    kappa0: float = 0.0
    kerr: float = 0.0
    omega_pump_amp: float = 0.0
    alpha_a: Optional[float] = None
    p_j: Optional[float] = None
    p_sq: Optional[float] = None
    p_kappa: Optional[float] = None
    kbar: Optional[float] = None
    omegabar_p: Optional[float] = None
    kappabar: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.kappa) and self.kappa > 0):
            raise ValidationError(f"kappa must be positive, got {self.kappa}")
        if not (math.isfinite(self.kappa0) and self.kappa0 >= 0):
            raise ValidationError(f"kappa0 must be non-negative, got {self.kappa0}")
        if not math.isfinite(self.omega_a):
            raise ValidationError("omega_a must be finite")
        if self.kerr > 0:
            raise ValidationError(f"kerr must be non-positive, got {self.kerr}")
        if not (math.isfinite(self.omega_pump_amp) and self.omega_pump_amp >= 0):
            raise ValidationError("omega_pump_amp must be non-negative")

    @property
    def kappa_tot(self) -> float:
        """Total decay rate ``kappa + kappa0`` (rad/s)."""
        return self.kappa + self.kappa0


class ChargeFluxExpansion(NamedTuple):
    """Cubic Maclaurin coefficients of ``theta(phi) = c1 phi + c3 phi^3/6``."""

    c1: float
    c3: float
    epsilon: float


def _branch_solve(phi_c: float, beta: float, sign: int, tol: float, max_iter: int):
    """Solve ``x = sign*beta*sin(phi_c - x)`` by safeguarded Newton steps.

    ``g(x) = x - sign*beta*sin(phi_c - x)`` is nondecreasing for
    ``beta <= 1`` and changes sign on ``[-beta, beta]``, so bisection on
    that bracket always converges. Newton steps are accepted only when
    they stay strictly inside the current bracket.
    """
    if beta == 0.0:
        return 0.0, 0.0

    def g(x):
        return x - sign * beta * math.sin(phi_c - x)

    lo, hi = -beta, beta
    x = sign * beta * math.sin(phi_c)
    x = min(max(x, lo), hi)
    gx = g(x)
    for _ in range(max_iter):
        if abs(gx) < tol:
            return x, gx
        if gx < 0:
            lo = x
        else:
            hi = x
        slope = 1.0 + sign * beta * math.cos(phi_c - x)
        step = gx / slope if slope > 1e-14 else math.inf
        x_new = x - step
        if not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        x = x_new
        gx = g(x)
        if hi - lo < 1e-300:
            break
    if abs(gx) < tol:
        return x, gx
    raise ConvergenceError(
        f"circulating-flux solve did not converge (residual {gx:.3e})", residual=gx
    )


def solve_circulating_flux(
    phi_c: float,
    beta: float = 1.0,
    branch: Optional[int] = None,
    tol: float = FIXED_POINT_TOL,
    max_iter: int = 200,
) -> CirculatingFlux:
    """Self-consistent circulating flux of a SQUID at zero array flux.

    Solves ``x = +/- beta*sin(phi_c - x)`` where ``x = beta*theta_c(0)``
    is the loop flux ``L_loop*Qdot_c(0)/(2*PHI0)`` and the sign equals the
    sign of ``cos(phi_c - x)``.

    Parameters
    ----------
    phi_c : float
        Applied flux ``Phi_ex/(2 PHI0)``.
    beta : float
        Screening parameter ``(L_loop/2)/L_J`` in ``[0, 1]``. The default
        of one gives the bare relation ``x = sin(phi_c - x)``.
    branch : {+1, -1}, optional
        Force the sign branch. By default the branch matching the sign of
        ``cos(phi_c)`` is tried first.
    tol : float
        Absolute residual tolerance.

    Returns
    -------
    CirculatingFlux
        ``x``, the effective flux ``phi_c - x``, the branch sign and the
        final residual.
    """
    if not math.isfinite(phi_c):
        raise ValidationError("phi_c must be finite")
    if not (0.0 <= beta <= 1.0):
        raise ValidationError(f"beta must lie in [0, 1], got {beta}")
    if branch is not None:
        candidates = [int(branch)]
        if candidates[0] not in (1, -1):
            raise ValidationError("branch must be +1 or -1")
    else:
        first = 1 if math.cos(phi_c) >= 0 else -1
        candidates = [first, -first]

    last_error = None
    for sign in candidates:
        try:
            x, res = _branch_solve(phi_c, beta, sign, tol, max_iter)
        except ConvergenceError as exc:
            last_error = exc
            continue
        phi_eff = phi_c - x
        consistent = math.cos(phi_eff) * sign >= 0
        if consistent or branch is not None:
            if sign < 0:
                warnings.warn(
                    "effective flux lies beyond pi/2 (negative-cosine branch)",
                    RuntimeWarning,
                    stacklevel=2,
                )
            return CirculatingFlux(x, phi_eff, sign, res)
    if last_error is not None:
        raise last_error
    raise ConvergenceError("no self-consistent branch found for the circulating flux")


def bias_from_applied_flux(phi_c: float, circuit: CircuitParams, branch: Optional[int] = None) -> BiasState:
    """Bias state for an applied flux ``phi_c``."""
    sol = solve_circulating_flux(phi_c, circuit.beta, branch=branch)
    return BiasState(phi_ex=phi_c, phi_ex_eff=sol.phi_ex_eff, branch=sol.branch)


def bias_from_effective_flux(phi_ex_eff: float, circuit: CircuitParams) -> BiasState:
    """Bias state producing a given effective flux.

    Inverts the fixed-point relation in closed form:
    ``phi_c = phi_eff + sign*beta*sin(phi_eff)``.
    """
    sign = 1 if math.cos(phi_ex_eff) >= 0 else -1
    phi_c = phi_ex_eff + sign * circuit.beta * math.sin(phi_ex_eff)
    return BiasState(phi_ex=phi_c, phi_ex_eff=phi_ex_eff, branch=sign)


def flux_from_bias_current(current: float, coefficient: float) -> float:
    """Applied flux ``phi_c`` from a dc bias current.

    Parameters
    ----------
    current : float
        Bias current (A).
    coefficient : float
        Calibration in units of ``phi_c`` per ampere. It depends on the
        bias-line coupling of the particular chip and must be measured.
    """
    if not (math.isfinite(coefficient) and coefficient != 0.0):
        raise ValidationError("current-to-flux coefficient must be finite and non-zero")
    return current * coefficient


def _abs_cos(phi_ex_eff: float) -> float:
    c = abs(math.cos(phi_ex_eff))
    if c < BIAS_COS_FLOOR:
        raise DegenerateBiasError(
            f"|cos(phi_ex_eff)| = {c:.3e} is below {BIAS_COS_FLOOR:g}; "
            "the Josephson inductance diverges at this bias"
        )
    return c


def effective_josephson_inductance(l_j: float, phi_ex_eff: float) -> float:
    """Flux-tunable SQUID inductance ``L_J/(2|cos phi_ex_eff|)`` (H)."""
    return l_j / (2.0 * _abs_cos(phi_ex_eff))


def hamiltonian_params(
    circuit: CircuitParams,
    bias: BiasState,
    kappa0: float = 0.0,
    omega_pump_amp: float = 0.0,
) -> JpaParams:
    """Resonance frequency, rates and ratios of the biased circuit.

    Parameters
    ----------
    circuit : CircuitParams
    bias : BiasState
    kappa0 : float, optional
        Intrinsic loss rate (rad/s); not determined by the circuit values.
    omega_pump_amp : float, optional
        Two-photon drive amplitude (rad/s).

    Returns
    -------
    JpaParams
    """
    n = circuit.n_squids
    l_eff = effective_josephson_inductance(circuit.l_josephson, bias.phi_ex_eff)
    l_squid = 0.25 * circuit.l_loop + l_eff
    l_tot = n * l_squid + circuit.l_geometric
    c_tot = circuit.c_total

    omega_a = 1.0 / math.sqrt(l_tot * c_tot)
    p_j = n * l_eff / l_tot
    p_sq = l_eff / l_squid
    p_kappa = circuit.c_coupling / c_tot
    alpha_a = math.sqrt(l_tot / c_tot) / Z_Q
    alpha_0 = circuit.z_waveguide / Z_Q
    kappabar = alpha_0 / alpha_a * p_kappa**2
    kbar = -alpha_a * p_j**3 / (8.0 * n**2)
    return JpaParams(
        omega_a=omega_a,
        kappa=kappabar * omega_a,
        kappa0=kappa0,
        kerr=kbar * omega_a,
        omega_pump_amp=omega_pump_amp,
        alpha_a=alpha_a,
        p_j=p_j,
        p_sq=p_sq,
        p_kappa=p_kappa,
        kbar=kbar,
        omegabar_p=omega_pump_amp / omega_a,
        kappabar=kappabar,
    )


def normalized_pump_amplitude(p_j: float, p_sq: float, phi_ex_eff: float, phi_p: float) -> float:
    """Dimensionless two-photon drive ``p_J p_SQ tan(phi_ex_eff) phi_p / 4``."""
    _abs_cos(phi_ex_eff)
    return p_j * p_sq * math.tan(phi_ex_eff) * phi_p / 4.0


def pump_flux_amplitude(
    pump_power: float,
    omega_p: float,
    mutual: float,
    z_waveguide: float,
    l_pump_shunt: float = 0.0,
) -> float:
    """Dimensionless flux modulation produced by a pump of power ``P`` (W).

    ``phi_p = 2 sqrt(2) M sqrt(P Z0) / (PHI0 sqrt(Z0^2 + (omega_p L_p)^2))``.
    The shunt reactance is kept in the denominator rather than assuming it
    is negligible.
    """
    if not (pump_power >= 0):
        raise ValidationError(f"pump power must be non-negative, got {pump_power}")
    denom = PHI0 * math.hypot(z_waveguide, omega_p * l_pump_shunt)
    return 2.0 * math.sqrt(2.0) * mutual * math.sqrt(pump_power * z_waveguide) / denom


def pump_amplitude(
    circuit: CircuitParams,
    pump_power: float,
    omega_p: float,
    jpa: JpaParams,
    bias: BiasState,
) -> tuple[float, float]:
    """Flux modulation depth and two-photon drive amplitude of a pump.

    Returns
    -------
    phi_p : float
        Dimensionless flux amplitude.
    omega_pump_amp : float
        Two-photon drive amplitude ``Omega_p`` (rad/s). Its sign follows
        ``tan(phi_ex_eff)``; only the magnitude enters the spectra.
    """
    if jpa.p_j is None or jpa.p_sq is None:
        raise ValidationError("jpa must carry p_j and p_sq (use hamiltonian_params)")
    phi_p = pump_flux_amplitude(
        pump_power, omega_p, circuit.mutual, circuit.z_waveguide, circuit.l_pump_shunt
    )
    omegabar = normalized_pump_amplitude(jpa.p_j, jpa.p_sq, bias.phi_ex_eff, phi_p)
    return phi_p, omegabar * jpa.omega_a


def charge_flux_coefficients(beta: float, phi_ex_eff: float) -> ChargeFluxExpansion:
    """Cubic expansion of the SQUID current-flux relation.

    Parameters
    ----------
    beta : float
        Screening parameter ``(L_loop/2)/L_J``.
    phi_ex_eff : float
        Effective static flux.

    Returns
    -------
    ChargeFluxExpansion
        ``c1 = |C|/(1 + beta|C|)`` and
        ``c3 = -|C|(1 + eps)/(1 + beta|C|)^4`` with ``C = cos(phi_ex_eff)``
        and ``eps = 3 beta S^2 / (|C|(1 + beta|C|))``.
    """
    if not (0.0 <= beta <= 1.0):
        raise ValidationError(f"beta must lie in [0, 1], got {beta}")
    cc = _abs_cos(phi_ex_eff)
    sc = math.sin(phi_ex_eff)
    one_plus = 1.0 + beta * cc
    eps = 3.0 * beta * sc * sc / (cc * one_plus)
    c1 = cc / one_plus
    c3 = -cc * (1.0 + eps) / one_plus**4
    return ChargeFluxExpansion(c1, c3, eps)


def charge_flux_expansion(circuit: CircuitParams, bias: BiasState) -> ChargeFluxExpansion:
    """Cubic charge-flux coefficients for a biased circuit."""
    return charge_flux_coefficients(circuit.beta, bias.phi_ex_eff)


def kerr_correction(p_sq: float, phi_ex_eff: float) -> float:
    """Kerr correction ``eps = 3 (1 - p_SQ) tan^2(phi_ex_eff)``."""
    _abs_cos(phi_ex_eff)
    return 3.0 * (1.0 - p_sq) * math.tan(phi_ex_eff) ** 2
