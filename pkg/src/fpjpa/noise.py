"""Effective-amplifier description and added-noise calibration.

The full input-output relation of the pumped amplifier in its environment
maps eight input modes onto the output field at the signal frequency:

    c_out(w_s) = C c_in(w_s) + C' c_in^dag(w_i) + U u_in(w_s) + U' u_in^dag(w_i)
               + V v_in(w_s) + V' v_in^dag(w_i) + D d_in(w_s) + D' d_in^dag(w_i)

``c`` is the port seen through the reflecting element, ``u`` and ``v`` are
the propagation-loss channels on the amplifier and element side, and ``d``
is the intrinsic loss of the amplifier. Bosonic commutation requires the
unprimed weights minus the primed weights to sum to one.

The coefficients are derived by solving the coupled signal-idler
Heisenberg equations; noise-field phases are absorbed into the field
definitions, so only their magnitudes carry physical meaning. The
transmission amplitude of the element is taken as ``sqrt(eta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from fpjpa.circuit_model import JpaParams
from fpjpa.constants import HBAR, HIGH_GAIN_FLOOR, VACUUM_NOISE_PHOTONS
from fpjpa.errors import NumericalError, ValidationError
from fpjpa.interference import (
    DriveParams,
    FabryPerotParams,
    _check_threshold,
    _pump,
    round_trip_coeff,
    signal_idler_determinant,
)


@dataclass(frozen=True)
class IOCoefficients:
    """Weights of the eight input modes in the signal output.

    Primed coefficients multiply creation operators at the idler
    frequency. Fields may be scalars or arrays of equal shape.
    """

    c: complex
    c_prime: complex
    u: complex
    u_prime: complex
    v: complex
    v_prime: complex
    d: complex
    d_prime: complex

    def unitarity_defect(self):
        """``sum|unprimed|^2 - sum|primed|^2 - 1``."""
        plus = abs2(self.c) + abs2(self.u) + abs2(self.v) + abs2(self.d)
        minus = abs2(self.c_prime) + abs2(self.u_prime) + abs2(self.v_prime) + abs2(self.d_prime)
        return plus - minus - 1.0


def abs2(z):
    """Squared magnitude."""
    return np.real(z) ** 2 + np.imag(z) ** 2


def io_coefficients(
    delta,
    jpa: JpaParams,
    fp: FabryPerotParams,
    drive: Optional[DriveParams] = None,
) -> IOCoefficients:
    """Input-output coefficients at signal detuning ``delta``.

    Parameters
    ----------
    delta : float or array
        Signal detuning (rad/s).
    jpa : JpaParams
    fp : FabryPerotParams
    drive : DriveParams, optional
        Overrides ``jpa.omega_pump_amp``.

    Raises
    ------
    ThresholdError
        If the signal-idler system is singular.
    """
    omega_p = _pump(jpa, drive)
    eta, eta0 = fp.eta, fp.eta0
    kappa, kappa0 = jpa.kappa, jpa.kappa0
    r_s = round_trip_coeff(delta, fp, "signal")
    r_i_conj = np.conj(round_trip_coeff(delta, fp, "idler"))
    det, chi_s, chi_i_conj = signal_idler_determinant(delta, jpa, fp, omega_p)
    _check_threshold(det)

    a_s = 1.0 / (1.0 - r_s)
    a_i = 1.0 / (1.0 - r_i_conj)
    loop = kappa * chi_i_conj * a_s / det
    pump = 0.5j * omega_p * a_s / det

    c = -np.conj(r_s) / eta0 + eta * eta0 * a_s * (1.0 + loop)
    u = math.sqrt(eta * eta0 * (1.0 - eta0)) * a_s * (1.0 + loop)
    v = math.sqrt(eta * (1.0 - eta0)) * a_s * (1.0 + loop * r_s)
    d = math.sqrt(eta * eta0 * kappa * kappa0) * chi_i_conj * a_s / det

    c_p = eta * eta0 * kappa * a_i * pump
    u_p = math.sqrt(eta * eta0 * (1.0 - eta0)) * kappa * a_i * pump
    v_p = math.sqrt(eta * (1.0 - eta0)) * kappa * r_i_conj * a_i * pump
    d_p = math.sqrt(eta * eta0 * kappa * kappa0) * pump
    return IOCoefficients(c, c_p, u, u_p, v, v_p, d, d_p)


def unitarity_defect(coeffs: IOCoefficients):
    """Commutator defect of a coefficient set (zero for a physical set)."""
    return coeffs.unitarity_defect()


@dataclass(frozen=True)
class EffectiveAmp:
    """Single-loss-channel equivalent of the full input-output relation.

    Attributes
    ----------
    g_eff : float
        Gain of the equivalent ideal amplifier.
    eta_eff : float
        Transmittance of the equivalent loss placed after it.
    g_fpj : float
        Overall gain ``g_eff * eta_eff``.
    n_fpj : float
        Added noise in photons referred to the input.
    approximate : bool
        True when ``g_eff`` is below the high-gain floor, where the added
        noise formula is only approximate.
    """

    g_eff: float
    eta_eff: float
    g_fpj: float
    n_fpj: float
    approximate: bool


def added_noise_photons(eta_eff, vacuum: float = VACUUM_NOISE_PHOTONS):
    """Added noise ``((1 - eta_eff) n_vac + n_vac)/eta_eff`` in photons.

    With ``n_vac = 0.5`` this is ``(2 - eta_eff)/(2 eta_eff)``.
    """
    eta_eff = np.asarray(eta_eff, dtype=float)
    if np.any(eta_eff <= 0):
        raise NumericalError("eta_eff must be positive")
    out = ((1.0 - eta_eff) * vacuum + vacuum) / eta_eff
    return float(out) if out.ndim == 0 else out


def effective_amplifier(
    coeffs: IOCoefficients,
    high_gain_floor: float = HIGH_GAIN_FLOOR,
    vacuum: float = VACUUM_NOISE_PHOTONS,
) -> EffectiveAmp:
    """Collapse the eight coefficients into gain, transmittance and noise.

    ``G_eff = |C|^2 + |U|^2 + |V|^2 + |D|^2`` and ``eta_eff = |C|^2/G_eff``.
    """
    g_eff = abs2(coeffs.c) + abs2(coeffs.u) + abs2(coeffs.v) + abs2(coeffs.d)
    if np.any(g_eff <= 0):
        raise NumericalError("vanishing effective gain")
    eta_eff = abs2(coeffs.c) / g_eff
    if np.any(eta_eff <= 0):
        raise NumericalError("degenerate decomposition: eta_eff = 0")
    n = added_noise_photons(eta_eff, vacuum)
    approximate = bool(np.any(g_eff < high_gain_floor))
    if np.ndim(g_eff) == 0:
        g_eff = float(g_eff)
        eta_eff = float(eta_eff)
    return EffectiveAmp(g_eff, eta_eff, g_eff * eta_eff, n, approximate)


@dataclass(frozen=True)
class CalibrationInputs:
    """Measured powers for the SNR-improvement method.

    Attributes
    ----------
    p_on_s, p_on_n : float
        Signal and noise powers with the amplifier pumped (W).
    p_off_s, p_off_n : float
        Signal and noise powers with the pump off (W).
    p_calib_s : float
        Calibrated signal power at the amplifier input (W).
    eta0 : float
        One-way propagation transmittance.
    s11_off_sq : float
        Power reflectance of the unpumped amplifier at the signal frequency.
    p_vac_n : float
        Vacuum noise power in the measurement bandwidth (W).
    omega_s : float
        Signal angular frequency (rad/s).
    b_if : float
        Detection bandwidth (Hz).
    """

    p_on_s: float
    p_on_n: float
    p_off_s: float
    p_off_n: float
    p_calib_s: float
    eta0: float
    s11_off_sq: float
    p_vac_n: float
    omega_s: float
    b_if: float

    def __post_init__(self):
        for name in ("p_on_s", "p_on_n", "p_off_s", "p_off_n", "p_calib_s", "p_vac_n"):
            if not getattr(self, name) >= 0:
                raise ValidationError(f"{name} must be non-negative")
        if not (0.0 <= self.s11_off_sq <= 1.0):
            raise ValidationError("s11_off_sq must lie in [0, 1]")
        if not (0.0 < self.eta0 <= 1.0):
            raise ValidationError("eta0 must lie in (0, 1]")
        if not (self.omega_s > 0 and self.b_if > 0):
            raise ValidationError("omega_s and b_if must be positive")


def vacuum_noise_power(omega_s: float, b_if: float, photons: float = VACUUM_NOISE_PHOTONS) -> float:
    """Noise power ``photons * hbar omega_s B_IF`` (W)."""
    return photons * HBAR * omega_s * b_if


def s11_off_sq_from_rates(kappa: float, kappa0: float) -> float:
    """On-resonance power reflectance ``(kappa - kappa0)^2/(kappa + kappa0)^2``."""
    return (kappa - kappa0) ** 2 / (kappa + kappa0) ** 2


def calibration_forward(
    g_fpj: float,
    p_fpj_n: float,
    g_h: float,
    p_h_n: float,
    p_calib_s: float,
    eta0: float,
    s11_off_sq: float,
    omega_s: float,
    b_if: float,
    p_vac_n: Optional[float] = None,
) -> CalibrationInputs:
    """Synthesize measured powers from a known amplifier.

    Parameters
    ----------
    g_fpj : float
        Gain of the amplifier under test.
    p_fpj_n : float
        Its added noise power referred to the input (W).
    g_h, p_h_n : float
        Gain and input-referred noise power of the following chain.
    """
    if p_vac_n is None:
        p_vac_n = vacuum_noise_power(omega_s, b_if)
    return CalibrationInputs(
        p_on_s=g_h * g_fpj * p_calib_s / eta0,
        p_on_n=g_h * (g_fpj * (p_vac_n + p_fpj_n) + p_h_n),
        p_off_s=g_h * s11_off_sq * eta0 * p_calib_s,
        p_off_n=g_h * (p_vac_n + p_h_n),
        p_calib_s=p_calib_s,
        eta0=eta0,
        s11_off_sq=s11_off_sq,
        p_vac_n=p_vac_n,
        omega_s=omega_s,
        b_if=b_if,
    )


def added_noise_from_snr(cal: CalibrationInputs) -> tuple[float, float]:
    """Input-referred added noise from pump-on/pump-off powers.

    Returns
    -------
    p_fpj_n : float
        Added noise power (W).
    n_fpj : float
        Added noise in photons, ``p_fpj_n/(hbar omega_s B_IF)``.
    """
    if not cal.p_on_s > 0:
        raise NumericalError("pumped signal power must be positive")
    if not cal.s11_off_sq > 0:
        raise NumericalError("s11_off_sq must be positive to reference the pump-off signal")
    ratio = (cal.p_on_n - cal.p_off_n) / cal.p_on_s
    p = cal.p_calib_s / cal.eta0 * ratio - cal.p_vac_n * (
        1.0 - cal.p_off_s / (cal.eta0**2 * cal.s11_off_sq * cal.p_on_s)
    )
    return p, p / (HBAR * cal.omega_s * cal.b_if)


def noise_vs_pump(
    delta: float,
    jpa: JpaParams,
    fp: FabryPerotParams,
    omega_pump_amps,
    vacuum: float = VACUUM_NOISE_PHOTONS,
):
    """Gain and added noise over a list of drive amplitudes.

    Returns
    -------
    gain_db : numpy.ndarray
        ``10 log10(g_fpj)``.
    n_fpj : numpy.ndarray
    """
    gains, noises = [], []
    for om in omega_pump_amps:
        amp = effective_amplifier(io_coefficients(delta, jpa, fp, DriveParams(float(om))), vacuum=vacuum)
        gains.append(10.0 * math.log10(amp.g_fpj))
        noises.append(amp.n_fpj)
    return np.array(gains), np.array(noises)


def qubit_reflection(omega, omega_q, drive_rate, gamma_r, gamma_nr=0.0, gamma_p=0.0):
    """Reflection of a driven two-level system coupled to a waveguide.

    ``S11 = 1 - i Gr G1 (dw - i G2) / (W^2 G2 + G1 (dw^2 + G2^2))`` with
    ``G1 = Gr + Gnr`` and ``G2 = G1/2 + Gp``.
    """
    if not gamma_r > 0:
        raise ValidationError("gamma_r must be positive")
    g1 = gamma_r + gamma_nr
    g2 = 0.5 * g1 + gamma_p
    dw = np.asarray(omega, dtype=float) - omega_q
    num = 1j * gamma_r * g1 * (dw - 1j * g2)
    den = drive_rate**2 * g2 + g1 * (dw**2 + g2**2)
    return 1.0 - num / den


def probe_power_from_drive(omega_q: float, drive_rate, gamma_r: float):
    """Probe power ``hbar omega_q Omega^2/(4 Gamma_r)`` (W)."""
    if not gamma_r > 0:
        raise ValidationError("gamma_r must be positive")
    return HBAR * omega_q * np.asarray(drive_rate, dtype=float) ** 2 / (4.0 * gamma_r)
