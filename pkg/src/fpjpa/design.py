"""Inverse design: circuit values from dimensionless targets.

The design system is triangular. The array participation ratio fixes the
effective SQUID inductance, the resonance frequency then fixes the total
capacitance, the impedance fixes ``alpha_a``, and the coupling target
fixes the split between internal and coupling capacitance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from fpjpa.circuit_model import (
    BiasState,
    CircuitParams,
    JpaParams,
    bias_from_effective_flux,
    hamiltonian_params,
)
from fpjpa.constants import BIAS_COS_FLOOR, Z_Q
from fpjpa.errors import DesignError


@dataclass(frozen=True)
class DesignTargets:
    """Design goals and fixed geometric choices.

    Attributes
    ----------
    omega_a_target : float
        Resonance frequency (rad/s).
    kappabar_target : float
        Coupling rate in units of the resonance frequency.
    p_j_target : float
        Josephson participation ratio of the array, in (0, 1).
    n_squids : int
    l_loop_fixed : float
        Loop inductance of each SQUID (H).
    l_geometric_fixed : float
        Series geometric inductance (H).
    bias_phi_eff : float
        Effective flux bias of the operating point.
    z_waveguide : float
        Waveguide impedance (Ohm).
    """

    omega_a_target: float
    kappabar_target: float
    p_j_target: float
    n_squids: int
    l_loop_fixed: float
    l_geometric_fixed: float
    bias_phi_eff: float
    z_waveguide: float = 50.0


@dataclass(frozen=True)
class DesignResult:
    """Synthesized circuit with its bias and Hamiltonian parameters."""

    circuit: CircuitParams
    bias: BiasState
    jpa: JpaParams
    l_j_eff: float


def _check(targets: DesignTargets) -> None:
    if not (0.0 < targets.p_j_target < 1.0):
        raise DesignError(f"p_j_target must lie in (0, 1), got {targets.p_j_target}")
    if not (targets.kappabar_target > 0):
        raise DesignError("kappabar_target must be positive")
    if not (targets.omega_a_target > 0):
        raise DesignError("omega_a_target must be positive")
    if int(targets.n_squids) != targets.n_squids or targets.n_squids < 1:
        raise DesignError("n_squids must be a positive integer")
    if targets.l_loop_fixed < 0 or targets.l_geometric_fixed < 0:
        raise DesignError("fixed inductances must be non-negative")
    if targets.l_loop_fixed == 0 and targets.l_geometric_fixed == 0 and targets.p_j_target != 1.0:
        raise DesignError(
            "without loop or geometric inductance p_J is identically 1 and "
            f"cannot equal the target {targets.p_j_target}"
        )
    if abs(math.cos(targets.bias_phi_eff)) < BIAS_COS_FLOOR:
        raise DesignError("bias_phi_eff is too close to the inductance divergence")
    if not (targets.z_waveguide > 0):
        raise DesignError("z_waveguide must be positive")


def synthesize(targets: DesignTargets) -> DesignResult:
    """Closed-form circuit synthesis.

    Parameters
    ----------
    targets : DesignTargets

    Returns
    -------
    DesignResult
        Circuit values whose Hamiltonian parameters reproduce the targets.

    Raises
    ------
    DesignError
        If the targets are infeasible; the message names the constraint.
    """
    _check(targets)
    n = targets.n_squids
    p_j = targets.p_j_target
    l_loop = targets.l_loop_fixed
    l_g = targets.l_geometric_fixed

    # p_J = N L / (N (L_loop/4 + L) + L_g) solved for L.
    l_eff = p_j * (n * l_loop / 4.0 + l_g) / (n * (1.0 - p_j))
    l_tot = n * (l_loop / 4.0 + l_eff) + l_g
    p_sq = l_eff / (l_loop / 4.0 + l_eff)
    if p_j > p_sq * (1.0 + 1e-12):
        raise DesignError(f"infeasible: p_J = {p_j} exceeds p_SQ = {p_sq}")

    c_tot = 1.0 / (targets.omega_a_target**2 * l_tot)
    alpha_a = math.sqrt(l_tot / c_tot) / Z_Q
    alpha_0 = targets.z_waveguide / Z_Q
    p_kappa = math.sqrt(targets.kappabar_target * alpha_a / alpha_0)
    if not (p_kappa < 1.0):
        raise DesignError(
            f"infeasible: coupling target requires p_kappa = {p_kappa:.4g} >= 1"
        )
    c_kappa = p_kappa * c_tot
    c_i = c_tot - c_kappa

    l_j = 2.0 * abs(math.cos(targets.bias_phi_eff)) * l_eff
    if 0.5 * l_loop > l_j:
        raise DesignError(
            f"infeasible: L_loop/2 = {0.5 * l_loop:.4g} H exceeds L_J = {l_j:.4g} H "
            "(hysteretic SQUID)"
        )

    circuit = CircuitParams(
        n_squids=n,
        l_loop=l_loop,
        l_josephson=l_j,
        l_geometric=l_g,
        c_internal=c_i,
        c_coupling=c_kappa,
        z_waveguide=targets.z_waveguide,
    )
    bias = bias_from_effective_flux(targets.bias_phi_eff, circuit)
    jpa = hamiltonian_params(circuit, bias)
    return DesignResult(circuit=circuit, bias=bias, jpa=jpa, l_j_eff=l_eff)
