import math

import pytest

from fpjpa.circuit_model import bias_from_applied_flux, hamiltonian_params
from fpjpa.design import DesignTargets, synthesize
from fpjpa.errors import DesignError

PH = 1e-12
FF = 1e-15


def reference_targets(**kw):
    base = dict(
        omega_a_target=2 * math.pi * 9.5e9,
        kappabar_target=0.04,
        p_j_target=0.8,
        n_squids=5,
        l_loop_fixed=20 * PH,
        l_geometric_fixed=80 * PH,
        bias_phi_eff=math.pi / 3,
        z_waveguide=50.0,
    )
    base.update(kw)
    return DesignTargets(**base)


def test_round_trip_reproduces_targets():
    t = reference_targets()
    res = synthesize(t)
    jpa = hamiltonian_params(res.circuit, bias_from_applied_flux(res.bias.phi_ex, res.circuit))
    assert jpa.omega_a == pytest.approx(t.omega_a_target, rel=1e-9)
    assert jpa.kappabar == pytest.approx(t.kappabar_target, rel=1e-9)
    assert jpa.p_j == pytest.approx(t.p_j_target, rel=1e-9)


def test_closed_form_values():
    # L_J^eff = p_J (N L_loop/4 + L_g) / (N (1 - p_J)) = 0.8 * 105 pH / 1 = 84 pH
    res = synthesize(reference_targets())
    assert res.l_j_eff == pytest.approx(84 * PH, rel=1e-14)
    assert res.circuit.l_josephson == pytest.approx(84 * PH, rel=1e-14)  # 2 |cos(pi/3)| = 1
    assert res.jpa.p_sq == pytest.approx(84 / 89, rel=1e-14)


def test_reported_values_within_rounding():
    res = synthesize(reference_targets())
    assert res.circuit.c_internal == pytest.approx(470 * FF, rel=0.05)
    assert res.jpa.alpha_a == pytest.approx(0.03, rel=0.05)
    assert res.jpa.p_sq == pytest.approx(0.94, rel=0.05)
    assert res.jpa.kbar == pytest.approx(-7.5e-5, rel=0.05)


def test_zero_geometric_inductance_gives_p_j_equal_p_sq():
    res = synthesize(reference_targets(l_geometric_fixed=0.0, p_j_target=0.9))
    assert res.circuit.l_geometric == 0.0
    assert res.jpa.p_j == pytest.approx(res.jpa.p_sq, rel=1e-14)


def test_coupling_monotone_in_kappabar():
    prev = 0.0
    for kb in (0.01, 0.02, 0.04, 0.06):
        p = synthesize(reference_targets(kappabar_target=kb)).jpa.p_kappa
        assert p > prev
        prev = p


@pytest.mark.parametrize(
    "kw, needle",
    [
        (dict(p_j_target=1.2), "p_j_target"),
        (dict(p_j_target=0.0), "p_j_target"),
        (dict(kappabar_target=-0.1), "kappabar"),
        (dict(kappabar_target=5.0), "p_kappa"),
        (dict(bias_phi_eff=math.pi / 2), "bias"),
        (dict(l_loop_fixed=400 * PH, l_geometric_fixed=0.0, p_j_target=0.3), "hysteretic"),
        (dict(l_loop_fixed=0.0, l_geometric_fixed=0.0), "p_J"),
    ],
)
def test_infeasible_targets_name_the_constraint(kw, needle):
    with pytest.raises(DesignError, match=needle):
        synthesize(reference_targets(**kw))
