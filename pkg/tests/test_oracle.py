import math
import warnings

import numpy as np
import pytest

from fpjpa.circuit_model import JpaParams, charge_flux_coefficients, solve_circulating_flux
from fpjpa.errors import ValidationError
from fpjpa.interference import (
    DriveParams,
    FabryPerotParams,
    gain_spectrum,
    parametric_threshold,
    reference_spectrum,
    reflection_spectrum,
)
from fpjpa.noise import io_coefficients
from fpjpa.oracle import (
    TruncationSpec,
    bounce_sum_reflection,
    io_matrix_solve,
    signal_idler_matrix_solve,
    squid_numeric_charge_flux,
    time_domain_delay_simulation,
    truncated_series_reflection,
)

MHZ = 2 * math.pi * 1e6


@pytest.fixture
def fitted():
    jpa = JpaParams(0.0, kappa=280 * MHZ, kappa0=22 * MHZ)
    fp = FabryPerotParams(eta=0.996, eta0=0.803, fsr=140 * MHZ, phi0=-1.05, phi_ref=-0.048)
    return jpa, fp


def test_series_single_term_when_transparent():
    jpa = JpaParams(0.0, 1.0, 0.1)
    fp = FabryPerotParams(1.0, 0.8, 1.0)
    d = np.linspace(-3, 3, 31)
    assert np.array_equal(
        truncated_series_reflection(d, jpa, fp, TruncationSpec(max_terms=1)),
        truncated_series_reflection(d, jpa, fp),
    )
    assert np.max(np.abs(truncated_series_reflection(d, jpa, fp) - reflection_spectrum(d, jpa, fp))) < 1e-15


def test_series_tail_bound(fitted):
    jpa, fp = fitted
    d = np.linspace(-300, 300, 61) * MHZ
    closed = reflection_spectrum(d, jpa, fp)
    mag = fp.round_trip_magnitude
    for n in (2, 3, 4, 6):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            approx = truncated_series_reflection(d, jpa, fp, TruncationSpec(max_terms=n))
        err = np.max(np.abs(approx - closed))
        # the neglected tail is a geometric series in |R|; the prefactor is of order kappa/kappa_tot
        assert err <= 10 * mag ** (n + 1) / (1 - mag)


def test_truncation_warns():
    jpa = JpaParams(0.0, 1.0)
    fp = FabryPerotParams(0.5, 0.95, 1.0)
    with pytest.warns(RuntimeWarning, match="truncated"):
        truncated_series_reflection(0.3, jpa, fp, TruncationSpec(max_terms=3))
    with pytest.raises(ValidationError):
        TruncationSpec(max_terms=0)


def test_pure_phase_limit():
    fp = FabryPerotParams(1.0, 0.7, 1.0, phi_ref=0.4)
    got = truncated_series_reflection(0.2, JpaParams(0.0, 1.0), fp, reflector=("pure_phase", 0.4))
    assert got == pytest.approx(0.7 * np.exp(0.4j), abs=1e-15)
    fp2 = FabryPerotParams(0.9, 0.7, 1.0, phi0=0.3, phi_ref=0.4)
    series = truncated_series_reflection(0.2, JpaParams(0.0, 1.0), fp2, reflector=("pure_phase", 0.4))
    assert series == pytest.approx(reference_spectrum(0.2, fp2), rel=1e-12)
    with pytest.raises(ValidationError):
        truncated_series_reflection(0.2, JpaParams(0.0, 1.0), fp2, reflector="mirror")


def test_bounce_sum_agrees(fitted):
    jpa, fp = fitted
    d = np.linspace(-300, 300, 61) * MHZ
    assert np.max(np.abs(bounce_sum_reflection(d, jpa, fp) - reflection_spectrum(d, jpa, fp))) < 1e-12


def test_matrix_solve_examples():
    jpa = JpaParams(0.0, 1.0)
    fp = FabryPerotParams(1.0, 1.0, 1.0)
    assert signal_idler_matrix_solve(0.0, jpa, fp, DriveParams(0.6)) == pytest.approx(-2.125, abs=1e-13)
    jpa2 = JpaParams(0.0, 1.0, 0.1)
    fp2 = FabryPerotParams(0.98, 0.9, 0.8, phi0=0.2)
    d = np.linspace(-2, 2, 21)
    assert np.max(np.abs(signal_idler_matrix_solve(d, jpa2, fp2, DriveParams(0.0))
                         - truncated_series_reflection(d, jpa2, fp2))) < 1e-12


def random_draw(rng):
    jpa = JpaParams(0.0, kappa=1.0, kappa0=rng.uniform(0.0, 0.2))
    fp = FabryPerotParams(rng.uniform(0.9, 1.0), rng.uniform(0.5, 1.0), rng.uniform(0.1, 3.0),
                          rng.uniform(-np.pi, np.pi), rng.uniform(-np.pi, np.pi))
    delta = rng.uniform(-2, 2) * fp.fsr
    om = rng.uniform(0, 0.95) * float(parametric_threshold(delta, jpa, fp))
    return delta, jpa, fp, DriveParams(om)


def test_matrix_solve_matches_closed_form_on_random_draws():
    rng = np.random.default_rng(17)
    for _ in range(500):
        delta, jpa, fp, drive = random_draw(rng)
        ref = gain_spectrum(delta, jpa, fp, drive)
        got = signal_idler_matrix_solve(delta, jpa, fp, drive)
        assert abs(got - ref) <= 1e-12 * abs(ref)


def test_io_matrix_matches_coefficients():
    rng = np.random.default_rng(5)
    for _ in range(100):
        delta, jpa, fp, drive = random_draw(rng)
        co = io_coefficients(delta, jpa, fp, drive)
        closed = np.array([co.c, co.c_prime, co.u, co.u_prime, co.v, co.v_prime, co.d, co.d_prime])
        numeric = io_matrix_solve(delta, jpa, fp, drive)[0]
        assert np.allclose(np.abs(numeric), np.abs(closed), rtol=1e-10, atol=1e-12)


def test_squid_numeric_examples():
    assert squid_numeric_charge_flux(0.0, 0.125, math.pi / 3) == 0.0
    for phi in (0.05, 0.3, 1.0):
        assert squid_numeric_charge_flux(phi, 0.0, math.pi / 3) == pytest.approx(0.5 * math.sin(phi), rel=1e-12)
        a = squid_numeric_charge_flux(phi, 0.125, math.pi / 3)
        assert squid_numeric_charge_flux(-phi, 0.125, math.pi / 3) == pytest.approx(-a, rel=1e-12)
    with pytest.raises(ValidationError):
        squid_numeric_charge_flux(0.1, 1.5, 0.3)


def test_cubic_expansion_error_scales_as_fifth_power():
    beta, phi_c = 0.125, math.pi / 3
    phi_eff = solve_circulating_flux(phi_c, beta).phi_ex_eff
    e = charge_flux_coefficients(beta, phi_eff)
    c1, c3 = e.c1, e.c3
    phis = np.array([0.05, 0.1, 0.2])
    err = [abs(squid_numeric_charge_flux(p, beta, phi_c) - (c1 * p + c3 * p**3 / 6)) for p in phis]
    slope = np.polyfit(np.log(phis), np.log(err), 1)[0]
    assert slope == pytest.approx(5.0, abs=0.3)


def test_time_domain_without_delay():
    jpa = JpaParams(0.0, 280 * MHZ, 22 * MHZ)
    fp = FabryPerotParams(1.0, 1.0, 140 * MHZ)
    res = time_domain_delay_simulation(jpa, fp, 30 * MHZ, duration=60e-9, tau=0.0)
    assert abs(res.response - reflection_spectrum(30 * MHZ, jpa, fp)) < 1e-9
    with pytest.raises(ValidationError):
        time_domain_delay_simulation(jpa, FabryPerotParams(0.99, 1.0, 1.0), 0.0, 1e-9, tau=0.0)


def test_time_domain_matches_closed_form(fitted):
    jpa, fp = fitted
    for delta in (0.0, 0.7 * fp.fsr):
        res = time_domain_delay_simulation(jpa, fp, delta, duration=120e-9)
        closed = reflection_spectrum(delta, jpa, fp)
        assert abs(res.response - closed) <= 1e-3 * abs(closed)
        assert res.drift < 1e-6


def test_time_domain_step_halving(fitted):
    jpa, fp = fitted
    a = time_domain_delay_simulation(jpa, fp, 50 * MHZ, duration=100e-9, steps_per_round_trip=100)
    b = time_domain_delay_simulation(jpa, fp, 50 * MHZ, duration=100e-9, steps_per_round_trip=200)
    assert abs(a.response - b.response) < 1e-4
