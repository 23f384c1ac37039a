import math

import numpy as np
import pytest

from conftest import (
    FITTED_TRUTH,
    GAIN_INITIAL,
    GAIN_KAPPA0S,
    GAIN_KAPPAS,
    GAIN_TRUTH,
    MHZ,
    gain_datasets,
    reflection_dataset,
)
from fpjpa.circuit_model import JpaParams
from fpjpa.errors import ThresholdError, ValidationError
from fpjpa.fitting import (
    Dataset,
    FitProblem,
    fit,
    fit_gain_multi,
    fit_reflection,
    internal_coordinates,
    model_spectra,
    objective_gradient,
    objective_value,
    physical_from_internal,
    unwrap_phase_vs_frequency,
)
from fpjpa.interference import FabryPerotParams, Spectrum, normalized_spectrum

RATES = ("kappa", "kappa0", "fsr")
PHASES = ("phi0", "phi_ref")


@pytest.fixture(scope="module")
def noisy_reflection_fit():
    problem = FitProblem([reflection_dataset(noise=0.01, seed=1)])
    return problem, fit_reflection(problem)


@pytest.fixture(scope="module")
def gain_fit():
    problem = FitProblem(gain_datasets(), "gain_power", initial=GAIN_INITIAL)
    return problem, fit_gain_multi(problem)


def test_noiseless_reflection_is_exact():
    res = fit_reflection(FitProblem([reflection_dataset()]))
    assert res.residual_norm < 1e-10
    assert res.converged
    for k, v in FITTED_TRUTH.items():
        assert res.params[k] == pytest.approx(v, rel=1e-8, abs=1e-9 * MHZ if k == "omega_a" else 1e-9)


def test_noisy_reflection_recovery(noisy_reflection_fit):
    _, res = noisy_reflection_fit
    for k in RATES + ("eta", "eta0"):
        assert res.params[k] == pytest.approx(FITTED_TRUTH[k], rel=0.01)
    for k in PHASES:
        assert abs(res.params[k] - FITTED_TRUTH[k]) < 0.02
    assert abs(res.params["omega_a"] - FITTED_TRUTH["omega_a"]) < 0.01 * FITTED_TRUTH["kappa"]
    assert res.covariance_reliable
    assert res.covariance.shape == (8, 8)
    assert all(s > 0 for s in res.stderr().values())


def test_gradient_vanishes_at_optimum(noisy_reflection_fit):
    problem, res = noisy_reflection_fit
    g = objective_gradient(problem, res.params)
    assert np.max(np.abs(g)) <= 1e-6 * (1 + res.objective)


def test_objective_never_worse_than_any_start(noisy_reflection_fit):
    _, res = noisy_reflection_fit
    assert len(res.start_objectives) == 8
    assert res.objective <= min(res.start_objectives) + 1e-12


def test_gradient_matches_finite_differences(noisy_reflection_fit):
    problem, res = noisy_reflection_fit
    theta = internal_coordinates(problem, res.params)
    theta = theta + np.random.default_rng(3).normal(size=theta.size) * 0.01
    params = physical_from_internal(problem, theta, res.params)
    g = objective_gradient(problem, params)
    h = 1e-6
    fd = np.empty_like(g)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        up = objective_value(problem, physical_from_internal(problem, theta + e, params))
        dn = objective_value(problem, physical_from_internal(problem, theta - e, params))
        fd[k] = (up - dn) / (2 * h)
    assert np.max(np.abs(g - fd)) <= 1e-4 * np.max(np.abs(fd))


def test_internal_coordinates_round_trip():
    problem = FitProblem([reflection_dataset()])
    theta = internal_coordinates(problem, FITTED_TRUTH)
    back = physical_from_internal(problem, theta, FITTED_TRUTH)
    for k, v in FITTED_TRUTH.items():
        assert back[k] == pytest.approx(v, rel=1e-12, abs=1e-12)


def test_hz_and_rad_axes_agree():
    res_rad = fit_reflection(FitProblem([reflection_dataset()]))
    res_hz = fit_reflection(FitProblem([reflection_dataset(scale=1 / (2 * math.pi))]))
    for k in ("omega_a", "kappa", "kappa0", "fsr"):
        assert res_hz.params[k] * 2 * math.pi == pytest.approx(res_rad.params[k], rel=1e-7)
    for k in ("eta", "eta0", "phi0", "phi_ref"):
        assert res_hz.params[k] == pytest.approx(res_rad.params[k], rel=1e-7, abs=1e-9)


def test_eta_fixed_at_one_pins_environment():
    d = np.linspace(-600 * MHZ, 600 * MHZ, 801)
    jpa = JpaParams(0.0, 250 * MHZ, 15 * MHZ)
    fp = FabryPerotParams(1.0, 0.9, 1.0, phi_ref=0.2)
    s = normalized_spectrum(d - 5 * MHZ, jpa, fp)[0]
    problem = FitProblem([Dataset(Spectrum(d, s, "normalized_s11"))], fixed={"eta": 1.0, "phi_ref": 0.2})
    res = fit_reflection(problem)
    assert res.params["eta"] == 1.0
    assert res.params["omega_a"] == pytest.approx(5 * MHZ, rel=1e-7)
    assert res.params["kappa"] == pytest.approx(250 * MHZ, rel=1e-7)
    assert res.params["kappa0"] == pytest.approx(15 * MHZ, rel=1e-6)
    assert "fsr" not in res.param_names
    assert "phi0" not in res.param_names


def test_model_spectra_reproduce_data():
    ds = reflection_dataset()
    problem = FitProblem([ds])
    model = model_spectra(problem, FITTED_TRUTH)[0]
    assert np.max(np.abs(model.values - ds.spectrum.values)) < 1e-13


def test_problem_validation():
    ds = reflection_dataset(n=51)
    with pytest.raises(ValidationError):
        FitProblem([ds], kind="bogus")
    with pytest.raises(ValidationError):
        FitProblem([ds, ds])
    with pytest.raises(ValidationError):
        FitProblem([ds], fixed={"nonsense": 1.0})
    with pytest.raises(ValidationError):
        FitProblem([ds], kind="gain_power")
    gains = gain_datasets(noise_db=0.0, n=201, targets=(6, 10))
    with pytest.raises(ValidationError):
        fit_gain_multi(FitProblem(gains[:1], "gain_power"))
    with pytest.raises(ValidationError):
        FitProblem([Dataset(gains[0].spectrum, None)], "gain_power")


def fixed_env_problem(datasets):
    fixed = {k: GAIN_TRUTH[k] for k in ("eta", "eta0", "fsr", "phi0", "phi_ref")}
    return FitProblem(datasets, "gain_power", fixed=fixed, initial={"kappa": 250 * MHZ, "kappa0": 30 * MHZ},
                      n_phase_starts=1)


def test_pump_conversion_with_known_environment():
    data = gain_datasets(noise_db=0.0, n=601, targets=(10, 18))
    res = fit_gain_multi(fixed_env_problem(data))
    assert res.params["c_p"] == pytest.approx(GAIN_TRUTH["c_p"], rel=5e-3)
    for i in range(2):
        assert res.params[f"kappa[{i}]"] == pytest.approx(GAIN_KAPPAS[i], rel=5e-3)
        assert res.params[f"kappa0[{i}]"] == pytest.approx(GAIN_KAPPA0S[i], rel=2e-2)


def test_dataset_order_does_not_change_shared_fit():
    data = gain_datasets(noise_db=0.05, n=601, targets=(10, 18), seed=4)
    a = fit_gain_multi(fixed_env_problem(data))
    b = fit_gain_multi(fixed_env_problem(data[::-1]))
    assert b.params["c_p"] == pytest.approx(a.params["c_p"], rel=1e-6)
    assert b.params["kappa[0]"] == pytest.approx(a.params["kappa[1]"], rel=1e-6)


def test_above_threshold_trace_is_rejected():
    data = gain_datasets(noise_db=0.0, n=401, targets=(10, 14, 18))
    # a huge pump power puts the starting point beyond threshold for that trace
    data.append(Dataset(data[0].spectrum, data[0].pump_power * 1e4))
    initial = dict(GAIN_TRUTH)
    for i in range(4):
        initial[f"kappa[{i}]"] = GAIN_KAPPAS[min(i, 2)]
        initial[f"kappa0[{i}]"] = GAIN_KAPPA0S[min(i, 2)]
    problem = FitProblem(data, "gain_power", initial=initial, n_phase_starts=1)
    with pytest.warns(RuntimeWarning):
        res = fit_gain_multi(problem)
    assert res.rejected == [3]
    lone_initial = dict(GAIN_TRUTH, kappa=GAIN_KAPPAS[2], kappa0=GAIN_KAPPA0S[2])
    lone = FitProblem(data[2:], "gain_power", initial=lone_initial, n_phase_starts=1)
    with pytest.raises(ThresholdError):
        with pytest.warns(RuntimeWarning):
            fit_gain_multi(lone)


def test_joint_gain_fit_recovery(gain_fit):
    problem, res = gain_fit
    for k in ("eta", "eta0", "fsr"):
        assert res.params[k] == pytest.approx(GAIN_TRUTH[k], rel=0.02)
    for k in PHASES:
        assert abs(res.params[k] - GAIN_TRUTH[k]) < 0.02 * 2 * math.pi
    assert res.params["c_p"] == pytest.approx(GAIN_TRUTH["c_p"], rel=0.01)
    assert res.covariance_reliable
    assert len(res.per_dataset_residuals) == 5
    g = objective_gradient(problem, res.params)
    assert np.max(np.abs(g)) <= 1e-6 * (1 + res.objective)


def test_fit_dispatch():
    res = fit(FitProblem([reflection_dataset(n=401)]))
    assert res.residual_norm < 1e-9


def test_unwrap_phase_examples():
    fsr = 140 * MHZ
    w = np.linspace(9.0, 9.6, 13) * 2 * math.pi * 1e9
    phi = (w * 2 * math.pi / fsr + 0.3 + math.pi) % (2 * math.pi) - math.pi
    got_fsr, phi_r = unwrap_phase_vs_frequency(list(zip(w, phi)))
    assert got_fsr == pytest.approx(fsr, rel=1e-9)
    rng = np.random.default_rng(5)
    noisy = phi + 0.02 * rng.normal(size=phi.size)
    noisy_fsr, _ = unwrap_phase_vs_frequency(list(zip(w, noisy)))
    assert noisy_fsr == pytest.approx(fsr, rel=0.01)
    flat, _ = unwrap_phase_vs_frequency([(1.0, 0.4), (2.0, 0.4), (3.0, 0.4)])
    assert flat == math.inf
    with pytest.raises(ValidationError):
        unwrap_phase_vs_frequency([(1.0, 0.2)])
