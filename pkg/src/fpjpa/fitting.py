"""Least-squares extraction of amplifier and environment parameters.

Two protocols are supported:

``reflection_complex``
    One normalized complex reflection trace of the unpumped amplifier.
    Free parameters are the resonance offset ``omega_a`` (relative to the
    trace's zero detuning), ``kappa``, ``kappa0``, ``eta``, ``eta0``,
    ``fsr``, ``phi0`` and ``phi_ref``. Residuals stack the real and
    imaginary parts of ``model - data``.

``gain_power``
    Several net-gain traces (dB) at different pump powers ``P_i``. The
    environment ``eta, eta0, fsr, phi0, phi_ref`` is shared, each trace has
    its own ``kappa_i, kappa0_i``, and the drive amplitudes are tied to the
    powers through ``Omega_i = c_p sqrt(P_i)``. Residuals are differences
    in dB.

Internally every parameter is mapped to an unconstrained coordinate:
logistic for transmittances, logarithm for rates, identity for phases and
for the resonance offset (scaled by a reference rate). The solver is
:func:`scipy.optimize.least_squares` with the trust-region reflective
method and central-difference Jacobians. Uncertainties come from the
Gauss-Newton covariance at the optimum scaled by the reduced residual;
they are asymptotic estimates only.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from fpjpa.circuit_model import JpaParams
from fpjpa.constants import TWO_PI
from fpjpa.errors import NumericalError, ThresholdError, ValidationError
from fpjpa.interference import (
    DriveParams,
    FabryPerotParams,
    Spectrum,
    gain_spectrum,
    normalized_spectrum,
    parametric_threshold,
    to_db,
    wrap_phase,
)
from fpjpa.metrics import pump_for_gain

FIT_KINDS = ("reflection_complex", "gain_power")
REFLECTION_PARAMS = ("omega_a", "kappa", "kappa0", "eta", "eta0", "fsr", "phi0", "phi_ref")
SHARED_GAIN_PARAMS = ("eta", "eta0", "fsr", "phi0", "phi_ref", "c_p")
ENV_PARAMS = ("eta", "eta0", "fsr", "phi0", "phi_ref")

_UNIT = 0  # logistic (0, 1)
_POS = 1  # exponential (0, inf)
_LIN = 2  # identity, scaled

_PENALTY = 1.0e3
_RANK_RCOND = 1.0e-10


def _logistic(x: float) -> float:
    x = min(max(x, -700.0), 700.0)
    return 1.0 / (1.0 + math.exp(-x))


def _transform_of(name: str) -> int:
    base = name.split("[")[0]
    if base in ("eta", "eta0"):
        return _UNIT
    if base in ("kappa", "kappa0", "fsr", "c_p"):
        return _POS
    return _LIN


@dataclass(frozen=True)
class Dataset:
    """A measured trace and the pump power it was taken at.

    Attributes
    ----------
    spectrum : Spectrum
        ``normalized_s11`` for reflection fits, ``net_gain_dB`` (or
        ``net_gain_linear``) for gain fits.
    pump_power : float or None
        Pump power (W) for gain fits.
    """

    spectrum: Spectrum
    pump_power: Optional[float] = None


@dataclass
class FitProblem:
    """Datasets, starting values and the free/fixed mask.

    Attributes
    ----------
    datasets : list of Dataset
    kind : {"reflection_complex", "gain_power"}
    initial : dict
        Starting values by parameter name. Gain fits accept per-trace
        values as ``kappa[i]`` / ``kappa0[i]`` or as shared ``kappa`` /
        ``kappa0`` applied to every trace. Missing values are seeded by
        heuristics.
    fixed : dict
        Parameters held at the given value.
    n_phase_starts : int
        Points of the ``phi0`` start lattice.
    n_random_starts : int
        Extra starts with random phases and jittered rates.
    seed : int or None
        Seed for the random starts.
    jobs : int
        Worker threads evaluating starts.
    max_nfev : int or None
        Function-evaluation cap per start.
    """

    datasets: List[Dataset]
    kind: str = "reflection_complex"
    initial: Dict[str, float] = field(default_factory=dict)
    fixed: Dict[str, float] = field(default_factory=dict)
    n_phase_starts: int = 8
    n_random_starts: int = 0
    seed: Optional[int] = None
    jobs: int = 1
    max_nfev: Optional[int] = None

    def __post_init__(self):
        if self.kind not in FIT_KINDS:
            raise ValidationError(f"fit kind must be one of {FIT_KINDS}, got {self.kind!r}")
        if len(self.datasets) < 1:
            raise ValidationError("a fit problem needs at least one dataset")
        if self.n_phase_starts < 1:
            raise ValidationError("n_phase_starts must be at least 1")
        if self.kind == "gain_power":
            for i, ds in enumerate(self.datasets):
                if ds.pump_power is None or not ds.pump_power > 0:
                    raise ValidationError(f"gain dataset {i} needs a positive pump power")
                if ds.spectrum.kind not in ("net_gain_dB", "net_gain_linear"):
                    raise ValidationError(f"gain dataset {i} must hold a net-gain spectrum")
        else:
            if len(self.datasets) != 1:
                raise ValidationError("a reflection fit takes exactly one dataset")
            if self.datasets[0].spectrum.kind not in ("normalized_s11", "complex_s11"):
                raise ValidationError("reflection fit needs a complex reflection spectrum")
        names = self.param_names()
        for key in list(self.fixed) + list(self.initial):
            if key not in names and key not in ("kappa", "kappa0"):
                raise ValidationError(f"unknown fit parameter {key!r}")

    def param_names(self) -> List[str]:
        if self.kind == "reflection_complex":
            return list(REFLECTION_PARAMS)
        names = list(SHARED_GAIN_PARAMS)
        for i in range(len(self.datasets)):
            names += [f"kappa[{i}]", f"kappa0[{i}]"]
        return names


@dataclass
class FitResult:
    """Outcome of a fit.

    Attributes
    ----------
    params : dict
        Fitted values in internal units (rad/s, rad, dimensionless;
        ``c_p`` in rad/s per sqrt(W)).
    param_names : list of str
        Free parameters, in covariance order.
    covariance : numpy.ndarray
        Covariance of the free parameters (physical units).
    covariance_reliable : bool
        False when the Jacobian is numerically rank deficient.
    residual_norm : float
        Euclidean norm of the residual vector.
    objective : float
        ``0.5 * residual_norm**2``.
    n_iterations : int
        Function evaluations of the winning start.
    converged : bool
    per_dataset_residuals : list of float
        Residual norm of each dataset.
    start_index : int
        Index of the winning start.
    start_objectives : list of float
        Objective at each start's initial point.
    rejected : list of int
        Datasets dropped before fitting because their starting point is at
        or above the parametric threshold.
    message : str
    """

    params: Dict[str, float]
    param_names: List[str]
    covariance: np.ndarray
    covariance_reliable: bool
    residual_norm: float
    objective: float
    n_iterations: int
    converged: bool
    per_dataset_residuals: List[float]
    start_index: int
    start_objectives: List[float] = field(default_factory=list)
    rejected: List[int] = field(default_factory=list)
    message: str = ""

    def stderr(self) -> Dict[str, float]:
        """Standard errors of the free parameters."""
        d = np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))
        return dict(zip(self.param_names, d.tolist()))


class _Model:
    """Parameter vector bookkeeping and residual evaluation."""

    def __init__(self, problem: FitProblem, values: Dict[str, float], datasets: Sequence[Dataset]):
        self.problem = problem
        self.datasets = list(datasets)
        self.names = [n for n in self._all_names() if n not in problem.fixed]
        self.fixed = dict(problem.fixed)
        self.kinds = [_transform_of(n) for n in self.names]
        d0 = self.datasets[0].spectrum.detunings
        self.rate_scale = float(np.ptp(d0)) if d0.size > 1 else 1.0
        self.values = values
        if problem.kind == "gain_power":
            self.targets = [to_db(ds.spectrum.gain_linear()) for ds in self.datasets]
            self.sqrt_p = [math.sqrt(ds.pump_power) for ds in self.datasets]
        else:
            self.targets = [self.datasets[0].spectrum.values]

    def _all_names(self):
        if self.problem.kind == "reflection_complex":
            return list(REFLECTION_PARAMS)
        names = list(SHARED_GAIN_PARAMS)
        for i in range(len(self.datasets)):
            names += [f"kappa[{i}]", f"kappa0[{i}]"]
        return names

    # coordinate maps -------------------------------------------------
    def to_internal(self, phys: Dict[str, float]) -> np.ndarray:
        out = np.empty(len(self.names))
        for k, (n, t) in enumerate(zip(self.names, self.kinds)):
            v = phys[n]
            if t == _UNIT:
                v = min(max(v, 1e-12), 1.0 - 1e-12)
                out[k] = math.log(v / (1.0 - v))
            elif t == _POS:
                out[k] = math.log(max(v, 1e-300))
            else:
                out[k] = v / self.rate_scale if n == "omega_a" else v
        return out

    def to_physical(self, theta) -> Dict[str, float]:
        phys = dict(self.fixed)
        for n, t, x in zip(self.names, self.kinds, theta):
            if t == _UNIT:
                phys[n] = _logistic(x)
            elif t == _POS:
                phys[n] = math.exp(min(x, 700.0))
            else:
                phys[n] = x * self.rate_scale if n == "omega_a" else x
        return phys

    def jacobian_of_map(self, theta) -> np.ndarray:
        """Diagonal of d(physical)/d(internal)."""
        out = np.empty(len(theta))
        for k, (n, t, x) in enumerate(zip(self.names, self.kinds, theta)):
            if t == _UNIT:
                s = _logistic(x)
                out[k] = s * (1.0 - s)
            elif t == _POS:
                out[k] = math.exp(min(x, 700.0))
            else:
                out[k] = self.rate_scale if n == "omega_a" else 1.0
        return out

    # residuals ---------------------------------------------------------
    def _fp(self, p) -> FabryPerotParams:
        return FabryPerotParams(
            eta=min(p["eta"], 1.0), eta0=min(p["eta0"], 1.0), fsr=p["fsr"],
            phi0=p["phi0"], phi_ref=p["phi_ref"],
        )

    def blocks(self, theta) -> List[np.ndarray]:
        p = self.to_physical(theta)
        if self.problem.kind == "reflection_complex":
            try:
                return [self._reflection_block(p)]
            except (ValidationError, NumericalError):
                return [np.full(2 * self.datasets[0].spectrum.detunings.size, _PENALTY)]
        out = []
        for i, ds in enumerate(self.datasets):
            try:
                out.append(self._gain_block(p, i))
            except (ValidationError, NumericalError):
                out.append(np.full(ds.spectrum.detunings.size, _PENALTY))
        return out

    def _reflection_block(self, p) -> np.ndarray:
        spec = self.datasets[0].spectrum
        jpa = JpaParams(omega_a=0.0, kappa=p["kappa"], kappa0=p["kappa0"])
        fp = self._fp(p)
        d = spec.detunings - p["omega_a"]
        if spec.kind == "normalized_s11":
            model = normalized_spectrum(d, jpa, fp)[0]
        else:
            model = gain_spectrum(d, jpa, fp)
        diff = model - self.targets[0]
        return np.concatenate([diff.real, diff.imag])

    def _gain_block(self, p, i) -> np.ndarray:
        d = self.datasets[i].spectrum.detunings
        jpa = JpaParams(omega_a=0.0, kappa=p[f"kappa[{i}]"], kappa0=p[f"kappa0[{i}]"])
        fp = self._fp(p)
        omega_p = p["c_p"] * self.sqrt_p[i]
        if not omega_p < float(np.min(parametric_threshold(d, jpa, fp))):
            return np.full(d.size, _PENALTY)
        g = normalized_spectrum(d, jpa, fp, DriveParams(omega_p))[1]
        return to_db(g) - self.targets[i]

    def residuals(self, theta) -> np.ndarray:
        return np.concatenate(self.blocks(theta))

    def objective(self, theta) -> float:
        r = self.residuals(theta)
        return 0.5 * float(r @ r)


# ----------------------------------------------------------------------
# heuristics


def _uniform(d: np.ndarray) -> bool:
    steps = np.diff(d)
    return bool(np.allclose(steps, steps[0], rtol=1e-6, atol=0.0))


def _bare_reflection_fit(spec: Spectrum, fixed: Dict[str, float]):
    """Fit the interference-free model to seed ``omega_a``, ``kappa``, ``kappa0``, ``phi_ref``."""
    d = spec.detunings
    s = spec.values
    span = float(np.ptp(d))
    grad = np.abs(np.gradient(s, d))
    i0 = int(np.argmax(grad))
    best = None
    for frac in (0.02, 0.08, 0.3):
        kap0 = frac * span

        def res(x):
            om, lk, lk0, phr = x
            k, k0 = math.exp(lk), math.exp(lk0)
            dd = d - om * span
            m = 1.0 - k / (0.5 * (k + k0) - 1j * dd)
            m = m * np.exp(-1j * phr)
            diff = m - s
            return np.concatenate([diff.real, diff.imag])

        phr0 = float(np.angle(np.mean(s[[0, -1]])))
        for k0_frac in (0.05, 0.5):
            x0 = [d[i0] / span, math.log(kap0), math.log(k0_frac * kap0), phr0]
            try:
                sol = least_squares(res, x0, method="trf", x_scale="jac", max_nfev=400)
            except ValueError:
                continue
            if best is None or sol.cost < best.cost:
                best = sol
    om, lk, lk0, phr = best.x
    return {
        "omega_a": om * span,
        "kappa": math.exp(lk),
        "kappa0": math.exp(lk0),
        "phi_ref": float(wrap_phase(phr)),
    }, best.fun


def _ripple_period(d: np.ndarray, resid: np.ndarray, min_period: float) -> Optional[float]:
    """Dominant period of a complex ripple via a zero-padded periodogram."""
    if not _uniform(d):
        dd = np.linspace(d[0], d[-1], d.size)
        resid = np.interp(dd, d, resid.real) + 1j * np.interp(dd, d, resid.imag)
        d = dd
    step = d[1] - d[0]
    n = d.size
    win = np.hanning(n)
    z = (resid - resid.mean()) * win
    nfft = 1 << int(math.ceil(math.log2(n * 16)))
    spec = np.abs(np.fft.fft(z, nfft))
    freqs = np.fft.fftfreq(nfft, step)
    span = d[-1] - d[0]
    ok = (np.abs(freqs) > 1.5 / span) & (np.abs(freqs) < 1.0 / min_period)
    if not np.any(ok):
        return None
    k = int(np.argmax(np.where(ok, spec, 0.0)))
    return 1.0 / abs(freqs[k])


def _reflection_seed(problem: FitProblem) -> Dict[str, float]:
    spec = problem.datasets[0].spectrum
    seed: Dict[str, float] = {}
    bare, resid = _bare_reflection_fit(spec, problem.fixed)
    seed.update(bare)
    n = spec.detunings.size
    r = resid[:n] + 1j * resid[n:]
    step = float(np.min(np.diff(spec.detunings)))
    period = _ripple_period(spec.detunings, r, min_period=8.0 * step)
    seed["fsr"] = period if period is not None else float(np.ptp(spec.detunings))
    seed["eta"] = 0.99
    seed["eta0"] = 0.9
    seed["phi0"] = 0.0
    return seed


def _gain_seed(problem: FitProblem, values: Dict[str, float]) -> Dict[str, float]:
    seed: Dict[str, float] = {"eta": 0.99, "eta0": 0.9, "phi0": 0.0, "phi_ref": 0.0}
    spans = [float(np.ptp(ds.spectrum.detunings)) for ds in problem.datasets]
    seed["fsr"] = min(spans) / 4.0
    for i, ds in enumerate(problem.datasets):
        g = ds.spectrum.gain_linear()
        d = ds.spectrum.detunings
        gmax = float(np.max(g))
        above = d[g >= 0.5 * gmax]
        width = float(above[-1] - above[0]) if above.size > 1 else spans[i] / 10.0
        seed.setdefault(f"kappa[{i}]", width * math.sqrt(max(gmax, 1.0 + 1e-9)))
        seed.setdefault(f"kappa0[{i}]", 0.1 * seed[f"kappa[{i}]"])
    merged = dict(seed)
    merged.update(values)
    if "c_p" not in values:
        amps = []
        for i, ds in enumerate(problem.datasets):
            gmax = float(np.max(ds.spectrum.gain_linear()))
            jpa = JpaParams(omega_a=0.0, kappa=merged[f"kappa[{i}]"], kappa0=merged[f"kappa0[{i}]"])
            try:
                om = pump_for_gain(jpa, max(gmax, 1.01))
            except (ValidationError, ValueError):
                om = 0.5 * jpa.kappa_tot
            amps.append(om / math.sqrt(ds.pump_power))
        seed["c_p"] = float(np.median(amps))
    return seed


def _expand_initial(problem: FitProblem) -> Dict[str, float]:
    values: Dict[str, float] = {}
    for key, val in problem.initial.items():
        if problem.kind == "gain_power" and key in ("kappa", "kappa0"):
            for i in range(len(problem.datasets)):
                values.setdefault(f"{key}[{i}]", float(val))
        else:
            values[key] = float(val)
    return values


# ----------------------------------------------------------------------
# solver


def _jacobian(model: _Model, theta: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Fourth-order central-difference Jacobian in internal coordinates.

    The internal coordinates are all of order one, so an absolute step is
    used.
    """
    r = model.residuals(theta)
    jac = np.empty((r.size, theta.size))
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = step
        rp1, rm1 = model.residuals(theta + e), model.residuals(theta - e)
        rp2, rm2 = model.residuals(theta + 2 * e), model.residuals(theta - 2 * e)
        jac[:, k] = (8.0 * (rp1 - rm1) - (rp2 - rm2)) / (12.0 * step)
    return jac


class _Solution:
    """Minimal stand-in for ``OptimizeResult`` after polishing."""

    def __init__(self, sol, x, fun, jac, nfev):
        self.x = x
        self.fun = fun
        self.jac = jac
        self.cost = 0.5 * float(fun @ fun)
        self.nfev = nfev
        self.success = sol.success
        self.message = sol.message


def _polish(model: _Model, sol, max_steps: int = 5) -> _Solution:
    """Gauss-Newton steps with an accurate Jacobian after the trust-region solve.

    The trust-region solver stops on relative cost decrease, which leaves
    a small gradient along weakly determined directions. Each step is kept
    only if it lowers the objective.
    """
    x = np.array(sol.x, dtype=float)
    r = model.residuals(x)
    nfev = int(sol.nfev)
    jac = _jacobian(model, x)
    for _ in range(max_steps):
        step = np.linalg.lstsq(jac, -r, rcond=None)[0]
        r_new = model.residuals(x + step)
        nfev += 1 + 4 * x.size
        if not float(r_new @ r_new) <= float(r @ r):
            break
        x, r = x + step, r_new
        jac = _jacobian(model, x)
        grad = jac.T @ r
        if np.max(np.abs(grad)) <= 1e-10 * (1.0 + 0.5 * float(r @ r)):
            break
    return _Solution(sol, x, r, jac, nfev)


def _solve_start(model: _Model, theta0: np.ndarray, max_nfev: Optional[int]):
    f0 = model.objective(theta0)
    sol = least_squares(
        model.residuals,
        theta0,
        method="trf",
        jac="3-point",
        x_scale="jac",
        ftol=1e-12,
        xtol=1e-12,
        gtol=1e-12,
        max_nfev=max_nfev,
    )
    return f0, sol


def _covariance(model: _Model, sol, n_resid: int):
    """Gauss-Newton covariance mapped to physical coordinates.

    The rank test uses the column-normalized internal Jacobian so that it
    is insensitive to the units of the parameters.
    """
    jac = np.asarray(sol.jac)
    norms = np.linalg.norm(jac, axis=0)
    norms[norms == 0] = 1.0
    u, s, vt = np.linalg.svd(jac / norms, full_matrices=False)
    reliable = bool(s.size and s[-1] > _RANK_RCOND * s[0])
    if not reliable:
        warnings.warn("rank-deficient Jacobian: covariance is unreliable", RuntimeWarning, stacklevel=3)
    keep = s > _RANK_RCOND * (s[0] if s.size else 1.0)
    inv = (vt[keep].T / s[keep] ** 2) @ vt[keep]
    inv = inv / np.outer(norms, norms)
    dof = max(n_resid - len(sol.x), 1)
    s2 = 2.0 * sol.cost / dof
    dmap = model.jacobian_of_map(sol.x)
    return inv * s2 * np.outer(dmap, dmap), reliable


def _phase_lattice(n: int) -> np.ndarray:
    return wrap_phase(-np.pi + TWO_PI * (np.arange(n) + 0.5) / n)


def _starts(problem: FitProblem, base: Dict[str, float], model: _Model) -> List[np.ndarray]:
    out = []
    if "phi0" in problem.fixed:
        out.append(model.to_internal(base))
    else:
        for ph in _phase_lattice(problem.n_phase_starts):
            p = dict(base)
            p["phi0"] = float(ph)
            out.append(model.to_internal(p))
    if problem.n_random_starts > 0:
        rng = np.random.default_rng(problem.seed)
        for _ in range(problem.n_random_starts):
            p = dict(base)
            for n in model.names:
                t = _transform_of(n)
                if n in ("phi0", "phi_ref"):
                    p[n] = float(rng.uniform(-np.pi, np.pi))
                elif t == _POS:
                    p[n] = base[n] * float(np.exp(rng.normal(0.0, 0.2)))
            out.append(model.to_internal(p))
    return out


def _run(problem: FitProblem, model: _Model, starts: List[np.ndarray]):
    def task(theta0):
        return _solve_start(model, theta0, problem.max_nfev)

    jobs = max(1, int(problem.jobs))
    if jobs == 1 or len(starts) == 1:
        outcomes = [task(t) for t in starts]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(task, starts))
    ranked = sorted(range(len(outcomes)), key=lambda k: (float(outcomes[k][1].cost), k))
    return ranked[0], outcomes


def _finish(problem: FitProblem, model: _Model, best: int, outcomes, rejected) -> FitResult:
    f0s = [float(o[0]) for o in outcomes]
    sol = _polish(model, outcomes[best][1])
    n_resid = sol.fun.size
    cov, reliable = _covariance(model, sol, n_resid)
    phys = model.to_physical(sol.x)
    for key in ("phi0", "phi_ref"):
        if key in phys:
            phys[key] = float(wrap_phase(phys[key]))
    blocks = model.blocks(sol.x)
    per = [float(np.linalg.norm(b)) for b in blocks]
    penalized = any(np.all(b == _PENALTY) for b in blocks)
    converged = bool(sol.success) and not penalized
    norm = float(np.linalg.norm(sol.fun))
    return FitResult(
        params={k: float(v) for k, v in phys.items()},
        param_names=list(model.names),
        covariance=cov,
        covariance_reliable=reliable,
        residual_norm=norm,
        objective=0.5 * norm**2,
        n_iterations=int(sol.nfev),
        converged=converged,
        per_dataset_residuals=per,
        start_index=int(best),
        start_objectives=f0s,
        rejected=list(rejected),
        message=str(sol.message),
    )


def _fill_fixed_env(problem: FitProblem, values: Dict[str, float]) -> None:
    """With ``eta`` fixed at one the cavity terms drop out; pin them."""
    if problem.fixed.get("eta") == 1.0:
        for key in ("eta0", "fsr", "phi0"):
            if key not in problem.fixed:
                problem.fixed[key] = values.get(key, {"eta0": 1.0, "fsr": 1.0, "phi0": 0.0}[key])


def fit_reflection(problem: FitProblem) -> FitResult:
    """Fit a normalized complex reflection trace.

    Starting values for parameters missing from ``problem.initial`` come
    from a fit of the interference-free resonator (offset, rates, reference
    phase) followed by a periodogram of its residual (free spectral range).
    The round-trip phase is scanned over a lattice of ``n_phase_starts``
    values and the start with the lowest final objective wins; ties are
    broken by start index.
    """
    if problem.kind != "reflection_complex":
        raise ValidationError("fit_reflection needs a reflection_complex problem")
    values = _expand_initial(problem)
    _fill_fixed_env(problem, values)
    seed = _reflection_seed(problem)
    base = dict(seed)
    base.update(values)
    base.update(problem.fixed)
    model = _Model(problem, base, problem.datasets)
    starts = _starts(problem, base, model)
    if "phi0" in problem.initial and "phi0" not in problem.fixed:
        starts.insert(0, model.to_internal(base))
    best, outcomes = _run(problem, model, starts)
    return _finish(problem, model, best, outcomes, [])


def fit_gain_multi(problem: FitProblem) -> FitResult:
    """Joint fit of net-gain traces at several pump powers.

    Traces whose starting point already sits at or above the parametric
    threshold on their own grid are dropped with a warning; their indices
    are listed in ``FitResult.rejected``. During the solve, parameter
    values beyond threshold return a constant penalty residual.
    """
    if problem.kind != "gain_power":
        raise ValidationError("fit_gain_multi needs a gain_power problem")
    if len(problem.datasets) < 2:
        raise ValidationError("a joint gain fit needs at least two pump powers")
    values = _expand_initial(problem)
    seed = _gain_seed(problem, values)
    base = dict(seed)
    base.update(values)
    base.update(problem.fixed)

    kept, rejected = [], []
    for i, ds in enumerate(problem.datasets):
        jpa = JpaParams(omega_a=0.0, kappa=base[f"kappa[{i}]"], kappa0=base[f"kappa0[{i}]"])
        fp = FabryPerotParams(min(base["eta"], 1.0), min(base["eta0"], 1.0), base["fsr"], base["phi0"], base["phi_ref"])
        om = base["c_p"] * math.sqrt(ds.pump_power)
        if om >= float(np.min(parametric_threshold(ds.spectrum.detunings, jpa, fp))):
            rejected.append(i)
        else:
            kept.append(i)
    if rejected:
        warnings.warn(f"datasets {rejected} start at or above threshold and are dropped", RuntimeWarning, stacklevel=2)
        if len(kept) < 2:
            raise ThresholdError("fewer than two datasets remain below threshold")
        problem = _reindex(problem, kept)
        base = _reindex_values(base, kept)

    model = _Model(problem, base, problem.datasets)
    starts = _starts(problem, base, model)
    if "phi0" in problem.initial and "phi0" not in problem.fixed:
        starts.insert(0, model.to_internal(base))
    best, outcomes = _run(problem, model, starts)
    return _finish(problem, model, best, outcomes, rejected)


def _reindex(problem: FitProblem, kept: List[int]) -> FitProblem:
    def remap(d):
        out = {}
        for k, v in d.items():
            if "[" in k:
                name, idx = k[:-1].split("[")
                if int(idx) in kept:
                    out[f"{name}[{kept.index(int(idx))}]"] = v
            else:
                out[k] = v
        return out

    return FitProblem(
        datasets=[problem.datasets[i] for i in kept],
        kind=problem.kind,
        initial=remap(problem.initial),
        fixed=remap(problem.fixed),
        n_phase_starts=problem.n_phase_starts,
        n_random_starts=problem.n_random_starts,
        seed=problem.seed,
        jobs=problem.jobs,
        max_nfev=problem.max_nfev,
    )


def _reindex_values(values: Dict[str, float], kept: List[int]) -> Dict[str, float]:
    out = {}
    for k, v in values.items():
        if "[" in k:
            name, idx = k[:-1].split("[")
            if int(idx) in kept:
                out[f"{name}[{kept.index(int(idx))}]"] = v
        else:
            out[k] = v
    return out


def fit(problem: FitProblem) -> FitResult:
    """Dispatch on ``problem.kind``."""
    if problem.kind == "reflection_complex":
        return fit_reflection(problem)
    return fit_gain_multi(problem)


def model_spectra(problem: FitProblem, params: Dict[str, float]) -> List[Spectrum]:
    """Model traces at fitted parameters on each dataset's grid."""
    out = []
    fp = FabryPerotParams(
        eta=params["eta"], eta0=params["eta0"], fsr=params["fsr"],
        phi0=params["phi0"], phi_ref=params["phi_ref"],
    )
    for i, ds in enumerate(problem.datasets):
        d = ds.spectrum.detunings
        if problem.kind == "reflection_complex":
            jpa = JpaParams(omega_a=0.0, kappa=params["kappa"], kappa0=params["kappa0"])
            vals = normalized_spectrum(d - params["omega_a"], jpa, fp)[0]
            out.append(Spectrum(d, vals, "normalized_s11", ds.spectrum.center))
        else:
            jpa = JpaParams(omega_a=0.0, kappa=params[f"kappa[{i}]"], kappa0=params[f"kappa0[{i}]"])
            om = params["c_p"] * math.sqrt(ds.pump_power)
            g = normalized_spectrum(d, jpa, fp, DriveParams(om))[1]
            out.append(Spectrum(d, to_db(g), "net_gain_dB", ds.spectrum.center))
    return out


def objective_gradient(problem: FitProblem, params: Dict[str, float], step: float = 1e-5) -> np.ndarray:
    """Gradient ``J^T r`` of the objective in internal coordinates.

    The Jacobian uses fourth-order central differences of the residual
    vector with an absolute step in the internal coordinates. The order
    of the entries is ``FitProblem.param_names`` without the fixed ones.
    """
    model = _Model(problem, params, problem.datasets)
    theta = model.to_internal(params)
    return _jacobian(model, theta, step).T @ model.residuals(theta)


def objective_value(problem: FitProblem, params: Dict[str, float]) -> float:
    """``0.5 |r|^2`` at physical parameter values."""
    model = _Model(problem, params, problem.datasets)
    return model.objective(model.to_internal(params))


def internal_coordinates(problem: FitProblem, params: Dict[str, float]) -> np.ndarray:
    """Map physical parameters to the solver's unconstrained coordinates."""
    model = _Model(problem, params, problem.datasets)
    return model.to_internal(params)


def physical_from_internal(problem: FitProblem, theta, params: Dict[str, float]) -> Dict[str, float]:
    """Inverse of :func:`internal_coordinates` (fixed values from ``params``)."""
    model = _Model(problem, params, problem.datasets)
    return model.to_physical(theta)


def unwrap_phase_vs_frequency(points):
    """Free spectral range and phase offset from ``(omega_a, phi0)`` pairs.

    The phases are unwrapped by nearest-2 pi continuation in ``omega_a``
    order and regressed linearly, ``phi0 = omega_a (2 pi/Delta) + phi_R``.

    Parameters
    ----------
    points : sequence of (float, float)
        Resonance frequencies (rad/s) and wrapped round-trip phases (rad).

    Returns
    -------
    fsr : float
        ``2 pi / slope`` (rad/s); ``inf`` for zero slope. A negative value
        means the phase decreases with frequency.
    phi_r : float
        Intercept at ``omega_a = 0``, wrapped to (-pi, pi].
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise ValidationError("need at least two (omega_a, phi0) points")
    order = np.argsort(pts[:, 0], kind="stable")
    w = pts[order, 0]
    ph = np.unwrap(pts[order, 1])
    wc = w.mean()
    slope, icpt = np.polyfit(w - wc, ph, 1)
    phi_r = float(wrap_phase(icpt - slope * wc))
    if slope == 0.0 or abs(slope) * np.ptp(w) < 1e-12:
        return math.inf, phi_r
    return TWO_PI / slope, phi_r
