"""Command-line front end.

Every subcommand reads a JSON (or CSV) input, writes its output
atomically, prints one machine-readable JSON summary line followed by a
short table, and exits with

* 0 on success,
* 2 on usage errors,
* 3 on invalid input,
* 4 on numerical failure (threshold, non-convergence, bandwidth).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from typing import Any, Dict, Optional, Sequence

import numpy as np

from fpjpa import io as fio
from fpjpa.design import synthesize
from fpjpa.errors import FpjpaError, NumericalError, ValidationError
from fpjpa.fitting import Dataset, FitProblem, fit, model_spectra
from fpjpa.interference import DriveParams, check_below_threshold, sweep, to_db
from fpjpa.metrics import (
    VisibilityMapBase,
    gain_metrics,
    pump_for_gain,
    ripple_visibility,
    saturation_input_flux,
)
from fpjpa.noise import added_noise_from_snr, noise_vs_pump

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_NUMERICAL = 4

KIND_MAP = {"reflection": "complex_s11", "normalized": "normalized_s11", "gain": "net_gain_dB"}


def _jobs(args) -> int:
    if args.jobs is not None:
        return max(1, args.jobs)
    env = os.environ.get("FPJPA_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"FPJPA_JOBS must be an integer, got {env!r}") from None
    return 1


def _summary(command: str, output: str, table: Dict[str, Any]) -> None:
    line = {"command": command, "status": "ok", "output": output}
    line.update({k: v for k, v in table.items() if isinstance(v, (int, float, str, bool)) or v is None})
    print(json.dumps(line, sort_keys=True))
    width = max((len(k) for k in table), default=0)
    for k, v in table.items():
        print(f"{k:<{width}}  {v}")


# ----------------------------------------------------------------------
# subcommands


def cmd_design(args) -> Dict[str, Any]:
    targets = fio.targets_from_dict(fio.read_json(args.input))
    res = synthesize(targets)
    doc = fio.design_to_dict(res)
    fio.write_json(args.output, doc)
    c = res.circuit
    return {
        "c_internal_F": c.c_internal,
        "c_coupling_F": c.c_coupling,
        "l_j_eff_H": res.l_j_eff,
        "alpha_a": res.jpa.alpha_a,
        "p_sq": res.jpa.p_sq,
        "p_kappa": res.jpa.p_kappa,
        "kbar": res.jpa.kbar,
    }


def _load_params(path: str):
    doc = fio.read_json(path)
    fio.validate(doc, fio.PARAMS_SCHEMA, "parameters")
    return doc, fio.jpa_from_dict(doc["jpa"]), fio.fp_from_dict(doc["fp"])


def cmd_simulate(args) -> Dict[str, Any]:
    doc, jpa, fp = _load_params(args.input)
    if args.grid is not None:
        f = fio.parse_grid(args.grid)
    elif "grid" in doc:
        g = doc["grid"]
        f = np.linspace(g["start_Hz"], g["stop_Hz"], g["n"])
    else:
        raise ValidationError("no detuning grid: pass --grid or include 'grid' in the parameters")
    check_below_threshold(fio.hz_to_rad(f), jpa, fp)
    spec = sweep(fio.hz_to_rad(f), jpa, fp, kind=KIND_MAP[args.kind], jobs=_jobs(args), center=jpa.omega_a)
    fio.write_spectrum_csv(args.output, spec)
    g = spec.gain_linear()
    return {"points": int(f.size), "kind": spec.kind, "max_gain_dB": float(to_db(np.max(g)))}


def _fit_problem(path: str, args) -> FitProblem:
    doc = fio.read_json(path)
    fio.validate(doc, fio.FIT_MANIFEST_SCHEMA, "fit manifest")
    base = os.path.dirname(os.path.abspath(path))
    datasets = []
    initial: Dict[str, float] = {}
    for i, entry in enumerate(doc["datasets"]):
        p = entry["path"] if os.path.isabs(entry["path"]) else os.path.join(base, entry["path"])
        spec = fio.read_spectrum_csv(p)
        datasets.append(Dataset(spec, entry.get("pump_power_W")))
        for key in ("kappa", "kappa0"):
            if f"{key}_Hz" in entry:
                initial[f"{key}[{i}]"] = fio.hz_to_rad(entry[f"{key}_Hz"])
    for key, val in doc.get("initial", {}).items():
        name = fio.fit_key_from_disk(key)
        initial[name] = fio.fit_value_to_internal(name, val)
    fixed = {}
    for key, val in doc.get("fixed", {}).items():
        name = fio.fit_key_from_disk(key)
        fixed[name] = fio.fit_value_to_internal(name, val)
    n_starts = args.starts if args.starts is not None else doc.get("n_phase_starts", 8)
    return FitProblem(
        datasets=datasets,
        kind=doc["kind"],
        initial=initial,
        fixed=fixed,
        n_phase_starts=n_starts,
        n_random_starts=doc.get("n_random_starts", 0),
        seed=args.seed,
        jobs=_jobs(args),
    )


def cmd_fit(args) -> Dict[str, Any]:
    problem = _fit_problem(args.input, args)
    res = fit(problem)
    names = res.param_names
    scale = np.array([fio.fit_value_to_disk(n, 1.0) for n in names])
    doc = {
        "kind": problem.kind,
        "params": {fio.fit_key_to_disk(k): fio.fit_value_to_disk(k, v) for k, v in res.params.items()},
        "stderr": {fio.fit_key_to_disk(k): fio.fit_value_to_disk(k, v) for k, v in res.stderr().items()},
        "param_names": [fio.fit_key_to_disk(n) for n in names],
        "covariance": (res.covariance * np.outer(scale, scale)).tolist(),
        "covariance_reliable": res.covariance_reliable,
        "residual_norm": res.residual_norm,
        "objective": res.objective,
        "n_iterations": res.n_iterations,
        "converged": res.converged,
        "per_dataset_residuals": res.per_dataset_residuals,
        "start_index": res.start_index,
        "rejected": res.rejected,
    }
    fio.write_json(args.output, doc)
    stem = os.path.splitext(args.output)[0]
    kept = [i for i in range(len(problem.datasets)) if i not in res.rejected]
    kept_problem = problem
    if res.rejected:
        kept_problem = FitProblem(
            [problem.datasets[i] for i in kept], problem.kind, n_phase_starts=problem.n_phase_starts
        )
    for i, spec in enumerate(model_spectra(kept_problem, res.params)):
        fio.write_spectrum_csv(f"{stem}_model_{i}.csv", spec)
    table = {"converged": res.converged, "residual_norm": res.residual_norm}
    table.update(doc["params"])
    return table


def cmd_noise(args) -> Dict[str, Any]:
    doc = fio.read_json(args.input)
    if isinstance(doc, dict) and "sweep" in doc:
        fio.validate(doc, fio.NOISE_SWEEP_SCHEMA, "noise sweep")
        sw = doc["sweep"]
        jpa, fp = fio.jpa_from_dict(sw["jpa"]), fio.fp_from_dict(sw["fp"])
        amps = fio.hz_to_rad(np.asarray(sw["omega_pump_amp_Hz"], dtype=float))
        gain_db, n = noise_vs_pump(fio.hz_to_rad(sw.get("detuning_Hz", 0.0)), jpa, fp, amps)
        fio.write_text_atomic(args.output, fio.table_csv(["gain_dB", "n_fpj"], list(zip(gain_db, n))))
        return {"points": int(len(amps)), "min_n_fpj": float(np.min(n))}
    cal = fio.calibration_from_dict(doc)
    p, n = added_noise_from_snr(cal)
    out = {"p_fpj_n_W": p, "n_fpj": n}
    fio.write_json(args.output, out)
    return out


def _metrics_from_params(path: str, args) -> Dict[str, Any]:
    doc, jpa, fp = _load_params(path)
    if "grid" in doc:
        g = doc["grid"]
        f = np.linspace(g["start_Hz"], g["stop_Hz"], g["n"])
        d = fio.hz_to_rad(f)
    else:
        span = max(2.0 * fp.fsr, 4.0 * jpa.kappa_tot)
        d = np.linspace(-span, span, 4001)
    spec = sweep(d, jpa, fp, kind="net_gain_linear", jobs=_jobs(args))
    m = gain_metrics(spec, jpa.kappa_tot)
    out = {
        "max_gain_linear": m.max_gain_linear,
        "max_gain_dB": float(to_db(m.max_gain_linear)),
        "bandwidth_3db_Hz": fio.rad_to_hz(m.bandwidth_3db),
        "gb_exponent": m.gb_exponent,
        "multi_lobe": m.multi_lobe,
        "visibility": ripple_visibility(jpa, fp),
    }
    if jpa.kerr != 0 and m.max_gain_linear > 1:
        out["saturation_flux_per_s"] = saturation_input_flux(jpa.kappa, m.max_gain_linear, jpa.kerr)
    return out


def cmd_metrics(args) -> Dict[str, Any]:
    if args.input.lower().endswith(".csv"):
        spec = fio.read_spectrum_csv(args.input)
        kt = None if args.kappa_tot_Hz is None else fio.hz_to_rad(args.kappa_tot_Hz)
        m = gain_metrics(spec, kt)
        out = {
            "max_gain_linear": m.max_gain_linear,
            "max_gain_dB": float(to_db(m.max_gain_linear)),
            "bandwidth_3db_Hz": fio.rad_to_hz(m.bandwidth_3db),
            "gb_exponent": m.gb_exponent,
            "visibility": m.visibility,
            "multi_lobe": m.multi_lobe,
        }
    else:
        out = _metrics_from_params(args.input, args)
    fio.write_json(args.output, out)
    return out


def cmd_visibility_map(args) -> Dict[str, Any]:
    from fpjpa.circuit_model import JpaParams
    from fpjpa.metrics import visibility_map

    doc = fio.read_json(args.input)
    fio.validate(doc, fio.VISIBILITY_BASE_SCHEMA, "visibility base")
    kappa = fio.hz_to_rad(doc["kappa_Hz"])
    kappa0 = fio.hz_to_rad(doc.get("kappa0_Hz", 10e6))
    eta0 = doc.get("eta0", 0.9)
    if "omega_pump_amp_Hz" in doc:
        om = fio.hz_to_rad(doc["omega_pump_amp_Hz"])
    else:
        gain = 10.0 ** (doc.get("baseline_gain_dB", 20.0) / 10.0)
        om = pump_for_gain(JpaParams(0.0, kappa, kappa0), gain, eta0=1.0)
    base = VisibilityMapBase(kappa, kappa0, om, eta0, doc.get("phi0_rad", 0.0), doc.get("n_points", 2001))
    rows = fio.parse_grid(args.eta_grid, log_ok=True)
    cols = fio.parse_grid(args.fsr_grid, log_ok=True)
    field, b_eff = visibility_map(rows, cols, base, jobs=_jobs(args))
    table = [(x, y, field[i, j]) for i, x in enumerate(rows) for j, y in enumerate(cols)]
    fio.write_text_atomic(args.output, fio.table_csv(["one_minus_eta", "fsr_over_beff", "visibility"], table))
    return {"rows": int(rows.size), "cols": int(cols.size), "b_eff_Hz": fio.rad_to_hz(b_eff),
            "max_visibility": float(np.max(field))}


def cmd_oracle(args) -> Dict[str, Any]:
    from fpjpa import oracle
    from fpjpa.interference import gain_spectrum

    if args.check == "squid":
        from fpjpa.circuit_model import charge_flux_coefficients, solve_circulating_flux

        phi = float(args.phi)
        theta = oracle.squid_numeric_charge_flux(phi, args.beta, args.phi_c)
        phi_eff = solve_circulating_flux(args.phi_c, args.beta).phi_ex_eff
        e = charge_flux_coefficients(args.beta, phi_eff)
        cubic = e.c1 * phi + e.c3 * phi**3 / 6.0
        out = {"theta": theta, "cubic": cubic, "deviation": theta - cubic}
    else:
        doc, jpa, fp = _load_params(args.input)
        g = doc.get("grid", {"start_Hz": -fio.rad_to_hz(2 * fp.fsr), "stop_Hz": fio.rad_to_hz(2 * fp.fsr), "n": 201})
        d = fio.hz_to_rad(np.linspace(g["start_Hz"], g["stop_Hz"], g["n"]))
        closed = gain_spectrum(d, jpa, fp)
        if args.check == "series":
            if jpa.omega_pump_amp != 0:
                raise ValidationError("the series oracle covers the unpumped amplifier only")
            ref = oracle.truncated_series_reflection(d, jpa, fp)
        else:
            ref = oracle.signal_idler_matrix_solve(d, jpa, fp, DriveParams(jpa.omega_pump_amp))
        dev = float(np.max(np.abs(closed - ref) / np.abs(ref)))
        out = {"max_relative_deviation": dev, "points": int(d.size)}
    if args.output:
        fio.write_json(args.output, out)
    return out


# ----------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fpjpa",
        description="Parametric amplifier in a Fabry-Perot environment: design, spectra, fits, noise.",
    )
    parser.add_argument("--jobs", type=int, default=None, help="worker threads (default: $FPJPA_JOBS or 1)")
    parser.add_argument("--seed", type=int, default=None, help="seed for stochastic components")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def add(name, func, help_text, **kw):
        p = sub.add_parser(name, help=help_text, **kw)
        p.set_defaults(func=func)
        p.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help=argparse.SUPPRESS)
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help=argparse.SUPPRESS)
        return p

    p = add("design", cmd_design, "circuit values from design targets")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)

    p = add("simulate", cmd_simulate, "evaluate a spectrum on a grid")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--grid", help="detuning grid start_Hz,stop_Hz,n")
    p.add_argument("--kind", choices=sorted(KIND_MAP), default="reflection")

    p = add("fit", cmd_fit, "fit reflection or multi-power gain data")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--starts", type=int, default=None, help="points of the phase start lattice")

    p = add("noise", cmd_noise, "added noise from calibration data or a pump sweep")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)

    p = add("metrics", cmd_metrics, "figures of merit of a gain spectrum")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--kappa-tot-Hz", dest="kappa_tot_Hz", type=float, default=None)

    p = add("visibility-map", cmd_visibility_map, "ripple visibility over reflectivity and FSR")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--eta-grid", required=True, help="1-eta grid a,b,n[,log]")
    p.add_argument("--fsr-grid", required=True, help="FSR/B_eff grid a,b,n[,log]")

    p = sub.add_parser("oracle")
    p.set_defaults(func=cmd_oracle)
    p.add_argument("--check", choices=["series", "matrix", "squid"], required=True)
    p.add_argument("-i", "--input")
    p.add_argument("-o", "--output")
    p.add_argument("--beta", type=float, default=0.125)
    p.add_argument("--phi-c", dest="phi_c", type=float, default=math.pi / 3)
    p.add_argument("--phi", type=float, default=0.1)
    # keep the debugging subcommand out of the help listing
    sub._choices_actions = [a for a in sub._choices_actions if a.dest != "oracle"]
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    if args.command == "oracle" and args.check != "squid" and not args.input:
        print("error: oracle --check series|matrix needs -i", file=sys.stderr)
        return EXIT_USAGE
    if not hasattr(args, "jobs"):
        args.jobs = None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            table = args.func(args)
    except (ValidationError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FpjpaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    _summary(args.command, getattr(args, "output", None) or "", table)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
