import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from fpjpa import io as fio
from fpjpa.circuit_model import JpaParams
from fpjpa.cli import main
from fpjpa.errors import ValidationError
from fpjpa.interference import FabryPerotParams, Spectrum
from fpjpa.noise import calibration_forward
from fpjpa.constants import HBAR

MHZ = 2 * math.pi * 1e6

TARGETS = {
    "omega_a_target_Hz": 9.5e9,
    "kappabar_target": 0.04,
    "p_j_target": 0.8,
    "n_squids": 5,
    "l_loop_fixed_H": 20e-12,
    "l_geometric_fixed_H": 80e-12,
    "bias_phi_eff_rad": math.pi / 3,
    "z_waveguide_Ohm": 50.0,
}

PARAMS = {
    "jpa": {"omega_a_Hz": 0.0, "kappa_Hz": 280e6, "kappa0_Hz": 22e6},
    "fp": {"eta": 0.996, "eta0": 0.803, "fsr_Hz": 140e6, "phi0_rad": -1.05, "phi_ref_rad": -0.048},
}


def write(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def run(argv, capsys=None):
    code = main(argv)
    out = capsys.readouterr().out if capsys is not None else ""
    return code, out


def test_unit_conversion_round_trip():
    assert fio.hz_to_rad(1.0) == pytest.approx(2 * math.pi)
    f = np.array([1e6, 2.5e9])
    assert np.allclose(fio.rad_to_hz(fio.hz_to_rad(f)), f, rtol=1e-15)
    assert fio.fit_value_to_internal("phi0", 0.3) == 0.3
    assert fio.fit_value_to_disk("kappa", 2 * math.pi) == pytest.approx(1.0)
    assert fio.fit_key_to_disk("kappa[2]") == "kappa_Hz[2]"
    assert fio.fit_key_from_disk("kappa_Hz[2]") == "kappa[2]"
    assert fio.fit_key_from_disk(fio.fit_key_to_disk("c_p")) == "c_p"


def test_dict_round_trips():
    jpa = fio.jpa_from_dict(PARAMS["jpa"])
    assert jpa.kappa == pytest.approx(280 * MHZ)
    assert fio.jpa_from_dict(fio.jpa_to_dict(jpa)) == jpa
    fp = fio.fp_from_dict(PARAMS["fp"])
    back = fio.fp_from_dict(fio.fp_to_dict(fp))
    assert back.fsr == pytest.approx(fp.fsr, rel=1e-15)
    assert back.phi0 == fp.phi0


def test_schemas_reject_unknown_keys():
    with pytest.raises(ValidationError, match="bogus"):
        fio.fp_from_dict({**PARAMS["fp"], "bogus": 1})
    with pytest.raises(ValidationError):
        fio.targets_from_dict({k: v for k, v in TARGETS.items() if k != "p_j_target"})
    with pytest.raises(ValidationError):
        fio.validate({"jpa": PARAMS["jpa"]}, fio.PARAMS_SCHEMA, "parameters")


def test_spectrum_csv_round_trip(tmp_path):
    d = np.linspace(-3, 3, 7) * MHZ
    v = np.exp(1j * np.linspace(0, 1, 7)) * 0.3
    path = str(tmp_path / "s.csv")
    fio.write_spectrum_csv(path, Spectrum(d, v, "normalized_s11"))
    back = fio.read_spectrum_csv(path)
    assert np.array_equal(back.values, v)
    assert np.allclose(back.detunings, d, rtol=1e-15)
    g = Spectrum(d, np.linspace(1, 3, 7), "net_gain_dB")
    fio.write_spectrum_csv(path, g)
    assert open(path).readline().strip() == "detuning_Hz,gain_dB"
    assert np.array_equal(fio.read_spectrum_csv(path).values, g.values)


def test_parse_grid():
    assert np.array_equal(fio.parse_grid("-1,1,3"), [-1.0, 0.0, 1.0])
    assert fio.parse_grid("1e-3,1e-1,3,log", log_ok=True)[1] == pytest.approx(1e-2)
    for bad in ("1,2", "a,b,c", "1,2,0"):
        with pytest.raises(ValidationError):
            fio.parse_grid(bad)


def test_cli_design(tmp_path, capsys):
    src = write(tmp_path, "targets.json", TARGETS)
    out = str(tmp_path / "circuit.json")
    code, text = run(["design", "-i", src, "-o", out], capsys)
    assert code == 0
    summary = json.loads(text.splitlines()[0])
    assert summary["status"] == "ok"
    assert summary["c_internal_F"] == pytest.approx(470e-15, rel=0.05)
    doc = json.load(open(out))
    assert "circuit" in doc


def test_cli_design_infeasible(tmp_path, capsys):
    src = write(tmp_path, "targets.json", {**TARGETS, "p_j_target": 1.5})
    code, _ = run(["design", "-i", src, "-o", str(tmp_path / "x.json")], capsys)
    assert code == 3


def test_cli_simulate_reflection(tmp_path, capsys):
    lossless = {"jpa": {"kappa_Hz": 100e6}, "fp": {"eta": 1.0, "eta0": 1.0, "fsr_Hz": 1e9}}
    src = write(tmp_path, "p.json", lossless)
    out = str(tmp_path / "s.csv")
    code, _ = run(["simulate", "-i", src, "--grid=-50e6,50e6,11", "--kind", "reflection", "-o", out], capsys)
    assert code == 0
    spec = fio.read_spectrum_csv(out)
    assert spec.values[5] == pytest.approx(-1.0, abs=1e-15)


def test_cli_simulate_gain_and_metrics(tmp_path, capsys):
    doc = {"jpa": {"kappa_Hz": 280e6, "kappa0_Hz": 10e6, "omega_pump_amp_Hz": 250e6},
           "fp": {"eta": 1.0, "eta0": 0.9, "fsr_Hz": 1e9}}
    src = write(tmp_path, "p.json", doc)
    out = str(tmp_path / "g.csv")
    assert run(["simulate", "-i", src, "--grid=-400e6,400e6,4001", "--kind", "gain", "-o", out], capsys)[0] == 0
    m_out = str(tmp_path / "m.json")
    code, _ = run(["metrics", "-i", out, "-o", m_out, "--kappa-tot-Hz", "290e6"], capsys)
    assert code == 0
    m = json.load(open(m_out))
    assert m["bandwidth_3db_Hz"] > 0
    assert 0.3 < m["gb_exponent"] < 0.7
    code, _ = run(["metrics", "-i", src, "-o", m_out], capsys)
    assert code == 0
    assert json.load(open(m_out))["visibility"] == pytest.approx(0.0, abs=1e-12)


def test_cli_simulate_errors(tmp_path, capsys):
    src = write(tmp_path, "p.json", PARAMS)
    out = str(tmp_path / "s.csv")
    assert run(["simulate", "-i", src, "-o", out], capsys)[0] == 3
    assert run(["simulate", "-i", src, "--grid=5,1,3", "-o", out], capsys)[0] == 3
    assert run(["simulate", "-i", str(tmp_path / "missing.json"), "--grid=0,1,3", "-o", out], capsys)[0] == 3
    above = {"jpa": {"kappa_Hz": 1e6, "omega_pump_amp_Hz": 5e6}, "fp": {"eta": 1.0, "eta0": 1.0, "fsr_Hz": 1e9}}
    src2 = write(tmp_path, "above.json", above)
    assert run(["simulate", "-i", src2, "--grid=-1e6,1e6,3", "-o", out], capsys)[0] == 4
    assert run(["simulate", "-i", src], capsys)[0] == 2
    assert run(["nonsense"], capsys)[0] == 2


def test_cli_noise_calibration(tmp_path, capsys):
    omega_s, b_if = 2 * math.pi * 9.5e9, 1e3
    cal = calibration_forward(100.0, 0.8 * HBAR * omega_s * b_if, 1e7, 1e-20, 1e-16, 0.9, 0.8, omega_s, b_if)
    doc = {"p_on_s_W": cal.p_on_s, "p_on_n_W": cal.p_on_n, "p_off_s_W": cal.p_off_s, "p_off_n_W": cal.p_off_n,
           "p_calib_s_W": cal.p_calib_s, "eta0": 0.9, "s11_off_sq": 0.8, "p_vac_n_W": cal.p_vac_n,
           "omega_s_Hz": 9.5e9, "b_if_Hz": b_if}
    src = write(tmp_path, "cal.json", doc)
    out = str(tmp_path / "n.json")
    assert run(["noise", "-i", src, "-o", out], capsys)[0] == 0
    assert json.load(open(out))["n_fpj"] == pytest.approx(0.8, rel=1e-9)


def test_cli_noise_sweep(tmp_path, capsys):
    doc = {"sweep": {"jpa": {"kappa_Hz": 1.0}, "fp": {"eta": 1.0, "eta0": 1.0, "fsr_Hz": 1.0},
                     "omega_pump_amp_Hz": [0.5, 0.9, 0.99]}}
    src = write(tmp_path, "sweep.json", doc)
    out = str(tmp_path / "n.csv")
    assert run(["noise", "-i", src, "-o", out], capsys)[0] == 0
    lines = open(out).read().splitlines()
    assert lines[0] == "gain_dB,n_fpj"
    assert all(float(l.split(",")[1]) == pytest.approx(0.5, abs=1e-12) for l in lines[1:])


def test_cli_visibility_map_and_jobs(tmp_path, capsys, monkeypatch):
    src = write(tmp_path, "base.json", {"kappa_Hz": 280e6, "n_points": 201})
    a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    args = ["visibility-map", "-i", src, "--eta-grid", "0,1e-2,3", "--fsr-grid", "1,30,4,log"]
    assert run(["--jobs", "1"] + args + ["-o", a], capsys)[0] == 0
    monkeypatch.setenv("FPJPA_JOBS", "4")
    assert run(args + ["-o", b], capsys)[0] == 0
    assert open(a, "rb").read() == open(b, "rb").read()
    rows = open(a).read().splitlines()
    assert rows[0] == "one_minus_eta,fsr_over_beff,visibility"
    assert len(rows) == 13
    assert all(float(r.split(",")[2]) == 0.0 for r in rows[1:5])
    monkeypatch.setenv("FPJPA_JOBS", "many")
    assert run(args + ["-o", b], capsys)[0] == 3


def test_cli_simulate_deterministic_across_jobs(tmp_path, capsys):
    src = write(tmp_path, "p.json", PARAMS)
    a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    grid = "--grid=-500e6,500e6,2001"
    assert run(["--jobs", "1", "simulate", "-i", src, grid, "-o", a], capsys)[0] == 0
    assert run(["--jobs", "4", "simulate", "-i", src, grid, "-o", b], capsys)[0] == 0
    assert open(a, "rb").read() == open(b, "rb").read()


def test_cli_fit_reflection(tmp_path, capsys):
    src = write(tmp_path, "p.json", PARAMS)
    data = str(tmp_path / "data.csv")
    assert run(["simulate", "-i", src, "--grid=-600e6,600e6,801", "--kind", "normalized", "-o", data], capsys)[0] == 0
    manifest = write(tmp_path, "fit.json", {"kind": "reflection_complex", "datasets": [{"path": "data.csv"}]})
    out = str(tmp_path / "result.json")
    code, text = run(["fit", "-i", manifest, "-o", out, "--starts", "4", "--seed", "1"], capsys)
    assert code == 0
    res = json.load(open(out))
    assert res["params"]["kappa_Hz"] == pytest.approx(280e6, rel=1e-6)
    assert res["params"]["phi0_rad"] == pytest.approx(-1.05, abs=1e-6)
    assert os.path.exists(str(tmp_path / "result_model_0.csv"))
    bad = write(tmp_path, "bad.json", {"kind": "reflection_complex", "datasets": [{"path": "data.csv"}],
                                      "initial": {"kappa": 1.0}})
    assert run(["fit", "-i", bad, "-o", out], capsys)[0] == 3


def test_cli_oracle_checks(tmp_path, capsys):
    src = write(tmp_path, "p.json", PARAMS)
    out = str(tmp_path / "o.json")
    assert run(["oracle", "--check", "series", "-i", src, "-o", out], capsys)[0] == 0
    assert json.load(open(out))["max_relative_deviation"] < 1e-9
    assert run(["oracle", "--check", "matrix", "-i", src, "-o", out], capsys)[0] == 0
    assert json.load(open(out))["max_relative_deviation"] < 1e-12
    assert run(["oracle", "--check", "squid", "-o", out], capsys)[0] == 0
    assert abs(json.load(open(out))["deviation"]) < 1e-5
    assert run(["oracle", "--check", "series"], capsys)[0] == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fpjpa", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "visibility-map" in proc.stdout
