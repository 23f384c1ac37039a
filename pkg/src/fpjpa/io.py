"""Disk formats and the unit boundary.

Files carry SI units with the unit in the key name (``kappa_Hz``,
``l_loop_H``, ``phi0_rad``). Frequencies and rates are stored as ordinary
frequencies in Hz and converted to angular rad/s on read; nothing past
this module sees Hz. JSON documents are validated against schemas that
reject unknown keys. CSV floats use the shortest round-trip decimal.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import tempfile
from typing import Any, Dict, List, Optional, Sequence

import jsonschema
import numpy as np

from fpjpa.circuit_model import BiasState, CircuitParams, JpaParams
from fpjpa.design import DesignResult, DesignTargets
from fpjpa.errors import ValidationError
from fpjpa.interference import COMPLEX_KINDS, FabryPerotParams, Spectrum
from fpjpa.noise import CalibrationInputs

TWO_PI = 2.0 * math.pi


def hz_to_rad(f):
    """Frequency in Hz to angular frequency in rad/s."""
    return np.multiply(f, TWO_PI) if np.ndim(f) else float(f) * TWO_PI


def rad_to_hz(w):
    """Angular frequency in rad/s to frequency in Hz."""
    return np.divide(w, TWO_PI) if np.ndim(w) else float(w) / TWO_PI


def fmt(x: float) -> str:
    """Shortest decimal that round-trips to the same double."""
    return repr(float(x))


# ----------------------------------------------------------------------
# atomic output


def write_text_atomic(path: str, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_json(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_json(path: str, doc: Any) -> None:
    write_text_atomic(path, dumps_json(doc))


def read_json(path: str) -> Any:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc


# ----------------------------------------------------------------------
# schemas

_NUM = {"type": "number"}
_POS_INT = {"type": "integer", "minimum": 1}


def _obj(props: Dict[str, Any], required: Sequence[str]) -> Dict[str, Any]:
    return {
        "type": "object",
        "properties": props,
        "required": list(required),
        "additionalProperties": False,
    }


CIRCUIT_SCHEMA = _obj(
    {
        "n_squids": _POS_INT,
        "l_loop_H": _NUM,
        "l_josephson_H": _NUM,
        "l_geometric_H": _NUM,
        "c_internal_F": _NUM,
        "c_coupling_F": _NUM,
        "z_waveguide_Ohm": _NUM,
        "mutual_H": _NUM,
        "l_pump_shunt_H": _NUM,
    },
    ["n_squids", "l_loop_H", "l_josephson_H", "l_geometric_H", "c_internal_F", "c_coupling_F"],
)

_JPA_RATIOS = ("alpha_a", "p_j", "p_sq", "p_kappa", "kbar", "omegabar_p", "kappabar")
_JPA_RATES = ("omega_a", "kappa", "kappa0", "kerr", "omega_pump_amp")

JPA_SCHEMA = _obj(
    {**{f"{k}_Hz": _NUM for k in _JPA_RATES}, **{k: {"type": ["number", "null"]} for k in _JPA_RATIOS}},
    ["kappa_Hz"],
)

FP_SCHEMA = _obj(
    {"eta": _NUM, "eta0": _NUM, "fsr_Hz": _NUM, "phi0_rad": _NUM, "phi_ref_rad": _NUM},
    ["eta", "eta0", "fsr_Hz"],
)

TARGETS_SCHEMA = _obj(
    {
        "omega_a_target_Hz": _NUM,
        "kappabar_target": _NUM,
        "p_j_target": _NUM,
        "n_squids": _POS_INT,
        "l_loop_fixed_H": _NUM,
        "l_geometric_fixed_H": _NUM,
        "bias_phi_eff_rad": _NUM,
        "z_waveguide_Ohm": _NUM,
    },
    ["omega_a_target_Hz", "kappabar_target", "p_j_target", "n_squids", "l_loop_fixed_H",
     "l_geometric_fixed_H", "bias_phi_eff_rad"],
)

GRID_SCHEMA = _obj({"start_Hz": _NUM, "stop_Hz": _NUM, "n": {"type": "integer", "minimum": 2}},
                   ["start_Hz", "stop_Hz", "n"])

PARAMS_SCHEMA = _obj(
    {"jpa": JPA_SCHEMA, "fp": FP_SCHEMA, "grid": GRID_SCHEMA,
     "circuit": {"type": "object"}, "bias": {"type": "object"}, "l_j_eff_H": _NUM},
    ["jpa", "fp"],
)

CALIBRATION_SCHEMA = _obj(
    {
        "p_on_s_W": _NUM,
        "p_on_n_W": _NUM,
        "p_off_s_W": _NUM,
        "p_off_n_W": _NUM,
        "p_calib_s_W": _NUM,
        "eta0": _NUM,
        "s11_off_sq": _NUM,
        "p_vac_n_W": _NUM,
        "omega_s_Hz": _NUM,
        "b_if_Hz": _NUM,
    },
    ["p_on_s_W", "p_on_n_W", "p_off_s_W", "p_off_n_W", "p_calib_s_W", "eta0", "s11_off_sq",
     "omega_s_Hz", "b_if_Hz"],
)

NOISE_SWEEP_SCHEMA = _obj(
    {
        "sweep": _obj(
            {"jpa": JPA_SCHEMA, "fp": FP_SCHEMA, "detuning_Hz": _NUM,
             "omega_pump_amp_Hz": {"type": "array", "items": _NUM, "minItems": 1}},
            ["jpa", "fp", "omega_pump_amp_Hz"],
        )
    },
    ["sweep"],
)

# fit parameter names on disk
FIT_KEYS = {
    "omega_a": "omega_a_Hz",
    "kappa": "kappa_Hz",
    "kappa0": "kappa0_Hz",
    "eta": "eta",
    "eta0": "eta0",
    "fsr": "fsr_Hz",
    "phi0": "phi0_rad",
    "phi_ref": "phi_ref_rad",
    "c_p": "c_p_Hz_per_sqrtW",
}
_FIT_RATE = {"omega_a", "kappa", "kappa0", "fsr", "c_p"}

_FIT_VALUES = _obj({v: _NUM for v in FIT_KEYS.values()}, [])

FIT_MANIFEST_SCHEMA = _obj(
    {
        "kind": {"enum": ["reflection_complex", "gain_power"]},
        "datasets": {
            "type": "array",
            "minItems": 1,
            "items": _obj(
                {"path": {"type": "string"}, "pump_power_W": _NUM, "kappa_Hz": _NUM, "kappa0_Hz": _NUM},
                ["path"],
            ),
        },
        "initial": _FIT_VALUES,
        "fixed": _FIT_VALUES,
        "n_phase_starts": _POS_INT,
        "n_random_starts": {"type": "integer", "minimum": 0},
    },
    ["kind", "datasets"],
)

VISIBILITY_BASE_SCHEMA = _obj(
    {
        "kappa_Hz": _NUM,
        "kappa0_Hz": _NUM,
        "eta0": _NUM,
        "phi0_rad": _NUM,
        "baseline_gain_dB": _NUM,
        "omega_pump_amp_Hz": _NUM,
        "n_points": {"type": "integer", "minimum": 3},
    },
    ["kappa_Hz"],
)


def validate(doc: Any, schema: Dict[str, Any], what: str) -> None:
    """Validate ``doc`` and raise :class:`ValidationError` naming the first problem."""
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValidationError(f"{what}: {where}: {exc.message}") from None


# ----------------------------------------------------------------------
# typed conversions


def circuit_from_dict(doc: Dict[str, Any]) -> CircuitParams:
    validate(doc, CIRCUIT_SCHEMA, "circuit")
    return CircuitParams(
        n_squids=int(doc["n_squids"]),
        l_loop=doc["l_loop_H"],
        l_josephson=doc["l_josephson_H"],
        l_geometric=doc["l_geometric_H"],
        c_internal=doc["c_internal_F"],
        c_coupling=doc["c_coupling_F"],
        z_waveguide=doc.get("z_waveguide_Ohm", 50.0),
        mutual=doc.get("mutual_H", 0.0),
        l_pump_shunt=doc.get("l_pump_shunt_H", 0.0),
    )


def circuit_to_dict(c: CircuitParams) -> Dict[str, Any]:
    return {
        "n_squids": int(c.n_squids),
        "l_loop_H": c.l_loop,
        "l_josephson_H": c.l_josephson,
        "l_geometric_H": c.l_geometric,
        "c_internal_F": c.c_internal,
        "c_coupling_F": c.c_coupling,
        "z_waveguide_Ohm": c.z_waveguide,
        "mutual_H": c.mutual,
        "l_pump_shunt_H": c.l_pump_shunt,
    }


def jpa_from_dict(doc: Dict[str, Any]) -> JpaParams:
    validate(doc, JPA_SCHEMA, "jpa")
    kw = {k: hz_to_rad(doc[f"{k}_Hz"]) for k in _JPA_RATES if f"{k}_Hz" in doc}
    kw.setdefault("omega_a", 0.0)
    kw.update({k: doc[k] for k in _JPA_RATIOS if k in doc})
    return JpaParams(**kw)


def jpa_to_dict(j: JpaParams) -> Dict[str, Any]:
    out: Dict[str, Any] = {f"{k}_Hz": rad_to_hz(getattr(j, k)) for k in _JPA_RATES}
    for k in _JPA_RATIOS:
        v = getattr(j, k)
        if v is not None:
            out[k] = v
    return out


def fp_from_dict(doc: Dict[str, Any]) -> FabryPerotParams:
    validate(doc, FP_SCHEMA, "fp")
    return FabryPerotParams(
        eta=doc["eta"],
        eta0=doc["eta0"],
        fsr=hz_to_rad(doc["fsr_Hz"]),
        phi0=doc.get("phi0_rad", 0.0),
        phi_ref=doc.get("phi_ref_rad", 0.0),
    )


def fp_to_dict(fp: FabryPerotParams) -> Dict[str, Any]:
    return {
        "eta": fp.eta,
        "eta0": fp.eta0,
        "fsr_Hz": rad_to_hz(fp.fsr),
        "phi0_rad": fp.phi0,
        "phi_ref_rad": fp.phi_ref,
    }


def targets_from_dict(doc: Dict[str, Any]) -> DesignTargets:
    validate(doc, TARGETS_SCHEMA, "design targets")
    return DesignTargets(
        omega_a_target=hz_to_rad(doc["omega_a_target_Hz"]),
        kappabar_target=doc["kappabar_target"],
        p_j_target=doc["p_j_target"],
        n_squids=int(doc["n_squids"]),
        l_loop_fixed=doc["l_loop_fixed_H"],
        l_geometric_fixed=doc["l_geometric_fixed_H"],
        bias_phi_eff=doc["bias_phi_eff_rad"],
        z_waveguide=doc.get("z_waveguide_Ohm", 50.0),
    )


def bias_to_dict(b: BiasState) -> Dict[str, Any]:
    return {"phi_ex_rad": b.phi_ex, "phi_ex_eff_rad": b.phi_ex_eff, "branch": int(b.branch)}


def design_to_dict(res: DesignResult) -> Dict[str, Any]:
    return {
        "circuit": circuit_to_dict(res.circuit),
        "bias": bias_to_dict(res.bias),
        "jpa": jpa_to_dict(res.jpa),
        "l_j_eff_H": res.l_j_eff,
    }


def calibration_from_dict(doc: Dict[str, Any]) -> CalibrationInputs:
    validate(doc, CALIBRATION_SCHEMA, "calibration")
    from fpjpa.noise import vacuum_noise_power

    omega_s = hz_to_rad(doc["omega_s_Hz"])
    b_if = doc["b_if_Hz"]
    p_vac = doc.get("p_vac_n_W")
    if p_vac is None:
        p_vac = vacuum_noise_power(omega_s, b_if)
    return CalibrationInputs(
        p_on_s=doc["p_on_s_W"],
        p_on_n=doc["p_on_n_W"],
        p_off_s=doc["p_off_s_W"],
        p_off_n=doc["p_off_n_W"],
        p_calib_s=doc["p_calib_s_W"],
        eta0=doc["eta0"],
        s11_off_sq=doc["s11_off_sq"],
        p_vac_n=p_vac,
        omega_s=omega_s,
        b_if=b_if,
    )


def fit_value_to_internal(name: str, value: float) -> float:
    base = name.split("[")[0]
    return hz_to_rad(value) if base in _FIT_RATE else float(value)


def fit_value_to_disk(name: str, value: float) -> float:
    base = name.split("[")[0]
    return rad_to_hz(value) if base in _FIT_RATE else float(value)


def fit_key_to_disk(name: str) -> str:
    if "[" in name:
        base, rest = name.split("[", 1)
        return f"{FIT_KEYS[base]}[{rest}"
    return FIT_KEYS[name]


def fit_key_from_disk(key: str) -> str:
    inverse = {v: k for k, v in FIT_KEYS.items()}
    if "[" in key:
        base, rest = key.split("[", 1)
        if base in inverse:
            return f"{inverse[base]}[{rest}"
    if key not in inverse:
        raise ValidationError(f"unknown fit parameter {key!r}")
    return inverse[key]


# ----------------------------------------------------------------------
# CSV


def spectrum_to_csv(spec: Spectrum) -> str:
    """CSV text of a spectrum; detunings in Hz."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    f = rad_to_hz(spec.detunings)
    if spec.kind in COMPLEX_KINDS:
        w.writerow(["detuning_Hz", "re", "im"])
        for x, v in zip(f, spec.values):
            w.writerow([fmt(x), fmt(v.real), fmt(v.imag)])
    else:
        w.writerow(["detuning_Hz", "gain_dB"])
        vals = spec.values if spec.kind == "net_gain_dB" else 10.0 * np.log10(spec.values)
        for x, v in zip(f, vals):
            w.writerow([fmt(x), fmt(v)])
    return buf.getvalue()


def write_spectrum_csv(path: str, spec: Spectrum) -> None:
    write_text_atomic(path, spectrum_to_csv(spec))


def read_spectrum_csv(path: str, complex_kind: str = "normalized_s11") -> Spectrum:
    """Read a spectrum CSV; the header decides between complex and gain data."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    try:
        data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"{path}: non-numeric entry ({exc})") from None
    if header == ["detuning_Hz", "re", "im"]:
        if data.shape[1:] != (3,):
            raise ValidationError(f"{path}: expected three columns")
        return Spectrum(hz_to_rad(data[:, 0]), data[:, 1] + 1j * data[:, 2], complex_kind)
    if header == ["detuning_Hz", "gain_dB"]:
        if data.shape[1:] != (2,):
            raise ValidationError(f"{path}: expected two columns")
        return Spectrum(hz_to_rad(data[:, 0]), data[:, 1], "net_gain_dB")
    raise ValidationError(f"{path}: unrecognized header {header}")


def table_csv(header: Sequence[str], rows: List[Sequence[float]]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(x) for x in r])
    return buf.getvalue()


def parse_grid(text: str, log_ok: bool = False):
    """Parse ``start,stop,n`` (optionally ``,log``) into numbers."""
    parts = [p.strip() for p in text.split(",")]
    spacing = "lin"
    if log_ok and len(parts) == 4 and parts[3] in ("lin", "log"):
        spacing = parts.pop()
    if len(parts) != 3:
        raise ValidationError(f"grid must be 'start,stop,n', got {text!r}")
    try:
        start, stop, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ValidationError(f"grid must be 'start,stop,n', got {text!r}") from None
    if n < 1:
        raise ValidationError("grid needs at least one point")
    if spacing == "log":
        if start <= 0 or stop <= 0:
            raise ValidationError("log grid bounds must be positive")
        return np.geomspace(start, stop, n)
    return np.linspace(start, stop, n)


def optional(doc: Dict[str, Any], key: str, default: Optional[float] = None):
    return doc[key] if key in doc else default
