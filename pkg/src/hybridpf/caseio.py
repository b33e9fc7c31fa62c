"""Case and solution files: JSON schema, strict validation, unit conversion.

Case files are human-diffable JSON with an explicit ``schema_version`` and a
``units`` flag.  ``"pu"`` files carry solver-ready per-unit values; ``"si"``
files carry ohms / watts / volts and are converted on load using the ``base``
block (AC impedance base is V_pg^2 / S_base with V_pg the phase-to-ground
voltage base, so per-phase powers live on the full system base).  Converter
commutation times are always seconds and R_eq tables always per-unit.

Unknown fields are rejected with a JSON-path location.  Complex numbers are
``[re, im]`` pairs; 3x3 matrices are nested lists of such pairs.  Numbers are
serialized with ``repr`` precision, so save -> load round-trips are bit-exact.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import CaseFormatError, TopologyError
from .losses import LossParams
from .network import (
    AcBranch,
    AcBus,
    AcBusKind,
    BaseQuantities,
    Converter,
    ConverterMode,
    DcBranch,
    DcBus,
    DcBusKind,
    NetworkCase,
    SequencePolicy,
    validate_topology,
)
from .residuals import StateVector, as_model

SCHEMA_VERSION = 1
SOLUTION_SCHEMA_VERSION = 1


def _err(msg, loc, path):
    raise CaseFormatError(msg, location=loc, path=str(path) if path else None)


def _check_keys(obj, required, optional, loc, path):
    if not isinstance(obj, dict):
        _err("expected an object", loc, path)
    for key in obj:
        if key not in required and key not in optional:
            _err(f"unknown field {key!r}", loc, path)
    for key in required:
        if key not in obj:
            _err(f"missing field {key!r}", loc, path)


def _num(value, loc, path):
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        _err("expected a number", loc, path)
    return float(value)


def _cx(value, loc, path) -> complex:
    if not (isinstance(value, list) and len(value) == 2):
        _err("expected a complex number as [re, im]", loc, path)
    return complex(_num(value[0], loc, path), _num(value[1], loc, path))


def _cx3x3(value, loc, path) -> np.ndarray:
    if not (isinstance(value, list) and len(value) == 3):
        _err("expected a 3x3 matrix", loc, path)
    out = np.zeros((3, 3), dtype=complex)
    for i, row in enumerate(value):
        if not (isinstance(row, list) and len(row) == 3):
            _err("expected a 3x3 matrix", f"{loc}[{i}]", path)
        for j, entry in enumerate(row):
            out[i, j] = _cx(entry, f"{loc}[{i}][{j}]", path)
    return out


def _triple(value, loc, path):
    if not (isinstance(value, list) and len(value) == 3):
        _err("expected three per-phase values [a, b, c]", loc, path)
    return tuple(_num(v, f"{loc}[{k}]", path) for k, v in enumerate(value))


class _Scale:
    """Multiplicative SI -> per-unit factors (all 1.0 for pu files)."""

    def __init__(self, units, base: BaseQuantities):
        si = units == "si"
        self.power = 1.0 / base.s_base_va if si else 1.0
        self.z_ac = 1.0 / base.z_base_ac if si else 1.0
        self.y_ac = base.z_base_ac if si else 1.0
        self.v_ac = 1.0 / base.v_base_ac_pg if si else 1.0
        self.z_dc = 1.0 / base.z_base_dc if si else 1.0
        self.v_dc = 1.0 / base.v_base_dc_v if si else 1.0


_BASE_KEYS = ("s_base_va", "v_base_ac_v", "v_base_dc_v", "f_line_hz")
_LOSS_KEYS = ("r_eq_table", "t_on_s", "t_off_s", "t_rec_s", "t_s_s", "n_ratio")


def _parse_base(obj, path) -> BaseQuantities:
    _check_keys(obj, (), _BASE_KEYS, "base", path)
    defaults = BaseQuantities()
    return BaseQuantities(
        s_base_va=_num(obj.get("s_base_va", defaults.s_base_va), "base.s_base_va", path),
        v_base_ac_v=_num(obj.get("v_base_ac_v", defaults.v_base_ac_v), "base.v_base_ac_v", path),
        v_base_dc_v=_num(obj.get("v_base_dc_v", defaults.v_base_dc_v), "base.v_base_dc_v", path),
        f_line_hz=_num(obj.get("f_line_hz", defaults.f_line_hz), "base.f_line_hz", path),
    )


def _parse_ac_bus(obj, loc, sc, path) -> AcBus:
    _check_keys(obj, ("id", "kind"), ("p", "q", "v", "v_mag", "v_angle_rad"), loc, path)
    kind = obj["kind"]
    if kind not in ("slack", "pq", "pv", "converter"):
        _err(f"unknown AC bus kind {kind!r}", f"{loc}.kind", path)
    bus_id = obj["id"]
    try:
        if kind == "slack":
            return AcBus(bus_id, AcBusKind.SLACK,
                         v_mag=_num(obj["v_mag"], f"{loc}.v_mag", path) * sc.v_ac,
                         v_angle=_num(obj.get("v_angle_rad", 0.0), f"{loc}.v_angle_rad", path))
        if kind == "pq":
            p = tuple(v * sc.power for v in _triple(obj["p"], f"{loc}.p", path))
            q = tuple(v * sc.power for v in _triple(obj["q"], f"{loc}.q", path))
            return AcBus(bus_id, AcBusKind.PQ, p_set=p, q_set=q)
        if kind == "pv":
            p = tuple(v * sc.power for v in _triple(obj["p"], f"{loc}.p", path))
            v = tuple(v * sc.v_ac for v in _triple(obj["v"], f"{loc}.v", path))
            return AcBus(bus_id, AcBusKind.PV, p_set=p, v_set=v)
        return AcBus(bus_id, AcBusKind.CONVERTER)
    except KeyError as exc:
        _err(f"missing field {exc.args[0]!r} for kind {kind!r}", loc, path)


def _parse_dc_bus(obj, loc, sc, path) -> DcBus:
    _check_keys(obj, ("id", "kind"), ("p", "e"), loc, path)
    kind = obj["kind"]
    if kind not in ("p", "v", "converter"):
        _err(f"unknown DC bus kind {kind!r}", f"{loc}.kind", path)
    try:
        if kind == "p":
            return DcBus(obj["id"], DcBusKind.P,
                         p_set=_num(obj["p"], f"{loc}.p", path) * sc.power)
        if kind == "v":
            return DcBus(obj["id"], DcBusKind.V,
                         e_set=_num(obj["e"], f"{loc}.e", path) * sc.v_dc)
        return DcBus(obj["id"], DcBusKind.CONVERTER)
    except KeyError as exc:
        _err(f"missing field {exc.args[0]!r} for kind {kind!r}", loc, path)


def _parse_ac_branch(obj, loc, sc, path) -> AcBranch:
    _check_keys(obj, ("from", "to"),
                ("z_series", "z_self", "z_mutual", "y_shunt", "y_shunt_self"), loc, path)
    if ("z_series" in obj) == ("z_self" in obj):
        _err("exactly one of z_series or z_self is required", loc, path)
    if "z_series" in obj:
        z = _cx3x3(obj["z_series"], f"{loc}.z_series", path) * sc.z_ac
        if "z_mutual" in obj:
            _err("z_mutual is only valid together with z_self", loc, path)
    else:
        z_self = _cx(obj["z_self"], f"{loc}.z_self", path) * sc.z_ac
        z_mut = (_cx(obj["z_mutual"], f"{loc}.z_mutual", path) * sc.z_ac
                 if "z_mutual" in obj else 0j)
        z = np.full((3, 3), z_mut, dtype=complex)
        np.fill_diagonal(z, z_self)
    if "y_shunt" in obj and "y_shunt_self" in obj:
        _err("give either y_shunt or y_shunt_self, not both", loc, path)
    if "y_shunt" in obj:
        y = _cx3x3(obj["y_shunt"], f"{loc}.y_shunt", path) * sc.y_ac
    elif "y_shunt_self" in obj:
        y = np.eye(3, dtype=complex) * _cx(obj["y_shunt_self"], f"{loc}.y_shunt_self", path) * sc.y_ac
    else:
        y = np.zeros((3, 3), dtype=complex)
    return AcBranch(obj["from"], obj["to"], z_series=z, y_shunt=y)


def _parse_loss(obj, loc, path) -> LossParams:
    _check_keys(obj, (), _LOSS_KEYS, loc, path)
    table = obj.get("r_eq_table", [[0.0, 0.0]])
    if not isinstance(table, list) or not table:
        _err("r_eq_table must be a non-empty list of [current, ohm_pu] pairs", loc, path)
    pts = []
    for k, pair in enumerate(table):
        if not (isinstance(pair, list) and len(pair) == 2):
            _err("r_eq_table entries are [current, ohm_pu] pairs",
                 f"{loc}.r_eq_table[{k}]", path)
        pts.append((_num(pair[0], f"{loc}.r_eq_table[{k}]", path),
                    _num(pair[1], f"{loc}.r_eq_table[{k}]", path)))
    return LossParams(
        r_eq_table=tuple(pts),
        t_on=_num(obj.get("t_on_s", 0.0), f"{loc}.t_on_s", path),
        t_off=_num(obj.get("t_off_s", 0.0), f"{loc}.t_off_s", path),
        t_rec=_num(obj.get("t_rec_s", 0.0), f"{loc}.t_rec_s", path),
        t_s=_num(obj.get("t_s_s", 1.0), f"{loc}.t_s_s", path),
        n_ratio=_num(obj.get("n_ratio", 2.0), f"{loc}.n_ratio", path),
    )


def _parse_converter(obj, loc, sc, path) -> Converter:
    _check_keys(
        obj, ("id", "ac_bus", "dc_bus", "mode"),
        ("sequence_policy", "filter_z", "loss",
         "e_dc", "q_pos", "p_pos", "p_neg", "q_neg", "v_mag"),
        loc, path,
    )
    mode = obj["mode"]
    if mode not in ("edc_qac", "pac_qac", "pac_vac"):
        _err(f"unknown converter mode {mode!r}", f"{loc}.mode", path)
    policy = obj.get("sequence_policy", "positive_only")
    if policy not in ("positive_only", "with_negative"):
        _err(f"unknown sequence_policy {policy!r}", f"{loc}.sequence_policy", path)

    def opt(key, scale):
        return (_num(obj[key], f"{loc}.{key}", path) * scale) if key in obj else None

    return Converter(
        obj["id"], obj["ac_bus"], obj["dc_bus"], ConverterMode(mode),
        sequence_policy=SequencePolicy(policy),
        loss=_parse_loss(obj.get("loss", {}), f"{loc}.loss", path),
        filter_z=(_cx(obj["filter_z"], f"{loc}.filter_z", path) * sc.z_ac
                  if "filter_z" in obj else 0j),
        e_dc_set=opt("e_dc", sc.v_dc),
        q_pos_set=opt("q_pos", sc.power),
        p_pos_set=opt("p_pos", sc.power),
        p_neg_set=opt("p_neg", sc.power),
        q_neg_set=opt("q_neg", sc.power),
        v_mag_set=opt("v_mag", sc.v_ac),
    )


def loads_case(text: str, path=None) -> NetworkCase:
    """Parse and validate a case document; returns a per-unitized NetworkCase."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseFormatError(f"invalid JSON: {exc}", path=str(path) if path else None)
    _check_keys(
        doc, ("schema_version", "name", "units"),
        ("description", "base", "ac_buses", "dc_buses",
         "ac_branches", "dc_branches", "converters"),
        "$", path,
    )
    if doc["schema_version"] != SCHEMA_VERSION:
        _err(f"unsupported schema_version {doc['schema_version']!r}", "schema_version", path)
    units = doc["units"]
    if units not in ("pu", "si"):
        _err(f"units must be 'pu' or 'si', got {units!r}", "units", path)
    base = _parse_base(doc.get("base", {}), path)
    sc = _Scale(units, base)

    def parse_list(key, fn):
        out = []
        items = doc.get(key, [])
        if not isinstance(items, list):
            _err("expected a list", key, path)
        for k, item in enumerate(items):
            out.append(fn(item, f"{key}[{k}]", sc, path))
        return tuple(out)

    try:
        case = NetworkCase(
            name=doc["name"],
            description=doc.get("description", ""),
            base=base,
            ac_buses=parse_list("ac_buses", _parse_ac_bus),
            dc_buses=parse_list("dc_buses", _parse_dc_bus),
            ac_branches=parse_list("ac_branches", _parse_ac_branch),
            dc_branches=parse_list("dc_branches", _parse_dc_branch_entry),
            converters=parse_list("converters", _parse_converter),
        )
    except CaseFormatError:
        raise
    except Exception as exc:
        raise CaseFormatError(str(exc), path=str(path) if path else None)

    diags = validate_topology(case)
    if diags:
        raise TopologyError(
            (f"{path}: " if path else "") + "; ".join(str(d) for d in diags)
        )
    return case


def _parse_dc_branch_entry(obj, loc, sc, path) -> DcBranch:
    _check_keys(obj, ("from", "to", "r"), (), loc, path)
    return DcBranch(obj["from"], obj["to"], r=_num(obj["r"], f"{loc}.r", path) * sc.z_dc)


def load_case(path) -> NetworkCase:
    """Read, validate and per-unitize a case file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CaseFormatError(f"cannot read file: {exc}", path=str(path))
    return loads_case(text, path=path)


def _cx_out(z: complex):
    return [z.real, z.imag]


def _mat_out(m: np.ndarray):
    return [[_cx_out(complex(m[i, j])) for j in range(3)] for i in range(3)]


def case_to_dict(case: NetworkCase) -> dict:
    """Schema document of a case, always in per-unit."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "name": case.name,
        "units": "pu",
        "base": {
            "s_base_va": case.base.s_base_va,
            "v_base_ac_v": case.base.v_base_ac_v,
            "v_base_dc_v": case.base.v_base_dc_v,
            "f_line_hz": case.base.f_line_hz,
        },
    }
    if case.description:
        doc["description"] = case.description
    buses = []
    for b in case.ac_buses:
        if b.kind == AcBusKind.SLACK:
            rec = {"id": b.id, "kind": "slack", "v_mag": b.v_mag, "v_angle_rad": b.v_angle}
        elif b.kind == AcBusKind.PQ:
            rec = {"id": b.id, "kind": "pq", "p": list(b.p_set), "q": list(b.q_set)}
        elif b.kind == AcBusKind.PV:
            rec = {"id": b.id, "kind": "pv", "p": list(b.p_set), "v": list(b.v_set)}
        else:
            rec = {"id": b.id, "kind": "converter"}
        buses.append(rec)
    doc["ac_buses"] = buses
    doc["dc_buses"] = [
        {"id": b.id, "kind": "p", "p": b.p_set} if b.kind == DcBusKind.P
        else {"id": b.id, "kind": "v", "e": b.e_set} if b.kind == DcBusKind.V
        else {"id": b.id, "kind": "converter"}
        for b in case.dc_buses
    ]
    doc["ac_branches"] = [
        {"from": br.from_bus, "to": br.to_bus, "z_series": _mat_out(br.z_series),
         **({"y_shunt": _mat_out(br.y_shunt)} if np.any(br.y_shunt != 0) else {})}
        for br in case.ac_branches
    ]
    doc["dc_branches"] = [
        {"from": br.from_bus, "to": br.to_bus, "r": br.r} for br in case.dc_branches
    ]
    convs = []
    for c in case.converters:
        rec = {"id": c.id, "ac_bus": c.ac_bus, "dc_bus": c.dc_bus, "mode": c.mode.value,
               "sequence_policy": c.sequence_policy.value,
               "filter_z": _cx_out(c.filter_z),
               "loss": {
                   "r_eq_table": [list(p) for p in c.loss.r_eq_table],
                   "t_on_s": c.loss.t_on, "t_off_s": c.loss.t_off,
                   "t_rec_s": c.loss.t_rec, "t_s_s": c.loss.t_s,
                   "n_ratio": c.loss.n_ratio,
               }}
        for key, val in (("e_dc", c.e_dc_set), ("q_pos", c.q_pos_set),
                         ("p_pos", c.p_pos_set), ("p_neg", c.p_neg_set),
                         ("q_neg", c.q_neg_set), ("v_mag", c.v_mag_set)):
            if val is not None:
                rec[key] = val
        convs.append(rec)
    doc["converters"] = convs
    return doc


def dumps_case(case: NetworkCase) -> str:
    return json.dumps(case_to_dict(case), indent=2) + "\n"


def save_case(case: NetworkCase, path) -> None:
    Path(path).write_text(dumps_case(case))


def solution_to_dict(solution, case: NetworkCase | None = None) -> dict:
    """Serializable document of a Solution (voltages, flows, losses, trace)."""
    x = solution.x_final
    model = x.model
    doc = {
        "schema_version": SOLUTION_SCHEMA_VERSION,
        "case_name": model.case.name,
        "converged": solution.converged,
        "iterations": solution.iterations,
        "final_mismatch": solution.final_mismatch,
        "n_states": solution.n_states,
        "residual_history": list(solution.residual_history),
        "diagnostics": solution.diagnostics,
        "ac_voltages": {
            bus: [_cx_out(complex(v)) for v in vs]
            for bus, vs in solution.ac_voltages.items()
        },
        "sequence_voltages": {
            bus: [_cx_out(complex(s.zero)), _cx_out(complex(s.positive)),
                  _cx_out(complex(s.negative))]
            for bus, s in solution.sequence_voltages.items()
        },
        "dc_voltages": dict(solution.dc_voltages),
        "slack_injections": {
            bus: [_cx_out(complex(v)) for v in vs]
            for bus, vs in solution.slack_injections.items()
        },
        "converter_losses": {
            cid: {"s_loss": _cx_out(complex(lb.s_loss)), "p_filter": lb.p_filter,
                  "e_c": _cx_out(complex(lb.e_c)), "i_sw": lb.i_sw}
            for cid, lb in solution.losses.items()
        },
        "converter_power": {cid: dict(p) for cid, p in solution.converter_power.items()},
        "ac_branch_flows": [
            {"from": f.from_bus, "to": f.to_bus,
             "s_from": [_cx_out(complex(v)) for v in f.s_from],
             "s_to": [_cx_out(complex(v)) for v in f.s_to]}
            for f in solution.ac_branch_flows
        ],
        "dc_branch_flows": [
            {"from": f.from_bus, "to": f.to_bus, "p_from": f.p_from, "p_to": f.p_to}
            for f in solution.dc_branch_flows
        ],
        "trace": list(solution.trace),
        "timings_s": {
            "residual": solution.timings.residual_s,
            "jacobian": solution.timings.jacobian_s,
            "linear_solve": solution.timings.linear_s,
            "total": solution.timings.total_s,
        },
        "state": {
            "ac_bus_ids": list(model.ac_bus_ids),
            "dc_bus_ids": list(model.dc_bus_ids),
            "e": [float(v) for v in x.e],
            "f": [float(v) for v in x.f],
            "e_dc": [float(v) for v in x.e_dc],
        },
    }
    return doc


def save_solution(solution, path, case: NetworkCase | None = None) -> None:
    """Write a solution file; loadable for regression comparison and --init."""
    Path(path).write_text(json.dumps(solution_to_dict(solution, case), indent=2) + "\n")


def load_solution(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise CaseFormatError(f"cannot read file: {exc}", path=str(path))
    except json.JSONDecodeError as exc:
        raise CaseFormatError(f"invalid JSON: {exc}", path=str(path))
    if doc.get("schema_version") != SOLUTION_SCHEMA_VERSION:
        raise CaseFormatError("unsupported solution schema_version", path=str(path))
    return doc


def state_from_solution(doc: dict, case) -> StateVector:
    """Rebuild a StateVector from a solution document for use as an NR start."""
    model = as_model(case)
    st = doc["state"]
    if (list(model.ac_bus_ids) != st["ac_bus_ids"]
            or list(model.dc_bus_ids) != st["dc_bus_ids"]):
        raise CaseFormatError("solution state does not match the case bus lists")
    return StateVector(
        e=np.array(st["e"], dtype=float),
        f=np.array(st["f"], dtype=float),
        e_dc=np.array(st["e_dc"], dtype=float),
        model=model,
    )


def export_voltages_csv(solution, path) -> None:
    """Voltage table: one row per AC (bus, phase) and one per DC bus."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bus", "phase", "re", "im", "mag", "angle_deg"])
        for bus, vs in solution.ac_voltages.items():
            for ph, v in zip("abc", vs):
                v = complex(v)
                w.writerow([bus, ph, repr(v.real), repr(v.imag),
                            repr(abs(v)), repr(float(np.degrees(np.angle(v))))])
        for bus, v in solution.dc_voltages.items():
            v = float(v)
            w.writerow([bus, "dc", repr(v), "0.0", repr(abs(v)), "0.0"])


def export_history_csv(solution, path) -> None:
    """Residual history: iteration number and max mismatch."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "max_mismatch"])
        for it, r in enumerate(solution.residual_history, start=1):
            w.writerow([it, repr(r)])
