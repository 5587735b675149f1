"""Network and scenario files, and result reports.

Files are JSON documents carrying ``schema_version``.  Complex numbers are
``[re, im]`` pairs; a source EMF may instead be given in polar form
``{"mag": ..., "ang_deg": ...}``.  Impedances are per-unit unless the file
sets ``"impedance_unit": "ohm"``, in which case branch, source, generator and
filter impedances are converted with the base of the bus they attach to
(transformer leakage impedances are always per-unit on the system base).
"""
from __future__ import annotations

import cmath
import csv
import io as _io
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .frt import CsmState, VicState
from .mana import PfSolution
from .netmodel import (
    PHASES,
    Branch,
    Bus,
    Generator,
    IbrUnit,
    Load,
    NetworkError,
    NetworkModel,
    Regulator,
    SourceIdeal,
    Switch,
    Transformer,
    validate,
)
from .scsolver import FaultSpec, ScOptions, ScResult
from .seq import A_INV, seq_to_phase_matrix

__all__ = [
    "SCHEMA_VERSION",
    "ParseIssue",
    "NetworkFileError",
    "parse_network",
    "parse_network_text",
    "load_network",
    "network_to_dict",
    "serialize_network",
    "Scenario",
    "parse_scenario",
    "emit_report",
]

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ParseIssue:
    field: str
    message: str
    line: int | None = None

    def __str__(self):
        where = f"line {self.line}: " if self.line else ""
        return f"{where}{self.field}: {self.message}"


class NetworkFileError(NetworkError):
    """Input file problems; ``issues`` lists located messages."""

    def __init__(self, path, issues):
        self.path = str(path)
        self.issues = list(issues)
        super().__init__("\n".join(f"{self.path}: {i}" for i in self.issues))


# --------------------------------------------------------------------------
# field specifications
# --------------------------------------------------------------------------

_FIELDS = {
    "buses": {"id", "phases", "base_kv"},
    "branches": {"id", "from", "to", "phases", "z_abc", "y_shunt_abc", "z1", "z0", "b1", "b0"},
    "transformers": {"id", "from", "to", "conn_from", "conn_to", "tap", "z_leak", "z0_path", "delta_shift"},
    "regulators": {"id", "from", "to", "phases", "tap", "mode", "v_set", "step", "tap_min", "tap_max"},
    "loads": {"id", "bus", "phases", "s", "model"},
    "sources": {"id", "bus", "e_abc", "z_int", "z1", "z0"},
    "switches": {"id", "from", "to", "phases", "status"},
    "generators": {"id", "bus", "p_set", "e_set", "z_abc", "z1", "z0"},
    "ibrs": {"id", "bus", "mode", "s_rated", "i_max", "p_ref", "q_ref", "v_ref", "k_factor", "k_neg",
             "k_zero", "z_filter", "phi", "kappa", "k_v", "csm"},
}
_TOP = {"schema_version", "name", "s_base_mva", "impedance_unit", "description", *_FIELDS}


class _Ctx:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.issues: list[ParseIssue] = []

    def line_of(self, key: str, after: str | None = None) -> int | None:
        start = 0
        if after is not None:
            pat = re.compile(r'"id"\s*:\s*"' + re.escape(after) + '"')
            for n, ln in enumerate(self.lines):
                if pat.search(ln):
                    start = n
                    break
        pat = re.compile('"' + re.escape(key) + r'"\s*:')
        for n in range(start, len(self.lines)):
            if pat.search(self.lines[n]):
                return n + 1
        return None

    def err(self, fieldname, message, key=None, after=None):
        self.issues.append(ParseIssue(fieldname, message, self.line_of(key or fieldname.split(".")[-1], after)))


def _c(v) -> complex:
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v):
        return complex(v[0], v[1])
    if isinstance(v, dict) and set(v) == {"mag", "ang_deg"}:
        return cmath.rect(float(v["mag"]), math.radians(float(v["ang_deg"])))
    raise ValueError(f"expected a number, [re, im] or {{mag, ang_deg}}, got {v!r}")


def _m(v) -> np.ndarray:
    a = np.array([[_c(x) for x in row] for row in v], dtype=complex)
    if a.shape != (3, 3):
        raise ValueError("expected a 3x3 matrix")
    return a


def _cj(z: complex):
    z = complex(z)
    return [z.real, z.imag]


def _mj(m) -> list:
    return [[_cj(x) for x in row] for row in np.asarray(m)]


# --------------------------------------------------------------------------
# network files
# --------------------------------------------------------------------------

def _build(doc: dict, ctx: _Ctx) -> NetworkModel | None:
    for k in doc:
        if k not in _TOP:
            ctx.err(k, "unknown field")
    ver = doc.get("schema_version")
    if ver != SCHEMA_VERSION:
        ctx.err("schema_version", f"unsupported schema version {ver!r} (expected {SCHEMA_VERSION})")
        return None
    s_base = float(doc.get("s_base_mva", 100.0))
    unit = doc.get("impedance_unit", "pu")
    if unit not in ("pu", "ohm"):
        ctx.err("impedance_unit", f"must be 'pu' or 'ohm', got {unit!r}")
        return None
    bases = {}
    for b in doc.get("buses", []):
        if isinstance(b, dict) and "id" in b:
            bases[b["id"]] = float(b.get("base_kv", 1.0))

    def z_of(v, bus):
        z = _c(v)
        if unit == "ohm":
            return z / (bases[bus] ** 2 / s_base)
        return z

    def zm_of(v, bus):
        m = _m(v)
        if unit == "ohm":
            return m / (bases[bus] ** 2 / s_base)
        return m

    out = {k: [] for k in _FIELDS}
    for section, allowed in _FIELDS.items():
        items = doc.get(section, [])
        if not isinstance(items, list):
            ctx.err(section, "must be a list")
            continue
        for n, e in enumerate(items):
            eid = e.get("id", f"#{n}") if isinstance(e, dict) else f"#{n}"
            if not isinstance(e, dict):
                ctx.err(f"{section}[{n}]", "must be an object", key=section)
                continue
            bad = [k for k in e if k not in allowed]
            for k in bad:
                ctx.err(f"{section}.{eid}.{k}", "unknown field", key=k, after=eid)
            if bad:
                continue
            try:
                out[section].append(_element(section, e, s_base, unit, z_of, zm_of))
            except KeyError as exc:
                key = exc.args[0]
                if key in bases or section == "buses":
                    ctx.err(f"{section}.{eid}.{key}", "missing required field", key="id", after=eid)
                else:
                    ctx.err(f"{section}.{eid}", f"missing field or unknown bus {key!r}", key="id", after=eid)
            except (ValueError, TypeError, NetworkError) as exc:
                ctx.err(f"{section}.{eid}", str(exc), key="id", after=eid)
    if ctx.issues:
        return None
    return NetworkModel(doc.get("name", "network"), s_base, *(tuple(out[k]) for k in (
        "buses", "branches", "transformers", "regulators", "loads", "sources", "switches",
        "generators", "ibrs")))


def _ph(e):
    return tuple(e.get("phases", "ABC"))


def _element(section, e, s_base, unit, z_of, zm_of):
    if section == "buses":
        return Bus(e["id"], _ph(e), float(e.get("base_kv", 1.0)))
    if section == "branches":
        bus = e["from"]
        if "z_abc" in e:
            # shunt admittances are always per-unit
            y = _m(e["y_shunt_abc"]) if "y_shunt_abc" in e else None
            return Branch(e["id"], e["from"], e["to"], zm_of(e["z_abc"], bus), y, _ph(e))
        return Branch.from_sequence(e["id"], e["from"], e["to"], z_of(e["z1"], bus), z_of(e["z0"], bus),
                                    float(e.get("b1", 0.0)), None if "b0" not in e else float(e["b0"]), _ph(e))
    if section == "transformers":
        z0 = e.get("z0_path")
        z0 = z0 if (z0 is None or isinstance(z0, str)) else _c(z0)
        return Transformer(e["id"], e["from"], e["to"], e.get("conn_from", "delta"),
                           e.get("conn_to", "wye-grounded"), float(e.get("tap", 1.0)),
                           _c(e.get("z_leak", [0.01, 0.08])), z0, e.get("delta_shift", "lag"))
    if section == "regulators":
        tap = e.get("tap", [1.0, 1.0, 1.0])
        tap = [tap] if isinstance(tap, (int, float)) else tap
        return Regulator(e["id"], e["from"], e["to"], _ph(e), tuple(float(t) for t in tap),
                         e.get("mode", "voltage"), float(e.get("v_set", 1.0)), float(e.get("step", 0.00625)),
                         float(e.get("tap_min", 0.9)), float(e.get("tap_max", 1.1)))
    if section == "loads":
        return Load(e["id"], e["bus"], tuple(_c(s) for s in e["s"]), _ph(e), e.get("model", "constant-power"))
    if section == "sources":
        bus = e["bus"]
        if "z_int" in e:
            z = zm_of(e["z_int"], bus)
        else:
            z1 = z_of(e.get("z1", 0.0), bus)
            z = seq_to_phase_matrix(z_of(e["z0"], bus) if "z0" in e else z1, z1)
        if "e_abc" in e:
            emf = tuple(_c(x) for x in e["e_abc"])
        else:
            emf = SourceIdeal.balanced("_", bus).e_abc
        return SourceIdeal(e["id"], bus, emf, z)
    if section == "switches":
        return Switch(e["id"], e["from"], e["to"], tuple(e.get("status", (1, 1, 1))), _ph(e))
    if section == "generators":
        bus = e["bus"]
        if "z_abc" in e:
            z = zm_of(e["z_abc"], bus)
        elif "z1" in e:
            z1 = z_of(e["z1"], bus)
            z = seq_to_phase_matrix(z_of(e["z0"], bus) if "z0" in e else z1, z1)
        else:
            z = None
        return Generator(e["id"], bus, float(e["p_set"]), float(e.get("e_set", 1.0)), z)
    if section == "ibrs":
        kw = {}
        for k in ("s_rated", "i_max", "p_ref", "q_ref", "v_ref", "k_factor", "phi", "kappa", "k_v"):
            if k in e and e[k] is not None:
                kw[k] = float(e[k])
        for k in ("k_neg", "k_zero"):
            if k in e and e[k] is not None:
                kw[k] = _c(e[k])
        if e.get("z_filter") is not None:
            kw["z_filter"] = z_of(e["z_filter"], e["bus"])
        return IbrUnit(e["id"], e["bus"], e.get("mode", "GFL"), csm=e.get("csm", "improved"), **kw)
    raise AssertionError(section)


def parse_network(path, *, check: bool = True) -> NetworkModel:
    """Read and validate a network file.

    Raises :class:`NetworkFileError` listing every located problem (unknown
    fields with their line, schema mismatches, validation failures).
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise NetworkFileError(path, [ParseIssue("file", str(exc))]) from exc
    return parse_network_text(text, path, check=check)


def parse_network_text(text: str, path="<string>", *, check: bool = True) -> NetworkModel:
    ctx = _Ctx(text)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkFileError(path, [ParseIssue("json", exc.msg, exc.lineno)]) from exc
    if not isinstance(doc, dict):
        raise NetworkFileError(path, [ParseIssue("document", "top level must be an object", 1)])
    net = _build(doc, ctx)
    if net is None:
        raise NetworkFileError(path, ctx.issues)
    if check:
        rep = validate(net)
        if not rep.ok:
            raise NetworkFileError(path, [ParseIssue(i.category, i.message, ctx.line_of("id", i.element)
                                                     if i.element else None) for i in rep.errors])
    return net


load_network = parse_network


def network_to_dict(net: NetworkModel) -> dict:
    """Per-unit, rectangular, full-matrix representation of a network."""
    d = {"schema_version": SCHEMA_VERSION, "name": net.name, "s_base_mva": float(net.s_base),
         "impedance_unit": "pu"}
    d["buses"] = [{"id": b.id, "phases": "".join(b.phases), "base_kv": float(b.base_kv)} for b in net.buses]
    d["branches"] = [{"id": b.id, "from": b.from_bus, "to": b.to_bus, "phases": "".join(b.phases),
                      "z_abc": _mj(b.z_abc), "y_shunt_abc": _mj(b.y_shunt_abc)} for b in net.branches]
    d["transformers"] = [{"id": t.id, "from": t.from_bus, "to": t.to_bus, "conn_from": t.conn_from,
                          "conn_to": t.conn_to, "tap": float(t.tap), "z_leak": _cj(t.z_leak),
                          "z0_path": t.z0_path if (t.z0_path is None or isinstance(t.z0_path, str))
                          else _cj(t.z0_path), "delta_shift": t.delta_shift} for t in net.transformers]
    d["regulators"] = [{"id": r.id, "from": r.from_bus, "to": r.to_bus, "phases": "".join(r.phases),
                        "tap": [float(t) for t in r.tap], "mode": r.mode, "v_set": float(r.v_set),
                        "step": float(r.step), "tap_min": float(r.tap_min), "tap_max": float(r.tap_max)} for r in net.regulators]
    d["loads"] = [{"id": ld.id, "bus": ld.bus, "phases": "".join(ld.phases), "s": [_cj(s) for s in ld.s],
                   "model": ld.model} for ld in net.loads]
    d["sources"] = [{"id": s.id, "bus": s.bus, "e_abc": [_cj(e) for e in s.e_abc], "z_int": _mj(s.z_int)}
                    for s in net.sources]
    d["switches"] = [{"id": s.id, "from": s.from_bus, "to": s.to_bus, "phases": "".join(s.phases),
                      "status": list(s.status)} for s in net.switches]
    d["generators"] = [{"id": g.id, "bus": g.bus, "p_set": float(g.p_set), "e_set": float(g.e_set), "z_abc": _mj(g.z_abc)}
                       for g in net.generators]
    d["ibrs"] = [{"id": u.id, "bus": u.bus, "mode": u.mode, "s_rated": float(u.s_rated), "i_max": float(u.i_max),
                  "p_ref": float(u.p_ref), "q_ref": float(u.q_ref), "v_ref": float(u.v_ref),
                  "k_factor": float(u.k_factor),
                  "k_neg": None if u.k_neg is None else _cj(u.k_neg), "k_zero": _cj(u.k_zero),
                  "z_filter": None if u.z_filter is None else _cj(u.z_filter), "phi": float(u.phi),
                  "kappa": None if u.kappa is None else float(u.kappa), "k_v": float(u.k_v), "csm": u.csm} for u in net.ibrs]
    return d


def serialize_network(net: NetworkModel) -> str:
    return json.dumps(network_to_dict(net), indent=1) + "\n"


# --------------------------------------------------------------------------
# scenario files
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    network: str | None = None
    pf_tol: float = 1e-8
    pf_max_iter: int = 50
    sc: ScOptions = field(default_factory=ScOptions)
    faults: tuple = ()
    sweep_buses: tuple = ()
    sweep_kinds: tuple = ()
    sweep_z: tuple = (0.0,)
    outputs: tuple = ("machine", "trace")

    def fault_list(self) -> list:
        out = list(self.faults)
        for b in self.sweep_buses:
            for k in self.sweep_kinds:
                for z in self.sweep_z:
                    out.append(FaultSpec(b, k, z))
        return out


_SCN = {"schema_version", "network", "pf", "sc", "faults", "sweep", "outputs", "description"}


def parse_scenario(path, net: NetworkModel | None = None) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
        doc = json.loads(text)
    except OSError as exc:
        raise NetworkFileError(path, [ParseIssue("file", str(exc))]) from exc
    except json.JSONDecodeError as exc:
        raise NetworkFileError(path, [ParseIssue("json", exc.msg, exc.lineno)]) from exc
    ctx = _Ctx(text)
    for k in doc:
        if k not in _SCN:
            ctx.err(k, "unknown field")
    if doc.get("schema_version") != SCHEMA_VERSION:
        ctx.err("schema_version", f"unsupported schema version {doc.get('schema_version')!r}")
    pf = doc.get("pf", {})
    sc = doc.get("sc", {})
    faults = []
    for n, f in enumerate(doc.get("faults", [])):
        try:
            faults.append(FaultSpec(f["bus"], f.get("kind", "ABCG"), _c(f.get("z_fault", 0.0)),
                                    _c(f.get("z_ground", 0.0))))
        except (KeyError, ValueError, NetworkError) as exc:
            ctx.err(f"faults[{n}]", str(exc), key="faults")
    sw = doc.get("sweep", {})
    try:
        scn = Scenario(doc.get("network"), float(pf.get("tol", 1e-8)), int(pf.get("max_iter", 50)),
                       ScOptions.from_env(**{k: v for k, v in (("tol", sc.get("tol")), ("max_iter", sc.get("max_iter")))
                                             if v is not None}, pf_tol=float(pf.get("tol", 1e-8)),
                                          pf_max_iter=int(pf.get("max_iter", 50))),
                       tuple(faults), tuple(sw.get("buses", ())), tuple(sw.get("kinds", ())),
                       tuple(_c(z) for z in sw.get("z_list", [0.0])), tuple(doc.get("outputs", ("machine", "trace"))))
    except (ValueError, TypeError, NetworkError) as exc:
        ctx.err("sweep", str(exc))
        scn = None
    if net is not None and scn is not None:
        names = {b.id for b in net.buses}
        for f in scn.fault_list():
            if f.bus not in names:
                ctx.err("faults", f"bus {f.bus!r} does not exist in the network", key="bus")
    if ctx.issues:
        raise NetworkFileError(path, ctx.issues)
    return scn


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

def _deg(z) -> float:
    return math.degrees(cmath.phase(z)) if abs(z) > 0 else 0.0


def _clean(x: float, nd: int = 3) -> str:
    s = f"{x:.{nd}f}"
    return "0." + "0" * nd if s.startswith("-") and float(s) == 0 else s


def _num(x: float):
    return float(x)


def _cplx(z) -> list:
    z = complex(z)
    return [float(z.real), float(z.imag)]


def _limiter_dict(st) -> dict | None:
    if st is None:
        return None
    if isinstance(st, VicState):
        return {"type": "VIC", "active": bool(st.active), "r_vi": st.r_vi, "x_vi": st.x_vi, "phi": st.phi,
                "sigma": st.sigma, "i_th": st.i_th, "v_drop": st.v_drop, "e1": _cplx(st.e1),
                "z_sum": _cplx(st.z_sum), "i1_max": st.i1_max, "i2_max": st.i2_max,
                "infeasible": bool(st.infeasible)}
    return {"type": "CSM", "method": st.method, "active": bool(st.active), "i1_p": st.i1_p, "i1_r": st.i1_r,
            "i2_r": st.i2_r, "i_lim": st.i_lim, "i1_max": st.i1_max, "i2_max": st.i2_max,
            "delta_i1": st.delta_i1, "delta_i2": st.delta_i2}


def _pf_machine(pf: PfSolution) -> dict:
    net = pf.network
    out = {"type": "power_flow", "network": net.name, "converged": bool(pf.converged),
           "iterations": pf.iterations, "residual_norm": pf.residual_norm,
           "bus_voltages": {b.id: {p: _cplx(pf.voltage(b.id, p)) for p in b.phases} for b in net.buses}}
    ibrs = {}
    for u in net.ibrs:
        i = A_INV @ pf.ibr_currents(u.id)
        v = A_INV @ pf.bus_voltages(u.bus)
        ibrs[u.id] = {"i_abc": [_cplx(x) for x in pf.ibr_currents(u.id)], "i_012": [_cplx(x) for x in i],
                      "v_012": [_cplx(x) for x in v]}
    out["ibrs"] = ibrs
    out["taps"] = {f"{k[0]}.{k[1]}": t for k, t in sorted(pf.taps.items())}
    out["generator_emf"] = {g.id: _cplx(pf.emf(g.id)) for g in net.generators}
    return out


def _op_dict(op, pre=None) -> dict:
    d = {"v1_lv": _cplx(op.v1_lv), "v2_lv": _cplx(op.v2_lv), "i1_lv": _cplx(op.i1_lv),
         "i2_lv": _cplx(op.i2_lv), "i1": _cplx(op.i1), "i2": _cplx(op.i2), "e1": _cplx(op.e1), "q": op.q,
         "phase_current_mag": [float(x) for x in op.phase_currents()], "limiter": _limiter_dict(op.limiter)}
    return d


def _sc_machine(res: ScResult) -> dict:
    f = res.fault
    out = {"type": "short_circuit", "fault": {"bus": f.bus, "kind": f.kind, "z_fault": _cplx(f.z_fault),
                                             "z_ground": _cplx(f.z_ground)},
           "converged": bool(res.converged), "iterations": res.iterations, "message": res.message,
           "kcl_residual": res.kcl_residual, "fault_current": [_cplx(x) for x in res.fault_current],
           "bus_voltages": {b: [_cplx(x) for x in v] for b, v in res.bus_voltages.items()},
           "branch_currents": {b: [_cplx(x) for x in v] for b, v in res.branch_currents.items()},
           "ibrs": {k: _op_dict(op) for k, op in res.ibr_ops.items()},
           "trace": [[it, i, d1, d2] for it, i, d1, d2 in res.trace],
           "trajectory": {k: [_op_dict(op) for op in ops] for k, ops in res.trajectory.items()}}
    return out


def machine_dict(result) -> dict:
    if isinstance(result, PfSolution):
        return _pf_machine(result)
    if isinstance(result, ScResult):
        return _sc_machine(result)
    if isinstance(result, (list, tuple)):
        return {"type": "bundle", "results": [machine_dict(r) for r in result]}
    raise TypeError(f"cannot report {type(result).__name__}")


def _pf_table(pf: PfSolution) -> str:
    net = pf.network
    lines = [f"Power flow: {net.name}  converged={pf.converged}  iterations={pf.iterations}  "
             f"|f|inf={pf.residual_norm:.3e}", "",
             f"{'Bus':<12}{'Phase':<7}{'|V| (pu)':>10}{'Angle (deg)':>13}"]
    for b in net.buses:
        for p in b.phases:
            v = pf.voltage(b.id, p)
            lines.append(f"{b.id:<12}{p:<7}{abs(v):>10.5f}{_deg(v):>13.3f}")
    for u in net.ibrs:
        i = A_INV @ pf.ibr_currents(u.id)
        lines += ["", f"IBR {u.id} ({u.mode}) sequence currents",
                  f"{'Value':<8}{'Mag. (pu)':>11}{'Angle (deg)':>13}"]
        for k, name in enumerate(("i_0", "i_1", "i_2")):
            ang = _deg(i[k]) if abs(i[k]) >= 5e-5 else 0.0
            lines.append(f"{name:<8}{abs(i[k]):>11.4f}{ang:>13.2f}")
    return "\n".join(lines) + "\n"


def _sc_table(res: ScResult) -> str:
    f = res.fault
    zf = complex(f.z_fault)
    lines = [f"Short circuit: {f.kind} at bus {f.bus}  z_fault={zf.real:.6g}{zf.imag:+.6g}j pu  "
             f"converged={res.converged}  iterations={res.iterations}"]
    if res.message:
        lines.append(f"note: {res.message}")
    lines += ["", "Fault current", f"{'Phase':<8}{'Mag. (pu)':>11}{'Angle (deg)':>13}"]
    for p, c in zip(PHASES, res.fault_current):
        lines.append(f"{p:<8}{_clean(abs(c), 4):>11}{_deg(c) if abs(c) > 1e-9 else 0.0:>13.2f}")
    pf = res.pf
    for uid, op in res.ibr_ops.items():
        unit = pf.network.ibr(uid) if pf is not None else None
        scale = (unit.s_rated / pf.network.s_base) if unit is not None else 1.0
        st = op.limiter
        kind = "VIC" if isinstance(st, VicState) else ("CSM" if isinstance(st, CsmState) else "-")
        active = bool(getattr(st, "active", False))
        lines += ["", f"IBR {uid} ({unit.mode if unit else '?'}, {kind}{' active' if active else ''}) "
                      f"currents on unit rating", f"{'Value':<10}{'Mag. (pu)':>11}{'Angle (deg)':>13}"]
        mags = op.phase_currents() / scale
        for p, m in zip("abc", mags):
            lines.append(f"{'i_' + p:<10}{_clean(m):>11}{'':>13}")
        pre_v = None
        if pf is not None and unit is not None:
            pre_v = (A_INV @ pf.bus_voltages(unit.bus))[1:]
        rows = [("i_1,LV", op.i1_lv / scale), ("i_2,LV", op.i2_lv / scale)]
        if pre_v is not None:
            rows += [("dV_1,LV", op.v1_lv - pre_v[0]), ("dV_2,LV", op.v2_lv - pre_v[1])]
        for name, z in rows:
            ang = f"{_deg(z):13.2f}" if abs(z) >= 5e-4 else f"{'':>13}"
            lines.append(f"{name:<10}{_clean(abs(z)):>11}{ang}")
        if isinstance(st, VicState) and st.active:
            lines.append(f"{'R_VI':<10}{st.r_vi:>11.4f}")
    return "\n".join(lines) + "\n"


def _trace_csv(res) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if not isinstance(res, (list, tuple)):
        w.writerow(["iter", "ibr_id", "dV1_pu", "dV2_pu"])
        for it, uid, d1, d2 in res.trace:
            w.writerow([it, uid, f"{d1:.12e}", f"{d2:.12e}"])
        return buf.getvalue()
    w.writerow(["case", "bus", "kind", "iter", "ibr_id", "dV1_pu", "dV2_pu"])
    for n, r in enumerate(res):
        for it, uid, d1, d2 in r.trace:
            w.writerow([n, r.fault.bus, r.fault.kind, it, uid, f"{d1:.12e}", f"{d2:.12e}"])
    return buf.getvalue()


def emit_report(result, fmt: str = "table") -> bytes:
    """Deterministic report bytes: ``table`` (text), ``machine`` (JSON) or
    ``trace`` (CSV of per-iteration voltage updates at each unit)."""
    if fmt == "table":
        if isinstance(result, PfSolution):
            return _pf_table(result).encode()
        if isinstance(result, ScResult):
            return _sc_table(result).encode()
        return "\n".join(_sc_table(r) for r in result).encode()
    if fmt == "machine":
        return (json.dumps(machine_dict(result), sort_keys=True, indent=1, allow_nan=True) + "\n").encode()
    if fmt == "trace":
        if isinstance(result, PfSolution):
            raise TypeError("a power-flow solution has no short-circuit trace")
        return _trace_csv(result).encode()
    raise ValueError(f"unknown report format {fmt!r}")
