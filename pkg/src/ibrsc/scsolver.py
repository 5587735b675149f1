"""Iterative steady-state short-circuit solver.

The fault is stamped into the linearized network as an admittance block, the
matrix is factorized once, and the loop alternates a network solve with a
controller update of every converter unit.  Each unit is updated against the
exact linear response of the network at its own terminal (a 2x2 sequence port
model), all units from the same network solution.  The loop stops when the
positive- and negative-sequence terminal voltages of every unit change by less
than ``tol`` between two network solves.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from .frt import PLL_FREEZE, solve_ports
from .linearize import LinearizedNetwork, fault_free, linearize, ss_voltages
from .mana import NonConvergence, PfSolution, assemble_ss, solve_pf, ss_rhs
from .netmodel import PHASES, NetworkError, NetworkModel
from .seq import A_INV, A_MAT

__all__ = [
    "FAULT_KINDS",
    "BOLTED_Z",
    "FaultSpec",
    "ScResult",
    "ScOptions",
    "fault_admittance",
    "apply_fault",
    "remove_fault",
    "solve_sc",
    "sweep",
    "solve_cases",
]

FAULT_KINDS = ("AG", "BG", "CG", "AB", "BC", "CA", "ABG", "BCG", "CAG", "ABC", "ABCG")

_KIND_ALIASES = {"BA": "AB", "CB": "BC", "AC": "CA", "BAG": "ABG", "CBG": "BCG", "ACG": "CAG",
                 "ABCN": "ABCG", "AN": "AG", "BN": "BG", "CN": "CG"}

#: Impedance floor substituted for a bolted (zero-impedance) fault.
BOLTED_Z = 1e-6


@dataclass(frozen=True)
class FaultSpec:
    """Shunt fault: each involved phase reaches a star point through
    ``z_fault``; grounded kinds tie the star point to ground through
    ``z_ground``.  ``z_fault = inf`` means no fault."""

    bus: str
    kind: str = "ABCG"
    z_fault: complex = 0.0
    z_ground: complex = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", _KIND_ALIASES.get(self.kind.upper(), self.kind.upper()))
        if self.kind not in FAULT_KINDS:
            raise NetworkError(f"unknown fault kind {self.kind!r}; expected one of {FAULT_KINDS}")
        z = complex(self.z_fault)
        if math.isnan(z.real) or math.isnan(z.imag):
            raise NetworkError("fault impedance must not be NaN")

    @property
    def phases(self) -> tuple[str, ...]:
        return tuple(self.kind.rstrip("G"))

    @property
    def grounded(self) -> bool:
        return self.kind.endswith("G")

    @property
    def is_open(self) -> bool:
        return math.isinf(abs(complex(self.z_fault)))


def fault_admittance(fault: FaultSpec) -> np.ndarray:
    """Phase admittance matrix of the fault over ``fault.phases``."""
    n = len(fault.phases)
    if fault.is_open:
        return np.zeros((n, n), dtype=complex)
    zf = complex(fault.z_fault)
    if abs(zf) < BOLTED_Z:
        zf = complex(BOLTED_Z)
    y = 1.0 / zf
    eye = np.eye(n, dtype=complex)
    ones = np.ones((n, n), dtype=complex)
    if fault.grounded:
        zg = complex(fault.z_ground)
        if zg == 0:
            return y * eye
        yg = 1.0 / zg
        return y * eye - y * y / (n * y + yg) * ones
    return y * eye - y / n * ones


def apply_fault(lin: LinearizedNetwork, fault: FaultSpec) -> LinearizedNetwork:
    """Add the fault admittance to the nodal block; no unknowns are added."""
    bus = lin.network.bus(fault.bus) if fault.bus in {b.id for b in lin.network.buses} else None
    if bus is None:
        raise NetworkError(f"fault bus {fault.bus!r} does not exist")
    missing = [p for p in fault.phases if p not in bus.phases]
    if missing:
        raise NetworkError(f"fault {fault.kind} needs phases {''.join(missing)} absent at bus {fault.bus!r}")
    nodes = tuple((fault.bus, p) for p in fault.phases)
    stamp = (nodes, fault_admittance(fault))
    return replace(lin, faults=lin.faults + (stamp,), fault_specs=lin.fault_specs + (fault,))


def remove_fault(lin: LinearizedNetwork, fault: FaultSpec) -> LinearizedNetwork:
    """Inverse of :func:`apply_fault` (drops the most recent matching stamp)."""
    for k in range(len(lin.fault_specs) - 1, -1, -1):
        if lin.fault_specs[k] == fault:
            return replace(lin, faults=lin.faults[:k] + lin.faults[k + 1:],
                           fault_specs=lin.fault_specs[:k] + lin.fault_specs[k + 1:])
    raise NetworkError(f"fault {fault} is not applied")


@dataclass(frozen=True)
class ScOptions:
    tol: float = 1e-6
    max_iter: int = 20
    damping: float = 1.0
    pf_tol: float = 1e-8
    pf_max_iter: int = 50

    @classmethod
    def from_env(cls, **kw) -> "ScOptions":
        env = os.environ.get("IBRSC_TOL")
        if env and "tol" not in kw:
            kw["tol"] = float(env)
        return cls(**kw)


@dataclass
class ScResult:
    fault: FaultSpec
    bus_voltages: dict
    branch_currents: dict
    ibr_ops: dict
    trajectory: dict
    fault_current: np.ndarray
    iterations: int
    converged: bool
    trace: list
    kcl_residual: float = 0.0
    pf: PfSolution | None = None
    elapsed: float = 0.0
    message: str = ""
    terminal_voltages: dict = field(default_factory=dict)

    def ibr_phase_currents(self, ibr_id) -> np.ndarray:
        return self.ibr_ops[ibr_id].phase_currents()


class _Loop:
    """Factorized faulted network plus per-unit port models."""

    def __init__(self, lin: LinearizedNetwork):
        self.lin = lin
        self.sys = assemble_ss(self.lin)
        self.sys.factorize()
        net = lin.network
        self.units = list(net.ibrs)
        idx = self.sys.index
        self.port_rows = {u.id: np.array([idx.slot("V", (u.bus, p)) // 2 for p in PHASES]) for u in self.units}
        self.base = ss_rhs(self.sys, {})  # network with every converter removed
        # port impedance: V_seq(u) response to unit converter I1/I2 at unit w
        n = len(self.units)
        self.z = np.zeros((n, 2, n, 2), dtype=complex)
        for w, uw in enumerate(self.units):
            for s in (1, 2):
                b = np.zeros(self.sys.n, dtype=complex)
                iabc = A_MAT[:, s]
                b[self.port_rows[uw.id]] += iabc
                x = self.sys.solve(b)
                for v, uv in enumerate(self.units):
                    self.z[v, :, w, s - 1] = (A_INV @ x[self.port_rows[uv.id]])[1:]

    def solve(self, currents: dict):
        b = self.base.copy()
        for u in self.units:
            i1, i2 = currents[u.id]
            b[self.port_rows[u.id]] += A_MAT @ np.array([0j, i1, i2])
        return self.sys.solve(b), b

    def port_voltages(self, x) -> dict:
        return {u.id: (A_INV @ x[self.port_rows[u.id]])[1:] for u in self.units}


def _branch_currents(net: NetworkModel, v: dict) -> dict:
    out = {}
    for br in net.branches:
        z, y = br.sub(br.phases)
        vf = np.array([v[(br.from_bus, p)] for p in br.phases])
        vt = np.array([v[(br.to_bus, p)] for p in br.phases])
        out[br.id] = np.linalg.solve(z, vf - vt) + 0.5 * y @ vf
    return out


def solve_sc(network: NetworkModel, fault: FaultSpec, opts: ScOptions | None = None, *,
             pf: PfSolution | None = None, lin: LinearizedNetwork | None = None,
             raise_on_failure: bool = True) -> ScResult:
    """Short-circuit solution with limited converter contributions.

    ``pf``/``lin`` may be passed to reuse a pre-fault solution across
    scenarios.  On non-convergence a :class:`NonConvergence` is raised whose
    diagnostics hold the partial :class:`ScResult` (or the result is returned
    with ``converged=False`` when ``raise_on_failure`` is false).
    """
    opts = opts or ScOptions.from_env()
    t0 = time.perf_counter()
    if lin is None:
        if pf is None:
            pf = solve_pf(network, opts.pf_tol, opts.pf_max_iter)
        lin = linearize(network, pf)
    pf = lin.pf
    faulted = apply_fault(fault_free(lin), fault)
    loop = _Loop(faulted)
    units = loop.units
    ctx = lin.contexts
    ops = dict(lin.prefault)
    currents = {u.id: (ops[u.id].i1, ops[u.id].i2) for u in units}
    prev_v = {u.id: np.array([ops[u.id].v1_lv, ops[u.id].v2_lv]) for u in units}
    trajectory = {u.id: [] for u in units}
    # synchronization loops below the freeze level at fault inception stay
    # frozen for the rest of the fault
    frozen = {u.id: False for u in units}
    trace = []
    lam = opts.damping
    hist = []
    converged = False
    it = 0
    x = b = None
    while it < opts.max_iter:
        it += 1
        x, b = loop.solve(currents)
        vport = loop.port_voltages(x)
        dmax = 0.0
        for u in units:
            d = np.abs(vport[u.id] - prev_v[u.id])
            trace.append((it, u.id, float(d[0]), float(d[1])))
            dmax = max(dmax, float(d.max()))
        hist.append((dmax, {k: v.copy() for k, v in vport.items()}))
        if dmax < opts.tol:
            converged = True
            break
        if it == 1:
            for u in units:
                if u.mode == "GFL" and abs(vport[u.id][0]) < PLL_FREEZE:
                    frozen[u.id] = True
        if lam == 1.0 and _oscillating(hist):
            lam = 0.5
        elif lam != opts.damping and len(hist) > 1 and dmax < hist[-2][0]:
            # damping is only kept while the update is growing
            lam = opts.damping
        # joint response of all units to the present network solution: every
        # unit sees the same Thevenin model with all currents as unknowns
        n = len(units)
        ivec = np.array([currents[u.id] for u in units], dtype=complex).reshape(-1)
        zall = loop.z.reshape(2 * n, 2 * n)
        vth = np.array([vport[u.id] for u in units]).reshape(-1) - zall @ ivec
        sol = solve_ports([ctx[u.id] for u in units], vth.reshape(n, 2), loop.z,
                          [ops[u.id] for u in units], frozen=[frozen[u.id] for u in units])
        new = {}
        for k, (u, op) in enumerate(zip(units, sol)):
            trajectory[u.id].append(op)
            i_new = np.array([op.i1, op.i2])
            if lam != 1.0:
                i_new = lam * i_new + (1 - lam) * ivec[2 * k:2 * k + 2]
                op = replace(op, i1=complex(i_new[0]), i2=complex(i_new[1]))
            ops[u.id] = op
            new[u.id] = (complex(i_new[0]), complex(i_new[1]))
        currents = new
        prev_v = vport

    v = ss_voltages(loop.sys, x)
    for u in units:
        if not trajectory[u.id]:
            trajectory[u.id].append(ops[u.id])
    bus_v = {bb.id: np.array([v.get((bb.id, p), 0j) for p in PHASES]) for bb in network.buses}
    fc = np.zeros(3, dtype=complex)
    for nodes, y in loop.lin.faults:
        vn = np.array([v[nd] for nd in nodes])
        inj = y @ vn
        for nd, c in zip(nodes, inj):
            fc[PHASES.index(nd[1])] += c
    resid = loop.sys.matrix @ x - b
    lo = [s // 2 for _, s, _ in loop.sys.index.block("V")]
    kcl = float(np.max(np.abs(resid[lo]))) if lo else 0.0
    res = ScResult(fault, bus_v, _branch_currents(network, v), ops, trajectory, fc, it, converged,
                   trace, kcl, pf, time.perf_counter() - t0,
                   "" if converged else f"no convergence in {it} iterations (last max dV {hist[-1][0]:.3e})",
                   {u.id: loop.port_voltages(x)[u.id] for u in units})
    if not converged and raise_on_failure:
        raise NonConvergence(res.message, {"result": res, "trace": trace, "iterations": it})
    return res


def _oscillating(hist) -> bool:
    """The voltage update grew on two consecutive iterations."""
    if len(hist) < 3:
        return False
    d0, d1, d2 = (h[0] for h in hist[-3:])
    return d2 > d1 > d0


def sweep(network: NetworkModel, buses, kinds, z_list=(0.0,), opts: ScOptions | None = None,
          workers: int = 1) -> list:
    """Solve the cartesian product ``buses x kinds x z_list``.

    The pre-fault state is solved once.  Failing scenarios are recorded as
    results with ``converged=False`` (their ``message`` says why) instead of
    aborting the batch.  Output order is independent of ``workers``.
    """
    cases = [FaultSpec(b, k, z) for b, k, z in product(buses, kinds, z_list)]
    return solve_cases(network, cases, opts, workers)


def solve_cases(network: NetworkModel, cases, opts: ScOptions | None = None, workers: int = 1) -> list:
    """Solve an explicit list of :class:`FaultSpec` from one pre-fault state."""
    opts = opts or ScOptions.from_env()
    pf = solve_pf(network, opts.pf_tol, opts.pf_max_iter)
    lin = linearize(network, pf)

    def run(f):
        try:
            return solve_sc(network, f, opts, lin=lin, raise_on_failure=False)
        except (NetworkError, NonConvergence, ArithmeticError) as exc:
            return ScResult(f, {}, {}, {}, {}, np.zeros(3, dtype=complex), 0, False, [], pf=pf,
                            message=f"{type(exc).__name__}: {exc}")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(run, cases))
    return [run(f) for f in cases]
