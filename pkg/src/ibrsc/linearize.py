"""Linear steady-state equivalent of a converged power flow.

Loads become constant admittances at their solved voltages, generators become
EMFs frozen at their solved values behind the machine impedance, and every
converter unit becomes a controlled current injection plus a passive shunt
(zero-sequence admittance and optional filter).  The unfaulted solve of the
result reproduces the power-flow voltages.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .frt import prefault_context
from .mana import PfSolution, SingularSystem, assemble_ss, solve_linear
from .netmodel import PHASES, NetworkError, NetworkModel, SourceIdeal
from .seq import A_INV, A_MAT, seq_to_phase_matrix

__all__ = ["LinearizedNetwork", "linearize", "thevenin_at", "ss_voltages", "sequence_voltage",
           "fault_free"]


@dataclass(frozen=True)
class LinearizedNetwork:
    """Linear network consumed by :func:`ibrsc.mana.assemble_ss`.

    ``ibr_currents`` holds converter sequence currents ``(I1, I2)`` per unit;
    ``ibr_shunt`` the passive 3x3 admittance each unit leaves at its bus.
    ``faults`` is a tuple of ``(nodes, Y)`` stamps added on top.
    """

    network: NetworkModel
    pf: PfSolution | None
    load_y: dict
    gen_emf: dict
    taps: dict
    ibr_shunt: dict
    ibr_currents: dict
    contexts: dict = field(default_factory=dict)
    prefault: dict = field(default_factory=dict)
    faults: tuple = ()
    fault_specs: tuple = ()

    @property
    def injections(self) -> dict:
        out = {}
        for u in self.network.ibrs:
            i1, i2 = self.ibr_currents.get(u.id, (0j, 0j))
            iabc = A_MAT @ np.array([0j, i1, i2])
            for k, ph in enumerate(PHASES):
                out[(u.bus, ph)] = out.get((u.bus, ph), 0j) + iabc[k]
        return out

    def with_currents(self, currents: dict) -> "LinearizedNetwork":
        merged = dict(self.ibr_currents)
        merged.update(currents)
        return replace(self, ibr_currents=merged)


def linearize(net: NetworkModel, pf: PfSolution | None = None) -> LinearizedNetwork:
    """Substitute every nonlinear element by its linear equivalent at ``pf``.

    With ``pf=None`` the network must contain only linear elements (sources,
    branches, transformers, switches, constant-impedance loads); loads are then
    taken at nominal voltage.
    """
    load_y = {}
    for ld in net.loads:
        for ph in ld.phases:
            s = ld.s_of(ph)
            if ld.model == "constant-impedance" or pf is None:
                load_y[(ld.id, ph)] = s.conjugate()
                continue
            v = pf.voltage(ld.bus, ph)
            m2 = abs(v) ** 2
            if m2 < 1e-12:
                raise NetworkError(f"load {ld.id!r}: zero power-flow voltage on phase {ph}")
            load_y[(ld.id, ph)] = s.conjugate() / m2
    if pf is None and (net.generators or net.ibrs or any(r.mode == "voltage" for r in net.regulators)):
        raise NetworkError("a power-flow solution is required for generators, IBRs and voltage regulators")
    gen_emf = {g.id: pf.emf(g.id) for g in net.generators} if net.generators else {}
    taps = pf.taps if pf is not None else {(r.id, ph): r.tap_of(ph) for r in net.regulators for ph in r.phases}
    shunt, currents, ctxs, pre = {}, {}, {}, {}
    for u in net.ibrs:
        va = pf.bus_voltages(u.bus)
        ia = pf.ibr_currents(u.id)
        v = A_INV @ va
        i = A_INV @ ia
        ctx, op = prefault_context(u, net.s_base, v[1], v[2], i[1], i[2])
        yf = ctx.yf
        shunt[u.id] = seq_to_phase_matrix(u.k_zero, yf, yf)
        currents[u.id] = (op.i1, op.i2)
        ctxs[u.id] = ctx
        pre[u.id] = op
    return LinearizedNetwork(net, pf, load_y, gen_emf, taps, shunt, currents, ctxs, pre)


def fault_free(lin: LinearizedNetwork) -> LinearizedNetwork:
    return replace(lin, faults=(), fault_specs=())


def ss_voltages(sys, x) -> dict:
    """Node voltages of a solved SS system keyed by ``(bus, phase)``."""
    return {k: complex(x[s // 2]) for k, s, _ in sys.index.block("V")}


def sequence_voltage(sys, x, bus) -> np.ndarray:
    """Sequence voltages ``(V0, V1, V2)`` at a three-phase bus."""
    idx = sys.index
    va = np.array([x[idx.slot("V", (bus, ph)) // 2] for ph in PHASES])
    return A_INV @ va


def _zeroed(lin: LinearizedNetwork) -> LinearizedNetwork:
    net = lin.network
    srcs = tuple(SourceIdeal(s.id, s.bus, (0j, 0j, 0j), s.z_int) for s in net.sources)
    return replace(lin, network=net.replace(sources=srcs),
                   gen_emf={g: 0j for g in lin.gen_emf},
                   ibr_currents={u: (0j, 0j) for u in lin.ibr_currents})


def thevenin_at(lin: LinearizedNetwork, ibr: str):
    """Positive-sequence Thevenin pair ``(z_eq, v_eq)`` at a unit's LV bus.

    Two probing solves with the unit's converter and positive-sequence filter
    removed: a unit positive-sequence current into the source-free network
    gives ``z_eq``, and zero converter current into the live network gives
    ``v_eq``.  The unit's negative-sequence filter and zero-sequence shunt stay
    in place, as does its present negative-sequence converter current in the
    ``v_eq`` probe.
    """
    unit = lin.network.ibr(ibr)
    ctx = lin.contexts.get(ibr)
    yf = ctx.yf if ctx is not None else (0j if unit.z_filter is None else 1.0 / unit.z_filter)
    shunt = dict(lin.ibr_shunt)
    shunt[ibr] = seq_to_phase_matrix(unit.k_zero, 0.0, yf)

    probe = replace(_zeroed(lin), ibr_shunt=shunt)
    probe = probe.with_currents({ibr: (1.0 + 0j, 0j)})
    sys = assemble_ss(probe)
    try:
        x = solve_linear(sys)
    except SingularSystem as exc:
        raise SingularSystem(f"network is singular with sources zeroed at {ibr!r}: {exc}") from exc
    z_eq = sequence_voltage(sys, x, unit.bus)[1]

    i2 = lin.ibr_currents.get(ibr, (0j, 0j))[1]
    live = replace(lin, ibr_shunt=shunt).with_currents({ibr: (0j, i2)})
    sys = assemble_ss(live)
    x = solve_linear(sys)
    v_eq = sequence_voltage(sys, x, unit.bus)[1]
    return complex(z_eq), complex(v_eq)
