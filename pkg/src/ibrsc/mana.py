"""Modified augmented nodal analysis: steady-state and power-flow systems.

Both systems share one set of element stamps.  Every equation is written in
residual form ``f(x) = 0`` and is paired with the unknown that shares its key
in the :class:`~ibrsc.netmodel.IndexMap`, so the matrices are square block by
block:

========  ==========================================================
row key   equation
========  ==========================================================
V         KCL at a node (currents leaving into elements = injections)
Iv        source: ``V + Z_int I_v - E = 0``
Id        transformer winding / regulator voltage ratio
Is        switch: closed ``V_f - V_t = 0``, open ``I_s = 0``
IL        constant-power load: ``V conj(I_L) - S = 0``
IG        generator: ``V + Z_g I_G - E_phase = 0``
E         generator ``|E| = E_set`` and three-phase ``P = P_set``
g         regulator ``|V_to| = V_set``
IIBR      IBR positive-, negative- and zero-sequence constraints
========  ==========================================================

The power-flow system is solved in real-split form because the power and
magnitude constraints are not holomorphic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .netmodel import (
    PHASES,
    IndexMap,
    NetworkError,
    NetworkModel,
    _DSU,
    neg_seq_admittance,
    index_unknowns,
    transformer_windings,
    winding_ratio,
)
from .seq import A_INV, ALPHA, seq_to_phase_matrix

__all__ = [
    "ManaSystem",
    "PfSolution",
    "NonConvergence",
    "SingularSystem",
    "SteadyStateModel",
    "nominal_steady_state",
    "assemble_ss",
    "solve_linear",
    "residuals",
    "residual_function",
    "assemble_pf_jacobian",
    "solve_pf",
    "flat_start",
    "PHASE_ROT",
]

#: Balanced positive-sequence rotation of phases A, B, C.
PHASE_ROT = {"A": 1.0 + 0j, "B": ALPHA**2, "C": ALPHA}


class SingularSystem(NetworkError):
    """The assembled matrix is structurally or numerically singular."""


class NonConvergence(RuntimeError):
    """An iterative solve stopped without meeting its tolerance.

    ``diagnostics`` carries the iterate history and the worst residual row so
    that a physically meaningful failure can be reported rather than hidden.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


# --------------------------------------------------------------------------
# element stamps
# --------------------------------------------------------------------------

class _Stamps:
    """Collects complex-linear stamps keyed by (block, key) pairs."""

    def __init__(self):
        self.lin = []  # (row, col, coef)
        self.const = []  # (row, value)

    def add(self, row, col, coef):
        if coef != 0:
            self.lin.append((row, col, complex(coef)))

    def c(self, row, value):
        if value != 0:
            self.const.append((row, complex(value)))


def _stamp_network(st: _Stamps, net: NetworkModel, formulation: str, *, taps=None):
    """Stamps shared by both formulations (passive elements and constraints)."""
    for br in net.branches:
        ph = br.phases
        z, y = br.sub(ph)
        ys = np.linalg.inv(z)
        f = [(br.from_bus, p) for p in ph]
        t = [(br.to_bus, p) for p in ph]
        for i in range(len(ph)):
            for j in range(len(ph)):
                st.add(("V", f[i]), ("V", f[j]), ys[i, j] + 0.5 * y[i, j])
                st.add(("V", t[i]), ("V", t[j]), ys[i, j] + 0.5 * y[i, j])
                st.add(("V", f[i]), ("V", t[j]), -ys[i, j])
                st.add(("V", t[i]), ("V", f[j]), -ys[i, j])

    for s in net.sources:
        for i, ph in enumerate(PHASES):
            row = ("Iv", (s.id, ph))
            st.add(("V", (s.bus, ph)), row, -1.0)
            st.add(row, ("V", (s.bus, ph)), 1.0)
            for k, pk in enumerate(PHASES):
                st.add(row, ("Iv", (s.id, pk)), s.z_int[i, k])
            st.c(row, -s.e_abc[i])

    for t in net.transformers:
        n = winding_ratio(t)
        k1 = math.sqrt(3.0) if t.conn_from == "delta" else 1.0
        zw = t.z_leak * k1 * k1
        w1, w2 = transformer_windings(t)
        for k in range(3):
            row = ("Id", (t.id, k))
            (p1, q1), (p2, q2) = w1[k], w2[k]
            for node, sgn in ((p1, 1.0), (q1, -1.0), (p2, -n), (q2, n)):
                if node is not None:
                    st.add(row, ("V", node), sgn)
            st.add(row, row, -zw)
            # KCL: winding-1 current leaves p1, enters q1; winding 2 carries -n I
            for node, sgn in ((p1, 1.0), (q1, -1.0), (p2, -n), (q2, n)):
                if node is not None:
                    st.add(("V", node), row, sgn)

    for r in net.regulators:
        for ph in r.phases:
            row = ("Id", (r.id, ph))
            st.add(row, ("V", (r.to_bus, ph)), -1.0)
            st.add(("V", (r.to_bus, ph)), row, -1.0)
            if r.mode == "fixed" or formulation == "SS" or taps is not None:
                g = r.tap_of(ph) if taps is None else taps[(r.id, ph)]
                st.add(row, ("V", (r.from_bus, ph)), g)
                st.add(("V", (r.from_bus, ph)), row, g)

    for s in net.switches:
        for ph in s.phases:
            row = ("Is", (s.id, ph))
            st.add(("V", (s.from_bus, ph)), row, 1.0)
            st.add(("V", (s.to_bus, ph)), row, -1.0)
            if s.closed(ph):
                st.add(row, ("V", (s.from_bus, ph)), 1.0)
                st.add(row, ("V", (s.to_bus, ph)), -1.0)
            else:
                st.add(row, row, 1.0)


def _stamp_shunt(st: _Stamps, bus, phases, y):
    for i, pi in enumerate(phases):
        for j, pj in enumerate(phases):
            st.add(("V", (bus, pi)), ("V", (bus, pj)), y[i, j])


# --------------------------------------------------------------------------
# steady-state (linear) system
# --------------------------------------------------------------------------

@dataclass
class ManaSystem:
    """Assembled MANA system ``matrix @ x = rhs``.

    For ``kind == "SS"`` the matrix is complex over complex unknowns (entry
    ``i`` is the unknown at real slot ``2 i``).  For ``kind == "PF"`` it is the
    real-split Jacobian and ``rhs`` is ``-f``.
    """

    matrix: sp.spmatrix
    rhs: np.ndarray
    index: IndexMap
    kind: str
    meta: dict = field(default_factory=dict)
    _lu: object = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def factorize(self):
        if self._lu is None:
            try:
                self._lu = spla.splu(sp.csc_matrix(self.matrix))
            except RuntimeError as exc:
                raise SingularSystem(f"singular {self.kind} matrix: {exc}") from exc
        return self._lu

    def solve(self, rhs=None) -> np.ndarray:
        b = self.rhs if rhs is None else rhs
        x = self.factorize().solve(np.asarray(b))
        if not np.all(np.isfinite(x)):
            raise SingularSystem(f"non-finite solution of the {self.kind} system")
        return x


@dataclass(frozen=True)
class SteadyStateModel:
    """Linear network description consumed by :func:`assemble_ss`.

    ``load_y`` maps ``(load_id, phase)`` to a shunt admittance, ``gen_emf`` maps
    a generator to its positive-sequence EMF, ``taps`` fixes regulator ratios,
    ``ibr_shunt`` maps an IBR to its 3x3 phase admittance and ``injections``
    maps ``(bus, phase)`` to injected current.  ``faults`` is a tuple of
    ``(nodes, Y)`` admittance stamps.
    """

    network: NetworkModel
    load_y: dict
    gen_emf: dict
    taps: dict
    ibr_shunt: dict
    injections: dict
    faults: tuple = ()


def nominal_steady_state(net: NetworkModel) -> SteadyStateModel:
    """Linear model at nominal voltage: loads as impedances at 1 pu, generators
    as balanced EMFs ``e_set`` at zero angle, IBRs as balanced current sources
    delivering their setpoints at 1 pu positive-sequence voltage."""
    load_y = {}
    for ld in net.loads:
        for ph in ld.phases:
            load_y[(ld.id, ph)] = ld.s_of(ph).conjugate()
    gen_emf = {g.id: complex(g.e_set) for g in net.generators}
    taps = {(r.id, ph): r.tap_of(ph) for r in net.regulators for ph in r.phases}
    inj = {}
    shunt = {}
    for u in net.ibrs:
        i1 = complex(u.p_ref, -u.q_ref)  # conj(S / V) with V = 1
        for ph in PHASES:
            inj[(u.bus, ph)] = inj.get((u.bus, ph), 0) + i1 * PHASE_ROT[ph]
        shunt[u.id] = seq_to_phase_matrix(u.k_zero, 0.0, neg_seq_admittance(u, net.s_base))
    return SteadyStateModel(net, load_y, gen_emf, taps, shunt, inj)


def _ss_stamps(model: SteadyStateModel) -> _Stamps:
    net = model.network
    fixed = net.replace(regulators=tuple(replace(r, mode="fixed") for r in net.regulators))
    st = _Stamps()
    _stamp_network(st, fixed, "SS", taps=model.taps or None)
    for ld in net.loads:
        for ph in ld.phases:
            st.add(("V", (ld.bus, ph)), ("V", (ld.bus, ph)), model.load_y[(ld.id, ph)])
    for g in net.generators:
        e = model.gen_emf[g.id]
        for i, ph in enumerate(PHASES):
            row = ("Iv", (g.id, ph))
            st.add(("V", (g.bus, ph)), row, -1.0)
            st.add(row, ("V", (g.bus, ph)), 1.0)
            for k, pk in enumerate(PHASES):
                st.add(row, ("Iv", (g.id, pk)), g.z_abc[i, k])
            st.c(row, -e * PHASE_ROT[ph])
    for u in net.ibrs:
        y = model.ibr_shunt.get(u.id)
        if y is not None:
            _stamp_shunt(st, u.bus, PHASES, y)
    for nodes, y in model.faults:
        for i, ni in enumerate(nodes):
            for j, nj in enumerate(nodes):
                st.add(("V", ni), ("V", nj), y[i, j])
    for node, cur in model.injections.items():
        st.c(("V", node), -cur)
    return st


def _complex_matrix(st: _Stamps, index: IndexMap):
    n = index.size // 2
    rows, cols, vals = [], [], []
    for r, c, v in st.lin:
        rows.append(index.slot(*r) // 2)
        cols.append(index.slot(*c) // 2)
        vals.append(v)
    a = sp.csc_matrix((vals, (rows, cols)), shape=(n, n), dtype=complex)
    b = np.zeros(n, dtype=complex)
    for r, v in st.const:
        b[index.slot(*r) // 2] -= v
    return a, b


def assemble_ss(model) -> ManaSystem:
    """Assemble the linear steady-state system ``A x = b``.

    ``model`` is a :class:`SteadyStateModel` (e.g. a linearized network) or a
    plain :class:`NetworkModel`, which is first converted at nominal voltage.
    """
    if isinstance(model, NetworkModel):
        model = nominal_steady_state(model)
    index = index_unknowns(model.network, "SS")
    st = _ss_stamps(model)
    a, b = _complex_matrix(st, index)
    _check_structure(a, index, model.network)
    _check_grounding(model)
    return ManaSystem(a, b, index, "SS", meta={"model": model})


def _check_grounding(model: SteadyStateModel):
    """Every island needs a shunt path to ground or a source, else its node
    voltages are undetermined."""
    net = model.network
    dsu = _DSU([b.id for b in net.buses])
    for e in (*net.branches, *net.transformers, *net.regulators):
        dsu.union(e.from_bus, e.to_bus)
    for sw in net.switches:
        if any(sw.closed(p) for p in sw.phases):
            dsu.union(sw.from_bus, sw.to_bus)
    anchored = {dsu.find(e.bus) for e in (*net.sources, *net.generators)}
    anchored |= {dsu.find(ld.bus) for ld in net.loads
                 if any(model.load_y.get((ld.id, p), 0) != 0 for p in ld.phases)}
    anchored |= {dsu.find(u.bus) for u in net.ibrs
                 if model.ibr_shunt.get(u.id) is not None and np.any(model.ibr_shunt[u.id])}
    anchored |= {dsu.find(br.from_bus) for br in net.branches if np.any(br.y_shunt_abc)}
    anchored |= {dsu.find(nodes[0][0]) for nodes, _ in model.faults if nodes}
    islands = {}
    for b in net.buses:
        islands.setdefault(dsu.find(b.id), []).append(b.id)
    for root, members in islands.items():
        if root not in anchored:
            raise SingularSystem(f"floating island at {sorted(members)}: no source or path to ground")


def _check_structure(a, index: IndexMap, net: NetworkModel):
    n = a.shape[0]
    if n == 0:
        return
    pattern = sp.csr_matrix((np.ones(a.nnz), a.nonzero()), shape=a.shape)
    from scipy.sparse.csgraph import maximum_bipartite_matching

    match = maximum_bipartite_matching(pattern, perm_type="column")
    if np.any(match < 0):
        labels = index.labels()[::2]
        bad = [labels[i] for i in np.flatnonzero(match < 0)]
        buses = sorted({lb.split("[")[1].split(",")[0] for lb in bad if lb.startswith("V[")})
        what = f"floating island at {buses}" if buses else f"unknowns {bad[:6]}"
        raise SingularSystem(f"structurally singular system: {what}")


def ss_rhs(sys: ManaSystem, injections: dict) -> np.ndarray:
    """Right-hand side of an assembled SS system with replaced injections."""
    model = sys.meta["model"]
    b = sys.rhs.copy()
    idx = sys.index
    for node, cur in model.injections.items():
        b[idx.slot("V", node) // 2] -= cur
    for node, cur in injections.items():
        b[idx.slot("V", node) // 2] += cur
    return b


def solve_linear(sys: ManaSystem, rhs=None) -> np.ndarray:
    """Sparse LU solve with a relative residual check."""
    b = sys.rhs if rhs is None else np.asarray(rhs)
    x = sys.solve(b)
    r = sys.matrix @ x - b
    scale = max(np.max(np.abs(b)) if b.size else 0.0, 1e-300)
    if b.size and np.max(np.abs(r)) > 1e-10 * scale:
        raise SingularSystem(f"linear solve residual {np.max(np.abs(r)):.3e} exceeds tolerance")
    return x


# --------------------------------------------------------------------------
# power flow
# --------------------------------------------------------------------------

@dataclass
class PfSolution:
    """Power-flow state: the real-split unknown vector plus convenient views."""

    network: NetworkModel
    index: IndexMap
    x: np.ndarray
    iterations: int
    residual_norm: float
    converged: bool = True
    history: list = field(default_factory=list)

    def value(self, block, key) -> complex:
        s = self.index.slot(block, key)
        return complex(self.x[s], self.x[s + 1])

    def voltage(self, bus, phase) -> complex:
        return self.value("V", (bus, phase))

    def bus_voltages(self, bus) -> np.ndarray:
        b = self.network.bus(bus)
        return np.array([self.voltage(bus, p) if p in b.phases else 0j for p in PHASES])

    @property
    def voltages(self) -> dict:
        return {k: complex(self.x[s], self.x[s + 1]) for k, s, _ in self.index.block("V")}

    def block_values(self, block) -> dict:
        return {k: (complex(self.x[s], self.x[s + 1]) if w == 2 else float(self.x[s]))
                for k, s, w in self.index.block(block)}

    def ibr_currents(self, ibr_id) -> np.ndarray:
        return np.array([self.value("IIBR", (ibr_id, p)) for p in PHASES])

    def emf(self, gen_id) -> complex:
        return self.value("E", (gen_id,))

    @property
    def taps(self) -> dict:
        out = {}
        for r in self.network.regulators:
            for ph in r.phases:
                if ("g", (r.id, ph)) in self.index:
                    out[(r.id, ph)] = float(self.x[self.index.slot("g", (r.id, ph))])
                else:
                    out[(r.id, ph)] = r.tap_of(ph)
        return out


def _angle_reference_gfms(net: NetworkModel) -> set:
    """GFMs that act as the angle reference of an island without ideal sources."""
    ids = [b.id for b in net.buses]
    dsu = _DSU(ids)
    for e in (*net.branches, *net.transformers, *net.regulators):
        dsu.union(e.from_bus, e.to_bus)
    for s in net.switches:
        if any(s.closed(p) for p in s.phases):
            dsu.union(s.from_bus, s.to_bus)
    with_source = {dsu.find(s.bus) for s in net.sources}
    refs = set()
    taken = set()
    for u in net.ibrs:
        root = dsu.find(u.bus)
        if u.mode == "GFM" and root not in with_source and root not in taken:
            refs.add(u.id)
            taken.add(root)
    return refs


class _PfModel:
    """Residual and Jacobian evaluator for one network."""

    def __init__(self, net: NetworkModel):
        self.net = net
        self.index = index_unknowns(net, "PF")
        self.n = self.index.size
        self.angle_refs = _angle_reference_gfms(net)
        st = _Stamps()
        _stamp_network(st, net, "PF")
        for ld in net.loads:
            if ld.model == "constant-impedance":
                for ph in ld.phases:
                    st.add(("V", (ld.bus, ph)), ("V", (ld.bus, ph)), ld.s_of(ph).conjugate())
            else:
                for ph in ld.phases:
                    st.add(("V", (ld.bus, ph)), ("IL", (ld.id, ph)), 1.0)
        for g in net.generators:
            for i, ph in enumerate(PHASES):
                row = ("IG", (g.id, ph))
                st.add(("V", (g.bus, ph)), row, -1.0)
                st.add(row, ("V", (g.bus, ph)), 1.0)
                for k, pk in enumerate(PHASES):
                    st.add(row, ("IG", (g.id, pk)), g.z_abc[i, k])
                st.add(row, ("E", (g.id,)), -PHASE_ROT[ph])
        for u in net.ibrs:
            rneg, rzero = ("IIBR", (u.id, "B")), ("IIBR", (u.id, "C"))
            kneg = neg_seq_admittance(u, net.s_base)
            for j, ph in enumerate(PHASES):
                st.add(("V", (u.bus, ph)), ("IIBR", (u.id, ph)), -1.0)
                # K_neg V_2 - I_2,abs = 0 with I_abs = -I_inj
                st.add(rneg, ("V", (u.bus, ph)), kneg * A_INV[2, j])
                st.add(rneg, ("IIBR", (u.id, ph)), A_INV[2, j])
                st.add(rzero, ("V", (u.bus, ph)), u.k_zero * A_INV[0, j])
                st.add(rzero, ("IIBR", (u.id, ph)), A_INV[0, j])
        rows, cols, vals = [], [], []
        idx = self.index
        for r, c, v in st.lin:
            rs, cs = idx.slot(*r), idx.slot(*c)
            rows += [rs, rs, rs + 1, rs + 1]
            cols += [cs, cs + 1, cs, cs + 1]
            vals += [v.real, -v.imag, v.imag, v.real]
        self.L = sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))
        self.c = np.zeros(self.n)
        for r, v in st.const:
            s = idx.slot(*r)
            self.c[s] += v.real
            self.c[s + 1] += v.imag
        self.vreg = [r for r in net.regulators if r.mode == "voltage"]

    # -- helpers --------------------------------------------------------
    def _cv(self, x, block, key):
        s = self.index.slot(block, key)
        return complex(x[s], x[s + 1]), s

    def evaluate(self, x, jacobian=True):
        f = self.L @ x + self.c
        rows, cols, vals = [], [], []

        def rgrad(r, s, g):
            rows.extend((r, r))
            cols.extend((s, s + 1))
            vals.extend((g.real, g.imag))

        def clin(r, s, coef):
            rows.extend((r, r, r + 1, r + 1))
            cols.extend((s, s + 1, s, s + 1))
            vals.extend((coef.real, -coef.imag, coef.imag, coef.real))

        def creal(r, t, d):
            rows.extend((r, r + 1))
            cols.extend((t, t))
            vals.extend((d.real, d.imag))

        idx = self.index
        net = self.net
        for r in self.vreg:
            for ph in r.phases:
                tslot = idx.slot("g", (r.id, ph))
                g = x[tslot]
                vf, sf = self._cv(x, "V", (r.from_bus, ph))
                vt, st_ = self._cv(x, "V", (r.to_bus, ph))
                cur, sc = self._cv(x, "Id", (r.id, ph))
                # g V_f in the ratio row, g I in the from-node KCL row
                term = g * vf
                f[sc] += term.real
                f[sc + 1] += term.imag
                kcl = g * cur
                f[sf] += kcl.real
                f[sf + 1] += kcl.imag
                mag = abs(vt)
                f[tslot] = mag - r.v_set
                if jacobian:
                    clin(sc, sf, complex(g))
                    creal(sc, tslot, vf)
                    clin(sf, sc, complex(g))
                    creal(sf, tslot, cur)
                    rgrad(tslot, st_, vt / mag if mag > 0 else 1.0 + 0j)

        for ld in net.loads:
            if ld.model != "constant-power":
                continue
            for ph in ld.phases:
                v, sv = self._cv(x, "V", (ld.bus, ph))
                i, si = self._cv(x, "IL", (ld.id, ph))
                s = v * i.conjugate() - ld.s_of(ph)
                f[si] += s.real
                f[si + 1] += s.imag
                if jacobian:
                    rgrad(si, sv, i)          # d Re(V conj I)/dV
                    rgrad(si, si, v)          # d Re(V conj I)/dI
                    rgrad(si + 1, sv, 1j * i)
                    rgrad(si + 1, si, -1j * v)

        for gen in net.generators:
            e, se = self._cv(x, "E", (gen.id,))
            mag = abs(e)
            f[se] += mag - gen.e_set
            p = 0.0
            for ph in PHASES:
                v, sv = self._cv(x, "V", (gen.bus, ph))
                i, si = self._cv(x, "IG", (gen.id, ph))
                p += (v * i.conjugate()).real / 3.0
                if jacobian:
                    rgrad(se + 1, sv, i / 3.0)
                    rgrad(se + 1, si, v / 3.0)
            f[se + 1] += p - gen.p_set
            if jacobian:
                rgrad(se, se, e / mag if mag > 0 else 1.0 + 0j)

        for u in net.ibrs:
            va = np.array([self._cv(x, "V", (u.bus, ph))[0] for ph in PHASES])
            ia = np.array([self._cv(x, "IIBR", (u.id, ph))[0] for ph in PHASES])
            vs = [idx.slot("V", (u.bus, ph)) for ph in PHASES]
            isl = [idx.slot("IIBR", (u.id, ph)) for ph in PHASES]
            v1 = A_INV[1] @ va
            i1 = A_INV[1] @ ia
            s1 = v1 * i1.conjugate()
            r0 = isl[0]
            if u.id in self.angle_refs:
                f[r0] += v1.imag
                if jacobian:
                    for j in range(3):
                        rgrad(r0, vs[j], 1j * A_INV[1, j].conjugate())
            else:
                f[r0] += u.p_ref - s1.real
                if jacobian:
                    for j in range(3):
                        a = A_INV[1, j]
                        rgrad(r0, vs[j], -(a.conjugate() * i1))
                        rgrad(r0, isl[j], -(v1 * a.conjugate()))
            if u.mode == "GFL":
                f[r0 + 1] += u.q_ref - s1.imag
                if jacobian:
                    for j in range(3):
                        a = A_INV[1, j]
                        rgrad(r0 + 1, vs[j], -(1j * a.conjugate() * i1))
                        rgrad(r0 + 1, isl[j], -(-1j * v1 * a.conjugate()))
            else:
                m = abs(v1)
                f[r0 + 1] += u.v_ref - m
                if jacobian:
                    for j in range(3):
                        rgrad(r0 + 1, vs[j], -(v1 * A_INV[1, j].conjugate() / m))

        if not jacobian:
            return f, None
        jnl = sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))
        return f, (self.L + jnl).tocsc()

    def flat_start(self) -> np.ndarray:
        x = np.zeros(self.n)
        for (bus, ph), s, _ in self.index.block("V"):
            if ph in PHASE_ROT:
                v = PHASE_ROT[ph]
                x[s], x[s + 1] = v.real, v.imag
        for (gid,), s, _ in self.index.block("E"):
            gen = next(g for g in self.net.generators if g.id == gid)
            x[s] = gen.e_set
        for key, s, _ in self.index.block("g"):
            x[s] = 1.0
        return x


def flat_start(net: NetworkModel) -> np.ndarray:
    return _PfModel(net).flat_start()


def residuals(net: NetworkModel, x) -> np.ndarray:
    """Stacked PF residual vector in index order."""
    return _PfModel(net).evaluate(np.asarray(x, dtype=float), jacobian=False)[0]


def residual_function(net: NetworkModel):
    """``f(x)`` bound to one network; the linear stamps are assembled once."""
    model = _PfModel(net)
    return lambda x: model.evaluate(np.asarray(x, dtype=float), jacobian=False)[0]


def assemble_pf_jacobian(net: NetworkModel, x) -> ManaSystem:
    """Real-split PF Jacobian at ``x``; ``rhs`` is ``-f(x)``."""
    model = _PfModel(net)
    f, j = model.evaluate(np.asarray(x, dtype=float))
    return ManaSystem(j, -f, model.index, "PF", meta={"residual": f})


def _newton(model: _PfModel, x, tol, max_iter, history):
    it = 0
    f, jac = model.evaluate(x)
    norm = float(np.max(np.abs(f))) if f.size else 0.0
    history.append(norm)
    while norm >= tol and it < max_iter:
        try:
            lu = spla.splu(jac)
        except RuntimeError as exc:
            raise SingularSystem(f"singular PF Jacobian at iteration {it}: {exc}") from exc
        dx = lu.solve(-f)
        if not np.all(np.isfinite(dx)):
            break
        x = x + dx
        it += 1
        f, jac = model.evaluate(x)
        norm = float(np.max(np.abs(f))) if f.size else 0.0
        history.append(norm)
        if not np.isfinite(norm):
            break
    return x, it, norm, f, jac


def solve_pf(net: NetworkModel, tol: float = 1e-8, max_iter: int = 50, start=None,
             round_taps: bool = True) -> PfSolution:
    """Full Newton-Raphson power flow.

    ``start`` is ``None``/``"flat"`` or a previous :class:`PfSolution` (warm
    start, matched by unknown key).  After convergence one extra Newton step
    polishes the state so downstream linear solves reproduce it to round-off.
    Voltage-controlled regulator taps are rounded to their step and the flow
    is re-solved with the taps fixed.
    """
    model = _PfModel(net)
    if start is None or (isinstance(start, str) and start == "flat"):
        x0 = model.flat_start()
    elif isinstance(start, PfSolution):
        x0 = model.flat_start()
        for block, key, s, w in model.index.entries:
            if (block, key) in start.index:
                s0 = start.index.slot(block, key)
                x0[s:s + w] = start.x[s0:s0 + w]
    else:
        x0 = np.asarray(start, dtype=float).copy()
    history: list = []
    x, it, norm, f, jac = _newton(model, x0, tol, max_iter, history)
    if not norm < tol:
        worst = int(np.nanargmax(np.abs(f))) if f.size and np.all(np.isfinite(f)) else -1
        label = model.index.labels()[worst] if worst >= 0 else "non-finite iterate"
        raise NonConvergence(
            f"power flow did not converge in {it} iterations (|f|inf = {norm:.3e}, worst row {label})",
            {"history": history, "worst_row": label, "iterations": it, "x": x},
        )
    if f.size:
        try:
            x = x + spla.splu(jac).solve(-f)
            f, _ = model.evaluate(x, jacobian=False)
            norm = float(np.max(np.abs(f)))
        except RuntimeError:
            pass
    sol = PfSolution(net, model.index, x, it, norm, True, history)
    if round_taps and model.vreg:
        taps = sol.taps
        regs = []
        for r in net.regulators:
            if r.mode == "voltage":
                t = []
                for ph in PHASES:
                    if ph in r.phases:
                        v = min(max(taps[(r.id, ph)], r.tap_min), r.tap_max)
                        v = r.tap_min + round((v - r.tap_min) / r.step) * r.step
                        t.append(min(v, r.tap_max))
                    else:
                        t.append(r.tap_of(ph))
                r = replace(r, mode="fixed", tap=tuple(t))
            regs.append(r)
        fixed = net.replace(regulators=tuple(regs))
        sol2 = solve_pf(fixed, tol, max_iter, start=sol, round_taps=False)
        sol2.iterations += sol.iterations
        sol2.history = history + sol2.history
        return sol2
    return sol
