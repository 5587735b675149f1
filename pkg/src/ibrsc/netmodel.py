"""Network data model, per-unit bases, validation and unknown indexing.

All quantities held by the model are per-unit.  Voltages are phase-to-ground
on the bus phase base ``base_kv / sqrt(3)``; currents are on
``s_base / (sqrt(3) * base_kv)``.  Per-phase powers are on the per-phase base
``s_base / 3`` so that a balanced load of 1 pu per phase is 1 pu three-phase.
Angles are radians; degrees only appear in file I/O.
"""
from __future__ import annotations

import cmath
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Literal

import numpy as np

from .seq import seq_to_phase_matrix

__all__ = [
    "PHASES",
    "Phasor",
    "Bus",
    "Branch",
    "Transformer",
    "Regulator",
    "Load",
    "SourceIdeal",
    "Switch",
    "Generator",
    "IbrUnit",
    "ibr_scale",
    "neg_seq_admittance",
    "PerUnitBase",
    "NetworkModel",
    "ValidationIssue",
    "ValidationReport",
    "validate",
    "IndexMap",
    "index_unknowns",
    "NetworkError",
]

PHASES = ("A", "B", "C")
PIDX = {"A": 0, "B": 1, "C": 2}

Connection = Literal["wye-grounded", "wye", "delta"]


class NetworkError(ValueError):
    """Raised for structurally invalid networks."""


@dataclass(frozen=True)
class Phasor:
    """Complex per-unit quantity stored in rectangular form."""

    re: float
    im: float

    @classmethod
    def from_complex(cls, z: complex) -> "Phasor":
        z = complex(z)
        return cls(z.real, z.imag)

    @classmethod
    def polar(cls, mag: float, ang: float) -> "Phasor":
        return cls.from_complex(cmath.rect(mag, ang))

    def magnitude(self) -> float:
        return math.hypot(self.re, self.im)

    def angle(self) -> float:
        return math.atan2(self.im, self.re)

    def to_polar(self) -> tuple[float, float]:
        return self.magnitude(), self.angle()

    def __complex__(self) -> complex:
        return complex(self.re, self.im)


def _as_phases(phases: Iterable[str]) -> tuple[str, ...]:
    ph = tuple(sorted(set(p.upper() for p in phases), key=PIDX.__getitem__))
    for p in ph:
        if p not in PIDX:
            raise NetworkError(f"unknown phase {p!r}")
    return ph


def _mat3(m) -> np.ndarray:
    a = np.zeros((3, 3), dtype=complex) if m is None else np.array(m, dtype=complex)
    if a.shape != (3, 3):
        raise NetworkError(f"expected a 3x3 matrix, got shape {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Bus:
    id: str
    phases: tuple[str, ...] = PHASES
    base_kv: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "phases", _as_phases(self.phases))
        if not self.phases:
            raise NetworkError(f"bus {self.id!r} has no phases")
        if not self.base_kv > 0:
            raise NetworkError(f"bus {self.id!r}: base_kv must be positive")


@dataclass(frozen=True, eq=False)
class Branch:
    """Series-impedance pi section; shunt admittance is split between both ends."""

    id: str
    from_bus: str
    to_bus: str
    z_abc: np.ndarray
    y_shunt_abc: np.ndarray = None
    phases: tuple[str, ...] = PHASES

    def __post_init__(self):
        object.__setattr__(self, "z_abc", _mat3(self.z_abc))
        object.__setattr__(self, "y_shunt_abc", _mat3(self.y_shunt_abc))
        object.__setattr__(self, "phases", _as_phases(self.phases))

    @classmethod
    def from_sequence(cls, id, from_bus, to_bus, z1, z0, b1=0.0, b0=None, phases=PHASES):
        """Build from sequence parameters (total series z1/z0, total shunt susceptance)."""
        b0 = b1 if b0 is None else b0
        z = seq_to_phase_matrix(z0, z1)
        y = seq_to_phase_matrix(1j * b0, 1j * b1)
        return cls(id, from_bus, to_bus, z, y, phases)

    def sub(self, phases) -> tuple[np.ndarray, np.ndarray]:
        ix = [PIDX[p] for p in phases]
        return self.z_abc[np.ix_(ix, ix)], self.y_shunt_abc[np.ix_(ix, ix)]


@dataclass(frozen=True)
class Transformer:
    """Three-phase two-winding transformer.

    ``delta_shift`` picks the delta winding orientation: ``"lag"`` places
    winding k across phases (k, k-1), ``"lead"`` across (k, k+1).  With the
    delta on the ``from`` side, ``"lag"`` makes the ``to`` side lag by 30 deg.
    ``z0_path`` optionally records the zero-sequence impedance seen from the
    grounded side; ``"blocked"`` or ``None`` means no grounded path is declared.
    """

    id: str
    from_bus: str
    to_bus: str
    conn_from: Connection = "delta"
    conn_to: Connection = "wye-grounded"
    tap: float = 1.0
    z_leak: complex = 0.01 + 0.08j
    z0_path: complex | str | None = None
    delta_shift: Literal["lag", "lead"] = "lag"

    def __post_init__(self):
        if not self.tap > 0:
            raise NetworkError(f"transformer {self.id!r}: tap must be positive")
        if not abs(self.z_leak) > 0:
            raise NetworkError(f"transformer {self.id!r}: leakage impedance must be nonzero")
        for c in (self.conn_from, self.conn_to):
            if c not in ("wye-grounded", "wye", "delta"):
                raise NetworkError(f"transformer {self.id!r}: unknown connection {c!r}")


@dataclass(frozen=True)
class Regulator:
    """Per-phase step voltage regulator (wye); ``to`` side voltage = tap * ``from``."""

    id: str
    from_bus: str
    to_bus: str
    phases: tuple[str, ...] = PHASES
    tap: tuple[float, ...] = (1.0, 1.0, 1.0)
    mode: Literal["fixed", "voltage"] = "voltage"
    v_set: float = 1.0
    step: float = 0.00625
    tap_min: float = 0.9
    tap_max: float = 1.1

    def __post_init__(self):
        object.__setattr__(self, "phases", _as_phases(self.phases))
        tap = tuple(float(t) for t in self.tap)
        if len(tap) == 1:
            tap = tap * 3
        object.__setattr__(self, "tap", tap)

    def tap_of(self, phase: str) -> float:
        return self.tap[PIDX[phase]]


@dataclass(frozen=True)
class Load:
    """Wye-grounded load; ``s`` holds per-phase complex power (per-phase base)."""

    id: str
    bus: str
    s: tuple[complex, ...]
    phases: tuple[str, ...] = PHASES
    model: Literal["constant-power", "constant-impedance"] = "constant-power"

    def __post_init__(self):
        object.__setattr__(self, "phases", _as_phases(self.phases))
        s = tuple(complex(x) for x in self.s)
        if len(s) == 1:
            s = s * len(self.phases)
        if len(s) != len(self.phases):
            raise NetworkError(f"load {self.id!r}: one power value per phase expected")
        object.__setattr__(self, "s", s)

    def s_of(self, phase: str) -> complex:
        return self.s[self.phases.index(phase)]


@dataclass(frozen=True, eq=False)
class SourceIdeal:
    """Grounded-wye ideal source ``e_abc`` behind ``z_int``."""

    id: str
    bus: str
    e_abc: tuple[complex, complex, complex] = (1.0, complex(-0.5, -math.sqrt(3) / 2), complex(-0.5, math.sqrt(3) / 2))
    z_int: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "e_abc", tuple(complex(e) for e in self.e_abc))
        object.__setattr__(self, "z_int", _mat3(self.z_int))

    @classmethod
    def balanced(cls, id, bus, mag=1.0, ang=0.0, z1=0.0, z0=None):
        e = tuple(cmath.rect(mag, ang + k) for k in (0.0, -2 * math.pi / 3, 2 * math.pi / 3))
        z0 = z1 if z0 is None else z0
        return cls(id, bus, e, seq_to_phase_matrix(z0, z1))


@dataclass(frozen=True)
class Switch:
    id: str
    from_bus: str
    to_bus: str
    status: tuple[int, int, int] = (1, 1, 1)
    phases: tuple[str, ...] = PHASES

    def __post_init__(self):
        object.__setattr__(self, "phases", _as_phases(self.phases))
        st = tuple(int(s) for s in self.status)
        if any(s not in (0, 1) for s in st) or len(st) != 3:
            raise NetworkError(f"switch {self.id!r}: status must be three 0/1 flags")
        object.__setattr__(self, "status", st)

    def closed(self, phase: str) -> bool:
        return bool(self.status[PIDX[phase]])


@dataclass(frozen=True, eq=False)
class Generator:
    """Synchronous machine: balanced EMF behind ``z_abc``, P and |E| regulated."""

    id: str
    bus: str
    p_set: float
    e_set: float = 1.0
    z_abc: np.ndarray = None

    def __post_init__(self):
        z = _mat3(self.z_abc if self.z_abc is not None else seq_to_phase_matrix(0.05j, 0.2j))
        object.__setattr__(self, "z_abc", z)


@dataclass(frozen=True)
class IbrUnit:
    """Inverter-based resource at the LV side of its step-up transformer.

    Current limits (``i_max``), ``k_factor`` and ``kappa`` are on the unit's own
    rating ``s_rated``; powers, voltages and admittances (``k_neg``,
    ``k_zero``, ``z_filter``) are on the system base.  ``k_neg`` and
    ``k_zero`` are absorbed-current admittances (``I_abs = K V``).  Leaving
    ``k_neg`` unset derives it from the fault-time negative-sequence law, see
    :func:`neg_seq_admittance`.
    """

    id: str
    bus: str
    mode: Literal["GFL", "GFM"] = "GFL"
    s_rated: float = 1.0
    i_max: float = 1.1
    p_ref: float = 0.0
    q_ref: float = 0.0
    v_ref: float = 1.0
    k_factor: float = 2.0
    k_neg: complex | None = None
    k_zero: complex = 0.0
    z_filter: complex | None = None
    phi: float = 3.0
    kappa: float | None = None
    k_v: float = 0.05
    csm: Literal["improved", "conventional"] = "improved"

    def __post_init__(self):
        if self.mode not in ("GFL", "GFM"):
            raise NetworkError(f"ibr {self.id!r}: mode must be GFL or GFM")
        if not self.i_max > 0:
            raise NetworkError(f"ibr {self.id!r}: i_max must be positive")
        if not self.s_rated > 0:
            raise NetworkError(f"ibr {self.id!r}: s_rated must be positive")
        if self.phi < 0:
            raise NetworkError(f"ibr {self.id!r}: phi must be non-negative")
        kappa = 0.1 * self.i_max if self.kappa is None else float(self.kappa)
        if not 0 <= kappa < self.i_max:
            raise NetworkError(f"ibr {self.id!r}: kappa must lie in [0, i_max)")
        object.__setattr__(self, "kappa", kappa)
        if self.k_neg is not None:
            object.__setattr__(self, "k_neg", complex(self.k_neg))
        object.__setattr__(self, "k_zero", complex(self.k_zero))
        if self.z_filter is not None:
            object.__setattr__(self, "z_filter", complex(self.z_filter))


def ibr_scale(u: IbrUnit, s_base: float) -> float:
    """Factor taking unit-rated current to system per-unit."""
    return u.s_rated / s_base


def neg_seq_admittance(u: IbrUnit, s_base: float) -> complex:
    """Negative-sequence admittance seen at the unit's LV terminal.

    Unset ``k_neg`` resolves to the unsaturated k-factor law (injected current
    leading the voltage by 90 deg) plus the filter branch, so a power-flow state
    is a fixed point of the fault-time controller.
    """
    if u.k_neg is not None:
        return u.k_neg
    yf = 0j if u.z_filter is None else 1.0 / u.z_filter
    return -1j * u.k_factor * ibr_scale(u, s_base) + yf


@dataclass(frozen=True)
class PerUnitBase:
    s_base: float
    v_base: dict

    def z_base(self, bus: str) -> float:
        return self.v_base[bus] ** 2 / self.s_base

    def i_base(self, bus: str) -> float:
        """kA per pu."""
        return self.s_base / (math.sqrt(3.0) * self.v_base[bus])

    def v_phase_base(self, bus: str) -> float:
        """kV per pu (phase-to-ground)."""
        return self.v_base[bus] / math.sqrt(3.0)

    def z_to_pu(self, z_ohm, bus):
        return np.asarray(z_ohm) / self.z_base(bus)

    def z_to_ohm(self, z_pu, bus):
        return np.asarray(z_pu) * self.z_base(bus)

    def s_phase_to_pu(self, s_mva):
        return np.asarray(s_mva) / (self.s_base / 3.0)

    def s_phase_to_mva(self, s_pu):
        return np.asarray(s_pu) * (self.s_base / 3.0)

    def v_to_pu(self, v_kv, bus):
        return np.asarray(v_kv) / self.v_phase_base(bus)

    def v_to_kv(self, v_pu, bus):
        return np.asarray(v_pu) * self.v_phase_base(bus)

    def i_to_pu(self, i_ka, bus):
        return np.asarray(i_ka) / self.i_base(bus)

    def i_to_ka(self, i_pu, bus):
        return np.asarray(i_pu) * self.i_base(bus)


@dataclass(frozen=True)
class NetworkModel:
    name: str = "network"
    s_base: float = 100.0
    buses: tuple[Bus, ...] = ()
    branches: tuple[Branch, ...] = ()
    transformers: tuple[Transformer, ...] = ()
    regulators: tuple[Regulator, ...] = ()
    loads: tuple[Load, ...] = ()
    sources: tuple[SourceIdeal, ...] = ()
    switches: tuple[Switch, ...] = ()
    generators: tuple[Generator, ...] = ()
    ibrs: tuple[IbrUnit, ...] = ()

    def __post_init__(self):
        for f in ("buses", "branches", "transformers", "regulators", "loads",
                  "sources", "switches", "generators", "ibrs"):
            object.__setattr__(self, f, tuple(getattr(self, f)))

    @property
    def base(self) -> PerUnitBase:
        return PerUnitBase(self.s_base, {b.id: b.base_kv for b in self.buses})

    def bus(self, bus_id: str) -> Bus:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise KeyError(bus_id)

    def ibr(self, ibr_id: str) -> IbrUnit:
        for u in self.ibrs:
            if u.id == ibr_id:
                return u
        raise KeyError(ibr_id)

    def replace(self, **changes) -> "NetworkModel":
        return replace(self, **changes)

    def elements(self):
        for f in ("branches", "transformers", "regulators", "loads", "sources",
                  "switches", "generators", "ibrs"):
            yield from getattr(self, f)


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationIssue:
    severity: Literal["error", "warning"]
    category: str
    message: str
    element: str = ""


@dataclass
class ValidationReport:
    issues: list = field(default_factory=list)

    @property
    def errors(self):
        return [i for i in self.issues if i.severity == "error"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def categories(self) -> set:
        return {i.category for i in self.issues}

    def add(self, severity, category, message, element=""):
        self.issues.append(ValidationIssue(severity, category, message, element))

    def __str__(self):
        if not self.issues:
            return "OK"
        return "\n".join(f"{i.severity}: [{i.category}] {i.message}" for i in self.issues)


class _DSU:
    def __init__(self, items):
        self.p = {i: i for i in items}

    def find(self, x):
        while self.p[x] != x:
            self.p[x] = self.p[self.p[x]]
            x = self.p[x]
        return x

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.p[ra] = rb
        return True


def _two_terminal(net: NetworkModel):
    for e in net.branches:
        yield e, e.from_bus, e.to_bus, "branch"
    for e in net.transformers:
        yield e, e.from_bus, e.to_bus, "transformer"
    for e in net.regulators:
        yield e, e.from_bus, e.to_bus, "regulator"
    for e in net.switches:
        yield e, e.from_bus, e.to_bus, "switch"


def validate(net: NetworkModel) -> ValidationReport:
    """Structural checks; never raises, severities are carried in the report."""
    rep = ValidationReport()
    buses = {}
    for b in net.buses:
        if b.id in buses:
            rep.add("error", "duplicate-id", f"duplicate bus id {b.id!r}", b.id)
        buses[b.id] = b
    seen = set()
    for e in net.elements():
        if e.id in seen:
            rep.add("error", "duplicate-id", f"duplicate element id {e.id!r}", e.id)
        seen.add(e.id)

    def check_ref(e, bus_id):
        if bus_id not in buses:
            rep.add("error", "dangling-reference",
                    f"{type(e).__name__.lower()} {e.id!r} references missing bus {bus_id!r}", e.id)
            return False
        return True

    def check_phases(e, bus_id, phases):
        missing = [p for p in phases if p not in buses[bus_id].phases]
        if missing:
            rep.add("error", "phase-mismatch",
                    f"{e.id!r} uses phases {''.join(missing)} absent at bus {bus_id!r}", e.id)

    for e, f, t, kind in _two_terminal(net):
        ok = check_ref(e, f) & check_ref(e, t)
        if not ok:
            continue
        if kind == "transformer":
            for bid in (f, t):
                if buses[bid].phases != PHASES:
                    rep.add("error", "phase-mismatch",
                            f"transformer {e.id!r} needs three phases at bus {bid!r}", e.id)
        else:
            check_phases(e, f, e.phases)
            check_phases(e, t, e.phases)
        if kind == "branch":
            zs, _ = e.sub(e.phases)
            if not np.any(zs) or abs(np.linalg.det(zs)) < 1e-300:
                rep.add("error", "zero-impedance",
                        f"branch {e.id!r} has a zero/singular series impedance; use a switch", e.id)
    for e in net.loads:
        if check_ref(e, e.bus):
            check_phases(e, e.bus, e.phases)
    for e in (*net.sources, *net.generators, *net.ibrs):
        if check_ref(e, e.bus) and buses[e.bus].phases != PHASES:
            rep.add("error", "phase-mismatch",
                    f"{e.id!r} needs a three-phase bus, {e.bus!r} has {''.join(buses[e.bus].phases)}", e.id)

    # closed-switch loops make switch voltage constraints linearly dependent
    dsu = _DSU(list(buses))
    for s in net.switches:
        if s.from_bus in buses and s.to_bus in buses and any(s.closed(p) for p in s.phases):
            if not dsu.union(s.from_bus, s.to_bus):
                rep.add("error", "zero-impedance", f"closed switch {s.id!r} closes a zero-impedance loop", s.id)
    ideal_at = defaultdict(list)
    for s in net.sources:
        if not np.any(s.z_int):
            ideal_at[s.bus].append(s.id)
    for bus_id, ids in ideal_at.items():
        if len(ids) > 1:
            rep.add("error", "zero-impedance", f"parallel ideal sources {ids} at bus {bus_id!r}", ids[0])

    # islands need a voltage reference
    dsu = _DSU(list(buses))
    for e, f, t, kind in _two_terminal(net):
        if f in buses and t in buses:
            if kind == "switch" and not any(e.closed(p) for p in e.phases):
                continue
            dsu.union(f, t)
    refs = set()
    for s in net.sources:
        if s.bus in buses:
            refs.add(dsu.find(s.bus))
    for u in net.ibrs:
        if u.bus in buses and u.mode == "GFM":
            refs.add(dsu.find(u.bus))
    islands = defaultdict(list)
    for b in buses:
        islands[dsu.find(b)].append(b)
    for root, members in islands.items():
        if root not in refs:
            rep.add("error", "no-reference-source",
                    f"island {sorted(members)} has no reference source (ideal source or GFM)", sorted(members)[0])
    return rep


# --------------------------------------------------------------------------
# unknown indexing
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class IndexMap:
    """Ordered bijection between unknown keys and real-vector positions.

    ``entries`` holds ``(block, key, start, width)``; complex unknowns have
    width 2 (real, imag) and real unknowns width 1.
    """

    formulation: str
    entries: tuple

    def __post_init__(self):
        lookup = {}
        for block, key, start, width in self.entries:
            if (block, key) in lookup:
                raise NetworkError(f"duplicate unknown {block}{key}")
            lookup[(block, key)] = (start, width)
        object.__setattr__(self, "_lookup", lookup)

    @property
    def size(self) -> int:
        if not self.entries:
            return 0
        _, _, s, w = self.entries[-1]
        return s + w

    def __len__(self):
        return self.size

    def __contains__(self, item):
        return item in self._lookup

    def slot(self, block: str, key) -> int:
        return self._lookup[(block, key)][0]

    def get(self, block, key, default=None):
        hit = self._lookup.get((block, key))
        return default if hit is None else hit[0]

    def block(self, name: str):
        return [(k, s, w) for b, k, s, w in self.entries if b == name]

    def block_range(self, name: str) -> tuple[int, int]:
        rows = [(s, s + w) for b, _, s, w in self.entries if b == name]
        if not rows:
            return (0, 0)
        return rows[0][0], rows[-1][1]

    def labels(self) -> list[str]:
        out = []
        for block, key, _, width in self.entries:
            name = f"{block}[{','.join(map(str, key))}]"
            out.extend([name + ".re", name + ".im"] if width == 2 else [name])
        return out


def transformer_windings(t: Transformer):
    """Terminal nodes of the three windings on each side.

    Returns ``[(p, q), ...]`` per side, where a node is ``(bus, phase)``,
    ``(neutral_id, "N")`` or ``None`` for ground.
    """
    out = []
    for side, (bus, conn) in enumerate(((t.from_bus, t.conn_from), (t.to_bus, t.conn_to))):
        w = []
        for k, ph in enumerate(PHASES):
            if conn == "wye-grounded":
                w.append(((bus, ph), None))
            elif conn == "wye":
                w.append(((bus, ph), (f"{t.id}.n{side}", "N")))
            else:
                other = PHASES[(k - 1) % 3] if t.delta_shift == "lag" else PHASES[(k + 1) % 3]
                w.append(((bus, ph), (bus, other)))
        out.append(w)
    return out


def winding_ratio(t: Transformer) -> float:
    """Winding-voltage ratio ``V_w1 / V_w2`` in phase-base per-unit."""
    k1 = math.sqrt(3.0) if t.conn_from == "delta" else 1.0
    k2 = math.sqrt(3.0) if t.conn_to == "delta" else 1.0
    return t.tap * k1 / k2


def index_unknowns(net: NetworkModel, formulation: Literal["SS", "PF"] = "PF") -> IndexMap:
    """Order the unknowns block by block.

    Blocks: ``V`` node voltages, ``Iv`` source currents, ``Id`` transformer
    and regulator currents, ``Is`` switch currents; PF adds ``IL`` constant-power
    load currents, ``IG`` generator currents, ``E`` generator EMFs, ``g``
    regulator taps and ``IIBR`` IBR currents.  In ``SS`` generators enter as
    sources (``Iv``) and IBRs as injections.
    """
    if formulation not in ("SS", "PF"):
        raise ValueError("formulation must be 'SS' or 'PF'")
    ids = [b.id for b in net.buses] + [e.id for e in net.elements()]
    dup = {i for i in ids if ids.count(i) > 1}
    if dup:
        raise NetworkError(f"duplicate ids: {sorted(dup)}")
    entries = []
    pos = 0

    def add(block, key, width=2):
        nonlocal pos
        entries.append((block, key, pos, width))
        pos += width

    for b in net.buses:
        for ph in b.phases:
            add("V", (b.id, ph))
    for t in net.transformers:
        for side, conn in enumerate((t.conn_from, t.conn_to)):
            if conn == "wye":
                add("V", (f"{t.id}.n{side}", "N"))
    for s in net.sources:
        for ph in PHASES:
            add("Iv", (s.id, ph))
    if formulation == "SS":
        for g in net.generators:
            for ph in PHASES:
                add("Iv", (g.id, ph))
    for t in net.transformers:
        for k in range(3):
            add("Id", (t.id, k))
    for r in net.regulators:
        for ph in r.phases:
            add("Id", (r.id, ph))
    for s in net.switches:
        for ph in s.phases:
            add("Is", (s.id, ph))
    if formulation == "PF":
        for ld in net.loads:
            if ld.model == "constant-power":
                for ph in ld.phases:
                    add("IL", (ld.id, ph))
        for g in net.generators:
            for ph in PHASES:
                add("IG", (g.id, ph))
        for g in net.generators:
            add("E", (g.id,))
        for r in net.regulators:
            if r.mode == "voltage":
                for ph in r.phases:
                    add("g", (r.id, ph), 1)
        for u in net.ibrs:
            for ph in PHASES:
                add("IIBR", (u.id, ph))
    return IndexMap(formulation, tuple(entries))
