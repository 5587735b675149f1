"""Builders for the shipped test networks.

The JSON files under ``ibrsc/data`` are generated from these functions
(``python3 -m ibrsc.corpus``) and a test keeps them in sync.  All networks are
synthetic: the feeder follows the topology class of the IEEE 34-node feeder and
the loop follows a reduced 120 kV transmission system with three wind plants,
but neither reproduces a published dataset.
"""
from __future__ import annotations

import sys
from importlib import resources
from pathlib import Path

from .netmodel import (
    Branch,
    Bus,
    Generator,
    IbrUnit,
    Load,
    NetworkModel,
    Regulator,
    SourceIdeal,
    Transformer,
)
from .scsolver import FaultSpec

__all__ = ["CORPUS", "SMALL", "SCENARIOS", "build", "load", "data_path", "loop_faults"]


def _line(id, f, t, z1, z0, b1=0.0, phases="ABC"):
    return Branch.from_sequence(id, f, t, z1, z0, b1, phases=tuple(phases))


def _balanced(id, bus, s_total):
    s = complex(s_total)
    return Load(id, bus, (s, s, s))


def two_bus() -> NetworkModel:
    """Linear source + line; the classical short-circuit reference case."""
    return NetworkModel(
        "two_bus", 100.0,
        buses=(Bus("1", base_kv=12.47), Bus("2", base_kv=12.47)),
        branches=(_line("L12", "1", "2", 0.02 + 0.06j, 0.06 + 0.18j),),
        sources=(SourceIdeal.balanced("grid", "1", z1=0.01 + 0.1j, z0=0.02 + 0.25j),),
    )


def two_bus_load() -> NetworkModel:
    return NetworkModel(
        "two_bus_load", 100.0,
        buses=(Bus("1", base_kv=12.47), Bus("2", base_kv=12.47)),
        branches=(_line("L12", "1", "2", 0.02 + 0.06j, 0.06 + 0.18j, b1=0.01),),
        sources=(SourceIdeal.balanced("grid", "1", z1=0.01 + 0.1j, z0=0.02 + 0.25j),),
        loads=(Load("ld2", "2", (0.30 + 0.10j, 0.25 + 0.08j, 0.35 + 0.15j)),),
    )


def unbalanced_lateral() -> NetworkModel:
    """Three-phase trunk with a single-phase and a two-phase lateral."""
    return NetworkModel(
        "unbalanced_lateral", 10.0,
        buses=(Bus("1", base_kv=12.47), Bus("2", base_kv=12.47), Bus("3", base_kv=12.47),
               Bus("3a", ("A",), 12.47), Bus("2bc", ("B", "C"), 12.47)),
        branches=(
            _line("L12", "1", "2", 0.03 + 0.07j, 0.09 + 0.22j, b1=0.002),
            _line("L23", "2", "3", 0.04 + 0.09j, 0.12 + 0.28j, b1=0.002),
            _line("L33a", "3", "3a", 0.06 + 0.05j, 0.18 + 0.15j, phases="A"),
            _line("L22bc", "2", "2bc", 0.05 + 0.06j, 0.15 + 0.18j, phases="BC"),
        ),
        sources=(SourceIdeal.balanced("grid", "1", z1=0.005 + 0.05j, z0=0.01 + 0.1j),),
        loads=(
            Load("ld2", "2", (0.20 + 0.10j, 0.15 + 0.05j, 0.25 + 0.12j)),
            Load("ld3", "3", (0.10 + 0.04j, 0.12 + 0.06j, 0.08 + 0.02j), model="constant-impedance"),
            Load("ld3a", "3a", (0.12 + 0.05j,), ("A",)),
            Load("ld2bc", "2bc", (0.06 + 0.02j, 0.09 + 0.03j), ("B", "C")),
        ),
    )


def four_bus_dyn() -> NetworkModel:
    """Source, line, delta / grounded-wye step-down, line, unbalanced load."""
    return NetworkModel(
        "four_bus_dyn", 6.0,
        buses=(Bus("1", base_kv=12.47), Bus("2", base_kv=12.47), Bus("3", base_kv=4.16),
               Bus("4", base_kv=4.16)),
        branches=(
            _line("L12", "1", "2", 0.012 + 0.025j, 0.036 + 0.08j),
            _line("L34", "3", "4", 0.09 + 0.19j, 0.27 + 0.6j),
        ),
        transformers=(Transformer("T23", "2", "3", "delta", "wye-grounded", 1.0, 0.01 + 0.06j),),
        sources=(SourceIdeal.balanced("grid", "1", z1=0.002 + 0.02j, z0=0.004 + 0.05j),),
        loads=(Load("ld4", "4", (0.25 + 0.12j, 0.30 + 0.15j, 0.35 + 0.17j)),),
    )


def gen_reg_5bus() -> NetworkModel:
    """Regulated feeder with a synchronous machine."""
    return NetworkModel(
        "gen_reg_5bus", 100.0,
        buses=tuple(Bus(str(k), base_kv=34.5) for k in range(1, 6)),
        branches=(
            _line("L23", "2", "3", 0.01 + 0.05j, 0.03 + 0.15j, b1=0.01),
            _line("L34", "3", "4", 0.01 + 0.04j, 0.03 + 0.12j, b1=0.01),
            _line("L35", "3", "5", 0.02 + 0.06j, 0.06 + 0.18j),
        ),
        regulators=(Regulator("R12", "1", "2", v_set=1.03),),
        sources=(SourceIdeal.balanced("grid", "1", z1=0.002 + 0.03j, z0=0.004 + 0.06j),),
        generators=(Generator("G4", "4", p_set=0.3, e_set=1.05),),
        loads=(
            Load("ld3", "3", (0.40 + 0.15j, 0.35 + 0.12j, 0.45 + 0.18j)),
            _balanced("ld5", "5", 0.20 + 0.08j),
        ),
    )


def _plant(id, hv, mode, p_ref, *, s_rated=100.0, base_kv=34.5, z_t=0.004 + 0.08j, **kw):
    lv = f"{id}lv"
    bus = Bus(lv, base_kv=base_kv)
    tr = Transformer(f"T{id}", hv, lv, "delta", "wye-grounded", 1.0, z_t)
    unit = IbrUnit(id, lv, mode, s_rated=s_rated, p_ref=p_ref, **kw)
    return bus, tr, unit


_FILTER = 2.0 - 5.0j   # series-RC shunt filter on the system base


def reduced_gfl() -> NetworkModel:
    """Reduced 120 kV system with one grid-following plant behind bus 3."""
    bus, tr, unit = _plant("wp", "3", "GFL", 0.8, z_filter=_FILTER)
    return NetworkModel(
        "reduced_gfl", 100.0,
        buses=(Bus("1", base_kv=120.0), Bus("2", base_kv=120.0), Bus("3", base_kv=120.0), bus),
        branches=(
            _line("L12", "1", "2", 0.004 + 0.04j, 0.012 + 0.12j, b1=0.02),
            _line("L23", "2", "3", 0.006 + 0.06j, 0.018 + 0.18j, b1=0.03),
        ),
        transformers=(tr,),
        sources=(SourceIdeal.balanced("grid", "1", z1=0.002 + 0.03j, z0=0.004 + 0.06j),),
        loads=(_balanced("ld2", "2", 0.50 + 0.15j),),
        ibrs=(unit,),
    )


def reduced_gfm() -> NetworkModel:
    """Same system with a grid-forming plant using virtual-impedance limiting."""
    net = reduced_gfl()
    bus, tr, unit = _plant("wp", "3", "GFM", 0.8, z_filter=_FILTER)
    return net.replace(name="reduced_gfm", ibrs=(unit,))


def multi_ibr_loop(stressed: bool = False) -> NetworkModel:
    """Ten-bus 120 kV loop with one grid-forming and two grid-following plants."""
    hv = tuple(Bus(str(k), base_kv=120.0) for k in range(1, 11))
    z1, z0, b = 0.004 + 0.04j, 0.012 + 0.12j, 0.02
    lines = [
        _line("L12", "1", "2", z1, z0, b), _line("L23", "2", "3", z1, z0, b),
        _line("L34", "3", "4", 1.5 * z1, 1.5 * z0, b), _line("L45", "4", "5", z1, z0, b),
        _line("L51", "5", "1", 1.2 * z1, 1.2 * z0, b), _line("L26", "2", "6", z1, z0, b),
        _line("L67", "6", "7", 0.8 * z1, 0.8 * z0, b), _line("L48", "4", "8", z1, z0, b),
        _line("L89", "8", "9", 0.8 * z1, 0.8 * z0, b), _line("L5A", "5", "10", 1.2 * z1, 1.2 * z0, b),
    ]
    wp2_mode = "GFL" if stressed else "GFM"
    plants = [
        _plant("wp1", "7", "GFL", 0.8, z_filter=_FILTER),
        _plant("wp2", "9", wp2_mode, 0.8, z_filter=_FILTER),
        _plant("wp3", "10", "GFL", 0.6, z_filter=_FILTER),
    ]
    zs = (0.002 + 0.03j, 0.004 + 0.06j)
    loads = [_balanced("ld3", "3", 0.60 + 0.20j), _balanced("ld6", "6", 0.40 + 0.10j),
             _balanced("ld8", "8", 0.50 + 0.15j)]
    name = "multi_ibr_loop"
    if stressed:
        name = "all_gfl_stressed"
        zs = (0.01 + 0.1j, 0.02 + 0.2j)
    return NetworkModel(
        name, 100.0,
        buses=hv + tuple(p[0] for p in plants),
        branches=tuple(lines),
        transformers=tuple(p[1] for p in plants),
        sources=(SourceIdeal.balanced("grid", "1", z1=zs[0], z0=zs[1]),),
        loads=tuple(loads),
        ibrs=tuple(p[2] for p in plants),
    )


def all_gfl_stressed() -> NetworkModel:
    return multi_ibr_loop(stressed=True)


_MI = (0.85 + 0.75j, 1.50 + 2.20j)    # main-line sequence impedance, ohm per mile
_LAT = (1.30 + 0.75j, 2.00 + 2.10j)   # lateral


def feeder34() -> NetworkModel:
    """Unbalanced 24.9 kV feeder with laterals, two regulators and a 200 kW
    converter at bus 824 (2.5 MVA base)."""
    s_base, kv = 2.5, 24.9
    zb = kv ** 2 / s_base

    def ln(f, t, miles, phases="ABC", cfg=_MI):
        return _line(f"L{f}-{t}", f, t, cfg[0] * miles / zb, cfg[1] * miles / zb, 3e-6 * miles * zb, phases)

    buses = {}

    def bus(id, phases="ABC", base=kv):
        buses[id] = Bus(id, tuple(phases), base)

    for b in ("800", "802", "806", "808", "812", "814", "850", "816", "824", "828", "830", "854",
              "852", "832", "858", "834", "842", "844", "846", "848", "860", "836", "840"):
        bus(b)
    bus("810", "B")
    bus("818", "A")
    bus("820", "A")
    bus("826", "B")
    bus("888", base=4.16)
    bus("890", base=4.16)
    bus("824lv", base=0.48)
    branches = [
        ln("800", "802", 0.49), ln("802", "806", 0.33), ln("806", "808", 6.1),
        ln("808", "810", 1.1, "B", _LAT), ln("808", "812", 7.1), ln("812", "814", 5.6),
        ln("850", "816", 0.06), ln("816", "818", 0.33, "A", _LAT), ln("818", "820", 9.1, "A", _LAT),
        ln("816", "824", 1.9), ln("824", "826", 0.57, "B", _LAT), ln("824", "828", 0.16),
        ln("828", "830", 3.9), ln("830", "854", 0.1), ln("854", "852", 7.0),
        ln("832", "858", 0.93), ln("858", "834", 1.1), ln("834", "842", 0.05),
        ln("842", "844", 0.8), ln("844", "846", 0.68), ln("846", "848", 0.1),
        ln("834", "860", 0.38), ln("860", "836", 0.51), ln("836", "840", 0.16),
        _line("L888-890", "888", "890", 0.2 * (_MI[0] * 1.9) / (4.16 ** 2 / s_base),
              0.2 * (_MI[1] * 1.9) / (4.16 ** 2 / s_base)),
    ]
    regs = (Regulator("REG1", "814", "850", v_set=1.03, tap=(1.0,)),
            Regulator("REG2", "852", "832", v_set=1.03, tap=(1.0,)))
    trs = (Transformer("XFM1", "832", "888", "wye-grounded", "wye-grounded", 1.0, 0.019 + 0.04j),
           Transformer("TPV", "824", "824lv", "wye-grounded", "wye-grounded", 1.0, 0.05 + 0.4j))
    sp = s_base / 3 * 1000.0   # kW per per-unit on the phase base

    def kw(a=0.0, b=0.0, c=0.0, pf=0.9):
        t = (1 - pf ** 2) ** 0.5 / pf
        return tuple(complex(p / sp, p * t / sp) for p in (a, b, c))

    loads = [
        Load("ld860", "860", kw(20, 20, 20)), Load("ld840", "840", kw(27, 31, 9)),
        Load("ld844", "844", kw(144, 135, 135)), Load("ld848", "848", kw(20, 43, 40)),
        Load("ld890", "890", kw(150, 150, 150), model="constant-impedance"),
        Load("ld830", "830", kw(17, 10, 25)), Load("ld806", "806", kw(0, 30, 25)),
        Load("ld834", "834", kw(20, 35, 123)), Load("ld836", "836", kw(30, 10, 42)),
        Load("ld858", "858", kw(9, 2, 6)), Load("ld828", "828", kw(7, 0, 0)),
        Load("ld810", "810", (kw(0, 16)[1],), ("B",)), Load("ld820", "820", (kw(34)[0],), ("A",)),
        Load("ld826", "826", (kw(0, 40)[1],), ("B",)),
    ]
    pv = IbrUnit("pv824", "824lv", "GFL", s_rated=0.25, p_ref=0.2 / s_base, q_ref=0.0,
                 z_filter=8.0 - 40.0j, k_zero=0.05 + 0.1j)
    return NetworkModel(
        "feeder34", s_base,
        buses=tuple(buses.values()),
        branches=tuple(branches),
        transformers=trs,
        regulators=regs,
        sources=(SourceIdeal.balanced("sub", "800", 1.05, z1=0.001 + 0.008j, z0=0.002 + 0.016j),),
        loads=tuple(loads),
        ibrs=(pv,),
    )


CORPUS = {
    "two_bus": two_bus,
    "two_bus_load": two_bus_load,
    "unbalanced_lateral": unbalanced_lateral,
    "four_bus_dyn": four_bus_dyn,
    "gen_reg_5bus": gen_reg_5bus,
    "reduced_gfl": reduced_gfl,
    "reduced_gfm": reduced_gfm,
    "multi_ibr_loop": multi_ibr_loop,
    "all_gfl_stressed": all_gfl_stressed,
    "feeder34": feeder34,
}

#: networks with at most six buses
SMALL = ("two_bus", "two_bus_load", "unbalanced_lateral", "four_bus_dyn", "gen_reg_5bus",
         "reduced_gfl", "reduced_gfm")


def loop_faults() -> list:
    """The six short-circuit cases run on the multi-plant loop."""
    return [FaultSpec("8", "ABCG"), FaultSpec("4", "BC"), FaultSpec("4", "BCG"),
            FaultSpec("2", "AB"), FaultSpec("2", "ABC"), FaultSpec("10", "ACG")]


#: scenario documents shipped next to the networks
SCENARIOS = {
    "multi_ibr_faults": {
        "schema_version": 1, "network": "multi_ibr_loop.json",
        "description": "six bolted faults on the multi-plant loop",
        "faults": [{"bus": f.bus, "kind": f.kind} for f in loop_faults()],
    },
    "reduced_gfm_faults": {
        "schema_version": 1, "network": "reduced_gfm.json",
        "faults": [{"bus": "1", "kind": k} for k in ("BC", "BCG", "ABCG")],
    },
    "reduced_gfl_faults": {
        "schema_version": 1, "network": "reduced_gfl.json",
        "faults": [{"bus": "3", "kind": k} for k in ("AG", "BC", "BCG", "ABC")],
    },
    "feeder34_faults": {
        "schema_version": 1, "network": "feeder34.json",
        "sweep": {"buses": ["824", "828", "830", "854"], "kinds": ["AG", "BC", "BCG", "ABC"]},
    },
    "all_gfl_stressed": {
        "schema_version": 1, "network": "all_gfl_stressed.json",
        "description": "balanced fault at the grid bus with grid-following plants only",
        "faults": [{"bus": "1", "kind": "ABC"}],
    },
}


def build(name: str) -> NetworkModel:
    try:
        return CORPUS[name]()
    except KeyError:
        raise KeyError(f"unknown corpus network {name!r}; have {sorted(CORPUS)}") from None


def data_path(name: str) -> Path:
    return Path(str(resources.files("ibrsc") / "data" / name))


def load(name: str) -> NetworkModel:
    """Parse the shipped JSON file of a corpus network."""
    from .io import parse_network
    return parse_network(data_path(f"{name}.json"))


def write_all(outdir: Path | None = None) -> list:
    import json

    from .io import serialize_network
    outdir = Path(outdir) if outdir else data_path("")
    written = []
    for name, fn in CORPUS.items():
        p = outdir / f"{name}.json"
        p.write_text(serialize_network(fn()))
        written.append(p)
    for name, doc in SCENARIOS.items():
        p = outdir / f"{name}.scenario.json"
        p.write_text(json.dumps(doc, indent=1) + "\n")
        written.append(p)
    return written


if __name__ == "__main__":
    for p in write_all(Path(sys.argv[1]) if len(sys.argv) > 1 else None):
        print(p)
