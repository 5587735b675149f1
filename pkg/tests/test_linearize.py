from dataclasses import replace

import numpy as np
import pytest

from cases import NAMES, lin_of, network, pf_of
from ibrsc.linearize import fault_free, linearize, sequence_voltage, ss_voltages, thevenin_at
from ibrsc.mana import assemble_ss, solve_linear, solve_pf
from ibrsc.netmodel import Branch, Bus, IbrUnit, Load, NetworkError, NetworkModel, SourceIdeal, Transformer
from ibrsc.scsolver import FaultSpec, apply_fault
from ibrsc.seq import A_INV, A_MAT, seq_to_phase_matrix
from oracles import DenseNetwork, thevenin_kron


def solve_voltages(lin):
    s = assemble_ss(lin)
    return ss_voltages(s, solve_linear(s))


@pytest.mark.parametrize("name", NAMES)
def test_unfaulted_reproduction(name):
    v = solve_voltages(lin_of(name))
    pf = pf_of(name)
    assert max(abs(v[k] - pf.voltages[k]) for k in pf.voltages) < 1e-9


def test_load_impedance_hand_value():
    net = NetworkModel("l", 1.0, buses=(Bus("1"),), sources=(SourceIdeal.balanced("s", "1"),),
                       loads=(Load("ld", "1", (1 + 0.5j,) * 3),))
    lin = linearize(net, solve_pf(net))
    z = 1 / lin.load_y[("ld", "A")]
    assert abs(z - 1 / (1 - 0.5j)) < 1e-12


def test_linear_network_is_identity():
    net = network("two_bus")
    lin = linearize(net)
    assert lin.network is net and lin.load_y == {} and lin.ibr_currents == {}


def test_pf_required_for_nonlinear_elements():
    with pytest.raises(NetworkError):
        linearize(network("reduced_gfl"))


def test_zero_voltage_load_rejected():
    net = network("two_bus_load")
    pf = pf_of("two_bus_load")
    pf0 = type(pf)(pf.network, pf.index, np.zeros_like(pf.x), 0, 0.0)
    with pytest.raises(NetworkError, match="zero power-flow voltage"):
        linearize(net, pf0)


def unit_behind(z_paths, v=1.0):
    """LV bus fed from ideal sources through branches ``z_paths``."""
    buses = [Bus("lv")] + [Bus(f"s{k}") for k in range(len(z_paths))]
    srcs = tuple(SourceIdeal.balanced(f"g{k}", f"s{k}", mag=v) for k in range(len(z_paths)))
    brs = tuple(Branch.from_sequence(f"L{k}", f"s{k}", "lv", z, 3 * z) for k, z in enumerate(z_paths))
    u = IbrUnit("u", "lv", "GFL", p_ref=0.0, k_neg=0.0)
    return NetworkModel("t", 1.0, buses=tuple(buses), branches=brs, sources=srcs, ibrs=(u,))


def test_thevenin_single_source():
    net = unit_behind([0.01 + 0.1j])
    z, v = thevenin_at(linearize(net, solve_pf(net)), "u")
    assert abs(z - (0.01 + 0.1j)) < 1e-12
    assert abs(v - 1.0) < 1e-12


def test_thevenin_parallel_paths():
    z1, z2 = 0.02 + 0.2j, 0.05 + 0.1j
    net = unit_behind([z1, z2])
    z, _ = thevenin_at(linearize(net, solve_pf(net)), "u")
    assert abs(z - z1 * z2 / (z1 + z2)) < 1e-12


def test_thevenin_bolted_fault_at_unit():
    net = unit_behind([0.01 + 0.1j])
    lin = apply_fault(linearize(net, solve_pf(net)), FaultSpec("lv", "ABCG", 1e-4))
    z, v = thevenin_at(lin, "u")
    assert abs(v) < 2e-3
    assert abs(z - 1e-4) < 1e-6


def oracle_port(lin, ibr):
    """Kron-reduced positive-sequence Thevenin pair at a unit's bus."""
    net = lin.network
    unit = net.ibr(ibr)
    loads = tuple(Load(ld.id, ld.bus, tuple(np.conj(lin.load_y[(ld.id, p)]) for p in ld.phases),
                       ld.phases, "constant-impedance") for ld in net.loads)
    shunts = {}
    for u in net.ibrs:
        y = lin.ibr_shunt[u.id] if u.id != ibr else seq_to_phase_matrix(unit.k_zero, 0.0, lin.contexts[ibr].yf)
        shunts[u.bus] = shunts.get(u.bus, 0) + y
    plain = net.replace(loads=loads, ibrs=())
    z012 = thevenin_kron(plain, unit.bus, lin.taps or None, shunts)
    d = DenseNetwork(plain, lin.taps or None, shunts)
    inj = d.i_src.copy()
    for (g, ix, yg) in d.gen:
        inj[ix] += yg @ (lin.gen_emf[g.id] * np.array([1, np.exp(-2j * np.pi / 3), np.exp(2j * np.pi / 3)]))
    for u in net.ibrs:
        i1, i2 = lin.ibr_currents[u.id]
        if u.id == ibr:
            i1 = 0
        ix = [d.pos[(u.bus, p)] for p in "ABC"]
        inj[ix] += A_MAT @ np.array([0, i1, i2])
    v = d.T @ np.linalg.solve(d.Yr, d.T.T @ inj)
    v1 = (A_INV @ v[[d.pos[(unit.bus, p)] for p in "ABC"]])[1]
    return z012[1, 1], v1


@pytest.mark.parametrize("name", ["reduced_gfl", "reduced_gfm", "multi_ibr_loop", "all_gfl_stressed"])
def test_thevenin_matches_kron_oracle(name):
    lin = lin_of(name)
    for u in lin.network.ibrs:
        z, v = thevenin_at(lin, u.id)
        zo, vo = oracle_port(lin, u.id)
        assert abs(z - zo) < 1e-9 and abs(v - vo) < 1e-9


@pytest.mark.parametrize("name", ["reduced_gfl", "multi_ibr_loop", "feeder34"])
def test_thevenin_superposition(name):
    lin = lin_of(name)
    for u in lin.network.ibrs:
        z, v = thevenin_at(lin, u.id)
        ctx = lin.contexts[u.id]
        unit = lin.network.ibr(u.id)
        shunt = dict(lin.ibr_shunt)
        shunt[u.id] = seq_to_phase_matrix(unit.k_zero, 0.0, ctx.yf)
        for i1 in (0.3 - 0.2j, 1.0j):
            probe = replace(lin, ibr_shunt=shunt).with_currents({u.id: (i1, lin.ibr_currents[u.id][1])})
            s = assemble_ss(probe)
            v1 = sequence_voltage(s, solve_linear(s), unit.bus)[1]
            assert abs(v1 - (v + z * i1)) < 1e-9


def test_fault_free_drops_stamps():
    lin = lin_of("reduced_gfl")
    faulted = apply_fault(lin, FaultSpec("3", "AG"))
    assert fault_free(faulted).faults == () and faulted.faults


def test_transformer_ratio_reproduced():
    net = NetworkModel("x", 1.0, buses=(Bus("1"), Bus("2")), sources=(SourceIdeal.balanced("s", "1"),),
                       transformers=(Transformer("t", "1", "2", "delta", "wye-grounded", tap=1.05),),
                       loads=(Load("ld", "2", (0.2 + 0.05j,) * 3),))
    pf = solve_pf(net)
    v = solve_voltages(linearize(net, pf))
    for k in pf.voltages:
        assert abs(v[k] - pf.voltages[k]) < 1e-9
