import time

import numpy as np
import pytest
import scipy.sparse as sp

from cases import NAMES, fd_jacobian, iterates, network, pf_of
from ibrsc.corpus import SMALL
from ibrsc.mana import (
    ManaSystem,
    NonConvergence,
    SingularSystem,
    assemble_pf_jacobian,
    assemble_ss,
    flat_start,
    residuals,
    solve_linear,
    solve_pf,
)
from ibrsc.linearize import ss_voltages
from ibrsc.netmodel import (
    Branch,
    Bus,
    IbrUnit,
    Load,
    NetworkModel,
    SourceIdeal,
    Switch,
    Transformer,
    index_unknowns,
    neg_seq_admittance,
)
from ibrsc.seq import A_INV
from oracles import DenseNetwork, reference_pf


def src_bus(net_id="n", load=None, z=0.0):
    return NetworkModel(net_id, 1.0, buses=(Bus("1"),),
                        sources=(SourceIdeal.balanced("s", "1", z1=z),),
                        loads=(load,) if load else ())


# ---------------------------------------------------------------- linear solves

def test_solve_linear_identity():
    idx = index_unknowns(src_bus(), "SS")
    a = sp.identity(idx.size // 2, dtype=complex, format="csc")
    b = np.zeros(idx.size // 2, dtype=complex)
    b[0] = 1
    np.testing.assert_array_equal(solve_linear(ManaSystem(a, b, idx, "SS")), b)


def test_solve_linear_diagonal():
    a = sp.csc_matrix(np.diag([2.0, 4.0]).astype(complex))
    x = solve_linear(ManaSystem(a, np.array([2.0, 4.0], dtype=complex), None, "SS"))
    np.testing.assert_allclose(x, [1, 1], atol=1e-15)


def test_solve_linear_random_sparse():
    rng = np.random.default_rng(11)
    m = sp.random(50, 50, density=0.1, random_state=rng, dtype=float) + 10 * sp.identity(50)
    a = sp.csc_matrix(m, dtype=complex)
    b = rng.normal(size=50) + 1j * rng.normal(size=50)
    x = solve_linear(ManaSystem(a, b, None, "SS"))
    np.testing.assert_allclose(x, np.linalg.solve(a.toarray(), b), atol=1e-9)


def test_singular_solve_raises():
    a = sp.csc_matrix(np.array([[1.0, 1.0], [1.0, 1.0]], dtype=complex))
    with pytest.raises(SingularSystem):
        solve_linear(ManaSystem(a, np.array([1.0, 0.0], dtype=complex), None, "SS"))


def test_ss_ohms_law():
    net = src_bus(load=Load("ld", "1", (1, 1, 1), model="constant-impedance"))
    s = assemble_ss(net)
    x = solve_linear(s)
    i = x[s.index.slot("Iv", ("s", "A")) // 2]
    assert abs(abs(i) - 1.0) < 1e-12


def test_ss_open_switch_blocks_load():
    net = NetworkModel("sw", 1.0, buses=(Bus("1"), Bus("2")),
                       sources=(SourceIdeal.balanced("s", "1"),),
                       switches=(Switch("sw", "1", "2", (0, 0, 0)),),
                       loads=(Load("ld", "2", (1, 1, 1), model="constant-impedance"),))
    s = assemble_ss(net)
    x = solve_linear(s)
    for ph in "ABC":
        assert abs(x[s.index.slot("Iv", ("s", ph)) // 2]) < 1e-14
        assert abs(x[s.index.slot("Is", ("sw", ph)) // 2]) < 1e-14


def test_ss_matches_dense_oracle():
    net = network("unbalanced_lateral").replace(loads=tuple(
        Load(ld.id, ld.bus, ld.s, ld.phases, "constant-impedance") for ld in network("unbalanced_lateral").loads))
    s = assemble_ss(net)
    v = ss_voltages(s, solve_linear(s))
    d = DenseNetwork(net)
    vref = np.linalg.solve(d.Yr, d.T.T @ d.i_src)
    for k, nd in enumerate(d.red):
        assert abs(v[nd] - vref[k]) < 1e-10


def test_floating_island_named():
    net = NetworkModel("f", 1.0, buses=(Bus("1"), Bus("2"), Bus("3")),
                       sources=(SourceIdeal.balanced("s", "1"),),
                       branches=(Branch.from_sequence("L", "2", "3", 0.1j, 0.3j),))
    with pytest.raises(SingularSystem, match="2"):
        assemble_ss(net)


# ---------------------------------------------------------------- power flow

def test_source_only_network():
    pf = solve_pf(src_bus(z=0.01j))
    assert pf.iterations <= 2
    np.testing.assert_allclose(pf.bus_voltages("1"), [1, np.exp(-2j * np.pi / 3), np.exp(2j * np.pi / 3)],
                               atol=1e-12)


def test_two_bus_closed_form():
    # balanced 2-bus: V2 solves |V2|^2 - V2 conj(E) ... via the quadratic in |V2|^2
    z, s = 0.02 + 0.06j, 0.3 + 0.1j
    net = NetworkModel("q", 1.0, buses=(Bus("1"), Bus("2")),
                       branches=(Branch.from_sequence("L", "1", "2", z, z),),
                       sources=(SourceIdeal.balanced("s", "1"),),
                       loads=(Load("ld", "2", (s, s, s)),))
    pf = solve_pf(net)
    # |V|^4 + (2 Re(z conj(s)) - 1)|V|^2 + |z|^2 |s|^2 = 0, high-voltage root
    b = 2 * (z * s.conjugate()).real - 1
    u = (-b + np.sqrt(b * b - 4 * abs(z) ** 2 * abs(s) ** 2)) / 2
    v2 = pf.voltage("2", "A")
    assert abs(abs(v2) - np.sqrt(u)) < 1e-8
    assert abs(v2 - (1 - z * (s / v2).conjugate())) < 1e-8


@pytest.mark.parametrize("name", SMALL)
def test_pf_matches_oracle(name):
    pf = pf_of(name)
    net = network(name)
    ref = reference_pf(net, pf.taps if net.regulators else None)
    dev = max(abs(pf.voltages[k] - ref[k]) for k in pf.voltages)
    assert dev < 1e-8


@pytest.mark.parametrize("name", NAMES)
def test_pf_converges_with_small_residual(name):
    pf = pf_of(name)
    assert pf.converged and pf.residual_norm < 1e-8


@pytest.mark.parametrize("name", NAMES)
def test_ibr_sequence_laws(name):
    net, pf = network(name), pf_of(name)
    for u in net.ibrs:
        v012 = A_INV @ pf.bus_voltages(u.bus)
        i012 = A_INV @ pf.ibr_currents(u.id)
        kneg = neg_seq_admittance(u, net.s_base)
        assert abs(kneg * v012[2] + i012[2]) < 1e-8
        assert abs(u.k_zero * v012[0] + i012[0]) < 1e-8
        s1 = v012[1] * i012[1].conjugate()
        assert abs(s1.real - u.p_ref) < 1e-8
        if u.mode == "GFM":
            assert abs(abs(v012[1]) - u.v_ref) < 1e-8
        else:
            assert abs(s1.imag - u.q_ref) < 1e-8


def test_feeder_ibr_sequence_structure():
    pf = pf_of("feeder34")
    i012 = np.abs(A_INV @ pf.ibr_currents("pv824"))
    assert i012[1] > 10 * i012[0] > 0
    assert i012[1] > 10 * i012[2] > 0


@pytest.mark.parametrize("name", ["two_bus_load", "unbalanced_lateral"])
def test_power_balance(name):
    net, pf = network(name), pf_of(name)
    v = pf.voltages
    gen = sum(v[(s.bus, ph)] * pf.value("Iv", (s.id, ph)).conjugate() for s in net.sources for ph in "ABC")
    load = 0j
    for ld in net.loads:
        for ph in ld.phases:
            vv = v[(ld.bus, ph)]
            load += ld.s_of(ph) if ld.model == "constant-power" else abs(vv) ** 2 * ld.s_of(ph)
    loss = 0j
    for br in net.branches:
        z, y = br.sub(br.phases)
        vf = np.array([v[(br.from_bus, p)] for p in br.phases])
        vt = np.array([v[(br.to_bus, p)] for p in br.phases])
        i_f = np.linalg.solve(z, vf - vt) + y @ vf / 2
        i_t = np.linalg.solve(z, vt - vf) + y @ vt / 2
        loss += vf @ i_f.conj() + vt @ i_t.conj()
    assert abs(gen - load - loss) < 1e-6


def test_determinism():
    a = solve_pf(network("feeder34"))
    b = solve_pf(network("feeder34"))
    np.testing.assert_array_equal(a.x, b.x)
    assert a.history == b.history


def test_nonconvergence_carries_diagnostics():
    net = network("two_bus_load").replace(loads=(Load("ld", "2", (9 + 3j,) * 3),))
    with pytest.raises(NonConvergence) as exc:
        solve_pf(net, max_iter=8)
    d = exc.value.diagnostics
    assert d["iterations"] == 8 and len(d["history"]) == 9 and d["worst_row"]


def test_warm_start_is_immediate():
    pf = pf_of("multi_ibr_loop")
    again = solve_pf(network("multi_ibr_loop"), start=pf)
    assert again.iterations == 0


# ---------------------------------------------------------------- residuals and Jacobian

def test_gfl_power_residual_hand_value():
    u = IbrUnit("u", "1", "GFL", p_ref=0.2, q_ref=0.05)
    net = NetworkModel("r", 1.0, buses=(Bus("1"),), sources=(SourceIdeal.balanced("s", "1", z1=0.1j),),
                       ibrs=(u,))
    idx = index_unknowns(net)
    x = flat_start(net)
    v = 0.98 * np.exp(0.1j)
    i1 = 0.3 - 0.1j
    rot = np.array([1, np.exp(-2j * np.pi / 3), np.exp(2j * np.pi / 3)])
    for k, ph in enumerate("ABC"):
        s = idx.slot("V", ("1", ph))
        x[s], x[s + 1] = (v * rot[k]).real, (v * rot[k]).imag
        s = idx.slot("IIBR", ("u", ph))
        x[s], x[s + 1] = (i1 * rot[k]).real, (i1 * rot[k]).imag
    f = residuals(net, x)
    s1 = v * np.conj(i1)
    r = idx.slot("IIBR", ("u", "A"))
    assert abs(f[r] - (0.2 - s1.real)) < 1e-14
    assert abs(f[r + 1] - (0.05 - s1.imag)) < 1e-14


@pytest.mark.parametrize("name", NAMES)
def test_residual_vanishes_at_solution(name):
    pf = pf_of(name)
    assert np.max(np.abs(residuals(pf.network, pf.x))) < 1e-12


@pytest.mark.parametrize("name", NAMES)
def test_jacobian_matches_finite_differences(name):
    net = pf_of(name).network
    for x in iterates(name):
        j = assemble_pf_jacobian(net, x).matrix.toarray()
        jfd = fd_jacobian(net, x)
        assert np.max(np.abs(j - jfd) / np.maximum(1.0, np.abs(j))) < 1e-5


def _row_counts(net, unit, row_key, rng):
    """Jacobian entries of one IBR constraint row pair, split into voltage
    (C) and IBR-current (D) columns.  A real row touching a complex unknown
    counts both of its real columns."""
    pf = solve_pf(net)
    net = pf.network
    idx = index_unknowns(net)
    x = pf.x + 0.01 * rng.normal(size=idx.size)
    j = assemble_pf_jacobian(net, x).matrix.tocsr()
    r = idx.slot("IIBR", (unit, row_key))
    vcols = {s for (bus, _), s, _ in idx.block("V") if bus == net.ibr(unit).bus}
    icols = {s for (uid, _), s, _ in idx.block("IIBR") if uid == unit}
    c = d = 0
    for row in (r, r + 1):
        pairs = {k - k % 2 for k in j[row].indices[j[row].data != 0]}
        c += 2 * len(pairs & vcols)
        d += 2 * len(pairs & icols)
    return c, d


def test_ibr_jacobian_entry_counts():
    rng = np.random.default_rng(5)
    gfl = network("feeder34")
    # positive-sequence P and Q: 12 voltage and 12 current entries
    assert _row_counts(gfl, "pv824", "A", rng) == (12, 12)
    # negative-sequence law: 24 entries
    assert _row_counts(gfl, "pv824", "B", rng) == (12, 12)
    # zero-sequence law with a nonzero admittance has the same structure
    assert _row_counts(gfl, "pv824", "C", rng) == (12, 12)
    gfm = network("reduced_gfm")
    # the P row carries 6 + 6 entries, the |V1| row only 6 voltage entries
    assert _row_counts(gfm, "wp", "A", rng) == (12, 6)


def test_ibr_adds_six_rows():
    base = network("two_bus")
    with_ibr = base.replace(buses=base.buses + (Bus("lv"),),
                            transformers=(Transformer("t", "2", "lv"),),
                            ibrs=(IbrUnit("u", "lv", p_ref=0.1),))
    plain = base.replace(buses=base.buses + (Bus("lv"),),
                         transformers=(Transformer("t", "2", "lv"),))
    assert index_unknowns(with_ibr).size - index_unknowns(plain).size == 6


def test_linear_network_jacobian_equals_ss_structure():
    net = network("two_bus")
    j = assemble_pf_jacobian(net, flat_start(net)).matrix.toarray()
    a = assemble_ss(net).matrix.toarray()
    real = np.block([[a.real, -a.imag], [a.imag, a.real]])
    n = a.shape[0]
    perm = np.empty(2 * n, dtype=int)
    perm[0::2], perm[1::2] = np.arange(n), np.arange(n) + n
    np.testing.assert_allclose(j, real[np.ix_(perm, perm)], atol=1e-14)


def test_jacobian_suite_runtime():
    t = time.perf_counter()
    for name in NAMES:
        net = pf_of(name).network
        for x in iterates(name):
            assemble_pf_jacobian(net, x)
    assert time.perf_counter() - t < 10.0
