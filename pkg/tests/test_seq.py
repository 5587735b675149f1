import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ibrsc.seq import (
    A_INV,
    A_MAT,
    PhaseTriple,
    SequenceTriple,
    phase_current_magnitudes,
    seq_to_phase_matrix,
    to_phase,
    to_sequence,
)

A = cmath.rect(1.0, 2 * math.pi / 3)
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
cplx = st.builds(complex, finite, finite)


@pytest.mark.parametrize("abc, s012", [
    ((1, A * A, A), (0, 1, 0)),
    ((1, 1, 1), (1, 0, 0)),
    ((1, 0, 0), (1 / 3, 1 / 3, 1 / 3)),
    ((1, A, A * A), (0, 0, 1)),
])
def test_to_sequence_examples(abc, s012):
    np.testing.assert_allclose(to_sequence(np.array(abc)), s012, atol=1e-15)


def test_to_phase_examples():
    np.testing.assert_allclose(to_phase([0, 1, 0]), [1, A * A, A], atol=1e-15)
    np.testing.assert_allclose(to_phase([0, 0, 1]), [1, A, A * A], atol=1e-15)


def test_matrices_are_inverse():
    assert np.max(np.abs(A_MAT @ A_INV - np.eye(3))) < 1e-13


def test_dataclass_round_trip():
    p = PhaseTriple(1 + 2j, -0.3j, 0.7)
    s = to_sequence(p)
    assert isinstance(s, SequenceTriple)
    back = to_phase(s)
    np.testing.assert_allclose(back.as_array(), p.as_array(), atol=1e-14)


def test_round_trip_random_batch():
    rng = np.random.default_rng(7)
    v = rng.normal(size=(3, 1000)) + 1j * rng.normal(size=(3, 1000))
    assert np.max(np.abs(to_phase(to_sequence(v)) - v)) < 1e-12


@settings(max_examples=300, deadline=None)
@given(cplx, cplx, cplx)
def test_power_invariance(a, b, c):
    v = np.array([a, b, c])
    s = to_sequence(v)
    lhs = np.sum(np.abs(v) ** 2)
    assert abs(lhs - 3 * np.sum(np.abs(s) ** 2)) <= 1e-10 * max(1.0, lhs)


@settings(max_examples=300, deadline=None)
@given(cplx, cplx)
def test_phase_magnitudes_match_transform(i1, i2):
    ref = np.abs(to_phase([0, i1, i2]))
    got = phase_current_magnitudes(i1, i2)
    assert np.max(np.abs(got - ref)) <= 1e-12 * max(1.0, abs(i1) + abs(i2))


def test_phase_magnitudes_examples():
    np.testing.assert_allclose(phase_current_magnitudes(0.7j, 0), [0.7] * 3, atol=1e-15)
    np.testing.assert_allclose(phase_current_magnitudes(1, 1), [2, 1, 1], atol=1e-15)


def test_sequence_diagonal_matrix():
    z = seq_to_phase_matrix(0.3 + 1j, 0.1 + 0.5j)
    s = A_INV @ z @ A_MAT
    np.testing.assert_allclose(s, np.diag([0.3 + 1j, 0.1 + 0.5j, 0.1 + 0.5j]), atol=1e-15)
    np.testing.assert_allclose(z, z.T, atol=1e-15)
