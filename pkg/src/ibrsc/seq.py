"""Symmetrical components.

Analysis uses ``A^-1`` (carrying the 1/3 factor), synthesis uses the unscaled
``A``.  Sequence order everywhere is (zero, positive, negative).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ALPHA",
    "A_MAT",
    "A_INV",
    "PhaseTriple",
    "SequenceTriple",
    "to_sequence",
    "to_phase",
    "seq_to_phase_matrix",
    "phase_current_magnitudes",
    "angle_offsets",
]

#: The 1/120 degree rotation operator.
ALPHA = complex(-0.5, np.sqrt(3.0) / 2.0)

A_MAT = np.array(
    [
        [1.0, 1.0, 1.0],
        [1.0, ALPHA**2, ALPHA],
        [1.0, ALPHA, ALPHA**2],
    ],
    dtype=complex,
)
A_INV = np.array(
    [
        [1.0, 1.0, 1.0],
        [1.0, ALPHA, ALPHA**2],
        [1.0, ALPHA**2, ALPHA],
    ],
    dtype=complex,
) / 3.0


@dataclass(frozen=True)
class PhaseTriple:
    a: complex
    b: complex
    c: complex

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c], dtype=complex)

    @classmethod
    def from_array(cls, v) -> "PhaseTriple":
        v = np.asarray(v, dtype=complex)
        return cls(complex(v[0]), complex(v[1]), complex(v[2]))

    def magnitudes(self) -> np.ndarray:
        return np.abs(self.as_array())


@dataclass(frozen=True)
class SequenceTriple:
    s0: complex
    s1: complex
    s2: complex

    def as_array(self) -> np.ndarray:
        return np.array([self.s0, self.s1, self.s2], dtype=complex)

    @classmethod
    def from_array(cls, v) -> "SequenceTriple":
        v = np.asarray(v, dtype=complex)
        return cls(complex(v[0]), complex(v[1]), complex(v[2]))


def to_sequence(v):
    """Phase (a, b, c) -> sequence (0, 1, 2).

    Accepts a :class:`PhaseTriple` (returns a :class:`SequenceTriple`) or an
    array whose first axis has length 3 (returns an array).
    """
    if isinstance(v, PhaseTriple):
        return SequenceTriple.from_array(A_INV @ v.as_array())
    return A_INV @ np.asarray(v, dtype=complex)


def to_phase(s):
    """Sequence (0, 1, 2) -> phase (a, b, c); inverse of :func:`to_sequence`."""
    if isinstance(s, SequenceTriple):
        return PhaseTriple.from_array(A_MAT @ s.as_array())
    return A_MAT @ np.asarray(s, dtype=complex)


def seq_to_phase_matrix(z0: complex, z1: complex, z2: complex | None = None) -> np.ndarray:
    """Phase-frame matrix of a sequence-diagonal element, ``A diag(z0,z1,z2) A^-1``."""
    if z2 is None:
        z2 = z1
    return A_MAT @ np.diag([z0, z1, z2]).astype(complex) @ A_INV


def angle_offsets(delta_i1: float, delta_i2: float) -> np.ndarray:
    """Per-phase angle difference between positive- and negative-sequence currents."""
    d = delta_i1 - delta_i2
    return np.array([d, d + 2.0 * np.pi / 3.0, d - 2.0 * np.pi / 3.0])


def phase_current_magnitudes(i1: complex, i2: complex) -> np.ndarray:
    """Phase current magnitudes from positive and negative sequence currents.

    Zero-sequence current is taken as absent, which holds for a converter.
    """
    m1, m2 = abs(i1), abs(i2)
    dd = angle_offsets(np.angle(i1), np.angle(i2))
    sq = m1 * m1 + m2 * m2 + 2.0 * m1 * m2 * np.cos(dd)
    return np.sqrt(np.maximum(sq, 0.0))
