"""Symmetrical-component (Fortescue) transforms between phase and sequence domain.

The forward transform maps the phase triple (a, b, c) onto (zero, positive,
negative) sequence phasors with the 1/3-normalised operator matrix

    [E0]       1  [1  1   1 ]   [Ea]
    [E+]  =   --- [1  a   a2] . [Eb]        a = exp(j 2 pi / 3)
    [E-]       3  [1  a2  a ]   [Ec]

A balanced triple (1, a2, a) therefore maps to (0, 1, 0).  The inverse is the
conjugate operator matrix without the 1/3 factor; the round trip is the
identity to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ALPHA = np.exp(2j * np.pi / 3)

# forward rows (phase -> sequence), 1/3-normalised
W_ZERO = np.array([1.0, 1.0, 1.0], dtype=complex) / 3.0
W_POS = np.array([1.0, ALPHA, ALPHA**2], dtype=complex) / 3.0
W_NEG = np.array([1.0, ALPHA**2, ALPHA], dtype=complex) / 3.0

FORTESCUE = np.vstack([W_ZERO, W_POS, W_NEG])

# inverse columns (sequence -> phase): E_abc = V_ZERO*E0 + V_POS*E+ + V_NEG*E-
V_ZERO = np.array([1.0, 1.0, 1.0], dtype=complex)
V_POS = np.array([1.0, ALPHA**2, ALPHA], dtype=complex)
V_NEG = np.array([1.0, ALPHA, ALPHA**2], dtype=complex)

FORTESCUE_INV = np.column_stack([V_ZERO, V_POS, V_NEG])


@dataclass(frozen=True)
class SequenceSet:
    """Zero/positive/negative sequence phasors of one three-phase quantity."""

    zero: complex
    positive: complex
    negative: complex

    def as_array(self) -> np.ndarray:
        return np.array([self.zero, self.positive, self.negative], dtype=complex)


def phase_to_sequence(e_abc) -> SequenceSet:
    """Decompose a phase triple (a, b, c) into symmetrical components."""
    e = np.asarray(e_abc, dtype=complex)
    seq = FORTESCUE @ e
    return SequenceSet(zero=complex(seq[0]), positive=complex(seq[1]), negative=complex(seq[2]))


def sequence_to_phase(seq: SequenceSet) -> np.ndarray:
    """Recompose phase phasors (a, b, c) from symmetrical components."""
    return FORTESCUE_INV @ seq.as_array()
