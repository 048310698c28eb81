"""Closed-form reference data for the one-point (Markovian) model.

The golden Choi matrices are kept as functions of ``(gamma, t0[, t1])`` so tests
can sweep parameters. Basis order per step pair is ``|S S'>`` in
``{00, 01, 10, 11}`` (``S`` the reference half, ``S'`` the half sent through
the dynamics); for two steps the later pair is the outer factor.

Two variants of the single-step matrix exist. ``"derived"`` (default) carries
the coherence ``exp(-gamma t0 / 2)`` that follows from ``a(t) conj(a0(t))``;
``"printed"`` carries ``exp(-gamma t0)`` on the off-diagonal corners. Only the
derived variant is consistent with the two-step blocks and with the Markov
factorization.
"""

from __future__ import annotations

import math

import numpy as np

from hnm.errors import DomainError
from hnm.model import KrausSet
from hnm.process import ProcessChoi


def _check(*values):
    for v in values:
        if not v >= 0:
            raise DomainError(f"rates and times must be >= 0, got {v}")


def amplitude_damping_channel(gamma: float, t: float, epsilon0: float = 0.0) -> KrausSet:
    """Kraus pair of the one-point reduced dynamics after time ``t``.

    ``K0 = diag(exp(-(i eps0 + gamma/2) t), 1)``, ``K1 = sqrt(1 - exp(-gamma t)) |1><0|``.
    """
    _check(gamma, t)
    k0 = np.diag([np.exp(-(1j * epsilon0 + 0.5 * gamma) * t), 1.0])
    k1 = np.zeros((2, 2), dtype=complex)
    k1[1, 0] = math.sqrt(-math.expm1(-gamma * t))
    return KrausSet((k0, k1), f"amplitude_damping(t={t})")


def _choi_1step_entries(gamma: float, t0: float, variant: str) -> np.ndarray:
    e = math.exp(-gamma * t0)
    coh = {"derived": math.exp(-0.5 * gamma * t0), "printed": e}[variant]
    return np.array(
        [
            [e, 0, 0, coh],
            [0, 1 - e, 0, 0],
            [0, 0, 0, 0],
            [coh, 0, 0, 1],
        ],
        dtype=complex,
    )


def markovian_choi_1step(gamma: float, t0: float, variant: str = "derived") -> ProcessChoi:
    """4x4 single-step Choi state of the one-point model."""
    _check(gamma, t0)
    if variant not in ("derived", "printed"):
        raise ValueError(f"unknown variant {variant!r}")
    return ProcessChoi(
        _choi_1step_entries(gamma, t0, variant),
        (float(t0),),
        {"mode": "reference", "variant": variant},
    )


# Two-step blocks, indexed by the (S_1 S'_1) ket/bra labels.
def _blocks(gamma: float, t0: float, t1: float) -> dict[tuple[int, int], np.ndarray]:
    E = lambda s: math.exp(-gamma * s)  # noqa: E731
    d0, d1 = 1 - E(t0), 1 - E(t1)

    def corner(a, b, c, d):
        return np.array([[a, 0, 0, b], [0, c, 0, 0], [0, 0, 0, 0], [b, 0, 0, d]], dtype=complex)

    b0000 = corner(E(t0 + t1), E(t1 + t0 / 2), E(t1) * d0, E(t1))
    b0011 = corner(E(t0 + t1 / 2), E((t0 + t1) / 2), E(t1 / 2) * d0, E(t1 / 2))
    b0101 = corner(E(t0) * d1, E(t0 / 2) * d1, d0 * d1, d1)
    b1111 = corner(E(t0), E(t0 / 2), d0, 1.0)
    return {(0, 0): b0000, (0, 3): b0011, (1, 1): b0101, (3, 0): b0011.copy(), (3, 3): b1111}


def markovian_choi_2step(gamma: float, t0: float, t1: float) -> ProcessChoi:
    """16x16 two-step Choi state of the one-point model, assembled block by block."""
    _check(gamma, t0, t1)
    mat = np.zeros((16, 16), dtype=complex)
    for (i, j), block in _blocks(gamma, t0, t1).items():
        mat[4 * i : 4 * i + 4, 4 * j : 4 * j + 4] = block
    return ProcessChoi(mat, (float(t0), float(t1)), {"mode": "reference"})
