"""Model parameters, delta-comb form factors and single-qubit interventions.

Conventions used throughout the package:

* qubit basis index 0 is the excited level ``|0>``, index 1 the ground level
  ``|1>``; ``sigma_plus = |0><1|`` raises the qubit;
* field velocity and hbar are 1, so positions and times share units;
* a form factor is ``g(x) = sqrt(gamma) * sum_n c_n delta(x - x_n)`` with
  ``sum_n |c_n|^2 = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from hnm.errors import (
    ConfigError,
    DimensionError,
    EmptyError,
    NormalizationError,
    SpacingError,
)

EXCITED = 0
GROUND = 1

NORM_TOL = 1e-9
SPACING_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the emitter-waveguide model.

    ``epsilon0`` is the dressed excitation energy; it defaults to ``omega0``.
    """

    gamma: float
    omega0: float
    T: float
    epsilon0: float | None = None

    def __post_init__(self):
        if self.epsilon0 is None:
            object.__setattr__(self, "epsilon0", self.omega0)
        for name in ("gamma", "omega0", "T", "epsilon0"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ConfigError(f"{name} must be finite, got {value!r}")
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if self.T <= 0:
            raise ConfigError(f"T must be positive, got {self.T}")

    @property
    def rate(self) -> complex:
        """Complex exponent ``-(i eps0 + gamma/2)`` of the free decay."""
        return -(1j * self.epsilon0 + 0.5 * self.gamma)


@dataclass(frozen=True)
class FormFactor:
    """Finite delta comb: ordered ``(x_n, c_n)`` pairs."""

    points: tuple[tuple[float, complex], ...]

    def __post_init__(self):
        pts = tuple((float(x), complex(c)) for x, c in self.points)
        object.__setattr__(self, "points", pts)

    @property
    def positions(self) -> np.ndarray:
        return np.array([x for x, _ in self.points], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c for _, c in self.points], dtype=complex)

    def __len__(self):
        return len(self.points)

    def delays(self) -> list[tuple[int, int, float]]:
        """Ordered pairs ``(upstream m, downstream n, x_n - x_m)`` with m < n."""
        xs = self.positions
        return [
            (m, n, xs[n] - xs[m])
            for m in range(len(xs))
            for n in range(m + 1, len(xs))
        ]

    @property
    def min_gap(self) -> float:
        """Smallest spacing between neighbouring points (inf for one point)."""
        if len(self.points) < 2:
            return math.inf
        return float(np.min(np.diff(self.positions)))

    @property
    def extent(self) -> float:
        xs = self.positions
        return float(xs[-1] - xs[0])


def one_point() -> FormFactor:
    """Local point interaction at the origin."""
    return FormFactor(((0.0, 1.0),))


def two_point(T: float) -> FormFactor:
    """Two equal-weight points at ``0`` and ``T``."""
    w = 1 / math.sqrt(2)
    return FormFactor(((0.0, w), (float(T), w)))


def comb(positions: Sequence[float], weights: Sequence[complex] | None = None) -> FormFactor:
    """Comb with the given positions; weights default to uniform and are normalized."""
    if weights is None:
        weights = np.ones(len(positions))
    w = np.asarray(weights, dtype=complex)
    norm = np.sqrt(np.sum(np.abs(w) ** 2))
    if norm == 0:
        raise NormalizationError("all weights vanish")
    return FormFactor(tuple(zip(positions, w / norm)))


def validate_form_factor(ff: FormFactor, params: ModelParams) -> FormFactor:
    """Check normalization and spacing; shift so the first point sits at 0.

    Raises:
        EmptyError: no points.
        NormalizationError: ``sum |c_n|^2`` off by more than 1e-9.
        SpacingError: positions not increasing with gaps of at least ``T``.
    """
    if len(ff.points) == 0:
        raise EmptyError("form factor has no coupling points")
    total = float(np.sum(np.abs(ff.weights) ** 2))
    if abs(total - 1.0) > NORM_TOL:
        raise NormalizationError(f"sum |c_n|^2 = {total!r}, expected 1")
    gaps = np.diff(ff.positions)
    if np.any(gaps < params.T - SPACING_TOL):
        raise SpacingError(
            f"point gaps {gaps.tolist()} must all be >= T = {params.T}"
        )
    x0 = ff.points[0][0]
    if x0 == 0.0:
        return ff
    return FormFactor(tuple((x - x0, c) for x, c in ff.points))


# ---------------------------------------------------------------------------
# Qubit states and interventions
# ---------------------------------------------------------------------------

def ket(level: int) -> np.ndarray:
    v = np.zeros(2, dtype=complex)
    v[level] = 1.0
    return v


def projector(level: int) -> np.ndarray:
    return np.outer(ket(level), ket(level).conj())


def check_qubit_state(rho: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    """Validate a 2x2 density matrix and return it as a complex array."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise DimensionError(f"qubit state must be 2x2, got {rho.shape}")
    if not np.allclose(rho, rho.conj().T, atol=atol):
        raise ConfigError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > atol:
        raise ConfigError(f"density matrix has trace {np.trace(rho)}")
    if np.linalg.eigvalsh(rho).min() < -atol:
        raise ConfigError("density matrix is not positive semidefinite")
    return rho


@dataclass(frozen=True)
class KrausSet:
    """One outcome of an instrument: a CP map given by Kraus operators."""

    ops: tuple[np.ndarray, ...]
    label: str = ""

    def __post_init__(self):
        ops = tuple(np.asarray(k, dtype=complex) for k in self.ops)
        for k in ops:
            if k.shape != (2, 2):
                raise DimensionError(f"Kraus operators must be 2x2, got {k.shape}")
        object.__setattr__(self, "ops", ops)
        if not self.is_trace_nonincreasing(atol=1e-9):
            raise ConfigError(f"Kraus set {self.label!r} increases the trace")

    def effect(self) -> np.ndarray:
        """``sum_i K_i^dag K_i``."""
        return sum((k.conj().T @ k for k in self.ops), np.zeros((2, 2), complex))

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return sum((k @ rho @ k.conj().T for k in self.ops), np.zeros((2, 2), complex))

    def choi(self) -> np.ndarray:
        """Choi matrix ``sum_ab |a><b| (x) A(|a><b|)``, input factor first."""
        out = np.zeros((4, 4), dtype=complex)
        for k in self.ops:
            # |K>> = sum_a |a> (x) K|a>, so |K>><<K| is the Choi of K . K^dag
            v = k.T.reshape(-1)
            out += np.outer(v, v.conj())
        return out

    def is_trace_nonincreasing(self, atol: float = 1e-12) -> bool:
        return np.linalg.eigvalsh(np.eye(2) - self.effect()).min() >= -atol


@dataclass(frozen=True)
class Instrument:
    """Named collection of outcomes whose effects sum to the identity."""

    name: str
    outcomes: dict[str, KrausSet] = field(default_factory=dict)

    def __post_init__(self):
        total = sum((k.effect() for k in self.outcomes.values()), np.zeros((2, 2), complex))
        if not np.allclose(total, np.eye(2), atol=1e-12):
            raise ConfigError(f"instrument {self.name!r} is not trace preserving")

    def __iter__(self) -> Iterable[KrausSet]:
        return iter(self.outcomes.values())


SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|


def unitary_instrument(name: str, u: np.ndarray) -> Instrument:
    return Instrument(name, {name: KrausSet((u,), name)})


def pauli_interventions() -> dict[str, Instrument]:
    """Catalogue of standard single-qubit instruments keyed by name.

    Contains the identity, the three Pauli unitaries, a projective measurement
    in the energy basis (outcomes ``excited``/``ground``) and two
    trash-and-prepare instruments that discard the qubit and reprepare it in
    the excited or ground level.
    """
    cat = {
        "identity": unitary_instrument("identity", np.eye(2)),
        "x": unitary_instrument("x", SIGMA_X),
        "y": unitary_instrument("y", SIGMA_Y),
        "z": unitary_instrument("z", SIGMA_Z),
        "measure_z": Instrument(
            "measure_z",
            {
                "excited": KrausSet((projector(EXCITED),), "excited"),
                "ground": KrausSet((projector(GROUND),), "ground"),
            },
        ),
    }
    for level, tag in ((EXCITED, "excited"), (GROUND, "ground")):
        ops = tuple(np.outer(ket(level), ket(j)) for j in (EXCITED, GROUND))
        name = f"prepare_{tag}"
        cat[name] = Instrument(name, {name: KrausSet(ops, name)})
    return cat


def outcome_catalogue() -> dict[str, KrausSet]:
    """Every outcome of :func:`pauli_interventions` as a flat mapping.

    Single-outcome instruments keep their name; others are keyed
    ``"instrument:outcome"`` (e.g. ``"measure_z:excited"``).
    """
    out = {}
    for name, ins in pauli_interventions().items():
        for oname, ks in ins.outcomes.items():
            out[name if len(ins.outcomes) == 1 else f"{name}:{oname}"] = ks
    return out
