"""Collision-model (time-bin) simulation of the emitter and its chiral field.

The field is cut into bins of width ``dt`` that ride a conveyor moving one
slot per step. Bins carry fixed integer labels: at step ``s`` the bin with
label ``l`` occupies ``[(s - l - 1) dt, (s - l) dt]``, so coupling point
``x_n = m_n dt`` meets label ``s - m_n``. One step applies the exact
exponential of the local Hamiltonian

    dt * eps0 |0><0| + sqrt(gamma dt) * sum_n (conj(c_n) sigma_+ b_n + c_n sigma_- b_n^dag)

to the qubit and the bins sitting at the coupling points. A photon emitted
upstream therefore re-enters the interaction ``(x_n - x_m) / dt`` steps later,
which reproduces the delayed feedback.

States are pure vectors of shape ``(R, 2, D)``: ``R`` enumerates auxiliary
registers (ancillas, purified Kraus indices), ``2`` is the qubit and ``D`` the
dimension of the truncated Fock basis (at most ``e_max`` photons).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.linalg import expm

from hnm.errors import (
    CutoffError,
    DimensionError,
    GridMismatch,
    ResourceError,
    SupportError,
    TruncationOverflow,
)
from hnm.fock import FockBasis
from hnm.model import EXCITED, GROUND, FormFactor, KrausSet, ModelParams, validate_form_factor

log = logging.getLogger(__name__)

GRID_RTOL = 1e-9
DEFAULT_MAX_AMPLITUDES = 60_000_000


def _as_steps(value: float, dt: float, what: str) -> int:
    n = round(value / dt)
    if abs(value / dt - n) > GRID_RTOL * max(1.0, abs(value / dt)):
        raise GridMismatch(f"{what} = {value} is not a multiple of dt = {dt}")
    return int(n)


@dataclass(frozen=True, eq=False)
class SimConfig:
    """Discretization of a model: bin width, window and excitation cutoff."""

    params: ModelParams
    ff: FormFactor
    dt: float
    e_max: int
    offsets: tuple[int, ...]  # coupling positions in bins
    label_min: int
    n_bins: int
    basis: FockBasis = field(repr=False)
    local_unitary: np.ndarray = field(repr=False)
    leakage_bound: float = 1e-6
    max_amplitudes: int = DEFAULT_MAX_AMPLITUDES

    @property
    def label_max(self) -> int:
        return self.label_min + self.n_bins - 1

    @property
    def delay_steps(self) -> int:
        return _as_steps(self.params.T, self.dt, "T")

    def steps(self, t: float) -> int:
        """Number of steps spanning a duration ``t`` (must be a multiple of dt)."""
        return _as_steps(t, self.dt, "time")

    def label_position(self, label, step: int):
        """Bin centre of ``label`` after ``step`` steps."""
        return (step - np.asarray(label) - 0.5) * self.dt

    def label_of(self, x, step: int = 0):
        """Label of the bin containing position ``x`` after ``step`` steps."""
        return np.floor(step - np.asarray(x, dtype=float) / self.dt).astype(int)


def _local_unitary(params: ModelParams, weights: np.ndarray, dt: float, cap: int) -> np.ndarray:
    """exp(-i dt H_loc) on qubit (x) P modes, each truncated at ``cap`` photons."""
    n_modes = len(weights)
    m = cap + 1
    a = np.diag(np.sqrt(np.arange(1, m)), 1).astype(complex)
    eye_m = np.eye(m)
    sp = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|, raises the qubit
    pe = np.array([[1, 0], [0, 0]], dtype=complex)

    def mode_op(op, p):
        mats = [eye_m] * n_modes
        mats[p] = op
        out = np.ones((1, 1))
        for mat in mats:
            out = np.kron(out, mat)
        return out

    dim_f = m ** n_modes
    h = dt * params.epsilon0 * np.kron(pe, np.eye(dim_f))
    g = math.sqrt(params.gamma * dt)
    for p, c in enumerate(weights):
        term = np.conj(c) * np.kron(sp, mode_op(a, p))
        h = h + g * (term + term.conj().T)
    return expm(-1j * h)


def build_sim(
    params: ModelParams,
    ff: FormFactor,
    dt: float,
    e_max: int,
    t_max: float,
    *,
    upstream: float = 0.0,
    downstream: float = 0.0,
    leakage_bound: float = 1e-6,
    max_amplitudes: int = DEFAULT_MAX_AMPLITUDES,
) -> SimConfig:
    """Discretize a model for simulations lasting at most ``t_max``.

    Args:
        params: model parameters.
        ff: form factor; every position and ``T`` must be multiples of ``dt``.
        dt: bin width.
        e_max: maximum number of photons kept in the field.
        t_max: longest simulated time; fixes the number of bins.
        upstream: extra field length kept before the first point (x < 0) at t = 0,
            for initial wavepackets that arrive later.
        downstream: extra field length kept beyond the last point at t = 0.
        leakage_bound: cumulative norm loss to the cutoff that raises
            :class:`TruncationOverflow`.
        max_amplitudes: bound on ``R * 2 * D`` enforced when registers grow.

    Raises:
        GridMismatch: ``T``, a point position or a window length is not an
            integer number of bins.
        CutoffError: ``e_max < 1``.
    """
    if e_max < 1:
        raise CutoffError(f"e_max must be >= 1, got {e_max}")
    if not dt > 0:
        raise GridMismatch(f"dt must be positive, got {dt}")
    ff = validate_form_factor(ff, params)
    _as_steps(params.T, dt, "T")
    offsets = tuple(_as_steps(x, dt, "point position") for x in ff.positions)
    n_steps = _as_steps(t_max, dt, "t_max")
    up = _as_steps(upstream, dt, "upstream")
    down = _as_steps(downstream, dt, "downstream")
    label_min = -offsets[-1] - down
    label_max = max(n_steps - 1, 0) + up
    n_bins = label_max - label_min + 1
    if 2 * math.comb(n_bins + e_max, e_max) > max_amplitudes:
        raise ResourceError(
            f"{n_bins} bins with e_max = {e_max} exceed max_amplitudes = {max_amplitudes}"
        )
    return SimConfig(
        params=params,
        ff=ff,
        dt=float(dt),
        e_max=int(e_max),
        offsets=offsets,
        label_min=label_min,
        n_bins=n_bins,
        basis=FockBasis(n_bins, e_max),
        local_unitary=_local_unitary(params, ff.weights, dt, e_max + 1),
        leakage_bound=leakage_bound,
        max_amplitudes=max_amplitudes,
    )


@dataclass(frozen=True, eq=False)
class TimeBinState:
    """Pure state of registers (x) qubit (x) truncated field.

    ``amps`` has shape ``(R, 2, D)``; ``registers`` lists the dimensions whose
    product is ``R``. ``leakage`` accumulates norm discarded by the cutoff.
    """

    config: SimConfig
    amps: np.ndarray
    step: int = 0
    registers: tuple[int, ...] = (1,)
    leakage: float = 0.0

    @property
    def time(self) -> float:
        return self.step * self.config.dt

    def norm2(self) -> float:
        return float(np.vdot(self.amps, self.amps).real)


def initial_state(config: SimConfig, qubit=EXCITED) -> TimeBinState:
    """Qubit in a basis level (or a normalized 2-vector) with the field in vacuum."""
    if isinstance(qubit, (int, np.integer)):
        vec = np.zeros(2, dtype=complex)
        vec[int(qubit)] = 1.0
    else:
        vec = np.asarray(qubit, dtype=complex)
        if vec.shape != (2,):
            raise DimensionError(f"qubit vector must have shape (2,), got {vec.shape}")
    amps = np.zeros((1, 2, config.basis.dim), dtype=complex)
    amps[0, :, config.basis.vacuum_index()] = vec
    return TimeBinState(config, amps)


def _check_size(config: SimConfig, n_registers: int):
    total = n_registers * 2 * config.basis.dim
    if total > config.max_amplitudes:
        raise ResourceError(
            f"state with {n_registers} register states needs {total} amplitudes "
            f"(limit {config.max_amplitudes})"
        )


def _step(config: SimConfig, amps: np.ndarray, modes: np.ndarray) -> tuple[np.ndarray, float]:
    """One collision with the bins ``modes`` (internal indices). Returns (amps, leakage)."""
    basis = config.basis
    occ = basis.occ
    n_pts = len(modes)
    cap = config.e_max + 1
    base = cap + 1
    u = config.local_unitary
    counts = np.stack([(occ == m).sum(axis=1) for m in modes], axis=1) if occ.shape[1] else (
        np.zeros((basis.dim, n_pts), dtype=np.int64)
    )
    weights = base ** np.arange(n_pts - 1, -1, -1)
    code = counts @ weights
    is_local = np.isin(occ, modes)
    live = np.any(amps != 0, axis=0)  # (2, D)

    new = np.zeros_like(amps)
    overflow: dict[int, list[tuple[np.ndarray, np.ndarray]]] = {0: [], 1: []}

    for pc in np.unique(code):
        n_src = np.array([(pc // w) % base for w in weights])
        group = np.nonzero(code == pc)[0]
        for q in (EXCITED, GROUND):
            src = group[live[q, group]]
            if src.size == 0:
                continue
            exc = (q == EXCITED) + n_src.sum()
            col = q * base ** n_pts + int(n_src @ weights)
            rest = np.where(is_local[src], basis.sentinel, occ[src])
            for q2 in (EXCITED, GROUND):
                tot = exc - (q2 == EXCITED)
                if tot < 0:
                    continue
                for n_tgt in _patterns(n_pts, tot, cap):
                    row = q2 * base ** n_pts + int(np.dot(n_tgt, weights))
                    coef = u[row, col]
                    if coef == 0:
                        continue
                    add = np.broadcast_to(np.repeat(modes, n_tgt), (len(src), int(n_tgt.sum())))
                    tgt = basis.index(np.concatenate([rest, add], axis=1))
                    contrib = coef * amps[:, q, src]
                    ok = tgt < basis.dim
                    if np.all(ok):
                        new[:, q2, tgt] += contrib
                    else:
                        new[:, q2, tgt[ok]] += contrib[:, ok]
                        overflow[q2].append((tgt[~ok], contrib[:, ~ok]))

    leak = 0.0
    for q2, parts in overflow.items():
        if not parts:
            continue
        keys = np.concatenate([k for k, _ in parts])
        vals = np.concatenate([v for _, v in parts], axis=1)
        uniq, inv = np.unique(keys, return_inverse=True)
        acc = np.zeros((amps.shape[0], len(uniq)), dtype=complex)
        np.add.at(acc, (slice(None), inv), vals)
        leak += float(np.sum(np.abs(acc) ** 2))
    return new, leak


_PATTERN_CACHE: dict[tuple[int, int, int], list[np.ndarray]] = {}


def _patterns(n_pts: int, total: int, cap: int) -> list[np.ndarray]:
    """Occupation tuples of ``n_pts`` modes summing to ``total`` (each <= cap)."""
    key = (n_pts, total, cap)
    if key not in _PATTERN_CACHE:
        out = []

        def rec(prefix, left, slots):
            if slots == 0:
                if left == 0:
                    out.append(np.array(prefix, dtype=np.int64))
                return
            for k in range(min(left, cap) + 1):
                rec(prefix + [k], left - k, slots - 1)

        rec([], total, n_pts)
        _PATTERN_CACHE[key] = out
    return _PATTERN_CACHE[key]


def evolve(state: TimeBinState, n_steps: int) -> TimeBinState:
    """Advance the state by ``n_steps`` collisions.

    Raises:
        ResourceError: the bin window is exhausted.
        TruncationOverflow: cumulative leakage exceeds ``config.leakage_bound``.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    cfg = state.config
    amps = state.amps
    leakage = state.leakage
    offsets = np.array(cfg.offsets)
    for s in range(state.step, state.step + n_steps):
        modes = s - offsets - cfg.label_min
        if modes.min() < 0 or modes.max() >= cfg.n_bins:
            raise ResourceError(f"step {s} runs past the bin window; increase t_max")
        amps, leak = _step(cfg, amps, modes)
        leakage += leak
        if leakage > cfg.leakage_bound:
            raise TruncationOverflow(
                f"truncation leakage {leakage:.3e} exceeds bound {cfg.leakage_bound:.1e}"
            )
    return replace(state, amps=amps, step=state.step + n_steps, leakage=leakage)


def evolve_time(state: TimeBinState, t: float) -> TimeBinState:
    return evolve(state, state.config.steps(t))


def apply_qubit_unitary(state: TimeBinState, u: np.ndarray) -> TimeBinState:
    return replace(state, amps=np.einsum("ij,rjd->rid", u, state.amps))


def apply_intervention(state: TimeBinState, kraus: KrausSet) -> tuple[TimeBinState, float]:
    """Apply one instrument outcome to the qubit.

    A single Kraus operator acts in place. Several operators are purified: a
    new register indexed by the Kraus label is appended so the state stays
    pure. The branch is returned unnormalized together with its weight
    relative to the input.
    """
    if not isinstance(kraus, KrausSet):
        kraus = KrausSet(tuple(kraus))
    for k in kraus.ops:
        if k.shape != (2, 2):
            raise DimensionError(f"Kraus operators act on the qubit only, got shape {k.shape}")
    before = state.norm2()
    if len(kraus.ops) == 1:
        amps = np.einsum("ij,rjd->rid", kraus.ops[0], state.amps)
        registers = state.registers
    else:
        _check_size(state.config, state.amps.shape[0] * len(kraus.ops))
        amps = np.einsum("kij,rjd->rkid", np.stack(kraus.ops), state.amps)
        amps = amps.reshape(-1, 2, state.amps.shape[2])
        registers = state.registers + (len(kraus.ops),)
    new = replace(state, amps=amps, registers=registers)
    weight = new.norm2() / before if before > 0 else 0.0
    return new, weight


def reduced_qubit(state: TimeBinState) -> np.ndarray:
    """Qubit density matrix, tracing out field and registers (normalized)."""
    rho = np.einsum("rid,rjd->ij", state.amps, state.amps.conj())
    tr = np.trace(rho).real
    if tr <= 0:
        raise ValueError("state has zero norm")
    return rho / tr


def total_excitation(state: TimeBinState) -> float:
    """Expectation of qubit excitation plus photon number (unnormalized state)."""
    p = np.abs(state.amps) ** 2
    nphot = state.config.basis.nphot
    return float(p[:, EXCITED, :].sum() + (p.sum(axis=(0, 1)) * nphot).sum())


def field_amplitudes(state: TimeBinState) -> tuple[np.ndarray, np.ndarray]:
    """Single-photon wavefunction for the qubit in its ground level.

    Returns bin centres and ``xi(x)`` samples (amplitude / sqrt(dt)) for a state
    without auxiliary registers.
    """
    if state.amps.shape[0] != 1:
        raise DimensionError("field_amplitudes needs a state without registers")
    cfg = state.config
    labels = np.arange(cfg.label_min, cfg.label_min + cfg.n_bins)
    idx = cfg.basis.offsets[1] + (labels - cfg.label_min)
    x = cfg.label_position(labels, state.step)
    xi = state.amps[0, GROUND, idx] / math.sqrt(cfg.dt)
    order = np.argsort(x)
    return x[order], xi[order]


def field_density(state: TimeBinState, x_range: tuple[float, float] | None = None):
    """``|xi(x)|^2`` per bin from the single-excitation component.

    Returns ``(x, density)`` sorted by position, optionally restricted to bins
    whose centre lies in ``x_range``. Registers are traced out.
    """
    cfg = state.config
    labels = np.arange(cfg.label_min, cfg.label_min + cfg.n_bins)
    idx = cfg.basis.offsets[1] + (labels - cfg.label_min)
    x = cfg.label_position(labels, state.step)
    dens = np.sum(np.abs(state.amps[:, GROUND, idx]) ** 2, axis=0) / cfg.dt
    order = np.argsort(x)
    x, dens = x[order], dens[order]
    if x_range is not None:
        keep = (x >= x_range[0]) & (x <= x_range[1])
        x, dens = x[keep], dens[keep]
    return x, dens


def create_photon(state: TimeBinState, amplitudes: dict[int, complex]) -> TimeBinState:
    """Apply ``B^dag(eta) = sum_l eta_l b_l^dag`` with bin amplitudes keyed by label.

    Norm pushed past the cutoff is added to ``leakage``.
    """
    cfg = state.config
    basis = cfg.basis
    new = np.zeros_like(state.amps)
    lost_keys, lost_vals = [], []
    live = np.nonzero(np.any(state.amps != 0, axis=(0, 1)))[0]
    for label, eta in amplitudes.items():
        if eta == 0:
            continue
        mode = label - cfg.label_min
        if not 0 <= mode < cfg.n_bins:
            raise SupportError(f"label {label} outside the simulated window")
        rows = np.concatenate([basis.occ[live], np.full((len(live), 1), mode)], axis=1)
        tgt = basis.index(rows)
        occupancy = (basis.occ[live] == mode).sum(axis=1) + 1
        contrib = eta * np.sqrt(occupancy) * state.amps[:, :, live]
        ok = tgt < basis.dim
        new[:, :, tgt[ok]] += contrib[:, :, ok]
        if not np.all(ok):
            lost_keys.append(tgt[~ok])
            lost_vals.append(contrib[:, :, ~ok])
    leak = 0.0
    if lost_keys:
        uniq, inv = np.unique(np.concatenate(lost_keys), return_inverse=True)
        acc = np.zeros(state.amps.shape[:2] + (len(uniq),), dtype=complex)
        np.add.at(acc, (slice(None), slice(None), inv), np.concatenate(lost_vals, axis=2))
        leak = float(np.sum(np.abs(acc) ** 2))
    return replace(state, amps=new, leakage=state.leakage + leak)


def discretize_wavepacket(config: SimConfig, eta: Callable, step: int = 0) -> dict[int, complex]:
    """Bin amplitudes ``eta(x_centre) sqrt(dt)`` for every label in the window."""
    labels = np.arange(config.label_min, config.label_min + config.n_bins)
    vals = np.asarray(eta(config.label_position(labels, step)), dtype=complex) * math.sqrt(config.dt)
    return {int(l): complex(v) for l, v in zip(labels, vals) if v != 0}


def free_propagation_check(state: TimeBinState, eta: Callable, t: float) -> float:
    """Fidelity between ``U B^dag(eta)|psi>`` and ``B^dag(shifted eta) U|psi>``.

    ``eta`` is a function of position at the state's current time. It must
    vanish on every bin that crosses a coupling point during the next ``t``.

    Raises:
        SupportError: ``eta`` overlaps the swept region.
    """
    cfg = state.config
    n = cfg.steps(t)
    packet = discretize_wavepacket(cfg, eta, state.step)
    s0 = state.step
    for label in packet:
        for m in cfg.offsets:
            if s0 <= label + m < s0 + n:
                raise SupportError(
                    f"wavepacket bin at x = {float(cfg.label_position(label, s0)):.6g} "
                    f"meets the coupling point at {m * cfg.dt:.6g} within t = {t}"
                )
    # bins ride with the field: the shifted packet has the same label amplitudes
    first = evolve(create_photon(state, packet), n)
    second = create_photon(evolve(state, n), packet)
    overlap = np.vdot(second.amps, first.amps)
    return float(abs(overlap) ** 2 / (first.norm2() * second.norm2()))
