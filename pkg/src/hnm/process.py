"""Multitime process tensors (Choi states) and the Markov factorization test.

A k-step Choi state lives on k pairs ``(S_j, S'_j)``. ``S'_j`` is the qubit
fed into the dynamics at the start of step j (half of an unnormalized
``|00> + |11>``) and read out at its end; ``S_j`` is the reference half.
Matrix ordering: pair ``k-1`` is the outermost tensor factor, pair 0 the
innermost; inside a pair the basis is ``|S S'>`` in ``{00, 01, 10, 11}``. The
trace is ``2**k``.

Phase convention: with ``ground_phase=True`` (default) the ground level of
every step output carries ``exp(-i eps0 t_j)``, i.e. the output of step j is
rotated by ``diag(1, exp(-i eps0 t_j))``. This makes the one-point Choi state
real and independent of ``eps0``. Direct simulations of intervention
sequences apply the same rotation before every intervention, so both routes
describe the same experiment.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from hnm.errors import DimensionError, DomainError, OrderingError, WindowError
from hnm.exact import amplitude, photon_wavefunction
from hnm.model import (
    EXCITED,
    GROUND,
    FormFactor,
    KrausSet,
    ModelParams,
    projector,
    validate_form_factor,
)
from hnm import timebin

log = logging.getLogger(__name__)

ORDERING = "pairs latest-outer; |S S'> within pair"
MAX_STEPS = 3


@dataclass(frozen=True, eq=False)
class ProcessChoi:
    """Choi matrix of a k-step process with its step durations."""

    matrix: np.ndarray
    times: tuple[float, ...]
    meta: dict = field(default_factory=dict)
    ordering: str = ORDERING

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        dim = 4 ** len(self.times)
        if mat.shape != (dim, dim):
            raise DimensionError(f"{len(self.times)} steps need a {dim}x{dim} matrix, got {mat.shape}")
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))

    @property
    def k(self) -> int:
        return len(self.times)

    def problems(self, herm_tol=1e-10, psd_tol=1e-9, trace_tol=1e-9) -> list[str]:
        """Violated validity conditions (empty when the matrix is a valid Choi state)."""
        out = []
        m = self.matrix
        if np.max(np.abs(m - m.conj().T), initial=0.0) > herm_tol:
            out.append("not Hermitian")
        if np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min() < -psd_tol:
            out.append("not positive semidefinite")
        if abs(np.trace(m) - 2**self.k) > trace_tol:
            out.append(f"trace {np.trace(m).real:.12g} != {2**self.k}")
        return out

    def is_valid(self, **tols) -> bool:
        return not self.problems(**tols)

    def to_dict(self) -> dict:
        m = self.matrix
        return {
            "dimension": m.shape[0],
            "times": list(self.times),
            "ordering": self.ordering,
            "meta": self.meta,
            "entries": [[[float(z.real), float(z.imag)] for z in row] for row in m],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "ProcessChoi":
        arr = np.array(data["entries"], dtype=float)
        mat = arr[..., 0] + 1j * arr[..., 1]
        if mat.shape[0] != data["dimension"]:
            raise DimensionError("dimension field does not match entries")
        if data.get("ordering", ORDERING) != ORDERING:
            raise OrderingError(f"unsupported ordering {data['ordering']!r}")
        return cls(mat, tuple(data["times"]), dict(data.get("meta", {})))


def _legs(choi: ProcessChoi) -> np.ndarray:
    """Matrix as a tensor with 2k row legs then 2k column legs (pair k-1 first)."""
    return choi.matrix.reshape((2,) * (4 * choi.k))


def _ground_phase(params: ModelParams, t: float) -> np.ndarray:
    return np.diag([1.0, np.exp(-1j * params.epsilon0 * t)])


def _check_times(times: Sequence[float]):
    if len(times) == 0:
        raise DomainError("need at least one step")
    if len(times) > MAX_STEPS:
        raise DomainError(f"at most {MAX_STEPS} steps are supported, got {len(times)}")
    for t in times:
        if not t >= 0:
            raise DomainError(f"step durations must be >= 0, got {t}")


def build_choi_analytic(
    params: ModelParams, ff: FormFactor, *times: float, ground_phase: bool = True
) -> ProcessChoi:
    """Choi state from the closed-form evolution of every basis input.

    Step j maps an input ``|1>`` to ``a0(t_j)|1>``, and an input ``|0>`` to
    ``a(t_j)|0>`` plus ``|1>`` with a photon ``xi_{t_j}``, which afterwards
    propagates freely. The matrix follows from the Gram matrix of the photon
    content of all branches. Valid while the total duration stays below the
    smallest point gap, where photons never reach a second coupling point.

    Raises:
        WindowError: ``sum(times) >= min gap`` of the form factor.
    """
    _check_times(times)
    ff = validate_form_factor(ff, params)
    total = float(sum(times))
    if total >= ff.min_gap:
        raise WindowError(
            f"total duration {total} must stay below the point gap {ff.min_gap}"
        )
    k = len(times)
    amp = [complex(amplitude(params, ff, t)) for t in times]
    a0 = [np.exp(-1j * params.epsilon0 * t) if ground_phase else 1.0 for t in times]
    norms = [photon_wavefunction(params, ff, t).norm2() for t in times]

    # Photon j sits on [x_n + s_j, x_n + s_j + t_j] at the end, s_j = later durations.
    later = [sum(times[j + 1 :]) for j in range(k)]
    supports = [
        [(x + later[j], x + later[j] + times[j]) for x in ff.positions] for j in range(k)
    ]
    for i, j in itertools.combinations(range(k), 2):
        for lo1, hi1 in supports[i]:
            for lo2, hi2 in supports[j]:
                if min(hi1, hi2) - max(lo1, lo2) > 1e-12:
                    raise WindowError("photon supports overlap; analytic path invalid")
    gram = np.diag(norms).astype(complex)  # disjoint supports: no cross overlaps

    def branches(inputs):
        """(outputs, amplitude, photon steps) for one input configuration."""
        per_step = []
        for j, a_in in enumerate(inputs):
            if a_in == GROUND:
                per_step.append([(GROUND, a0[j], False)])
            else:
                per_step.append([(EXCITED, amp[j], False), (GROUND, 1.0, True)])
        for combo in itertools.product(*per_step):
            outs = tuple(c[0] for c in combo)
            coef = np.prod([c[1] for c in combo])
            photons = tuple(j for j, c in enumerate(combo) if c[2])
            yield outs, coef, photons

    def field_overlap(ph_bra, ph_ket):
        if len(ph_bra) != len(ph_ket):
            return 0.0
        return sum(
            np.prod([gram[p, q] for p, q in zip(ph_bra, perm)])
            for perm in itertools.permutations(ph_ket)
        )

    def flat(inputs, outs):
        # pair k-1 outermost; (S, S') inside a pair
        idx = 0
        for j in reversed(range(k)):
            idx = idx * 4 + 2 * inputs[j] + outs[j]
        return idx

    terms = []
    for inputs in itertools.product((EXCITED, GROUND), repeat=k):
        for outs, coef, photons in branches(inputs):
            terms.append((flat(inputs, outs), coef, photons))

    mat = np.zeros((4**k, 4**k), dtype=complex)
    for i, ci, pi in terms:
        for j, cj, pj in terms:
            ov = field_overlap(pj, pi)
            if ov != 0:
                mat[i, j] += ci * np.conj(cj) * ov
    return ProcessChoi(mat, tuple(times), {"mode": "analytic", "ground_phase": ground_phase})


def build_choi_simulated(
    params: ModelParams,
    ff: FormFactor,
    times: Sequence[float],
    dt: float,
    e_max: int | None = None,
    *,
    ground_phase: bool = True,
    max_amplitudes: int = timebin.DEFAULT_MAX_AMPLITUDES,
    config: timebin.SimConfig | None = None,
) -> ProcessChoi:
    """Choi state from the time-bin simulator, valid for any step durations.

    Every step starts by loading a fresh reference pair: the register keeps
    ``S_j`` and the qubit slot receives ``S'_j``. After the step the qubit is
    moved into an output register and the next pair is loaded. The field is
    traced out at the end.

    Raises:
        ResourceError: the register-expanded state exceeds ``max_amplitudes``.
        TruncationOverflow: propagated from the simulator.
    """
    times = tuple(float(t) for t in times)
    _check_times(times)
    k = len(times)
    if e_max is None:
        e_max = k
    if config is None:
        config = timebin.build_sim(
            params, ff, dt, e_max, sum(times), max_amplitudes=max_amplitudes
        )
    steps = [config.steps(t) for t in times]
    dim = config.basis.dim
    timebin._check_size(config, 2 * 4 ** (k - 1))

    # registers so far: in_0, out_0, in_1, out_1, ...; qubit = S'_j
    amps = np.zeros((2, 2, dim), dtype=complex)
    amps[0, 0, 0] = amps[1, 1, 0] = 1.0
    state = timebin.TimeBinState(config, amps, registers=(2,))
    for j, n in enumerate(steps):
        state = timebin.evolve(state, n)
        if ground_phase:
            state = timebin.apply_qubit_unitary(state, _ground_phase(params, times[j]))
        if j == k - 1:
            break
        old = state.amps
        new = np.zeros((old.shape[0], 2, 2, 2, dim), dtype=complex)
        for a in (0, 1):
            new[:, :, a, a, :] = old
        state = replace(
            state, amps=new.reshape(-1, 2, dim), registers=state.registers + (2, 2)
        )

    psi = state.amps.reshape((2,) * (2 * k) + (dim,))  # in0, out0, in1, out1, ..., field
    rho = np.tensordot(psi, psi.conj(), axes=([2 * k], [2 * k]))
    # reorder legs chronological -> (in_{k-1}, out_{k-1}, ..., in_0, out_0)
    order = [ax for j in reversed(range(k)) for ax in (2 * j, 2 * j + 1)]
    rho = rho.transpose(order + [2 * k + ax for ax in order]).reshape(4**k, 4**k)
    return ProcessChoi(
        rho,
        times,
        {"mode": "timebin", "dt": config.dt, "e_max": config.e_max,
         "ground_phase": ground_phase, "leakage": state.leakage},
    )


def step_marginal(choi: ProcessChoi, j: int) -> np.ndarray:
    """4x4 block of pair j with all other pairs traced out, normalized to trace 2."""
    k = choi.k
    t = choi.matrix.reshape((4,) * (2 * k))
    pos = k - 1 - j  # tensor position of pair j
    letters = "abcdefghij"
    rows = [letters[i] for i in range(k)]
    cols = [letters[i] if i != pos else "z" for i in range(k)]
    rows[pos] = "y"
    out = np.einsum("".join(rows) + "".join(cols) + "->yz", t)
    return out / 2 ** (k - 1)


def markov_factorization_distance(choi: ProcessChoi) -> float:
    """Frobenius distance between the Choi state and the product of its step marginals."""
    if choi.k < 2:
        return 0.0
    prod = np.ones((1, 1))
    for j in reversed(range(choi.k)):
        prod = np.kron(prod, step_marginal(choi, j))
    return float(np.linalg.norm(choi.matrix - prod))


def multitime_probability(
    choi: ProcessChoi,
    instruments: Sequence[KrausSet],
    rho0: np.ndarray | None = None,
    *,
    return_raw: bool = False,
):
    """``tr[Upsilon A^T]`` for a preparation and one CP map per step.

    Args:
        choi: k-step Choi state.
        instruments: k outcomes; entry j acts at the end of step j. The last
            one is the final intervention, whose effect closes the sequence.
        rho0: state fed into the first step (default: excited level).
        return_raw: also return the unclamped value.

    Raises:
        OrderingError: number of outcomes differs from the number of steps,
            or the Choi state uses another leg ordering.
        DimensionError: an operator is not 2x2.
    """
    if choi.ordering != ORDERING:
        raise OrderingError(f"unsupported ordering {choi.ordering!r}")
    if len(instruments) != choi.k:
        raise OrderingError(f"{choi.k}-step Choi state needs {choi.k} outcomes, got {len(instruments)}")
    rho0 = projector(EXCITED) if rho0 is None else np.asarray(rho0, dtype=complex)
    if rho0.shape != (2, 2):
        raise DimensionError(f"initial state must be 2x2, got {rho0.shape}")
    k = choi.k
    # chronological legs: in_0, (out_0, in_1), ..., (out_{k-2}, in_{k-1}), out_{k-1}
    w = rho0.T
    for ks in instruments[:-1]:
        w = np.kron(w, ks.choi().T)
    w = np.kron(w, instruments[-1].effect())
    w = w.reshape((2,) * (4 * k))
    order = [ax for j in reversed(range(k)) for ax in (2 * j, 2 * j + 1)]
    w = w.transpose(order + [2 * k + ax for ax in order]).reshape(4**k, 4**k)
    raw = float(np.real(np.trace(choi.matrix @ w)))
    if raw < -1e-9 or raw > 1 + 1e-9:
        log.debug("multitime probability %.3e outside [0, 1] before clamping", raw)
    p = min(1.0, max(0.0, raw))
    return (p, raw) if return_raw else p


def _final_weight(state: timebin.TimeBinState, kraus: KrausSet) -> float:
    """Weight of the last outcome, from its effect on the unnormalized qubit state."""
    rho = np.einsum("rid,rjd->ij", state.amps, state.amps.conj())
    return float(np.real(np.trace(kraus.effect() @ rho)))


def _check_schedule_times(times: Sequence[float]):
    if any(b < a for a, b in zip([0.0] + list(times), times)):
        raise DomainError("schedule times must be non-decreasing and >= 0")


def simulate_intervention_sequence(
    params: ModelParams,
    ff: FormFactor,
    schedule: Sequence[tuple[float, KrausSet]],
    dt: float,
    e_max: int = 2,
    *,
    initial=EXCITED,
    ground_phase: bool = True,
    config: timebin.SimConfig | None = None,
) -> float:
    """Probability of an outcome sequence by direct simulation.

    Starting from ``initial`` (qubit level or 2-vector) and the vacuum, evolve
    to each scheduled absolute time and apply the outcome there. Returns the
    final branch weight.
    """
    if not schedule:
        return 1.0
    times = [float(t) for t, _ in schedule]
    table = sequence_probabilities(
        params, ff, times, [{"": ks} for _, ks in schedule], dt, e_max,
        initial=initial, ground_phase=ground_phase, config=config,
    )
    return table[("",) * len(schedule)]


def sequence_probabilities(
    params: ModelParams,
    ff: FormFactor,
    times: Sequence[float],
    outcomes: Sequence[dict[str, KrausSet]],
    dt: float,
    e_max: int = 2,
    *,
    initial=EXCITED,
    ground_phase: bool = True,
    config: timebin.SimConfig | None = None,
) -> dict[tuple[str, ...], float]:
    """Direct-simulation probabilities for every combination of outcomes.

    ``outcomes[j]`` maps names to the outcomes allowed at absolute time
    ``times[j]``. Branches share their common history, so the cost grows
    with the number of prefixes rather than the number of sequences.
    """
    times = [float(t) for t in times]
    if len(outcomes) != len(times):
        raise OrderingError("need one outcome table per intervention time")
    if not times:
        return {(): 1.0}
    _check_schedule_times(times)
    if config is None:
        config = timebin.build_sim(params, ff, dt, e_max, times[-1])
    table: dict[tuple[str, ...], float] = {}

    def walk(state, j, prefix, weight, prev):
        state = timebin.evolve_time(state, times[j] - prev)
        if ground_phase:
            state = timebin.apply_qubit_unitary(state, _ground_phase(params, times[j] - prev))
        for name, kraus in outcomes[j].items():
            if j == len(times) - 1:
                table[prefix + (name,)] = weight * _final_weight(state, kraus)
            else:
                nxt, _ = timebin.apply_intervention(state, kraus)
                walk(nxt, j + 1, prefix + (name,), weight, times[j])

    walk(timebin.initial_state(config, initial), 0, (), 1.0, 0.0)
    return table


def reduced_channel(params: ModelParams, ff: FormFactor, t: float) -> KrausSet:
    """Exact reduced qubit map after time ``t`` from vacuum (lab phases).

    ``|1,vac>`` is stationary and ``|0,vac>`` evolves to ``a(t)|0,vac>`` plus a
    one-photon state of norm ``||xi_t||^2``, which gives the Kraus pair
    ``diag(a, 1)`` and ``||xi_t|| |1><0|``.
    """
    a = complex(amplitude(params, ff, t))
    k1 = np.zeros((2, 2), dtype=complex)
    k1[GROUND, EXCITED] = math.sqrt(max(photon_wavefunction(params, ff, t).norm2(), 0.0))
    return KrausSet((np.diag([a, 1.0]), k1), f"reduced(t={t})")


def superoperator(kraus: KrausSet) -> np.ndarray:
    """Row-major vectorized superoperator ``sum_i K_i (x) conj(K_i)``."""
    return sum(np.kron(k, k.conj()) for k in kraus.ops)


def choi_apply(choi: ProcessChoi, rho: np.ndarray) -> np.ndarray:
    """Channel action ``tr_S[Upsilon (rho^T (x) 1)] = sum_ab rho_ab E(|a><b|)``."""
    if choi.k != 1:
        raise DimensionError("choi_apply needs a one-step Choi state")
    rho = np.asarray(rho, dtype=complex)
    ups = choi.matrix.reshape(2, 2, 2, 2)  # (S, S', S, S')
    return np.einsum("aibj,ab->ij", ups, rho)
