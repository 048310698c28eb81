"""Exact single-excitation dynamics for delta-comb form factors.

The emitter amplitude obeys the delay differential equation

    a'(t) = r a(t) - gamma * sum_{m<n} conj(c_n) c_m a(t - (x_n - x_m)) H(t - (x_n - x_m)),

with ``r = -(i eps0 + gamma/2)``, ``a(0) = 1`` and ``H`` the step function.
Writing ``a(t) = exp(r t) q(t)`` turns it into a pure delay equation for
``q`` whose solution is a polynomial between consecutive breakpoints (sums of
delays), so the method of steps can be carried out exactly on polynomial
coefficients. The photon wavefunction follows from the formal solution of the
field equation and its norm is integrated in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from hnm.errors import DomainError
from hnm.model import FormFactor, ModelParams, validate_form_factor

_BP_TOL = 1e-12


@dataclass(frozen=True)
class Segment:
    """``a(t) = exp(rate (t - start)) * poly(t - start)`` on ``[start, stop]``."""

    start: float
    stop: float
    rate: complex
    poly: Polynomial

    @property
    def degree(self) -> int:
        return len(np.trim_zeros(self.poly.coef, "b")) - 1 if np.any(self.poly.coef) else 0

    def __call__(self, t):
        u = np.asarray(t, dtype=float) - self.start
        return np.exp(self.rate * u) * self.poly(u)


@dataclass(frozen=True)
class PiecewiseAmplitude:
    """Exact emitter amplitude as exponential-times-polynomial segments."""

    segments: tuple[Segment, ...]

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([s.start for s in self.segments] + [self.segments[-1].stop])

    @property
    def t_max(self) -> float:
        return self.segments[-1].stop

    def segment_index(self, t) -> np.ndarray:
        """Index of the segment used at ``t``; breakpoints belong to the left segment."""
        starts = np.array([s.start for s in self.segments])
        idx = np.searchsorted(starts, np.asarray(t, dtype=float), side="left") - 1
        return np.clip(idx, 0, len(self.segments) - 1)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise DomainError("amplitude is defined for t >= 0 only")
        if np.any(t > self.t_max * (1 + 1e-12) + 1e-15):
            raise DomainError(f"t exceeds the computed range [0, {self.t_max}]")
        idx = self.segment_index(t)
        out = np.empty(t.shape, dtype=complex)
        for j in np.unique(idx):
            mask = idx == j
            out[mask] = self.segments[j](t[mask])
        return out if out.ndim else complex(out)


def _breakpoints(delays: list[float], t_max: float) -> np.ndarray:
    """All non-negative integer combinations of ``delays`` up to ``t_max``."""
    points = {0.0}
    frontier = [0.0]
    while frontier:
        nxt = []
        for b in frontier:
            for d in delays:
                c = b + d
                if c <= t_max + _BP_TOL and not any(abs(c - p) <= _BP_TOL * max(1.0, c) for p in points):
                    points.add(c)
                    nxt.append(c)
        frontier = nxt
    pts = sorted(p for p in points if 0 < p < t_max - _BP_TOL)
    return np.array([0.0] + pts + [t_max])


def amplitude_segments(params: ModelParams, ff: FormFactor, t_max: float) -> PiecewiseAmplitude:
    """Solve for ``a(t)`` on ``[0, t_max]`` by the method of steps.

    Breakpoints sit at integer combinations of the pairwise point gaps; the
    polynomial degree grows by one each time a delay interval is crossed.
    """
    if not t_max >= 0:
        raise DomainError(f"t_max must be >= 0, got {t_max}")
    ff = validate_form_factor(ff, params)
    r = params.rate
    c = ff.weights
    # (delay, coefficient of q(t - delay) in q')
    terms = [
        (d, -params.gamma * np.conj(c[n]) * c[m] * np.exp(-r * d))
        for m, n, d in ff.delays()
    ]
    terms = [(d, k) for d, k in terms if k != 0]
    bps = _breakpoints(sorted({d for d, _ in terms}), t_max)

    qs: list[Polynomial] = []  # q on piece j as a polynomial in (t - bps[j])
    for j in range(len(bps) - 1):
        left = bps[j]
        q_left = qs[-1](bps[j] - bps[j - 1]) if j else 1.0 + 0j
        rhs = Polynomial([0j])
        for d, k in terms:
            if left < d - _BP_TOL:
                continue
            src = left - d
            i = int(np.searchsorted(bps, src + _BP_TOL, side="right")) - 1
            i = min(i, j - 1) if j else 0
            shift = src - bps[i]
            rhs = rhs + k * qs[i](Polynomial([shift, 1.0]))
        q = rhs.integ(lbnd=0) + q_left
        qs.append(q)

    segs = tuple(
        Segment(float(bps[j]), float(bps[j + 1]), r, np.exp(r * bps[j]) * qs[j])
        for j in range(len(qs))
    )
    return PiecewiseAmplitude(segs)


def amplitude(params: ModelParams, ff: FormFactor, t):
    """Emitter amplitude ``a(t)`` of ``exp(-itH)|0, vac>``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError("amplitude is defined for t >= 0 only")
    return amplitude_segments(params, ff, float(np.max(t_arr, initial=0.0)))(t_arr)


def survival_probability(params: ModelParams, ff: FormFactor, t):
    """``|a(t)|^2``."""
    return np.abs(amplitude(params, ff, t)) ** 2


def _exp_poly_integral(beta: float, poly: Polynomial, length: float) -> float:
    """``int_0^length exp(beta y) poly(y) dy`` in closed form."""
    if length <= 0:
        return 0.0
    if beta == 0:
        anti = poly.integ()
        return float(np.real(anti(length) - anti(0.0)))
    total_l = 0.0
    total_0 = 0.0
    d = poly
    sign = 1.0
    for k in range(len(poly.coef)):
        total_l += sign * d(length) / beta ** (k + 1)
        total_0 += sign * d(0.0) / beta ** (k + 1)
        d = d.deriv()
        sign = -sign
    return float(np.real(math.exp(beta * length) * total_l - total_0))


@dataclass(frozen=True)
class PhotonWavefunction:
    """Analytic photon wavefunction: a superposition of translated arcs.

    Each coupling point ``x_n`` contributes
    ``-i sqrt(gamma) c_n a(t - (x - x_n))`` on ``[x_n, x_n + t]``.
    """

    params: ModelParams
    ff: FormFactor
    t: float
    amp: PiecewiseAmplitude

    @property
    def arcs(self) -> list[tuple[float, complex, tuple[float, float]]]:
        return [(x, c, (x, x + self.t)) for x, c in self.ff.points]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=complex)
        pref = -1j * math.sqrt(self.params.gamma)
        for xn, cn in self.ff.points:
            s = self.t - (x - xn)
            mask = (s >= 0) & (s <= self.t)
            if np.any(mask):
                out[mask] += pref * cn * np.atleast_1d(self.amp(s[mask]))
        return out if out.ndim else complex(out)

    def norm2(self) -> float:
        """Exact ``||xi_t||^2``, integrating each exponential arc in closed form."""
        t = self.t
        if t == 0:
            return 0.0
        r = self.amp.segments[0].rate
        beta = -2.0 * r.real
        cuts = set()
        for xn, _ in self.ff.points:
            cuts.update(xn + t - b for b in self.amp.breakpoints)
        cuts = np.array(sorted(cuts))
        keep = np.concatenate(([True], np.diff(cuts) > _BP_TOL * max(1.0, t)))
        cuts = cuts[keep]
        pref = math.sqrt(self.params.gamma)
        total = 0.0
        for xl, xr in zip(cuts[:-1], cuts[1:]):
            mid = 0.5 * (xl + xr)
            q = Polynomial([0j])
            for xn, cn in self.ff.points:
                s_mid = t - (mid - xn)
                if not 0 <= s_mid <= t:
                    continue
                seg = self.amp.segments[int(self.amp.segment_index(s_mid))]
                sigma = t + xn - xl - seg.start
                # term(y) = c_n exp(r (sigma - y)) poly(sigma - y), y = x - xl
                q = q + pref * cn * np.exp(r * sigma) * seg.poly(Polynomial([sigma, -1.0]))
            if not np.any(q.coef):
                continue
            dens = q * Polynomial(np.conj(q.coef))
            total += _exp_poly_integral(beta, Polynomial(dens.coef.real), xr - xl)
        return total


@dataclass(frozen=True)
class GridWavefunction:
    """Photon wavefunction sampled at bin centres ``x`` with spacing ``dx``."""

    x: np.ndarray
    values: np.ndarray
    dx: float

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.dx)


def photon_wavefunction(params: ModelParams, ff: FormFactor, t: float, x=None):
    """Photon wavefunction ``xi_t``.

    Returns the analytic :class:`PhotonWavefunction` when ``x`` is None, the
    complex value(s) at ``x`` otherwise.
    """
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    ff = validate_form_factor(ff, params)
    psi = PhotonWavefunction(params, ff, float(t), amplitude_segments(params, ff, float(t)))
    return psi if x is None else psi(x)
