"""Truncated bosonic Fock basis over a row of time bins.

A basis state is the sorted list of occupied bin labels (a multiset, one entry
per photon). States are grouped by photon number; inside a group they are
ordered colexicographically, which gives a closed-form rank and therefore a
vectorized index map without hashing.
"""

from __future__ import annotations

from itertools import combinations_with_replacement
from math import comb

import numpy as np


class FockBasis:
    """All multisets of at most ``max_photons`` labels drawn from ``range(n_modes)``.

    Attributes:
        occ: ``(dim, max_photons)`` int array of sorted labels, padded with
            ``n_modes`` (the sentinel sorts after every real label).
        nphot: photon number of each state.
    """

    def __init__(self, n_modes: int, max_photons: int):
        if n_modes < 1 or max_photons < 0:
            raise ValueError("need n_modes >= 1 and max_photons >= 0")
        self.n_modes = n_modes
        self.max_photons = max_photons
        self.sentinel = n_modes
        width = max_photons + 1  # ranks are also defined one sector past the cutoff
        self._binom = np.array(
            [[comb(c, k) for k in range(width + 1)] for c in range(n_modes + width + 1)],
            dtype=np.int64,
        )
        sizes = [comb(n_modes + n - 1, n) for n in range(width + 1)]
        self.offsets = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
        self.dim = int(self.offsets[max_photons + 1])

        occ = np.full((self.dim, max(max_photons, 1)), self.sentinel, dtype=np.int64)
        for n in range(1, max_photons + 1):
            rows = np.array(list(combinations_with_replacement(range(n_modes), n)), dtype=np.int64)
            padded = np.full((len(rows), occ.shape[1]), self.sentinel, dtype=np.int64)
            padded[:, :n] = rows
            occ[self.index(padded)] = padded
        self.occ = occ[:, :max_photons] if max_photons else occ[:, :0]
        self.nphot = np.sum(self.occ < self.sentinel, axis=1)

    def index(self, rows: np.ndarray) -> np.ndarray:
        """Indices of label rows (any width, sentinel-padded, any order).

        Rows holding more than ``max_photons`` photons (up to one extra) map to
        indices ``>= dim``; these serve as unique keys for truncated states.
        """
        rows = np.sort(np.asarray(rows, dtype=np.int64), axis=1)
        n = np.sum(rows < self.sentinel, axis=1)
        if rows.shape[1] == 0:
            return np.zeros(len(rows), dtype=np.int64)
        if np.any(n > self.max_photons + 1):
            raise ValueError("row exceeds the cutoff by more than one photon")
        pos = np.arange(rows.shape[1])
        c = np.where(rows < self.sentinel, rows + pos, 0)
        k = np.where(rows < self.sentinel, pos + 1, 0)
        rank = self._binom[c, k].sum(axis=1) - np.sum(rows >= self.sentinel, axis=1)
        # a padded slot contributes binom(0, 0) = 1, removed above
        return self.offsets[n] + rank

    def vacuum_index(self) -> int:
        return 0

    def single(self, label: int) -> int:
        return int(self.offsets[1] + label)
