"""Branch-and-bound enumeration of partition matrices within one profile."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass

import numpy as np

from .bounds import FixedIndexSet, ProfileFit, ProfileObjective
from .hasse import FeatureSpace, PartitionMatrix, Profile
from .loss import TOL, Dataset, LossConfig, LossEvaluator

_ABSENT = -1
BRUTE_FORCE_MAX_BITS = 24


class SearchCache:
    """Set of partition matrices with the tail of the scanned row masked out.

    ``insert(sigma, i, j)`` stores ``sigma`` with entries ``j, j+1, ...`` of
    row ``i`` replaced by an absent marker; ``seen`` performs the same masking
    before the lookup. ``stop`` limits the masked stretch to ``j..stop-1``.
    """

    def __init__(self):
        self._keys: set = set()

    @staticmethod
    def _key(rows, i, j, stop=None):
        if i is None:
            return tuple(tuple(r) for r in rows)
        out = []
        for r, row in enumerate(rows):
            if r == i:
                end = len(row) if stop is None else stop
                row = tuple(_ABSENT if j <= c < end else v for c, v in enumerate(row))
            out.append(tuple(row))
        return tuple(out)

    def insert(self, sigma, i, j, stop=None) -> None:
        rows = sigma.rows if isinstance(sigma, PartitionMatrix) else sigma
        self._keys.add(self._key(rows, i, j, stop))

    def seen(self, sigma, i, j, stop=None) -> bool:
        rows = sigma.rows if isinstance(sigma, PartitionMatrix) else sigma
        return self._key(rows, i, j, stop) in self._keys

    def __len__(self) -> int:
        return len(self._keys)


@dataclass(frozen=True)
class SearchStats:
    visited: int
    pruned_bound: int
    pruned_pools: int


def _scan_order(widths, origin):
    positions = [(r, c) for r, w in enumerate(widths) for c in range(w)]
    if not positions:
        return positions
    if origin not in positions:
        raise ValueError(f"scan origin {origin} is not an entry of the partition matrix")
    k = positions.index(origin)
    return positions[k:] + positions[:k]


def _rows(bits: dict, widths) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(bits.get((r, c), 1) for c in range(w)) for r, w in enumerate(widths))


def search_profile(objective: ProfileObjective, theta: float, h_max: int,
                   origin: tuple[int, int] = (0, 0), visit=None) -> tuple[list[ProfileFit], SearchStats]:
    """Enumerate every matrix with ``Q <= theta`` and at most ``h_max`` pools.

    Entries are decided one at a time along a cyclic scan of the matrix that
    starts at ``origin``; undecided entries hold 1 (pooled). A node is dropped
    when its coarsest descendant already has more than ``h_max`` pools or when
    its lower bound exceeds ``theta``. Nodes are processed first-in first-out.

    ``visit``, when given, is called with ``(sigma, fixed, bound)`` for every
    node whose bound is computed.
    """
    widths = objective.widths
    order = _scan_order(widths, origin)
    total = len(order)
    r0, c0 = order[0] if order else (None, None)
    cache = SearchCache()
    queue = deque([({}, 0)])
    found: list[ProfileFit] = []
    visited = pruned_bound = pruned_pools = 0
    while queue:
        decided, t = queue.popleft()
        rows = _rows(decided, widths)
        if t < total:
            i, j = order[t]
            stop = c0 if (i == r0 and j < c0) else None
        else:
            i = j = stop = None
        if cache.seen(rows, i, j, stop):
            continue
        cache.insert(rows, i, j, stop)
        visited += 1
        sigma = PartitionMatrix(objective.profile, rows)
        if sigma.n_pools() > h_max:
            pruned_pools += 1
            continue
        if t == total:
            fit = objective.evaluate(sigma)
            if visit is not None:
                visit(sigma, FixedIndexSet(order), fit.q)
            if fit.q <= theta + TOL:
                found.append(fit)
            continue
        fixed = FixedIndexSet(order[:t])
        bound = objective.node_bound(sigma, fixed)
        if visit is not None:
            visit(sigma, fixed, bound.total)
        if bound.total > theta + TOL:
            pruned_bound += 1
            continue
        pos = order[t]
        for v in (1, 0):
            child = dict(decided)
            child[pos] = v
            queue.append((child, t + 1))
    found.sort(key=lambda f: (f.q, f.sigma.rows))
    return found, SearchStats(visited, pruned_bound, pruned_pools)


def _check_h(h_max):
    if h_max is None:
        return np.inf
    if h_max < 1:
        raise ValueError("h_max must be at least 1")
    return h_max


def enumerate_profile(profile: Profile, space: FeatureSpace, h_max: int | None, d: Dataset,
                      theta: float, cfg: LossConfig, origin: tuple[int, int] = (0, 0)) -> set[PartitionMatrix]:
    """Partition matrices of ``profile`` with ``Q <= theta`` and at most ``h_max`` pools.

    Parameters
    ----------
    profile : tuple of {0, 1}
    space : FeatureSpace
        Must be the space of ``d``.
    h_max : int or None
        Pool cap; ``None`` means no cap.
    d : Dataset
    theta : float
        Objective threshold (closed).
    cfg : LossConfig
    origin : (row, gap)
        Entry where the scan starts. The result does not depend on it.
    """
    if d.space != space:
        raise ValueError("dataset belongs to a different feature space")
    if theta < 0:
        raise ValueError("theta must be non-negative")
    objective = ProfileObjective(profile, LossEvaluator(d, cfg))
    found, _ = search_profile(objective, theta, _check_h(h_max), origin)
    return {f.sigma for f in found}


def brute_force_profile(profile: Profile, space: FeatureSpace, h_max: int | None, d: Dataset,
                        theta: float, cfg: LossConfig) -> set[PartitionMatrix]:
    """Exhaustive reference for :func:`enumerate_profile`."""
    objective = ProfileObjective(profile, LossEvaluator(d, cfg))
    return {f.sigma for f in brute_force_fits(objective, theta, _check_h(h_max))}


def brute_force_fits(objective: ProfileObjective, theta: float, h_max) -> list[ProfileFit]:
    widths = objective.widths
    if sum(widths) > BRUTE_FORCE_MAX_BITS:
        raise ValueError(f"{sum(widths)} partition-matrix entries is too many for exhaustive search")
    out = []
    for bits in itertools.product((0, 1), repeat=sum(widths)):
        rows, pos = [], 0
        for w in widths:
            rows.append(bits[pos:pos + w])
            pos += w
        sigma = PartitionMatrix(objective.profile, tuple(rows))
        if sigma.n_pools() > h_max:
            continue
        fit = objective.evaluate(sigma)
        if fit.q <= theta + TOL:
            out.append(fit)
    out.sort(key=lambda f: (f.q, f.sigma.rows))
    return out
