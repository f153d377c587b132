"""Pooling per-profile partitions across hypercube-adjacent profiles.

A *piece* is one pool of one profile's partition. Pieces in adjacent
profiles may be merged into a single global pool when they contain a variant
pair. A global pool holds at most one piece per profile, and every pair of
adjacent profiles inside it must be linked by a variant pair; its profiles
are then connected on the hypercube automatically, because pools only grow
along such links.
"""

from __future__ import annotations

import math
from collections import deque
from typing import Sequence

import numpy as np

from .hasse import Combination, FeatureSpace, Partition, Profile, hypercube_adjacent, is_variant
from .loss import TOL, LossEvaluator, Penalty

POOLABLE = 0
POOLED = 1
FORBIDDEN = -1

PieceId = tuple[int, int]


class PartialResultError(RuntimeError):
    """Raised when the Rashomon set outgrows its configured cap."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


def _profile_of(k: Combination) -> Profile:
    return tuple(1 if v > 0 else 0 for v in k)


def intersection_matrix(p: Partition, rho_i: Profile, rho_j: Profile) -> np.ndarray:
    """Poolability of the pieces of ``p`` in two adjacent profiles.

    Rows are the pools of ``p`` meeting ``rho_i`` and columns those meeting
    ``rho_j``, both in canonical order. An entry is ``POOLED`` when one pool
    of ``p`` already covers both pieces, ``POOLABLE`` when the pieces contain a
    variant pair and neither is pooled across this edge yet, and
    ``FORBIDDEN`` otherwise.
    """
    rho_i, rho_j = tuple(rho_i), tuple(rho_j)
    if not hypercube_adjacent(rho_i, rho_j):
        raise ValueError(f"profiles {rho_i} and {rho_j} are not adjacent")
    rows = [(g, [k for k in pool if _profile_of(k) == rho_i]) for g, pool in enumerate(p.pools)]
    cols = [(g, [k for k in pool if _profile_of(k) == rho_j]) for g, pool in enumerate(p.pools)]
    rows = [(g, piece) for g, piece in rows if piece]
    cols = [(g, piece) for g, piece in cols if piece]
    inter = np.full((len(rows), len(cols)), FORBIDDEN, dtype=np.int8)
    for a, (ga, pa) in enumerate(rows):
        for b, (gb, pb) in enumerate(cols):
            if ga == gb:
                inter[a, b] = POOLED
            elif any(is_variant(x, y) for x in pa for y in pb):
                inter[a, b] = POOLABLE
    for a, b in zip(*np.nonzero(inter == POOLED)):
        mark_pooled(inter, a, b)
    return inter


def mark_pooled(inter: np.ndarray, a: int, b: int) -> np.ndarray:
    """Record that row ``a`` and column ``b`` are pooled; neither may pool elsewhere."""
    inter[a, :] = np.where(inter[a, :] == POOLABLE, FORBIDDEN, inter[a, :])
    inter[:, b] = np.where(inter[:, b] == POOLABLE, FORBIDDEN, inter[:, b])
    inter[a, b] = POOLED
    return inter


class CrossProfilePooler:
    """Enumerates every permissible way of merging pieces across profiles.

    Parameters
    ----------
    space : FeatureSpace
    profiles : list of profiles
        Profiles taking part, in canonical order.
    pieces : list of list of ndarray
        For each profile, the ascending cell indices of each of its pools.
    evaluator : LossEvaluator
    """

    def __init__(self, space: FeatureSpace, profiles: Sequence[Profile], pieces, evaluator: LossEvaluator,
                 piece_sse=None, control: Profile | None = None):
        self.space = space
        self.profiles = [tuple(r) for r in profiles]
        self.evaluator = evaluator
        self.ids: list[PieceId] = []
        self.cells: dict[PieceId, np.ndarray] = {}
        for r, pools in enumerate(pieces):
            for g, cells in enumerate(pools):
                pid = (r, g)
                self.ids.append(pid)
                self.cells[pid] = np.asarray(cells, dtype=np.int64)
        self._sse: dict[frozenset, float] = {}
        if piece_sse is not None:
            for r, values in enumerate(piece_sse):
                for g, v in enumerate(values):
                    self._sse[frozenset([(r, g)])] = float(v)
        self.link = self._links()
        if control is None:
            control = (0,) * space.num_features
        self.candidates = self._candidate_order(tuple(control))

    def _links(self) -> dict[tuple[PieceId, PieceId], bool]:
        strides = np.cumprod((1,) + tuple(reversed(self.space.levels)))[:-1][::-1]
        link = {}
        for r1, rho1 in enumerate(self.profiles):
            for r2, rho2 in enumerate(self.profiles):
                if r1 >= r2 or not hypercube_adjacent(rho1, rho2):
                    continue
                lo, hi = (r1, r2) if sum(rho1) < sum(rho2) else (r2, r1)
                m = next(i for i, (a, b) in enumerate(zip(rho1, rho2)) if a != b)
                # raising feature m from 0 to 1 moves the dense index by its stride
                step = int(strides[m])
                for pid_lo in (p for p in self.ids if p[0] == lo):
                    shifted = self.cells[pid_lo] + step
                    for pid_hi in (p for p in self.ids if p[0] == hi):
                        ok = bool(np.intersect1d(shifted, self.cells[pid_hi], assume_unique=True).size)
                        link[(pid_lo, pid_hi)] = ok
                        link[(pid_hi, pid_lo)] = ok
        return link

    def adjacent_profile_pairs(self, control: Profile | None = None) -> list[tuple[int, int]]:
        """Adjacent profile pairs in breadth-first order from ``control``."""
        n = len(self.profiles)
        if n == 0:
            return []
        start = 0
        if control is not None and tuple(control) in self.profiles:
            start = self.profiles.index(tuple(control))
        order, seen, queue = [], {start}, deque([start])
        while queue:
            u = queue.popleft()
            order.append(u)
            for v in range(n):
                if v not in seen and hypercube_adjacent(self.profiles[u], self.profiles[v]):
                    seen.add(v)
                    queue.append(v)
        order += [v for v in range(n) if v not in seen]
        rank = {v: i for i, v in enumerate(order)}
        pairs = []
        for u in order:
            for v in range(n):
                if rank[v] > rank[u] and hypercube_adjacent(self.profiles[u], self.profiles[v]):
                    pairs.append((u, v))
        return pairs

    def _candidate_order(self, control: Profile) -> list[tuple[PieceId, PieceId]]:
        out = []
        for u, v in self.adjacent_profile_pairs(control):
            for a in (p for p in self.ids if p[0] == u):
                for b in (p for p in self.ids if p[0] == v):
                    if self.link.get((a, b)):
                        out.append((a, b))
        return out

    def block_sse(self, block: frozenset) -> float:
        if block not in self._sse:
            cells = np.sort(np.concatenate([self.cells[p] for p in block]))
            labels = np.zeros(len(cells), dtype=np.int64)
            self._sse[block] = float(self.evaluator.pool_sse(cells, labels, 1)[0])
        return self._sse[block]

    def _compatible(self, A: frozenset, B: frozenset) -> bool:
        prof_a = {p[0] for p in A}
        if any(p[0] in prof_a for p in B):
            return False
        for a in A:
            for b in B:
                if hypercube_adjacent(self.profiles[a[0]], self.profiles[b[0]]) and not self.link[(a, b)]:
                    return False
        return True

    def _penalty(self, state: frozenset) -> float:
        cfg = self.evaluator.cfg
        if cfg.penalty is Penalty.POOL_COUNT:
            return float(len(state))
        sizes = [sum(len(self.cells[p]) for p in block) for block in state]
        return cfg.penalty_value(sizes)

    def objective(self, state: frozenset) -> tuple[float, float]:
        loss = self.evaluator.loss_from_sse([self.block_sse(b) for b in state])
        return loss, loss + self.evaluator.cfg.lam * self._penalty(state)

    def enumerate(self, theta: float, h_max=math.inf, max_results: int | None = None) -> list[tuple[frozenset, float, float]]:
        """All merge states with ``Q <= theta``, as ``(blocks, loss, Q)``."""
        lam = self.evaluator.cfg.lam
        cands = self.candidates
        floor_blocks = max((sum(1 for p in self.ids if p[0] == r) for r in range(len(self.profiles))), default=0)
        start = frozenset(frozenset([p]) for p in self.ids)
        results: dict[frozenset, tuple[float, float]] = {}
        memo: set = set()
        pool_count = self.evaluator.cfg.penalty is Penalty.POOL_COUNT

        def lower(state, loss, remaining):
            if not pool_count:
                return loss
            return loss + lam * max(floor_blocks, len(state) - remaining, 1)

        stack = [(0, start)]
        while stack:
            i, state = stack.pop()
            if (i, state) in memo:
                continue
            memo.add((i, state))
            loss, q = self.objective(state)
            if lower(state, loss, len(cands) - i) > theta + TOL:
                continue
            if i == len(cands):
                if q <= theta + TOL and len(state) <= h_max and state not in results:
                    results[state] = (loss, q)
                    if max_results is not None and len(results) > max_results:
                        raise PartialResultError("too many cross-profile poolings",
                                                 partial=self._finish(results))
                continue
            a, b = cands[i]
            A = next(blk for blk in state if a in blk)
            B = next(blk for blk in state if b in blk)
            # push skip last so it is explored first; order only affects speed
            if A != B and self._compatible(A, B):
                merged = (state - {A, B}) | {A | B}
                stack.append((i + 1, frozenset(merged)))
            stack.append((i + 1, state))
        return self._finish(results)

    @staticmethod
    def _finish(results):
        return [(state, loss, q) for state, (loss, q) in results.items()]


def pool_adjacent_profiles(p: Partition, space: FeatureSpace, evaluator: LossEvaluator, theta: float,
                           h_max=math.inf, control: Profile | None = None) -> list[Partition]:
    """Every permissible cross-profile pooling of ``p`` with ``Q <= theta``.

    ``p`` must not pool across profiles yet. Merges are explored jointly over
    all adjacent profile pairs, so chains through three or more profiles are
    covered.
    """
    by_profile: dict[Profile, list[np.ndarray]] = {}
    for pool in p.pools:
        rhos = {_profile_of(k) for k in pool}
        if len(rhos) != 1:
            raise ValueError("input partition already pools across profiles")
        cells = np.array(sorted(space.index(k) for k in pool), dtype=np.int64)
        by_profile.setdefault(rhos.pop(), []).append(cells)
    profiles = sorted(by_profile, key=lambda r: (sum(r), r))
    pooler = CrossProfilePooler(space, profiles, [by_profile[r] for r in profiles], evaluator, control=control)
    out = []
    for state, _, _ in pooler.enumerate(theta, h_max):
        pools = [tuple(space.combination(int(c)) for c in np.concatenate([pooler.cells[x] for x in blk]))
                 for blk in state]
        out.append(Partition(tuple(pools)))
    return sorted(set(out), key=lambda q: q.pools)


def pool_profiles(candidates: Sequence[Partition], control: Profile, space: FeatureSpace,
                  evaluator: LossEvaluator, theta: float, h_max=math.inf) -> set[Partition]:
    """Cross-profile poolings of every candidate assembly with ``Q <= theta``.

    Adjacent profile pairs are visited breadth-first from ``control``.
    """
    out: set[Partition] = set()
    for p in candidates:
        out.update(pool_adjacent_profiles(p, space, evaluator, theta, h_max, control))
    return out
