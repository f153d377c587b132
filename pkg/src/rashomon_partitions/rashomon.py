"""Top-level enumeration of the Rashomon partition set."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .bounds import ProfileFit, ProfileObjective
from .crossprofile import CrossProfilePooler, PartialResultError
from .hasse import FeatureSpace, Partition, PartitionMatrix, Profile, sigma_labels
from .loss import (TOL, Dataset, EmptyPoolError, LossConfig, LossEvaluator, OutcomeModel, Penalty,
                   fit_linear_cells, max_pools, rashomon_threshold)
from .search import search_profile

PieceId = tuple[int, int]


def select_feasible_combinations(sorted_lists: Sequence[Sequence[float]], theta: float) -> list[tuple[int, ...]]:
    """Index tuples, one index per list, whose values sum to at most ``theta``.

    Each list must be sorted ascending. The first list is scanned in order and
    the scan stops as soon as the remaining budget cannot cover the smallest
    values of the other lists.
    """
    n = len(sorted_lists)
    if n == 0 or any(len(k) == 0 for k in sorted_lists):
        return []
    first = sorted_lists[0]
    feasible = [i for i, v in enumerate(first) if v <= theta]
    if n == 1:
        return [(i,) for i in feasible]
    rest_min = sum(k[0] for k in sorted_lists[1:])
    out = []
    for i in feasible:
        budget = theta - first[i]
        if budget < rest_min:
            break
        for tail in select_feasible_combinations(sorted_lists[1:], budget):
            out.append((i,) + tail)
    return out


@dataclass(frozen=True, eq=False)
class RPSEntry:
    """One member of a Rashomon set.

    Attributes
    ----------
    sigmas : tuple of PartitionMatrix
        One matrix per profile of the set, in the set's profile order.
    merges : tuple of tuple of (int, int)
        Cross-profile pools as groups of ``(profile position, pool position)``
        pieces; pieces not listed form pools on their own.
    partition : Partition
        The materialized global partition.
    pool_values : tuple
        Per pool of ``partition``: the pool mean (constant model) or the
        coefficient tuple ``(intercept, slopes...)`` (linear model); ``None``
        for a pool without observations.
    """

    sigmas: tuple[PartitionMatrix, ...]
    merges: tuple[tuple[PieceId, ...], ...]
    partition: Partition
    loss: float
    q: float
    pool_values: tuple
    weight: float = float("nan")

    @property
    def n_pools(self) -> int:
        return len(self.partition)

    def sort_key(self):
        return (self.q, tuple(s.rows for s in self.sigmas), self.merges)

    def with_weight(self, w: float) -> "RPSEntry":
        return RPSEntry(self.sigmas, self.merges, self.partition, self.loss, self.q, self.pool_values, w)


@dataclass(eq=False)
class RashomonSet:
    """The enumerated Rashomon partition set with self-normalized weights.

    Entries are sorted by ascending ``Q`` with a canonical tiebreak; entry
    weights are ``exp(-Q)`` normalized over the set.
    """

    space: FeatureSpace
    profiles: tuple[Profile, ...]
    entries: list[RPSEntry]
    q0: float
    epsilon: float
    theta: float
    lam: float
    outcome_model: OutcomeModel = OutcomeModel.CONSTANT
    partial: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.entries = sorted(self.entries, key=RPSEntry.sort_key)
        if self.entries:
            qmin = self.entries[0].q
            raw = [math.exp(-(e.q - qmin)) for e in self.entries]
            total = math.fsum(raw)
            self.entries = [e.with_weight(r / total) for e, r in zip(self.entries, raw)]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[RPSEntry]:
        return iter(self.entries)

    def __getitem__(self, i) -> RPSEntry:
        return self.entries[i]

    @property
    def q_values(self) -> np.ndarray:
        return np.array([e.q for e in self.entries])

    @property
    def weights(self) -> np.ndarray:
        return np.array([e.weight for e in self.entries])

    @property
    def q_min(self) -> float:
        if not self.entries:
            raise ValueError("the Rashomon set is empty")
        return self.entries[0].q

    def partitions(self) -> list[Partition]:
        return [e.partition for e in self.entries]

    def universe(self) -> list:
        out = []
        for rho in self.profiles:
            out.extend(self.space.profile_combinations(rho))
        return sorted(out)

    def cell_effects(self) -> np.ndarray:
        """``(n_entries, K)`` matrix of per-combination expected outcomes.

        Combinations outside the set's profiles, and pools without
        observations, are ``nan``.
        """
        K = self.space.size
        out = np.full((len(self.entries), K), np.nan)
        levels = self.space.level_matrix().astype(float)
        for row, e in enumerate(self.entries):
            for pool, value in zip(e.partition.pools, e.pool_values):
                if value is None:
                    continue
                idx = np.array([self.space.index(k) for k in pool])
                if self.outcome_model is OutcomeModel.LINEAR:
                    coef = np.asarray(value)
                    out[row, idx] = coef[0] + levels[idx] @ coef[1:]
                else:
                    out[row, idx] = value
        return out

    def filter(self, epsilon: float) -> "RashomonSet":
        """The nested set for a smaller ``epsilon`` (same reference)."""
        if epsilon > self.epsilon:
            raise ValueError("can only shrink the threshold of an enumerated set")
        theta = rashomon_threshold(self.q0, epsilon)
        kept = [e for e in self.entries if e.q <= theta + TOL]
        return RashomonSet(self.space, self.profiles, kept, self.q0, epsilon, theta, self.lam,
                           self.outcome_model, self.partial, dict(self.meta))


def _pieces(objective: ProfileObjective, sigma: PartitionMatrix) -> list[np.ndarray]:
    labels = sigma_labels(sigma)
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(sigma.n_pools() + 1))
    return [objective.cells[order[bounds[g]:bounds[g + 1]]] for g in range(sigma.n_pools())]


def _pool_values(cells_per_pool: Sequence[np.ndarray], evaluator: LossEvaluator) -> tuple:
    d = evaluator.data
    out = []
    for cells in cells_per_pool:
        nw = evaluator._nw[cells]
        if d.counts[cells].sum() == 0 or nw.sum() == 0:
            out.append(None)
        elif evaluator.cfg.outcome_model is OutcomeModel.LINEAR:
            fit = fit_linear_cells(cells, d, evaluator._w, evaluator._levels)
            out.append(tuple(float(c) for c in fit.coef))
        else:
            out.append(float(np.sum(nw * d.means[cells]) / np.sum(nw)))
    return tuple(out)


class _Assembler:
    """Builds entries from per-profile fits and merge states."""

    def __init__(self, space, objectives, evaluator):
        self.space = space
        self.objectives = objectives
        self.evaluator = evaluator
        self._piece_cache: dict = {}

    def pieces(self, r: int, sigma: PartitionMatrix) -> list[np.ndarray]:
        key = (r, sigma.rows)
        if key not in self._piece_cache:
            self._piece_cache[key] = _pieces(self.objectives[r], sigma)
        return self._piece_cache[key]

    def entry(self, fits: Sequence[ProfileFit], blocks, loss: float, q: float) -> RPSEntry:
        cells = {(r, g): c for r, f in enumerate(fits) for g, c in enumerate(self.pieces(r, f.sigma))}
        pools = []
        for block in blocks:
            idx = np.sort(np.concatenate([cells[p] for p in block]))
            pools.append(idx)
        pools.sort(key=lambda idx: idx[0])
        partition = Partition(tuple(tuple(self.space.combination(int(c)) for c in idx) for idx in pools))
        merges = tuple(sorted(tuple(sorted(b)) for b in blocks if len(b) > 1))
        values = _pool_values(pools, self.evaluator)
        return RPSEntry(tuple(f.sigma for f in fits), merges, partition, loss, q, values)


def _global_objective(fits: Sequence[ProfileFit], evaluator: LossEvaluator) -> tuple[float, float]:
    sse = np.concatenate([f.pool_sse for f in fits])
    loss = evaluator.loss_from_sse(sse)
    cfg = evaluator.cfg
    if cfg.penalty is Penalty.POOL_COUNT:
        pen = float(sum(f.n_pools for f in fits))
    else:
        pen = fits[0].penalty
    return loss, loss + cfg.lam * pen


def _prepare(space: FeatureSpace, d: Dataset, cfg: LossConfig, profiles=None):
    if d.space != space:
        raise ValueError("dataset belongs to a different feature space")
    profiles = tuple(d.realized_profiles() if profiles is None else (tuple(p) for p in profiles))
    if not profiles:
        raise ValueError("no profiles to enumerate")
    if cfg.penalty is Penalty.COVARIANCE_ZEROS and len(profiles) > 1:
        raise ValueError("the covariance-zeros penalty is only supported with a single profile")
    evaluator = LossEvaluator(d, cfg)
    objectives = [ProfileObjective(rho, evaluator) for rho in profiles]
    if cfg.strict:
        for obj in objectives:
            empty = obj.cells[d.counts[obj.cells] == 0]
            if empty.size:
                k = space.combination(int(empty[0]))
                raise EmptyPoolError(f"combination {k} has no observations; use the lenient empty-pool policy")
    return profiles, evaluator, objectives


def reference_objective(space: FeatureSpace, d: Dataset, cfg: LossConfig, mode: str = "fullsplit",
                        sigmas: Mapping[Profile, PartitionMatrix] | None = None, profiles=None) -> tuple[float, list[PartitionMatrix]]:
    """Objective ``q0`` of a reference partition and its matrices.

    ``mode`` is ``"fullsplit"`` (every combination its own pool), ``"greedy"``
    (from the full split, repeatedly pool the adjacent level pair that lowers
    ``Q`` the most, per profile) or ``"explicit"`` (``sigmas`` given).
    """
    profiles, evaluator, objectives = _prepare(space, d, cfg, profiles)
    fits = []
    for rho, obj in zip(profiles, objectives):
        zeros = PartitionMatrix.zeros(rho, obj.shape)
        if mode == "fullsplit":
            fits.append(obj.evaluate(zeros))
        elif mode == "greedy":
            fits.append(_greedy(obj, zeros))
        elif mode == "explicit":
            if sigmas is None or rho not in sigmas:
                raise ValueError(f"no reference matrix given for profile {rho}")
            sigma = sigmas[rho]
            sigma.check_shape(space)
            fits.append(obj.evaluate(sigma))
        else:
            raise ValueError(f"unknown reference mode {mode!r}")
    _, q0 = _global_objective(fits, evaluator)
    return q0, [f.sigma for f in fits]


def _greedy(obj: ProfileObjective, start: PartitionMatrix) -> ProfileFit:
    best = obj.evaluate(start)
    while True:
        step = None
        for r, row in enumerate(best.sigma.rows):
            for c, v in enumerate(row):
                if v:
                    continue
                rows = [list(x) for x in best.sigma.rows]
                rows[r][c] = 1
                fit = obj.evaluate(PartitionMatrix(best.sigma.profile, tuple(tuple(x) for x in rows)))
                if fit.q < best.q and (step is None or fit.q < step.q):
                    step = fit
        if step is None:
            return best
        best = step


def enumerate_rps(space: FeatureSpace, d: Dataset, cfg: LossConfig, q0: float, epsilon: float, *,
                  cross_profile: bool = True, h_max: int | None = None, max_rps: int | None = None,
                  n_jobs: int = 1, profiles: Sequence[Profile] | None = None,
                  origin: tuple[int, int] = (0, 0)) -> RashomonSet:
    """Enumerate every permissible partition with ``Q <= q0 * (1 + epsilon)``.

    Parameters
    ----------
    space : FeatureSpace
    d : Dataset
    cfg : LossConfig
    q0 : float
        Objective of the reference partition.
    epsilon : float
        Relative tolerance above ``q0``.
    cross_profile : bool
        Allow pools spanning adjacent profiles.
    h_max : int, optional
        Explicit pool cap; combined with the cap implied by ``lam``.
    max_rps : int, optional
        Abort with :class:`PartialResultError` once the set grows past this size.
    n_jobs : int
        Worker threads for the per-profile searches. Output does not depend on it.
    profiles : sequence of profiles, optional
        Profiles to partition; defaults to those observed in ``d``.

    Returns
    -------
    RashomonSet
    """
    theta = rashomon_threshold(q0, epsilon)
    profiles, evaluator, objectives = _prepare(space, d, cfg, profiles)
    P = len(profiles)
    H = math.inf
    if cfg.penalty is Penalty.POOL_COUNT and cfg.lam > 0:
        H = max_pools(q0, epsilon, cfg.lam)
    if h_max is not None:
        if h_max < 1:
            raise ValueError("h_max must be at least 1")
        H = min(H, h_max)

    def result(entries, partial=False):
        meta = {"cross_profile": bool(cross_profile), "h_max": None if H == math.inf else int(H)}
        return RashomonSet(space, profiles, entries, q0, epsilon, theta, cfg.lam, cfg.outcome_model, partial, meta)

    if H < P and not cross_profile or H < 1:
        return result([])

    floors = [obj.floor() for obj in objectives]
    floor_total = math.fsum(floors)
    budgets = [theta - floor_total + f for f in floors]
    h_profile = H if cross_profile else H - (P - 1)

    def run(r):
        found, _ = search_profile(objectives[r], budgets[r], h_profile, origin if P == 1 else (0, 0))
        return found

    if n_jobs is None or n_jobs <= 1 or P == 1:
        per_profile = [run(r) for r in range(P)]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            per_profile = list(pool.map(run, range(P)))

    assembler = _Assembler(space, objectives, evaluator)
    slack = 1e-9 * max(1.0, abs(theta))
    entries: list[RPSEntry] = []

    def add(entry):
        entries.append(entry)
        if max_rps is not None and len(entries) > max_rps:
            raise PartialResultError(f"Rashomon set exceeds the cap of {max_rps} entries",
                                     partial=result(entries[:max_rps], partial=True))

    if not cross_profile or P == 1:
        combos = select_feasible_combinations([[f.q for f in fits] for fits in per_profile], theta + slack)
        for combo in combos:
            fits = [per_profile[r][i] for r, i in enumerate(combo)]
            loss, q = _global_objective(fits, evaluator)
            n_pools = sum(f.n_pools for f in fits)
            if q <= theta + TOL and n_pools <= H:
                blocks = [frozenset([(r, g)]) for r, f in enumerate(fits) for g in range(f.n_pools)]
                add(assembler.entry(fits, blocks, loss, q))
        return result(entries)

    by_loss = [sorted(fits, key=lambda f: (f.loss, f.sigma.rows)) for fits in per_profile]
    min_pen = cfg.lam if cfg.penalty is Penalty.POOL_COUNT else 0.0
    combos = select_feasible_combinations([[f.loss for f in fits] for fits in by_loss], theta - min_pen + slack)
    for combo in combos:
        fits = [by_loss[r][i] for r, i in enumerate(combo)]
        loss = evaluator.loss_from_sse(np.concatenate([f.pool_sse for f in fits]))
        biggest = max(f.n_pools for f in fits)
        if cfg.penalty is Penalty.POOL_COUNT and (loss + cfg.lam * biggest > theta + TOL or biggest > H):
            continue
        pieces = [assembler.pieces(r, f.sigma) for r, f in enumerate(fits)]
        pooler = CrossProfilePooler(space, profiles, pieces, evaluator, piece_sse=[f.pool_sse for f in fits])
        remaining = None if max_rps is None else max_rps - len(entries)
        try:
            states = pooler.enumerate(theta, H, remaining)
        except PartialResultError as err:
            for state, sloss, sq in err.partial:
                entries.append(assembler.entry(fits, state, sloss, sq))
            raise PartialResultError(str(err), partial=result(entries[:max_rps], partial=True)) from None
        for state, sloss, sq in states:
            add(assembler.entry(fits, state, sloss, sq))
    return result(entries)


def rps_keys(rps: RashomonSet) -> set:
    """Hashable identity of each entry's global partition."""
    return {e.partition for e in rps.entries}

