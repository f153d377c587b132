"""Data containers, losses, the penalized objective and Rashomon thresholds.

All losses are computed from exact per-combination sufficient statistics
(count, mean and within-combination sum of squares). Pool sums are
accumulated in ascending combination order and the per-pool squared errors
are added with :func:`math.fsum`, so a partition's loss does not depend on how
its pools were produced.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .hasse import Combination, FeatureSpace, Partition, Pool, Profile

TOL = 1e-12


class EmptyPoolError(ValueError):
    """A pool contains no observations and the loss is in strict mode."""


class OutcomeModel(str, enum.Enum):
    CONSTANT = "constant"
    LINEAR = "linear"


class Penalty(str, enum.Enum):
    POOL_COUNT = "pool-count"
    COVARIANCE_ZEROS = "covariance-zeros"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Outcomes aggregated per feature combination.

    Use :meth:`from_observations` to build one from raw rows. ``counts``,
    ``means`` and ``m2`` are indexed by the dense combination index of
    ``space``; ``m2`` is the within-combination sum of squared deviations.
    """

    space: FeatureSpace
    counts: np.ndarray
    means: np.ndarray
    m2: np.ndarray

    def __post_init__(self):
        K = self.space.size
        counts = np.asarray(self.counts, dtype=np.int64)
        means = np.asarray(self.means, dtype=float)
        m2 = np.asarray(self.m2, dtype=float)
        if counts.shape != (K,) or means.shape != (K,) or m2.shape != (K,):
            raise ValueError(f"per-combination arrays must have shape ({K},)")
        if (counts < 0).any():
            raise ValueError("counts must be non-negative")
        if counts.sum() < 1:
            raise ValueError("a dataset needs at least one observation")
        if not (np.isfinite(means).all() and np.isfinite(m2).all()):
            raise ValueError("outcomes must be finite")
        means = np.where(counts > 0, means, 0.0)
        m2 = np.where(counts > 0, np.maximum(m2, 0.0), 0.0)
        for name, arr in (("counts", counts), ("means", means), ("m2", m2)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_observations(cls, space: FeatureSpace, X, y) -> "Dataset":
        """Aggregate raw observations.

        Parameters
        ----------
        space : FeatureSpace
        X : array-like of shape (n, M)
            Integer levels of each observation.
        y : array-like of shape (n,)
            Outcomes.
        """
        X = np.asarray(X)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or X.shape[1] != space.num_features:
            raise ValueError(f"X must have shape (n, {space.num_features})")
        if y.shape != (X.shape[0],):
            raise ValueError("X and y have inconsistent lengths")
        if X.shape[0] == 0:
            raise ValueError("a dataset needs at least one observation")
        cells = cell_indices(space, X)
        return cls.from_cells(space, cells, y)

    @classmethod
    def from_cells(cls, space: FeatureSpace, cells, y) -> "Dataset":
        cells = np.asarray(cells, dtype=np.int64)
        y = np.asarray(y, dtype=float)
        K = space.size
        counts = np.bincount(cells, minlength=K)
        sums = np.bincount(cells, weights=y, minlength=K)
        means = np.divide(sums, counts, out=np.zeros(K), where=counts > 0)
        m2 = np.bincount(cells, weights=(y - means[cells]) ** 2, minlength=K)
        return cls(space, counts, means, m2)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def observed(self) -> np.ndarray:
        return np.flatnonzero(self.counts > 0)

    def realized_profiles(self) -> list[Profile]:
        """Profiles with at least one observation, in canonical profile order."""
        space = self.space
        if space.single_profile:
            return space.profiles()
        seen = set()
        for idx in self.observed():
            seen.add(tuple(1 if v > 0 else 0 for v in space.combination(int(idx))))
        return [rho for rho in space.profiles() if rho in seen]

    def merge(self, other: "Dataset") -> "Dataset":
        """Combine two datasets over the same space (parallel-variance update)."""
        if other.space != self.space:
            raise ValueError("datasets are over different feature spaces")
        n1, n2 = self.counts.astype(float), other.counts.astype(float)
        n = n1 + n2
        delta = other.means - self.means
        means = np.divide(n1 * self.means + n2 * other.means, n, out=np.zeros_like(n), where=n > 0)
        extra = np.divide(n1 * n2 * delta**2, n, out=np.zeros_like(n), where=n > 0)
        return Dataset(self.space, self.counts + other.counts, means, self.m2 + other.m2 + extra)


def cell_indices(space: FeatureSpace, X) -> np.ndarray:
    """Dense indices of the rows of an integer level matrix."""
    X = np.asarray(X)
    lo = 1 if space.single_profile else 0
    if not np.issubdtype(X.dtype, np.integer):
        if not np.all(np.mod(X, 1) == 0):
            raise ValueError("levels must be integers")
        X = X.astype(np.int64)
    shifted = X - lo
    for m, r in enumerate(space.levels):
        bad = (shifted[:, m] < 0) | (shifted[:, m] >= r)
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise ValueError(f"row {row}: level {X[row, m]} of feature {m} is outside the space")
    return np.ravel_multi_index(tuple(shifted.T), space.levels).astype(np.int64)


@dataclass(frozen=True, eq=False)
class LossConfig:
    """Penalized loss settings.

    Parameters
    ----------
    lam : float
        Weight of the penalty term.
    outcome_model : {"constant", "linear"}
        Constant mean per pool, or a least-squares line in the levels per pool.
    weights : array-like of shape (K,), optional
        Non-negative per-combination weights for the weighted squared error.
    penalty : {"pool-count", "covariance-zeros"}
        ``|Pi|`` or ``K**2 - sum(h**2)`` over pool sizes ``h``.
    strict : bool
        If true, a pool without observations raises :class:`EmptyPoolError`;
        otherwise it contributes zero loss and still counts in the penalty.
    """

    lam: float = 0.0
    outcome_model: OutcomeModel = OutcomeModel.CONSTANT
    weights: np.ndarray | None = None
    penalty: Penalty = Penalty.POOL_COUNT
    strict: bool = True

    def __post_init__(self):
        lam = float(self.lam)
        if not lam >= 0 or not math.isfinite(lam):
            raise ValueError(f"lambda must be a finite non-negative number, got {self.lam}")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "outcome_model", OutcomeModel(self.outcome_model))
        object.__setattr__(self, "penalty", Penalty(self.penalty))
        if self.weights is not None:
            w = np.array(self.weights, dtype=float)
            if w.ndim != 1 or (w < 0).any() or not np.isfinite(w).all():
                raise ValueError("weights must be a finite non-negative vector")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)

    def penalty_value(self, sizes: Sequence[int], universe_size: int | None = None) -> float:
        if self.penalty is Penalty.POOL_COUNT:
            return float(len(sizes))
        K = sum(sizes) if universe_size is None else universe_size
        return float(K * K - sum(h * h for h in sizes))


class LossEvaluator:
    """Computes per-pool squared errors for a dataset under a loss config.

    Pools are given as label arrays over ascending combination indices; the
    same pool always yields bit-identical sums.
    """

    def __init__(self, data: Dataset, cfg: LossConfig):
        self.data = data
        self.cfg = cfg
        space = data.space
        if cfg.weights is not None:
            w = cfg.weights
            if w.shape != (space.size,):
                if w.shape == (data.n,):
                    raise ValueError("weights are per combination, not per observation")
                raise ValueError(f"weights must have one entry per combination ({space.size})")
            if np.isnan(w[data.observed()]).any():
                raise ValueError("weights are missing for observed combinations")
            self._w = w
        else:
            self._w = np.ones(space.size)
        self._nw = data.counts * self._w
        self._wm2 = self._w * data.m2
        self._levels = space.level_matrix().astype(float) if cfg.outcome_model is OutcomeModel.LINEAR else None

    @property
    def n(self) -> int:
        return self.data.n

    def cell_floor(self, cells: np.ndarray) -> float:
        """Sum of within-combination squared errors over ``cells``."""
        return math.fsum(self._wm2[cells])

    def pool_sse(self, cells: np.ndarray, labels: np.ndarray, n_labels: int | None = None) -> np.ndarray:
        """Squared error of each pool.

        Parameters
        ----------
        cells : ndarray of int, ascending
            Combination indices.
        labels : ndarray of int
            Pool label of each cell, in ``0..n_labels-1``.
        """
        if n_labels is None:
            n_labels = int(labels.max()) + 1 if len(labels) else 0
        nw = self._nw[cells]
        size = np.bincount(labels, weights=nw, minlength=n_labels)
        if self.cfg.strict:
            nobs = np.bincount(labels, weights=self.data.counts[cells], minlength=n_labels)
            if (nobs == 0).any():
                raise EmptyPoolError(f"{int((nobs == 0).sum())} pool(s) have no observations")
        if self.cfg.outcome_model is OutcomeModel.LINEAR:
            return self._linear_sse(cells, labels, n_labels)
        means = self.data.means[cells]
        total = np.bincount(labels, weights=nw * means, minlength=n_labels)
        mu = np.divide(total, size, out=np.zeros(n_labels), where=size > 0)
        resid = self._wm2[cells] + nw * (means - mu[labels]) ** 2
        return np.bincount(labels, weights=resid, minlength=n_labels)

    def _linear_sse(self, cells, labels, n_labels) -> np.ndarray:
        out = np.zeros(n_labels)
        order = np.argsort(labels, kind="stable")
        bounds = np.searchsorted(labels[order], np.arange(n_labels + 1))
        for lab in range(n_labels):
            sub = cells[order[bounds[lab]:bounds[lab + 1]]]
            fit = fit_linear_cells(sub, self.data, self._w, self._levels)
            out[lab] = math.fsum(self._wm2[sub]) + fit.sse
        return out

    def loss_from_sse(self, sse: Sequence[float]) -> float:
        return math.fsum(sse) / self.n

    def loss(self, cells: np.ndarray, labels: np.ndarray, n_labels: int | None = None) -> float:
        return self.loss_from_sse(self.pool_sse(cells, labels, n_labels))

    def q(self, loss: float, sizes: Sequence[int], universe_size: int | None = None) -> float:
        return loss + self.cfg.lam * self.cfg.penalty_value(sizes, universe_size)


@dataclass(frozen=True)
class LinearFit:
    """Least-squares line fitted to one pool.

    ``coef`` is ``(intercept, slope_1, ..., slope_M)`` in raw level units.
    """

    coef: np.ndarray
    sse: float
    rank_deficient: bool


def fit_linear_cells(cells: np.ndarray, data: Dataset, weights: np.ndarray | None = None,
                     levels: np.ndarray | None = None) -> LinearFit:
    """Weighted least squares of cell means on centered levels.

    Fitting cell means with weights ``n_k * w_k`` gives the same coefficients
    as fitting the raw observations; the within-cell error is added separately
    by the caller. Rank-deficient designs use the minimum-norm solution.
    """
    space = data.space
    if levels is None:
        levels = space.level_matrix().astype(float)
    w = np.ones(space.size) if weights is None else weights
    nw = data.counts[cells] * w[cells]
    K = levels[cells]
    M = K.shape[1]
    keep = nw > 0
    if not keep.any():
        return LinearFit(np.zeros(M + 1), 0.0, True)
    center = np.average(K[keep], axis=0, weights=nw[keep])
    design = np.column_stack([np.ones(len(cells)), K - center])
    sw = np.sqrt(nw)
    target = data.means[cells]
    sol, _, rank, _ = np.linalg.lstsq(design * sw[:, None], target * sw, rcond=None)
    fitted = design @ sol
    sse = math.fsum(nw * (target - fitted) ** 2)
    coef = sol.copy()
    coef[0] = sol[0] - float(sol[1:] @ center)
    return LinearFit(coef, sse, rank < M + 1)


def _partition_labels(p: Partition, space: FeatureSpace) -> tuple[np.ndarray, np.ndarray, int]:
    pairs = sorted((space.index(k), i) for i, pool in enumerate(p.pools) for k in pool)
    cells = np.fromiter((c for c, _ in pairs), dtype=np.int64, count=len(pairs))
    labels = np.fromiter((i for _, i in pairs), dtype=np.int64, count=len(pairs))
    if len(np.unique(cells)) != len(cells):
        raise ValueError("pools overlap")
    return cells, labels, len(p.pools)


def pool_means(p: Partition, d: Dataset, cfg: LossConfig | None = None) -> dict[Pool, float]:
    """Mean outcome of each pool (weighted when ``cfg`` carries weights).

    Pools without observations map to ``nan`` when ``cfg.strict`` is false.
    """
    cfg = cfg or LossConfig()
    ev = LossEvaluator(d, cfg)
    cells, labels, n_labels = _partition_labels(p, d.space)
    nw = ev._nw[cells]
    size = np.bincount(labels, weights=nw, minlength=n_labels)
    if cfg.strict and (np.bincount(labels, weights=d.counts[cells], minlength=n_labels) == 0).any():
        raise EmptyPoolError("a pool has no observations")
    total = np.bincount(labels, weights=nw * d.means[cells], minlength=n_labels)
    with np.errstate(invalid="ignore", divide="ignore"):
        mu = total / size
    return {pool: float(mu[i]) for i, pool in enumerate(p.pools)}


def mse_loss(p: Partition, d: Dataset, strict: bool = True) -> float:
    """Mean squared error of the pooled-mean model."""
    return loss_value(p, d, LossConfig(strict=strict))


def weighted_mse_loss(p: Partition, d: Dataset, weights, strict: bool = True) -> float:
    """Weighted mean squared error ``(1/n) sum_i w_k(i) (y_i - mu_pool)^2``.

    The pool centre is the weighted mean, which minimizes this loss.
    """
    if weights is None:
        raise ValueError("weights are required")
    if isinstance(weights, Mapping):
        w = np.full(d.space.size, np.nan)
        for k, v in weights.items():
            w[d.space.index(k)] = v
        weights = w
    return loss_value(p, d, LossConfig(weights=weights, strict=strict))


def loss_value(p: Partition, d: Dataset, cfg: LossConfig) -> float:
    cells, labels, n_labels = _partition_labels(p, d.space)
    return LossEvaluator(d, cfg).loss(cells, labels, n_labels)


def q_value(p: Partition, d: Dataset, cfg: LossConfig) -> float:
    """Penalized objective ``Q = loss + lam * penalty``."""
    loss = loss_value(p, d, cfg)
    sizes = [len(pool) for pool in p.pools]
    return loss + cfg.lam * cfg.penalty_value(sizes)


def linear_pool_fit(pool: Pool, d: Dataset, weights=None) -> LinearFit:
    """Least-squares fit of ``y`` on ``(1, k)`` within one pool."""
    cells = np.array(sorted(d.space.index(k) for k in pool), dtype=np.int64)
    fit = fit_linear_cells(cells, d, None if weights is None else np.asarray(weights, dtype=float))
    w = np.ones(d.space.size) if weights is None else np.asarray(weights, dtype=float)
    return LinearFit(fit.coef, math.fsum(w[cells] * d.m2[cells]) + fit.sse, fit.rank_deficient)


def rashomon_threshold(q0: float, epsilon: float) -> float:
    """``theta = q0 * (1 + epsilon)``; membership is ``Q <= theta``."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    if q0 < 0:
        raise ValueError("q0 must be non-negative")
    return q0 * (1.0 + epsilon)


def within_threshold(q: float, theta: float) -> bool:
    return q <= theta + TOL


def xi(p: Partition, q0: float, d: Dataset, cfg: LossConfig) -> float:
    """Relative objective gap ``(Q - q0) / q0``."""
    if q0 == 0:
        raise ValueError("relative gap is undefined for a zero reference objective")
    return (q_value(p, d, cfg) - q0) / q0


def max_pools(q0: float, epsilon: float, lam: float) -> int:
    """Largest pool count any member of the Rashomon set can have."""
    if lam <= 0:
        raise ValueError("the pool-count bound needs lambda > 0; pass an explicit cap instead")
    return int(math.floor(rashomon_threshold(q0, epsilon) / lam + TOL))
