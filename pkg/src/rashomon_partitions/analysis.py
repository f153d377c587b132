"""Posterior summaries computed over a Rashomon set.

Posterior masses are handled in loss space: ``Pr(Pi | Z)`` is proportional to
``exp(-Q(Pi))`` and every ratio is formed as ``exp(-(Q - Q_min))`` so the
unknown normalizing constant cancels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .rashomon import RashomonSet

BINS = ("large-negative", "small-negative", "zero", "small-positive", "large-positive")


@dataclass(frozen=True)
class WeightedValues:
    """Scalar values paired with non-negative weights."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if v.shape != w.shape or v.ndim != 1:
            raise ValueError("values and weights must be 1-d arrays of equal length")
        if (w < 0).any():
            raise ValueError("weights must be non-negative")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.values)

    def mean(self) -> float:
        return math.fsum(self.values * self.weights) / math.fsum(self.weights)


def posterior_masses(q_values: Sequence[float]) -> np.ndarray:
    """Normalized masses proportional to ``exp(-Q)``."""
    q = np.asarray(q_values, dtype=float)
    if q.size == 0:
        raise ValueError("no models given")
    raw = np.exp(-(q - q.min()))
    return raw / math.fsum(raw)


def conditional_mean_effects(rps: RashomonSet) -> np.ndarray:
    """Weight-averaged per-combination effects over the set.

    Returns an array indexed by combination; combinations outside the set's
    profiles are ``nan``.
    """
    if len(rps) == 0:
        raise ValueError("the Rashomon set is empty")
    effects = rps.cell_effects()
    return rps.weights @ effects


def mean_effect_gap(effects: np.ndarray, q_values: Sequence[float], in_set: Sequence[bool]):
    """Compare the set-normalized and set-restricted posterior means.

    Parameters
    ----------
    effects : ndarray of shape (n_models, K)
        Effects of every model of the full space.
    q_values : sequence of float
        Objective of every model.
    in_set : sequence of bool
        Membership of each model in the Rashomon set.

    Returns
    -------
    conditional : ndarray
        Mean over the set with masses renormalized to the set.
    restricted : ndarray
        Sum over the set of effects times full-space masses.
    retained : float
        Full-space mass of the set.
    """
    mass = posterior_masses(q_values)
    keep = np.asarray(in_set, dtype=bool)
    if not keep.any():
        raise ValueError("the Rashomon set is empty")
    retained = math.fsum(mass[keep])
    restricted = mass[keep] @ np.asarray(effects)[keep]
    conditional = (mass[keep] / retained) @ np.asarray(effects)[keep]
    return conditional, restricted, retained


def approximation_error_bound(rps_size: int, total_size: int, theta: float) -> float:
    """Worst-case sup-distance between set-conditional and full posterior CDFs.

    ``theta`` is the posterior-probability threshold defining the set.
    """
    if not 0 <= rps_size <= total_size or total_size < 1:
        raise ValueError("need 0 <= rps_size <= total_size and total_size >= 1")
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    if theta > 1 / total_size:
        return min(1.0, 2 * (1 - rps_size * theta))
    return min(1.0, 2 * (total_size - rps_size) * theta)


def _step_cdf(points, masses, grid):
    order = np.argsort(points, kind="stable")
    p = np.asarray(points, dtype=float)[order]
    c = np.cumsum(np.asarray(masses, dtype=float)[order])
    idx = np.searchsorted(p, grid, side="right")
    return np.where(idx > 0, c[np.maximum(idx - 1, 0)], 0.0)


def empirical_sup_cdf_error(full: Sequence[tuple[float, float]], restricted: Sequence[tuple[float, float]],
                            atol: float = 1e-9) -> float:
    """Exact sup-norm distance between two discrete distribution functions.

    Both arguments are ``(value, mass)`` lists whose masses sum to one.
    """
    out = []
    for name, dist in (("full", full), ("restricted", restricted)):
        if len(dist) == 0:
            raise ValueError(f"{name} distribution is empty")
        v = np.array([float(a) for a, _ in dist])
        m = np.array([float(b) for _, b in dist])
        if (m < 0).any() or abs(math.fsum(m) - 1) > atol:
            raise ValueError(f"{name} masses must be non-negative and sum to one")
        out.append((v, m))
    grid = np.unique(np.concatenate([out[0][0], out[1][0]]))
    f1 = _step_cdf(*out[0], grid)
    f2 = _step_cdf(*out[1], grid)
    return float(np.max(np.abs(f1 - f2)))


def cate(rps: RashomonSet, x: Sequence[int], treatment_feature: int) -> WeightedValues:
    """Per-entry treated-minus-control effect at covariates ``x``.

    ``x`` lists the levels of the non-treatment features (or all features,
    in which case the treatment coordinate is ignored). The effect is exactly
    zero when both combinations share a pool.
    """
    space = rps.space
    M = space.num_features
    if not 0 <= treatment_feature < M:
        raise ValueError(f"treatment feature {treatment_feature} is out of range")
    x = tuple(int(v) for v in x)
    if len(x) == M - 1:
        x = x[:treatment_feature] + (0,) + x[treatment_feature:]
    elif len(x) != M:
        raise ValueError(f"x must have {M - 1} or {M} coordinates")
    lo = 1 if space.single_profile else 0
    if space.levels[treatment_feature] != 2:
        raise ValueError("the treatment feature must be binary")
    treated = x[:treatment_feature] + (lo + 1,) + x[treatment_feature + 1:]
    control = x[:treatment_feature] + (lo,) + x[treatment_feature + 1:]
    space.validate(treated)
    space.validate(control)
    universe = set(rps.universe())
    for k in (treated, control):
        if k not in universe:
            raise ValueError(f"combination {k} is not covered by the Rashomon set")
    it, ic = space.index(treated), space.index(control)
    effects = rps.cell_effects()
    values = []
    for row, e in enumerate(rps.entries):
        where = e.partition.pool_index()
        if where[treated] == where[control]:
            values.append(0.0)
        else:
            values.append(float(effects[row, it] - effects[row, ic]))
    return WeightedValues(np.array(values), rps.weights)


def effect_sd(values: WeightedValues, weighted: bool = False) -> float:
    if weighted:
        mu = values.mean()
        w = values.weights / math.fsum(values.weights)
        return math.sqrt(math.fsum(w * (values.values - mu) ** 2))
    return float(np.std(values.values))


def effect_binning(values: WeightedValues, sd_scale: float | None = None, *, weighted_sd: bool = False,
                   zero_tol: float = 0.0) -> dict[str, float]:
    """Weighted five-bin histogram of effects.

    Bins are ``< -sd``, ``[-sd, 0)``, ``== 0``, ``(0, sd]`` and ``> sd``. The
    zero bin is exact unless ``zero_tol`` widens it to ``|v| <= zero_tol``.
    When ``sd_scale`` is omitted it is the standard deviation of the values
    across entries (unweighted unless ``weighted_sd``).
    """
    if len(values) == 0:
        raise ValueError("no effects to bin")
    if sd_scale is None:
        sd_scale = effect_sd(values, weighted_sd)
    elif not sd_scale > 0:
        raise ValueError("sd_scale must be positive")
    v, w = values.values, values.weights
    zero = np.abs(v) <= zero_tol
    masks = (
        ~zero & (v < -sd_scale),
        ~zero & (v >= -sd_scale) & (v < 0),
        zero,
        ~zero & (v > 0) & (v <= sd_scale),
        ~zero & (v > sd_scale),
    )
    return {name: math.fsum(w[m]) for name, m in zip(BINS, masks)}


@dataclass
class RpsSummary:
    """Reporting summaries of a Rashomon set.

    Attributes
    ----------
    histogram : dict
        ``(n_pools, ratio_lo, ratio_hi)`` to summed weight, where the ratio is
        ``exp(-(Q - Q_min)) - 1`` and bins are ``(ratio_lo, ratio_hi]``.
    split_frequency : dict
        ``(profile, feature, level)`` to the weight of entries splitting that
        edge class.
    q_sizes : list of (Q, n_pools)
        Sorted by ``Q``.
    """

    histogram: dict = field(default_factory=dict)
    split_frequency: dict = field(default_factory=dict)
    q_sizes: list = field(default_factory=list)

    def size_curve(self, q0: float, epsilons: Sequence[float]) -> list[tuple[float, int]]:
        """Set size at each ``epsilon`` (same reference ``q0``)."""
        qs = [q for q, _ in self.q_sizes]
        return [(eps, sum(1 for q in qs if q <= q0 * (1 + eps) + 1e-12)) for eps in epsilons]


def relative_ratios(q_values: Sequence[float]) -> np.ndarray:
    q = np.asarray(q_values, dtype=float)
    return np.exp(-(q - q.min())) - 1.0


def rps_summary(rps: RashomonSet, ratio_width: float = 0.1) -> RpsSummary:
    if len(rps) == 0:
        raise ValueError("the Rashomon set is empty")
    out = RpsSummary()
    ratios = relative_ratios(rps.q_values)
    for e, r in zip(rps.entries, ratios):
        j = int(math.floor(-r / ratio_width + 1e-12))
        key = (e.n_pools, round(-(j + 1) * ratio_width, 12), round(-j * ratio_width, 12) if j else 0.0)
        out.histogram[key] = out.histogram.get(key, 0.0) + e.weight
    for pos, rho in enumerate(rps.profiles):
        active = [m for m, on in enumerate(rho) if on]
        for e in rps.entries:
            for row, m in zip(e.sigmas[pos].rows, active):
                for c, v in enumerate(row):
                    key = (rho, m, c + 1)
                    out.split_frequency[key] = out.split_frequency.get(key, 0.0) + (e.weight if v == 0 else 0.0)
    out.q_sizes = [(e.q, e.n_pools) for e in rps.entries]
    return out


def coordinate_distribution(effects: np.ndarray, masses: np.ndarray, k: int,
                            fn: Callable[[np.ndarray], float] | None = None) -> list[tuple[float, float]]:
    """``(value, mass)`` atoms of one coordinate (or of ``fn`` of the effect vector)."""
    if fn is None:
        vals = effects[:, k]
    else:
        vals = np.array([fn(row) for row in effects])
    return list(zip(vals.tolist(), np.asarray(masses, dtype=float).tolist()))
