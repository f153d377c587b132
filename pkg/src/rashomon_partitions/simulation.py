"""Synthetic factorial data with a known pooled ground truth.

Every replication draws from its own PCG64 stream derived from the master
seed with ``SeedSequence(seed, spawn_key=(replication,))``, so any replication
can be regenerated on its own and results do not depend on execution order.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .hasse import FeatureSpace, Partition, PartitionMatrix, Profile, pools_from_sigma
from .loss import Dataset, LossConfig, OutcomeModel
from .rashomon import RashomonSet, enumerate_rps, reference_objective


@dataclass(frozen=True, eq=False)
class SimulationSpec:
    """Ground truth and sampling design for synthetic data.

    Parameters
    ----------
    space : FeatureSpace
    beta : ndarray of shape (K,)
        Expected outcome of each combination; ``nan`` marks combinations that
        are never sampled.
    sd : float or ndarray of shape (K,)
        Noise standard deviation per combination.
    n_per_cell : int or ndarray of shape (K,)
        Observations drawn per combination.
    truth : Partition, optional
        The data-generating partition, used by recovery experiments.
    seed : int
    replications : int
    """

    space: FeatureSpace
    beta: np.ndarray
    sd: float | np.ndarray = 1.0
    n_per_cell: int | np.ndarray = 10
    truth: Partition | None = None
    seed: int = 0
    replications: int = 1
    name: str = "custom"
    pool_coefficients: tuple | None = None

    def __post_init__(self):
        K = self.space.size
        beta = np.asarray(self.beta, dtype=float)
        if beta.shape != (K,):
            raise ValueError(f"beta must have one entry per combination ({K})")
        sd = np.broadcast_to(np.asarray(self.sd, dtype=float), (K,)).copy()
        n = np.broadcast_to(np.asarray(self.n_per_cell, dtype=np.int64), (K,)).copy()
        sampled = ~np.isnan(beta)
        if (sd[sampled] < 0).any():
            raise ValueError("noise sd must be non-negative")
        if (n[sampled] < 1).any():
            raise ValueError("every sampled combination needs at least one observation")
        n[~sampled] = 0
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "sd", sd)
        object.__setattr__(self, "n_per_cell", n)

    def best_cells(self, atol: float = 1e-12) -> np.ndarray:
        """Indices of the combinations with the highest expected outcome."""
        top = np.nanmax(self.beta)
        return np.flatnonzero(np.abs(np.nan_to_num(self.beta, nan=-np.inf) - top) <= atol)

    def rng(self, replication: int = 0) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=(int(replication),))
        return np.random.Generator(np.random.PCG64(seq))


def generate(spec: SimulationSpec, replication: int = 0) -> Dataset:
    """Draw one dataset: ``n_k`` normal outcomes around ``beta_k`` per combination."""
    cells = np.repeat(np.arange(spec.space.size), spec.n_per_cell)
    noise = spec.rng(replication).standard_normal(len(cells))
    y = spec.beta[cells] + spec.sd[cells] * noise
    return Dataset.from_cells(spec.space, cells, y)


def generate_observations(spec: SimulationSpec, replication: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Raw ``(X, y)`` rows of one replication, with ``X`` in level units."""
    cells = np.repeat(np.arange(spec.space.size), spec.n_per_cell)
    noise = spec.rng(replication).standard_normal(len(cells))
    y = spec.beta[cells] + spec.sd[cells] * noise
    X = spec.space.level_matrix()[cells]
    return X, y


def _beta_from_pools(space: FeatureSpace, partition: Partition, values: Sequence[float]) -> np.ndarray:
    beta = np.full(space.size, np.nan)
    for pool, v in zip(partition.pools, values):
        for k in pool:
            beta[space.index(k)] = v
    return beta


def drug_pair_spec(n_per_cell: int = 10, seed: int = 0, replications: int = 100) -> SimulationSpec:
    """Two drugs with four dosages each and six true pools.

    Drug A dosages group as {1}, {2, 3}, {4}; drug B as {1, 2}, {3, 4}. Pool
    means in row-major (A group, B group) order are 0, 1.5, 3, 3, 6, 4.5.
    """
    space = FeatureSpace((4, 4), single_profile=True, names=("drug_a", "drug_b"))
    sigma = PartitionMatrix((1, 1), ((0, 1, 0), (1, 0, 1)))
    truth = pools_from_sigma(sigma, space)
    beta = _beta_from_pools(space, truth, [0.0, 1.5, 3.0, 3.0, 6.0, 4.5])
    return SimulationSpec(space, beta, 1.0, n_per_cell, truth, seed, replications, "drug-pair")


SECTION6_EFFECTS = {
    (0, 0, 0, 1): (4.4, 1.0),
    (0, 1, 0, 0): (4.3, 1.0),
    (0, 1, 0, 1): (4.45, 1.0),
    (1, 0, 1, 0): (4.5, 1.5),
    (1, 1, 1, 1): (4.35, 1.0),
}


def four_feature_spec(n_per_cell: int = 30, seed: int = 0, replications: int = 100) -> SimulationSpec:
    """Four features with levels 0..3 whose outcome depends only on the profile.

    Every profile is one true pool. Profile (1, 0, 1, 0) has the highest mean.
    """
    space = FeatureSpace((4, 4, 4, 4), names=("f1", "f2", "f3", "f4"))
    beta = np.zeros(space.size)
    var = np.ones(space.size)
    pools = []
    for rho in space.profiles():
        idx = space.profile_indices(rho)
        mean, v = SECTION6_EFFECTS.get(rho, (0.0, 1.0))
        beta[idx] = mean
        var[idx] = v
        pools.append(tuple(space.profile_combinations(rho)))
    truth = Partition(tuple(pools))
    return SimulationSpec(space, beta, np.sqrt(var), n_per_cell, truth, seed, replications, "four-feature")


AGE_DRUG_COEFFICIENTS = (
    (0, -1, 0, 1), (1.5, -4, 0, 1.5), (0, -1, 0, 1), (4.5, -4, 0, 0.5),
    (4, -2, -1, 1), (1, 1, 1, -1), (-3, 2, -3, 1), (0, 0, 0, 0),
    (4, 2, -3, -1), (0, 0, 0, 0), (5, 2, -3, 0), (5, -1, 0, -1),
)


def age_drug_linear_spec(n_per_cell: int = 10, seed: int = 0, replications: int = 1) -> SimulationSpec:
    """Age (2 groups) by drug A (3 dosages) by drug B (5 dosages), linear within pools.

    Only the profile where all three features are active is sampled; the
    true partition has 12 pools, each with its own intercept and slopes.
    """
    space = FeatureSpace((3, 4, 6), names=("age", "drug_a", "drug_b"))
    rho = (1, 1, 1)
    sigma = PartitionMatrix(rho, ((0,), (0, 0), (1, 0, 1, 1)))
    truth = pools_from_sigma(sigma, space)
    beta = np.full(space.size, np.nan)
    for pool, coef in zip(truth.pools, AGE_DRUG_COEFFICIENTS):
        for k in pool:
            beta[space.index(k)] = coef[0] + float(np.dot(coef[1:], k))
    return SimulationSpec(space, beta, 1.0, n_per_cell, truth, seed, replications, "age-drug-linear",
                          AGE_DRUG_COEFFICIENTS)


@dataclass
class RecoveryRow:
    epsilon: float
    best_coverage: float
    truth_coverage: float
    mean_size: float


@dataclass
class RecoveryTable:
    rows: list[RecoveryRow] = field(default_factory=list)
    per_replication: list[dict] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epsilon", "best_coverage", "truth_coverage", "mean_size"])
        for r in self.rows:
            w.writerow([repr(r.epsilon), repr(r.best_coverage), repr(r.truth_coverage), repr(r.mean_size)])
        return buf.getvalue()


def best_set_covered(rps: RashomonSet, best: np.ndarray) -> bool:
    """Whether some entry's highest-mean pool lies inside the true best set."""
    if rps.outcome_model is OutcomeModel.LINEAR:
        raise ValueError("best-pool coverage needs the constant outcome model")
    best = set(int(i) for i in best)
    space = rps.space
    for e in rps.entries:
        values = [-np.inf if v is None else v for v in e.pool_values]
        top = int(np.argmax(values))
        if {space.index(k) for k in e.partition.pools[top]} <= best:
            return True
    return False


def _one_replication(spec, r, lam, eps_grid, reference, cross_profile, outcome_model):
    d = generate(spec, r)
    cfg = LossConfig(lam=lam, outcome_model=outcome_model)
    q0, _ = reference_objective(spec.space, d, cfg, reference)
    full = enumerate_rps(spec.space, d, cfg, q0, max(eps_grid), cross_profile=cross_profile)
    best = spec.best_cells()
    out = []
    for eps in eps_grid:
        rps = full.filter(eps)
        truth = spec.truth is not None and any(e.partition == spec.truth for e in rps.entries)
        out.append({"replication": r, "epsilon": eps, "size": len(rps),
                    "best": bool(len(rps)) and best_set_covered(rps, best), "truth": bool(truth)})
    return out


def run_recovery_experiment(spec: SimulationSpec, lam: float, epsilon_grid: Sequence[float],
                            replications: int | None = None, *, reference: str = "fullsplit",
                            cross_profile: bool = False, n_jobs: int = 1) -> RecoveryTable:
    """Coverage of the truth by the Rashomon set across replications.

    The set is enumerated once per replication at the largest ``epsilon`` and
    filtered down for the others, so coverage is monotone in ``epsilon``.
    """
    eps_grid = sorted(float(e) for e in epsilon_grid)
    reps = spec.replications if replications is None else replications
    task = lambda r: _one_replication(spec, r, lam, eps_grid, reference, cross_profile, OutcomeModel.CONSTANT)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(task, range(reps)))
    else:
        results = [task(r) for r in range(reps)]
    table = RecoveryTable()
    for j, eps in enumerate(eps_grid):
        rows = [res[j] for res in results]
        table.rows.append(RecoveryRow(
            eps,
            sum(x["best"] for x in rows) / reps,
            sum(x["truth"] for x in rows) / reps,
            math.fsum(x["size"] for x in rows) / reps,
        ))
    table.per_replication = [x for res in results for x in res]
    return table


def run_linear_experiment(spec: SimulationSpec, lam: float = 4e-3, epsilon: float = 5e-4,
                          replication: int = 0, reference: str = "greedy") -> tuple[RashomonSet, str]:
    """Enumerate under the per-pool linear model and tabulate fitted coefficients.

    Returns the set and a CSV table with one row per (entry, pool).
    """
    d = generate(spec, replication)
    cfg = LossConfig(lam=lam, outcome_model=OutcomeModel.LINEAR)
    q0, _ = reference_objective(spec.space, d, cfg, reference)
    rps = enumerate_rps(spec.space, d, cfg, q0, epsilon, cross_profile=False)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = spec.space.feature_names()
    w.writerow(["entry", "pool", "q", "weight", "min_member", "intercept"] + [f"slope_{n}" for n in names])
    for i, e in enumerate(rps.entries):
        for g, (pool, coef) in enumerate(zip(e.partition.pools, e.pool_values)):
            coef = coef if coef is not None else (float("nan"),) * (spec.space.num_features + 1)
            w.writerow([i, g, repr(e.q), repr(e.weight), " ".join(map(str, pool[0]))] + [repr(c) for c in coef])
    return rps, buf.getvalue()
