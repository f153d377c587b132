"""Self-checks of the enumerator against exhaustive oracles.

Each suite runs on spaces small enough to list every candidate model, so
the enumerator's output can be compared with the full answer.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from more_itertools import set_partitions

from .bounds import ProfileObjective
from .hasse import (FeatureSpace, Partition, PartitionMatrix, all_sigmas, count_pools_inclusion_exclusion,
                    is_permissible_global, is_permissible_profile_partition, pools_from_sigma)
from .loss import TOL, Dataset, LossConfig, LossEvaluator, max_pools, q_value, rashomon_threshold
from .rashomon import enumerate_rps, reference_objective, rps_keys
from .search import brute_force_profile, enumerate_profile, search_profile

ORACLE_MAX_CELLS = 10
VERIFY_MAX_BITS = 16


class OracleSizeError(ValueError):
    """The requested space is too large for exhaustive checking."""


@dataclass
class SuiteResult:
    name: str
    cases: int = 0
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def check(self, cond: bool, message: str) -> None:
        self.cases += 1
        if not cond:
            self.failures.append(message)


@dataclass
class VerificationReport:
    suites: list[SuiteResult]

    @property
    def ok(self) -> bool:
        return all(s.ok for s in self.suites)

    def render(self) -> str:
        lines = []
        for s in self.suites:
            status = "PASS" if s.ok else "FAIL"
            lines.append(f"{status} {s.name}: {s.cases - len(s.failures)}/{s.cases} cases")
            lines.extend(f"    {msg}" for msg in s.failures[:5])
        lines.append("all suites passed" if self.ok else "verification FAILED")
        return "\n".join(lines)


def random_dataset(space: FeatureSpace, rng: np.random.Generator, n_per_cell: int = 5,
                   n_means: int = 3, sd: float = 1.0) -> Dataset:
    """Cells with means drawn from a few shared values, so pooling is plausible."""
    levels = rng.integers(0, n_means, size=space.size).astype(float)
    cells = np.repeat(np.arange(space.size), n_per_cell)
    y = levels[cells] + sd * rng.standard_normal(len(cells))
    return Dataset.from_cells(space, cells, y)


def global_oracle(space: FeatureSpace, d: Dataset, cfg: LossConfig, theta: float,
                  permissible: list[Partition] | None = None) -> set[Partition]:
    """Every permissible partition of the observed profiles with ``Q <= theta``."""
    if permissible is None:
        permissible = permissible_partitions(space, d.realized_profiles())
    return {p for p in permissible if q_value(p, d, cfg) <= theta + TOL}


def permissible_partitions(space: FeatureSpace, profiles) -> list[Partition]:
    """All permissible partitions of the union of ``profiles`` (exhaustive)."""
    universe = sorted(k for rho in profiles for k in space.profile_combinations(rho))
    if len(universe) > ORACLE_MAX_CELLS:
        raise OracleSizeError(f"{len(universe)} combinations is too many for the global oracle")
    out = []
    for blocks in set_partitions(universe):
        p = Partition(tuple(tuple(b) for b in blocks))
        if is_permissible_global(p, space, universe):
            out.append(p)
    return out


def _thresholds(objective: ProfileObjective, rng) -> list[float]:
    q = sorted(objective.evaluate(s).q for s in all_sigmas(objective.profile, objective.shape))
    picks = rng.choice(len(q), size=3, replace=False)
    return [q[int(i)] for i in sorted(picks)]


def oracle_suite(spaces, n_datasets: int, rng, mutate: Callable[[float], float]) -> SuiteResult:
    res = SuiteResult("profile oracle equivalence")
    for levels in spaces:
        space = FeatureSpace(levels, single_profile=True)
        rho = (1,) * space.num_features
        for rep in range(n_datasets):
            d = random_dataset(space, rng)
            cfg = LossConfig(lam=float(rng.choice([0.01, 0.05, 0.2])))
            obj = ProfileObjective(rho, LossEvaluator(d, cfg))
            for theta in _thresholds(obj, rng):
                got = enumerate_profile(rho, space, None, d, mutate(theta), cfg)
                want = brute_force_profile(rho, space, None, d, theta, cfg)
                res.check(got == want, f"levels={levels} dataset={rep} theta={theta!r}: "
                                       f"{len(got ^ want)} partitions differ")
    return res


def global_suite(n_datasets: int, rng, mutate: Callable[[float], float]) -> SuiteResult:
    res = SuiteResult("global oracle equivalence")
    space = FeatureSpace((3, 3))
    perm = permissible_partitions(space, space.profiles())
    for rep in range(n_datasets):
        d = random_dataset(space, rng, n_per_cell=4)
        cfg = LossConfig(lam=float(rng.choice([0.02, 0.1, 0.5])))
        qs = sorted(q_value(p, d, cfg) for p in perm)
        for q0 in (qs[0], qs[len(qs) // 50], qs[len(qs) // 10]):
            want = global_oracle(space, d, cfg, q0, perm)
            rps = enumerate_rps(space, d, cfg, mutate(q0), 0.0)
            got = rps_keys(rps)
            res.check(got == want and len(got) == len(rps),
                      f"dataset={rep} q0={q0!r}: {len(got ^ want)} partitions differ")
            cap = max_pools(q0, 0.0, cfg.lam)
            res.check(all(len(p) <= cap for p in got), f"dataset={rep}: pool cap {cap} exceeded")
    return res


def counting_suite(max_levels: int = 5, max_features: int = 3, exhaustive_cells: int = 9,
                   rule_check_cells: int | None = None) -> SuiteResult:
    """Permissible profile partitions number ``2 ** sum(L_i - 1)``.

    For every shape the matrices must give pairwise distinct partitions that
    all pass the rule-based check. Where the profile has at most
    ``exhaustive_cells`` combinations, every set partition is also checked,
    so the count is exact rather than a lower bound. ``rule_check_cells``
    skips the (slow) rule-based check on larger profiles.
    """
    res = SuiteResult("permissible-partition counting")
    for m in range(1, max_features + 1):
        for levels in itertools.product(range(1, max_levels + 1), repeat=m):
            space = FeatureSpace(levels, single_profile=True)
            rho = (1,) * m
            want = 2 ** sum(L - 1 for L in levels)
            generated = {pools_from_sigma(s, space) for s in all_sigmas(rho, space.profile_shape(rho))}
            res.check(len(generated) == want, f"levels={levels}: {len(generated)} distinct, expected {want}")
            if rule_check_cells is None or space.size <= rule_check_cells:
                res.check(all(is_permissible_profile_partition(p, rho, space) for p in generated),
                          f"levels={levels}: a generated partition fails the rule-based check")
            if space.size <= exhaustive_cells:
                cells = space.profile_combinations(rho)
                count = sum(1 for blocks in set_partitions(cells)
                            if is_permissible_profile_partition(Partition(tuple(map(tuple, blocks))), rho, space))
                res.check(count == want, f"levels={levels}: counted {count}, expected {want}")
    return res


def pool_count_suite(max_levels: int = 4, max_features: int = 3) -> SuiteResult:
    """Inclusion-exclusion pool counts equal direct counts for every matrix."""
    res = SuiteResult("inclusion-exclusion pool count")
    for m in range(1, max_features + 1):
        for shape in itertools.product(range(1, max_levels + 1), repeat=m):
            rho = (1,) * m
            for sigma in all_sigmas(rho, shape):
                direct = len(pools_from_sigma(sigma))
                res.check(count_pools_inclusion_exclusion(sigma) == direct == sigma.n_pools(),
                          f"sigma={sigma.to_strings()}: counts disagree")
    return res


def bound_suite(spaces, n_datasets: int, rng) -> SuiteResult:
    """Every visited node's bound is at most the best objective below it."""
    res = SuiteResult("lower-bound validity")
    for levels in spaces:
        space = FeatureSpace(levels, single_profile=True)
        rho = (1,) * space.num_features
        for rep in range(n_datasets):
            d = random_dataset(space, rng)
            cfg = LossConfig(lam=float(rng.choice([0.01, 0.1, 1.0])))
            obj = ProfileObjective(rho, LossEvaluator(d, cfg))
            q_all = {s.rows: obj.evaluate(s).q for s in all_sigmas(rho, obj.shape)}
            nodes = []
            search_profile(obj, float(np.median(list(q_all.values()))), math.inf,
                           visit=lambda sigma, fixed, bound: nodes.append((sigma, fixed, bound)))
            for sigma, fixed, bound in nodes:
                pos = fixed.positions
                best = min(q for rows, q in q_all.items()
                           if all(rows[r][c] == sigma.rows[r][c] for r, c in pos))
                res.check(bound <= best + 1e-9 * max(1.0, abs(best)),
                          f"levels={levels} dataset={rep} sigma={sigma.to_strings()}: bound {bound!r} > {best!r}")
    return res


def run_verification(seed: int = 0, quick: bool = False, extra_levels: tuple[int, ...] | None = None,
                     mutate: Callable[[float], float] | None = None) -> VerificationReport:
    """Run every suite and collect per-suite counts.

    ``mutate`` transforms the threshold handed to the enumerator (never the
    oracle's); it exists to confirm that the suites catch a broken threshold.
    """
    mutate = mutate or (lambda t: t)
    rng = np.random.default_rng(seed)
    spaces = [(3, 3), (4, 4), (3, 3, 3)]
    if extra_levels is not None:
        bits = sum(L - 1 for L in extra_levels)
        if bits > VERIFY_MAX_BITS or any(L < 1 for L in extra_levels):
            raise OracleSizeError(f"space {extra_levels} is too large for oracle mode")
        spaces.append(tuple(extra_levels))
    n = 3 if quick else 10
    suites = [
        oracle_suite(spaces, n, rng, mutate),
        global_suite(2 if quick else 5, rng, mutate),
        counting_suite(4 if quick else 5, exhaustive_cells=8 if quick else 9, rule_check_cells=64),
        pool_count_suite(3 if quick else 4),
        bound_suite([(3, 3), (3, 4)], 2 if quick else 5, rng),
    ]
    return VerificationReport(suites)
