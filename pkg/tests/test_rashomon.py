import itertools

import numpy as np
import pytest

from rashomon_partitions.crossprofile import (FORBIDDEN, POOLABLE, POOLED, PartialResultError,
                                              intersection_matrix, mark_pooled, pool_adjacent_profiles,
                                              pool_profiles)
from rashomon_partitions.hasse import FeatureSpace, Partition, is_permissible_global
from rashomon_partitions.loss import Dataset, EmptyPoolError, LossConfig, LossEvaluator, q_value
from rashomon_partitions.rashomon import (enumerate_rps, reference_objective, rps_keys,
                                          select_feasible_combinations)
from rashomon_partitions.search import brute_force_profile
from rashomon_partitions.verify import global_oracle, permissible_partitions, random_dataset


def P(*pools):
    return Partition(tuple(tuple(p) for p in pools))


class TestFeasibleCombinations:
    def test_trivial(self):
        assert select_feasible_combinations([[1, 5], [1, 9]], 3) == [(0, 0)]

    def test_infeasible(self):
        assert select_feasible_combinations([[2, 5], [2, 9]], 3) == []

    def test_matches_product(self, rng):
        for _ in range(20):
            lists = [sorted(rng.uniform(0, 1, 4).tolist()) for _ in range(3)]
            theta = float(rng.uniform(0.5, 2.5))
            want = [c for c in itertools.product(range(4), repeat=3)
                    if sum(lists[i][j] for i, j in enumerate(c)) <= theta]
            assert sorted(select_feasible_combinations(lists, theta)) == want


class TestIntersection:
    space = FeatureSpace((2, 2))

    def test_poolable_and_forbidden(self):
        p = P([(0, 0)], [(1, 0)], [(0, 1)], [(1, 1)])
        inter = intersection_matrix(p, (1, 0), (1, 1))
        assert inter.tolist() == [[POOLABLE]]
        inter = intersection_matrix(p, (0, 0), (1, 0))
        assert inter.tolist() == [[POOLABLE]]

    def test_already_pooled(self):
        p = P([(0, 0)], [(1, 0), (1, 1)], [(0, 1)])
        assert intersection_matrix(p, (1, 0), (1, 1)).tolist() == [[POOLED]]

    def test_no_variant(self):
        p = P([(0, 0)], [(1, 0)], [(2, 0)], [(0, 1)], [(1, 1)], [(2, 1)])
        inter = intersection_matrix(p, (1, 0), (1, 1))
        assert inter.tolist() == [[POOLABLE, FORBIDDEN], [FORBIDDEN, POOLABLE]]

    def test_mark_pooled(self):
        inter = np.zeros((2, 2), dtype=np.int8)
        mark_pooled(inter, 0, 1)
        assert inter.tolist() == [[FORBIDDEN, POOLED], [POOLABLE, FORBIDDEN]]

    def test_not_adjacent(self):
        with pytest.raises(ValueError):
            intersection_matrix(P([(0, 0)], [(1, 1)]), (0, 0), (1, 1))


class TestPoolAdjacent:
    space = FeatureSpace((2, 2))

    def evaluator(self, y_by_cell, lam=0.1):
        cells = np.repeat(np.arange(4), 2)
        y = np.asarray(y_by_cell, dtype=float)[cells] + np.tile([-0.1, 0.1], 4)
        return LossEvaluator(Dataset.from_cells(self.space, cells, y), LossConfig(lam=lam))

    def test_merge_kept_when_cheap(self):
        ev = self.evaluator([0.0, 0.0, 5.0, 5.0])
        p = P([(0, 0)], [(0, 1)], [(1, 0)], [(1, 1)])
        theta = q_value(p, ev.data, ev.cfg)
        out = pool_adjacent_profiles(p, self.space, ev, theta)
        assert p in out
        merged = P([(0, 0), (0, 1)], [(1, 0), (1, 1)])
        assert merged in out
        assert all(is_permissible_global(x, self.space) for x in out)

    def test_expensive_merge_excluded(self):
        ev = self.evaluator([0.0, 10.0, 20.0, 30.0], lam=0.01)
        p = P([(0, 0)], [(0, 1)], [(1, 0)], [(1, 1)])
        theta = q_value(p, ev.data, ev.cfg)
        assert pool_adjacent_profiles(p, self.space, ev, theta) == [p]

    def test_matches_global_oracle(self, rng):
        ev = self.evaluator(rng.integers(0, 2, 4))
        p = P([(0, 0)], [(0, 1)], [(1, 0)], [(1, 1)])
        theta = q_value(p, ev.data, ev.cfg) + 0.3
        # every profile holds one combination, so all partitions come from the full split
        got = pool_profiles([p], (0, 0), self.space, ev, theta)
        assert got == global_oracle(self.space, ev.data, ev.cfg, theta)


class TestEnumerateRps:
    def test_single_profile_matches_brute_force(self, rng):
        space = FeatureSpace((3, 3), single_profile=True)
        d = random_dataset(space, rng)
        cfg = LossConfig(lam=0.05)
        q0, _ = reference_objective(space, d, cfg)
        rps = enumerate_rps(space, d, cfg, q0, 0.2)
        want = brute_force_profile((1, 1), space, None, d, rps.theta, cfg)
        assert {e.sigmas[0] for e in rps} == want
        assert rps.weights.sum() == pytest.approx(1.0)
        assert np.all(np.diff(rps.q_values) >= 0)

    def test_global_oracle(self, rng):
        space = FeatureSpace((3, 3))
        perm = permissible_partitions(space, space.profiles())
        assert len(perm) > 0
        for _ in range(3):
            d = random_dataset(space, rng, n_per_cell=4)
            cfg = LossConfig(lam=0.1)
            qs = sorted(q_value(p, d, cfg) for p in perm)
            q0 = qs[len(qs) // 20]
            assert rps_keys(enumerate_rps(space, d, cfg, q0, 0.0)) == global_oracle(space, d, cfg, q0, perm)

    def test_epsilon_nesting(self, rng):
        space = FeatureSpace((3, 3))
        d = random_dataset(space, rng)
        cfg = LossConfig(lam=0.1)
        q0, _ = reference_objective(space, d, cfg)
        small = rps_keys(enumerate_rps(space, d, cfg, q0, 0.05))
        big = enumerate_rps(space, d, cfg, q0, 0.2)
        assert small <= rps_keys(big)
        assert rps_keys(big.filter(0.05)) == small

    def test_no_cross_profile(self, rng):
        space = FeatureSpace((3, 3))
        d = random_dataset(space, rng)
        cfg = LossConfig(lam=0.1)
        q0, _ = reference_objective(space, d, cfg)
        rps = enumerate_rps(space, d, cfg, q0, 0.3, cross_profile=False)
        for e in rps:
            assert not e.merges
            assert all(len({tuple(v > 0 for v in k) for k in pool}) == 1 for pool in e.partition)
        full = enumerate_rps(space, d, cfg, q0, 0.3)
        assert rps_keys(rps) == {e.partition for e in full if not e.merges}

    def test_cap_raises_partial(self, rng):
        space = FeatureSpace((3, 3))
        d = random_dataset(space, rng)
        cfg = LossConfig(lam=0.05)
        q0, _ = reference_objective(space, d, cfg)
        with pytest.raises(PartialResultError) as err:
            enumerate_rps(space, d, cfg, q0, 1.0, max_rps=3)
        assert err.value.partial.partial and len(err.value.partial) == 3

    def test_empty_when_lambda_too_large(self, rng):
        space = FeatureSpace((3, 3))
        d = random_dataset(space, rng)
        cfg = LossConfig(lam=100.0)
        assert len(enumerate_rps(space, d, cfg, 1.0, 0.0)) == 0

    def test_unobserved_combination_strict(self):
        space = FeatureSpace((3, 3), single_profile=True)
        d = Dataset.from_observations(space, [[1, 1]], [1.0])
        with pytest.raises(EmptyPoolError):
            enumerate_rps(space, d, LossConfig(lam=0.1), 1.0, 0.1)

    def test_thread_count_does_not_change_output(self, rng):
        space = FeatureSpace((3, 3))
        d = random_dataset(space, rng)
        cfg = LossConfig(lam=0.05)
        q0, _ = reference_objective(space, d, cfg)
        a = enumerate_rps(space, d, cfg, q0, 0.3, n_jobs=1)
        b = enumerate_rps(space, d, cfg, q0, 0.3, n_jobs=4)
        assert [(e.partition, e.q) for e in a] == [(e.partition, e.q) for e in b]

    def test_reference_modes(self, rng):
        space = FeatureSpace((3, 3))
        d = random_dataset(space, rng)
        cfg = LossConfig(lam=0.05)
        q_full, sig = reference_objective(space, d, cfg, "fullsplit")
        q_greedy, _ = reference_objective(space, d, cfg, "greedy")
        assert q_greedy <= q_full
        q_exp, _ = reference_objective(space, d, cfg, "explicit", {s.profile: s for s in sig})
        assert q_exp == q_full
        with pytest.raises(ValueError):
            reference_objective(space, d, cfg, "magic")
