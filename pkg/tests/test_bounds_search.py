import math

import numpy as np
import pytest

from rashomon_partitions.bounds import (FixedIndexSet, ProfileObjective, combined_bound, equivalent_bound,
                                        fixed_bound)
from rashomon_partitions.hasse import FeatureSpace, PartitionMatrix, all_sigmas
from rashomon_partitions.loss import Dataset, LossConfig, LossEvaluator
from rashomon_partitions.search import (SearchCache, brute_force_profile, enumerate_profile, search_profile)
from rashomon_partitions.verify import random_dataset

TINY = FeatureSpace((2,), single_profile=True)
TINY_DATA = Dataset.from_observations(TINY, [[1], [1], [2], [2]], [0.0, 2.0, 10.0, 12.0])
POOLED = PartitionMatrix((1,), ((1,),))


class TestBounds:
    def test_fixed_bound_hand_computed(self):
        assert fixed_bound(POOLED, FixedIndexSet([(0, 0)]), TINY_DATA, LossConfig(lam=1.0)) == pytest.approx(27.0)

    def test_fixed_bound_nothing_fixed(self):
        assert fixed_bound(POOLED, FixedIndexSet(), TINY_DATA, LossConfig(lam=1.0)) == pytest.approx(1.0)

    def test_equivalent_bound(self):
        assert equivalent_bound(POOLED, FixedIndexSet(), TINY_DATA) == pytest.approx(1.0)
        flat = Dataset.from_observations(TINY, [[1], [2]], [3.0, 5.0])
        assert equivalent_bound(POOLED, FixedIndexSet(), flat) == 0.0

    def test_tight_when_all_fixed(self, rng):
        space = FeatureSpace((3, 3), single_profile=True)
        d = random_dataset(space, rng)
        cfg = LossConfig(lam=0.1)
        obj = ProfileObjective((1, 1), LossEvaluator(d, cfg))
        for sigma in all_sigmas((1, 1), (3, 3)):
            b = combined_bound(sigma, FixedIndexSet.all_of(sigma), d, cfg)
            assert b == pytest.approx(obj.evaluate(sigma).q, rel=1e-12)

    def test_bad_fixed_index(self):
        with pytest.raises(ValueError):
            fixed_bound(POOLED, FixedIndexSet([(0, 1)]), TINY_DATA, LossConfig())

    def test_bound_below_descendants(self, rng):
        space = FeatureSpace((3, 4), single_profile=True)
        cfg = LossConfig(lam=0.05)
        d = random_dataset(space, rng)
        obj = ProfileObjective((1, 1), LossEvaluator(d, cfg))
        q = {s.rows: obj.evaluate(s).q for s in all_sigmas((1, 1), obj.shape)}
        positions = [(r, c) for r, w in enumerate(obj.widths) for c in range(w)]
        for sigma in all_sigmas((1, 1), obj.shape):
            for k in range(len(positions) + 1):
                fixed = FixedIndexSet(positions[:k])
                best = min(v for rows, v in q.items() if all(rows[r][c] == sigma.rows[r][c] for r, c in positions[:k]))
                assert combined_bound(sigma, fixed, d, cfg) <= best + 1e-12


class TestCache:
    def test_masking(self):
        cache = SearchCache()
        cache.insert(((0, 1, 1), (1,)), 0, 1)
        assert cache.seen(((0, 0, 0), (1,)), 0, 1)
        assert not cache.seen(((1, 0, 0), (1,)), 0, 1)
        assert not cache.seen(((0, 1, 1), (0,)), 0, 1)

    def test_stop(self):
        cache = SearchCache()
        cache.insert(((0, 1, 1),), 0, 1, stop=2)
        assert cache.seen(((0, 0, 1),), 0, 1, stop=2)
        assert not cache.seen(((0, 0, 0),), 0, 1, stop=2)


class TestEnumerateProfile:
    space = FeatureSpace((3, 3), single_profile=True)

    def data(self, rng):
        return random_dataset(self.space, rng)

    def test_below_minimum_is_empty(self, rng):
        d = self.data(rng)
        assert enumerate_profile((1, 1), self.space, None, d, 0.0, LossConfig(lam=0.1)) == set()

    def test_everything_when_unconstrained(self, rng):
        d = self.data(rng)
        got = enumerate_profile((1, 1), self.space, 9, d, 1e9, LossConfig(lam=0.1))
        assert len(got) == 16

    def test_matches_brute_force_on_example_structure(self, rng):
        means = np.array([0, 0, 1, 2, 2, 3, 2, 2, 3], dtype=float)
        cells = np.repeat(np.arange(9), 5)
        d = Dataset.from_cells(self.space, cells, means[cells] + 0.1 * rng.standard_normal(len(cells)))
        cfg = LossConfig(lam=0.02)
        obj = ProfileObjective((1, 1), LossEvaluator(d, cfg))
        qs = sorted(obj.evaluate(s).q for s in all_sigmas((1, 1), (3, 3)))
        for theta in qs:
            got = enumerate_profile((1, 1), self.space, None, d, theta, cfg)
            assert got == brute_force_profile((1, 1), self.space, None, d, theta, cfg)
        best = enumerate_profile((1, 1), self.space, None, d, qs[0], cfg)
        assert best == {PartitionMatrix((1, 1), ((0, 1), (1, 0)))}

    @pytest.mark.parametrize("origin", [(0, 0), (0, 1), (1, 0), (1, 1)])
    def test_origin_does_not_matter(self, rng, origin):
        d = self.data(rng)
        cfg = LossConfig(lam=0.05)
        theta = 1.5
        want = brute_force_profile((1, 1), self.space, None, d, theta, cfg)
        assert enumerate_profile((1, 1), self.space, None, d, theta, cfg, origin) == want

    def test_pool_cap(self, rng):
        d = self.data(rng)
        cfg = LossConfig(lam=0.01)
        got = enumerate_profile((1, 1), self.space, 3, d, 1e9, cfg)
        assert got and all(s.n_pools() <= 3 for s in got)
        assert got == brute_force_profile((1, 1), self.space, 3, d, 1e9, cfg)

    def test_invalid_arguments(self, rng):
        d = self.data(rng)
        with pytest.raises(ValueError):
            enumerate_profile((1, 1), self.space, 0, d, 1.0, LossConfig())
        with pytest.raises(ValueError):
            enumerate_profile((1, 1), self.space, None, d, -1.0, LossConfig())

    def test_brute_force_guard(self):
        space = FeatureSpace((9, 9, 9, 2), single_profile=True)
        d = Dataset.from_observations(space, [[1, 1, 1, 1]], [0.0])
        with pytest.raises(ValueError):
            brute_force_profile((1, 1, 1, 1), space, None, d, 1.0, LossConfig(strict=False))

    def test_search_pruning_counts(self, rng):
        d = self.data(rng)
        obj = ProfileObjective((1, 1), LossEvaluator(d, LossConfig(lam=0.1)))
        found, stats = search_profile(obj, obj.evaluate(PartitionMatrix.ones((1, 1), (3, 3))).q, math.inf)
        assert stats.visited >= len(found)
