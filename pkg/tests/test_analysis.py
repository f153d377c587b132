import math

import numpy as np
import pytest

from rashomon_partitions.analysis import (
    BINS, WeightedValues, approximation_error_bound, cate, conditional_mean_effects, effect_binning,
    empirical_sup_cdf_error, mean_effect_gap, posterior_masses, rps_summary)
from rashomon_partitions.hasse import FeatureSpace, Partition, PartitionMatrix, pools_from_sigma
from rashomon_partitions.loss import LossConfig
from rashomon_partitions.rashomon import RashomonSet, RPSEntry, enumerate_rps, reference_objective
from rashomon_partitions.verify import random_dataset

SPACE = FeatureSpace((2, 2), single_profile=True)


def entry(rows, q, values):
    sigma = PartitionMatrix((1, 1), rows)
    return RPSEntry((sigma,), (), pools_from_sigma(sigma, SPACE), q, q, tuple(values))


def make_set(*entries):
    return RashomonSet(SPACE, ((1, 1),), list(entries), 1.0, 1.0, 2.0, 0.1)


class TestEffects:
    def test_singleton(self):
        rps = make_set(entry(((1,), (1,)), 0.5, [3.0]))
        np.testing.assert_array_equal(conditional_mean_effects(rps), [3.0] * 4)

    def test_equal_q_average(self):
        rps = make_set(entry(((1,), (1,)), 0.5, [3.0]), entry(((0,), (1,)), 0.5, [1.0, 2.0]))
        np.testing.assert_allclose(conditional_mean_effects(rps), [2.0, 2.0, 2.5, 2.5])

    def test_weights(self):
        rps = make_set(entry(((1,), (1,)), 0.5, [3.0]), entry(((0,), (1,)), 1.5, [1.0, 2.0]))
        np.testing.assert_allclose(rps.weights, posterior_masses([0.5, 1.5]))
        assert rps.weights[0] / rps.weights[1] == pytest.approx(math.e)

    def test_mean_gap_identity(self, rng):
        effects = rng.normal(size=(6, 3))
        q = rng.uniform(0, 2, 6)
        keep = np.array([1, 1, 0, 1, 0, 0], bool)
        cond, restr, kw = mean_effect_gap(effects, q, keep)
        np.testing.assert_allclose(cond - restr, (1 / kw - 1) * restr, rtol=1e-12, atol=1e-15)


class TestBounds:
    def test_formula(self):
        assert approximation_error_bound(2, 4, 0.3) == pytest.approx(0.8)
        assert approximation_error_bound(1, 4, 0.2) == 1.0
        assert approximation_error_bound(2, 4, 0.5) == 0.0

    def test_invalid(self):
        with pytest.raises(ValueError):
            approximation_error_bound(5, 4, 0.3)
        with pytest.raises(ValueError):
            approximation_error_bound(1, 4, 1.5)

    def test_sup_cdf(self):
        full = [(0.0, 0.5), (1.0, 0.5)]
        assert empirical_sup_cdf_error(full, full) == 0.0
        assert empirical_sup_cdf_error(full, [(1.0, 1.0)]) == pytest.approx(0.5)
        assert empirical_sup_cdf_error([(0.0, 1.0)], [(5.0, 1.0)]) == 1.0

    def test_sup_cdf_missing_atom(self):
        full = [(-1.0, 0.1), (0.0, 0.45), (1.0, 0.45)]
        restricted = [(0.0, 0.5), (1.0, 0.5)]
        err = empirical_sup_cdf_error(full, restricted)
        assert err == pytest.approx(0.1)
        assert err <= approximation_error_bound(2, 3, 0.45)

    def test_sup_cdf_validates(self):
        with pytest.raises(ValueError):
            empirical_sup_cdf_error([(0.0, 0.4)], [(0.0, 1.0)])


class TestCate:
    space = FeatureSpace((3, 2))

    def fitted(self, rng):
        d = random_dataset(self.space, rng, n_per_cell=6)
        cfg = LossConfig(lam=0.05)
        q0, _ = reference_objective(self.space, d, cfg)
        return enumerate_rps(self.space, d, cfg, q0, 0.3)

    def test_recomputation(self, rng):
        rps = self.fitted(rng)
        vals = cate(rps, (1,), 1)
        eff = rps.cell_effects()
        it, ic = self.space.index((1, 1)), self.space.index((1, 0))
        for v, e, row in zip(vals.values, rps.entries, eff):
            same = e.partition.pool_index()[(1, 1)] == e.partition.pool_index()[(1, 0)]
            assert v == (0.0 if same else row[it] - row[ic])
        np.testing.assert_array_equal(vals.weights, rps.weights)

    def test_pool_means(self):
        space = FeatureSpace((2,), single_profile=False)
        sig0 = PartitionMatrix((0,), ())
        sig1 = PartitionMatrix((1,), ((),))
        pools = pools_from_sigma(sig0, space).pools + pools_from_sigma(sig1, space).pools
        e = RPSEntry((sig0, sig1), (), Partition(pools), 0.1, 0.1, (3.0, 5.0))
        rps = RashomonSet(space, ((0,), (1,)), [e], 1.0, 0.0, 1.0, 0.1)
        assert cate(rps, (), 0).values.tolist() == [2.0]

    def test_non_binary_treatment(self, rng):
        with pytest.raises(ValueError):
            cate(self.fitted(rng), (1,), 0)


class TestBinning:
    def test_all_zero(self):
        out = effect_binning(WeightedValues(np.zeros(3), np.ones(3) / 3))
        assert out["zero"] == pytest.approx(1.0)

    def test_large_positive(self):
        out = effect_binning(WeightedValues(np.array([2.0]), np.array([1.0])), sd_scale=1.0)
        assert out["large-positive"] == 1.0

    def test_classifier_oracle(self, rng):
        v = rng.normal(size=50)
        v[:5] = 0.0
        w = rng.uniform(size=50)
        out = effect_binning(WeightedValues(v, w))
        sd = np.std(v)
        oracle = dict.fromkeys(BINS, 0.0)
        for x, wt in zip(v, w):
            if x == 0:
                key = "zero"
            elif x < -sd:
                key = "large-negative"
            elif x < 0:
                key = "small-negative"
            elif x <= sd:
                key = "small-positive"
            else:
                key = "large-positive"
            oracle[key] += wt
        for b in BINS:
            assert out[b] == pytest.approx(oracle[b], rel=1e-12)


class TestSummary:
    def test_singleton(self):
        s = rps_summary(make_set(entry(((1,), (1,)), 0.5, [3.0])))
        assert list(s.histogram.values()) == [1.0]
        assert list(s.histogram)[0][2] == 0.0

    def test_two_sizes(self):
        rps = make_set(entry(((1,), (1,)), 0.5, [3.0]), entry(((0,), (0,)), 0.5, [1.0, 2.0, 3.0, 4.0]))
        s = rps_summary(rps)
        assert sorted(s.histogram.values()) == [0.5, 0.5]
        assert {k[0] for k in s.histogram} == {1, 4}

    def test_split_frequency(self):
        rps = make_set(entry(((0,), (1,)), 0.5, [1.0, 2.0]), entry(((0,), (0,)), 0.7, [1.0, 2.0, 3.0, 4.0]))
        s = rps_summary(rps)
        assert s.split_frequency[((1, 1), 0, 1)] == pytest.approx(1.0)
        assert s.split_frequency[((1, 1), 1, 1)] == pytest.approx(rps.weights[1])

    def test_size_curve(self):
        rps = make_set(entry(((1,), (1,)), 1.0, [3.0]), entry(((0,), (0,)), 1.5, [1.0, 2.0, 3.0, 4.0]))
        assert rps_summary(rps).size_curve(1.0, [0.0, 0.6]) == [(0.0, 1), (0.6, 2)]
