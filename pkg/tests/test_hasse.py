import itertools

import numpy as np
import pytest
from more_itertools import set_partitions

from rashomon_partitions.hasse import (
    CoverageError, FeatureSpace, Ordering, Partition, PartitionMatrix, all_sigmas, check_global_partition,
    check_profile_partition, compare, count_pools_inclusion_exclusion, edge_classes, is_permissible_global,
    is_permissible_profile_partition, is_variant, pools_from_sigma, profile_of, sigma_from_partition,
    sigma_labels)


def P(*pools):
    return Partition(tuple(tuple(p) for p in pools))


def box(a_levels, b_levels):
    return [(a, b) for a in a_levels for b in b_levels]


SPACE_33 = FeatureSpace((3, 3), single_profile=True)


class TestOrder:
    def test_compare(self):
        assert compare((1, 2), (1, 2)) is Ordering.EQUAL
        assert compare((1, 1), (2, 2)) is Ordering.LESS
        assert compare((2, 2), (1, 1)) is Ordering.GREATER
        assert compare((1, 2), (2, 1)) is Ordering.INCOMPARABLE

    def test_compare_dimension_mismatch(self):
        with pytest.raises(ValueError):
            compare((1, 2), (1, 2, 3))

    def test_variant(self):
        assert is_variant((1, 1), (1, 2))
        assert not is_variant((1, 1), (2, 2))
        assert not is_variant((1, 1), (1, 3))
        assert not is_variant((1, 1), (1, 1))

    def test_profile_of(self):
        assert profile_of((0, 0)) == (0, 0)
        assert profile_of((2, 0)) == (1, 0)
        assert profile_of((1, 3)) == (1, 1)

    def test_profile_of_needs_profile_mode(self):
        with pytest.raises(ValueError):
            profile_of((1, 1), SPACE_33)


class TestFeatureSpace:
    def test_index_roundtrip(self):
        space = FeatureSpace((3, 2, 4))
        for i, k in enumerate(space.combinations()):
            assert space.index(k) == i
            assert space.combination(i) == k

    def test_first_feature_most_significant(self):
        space = FeatureSpace((3, 3), single_profile=True)
        assert space.index((1, 2)) == 1
        assert space.index((2, 1)) == 3

    def test_profiles_order(self):
        space = FeatureSpace((2, 2, 2))
        assert space.profiles() == [(0, 0, 0), (0, 0, 1), (0, 1, 0), (1, 0, 0),
                                    (0, 1, 1), (1, 0, 1), (1, 1, 0), (1, 1, 1)]

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            SPACE_33.validate((0, 1))
        with pytest.raises(ValueError):
            FeatureSpace((3, 3)).validate((3, 0))


class TestPoolsFromSigma:
    def test_mixed_splits_four_pools(self):
        got = pools_from_sigma(PartitionMatrix((1, 1), ((0, 1), (1, 0))), SPACE_33)
        want = P([(1, 1), (1, 2)], [(1, 3)], [(2, 1), (2, 2), (3, 1), (3, 2)], [(2, 3), (3, 3)])
        assert got == want
        assert len(got) == 4

    def test_row_split_two_pools(self):
        got = pools_from_sigma(PartitionMatrix((1, 1), ((1, 0), (1, 1))), SPACE_33)
        assert got == P(box([1, 2], [1, 2, 3]), box([3], [1, 2, 3]))

    def test_five_by_three_six_pools(self):
        space = FeatureSpace((5, 3), single_profile=True)
        got = pools_from_sigma(PartitionMatrix((1, 1), ((1, 0, 1, 0), (1, 0))), space)
        want = P(box([1, 2], [1, 2]), box([1, 2], [3]), box([3, 4], [1, 2]), box([3, 4], [3]),
                 box([5], [1, 2]), [(5, 3)])
        assert got == want

    def test_profile_mode_levels(self):
        space = FeatureSpace((3, 3))
        got = pools_from_sigma(PartitionMatrix((1, 0), ((1,),)), space)
        assert got == P([(1, 0), (2, 0)])

    def test_labels_dense_ascending(self):
        labels = sigma_labels(PartitionMatrix((1, 1), ((0, 1), (1, 0))))
        assert labels.tolist() == [0, 0, 1, 2, 2, 3, 2, 2, 3]

    def test_malformed_sigma(self):
        with pytest.raises(ValueError):
            PartitionMatrix((1, 1), ((0, 2), (1, 0)))
        with pytest.raises(ValueError):
            PartitionMatrix((1, 1), ((0, 1),))

    def test_inclusion_exclusion_examples(self):
        sigma = PartitionMatrix((1, 1), ((0, 1), (1, 0)))
        assert count_pools_inclusion_exclusion(sigma) == 4
        assert count_pools_inclusion_exclusion(PartitionMatrix.ones((1, 1), (3, 4))) == 1
        assert count_pools_inclusion_exclusion(PartitionMatrix.zeros((1, 1, 1), (3, 4, 2))) == 24

    def test_string_roundtrip(self):
        sigma = PartitionMatrix((1, 0, 1), ((0, 1, 1), (1,)))
        assert PartitionMatrix.from_strings((1, 0, 1), sigma.to_strings()) == sigma


class TestProfilePermissibility:
    def test_mixed_splits_permissible(self):
        p = pools_from_sigma(PartitionMatrix((1, 1), ((0, 1), (1, 0))), SPACE_33)
        assert is_permissible_profile_partition(p, (1, 1), SPACE_33)

    def test_misaligned_splits_rejected_by_parallel_splits(self):
        p = P([(1, 1), (1, 2), (1, 3)], [(2, 1), (2, 2)], [(3, 1), (3, 2)], [(2, 3), (3, 3)])
        res = check_profile_partition(p, (1, 1), SPACE_33)
        assert not res.ok
        assert res.rule == "parallel-splits"
        assert not check_profile_partition(p, (1, 1), SPACE_33, method="sigma").ok

    def test_single_pool(self):
        assert is_permissible_profile_partition(P(box([1, 2, 3], [1, 2, 3])), (1, 1), SPACE_33)

    def test_nonconvex_pool(self):
        p = P([(1, 1), (1, 3)], [(1, 2)], box([2, 3], [1, 2, 3]))
        res = check_profile_partition(p, (1, 1), SPACE_33)
        assert not res.ok and res.rule == "strong-convexity"

    def test_coverage_error(self):
        with pytest.raises(CoverageError):
            check_profile_partition(P([(1, 1)]), (1, 1), SPACE_33)

    def test_rules_agree_with_sigma_route(self):
        cells = SPACE_33.profile_combinations((1, 1))
        for blocks in set_partitions(cells):
            p = Partition(tuple(tuple(b) for b in blocks))
            rules = check_profile_partition(p, (1, 1), SPACE_33).ok
            assert rules == check_profile_partition(p, (1, 1), SPACE_33, method="sigma").ok

    def test_sigma_recovered(self):
        for sigma in all_sigmas((1, 1), (3, 2)):
            space = FeatureSpace((3, 2), single_profile=True)
            assert sigma_from_partition(pools_from_sigma(sigma, space), (1, 1), space) == sigma


class TestGlobalPermissibility:
    space = FeatureSpace((2, 2))

    def test_fully_split(self):
        p = P(*[[k] for k in self.space.combinations()])
        assert is_permissible_global(p, self.space)

    def test_pool_without_variant_pair(self):
        p = P([(1, 0), (0, 1)], [(0, 0)], [(1, 1)])
        assert not is_permissible_global(p, self.space)

    def test_pool_across_adjacent_profiles(self):
        p = P([(1, 0), (1, 1)], [(0, 0)], [(0, 1)])
        assert is_permissible_global(p, self.space)

    def test_pool_over_disconnected_profiles(self):
        p = P([(0, 0), (1, 1)], [(1, 0)], [(0, 1)])
        res = check_global_partition(p, self.space)
        assert not res.ok


class TestEdgeClasses:
    def test_one_feature(self):
        space = FeatureSpace((3,), single_profile=True)
        classes = edge_classes((1,), space)
        assert len(classes) == 2 and all(len(c.edges) == 1 for c in classes)

    def test_two_features(self):
        classes = edge_classes((1, 1), SPACE_33)
        assert len(classes) == 4 and all(len(c.edges) == 3 for c in classes)
        space = FeatureSpace((2, 2), single_profile=True)
        classes = edge_classes((1, 1), space)
        assert len(classes) == 2 and all(len(c.edges) == 2 for c in classes)


@pytest.mark.parametrize("shape", [(1,), (2,), (4,), (2, 3), (3, 3), (2, 2, 2)])
def test_sigma_bijection(shape):
    space = FeatureSpace(shape, single_profile=True)
    rho = (1,) * len(shape)
    parts = [pools_from_sigma(s, space) for s in all_sigmas(rho, shape)]
    assert len(set(parts)) == len(parts) == 2 ** sum(L - 1 for L in shape)
    assert all(is_permissible_profile_partition(p, rho, space) for p in parts)


def test_pool_count_matches_inclusion_exclusion_exhaustively():
    for m in (1, 2):
        for shape in itertools.product(range(1, 5), repeat=m):
            for sigma in all_sigmas((1,) * m, shape):
                assert count_pools_inclusion_exclusion(sigma) == len(pools_from_sigma(sigma)) == sigma.n_pools()
