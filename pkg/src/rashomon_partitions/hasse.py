"""Factorial feature spaces, their Hasse geometry, and permissible partitions.

Feature combinations are tuples of integer levels. In profile mode level 0 of a
feature means "inactive" (control) and the active levels are ``1..R_m - 1``. In
single-profile mode every feature is always active and its levels run
``1..R_m``. Either way, a feature active in a profile has in-profile levels
``1..L_m`` and all formulas in this package are stated in terms of ``L_m``.

Combinations are ordered lexicographically, which is the same order as their
mixed-radix index with feature 0 most significant.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

Combination = tuple[int, ...]
Profile = tuple[int, ...]
Pool = tuple[Combination, ...]

_MAX_UNIVERSE = 2**40


class CoverageError(ValueError):
    """Pools are not a disjoint, exhaustive cover of the declared universe."""


class Ordering(enum.Enum):
    LESS = "less"
    GREATER = "greater"
    EQUAL = "equal"
    INCOMPARABLE = "incomparable"


@dataclass(frozen=True)
class FeatureSpace:
    """Declares ``M`` ordered features and their level counts.

    Parameters
    ----------
    levels : sequence of int
        ``R_m`` for each feature. In profile mode this counts the control
        level, so ``R_m >= 2``; in single-profile mode ``R_m >= 1``.
    single_profile : bool
        When true there is no control level and every feature is active.
    names : sequence of str, optional
        Feature names, used only for reporting and I/O.
    """

    levels: tuple[int, ...]
    single_profile: bool = False
    names: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        levels = tuple(int(r) for r in self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise ValueError("a feature space needs at least one feature")
        floor = 1 if self.single_profile else 2
        for m, r in enumerate(levels):
            if r < floor:
                raise ValueError(f"feature {m} has {r} levels; need at least {floor}")
        size = math.prod(levels)
        if size > _MAX_UNIVERSE:
            raise OverflowError(f"universe of {size} combinations is too large to index")
        if self.names is not None:
            names = tuple(str(n) for n in self.names)
            if len(names) != len(levels):
                raise ValueError("one name per feature is required")
            object.__setattr__(self, "names", names)

    @property
    def num_features(self) -> int:
        return len(self.levels)

    @property
    def size(self) -> int:
        """Number of feature combinations ``|K|``."""
        return math.prod(self.levels)

    @property
    def in_profile_levels(self) -> tuple[int, ...]:
        """``L_m``: number of levels a feature has when active."""
        if self.single_profile:
            return self.levels
        return tuple(r - 1 for r in self.levels)

    @property
    def _offset(self) -> int:
        return 1 if self.single_profile else 0

    def feature_names(self) -> tuple[str, ...]:
        if self.names is not None:
            return self.names
        return tuple(f"x{m}" for m in range(self.num_features))

    def validate(self, k: Sequence[int]) -> Combination:
        k = tuple(int(v) for v in k)
        if len(k) != self.num_features:
            raise ValueError(f"combination {k} has {len(k)} coordinates, expected {self.num_features}")
        lo = self._offset
        for m, (v, r) in enumerate(zip(k, self.levels)):
            if not lo <= v < r + lo:
                raise ValueError(f"level {v} of feature {m} is outside [{lo}, {r + lo - 1}]")
        return k

    def index(self, k: Sequence[int]) -> int:
        """Dense mixed-radix index of a combination."""
        k = self.validate(k)
        idx = 0
        for v, r in zip(k, self.levels):
            idx = idx * r + (v - self._offset)
        return idx

    def combination(self, index: int) -> Combination:
        if not 0 <= index < self.size:
            raise IndexError(index)
        out = []
        for r in reversed(self.levels):
            index, v = divmod(index, r)
            out.append(v + self._offset)
        return tuple(reversed(out))

    def combinations(self) -> Iterator[Combination]:
        lo = self._offset
        return itertools.product(*(range(lo, r + lo) for r in self.levels))

    def level_matrix(self) -> np.ndarray:
        """All combinations as a ``(K, M)`` integer array in index order."""
        lo = self._offset
        grids = np.meshgrid(*(np.arange(lo, r + lo) for r in self.levels), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def profiles(self) -> list[Profile]:
        """All profiles, ordered by number of active features then lexicographically."""
        if self.single_profile:
            return [(1,) * self.num_features]
        every = itertools.product((0, 1), repeat=self.num_features)
        return sorted(every, key=lambda rho: (sum(rho), rho))

    def profile_shape(self, profile: Profile) -> tuple[int, ...]:
        """``L_m`` for each active feature of ``profile``."""
        L = self.in_profile_levels
        return tuple(L[m] for m, on in enumerate(profile) if on)

    def profile_combinations(self, profile: Profile) -> list[Combination]:
        profile = self._check_profile(profile)
        L = self.in_profile_levels
        axes = [range(1, L[m] + 1) if on else (0,) for m, on in enumerate(profile)]
        return list(itertools.product(*axes))

    def profile_indices(self, profile: Profile) -> np.ndarray:
        """Global indices of the profile's combinations, ascending."""
        profile = self._check_profile(profile)
        L = self.in_profile_levels
        lo = self._offset
        axes = [np.arange(1, L[m] + 1) - lo if on else np.array([0]) for m, on in enumerate(profile)]
        grids = np.meshgrid(*axes, indexing="ij")
        idx = np.ravel_multi_index(tuple(g.ravel() for g in grids), self.levels)
        return np.asarray(idx, dtype=np.int64)

    def _check_profile(self, profile: Sequence[int]) -> Profile:
        profile = tuple(int(v) for v in profile)
        if len(profile) != self.num_features or any(v not in (0, 1) for v in profile):
            raise ValueError(f"{profile} is not a profile of this space")
        if self.single_profile and not all(profile):
            raise ValueError("single-profile spaces only have the all-active profile")
        return profile


def _check_same_dim(k: Sequence[int], k2: Sequence[int]) -> None:
    if len(k) != len(k2):
        raise ValueError(f"dimension mismatch: {len(k)} vs {len(k2)}")


def compare(k: Sequence[int], k2: Sequence[int]) -> Ordering:
    """Componentwise partial-order comparison of two combinations."""
    _check_same_dim(k, k2)
    le = all(a <= b for a, b in zip(k, k2))
    ge = all(a >= b for a, b in zip(k, k2))
    if le and ge:
        return Ordering.EQUAL
    if le:
        return Ordering.LESS
    if ge:
        return Ordering.GREATER
    return Ordering.INCOMPARABLE


def is_variant(k: Sequence[int], k2: Sequence[int]) -> bool:
    """True when ``k`` and ``k2`` differ by exactly one level in exactly one feature."""
    _check_same_dim(k, k2)
    return sum(abs(a - b) for a, b in zip(k, k2)) == 1


def profile_of(k: Sequence[int], space: FeatureSpace | None = None) -> Profile:
    if space is not None and space.single_profile:
        raise ValueError("profiles are undefined in single-profile mode")
    return tuple(1 if v > 0 else 0 for v in k)


def _profile_of(k: Combination, space: FeatureSpace) -> Profile:
    if space.single_profile:
        return (1,) * space.num_features
    return tuple(1 if v > 0 else 0 for v in k)


@dataclass(frozen=True)
class PartitionMatrix:
    """Per-profile pool/split decisions between adjacent levels.

    ``rows`` holds one tuple per *active* feature of ``profile`` (in feature
    order) of length ``L_m - 1``; entry ``j`` is 1 when in-profile levels
    ``j + 1`` and ``j + 2`` are pooled and 0 when they are split. Rows of
    features with different level counts are ragged.
    """

    profile: Profile
    rows: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        profile = tuple(int(v) for v in self.profile)
        rows = tuple(tuple(int(v) for v in row) for row in self.rows)
        object.__setattr__(self, "profile", profile)
        object.__setattr__(self, "rows", rows)
        if len(rows) != sum(profile):
            raise ValueError(f"{len(rows)} rows given for a profile with {sum(profile)} active features")
        for row in rows:
            if any(v not in (0, 1) for v in row):
                raise ValueError(f"partition matrix entries must be 0 or 1, got {row}")

    @property
    def shape(self) -> tuple[int, ...]:
        """In-profile level counts ``L_m`` implied by the row lengths."""
        return tuple(len(row) + 1 for row in self.rows)

    @property
    def active_features(self) -> tuple[int, ...]:
        return tuple(m for m, on in enumerate(self.profile) if on)

    def popcounts(self) -> tuple[int, ...]:
        return tuple(sum(row) for row in self.rows)

    def n_pools(self) -> int:
        return math.prod(len(row) + 1 - sum(row) for row in self.rows)

    def check_shape(self, space: FeatureSpace) -> None:
        if len(self.profile) != space.num_features:
            raise ValueError("profile length does not match the feature space")
        expected = space.profile_shape(self.profile)
        if self.shape != expected:
            raise ValueError(f"row lengths {self.shape} do not match in-profile levels {expected}")

    def to_strings(self) -> tuple[str, ...]:
        return tuple("".join(str(v) for v in row) for row in self.rows)

    @classmethod
    def from_strings(cls, profile: Sequence[int], rows: Iterable[str]) -> "PartitionMatrix":
        return cls(tuple(profile), tuple(tuple(int(c) for c in row) for row in rows))

    @classmethod
    def ones(cls, profile: Profile, shape: Sequence[int]) -> "PartitionMatrix":
        return cls(profile, tuple((1,) * (L - 1) for L in shape))

    @classmethod
    def zeros(cls, profile: Profile, shape: Sequence[int]) -> "PartitionMatrix":
        return cls(profile, tuple((0,) * (L - 1) for L in shape))


@dataclass(frozen=True)
class Partition:
    """A canonical set of pools.

    Members of a pool are sorted, and pools are sorted by their minimum
    member, so equal partitions compare and hash equal.
    """

    pools: tuple[Pool, ...]

    def __post_init__(self):
        pools = tuple(sorted(tuple(sorted(tuple(k) for k in pool)) for pool in self.pools))
        if any(len(pool) == 0 for pool in pools):
            raise ValueError("pools must be non-empty")
        object.__setattr__(self, "pools", pools)

    def __len__(self) -> int:
        return len(self.pools)

    def __iter__(self) -> Iterator[Pool]:
        return iter(self.pools)

    def members(self) -> list[Combination]:
        return sorted(k for pool in self.pools for k in pool)

    def pool_index(self) -> dict[Combination, int]:
        return {k: i for i, pool in enumerate(self.pools) for k in pool}

    def restrict(self, keep: Iterable[Combination]) -> "Partition":
        """Induced partition on a subset of combinations."""
        keep = set(keep)
        pieces = [tuple(k for k in pool if k in keep) for pool in self.pools]
        return Partition(tuple(p for p in pieces if p))

    def as_sets(self) -> frozenset[frozenset[Combination]]:
        return frozenset(frozenset(pool) for pool in self.pools)


def _groups(row: Sequence[int]) -> list[int]:
    """Group id of each in-profile level (0-based) for one matrix row."""
    groups = [0]
    for v in row:
        groups.append(groups[-1] + (1 - v))
    return groups


def sigma_labels(sigma: PartitionMatrix) -> np.ndarray:
    """Pool label of each profile combination, in ascending combination order.

    Labels are the mixed-radix index of the per-feature group ids, which makes
    them increase with the minimum member of each pool.
    """
    label = np.zeros(1, dtype=np.int64)
    for row in sigma.rows:
        g = np.asarray(_groups(row), dtype=np.int64)
        label = (label[:, None] * (g[-1] + 1) + g[None, :]).ravel()
    return label


def pools_from_sigma(sigma: PartitionMatrix, space: FeatureSpace | None = None) -> Partition:
    """The within-profile partition encoded by a partition matrix."""
    if space is not None:
        sigma.check_shape(space)
    shape = sigma.shape
    active = sigma.active_features
    groups = [_groups(row) for row in sigma.rows]
    buckets: dict[tuple[int, ...], list[Combination]] = {}
    for levels in itertools.product(*(range(1, L + 1) for L in shape)):
        k = [0] * len(sigma.profile)
        for m, v in zip(active, levels):
            k[m] = v
        key = tuple(g[v - 1] for g, v in zip(groups, levels))
        buckets.setdefault(key, []).append(tuple(k))
    return Partition(tuple(tuple(v) for v in buckets.values()))


def count_pools_inclusion_exclusion(sigma: PartitionMatrix) -> int:
    """Pool count from row popcounts by inclusion-exclusion.

    Expands ``prod_i (L_i - z_i)`` as the alternating sum over feature subsets
    of ``prod_{i in S} z_i * prod_{i not in S} L_i``.
    """
    L = sigma.shape
    z = sigma.popcounts()
    m = len(L)
    total = 0
    for size in range(m + 1):
        for subset in itertools.combinations(range(m), size):
            term = math.prod(z[i] for i in subset) * math.prod(L[i] for i in range(m) if i not in subset)
            total += (-1) ** size * term
    return total


def all_sigmas(profile: Profile, shape: Sequence[int]) -> Iterator[PartitionMatrix]:
    """Every partition matrix of a profile, in lexicographic bit order."""
    widths = [L - 1 for L in shape]
    for bits in itertools.product((0, 1), repeat=sum(widths)):
        rows, pos = [], 0
        for w in widths:
            rows.append(bits[pos:pos + w])
            pos += w
        yield PartitionMatrix(profile, tuple(rows))


@dataclass(frozen=True)
class PermissibilityResult:
    """Outcome of a permissibility check with the failing rule and witnesses."""

    ok: bool
    rule: str | None = None
    witnesses: tuple = ()
    message: str = ""

    def __bool__(self) -> bool:
        return self.ok


_OK = PermissibilityResult(True)


def _check_cover(p: Partition, universe: Iterable[Combination]) -> None:
    universe = set(universe)
    seen: set[Combination] = set()
    for pool in p.pools:
        for k in pool:
            if k in seen:
                raise CoverageError(f"combination {k} appears in more than one pool")
            seen.add(k)
    if seen != universe:
        missing = sorted(universe - seen)[:3]
        extra = sorted(seen - universe)[:3]
        raise CoverageError(f"pools do not cover the universe exactly (missing {missing}, extra {extra})")


def _box(lo: Combination, hi: Combination) -> set[Combination]:
    return set(itertools.product(*(range(a, b + 1) for a, b in zip(lo, hi))))


def _meet(a: Combination, b: Combination, fn) -> Combination:
    return tuple(fn(x, y) for x, y in zip(a, b))


def _profile_rules(pools: Sequence[Pool]) -> PermissibilityResult:
    mins, maxs = [], []
    for pool in pools:
        members = set(pool)
        lo = _meet(pool[0], pool[0], min)
        hi = lo
        for k in pool:
            lo = _meet(lo, k, min)
            hi = _meet(hi, k, max)
        # unique min/max plus strong convexity means the pool is the full box
        if lo not in members or hi not in members or _box(lo, hi) != members:
            return PermissibilityResult(False, "strong-convexity", (pool,),
                                        f"pool starting at {pool[0]} is not a convex box")
        mins.append(lo)
        maxs.append(hi)
    min_set, max_set = set(mins), set(maxs)
    for i, j in itertools.combinations(range(len(pools)), 2):
        if compare(mins[i], mins[j]) is Ordering.INCOMPARABLE:
            join = _meet(mins[i], mins[j], max)
            if join not in min_set:
                return PermissibilityResult(False, "parallel-splits", (pools[i], pools[j]),
                                            f"no pool has minimum {join}")
        if compare(maxs[i], maxs[j]) is Ordering.INCOMPARABLE:
            meet = _meet(maxs[i], maxs[j], min)
            if meet not in max_set:
                return PermissibilityResult(False, "parallel-splits", (pools[i], pools[j]),
                                            f"no pool has maximum {meet}")
    return _OK


def sigma_from_partition(p: Partition, profile: Profile, space: FeatureSpace) -> PartitionMatrix:
    """Read off pool/split decisions from a partition of one profile.

    Entry ``(m, j)`` is 1 when every pair of combinations straddling levels
    ``j + 1`` and ``j + 2`` of feature ``m`` share a pool. The result encodes
    ``p`` only if ``p`` is permissible.
    """
    where = p.pool_index()
    L = space.in_profile_levels
    rows = []
    combos = space.profile_combinations(profile)
    for m, on in enumerate(profile):
        if not on:
            continue
        row = []
        for j in range(1, L[m]):
            pooled = all(where[k] == where[k[:m] + (j + 1,) + k[m + 1:]] for k in combos if k[m] == j)
            row.append(1 if pooled else 0)
        rows.append(tuple(row))
    return PartitionMatrix(profile, tuple(rows))


def check_profile_partition(p: Partition, profile: Profile, space: FeatureSpace,
                            method: str = "rules") -> PermissibilityResult:
    """Check a within-profile partition for permissibility.

    ``method="rules"`` applies the pool, strong convexity and parallel-split
    rules directly; ``method="sigma"`` tests whether ``p`` is produced by some
    partition matrix. Both must agree.

    Raises
    ------
    CoverageError
        If ``p`` is not a disjoint cover of the profile's combinations.
    """
    profile = space._check_profile(profile)
    _check_cover(p, space.profile_combinations(profile))
    if method == "rules":
        return _profile_rules(p.pools)
    if method == "sigma":
        sigma = sigma_from_partition(p, profile, space)
        if pools_from_sigma(sigma) == p:
            return _OK
        return PermissibilityResult(False, "parallel-splits", (),
                                    "partition is not generated by any partition matrix")
    raise ValueError(f"unknown method {method!r}")


def is_permissible_profile_partition(p: Partition, profile: Profile, space: FeatureSpace,
                                     method: str = "rules") -> bool:
    return check_profile_partition(p, profile, space, method).ok


def hypercube_adjacent(rho1: Profile, rho2: Profile) -> bool:
    return sum(a != b for a, b in zip(rho1, rho2)) == 1


def _connected(nodes: set, adjacent) -> bool:
    nodes = set(nodes)
    if not nodes:
        return True
    start = next(iter(nodes))
    stack, seen = [start], {start}
    while stack:
        u = stack.pop()
        for v in nodes:
            if v not in seen and adjacent(u, v):
                seen.add(v)
                stack.append(v)
    return seen == nodes


def check_global_partition(p: Partition, space: FeatureSpace,
                           universe: Iterable[Combination] | None = None) -> PermissibilityResult:
    """Check a partition of the whole space (or of ``universe``) for permissibility.

    A pool may span profiles. The rules are: (1) the partition induced on each
    profile is permissible; (2) for every pair of hypercube-adjacent profiles a
    pool touches, its pieces in those profiles contain a variant pair; (3) the
    profiles a pool touches form a connected subgraph of the hypercube.
    """
    if universe is None:
        universe = list(space.combinations())
    universe = list(universe)
    _check_cover(p, universe)
    present = sorted({_profile_of(k, space) for k in universe})
    for rho in present:
        members = [k for k in universe if _profile_of(k, space) == rho]
        induced = p.restrict(members)
        result = _profile_rules(induced.pools)
        if not result.ok:
            return result
    for pool in p.pools:
        pieces: dict[Profile, list[Combination]] = {}
        for k in pool:
            pieces.setdefault(_profile_of(k, space), []).append(k)
        if len(pieces) == 1:
            continue
        rhos = list(pieces)
        if not _connected(set(rhos), hypercube_adjacent):
            return PermissibilityResult(False, "profile-connectivity", (pool,),
                                        f"profiles {sorted(rhos)} are not connected on the hypercube")
        for r1, r2 in itertools.combinations(rhos, 2):
            if not hypercube_adjacent(r1, r2):
                continue
            if not any(is_variant(a, b) for a in pieces[r1] for b in pieces[r2]):
                return PermissibilityResult(False, "cross-profile-variant", (pool,),
                                            f"pieces in {r1} and {r2} share no variant pair")
    return _OK


def is_permissible_global(p: Partition, space: FeatureSpace,
                          universe: Iterable[Combination] | None = None) -> bool:
    return check_global_partition(p, space, universe).ok


@dataclass(frozen=True)
class EdgeClass:
    """All parallel Hasse edges between levels ``level`` and ``level + 1`` of ``feature``."""

    feature: int
    level: int
    edges: tuple[tuple[Combination, Combination], ...]


def edge_classes(profile: Profile, space: FeatureSpace) -> list[EdgeClass]:
    profile = space._check_profile(profile)
    if not any(profile):
        raise ValueError("the control profile has no Hasse edges")
    L = space.in_profile_levels
    combos = space.profile_combinations(profile)
    out = []
    for m, on in enumerate(profile):
        if not on:
            continue
        for r in range(1, L[m]):
            edges = tuple((k, k[:m] + (r + 1,) + k[m + 1:]) for k in combos if k[m] == r)
            out.append(EdgeClass(m, r, edges))
    return out


def partition_from_labels(combos: Sequence[Combination], labels: Sequence[int]) -> Partition:
    buckets: dict[int, list[Combination]] = {}
    for k, lab in zip(combos, labels):
        buckets.setdefault(int(lab), []).append(tuple(k))
    return Partition(tuple(tuple(v) for v in buckets.values()))
