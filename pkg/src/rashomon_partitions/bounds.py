"""Within-profile objective evaluation and branch-and-bound lower bounds.

A search node is a partition matrix together with a set of *fixed* entries.
Descendants keep the fixed entries and may change the others. Setting every
free entry to 0 gives the finest descendant and setting every free entry to 1
gives the coarsest, so

* the loss of the finest descendant lower-bounds every descendant's loss, and
* the penalty of the coarsest descendant lower-bounds every descendant's penalty.

The fixed bound counts only the pools of the finest descendant whose borders
are all fixed (these pools appear unchanged in every descendant); the
equivalent-points bound adds the loss the remaining pools cannot avoid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .hasse import PartitionMatrix, Profile, _groups, sigma_labels
from .loss import Dataset, LossConfig, LossEvaluator, Penalty

Position = tuple[int, int]


@dataclass(frozen=True)
class FixedIndexSet:
    """Fixed partition-matrix entries as ``(row, gap)`` pairs (0-based).

    ``row`` indexes the active features of the profile in order and ``gap``
    indexes the entry between in-profile levels ``gap + 1`` and ``gap + 2``.
    """

    positions: frozenset[Position]

    def __init__(self, positions: Iterable[Position] = ()):
        object.__setattr__(self, "positions", frozenset((int(r), int(c)) for r, c in positions))

    def __contains__(self, pos) -> bool:
        return tuple(pos) in self.positions

    def check(self, sigma: PartitionMatrix) -> None:
        for r, c in self.positions:
            if not (0 <= r < len(sigma.rows) and 0 <= c < len(sigma.rows[r])):
                raise ValueError(f"fixed index {(r, c)} is outside the partition matrix")

    @classmethod
    def all_of(cls, sigma: PartitionMatrix) -> "FixedIndexSet":
        return cls((r, c) for r, row in enumerate(sigma.rows) for c in range(len(row)))

    def finest(self, sigma: PartitionMatrix) -> PartitionMatrix:
        """Free entries set to 0."""
        rows = tuple(tuple(v if (r, c) in self.positions else 0 for c, v in enumerate(row))
                     for r, row in enumerate(sigma.rows))
        return PartitionMatrix(sigma.profile, rows)

    def coarsest(self, sigma: PartitionMatrix) -> PartitionMatrix:
        """Free entries set to 1."""
        rows = tuple(tuple(v if (r, c) in self.positions else 1 for c, v in enumerate(row))
                     for r, row in enumerate(sigma.rows))
        return PartitionMatrix(sigma.profile, rows)


@dataclass(frozen=True)
class ProfileFit:
    """Objective pieces of one partition matrix."""

    sigma: PartitionMatrix
    pool_sse: np.ndarray
    loss: float
    penalty: float
    q: float

    @property
    def n_pools(self) -> int:
        return len(self.pool_sse)


@dataclass(frozen=True)
class NodeBound:
    fixed: float
    equivalent: float
    total: float
    coarsest_pools: int


class ProfileObjective:
    """Evaluates partition matrices of one profile against a dataset.

    Losses are normalized by the size of the whole dataset so per-profile
    objectives add up to the global one.
    """

    def __init__(self, profile: Profile, evaluator: LossEvaluator):
        space = evaluator.data.space
        self.profile = space._check_profile(profile)
        self.space = space
        self.evaluator = evaluator
        self.cfg = evaluator.cfg
        self.shape = space.profile_shape(self.profile)
        self.cells = space.profile_indices(self.profile)
        self.widths = tuple(L - 1 for L in self.shape)
        self.n_obs = int(evaluator.data.counts[self.cells].sum())

    def _penalty(self, labels: np.ndarray, n_labels: int) -> float:
        if self.cfg.penalty is Penalty.POOL_COUNT:
            return float(n_labels)
        sizes = np.bincount(labels, minlength=n_labels)
        return self.cfg.penalty_value(sizes.tolist(), len(self.cells))

    def evaluate(self, sigma: PartitionMatrix) -> ProfileFit:
        labels = sigma_labels(sigma)
        n_labels = sigma.n_pools()
        sse = self.evaluator.pool_sse(self.cells, labels, n_labels)
        loss = self.evaluator.loss_from_sse(sse)
        pen = self._penalty(labels, n_labels)
        return ProfileFit(sigma, sse, loss, pen, loss + self.cfg.lam * pen)

    def floor(self) -> float:
        """Loss no partition of this profile can go below (within-cell error)."""
        return self.evaluator.cell_floor(self.cells) / self.evaluator.n

    def node_bound(self, sigma: PartitionMatrix, fixed: FixedIndexSet) -> NodeBound:
        fine = fixed.finest(sigma)
        coarse = fixed.coarsest(sigma)
        labels = sigma_labels(fine)
        n_labels = fine.n_pools()
        sse = self.evaluator.pool_sse(self.cells, labels, n_labels)
        closed = self._closed_pools(fine, fixed)
        coarse_labels = sigma_labels(coarse)
        pen = self._penalty(coarse_labels, coarse.n_pools())
        fixed_part = self.evaluator.loss_from_sse(sse[closed]) + self.cfg.lam * pen
        equivalent = self.evaluator.loss_from_sse(sse[~closed])
        total = self.evaluator.loss_from_sse(sse) + self.cfg.lam * pen
        return NodeBound(fixed_part, equivalent, total, coarse.n_pools())

    @staticmethod
    def _closed_pools(fine: PartitionMatrix, fixed: FixedIndexSet) -> np.ndarray:
        """Pools of ``fine`` whose every border entry is fixed."""
        closed = np.ones(1, dtype=bool)
        for r, row in enumerate(fine.rows):
            groups = _groups(row)
            n_groups = groups[-1] + 1
            ok = np.ones(n_groups, dtype=bool)
            for c in range(len(row)):
                if (r, c) not in fixed:
                    # a free entry borders the groups on both of its sides
                    ok[groups[c]] = False
                    ok[groups[c + 1]] = False
            closed = (closed[:, None] & ok[None, :]).ravel()
        return closed


def _objective(sigma: PartitionMatrix, d: Dataset, cfg: LossConfig) -> ProfileObjective:
    sigma.check_shape(d.space)
    return ProfileObjective(sigma.profile, LossEvaluator(d, cfg))


def fixed_bound(sigma: PartitionMatrix, fixed: FixedIndexSet, d: Dataset, cfg: LossConfig) -> float:
    """Loss of the pools already closed off by fixed entries plus the least possible penalty."""
    fixed.check(sigma)
    return _objective(sigma, d, cfg).node_bound(sigma, fixed).fixed


def equivalent_bound(sigma: PartitionMatrix, fixed: FixedIndexSet, d: Dataset,
                     cfg: LossConfig | None = None) -> float:
    """Unavoidable loss of the combinations outside the closed-off pools."""
    fixed.check(sigma)
    return _objective(sigma, d, cfg or LossConfig()).node_bound(sigma, fixed).equivalent


def combined_bound(sigma: PartitionMatrix, fixed: FixedIndexSet, d: Dataset, cfg: LossConfig) -> float:
    """Lower bound on ``Q`` of every matrix agreeing with ``sigma`` on ``fixed``."""
    fixed.check(sigma)
    return _objective(sigma, d, cfg).node_bound(sigma, fixed).total
