"""Deterministic mini-batch sequencing.

The default strategy emits domain-homogeneous batches: each batch is
drawn from a single domain's shuffled pool, and the pool to draw from is
chosen with probability proportional to its remaining size, so over an
epoch every example appears exactly once and batch counts track domain
shares.  The mixed strategy is a plain shuffled split.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ..errors import ConfigError
from . import Batch, Dataset

log = logging.getLogger(__name__)

STRATEGIES = ("domain_homogeneous", "mixed")


@dataclass(frozen=True)
class BatchPlan:
    batch_size: int = 2000
    strategy: str = "domain_homogeneous"
    seed: int = 0
    batches_per_epoch: int | None = None

    def validate(self) -> None:
        if self.batch_size < 2:
            raise ConfigError(
                f"batch_size must be >= 2 (normalization needs two rows), got "
                f"{self.batch_size}"
            )
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown batching strategy {self.strategy!r}")
        if self.batches_per_epoch is not None and self.batches_per_epoch < 1:
            raise ConfigError(
                f"batches_per_epoch must be >= 1, got {self.batches_per_epoch}"
            )

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "strategy": self.strategy,
            "seed": self.seed,
            "batches_per_epoch": self.batches_per_epoch,
        }

    @staticmethod
    def from_dict(d: dict) -> "BatchPlan":
        plan = BatchPlan(
            batch_size=int(d.get("batch_size", 2000)),
            strategy=str(d.get("strategy", "domain_homogeneous")),
            seed=int(d.get("seed", 0)),
            batches_per_epoch=(
                None if d.get("batches_per_epoch") is None
                else int(d["batches_per_epoch"])
            ),
        )
        plan.validate()
        return plan


def _emit(ds: Dataset, rows: np.ndarray) -> Batch:
    return Batch(ds.feature_ids[rows], ds.domain_ids[rows], ds.labels[rows])


def batches(
    ds: Dataset, plan: BatchPlan, epoch: int = 0, training: bool = True
) -> Iterator[Batch]:
    """Yield one epoch of batches; identical (plan, epoch) gives an identical sequence."""
    plan.validate()
    if len(ds) == 0:
        raise ConfigError("cannot batch an empty dataset")
    rng = np.random.default_rng([plan.seed, epoch])
    emitted = 0
    if plan.strategy == "mixed":
        perm = rng.permutation(len(ds))
        for start in range(0, len(perm), plan.batch_size):
            rows = perm[start : start + plan.batch_size]
            if training and rows.size < 2:
                log.warning("skipping %d-row tail batch in training mode", rows.size)
                continue
            yield _emit(ds, rows)
            emitted += 1
            if plan.batches_per_epoch is not None and emitted >= plan.batches_per_epoch:
                return
        return

    pools = [
        rng.permutation(np.nonzero(ds.domain_ids == d)[0])
        for d in range(ds.num_domains)
    ]
    cursors = [0] * ds.num_domains
    remaining = np.array([p.size for p in pools], dtype=np.float64)
    while remaining.sum() > 0:
        u = rng.random() * remaining.sum()
        d = int(np.searchsorted(np.cumsum(remaining), u, side="right"))
        take = min(plan.batch_size, int(remaining[d]))
        rows = pools[d][cursors[d] : cursors[d] + take]
        cursors[d] += take
        remaining[d] -= take
        if training and take < 2:
            log.warning(
                "skipping %d-row batch from domain %d in training mode", take, d
            )
            continue
        yield _emit(ds, rows)
        emitted += 1
        if plan.batches_per_epoch is not None and emitted >= plan.batches_per_epoch:
            return
