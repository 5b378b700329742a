"""Multi-domain datasets: containers, synthesis, ingestion, batching."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError


@dataclass(frozen=True)
class Batch:
    """One mini-batch of categorical feature ids, domain ids, and labels."""

    feature_ids: np.ndarray  # (B, F) int64
    domain_ids: np.ndarray   # (B,) int64
    labels: np.ndarray       # (B,) int64 in {0, 1}

    def __len__(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class Dataset:
    feature_ids: np.ndarray  # (n, F) int64
    domain_ids: np.ndarray   # (n,) int64
    labels: np.ndarray       # (n,) int64 in {0, 1}
    field_names: tuple[str, ...]
    vocab_sizes: tuple[int, ...]
    num_domains: int

    def __post_init__(self) -> None:
        n = self.feature_ids.shape[0]
        if self.domain_ids.shape != (n,) or self.labels.shape != (n,):
            raise ValidationError(
                f"misaligned dataset arrays: features {self.feature_ids.shape}, "
                f"domains {self.domain_ids.shape}, labels {self.labels.shape}"
            )
        if self.feature_ids.shape[1] != len(self.field_names):
            raise ValidationError(
                f"{self.feature_ids.shape[1]} feature columns but "
                f"{len(self.field_names)} field names"
            )

    def __len__(self) -> int:
        return self.labels.shape[0]

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(
            self.feature_ids[idx], self.domain_ids[idx], self.labels[idx],
            self.field_names, self.vocab_sizes, self.num_domains,
        )

    def domain_counts(self) -> np.ndarray:
        return np.bincount(self.domain_ids, minlength=self.num_domains)


def split_dataset(ds: Dataset, valid_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic shuffled train/valid split."""
    if not 0.0 < valid_fraction < 1.0:
        raise ValidationError(f"valid_fraction must be in (0, 1), got {valid_fraction}")
    rng = np.random.default_rng([seed, 0x5B11])
    perm = rng.permutation(len(ds))
    n_valid = max(1, int(round(len(ds) * valid_fraction)))
    if n_valid >= len(ds):
        raise ValidationError(
            f"validation split of {n_valid} rows leaves no training data (n={len(ds)})"
        )
    return ds.subset(perm[n_valid:]), ds.subset(perm[:n_valid])


from .batching import BatchPlan, batches  # noqa: E402
from .csvio import ColumnSpec, CsvSchema, export_csv, ingest_csv  # noqa: E402
from .synthetic import PRESETS, SyntheticSpec, generate  # noqa: E402

__all__ = [
    "Batch",
    "BatchPlan",
    "ColumnSpec",
    "CsvSchema",
    "Dataset",
    "PRESETS",
    "SyntheticSpec",
    "batches",
    "export_csv",
    "generate",
    "ingest_csv",
    "split_dataset",
]
