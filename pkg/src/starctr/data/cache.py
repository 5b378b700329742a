"""Binary dataset cache reusing the checkpoint container format."""

from __future__ import annotations

import numpy as np

from ..checkpoint import read_container, write_container
from ..errors import CheckpointError
from . import Dataset


def save_dataset_cache(path, ds: Dataset) -> None:
    manifest = {
        "kind": "dataset",
        "field_names": list(ds.field_names),
        "vocab_sizes": list(ds.vocab_sizes),
        "num_domains": ds.num_domains,
    }
    arrays = [
        ("feature_ids", ds.feature_ids),
        ("domain_ids", ds.domain_ids.reshape(-1, 1)),
        ("labels", ds.labels.reshape(-1, 1)),
    ]
    write_container(path, manifest, arrays)


def load_dataset_cache(path) -> Dataset:
    manifest, blobs = read_container(path)
    if manifest.get("kind") != "dataset":
        raise CheckpointError(
            f"{path}: container holds {manifest.get('kind')!r}, not a dataset"
        )
    return Dataset(
        feature_ids=blobs["feature_ids"].astype(np.int64),
        domain_ids=blobs["domain_ids"].reshape(-1).astype(np.int64),
        labels=blobs["labels"].reshape(-1).astype(np.int64),
        field_names=tuple(manifest["field_names"]),
        vocab_sizes=tuple(manifest["vocab_sizes"]),
        num_domains=int(manifest["num_domains"]),
    )
