"""Single-file checkpoint format: a text manifest plus binary blobs.

Layout::

    line 1: "<FORMAT_TAG> <format version>"
    line 2: byte length of the JSON manifest
    manifest: compact JSON (sorted keys) followed by one newline
    blobs:   raw little-endian arrays, concatenated in manifest order

Parameter blobs are always little-endian float64; the same container
carries int64 blobs for dataset caches.  Round trips are bit exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import ModelConfig, MultiDomainModel, build_model

FORMAT_TAG = "mdctr-ckpt"
FORMAT_VERSION = 1
SPEC_VERSION = "1.0"

_DTYPES = {"<f8": np.dtype("<f8"), "<i8": np.dtype("<i8")}


def write_container(path, manifest: dict, arrays: list[tuple[str, np.ndarray]]) -> None:
    entries = []
    for name, arr in arrays:
        if arr.ndim != 2:
            raise CheckpointError(f"blob {name!r} must be 2-D, got shape {arr.shape}")
        dtype = "<f8" if arr.dtype.kind == "f" else "<i8"
        entries.append({"name": name, "rows": arr.shape[0], "cols": arr.shape[1],
                        "dtype": dtype})
    manifest = dict(manifest)
    manifest["blobs"] = entries
    body = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(f"{FORMAT_TAG} {FORMAT_VERSION}\n".encode())
        fh.write(f"{len(body)}\n".encode())
        fh.write(body)
        fh.write(b"\n")
        for (name, arr), entry in zip(arrays, entries):
            fh.write(np.ascontiguousarray(arr, dtype=_DTYPES[entry["dtype"]]).tobytes())


def read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    try:
        header_end = raw.index(b"\n")
        tag, version = raw[:header_end].decode().split()
        if tag != FORMAT_TAG:
            raise CheckpointError(f"{path}: not a checkpoint (format tag {tag!r})")
        if int(version) != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        len_end = raw.index(b"\n", header_end + 1)
        manifest_len = int(raw[header_end + 1 : len_end].decode())
        manifest_start = len_end + 1
        manifest = json.loads(raw[manifest_start : manifest_start + manifest_len])
        offset = manifest_start + manifest_len + 1
    except (ValueError, KeyError) as e:
        raise CheckpointError(f"{path}: malformed checkpoint header: {e}") from e
    blobs: dict[str, np.ndarray] = {}
    for entry in manifest["blobs"]:
        dtype = _DTYPES[entry["dtype"]]
        count = entry["rows"] * entry["cols"]
        nbytes = count * dtype.itemsize
        chunk = raw[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(
                f"{path}: truncated blob {entry['name']!r} "
                f"(wanted {nbytes} bytes, got {len(chunk)})"
            )
        blobs[entry["name"]] = np.frombuffer(chunk, dtype=dtype).reshape(
            entry["rows"], entry["cols"]
        ).copy()
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return manifest, blobs


def save_checkpoint(path, model: MultiDomainModel) -> None:
    arrays: list[tuple[str, np.ndarray]] = [
        (f"param/{p.name}", p.value) for p in model.store
    ]
    for buf_name in ("running_mean", "running_var"):
        buf = getattr(model.norm, buf_name)
        if buf is not None:
            arrays.append((f"buffer/{buf_name}", buf))
    manifest = {
        "kind": "model",
        "spec_version": SPEC_VERSION,
        "config": model.config.to_dict(),
        "mode": "training" if model.training else "inference",
    }
    write_container(path, manifest, arrays)


def load_checkpoint(path, expected_config: ModelConfig | None = None) -> MultiDomainModel:
    """Rebuild the model; always starts in inference mode."""
    manifest, blobs = read_container(path)
    if manifest.get("kind") != "model":
        raise CheckpointError(f"{path}: container holds {manifest.get('kind')!r}, not a model")
    config = ModelConfig.from_dict(manifest["config"])
    if expected_config is not None and config != expected_config:
        diffs = _config_diff(expected_config.to_dict(), config.to_dict())
        raise CheckpointError(
            f"{path}: checkpoint config does not match requested config: {diffs}"
        )
    model = build_model(config)
    expected_names = {f"param/{p.name}" for p in model.store}
    expected_names |= {
        f"buffer/{n}" for n in ("running_mean", "running_var")
        if getattr(model.norm, n) is not None
    }
    found = set(blobs)
    if found != expected_names:
        missing = sorted(expected_names - found)
        extra = sorted(found - expected_names)
        raise CheckpointError(
            f"{path}: blob mismatch (missing {missing}, unexpected {extra})"
        )
    for p in model.store:
        blob = blobs[f"param/{p.name}"]
        if blob.shape != p.value.shape:
            raise CheckpointError(
                f"{path}: param {p.name!r} has shape {blob.shape}, expected {p.value.shape}"
            )
        p.value[:] = blob
    for buf_name in ("running_mean", "running_var"):
        buf = getattr(model.norm, buf_name)
        if buf is not None:
            buf[:] = blobs[f"buffer/{buf_name}"]
    model.set_training(False)
    return model


def _config_diff(expected: dict, found: dict) -> str:
    parts = []
    for key in sorted(set(expected) | set(found)):
        if expected.get(key) != found.get(key):
            parts.append(f"{key}: expected {expected.get(key)!r}, found {found.get(key)!r}")
    return "; ".join(parts) or "values differ"
