"""CSV ingestion and export for tabular multi-domain datasets.

A schema (JSON) names every column and its role.  Feature tokens that are
decimal integers inside the configured vocab pass through unchanged, so
exported datasets re-ingest bit-identically; any other token is hashed
deterministically over the vocab, and empty tokens land in the reserved
bucket (the last index).
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError, CsvError
from . import Dataset

log = logging.getLogger(__name__)

ROLES = ("feature", "domain", "label")


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    role: str
    vocab_size: int = 0
    domain_values: tuple[str, ...] | None = None  # optional token list, index = id


@dataclass(frozen=True)
class CsvSchema:
    columns: tuple[ColumnSpec, ...]
    num_domains: int

    def validate(self) -> None:
        roles = [c.role for c in self.columns]
        for c in self.columns:
            if c.role not in ROLES:
                raise ConfigError(f"column {c.name!r}: unknown role {c.role!r}")
        if roles.count("domain") != 1 or roles.count("label") != 1:
            raise ConfigError(
                f"schema needs exactly one domain and one label column, got roles {roles}"
            )
        if roles.count("feature") < 1:
            raise ConfigError("schema needs at least one feature column")
        for c in self.feature_columns():
            if c.vocab_size < 2:
                raise ConfigError(
                    f"feature column {c.name!r} needs vocab_size >= 2, got {c.vocab_size}"
                )
        dom = self.domain_column()
        if dom.domain_values is not None and len(dom.domain_values) != self.num_domains:
            raise ConfigError(
                f"domain column lists {len(dom.domain_values)} values but schema "
                f"declares {self.num_domains} domains"
            )

    def feature_columns(self) -> list[ColumnSpec]:
        return [c for c in self.columns if c.role == "feature"]

    def domain_column(self) -> ColumnSpec:
        return next(c for c in self.columns if c.role == "domain")

    def label_column(self) -> ColumnSpec:
        return next(c for c in self.columns if c.role == "label")

    def to_json(self) -> str:
        cols = []
        for c in self.columns:
            entry: dict = {"name": c.name, "role": c.role}
            if c.role == "feature":
                entry["vocab_size"] = c.vocab_size
            if c.role == "domain" and c.domain_values is not None:
                entry["values"] = list(c.domain_values)
            cols.append(entry)
        return json.dumps({"num_domains": self.num_domains, "columns": cols}, indent=2)

    @staticmethod
    def from_json(text: str) -> "CsvSchema":
        try:
            raw = json.loads(text)
            columns = tuple(
                ColumnSpec(
                    name=str(c["name"]),
                    role=str(c["role"]),
                    vocab_size=int(c.get("vocab_size", 0)),
                    domain_values=(
                        tuple(str(v) for v in c["values"]) if "values" in c else None
                    ),
                )
                for c in raw["columns"]
            )
            schema = CsvSchema(columns=columns, num_domains=int(raw["num_domains"]))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"malformed schema file: {e}") from e
        schema.validate()
        return schema

    @staticmethod
    def load(path) -> "CsvSchema":
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read schema {path}: {e}") from e
        return CsvSchema.from_json(text)

    @staticmethod
    def for_dataset(ds: Dataset) -> "CsvSchema":
        cols = tuple(
            ColumnSpec(name, "feature", vocab)
            for name, vocab in zip(ds.field_names, ds.vocab_sizes)
        ) + (ColumnSpec("domain", "domain"), ColumnSpec("label", "label"))
        return CsvSchema(columns=cols, num_domains=ds.num_domains)


def _hash_token(token: str, vocab_size: int) -> int:
    digest = hashlib.md5(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % vocab_size


def _feature_id(token: str, vocab_size: int) -> int:
    if token == "":
        return vocab_size - 1  # reserved out-of-vocabulary bucket
    try:
        value = int(token)
    except ValueError:
        return _hash_token(token, vocab_size)
    if 0 <= value < vocab_size:
        return value
    return _hash_token(token, vocab_size)


def export_csv(path, ds: Dataset) -> None:
    schema = CsvSchema.for_dataset(ds)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([c.name for c in schema.columns])
        fcount = len(ds.field_names)
        for i in range(len(ds)):
            row = [int(ds.feature_ids[i, j]) for j in range(fcount)]
            row.append(int(ds.domain_ids[i]))
            row.append(int(ds.labels[i]))
            writer.writerow(row)


def ingest_csv(path, schema: CsvSchema) -> Dataset:
    """Streamed parse; any malformed row aborts with its line number."""
    schema.validate()
    names = [c.name for c in schema.columns]
    feature_cols = schema.feature_columns()
    dom_col = schema.domain_column()
    col_index = {c.name: i for i, c in enumerate(schema.columns)}
    if dom_col.domain_values is not None:
        allowed = {tok: i for i, tok in enumerate(dom_col.domain_values)}
    else:
        allowed = None

    features: list[list[int]] = []
    domains: list[int] = []
    labels: list[int] = []
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise CsvError(f"cannot open {path}: {e}") from e
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvError(f"{path}: empty file, expected header {names}")
        if header != names:
            raise CsvError(
                f"{path} line 1: header {header} does not match schema columns {names}"
            )
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(names):
                raise CsvError(
                    f"{path} line {line_no}: expected {len(names)} fields, got {len(row)}"
                )
            token = row[col_index[dom_col.name]].strip()
            if allowed is not None:
                if token not in allowed:
                    raise CsvError(
                        f"{path} line {line_no}: unknown domain {token!r}; allowed: "
                        f"{sorted(allowed)}"
                    )
                domain = allowed[token]
            else:
                try:
                    domain = int(token)
                except ValueError:
                    domain = -1
                if not 0 <= domain < schema.num_domains:
                    raise CsvError(
                        f"{path} line {line_no}: unknown domain {token!r}; allowed: "
                        f"integers 0..{schema.num_domains - 1}"
                    )
            token = row[col_index[schema.label_column().name]].strip()
            if token not in ("0", "1"):
                raise CsvError(
                    f"{path} line {line_no}: label must be 0 or 1, got {token!r}"
                )
            label = int(token)
            features.append(
                [
                    _feature_id(row[col_index[c.name]].strip(), c.vocab_size)
                    for c in feature_cols
                ]
            )
            domains.append(domain)
            labels.append(label)
    if not features:
        raise CsvError(f"{path}: no data rows")
    ds = Dataset(
        feature_ids=np.array(features, dtype=np.int64),
        domain_ids=np.array(domains, dtype=np.int64),
        labels=np.array(labels, dtype=np.int64),
        field_names=tuple(c.name for c in feature_cols),
        vocab_sizes=tuple(c.vocab_size for c in feature_cols),
        num_domains=schema.num_domains,
    )
    counts = ds.domain_counts()
    log.info(
        "ingested %d rows from %s; per-domain counts: %s",
        len(ds), path, {d: int(c) for d, c in enumerate(counts)},
    )
    return ds
