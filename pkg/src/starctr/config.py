"""Run configuration: one JSON document describing a full experiment cell.

The file is a plain JSON tree with an embedded ``config_version``; CLI
flags override file values through dotted paths (``model.norm_kind=layer``).
The seed is mandatory so no run ever depends on the wall clock.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from .data import BatchPlan, SyntheticSpec
from .errors import ConfigError
from .fusion import FusionSpec
from .model import FieldSpec, ModelConfig
from .optim import AdamConfig

CONFIG_VERSION = 1
OUTPUT_ROOT_ENV = "STARCTR_OUT_ROOT"


@dataclass
class RunConfig:
    seed: int
    model: ModelConfig
    adam: AdamConfig
    plan: BatchPlan
    synthetic: SyntheticSpec | None = None
    train_n: int = 20_000
    csv_path: str | None = None
    schema_path: str | None = None
    epochs: int | None = None
    eval_every: int = 1
    valid_fraction: float = 0.1
    out_dir: str = "run"

    def validate(self, check_paths: bool = True) -> None:
        self.model.validate()
        self.adam.validate()
        self.plan.validate()
        has_synth = self.synthetic is not None
        has_csv = self.csv_path is not None
        if has_synth == has_csv:
            raise ConfigError(
                "exactly one data source is required: either 'synthetic' or 'csv_path'"
            )
        if has_synth:
            self.synthetic.validate()
            if self.train_n < 2:
                raise ConfigError(f"train_n must be >= 2, got {self.train_n}")
        if has_csv:
            if self.schema_path is None:
                raise ConfigError("csv_path requires schema_path")
            if check_paths:
                for p in (self.csv_path, self.schema_path):
                    if not Path(p).exists():
                        raise ConfigError(f"referenced path does not exist: {p}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")
        if not 0.0 < self.valid_fraction < 1.0:
            raise ConfigError(
                f"valid_fraction must be in (0, 1), got {self.valid_fraction}"
            )
        if self.epochs is not None and self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")

    def resolved_out_dir(self) -> Path:
        root = os.environ.get(OUTPUT_ROOT_ENV)
        out = Path(self.out_dir)
        if root and not out.is_absolute():
            return Path(root) / out
        return out

    def to_dict(self) -> dict:
        return {
            "config_version": CONFIG_VERSION,
            "seed": self.seed,
            "model": self.model.to_dict(),
            "adam": {
                "learning_rate": self.adam.learning_rate,
                "beta1": self.adam.beta1,
                "beta2": self.adam.beta2,
                "eps": self.adam.eps,
            },
            "batch": self.plan.to_dict(),
            "data": (
                {"synthetic": self.synthetic.to_dict(), "train_n": self.train_n}
                if self.synthetic is not None
                else {"csv_path": self.csv_path, "schema_path": self.schema_path}
            ),
            "epochs": self.epochs,
            "eval_every": self.eval_every,
            "valid_fraction": self.valid_fraction,
            "out_dir": self.out_dir,
        }

    @staticmethod
    def from_dict(d: dict, check_paths: bool = True) -> "RunConfig":
        version = d.get("config_version")
        if version != CONFIG_VERSION:
            raise ConfigError(
                f"config_version must be {CONFIG_VERSION}, got {version!r}"
            )
        if "seed" not in d:
            raise ConfigError("seed is mandatory; runs never default to the wall clock")
        data = d.get("data", {})
        synthetic = None
        csv_path = schema_path = None
        train_n = 20_000
        if "synthetic" in data:
            synthetic = SyntheticSpec.from_dict(data["synthetic"])
            train_n = int(data.get("train_n", 20_000))
        if "csv_path" in data:
            csv_path = data["csv_path"]
            schema_path = data.get("schema_path")
        adam_d = d.get("adam", {})
        cfg = RunConfig(
            seed=int(d["seed"]),
            model=ModelConfig.from_dict(d["model"]),
            adam=AdamConfig(
                learning_rate=float(adam_d.get("learning_rate", 0.001)),
                beta1=float(adam_d.get("beta1", 0.9)),
                beta2=float(adam_d.get("beta2", 0.999)),
                eps=float(adam_d.get("eps", 1e-8)),
            ),
            plan=BatchPlan.from_dict(d.get("batch", {})),
            synthetic=synthetic,
            train_n=train_n,
            csv_path=csv_path,
            schema_path=schema_path,
            epochs=None if d.get("epochs") is None else int(d["epochs"]),
            eval_every=int(d.get("eval_every", 1)),
            valid_fraction=float(d.get("valid_fraction", 0.1)),
            out_dir=str(d.get("out_dir", "run")),
        )
        cfg.validate(check_paths=check_paths)
        return cfg

    @staticmethod
    def load(path, overrides: list[str] | None = None, check_paths: bool = True) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        for item in overrides or []:
            apply_override(raw, item)
        return RunConfig.from_dict(raw, check_paths=check_paths)


def apply_override(tree: dict, item: str) -> None:
    """Apply one ``dotted.path=json_value`` override in place."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like path.to.key=value")
    path, _, value = item.partition("=")
    keys = path.split(".")
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value  # bare strings are allowed unquoted
    node = tree
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {item!r}: {key!r} is not an object")
    node[keys[-1]] = parsed


def default_model_for_synthetic(
    spec: SyntheticSpec,
    architecture: str = "star_plus",
    norm_kind: str = "layer",
    fusion: FusionSpec | None = None,
    tower_widths: tuple[int, ...] = (64, 32),
    tower_output_dim: int = 16,
    embedding_dim: int = 8,
    seed: int = 0,
) -> ModelConfig:
    """A model config whose fields mirror a synthetic spec's vocabularies."""
    if architecture == "star":
        tower_output_dim = 1
        fusion = None
    elif fusion is None:
        fusion = FusionSpec(kind="adaptive_add")
    fields = tuple(
        FieldSpec(f"f{i}", v, embedding_dim) for i, v in enumerate(spec.vocab_sizes)
    )
    return ModelConfig(
        num_domains=spec.num_domains,
        fields=fields,
        tower_widths=tower_widths,
        tower_output_dim=tower_output_dim,
        norm_kind=norm_kind,
        fusion=fusion,
        architecture=architecture,
        seed=seed,
    )
