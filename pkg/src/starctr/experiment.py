"""Multi-run comparison grids.

Two grids mirror the standard comparison layouts:

* fusion grid: one row per model variant (the weight-product architecture
  with its built-in combination, then the independent-tower architecture
  under each fusion strategy), with loss and AUC per dataset.  The star
  rows use partition normalization, the star_plus rows layer
  normalization.
* normalization grid: one row per normalization kind, with the AUC of
  both architectures per dataset (star_plus fixed to adaptive add).

Cells that fail keep the grid running; the failure is recorded in place.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .config import RunConfig, default_model_for_synthetic
from .data import SyntheticSpec, generate, split_dataset
from .errors import StarCtrError
from .fusion import FusionSpec
from .model import build_model
from .training import evaluate_model, train_model

log = logging.getLogger(__name__)

FUSION_ROWS: list[tuple[str, str | None]] = [
    ("star", None),
    ("star_plus", "add"),
    ("star_plus", "concat"),
    ("star_plus", "gate"),
    ("star_plus", "adaptive_add"),
]
NORM_ROWS = ["none", "layer", "batch", "partition"]

FUSION_LABELS = {
    None: "-",
    "add": "Add",
    "concat": "Concat",
    "gate": "Gate",
    "adaptive_add": "Adaptive Add",
}
NORM_LABELS = {
    "none": "No Normalization",
    "layer": "LayerNorm",
    "batch": "BatchNorm",
    "partition": "PartitionNorm",
}
ARCH_LABELS = {"star": "Star", "star_plus": "Star+"}


@dataclass
class CellResult:
    auc: float | None = None
    logloss: float | None = None
    error: str | None = None

    def fmt(self, metric: str) -> str:
        if self.error is not None:
            return "failed"
        value = getattr(self, metric)
        return "undefined" if value is None else f"{value:.5f}"


@dataclass
class ExperimentResult:
    dataset_names: list[str]
    fusion_cells: dict[tuple[str, str, str | None], CellResult]
    norm_cells: dict[tuple[str, str, str], CellResult]

    def fusion_table(self) -> str:
        header = ["Model".ljust(8), "Fusion".ljust(14)]
        for name in self.dataset_names:
            header.append(f"{name} Loss".rjust(16))
            header.append(f"{name} AUC".rjust(16))
        lines = ["".join(header)]
        for arch, fusion in FUSION_ROWS:
            cells = [ARCH_LABELS[arch].ljust(8), FUSION_LABELS[fusion].ljust(14)]
            for name in self.dataset_names:
                cell = self.fusion_cells[(name, arch, fusion)]
                cells.append(cell.fmt("logloss").rjust(16))
                cells.append(cell.fmt("auc").rjust(16))
            lines.append("".join(cells))
        return "\n".join(lines)

    def fusion_csv(self) -> list[str]:
        lines = ["dataset,model,fusion,logloss,auc"]
        for name in self.dataset_names:
            for arch, fusion in FUSION_ROWS:
                cell = self.fusion_cells[(name, arch, fusion)]
                lines.append(
                    f"{name},{ARCH_LABELS[arch]},{FUSION_LABELS[fusion]},"
                    f"{cell.fmt('logloss')},{cell.fmt('auc')}"
                )
        return lines

    def norm_table(self) -> str:
        header = ["Type".ljust(18)]
        for name in self.dataset_names:
            header.append(f"{name} Star".rjust(16))
            header.append(f"{name} Star+".rjust(16))
        lines = ["".join(header)]
        for norm in NORM_ROWS:
            cells = [NORM_LABELS[norm].ljust(18)]
            for name in self.dataset_names:
                for arch in ("star", "star_plus"):
                    cell = self.norm_cells[(name, norm, arch)]
                    cells.append(cell.fmt("auc").rjust(16))
            lines.append("".join(cells))
        return "\n".join(lines)

    def norm_csv(self) -> list[str]:
        lines = ["dataset,normalization,model,auc"]
        for name in self.dataset_names:
            for norm in NORM_ROWS:
                for arch in ("star", "star_plus"):
                    cell = self.norm_cells[(name, norm, arch)]
                    lines.append(
                        f"{name},{NORM_LABELS[norm]},{ARCH_LABELS[arch]},{cell.fmt('auc')}"
                    )
        return lines


def _run_cell(
    spec: SyntheticSpec,
    base: RunConfig,
    architecture: str,
    norm_kind: str,
    fusion_kind: str | None,
) -> CellResult:
    fusion = None if fusion_kind is None else FusionSpec(kind=fusion_kind)
    model_cfg = default_model_for_synthetic(
        spec,
        architecture=architecture,
        norm_kind=norm_kind,
        fusion=fusion,
        tower_widths=base.model.tower_widths,
        tower_output_dim=(1 if architecture == "star" else base.model.tower_output_dim),
        embedding_dim=base.model.fields[0].embedding_dim,
        seed=base.seed,
    )
    try:
        ds = generate(spec, base.train_n)
        train_ds, valid_ds = split_dataset(ds, base.valid_fraction, base.seed)
        model = build_model(model_cfg)
        train_model(
            model, base.adam, train_ds, valid_ds, base.plan,
            epochs=base.epochs, eval_every=base.eval_every,
        )
        rep = evaluate_model(model, valid_ds, base.plan.batch_size)
        return CellResult(auc=rep.overall.auc, logloss=rep.overall.logloss)
    except StarCtrError as e:
        log.error(
            "cell failed (arch=%s norm=%s fusion=%s): %s",
            architecture, norm_kind, fusion_kind, e,
        )
        return CellResult(error=str(e))


def run_experiment(
    base: RunConfig, datasets: list[tuple[str, SyntheticSpec]]
) -> ExperimentResult:
    """Train every grid cell on every dataset; identical cells run once."""
    cache: dict[tuple, CellResult] = {}

    def cell(name: str, spec: SyntheticSpec, arch: str, norm: str, fusion: str | None):
        key = (name, arch, norm, fusion)
        if key not in cache:
            log.info("running cell %s", key)
            cache[key] = _run_cell(spec, base, arch, norm, fusion)
        return cache[key]

    fusion_cells = {}
    norm_cells = {}
    for name, spec in datasets:
        for arch, fusion in FUSION_ROWS:
            norm = "partition" if arch == "star" else "layer"
            fusion_cells[(name, arch, fusion)] = cell(name, spec, arch, norm, fusion)
        for norm in NORM_ROWS:
            for arch in ("star", "star_plus"):
                fusion = None if arch == "star" else "adaptive_add"
                norm_cells[(name, norm, arch)] = cell(name, spec, arch, norm, fusion)
    return ExperimentResult(
        dataset_names=[name for name, _ in datasets],
        fusion_cells=fusion_cells,
        norm_cells=norm_cells,
    )
