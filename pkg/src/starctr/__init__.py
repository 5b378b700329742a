"""Multi-domain click-through-rate models.

Shared, domain-specific, and auxiliary towers over categorical embeddings;
two architectures (element-wise weight combination with a sigmoid-sum head,
and independent towers joined by a fusion strategy); batch, layer, and
partition normalization; hand-written backprop verified by finite
differences; exact rank-based evaluation metrics; calibrated synthetic
multi-domain data; and a CLI for end-to-end experiments.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, default_model_for_synthetic
from .data import (
    Batch,
    BatchPlan,
    CsvSchema,
    Dataset,
    PRESETS,
    SyntheticSpec,
    batches,
    export_csv,
    generate,
    ingest_csv,
    split_dataset,
)
from .errors import StarCtrError
from .fusion import FusionSpec
from .gradcheck import grad_check
from .layers import DenseLayer, EmbeddingTable, TowerStack
from .losses import bce_with_logits
from .metrics import MetricReport, auc, logloss, report
from .model import (
    FieldSpec,
    ModelConfig,
    MultiDomainModel,
    StarCombinedTower,
    build_model,
    star_final_score,
)
from .normalization import NormLayer
from .optim import AdamConfig, adam_step
from .params import Matrix, Param, ParamStore
from .training import evaluate_model, train_model, train_step

__version__ = "0.1.0"

__all__ = [
    "AdamConfig",
    "Batch",
    "BatchPlan",
    "CsvSchema",
    "Dataset",
    "DenseLayer",
    "EmbeddingTable",
    "FieldSpec",
    "FusionSpec",
    "Matrix",
    "MetricReport",
    "ModelConfig",
    "MultiDomainModel",
    "NormLayer",
    "PRESETS",
    "Param",
    "ParamStore",
    "RunConfig",
    "StarCombinedTower",
    "StarCtrError",
    "SyntheticSpec",
    "TowerStack",
    "adam_step",
    "auc",
    "batches",
    "bce_with_logits",
    "build_model",
    "default_model_for_synthetic",
    "evaluate_model",
    "export_csv",
    "generate",
    "grad_check",
    "ingest_csv",
    "load_checkpoint",
    "logloss",
    "report",
    "save_checkpoint",
    "split_dataset",
    "star_final_score",
    "train_model",
    "train_step",
]
