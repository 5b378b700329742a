"""Training loop: Adam on cross-entropy, periodic evaluation, metric log.

The metric log is an append-only JSONL file, one record per evaluated
(split, domain) pair, so long runs stay tail-able and two runs with the
same config and seed produce byte-identical logs.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .data import Batch, BatchPlan, Dataset, batches
from .errors import NumericError
from .losses import bce_with_logits
from .metrics import MetricReport, report
from .model import MultiDomainModel
from .optim import AdamConfig, adam_step

log = logging.getLogger(__name__)

MAX_EPOCHS_DEFAULT = 20
EARLY_STOP_DELTA = 1e-4


@dataclass
class TrainResult:
    steps: int
    epochs_run: int
    first_epoch_mean_loss: float
    last_epoch_mean_loss: float
    valid_reports: list[MetricReport] = field(default_factory=list)

    @property
    def final_valid_auc(self) -> float | None:
        if not self.valid_reports:
            return None
        return self.valid_reports[-1].overall.auc


def train_step(model: MultiDomainModel, batch: Batch, adam: AdamConfig) -> float:
    model.store.zero_grads()
    logits = model.forward_logits(batch.feature_ids, batch.domain_ids)
    loss, dlogits = bce_with_logits(logits, batch.labels.reshape(-1, 1).astype(np.float64))
    model.backward(dlogits)
    adam_step(model.store, adam)
    return loss


def evaluate_model(
    model: MultiDomainModel, ds: Dataset, batch_size: int = 2000, split: str = "valid"
) -> MetricReport:
    """Sequential inference-mode predictions over the whole dataset."""
    probs = np.empty(len(ds))
    for start in range(0, len(ds), batch_size):
        stop = min(start + batch_size, len(ds))
        probs[start:stop] = model.predict(
            ds.feature_ids[start:stop], ds.domain_ids[start:stop]
        )[:, 0]
    return report(probs, ds.labels, ds.domain_ids, num_domains=ds.num_domains, split=split)


def _grad_diagnostics(model: MultiDomainModel, top: int = 3) -> str:
    norms = sorted(
        ((float(np.max(np.abs(p.grad))), p.name) for p in model.store), reverse=True
    )
    return ", ".join(f"{name}: max|grad|={g:.3e}" for g, name in norms[:top])


def _log_report(fh, step: int, epoch: int, rep: MetricReport) -> None:
    if fh is None:
        return
    for row in rep.rows():
        record = {
            "step": step,
            "epoch": epoch,
            "split": rep.split,
            "domain": row.domain,
            "examples": row.examples,
            "positives": row.positives,
            "auc": row.auc,
            "logloss": row.logloss,
        }
        fh.write(json.dumps(record, sort_keys=True) + "\n")
    fh.flush()


def train_model(
    model: MultiDomainModel,
    adam: AdamConfig,
    train_ds: Dataset,
    valid_ds: Dataset | None,
    plan: BatchPlan,
    epochs: int | None = None,
    eval_every: int = 1,
    log_path=None,
    max_epochs: int = MAX_EPOCHS_DEFAULT,
) -> TrainResult:
    """Train for a fixed epoch count, or early-stop on validation AUC.

    With ``epochs=None`` training continues until a full pass improves the
    validation AUC by less than EARLY_STOP_DELTA, capped at ``max_epochs``.
    """
    adam.validate()
    plan.validate()
    limit = epochs if epochs is not None else max_epochs
    fh = open(log_path, "a") if log_path is not None else None
    step = 0
    best_auc = -math.inf
    first_mean = last_mean = math.nan
    valid_reports: list[MetricReport] = []
    epochs_run = 0
    try:
        for epoch in range(limit):
            model.set_training(True)
            losses = []
            for batch in batches(train_ds, plan, epoch=epoch, training=True):
                loss = train_step(model, batch, adam)
                step += 1
                if not math.isfinite(loss):
                    raise NumericError(
                        f"non-finite loss {loss} at step {step} "
                        f"(learning rate {adam.learning_rate}); "
                        f"largest gradients: {_grad_diagnostics(model)}"
                    )
                losses.append(loss)
            epochs_run = epoch + 1
            mean_loss = float(np.mean(losses)) if losses else math.nan
            if epoch == 0:
                first_mean = mean_loss
            last_mean = mean_loss
            if fh is not None:
                fh.write(
                    json.dumps(
                        {"step": step, "epoch": epoch, "split": "train",
                         "mean_loss": mean_loss},
                        sort_keys=True,
                    )
                    + "\n"
                )
                fh.flush()
            log.info("epoch %d: %d steps, mean train loss %.6f", epoch, step, mean_loss)

            should_eval = valid_ds is not None and (
                (epoch + 1) % eval_every == 0 or epoch + 1 == limit
            )
            if should_eval:
                rep = evaluate_model(model, valid_ds, plan.batch_size, split="valid")
                valid_reports.append(rep)
                _log_report(fh, step, epoch, rep)
                current = rep.overall.auc if rep.overall.auc is not None else -math.inf
                if epochs is None:
                    if current < best_auc + EARLY_STOP_DELTA:
                        log.info(
                            "stopping: valid AUC %.5f improved < %g over best %.5f",
                            current, EARLY_STOP_DELTA, best_auc,
                        )
                        break
                best_auc = max(best_auc, current)
    finally:
        if fh is not None:
            fh.close()
    return TrainResult(
        steps=step,
        epochs_run=epochs_run,
        first_epoch_mean_loss=first_mean,
        last_epoch_mean_loss=last_mean,
        valid_reports=valid_reports,
    )
