"""Binary cross-entropy on logits."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .layers import sigmoid
from .params import Matrix


def bce_with_logits(logits: Matrix, labels: Matrix) -> tuple[float, Matrix]:
    """Mean binary cross-entropy of sigmoid(logits) against 0/1 labels.

    Computed in the logit domain as max(z, 0) - z*y + log(1 + exp(-|z|)),
    which never overflows for saturated logits.  Returns the scalar loss
    and the gradient w.r.t. the logits, (sigmoid(z) - y) / n.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if logits.shape != labels.shape:
        raise ValidationError(
            f"logits shape {logits.shape} does not match labels shape {labels.shape}"
        )
    if not np.isin(labels, (0.0, 1.0)).all():
        bad = labels[~np.isin(labels, (0.0, 1.0))][0]
        raise ValidationError(f"labels must be 0 or 1, found {bad}")
    n = logits.size
    if n == 0:
        raise ValidationError("cannot compute loss of an empty batch")
    z = logits
    per_example = np.maximum(z, 0.0) - z * labels + np.log1p(np.exp(-np.abs(z)))
    loss = float(per_example.sum() / n)
    grad = (sigmoid(z) - labels) / n
    return loss, grad
