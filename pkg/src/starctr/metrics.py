"""Exact rank-based AUC and logloss, overall and per domain.

AUC is the Mann-Whitney statistic with average-rank tie handling.  The
numerator is accumulated in doubled-rank integer units so the value is
the exact rational (concordant + half the ties) / (positives * negatives),
bit-identical to a pairwise-counting oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetricError, ValidationError

PROB_CLAMP = 1e-15


def _check_labels(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValidationError(f"labels must be 1-D, got shape {labels.shape}")
    if not np.isin(labels, (0, 1)).all():
        bad = labels[~np.isin(labels, (0, 1))][0]
        raise ValidationError(f"labels must be 0 or 1, found {bad!r}")
    return labels.astype(np.int64)


def auc(scores, labels) -> float:
    """Probability a random positive outranks a random negative; ties count half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = _check_labels(labels)
    if scores.shape != labels.shape:
        raise ValidationError(
            f"scores shape {scores.shape} does not match labels shape {labels.shape}"
        )
    positives = int(labels.sum())
    negatives = labels.size - positives
    if positives == 0 or negatives == 0:
        raise UndefinedMetricError(
            f"AUC undefined: {positives} positives, {negatives} negatives"
        )
    # Doubled average rank of each tie group occupying sorted (1-based)
    # positions start+1..end is the integer (start + end + 1).
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    starts = ends - counts
    doubled_rank = (starts + ends + 1)[inverse]
    numerator = int(doubled_rank[labels == 1].sum()) - positives * (positives + 1)
    return numerator / (2 * positives * negatives)


def logloss(probs, labels) -> float:
    """Mean negative log-likelihood with probabilities clamped away from {0, 1}."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = _check_labels(labels)
    if probs.shape != labels.shape:
        raise ValidationError(
            f"probs shape {probs.shape} does not match labels shape {labels.shape}"
        )
    if probs.size == 0:
        raise ValidationError("cannot compute logloss of an empty input")
    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(labels * np.log(p) + (1 - labels) * np.log1p(-p)))


@dataclass(frozen=True)
class DomainMetrics:
    """One report row; ``auc`` is None when the domain lacks both classes."""

    domain: str
    examples: int
    positives: int
    negatives: int
    auc: float | None
    logloss: float | None

    @property
    def auc_defined(self) -> bool:
        return self.auc is not None


@dataclass
class MetricReport:
    split: str
    overall: DomainMetrics
    per_domain: list[DomainMetrics]

    def rows(self) -> list[DomainMetrics]:
        return [self.overall, *self.per_domain]

    CSV_HEADER = "split,domain,examples,positives,auc,logloss"

    def to_csv_lines(self) -> list[str]:
        lines = [self.CSV_HEADER]
        for r in self.rows():
            auc_cell = "undefined" if r.auc is None else repr(r.auc)
            ll_cell = "undefined" if r.logloss is None else repr(r.logloss)
            lines.append(
                f"{self.split},{r.domain},{r.examples},{r.positives},{auc_cell},{ll_cell}"
            )
        return lines

    def format_table(self) -> str:
        """Pretty per-domain table: domains as columns, metrics as rows."""
        cols = [r.domain for r in self.rows()]
        width = max(10, *(len(c) + 2 for c in cols))

        def fmt(value) -> str:
            if value is None:
                return "undefined".rjust(width)
            if isinstance(value, float):
                return f"{value:.5f}".rjust(width)
            return str(value).rjust(width)

        header = "domain".ljust(12) + "".join(c.rjust(width) for c in cols)
        lines = [header]
        for label, attr in (
            ("examples", "examples"),
            ("positives", "positives"),
            ("auc", "auc"),
            ("logloss", "logloss"),
        ):
            lines.append(
                label.ljust(12) + "".join(fmt(getattr(r, attr)) for r in self.rows())
            )
        return "\n".join(lines)


def _metrics_for(scores: np.ndarray, labels: np.ndarray, domain: str) -> DomainMetrics:
    positives = int(labels.sum())
    negatives = labels.size - positives
    if labels.size == 0:
        return DomainMetrics(domain, 0, 0, 0, None, None)
    try:
        a = auc(scores, labels)
    except UndefinedMetricError:
        a = None
    return DomainMetrics(domain, labels.size, positives, negatives, a, logloss(scores, labels))


def report(scores, labels, domain_ids, num_domains: int | None = None,
           split: str = "eval") -> MetricReport:
    """Overall metrics plus one row per domain, in stable domain order."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = _check_labels(labels)
    domain_ids = np.asarray(domain_ids, dtype=np.int64)
    if not (scores.shape == labels.shape == domain_ids.shape):
        raise ValidationError(
            f"length mismatch: scores {scores.shape}, labels {labels.shape}, "
            f"domains {domain_ids.shape}"
        )
    overall = _metrics_for(scores, labels, "all")
    if num_domains is None:
        domains = [int(d) for d in np.unique(domain_ids)]
    else:
        domains = list(range(num_domains))
    per_domain = []
    for d in domains:
        mask = domain_ids == d
        per_domain.append(_metrics_for(scores[mask], labels[mask], str(d)))
    return MetricReport(split=split, overall=overall, per_domain=per_domain)
