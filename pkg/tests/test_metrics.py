import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from starctr.errors import UndefinedMetricError, ValidationError
from starctr.metrics import auc, logloss, report

from oracles import auc_pairwise, logloss_naive


def test_perfect_ranking():
    assert auc([0.9, 0.1], [1, 0]) == 1.0


def test_inverted_ranking():
    assert auc([0.1, 0.9], [1, 0]) == 0.0


def test_all_ties_give_half():
    assert auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5


def test_matches_pairwise_oracle_exactly_with_ties():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(2, 200))
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        # coarse grid forces plenty of duplicates
        scores = rng.integers(0, 10, size=n) / 10.0
        assert auc(scores, labels) == auc_pairwise(scores, labels)


def test_single_class_raises_undefined():
    with pytest.raises(UndefinedMetricError, match="0 negatives"):
        auc([0.1, 0.9], [1, 1])
    with pytest.raises(UndefinedMetricError, match="0 positives"):
        auc([0.1, 0.9], [0, 0])


def test_complement_identity_exact():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = int(rng.integers(4, 100))
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        scores = rng.normal(size=n).round(1)
        assert auc(scores, labels) + auc(scores, 1 - labels) == 1.0


@settings(max_examples=60)
@given(
    st.lists(
        st.tuples(st.floats(0.001, 0.999), st.integers(0, 1)),
        min_size=4,
        max_size=60,
    )
)
def test_monotone_transform_invariance(pairs):
    probs = np.array([p for p, _ in pairs])
    labels = np.array([y for _, y in pairs])
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    logits = np.log(probs / (1.0 - probs))
    assert auc(probs, labels) == pytest.approx(auc(logits, labels), abs=1e-15)


def test_logloss_at_half_is_ln2():
    assert logloss([0.5, 0.5], [1, 0]) == pytest.approx(math.log(2.0), abs=1e-15)


def test_logloss_perfect_predictions_clamp_to_tiny_loss():
    value = logloss([1.0, 0.0], [1, 0])
    assert 0.0 < value < 1e-14


def test_logloss_matches_naive_formula():
    rng = np.random.default_rng(2)
    probs = rng.random(257)
    labels = rng.integers(0, 2, size=257)
    assert logloss(probs, labels) == pytest.approx(
        logloss_naive(probs, labels), abs=1e-12
    )


def test_logloss_minimized_at_empirical_rate():
    rng = np.random.default_rng(3)
    labels = (rng.random(200) < 0.3).astype(int)
    rate = labels.mean()
    grid = np.linspace(0.01, 0.99, 99)
    losses = [logloss(np.full(200, p), labels) for p in grid]
    best = grid[int(np.argmin(losses))]
    assert abs(best - rate) <= 0.01 + 1e-12


def test_report_single_domain_equals_overall():
    rng = np.random.default_rng(4)
    scores = rng.random(50)
    labels = rng.integers(0, 2, size=50)
    labels[0], labels[1] = 0, 1
    rep = report(scores, labels, np.zeros(50, dtype=int), num_domains=1)
    assert rep.per_domain[0].auc == rep.overall.auc
    assert rep.per_domain[0].logloss == rep.overall.logloss
    assert rep.per_domain[0].examples == rep.overall.examples


def test_report_flags_single_class_domain_but_keeps_overall():
    scores = np.array([0.2, 0.8, 0.6, 0.4])
    labels = np.array([1, 1, 0, 1])
    domains = np.array([0, 0, 1, 1])
    rep = report(scores, labels, domains, num_domains=2)
    assert rep.per_domain[0].auc is None  # only positives in domain 0
    assert not rep.per_domain[0].auc_defined
    assert rep.per_domain[0].logloss is not None
    assert rep.overall.auc is not None
    assert "undefined" in "\n".join(rep.to_csv_lines())


def test_report_per_domain_matches_filtered_recomputation():
    rng = np.random.default_rng(5)
    n = 300
    scores = rng.random(n)
    labels = rng.integers(0, 2, size=n)
    domains = rng.integers(0, 3, size=n)
    labels[domains == 0] = np.tile([0, 1], 100)[: (domains == 0).sum()]
    labels[domains == 1] = np.tile([1, 0], 100)[: (domains == 1).sum()]
    labels[domains == 2] = np.tile([0, 1], 100)[: (domains == 2).sum()]
    rep = report(scores, labels, domains, num_domains=3)
    for d in range(3):
        mask = domains == d
        assert rep.per_domain[d].auc == auc(scores[mask], labels[mask])
        assert rep.per_domain[d].logloss == logloss(scores[mask], labels[mask])
    assert sum(r.examples for r in rep.per_domain) == rep.overall.examples
    assert sum(r.positives for r in rep.per_domain) == rep.overall.positives


def test_report_rejects_misaligned_lengths():
    with pytest.raises(ValidationError, match="length mismatch"):
        report([0.5], [1, 0], [0, 0])


def test_report_table_and_csv_shapes():
    scores = np.array([0.2, 0.8, 0.6, 0.4])
    labels = np.array([0, 1, 0, 1])
    domains = np.array([0, 0, 1, 1])
    rep = report(scores, labels, domains, num_domains=2, split="valid")
    table = rep.format_table()
    assert table.splitlines()[0].split() == ["domain", "all", "0", "1"]
    lines = rep.to_csv_lines()
    assert lines[0] == "split,domain,examples,positives,auc,logloss"
    assert len(lines) == 4  # header + overall + 2 domains
    assert lines[1].startswith("valid,all,4,2,")
