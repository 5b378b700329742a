import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from starctr.errors import ValidationError
from starctr.losses import bce_with_logits

from oracles import bce_high_precision, central_difference


def test_zero_logit_positive_label_is_ln2():
    loss, grad = bce_with_logits(np.array([[0.0]]), np.array([[1.0]]))
    assert loss == pytest.approx(math.log(2.0), abs=1e-15)
    assert grad[0, 0] == pytest.approx(-0.5)


def test_saturated_correct_prediction_has_tiny_loss_without_overflow():
    loss, _ = bce_with_logits(np.array([[40.0]]), np.array([[1.0]]))
    assert 0.0 <= loss < 1e-15
    loss, _ = bce_with_logits(np.array([[-40.0]]), np.array([[0.0]]))
    assert 0.0 <= loss < 1e-15
    # extreme logits still finite
    loss, grad = bce_with_logits(np.array([[750.0]]), np.array([[0.0]]))
    assert math.isfinite(loss) and loss > 700
    assert np.isfinite(grad).all()


def test_matches_high_precision_formula():
    rng = np.random.default_rng(0)
    logits = rng.normal(scale=3.0, size=(32, 1))
    labels = rng.integers(0, 2, size=(32, 1)).astype(float)
    loss, _ = bce_with_logits(logits, labels)
    assert loss == pytest.approx(bce_high_precision(logits, labels), abs=1e-12)


def test_gradient_is_sigmoid_minus_label_over_n():
    rng = np.random.default_rng(1)
    logits = rng.normal(size=(8, 1))
    labels = rng.integers(0, 2, size=(8, 1)).astype(float)

    def loss() -> float:
        return bce_with_logits(logits, labels)[0]

    _, grad = bce_with_logits(logits, labels)
    numeric = central_difference(loss, logits)
    np.testing.assert_allclose(grad, numeric, atol=1e-9)


def test_rejects_bad_labels():
    with pytest.raises(ValidationError, match="0 or 1"):
        bce_with_logits(np.array([[0.0]]), np.array([[0.5]]))
    with pytest.raises(ValidationError):
        bce_with_logits(np.zeros((2, 1)), np.zeros((3, 1)))


@given(
    st.lists(st.floats(-30, 30), min_size=1, max_size=20),
    st.lists(st.integers(0, 1), min_size=20, max_size=20),
)
def test_loss_is_nonnegative(logit_list, label_list):
    n = len(logit_list)
    logits = np.array(logit_list).reshape(-1, 1)
    labels = np.array(label_list[:n], dtype=float).reshape(-1, 1)
    loss, _ = bce_with_logits(logits, labels)
    assert loss >= 0.0
