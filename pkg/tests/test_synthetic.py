import numpy as np
import pytest

from starctr.data import PRESETS, SyntheticSpec, generate
from starctr.data.synthetic import CALIBRATION_TOLERANCE, GroundTruth
from starctr.errors import ConfigError, ValidationError
from starctr.layers import sigmoid


def simple_spec(**kw):
    defaults = dict(
        num_domains=2,
        domain_shares=(0.7, 0.3),
        target_ctrs=(0.1, 0.4),
        vocab_sizes=(8, 5),
        seed=0,
    )
    defaults.update(kw)
    return SyntheticSpec(**defaults)


def test_single_domain_share_puts_everything_in_domain_zero():
    spec = simple_spec(num_domains=1, domain_shares=(1.0,), target_ctrs=(0.2,))
    ds = generate(spec, 500)
    assert (ds.domain_ids == 0).all()


def test_zero_effects_give_zero_intercept_and_half_ctr():
    spec = simple_spec(
        num_domains=1,
        domain_shares=(1.0,),
        target_ctrs=(0.5,),
        shared_effect_dim=0,
        domain_effect_dim=0,
    )
    truth = GroundTruth(spec)
    assert truth.intercepts[0] == pytest.approx(0.0, abs=1e-12)
    ds = generate(spec, 20_000)
    assert ds.labels.mean() == pytest.approx(0.5, abs=0.02)


def test_generation_is_a_pure_function_of_spec_and_n():
    spec = simple_spec(seed=42)
    a = generate(spec, 1000)
    b = generate(spec, 1000)
    assert a.feature_ids.tobytes() == b.feature_ids.tobytes()
    assert a.domain_ids.tobytes() == b.domain_ids.tobytes()
    assert a.labels.tobytes() == b.labels.tobytes()
    c = generate(simple_spec(seed=43), 1000)
    assert a.labels.tobytes() != c.labels.tobytes()


def test_calibration_hits_targets_within_tolerance():
    spec = simple_spec(shared_effect_scale=2.0, domain_effect_scale=1.5)
    truth = GroundTruth(spec)
    for d in range(spec.num_domains):
        assert abs(truth.expected_ctr(d) - spec.target_ctrs[d]) < CALIBRATION_TOLERANCE


def test_empirical_ctr_tracks_target_on_large_samples():
    spec = simple_spec(seed=3)
    ds = generate(spec, 60_000)
    for d in range(spec.num_domains):
        mask = ds.domain_ids == d
        assert ds.labels[mask].mean() == pytest.approx(
            spec.target_ctrs[d], abs=0.01
        )


def test_domain_conditional_feature_distributions_differ():
    spec = simple_spec(seed=1)
    truth = GroundTruth(spec)
    for probs in truth.feature_probs:
        assert np.abs(probs[0] - probs[1]).max() > 0.01


def test_labels_follow_the_logistic_ground_truth():
    # Bin examples by their true probability; empirical rates must track it
    # within 5 standard errors of the bin size.
    spec = simple_spec(seed=5, domain_effect_scale=2.0)
    truth = GroundTruth(spec)
    ds = generate(spec, 50_000)
    probs = sigmoid(truth.logits(ds.feature_ids, ds.domain_ids))
    for lo, hi in ((0.0, 0.2), (0.2, 0.5), (0.5, 1.0)):
        mask = (probs >= lo) & (probs < hi)
        n = int(mask.sum())
        if n > 500:
            p = probs[mask].mean()
            bound = 5.0 * np.sqrt(p * (1.0 - p) / n)
            assert abs(ds.labels[mask].mean() - p) < bound


def test_unreachable_target_raises_calibration_error():
    # Enormous feature effects put irreducible mass near probability 1, so a
    # near-zero target cannot be bisected to within the intercept bracket.
    from starctr.errors import CalibrationError

    spec = simple_spec(
        num_domains=1,
        domain_shares=(1.0,),
        target_ctrs=(1e-9,),
        shared_effect_scale=500.0,
        domain_effect_scale=0.0,
    )
    with pytest.raises(CalibrationError, match="unreachable"):
        GroundTruth(spec)


def test_validation_rejects_bad_specs():
    with pytest.raises(ConfigError, match="sum to 1"):
        simple_spec(domain_shares=(0.5, 0.4)).validate()
    with pytest.raises(ConfigError, match="in \\(0, 1\\)"):
        simple_spec(target_ctrs=(0.0, 0.5)).validate()
    with pytest.raises(ConfigError, match="entries"):
        simple_spec(target_ctrs=(0.5,)).validate()
    with pytest.raises(ValidationError, match="empty"):
        generate(simple_spec(), 0)


def test_spec_round_trips_through_dict():
    spec = simple_spec(shared_effect_scale=0.5, seed=9)
    assert SyntheticSpec.from_dict(spec.to_dict()) == spec


def test_presets_are_valid_and_carry_expected_shapes():
    for name, spec in PRESETS.items():
        spec.validate()
    assert PRESETS["company1"].num_domains == 3
    assert PRESETS["company2"].num_domains == 6
    assert PRESETS["alicpp"].num_domains == 3
    np.testing.assert_allclose(
        PRESETS["company1"].domain_shares, (0.9331, 0.0668, 0.0001)
    )
    np.testing.assert_allclose(
        PRESETS["company1"].target_ctrs, (0.0041, 0.1628, 0.1333)
    )
    np.testing.assert_allclose(
        PRESETS["company2"].domain_shares,
        (0.5976, 0.1609, 0.1559, 0.0628, 0.0196, 0.0032),
    )
    np.testing.assert_allclose(
        PRESETS["alicpp"].target_ctrs, (0.044, 0.0382, 0.0402)
    )
