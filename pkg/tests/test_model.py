"""Encoder, softmax head, and counterfactual probability computation."""
import numpy as np
import pytest

from ccr_lab.core import ClassifierHead, FeatureMatrix, RngSeed
from ccr_lab.model import (Encoder, counterfactual_probs, encode, head_probs,
                           init_parameters, params_from_json, params_to_json,
                           softmax)


class TestEncode:
    def test_identity_configuration(self):
        enc = Encoder(weights=np.eye(3), bias=np.zeros(3), nonlinearity="identity")
        x = np.array([[1.0, -2.0, 0.5]])
        assert np.array_equal(encode(enc, x).values, x)

    def test_rectifier_clips_negatives(self):
        enc = Encoder(weights=np.eye(2), bias=np.zeros(2), nonlinearity="relu")
        out = encode(enc, np.array([[-1.0, 2.0]])).values
        assert np.array_equal(out, [[0.0, 2.0]])

    def test_finite_output_for_finite_input(self):
        rng = np.random.default_rng(0)
        enc = Encoder(weights=rng.normal(size=(4, 3)), bias=rng.normal(size=3),
                      nonlinearity="relu")
        out = encode(enc, rng.normal(size=(10, 4)) * 1e6).values
        assert np.isfinite(out).all()

    def test_dimension_mismatch(self):
        enc = Encoder(weights=np.eye(3), bias=np.zeros(3), nonlinearity="identity")
        with pytest.raises(ValueError):
            encode(enc, np.zeros((2, 4)))


class TestHeadProbs:
    def test_zero_head_uniform(self):
        head = ClassifierHead(weights=np.zeros((3, 4)), bias=np.zeros(4))
        probs = head_probs(head, FeatureMatrix(np.random.default_rng(1).normal(size=(5, 3))))
        assert np.allclose(probs, 0.25, atol=1e-15)

    def test_closed_form_binary(self):
        # logits (1, 0): p = (e / (e+1), 1/(e+1)) = (0.7311, 0.2689)
        head = ClassifierHead(weights=np.eye(2), bias=np.zeros(2))
        probs = head_probs(head, FeatureMatrix(np.array([[1.0, 0.0]])))
        assert probs[0, 0] == pytest.approx(0.7311, abs=5e-5)
        assert probs[0, 1] == pytest.approx(0.2689, abs=5e-5)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        head = ClassifierHead(weights=rng.normal(size=(6, 5)), bias=rng.normal(size=5))
        probs = head_probs(head, FeatureMatrix(rng.normal(size=(20, 6)) * 50))
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_shift_invariance(self):
        rng = np.random.default_rng(3)
        logits = rng.normal(size=(4, 3))
        shifted = logits + rng.normal(size=(4, 1))
        assert np.allclose(softmax(logits), softmax(shifted), atol=1e-12)

    def test_stability_at_large_logits(self):
        probs = softmax(np.array([[1000.0, 0.0]]))
        assert np.isfinite(probs).all()
        assert probs[0, 0] == pytest.approx(1.0)


def brute_force_counterfactuals(head, features):
    """Oracle: materialize each masked copy and run the plain softmax head."""
    n, h = features.shape
    out = np.empty((n, h, head.bias.shape[0]))
    for j in range(h):
        masked = features.copy()
        masked[:, j] = 0.0
        out[:, j, :] = head_probs(head, FeatureMatrix(masked))
    return out


class TestCounterfactualProbs:
    def test_zero_feature_slice_equals_original(self):
        rng = np.random.default_rng(4)
        head = ClassifierHead(weights=rng.normal(size=(3, 2)), bias=rng.normal(size=2))
        feats = rng.normal(size=(4, 3))
        feats[:, 1] = 0.0
        cf = counterfactual_probs(head, FeatureMatrix(feats))
        orig = head_probs(head, FeatureMatrix(feats))
        assert np.array_equal(cf[:, 1, :], orig)

    def test_matches_brute_force_5x3(self):
        rng = np.random.default_rng(5)
        head = ClassifierHead(weights=rng.normal(size=(3, 4)), bias=rng.normal(size=4))
        feats = rng.normal(size=(5, 3))
        cf = counterfactual_probs(head, FeatureMatrix(feats))
        oracle = brute_force_counterfactuals(head, feats)
        assert np.abs(cf - oracle).max() < 1e-12

    def test_matches_brute_force_50_random_instances(self):
        rng = np.random.default_rng(6)
        worst = 0.0
        for _ in range(50):
            n = int(rng.integers(1, 9))
            h = int(rng.integers(1, 7))
            c = int(rng.integers(2, 5))
            head = ClassifierHead(weights=rng.normal(size=(h, c)),
                                  bias=rng.normal(size=c))
            feats = rng.normal(size=(n, h)) * rng.uniform(0.1, 5.0)
            cf = counterfactual_probs(head, FeatureMatrix(feats))
            oracle = brute_force_counterfactuals(head, feats)
            worst = max(worst, float(np.abs(cf - oracle).max()))
            assert np.allclose(cf.sum(axis=2), 1.0, atol=1e-12)
        assert worst < 1e-12

    def test_single_feature_occlusion_gives_bias_softmax(self):
        rng = np.random.default_rng(7)
        head = ClassifierHead(weights=rng.normal(size=(1, 3)), bias=rng.normal(size=3))
        cf = counterfactual_probs(head, FeatureMatrix(rng.normal(size=(4, 1))))
        expected = softmax(head.bias[None, :])[0]
        assert np.allclose(cf[:, 0, :], expected, atol=1e-12)


class TestParamsJson:
    def test_roundtrip_exact(self):
        rng = np.random.default_rng(8)
        enc, head = init_parameters(5, 3, 2, rng)
        enc2, head2 = params_from_json(params_to_json(enc, head))
        assert np.array_equal(enc.weights, enc2.weights)
        assert np.array_equal(enc.bias, enc2.bias)
        assert enc.nonlinearity == enc2.nonlinearity
        assert np.array_equal(head.weights, head2.weights)
        assert np.array_equal(head.bias, head2.bias)

    def test_serialization_is_stable(self):
        rng = np.random.default_rng(9)
        enc, head = init_parameters(4, 2, 3, rng)
        assert params_to_json(enc, head) == params_to_json(enc, head)

    def test_init_bounds_follow_fan_in(self):
        enc, head = init_parameters(16, 8, 2, RngSeed(0).generator(stream=1))
        assert np.abs(enc.weights).max() <= 1 / np.sqrt(16)
        assert np.abs(head.weights).max() <= 1 / np.sqrt(8)
