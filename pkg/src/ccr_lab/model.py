"""Encoder and linear-softmax head, plus fast counterfactual predictions.

The counterfactual probabilities (one per occluded feature) are computed via
a logit correction rather than materializing h masked feature copies:
occluding feature j only subtracts ``features[i, j] * W[j, :]`` from the
logits of sample i.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import ClassifierHead, FeatureMatrix

NONLINEARITIES = ("relu", "identity")


@dataclass(frozen=True)
class Encoder:
    """Single affine layer with optional rectifier; frozen during stage 2."""

    weights: np.ndarray  # (d, h)
    bias: np.ndarray  # (h,)
    nonlinearity: str = "relu"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)
        if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
            raise ValueError("encoder weights (d, h) and bias (h,) must agree")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("encoder parameters must be finite")
        if self.nonlinearity not in NONLINEARITIES:
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")

    @property
    def input_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]


def encode(encoder: Encoder, inputs: np.ndarray) -> FeatureMatrix:
    """Apply the encoder: nonlinearity(inputs @ W + b), row per sample."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != encoder.input_dim:
        raise ValueError(
            f"input width {inputs.shape[-1]} does not match encoder d={encoder.input_dim}"
        )
    pre = inputs @ encoder.weights + encoder.bias
    if encoder.nonlinearity == "relu":
        pre = np.maximum(pre, 0.0)
    return FeatureMatrix(values=pre)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilized by max subtraction."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def head_logits(head: ClassifierHead, features: FeatureMatrix) -> np.ndarray:
    if features.feature_dim != head.feature_dim:
        raise ValueError(
            f"feature width {features.feature_dim} does not match head h={head.feature_dim}"
        )
    return features.values @ head.weights + head.bias


def head_probs(head: ClassifierHead, features: FeatureMatrix) -> np.ndarray:
    """Class probabilities per sample; rows sum to 1 within 1e-12."""
    return softmax(head_logits(head, features))


def counterfactual_probs(head: ClassifierHead, features: FeatureMatrix) -> np.ndarray:
    """Predictions with each single feature occluded: (n, h, C) tensor.

    Entry (i, j, :) is softmax of sample i's logits with feature j zeroed,
    obtained as logits[i] - features[i, j] * W[j, :].
    """
    logits = head_logits(head, features)  # (n, C)
    corrections = features.values[:, :, None] * head.weights[None, :, :]  # (n, h, C)
    cf_logits = logits[:, None, :] - corrections
    return softmax(cf_logits)


def init_parameters(
    input_dim: int,
    feature_dim: int,
    class_count: int,
    rng: np.random.Generator,
    nonlinearity: str = "relu",
) -> tuple[Encoder, ClassifierHead]:
    """Uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] initialization."""
    bound_e = 1.0 / np.sqrt(input_dim)
    encoder = Encoder(
        weights=rng.uniform(-bound_e, bound_e, size=(input_dim, feature_dim)),
        bias=rng.uniform(-bound_e, bound_e, size=feature_dim),
        nonlinearity=nonlinearity,
    )
    bound_h = 1.0 / np.sqrt(feature_dim)
    head = ClassifierHead(
        weights=rng.uniform(-bound_h, bound_h, size=(feature_dim, class_count)),
        bias=rng.uniform(-bound_h, bound_h, size=class_count),
    )
    return encoder, head


def params_to_json(encoder: Encoder, head: ClassifierHead) -> str:
    """Serialize model parameters with full 64-bit round-trip precision."""
    doc = {
        "encoder": {
            "w": encoder.weights.tolist(),
            "b": encoder.bias.tolist(),
            "nonlinearity": encoder.nonlinearity,
        },
        "head": {
            "w": head.weights.tolist(),
            "b": head.bias.tolist(),
        },
    }
    return json.dumps(doc, sort_keys=True)


def params_from_json(text: str) -> tuple[Encoder, ClassifierHead]:
    doc = json.loads(text)
    encoder = Encoder(
        weights=np.asarray(doc["encoder"]["w"], dtype=np.float64),
        bias=np.asarray(doc["encoder"]["b"], dtype=np.float64),
        nonlinearity=doc["encoder"]["nonlinearity"],
    )
    head = ClassifierHead(
        weights=np.asarray(doc["head"]["w"], dtype=np.float64),
        bias=np.asarray(doc["head"]["b"], dtype=np.float64),
    )
    return encoder, head
