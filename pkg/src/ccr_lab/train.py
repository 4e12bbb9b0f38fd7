"""Two-stage trainer.

Stage 1 fits the encoder and head with cross-entropy plus the DeCov penalty.
Stage 2 freezes the encoder, optionally reinitializes the head, and retrains
it on the weighted cross-entropy plus the counterfactual PNS penalty. The
optimizer is mini-batch gradient descent with momentum and decoupled weight
decay; every source of randomness flows from the run seed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import ClassifierHead, FeatureMatrix, LabeledDataset, RngSeed
from .ipw import WeightVector
from .losses import LossBreakdown, ce_loss_grad, decov_penalty_grad, stage2_loss_grad
from .model import Encoder, encode, head_probs, init_parameters


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    weight_decay: float = 1e-4
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 10
    beta: float = 0.0  # DeCov coefficient, stage 1
    lam: float = 0.0  # causality coefficient, stage 2
    pns_variant: str = "paper"
    # training clamp is looser than the pns-module default: 1/epsilon bounds
    # the penalty gradient, and 1e6-scale spikes destabilize the head updates
    pns_clamp_epsilon: float = 0.05
    ipw_estimator: str = "none"  # one of {ccr, jtt, afr, oracle, none}
    jtt_upweight: float = 10.0
    afr_gamma: float = 4.0
    warm_start_head: bool = True
    seed: int = 42

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")
        if self.batch_size < 2:
            raise ValueError("batch size must be >= 2 (DeCov needs n >= 2)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.beta < 0 or self.lam < 0:
            raise ValueError("beta and lambda must be >= 0")
        if self.ipw_estimator not in ("ccr", "jtt", "afr", "oracle", "none"):
            raise ValueError(f"unknown estimator {self.ipw_estimator!r}")

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        return cls(**json.loads(text))


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)  # list of per-epoch dicts

    def record(self, epoch: int, breakdown: LossBreakdown, train_acc: float) -> None:
        entry = {"epoch": epoch, "train_acc": train_acc}
        entry.update(breakdown.to_dict())
        self.epochs.append(entry)

    def to_json(self) -> str:
        return json.dumps(self.epochs, sort_keys=True)


class _MomentumSGD:
    """Momentum buffer per parameter, with decoupled weight decay."""

    def __init__(self, params: dict, lr: float, momentum: float, weight_decay: float):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict) -> None:
        for k, g in grads.items():
            v = self.velocity[k]
            v *= self.momentum
            v += g
            self.params[k] -= self.lr * v
            if self.weight_decay:
                self.params[k] -= self.lr * self.weight_decay * self.params[k]


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    """Seeded shuffle; yields index arrays covering every sample exactly once."""
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def train_stage1(
    dataset: LabeledDataset,
    feature_dim: int,
    config: TrainConfig,
    seed: RngSeed,
) -> tuple[Encoder, ClassifierHead, TrainHistory]:
    """ERM + DeCov over encoder and head; returns trained parameters."""
    if dataset.n < config.batch_size:
        raise ValueError("dataset smaller than one batch")
    rng = seed.generator(stream=10)
    encoder, head = init_parameters(
        dataset.dim, feature_dim, dataset.class_count, rng
    )
    params = {
        "enc_w": encoder.weights.copy(),
        "enc_b": encoder.bias.copy(),
        "head_w": head.weights.copy(),
        "head_b": head.bias.copy(),
    }
    opt = _MomentumSGD(params, config.learning_rate, config.momentum, config.weight_decay)
    history = TrainHistory()
    inputs, labels = dataset.features_raw, dataset.labels

    for epoch in range(config.epochs):
        sum_ce = sum_decov = 0.0
        n_batches = 0
        for idx in _epoch_batches(dataset.n, config.batch_size, rng):
            x = inputs[idx]
            y = labels[idx]
            pre = x @ params["enc_w"] + params["enc_b"]
            feats = np.maximum(pre, 0.0) if encoder.nonlinearity == "relu" else pre
            fm = FeatureMatrix(values=feats)
            batch_head = ClassifierHead(weights=params["head_w"], bias=params["head_b"])

            ce, g_hw, g_hb, g_feats = ce_loss_grad(batch_head, fm, y)
            decov = 0.0
            if config.beta > 0 and len(idx) >= 2:
                decov, g_decov = decov_penalty_grad(fm)
                g_feats = g_feats + config.beta * g_decov
            total = ce + config.beta * decov
            if not np.isfinite(total):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")

            if encoder.nonlinearity == "relu":
                g_pre = g_feats * (pre > 0)
            else:
                g_pre = g_feats
            grads = {
                "enc_w": x.T @ g_pre,
                "enc_b": g_pre.sum(axis=0),
                "head_w": g_hw,
                "head_b": g_hb,
            }
            opt.step(grads)
            sum_ce += ce
            sum_decov += decov
            n_batches += 1

        epoch_encoder = Encoder(params["enc_w"].copy(), params["enc_b"].copy(),
                                encoder.nonlinearity)
        epoch_head = ClassifierHead(params["head_w"].copy(), params["head_b"].copy())
        preds, _, _ = evaluate_stage1(epoch_encoder, epoch_head, dataset)
        acc = float(np.mean(preds == labels))
        breakdown = LossBreakdown(
            total=sum_ce / n_batches + config.beta * sum_decov / n_batches,
            cross_entropy=sum_ce / n_batches,
            decov=sum_decov / n_batches,
            pns_penalty=0.0,
            beta=config.beta,
            lam=0.0,
        )
        history.record(epoch, breakdown, acc)

    final_encoder = Encoder(params["enc_w"], params["enc_b"], encoder.nonlinearity)
    final_head = ClassifierHead(params["head_w"], params["head_b"])
    return final_encoder, final_head, history


def evaluate_stage1(
    encoder: Encoder, head: ClassifierHead, dataset: LabeledDataset
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Predictions, probabilities, and per-class correct/incorrect counts.

    Argmax ties break toward the lowest class id.
    """
    feats = encode(encoder, dataset.features_raw)
    probs = head_probs(head, feats)
    preds = probs.argmax(axis=1)
    counts = {}
    for j in range(dataset.class_count):
        in_class = dataset.labels == j
        correct = int(np.sum(in_class & (preds == dataset.labels)))
        counts[j] = {"correct": correct, "incorrect": int(in_class.sum()) - correct}
    return preds, probs, counts


def train_stage2(
    encoder: Encoder,
    head_init: ClassifierHead,
    dataset: LabeledDataset,
    weights: WeightVector,
    config: TrainConfig,
    seed: RngSeed,
) -> tuple[ClassifierHead, TrainHistory]:
    """Head-only retraining on weighted CE + lam * PNS penalty.

    Features are encoded once up front (the encoder is frozen and never
    mutated); counterfactual probabilities are recomputed each step from the
    current head.
    """
    w = weights.weights
    if w.shape[0] != dataset.n:
        raise ValueError("weight vector length does not match dataset")
    rng = seed.generator(stream=20)
    feats_all = encode(encoder, dataset.features_raw).values
    labels = dataset.labels

    if config.warm_start_head:
        params = {"head_w": head_init.weights.copy(), "head_b": head_init.bias.copy()}
    else:
        bound = 1.0 / np.sqrt(feats_all.shape[1])
        params = {
            "head_w": rng.uniform(-bound, bound,
                                  size=(feats_all.shape[1], dataset.class_count)),
            "head_b": rng.uniform(-bound, bound, size=dataset.class_count),
        }
    opt = _MomentumSGD(params, config.learning_rate, config.momentum, config.weight_decay)
    history = TrainHistory()

    for epoch in range(config.epochs):
        sum_total = sum_ce = sum_pns = 0.0
        n_batches = 0
        for idx in _epoch_batches(dataset.n, config.batch_size, rng):
            fm = FeatureMatrix(values=feats_all[idx])
            batch_head = ClassifierHead(weights=params["head_w"], bias=params["head_b"])
            breakdown, g_w, g_b = stage2_loss_grad(
                batch_head, fm, labels[idx], w[idx],
                lam=config.lam, pns_variant=config.pns_variant,
                clamp_epsilon=config.pns_clamp_epsilon,
            )
            if not np.isfinite(breakdown.total):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            opt.step({"head_w": g_w, "head_b": g_b})
            sum_total += breakdown.total
            sum_ce += breakdown.cross_entropy
            sum_pns += breakdown.pns_penalty
            n_batches += 1

        epoch_head = ClassifierHead(params["head_w"].copy(), params["head_b"].copy())
        probs = head_probs(epoch_head, FeatureMatrix(values=feats_all))
        acc = float(np.mean(probs.argmax(axis=1) == labels))
        breakdown = LossBreakdown(
            total=sum_total / n_batches,
            cross_entropy=sum_ce / n_batches,
            decov=0.0,
            pns_penalty=sum_pns / n_batches,
            beta=0.0,
            lam=config.lam,
        )
        history.record(epoch, breakdown, acc)

    return ClassifierHead(params["head_w"], params["head_b"]), history
