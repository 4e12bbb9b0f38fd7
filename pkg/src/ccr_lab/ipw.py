"""Propensity estimation and per-sample loss weights.

The default estimator splits each class into stage-1 correct / incorrect
pseudo-groups (2C groups total), uses each group's share of the dataset as
its propensity, and weights samples by the inverse of twice that share.
JTT-style upweighting, AFR-style exponential weights, and an oracle mode for
synthetic data (true observation probabilities known) are provided for
comparison experiments.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PropensityTable:
    pseudo_group_of: np.ndarray  # (n,) int64, id = 2*label + (0 correct / 1 wrong)
    p_hat: dict  # pseudo-group id -> propensity (share of the dataset)
    k_effective: int

    def __post_init__(self):
        for g, p in self.p_hat.items():
            if not 0 < p <= 1:
                raise ValueError(f"propensity for group {g} out of (0, 1]")


@dataclass(frozen=True)
class WeightVector:
    weights: np.ndarray  # (n,) > 0
    normalization: str  # "mean-one" or "none"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        if self.normalization == "mean-one" and abs(w.mean() - 1.0) > 1e-12:
            raise ValueError("mean-one weights must average to 1 within 1e-12")


def _normalize_mean_one(raw: np.ndarray) -> WeightVector:
    w = raw / raw.mean()
    # one Newton-style correction keeps the mean at 1 within 1e-12 even after
    # the division's rounding
    w = w / w.mean()
    return WeightVector(weights=w, normalization="mean-one")


def estimate_propensity_ccr(stage1_preds: np.ndarray, labels: np.ndarray) -> PropensityTable:
    """Pseudo-groups from stage-1 correctness: id = 2*label + (pred != label).

    Each group's propensity is its fraction of the whole dataset. Empty
    groups are simply absent from the table.
    """
    preds = np.asarray(stage1_preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape or preds.ndim != 1:
        raise ValueError("predictions and labels must be aligned 1-d vectors")
    n = labels.shape[0]
    groups = 2 * labels + (preds != labels).astype(np.int64)
    ids, counts = np.unique(groups, return_counts=True)
    floor = 1.0 / n  # guards against extreme weights; non-empty groups already satisfy it
    p_hat = {int(g): max(float(c) / n, floor) for g, c in zip(ids, counts)}
    return PropensityTable(pseudo_group_of=groups, p_hat=p_hat, k_effective=2)


def weights_from_propensity(table: PropensityTable) -> WeightVector:
    """Raw weight 1 / (K_effective * p_hat(group)), rescaled to mean one.

    Before rescaling, each non-empty pseudo-group's total raw weight equals
    n / K_effective, which is the balancing identity the estimator is built on.
    """
    groups = table.pseudo_group_of
    raw = np.empty(groups.shape[0], dtype=np.float64)
    for g, p in table.p_hat.items():
        if p <= 0:
            raise ValueError(f"zero propensity for occupied group {g}")
        raw[groups == g] = 1.0 / (table.k_effective * p)
    return _normalize_mean_one(raw)


def weights_jtt(stage1_preds: np.ndarray, labels: np.ndarray, upweight: float) -> WeightVector:
    """Misclassified samples get weight `upweight`, the rest 1; mean-one scaled."""
    if upweight < 1:
        raise ValueError("upweight must be >= 1")
    preds = np.asarray(stage1_preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise ValueError("predictions and labels must be aligned")
    raw = np.where(preds != labels, float(upweight), 1.0)
    return _normalize_mean_one(raw)


def weights_afr(stage1_probs: np.ndarray, labels: np.ndarray, gamma: float) -> WeightVector:
    """exp(-gamma * p(y)) weights, class-balanced, then mean-one scaled.

    Class balancing rescales each class's raw-weight mass to its sample
    count, so classes keep their original share of the total loss.
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    probs = np.asarray(stage1_probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.shape[0]
    if probs.shape[0] != n:
        raise ValueError("probabilities and labels must be aligned")
    p_true = probs[np.arange(n), labels]
    raw = np.exp(-gamma * p_true)
    for j in np.unique(labels):
        in_class = labels == j
        mass = raw[in_class].sum()
        raw[in_class] *= in_class.sum() / mass
    return _normalize_mean_one(raw)


def weights_oracle(
    ideal_groups: np.ndarray, observation_probs: np.ndarray, spurious_value_count: int
) -> WeightVector:
    """True inverse-observation-probability weights, NOT mean-normalized.

    With p_hat(s^k | y^j) = p_{j,k}(o=1) / K the weight 1 / (K * p_hat)
    collapses to 1 / p_{j,k}(o=1); keeping the exact scale is what makes the
    reweighted loss an unbiased estimate of the balanced-dataset loss.
    """
    groups = np.asarray(ideal_groups, dtype=np.int64)
    probs = np.asarray(observation_probs, dtype=np.float64)
    K = spurious_value_count
    per_sample_p = probs[groups // K, groups % K]
    if np.any(per_sample_p <= 0):
        raise ValueError("zero observation probability for an occupied group")
    return WeightVector(weights=1.0 / per_sample_p, normalization="none")


def weights_to_csv(weights: WeightVector, pseudo_groups: np.ndarray | None = None) -> str:
    """Render weights as CSV: index,weight,pseudo_group (17 significant digits)."""
    n = weights.weights.shape[0]
    if pseudo_groups is None:
        pseudo_groups = np.full(n, -1, dtype=np.int64)
    buf = io.StringIO()
    buf.write("index,weight,pseudo_group\n")
    for i in range(n):
        buf.write(f"{i},{weights.weights[i]:.17g},{int(pseudo_groups[i])}\n")
    return buf.getvalue()


def weights_from_csv(text: str) -> tuple[np.ndarray, np.ndarray]:
    """Parse the CSV written by :func:`weights_to_csv`."""
    lines = text.strip().splitlines()
    if not lines or lines[0] != "index,weight,pseudo_group":
        raise ValueError("bad weights CSV header")
    weights, groups = [], []
    for line in lines[1:]:
        _, w, g = line.split(",")
        weights.append(float(w))
        groups.append(int(g))
    return np.asarray(weights), np.asarray(groups, dtype=np.int64)
