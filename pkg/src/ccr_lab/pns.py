"""Per-feature necessity-and-sufficiency lower bounds and their penalty.

For sample i with label y and occluded feature j, the "paper" variant bounds
the joint necessity/sufficiency probability by

    lb(i, j) = max(0, p_orig(i, y) - (1 - p_cf(i, j, y)))

while the "pearl" variant uses the classical form

    lb(i, j) = max(0, p_orig(i, y) - p_cf(i, j, y)).

Both are clamped below at epsilon so the log penalty stays finite. The
penalty realizes maximizing the product of per-feature bounds through its
(normalized) negative log.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VARIANTS = ("paper", "pearl")

DEFAULT_CLAMP_EPSILON = 1e-6


@dataclass(frozen=True)
class PnsBounds:
    lb: np.ndarray  # (n, h), entries in [epsilon, 1]
    variant: str
    clamp_epsilon: float
    active: np.ndarray  # (n, h) bool, False where the clamp is binding

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not 0 < self.clamp_epsilon <= 0.1:
            raise ValueError("clamp epsilon must lie in (0, 0.1]")


def pns_lower_bound(
    probs_orig: np.ndarray,
    probs_cf: np.ndarray,
    labels: np.ndarray,
    variant: str = "paper",
    epsilon: float = DEFAULT_CLAMP_EPSILON,
) -> PnsBounds:
    """Clamped lower bounds on per-feature PNS, one per (sample, feature)."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if not 0 < epsilon <= 0.1:
        raise ValueError("clamp epsilon must lie in (0, 0.1]")
    probs_orig = np.asarray(probs_orig, dtype=np.float64)
    probs_cf = np.asarray(probs_cf, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, C = probs_orig.shape
    if probs_cf.ndim != 3 or probs_cf.shape[0] != n or probs_cf.shape[2] != C:
        raise ValueError("counterfactual probabilities must have shape (n, h, C)")
    if labels.shape != (n,):
        raise ValueError("labels must align with probabilities")

    rows = np.arange(n)
    p_orig_y = probs_orig[rows, labels]  # (n,)
    p_cf_y = probs_cf[rows, :, labels]  # (n, h)
    if variant == "paper":
        raw = p_orig_y[:, None] - (1.0 - p_cf_y)
    else:
        raw = p_orig_y[:, None] - p_cf_y
    lb = np.maximum(raw, epsilon)
    return PnsBounds(lb=lb, variant=variant, clamp_epsilon=epsilon, active=raw > epsilon)


def pns_penalty(bounds: PnsBounds) -> tuple[np.ndarray, float]:
    """Mean negative log of the bounds: per-sample vector and overall mean."""
    per_sample = -np.log(bounds.lb).mean(axis=1)
    return per_sample, float(per_sample.mean())
