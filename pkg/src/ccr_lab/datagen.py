"""Synthetic spurious-correlation benchmark generator.

Produces an ideal (balanced) dataset plus a biased observed subsample with
known group structure, so every reweighting claim can be checked against
ground truth.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .core import LabeledDataset, ObservationMask, RngSeed


@dataclass(frozen=True)
class SyntheticConfig:
    class_count: int
    spurious_value_count: int
    samples_per_class: int
    causal_dim: int
    spurious_dim: int
    causal_mean_scale: float
    causal_noise: float
    spurious_mean_scale: float
    spurious_noise: float
    observation_probs: tuple  # C x K, entries in (0, 1]

    def __post_init__(self):
        if self.class_count < 2 or self.spurious_value_count < 2:
            raise ValueError("need at least 2 classes and 2 spurious values")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be >= 1")
        if self.causal_dim < 1 or self.spurious_dim < 1:
            raise ValueError("block dims must be >= 1")
        for scale in (self.causal_mean_scale, self.causal_noise,
                      self.spurious_mean_scale, self.spurious_noise):
            if scale <= 0:
                raise ValueError("scales and noise levels must be > 0")
        probs = np.asarray(self.observation_probs, dtype=np.float64)
        if probs.shape != (self.class_count, self.spurious_value_count):
            raise ValueError("observation_probs must be C x K")
        if np.any(probs <= 0) or np.any(probs > 1):
            raise ValueError("observation probabilities must lie in (0, 1]")

    @property
    def observation_prob_matrix(self) -> np.ndarray:
        return np.asarray(self.observation_probs, dtype=np.float64)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SyntheticConfig":
        raw = json.loads(text)
        raw["observation_probs"] = tuple(tuple(row) for row in raw["observation_probs"])
        return cls(**raw)


def bench_v1(samples_per_class: int = 5000) -> SyntheticConfig:
    """Default benchmark: weak causal signal, strong spurious shortcut."""
    return SyntheticConfig(
        class_count=2,
        spurious_value_count=2,
        samples_per_class=samples_per_class,
        causal_dim=20,
        spurious_dim=2,
        causal_mean_scale=0.25,
        causal_noise=1.0,
        spurious_mean_scale=1.5,
        spurious_noise=0.5,
        observation_probs=((0.95, 0.05), (0.05, 0.95)),
    )


def _sign_pattern(index: int, count: int, dim: int) -> np.ndarray:
    """Deterministic +/-1 vector for class or spurious value `index` of `count`.

    Patterns cycle the binary digits of `index` across dimensions, so distinct
    indices get distinct vectors (given dim >= bits); index 0 is all -1 and
    index 1 is all +1, giving the two-class case a closed-form Bayes accuracy.
    """
    bits = max(1, (count - 1).bit_length())
    signs = np.empty(dim, dtype=np.float64)
    for d in range(dim):
        signs[d] = 1.0 if (index >> (d % bits)) & 1 else -1.0
    return signs


def generate_ideal(config: SyntheticConfig, seed: RngSeed) -> LabeledDataset:
    """Balanced dataset: per class, spurious values split evenly (+/-1 count).

    Causal block ~ N(+/- mu_c per dim, sigma_c^2); spurious block
    ~ N(+/- mu_s per dim, sigma_s^2) keyed by the spurious value.
    """
    rng = seed.generator(stream=1)
    C, K = config.class_count, config.spurious_value_count
    n_j = config.samples_per_class
    n = C * n_j
    d = config.causal_dim + config.spurious_dim

    features = np.empty((n, d), dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    groups = np.empty(n, dtype=np.int64)

    causal_means = np.stack(
        [config.causal_mean_scale * _sign_pattern(j, C, config.causal_dim) for j in range(C)]
    )
    spurious_means = np.stack(
        [config.spurious_mean_scale * _sign_pattern(k, K, config.spurious_dim) for k in range(K)]
    )

    row = 0
    for j in range(C):
        # round-robin assignment keeps per-(j, k) counts within 1 of each other
        ks = np.arange(n_j) % K
        noise_c = rng.normal(0.0, config.causal_noise, size=(n_j, config.causal_dim))
        noise_s = rng.normal(0.0, config.spurious_noise, size=(n_j, config.spurious_dim))
        features[row:row + n_j, : config.causal_dim] = causal_means[j] + noise_c
        features[row:row + n_j, config.causal_dim:] = spurious_means[ks] + noise_s
        labels[row:row + n_j] = j
        groups[row:row + n_j] = j * K + ks
        row += n_j

    return LabeledDataset(
        features_raw=features,
        labels=labels,
        class_count=C,
        causal_dim=config.causal_dim,
        spurious_dim=config.spurious_dim,
        group_ids=groups,
        spurious_value_count=K,
    )


def subsample_observe(
    ideal: LabeledDataset, config: SyntheticConfig, seed: RngSeed
) -> tuple[LabeledDataset, ObservationMask]:
    """Keep each sample independently with its group's observation probability.

    Order of surviving samples is preserved. Raises if nothing survives.
    """
    if ideal.group_ids is None:
        raise ValueError("subsample_observe requires group ids")
    probs = config.observation_prob_matrix
    K = config.spurious_value_count
    per_sample_p = probs[ideal.group_ids // K, ideal.group_ids % K]

    rng = seed.generator(stream=2)
    keep = rng.random(ideal.n) < per_sample_p
    if not keep.any():
        raise ValueError("observation step dropped every sample")

    observed = LabeledDataset(
        features_raw=ideal.features_raw[keep],
        labels=ideal.labels[keep],
        class_count=ideal.class_count,
        causal_dim=ideal.causal_dim,
        spurious_dim=ideal.spurious_dim,
        group_ids=ideal.group_ids[keep],
        spurious_value_count=ideal.spurious_value_count,
    )
    return observed, ObservationMask(observed=keep)


def group_counts(dataset: LabeledDataset) -> dict[int, int]:
    """Sample count per group id, as a plain dict for JSON sidecars."""
    if dataset.group_ids is None:
        raise ValueError("dataset has no group ids")
    ids, counts = np.unique(dataset.group_ids, return_counts=True)
    return {int(g): int(c) for g, c in zip(ids, counts)}
