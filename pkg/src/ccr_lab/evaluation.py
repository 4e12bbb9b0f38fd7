"""Group-aware accuracy metrics and occlusion-based block attribution."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ClassifierHead, LabeledDataset, RngSeed
from .model import Encoder, encode, head_probs


@dataclass(frozen=True)
class MetricsReport:
    mean_accuracy: float
    per_group_accuracy: dict  # group id -> accuracy
    worst_group_accuracy: float
    group_sizes: dict  # group id -> count

    def to_dict(self) -> dict:
        return {
            "mean_accuracy": self.mean_accuracy,
            "worst_group_accuracy": self.worst_group_accuracy,
            "per_group_accuracy": {str(g): a for g, a in self.per_group_accuracy.items()},
            "group_sizes": {str(g): s for g, s in self.group_sizes.items()},
        }

    def render_table(self) -> str:
        lines = [f"{'group':>8}  {'size':>8}  {'accuracy':>8}"]
        for g in sorted(self.per_group_accuracy):
            lines.append(
                f"{g:>8}  {self.group_sizes[g]:>8}  {self.per_group_accuracy[g]:>8.4f}"
            )
        lines.append(f"{'mean':>8}  {sum(self.group_sizes.values()):>8}  {self.mean_accuracy:>8.4f}")
        lines.append(f"{'worst':>8}  {'':>8}  {self.worst_group_accuracy:>8.4f}")
        return "\n".join(lines)


@dataclass(frozen=True)
class AttributionReport:
    # block name -> per-class mean |delta p| when the block is zeroed
    block_attribution: dict

    def to_dict(self) -> dict:
        return {name: list(vals) for name, vals in self.block_attribution.items()}


def group_metrics(preds: np.ndarray, labels: np.ndarray, group_ids: np.ndarray) -> MetricsReport:
    """Per-group, worst-group, and size-weighted mean accuracy."""
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if group_ids is None:
        raise ValueError("group metrics require group ids")
    groups = np.asarray(group_ids, dtype=np.int64)
    if not (preds.shape == labels.shape == groups.shape):
        raise ValueError("preds, labels, and group ids must be aligned")

    correct = preds == labels
    per_group, sizes = {}, {}
    for g in np.unique(groups):
        in_g = groups == g
        size = int(in_g.sum())
        if size == 0:
            raise ValueError(f"empty group {g}")
        per_group[int(g)] = float(correct[in_g].mean())
        sizes[int(g)] = size
    return MetricsReport(
        mean_accuracy=float(correct.mean()),
        per_group_accuracy=per_group,
        worst_group_accuracy=min(per_group.values()),
        group_sizes=sizes,
    )


def occlusion_attribution(
    encoder: Encoder,
    head: ClassifierHead,
    dataset: LabeledDataset,
    block_spec: dict,
    seed: RngSeed = RngSeed(0),
    max_samples: int = 200,
) -> AttributionReport:
    """Mean |probability change| per class when each raw-input block is zeroed.

    `block_spec` maps block names to half-open [start, stop) ranges that must
    partition the raw input dimensions. At most `max_samples` instances are
    used, drawn by a seeded subsample.
    """
    covered = np.zeros(dataset.dim, dtype=bool)
    for name, (start, stop) in block_spec.items():
        if start < 0 or stop > dataset.dim or start >= stop:
            raise ValueError(f"bad block range for {name!r}")
        if covered[start:stop].any():
            raise ValueError(f"block {name!r} overlaps another block")
        covered[start:stop] = True
    if not covered.all():
        raise ValueError("block spec does not cover every input dimension")

    if dataset.n > max_samples:
        idx = np.sort(seed.generator(stream=30).choice(dataset.n, max_samples, replace=False))
        inputs = dataset.features_raw[idx]
    else:
        inputs = dataset.features_raw

    base = head_probs(head, encode(encoder, inputs))
    attribution = {}
    for name, (start, stop) in block_spec.items():
        occluded = inputs.copy()
        occluded[:, start:stop] = 0.0
        probs = head_probs(head, encode(encoder, occluded))
        attribution[name] = np.abs(probs - base).mean(axis=0)
    return AttributionReport(block_attribution=attribution)


def default_block_spec(dataset: LabeledDataset) -> dict:
    """Causal/spurious split from the dataset's own block widths."""
    return {
        "causal": (0, dataset.causal_dim),
        "spurious": (dataset.causal_dim, dataset.dim),
    }
