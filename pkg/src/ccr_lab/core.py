"""Shared domain types and the FVEC1 binary interchange format.

All numeric work in the library runs in 64-bit floats; FVEC1 files store
features as 32-bit floats, so a write/read round trip is bit-exact for the
f32 payload but not for arbitrary f64 inputs.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

FVEC_MAGIC = b"FVEC1\x00"


class FvecFormatError(ValueError):
    """Raised when an FVEC1 file is malformed."""


@dataclass(frozen=True)
class RngSeed:
    """Root of all randomness; every stochastic routine takes one explicitly."""

    seed: int

    def generator(self, stream: int = 0) -> np.random.Generator:
        """Return an independent generator for a named substream."""
        return np.random.default_rng(np.random.SeedSequence([self.seed, stream]))


@dataclass(frozen=True)
class LabeledDataset:
    """Raw inputs (causal block then spurious block), labels, optional groups.

    Group id encodes the (label j, spurious value k) pair as ``j * K + k``.
    """

    features_raw: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64 in [0, C)
    class_count: int
    causal_dim: int
    spurious_dim: int
    group_ids: np.ndarray | None = None  # (n,) int64 in [0, C*K)
    spurious_value_count: int | None = None

    def __post_init__(self):
        feats = np.asarray(self.features_raw, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "features_raw", feats)
        object.__setattr__(self, "labels", labels)
        n, d = feats.shape
        if n < 1:
            raise ValueError("dataset must contain at least one sample")
        if self.class_count < 2:
            raise ValueError("class_count must be >= 2")
        if self.causal_dim + self.spurious_dim != d:
            raise ValueError(
                f"causal_dim + spurious_dim = {self.causal_dim + self.spurious_dim}"
                f" does not match feature width {d}"
            )
        if labels.shape != (n,):
            raise ValueError("labels must align with features")
        if labels.min() < 0 or labels.max() >= self.class_count:
            raise ValueError("labels out of range")
        if self.group_ids is not None:
            groups = np.asarray(self.group_ids, dtype=np.int64)
            object.__setattr__(self, "group_ids", groups)
            if groups.shape != (n,):
                raise ValueError("group_ids must align with features")
            if self.spurious_value_count is not None:
                bound = self.class_count * self.spurious_value_count
                if groups.min() < 0 or groups.max() >= bound:
                    raise ValueError("group ids out of range")

    @property
    def n(self) -> int:
        return self.features_raw.shape[0]

    @property
    def dim(self) -> int:
        return self.features_raw.shape[1]


@dataclass(frozen=True)
class FeatureMatrix:
    """Frozen last-layer features; rows are samples."""

    values: np.ndarray  # (n, h) float64

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 2 or vals.shape[1] < 1:
            raise ValueError("features must be a non-empty 2-d matrix")
        if not np.all(np.isfinite(vals)):
            raise ValueError("features must be finite")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class CounterfactualMask:
    """Occlusion mask: feature ``dropped_feature`` zeroed, all others kept."""

    dropped_feature: int

    def apply(self, features: np.ndarray) -> np.ndarray:
        masked = np.array(features, dtype=np.float64, copy=True)
        masked[..., self.dropped_feature] = 0.0
        return masked


@dataclass(frozen=True)
class ClassifierHead:
    """The retrainable last layer: logits = features @ weights + bias."""

    weights: np.ndarray  # (h, C)
    bias: np.ndarray  # (C,)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)
        if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
            raise ValueError("head weights (h, C) and bias (C,) must agree")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("head parameters must be finite")

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def class_count(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class ObservationMask:
    """Which samples of an ideal dataset made it into the observed one."""

    observed: np.ndarray  # (n,) bool

    def __post_init__(self):
        obs = np.asarray(self.observed, dtype=bool)
        object.__setattr__(self, "observed", obs)
        if obs.ndim != 1 or not obs.any():
            raise ValueError("observation mask needs at least one observed sample")


def write_fvec(
    path,
    features: np.ndarray,
    labels: np.ndarray,
    class_count: int,
    group_ids: np.ndarray | None = None,
) -> None:
    """Write features/labels/optional groups in the FVEC1 binary format.

    Layout (little-endian): magic "FVEC1\\0"; u32 n; u32 h; u32 C;
    u8 has_group; then per record u32 label, [i32 group], h f32 features.
    Byte-exact for given inputs.
    """
    feats = np.asarray(features, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    if feats.ndim != 2:
        raise ValueError("features must be 2-d")
    n, h = feats.shape
    if n < 1:
        raise ValueError("cannot write an empty dataset")
    if h < 1:
        raise ValueError("feature dim must be >= 1")
    if labels.shape != (n,):
        raise ValueError("labels must align with features")
    if labels.min() < 0 or labels.max() >= class_count:
        raise ValueError("labels out of range for class_count")
    has_group = group_ids is not None
    if has_group:
        groups = np.asarray(group_ids, dtype=np.int32)
        if groups.shape != (n,):
            raise ValueError("group_ids must align with features")

    with open(path, "wb") as fh:
        fh.write(FVEC_MAGIC)
        fh.write(struct.pack("<IIIB", n, h, class_count, 1 if has_group else 0))
        for i in range(n):
            fh.write(struct.pack("<I", int(labels[i])))
            if has_group:
                fh.write(struct.pack("<i", int(groups[i])))
            fh.write(feats[i].astype("<f4").tobytes())


def read_fvec(path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None, int]:
    """Read an FVEC1 file; exact inverse of :func:`write_fvec` on valid files.

    Returns (features float64 (n, h), labels int64, groups int64 or None, C).
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(FVEC_MAGIC) or data[: len(FVEC_MAGIC)] != FVEC_MAGIC:
        raise FvecFormatError(f"{path}: bad magic, not an FVEC1 file")
    off = len(FVEC_MAGIC)
    if len(data) < off + 13:
        raise FvecFormatError(f"{path}: truncated header")
    n, h, class_count, has_group = struct.unpack_from("<IIIB", data, off)
    off += 13
    if n < 1 or h < 1:
        raise FvecFormatError(f"{path}: invalid header counts n={n} h={h}")
    if has_group not in (0, 1):
        raise FvecFormatError(f"{path}: invalid has_group flag {has_group}")
    rec_size = 4 + (4 if has_group else 0) + 4 * h
    if len(data) != off + n * rec_size:
        raise FvecFormatError(
            f"{path}: truncated payload, expected {off + n * rec_size} bytes, got {len(data)}"
        )
    feats = np.empty((n, h), dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    groups = np.empty(n, dtype=np.int64) if has_group else None
    for i in range(n):
        (label,) = struct.unpack_from("<I", data, off)
        off += 4
        if label >= class_count:
            raise FvecFormatError(f"{path}: record {i} label {label} >= C={class_count}")
        labels[i] = label
        if has_group:
            (g,) = struct.unpack_from("<i", data, off)
            off += 4
            groups[i] = g
        row = np.frombuffer(data, dtype="<f4", count=h, offset=off)
        off += 4 * h
        if not np.all(np.isfinite(row)):
            raise FvecFormatError(f"{path}: record {i} contains non-finite feature values")
        feats[i] = row
    return feats, labels, groups, class_count


def dataset_to_fvec(dataset: LabeledDataset, path) -> None:
    """Write a LabeledDataset's raw features through the FVEC1 writer."""
    write_fvec(
        path,
        dataset.features_raw,
        dataset.labels,
        dataset.class_count,
        group_ids=dataset.group_ids,
    )


def dataset_from_fvec(path, causal_dim: int | None = None,
                      spurious_value_count: int | None = None) -> LabeledDataset:
    """Read an FVEC1 file back into a LabeledDataset.

    Without a sidecar the causal/spurious split is unknown; by default the
    whole width is treated as causal.
    """
    feats, labels, groups, class_count = read_fvec(path)
    d = feats.shape[1]
    if causal_dim is None:
        causal_dim = d
    return LabeledDataset(
        features_raw=feats,
        labels=labels,
        class_count=class_count,
        causal_dim=causal_dim,
        spurious_dim=d - causal_dim,
        group_ids=groups,
        spurious_value_count=spurious_value_count,
    )
