"""JSONL text records -> frozen transformer embeddings -> FVEC1 file.

The embeddings are frozen (no fine-tuning): the downstream trainer's d->h
projection plays the role of the added trainable layer. Output follows the
FVEC1 interchange format (little-endian): magic "FVEC1\\0"; u32 n; u32 h;
u32 C; u8 has_group; then per record u32 label, [i32 group], h x f32
features.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

POOLING_MODES = ("cls", "mean")

MAGIC = b"FVEC1\x00"


class ExportError(ValueError):
    """Malformed input records or invalid export configuration."""


@dataclass(frozen=True)
class TextRecord:
    """One labeled example: single text or a premise/hypothesis pair."""

    text: str
    text_pair: str | None
    label: int
    group: int | None

    def __post_init__(self):
        if not self.text or (self.text_pair is not None and not self.text_pair):
            raise ExportError("text fields must be non-empty")
        if self.label < 0:
            raise ExportError("label must be >= 0")


def _parse_record(raw: dict, lineno: int) -> TextRecord:
    if "label" not in raw:
        raise ExportError(f"line {lineno}: record missing \"label\"")
    label = raw["label"]
    if not isinstance(label, int) or isinstance(label, bool):
        raise ExportError(f"line {lineno}: \"label\" must be an integer")
    group = raw.get("group")
    if group is not None and (not isinstance(group, int) or isinstance(group, bool)):
        raise ExportError(f"line {lineno}: \"group\" must be an integer")

    if "text" in raw:
        text, pair = raw["text"], None
    elif "premise" in raw and "hypothesis" in raw:
        text, pair = raw["premise"], raw["hypothesis"]
    else:
        raise ExportError(
            f"line {lineno}: record needs \"text\" or \"premise\"/\"hypothesis\""
        )
    if not isinstance(text, str) or (pair is not None and not isinstance(pair, str)):
        raise ExportError(f"line {lineno}: text fields must be strings")
    try:
        return TextRecord(text=text, text_pair=pair, label=label, group=group)
    except ExportError as exc:
        raise ExportError(f"line {lineno}: {exc}") from None


def read_jsonl(path) -> list[TextRecord]:
    """Parse newline-delimited JSON records, reporting errors by line number."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ExportError(f"line {lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(raw, dict):
                raise ExportError(f"line {lineno}: record must be a JSON object")
            records.append(_parse_record(raw, lineno))
    if not records:
        raise ExportError(f"no records found in {path}")

    with_group = [r.group is not None for r in records]
    if any(with_group) and not all(with_group):
        missing = with_group.index(False) + 1
        raise ExportError(
            f"record {missing} lacks \"group\" while other records carry one"
        )
    return records


def write_fvec(path, features: np.ndarray, labels, groups=None) -> None:
    """Write features/labels/optional groups in the FVEC1 binary format."""
    feats = np.ascontiguousarray(features, dtype="<f4")
    labels = np.asarray(labels, dtype=np.int64)
    n, h = feats.shape
    if n < 1:
        raise ExportError("cannot write an empty FVEC1 file")
    if not np.isfinite(feats).all():
        raise ExportError("features must be finite")
    class_count = int(labels.max()) + 1 if int(labels.max()) >= 1 else 2
    has_group = groups is not None
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIIB", n, h, class_count, int(has_group)))
        for i in range(n):
            fh.write(struct.pack("<I", int(labels[i])))
            if has_group:
                fh.write(struct.pack("<i", int(groups[i])))
            fh.write(feats[i].tobytes())


def embed_records(
    records: list[TextRecord],
    model_name: str,
    pooling: str = "cls",
    batch_size: int = 32,
) -> np.ndarray:
    """Frozen-encoder embeddings, one row per record, order-preserving."""
    if pooling not in POOLING_MODES:
        raise ExportError(f"pooling must be one of {POOLING_MODES}")
    if batch_size < 1:
        raise ExportError("batch size must be >= 1")

    import torch
    from transformers import AutoModel, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(model_name)
    model = AutoModel.from_pretrained(model_name)
    model.eval()

    rows = []
    with torch.no_grad():
        for start in range(0, len(records), batch_size):
            batch = records[start:start + batch_size]
            texts = [r.text for r in batch]
            pairs = [r.text_pair for r in batch]
            if any(p is not None for p in pairs):
                encoded = tokenizer(texts, pairs, padding=True, truncation=True,
                                    return_tensors="pt")
            else:
                encoded = tokenizer(texts, padding=True, truncation=True,
                                    return_tensors="pt")
            hidden = model(**encoded).last_hidden_state  # (b, t, h)
            if pooling == "cls":
                pooled = hidden[:, 0, :]
            else:
                mask = encoded["attention_mask"].unsqueeze(-1).to(hidden.dtype)
                pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1)
            rows.append(pooled.double().cpu().numpy())
    return np.concatenate(rows, axis=0)


def export_embeddings(
    input_path,
    model_name: str,
    pooling: str,
    out_path,
    batch_size: int = 32,
) -> int:
    """Full export: JSONL in, FVEC1 out. Returns the number of records."""
    records = read_jsonl(input_path)
    features = embed_records(records, model_name, pooling, batch_size)
    labels = np.array([r.label for r in records], dtype=np.int64)
    groups = None
    if records[0].group is not None:
        groups = np.array([r.group for r in records], dtype=np.int64)
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    write_fvec(out_path, features, labels, groups)
    return len(records)
