"""Core types and FVEC1 binary format."""
import struct

import numpy as np
import pytest

from ccr_lab.core import (FvecFormatError, LabeledDataset, RngSeed,
                          dataset_from_fvec, dataset_to_fvec, read_fvec,
                          write_fvec)


def test_rng_seed_streams_independent_and_deterministic():
    seed = RngSeed(42)
    a1 = seed.generator(stream=1).random(5)
    a2 = seed.generator(stream=1).random(5)
    b = seed.generator(stream=2).random(5)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, b)


class TestLabeledDataset:
    def test_valid_construction(self):
        ds = LabeledDataset(
            features_raw=np.zeros((4, 3)), labels=np.array([0, 1, 0, 1]),
            class_count=2, causal_dim=2, spurious_dim=1,
        )
        assert ds.n == 4 and ds.dim == 3

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            LabeledDataset(np.zeros((2, 2)), np.array([0, 2]),
                           class_count=2, causal_dim=2, spurious_dim=0)

    def test_block_widths_must_sum(self):
        with pytest.raises(ValueError):
            LabeledDataset(np.zeros((2, 3)), np.array([0, 1]),
                           class_count=2, causal_dim=1, spurious_dim=1)

    def test_group_id_range_checked(self):
        with pytest.raises(ValueError):
            LabeledDataset(np.zeros((2, 2)), np.array([0, 1]),
                           class_count=2, causal_dim=2, spurious_dim=0,
                           group_ids=np.array([0, 4]), spurious_value_count=2)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            LabeledDataset(np.zeros((0, 2)), np.zeros(0, dtype=int),
                           class_count=2, causal_dim=2, spurious_dim=0)


class TestFvecFormat:
    def test_single_record_layout(self, tmp_path):
        # magic(6) + n/h/C (12) + has_group(1) + label(4) + 2 f32 (8) = 31 bytes
        path = tmp_path / "one.fvec"
        write_fvec(path, np.array([[0.5, -1.0]]), np.array([0]), class_count=2)
        blob = path.read_bytes()
        assert blob[:6] == b"FVEC1\x00"
        assert len(blob) == 31
        n, h, c = struct.unpack_from("<III", blob, 6)
        assert (n, h, c) == (1, 2, 2)
        assert blob[18] == 0  # has_group
        assert struct.unpack_from("<I", blob, 19)[0] == 0  # label
        assert struct.unpack_from("<2f", blob, 23) == (0.5, -1.0)

    def test_roundtrip_with_groups(self, tmp_path):
        rng = np.random.default_rng(0)
        feats = rng.normal(size=(17, 5)).astype(np.float32).astype(np.float64)
        labels = rng.integers(0, 3, size=17)
        groups = rng.integers(0, 6, size=17)
        path = tmp_path / "rt.fvec"
        write_fvec(path, feats, labels, class_count=3, group_ids=groups)
        feats2, labels2, groups2, c = read_fvec(path)
        assert c == 3
        assert np.array_equal(feats2, feats)  # bit-exact: inputs were f32-representable
        assert np.array_equal(labels2, labels)
        assert np.array_equal(groups2, groups)

    def test_roundtrip_without_groups(self, tmp_path):
        path = tmp_path / "ng.fvec"
        write_fvec(path, np.ones((3, 2)), np.array([0, 1, 0]), class_count=2)
        _, _, groups, _ = read_fvec(path)
        assert groups is None

    def test_write_rejects_empty(self, tmp_path):
        with pytest.raises(ValueError):
            write_fvec(tmp_path / "e.fvec", np.zeros((0, 2)),
                       np.zeros(0, dtype=int), class_count=2)

    def test_bad_magic_diagnostic(self, tmp_path):
        path = tmp_path / "bad.fvec"
        path.write_bytes(b"XXXXX\x00" + b"\x00" * 32)
        with pytest.raises(FvecFormatError, match="magic"):
            read_fvec(path)

    def test_truncation_diagnostic(self, tmp_path):
        path = tmp_path / "t.fvec"
        write_fvec(path, np.ones((2, 3)), np.array([0, 1]), class_count=2)
        blob = path.read_bytes()
        path.write_bytes(blob[:-5])  # cut mid-record
        with pytest.raises(FvecFormatError, match="truncat"):
            read_fvec(path)

    def test_label_out_of_range_diagnostic(self, tmp_path):
        path = tmp_path / "l.fvec"
        write_fvec(path, np.ones((1, 1)), np.array([0]), class_count=2)
        blob = bytearray(path.read_bytes())
        struct.pack_into("<I", blob, 19, 7)  # label 7 >= C=2
        path.write_bytes(bytes(blob))
        with pytest.raises(FvecFormatError, match="label"):
            read_fvec(path)

    def test_non_finite_diagnostic(self, tmp_path):
        path = tmp_path / "nan.fvec"
        write_fvec(path, np.ones((1, 1)), np.array([0]), class_count=2)
        blob = bytearray(path.read_bytes())
        struct.pack_into("<f", blob, 23, float("nan"))
        path.write_bytes(bytes(blob))
        with pytest.raises(FvecFormatError, match="finite"):
            read_fvec(path)

    def test_dataset_roundtrip_helpers(self, tmp_path):
        ds = LabeledDataset(
            features_raw=np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]),
            labels=np.array([0, 1]), class_count=2,
            causal_dim=2, spurious_dim=1,
            group_ids=np.array([0, 3]), spurious_value_count=2,
        )
        path = tmp_path / "ds.fvec"
        dataset_to_fvec(ds, path)
        back = dataset_from_fvec(path, causal_dim=2, spurious_value_count=2)
        assert np.array_equal(back.features_raw, ds.features_raw)
        assert np.array_equal(back.labels, ds.labels)
        assert np.array_equal(back.group_ids, ds.group_ids)
        assert back.causal_dim == 2 and back.spurious_dim == 1

    def test_write_is_byte_stable(self, tmp_path):
        feats = np.random.default_rng(1).normal(size=(9, 4))
        labels = np.arange(9) % 3
        p1, p2 = tmp_path / "a.fvec", tmp_path / "b.fvec"
        write_fvec(p1, feats, labels, class_count=3)
        write_fvec(p2, feats, labels, class_count=3)
        assert p1.read_bytes() == p2.read_bytes()
