import math

import numpy as np
import pytest

from drsfi.datagen import (
    gen_batch,
    gen_labeled,
    load_batch,
    export_batch,
    planted_signal,
    split_indices,
    subset,
)
from drsfi.errors import ConfigError
from drsfi.metrics import auc_roc
from drsfi.model import DummyModelConfig


class TestGenBatch:
    def test_deterministic_per_seed(self):
        a = gen_batch(50, 16, 128, 0.05, seed=9)
        b = gen_batch(50, 16, 128, 0.05, seed=9)
        assert np.array_equal(a.dense.words(), b.dense.words())
        assert all(np.array_equal(x, y) for x, y in zip(a.sparse_indices, b.sparse_indices))

    def test_different_seed_differs(self):
        a = gen_batch(50, 16, 128, 0.05, seed=9)
        b = gen_batch(50, 16, 128, 0.05, seed=10)
        assert not np.array_equal(a.dense.words(), b.dense.words())

    def test_indices_sorted_unique_in_range(self):
        batch = gen_batch(200, 4, 64, 0.1, seed=1)
        for idx in batch.sparse_indices:
            assert np.all(np.diff(idx) > 0)
            assert idx.size == 0 or (idx[0] >= 0 and idx[-1] < 64)

    def test_active_count_matches_binomial_moments(self):
        # sparsity 0.01 over 8192 coordinates: mean ~ 81.9 per sample
        n, dim, p = 10_000, 8192, 0.01
        batch = gen_batch(n, 2, dim, p, seed=3)
        counts = np.array([idx.size for idx in batch.sparse_indices], dtype=np.float64)
        expected = dim * p
        sd_of_mean = math.sqrt(dim * p * (1 - p) / n)
        assert abs(counts.mean() - expected) < 3 * sd_of_mean

    def test_dense_moments(self):
        batch = gen_batch(10_000, 128, 16, 0.1, seed=4)
        dense = batch.dense.array
        assert abs(float(dense.mean())) < 0.05
        assert abs(float(dense.var()) - 1.0) < 0.1

    def test_dense_values_finite(self):
        batch = gen_batch(1000, 32, 16, 0.5, seed=5)
        assert np.all(np.isfinite(batch.dense.array))

    def test_invalid_sparsity(self):
        with pytest.raises(ConfigError):
            gen_batch(10, 4, 16, 0.0, seed=0)
        with pytest.raises(ConfigError):
            gen_batch(10, 4, 16, 1.0, seed=0)


class TestGenLabeled:
    CFG = DummyModelConfig(mlp_depth=1, mlp_hidden=8, embed_dim=8,
                           dense_dim=32, sparse_dim=512)

    def test_noiseless_labels_are_the_planted_threshold(self):
        batch, planted = gen_labeled(2000, self.CFG, 0.02, noise=0.0, seed=7)
        s = planted.logits(batch)
        assert np.array_equal(batch.labels, (s > 0).astype(np.uint8))
        assert auc_roc(s, batch.labels) == 1.0

    def test_huge_noise_drives_auc_to_chance(self):
        batch, planted = gen_labeled(8000, self.CFG, 0.02, noise=1e6, seed=8)
        auc = auc_roc(planted.logits(batch), batch.labels)
        assert abs(auc - 0.5) < 0.03

    def test_default_noise_planted_auc_in_expected_band(self):
        batch, planted = gen_labeled(20_000, self.CFG, 0.02, noise=1.0, seed=11)
        auc = auc_roc(planted.logits(batch), batch.labels)
        assert 0.80 <= auc <= 0.95

    def test_planted_signal_reconstructible(self):
        batch, planted = gen_labeled(100, self.CFG, 0.02, noise=1.0, seed=12)
        again = planted_signal(self.CFG, 0.02, seed=12)
        assert np.array_equal(planted.dense_weights, again.dense_weights)
        assert np.array_equal(planted.sparse_weights, again.sparse_weights)

    def test_deterministic(self):
        a, _ = gen_labeled(100, self.CFG, 0.02, noise=1.0, seed=13)
        b, _ = gen_labeled(100, self.CFG, 0.02, noise=1.0, seed=13)
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.dense.words(), b.dense.words())


class TestSplit:
    def test_disjoint_and_exhaustive(self):
        train, val, test = split_indices(10_000)
        joined = np.concatenate([train, val, test])
        assert np.array_equal(np.sort(joined), np.arange(10_000))

    def test_roughly_8_1_1(self):
        train, val, test = split_indices(50_000)
        assert abs(train.size / 50_000 - 0.8) < 0.01
        assert abs(val.size / 50_000 - 0.1) < 0.01
        assert abs(test.size / 50_000 - 0.1) < 0.01

    def test_stable_prefix(self):
        # sample i keeps its bucket regardless of dataset size
        t1, v1, s1 = split_indices(100)
        t2, v2, s2 = split_indices(200)
        assert np.array_equal(t1, t2[t2 < 100])
        assert np.array_equal(v1, v2[v2 < 100])
        assert np.array_equal(s1, s2[s2 < 100])

    def test_subset_view(self):
        batch, _ = gen_labeled(40, TestGenLabeled.CFG, 0.02, noise=1.0, seed=1)
        sub = subset(batch, np.array([3, 5]))
        assert sub.n == 2
        assert np.array_equal(sub.dense.array[0], batch.dense.array[3])
        assert sub.labels[1] == batch.labels[5]


class TestBatchFile:
    def test_labeled_round_trip(self, tmp_path):
        batch, _ = gen_labeled(30, TestGenLabeled.CFG, 0.05, noise=1.0, seed=2)
        path = tmp_path / "batch.tsv"
        export_batch(batch, path)
        loaded = load_batch(path)
        assert np.array_equal(loaded.dense.words(), batch.dense.words())
        assert np.array_equal(loaded.labels, batch.labels)
        assert all(
            np.array_equal(a, b)
            for a, b in zip(loaded.sparse_indices, batch.sparse_indices)
        )

    def test_unlabeled_round_trip(self, tmp_path):
        batch = gen_batch(10, 4, 32, 0.2, seed=3)
        path = tmp_path / "batch.tsv"
        export_batch(batch, path)
        loaded = load_batch(path)
        assert loaded.labels is None
        assert np.array_equal(loaded.dense.words(), batch.dense.words())

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("1\t0.5\n")
        with pytest.raises(ConfigError):
            load_batch(path)
