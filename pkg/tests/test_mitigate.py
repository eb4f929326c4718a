import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drsfi.mitigate import (
    CLIP_CLAMP,
    CLIP_ZERO_OUTSIDE,
    MitigationPolicy,
    abft_embedding,
    abft_gemm,
    augment_checksums,
    clip_activation,
    clip_activation_array,
)
from drsfi.tensor import Tensor, embedding_bag, gemm
from oracles import row_sums


def _t(values):
    return Tensor(np.asarray(values, dtype=np.float32))


def _policy(**kw):
    return MitigationPolicy(kind=kw.pop("kind", "abft"), **kw)


class TestAugmentChecksums:
    def test_small_example(self):
        out = augment_checksums(_t([[1, 2], [3, 4]]))
        assert np.array_equal(out.array, [[1, 2, 3], [3, 4, 7]])

    def test_zero_matrix(self):
        out = augment_checksums(Tensor.zeros(3, 4))
        assert np.all(out.array == 0) and out.shape == (3, 5)

    def test_matches_row_sum_oracle(self):
        rng = np.random.default_rng(8)
        b = rng.standard_normal((8, 8)).astype(np.float32)
        out = augment_checksums(_t(b))
        assert np.array_equal(out.array[:, :8], b)
        assert np.array_equal(
            out.array[:, 8].view(np.uint32), row_sums(b).view(np.uint32)
        )


class TestAbftGemm:
    def test_clean_inputs_no_detection(self):
        rng = np.random.default_rng(1)
        a = _t(rng.standard_normal((8, 8)).astype(np.float32))
        b = _t(rng.standard_normal((8, 8)).astype(np.float32))
        c, status = abft_gemm(a, augment_checksums(b), _policy())
        assert not status.detected and not status.unrecoverable
        assert status.retries_used == 0
        assert c.bits_equal(gemm(a, b))

    def test_planted_exponent_flip_detected_first_pass(self):
        rng = np.random.default_rng(2)
        a = _t(rng.standard_normal((8, 8)).astype(np.float32))
        b_aug = augment_checksums(_t(rng.standard_normal((8, 8)).astype(np.float32)))
        b_aug.words()[2 * 9 + 3] ^= 1 << 30  # exponent MSB of one B element
        # independent confirmation that the corruption moves the row sums
        c = gemm(a, b_aug)
        assert np.any(
            np.abs(c.array[:, 8] - c.array[:, :8].sum(axis=1)) > 1e-4
        )
        _, status = abft_gemm(a, b_aug, _policy(abft_max_retries=0))
        assert status.detected

    def test_persistent_corruption_exhausts_retries(self):
        rng = np.random.default_rng(3)
        a = _t(rng.standard_normal((8, 8)).astype(np.float32))
        b_aug = augment_checksums(_t(rng.standard_normal((8, 8)).astype(np.float32)))
        b_aug.words()[5 * 9 + 1] ^= 1 << 29
        c, status = abft_gemm(a, b_aug, _policy(abft_max_retries=3))
        assert status.detected and status.unrecoverable
        assert status.retries_used == 3
        # the last computed product is still returned
        assert c.shape == (8, 8)

    def test_recovery_source_hook_models_transient_errors(self):
        rng = np.random.default_rng(4)
        a = _t(rng.standard_normal((6, 6)).astype(np.float32))
        clean = augment_checksums(_t(rng.standard_normal((6, 6)).astype(np.float32)))
        corrupted = Tensor(clean.array.copy())
        corrupted.words()[0] ^= 1 << 30
        policy = _policy(abft_max_retries=2, recovery_source=lambda: clean)
        c, status = abft_gemm(a, corrupted, policy)
        assert status.detected and not status.unrecoverable
        assert status.retries_used == 1
        assert c.bits_equal(gemm(a, Tensor(clean.array[:, :6].copy())))

    def test_unaugmented_operand_rejected(self):
        with pytest.raises(Exception):
            abft_gemm(_t([[1.0]]), _t([1.0]), _policy())


class TestAbftEmbedding:
    def _aug_table(self, seed=5, v=16, d=8):
        rng = np.random.default_rng(seed)
        return augment_checksums(_t(rng.standard_normal((v, d)).astype(np.float32)))

    def test_empty_lookup(self):
        out, status = abft_embedding(self._aug_table(), [], _policy())
        assert np.all(out.array == 0) and not status.detected

    def test_clean_lookup_matches_bag(self):
        aug = self._aug_table()
        plain = Tensor(aug.array[:, :8].copy())
        out, status = abft_embedding(aug, [3, 7, 7], _policy())
        assert not status.detected
        assert out.bits_equal(embedding_bag(plain, [3, 7, 7]))

    def test_flip_in_hit_row_detected_in_missed_row_not(self):
        aug = self._aug_table()
        hit = Tensor(aug.array.copy())
        hit.words()[2 * 9 + 0] ^= 1 << 30  # row 2, first column
        _, status = abft_embedding(hit, [2, 5], _policy())
        assert status.detected

        missed = Tensor(aug.array.copy())
        missed.words()[11 * 9 + 0] ^= 1 << 30  # row 11 never indexed
        _, status = abft_embedding(missed, [2, 5], _policy())
        assert not status.detected

    def test_persistent_corruption_unrecoverable(self):
        aug = self._aug_table()
        aug.words()[4 * 9 + 2] ^= 1 << 28
        _, status = abft_embedding(aug, [4], _policy(abft_max_retries=2))
        assert status.detected and status.unrecoverable and status.retries_used == 2

    def test_out_of_range_index(self):
        with pytest.raises(IndexError):
            abft_embedding(self._aug_table(v=4), [4], _policy())


class TestClipActivation:
    def test_zero_outside_rule(self):
        p = _policy(kind="clip", clip_mode=CLIP_ZERO_OUTSIDE, clip_threshold=6.0,
                    clip_range=None)
        assert clip_activation(3.0, p) == 3.0
        assert clip_activation(7.0, p) == 0.0
        assert clip_activation(-1.0, p) == 0.0

    def test_clamp_rule(self):
        p = _policy(kind="clip", clip_mode=CLIP_CLAMP, clip_threshold=6.0,
                    clip_range=None)
        assert clip_activation(7.0, p) == 6.0
        assert clip_activation(-1.0, p) == 0.0
        assert clip_activation(3.0, p) == 3.0

    def test_infinity_limits(self):
        zero_outside = _policy(kind="clip", clip_mode=CLIP_ZERO_OUTSIDE,
                               clip_threshold=6.0, clip_range=None)
        clamp = _policy(kind="clip", clip_mode=CLIP_CLAMP, clip_threshold=6.0,
                        clip_range=None)
        assert clip_activation(float("inf"), zero_outside) == 0.0
        assert clip_activation(float("inf"), clamp) == 6.0
        assert clip_activation(float("-inf"), clamp) == 0.0

    def test_nan_maps_to_zero(self):
        for mode in (CLIP_ZERO_OUTSIDE, CLIP_CLAMP):
            p = _policy(kind="clip", clip_mode=mode, clip_range=None)
            assert clip_activation(float("nan"), p) == 0.0

    def test_symmetric_range_applies_before_the_rule(self):
        # default policy: clamp mode, range [-6, 6] -- the ReLU6-style shape
        p = MitigationPolicy(kind="clip")
        assert p.clip_range == (-6.0, 6.0) and p.clip_threshold == 6.0
        assert clip_activation(1e9, p) == 6.0
        assert clip_activation(float("inf"), p) == 6.0
        assert clip_activation(-50.0, p) == 0.0

    @given(st.floats(allow_nan=True, allow_infinity=True, width=32))
    def test_outputs_confined_to_clip_interval(self, x):
        for mode in (CLIP_ZERO_OUTSIDE, CLIP_CLAMP):
            p = _policy(kind="clip", clip_mode=mode, clip_threshold=6.0,
                        clip_range=(-6.0, 6.0))
            out = clip_activation(x, p)
            assert 0.0 <= out <= 6.0

    @given(
        st.lists(st.floats(allow_nan=True, allow_infinity=True, width=32),
                 min_size=1, max_size=32)
    )
    @settings(max_examples=50)
    def test_array_matches_scalar_semantics(self, values):
        for mode in (CLIP_ZERO_OUTSIDE, CLIP_CLAMP):
            p = _policy(kind="clip", clip_mode=mode, clip_threshold=6.0,
                        clip_range=(-6.0, 6.0))
            arr = clip_activation_array(np.array(values, dtype=np.float32), p)
            scalars = [clip_activation(np.float32(v), p) for v in values]
            assert np.array_equal(arr, np.array(scalars, dtype=np.float32))

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            MitigationPolicy(kind="clip", clip_threshold=0.0)
        with pytest.raises(ValueError):
            MitigationPolicy(kind="abft", abft_tolerance=0.0)
        with pytest.raises(ValueError):
            MitigationPolicy(kind="abft", abft_max_retries=-1)
        with pytest.raises(ValueError):
            MitigationPolicy(kind="ward")
