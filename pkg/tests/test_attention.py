import numpy as np
import pytest

from waveletformer.attention import (AttentionConfig, WindowAttention, mhca, shifted_window_mask, window_merge,
                                     window_mhsa, window_partition)
from waveletformer.gradcheck import grad_check
from waveletformer.tensor import Tensor


def make_attn(channels=8, heads=2, window=4, seed=0, scale=0.3, **kw):
    rng = np.random.default_rng(seed)
    attn = WindowAttention(AttentionConfig.for_channels(channels, heads, window, **kw), rng)
    for p in attn.parameters().values():
        p.data = rng.standard_normal(p.shape) * scale
    return attn


class TestConfig:
    def test_channels(self):
        assert AttentionConfig(2, 4, 4).channels == 8

    def test_indivisible_heads(self):
        with pytest.raises(ValueError):
            AttentionConfig.for_channels(6, 4, 4)

    @pytest.mark.parametrize("kw", [dict(heads=0, head_dim=4, window=4), dict(heads=2, head_dim=4, window=4, shift=4)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            AttentionConfig(**kw)


class TestPartition:
    def test_single_window_is_raster_order(self, rng):
        x = rng.standard_normal((1, 3, 4, 4))
        t = window_partition(Tensor(x), 4).data
        assert t.shape == (1, 16, 3)
        np.testing.assert_array_equal(t[0], x[0].reshape(3, 16).T)

    def test_counting(self):
        t = window_partition(Tensor(np.arange(16.0).reshape(1, 1, 4, 4)), 2)
        assert t.shape == (4, 4, 1)
        np.testing.assert_array_equal(t.data[1, :, 0], [2, 3, 6, 7])

    def test_merge_inverts_partition(self, rng):
        x = rng.standard_normal((2, 4, 8, 12))
        y = window_merge(window_partition(Tensor(x), 4), 2, 8, 12).data
        np.testing.assert_array_equal(y, x)

    def test_indivisible(self):
        with pytest.raises(ValueError, match="not divisible"):
            window_partition(Tensor(np.zeros((1, 1, 6, 8))), 4)


class TestSelfAttention:
    def test_rows_are_stochastic(self, rng):
        attn = make_attn()
        t = Tensor(rng.standard_normal((3, 16, 8)))
        _, w = attn.attend(t, t, return_weights=True)
        np.testing.assert_allclose(w.data.sum(axis=-1), 1.0, atol=1e-12)
        assert np.all(w.data >= 0)

    def test_zero_query_gives_uniform_average(self, rng):
        attn = make_attn()
        attn.q.weight.data[:] = 0.0
        attn.q.bias.data[:] = 0.0
        t = Tensor(rng.standard_normal((2, 16, 8)))
        _, w = attn.attend(t, t, return_weights=True)
        np.testing.assert_allclose(w.data, 1.0 / 16, atol=1e-15)
        v = t.data @ attn.v.weight.data + attn.v.bias.data
        expected = v.mean(axis=1, keepdims=True) @ attn.proj.weight.data + attn.proj.bias.data
        np.testing.assert_allclose(window_mhsa(t, attn).data, np.broadcast_to(expected, (2, 16, 8)), atol=1e-12)

    def test_permutation_equivariance(self, rng):
        attn = make_attn()
        t = rng.standard_normal((2, 16, 8))
        perm = rng.permutation(16)
        a = window_mhsa(Tensor(t), attn).data
        b = window_mhsa(Tensor(t[:, perm]), attn).data
        np.testing.assert_allclose(b, a[:, perm], atol=1e-12)

    def test_output_is_convex_combination_of_values(self, rng):
        attn = make_attn()
        t = Tensor(rng.standard_normal((1, 16, 8)))
        attn.proj.weight.data = np.eye(8)
        attn.proj.bias.data[:] = 0.0
        out = window_mhsa(t, attn).data[0]
        v = t.data[0] @ attn.v.weight.data + attn.v.bias.data
        assert np.all(out <= v.max(axis=0) + 1e-12)
        assert np.all(out >= v.min(axis=0) - 1e-12)

    def test_channel_mismatch(self):
        attn = make_attn()
        with pytest.raises(ValueError, match="heads"):
            window_mhsa(Tensor(np.zeros((1, 16, 6))), attn)

    @pytest.mark.parametrize("seed", range(5))
    def test_grad_check(self, seed):
        rng = np.random.default_rng(seed)
        attn = make_attn(seed=seed)
        t = Tensor(rng.standard_normal((1, 16, 8)))
        params = [attn.q.weight, attn.k.weight, attn.v.weight]
        assert grad_check(lambda t, *p: window_mhsa(t, attn), [t] + params, seed=seed,
                          max_elements=32).max_rel_error < 1e-4


class TestCrossAttention:
    def test_identical_values_pass_through(self, rng):
        attn = make_attn()
        q = rng.standard_normal((1, 8, 4, 4))
        kv = np.broadcast_to(rng.standard_normal((1, 8, 1, 1)), (1, 8, 4, 4)).copy()
        out = mhca(Tensor(q), Tensor(kv), attn).data
        shared = (kv[0, :, 0, 0] @ attn.v.weight.data + attn.v.bias.data) @ attn.proj.weight.data + attn.proj.bias.data
        np.testing.assert_allclose(out[0].reshape(8, -1).T, np.broadcast_to(shared, (16, 8)), atol=1e-12)

    def test_self_case_matches_mhsa(self, rng):
        attn = make_attn()
        x = rng.standard_normal((1, 8, 8, 8))
        via_maps = mhca(Tensor(x), Tensor(x.copy()), attn).data
        tokens = window_partition(Tensor(x), 4)
        via_tokens = window_merge(window_mhsa(tokens, attn), 1, 8, 8).data
        np.testing.assert_allclose(via_maps, via_tokens, atol=1e-13)

    def test_shape_mismatch(self):
        attn = make_attn()
        with pytest.raises(ValueError):
            mhca(Tensor(np.zeros((1, 8, 4, 4))), Tensor(np.zeros((1, 8, 8, 4))), attn)

    @pytest.mark.parametrize("seed", range(5))
    def test_grad_check_both_inputs(self, seed):
        rng = np.random.default_rng(seed)
        attn = make_attn(seed=seed)
        q, kv = Tensor(rng.standard_normal((1, 8, 4, 8))), Tensor(rng.standard_normal((1, 8, 4, 8)))
        assert grad_check(lambda a, b: mhca(a, b, attn), [q, kv], seed=seed).max_rel_error < 1e-4


class TestOptionalRefinements:
    def test_shift_mask_blocks_wrapped_regions(self):
        m = shifted_window_mask(8, 8, 4, 2)
        assert m.shape == (4, 16, 16)
        assert np.all(m[0] == 0.0)
        assert np.any(m[-1] < 0)
        np.testing.assert_array_equal(m, np.transpose(m, (0, 2, 1)))

    def test_zero_bias_and_shift_zero_match_plain(self, rng):
        plain = make_attn(seed=3)
        biased = make_attn(seed=3, rel_pos_bias=True)
        for name, p in plain.parameters().items():
            biased.parameters()[name].data = p.data.copy()
        biased.rel_bias.data[:] = 0.0
        x = Tensor(rng.standard_normal((1, 8, 8, 8)))
        np.testing.assert_allclose(biased(x).data, plain(x).data, atol=1e-14)

    def test_rel_bias_breaks_permutation_equivariance(self, rng):
        attn = make_attn(rel_pos_bias=True, scale=1.0)
        t = rng.standard_normal((1, 16, 8))
        perm = np.roll(np.arange(16), 1)
        a = window_mhsa(Tensor(t), attn).data
        b = window_mhsa(Tensor(t[:, perm]), attn).data
        assert np.abs(b - a[:, perm]).max() > 1e-6

    @pytest.mark.parametrize("kw", [dict(rel_pos_bias=True), dict(shift=2)])
    def test_grad_check(self, kw, rng):
        attn = make_attn(**kw)
        x = Tensor(rng.standard_normal((1, 8, 8, 8)))
        assert grad_check(lambda x: attn(x), [x], max_elements=64).max_rel_error < 1e-4
