import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from waveletformer.gradcheck import grad_check
from waveletformer.tensor import Tensor
from waveletformer.verify import orthonormality_errors
from waveletformer.wavelet import (FAMILIES, SubbandSet, WaveletSpec, dwt2d, dwt2d_multilevel, dwt2d_stacked,
                                   idwt2d, idwt2d_multilevel, idwt2d_stacked, make_filters)


def daubechies_oracle(order: int) -> np.ndarray:
    """Minimum-phase Daubechies low-pass by spectral factorisation, in plain double precision."""
    p = [math.comb(order - 1 + k, k) for k in range(order)]
    ys = np.roots(p[::-1]) if order > 1 else np.array([])
    zs = []
    for y in ys:
        # y = (2 - z - 1/z) / 4  <=>  z^2 - (2 - 4y) z + 1 = 0; keep the root inside the unit circle
        r = np.roots([1.0, -(2.0 - 4.0 * y), 1.0])
        zs.append(r[np.argmin(np.abs(r))])
    h = np.array([1.0])
    for _ in range(order):
        h = np.convolve(h, [1.0, 1.0])
    h = np.real(np.convolve(h, np.poly(zs))) if zs else h
    return h * math.sqrt(2.0) / h.sum()


def analysis_matrix(h: np.ndarray, g: np.ndarray, n: int) -> np.ndarray:
    a = np.zeros((n, n))
    for i in range(n // 2):
        for k in range(h.size):
            a[i, (2 * i + k) % n] += h[k]
            a[n // 2 + i, (2 * i + k) % n] += g[k]
    return a


class TestFilters:
    def test_haar_closed_form(self):
        h, g = make_filters("haar")
        np.testing.assert_array_equal(h, [1 / math.sqrt(2), 1 / math.sqrt(2)])
        assert h.sum() == pytest.approx(math.sqrt(2), abs=1e-15)
        np.testing.assert_array_equal(g, [h[1], -h[0]])

    def test_db1_alias(self):
        np.testing.assert_array_equal(make_filters("db1")[0], make_filters("haar")[0])

    def test_db2_closed_form(self):
        s3 = math.sqrt(3)
        ref = np.array([1 + s3, 3 + s3, 3 - s3, 1 - s3]) / (4 * math.sqrt(2))
        np.testing.assert_array_equal(make_filters("db2")[0], ref)
        assert abs(np.dot(ref, ref) - 1.0) < 1e-12
        assert abs(np.dot(ref[2:], ref[:2])) < 1e-12

    @pytest.mark.parametrize("family,order", [("haar", 1), ("db2", 2), ("db4", 4)])
    def test_matches_spectral_factorisation(self, family, order):
        np.testing.assert_allclose(make_filters(family)[0], daubechies_oracle(order), atol=1e-12)

    @pytest.mark.parametrize("family", FAMILIES)
    def test_orthonormality(self, family):
        errs = orthonormality_errors(family)
        assert max(errs.values()) < 1e-12, errs

    @pytest.mark.parametrize("family,order", [("haar", 1), ("db2", 2), ("db4", 4)])
    def test_vanishing_moments(self, family, order):
        _, g = make_filters(family)
        k = np.arange(g.size, dtype=np.float64)
        for m in range(order):
            assert abs(np.sum(g * k ** m)) < 1e-9 * max(1.0, g.size ** m)

    def test_quadrature_mirror(self):
        for fam in FAMILIES:
            h, g = make_filters(fam)
            n = h.size
            np.testing.assert_array_equal(g, [(-1) ** k * h[n - 1 - k] for k in range(n)])

    def test_unknown_family(self):
        with pytest.raises(ValueError, match="unknown wavelet"):
            make_filters("sym5")

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            WaveletSpec("db2", levels=0)
        with pytest.raises(ValueError):
            WaveletSpec("db2", boundary="symmetric")


class TestAnalysis:
    def test_haar_constant_image(self):
        s = dwt2d(Tensor(np.ones((1, 1, 4, 4))), "haar")
        # 1/sqrt(2) is inexact in binary, so LL is 2 only to rounding; high-pass is exactly zero
        np.testing.assert_allclose(s.ll.data, 2.0, rtol=0, atol=1e-15)
        for band in (s.lh, s.hl, s.hh):
            np.testing.assert_array_equal(band.data, 0.0)

    def test_haar_identity_block(self):
        s = dwt2d(Tensor(np.eye(2).reshape(1, 1, 2, 2)), "haar")
        assert s.ll.data.item() == pytest.approx(1.0, abs=1e-15)
        assert s.hh.data.item() == pytest.approx(1.0, abs=1e-15)
        assert s.lh.data.item() == 0.0 and s.hl.data.item() == 0.0

    @pytest.mark.parametrize("family", ["db2", "db4"])
    def test_constant_input_kills_high_pass(self, family):
        s = dwt2d(Tensor(np.full((1, 2, 8, 8), 0.7)), family)
        for band in (s.lh, s.hl, s.hh):
            assert np.abs(band.data).max() < 1e-15

    @pytest.mark.parametrize("family", FAMILIES)
    def test_matches_matrix_oracle(self, family, rng):
        h, g = make_filters(family)
        x = rng.standard_normal((8, 12))
        m = analysis_matrix(h, g, 8) @ x @ analysis_matrix(h, g, 12).T
        s = dwt2d(Tensor(x.reshape(1, 1, 8, 12)), family)
        np.testing.assert_allclose(s.ll.data[0, 0], m[:4, :6], atol=1e-13)
        np.testing.assert_allclose(s.lh.data[0, 0], m[4:, :6], atol=1e-13)
        np.testing.assert_allclose(s.hl.data[0, 0], m[:4, 6:], atol=1e-13)
        np.testing.assert_allclose(s.hh.data[0, 0], m[4:, 6:], atol=1e-13)

    @pytest.mark.parametrize("family", FAMILIES)
    def test_analysis_matrix_is_orthogonal(self, family):
        a = analysis_matrix(*make_filters(family), 16)
        np.testing.assert_allclose(a @ a.T, np.eye(16), atol=1e-12)

    def test_odd_extent_rejected(self):
        with pytest.raises(ValueError, match="even"):
            dwt2d(Tensor(np.zeros((1, 1, 5, 4))))

    def test_odd_extent_at_deeper_level(self):
        with pytest.raises(ValueError, match="level 2"):
            dwt2d_multilevel(Tensor(np.zeros((1, 1, 6, 6))), WaveletSpec("haar", 2))

    def test_subband_shapes_must_agree(self):
        with pytest.raises(ValueError):
            SubbandSet(*(Tensor(np.zeros((1, 1, 2, n))) for n in (2, 2, 2, 3)))


class TestSynthesis:
    def test_haar_single_coefficient(self):
        z = np.zeros((1, 1, 1, 1))
        out = idwt2d(SubbandSet(Tensor(np.full((1, 1, 1, 1), 2.0)), Tensor(z), Tensor(z), Tensor(z)), "haar")
        np.testing.assert_allclose(out.data, np.ones((1, 1, 2, 2)), atol=1e-15)

    def test_zero_subbands(self):
        out = idwt2d_stacked(Tensor(np.zeros((1, 4, 2, 3, 3))), "db2")
        np.testing.assert_array_equal(out.data, 0.0)

    @pytest.mark.parametrize("family", FAMILIES)
    @pytest.mark.parametrize("levels", [1, 2, 3])
    def test_perfect_reconstruction(self, family, levels, rng):
        spec = WaveletSpec(family, levels)
        x = rng.standard_normal((2, 3, 64, 64))
        y = idwt2d_multilevel(dwt2d_multilevel(Tensor(x), spec), spec)
        assert np.abs(y.data - x).max() < 1e-10

    def test_single_precision_reconstruction(self, rng):
        x = rng.standard_normal((1, 3, 32, 32)).astype(np.float32)
        y = idwt2d_stacked(dwt2d_stacked(Tensor(x), "db4"), "db4")
        assert np.abs(y.data - x).max() < 1e-4

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (1, 2, 8, 8), elements=st.floats(-1e3, 1e3)), st.sampled_from(FAMILIES))
    def test_energy_conservation(self, x, family):
        s = dwt2d(Tensor(x), family)
        assert s.energy() == pytest.approx(float(np.sum(x ** 2)), rel=1e-10, abs=1e-10)

    @pytest.mark.parametrize("family", FAMILIES)
    def test_adjointness(self, family, rng):
        x = rng.standard_normal((1, 2, 8, 8))
        s = rng.standard_normal((1, 4, 2, 4, 4))
        lhs = np.sum(dwt2d_stacked(Tensor(x), family).data * s)
        rhs = np.sum(x * idwt2d_stacked(Tensor(s), family).data)
        assert lhs == pytest.approx(rhs, rel=1e-12)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("seed", range(5))
def test_gradients(family, seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.standard_normal((1, 2, 8, 8)))
    assert grad_check(lambda t: dwt2d_stacked(t, family), [x], seed=seed).max_rel_error < 1e-4
    s = Tensor(rng.standard_normal((1, 4, 2, 4, 4)))
    assert grad_check(lambda t: idwt2d_stacked(t, family), [s], seed=seed).max_rel_error < 1e-4
