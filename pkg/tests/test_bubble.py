import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from doubletower.bubble import (
    Bubble,
    KernelBasis,
    SpaceSpec,
    beta_moment,
    eval_bubble,
    eval_kernel,
    gradient_energy,
    kernel_overlap,
    normalization_constant,
    radial_polyharmonic_residual,
    single_bubble_mass,
    sphere_abs_moment,
    validate_space,
)
from doubletower.errors import (
    BadIndex,
    DimensionTooSmall,
    FlatnessOutOfRange,
    GridTooCoarse,
    NonPositive,
)

# mpmath, 30 digits: (3/16)(-10 + sqrt(292))
L51 = 1.32900140449407418795
# mpmath: c^{10/3} |S^4| B(5/2, 5/2)/2 with c = 15^{3/4}
MASS_51 = 844.360264762738559694

finite = st.floats(-5.0, 5.0, allow_nan=False)
point5 = st.lists(finite, min_size=5, max_size=5).map(np.array)


class TestValidateSpace:
    def test_reference_space(self, spec5):
        assert spec5.mstar == Fraction(10, 3)
        assert spec5.cNm == pytest.approx(15.0**0.75, rel=1e-15)
        assert spec5.n == 3

    def test_threshold_and_window(self, spec5):
        assert spec5.l_threshold == pytest.approx(L51, rel=1e-14)
        assert spec5.l_window == (2.0, 3.0)

    def test_cNm_higher_order(self):
        # prod_{i=-2}^{1} (7 + 2i) = 3*5*7*9
        assert normalization_constant(7, 2) == pytest.approx(945.0 ** (3 / 8), rel=1e-15)

    def test_dimension_too_small(self):
        with pytest.raises(DimensionTooSmall):
            validate_space(4, 1, 2.0, 1.0)

    @pytest.mark.parametrize("l", [1.9, 3.5])
    def test_flatness_window(self, l):
        with pytest.raises(FlatnessOutOfRange):
            validate_space(5, 1, l, 1.0)

    def test_endpoint_allowed(self):
        assert validate_space(5, 1, 3.0).l == 3.0

    @pytest.mark.parametrize("c0", [0.0, -1.0])
    def test_c0_positive(self, c0):
        with pytest.raises(NonPositive):
            validate_space(5, 1, 2.0, c0)

    def test_flat_opt_in(self):
        assert validate_space(5, 1, 2.0, 0.0, allow_flat=True).c0 == 0.0


class TestEvalBubble:
    def test_at_center(self, spec5):
        b = Bubble((0.3, -1.0, 2.0, 0.0, 0.5), 1.0)
        assert eval_bubble(b, spec5, b.x) == pytest.approx(spec5.cNm, rel=1e-15)

    def test_peak_scales_with_lambda(self, spec5):
        b = Bubble((0.0,) * 5, 4.0)
        assert eval_bubble(b, spec5, b.x) == pytest.approx(spec5.cNm * 8.0, rel=1e-15)

    def test_unit_distance(self, spec5):
        b = Bubble((0.0,) * 5, 1.0)
        y = np.array([0.0, 1.0, 0.0, 0.0, 0.0])
        assert eval_bubble(b, spec5, y) == pytest.approx(15.0**0.75 * 0.5**1.5, rel=1e-15)

    def test_doubling_ratio(self, spec5):
        lam, d = 0.7, 1.3
        b = Bubble((0.0,) * 5, lam)
        e = np.eye(5)[0]
        ratio = eval_bubble(b, spec5, 2 * d * e) / eval_bubble(b, spec5, d * e)
        want = ((1 + lam**2 * d**2) / (1 + 4 * lam**2 * d**2)) ** 1.5
        assert ratio == pytest.approx(want, rel=1e-14)

    def test_rejects_nonpositive_lambda(self):
        with pytest.raises(NonPositive):
            Bubble((0.0,) * 5, 0.0)

    def test_radially_decreasing(self, spec5):
        b = Bubble((1.0, 2.0, 0.0, 0.0, 0.0), 2.0)
        rho = np.linspace(0.0, 50.0, 400)
        u = eval_bubble(b, spec5, b.x + rho[:, None] * np.ones(5) / math.sqrt(5))
        assert np.all(u > 0)
        assert np.all(np.diff(u) < 0)

    @settings(max_examples=10, deadline=None)
    @given(point5, st.integers(0, 2**32 - 1))
    def test_rotation_invariance(self, spec5, y, seed):
        q, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(5, 5)))
        b = Bubble((0.0,) * 5, 1.7)
        assert eval_bubble(b, spec5, q @ y) == pytest.approx(eval_bubble(b, spec5, y), rel=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.05, 20.0), st.floats(0.0, 30.0), st.floats(0.1, 10.0))
    def test_scaling(self, spec5, lam, d, a):
        e = np.eye(5)[0]
        lhs = eval_bubble(Bubble((0.0,) * 5, lam), spec5, d * e)
        rhs = eval_bubble(Bubble((0.0,) * 5, a * lam), spec5, d / a * e) * a ** (-1.5)
        assert lhs == pytest.approx(rhs, rel=1e-12)


class TestKernel:
    def test_gradient_vanishes_at_center(self, spec5):
        b = Bubble((1.0, 0.0, -2.0, 0.0, 3.0), 1.3)
        for i in range(1, 6):
            assert eval_kernel(KernelBasis(b, i), spec5, b.x) == 0.0

    def test_dilation_at_center(self, spec5):
        b = Bubble((0.0,) * 5, 1.0)
        assert eval_kernel(KernelBasis(b, 6), spec5, b.x) == pytest.approx(1.5 * spec5.cNm, rel=1e-15)

    @pytest.mark.parametrize("idx", [0, 7, -1])
    def test_bad_index(self, spec5, idx):
        with pytest.raises(BadIndex):
            eval_kernel(KernelBasis(Bubble((0.0,) * 5), idx), spec5, np.zeros(5))

    def test_central_differences(self, spec5):
        rng = np.random.default_rng(5)
        b = Bubble(tuple(rng.normal(size=5)), 0.8)
        for y in rng.normal(size=(5, 5)) * 2.0:
            for i in range(1, 6):
                z = eval_kernel(KernelBasis(b, i), spec5, y)
                errs = []
                for step in (1e-2, 5e-3):
                    e = np.eye(5)[i - 1] * step
                    fd = (eval_bubble(b, spec5, y + e) - eval_bubble(b, spec5, y - e)) / (2 * step)
                    errs.append(abs(fd - z))
                assert errs[1] <= 1e-5 * spec5.cNm
                if errs[0] > 1e-9:
                    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)

    def test_dilation_field_identity(self, spec5):
        rng = np.random.default_rng(9)
        b = Bubble((0.0,) * 5, 1.0)
        y = rng.normal(size=(20, 5))
        grad = np.stack([eval_kernel(KernelBasis(b, i), spec5, y) for i in range(1, 6)], axis=-1)
        want = 1.5 * eval_bubble(b, spec5, y) + np.einsum("ij,ij->i", y, grad)
        np.testing.assert_allclose(eval_kernel(KernelBasis(b, 6), spec5, y), want, rtol=1e-12)

    def test_translation_relative_dilation(self, spec5):
        # Z_{N+1} of a translated bubble equals the centered one at y - x
        x = np.array([3.0, -1.0, 0.5, 2.0, 0.0])
        y = np.array([0.2, 0.4, -0.1, 1.0, 2.0])
        z_t = eval_kernel(KernelBasis(Bubble(tuple(x)), 6), spec5, y)
        z_0 = eval_kernel(KernelBasis(Bubble((0.0,) * 5), 6), spec5, y - x)
        assert z_t == pytest.approx(z_0, rel=1e-15)

    def test_orthogonality(self, spec5):
        diag = kernel_overlap(spec5, 1, 1)
        assert diag > 0
        for i, j in [(1, 2), (1, 3), (2, 5), (4, 5)]:
            assert abs(kernel_overlap(spec5, i, j)) <= 1e-10 * diag

    def test_overlap_rotation_consistent(self, spec5):
        assert kernel_overlap(spec5, 2, 2) == pytest.approx(kernel_overlap(spec5, 5, 5), rel=1e-10)


class TestResidual:
    def test_second_order(self, spec5):
        rep = radial_polyharmonic_residual(spec5, 0.05, 10.0)
        assert rep.residuals[0] / rep.residuals[1] == pytest.approx(4.0, rel=0.1)
        assert rep.order == pytest.approx(2.0, abs=0.3)

    def test_residual_shrinks(self, spec5):
        rep = radial_polyharmonic_residual(spec5, 0.1, 10.0, refinements=3)
        assert all(a > b for a, b in zip(rep.residuals, rep.residuals[1:]))

    @pytest.mark.parametrize("N,m", [(7, 2), (9, 3)])
    def test_nested_laplacians(self, N, m):
        rep = radial_polyharmonic_residual(validate_space(N, m, 2.0), 0.05, 8.0)
        assert all(abs(o - 2.0) <= 0.3 for o in rep.orders)

    def test_too_coarse(self, spec5):
        with pytest.raises(GridTooCoarse):
            radial_polyharmonic_residual(spec5, 0.5, 10.0)

    def test_step_positive(self, spec5):
        with pytest.raises(NonPositive):
            radial_polyharmonic_residual(spec5, 0.0, 10.0)


class TestMass:
    def test_value(self, spec5):
        res = single_bubble_mass(spec5)
        assert res.value == pytest.approx(MASS_51, rel=1e-10)
        assert res.error <= 1e-10 * res.value

    def test_scale_invariance(self, spec5):
        assert single_bubble_mass(spec5, 7.0).value == pytest.approx(
            single_bubble_mass(spec5, 1.0).value, rel=1e-12
        )

    def test_beta_closed_form(self, spec5):
        closed = spec5.cNm**spec5.mstar_f * beta_moment(5, 0.0, 5.0)
        assert single_bubble_mass(spec5).value == pytest.approx(closed, rel=1e-12)

    def test_gradient_identity(self, spec5):
        assert gradient_energy(spec5).value == pytest.approx(single_bubble_mass(spec5).value, rel=1e-10)

    def test_sphere_moment_l2(self):
        assert sphere_abs_moment(5, 2.0) == pytest.approx(0.2, rel=1e-15)

    def test_spacespec_outside_theorem(self):
        # bare construction only requires N > 2m
        assert SpaceSpec(3, 1).n == 1
