import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from locreg.kernel import (
    BIWEIGHT,
    EPANECHNIKOV,
    TRIANGULAR,
    boundary_denominator,
    boundary_weight,
    compute_moments,
    gauss_legendre_moments,
    get_kernel,
    local_moment,
    riemann_sum_check,
    scaled_eval,
    time_weights,
)

KERNELS = [EPANECHNIKOV, TRIANGULAR, BIWEIGHT]


@pytest.mark.parametrize(
    "kernel,k0,k2",
    [(EPANECHNIKOV, 0.6, 0.2), (TRIANGULAR, 2 / 3, 1 / 6), (BIWEIGHT, 5 / 7, 1 / 7)],
)
def test_moments_closed_form(kernel, k0, k2):
    m = compute_moments(kernel)
    assert m.kappa0 == pytest.approx(k0, abs=1e-13)
    assert m.kappa2 == pytest.approx(k2, abs=1e-13)
    gl = gauss_legendre_moments(kernel)
    assert gl.kappa0 == pytest.approx(k0, abs=1e-12)
    assert gl.kappa2 == pytest.approx(k2, abs=1e-12)


@pytest.mark.parametrize("kernel", KERNELS)
def test_unit_mass_and_zero_outside(kernel):
    total, _ = integrate.quad(kernel, -1, 1, epsabs=1e-14)
    assert total == pytest.approx(1.0, abs=1e-12)
    assert kernel(1.0) == 0.0
    assert kernel(-1.3) == 0.0
    assert np.all(kernel(np.array([2.0, -5.0])) == 0.0)


def test_epanechnikov_values():
    assert EPANECHNIKOV(0.0) == 0.75
    assert EPANECHNIKOV(0.5) == pytest.approx(0.5625)
    assert EPANECHNIKOV.cdf(0.0) == pytest.approx(0.5)
    assert EPANECHNIKOV.cdf(-0.5) == pytest.approx(0.15625)


def test_scaled_eval_has_no_one_over_h():
    assert scaled_eval(EPANECHNIKOV, 0.05, 0.1) == pytest.approx(0.5625)
    with pytest.raises(ValueError):
        scaled_eval(EPANECHNIKOV, 0.0, 0.0)
    with pytest.raises(ValueError):
        scaled_eval(EPANECHNIKOV, 0.0, -1.0)


def test_boundary_denominator_values():
    assert boundary_denominator(EPANECHNIKOV, 0.5, 0.1) == pytest.approx(0.1)
    assert boundary_denominator(EPANECHNIKOV, 0.0, 0.1) == pytest.approx(0.05)
    assert boundary_denominator(EPANECHNIKOV, 0.05, 0.1) == pytest.approx(0.084375, abs=1e-15)


def test_biweight_cdf_falls_back_to_quadrature():
    assert BIWEIGHT.cdf(0.0) == pytest.approx(0.5, abs=1e-12)
    assert BIWEIGHT.cdf(1.0) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("kernel", KERNELS)
@pytest.mark.parametrize("w", [0.0, 0.013, 0.5, 0.97, 1.0])
def test_boundary_weight_integrates_to_one(kernel, w):
    h = 0.08
    a, b = max(0.0, w - h), min(1.0, w + h)
    total, _ = integrate.quad(lambda v: boundary_weight(kernel, v, w, h), a, b, epsabs=1e-13)
    assert total == pytest.approx(1.0, abs=1e-10)


def test_boundary_weight_zero_outside_unit_interval():
    assert boundary_weight(EPANECHNIKOV, -0.01, 0.0, 0.1) == 0.0
    assert boundary_weight(EPANECHNIKOV, 0.5, 1.01, 0.1) == 0.0


def test_time_weights_match_boundary_weight():
    tw = time_weights(EPANECHNIKOV, 0.3, 50, 0.1)
    t = np.arange(1, 51) / 50
    assert tw.shape == (50,)
    np.testing.assert_allclose(tw, boundary_weight(EPANECHNIKOV, 0.3, t, 0.1))
    assert np.all(tw[np.abs(t - 0.3) > 0.1 + 1e-12] == 0.0)
    assert np.all(tw[np.abs(t - 0.3) < 0.1 - 1e-12] > 0.0)


def test_local_moments_interior():
    assert local_moment(EPANECHNIKOV, 0.5, 0.1, 0) == pytest.approx(1.0, abs=1e-10)
    assert local_moment(EPANECHNIKOV, 0.5, 0.1, 1) == pytest.approx(0.5, abs=1e-10)


def test_local_moments_boundary_frozen():
    assert local_moment(EPANECHNIKOV, 0.0, 0.1, 1) == pytest.approx(0.022741127776021098, rel=1e-9)
    assert local_moment(EPANECHNIKOV, 0.02, 0.1, 2) == pytest.approx(0.0021365358648427874, rel=1e-9)


def test_riemann_deviation_frozen():
    assert riemann_sum_check(EPANECHNIKOV, 500, 0.1, 0) == pytest.approx(1e-4, rel=1e-9)
    assert riemann_sum_check(EPANECHNIKOV, 1000, 0.1, 0) == pytest.approx(2.5e-5, rel=1e-9)
    assert riemann_sum_check(EPANECHNIKOV, 1000, 0.1, 2) == pytest.approx(2.49995e-5, rel=1e-6)


def test_riemann_rejects_bad_arguments():
    with pytest.raises(ValueError):
        riemann_sum_check(EPANECHNIKOV, 100, 0.1, 3)
    with pytest.raises(ValueError):
        riemann_sum_check(EPANECHNIKOV, 100, 0.6, 0)


def test_get_kernel():
    assert get_kernel("epanechnikov") is EPANECHNIKOV
    assert get_kernel(TRIANGULAR) is TRIANGULAR
    with pytest.raises(ValueError):
        get_kernel("gaussian")


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(KERNELS), st.floats(-2, 2, allow_nan=False))
def test_symmetry(kernel, v):
    assert kernel(v) == pytest.approx(kernel(-v), abs=1e-15)
    assert kernel(v) >= 0.0


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(KERNELS), st.floats(-1, 1), st.floats(-1, 1))
def test_lipschitz_bound(kernel, a, b):
    assert abs(kernel(a) - kernel(b)) <= kernel.lipschitz_bound * abs(a - b) + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.floats(0.02, 0.45))
def test_boundary_normalization_property(w, h):
    a, b = max(0.0, w - h), min(1.0, w + h)
    total, _ = integrate.quad(lambda v: boundary_weight(EPANECHNIKOV, v, w, h), a, b, points=[w], epsabs=1e-13)
    assert total == pytest.approx(1.0, abs=1e-9)
