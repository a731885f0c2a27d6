import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locreg.estimator import (
    EmptyNeighborhoodError,
    EstimatorConfig,
    SurfaceGrid,
    asymptotic_moments,
    bandwidth,
    density_estimate,
    density_surface,
    kernel_average,
    kernel_average_naive,
    nw_estimate,
    nw_estimate_naive,
    nw_surface,
    sup_error,
)
from locreg.harness.scenarios import get_scenario
from locreg.kernel import EPANECHNIKOV, compute_moments
from locreg.process import TriangularSample

TINY = TriangularSample(x=[0.0, 0.1, 0.2, 0.3], y=[1.0, 2.0, 3.0, 4.0])


def test_tiny_sample_by_hand():
    # time weights .5625 .75 .5625 0, covariate weights .72 .75 .72 .63
    assert density_estimate(TINY, 0.5, 0.1, 0.5) == pytest.approx(1.3725, abs=1e-14)
    assert nw_estimate(TINY, 0.5, 0.1, 0.5) == pytest.approx(2.0, abs=1e-14)
    assert kernel_average(TINY, TINY.y, 0.5, [0.1], 0.5) == pytest.approx(2.745, abs=1e-14)


def test_empty_neighborhood():
    with pytest.raises(EmptyNeighborhoodError):
        nw_estimate(TINY, 0.5, 5.0, 0.5)
    with pytest.raises(EmptyNeighborhoodError):
        nw_estimate_naive(TINY, 0.5, 5.0, 0.5)


def test_point_dimension_checked():
    with pytest.raises(ValueError):
        nw_estimate(TINY, 0.5, [0.1, 0.2], 0.5)
    with pytest.raises(ValueError):
        kernel_average(TINY, np.ones(3), 0.5, 0.1, 0.5)


def test_bandwidth_rule():
    assert bandwidth(1000, 0.5, 1 / 3) == pytest.approx(0.05)


@pytest.mark.parametrize("sid", ["S1", "S3"])
def test_pruned_matches_naive(sid):
    sc = get_scenario(sid)
    s = sc.sample(600, 2)
    rng = np.random.default_rng(0)
    for _ in range(10):
        u = rng.uniform(0, 1)
        x = rng.uniform(0.2, 0.8, sc.d)
        a = kernel_average(s, s.y, u, x, 0.2)
        b = kernel_average_naive(s, s.y, u, x, 0.2)
        assert a == pytest.approx(b, rel=1e-12, abs=1e-300)


def test_surface_matches_pointwise():
    sc = get_scenario("S2")
    s = sc.sample(1500, 1)
    u = np.linspace(0, 1, 7)
    x = np.linspace(-0.5, 0.5, 5)
    surf = nw_surface(s, u, [x], 0.15)
    dens = density_surface(s, u, [x], 0.15)
    for i, uu in enumerate(u):
        for k, xx in enumerate(x):
            assert surf.values[i, k] == pytest.approx(nw_estimate(s, uu, xx, 0.15), rel=1e-12)
            assert dens.values[i, k] == pytest.approx(density_estimate(s, uu, xx, 0.15), rel=1e-12)


def test_surface_masks_empty_cells():
    surf = nw_surface(TINY, [0.5], [np.array([0.1, 9.0])], 0.5)
    assert surf.mask.tolist() == [[False, True]]
    assert math.isnan(surf.values[0, 1])


def test_surface_csv_roundtrip(tmp_path):
    surf = nw_surface(TINY, [0.25, 0.5], [np.array([0.1, 9.0])], 0.5)
    surf.to_csv(tmp_path / "s.csv")
    back = SurfaceGrid.from_csv(tmp_path / "s.csv")
    np.testing.assert_array_equal(back.mask, surf.mask)
    np.testing.assert_array_equal(back.values[~back.mask], surf.values[~surf.mask])


def test_estimator_config_validation():
    cfg = EstimatorConfig(0.1, np.linspace(0, 1, 5), [np.linspace(-1, 1, 3)])
    assert cfg.interior == pytest.approx((0.1, 0.9))
    with pytest.raises(ValueError):
        EstimatorConfig(0.6, np.linspace(0, 1, 5), [np.linspace(-1, 1, 3)])
    with pytest.raises(ValueError):
        EstimatorConfig(0.1, np.array([0.5, 0.2]), [np.linspace(-1, 1, 3)])


def test_asymptotic_moments_by_hand():
    km = compute_moments(EPANECHNIKOV)
    # d = 1: B = sqrt(c) * k2/2 * sum(2 dm df + d2m f) / f, V = k0^2 sigma2 / f
    mom = asymptotic_moments([1.0, 2.0], [0.5, -1.0], 0.4, [0.1, -0.2], 2.0, 4.0, km, 1)
    expected_b = 2.0 * 0.1 * (2 * (0.1 - 0.4) + (0.5 - 1.0) * 0.4) / 0.4
    assert mom.bias == pytest.approx(expected_b, abs=1e-14)
    assert mom.variance == pytest.approx(0.36 * 2.0 / 0.4, abs=1e-14)
    with pytest.raises(ValueError):
        asymptotic_moments([1.0], [0.0], 0.4, [0.0], 1.0, 1.0, km, 1)
    with pytest.raises(ValueError):
        asymptotic_moments([1.0, 0], [0.0, 0], 0.0, [0.0, 0], 1.0, 1.0, km, 1)


def test_sup_error_region_and_mask():
    surf = SurfaceGrid([np.array([0.0, 0.5, 1.0]), np.array([0.0, 1.0])], np.arange(6.0))
    truth = lambda u, x: np.zeros_like(u)
    assert sup_error(surf, truth) == 5.0
    assert sup_error(surf, truth, [(0.4, 0.6), (0.0, 1.0)]) == 3.0
    surf.mask[1] = True
    with pytest.raises(ValueError):
        sup_error(surf, truth, [(0.4, 0.6), (0.0, 1.0)])


def test_nw_is_consistent_on_tvar1():
    sc = get_scenario("S1")
    T, h = 20_000, 0.1
    s = sc.sample(T, 5)
    km = compute_moments(EPANECHNIKOV)
    for x in (0.0, 1.0):
        pt = sc.point(0.5, [x])
        mom = asymptotic_moments(pt.dm, pt.d2m, pt.f, pt.df, pt.sigma2, T * h**6, km, 1)
        sd = math.sqrt(mom.variance / (T * h * h))
        assert abs(nw_estimate(s, 0.5, x, h) - pt.m) < 4 * sd + abs(mom.bias) / math.sqrt(T * h * h)


_sample = get_scenario("S2").sample(400, 9)


@settings(max_examples=40, deadline=None)
@given(
    st.floats(0.05, 0.95),
    st.floats(-0.3, 0.3),
    st.floats(-5, 5),
    st.floats(0.1, 10).flatmap(lambda b: st.sampled_from([b, -b])),
)
def test_nw_affine_equivariance(u, x, a, b):
    h = 0.3
    try:
        base = nw_estimate(_sample, u, x, h)
    except EmptyNeighborhoodError:
        return
    moved = TriangularSample(_sample.x, a + b * _sample.y)
    assert nw_estimate(moved, u, x, h) == pytest.approx(a + b * base, rel=1e-10, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.floats(-3, 3), st.floats(0.02, 0.5))
def test_density_nonnegative_and_nw_in_hull(u, x, h):
    f = density_estimate(_sample, u, x, h)
    assert f >= 0.0
    if f > 0:
        m = nw_estimate(_sample, u, x, h)
        assert _sample.y.min() - 1e-12 <= m <= _sample.y.max() + 1e-12


@settings(max_examples=20, deadline=None)
@given(st.floats(-10, 10))
def test_constant_response_is_reproduced(c):
    s = TriangularSample(_sample.x, np.full(_sample.T, c))
    assert nw_estimate(s, 0.5, 0.0, 0.2) == pytest.approx(c, rel=1e-12, abs=1e-12)
