import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from locreg.harness.scenarios import get_scenario
from locreg.process import (
    ExplosionError,
    TriangularSample,
    TvNarModel,
    autocov_decay_proxy,
    coupled_paths,
    coupling_report,
    density_smoothness_probe,
    simulate_frozen,
    simulate_tvnar,
    stable_rho,
    tvar1_model,
    tvar1_stationary_variance,
)
from locreg.rng import stream

S1 = get_scenario("S1").model
C0 = get_scenario("C0").model


def test_stream_is_keyed_not_ordered():
    a = stream(3, 7, 1).standard_normal(5)
    stream(3, 0).standard_normal(1000)
    b = stream(3, 7, 1).standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(stream(3, 7, 1).standard_normal(5), stream(3, 7, 2).standard_normal(5))
    np.testing.assert_array_equal(stream((3, 7), 1).standard_normal(5), a)
    with pytest.raises(ValueError):
        stream(-1)


def test_recursion_identity_and_lag_layout():
    s = simulate_tvnar(S1, 300, seed=4)
    u = s.times
    np.testing.assert_allclose(s.y, (0.9 - 0.5 * u) * s.x[:, 0] + s.true_errors, atol=1e-13)
    np.testing.assert_array_equal(s.x[1:, 0], s.y[:-1])


def test_second_order_lags():
    model = TvNarModel(d=2, m=lambda u, y: 0.3 * y[0] - 0.2 * y[1], sigma=lambda u, y: 1.0)
    s = simulate_tvnar(model, 200, seed=1)
    np.testing.assert_array_equal(s.x[2:, 1], s.y[:-2])
    np.testing.assert_allclose(s.y, 0.3 * s.x[:, 0] - 0.2 * s.x[:, 1] + s.true_errors, atol=1e-13)


def test_simulation_is_deterministic():
    a = simulate_tvnar(S1, 500, seed=(9, 500, 3))
    b = simulate_tvnar(S1, 500, seed=(9, 500, 3))
    np.testing.assert_array_equal(a.y, b.y)
    c = simulate_tvnar(S1, 500, seed=(9, 500, 4))
    assert not np.array_equal(a.y, c.y)


def test_first_values_frozen():
    s = simulate_tvnar(S1, 2000, seed=(7, 2000, 0))
    assert s.y[0] == pytest.approx(0.6547294448412315, rel=1e-12)
    assert s.y[1] == pytest.approx(1.062586264053641, rel=1e-12)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_explosion_is_reported():
    boom = TvNarModel(d=1, m=lambda u, y: 1e200 * y[0] + 1.0, sigma=lambda u, y: 1.0)
    with pytest.raises(ExplosionError) as info:
        simulate_tvnar(boom, 50, seed=0)
    assert info.value.phase == "burn-in"


def test_size_checks():
    with pytest.raises(ValueError):
        simulate_tvnar(S1, 1)
    with pytest.raises(ValueError):
        simulate_tvnar(S1, 100, burn_in=10)


@pytest.mark.parametrize("u", [0.0, 0.5, 1.0])
def test_frozen_variance(u):
    a = 0.9 - 0.5 * u
    T = 50_000
    s = simulate_frozen(S1, u, T, seed=11)
    target = tvar1_stationary_variance(a)
    se = target * math.sqrt(2 * (1 + a * a) / ((1 - a * a) * T))
    assert abs(np.var(s.y) - target) < 4 * se


def test_coupled_paths_share_innovations():
    tv, fr = coupled_paths(S1, 0.5, 400, seed=2)
    np.testing.assert_allclose(tv.true_errors, fr.true_errors)
    assert tv.seed == fr.seed


def test_time_constant_model_couples_exactly():
    rep = coupling_report(coupled_paths(C0, 0.3, 1000, seed=5), 0.3)
    assert np.all(rep.u_stats == 0.0)
    assert rep.median_u == 0.0


def test_coupling_statistic_formula():
    pair = coupled_paths(S1, 0.25, 500, seed=3)
    rep = coupling_report(pair, 0.25, rho_grid=(1.0,))
    t = np.arange(1, 501) / 500
    expected = np.abs(pair[0].y - pair[1].y) / (np.abs(t - 0.25) + 1 / 500)
    np.testing.assert_allclose(rep.u_stats, expected)
    assert rep.rho_moments[1.0] == pytest.approx(expected.mean())


def test_coupling_requires_matching_paths():
    a = simulate_tvnar(S1, 200, seed=1)
    b = simulate_frozen(S1, 0.5, 200, seed=2)
    with pytest.raises(ValueError):
        coupling_report((a, b), 0.5)


def test_stable_rho_picks_largest_stable():
    r1 = coupling_report(coupled_paths(S1, 0.5, 2000, seed=1), 0.5)
    r2 = coupling_report(coupled_paths(S1, 0.5, 4000, seed=2), 0.5)
    assert stable_rho(r1, r2) == 2.0
    z = coupling_report(coupled_paths(C0, 0.5, 500, seed=1), 0.5)
    assert stable_rho(z, z) == 2.0


def test_density_probe():
    same = density_smoothness_probe(S1, 0.5, 0.5, 20_000, seed=1, common_noise=True)
    assert same == 0.0
    near = density_smoothness_probe(S1, 0.5, 0.55, 20_000, seed=1, common_noise=True)
    far = density_smoothness_probe(S1, 0.0, 1.0, 20_000, seed=1, common_noise=True)
    assert near < far
    with pytest.raises(ValueError):
        density_smoothness_probe(S1, 0.5, 0.6, 100)


def test_autocov_proxy_ar1():
    s = simulate_frozen(tvar1_model(lambda u: 0.5), 0.5, 40_000, seed=8)
    acv = autocov_decay_proxy(s, 3)
    target = tvar1_stationary_variance(0.5) * 0.5 ** np.arange(1, 4)
    np.testing.assert_allclose(acv, target, atol=0.05)
    with pytest.raises(ValueError):
        autocov_decay_proxy(s, 1000)


def test_csv_and_npz_roundtrip(tmp_path):
    s = simulate_tvnar(S1, 300, seed=(1, 2))
    s.to_csv(tmp_path / "a.csv")
    back = TriangularSample.from_csv(tmp_path / "a.csv")
    np.testing.assert_array_equal(back.x, s.x)
    np.testing.assert_array_equal(back.y, s.y)
    np.testing.assert_array_equal(back.true_errors, s.true_errors)
    s.save(tmp_path / "a.npz")
    b2 = TriangularSample.load(tmp_path / "a.npz")
    np.testing.assert_array_equal(b2.y, s.y)
    assert b2.seed == (1, 2)


@pytest.mark.parametrize("sid", ["S3", "S4"])
def test_additive_design_identification(sid):
    spec = get_scenario(sid).design
    for j in range(spec.d):
        for u in (0.0, 0.4, 1.0):
            mass, _ = integrate.quad(lambda x: spec.marginal_density(j, u, x), 0, 1, epsabs=1e-12)
            assert mass == pytest.approx(1.0, abs=1e-9)
            centered, _ = integrate.quad(
                lambda x: spec.component(j, u, x) * spec.marginal_density(j, u, x), 0, 1, epsabs=1e-12
            )
            assert abs(centered) < 1e-9


def test_additive_design_cube_fraction():
    sc = get_scenario("S3")
    s = sc.sample(20_000, 3)
    inside = np.all((s.x >= 0) & (s.x <= 1), axis=1)
    expected = float(np.mean(sc.design.cube_probability(s.times)))
    assert abs(inside.mean() - expected) < 0.02
    resid = s.y - sc.design.regression(s.times, s.x)
    np.testing.assert_allclose(resid, s.true_errors, atol=1e-12)


def test_covariate_density_integrates_to_one():
    cm = get_scenario("S4").design.covariate_model
    for j in range(3):
        lo, hi = cm.center - cm.half_width, cm.center + cm.half_width
        mass, _ = integrate.quad(lambda x: cm.density(j, 0.3, x), lo, hi, limit=200)
        assert mass == pytest.approx(1.0, abs=1e-7)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(105, 300))
def test_seed_determines_path(seed, T):
    a = simulate_tvnar(S1, T, burn_in=100, seed=seed)
    b = simulate_tvnar(S1, T, burn_in=100, seed=seed)
    np.testing.assert_array_equal(a.y, b.y)
    assert np.all(np.isfinite(a.y))
