import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from cfpilot.channel import (ChannelProcess, FadingParams, MobilityTrack, ShadowingParams,
                             advance, bessel_j0, complex_normal, correlation_coefficient,
                             initial_state, make_track, pathloss, rician_small_scale,
                             step_small_scale, umi_los_pathloss_db)
from cfpilot.errors import InvalidConfig
from cfpilot.topology import Geometry, build_topology


def series_j0(x, terms=40):
    """Independent oracle: plain truncated power series in exact rationals."""
    from fractions import Fraction
    xf = Fraction(x)
    total, term = Fraction(1), Fraction(1)
    for k in range(1, terms):
        term *= -(xf * xf) / (4 * k * k)
        total += term
    return float(total)


def test_j0_known_values():
    assert bessel_j0(0.0) == 1.0
    assert abs(bessel_j0(2.404825557695773)) <= 1e-9
    assert bessel_j0(1.0) == pytest.approx(series_j0(1.0), abs=1e-12)
    assert bessel_j0(1.0) == pytest.approx(0.7651976866, abs=1e-10)


def test_j0_against_reference_on_grid():
    xs = np.linspace(-50, 50, 4001)
    ours = np.array([bessel_j0(x) for x in xs])
    assert np.max(np.abs(ours - special.j0(xs))) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50, allow_nan=False))
def test_j0_property(x):
    assert abs(bessel_j0(x) - special.j0(x)) <= 1e-9
    assert bessel_j0(x) == bessel_j0(-x)


def test_correlation_coefficient():
    assert correlation_coefficient(0.0) == 1.0
    arg = 2 * math.pi * 1.4 / 3e8 * 2e9 * 1e-3
    assert arg == pytest.approx(0.05864, abs=1e-5)
    assert correlation_coefficient(1.4) == pytest.approx(series_j0(arg), abs=1e-12)
    assert correlation_coefficient(1.4) == pytest.approx(0.99914, abs=1e-5)
    v0 = 2.404825557695773 * 3e8 / (2 * math.pi * 2e9 * 1e-3)
    assert abs(correlation_coefficient(v0)) < 1e-9
    with pytest.raises(InvalidConfig):
        correlation_coefficient(-1.0)


def test_gauss_markov_extremes():
    rng = np.random.default_rng(0)
    h = complex_normal(rng, (5, 3))
    np.testing.assert_array_equal(step_small_scale(h, 1.0, rng), h)
    a = step_small_scale(h, 0.0, np.random.default_rng(1))
    b = complex_normal(np.random.default_rng(1), (5, 3))
    np.testing.assert_allclose(a, b)


def test_gauss_markov_stationary_variance():
    rng = np.random.default_rng(2)
    h = complex_normal(rng, 2000)
    acc = 0.0
    n = 500
    for _ in range(n):
        h = step_small_scale(h, 0.9, rng)
        acc += np.mean(np.abs(h) ** 2)
    assert acc / n == pytest.approx(1.0, rel=0.01)


@pytest.mark.parametrize("mu", [0.0, 0.5, 0.99, 1.0])
def test_stationarity_any_mu(mu):
    rng = np.random.default_rng(4)
    h = complex_normal(rng, 1000)
    vals = []
    for _ in range(100):
        h = step_small_scale(h, mu, rng)
        vals.append(np.abs(h) ** 2)
    v = np.mean(vals)
    assert 0.98 <= v <= 1.02 or mu == 1.0
    if mu == 1.0:
        # frozen: the variance is that of the initial draw
        assert 0.9 <= v <= 1.1


def test_conditional_moments():
    rng = np.random.default_rng(5)
    h0 = 0.7 - 0.2j
    draws = step_small_scale(np.full(200000, h0), 0.6, rng)
    assert np.mean(draws) == pytest.approx(0.6 * h0, abs=5e-3)
    assert np.var(draws) == pytest.approx(1 - 0.36, rel=0.01)


@pytest.mark.parametrize("kappa", [0.0, 3.0, 1e6])
def test_rician_unit_power(kappa):
    h = rician_small_scale(kappa, np.random.default_rng(6), shape=1_000_000)
    assert np.mean(np.abs(h) ** 2) == pytest.approx(1.0, rel=0.01)


def test_rician_limits():
    rng = np.random.default_rng(7)
    scatter = complex_normal(rng, 100)
    np.testing.assert_allclose(rician_small_scale(0.0, rng, shape=100, scatter=scatter), scatter)
    h = rician_small_scale(1e9, rng, shape=10000)
    assert np.all(np.abs(np.abs(h) - 1) <= 1e-4)


def test_pathloss_doubling_distance():
    g = Geometry()
    dh = g.ru_height - g.user_height
    d3 = 10.0
    d2a = math.sqrt(d3 ** 2 - dh ** 2)
    d2b = math.sqrt((2 * d3) ** 2 - dh ** 2)
    pla, plb = umi_los_pathloss_db([d2a, d2b], 2e9)
    assert plb - pla == pytest.approx(21 * math.log10(2), abs=1e-12)
    # the breakpoint at these heights is 4 * 9 * 0.5 * 2e9 / 3e8 = 120 m
    far = umi_los_pathloss_db([130.0], 2e9)[0]
    d3f = math.hypot(130.0, dh)
    ref = 32.4 + 40 * math.log10(d3f) + 20 * math.log10(2) - 9.5 * math.log10(120 ** 2 + dh ** 2)
    assert far == pytest.approx(ref, abs=1e-12)


def test_pathloss_oracle_formula():
    g = Geometry()
    d = np.array([0.0, 0.5, 5.0, 50.0, 119.0])
    d2 = np.maximum(d, 1.0)
    d3 = np.sqrt(d2 ** 2 + 8.5 ** 2)
    ref = 10 ** (-(32.4 + 21 * np.log10(d3) + 20 * np.log10(2.0)) / 10)
    np.testing.assert_allclose(pathloss(d, g, 2e9, normalize=False), ref, rtol=1e-12)
    # normalised gains drop the 1 m reference constant only
    np.testing.assert_allclose(pathloss(d, g, 2e9) * 10 ** (-(32.4 + 20 * np.log10(2)) / 10), ref,
                               rtol=1e-12)


def test_pathloss_monotone_and_shadowing():
    g = Geometry()
    d = np.linspace(0, 200, 400)
    b = pathloss(d, g)
    assert np.all(np.diff(b) <= 0)
    off = pathloss(d, g, shadowing=ShadowingParams(0.0, True), rng=np.random.default_rng(0))
    np.testing.assert_array_equal(off, b)


def test_bad_params():
    with pytest.raises(InvalidConfig):
        FadingParams(f_c=0)
    with pytest.raises(InvalidConfig):
        FadingParams(kind="nakagami")
    with pytest.raises(InvalidConfig):
        ShadowingParams(-1.0)


def small_topology(seed=0):
    return build_topology(Geometry(), 12, 3, 5, 4, "balanced", np.random.default_rng(seed))


def test_static_beta_unchanged():
    topo = small_topology()
    track = make_track(topo.user_pos, 0.0, 100, 1e-3, topo.geometry, np.random.default_rng(0))
    proc = ChannelProcess(topo, track, FadingParams(), np.random.default_rng(1), 100)
    b0 = proc.state.beta.copy()
    for _ in range(20):
        st_ = proc.step()
    np.testing.assert_array_equal(st_.beta, b0)
    # v = 0 means mu = 1: small-scale fading is frozen too
    np.testing.assert_array_equal(st_.h, initial_state(topo, track, FadingParams(),
                                                       np.random.default_rng(1)).h)


def test_track_interpolation():
    start = np.array([[10.0, 10.0], [50.0, 70.0]])
    end = np.array([[20.0, 10.0], [50.0, 90.0]])
    tr = MobilityTrack(start, end, np.array([1.0, 2.0]))
    N = 10
    np.testing.assert_allclose(tr.position(N // 2, N), (start + end) / 2)
    np.testing.assert_array_equal(tr.position(N, N), end)


def test_track_length_matches_speed():
    g = Geometry()
    pos = np.array([[50.0, 75.0], [30.0, 40.0]])
    tr = make_track(pos, np.array([1.4, 0.5]), 10000, 1e-3, g, np.random.default_rng(3))
    np.testing.assert_allclose(np.linalg.norm(tr.end_pos - tr.start_pos, axis=1), [14.0, 5.0])


def test_mobile_advance_recomputes_beta():
    topo = small_topology(1)
    N = 50
    track = make_track(topo.user_pos, 10.0, N, 1e-3, topo.geometry, np.random.default_rng(0))
    params = FadingParams()
    rng = np.random.default_rng(2)
    state = initial_state(topo, track, params, rng)
    for _ in range(N):
        state = advance(state, topo, track, params, rng, N)
    np.testing.assert_array_equal(state.user_pos, track.end_pos)
    d = np.linalg.norm(track.end_pos[:, None] - topo.ru_pos[None], axis=2)
    np.testing.assert_allclose(state.beta, pathloss(d, topo.geometry))


def test_channel_determinism():
    topo = small_topology(2)
    track = make_track(topo.user_pos, 5.0, 30, 1e-3, topo.geometry, np.random.default_rng(0))
    runs = []
    for _ in range(2):
        p = ChannelProcess(topo, track, FadingParams(kind="rician", rician_kappa=2.0),
                           np.random.default_rng(11), 30, ShadowingParams(4.0, True))
        seq = [p.state.g.copy()] + [p.step().g.copy() for _ in range(30)]
        runs.append(np.array(seq))
    assert runs[0].tobytes() == runs[1].tobytes()


def test_scatter_velocity_decorrelates_static_users():
    topo = small_topology(3)
    track = make_track(topo.user_pos, 0.0, 10, 1e-3, topo.geometry, np.random.default_rng(0))
    p = ChannelProcess(topo, track, FadingParams(scatter_velocity=57.4), np.random.default_rng(1), 10)
    assert abs(p.state.mu[0]) < 1e-2
    b0 = p.state.beta.copy()
    h0 = p.state.h.copy()
    p.step()
    np.testing.assert_array_equal(p.state.beta, b0)
    assert not np.allclose(p.state.h, h0)
