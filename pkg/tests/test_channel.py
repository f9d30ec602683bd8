import numpy as np
import pytest

from aemmp import channel as ch
from aemmp import geometry as geo


def test_single_path_at_centre(rng):
    scene = ch.draw_scene(1, geo.ULA(8), 1, 1, 0.0, rng)
    assert scene.path_aoas[0, 0] == scene.cluster_centers[0, 0]


def test_paths_stay_inside_spread(rng):
    spread = np.deg2rad(20.0)
    scene = ch.draw_scene(4, geo.ULA(8), 50, 50, spread, rng)
    centres = np.repeat(scene.cluster_centers, 50, axis=1)
    assert np.all(np.abs(scene.path_aoas - centres) <= spread / 2)


def test_gain_variance(rng):
    scene = ch.draw_scene(1, geo.ULA(4), 100, 100, 0.1, rng)
    assert np.mean(np.abs(scene.path_gains) ** 2) == pytest.approx(1.0, rel=0.02)


def test_scene_needs_paths(rng):
    with pytest.raises(ValueError):
        ch.draw_scene(1, geo.ULA(4), 0, 1, 0.1, rng)


def _scene(aoas, gains):
    aoas, gains = np.atleast_2d(aoas), np.atleast_2d(gains)
    return ch.ChannelScene(1, aoas.shape[1], 0.0, aoas[:, :1], aoas, gains)


def test_single_unit_path_is_steering_vector():
    geom = geo.ULA(6)
    H = ch.synth_channel(geom, _scene([0.3], [1.0 + 0j]))
    np.testing.assert_allclose(H[:, 0], geo.steering_vector(geom, 0.3), atol=1e-15)


def test_opposite_gains_cancel():
    H = ch.synth_channel(geo.ULA(6), _scene([0.3, 0.3], [0.7 - 0.2j, -0.7 + 0.2j]))
    np.testing.assert_allclose(H, 0, atol=1e-15)


def test_channel_matches_path_sum(rng):
    geom = geo.ArbitraryLinear.random(7, rng)
    scene = ch.draw_scene(3, geom, 2, 4, 0.3, rng)
    H = ch.synth_channel(geom, scene)
    for k in range(3):
        ref = sum(g * geo.steering_vector(geom, a)
                  for a, g in zip(scene.path_aoas[k], scene.path_gains[k]))
        np.testing.assert_allclose(H[:, k], ref, atol=1e-12)


def test_channel_linear_in_gains(rng):
    geom = geo.Lens(9, 4.0)
    scene = ch.draw_scene(2, geom, 2, 3, 0.2, rng)
    H = ch.synth_channel(geom, scene)
    scaled = ch.ChannelScene.from_dict(scene.to_dict())
    scaled.path_gains = scaled.path_gains * (2 - 3j)
    np.testing.assert_allclose(ch.synth_channel(geom, scaled), (2 - 3j) * H, atol=1e-12)


def test_zero_spread_column_is_collinear(rng):
    geom = geo.ULA(8)
    scene = _scene(np.full(6, -0.4), rng.standard_normal(6) + 1j * rng.standard_normal(6))
    h = ch.synth_channel(geom, scene)[:, 0]
    a = geo.steering_vector(geom, -0.4)
    np.testing.assert_allclose(h, np.vdot(a, h) * a, atol=1e-12)


def test_signals_reference_and_moments(rng):
    X = ch.generate_signals(3, 10 ** 4, rng, x_ref=0.5 + 0.5j)
    assert np.all(X[:, 0] == 0.5 + 0.5j)
    assert np.mean(np.abs(X) ** 2) == pytest.approx(1.0, abs=0.03)
    data = X[:, 1:]
    cross = data @ data.conj().T / data.shape[1]
    assert np.max(np.abs(cross - np.diag(np.diag(cross)))) < 0.05
    with pytest.raises(ValueError):
        ch.generate_signals(1, 1, rng)


def test_noiseless_rx_is_exact(rng):
    H = rng.standard_normal((4, 2)) + 0j
    X = ch.generate_signals(2, 5, rng)
    np.testing.assert_array_equal(ch.synth_rx(H, X, 0.0, rng), H @ X)


def test_noise_only_rx_variance(rng):
    Y = ch.synth_rx(np.zeros((100, 1)), np.ones((1, 100)), 0.3, rng)
    assert np.mean(np.abs(Y) ** 2) == pytest.approx(0.3, rel=0.02)
    with pytest.raises(ValueError):
        ch.synth_rx(np.zeros((2, 1)), np.ones((1, 2)), -1.0, rng)


def test_noise_var_from_snr():
    assert ch.noise_var_from_snr(8, 10.0) == pytest.approx(0.8)


def test_json_round_trip(rng):
    gt = ch.simulate(geo.ULA(6), 2, 5, 1, 2, 0.2, 20.0, rng)
    back = ch.GroundTruth.from_json(gt.to_json())
    np.testing.assert_array_equal(back.Y, gt.Y)
    np.testing.assert_array_equal(back.H, gt.H)
    scene = gt.extra["scene"]
    again = ch.ChannelScene.from_dict(scene.to_dict())
    np.testing.assert_array_equal(again.path_gains, scene.path_gains)


def test_known_grid_scene(rng):
    gt = ch.simulate_known_grid(16, 2, 10, 16, 0.25, 30.0, rng)
    grid, S = gt.extra["grid"], gt.extra["S"]
    assert np.all(np.diff(grid) >= 0)
    np.testing.assert_allclose(gt.H, geo.response_matrix(geo.ULA(16), grid) @ S, atol=1e-12)
