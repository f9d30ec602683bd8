"""Random problem instances shared by the M-step and acceptance tests."""

import numpy as np

from aemmp import channel as ch, geometry as geo, mstep

from conftest import crandn


def random_linear_geometry(rng, kind, n=None):
    n = int(rng.integers(4, 17)) if n is None else n
    if kind == "ula":
        return geo.ULA(n)
    if kind == "lens":
        return geo.Lens(n, (n - 1) / 2)
    if kind == "arbitrary":
        return geo.ArbitraryLinear.random(n, rng)
    raise ValueError(kind)


def random_angle_context(rng, kind):
    """Arbitrary (Y, w_hat, v_w, grid) for gradient checks."""
    geom = random_linear_geometry(rng, kind)
    L, T = int(rng.integers(3, 13)), int(rng.integers(2, 7))
    lo, hi = geo.azimuth_range(geom)
    grid = np.sort(rng.uniform(lo + 0.05, hi - 0.05, L))
    return mstep.AngleContext(Y=crandn(rng, geom.n, T), w_hat=crandn(rng, L, T),
                              v_w=rng.uniform(0.01, 1.0, (L, T)), grid=grid, geom=geom,
                              sigma2=rng.uniform(0.5, 2.0))


def noiseless_truth_context(rng, geom, L=6, T=5):
    """Y = A w exactly, so the true grid maximises the objective."""
    lo, hi = geo.azimuth_range(geom)
    grid = np.sort(rng.uniform(lo + 0.2, hi - 0.2, L))
    w = crandn(rng, L, T)
    Y = geo.response_matrix(geom, grid) @ w
    return mstep.AngleContext(Y=Y, w_hat=w, v_w=np.zeros((L, T)), grid=grid, geom=geom,
                              sigma2=1.0)


def single_path_tuning_trial(rng, kind, N=32, T=20, t=4, offset=0.3):
    """One noiseless path ``offset`` grid spacings from its nearest grid point.

    Each EM iteration uses the exact noiseless posterior for the active point
    (least-squares fit of its column, zero variance) and then tunes the grid on
    the centroid-referenced array. Returns the EM iteration at which the point
    lands within eps of the truth, or None.
    """
    base = random_linear_geometry(rng, kind, N)
    geom = geo.centered(base)
    L = N
    grid, _ = geo.uniform_grid(geom, L)
    l = int(rng.integers(1, L - 1))
    truth = grid[l] + rng.choice([-1.0, 1.0]) * offset * np.pi / L
    x = ch.generate_signals(1, T, rng)[0]
    Y = np.outer(geo.steering_vector(base, truth) * ch.sample_cgaussian(0, 1, rng), x)
    cfg = mstep.AngleTuneConfig(step_integer_t=t)
    eps = cfg.step(L)
    for j in range(1, t + 1):
        a = geo.steering_vector(geom, grid[l])
        w = np.zeros((L, T), complex)
        w[l] = a.conj() @ Y / np.vdot(a, a).real
        ctx = mstep.AngleContext(Y, w, np.zeros((L, T)), grid, geom, 1e-10)
        grid = mstep.tune_grid(ctx, cfg)
        if abs(grid[l] - truth) <= eps:
            return j
    return None
