"""EM maximisation step: closed-form hyper-parameter updates and the
sign-gradient angle tuning of the grid."""

from dataclasses import dataclass

import numpy as np

from . import geometry as geo

PROB_CLAMP = 1e-6
NOISE_FLOOR = 1e-12


def _clamp_prob(p):
    return float(np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP))


@dataclass
class MStepScratch:
    eta: np.ndarray  # posterior slab probability
    nu: np.ndarray  # slab-conditional posterior variance
    chi: np.ndarray  # slab-conditional posterior mean


@dataclass
class AngleTuneConfig:
    step_integer_t: int = 7
    updates_per_em_iter: int = 2

    def __post_init__(self):
        if self.step_integer_t < 1:
            raise ValueError("step_integer_t must be >= 1")
        if self.updates_per_em_iter < 0:
            raise ValueError("updates_per_em_iter must be >= 0")

    def step(self, grid_size):
        return np.pi / (2 * self.step_integer_t * grid_size)


def update_sigma2(Y, z_hat, v_z, floor=NOISE_FLOOR):
    Y, z_hat, v_z = np.asarray(Y), np.asarray(z_hat), np.asarray(v_z)
    if Y.shape != z_hat.shape or Y.shape != v_z.shape:
        raise ValueError("Y, z_hat and v_z must share a shape")
    val = (np.sum(np.abs(Y - z_hat) ** 2) + np.sum(v_z)) / Y.size
    return max(float(val), floor)


def scratch(q_hat, v_q, pi_in, pi_out, varphi):
    """Slab posterior pieces of CN(s; q_hat, v_q) times the spike-and-slab prior."""
    varphi = np.asarray(varphi, dtype=float)[None, :]
    on = pi_out * pi_in
    eta = on / (on + (1 - pi_out) * (1 - pi_in))
    nu = varphi * v_q / (varphi + v_q)
    chi = varphi * q_hat / (varphi + v_q)
    return MStepScratch(eta, nu, chi)


def update_varphi(q_hat, v_q, pi_in, pi_out, varphi_old):
    varphi_old = np.asarray(varphi_old, dtype=float)
    sc = scratch(q_hat, v_q, pi_in, pi_out, varphi_old)
    num = np.sum(sc.eta * (np.abs(sc.chi) ** 2 + sc.nu), axis=0)
    den = np.sum(sc.eta, axis=0)
    out = varphi_old.copy()
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out


def update_p01(pairwise, omega, p01_old):
    den = np.sum(omega[:-1])
    if den <= 0:
        return p01_old
    return _clamp_prob(1.0 - np.sum(pairwise) / den)


def update_lambda(omega):
    return _clamp_prob(np.mean(omega[0]))


def update_lambda_pooled(omega):
    """Stationary activity rate pooled over every grid point and user."""
    return _clamp_prob(np.mean(omega))


@dataclass
class AngleContext:
    """Expectations the angle objective is evaluated against."""

    Y: np.ndarray
    w_hat: np.ndarray
    v_w: np.ndarray
    grid: np.ndarray
    geom: object
    sigma2: float
    elevations: np.ndarray = None

    def response(self, grid=None):
        return geo.response_matrix(self.geom, self.grid if grid is None else grid,
                                   self.elevations)


def _column(ctx, l, theta):
    el = None if ctx.elevations is None else [ctx.elevations[l]]
    a = geo.response_matrix(ctx.geom, [theta], el)[:, 0]
    da = geo.response_derivative(ctx.geom, [theta], el)[:, 0]
    return a, da


def angle_objective(theta_l, l, ctx):
    """Expected log-likelihood (up to constants) with grid point l set to theta_l."""
    grid = np.array(ctx.grid, dtype=float)
    grid[l] = theta_l
    A = ctx.response(grid)
    fit = np.sum(np.abs(ctx.Y - A @ ctx.w_hat) ** 2)
    spread = np.sum(ctx.v_w.sum(axis=1) * np.sum(np.abs(A) ** 2, axis=0))
    return -(fit + spread) / ctx.sigma2


def _gradient(a, da, w_row, vw_row, resid_l, sigma2):
    # resid_l: Y with every column except l removed from the model
    corr = da.conj() @ (resid_l @ w_row.conj())
    energy = np.sum(vw_row + np.abs(w_row) ** 2)
    return 2.0 / sigma2 * np.real(corr - (da.conj() @ a) * energy)


def angle_gradient(theta_l, l, ctx):
    A = ctx.response()
    a, da = _column(ctx, l, theta_l)
    resid_l = ctx.Y - A @ ctx.w_hat + np.outer(A[:, l], ctx.w_hat[l])
    return float(_gradient(a, da, ctx.w_hat[l], ctx.v_w[l], resid_l, ctx.sigma2))


def tune_grid(ctx, config=None):
    """Sequential sign-gradient sweeps over the grid; returns the new grid.

    The residual Y - A W is kept up to date as each column moves, so every
    point sees the already-updated earlier points.
    """
    cfg = config or AngleTuneConfig()
    grid = np.array(ctx.grid, dtype=float)
    L = grid.size
    eps = cfg.step(L)
    lo, hi = geo.azimuth_range(ctx.geom)
    A = ctx.response(grid)
    resid = ctx.Y - A @ ctx.w_hat
    for _ in range(cfg.updates_per_em_iter):
        for l in range(L):
            w_row = ctx.w_hat[l]
            resid_l = resid + np.outer(A[:, l], w_row)
            a, da = _column(ctx, l, grid[l])
            g = _gradient(a, da, w_row, ctx.v_w[l], resid_l, ctx.sigma2)
            if g == 0 or not np.isfinite(g):
                continue
            grid[l] = np.clip(grid[l] + eps * np.sign(g), lo, hi)
            el = None if ctx.elevations is None else [ctx.elevations[l]]
            A[:, l] = geo.response_matrix(ctx.geom, [grid[l]], el)[:, 0]
            resid = resid_l - np.outer(A[:, l], w_row)
    return grid
