"""EM estimator: projection, alternating message-passing E-steps and
closed-form M-steps, reverse projection and ambiguity removal."""

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import amf as amf_mp
from . import markov, mstep
from . import geometry as geo
from .cplx_linalg import frobenius_norm, right_singular_block
from .priors import CircularGaussian, HyperParams, bernoulli_p01

log = logging.getLogger(__name__)

VARIANTS = ("markov", "bernoulli")


@dataclass
class EstimatorConfig:
    max_em_iters: int = 14
    stop_tol: float = 1e-4
    grid_size: int = None  # defaults to the number of antennas
    amf: amf_mp.AmfConfig = field(default_factory=amf_mp.AmfConfig)
    angle_tune: mstep.AngleTuneConfig = field(default_factory=mstep.AngleTuneConfig)
    x_ref: complex = 1 + 0j
    variant: str = "markov"
    tune_angles: bool = True
    project: bool = True
    mstep_rounds: int = 3
    n_elevations: int = 1
    n_restarts: int = 5

    def __post_init__(self):
        if self.grid_size is not None and self.grid_size < 1:
            raise ValueError("grid_size must be >= 1")
        if self.stop_tol <= 0:
            raise ValueError("stop_tol must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be >= 1")
        if self.max_em_iters < 1:
            raise ValueError("max_em_iters must be >= 1")


@dataclass
class EstimationResult:
    X_hat: np.ndarray
    S_hat: np.ndarray
    H_hat: np.ndarray
    learned: HyperParams
    support_posterior: np.ndarray
    diagnostics: list
    converged: bool
    em_iters: int
    residual: float = np.nan  # relative data fit of the returned S_hat X_hat (working domain)

    def diagnostics_jsonl(self):
        return "".join(json.dumps(rec) + "\n" for rec in self.diagnostics)


def project(Y, k_users):
    """Y_bar = Y V1 with V1 the top-K right singular vectors of Y."""
    Y = np.asarray(Y)
    if Y.shape[1] < k_users:
        raise ValueError(f"need T >= K for the projection, got T={Y.shape[1]}, K={k_users}")
    V1 = right_singular_block(Y, k_users)
    return Y @ V1, V1


def initialize_hyperparams(Y, geom, k_users, config=None, grid=None):
    cfg = config or EstimatorConfig()
    n, t = Y.shape
    noise_var = float(np.sum(np.abs(Y) ** 2)) / (100.0 * n * t)
    if grid is None:
        size = cfg.grid_size or geom.n
        az, el = geo.uniform_grid(geom, size, cfg.n_elevations)
    else:
        az, el = grid
    return HyperParams(noise_var=noise_var, lam=0.1, p01=0.5, varphi=np.ones(k_users),
                       grid=az, elevations=el)


def resolve_phase(X_hat, S_hat, x_ref=1 + 0j):
    """Rescale each user so that its first symbol equals x_ref; S absorbs the inverse."""
    X_hat, S_hat = np.asarray(X_hat), np.asarray(S_hat)
    first = X_hat[:, 0]
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        scale = x_ref / first
    bad = np.flatnonzero((first == 0) | ~np.isfinite(scale)).tolist()
    if bad:
        raise ValueError(f"phase unrecoverable for users {bad}: first symbol estimate is 0")
    X_new = X_hat * scale[:, None]
    X_new[:, 0] = x_ref
    return X_new, S_hat * (first / x_ref)[None, :]


def match_permutation(X_hat, X_true):
    """perm[k] = estimated row assigned to true user k, chosen greedily by
    largest normalised |row correlation|."""
    X_hat, X_true = np.asarray(X_hat), np.asarray(X_true)
    if X_hat.shape != X_true.shape:
        raise ValueError("X_hat and X_true must share a shape")
    nh = np.linalg.norm(X_hat, axis=1)
    nt = np.linalg.norm(X_true, axis=1)
    C = np.abs(X_hat.conj() @ X_true.T) / np.maximum(np.outer(nh, nt), 1e-300)
    K = C.shape[0]
    perm = np.full(K, -1)
    C = C.copy()
    for _ in range(K):
        i, k = np.unravel_index(np.argmax(C), C.shape)
        perm[k] = i
        C[i, :] = -1
        C[:, k] = -1
    return perm


def _chain(pi_out, hp, variant):
    p01 = bernoulli_p01(hp.lam) if variant == "bernoulli" else hp.p01
    return markov.run_chain(pi_out, hp.lam, p01)


def _feasible_p01(p01, lam):
    # keep p10 = p01 lam / (1 - lam) a probability
    return min(p01, (1 - lam) / lam * (1 - mstep.PROB_CLAMP))


def _mstep_support(state, hp, variant, rounds):
    """Nested rounds of slab variance, lambda and p01 updates; returns the
    chain state under the final parameters."""
    for _ in range(rounds):
        pi_out = markov.compute_pi_out(state.q_hat, state.v_q, hp.varphi)
        mc = _chain(pi_out, hp, variant)
        hp.varphi = np.maximum(
            mstep.update_varphi(state.q_hat, state.v_q, mc.pi_in, pi_out, hp.varphi), 1e-12)
        pi_out = markov.compute_pi_out(state.q_hat, state.v_q, hp.varphi)
        mc = _chain(pi_out, hp, variant)
        # lambda is the stationary activity rate: every site is evidence for it
        hp.lam = mstep.update_lambda_pooled(mc.omega)
        if variant == "bernoulli":
            hp.p01 = bernoulli_p01(hp.lam)
        else:
            hp.p01 = _feasible_p01(hp.p01, hp.lam)
            mc = _chain(pi_out, hp, variant)
            hp.p01 = _feasible_p01(mstep.update_p01(mc.pairwise, mc.omega, hp.p01), hp.lam)
    pi_out = markov.compute_pi_out(state.q_hat, state.v_q, hp.varphi)
    return _chain(pi_out, hp, variant)


def run(Y, geom, k_users, config=None, rng=None, grid=None, diagnostics=None):
    """Blind estimation of X (K x T) and the angular channel S (L x K) from Y.

    ``grid`` optionally overrides the initial angle grid as ``(azimuths,
    elevations)``. ``diagnostics``, if given, receives one JSON line per EM
    iteration. With ``config.n_restarts > 1`` the EM loop is rerun from fresh
    random signal initialisations and the sparsest well-fitting run is kept.
    """
    cfg = config or EstimatorConfig()
    rng = np.random.default_rng() if rng is None else rng
    Y = np.asarray(Y, dtype=np.complex128)
    n, t = Y.shape
    if not 1 <= k_users <= t:
        raise ValueError("need 1 <= K <= T")

    if cfg.project:
        Y_work, V1 = project(Y, k_users)
        # X V1 keeps all of the K*T signal energy in K*K entries
        signal_prior = CircularGaussian(t / k_users)
    else:
        Y_work, V1 = Y, None
        signal_prior = CircularGaussian(1.0)

    # EM runs on the centroid-referenced twin; results are mapped back below
    work_geom = geo.centered(geom)
    runs = []
    for restart, child in enumerate(rng.spawn(cfg.n_restarts)):
        try:
            runs.append(_em(Y, Y_work, V1, work_geom, k_users, cfg, child, grid, signal_prior,
                            diagnostics, restart))
        except amf_mp.AmfDivergence as exc:
            if cfg.n_restarts == 1:
                raise
            log.warning("restart %d diverged: %s", restart, exc)
    if not runs:
        raise amf_mp.AmfDivergence(-1, "every restart diverged")
    return _to_base_reference(select_restart(runs), geom)


def _to_base_reference(res, geom):
    phase, _ = geo.centroid_phase(geom, res.learned.grid, res.learned.elevations)
    res.S_hat = res.S_hat * np.exp(1j * phase)[:, None]
    A = geo.response_matrix(geom, res.learned.grid, res.learned.elevations)
    res.H_hat = A @ res.S_hat
    return res


def select_restart(runs, fit_slack=0.05):
    """Keep the run with the fewest expected active channel entries among runs
    whose unexplained share of the data energy is within ``fit_slack`` of the
    best run. Mixing users leaves the fit unchanged but densifies S, so the fit
    only screens out collapsed or diverged runs."""
    unexplained = np.array([r.residual ** 2 for r in runs])
    ok = unexplained <= np.min(unexplained) + fit_slack
    sizes = [r.support_posterior.sum() if good else np.inf for r, good in zip(runs, ok)]
    return runs[int(np.argmin(sizes))]


def residual_noise_level(Y, V1):
    """Per-entry energy of Y outside the row space of V1, i.e. what the
    projection discards. It holds no signal, so it measures the noise floor."""
    n, t = Y.shape
    k = V1.shape[1]
    if t == k:
        return 0.0
    outside = Y - (Y @ V1) @ V1.conj().T
    return float(np.sum(np.abs(outside) ** 2)) / (n * (t - k))


def _em(Y, Y_work, V1, geom, k_users, cfg, rng, grid, signal_prior, diagnostics, restart):
    n = Y.shape[0]
    hp = initialize_hyperparams(Y, geom, k_users, cfg, grid)
    L = hp.grid.size
    if cfg.variant == "bernoulli":
        hp.p01 = bernoulli_p01(hp.lam)
    mc = _chain(np.full((L, k_users), 0.5), hp, cfg.variant)
    msgs = markov.build_s_prior_msgs(mc.pi_in, hp.varphi)
    state = amf_mp.init_state(n, L, k_users, Y_work.shape[1], signal_prior, rng,
                              variance_floor=cfg.amf.variance_floor)

    noise_floor = 0.0 if V1 is None else residual_noise_level(Y, V1)
    records = []
    best = None
    X_prev = None
    converged = False
    j = 0
    for j in range(1, cfg.max_em_iters + 1):
        A = geo.response_matrix(geom, hp.grid, hp.elevations)
        state, inner = amf_mp.run_amf(state, A, Y_work, hp.noise_var, signal_prior, msgs,
                                      cfg.amf)
        # fit of the bilinear point estimate; w_hat on its own can follow the data
        residual = frobenius_norm(Y_work - A @ (state.s_hat @ state.x_hat))

        if cfg.tune_angles and cfg.angle_tune.updates_per_em_iter > 0:
            ctx = mstep.AngleContext(Y_work, state.w_hat, state.v_w, hp.grid, geom,
                                     hp.noise_var, hp.elevations)
            hp.grid = mstep.tune_grid(ctx, cfg.angle_tune)
        # the projected fit also absorbs grid mismatch; never go below the noise floor
        hp.noise_var = max(mstep.update_sigma2(Y_work, state.z_hat, state.v_z), noise_floor)
        mc = _mstep_support(state, hp, cfg.variant, cfg.mstep_rounds)
        msgs = markov.build_s_prior_msgs(mc.pi_in, hp.varphi)

        X_hat = state.x_hat if V1 is None else state.x_hat @ V1.conj().T
        S_hat = state.s_hat.copy()
        try:
            X_hat, S_hat = resolve_phase(X_hat, S_hat, cfg.x_ref)
        except ValueError:
            log.warning("EM iteration %d: zero reference estimate, phase left unresolved", j)

        rec = {"restart": restart, "em_iter": j, "sigma2": hp.noise_var, "lambda": hp.lam,
               "p01": hp.p01, "inner_iters": inner, "residual": residual,
               "grid": hp.grid.tolist()}
        records.append(rec)
        if diagnostics is not None:
            diagnostics.write(json.dumps(rec) + "\n")

        snapshot = (X_hat, S_hat, hp.copy(), mc.omega.copy(), residual)
        if best is None or residual <= best[0]:
            best = (residual, snapshot)
        last = snapshot

        if X_prev is not None:
            den = frobenius_norm(X_prev)
            change = frobenius_norm(X_hat - X_prev) / den if den > 0 else np.inf
            if change <= cfg.stop_tol:
                converged = True
                break
        elif not np.isfinite(cfg.stop_tol):
            converged = True
            break
        X_prev = X_hat

    X_hat, S_hat, learned, omega, fit = last if converged else best[1]
    fit = fit / max(frobenius_norm(Y_work), 1e-300)
    A = geo.response_matrix(geom, learned.grid, learned.elevations)
    return EstimationResult(X_hat=X_hat, S_hat=S_hat, H_hat=A @ S_hat, learned=learned,
                            support_posterior=omega, diagnostics=records,
                            converged=converged, em_iters=j, residual=fit)
