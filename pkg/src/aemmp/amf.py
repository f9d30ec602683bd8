"""Approximate message passing for the affine matrix factorisation

    Y = A (S X) + noise,   W = S X,

with a Gaussian signal prior on X and per-entry spike-and-slab priors on S.
Only the rank-reduced message statistics are stored: means are complex
arrays, variances real arrays. Shapes: Y is N x T, A is N x L, S is L x K,
X is K x T.

One iteration runs three half-steps: the output side (AWGN channel through
A), the central side (the bilinear node W = S X), and the input side
(posterior denoisers of X and S).
"""

import collections
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .cplx_linalg import frobenius_norm

log = logging.getLogger(__name__)


class AmfDivergence(FloatingPointError):
    def __init__(self, iteration, message="non-finite value in AMF state"):
        super().__init__(f"{message} at inner iteration {iteration}")
        self.iteration = iteration


@dataclass
class DampingConfig:
    """Adaptive convex damping: new <- rho * new + (1 - rho) * old.

    rho halves (down to ``minimum``) when the data-fit residual exceeds the
    largest of the previous ``window`` residuals and grows by ``grow`` (up to
    ``maximum``) otherwise.
    """

    initial: float = 0.3
    minimum: float = 0.05
    maximum: float = 0.3
    shrink: float = 0.5
    grow: float = 1.1
    adaptive: bool = True
    window: int = 10

    def __post_init__(self):
        if not 0 < self.minimum <= self.initial <= self.maximum <= 1:
            raise ValueError("need 0 < minimum <= initial <= maximum <= 1")


@dataclass
class AmfConfig:
    max_inner_iters: int = 300
    stop_tol: float = 1e-4
    damping: DampingConfig = field(default_factory=DampingConfig)
    variance_floor: float = 1e-12
    onsager: bool = True

    def __post_init__(self):
        if self.stop_tol <= 0:
            raise ValueError("stop_tol must be positive")


@dataclass
class AmfState:
    w_hat: np.ndarray
    v_w: np.ndarray
    u_hat: np.ndarray
    v_u: np.ndarray
    z_hat: np.ndarray
    v_z: np.ndarray
    beta_hat: np.ndarray
    v_beta: np.ndarray
    zeta_hat: np.ndarray
    v_zeta: np.ndarray
    p_hat: np.ndarray
    v_p: np.ndarray
    gamma_hat: np.ndarray
    v_gamma: np.ndarray
    r_hat: np.ndarray
    v_r: np.ndarray
    q_hat: np.ndarray
    v_q: np.ndarray
    x_hat: np.ndarray
    v_x: np.ndarray
    s_hat: np.ndarray
    v_s: np.ndarray
    prev_beta_hat: np.ndarray
    prev_gamma_hat: np.ndarray
    # damped copies of the posterior means, consumed by the r/q statistics
    x_bar: np.ndarray = None
    s_bar: np.ndarray = None
    v_p_bar: np.ndarray = None
    # set once the auxiliary fields hold values from a completed half-step
    warm: bool = False
    rho: float = 1.0
    variance_floor: float = 1e-12

    @property
    def dims(self):
        n, t = self.u_hat.shape
        l, k = self.s_hat.shape
        return n, l, k, t

    def copy(self):
        kw = {name: (val.copy() if isinstance(val, np.ndarray) else val)
              for name, val in self.__dict__.items()}
        return AmfState(**kw)

    def is_finite(self):
        # a single sum per field: any nan/inf poisons it
        return all(np.isfinite(v.sum()) for v in self.__dict__.values()
                   if isinstance(v, np.ndarray))


def init_state(n, l, k, t, signal_prior, rng, init_var=10.0, variance_floor=1e-12):
    """Fresh state: zero means except x_hat drawn from the signal prior."""
    cz = lambda *s: np.zeros(s, dtype=np.complex128)
    rz = lambda *s: np.zeros(s)
    return AmfState(
        w_hat=cz(l, t), v_w=np.full((l, t), init_var),
        u_hat=cz(n, t), v_u=rz(n, t),
        z_hat=cz(n, t), v_z=rz(n, t),
        beta_hat=cz(n, t), v_beta=rz(n, t),
        zeta_hat=cz(l, t), v_zeta=rz(l, t),
        p_hat=cz(l, t), v_p=rz(l, t),
        gamma_hat=cz(l, t), v_gamma=rz(l, t),
        r_hat=cz(k, t), v_r=rz(k, t),
        q_hat=cz(l, k), v_q=rz(l, k),
        x_hat=np.asarray(signal_prior.sample((k, t), rng), dtype=np.complex128),
        v_x=np.full((k, t), init_var),
        s_hat=cz(l, k), v_s=np.full((l, k), init_var),
        prev_beta_hat=cz(n, t), prev_gamma_hat=cz(l, t),
        variance_floor=variance_floor,
    )


def _damp(new, old, rho):
    if rho >= 1.0:
        return new
    return rho * new + (1.0 - rho) * old


def _floor(v, floor):
    return np.maximum(v, floor)


def output_half_step(state, A, Y, noise_var, rho=1.0, onsager=True, abs2A=None):
    """AWGN output channel: u, z, beta, zeta statistics."""
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    st = state
    fl = st.variance_floor
    rho_aux = rho if st.warm else 1.0
    if abs2A is None:
        abs2A = np.abs(A) ** 2

    st.v_u = _floor(_damp(abs2A @ st.v_w, st.v_u, rho_aux), fl)
    st.u_hat = A @ st.w_hat
    if onsager:
        st.u_hat = st.u_hat - st.v_u * st.prev_beta_hat

    denom = st.v_u + noise_var
    st.v_z = _floor(st.v_u * noise_var / denom, fl)
    st.z_hat = (st.u_hat * noise_var + Y * st.v_u) / denom

    # (v_u - v_z) / v_u^2 and (z - u) / v_u, written without cancellation
    st.v_beta = _floor(_damp(1.0 / denom, st.v_beta, rho_aux), fl)
    st.beta_hat = _damp((Y - st.u_hat) / denom, st.beta_hat, rho_aux)

    st.v_zeta = _floor(1.0 / _floor(abs2A.T @ st.v_beta, fl), fl)
    st.zeta_hat = st.w_hat + st.v_zeta * (A.conj().T @ st.beta_hat)
    st.prev_beta_hat = st.beta_hat.copy()
    return st


def fact1_moments(s_means, s_vars, x_means, x_vars):
    """Mean and variance of sum_k s_k x_k for independent complex s_k, x_k."""
    s_means, x_means = np.asarray(s_means), np.asarray(x_means)
    s_vars, x_vars = np.asarray(s_vars, dtype=float), np.asarray(x_vars, dtype=float)
    if not s_means.shape == s_vars.shape == x_means.shape == x_vars.shape:
        raise ValueError("all four inputs need the same length")
    mean = np.sum(s_means * x_means)
    var = np.sum(np.abs(s_means) ** 2 * x_vars + s_vars * np.abs(x_means) ** 2 + s_vars * x_vars)
    return complex(mean), float(var)


def central_half_step(state, rho=1.0, onsager=True):
    """Bilinear node: p and gamma statistics, then the W posterior."""
    st = state
    fl = st.variance_floor
    rho_aux = rho if st.warm else 1.0
    s2 = _abs2(st.s_hat)
    x2 = _abs2(st.x_hat)
    cross = s2 @ st.v_x + st.v_s @ x2
    st.v_p = _floor(_damp(cross + st.v_s @ st.v_x, st.v_p, rho_aux), fl)
    st.v_p_bar = _damp(cross, st.v_p_bar, rho_aux) if st.warm else cross
    st.p_hat = st.s_hat @ st.x_hat
    if onsager:
        st.p_hat = st.p_hat - st.prev_gamma_hat * st.v_p_bar

    denom = st.v_p + st.v_zeta
    st.v_gamma = _floor(_damp(1.0 / denom, st.v_gamma, rho_aux), fl)
    st.gamma_hat = _damp((st.zeta_hat - st.p_hat) / denom, st.gamma_hat, rho_aux)
    st.prev_gamma_hat = st.gamma_hat.copy()

    v_w = _floor(st.v_p * st.v_zeta / denom, fl)
    w_hat = v_w * (st.zeta_hat / st.v_zeta + st.p_hat / st.v_p)
    st.v_w = _floor(_damp(v_w, st.v_w, rho), fl)
    st.w_hat = _damp(w_hat, st.w_hat, rho)
    return st


def _abs2(a):
    return a.real ** 2 + a.imag ** 2


def slab_prior_logit(slab_weight):
    with np.errstate(divide="ignore"):
        return np.log(slab_weight) - np.log1p(-slab_weight)


def spike_slab_posterior(q_hat, v_q, slab_weight, slab_var, prior_logit=None):
    """Posterior moments of s under CN(s; q_hat, v_q) times a spike-and-slab prior.

    Returns ``(mean, var, eta, chi, nu)`` where ``eta`` is the posterior slab
    probability and ``(chi, nu)`` the slab-conditional mean and variance.
    """
    q_hat = np.asarray(q_hat)
    v_q = np.asarray(v_q, dtype=float)
    slab_var = np.asarray(slab_var, dtype=float)
    slab_weight = np.asarray(slab_weight, dtype=float)
    q2 = _abs2(q_hat)
    if prior_logit is None:
        prior_logit = slab_prior_logit(slab_weight)
    lik_logit = np.log(v_q / (slab_var + v_q)) + q2 / v_q - q2 / (v_q + slab_var)
    eta = expit(lik_logit + prior_logit)
    chi = slab_var * q_hat / (slab_var + v_q)
    nu = slab_var * v_q / (slab_var + v_q)
    mean = eta * chi
    var = eta * nu + eta * (1 - eta) * _abs2(chi)
    return mean, var, eta, chi, nu


def input_half_step(state, signal_prior, s_prior_msgs, rho=1.0, prior_logit=None):
    """r and q statistics, then posterior moments of X and S.

    The r/q sums use damped copies ``x_bar``/``s_bar`` of the posterior means;
    the posteriors themselves are stored undamped.
    """
    st = state
    fl = st.variance_floor
    if st.warm:
        st.x_bar = _damp(st.x_hat, st.x_bar, rho)
        st.s_bar = _damp(st.s_hat, st.s_bar, rho)
    else:
        st.x_bar, st.s_bar = st.x_hat.copy(), st.s_hat.copy()
    xb, sb = st.x_bar, st.s_bar

    # precision forms: stay finite while s_bar or x_bar is still all-zero
    prec_r = _abs2(sb).T @ st.v_gamma
    r_scaled = (prec_r - st.v_s.T @ st.v_gamma) * xb + sb.conj().T @ st.gamma_hat
    prec_r = _floor(prec_r, fl)
    st.v_r = 1.0 / prec_r
    st.r_hat = r_scaled * st.v_r

    prec_q = st.v_gamma @ _abs2(xb).T
    q_scaled = (prec_q - st.v_gamma @ st.v_x.T) * sb + st.gamma_hat @ xb.conj().T
    prec_q = _floor(prec_q, fl)
    st.v_q = 1.0 / prec_q
    st.q_hat = q_scaled * st.v_q

    st.x_hat, v_x = signal_prior.posterior_from_precision(r_scaled, prec_r)
    st.v_x = _floor(v_x, fl)
    st.s_hat, v_s, _, _, _ = spike_slab_posterior(st.q_hat, st.v_q, s_prior_msgs.slab_weight,
                                                  s_prior_msgs.slab_var, prior_logit)
    st.v_s = _floor(v_s, fl)
    st.warm = True
    return st


def run_amf(state, A, Y, noise_var, signal_prior, s_prior_msgs, config=None, diagnostics=None):
    """Iterate the three half-steps until the relative change of x_hat drops
    below ``config.stop_tol`` or ``max_inner_iters`` is reached.

    ``diagnostics``, if given, is a writable text stream receiving one CSV line
    ``iteration,residual,rho`` per iteration. Returns ``(state, iterations)``.
    """
    cfg = config or AmfConfig()
    dcfg = cfg.damping
    st = state
    st.variance_floor = cfg.variance_floor
    if not st.warm:
        st.rho = dcfg.initial
    recent = collections.deque([np.inf], maxlen=max(dcfg.window, 1))
    abs2A = np.abs(A) ** 2
    prior_logit = slab_prior_logit(np.asarray(s_prior_msgs.slab_weight, dtype=float))
    it = 0
    for it in range(1, cfg.max_inner_iters + 1):
        x_old = st.x_hat.copy()
        rho = st.rho
        output_half_step(st, A, Y, noise_var, rho, cfg.onsager, abs2A)
        central_half_step(st, rho, cfg.onsager)
        input_half_step(st, signal_prior, s_prior_msgs, rho, prior_logit)
        # nan/inf in any variance reaches these means within the same iteration
        if not np.isfinite(st.w_hat.sum() + st.x_hat.sum() + st.s_hat.sum()):
            raise AmfDivergence(it)
        res = frobenius_norm(Y - A @ st.w_hat)
        if diagnostics is not None:
            diagnostics.write(f"{it},{res:.10g},{rho:.6g}\n")
        if dcfg.adaptive:
            if res > max(recent):
                st.rho = max(st.rho * dcfg.shrink, dcfg.minimum)
            else:
                st.rho = min(st.rho * dcfg.grow, dcfg.maximum)
        recent.append(res)
        den = frobenius_norm(x_old)
        change = frobenius_norm(st.x_hat - x_old) / den if den > 0 else np.inf
        if change <= cfg.stop_tol:
            break
    log.debug("AMF stopped after %d iterations (rho=%.3g)", it, st.rho)
    return st, it
