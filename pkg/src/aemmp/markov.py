"""Support messages on the per-user Markov chains.

Arrays are L x K: rows index grid points along a chain, columns index users.
Each user's chain is an independent two-state HMM whose per-site evidence is
``pi_out`` (probability that the slab is active given the AMF messages).
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .priors import SpikeSlab, transition_probs

EPS_PROB = 1e-12


def _clip(p):
    return np.clip(p, EPS_PROB, 1 - EPS_PROB)


@dataclass
class McState:
    lambda_fwd: np.ndarray
    lambda_bwd: np.ndarray
    pi_in: np.ndarray
    pi_out: np.ndarray
    omega: np.ndarray
    pairwise: np.ndarray = None


def pi_out_logit(q_hat, v_q, varphi):
    """Log-odds that s_lk is drawn from the slab given CN(s; q_hat, v_q)."""
    varphi = np.asarray(varphi, dtype=float)[None, :]
    q2 = np.abs(q_hat) ** 2
    return np.log(v_q / (varphi + v_q)) + q2 / v_q - q2 / (v_q + varphi)


def compute_pi_out(q_hat, v_q, varphi):
    return _clip(expit(pi_out_logit(q_hat, v_q, varphi)))


def forward_backward(pi_out, lam, p01):
    """Forward and backward chain messages (probability of state 1)."""
    pi_out = np.atleast_2d(np.asarray(pi_out, dtype=float))
    _, p10, _ = transition_probs(lam, p01)
    L, K = pi_out.shape
    fwd = np.empty((L, K))
    bwd = np.empty((L, K))
    fwd[0] = lam
    for l in range(1, L):
        f, po = fwd[l - 1], pi_out[l - 1]
        on = f * po
        off = (1 - f) * (1 - po)
        fwd[l] = (p10 * off + (1 - p01) * on) / (off + on)
    fwd = _clip(fwd)
    bwd[L - 1] = 0.5
    for l in range(L - 2, -1, -1):
        b, po = bwd[l + 1], pi_out[l + 1]
        on = b * po
        off = (1 - b) * (1 - po)
        bwd[l] = (p01 * off + (1 - p01) * on) / ((1 - p10 + p01) * off + (1 - p01 + p10) * on)
        bwd[l] = _clip(bwd[l])
    return fwd, bwd


def compute_pi_in(lambda_fwd, lambda_bwd):
    on = lambda_fwd * lambda_bwd
    return _clip(on / (on + (1 - lambda_fwd) * (1 - lambda_bwd)))


def compute_omega(lambda_fwd, lambda_bwd, pi_out):
    on = lambda_fwd * lambda_bwd * pi_out
    return on / (on + (1 - lambda_fwd) * (1 - lambda_bwd) * (1 - pi_out))


def pairwise_posterior(lambda_fwd, lambda_bwd, pi_out, lam, p01):
    """P(c_l = 1, c_{l+1} = 1 | evidence), shape (L-1) x K (two-slice smoothing)."""
    T = transition_probs(lam, p01).table
    f1 = lambda_fwd[:-1] * pi_out[:-1]
    f0 = (1 - lambda_fwd[:-1]) * (1 - pi_out[:-1])
    b1 = lambda_bwd[1:] * pi_out[1:]
    b0 = (1 - lambda_bwd[1:]) * (1 - pi_out[1:])
    j11 = f1 * T[1, 1] * b1
    total = f0 * T[0, 0] * b0 + f0 * T[0, 1] * b1 + f1 * T[1, 0] * b0 + j11
    return j11 / total


def build_s_prior_msgs(pi_in, varphi):
    pi_in = np.asarray(pi_in, dtype=float)
    return SpikeSlab(pi_in, np.broadcast_to(np.asarray(varphi, dtype=float)[None, :],
                                            pi_in.shape))


def run_chain(pi_out, lam, p01):
    """All chain quantities for given evidence and transition parameters."""
    fwd, bwd = forward_backward(pi_out, lam, p01)
    return McState(
        lambda_fwd=fwd,
        lambda_bwd=bwd,
        pi_in=compute_pi_in(fwd, bwd),
        pi_out=pi_out,
        omega=compute_omega(fwd, bwd, pi_out),
        pairwise=pairwise_posterior(fwd, bwd, pi_out, lam, p01),
    )
