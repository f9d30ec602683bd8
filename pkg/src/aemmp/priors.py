"""Signal prior, spike-and-slab channel prior and the support Markov chain."""

import json
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .cplx_linalg import sample_cgaussian


@dataclass
class HyperParams:
    """EM-learned state: noise level, support statistics, slab variances, grid."""

    noise_var: float
    lam: float
    p01: float
    varphi: np.ndarray
    grid: np.ndarray
    elevations: Optional[np.ndarray] = None

    def __post_init__(self):
        self.varphi = np.asarray(self.varphi, dtype=float)
        self.grid = np.asarray(self.grid, dtype=float)
        if self.noise_var <= 0 or np.any(self.varphi <= 0):
            raise ValueError("noise_var and varphi must be positive")
        if not 0 < self.lam < 1:
            raise ValueError("lambda must lie in (0, 1)")

    @property
    def p10(self):
        return self.p01 * self.lam / (1 - self.lam)

    def copy(self):
        return HyperParams(self.noise_var, self.lam, self.p01, self.varphi.copy(),
                           self.grid.copy(),
                           None if self.elevations is None else self.elevations.copy())

    def to_json(self):
        d = {"noise_var": self.noise_var, "lambda": self.lam, "p01": self.p01,
             "varphi": self.varphi.tolist(), "grid": self.grid.tolist()}
        if self.elevations is not None:
            d["elevations"] = self.elevations.tolist()
        return json.dumps(d)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        el = d.get("elevations")
        return cls(d["noise_var"], d["lambda"], d["p01"], np.asarray(d["varphi"]),
                   np.asarray(d["grid"]), None if el is None else np.asarray(el))


@dataclass(frozen=True)
class CircularGaussian:
    """CN(0, var) signal prior exposing a (mean, variance) denoiser."""

    var: float = 1.0

    def __post_init__(self):
        if self.var <= 0:
            raise ValueError("prior variance must be positive")

    def sample(self, shape, rng):
        return sample_cgaussian(0.0, self.var, rng, size=shape)

    def posterior(self, r_hat, v_r):
        """Moments of CN(x; r_hat, v_r) CN(x; 0, var), normalised."""
        v = 1.0 / (1.0 / v_r + 1.0 / self.var)
        return v * r_hat / v_r, v

    def posterior_from_precision(self, r_scaled, prec_r):
        """Same as :meth:`posterior` with inputs ``r_hat / v_r`` and ``1 / v_r``,
        which stays finite when the likelihood is flat (``prec_r -> 0``)."""
        v = 1.0 / (prec_r + 1.0 / self.var)
        return v * r_scaled, v


class SpikeSlab(NamedTuple):
    """(1 - slab_weight) delta(s) + slab_weight CN(s; 0, slab_var)."""

    slab_weight: np.ndarray
    slab_var: np.ndarray

    @property
    def spike_weight(self):
        return 1.0 - self.slab_weight

    @property
    def second_moment(self):
        return self.slab_weight * self.slab_var


class TransitionTable(NamedTuple):
    p01: float
    p10: float
    table: np.ndarray  # rows: previous state 0/1, cols: next state 0/1


def transition_probs(lam, p01):
    """Support chain with stationary marginal ``lam`` and exit rate ``p01``."""
    if not 0 < lam < 1:
        raise ValueError("lambda must lie in (0, 1)")
    if not 0 <= p01 <= 1:
        raise ValueError("p01 must lie in [0, 1]")
    p10 = p01 * lam / (1 - lam)
    if p10 > 1:
        raise ValueError(f"inconsistent hyper-parameters: p10 = {p10:.4g} > 1")
    table = np.array([[1 - p10, p10], [p01, 1 - p01]])
    return TransitionTable(p01, p10, table)


def bernoulli_p01(lam):
    """Exit rate that makes both transition rows equal (1 - lam, lam)."""
    return 1.0 - lam


def marginal_s_prior(lam, varphi_k):
    return SpikeSlab(np.asarray(lam, dtype=float), np.asarray(varphi_k, dtype=float))
