"""Ground-truth synthesis: clustered multipath scenes, user signals and the
received block ``Y = H X + noise``."""

import json
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .cplx_linalg import matmul, sample_cgaussian

DEFAULT_X_REF = 1 + 0j


@dataclass
class ChannelScene:
    n_clusters: int
    n_paths_per_cluster: int
    angular_spread: float
    cluster_centers: np.ndarray  # K x L_c
    path_aoas: np.ndarray  # K x (L_c * L_p)
    path_gains: np.ndarray  # K x (L_c * L_p), complex
    path_elevations: np.ndarray = None  # K x (L_c * L_p), URA only
    cluster_elevations: np.ndarray = None

    @property
    def k_users(self):
        return self.path_aoas.shape[0]

    def to_dict(self):
        d = {
            "n_clusters": self.n_clusters,
            "n_paths_per_cluster": self.n_paths_per_cluster,
            "angular_spread": self.angular_spread,
            "cluster_centers": self.cluster_centers.tolist(),
            "path_aoas": self.path_aoas.tolist(),
            "path_gains": complex_to_pairs(self.path_gains),
        }
        if self.path_elevations is not None:
            d["path_elevations"] = self.path_elevations.tolist()
            d["cluster_elevations"] = self.cluster_elevations.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        el = d.get("path_elevations")
        cel = d.get("cluster_elevations")
        return cls(
            n_clusters=d["n_clusters"],
            n_paths_per_cluster=d["n_paths_per_cluster"],
            angular_spread=d["angular_spread"],
            cluster_centers=np.asarray(d["cluster_centers"], dtype=float),
            path_aoas=np.asarray(d["path_aoas"], dtype=float),
            path_gains=pairs_to_complex(d["path_gains"]),
            path_elevations=None if el is None else np.asarray(el, dtype=float),
            cluster_elevations=None if cel is None else np.asarray(cel, dtype=float),
        )


@dataclass
class GroundTruth:
    H: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    noise_var: float
    x_ref: complex = DEFAULT_X_REF
    extra: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps({
            "H": complex_to_pairs(self.H),
            "X": complex_to_pairs(self.X),
            "Y": complex_to_pairs(self.Y),
            "noise_var": self.noise_var,
            "x_ref": [self.x_ref.real, self.x_ref.imag],
        })

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(
            H=pairs_to_complex(d["H"]),
            X=pairs_to_complex(d["X"]),
            Y=pairs_to_complex(d["Y"]),
            noise_var=d["noise_var"],
            x_ref=complex(*d["x_ref"]),
        )


def complex_to_pairs(a):
    a = np.asarray(a, dtype=np.complex128)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def pairs_to_complex(p):
    p = np.asarray(p, dtype=float)
    return p[..., 0] + 1j * p[..., 1]


def draw_scene(k_users, geom, l_c, l_p, spread, rng,
               elevation_span=np.deg2rad(25.0)):
    """Clustered scene: per-user centres uniform over the azimuth range, paths
    uniform within ``centre +- spread/2``, gains iid CN(0, 1)."""
    if l_c < 1 or l_p < 1:
        raise ValueError("need at least one cluster and one path per cluster")
    lo, hi = geo.azimuth_range(geom)
    centers = rng.uniform(lo, hi, size=(k_users, l_c))
    offsets = rng.uniform(-spread / 2, spread / 2, size=(k_users, l_c, l_p))
    aoas = (centers[:, :, None] + offsets).reshape(k_users, l_c * l_p)
    gains = sample_cgaussian(0.0, 1.0, rng, size=(k_users, l_c * l_p))
    scene = ChannelScene(l_c, l_p, spread, centers, aoas, gains)
    if geo.is_planar(geom):
        cel = rng.uniform(-elevation_span, elevation_span, size=(k_users, l_c))
        el_off = rng.uniform(-spread / 2, spread / 2, size=(k_users, l_c, l_p))
        scene.cluster_elevations = cel
        scene.path_elevations = (cel[:, :, None] + el_off).reshape(k_users, l_c * l_p)
    return scene


def synth_channel(geom, scene):
    """H (N x K): column k is the coherent sum of user k's path responses."""
    k_users = scene.k_users
    H = np.zeros((geom.n, k_users), dtype=np.complex128)
    for k in range(k_users):
        el = None if scene.path_elevations is None else scene.path_elevations[k]
        A = geo.response_matrix(geom, scene.path_aoas[k], el)
        H[:, k] = A @ scene.path_gains[k]
    return H


def generate_signals(k_users, t_len, rng, x_ref=DEFAULT_X_REF):
    """K x T signals: first column is the reference symbol, the rest iid CN(0, 1)."""
    if t_len < 2:
        raise ValueError("t_len must be >= 2 (one reference plus data symbols)")
    X = np.empty((k_users, t_len), dtype=np.complex128)
    X[:, 0] = x_ref
    X[:, 1:] = sample_cgaussian(0.0, 1.0, rng, size=(k_users, t_len - 1))
    return X


def synth_rx(H, X, noise_var, rng):
    if noise_var < 0:
        raise ValueError("noise_var must be nonnegative")
    HX = matmul(H, X)
    if noise_var == 0:
        return HX
    return HX + sample_cgaussian(0.0, noise_var, rng, size=HX.shape)


def noise_var_from_snr(k_users, snr_db):
    """sigma^2 = K / SNR with SNR given in dB."""
    return k_users / 10.0 ** (snr_db / 10.0)


def simulate(geom, k_users, t_len, l_c, l_p, spread, snr_db, rng, x_ref=DEFAULT_X_REF):
    """Draw a scene and return the matching ground truth."""
    scene = draw_scene(k_users, geom, l_c, l_p, spread, rng)
    H = synth_channel(geom, scene)
    X = generate_signals(k_users, t_len, rng, x_ref)
    noise_var = noise_var_from_snr(k_users, snr_db)
    Y = synth_rx(H, X, noise_var, rng)
    return GroundTruth(H, X, Y, noise_var, x_ref, extra={"scene": scene})


def simulate_known_grid(n_antennas, k_users, t_len, grid_size, sparsity, snr_db, rng,
                        spacing_over_wavelength=0.5, x_ref=DEFAULT_X_REF):
    """ULA scene whose true AoAs lie on a known perturbed DFT grid.

    Grid: sin(angle_l) = sin(dft_l) + kappa_l, kappa_l ~ U[-1/L, 1/L]; the
    angular channel S has iid Bernoulli(sparsity) support with CN(0, 1) values.
    The grid is returned in ``extra['grid']``.
    """
    geom = geo.ULA(n_antennas, spacing_over_wavelength)
    u = np.sin(geo.dft_grid(grid_size, 0.5))
    u = u + rng.uniform(-1.0 / grid_size, 1.0 / grid_size, size=grid_size)
    u = np.clip(u, -1 + 1e-9, 1 - 1e-9)
    grid = np.sort(np.arcsin(u))
    support = rng.random((grid_size, k_users)) < sparsity
    S = np.where(support, sample_cgaussian(0.0, 1.0, rng, size=(grid_size, k_users)), 0)
    H = geo.response_matrix(geom, grid) @ S
    X = generate_signals(k_users, t_len, rng, x_ref)
    noise_var = noise_var_from_snr(k_users, snr_db)
    Y = synth_rx(H, X, noise_var, rng)
    return GroundTruth(H, X, Y, noise_var, x_ref, extra={"grid": grid, "S": S, "geom": geom})
