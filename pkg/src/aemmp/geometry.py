"""Antenna array geometries: steering vectors, their azimuth derivatives and
grid response matrices.

All angles are radians. Every function is vectorised over the angle argument:
passing an array of ``L`` angles returns an ``N x L`` matrix whose columns are
the per-angle vectors.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ULA:
    n_antennas: int
    spacing_over_wavelength: float = 0.5

    def __post_init__(self):
        if self.n_antennas < 1 or self.spacing_over_wavelength <= 0:
            raise ValueError("ULA needs n_antennas >= 1 and positive spacing")

    @property
    def n(self):
        return self.n_antennas

    @property
    def positions(self):
        return self.spacing_over_wavelength * np.arange(self.n_antennas)


@dataclass(frozen=True)
class Lens:
    """Lens antenna array; steering entries are sinc samples, not unit-norm."""

    n_antennas: int
    aperture_over_wavelength: float

    def __post_init__(self):
        if self.n_antennas < 1 or self.aperture_over_wavelength <= 0:
            raise ValueError("Lens needs n_antennas >= 1 and positive aperture")

    @property
    def n(self):
        return self.n_antennas


@dataclass(frozen=True)
class ArbitraryLinear:
    positions_over_wavelength: tuple

    def __post_init__(self):
        pos = np.asarray(self.positions_over_wavelength, dtype=float)
        if pos.ndim != 1 or pos.size < 1:
            raise ValueError("positions must be a non-empty 1-D sequence")
        if pos[0] != 0.0 or np.any(np.diff(pos) <= 0):
            raise ValueError("positions must start at 0 and increase strictly")
        object.__setattr__(self, "positions_over_wavelength", tuple(float(p) for p in pos))

    @property
    def n(self):
        return len(self.positions_over_wavelength)

    @property
    def positions(self):
        return np.asarray(self.positions_over_wavelength)

    @classmethod
    def random(cls, n_antennas, rng, low=0.4, high=0.5):
        """Antenna i sits uniformly in [d_{i-1} + low, d_{i-1} + high] wavelengths."""
        steps = rng.uniform(low, high, size=n_antennas - 1)
        return cls(tuple(np.concatenate([[0.0], np.cumsum(steps)])))


@dataclass(frozen=True)
class URA:
    n_horizontal: int
    n_vertical: int
    spacing_over_wavelength: float = 0.5

    def __post_init__(self):
        if self.n_horizontal < 1 or self.n_vertical < 1 or self.spacing_over_wavelength <= 0:
            raise ValueError("URA needs positive dimensions and spacing")

    @property
    def n(self):
        return self.n_horizontal * self.n_vertical


@dataclass(frozen=True)
class Centered:
    """A phased array with its phase reference moved to the array centroid.

    Column l of the response differs from the base geometry's by a
    unit-modulus factor, so both span the same model once channel
    coefficients absorb that factor. Keeping the reference central decouples
    an angle shift from a coefficient phase rotation, which lets alternating
    angle and coefficient updates converge much faster.
    """

    base: object

    def __post_init__(self):
        if not isinstance(self.base, (ULA, ArbitraryLinear, URA)):
            raise TypeError("only phased arrays carry a movable phase reference")

    @property
    def n(self):
        return self.base.n


def centered(geom):
    """Centroid-referenced twin of a phased array; other geometries pass through."""
    if isinstance(geom, (ULA, ArbitraryLinear, URA)):
        return Centered(geom)
    return geom


def _base(geom):
    return geom.base if isinstance(geom, Centered) else geom


def is_planar(geom):
    return isinstance(_base(geom), URA)


def azimuth_range(geom):
    """Open azimuth interval the geometry resolves."""
    if is_planar(geom):
        return -np.pi, np.pi
    return -np.pi / 2, np.pi / 2


def _check_elevation(geom, elevation):
    if is_planar(geom) and elevation is None:
        raise ValueError("URA steering vectors need an elevation angle")
    if not is_planar(geom) and elevation is not None:
        raise ValueError(f"{type(geom).__name__} is one-dimensional; elevation not accepted")


def _linear_phase(positions, theta):
    # positions (N,), theta (L,) -> (N, L)
    return np.exp(-2j * np.pi * np.outer(positions, np.sin(theta)))


def _lens_args(geom, theta):
    m = np.arange(geom.n_antennas) - (geom.n_antennas - 1) / 2.0
    return m[:, None] - geom.aperture_over_wavelength * np.sin(theta)[None, :]


def _dsinc(x):
    """Derivative of the normalised sinc, sin(pi x)/(pi x)."""
    out = np.zeros_like(x)
    nz = np.abs(x) > 1e-8
    xn = x[nz]
    out[nz] = (np.cos(np.pi * xn) - np.sinc(xn)) / xn
    # Taylor expansion near the origin: -(pi^2/3) x
    out[~nz] = -(np.pi ** 2 / 3.0) * x[~nz]
    return out


def _ura_parts(geom, theta, psi):
    kd = 2 * np.pi * geom.spacing_over_wavelength
    nh = np.arange(geom.n_horizontal)[:, None]
    nv = np.arange(geom.n_vertical)[:, None]
    ph_h = -kd * nh * (np.cos(psi) * np.sin(theta))[None, :]
    ph_v = kd * nv * (np.cos(psi) * np.cos(theta))[None, :]
    a_h = np.exp(1j * ph_h) / np.sqrt(geom.n_horizontal)
    a_v = np.exp(1j * ph_v) / np.sqrt(geom.n_vertical)
    # d/dtheta of the phases
    da_h = a_h * (-1j * kd * nh * (np.cos(psi) * np.cos(theta))[None, :])
    da_v = a_v * (-1j * kd * nv * (np.cos(psi) * np.sin(theta))[None, :])
    return a_h, a_v, da_h, da_v


def centroid_phase(geom, angles, elevations=None):
    """Per-column phase (and its azimuth derivative) that moves the reference
    of a phased array from its first element to its centroid."""
    geom = _base(geom)
    theta = np.atleast_1d(np.asarray(angles, dtype=float))
    if isinstance(geom, (ULA, ArbitraryLinear)):
        c = 2 * np.pi * geom.positions.mean()
        return c * np.sin(theta), c * np.cos(theta)
    if isinstance(geom, URA):
        psi = np.broadcast_to(np.asarray(elevations, dtype=float), theta.shape)
        kd = 2 * np.pi * geom.spacing_over_wavelength
        ch, cv = (geom.n_horizontal - 1) / 2.0, (geom.n_vertical - 1) / 2.0
        phase = kd * np.cos(psi) * (ch * np.sin(theta) - cv * np.cos(theta))
        return phase, kd * np.cos(psi) * (ch * np.cos(theta) + cv * np.sin(theta))
    return np.zeros_like(theta), np.zeros_like(theta)


def _kron_cols(a_v, a_h):
    # column-wise Kronecker product a_v (x) a_h
    return (a_v[:, None, :] * a_h[None, :, :]).reshape(-1, a_v.shape[1])


def response_matrix(geom, angles, elevations=None):
    """N x L matrix whose column l is the steering vector at ``angles[l]``."""
    theta = np.atleast_1d(np.asarray(angles, dtype=float))
    _check_elevation(geom, elevations)
    if isinstance(geom, Centered):
        phase, _ = centroid_phase(geom, theta, elevations)
        return response_matrix(geom.base, theta, elevations) * np.exp(1j * phase)[None, :]
    if isinstance(geom, (ULA, ArbitraryLinear)):
        return _linear_phase(geom.positions, theta) / np.sqrt(geom.n)
    if isinstance(geom, Lens):
        return np.sinc(_lens_args(geom, theta)).astype(np.complex128)
    if isinstance(geom, URA):
        psi = np.broadcast_to(np.asarray(elevations, dtype=float), theta.shape)
        a_h, a_v, _, _ = _ura_parts(geom, theta, psi)
        return _kron_cols(a_v, a_h)
    raise TypeError(f"unsupported geometry {geom!r}")


def response_derivative(geom, angles, elevations=None):
    """N x L matrix of azimuth derivatives of the steering vectors.

    For URA the derivative is taken w.r.t. azimuth with elevation held fixed.
    """
    theta = np.atleast_1d(np.asarray(angles, dtype=float))
    _check_elevation(geom, elevations)
    if isinstance(geom, Centered):
        phase, dphase = centroid_phase(geom, theta, elevations)
        rot = np.exp(1j * phase)[None, :]
        a = response_matrix(geom.base, theta, elevations)
        da = response_derivative(geom.base, theta, elevations)
        return (da + 1j * dphase[None, :] * a) * rot
    if isinstance(geom, (ULA, ArbitraryLinear)):
        a = _linear_phase(geom.positions, theta) / np.sqrt(geom.n)
        return a * (-2j * np.pi * np.outer(geom.positions, np.cos(theta)))
    if isinstance(geom, Lens):
        d = _dsinc(_lens_args(geom, theta))
        return (d * (-geom.aperture_over_wavelength * np.cos(theta))[None, :]).astype(np.complex128)
    if isinstance(geom, URA):
        psi = np.broadcast_to(np.asarray(elevations, dtype=float), theta.shape)
        a_h, a_v, da_h, da_v = _ura_parts(geom, theta, psi)
        return _kron_cols(da_v, a_h) + _kron_cols(a_v, da_h)
    raise TypeError(f"unsupported geometry {geom!r}")


def steering_vector(geom, azimuth, elevation=None):
    el = None if elevation is None else [elevation]
    return response_matrix(geom, [azimuth], el)[:, 0]


def steering_derivative(geom, azimuth, elevation=None):
    el = None if elevation is None else [elevation]
    return response_derivative(geom, [azimuth], el)[:, 0]


def uniform_grid(geom, size, n_elevations=1, elevation_span=np.deg2rad(25.0)):
    """Initial angle grid: midpoints of ``size`` equal cells of the azimuth range.

    For URA the grid is the flattened product of ``size // n_elevations``
    azimuth samples (fastest index) with ``n_elevations`` elevation cell
    midpoints over ``[-elevation_span, elevation_span]``. Returns
    ``(azimuths, elevations)``; elevations is None for linear arrays.
    """
    lo, hi = azimuth_range(geom)
    if not is_planar(geom):
        return lo + (hi - lo) * (np.arange(size) + 0.5) / size, None
    n_az = size // n_elevations
    if n_az < 1 or n_az * n_elevations != size:
        raise ValueError("URA grid size must be a multiple of n_elevations")
    az = lo + (hi - lo) * (np.arange(n_az) + 0.5) / n_az
    el = -elevation_span + 2 * elevation_span * (np.arange(n_elevations) + 0.5) / n_elevations
    return np.tile(az, n_elevations), np.repeat(el, n_az)


def dft_grid(n_antennas, spacing_over_wavelength=0.5):
    """Angles whose ULA responses form the normalised DFT matrix.

    sin(angle_n) * d / wavelength = (n - 1) / N, folded into [-1, 1).
    """
    u = np.arange(n_antennas) / (n_antennas * spacing_over_wavelength)
    u = (u + 1.0) % 2.0 - 1.0
    return np.arcsin(u)


def to_dict(geom):
    kind = type(geom).__name__
    if isinstance(geom, ULA):
        return {"kind": kind, "n_antennas": geom.n_antennas,
                "spacing_over_wavelength": geom.spacing_over_wavelength}
    if isinstance(geom, Lens):
        return {"kind": kind, "n_antennas": geom.n_antennas,
                "aperture_over_wavelength": geom.aperture_over_wavelength}
    if isinstance(geom, ArbitraryLinear):
        return {"kind": kind, "positions_over_wavelength": list(geom.positions_over_wavelength)}
    if isinstance(geom, URA):
        return {"kind": kind, "n_horizontal": geom.n_horizontal, "n_vertical": geom.n_vertical,
                "spacing_over_wavelength": geom.spacing_over_wavelength}
    raise TypeError(f"unsupported geometry {geom!r}")


def from_dict(d):
    d = dict(d)
    kind = d.pop("kind")
    cls = {"ULA": ULA, "Lens": Lens, "ArbitraryLinear": ArbitraryLinear, "URA": URA}[kind]
    if cls is ArbitraryLinear:
        d["positions_over_wavelength"] = tuple(d["positions_over_wavelength"])
    return cls(**d)
