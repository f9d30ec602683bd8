"""Complex dense linear algebra helpers and complex Gaussian sampling.

Matrices are plain ``numpy`` arrays of dtype ``complex128``.
"""

import numpy as np


def as_cmatrix(a):
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def matmul(a, b):
    a, b = as_cmatrix(a), as_cmatrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def frobenius_norm(a):
    a = np.asarray(a)
    return float(np.sqrt(np.sum(a.real ** 2 + a.imag ** 2)))


def _round_robin(n):
    """Yield rounds of disjoint index pairs covering every pair once."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    m = len(players)
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        yield [(min(p), max(p)) for p in pairs if -1 not in p]
        players = [players[0]] + [players[-1]] + players[1:-1]


def jacobi_svd(y, tol=1e-15, max_sweeps=60):
    """One-sided (Hestenes) Jacobi SVD of ``y``.

    Columns of ``y`` are rotated pairwise until mutually orthogonal, which
    diagonalises ``y^H y`` implicitly. Returns ``(s, v)`` with singular values
    sorted descending and ``v`` unitary (T x T) such that ``y @ v`` has
    orthogonal columns of norm ``s``.
    """
    u = as_cmatrix(y).copy()
    t = u.shape[1]
    v = np.eye(t, dtype=np.complex128)
    rounds = list(_round_robin(t))
    # columns driven to numerical zero (rank deficiency) are left alone
    floor = (np.finfo(float).eps * max(frobenius_norm(u), np.finfo(float).tiny)) ** 2
    for _ in range(max_sweeps):
        rotated = False
        for pairs in rounds:
            if not pairs:
                continue
            i = np.array([p[0] for p in pairs])
            j = np.array([p[1] for p in pairs])
            ui, uj = u[:, i], u[:, j]
            alpha = np.sum(np.abs(ui) ** 2, axis=0)
            beta = np.sum(np.abs(uj) ** 2, axis=0)
            gamma = np.sum(ui.conj() * uj, axis=0)
            g = np.abs(gamma)
            active = (g > tol * np.sqrt(alpha * beta)) & (g > floor)
            if not np.any(active):
                continue
            rotated = True
            i, j = i[active], j[active]
            alpha, beta, gamma, g = alpha[active], beta[active], gamma[active], g[active]
            phase = gamma / g
            zeta = (beta - alpha) / (2.0 * g)
            tt = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = 1.0 / np.sqrt(1.0 + tt ** 2)
            s = c * tt
            for mat in (u, v):
                a = mat[:, i]
                b = mat[:, j] * phase.conj()
                mat[:, i] = c * a - s * b
                mat[:, j] = s * a + c * b
        if not rotated:
            break
    sv = np.sqrt(np.sum(np.abs(u) ** 2, axis=0))
    order = np.argsort(-sv, kind="stable")
    return sv[order], v[:, order]


def right_singular_block(y, k):
    """Right-singular vectors of ``y`` for its ``k`` largest singular values (T x k)."""
    y = as_cmatrix(y)
    if not 1 <= k <= min(y.shape):
        raise ValueError(f"k={k} out of range for a {y.shape} matrix")
    _, v = jacobi_svd(y)
    return v[:, :k]


def sample_cgaussian(mean, var, rng, size=None):
    """Draw from CN(mean, var): real and imaginary parts each have variance var/2."""
    var = np.asarray(var, dtype=float)
    if np.any(var < 0):
        raise ValueError("variance must be nonnegative")
    sd = np.sqrt(var / 2.0)
    if size is None:
        size = np.broadcast(np.asarray(mean), var).shape
    re = rng.standard_normal(size)
    im = rng.standard_normal(size)
    out = mean + sd * (re + 1j * im)
    if np.ndim(out) == 0:
        return complex(out)
    return out
