"""Symplectic linear algebra for two-mode Gaussian states.

Quadratures are ordered ``(x1, p1, x2, p2)`` with ``[x, p] = i``, so the vacuum
covariance is ``I / 2`` and every physical state has symplectic eigenvalues
of at least 1/2.
"""
from dataclasses import dataclass

import numpy as np

from .errors import PhysicalityError, ValidationError

VACUUM_VARIANCE = 0.5
PHYSICAL_TOL = 1e-9
SYMMETRY_TOL = 1e-12

OMEGA = np.kron(np.eye(2), np.array([[0.0, 1.0], [-1.0, 0.0]]))

# momentum sign flip on mode 2: partial transposition at the covariance level
PARTIAL_TRANSPOSE = np.diag([1.0, 1.0, 1.0, -1.0])

# beam splitter to the common (+) and differential (-) modes; T @ T == I
NORMAL_MODE_T = np.array([
    [1.0, 0.0, 1.0, 0.0],
    [0.0, 1.0, 0.0, 1.0],
    [1.0, 0.0, -1.0, 0.0],
    [0.0, 1.0, 0.0, -1.0],
]) / np.sqrt(2.0)


def _check_covariance(V, dim=4):
    V = np.asarray(V, dtype=float)
    if V.shape != (dim, dim):
        raise ValidationError(f"expected a {dim}x{dim} covariance matrix, got shape {V.shape}")
    if not np.all(np.isfinite(V)):
        raise ValidationError("covariance matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(V))))
    if np.max(np.abs(V - V.T)) > SYMMETRY_TOL * scale:
        raise ValidationError("covariance matrix is not symmetric")
    return V


def symmetrize(V):
    V = np.asarray(V, dtype=float)
    return 0.5 * (V + np.swapaxes(V, -1, -2))


def vacuum():
    return VACUUM_VARIANCE * np.eye(4)


def thermal(n1, n2=None):
    """Product of thermal states with mean occupations ``n1`` and ``n2``."""
    if n2 is None:
        n2 = n1
    return np.diag([n1 + 0.5, n1 + 0.5, n2 + 0.5, n2 + 0.5])


def two_mode_squeezed_vacuum(r):
    """Covariance of the two-mode squeezed vacuum with squeezing parameter ``r``."""
    c = 0.5 * np.cosh(2.0 * r)
    s = 0.5 * np.sinh(2.0 * r)
    Z = np.diag([1.0, -1.0])
    return np.block([[c * np.eye(2), s * Z], [s * Z, c * np.eye(2)]])


def symplectic_eigenvalues(V):
    """Symplectic spectrum of a two-mode covariance matrix.

    Parameters
    ----------
    V : array_like, shape (4, 4)
        Symmetric covariance matrix.

    Returns
    -------
    ndarray, shape (2,)
        Moduli of the eigenvalues of ``i Omega V``, one per conjugate pair,
        in ascending order.

    Raises
    ------
    ValidationError
        If ``V`` is not a finite symmetric 4x4 matrix.
    """
    V = _check_covariance(V)
    ev = np.abs(np.linalg.eigvals(1j * OMEGA @ V))
    return np.sort(ev)[::2]


def symplectic_eigenvalues_series(Vs):
    """Vectorized symplectic spectrum for a stack of covariances, shape (..., 4, 4).

    Uses the two-mode invariants ``det V`` and ``Delta = det A + det B + 2 det C``
    instead of an eigen-solve per sample.
    """
    Vs = np.asarray(Vs, dtype=float)
    a = np.linalg.det(Vs[..., :2, :2])
    b = np.linalg.det(Vs[..., 2:, 2:])
    c = np.linalg.det(Vs[..., :2, 2:])
    delta = a + b + 2.0 * c
    det = np.linalg.det(Vs)
    disc = np.sqrt(np.maximum(delta * delta - 4.0 * det, 0.0))
    lo = np.sqrt(np.maximum(0.5 * (delta - disc), 0.0))
    hi = np.sqrt(np.maximum(0.5 * (delta + disc), 0.0))
    return np.stack([lo, hi], axis=-1)


def min_symplectic_eigenvalue(Vs):
    return symplectic_eigenvalues_series(Vs)[..., 0]


def is_physical(V, tol=PHYSICAL_TOL):
    V = _check_covariance(V)
    if np.any(np.linalg.eigvalsh(V) <= 0.0):
        return False
    return bool(symplectic_eigenvalues(V)[0] >= VACUUM_VARIANCE - tol)


def check_physical(V, tol=PHYSICAL_TOL):
    """Raise :class:`PhysicalityError` unless ``V`` satisfies the uncertainty relation."""
    V = _check_covariance(V)
    nu = symplectic_eigenvalues(V)[0]
    if nu < VACUUM_VARIANCE - tol or np.any(np.linalg.eigvalsh(V) <= 0.0):
        raise PhysicalityError(
            f"covariance is unphysical: minimal symplectic eigenvalue {nu:.3e} < 1/2",
            min_eigenvalue=nu,
        )
    return V


def partial_transpose(V):
    return PARTIAL_TRANSPOSE @ np.asarray(V, dtype=float) @ PARTIAL_TRANSPOSE


def logarithmic_negativity(V, tol=PHYSICAL_TOL):
    r"""Gaussian logarithmic negativity :math:`\max(0, -\ln 2\tilde\nu)`.

    :math:`\tilde\nu` is the smaller symplectic eigenvalue of the partially
    transposed covariance.

    Raises
    ------
    PhysicalityError
        If ``V`` itself is not a physical covariance.
    """
    V = check_physical(V, tol)
    nu = symplectic_eigenvalues(partial_transpose(V))[0]
    return max(0.0, -np.log(2.0 * nu))


def log_negativity_series(Vs):
    """Logarithmic negativity for every covariance in a stack (no physicality check)."""
    Vs = np.asarray(Vs, dtype=float)
    nu = min_symplectic_eigenvalue(PARTIAL_TRANSPOSE @ Vs @ PARTIAL_TRANSPOSE)
    with np.errstate(divide="ignore"):
        return np.maximum(0.0, -np.log(2.0 * nu))


@dataclass(frozen=True)
class NormalModeBlocks:
    """Covariance of the common and differential modes.

    ``cross_block`` holds the correlations between ``(x+, p+)`` and ``(x-, p-)``;
    it vanishes for exchange-symmetric states.
    """

    sigma_plus: np.ndarray
    sigma_minus: np.ndarray
    cross_block: np.ndarray

    def to_matrix(self):
        """Rebuild the particle-basis covariance (``T`` is its own inverse)."""
        inner = np.block([[self.sigma_plus, self.cross_block],
                          [self.cross_block.T, self.sigma_minus]])
        return NORMAL_MODE_T @ inner @ NORMAL_MODE_T


def normal_mode_covariance(Vs):
    """``T V T`` for a single covariance or a stack of them."""
    return NORMAL_MODE_T @ np.asarray(Vs, dtype=float) @ NORMAL_MODE_T


def normal_mode_blocks(V):
    W = normal_mode_covariance(_check_covariance(V))
    return NormalModeBlocks(
        sigma_plus=W[:2, :2].copy(),
        sigma_minus=W[2:, 2:].copy(),
        cross_block=W[:2, 2:].copy(),
    )


def squeezing_degree(sigma):
    """Squeezing of a single-mode covariance in dB, ``-10 log10(2 lambda_min)``.

    Positive values mean the narrowest quadrature lies below the vacuum level.
    """
    sigma = _check_covariance(sigma, dim=2)
    lam = np.linalg.eigvalsh(sigma)
    if lam[0] <= 0.0:
        raise PhysicalityError("single-mode covariance is not positive definite",
                               min_eigenvalue=lam[0])
    return -10.0 * np.log10(2.0 * lam[0])


def squeezing_degree_series(sigmas):
    lam = np.linalg.eigvalsh(symmetrize(sigmas))[..., 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        return -10.0 * np.log10(2.0 * lam)


def uncertainty_ellipse(sigma, n_points=64):
    """Sample the one-sigma contour ``v^T sigma^{-1} v = 1`` of a single-mode state.

    Returns an ``(n_points, 2)`` array of ``(x, p)`` points, starting on the
    major axis and winding counter-clockwise.
    """
    n_points = int(n_points)
    if n_points < 3:
        raise ValidationError("an ellipse needs at least 3 points")
    sigma = _check_covariance(sigma, dim=2)
    lam, U = np.linalg.eigh(sigma)
    if lam[0] <= 1e-300 or lam[0] / lam[1] < 1e-14:
        raise ValidationError("covariance is singular; the ellipse is degenerate")
    U = U[:, ::-1]
    lam = lam[::-1]
    theta = 2.0 * np.pi * np.arange(n_points) / n_points
    circle = np.stack([np.cos(theta), np.sin(theta)])
    return (U @ (np.sqrt(lam)[:, None] * circle)).T
