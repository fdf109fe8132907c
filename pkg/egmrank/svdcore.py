import logging
import math

import numpy as np
from typing_extensions import Self

from ._util import _freeze
from .base import SVDObject
from .config import Settings
from .errors import ConvergenceError, DataError
from .spectral import SpectralMatrix

_log = logging.getLogger(__name__)

__all__ = (
    "Decomposition",
    "SingularProfile",
    "decompose",
    "svd_profile",
    "rank_estimate",
)

_MAX_SWEEPS = 30
_EPS = float(np.finfo(np.float64).eps)


class Decomposition(SVDObject):
    """
    .. versionadded :: 0.1.0

    A thin singular value decomposition ``A = U diag(sigma) Vt``.

    Parameters
    ----------
    source : :class:`numpy.ndarray`
        The decomposed ``m x n`` matrix.
    u : :class:`numpy.ndarray`
        ``m x k`` left singular vectors, ``k = min(m, n)``.
    sigma : :class:`numpy.ndarray`
        ``k`` singular values, descending.
    vt : :class:`numpy.ndarray`
        ``k x n`` right singular vectors.
    sweeps : int
        Jacobi sweeps the refinement needed.
    """

    def __init__(
        self,
        source: np.ndarray,
        u: np.ndarray,
        sigma: np.ndarray,
        vt: np.ndarray,
        sweeps: int = 0,
    ):
        """
        Constructor method.
        """
        self.source = _freeze(np.array(source, dtype=np.float64))
        self.u = _freeze(u)
        self.sigma = _freeze(sigma)
        self.vt = _freeze(vt)
        self.sweeps = sweeps

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.vt

    def reconstruction_residual(self) -> float:
        """``||A - U S Vt||_F / ||A||_F``, ``0`` for a zero matrix."""
        norm = np.linalg.norm(self.source)
        if norm == 0:
            return 0.0
        return float(np.linalg.norm(self.source - self.reconstruct()) / norm)


def _jacobi_rows(x: np.ndarray, u: np.ndarray) -> int:
    """
    One-sided Jacobi on the rows of ``x``, rotating the columns of ``u`` along.
    Runs in place and returns the number of sweeps.
    """
    p, n = x.shape
    tol = max(n, 1) * _EPS
    for sweep in range(1, _MAX_SWEEPS + 1):
        rotated = False
        sq = np.einsum("ij,ij->i", x, x).tolist()
        # rows at rounding level of the largest are left alone
        negligible = (p * n * _EPS) ** 2 * max(sq)
        for i in range(p - 1):
            for j in range(i + 1, p):
                alpha, beta = sq[i], sq[j]
                if alpha <= negligible or beta <= negligible:
                    continue
                gamma = float(x[i] @ x[j])
                if abs(gamma) <= tol * math.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                xi, xj = x[i].copy(), x[j].copy()
                x[i], x[j] = c * xi - s * xj, s * xi + c * xj
                ui, uj = u[:, i].copy(), u[:, j].copy()
                u[:, i], u[:, j] = c * ui - s * uj, s * ui + c * uj
                sq[i], sq[j] = alpha - t * gamma, beta + t * gamma
        if not rotated:
            return sweep
    raise ConvergenceError(f"one-sided Jacobi did not converge in {_MAX_SWEEPS} sweeps")


def decompose(matrix: SpectralMatrix | np.ndarray) -> Decomposition:
    """
    .. versionadded :: 0.1.0

    Thin SVD through the Gram matrix of the short side.

    The eigenvectors of ``M M^T`` give a first basis ``U``. One-sided Jacobi
    rotations then orthogonalize the rows of ``U^T M`` to working precision,
    and their norms are the singular values.

    Parameters
    ----------
    matrix : :class:`SpectralMatrix` | :class:`numpy.ndarray`
        A finite 2-D matrix.

    Returns
    -------
    :class:`Decomposition`
        The decomposition, singular values descending.

    Raises
    ------
    :class:`DataError`
        For non-finite or non-2-D input.
    :class:`ConvergenceError`
        When the Jacobi refinement does not settle.
    """
    if isinstance(matrix, SpectralMatrix):
        matrix = matrix.values
    source = np.asarray(matrix, dtype=np.float64)
    if source.ndim != 2 or 0 in source.shape:
        raise DataError(f"expected a non-empty 2-D matrix, got shape {source.shape}")
    if not np.all(np.isfinite(source)):
        raise DataError("cannot decompose a matrix with non-finite entries")

    transposed = source.shape[0] > source.shape[1]
    short = source.T if transposed else source

    _, u = np.linalg.eigh(short @ short.T)
    u = np.ascontiguousarray(u[:, ::-1])
    x = u.T @ short
    sweeps = _jacobi_rows(x, u)

    sigma = np.linalg.norm(x, axis=1)
    order = np.argsort(-sigma, kind="stable")
    sigma, u, x = sigma[order], u[:, order], x[order]
    vt = np.zeros_like(x)
    nonzero = sigma > 0
    vt[nonzero] = x[nonzero] / sigma[nonzero, None]

    _log.debug(f"Decomposed a {source.shape[0]}x{source.shape[1]} matrix in {sweeps} sweeps")
    if transposed:
        return Decomposition(source, vt.T, sigma, u.T, sweeps)
    return Decomposition(source, u, sigma, vt, sweeps)


class SingularProfile(SVDObject):
    """
    .. versionadded :: 0.1.0

    Descending singular values and their normalization by the largest.

    Parameters
    ----------
    sigmas : :class:`numpy.ndarray`
        Singular values, descending.
    rel_tol : float
        Relative threshold of :attr:`rank_estimate`.
    """

    def __init__(self, sigmas: np.ndarray, rel_tol: float | None = None):
        """
        Constructor method.
        """
        sigmas = np.array(sigmas, dtype=np.float64).reshape(-1)
        if np.any(sigmas < 0) or np.any(np.diff(sigmas) > 0):
            raise DataError("singular values must be nonnegative and descending")
        self.sigmas = _freeze(sigmas)
        first = sigmas[0] if sigmas.size else 0.0
        self.normalized = _freeze(sigmas / first if first > 0 else np.zeros_like(sigmas))
        self.rel_tol = Settings.RANK_TOL if rel_tol is None else rel_tol
        self.rank_estimate = rank_estimate(self, self.rel_tol)

    def __len__(self) -> int:
        return self.sigmas.size

    @property
    def sigma2(self) -> float:
        """Normalized second singular value, ``0`` for a single row."""
        return float(self.normalized[1]) if self.normalized.size > 1 else 0.0

    @classmethod
    def _from_dict(cls: Self, raw: dict) -> Self:
        return cls(raw["sigmas"], raw.get("rel_tol"))

    def to_dict(self) -> dict:
        return {"sigmas": self.sigmas.tolist(), "rel_tol": self.rel_tol}

    def __repr__(self) -> str:
        head = ", ".join(f"{v:.4g}" for v in self.normalized[:4])
        tail = ", ..." if len(self) > 4 else ""
        return f"SingularProfile([{head}{tail}], rank={self.rank_estimate})"


def svd_profile(
    matrix: SpectralMatrix | np.ndarray, rel_tol: float | None = None
) -> SingularProfile:
    """
    .. versionadded :: 0.1.0

    Normalized singular value profile of ``B``.

    Parameters
    ----------
    matrix : :class:`SpectralMatrix` | :class:`numpy.ndarray`
        The magnitude matrix.
    rel_tol : float, optional
        Threshold for the attached rank estimate.

    Returns
    -------
    :class:`SingularProfile`
        ``min(M, N)`` values. A zero matrix gives zeros and rank 0.
    """
    return SingularProfile(decompose(matrix).sigma, rel_tol)


def rank_estimate(profile: SingularProfile, rel_tol: float | None = None) -> int:
    """
    Number of singular values at or above ``rel_tol * sigma_1``.
    """
    rel_tol = Settings.RANK_TOL if rel_tol is None else rel_tol
    if not 0 < rel_tol < 1:
        raise DataError(f"relative tolerance must lie in (0, 1), got {rel_tol}")
    if profile.sigmas.size == 0 or profile.sigmas[0] == 0:
        return 0
    return int(np.count_nonzero(profile.sigmas >= rel_tol * profile.sigmas[0]))
