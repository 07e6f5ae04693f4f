"""Least-squares and kernel-regularized estimators with exact error formulas.

These are the adversary's tools: the plain least-squares estimate, the
regularized variant, their exact error covariance / mean-square-error
matrices under moving-average masking noise, and the reduction of the error
trace to a small quadratic form in the MA filter coefficients.  The noise
designers in :mod:`firpriv.design` optimize against these formulas.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, toeplitz

from .errors import ConditioningError, DimensionError, ParameterError, SingularKernelError
from .lti import BandedFilterMatrix, FirModel, RegressorMatrix, _samples

#: Solves are rejected when the normal-equation condition estimate exceeds this.
CONDITION_LIMIT = 1e12

#: Largest acceptable relative residual of an accepted linear solve.
RESIDUAL_TOL = 1e-10

#: Kernel eigenvalues at or below this fraction of the largest are treated as null.
KERNEL_NULL_TOL = 1e-10

#: Ridge added to kernel null directions before inversion (opt-in singular mode).
KERNEL_NULL_RIDGE = 1e-8


@dataclass(frozen=True)
class LsEstimate:
    """Coefficient estimate and the norm of the fit residual."""

    h_hat: np.ndarray
    residual_norm: float


@dataclass(frozen=True)
class Kernel:
    """Regularization kernel: PSD matrix K and penalty weight eta > 0."""

    matrix: np.ndarray
    eta: float

    def __post_init__(self):
        k = np.asarray(self.matrix, dtype=float)
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise DimensionError(f"kernel must be square, got shape {k.shape}")
        scale = np.linalg.norm(k)
        if scale > 0 and np.max(np.abs(k - k.T)) > 1e-10 * scale:
            raise ParameterError("kernel matrix must be symmetric")
        eigs = np.linalg.eigvalsh((k + k.T) / 2.0)
        if eigs[0] < -1e-10 * max(scale, 1.0):
            raise ParameterError(f"kernel must be positive semidefinite, min eig {eigs[0]:.3e}")
        if not self.eta > 0:
            raise ParameterError(f"eta must be > 0, got {self.eta}")
        object.__setattr__(self, "matrix", (k + k.T) / 2.0)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class ErrorReport:
    """Symmetric error matrix (covariance or MSE) together with its trace."""

    matrix: np.ndarray
    trace: float
    adversary: str  # "LS" or "RLS"


@dataclass(frozen=True)
class TraceQuadratic:
    """Error trace as a quadratic in the MA filter coefficients.

    For every coefficient vector ``l`` of the advertised length,
    ``l @ matrix @ l + offset`` equals the exact error trace of the matching
    estimator under the MA masking-noise model.
    """

    matrix: np.ndarray
    offset: float
    adversary: str = "LS"

    def evaluate(self, l) -> float:
        l = np.asarray(l, dtype=float)
        return float(l @ self.matrix @ l + self.offset)

    @property
    def n_l(self) -> int:
        return self.matrix.shape[0]


def _regressor(R) -> np.ndarray:
    if isinstance(R, RegressorMatrix):
        return np.asarray(R.matrix)
    return np.asarray(R, dtype=float)


def _noise_band(noise_matrix) -> np.ndarray | None:
    if noise_matrix is None:
        return None
    if isinstance(noise_matrix, BandedFilterMatrix):
        return np.asarray(noise_matrix.matrix)
    return np.asarray(noise_matrix, dtype=float)


def _checked_gram(Rm: np.ndarray) -> np.ndarray:
    gram = Rm.T @ Rm
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise ConditioningError(
            f"normal-equation matrix rejected: condition estimate {cond:.3e} "
            f"exceeds {CONDITION_LIMIT:.0e}",
            condition=float(cond),
        )
    return gram


def _spd_solve(mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve an SPD system by Cholesky, refined until the residual is tiny.

    Raises :class:`ConditioningError` if three refinement steps cannot push
    the relative residual below ``RESIDUAL_TOL``; solutions that would
    silently violate the advertised accuracy are never returned.
    """
    factor = cho_factor((mat + mat.T) / 2.0)
    x = cho_solve(factor, rhs)
    scale = max(np.linalg.norm(rhs), 1e-300)
    for _ in range(3):
        residual = rhs - mat @ x
        if np.linalg.norm(residual) <= RESIDUAL_TOL * scale:
            return x
        x = x + cho_solve(factor, residual)
    if np.linalg.norm(rhs - mat @ x) > RESIDUAL_TOL * scale:
        raise ConditioningError(
            "linear solve did not reach the required residual after refinement"
        )
    return x


def _spd_inverse(mat: np.ndarray) -> np.ndarray:
    inv = _spd_solve(mat, np.eye(mat.shape[0]))
    return (inv + inv.T) / 2.0


def ls_estimate(R, y) -> LsEstimate:
    """Ordinary least-squares coefficient estimate.

    Rejects instances whose normal-equation condition estimate exceeds
    ``CONDITION_LIMIT`` rather than returning a meaningless solution.
    """
    Rm = _regressor(R)
    yv = _samples(y)
    if yv.size != Rm.shape[0]:
        raise DimensionError(f"output length {yv.size} != regressor rows {Rm.shape[0]}")
    gram = _checked_gram(Rm)
    rhs = Rm.T @ yv
    h_hat = _spd_solve(gram, rhs)
    return LsEstimate(h_hat=h_hat, residual_norm=float(np.linalg.norm(yv - Rm @ h_hat)))


def ls_covariance(R, noise_matrix=None, sigma2: float = 0.0) -> ErrorReport:
    """Exact covariance of the least-squares estimate under MA masking noise.

    With no masking noise the covariance is ``sigma2 * inv(R'R)``; with a
    banded filter matrix L it is ``inv(R'R) R' (L L' + sigma2 I) R inv(R'R)``.
    """
    Rm = _regressor(R)
    gram = _checked_gram(Rm)
    ginv = _spd_inverse(gram)
    cov = sigma2 * ginv
    band = _noise_band(noise_matrix)
    if band is not None:
        if band.shape[0] != Rm.shape[0]:
            raise DimensionError(
                f"noise matrix rows {band.shape[0]} != regressor rows {Rm.shape[0]}"
            )
        T = band.T @ (Rm @ ginv)
        cov = cov + T.T @ T
    cov = (cov + cov.T) / 2.0
    return ErrorReport(matrix=cov, trace=float(np.trace(cov)), adversary="LS")


def _diagonal_sums(A: np.ndarray, n_l: int) -> np.ndarray:
    """Sums of the diagonals of A @ A.T at offsets 0..n_l-1, without forming it."""
    n = A.shape[0]
    return np.array([np.sum(A[: n - d] * A[d:]) for d in range(n_l)])


def ls_trace_quadratic(R, sigma2: float, n_l: int) -> TraceQuadratic:
    """Reduce the LS error trace to a quadratic in the MA filter coefficients.

    The quadratic's matrix is symmetric Toeplitz: entry (a, b) is the sum of
    the |a-b|-offset diagonal of ``E = R inv(R'R) inv(R'R) R'``.  Computing it
    this way costs O(n_l * N * n_h) and never materializes the huge Kronecker
    product that defines it.
    """
    if n_l < 1:
        raise ParameterError(f"n_l must be >= 1, got {n_l}")
    Rm = _regressor(R)
    gram = _checked_gram(Rm)
    ginv = _spd_inverse(gram)
    A = Rm @ ginv
    mat = toeplitz(_diagonal_sums(A, n_l))
    return TraceQuadratic(matrix=mat, offset=float(sigma2 * np.trace(ginv)), adversary="LS")


def _kernel_inverse(kernel: Kernel, allow_singular: bool) -> np.ndarray:
    eigs, vecs = np.linalg.eigh(kernel.matrix)
    null = eigs <= KERNEL_NULL_TOL * max(eigs[-1], 0.0)
    if np.any(null):
        if not allow_singular:
            raise SingularKernelError(
                f"kernel is numerically singular ({int(null.sum())} null directions); "
                "pass allow_singular_kernel=True to ridge the null space"
            )
        # Ridge the null directions of K itself before inverting, so the
        # penalty strongly confines the estimate to the kernel's range.
        eigs = np.where(null, KERNEL_NULL_RIDGE, eigs)
    inv = (vecs / eigs) @ vecs.T
    return (inv + inv.T) / 2.0


def rls_gain(R, kernel: Kernel, allow_singular_kernel: bool = False) -> np.ndarray:
    """The linear map C with h_hat = C y for the regularized estimator."""
    return _rls_gain(R, kernel, allow_singular_kernel)


def _rls_gain(R, kernel: Kernel, allow_singular: bool) -> np.ndarray:
    Rm = _regressor(R)
    if kernel.size != Rm.shape[1]:
        raise DimensionError(f"kernel size {kernel.size} != coefficient count {Rm.shape[1]}")
    kinv = _kernel_inverse(kernel, allow_singular)
    mat = Rm.T @ Rm + kernel.eta * kinv
    cond = np.linalg.cond(mat)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise ConditioningError(
            f"regularized normal matrix rejected: condition estimate {cond:.3e} "
            f"exceeds {CONDITION_LIMIT:.0e}",
            condition=float(cond),
        )
    return _spd_solve(mat, Rm.T)


def rls_estimate(R, y, kernel: Kernel, allow_singular_kernel: bool = False) -> LsEstimate:
    """Kernel-regularized least-squares estimate.

    Minimizes ``||y - R h||^2 + eta * h' inv(K) h``.  A singular kernel is
    rejected unless ``allow_singular_kernel`` is set, in which case the null
    directions of K are ridged (see ``KERNEL_NULL_RIDGE``) before inversion.
    """
    Rm = _regressor(R)
    yv = _samples(y)
    if yv.size != Rm.shape[0]:
        raise DimensionError(f"output length {yv.size} != regressor rows {Rm.shape[0]}")
    C = _rls_gain(R, kernel, allow_singular_kernel)
    h_hat = C @ yv
    return LsEstimate(h_hat=h_hat, residual_norm=float(np.linalg.norm(yv - Rm @ h_hat)))


def rls_mse(
    R,
    h_true: FirModel,
    noise_matrix=None,
    sigma2: float = 0.0,
    kernel: Kernel = None,
    allow_singular_kernel: bool = False,
) -> ErrorReport:
    """Exact mean-square-error matrix of the regularized estimate.

    Includes the regularization bias term, which depends on the true
    coefficients; the noise terms mirror :func:`ls_covariance`.
    """
    if kernel is None:
        raise ParameterError("rls_mse requires a kernel")
    Rm = _regressor(R)
    C = _rls_gain(R, kernel, allow_singular_kernel)
    h = _samples(h_true)
    bias_vec = h - C @ (Rm @ h)
    mse = np.outer(bias_vec, bias_vec) + sigma2 * (C @ C.T)
    band = _noise_band(noise_matrix)
    if band is not None:
        if band.shape[0] != Rm.shape[0]:
            raise DimensionError(
                f"noise matrix rows {band.shape[0]} != regressor rows {Rm.shape[0]}"
            )
        CL = C @ band
        mse = mse + CL @ CL.T
    mse = (mse + mse.T) / 2.0
    return ErrorReport(matrix=mse, trace=float(np.trace(mse)), adversary="RLS")


def rls_trace_quadratic(
    R,
    h_true: FirModel,
    kernel: Kernel,
    sigma2: float,
    n_l: int,
    allow_singular_kernel: bool = False,
) -> TraceQuadratic:
    """Reduce the regularized-estimator MSE trace to a quadratic in ``l``.

    Same Toeplitz construction as :func:`ls_trace_quadratic` with
    ``E = C'C``; the offset collects the bias term and the measurement-noise
    term, neither of which depends on the MA filter.
    """
    if n_l < 1:
        raise ParameterError(f"n_l must be >= 1, got {n_l}")
    Rm = _regressor(R)
    C = _rls_gain(R, kernel, allow_singular_kernel)
    h = _samples(h_true)
    bias_vec = h - C @ (Rm @ h)
    offset = float(bias_vec @ bias_vec + sigma2 * np.sum(C * C))
    # Diagonal sums of C'C: offset-d sum is sum_i C[:, i] . C[:, i+d].
    mat = toeplitz(_diagonal_sums(C.T, n_l))
    return TraceQuadratic(matrix=mat, offset=offset, adversary="RLS")


def stable_spline_kernel(n_h: int, beta: float) -> np.ndarray:
    """Stable spline kernel: entry (i, j) is beta**max(i, j) with 1-based indices."""
    if not 0.0 < beta < 1.0:
        raise ParameterError(f"beta must be in (0, 1), got {beta}")
    if n_h < 1:
        raise ParameterError(f"n_h must be >= 1, got {n_h}")
    idx = np.arange(1, n_h + 1)
    return beta ** np.maximum.outer(idx, idx)
