"""Block-sparse support recovery and linear SNR refinement.

The BS sees ``y = D u + ẑ`` with ``D`` either the signature matrix (HD,
block size 1) or the shifted block dictionary (FD, block size ``J``) and
``ẑ`` correlated Gaussian noise.  Support is found with model-based CoSaMP
run on whitened data; the SNRs of the detected users are then refined with
least squares (white noise) or BLUE (correlated noise).

Both stages are also exposed as scikit-learn estimators,
:class:`BlockCoSaMP` and :class:`BlueRegressor`, taking the dictionary as
``X`` and the measurements as ``y``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, solve_triangular
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .exceptions import DomainError, RankDeficiencyError


@dataclass
class CoSaMPResult:
    support: np.ndarray
    coef: np.ndarray
    n_iter: int
    residual_norm: float


@dataclass
class RecoveryResult:
    support: np.ndarray
    snr_estimates: dict = field(default_factory=dict)
    error_variance: float = np.nan
    iterations: int = 0
    residual_norm: float = 0.0


def whitener(noise_cov) -> np.ndarray:
    """Lower Cholesky factor ``L`` with ``L Lᵀ = Σ``."""
    return cholesky(np.asarray(noise_cov, dtype=float), lower=True)


def _whiten(D, y, noise_cov):
    if noise_cov is None:
        return D, y
    L = whitener(noise_cov)
    return solve_triangular(L, D, lower=True), solve_triangular(L, y, lower=True)


def _top_blocks(energy, k):
    # descending energy, lowest index first on ties
    order = np.lexsort((np.arange(energy.size), -energy))
    return np.sort(order[:k])


def _block_columns(blocks, J):
    return (blocks[:, None] * J + np.arange(J)[None, :]).ravel()


def _lstsq(D, y):
    coef, _, rank, _ = np.linalg.lstsq(D, y, rcond=None)
    if rank < min(D.shape):
        raise RankDeficiencyError(
            f"least-squares submatrix of shape {D.shape} has numerical rank {rank}"
        )
    return coef


def block_cosamp(
    D,
    y,
    block_size: int,
    n_blocks: int,
    noise_cov=None,
    tol: float = 1e-9,
    max_iter: int = 50,
) -> CoSaMPResult:
    """Model-based CoSaMP for block-sparse ``u`` in ``y = D u + noise``.

    Parameters
    ----------
    D : ndarray of shape (M, G * block_size)
        Dictionary whose consecutive column groups form the blocks.
    y : ndarray of shape (M,)
    block_size : int
    n_blocks : int
        Target number of nonzero blocks ``K``.
    noise_cov : ndarray of shape (M, M), optional
        Noise covariance; data and dictionary are whitened by its inverse
        Cholesky factor before selection.
    tol : float
        Stop when the whitened residual norm is ``<= tol * ||y_w||``.
    max_iter : int

    Returns
    -------
    CoSaMPResult
        Block indices (sorted), coefficients on the whitened problem, the
        iteration count and the final whitened residual norm.  A residual
        above tolerance is reported, not raised.
    """
    D = np.asarray(D, dtype=float)
    y = np.asarray(y, dtype=float)
    M, n_features = D.shape
    J = int(block_size)
    if J < 1 or n_features % J:
        raise DomainError(f"{n_features} columns do not split into blocks of {J}")
    K = int(n_blocks)
    if K < 1:
        raise DomainError(f"target sparsity must be >= 1, got {K}")
    if M < 2 * K * J:
        raise DomainError(f"need M >= 2 K J, got M={M}, K={K}, J={J}")
    G = n_features // J

    Dw, yw = _whiten(D, y, noise_cov)
    coef = np.zeros(n_features)
    y_norm = np.linalg.norm(yw)
    if y_norm == 0:
        return CoSaMPResult(np.array([], dtype=int), coef, 0, 0.0)

    support = np.array([], dtype=int)
    residual = yw
    res_norm = y_norm
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        proxy = (Dw.T @ residual).reshape(G, J)
        candidates = _top_blocks(np.linalg.norm(proxy, axis=1), 2 * K)
        merged = np.union1d(candidates, support)
        cols = _block_columns(merged, J)
        b = _lstsq(Dw[:, cols], yw).reshape(-1, J)
        keep = _top_blocks(np.linalg.norm(b, axis=1), K)
        new_support = merged[keep]
        coef = np.zeros(n_features)
        kept_cols = _block_columns(new_support, J)
        coef[kept_cols] = b[keep].ravel()
        residual = yw - Dw[:, kept_cols] @ coef[kept_cols]
        res_norm = float(np.linalg.norm(residual))
        converged = res_norm <= tol * y_norm
        # an unchanged support is a fixed point of the iteration
        stalled = np.array_equal(new_support, support)
        support = new_support
        if converged or stalled:
            break
    return CoSaMPResult(support, coef, n_iter, res_norm)


def ls_estimate(A_s, y) -> np.ndarray:
    """Least-squares ``(AᵀA)⁻¹Aᵀy`` with a rank check."""
    return _lstsq(np.asarray(A_s, dtype=float), np.asarray(y, dtype=float))


def blue_estimate(B_i, y, noise_cov, return_cov: bool = False):
    """Best linear unbiased estimate ``(BᵀΣ⁻¹B)⁻¹BᵀΣ⁻¹y``.

    With ``return_cov`` also returns the error covariance ``(BᵀΣ⁻¹B)⁻¹``.
    """
    B_i = np.asarray(B_i, dtype=float)
    Bw, yw = _whiten(B_i, np.asarray(y, dtype=float), noise_cov)
    est = _lstsq(Bw, yw)
    if not return_cov:
        return est
    info = Bw.T @ Bw
    try:
        cov = cho_solve(cho_factor(info), np.eye(info.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError(str(exc)) from exc
    return est, cov


def ls_error_variance(M: int, S: int, noise_var: float) -> float:
    """Asymptotic per-entry LS error variance ``M/(M-S-1) · noise_var``."""
    if M <= S + 1:
        raise DomainError(f"need M > S + 1, got M={M}, S={S}")
    return M / (M - S - 1) * noise_var


def inverse_norm_bound(noise_cov) -> float:
    """Gershgorin upper bound on ``||Σ⁻¹||₂``; ``inf`` when inconclusive."""
    S = np.asarray(noise_cov, dtype=float)
    off = np.abs(S).sum(axis=1) - np.abs(np.diag(S))
    lower = float(np.min(np.diag(S) - off))
    return 1.0 / lower if lower > 0 else np.inf


def blue_error_variance(M: int, noise_cov) -> float:
    """Large-``M`` BLUE error variance ``M / tr(Σ⁻¹)``.

    The limit needs ``||Σ⁻¹||`` to stay bounded.  That is checked with a
    Gershgorin bound, falling back to the smallest eigenvalue when the
    bound is inconclusive.
    """
    S = np.asarray(noise_cov, dtype=float)
    if not np.isfinite(inverse_norm_bound(S)):
        if np.linalg.eigvalsh(S)[0] <= 0:
            raise RankDeficiencyError("noise covariance is not positive definite")
    try:
        inv = cho_solve(cho_factor(S), np.eye(S.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError(str(exc)) from exc
    return M / float(np.trace(inv))


def extract_user_snrs(v_hat, users, J: int, rho: float | None = None) -> dict:
    """Read one SNR per user out of its recovered block.

    By default the ``ρ⁰`` coefficient is used.  When ``rho`` is given the
    block is combined as ``Σ_j ρ^j v_j / Σ_j ρ^(2j)``, which is the LS fit
    of ``x`` to ``[x, ρx, ..., ρ^(J-1)x]``.
    """
    blocks = np.asarray(v_hat, dtype=float).reshape(-1, J)
    if rho is None or J == 1:
        values = blocks[:, 0]
    else:
        w = rho ** np.arange(J)
        values = blocks @ w / (w @ w)
    return {int(u): float(v) for u, v in zip(users, values)}


def recover_feedback(
    dictionary,
    y,
    noise_cov,
    block_size: int,
    target_sparsity: int,
    tol: float = 1e-9,
    max_iter: int = 50,
    rho: float | None = None,
) -> RecoveryResult:
    """Support recovery followed by LS (``block_size == 1``) or BLUE refinement."""
    M = len(y)
    cs = block_cosamp(dictionary, y, block_size, target_sparsity, noise_cov, tol, max_iter)
    if cs.support.size == 0:
        return RecoveryResult(cs.support, {}, np.nan, cs.n_iter, cs.residual_norm)
    cols = _block_columns(cs.support, block_size)
    sub = np.asarray(dictionary)[:, cols]
    if block_size == 1:
        est = ls_estimate(sub, y)
        sigma2 = ls_error_variance(M, cs.support.size, float(np.asarray(noise_cov)[0, 0]))
    else:
        est = blue_estimate(sub, y, noise_cov)
        sigma2 = blue_error_variance(M, noise_cov)
    snrs = extract_user_snrs(est, cs.support, block_size, rho)
    return RecoveryResult(cs.support, snrs, sigma2, cs.n_iter, cs.residual_norm)


class BlockCoSaMP(RegressorMixin, BaseEstimator):
    """Block-sparse regression by model-based CoSaMP.

    Parameters
    ----------
    block_size : int, default=1
        Length of each coefficient block; 1 gives ordinary CoSaMP.
    n_nonzero_blocks : int, default=1
        Number of active blocks kept after each pruning step.
    tol : float, default=1e-9
        Relative residual at which iteration stops.
    max_iter : int, default=50

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    support_ : ndarray
        Indices of the active blocks.
    n_iter_ : int
    residual_norm_ : float
        Final residual norm in the whitened domain.
    """

    def __init__(self, block_size=1, n_nonzero_blocks=1, tol=1e-9, max_iter=50):
        self.block_size = block_size
        self.n_nonzero_blocks = n_nonzero_blocks
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y, noise_cov=None):
        X, y = validate_data(self, X, y, y_numeric=True)
        res = block_cosamp(
            X, y, self.block_size, self.n_nonzero_blocks, noise_cov, self.tol, self.max_iter
        )
        self.support_ = res.support
        self.n_iter_ = res.n_iter
        self.residual_norm_ = res.residual_norm
        # unwhitened refit so predict() reproduces the signal in data units
        coef = np.zeros(X.shape[1])
        if res.support.size:
            cols = _block_columns(res.support, self.block_size)
            coef[cols] = blue_estimate(X[:, cols], y, noise_cov)
        self.coef_ = coef
        self.intercept_ = 0.0
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, reset=False)
        return X @ self.coef_


class BlueRegressor(RegressorMixin, BaseEstimator):
    """Generalized least squares under a known noise covariance.

    ``fit(X, y, noise_cov)`` with ``noise_cov=None`` is ordinary least
    squares.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    coef_cov_ : ndarray of shape (n_features, n_features)
        ``(XᵀΣ⁻¹X)⁻¹``; with no covariance given, ``(XᵀX)⁻¹``.
    """

    def fit(self, X, y, noise_cov=None):
        X, y = validate_data(self, X, y, y_numeric=True)
        self.coef_, self.coef_cov_ = blue_estimate(X, y, noise_cov, return_cov=True)
        self.intercept_ = 0.0
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, reset=False)
        return X @ self.coef_
