"""Square-root balanced truncation, order selection and error bounds."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import DomainError, NumericalError, OrderError, TieWarning
from .gramians import GramianPair
from .lti import LtiRealization

__all__ = [
    "HankelSVD",
    "BalancedReduction",
    "hankel_svd",
    "hankel_values",
    "balance_truncate",
    "selection_criterion",
    "minimal_order",
    "error_bound",
    "write_hankel",
]

TIE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class HankelSVD:
    """SVD ``U^T L = W diag(sigma) V^T`` restricted to the ``n0`` retained values."""

    sigma: np.ndarray
    W: np.ndarray
    V: np.ndarray
    all_sigma: np.ndarray

    @property
    def n0(self) -> int:
        return len(self.sigma)


def _fix_signs(W, V):
    # largest-magnitude entry of each left vector made positive
    idx = np.argmax(np.abs(W), axis=0)
    s = np.sign(W[idx, np.arange(W.shape[1])])
    s[s == 0] = 1.0
    return W * s, V * s


def hankel_svd(gp: GramianPair, tol: float | None = None) -> HankelSVD:
    """SVD of ``U^T L`` with values ``<= tol * sigma_1`` dropped.

    ``tol`` defaults to ``sqrt(gp.rank_tol)``: cutting the Gramian
    eigenvalues at ``rank_tol`` perturbs the Hankel values by about that
    fraction of ``sigma_1``, so smaller ones carry no information and would
    only amplify rounding in ``sigma^{-1/2}``.
    """
    if gp.r_C == 0 or gp.r_O == 0:
        z = np.zeros(0)
        return HankelSVD(z, np.zeros((gp.r_C, 0)), np.zeros((gp.r_O, 0)), z)
    try:
        W, s, Vt = np.linalg.svd(gp.U.T @ gp.L, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed: {exc}") from exc
    tol = np.sqrt(gp.rank_tol) if tol is None else tol
    n0 = int(np.sum(s > tol * s[0])) if s[0] > 0 else 0
    W, V = _fix_signs(W[:, :n0], Vt[:n0].T)
    return HankelSVD(s[:n0], W, V, s)


def hankel_values(gp: GramianPair, tol: float | None = None) -> np.ndarray:
    """Nonzero Hankel singular values in descending order."""
    return hankel_svd(gp, tol).sigma


@dataclass(frozen=True, eq=False)
class BalancedReduction:
    """Order-``ell`` balanced truncation of a realization."""

    sigma: np.ndarray
    T_plus: np.ndarray
    T_minus: np.ndarray
    reduced: LtiRealization
    ell: int

    @property
    def n0(self) -> int:
        return len(self.sigma)

    def projection_error(self) -> float:
        return float(np.max(np.abs(self.T_plus @ self.T_minus - np.eye(self.ell))))


def balance_truncate(r: LtiRealization, gp: GramianPair, ell: int, svd: HankelSVD | None = None) -> BalancedReduction:
    """Reduce ``r`` to order ``ell`` by the square-root method.

    With ``U^T L = W S V^T``, ``T_plus = S_l^{-1/2} V_l^T L^T`` and
    ``T_minus = U W_l S_l^{-1/2}``; the reduced triple is
    ``(T_plus A T_minus, T_plus B, C T_minus)``.  Passing a precomputed
    ``svd`` lets several orders share one decomposition.

    Raises
    ------
    OrderError
        If ``ell`` is not in ``1..n0``.
    """
    svd = hankel_svd(gp) if svd is None else svd
    ell = int(ell)
    if not 1 <= ell <= svd.n0:
        raise OrderError(f"order {ell} outside 1..{svd.n0}")
    s = svd.sigma
    if ell < svd.n0 and (s[ell - 1] - s[ell]) <= TIE_TOL * s[ell - 1]:
        warnings.warn(f"sigma_{ell} and sigma_{ell + 1} are tied; truncation may lose stability", TieWarning, stacklevel=2)
    isq = 1.0 / np.sqrt(s[:ell])
    T_plus = (svd.V[:, :ell] * isq).T @ gp.L.T
    T_minus = gp.U @ (svd.W[:, :ell] * isq)
    A_r = T_plus @ (r.A @ T_minus)
    reduced = LtiRealization(np.asarray(A_r), T_plus @ r.B, r.C @ T_minus)
    return BalancedReduction(s, T_plus, T_minus, reduced, ell)


def selection_criterion(sigma, ell) -> float | np.ndarray:
    """Retained share ``(sigma_1 + ... + sigma_ell) / sum(sigma)``."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.size == 0:
        raise DomainError("empty Hankel spectrum")
    ell_arr = np.asarray(ell)
    if np.any(ell_arr < 1) or np.any(ell_arr > sigma.size):
        raise DomainError(f"order outside 1..{sigma.size}")
    rho = np.cumsum(sigma) / np.sum(sigma)
    rho[-1] = 1.0
    out = rho[ell_arr - 1]
    return float(out) if out.ndim == 0 else out


def minimal_order(sigma, alpha: float) -> int:
    """Smallest ``ell`` with ``selection_criterion(sigma, ell) >= alpha``."""
    if not 0 < alpha <= 1:
        raise DomainError("alpha must lie in (0, 1]")
    sigma = np.asarray(sigma, dtype=float)
    rho = selection_criterion(sigma, np.arange(1, sigma.size + 1))
    return int(np.argmax(rho >= alpha) + 1)


def tail_sum(sigma, ell: int) -> float:
    """``sigma_{ell+1} + ... + sigma_{n0}`` summed smallest first."""
    return float(np.sum(np.sort(np.asarray(sigma, dtype=float)[ell:])))


def error_bound(sigma, ell: int, g_l2) -> np.ndarray:
    """A-priori output error bound ``2 * tail_sum * |g|_{L2(0,t)}``."""
    if ell < 1:
        raise OrderError("order must be positive")
    return 2.0 * tail_sum(sigma, ell) * np.asarray(g_l2, dtype=float)


def write_hankel(path, sigma) -> Path:
    """Write ``i,sigma,rho`` rows."""
    path = Path(path)
    sigma = np.asarray(sigma, dtype=float)
    rho = selection_criterion(sigma, np.arange(1, sigma.size + 1)) if sigma.size else []
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "sigma", "rho"])
        for i, (s, p) in enumerate(zip(sigma, rho), 1):
            w.writerow([i, f"{s:.17g}", f"{p:.17g}"])
    return path
