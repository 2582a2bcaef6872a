"""Controllability/observability Gramians and their factors."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .exceptions import AccuracyWarning, NumericalError, StabilityError, UnreachableStateError
from .lti import LtiRealization

__all__ = [
    "solve_lyapunov",
    "GramianPair",
    "psd_factor",
    "gramians",
    "energy_functions",
    "write_spectrum",
]

RESIDUAL_TOL = 1e-8


def lyapunov_residual(A, X, M) -> float:
    """Relative residual ``|A X + X A^T + M|_F / |M|_F``."""
    AX = A @ X
    R = AX + AX.T + M
    nm = np.linalg.norm(M)
    return float(np.linalg.norm(R) / (nm if nm > 0 else 1.0))


def solve_lyapunov(A, M, check: bool = True) -> np.ndarray:
    """Solve ``A X + X A^T = -M`` for stable ``A`` by Schur back-substitution.

    ``A = Z T Z^H`` is reduced to complex Schur form; the transformed
    equation ``T Y + Y T^H = -Z^H M Z`` is solved column by column from the
    last one, each column costing one triangular solve.

    Raises
    ------
    StabilityError
        If ``A`` has an eigenvalue with nonnegative real part.
    """
    A = np.asarray(A.toarray() if hasattr(A, "toarray") else A, dtype=float)
    M = np.asarray(M, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or M.shape != (n, n):
        raise ValueError("A and M must be square of equal size")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(M))):
        raise NumericalError("non-finite Lyapunov data")
    try:
        T, Z = scipy.linalg.schur(A, output="complex")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"Schur decomposition failed: {exc}") from exc
    d = np.diag(T)
    if np.max(d.real) >= 0:
        raise StabilityError(f"A is not stable (max Re eig = {np.max(d.real):.3e})")

    F = -(Z.conj().T @ M @ Z)
    Y = np.zeros((n, n), dtype=complex)
    Tc = T.conj()
    eye = np.eye(n)
    for k in range(n - 1, -1, -1):
        rhs = F[:, k]
        if k < n - 1:
            rhs = rhs - Y[:, k + 1 :] @ Tc[k, k + 1 :]
        Y[:, k] = scipy.linalg.solve_triangular(T + Tc[k, k] * eye, rhs, lower=False, check_finite=False)
    X = (Z @ Y @ Z.conj().T).real
    X = 0.5 * (X + X.T)
    if check:
        res = lyapunov_residual(A, X, M)
        if not res <= RESIDUAL_TOL:
            warnings.warn(f"Lyapunov residual {res:.2e} exceeds {RESIDUAL_TOL:.0e}", AccuracyWarning, stacklevel=2)
    return X


def psd_factor(G, rank_tol: float | None = None) -> np.ndarray:
    """Rank-revealing factor ``F`` with ``G ~= F F^T``.

    Eigenpairs with ``lambda > rank_tol * lambda_max`` are kept; when all of
    them survive and Cholesky succeeds, the Cholesky factor is returned.
    """
    G = 0.5 * (G + G.T)
    n = G.shape[0]
    tol = n * np.finfo(float).eps if rank_tol is None else rank_tol
    lam, V = np.linalg.eigh(G)
    lmax = lam[-1]
    if lmax <= 0:
        return np.zeros((n, 0))
    keep = lam > tol * lmax
    if keep.all():
        try:
            return np.linalg.cholesky(G)
        except np.linalg.LinAlgError:
            pass
    lam, V = lam[keep][::-1], V[:, keep][:, ::-1]
    return V * np.sqrt(lam)


@dataclass(frozen=True, eq=False)
class GramianPair:
    """Gramians ``G_C``, ``G_O`` with factors ``G_C = U U^T``, ``G_O = L L^T``."""

    G_C: np.ndarray
    G_O: np.ndarray
    U: np.ndarray
    L: np.ndarray
    rank_tol: float
    residual_C: float
    residual_O: float

    @property
    def r_C(self) -> int:
        return self.U.shape[1]

    @property
    def r_O(self) -> int:
        return self.L.shape[1]

    @property
    def n(self) -> int:
        return self.G_C.shape[0]


def gramians(r: LtiRealization, rank_tol: float | None = None) -> GramianPair:
    """Solve both Lyapunov equations of ``r`` and factor the solutions.

    ``rank_tol`` is relative to the largest eigenvalue; default ``n * eps``.
    """
    A = r.dense_A()
    tol = r.n * np.finfo(float).eps if rank_tol is None else float(rank_tol)
    BB = r.B @ r.B.T
    CC = r.C.T @ r.C
    G_C = solve_lyapunov(A, BB, check=False)
    G_O = solve_lyapunov(A.T, CC, check=False)
    res_C = lyapunov_residual(A, G_C, BB)
    res_O = lyapunov_residual(A.T, G_O, CC)
    for name, res in (("controllability", res_C), ("observability", res_O)):
        if not res <= RESIDUAL_TOL:
            warnings.warn(f"{name} Gramian residual {res:.2e}", AccuracyWarning, stacklevel=2)
    return GramianPair(G_C, G_O, psd_factor(G_C, tol), psd_factor(G_O, tol), tol, res_C, res_O)


def energy_functions(gp: GramianPair, y, tol: float = 1e-8) -> tuple[float, float]:
    """Input energy ``E_C(y)`` to reach ``y`` and output energy ``E_O(y)`` it releases.

    ``E_C`` uses the pseudo-inverse of ``G_C`` restricted to the reachable
    subspace spanned by ``U``.

    Raises
    ------
    UnreachableStateError
        If ``y`` has a component outside ``range(U)`` above ``tol * |y|``.
    """
    y = np.asarray(y, dtype=float).reshape(gp.n)
    E_O = float(y @ gp.G_O @ y)
    ny = np.linalg.norm(y)
    if ny == 0:
        return 0.0, E_O
    z, *_ = np.linalg.lstsq(gp.U, y, rcond=None)
    if np.linalg.norm(gp.U @ z - y) > tol * ny:
        raise UnreachableStateError("state lies outside the controllable subspace")
    return float(z @ z), E_O


def write_spectrum(path, G) -> Path:
    """Write ``index,eigenvalue`` rows (descending) for decay plots."""
    path = Path(path)
    lam = np.sort(np.linalg.eigvalsh(0.5 * (G + G.T)))[::-1]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "eigenvalue"])
        for i, v in enumerate(lam, 1):
            w.writerow([i, f"{v:.17g}"])
    return path
