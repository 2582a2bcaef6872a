"""LTI realizations, operating schedules and time integration."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import ConditioningError, ConfigError, DomainError, NumericalError, ShapeError, StepError

__all__ = [
    "LtiRealization",
    "Schedule",
    "Trajectory",
    "transform_realization",
    "shift_temperature",
    "unshift_outputs",
    "input_signal",
    "simulate",
    "running_l2",
    "charge_discharge_schedule",
    "waiting_schedule",
]

HOUR = 3600.0


@dataclass(frozen=True, eq=False)
class LtiRealization:
    """State-space triple ``(A, B, C)``; ``A`` may be a scipy sparse matrix."""

    A: np.ndarray | sp.spmatrix
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = self.A if sp.issparse(self.A) else np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        C = np.asarray(self.C, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if C.ndim == 1:
            C = C.reshape(1, -1)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ShapeError(f"A must be square, got {A.shape}")
        if B.shape[0] != n or C.shape[1] != n:
            raise ShapeError(f"inconsistent dimensions A{A.shape} B{B.shape} C{C.shape}")
        data = A.data if sp.issparse(A) else A
        if not (np.all(np.isfinite(data)) and np.all(np.isfinite(B)) and np.all(np.isfinite(C))):
            raise NumericalError("realization has non-finite entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def n_o(self) -> int:
        return self.C.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.n, self.m, self.n_o

    def dense_A(self) -> np.ndarray:
        return self.A.toarray() if sp.issparse(self.A) else self.A

    def is_stable(self) -> bool:
        from .storage_model import verify_stability

        return verify_stability(self.A) < 0

    def markov(self, k: int) -> np.ndarray:
        """``C A^k B``."""
        X = self.B
        for _ in range(k):
            X = self.A @ X
        return self.C @ X


def transform_realization(r: LtiRealization, T, cond_limit: float = 1e12) -> LtiRealization:
    """Change state coordinates to ``T y``: returns ``(T A T^-1, T B, C T^-1)``."""
    T = np.atleast_2d(np.asarray(T, dtype=float))
    if T.shape != (r.n, r.n):
        raise ShapeError(f"transformation must be {r.n}x{r.n}")
    cond = np.linalg.cond(T)
    if not np.isfinite(cond) or cond > cond_limit:
        raise ConditioningError(f"transformation is numerically singular (cond={cond:.3g})")
    lu = scipy.linalg.lu_factor(T)
    A = r.dense_A()
    # X T^-1 = (T^-T X^T)^T
    A_new = scipy.linalg.lu_solve(lu, (T @ A).T, trans=1).T
    C_new = scipy.linalg.lu_solve(lu, r.C.T, trans=1).T
    return LtiRealization(A_new, T @ r.B, C_new)


def _intervals(value) -> tuple[tuple[float, float], ...]:
    out = tuple((float(a), float(b)) for a, b in value)
    for a, b in out:
        if not b > a:
            raise DomainError(f"empty interval ({a}, {b})")
    return tuple(sorted(out))


def _complement(T, taken):
    gaps, cursor = [], 0.0
    for a, b in sorted(taken):
        if a > cursor:
            gaps.append((cursor, a))
        cursor = max(cursor, b)
    if cursor < T:
        gaps.append((cursor, T))
    return tuple(gaps)


@dataclass(frozen=True)
class Schedule:
    """Charging, discharging and waiting periods on ``[0, T]`` (seconds, deg C).

    Intervals are half-open ``[a, b)``; the one ending at ``T`` also contains
    ``T``.  ``waiting`` defaults to the complement of the other two.
    """

    T: float
    charging: tuple[tuple[float, float], ...] = ()
    discharging: tuple[tuple[float, float], ...] = ()
    waiting: tuple[tuple[float, float], ...] | None = None
    Q_in_C: float = 40.0
    Q_in_D: float = 5.0
    Q_G: float = 15.0
    Q_0: float = 10.0
    v0: float = 0.01

    def __post_init__(self):
        if not self.T > 0:
            raise DomainError("horizon T must be positive")
        C, D = _intervals(self.charging), _intervals(self.discharging)
        W = _complement(self.T, C + D) if self.waiting is None else _intervals(self.waiting)
        object.__setattr__(self, "charging", C)
        object.__setattr__(self, "discharging", D)
        object.__setattr__(self, "waiting", W)
        pieces = sorted(C + D + W)
        cursor = 0.0
        for a, b in pieces:
            if not np.isclose(a, cursor, rtol=0, atol=1e-9 * self.T):
                raise DomainError("periods must be disjoint and cover [0, T]")
            cursor = b
        if not np.isclose(cursor, self.T, rtol=0, atol=1e-9 * self.T):
            raise DomainError("periods must cover [0, T]")
        for name in ("Q_in_C", "Q_in_D", "Q_G", "Q_0", "v0"):
            if not np.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")

    @property
    def has_waiting(self) -> bool:
        return len(self.waiting) > 0

    def period(self, t: float) -> str:
        """``'C'``, ``'D'`` or ``'W'`` for time ``t``."""
        if t < 0 or t > self.T * (1 + 1e-12):
            raise DomainError(f"t={t} outside [0, {self.T}]")
        for label, ivs in (("C", self.charging), ("D", self.discharging), ("W", self.waiting)):
            for a, b in ivs:
                if a <= t < b or (t >= b and np.isclose(b, self.T) and t <= self.T * (1 + 1e-12)):
                    return label
        raise DomainError(f"t={t} not covered by the schedule")

    def pump_on(self, t: float) -> bool:
        return self.period(t) != "W"


def charge_discharge_schedule(T: float = 72 * HOUR, **temps) -> Schedule:
    """Charging on the first half of the horizon, discharging on the second."""
    return Schedule(T=T, charging=((0.0, T / 2),), discharging=((T / 2, T),), **temps)


def waiting_schedule(**temps) -> Schedule:
    """72 h schedule with three charging and three discharging periods separated by waiting."""
    h = HOUR
    return Schedule(
        T=72 * h,
        charging=((0, 4 * h), (8 * h, 14 * h), (20 * h, 28 * h)),
        discharging=((36 * h, 40 * h), (44 * h, 50 * h), (56 * h, 64 * h)),
        **temps,
    )


def shift_temperature(sched: Schedule) -> Schedule:
    """Move the temperature origin to ``Q_0`` so the initial state is zero."""
    q0 = sched.Q_0
    return replace(sched, Q_in_C=sched.Q_in_C - q0, Q_in_D=sched.Q_in_D - q0, Q_G=sched.Q_G - q0, Q_0=0.0)


def unshift_outputs(Z, Q_0: float) -> np.ndarray:
    return np.asarray(Z) + Q_0


def input_signal(sched: Schedule, t: float, Qf_bar: float | None = None) -> np.ndarray:
    """Input ``g(t) = (inlet temperature, ground temperature)``.

    During waiting the inlet temperature is the current average fluid
    temperature ``Qf_bar`` (analogous model).
    """
    p = sched.period(t)
    if p == "C":
        return np.array([sched.Q_in_C, sched.Q_G])
    if p == "D":
        return np.array([sched.Q_in_D, sched.Q_G])
    if Qf_bar is None or not np.isfinite(Qf_bar):
        raise DomainError("waiting periods need a finite average fluid temperature")
    return np.array([float(Qf_bar), sched.Q_G])


@dataclass
class Trajectory:
    """Outputs (and optionally states) on the grid ``t_k = k tau``."""

    t: np.ndarray
    Z: np.ndarray
    g: np.ndarray
    tau: float
    Y: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not (len(self.t) == len(self.Z) == len(self.g)):
            raise ShapeError("time, output and input records differ in length")
        if self.Y is not None and len(self.Y) != len(self.t):
            raise ShapeError("state record length differs from time grid")


def running_l2(X, tau: float) -> np.ndarray:
    """Left-endpoint running norm ``sqrt(sum_{j<k} tau |X_j|^2)``; starts at 0."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    sq = tau * np.sum(X * X, axis=1)
    acc = np.concatenate(([0.0], np.cumsum(sq[:-1])))
    return np.sqrt(acc)


class _StepSolver:
    """Solves ``(I - theta tau A) x = rhs`` with a factorization built once."""

    def __init__(self, A, theta_tau: float, small: int = 64):
        n = A.shape[0]
        if sp.issparse(A) and n > small:
            M = (sp.identity(n, format="csc") - theta_tau * sp.csc_matrix(A)).tocsc()
            try:
                lu = spla.splu(M)
            except RuntimeError as exc:
                raise StepError(f"step matrix is singular: {exc}") from exc
            self.solve = lu.solve
            return
        Ad = A.toarray() if sp.issparse(A) else np.asarray(A)
        M = np.eye(n) - theta_tau * Ad
        try:
            if n <= small:
                inv = np.linalg.inv(M)
                if not np.all(np.isfinite(inv)):
                    raise np.linalg.LinAlgError("non-finite inverse")
                self.solve = lambda rhs: inv @ rhs
            else:
                lu = scipy.linalg.lu_factor(M, check_finite=True)
                self.solve = lambda rhs: scipy.linalg.lu_solve(lu, rhs)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise StepError(f"step matrix is singular: {exc}") from exc


def simulate(
    r: LtiRealization,
    sched: Schedule,
    y0=None,
    tau: float = 1.0,
    cf_row=None,
    scheme: str = "euler",
    keep_states: bool = False,
) -> Trajectory:
    """Integrate ``Y' = A Y + B g``, ``Z = C Y`` over the schedule.

    ``scheme='euler'`` is implicit Euler; ``'trapezoid'`` the trapezoidal
    rule.  During waiting the inlet input is ``cf_row @ Y_k`` taken at the
    start of the step.  ``y0`` defaults to the zero state.
    """
    if not tau > 0:
        raise DomainError("time step must be positive")
    if scheme not in ("euler", "trapezoid"):
        raise ConfigError(f"unknown time scheme {scheme!r}")
    if r.m != 2:
        raise ShapeError("storage realizations take two inputs (inlet, ground)")
    K = int(round(sched.T / tau))
    if K < 1 or not np.isclose(K * tau, sched.T, rtol=1e-9):
        raise DomainError("time step must divide the horizon")
    n = r.n
    y = np.zeros(n) if y0 is None else np.array(y0, dtype=float).reshape(n)
    if cf_row is not None:
        cf_row = np.asarray(cf_row, dtype=float).reshape(n)
    elif sched.has_waiting:
        raise ConfigError("schedule has waiting periods but no fluid-average row was given")

    t = tau * np.arange(K + 1)
    labels = [sched.period(tk) for tk in t]
    A, B, C = r.A, r.B, r.C
    theta = 1.0 if scheme == "euler" else 0.5
    step = _StepSolver(A, theta * tau)
    const_g = {"C": np.array([sched.Q_in_C, sched.Q_G]), "D": np.array([sched.Q_in_D, sched.Q_G])}
    const_Bg = {k: tau * (B @ v) for k, v in const_g.items()}

    def g_at(k, yk):
        lab = labels[k]
        if lab == "W":
            return np.array([cf_row @ yk, sched.Q_G])
        return const_g[lab]

    Z = np.empty((K + 1, r.n_o))
    G = np.empty((K + 1, r.m))
    Y = np.empty((K + 1, n)) if keep_states else None
    Ad = A
    for k in range(K):
        gk = g_at(k, y)
        G[k] = gk
        Z[k] = C @ y
        if keep_states:
            Y[k] = y
        if theta == 1.0:
            lab = labels[k]
            rhs = y + (const_Bg[lab] if lab != "W" else tau * (B @ gk))
        else:
            # inlet feedback for t_{k+1} uses Y_k as well
            gk1 = const_g[labels[k + 1]] if labels[k + 1] != "W" else np.array([cf_row @ y, sched.Q_G])
            rhs = y + 0.5 * tau * (Ad @ y) + 0.5 * tau * (B @ (gk + gk1))
        y = step.solve(rhs)
        if not np.all(np.isfinite(y)):
            raise NumericalError(f"non-finite state at step {k + 1}")
    G[K] = g_at(K, y)
    Z[K] = C @ y
    if keep_states:
        Y[K] = y
    return Trajectory(t=t, Z=Z, g=G, tau=tau, Y=Y)
