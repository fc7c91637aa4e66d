"""Discrete fractional calculus on a uniform time grid.

All operators act along axis 0 of their input, so a ``(n_steps + 1,)``
series and a ``(n_steps + 1, n_dof)`` space-time array are treated alike.
The Caputo derivative uses the L1 product-integration scheme; the
Grunwald-Letnikov formula is kept only as an independent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .errors import DomainError, PreconditionError

PRECONDITION_TOL = 1e-12


def check_order(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"fractional order must lie in (0, 1), got {alpha}")
    return alpha


@dataclass(frozen=True)
class TimeGrid:
    """Uniform nodes t_n = n * dt, n = 0..n_steps."""

    dt: float
    n_steps: int

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise DomainError(f"dt must be positive, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise DomainError(f"n_steps must be an integer >= 1, got {self.n_steps}")

    @classmethod
    def from_horizon(cls, T: float, n_steps: int) -> "TimeGrid":
        return cls(T / n_steps, n_steps)

    @property
    def T(self) -> float:
        return self.dt * self.n_steps

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    @property
    def nodes(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n_steps + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w


def kernel_eval(alpha, t):
    """Abel kernel t**(-alpha) / Gamma(1 - alpha), defined for t > 0."""
    alpha = check_order(alpha)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise DomainError("the memory kernel is singular at t <= 0")
    out = t_arr ** (-alpha) / math.gamma(1.0 - alpha)
    return float(out) if out.ndim == 0 else out


def kernel_l1_mass(alpha: float, T: float) -> float:
    """Integral of the kernel t**(-alpha)/Gamma(1-alpha) over (0, T)."""
    alpha = check_order(alpha)
    return T ** (1.0 - alpha) / math.gamma(2.0 - alpha)


def _as_series(v, grid: TimeGrid) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[0] != grid.n_nodes:
        raise PreconditionError(
            f"series has {v.shape[0]} samples, grid expects {grid.n_nodes}")
    return v


def _scale(v: np.ndarray) -> float:
    return max(1.0, float(np.max(np.abs(v)))) if v.size else 1.0


def l1_weights(alpha: float, n: int) -> np.ndarray:
    """w_m = (m+1)**(1-alpha) - m**(1-alpha) for m = 0..n-1."""
    m = np.arange(n, dtype=float)
    return (m + 1.0) ** (1.0 - alpha) - m ** (1.0 - alpha)


def l1_scale(alpha: float, dt: float) -> float:
    return dt ** (-alpha) / math.gamma(2.0 - alpha)


def l1_matrix(alpha, grid: TimeGrid) -> np.ndarray:
    """Dense (N+1, N+1) matrix D with caputo_derivative(v) == D @ v.

    Row 0 is zero.  Column 0 carries the -w_{n-1} coefficients of v[0],
    which drop out under the precondition v[0] = 0.
    """
    alpha = check_order(alpha)
    N = grid.n_steps
    w = l1_weights(alpha, N)
    # increments (v[j+1] - v[j]) -> coefficients on v[i]
    d = np.empty(N)
    d[0] = w[0]
    d[1:] = w[1:] - w[:-1]
    D = np.zeros((N + 1, N + 1))
    D[1:, 1:] = toeplitz(d, np.zeros(N))
    D[1:, 0] = -w
    return l1_scale(alpha, grid.dt) * D


def caputo_derivative(v, alpha, grid: TimeGrid) -> np.ndarray:
    """L1 approximation of the Caputo derivative at every grid node."""
    alpha = check_order(alpha)
    v = _as_series(v, grid)
    if np.any(np.abs(v[0]) > PRECONDITION_TOL * _scale(v)):
        raise PreconditionError("caputo_derivative requires v[0] = 0")
    N = grid.n_steps
    w = l1_weights(alpha, N)
    T_low = toeplitz(w, np.zeros(N))
    dv = np.diff(v, axis=0)
    out = np.zeros_like(v)
    out[1:] = l1_scale(alpha, grid.dt) * (T_low @ dv)
    return out


def adjoint_caputo(phi, alpha, grid: TimeGrid) -> np.ndarray:
    """Right-sided (adjoint) Caputo derivative via time reversal.

    Computed as reverse(caputo_derivative(reverse(phi))), which on the
    subspaces v[0] = 0, phi[-1] = 0 coincides with the transpose of the L1
    matrix under the uniform rectangle-rule pairing.
    """
    alpha = check_order(alpha)
    phi = _as_series(phi, grid)
    if np.any(np.abs(phi[-1]) > PRECONDITION_TOL * _scale(phi)):
        raise PreconditionError("adjoint_caputo requires phi[-1] = 0")
    return caputo_derivative(phi[::-1], alpha, grid)[::-1].copy()


def rl_integral(v, alpha, grid: TimeGrid) -> np.ndarray:
    """Riemann-Liouville integral by piecewise-linear product integration.

    Accepts alpha in (0, 1]; alpha = 1 reduces to the trapezoid rule.
    """
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"integral order must lie in (0, 1], got {alpha}")
    v = _as_series(v, grid)
    N = grid.n_steps
    p = alpha + 1.0
    k = np.arange(N + 1, dtype=float)
    inner = np.zeros(N + 1)
    inner[0] = 1.0
    inner[1:] = (k[1:] + 1.0) ** p - 2.0 * k[1:] ** p + (k[1:] - 1.0) ** p
    A = toeplitz(inner, np.zeros(N + 1))
    n = k[1:]
    A[1:, 0] = (n - 1.0) ** p - (n - 1.0 - alpha) * n ** alpha
    A[0, 0] = 0.0
    return grid.dt ** alpha / math.gamma(alpha + 2.0) * (A @ v)


def gl_derivative_oracle(v, alpha, grid: TimeGrid) -> np.ndarray:
    """Grunwald-Letnikov difference dt**-alpha * sum_j c_j v[n-j].

    Independent of the L1 path; used for cross-validation only.
    """
    alpha = check_order(alpha)
    v = _as_series(v, grid)
    if np.any(np.abs(v[0]) > PRECONDITION_TOL * _scale(v)):
        raise PreconditionError("gl_derivative_oracle requires v[0] = 0")
    N = grid.n_steps
    c = np.empty(N + 1)
    c[0] = 1.0
    for j in range(1, N + 1):
        c[j] = c[j - 1] * (1.0 - (alpha + 1.0) / j)
    G = toeplitz(c, np.zeros(N + 1))
    return grid.dt ** (-alpha) * (G @ v)


@dataclass(frozen=True)
class CoercivityReport:
    lhs: float
    rhs: float
    margin: float
    rhs_alternative: float
    margin_alternative: float
    nonneg: float
    nonneg_margin: float
    scale: float

    @property
    def nonneg_ok(self) -> bool:
        return self.nonneg_margin >= -1e-10 * self.scale


def coercivity_check(u, alpha, grid: TimeGrid, tol: float = 1e-10) -> CoercivityReport:
    """Evaluate both fractional coercivity inequalities on a sampled field.

    ``lhs`` pairs the L1 derivative with backward differences of u; ``rhs``
    uses the constant T**alpha / (2 Gamma(1-alpha)).  The alternative
    constant T**(alpha-1) / (2 Gamma(alpha)) is reported alongside; neither
    constant-bearing margin is asserted here.  ``nonneg`` is the
    trapezoid value of int u * J^alpha u, which must be >= -tol * ||u||^2.
    """
    alpha = check_order(alpha)
    u = _as_series(u, grid)
    if u.ndim == 1:
        u = u[:, None]
    du = caputo_derivative(u, alpha, grid)
    T = grid.T
    lhs = float(np.sum(du[1:] * np.diff(u, axis=0)))
    tw = grid.trapezoid_weights()
    frac_sq = float(np.sum(tw[:, None] * du ** 2))
    c_printed = T ** alpha / (2.0 * math.gamma(1.0 - alpha))
    c_alt = T ** (alpha - 1.0) / (2.0 * math.gamma(alpha))
    ju = rl_integral(u, alpha, grid)
    nonneg = float(np.sum(tw[:, None] * u * ju))
    scale = float(np.sum(tw[:, None] * u ** 2))
    return CoercivityReport(
        lhs=lhs,
        rhs=c_printed * frac_sq,
        margin=lhs - c_printed * frac_sq,
        rhs_alternative=c_alt * frac_sq,
        margin_alternative=lhs - c_alt * frac_sq,
        nonneg=nonneg,
        nonneg_margin=nonneg,
        scale=scale,
    )
