"""Adjoint pressure problem.

Two routes are provided:

* :func:`solve_adjoint` solves the time-reversed adjoint equation with the
  forward integrator (adjoint first, then discretize).
* :func:`discrete_adjoint` sweeps the transpose of the linearized Newmark/L1
  time stepper backwards, so that the resulting gradients are exact for the
  discrete reduced objective.  This is the route used by the optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .fem import FemMatrices, SpaceMesh, Tridiagonal, assemble, assemble_weighted, weighted_bands
from .forward import (
    A_LOWER,
    A_UPPER,
    LinearizedCoefficients,
    PhysicsParams,
    StateTrajectory,
    StepOperators,
    solve_linearized,
)
from .fractional import TimeGrid, l1_matrix


@dataclass
class AdjointData:
    state: StateTrajectory
    target: np.ndarray
    nu: int
    roi_mask: np.ndarray

    def __post_init__(self):
        if self.nu not in (0, 1):
            raise PreconditionError(f"tracking mode must be 0 or 1, got {self.nu}")
        mask = np.asarray(self.roi_mask, dtype=float)
        if not np.all((mask == 0) | (mask == 1)):
            raise PreconditionError("region-of-interest mask must be 0/1 valued")
        self.roi_mask = mask
        self.target = np.asarray(self.target, dtype=float)
        if self.target.shape != self.state.u.shape:
            raise PreconditionError(
                f"target shape {self.target.shape} does not match state {self.state.u.shape}")


def solve_adjoint(data: AdjointData, params: PhysicsParams, mesh: SpaceMesh, grid: TimeGrid,
                  mats: FemMatrices | None = None,
                  a_bounds: tuple[float, float] = (A_LOWER, A_UPPER)) -> StateTrajectory:
    """Adjoint state via one reversed-time linearized solve.

    Reversed problem: a = 1 - 2k p~, l = n = 0, F = nu (p~ - p~d) chi, g = 0,
    u_t(0) = (1 - nu) (p~(0) - p~d(0)) chi / a(0).
    """
    if data.state.grid != grid:
        raise PreconditionError("state and adjoint grids differ")
    mats = mats or assemble(mesh)
    k = params.k_field(mesh)
    chi = data.roi_mask
    p_rev = data.state.u[::-1]
    pd_rev = data.target[::-1]
    a = 1.0 - 2.0 * k * p_rev
    if np.any(a[0] < a_bounds[0]):
        raise PreconditionError("leading coefficient at final time below the lower bound")
    mismatch = (p_rev - pd_rev) * chi
    u1 = (1 - data.nu) * mismatch[0] / a[0]
    coeffs = LinearizedCoefficients.constant(mesh, grid, F=data.nu * mismatch, u1=u1)
    coeffs.a = a
    rev = solve_linearized(coeffs, params, mesh, grid, mats=mats, a_bounds=a_bounds)
    return StateTrajectory(
        u=rev.u[::-1].copy(),
        u_t=-rev.u_t[::-1],
        u_tt=rev.u_tt[::-1].copy(),
        frac=rev.frac[::-1].copy(),
        energy=rev.energy[::-1].copy(),
        grid=grid,
    )


class TimeStepper(StepOperators):
    """Tangent and transpose sweeps of the linearized Newmark/L1 scheme.

    With (u, v, a) the Newmark triple, step n >= 1 solves
    ``S_n a^n = r_n - b K sum_{i<n} D[n, i] u^i - P_n v~ - Q_n u~``;
    ``P_n`` and ``Q_n`` also carry the state-dependent terms of the
    Westervelt coefficients when linearizing about a state.
    """

    def __init__(self, a, l, n_coef, params: PhysicsParams, mesh: SpaceMesh, grid: TimeGrid,
                 mats: FemMatrices, dP=None, dQ=None):
        super().__init__(a, l, n_coef, params, mesh, grid, mats)
        self.dP, self.dQ = dP, dQ
        self.D = l1_matrix(params.alpha, grid)

    @classmethod
    def linearized_about(cls, traj: StateTrajectory, params: PhysicsParams, mesh: SpaceMesh,
                         mats: FemMatrices) -> "TimeStepper":
        """Tangent of the converged Westervelt fixed point about ``traj``."""
        k = params.k_field(mesh)
        zero = np.zeros_like(traj.u)
        stepper = cls(1.0 - 2.0 * k * traj.u, -2.0 * k * traj.u_t, zero, params, mesh,
                      traj.grid, mats)
        vd, vo = weighted_bands(mesh, traj.u_t)
        ad, ao = weighted_bands(mesh, traj.u_tt)
        s = -2.0 * k
        stepper.dP = lambda n: Tridiagonal.symmetric(vd[n], vo[n]).scale_columns(s)
        stepper.dQ = lambda n: Tridiagonal.symmetric(ad[n], ao[n]).scale_columns(s)
        return stepper

    def forward(self, rhs, u1=None):
        """Tangent sweep: response (u, v, a) to per-step right-hand sides."""
        N, dt, nn = self.grid.n_steps, self.grid.dt, self.mesh.n_nodes
        b, K = self.params.b, self.K
        u = np.zeros((N + 1, nn))
        v = np.zeros((N + 1, nn))
        acc = np.zeros((N + 1, nn))
        if u1 is not None:
            v[0] = u1
        S0, P0, _ = self.system(0)
        acc[0] = S0.solve(rhs[0] - P0 @ v[0])
        for n in range(1, N + 1):
            S, P, Q = self.system(n)
            ut = u[n - 1] + dt * v[n - 1] + self.beta * acc[n - 1]
            vt = v[n - 1] + self.gamma * acc[n - 1]
            r = rhs[n] - P @ vt - Q @ ut
            if b and n >= 2:
                r -= b * (K @ (u[1:n].T @ self.D[n, 1:n]))
            acc[n] = S.solve(r)
            u[n] = ut + self.beta * acc[n]
            v[n] = vt + self.gamma * acc[n]
        return u, v, acc

    def adjoint(self, seed_u):
        """Transpose sweep: returns d(sum seed_u * u) / d(rhs) for every step."""
        N, dt = self.grid.n_steps, self.grid.dt
        b, K = self.params.b, self.K
        ubar = np.array(seed_u, dtype=float)
        vbar = np.zeros_like(ubar)
        abar = np.zeros_like(ubar)
        rbar = np.zeros_like(ubar)
        for n in range(N, 0, -1):
            if b and n < N:
                # K is symmetric, so K^T = K
                ubar[n] -= b * (K @ (rbar[n + 1:].T @ self.D[n + 1:, n]))
            S, P, Q = self.system(n)
            utb = ubar[n].copy()
            vtb = vbar[n].copy()
            abar[n] += self.beta * ubar[n] + self.gamma * vbar[n]
            rbar[n] = S.T.solve(abar[n])
            utb -= Q.T @ rbar[n]
            vtb -= P.T @ rbar[n]
            ubar[n - 1] += utb
            vbar[n - 1] += dt * utb + vtb
            abar[n - 1] += self.beta * utb + self.gamma * vtb
        S0, _, _ = self.system(0)
        rbar[0] = S0.T.solve(abar[0])
        return rbar


def tracking_seed(traj_u, target, nu, roi_mass, grid: TimeGrid) -> np.ndarray:
    """dJ/du for the tracking part of the objective, per time node."""
    e = np.asarray(traj_u) - np.asarray(target)
    seed = np.zeros_like(e)
    if nu == 1:
        seed = grid.trapezoid_weights()[:, None] * (roi_mass @ e.T).T
    else:
        seed[-1] = roi_mass @ e[-1]
    return seed


def discrete_adjoint(data: AdjointData, params: PhysicsParams, mesh: SpaceMesh, grid: TimeGrid,
                     mats: FemMatrices | None = None, stepper: TimeStepper | None = None):
    """Exact discrete adjoint of the reduced objective's tracking term.

    Returns ``(padj, rbar)`` where ``rbar[n]`` is the sensitivity of the
    tracking term to the step-n load vector and ``padj = rbar / tau`` its
    trapezoid-scaled nodal representative, which approximates the adjoint
    pressure at t_n.
    """
    mats = mats or assemble(mesh)
    stepper = stepper or TimeStepper.linearized_about(data.state, params, mesh, mats)
    roi_mass = assemble_weighted(mesh, data.roi_mask)
    seed = tracking_seed(data.state.u, data.target, data.nu, roi_mass, grid)
    rbar = stepper.adjoint(seed)
    padj = rbar / grid.trapezoid_weights()[:, None]
    return padj, rbar
