"""Optimal control: objective, admissible sets, reduced gradients, optimizer.

Controls are a boundary signal g, sampled per boundary node and time node,
and a distributed source f, sampled per mesh node and time node.  Both are
paired with discrete L2 inner products (trapezoid rule in time, Euclidean on
the boundary, P1 mass matrix in the interior), so gradients live in the same
spaces as the controls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .adjoint import AdjointData, TimeStepper, discrete_adjoint
from .errors import (
    DomainError,
    FixedPointDivergence,
    LineSearchStall,
    NonDegeneracyViolation,
    NumericalBlowup,
    PreconditionError,
)
from .fem import FemMatrices, SpaceMesh, assemble, assemble_weighted
from .forward import BoundarySignal, FixedPointOptions, PhysicsParams, StateTrajectory, solve_westervelt
from .fractional import TimeGrid, caputo_derivative, l1_matrix

# number of leading time samples of g pinned to zero: g(0) = 0 and the
# forward-difference rate (g[1] - g[0]) / dt = 0
PINNED = 2


@dataclass
class ObjectiveSpec:
    target: np.ndarray
    nu: int
    gamma: float
    eta: float
    roi_mask: np.ndarray
    T: float

    def __post_init__(self):
        if self.nu not in (0, 1) or isinstance(self.nu, bool):
            raise DomainError(f"tracking mode nu must be 0 or 1, got {self.nu!r}")
        if self.gamma < 0 or self.eta < 0:
            raise DomainError("regularization weights must be nonnegative")
        self.target = np.asarray(self.target, dtype=float)
        self.roi_mask = np.asarray(self.roi_mask, dtype=float)
        if not np.all((self.roi_mask == 0) | (self.roi_mask == 1)):
            raise PreconditionError("region-of-interest mask must be 0/1 valued")

    def with_weights(self, gamma=None, eta=None, target=None) -> "ObjectiveSpec":
        return ObjectiveSpec(
            target=self.target if target is None else target,
            nu=self.nu,
            gamma=self.gamma if gamma is None else gamma,
            eta=self.eta if eta is None else eta,
            roi_mask=self.roi_mask,
            T=self.T,
        )


@dataclass(frozen=True)
class AdmissibleSpec:
    """Radii of the control balls and weights of the X_g surrogate components."""

    L1_g: float
    L2_f: float
    weights: tuple = (1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        if not (self.L1_g > 0 and self.L2_f > 0):
            raise DomainError("admissible radii must be positive")
        if len(self.weights) != 4 or any(w < 0 for w in self.weights):
            raise DomainError("need four nonnegative surrogate weights")


@dataclass(frozen=True)
class ConditioningParams:
    """Mollifier width eps, correction rate R_nu (None: automatic), bump radii r < R."""

    eps: float
    r: float = 1.0
    R: float = 2.0
    rate: float | None = None

    def __post_init__(self):
        if not self.eps > 0:
            raise DomainError("mollifier width must be positive")
        if not 0 < self.r < self.R:
            raise DomainError(f"bump radii need 0 < r < R, got r={self.r}, R={self.R}")

    @classmethod
    def default(cls, grid: TimeGrid) -> "ConditioningParams":
        return cls(eps=4.0 * grid.dt)


def _values(g) -> np.ndarray:
    return np.asarray(g.values if isinstance(g, BoundarySignal) else g, dtype=float)


def _field(p) -> np.ndarray:
    return np.asarray(p.u if isinstance(p, StateTrajectory) else p, dtype=float)


def _space_time_sq(mats_or_mass, grid: TimeGrid, u) -> float:
    M = mats_or_mass.M if isinstance(mats_or_mass, FemMatrices) else mats_or_mass
    tw = grid.trapezoid_weights()
    return float(np.sum(tw * np.einsum("ti,ti->t", u, (M @ u.T).T)))


def _time_grid(spec_T: float, n_nodes: int) -> TimeGrid:
    return TimeGrid.from_horizon(spec_T, n_nodes - 1)


# -- objective -----------------------------------------------------------------

def tracking_error(p, spec: ObjectiveSpec, mesh: SpaceMesh) -> float:
    """||p - p^d|| in L2(0,T;L2(Omega0)) (nu = 1) or L2(Omega0) at T (nu = 0)."""
    u = _field(p)
    if u.shape != spec.target.shape:
        raise PreconditionError(f"state shape {u.shape} differs from target {spec.target.shape}")
    roi = assemble_weighted(mesh, spec.roi_mask)
    e = u - spec.target
    if spec.nu == 1:
        return math.sqrt(max(_space_time_sq(roi, _time_grid(spec.T, u.shape[0]), e), 0.0))
    return math.sqrt(max(float(e[-1] @ (roi @ e[-1])), 0.0))


def evaluate_objective(p, g, f, spec: ObjectiveSpec, mesh: SpaceMesh,
                       mats: FemMatrices | None = None) -> float:
    u = _field(p)
    grid = _time_grid(spec.T, u.shape[0])
    if isinstance(p, StateTrajectory) and p.grid.n_steps != grid.n_steps:
        raise PreconditionError("state and objective grids differ")
    mats = mats or assemble(mesh)
    track = 0.5 * tracking_error(u, spec, mesh) ** 2
    tw = grid.trapezoid_weights()
    J = track
    if g is not None and spec.gamma:
        gv = _values(g)
        J += 0.5 * spec.gamma * float(np.sum(tw[:, None] * gv ** 2))
    if f is not None and spec.eta:
        J += 0.5 * spec.eta * _space_time_sq(mats, grid, np.asarray(f, dtype=float))
    return J


# -- compatibility conditioning -------------------------------------------------

def _transition(t):
    return math.exp(-1.0 / t) if t > 0 else 0.0


class _Bump:
    def __init__(self, r: float, R: float):
        if not 0 < r < R:
            raise DomainError(f"bump radii need 0 < r < R, got r={r}, R={R}")
        self.r, self.R = r, R
        self.total = quad(self.f1, r, R, epsabs=0.0, epsrel=1e-13, limit=200)[0]

    def f1(self, t):
        return _transition(t - self.r) * _transition(self.R - t)

    def value(self, tau: float) -> float:
        a = abs(tau)
        if a <= self.r:
            return 1.0
        if a >= self.R:
            return 0.0
        # integrate over the shorter side so that values near 1 stay monotone and <= 1
        if a < 0.5 * (self.r + self.R):
            head = quad(self.f1, self.r, a, epsabs=0.0, epsrel=1e-13, limit=200)[0]
            return 1.0 - head / self.total
        return quad(self.f1, a, self.R, epsabs=0.0, epsrel=1e-13, limit=200)[0] / self.total

    def slope(self, tau: float) -> float:
        a = abs(tau)
        if a <= self.r or a >= self.R:
            return 0.0
        return -math.copysign(self.f1(a), tau) / self.total


def bump_function(tau, r: float, R: float):
    """Smooth cutoff: 1 for |tau| <= r, 0 for |tau| >= R, decreasing in between."""
    bump = _Bump(r, R)
    t = np.asarray(tau, dtype=float)
    out = np.vectorize(bump.value, otypes=[float])(t)
    return float(out) if out.ndim == 0 else out


def _mollifier(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


def _mollifier_slope(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    out[inside] = np.exp(-1.0 / (1.0 - si ** 2)) * (-2.0 * si / (1.0 - si ** 2) ** 2)
    return out


def mollify(values, grid: TimeGrid, eps: float):
    """Discrete time mollification and its exact derivative.

    The signal is extended by zero for t < 0 and by its final value for t > T.
    Kernel weights are normalized to sum to one at every node.
    """
    v = np.asarray(values, dtype=float)
    dt, N = grid.dt, grid.n_steps
    pad = int(math.ceil(eps / dt)) + 1
    ext = np.concatenate([np.zeros((pad,) + v.shape[1:]), v,
                          np.repeat(v[-1:], pad, axis=0)], axis=0)
    offsets = np.arange(-pad, pad + 1) * dt
    kern = _mollifier(offsets / eps)
    dkern = _mollifier_slope(offsets / eps) / eps
    norm = kern.sum()
    out = np.empty_like(v)
    rate = np.empty_like(v)
    for n in range(N + 1):
        window = ext[n:n + 2 * pad + 1][::-1]  # window[j] = g(t_n - offsets[j])
        out[n] = kern @ window / norm
        rate[n] = dkern @ window / norm
    return out, rate


def condition_boundary_data(g_raw, params: ConditioningParams, grid: TimeGrid) -> BoundarySignal:
    """Mollify and correct raw boundary data so that g(0) = g_t(0) = 0.

    Returns a signal carrying the exact derivative samples in ``g_t``.
    """
    raw = _values(g_raw)
    if not np.all(np.isfinite(raw)):
        raise PreconditionError("boundary data contains non-finite values")
    if raw.shape[0] != grid.n_nodes:
        raise PreconditionError("boundary data does not match the time grid")
    gbar, gbar_t = mollify(raw, grid, params.eps)
    slope0 = gbar_t[0]
    rate = params.rate
    if rate is None:
        rate = (1.0 + float(slope0 @ slope0)) / params.eps
    bump = _Bump(params.r, params.R)
    t = grid.nodes
    s = rate * t
    rho = np.array([bump.value(x) for x in s])
    chi1 = rho + s * np.array([bump.slope(x) for x in s])
    values = gbar - gbar[0] - (t * rho)[:, None] * slope0
    g_t = gbar_t - chi1[:, None] * slope0
    values[0] = 0.0
    g_t[0] = 0.0
    return BoundarySignal(values, g_t=g_t)


# -- admissible set -----------------------------------------------------------

def surrogate_components(g, alpha: float, grid: TimeGrid) -> np.ndarray:
    """(max |g|, ||D^alpha g||_L2, max |g_t|, ||g_tt||_L2) on the boundary."""
    v = _values(g)
    dt = grid.dt
    tw = grid.trapezoid_weights()
    c0 = float(np.max(np.linalg.norm(v, axis=1)))
    frac = caputo_derivative(v - v[0], alpha, grid)
    c1 = math.sqrt(float(np.sum(tw[:, None] * frac ** 2)))
    gt = np.diff(v, axis=0) / dt
    c2 = float(np.max(np.linalg.norm(gt, axis=1))) if gt.size else 0.0
    gtt = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / dt ** 2
    c3 = math.sqrt(dt * float(np.sum(gtt ** 2))) if gtt.size else 0.0
    return np.array([c0, c1, c2, c3])


def surrogate_xg_norm(g, alpha: float, grid: TimeGrid, weights=(1.0, 1.0, 1.0, 1.0)) -> float:
    return float(np.max(np.asarray(weights) * surrogate_components(g, alpha, grid)))


def f_norm(f, mats: FemMatrices, grid: TimeGrid) -> float:
    return math.sqrt(max(_space_time_sq(mats, grid, np.asarray(f, dtype=float)), 0.0))


def project_admissible(g, f, adm: AdmissibleSpec, alpha: float, grid: TimeGrid, mats: FemMatrices):
    """Radial retraction of g onto the surrogate ball, exact projection of f."""
    gv = _values(g)
    fv = np.asarray(f, dtype=float)
    ng = surrogate_xg_norm(gv, alpha, grid, adm.weights)
    nf = f_norm(fv, mats, grid)
    if ng > adm.L1_g:
        gv = gv * (adm.L1_g / ng)
    if nf > adm.L2_f:
        fv = fv * (adm.L2_f / nf)
    return gv, fv


# -- gradients -----------------------------------------------------------------

def adjoint_caputo_weighted(psi, alpha: float, grid: TimeGrid, D=None) -> np.ndarray:
    """diag(1/tau) D^T diag(tau) psi: transpose of the L1 matrix in the trapezoid pairing."""
    D = l1_matrix(alpha, grid) if D is None else D
    tw = grid.trapezoid_weights()
    return (D.T @ (tw[:, None] * psi)) / tw[:, None]


def reduced_gradient(g, f, p, padj, spec: ObjectiveSpec, params: PhysicsParams, mats: FemMatrices,
                     grid: TimeGrid, D=None):
    """Riesz representatives of the reduced derivative.

    grad_g = B^T (c^2 p^adj + b D~ p^adj) + gamma g and grad_f = p^adj + eta f,
    where D~ is the adjoint of the L1 Caputo matrix in the trapezoid pairing.
    """
    pa = _field(padj)
    trace = mats.trace(pa)
    grad_g = params.c ** 2 * trace
    if params.b:
        grad_g = grad_g + params.b * adjoint_caputo_weighted(trace, params.alpha, grid, D)
    if g is not None and spec.gamma:
        grad_g = grad_g + spec.gamma * _values(g)
    grad_f = pa.copy()
    if f is not None and spec.eta:
        grad_f = grad_f + spec.eta * np.asarray(f, dtype=float)
    return BoundarySignal(grad_g), grad_f


# -- reduced problem -----------------------------------------------------------

@dataclass
class ControlProblem:
    """Everything needed to evaluate j(g, f) and its gradient."""

    params: PhysicsParams
    mesh: SpaceMesh
    grid: TimeGrid
    spec: ObjectiveSpec
    adm: AdmissibleSpec
    fp_opts: FixedPointOptions = field(default_factory=lambda: FixedPointOptions(tol=1e-13))
    mats: FemMatrices | None = None

    def __post_init__(self):
        self.mats = self.mats or assemble(self.mesh)
        self._D = l1_matrix(self.params.alpha, self.grid)
        shape = (self.grid.n_nodes, self.mesh.n_nodes)
        if self.spec.target.shape != shape:
            raise PreconditionError(f"target has shape {self.spec.target.shape}, expected {shape}")

    def with_spec(self, spec: ObjectiveSpec) -> "ControlProblem":
        return ControlProblem(self.params, self.mesh, self.grid, spec, self.adm, self.fp_opts, self.mats)

    def zeros(self):
        return (np.zeros((self.grid.n_nodes, self.mesh.n_boundary)),
                np.zeros((self.grid.n_nodes, self.mesh.n_nodes)))

    def state(self, g, f, initial=None) -> StateTrajectory:
        g = g if isinstance(g, BoundarySignal) else BoundarySignal(g)
        return solve_westervelt(g, f, self.params, self.mesh, self.grid,
                                self.fp_opts, self.mats, initial=initial)

    def objective(self, g, f, state=None) -> float:
        state = state or self.state(g, f)
        return evaluate_objective(state, g, f, self.spec, self.mesh, self.mats)

    def gradient(self, g, f, state: StateTrajectory):
        data = AdjointData(state=state, target=self.spec.target, nu=self.spec.nu,
                           roi_mask=self.spec.roi_mask)
        stepper = TimeStepper.linearized_about(state, self.params, self.mesh, self.mats)
        padj, _ = discrete_adjoint(data, self.params, self.mesh, self.grid, self.mats, stepper)
        gg, gf = reduced_gradient(g, f, padj, padj, self.spec, self.params, self.mats, self.grid,
                                  self._D)
        return gg.values, gf

    def inner(self, x, y) -> float:
        tw = self.grid.trapezoid_weights()
        (g1, f1), (g2, f2) = x, y
        return (float(np.sum(tw[:, None] * g1 * g2))
                + float(np.sum(tw * np.einsum("ti,ti->t", f1, (self.mats.M @ f2.T).T))))

    def norm(self, x) -> float:
        return math.sqrt(max(self.inner(x, x), 0.0))

    def project(self, g, f):
        g = np.array(g, dtype=float)
        g[:PINNED] = 0.0
        return project_admissible(g, f, self.adm, self.params.alpha, self.grid, self.mats)


@dataclass
class OptOptions:
    max_iter: int = 200
    step0: float = 1.0
    shrink: float = 0.5
    c1: float = 1e-4
    max_backtracks: int = 30
    tol: float = 1e-9
    bb: bool = True


@dataclass
class OptState:
    g: np.ndarray
    f: np.ndarray
    j: float
    grad_g: np.ndarray
    grad_f: np.ndarray
    iteration: int = 0
    step: float = 0.0
    stationarity: float = math.inf
    history: list = field(default_factory=list)
    state: StateTrajectory | None = None
    converged: bool = False

    def history_rows(self):
        """(iterate, j, stationarity, step) per accepted iterate."""
        return [(i, j, s, st) for i, (j, s, st) in enumerate(self.history)]


def stationarity(problem: ControlProblem, g, f, grad_g, grad_f, s0: float = 1.0) -> float:
    pg, pf = problem.project(g - s0 * grad_g, f - s0 * grad_f)
    return problem.norm((pg - g, pf - f)) / s0


_TRIAL_ERRORS = (NonDegeneracyViolation, FixedPointDivergence, NumericalBlowup)


def optimize(init, problem: ControlProblem, opts: OptOptions | None = None) -> OptState:
    """Projected gradient descent with Armijo backtracking.

    Trial points are ``project(x - s grad)``; a step is accepted when
    ``j(x_s) <= j(x) + c1 <grad, x_s - x>`` and j strictly decreases.  The
    first trial step of each iteration is a Barzilai-Borwein estimate.
    """
    opts = opts or OptOptions()
    g0, f0 = init
    g, f = problem.project(_values(g0), np.asarray(f0, dtype=float))
    if problem.norm((g - _values(g0), f - np.asarray(f0, dtype=float))) > 1e-12 * max(
            1.0, problem.norm((_values(g0), np.asarray(f0, dtype=float)))):
        raise PreconditionError("initial controls are not admissible")
    state = problem.state(g, f)
    j = problem.objective(g, f, state)
    gg, gf = problem.gradient(g, f, state)
    gg[:PINNED] = 0.0
    st = OptState(g=g, f=f, j=j, grad_g=gg, grad_f=gf, state=state)
    st.stationarity = stationarity(problem, g, f, gg, gf, opts.step0)
    st.history.append((j, st.stationarity, 0.0))
    step = opts.step0
    prev = None
    for it in range(opts.max_iter):
        if st.stationarity <= opts.tol:
            st.converged = True
            break
        if opts.bb and prev is not None:
            dx = (st.g - prev[0], st.f - prev[1])
            dgr = (st.grad_g - prev[2], st.grad_f - prev[3])
            curv = problem.inner(dx, dgr)
            step = problem.inner(dx, dx) / curv if curv > 0 else 2.0 * step
            step = min(max(step, 1e-10), 1e10)
        accepted = False
        for _ in range(opts.max_backtracks):
            tg, tf = problem.project(st.g - step * st.grad_g, st.f - step * st.grad_f)
            try:
                tstate = problem.state(tg, tf, initial=st.state)
            except _TRIAL_ERRORS:
                step *= opts.shrink
                continue
            tj = problem.objective(tg, tf, tstate)
            decrease = problem.inner((st.grad_g, st.grad_f), (tg - st.g, tf - st.f))
            if tj < st.j and tj <= st.j + opts.c1 * decrease:
                accepted = True
                break
            step *= opts.shrink
        if not accepted:
            st.converged = False
            raise LineSearchStall(
                f"Armijo backtracking failed {opts.max_backtracks} times at iteration {it} "
                f"(j={st.j:.6g}, stationarity={st.stationarity:.3g})", state=st)
        prev = (st.g, st.f, st.grad_g, st.grad_f)
        gg, gf = problem.gradient(tg, tf, tstate)
        gg[:PINNED] = 0.0
        st.g, st.f, st.j, st.state = tg, tf, tj, tstate
        st.grad_g, st.grad_f = gg, gf
        st.iteration = it + 1
        st.step = step
        st.stationarity = stationarity(problem, tg, tf, gg, gf, opts.step0)
        st.history.append((tj, st.stationarity, step))
    else:
        st.converged = st.stationarity <= opts.tol
    return st
