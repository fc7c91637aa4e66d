"""Time integration of the linearized and the Westervelt wave equations.

Semi-discrete system, with P1 matrices and nodally interpolated weights::

    M_a(t) u'' + c^2 K u + b K D^alpha u + M_l u' + M_n u
        = M F + B (c^2 g + b D^alpha g)

Newmark average acceleration (beta = 1/4, gamma = 1/2) advances (u, u', u'');
the L1 sum is split into an implicit part on the current increment and an
explicit history part.  The Westervelt state equation is solved by a global
Picard iteration over whole trajectories with a = 1 - 2 k p*, l = -2 k p*_t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from .errors import (
    CompatibilityError,
    DomainError,
    FixedPointDivergence,
    NonDegeneracyViolation,
    NumericalBlowup,
    PreconditionError,
)
from .fem import (
    FemMatrices,
    SpaceMesh,
    Tridiagonal,
    assemble,
    assemble_weighted,
    is_chain,
    weighted_bands,
)
from .fractional import TimeGrid, caputo_derivative, check_order, l1_scale, l1_weights

A_LOWER = 0.1
A_UPPER = 4.0
COMPAT_TOL = 1e-12


@dataclass(frozen=True)
class PhysicsParams:
    c: float
    b: float
    alpha: float
    k: np.ndarray
    T: float
    b_max: float | None = None
    delta: float | None = None

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError(f"wave speed must be positive, got {self.c}")
        if self.b < 0:
            raise DomainError(f"attenuation must be nonnegative, got {self.b}")
        if self.b_max is not None and self.b > self.b_max:
            raise DomainError(f"attenuation {self.b} exceeds configured bound {self.b_max}")
        check_order(self.alpha)
        if not self.T > 0:
            raise DomainError("horizon must be positive")
        k = np.array(self.k, dtype=float)
        k.setflags(write=False)
        object.__setattr__(self, "k", k)

    def k_norm(self, mesh: SpaceMesh) -> float:
        """Discrete W^{1,inf} surrogate: max|k| + max|k'|."""
        if self.k.ndim == 0:
            return float(abs(self.k))
        slope = np.diff(self.k) / np.diff(mesh.coords)
        return float(np.max(np.abs(self.k)) + (np.max(np.abs(slope)) if slope.size else 0.0))

    def check_smallness(self, mesh: SpaceMesh) -> None:
        if self.delta is not None and self.k_norm(mesh) > self.delta:
            raise DomainError(
                f"nonlinearity too large: |k| = {self.k_norm(mesh):.3g} > delta = {self.delta}")

    def k_field(self, mesh: SpaceMesh) -> np.ndarray:
        return np.broadcast_to(self.k, (mesh.n_nodes,)).astype(float)


def scale_attenuation(b: float, c: float, L: float, alpha: float) -> float:
    """b / c^2 * (L / c)**(-alpha); alpha = 1 is allowed here."""
    return b / c ** 2 * (L / c) ** (-alpha)


def nondimensionalize(params: PhysicsParams, L: float, p_ref: float) -> PhysicsParams:
    """Rescale x = L x~, t = (L/c) t~, p = p_ref p~ (wave speed becomes 1)."""
    if not (L > 0 and p_ref > 0):
        raise DomainError("length and pressure scales must be positive")
    c = params.c
    return replace(
        params,
        c=1.0,
        b=scale_attenuation(params.b, c, L, params.alpha),
        k=np.asarray(params.k) * p_ref,
        T=params.T * c / L,
        b_max=None if params.b_max is None else scale_attenuation(params.b_max, c, L, params.alpha),
    )


def dimensionalize(params: PhysicsParams, c: float, L: float, p_ref: float) -> PhysicsParams:
    """Inverse of :func:`nondimensionalize` for a physical wave speed c."""
    if not (L > 0 and p_ref > 0 and c > 0):
        raise DomainError("scales must be positive")
    factor = c ** 2 * (L / c) ** params.alpha
    return replace(
        params,
        c=c,
        b=params.b * factor,
        k=np.asarray(params.k) / p_ref,
        T=params.T * L / c,
        b_max=None if params.b_max is None else params.b_max * factor,
    )


@dataclass(frozen=True)
class BoundarySignal:
    """Neumann data per boundary node, time along axis 0.

    ``g_t`` and ``frac`` optionally carry exact time derivative and Caputo
    derivative samples; otherwise they are computed from ``values``.
    """

    values: np.ndarray
    g_t: np.ndarray | None = None
    frac: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise PreconditionError("boundary signal must be (n_t, n_boundary)")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: TimeGrid, n_boundary: int) -> "BoundarySignal":
        return cls(np.zeros((grid.n_nodes, n_boundary)))

    def initial_rate(self, grid: TimeGrid) -> np.ndarray:
        if self.g_t is not None:
            return np.asarray(self.g_t[0])
        return (self.values[1] - self.values[0]) / grid.dt

    def is_compatible(self, grid: TimeGrid, tol: float = COMPAT_TOL) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.values))))
        return bool(np.all(np.abs(self.values[0]) <= tol * scale)
                    and np.all(np.abs(self.initial_rate(grid)) <= tol * scale / grid.dt))

    def caputo(self, alpha: float, grid: TimeGrid) -> np.ndarray:
        if self.frac is not None:
            return np.asarray(self.frac)
        return caputo_derivative(self.values, alpha, grid)

    def __add__(self, other):
        return BoundarySignal(self.values + other.values)

    def __mul__(self, s):
        return BoundarySignal(self.values * s)

    __rmul__ = __mul__


@dataclass
class LinearizedCoefficients:
    """Variable coefficients a, l, n and source F, each (n_t, n_nodes)."""

    a: np.ndarray
    l: np.ndarray
    n: np.ndarray
    F: np.ndarray
    g: BoundarySignal
    u1: np.ndarray

    @classmethod
    def constant(cls, mesh: SpaceMesh, grid: TimeGrid, a=1.0, l=0.0, n=0.0, F=None,
                 g=None, u1=None) -> "LinearizedCoefficients":
        shape = (grid.n_nodes, mesh.n_nodes)
        return cls(
            a=np.broadcast_to(np.asarray(a, dtype=float), shape),
            l=np.broadcast_to(np.asarray(l, dtype=float), shape),
            n=np.broadcast_to(np.asarray(n, dtype=float), shape),
            F=np.zeros(shape) if F is None else np.asarray(F, dtype=float),
            g=BoundarySignal.zeros(grid, mesh.n_boundary) if g is None else g,
            u1=np.zeros(mesh.n_nodes) if u1 is None else np.asarray(u1, dtype=float),
        )


@dataclass
class StateTrajectory:
    u: np.ndarray
    u_t: np.ndarray
    u_tt: np.ndarray
    frac: np.ndarray
    energy: np.ndarray
    grid: TimeGrid
    iterations: int = 1
    increments: list = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.u[-1]

    def contraction_ratios(self) -> np.ndarray:
        inc = np.asarray(self.increments, dtype=float)
        if inc.size < 2:
            return np.array([])
        with np.errstate(divide="ignore", invalid="ignore"):
            return inc[1:] / inc[:-1]


def _nondegeneracy(a_slice, mesh, t, bounds, max_2kp=None):
    lo, hi = bounds
    bad = (a_slice < lo) | (a_slice > hi) | ~np.isfinite(a_slice)
    if np.any(bad):
        i = int(np.argmax(np.where(bad, np.abs(a_slice - 0.5 * (lo + hi)), -np.inf)))
        raise NonDegeneracyViolation(
            f"leading coefficient {a_slice[i]:.4g} outside [{lo}, {hi}] at x={mesh.coords[i]:.4g}, t={t:.4g}",
            location=(float(mesh.coords[i]), float(t)),
            value=float(a_slice[i]),
            max_2kp=max_2kp,
        )


def _is_time_constant(arr) -> bool:
    arr = np.asarray(arr)
    return arr.strides[0] == 0 or bool(np.all(arr == arr[:1]))


class StepOperators:
    """Tridiagonal per-step operators of the Newmark/L1 scheme.

    Step n >= 1 solves ``S_n a^n = r_n - P_n v~ - Q_n u~ - b K hist_n`` with
    ``S_n = W_n + gamma P_n + beta Q_n``, where W, P, Q are the weighted mass
    matrices of a, l and (c^2 + b kappa w_0) K + M_n.  ``dP``/``dQ`` add the
    state-dependent terms when linearizing the Westervelt fixed point.
    """

    def __init__(self, a, l, n_coef, params: PhysicsParams, mesh: SpaceMesh, grid: TimeGrid,
                 mats: FemMatrices):
        if not is_chain(mesh):
            raise PreconditionError("time stepping requires a chain-ordered interval mesh")
        self.params, self.mesh, self.grid, self.mats = params, mesh, grid, mats
        dt = grid.dt
        self.beta, self.gamma = 0.25 * dt * dt, 0.5 * dt
        self.kappa = l1_scale(params.alpha, dt)
        self.w = l1_weights(params.alpha, grid.n_steps)
        self.K = mats._cache.get("K_bands")
        if self.K is None:
            self.K = mats._cache["K_bands"] = Tridiagonal.from_sparse(mats.K)
        self.Kd = self.K * (params.c ** 2 + params.b * self.kappa * self.w[0])
        self._bands = {}
        self._constant = {}
        for name, arr in (("a", a), ("l", l), ("n", n_coef)):
            arr = np.asarray(arr, dtype=float)
            const = _is_time_constant(arr)
            self._constant[name] = const
            self._bands[name] = weighted_bands(mesh, arr[:1] if const else arr)
        self.l_zero = self._constant["l"] and not np.any(self._bands["l"][0])
        self.n_zero = self._constant["n"] and not np.any(self._bands["n"][0])
        self.dP = None
        self.dQ = None
        self._cache = {}

    @property
    def time_constant(self) -> bool:
        return all(self._constant.values()) and self.dP is None and self.dQ is None

    def mass(self, name, n) -> Tridiagonal:
        d, o = self._bands[name]
        i = 0 if self._constant[name] else n
        return Tridiagonal.symmetric(d[i], o[i])

    def W(self, n):
        return self.mass("a", n)

    def P(self, n):
        P = self.mass("l", n)
        return P if self.dP is None else P + self.dP(n)

    def Q(self, n):
        Q = self.Kd if self.n_zero else self.Kd + self.mass("n", n)
        return Q if self.dQ is None else Q + self.dQ(n)

    def system(self, n):
        key = 0 if (self.time_constant and n > 0) else n
        if key not in self._cache or n == 0:
            if n == 0:
                out = (self.W(0), self.P(0), None)
            else:
                P, Q = self.P(n), self.Q(n)
                out = (self.W(n) + P * self.gamma + Q * self.beta, P, Q)
            if n == 0:
                return out
            self._cache[key] = out
        return self._cache[key]


def solve_linearized(coeffs: LinearizedCoefficients, params: PhysicsParams, mesh: SpaceMesh,
                     grid: TimeGrid, mats: FemMatrices | None = None,
                     a_bounds: tuple[float, float] = (A_LOWER, A_UPPER),
                     check_compatibility: bool = True) -> StateTrajectory:
    """Newmark/L1 integration of the linearized problem with u(0) = 0, u_t(0) = u1."""
    mats = mats or assemble(mesh)
    N, dt = grid.n_steps, grid.dt
    nn = mesh.n_nodes
    for name in ("a", "l", "n", "F"):
        arr = getattr(coeffs, name)
        if np.shape(arr) != (grid.n_nodes, nn):
            raise PreconditionError(f"coefficient {name} has shape {np.shape(arr)}")
    if check_compatibility and not coeffs.g.is_compatible(grid):
        raise CompatibilityError("boundary data must satisfy g(0) = 0 and g_t(0) = 0")
    a_field = np.asarray(coeffs.a, dtype=float)
    lo, hi = a_bounds
    bad_rows = np.flatnonzero(np.any((a_field < lo) | (a_field > hi) | ~np.isfinite(a_field), axis=1))
    first_bad = int(bad_rows[0]) if bad_rows.size else N + 1

    c2, b, alpha = params.c ** 2, params.b, params.alpha
    ops = StepOperators(a_field, coeffs.l, coeffs.n, params, mesh, grid, mats)
    kappa, w = ops.kappa, ops.w
    K = ops.K
    beta_, gamma_ = ops.beta, ops.gamma
    t = grid.nodes

    bl = c2 * coeffs.g.values
    if b:
        bl = bl + b * coeffs.g.caputo(alpha, grid)
    rhs_src = (mats.M @ np.asarray(coeffs.F).T).T + mats.boundary_load(bl)

    u = np.zeros((N + 1, nn))
    v = np.zeros((N + 1, nn))
    acc = np.zeros((N + 1, nn))
    du = np.zeros((N, nn))
    frac = np.zeros((N + 1, nn))
    energy = np.zeros(N + 1)

    if first_bad == 0:
        _nondegeneracy(a_field[0], mesh, 0.0, a_bounds)
    v[0] = coeffs.u1
    W0, P0, _ = ops.system(0)
    acc[0] = W0.solve(rhs_src[0] - P0 @ v[0])
    energy[0] = 0.5 * v[0] @ (W0 @ v[0])
    for n in range(1, N + 1):
        if n == first_bad:
            _nondegeneracy(a_field[n], mesh, t[n], a_bounds)
        u_pred = u[n - 1] + dt * v[n - 1] + beta_ * acc[n - 1]
        v_pred = v[n - 1] + gamma_ * acc[n - 1]
        # explicit part of the L1 sum: D_n u = kappa * w0 * u^n + hist
        hist = -kappa * w[0] * u[n - 1]
        if n >= 2:
            hist = hist + kappa * (w[n - 1:0:-1] @ du[:n - 1])
        S, P, Q = ops.system(n)
        rhs = rhs_src[n] - Q @ u_pred
        if not ops.l_zero:
            rhs -= P @ v_pred
        if b:
            rhs -= b * (K @ hist)
        acc[n] = S.solve(rhs)
        u[n] = u_pred + beta_ * acc[n]
        v[n] = v_pred + gamma_ * acc[n]
        du[n - 1] = u[n] - u[n - 1]
        frac[n] = kappa * w[0] * u[n] + hist
        energy[n] = 0.5 * v[n] @ (ops.W(n) @ v[n]) + 0.5 * c2 * u[n] @ (K @ u[n])
    finite = np.isfinite(acc).all(axis=1) & np.isfinite(u).all(axis=1)
    if not finite.all():
        n = int(np.argmin(finite))
        raise NumericalBlowup(f"non-finite state at step {n} (t={t[n]:.4g})", step=n)
    return StateTrajectory(u=u, u_t=v, u_tt=acc, frac=frac, energy=energy, grid=grid)


@dataclass(frozen=True)
class FixedPointOptions:
    tol: float = 1e-10
    max_iter: int = 50
    a_lower: float = A_LOWER
    a_upper: float = A_UPPER


def _l_inf_l2(mats: FemMatrices, u) -> float:
    return float(np.sqrt(np.max(np.einsum("ti,ti->t", u, (mats.M @ u.T).T))))


def solve_westervelt(g: BoundarySignal, f, params: PhysicsParams, mesh: SpaceMesh,
                     grid: TimeGrid, fp_opts: FixedPointOptions | None = None,
                     mats: FemMatrices | None = None,
                     initial: StateTrajectory | None = None) -> StateTrajectory:
    """Picard iteration p -> solve_linearized(a = 1 - 2kp, l = -2k p_t, F = f).

    ``initial`` seeds the iteration (default p = 0); the optimizer passes the
    previous state to save iterations.
    """
    opts = fp_opts or FixedPointOptions()
    params.check_smallness(mesh)
    mats = mats or assemble(mesh)
    if not g.is_compatible(grid):
        raise CompatibilityError("boundary control must satisfy g(0) = 0 and g_t(0) = 0")
    k = params.k_field(mesh)
    shape = (grid.n_nodes, mesh.n_nodes)
    f = np.zeros(shape) if f is None else np.asarray(f, dtype=float)
    zero = np.zeros(shape)
    p_u, p_v = (zero, zero) if initial is None else (initial.u, initial.u_t)
    if not np.any(k):
        p_u, p_v = zero, zero
    increments = []
    bounds = (opts.a_lower, opts.a_upper)
    for it in range(1, opts.max_iter + 1):
        two_kp = 2.0 * k * p_u
        a = 1.0 - two_kp
        if np.any(a < bounds[0]) or np.any(a > bounds[1]):
            n_bad = int(np.argmax(np.max(np.maximum(bounds[0] - a, a - bounds[1]), axis=1)))
            _nondegeneracy(a[n_bad], mesh, grid.nodes[n_bad], bounds,
                           max_2kp=float(np.max(np.abs(two_kp))))
        coeffs = LinearizedCoefficients(a=a, l=-2.0 * k * p_v, n=zero, F=f, g=g,
                                        u1=np.zeros(mesh.n_nodes))
        traj = solve_linearized(coeffs, params, mesh, grid, mats=mats, a_bounds=bounds,
                                check_compatibility=False)
        diff = _l_inf_l2(mats, traj.u - p_u)
        increments.append(diff)
        p_u, p_v = traj.u, traj.u_t
        if diff <= opts.tol * _l_inf_l2(mats, traj.u):
            a_final = 1.0 - 2.0 * k * p_u
            if np.any(a_final < bounds[0]) or np.any(a_final > bounds[1]):
                n_bad = int(np.argmax(np.max(np.maximum(bounds[0] - a_final, a_final - bounds[1]), axis=1)))
                _nondegeneracy(a_final[n_bad], mesh, grid.nodes[n_bad], bounds,
                               max_2kp=float(np.max(np.abs(2.0 * k * p_u))))
            traj.iterations = it
            traj.increments = increments
            return traj
        if not math.isfinite(diff):
            break
    raise FixedPointDivergence(
        f"Picard iteration did not reach tol={opts.tol} in {opts.max_iter} iterations",
        history=increments)


def westervelt_residual(traj: StateTrajectory, g: BoundarySignal, f, params: PhysicsParams,
                        mesh: SpaceMesh, mats: FemMatrices | None = None) -> float:
    """Relative residual of the discrete state equation at every time node.

    Evaluates M_{1-2kp} p'' - 2 M_{k p'} p' + c^2 K p + b K D^alpha p - M f - B(...)
    with (p, p', p'') the Newmark triple, scaled by the size of the load.
    """
    mats = mats or assemble(mesh)
    grid = traj.grid
    k = params.k_field(mesh)
    c2, b = params.c ** 2, params.b
    f = np.zeros_like(traj.u) if f is None else np.asarray(f)
    bl = c2 * g.values + (b * g.caputo(params.alpha, grid) if b else 0.0)
    load = (mats.M @ f.T).T + mats.boundary_load(bl)
    worst = 0.0
    for n in range(grid.n_nodes):
        r = (assemble_weighted(mesh, 1.0 - 2.0 * k * traj.u[n]) @ traj.u_tt[n]
             + assemble_weighted(mesh, -2.0 * k * traj.u_t[n]) @ traj.u_t[n]
             + c2 * (mats.K @ traj.u[n]) + b * (mats.K @ traj.frac[n]) - load[n])
        worst = max(worst, float(np.max(np.abs(r))))
    scale = max(float(np.max(np.abs(load))), 1e-300)
    return worst / scale
