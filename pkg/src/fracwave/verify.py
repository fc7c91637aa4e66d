"""Oracle suites behind ``fracwave verify``.

Each suite returns a :class:`SuiteResult` with its measured quantities and
the tolerance it was judged against.  ``tol`` overrides replace a suite's
main tolerance, which is how the harness itself is sanity-checked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .control import (
    AdmissibleSpec,
    ConditioningParams,
    ControlProblem,
    ObjectiveSpec,
    condition_boundary_data,
)
from .fem import assemble, h1_norm, interval_mesh, neumann_extension
from .forward import (
    BoundarySignal,
    FixedPointOptions,
    LinearizedCoefficients,
    PhysicsParams,
    solve_linearized,
    solve_westervelt,
)
from .fractional import (
    TimeGrid,
    adjoint_caputo,
    caputo_derivative,
    coercivity_check,
    gl_derivative_oracle,
)


@dataclass
class SuiteResult:
    suite: str
    passed: bool
    tol: float
    metrics: dict = field(default_factory=dict)

    def as_dict(self):
        return {"suite": self.suite, "passed": self.passed, "tol": self.tol, "metrics": self.metrics}


def _orders(errors):
    e = np.asarray(errors, dtype=float)
    return np.log2(e[:-1] / e[1:])


def w2inf_norm(v, dt) -> float:
    """max(|v|, |v'|, |v''|) with difference quotients."""
    v = np.asarray(v, dtype=float)
    return float(max(np.max(np.abs(v)), np.max(np.abs(np.diff(v) / dt)),
                     np.max(np.abs(np.diff(v, 2) / dt ** 2))))


def suite_frac_ops(tol=1e-12, seed=0) -> SuiteResult:
    """Caputo power rule order, GL oracle agreement and the transpose identity."""
    rng = np.random.default_rng(seed)
    alpha = 0.5
    errs = []
    for N in (64, 128, 256, 512):
        grid = TimeGrid.from_horizon(1.0, N)
        d = caputo_derivative(grid.nodes ** 2, alpha, grid)[-1]
        errs.append(abs(d - 2.0 / math.gamma(3.0 - alpha)))
    order = float(np.min(_orders(errs)))
    grid = TimeGrid.from_horizon(1.0, 128)
    t = grid.nodes
    gl_worst = 0.0
    for _ in range(5):
        a, w = rng.uniform(-1, 1, 2), rng.uniform(0.5, 3.0)
        v = a[0] * (1.0 - np.cos(w * t)) + a[1] * t ** 3
        dev = np.max(np.abs(caputo_derivative(v, alpha, grid) - gl_derivative_oracle(v, alpha, grid)))
        gl_worst = max(gl_worst, dev / (grid.dt * w2inf_norm(v, grid.dt)))
    ident = 0.0
    for _ in range(20):
        v = rng.standard_normal(grid.n_nodes)
        v[0] = 0.0
        phi = rng.standard_normal(grid.n_nodes)
        phi[-1] = 0.0
        lhs = caputo_derivative(v, alpha, grid) @ phi
        rhs = v @ adjoint_caputo(phi, alpha, grid)
        ident = max(ident, abs(lhs - rhs) / (np.linalg.norm(v) * np.linalg.norm(phi)))
    passed = order >= 2 - alpha - 0.2 and gl_worst <= 5.0 and ident <= tol
    return SuiteResult("frac-ops", bool(passed), tol,
                       {"order_t2": order, "gl_ratio": gl_worst, "transpose_identity": ident})


def suite_coercivity(tol=1e-10, seed=0) -> SuiteResult:
    rng = np.random.default_rng(seed)
    grid = TimeGrid.from_horizon(1.0, 128)
    worst = math.inf
    for _ in range(20):
        alpha = rng.uniform(0.1, 0.9)
        u = np.concatenate([[0.0], rng.standard_normal(grid.n_steps).cumsum() * grid.dt])
        rep = coercivity_check(u, alpha, grid)
        worst = min(worst, rep.nonneg / rep.scale)
    return SuiteResult("coercivity", bool(worst >= -tol), tol, {"min_relative_pairing": worst})


def suite_energy(tol=1e-6) -> SuiteResult:
    mesh = interval_mesh(40)
    grid = TimeGrid.from_horizon(2.0, 400)
    x = mesh.coords
    params = PhysicsParams(c=1.0, b=0.3, alpha=0.5, k=0.0, T=2.0)
    coeffs = LinearizedCoefficients.constant(mesh, grid, u1=np.cos(math.pi * x) + 0.5 * np.cos(3 * math.pi * x))
    E = solve_linearized(coeffs, params, mesh, grid).energy
    growth = float(np.max(E) / E[0] - 1.0)
    return SuiteResult("energy", bool(growth <= tol), tol,
                       {"max_relative_growth": growth, "final_ratio": float(E[-1] / E[0])})


def suite_extension(tol=1.9) -> SuiteResult:
    """G(1) for -G'' + G = 0 on (0,1), G'(0) = 0, G'(1) = 1."""
    errs, vals = [], []
    for n in (10, 20, 40, 80):
        mesh = interval_mesh(n)
        mats = assemble(mesh)
        G = neumann_extension(mesh, mats, np.array([0.0, 1.0]))
        exact = np.cosh(mesh.coords) / math.sinh(1.0)
        errs.append(h1_norm(mats, G - exact))
        vals.append(float(G[-1]))
    order = float(np.min(_orders(errs)))
    return SuiteResult("extension", bool(order >= tol), tol,
                       {"G1": vals[-1], "G1_exact": math.cosh(1.0) / math.sinh(1.0), "order": order})


def _mms_error(ne, N, alpha=0.5, c=1.0, b=0.5):
    mesh = interval_mesh(ne)
    grid = TimeGrid.from_horizon(1.0, N)
    x, t = mesh.coords, grid.nodes[:, None]
    F = (2 + c ** 2 * math.pi ** 2 * t ** 2
         + b * math.pi ** 2 * 2 * t ** (2 - alpha) / math.gamma(3 - alpha)) * np.cos(math.pi * x)
    params = PhysicsParams(c=c, b=b, alpha=alpha, k=0.0, T=1.0)
    traj = solve_linearized(LinearizedCoefficients.constant(mesh, grid, F=F), params, mesh, grid)
    return float(np.max(np.abs(traj.u[-1] - np.cos(math.pi * x))))


def suite_forward(tol=0.2, alpha=0.5) -> SuiteResult:
    """Manufactured solution t^2 cos(pi x); tol is the allowed order shortfall."""
    et = [_mms_error(400, N, alpha) for N in (16, 32, 64)]
    ex = [_mms_error(n, 2048, alpha) for n in (10, 20, 40)]
    ot, ox = float(np.min(_orders(et))), float(np.min(_orders(ex)))
    passed = ot >= min(2.0, 2.0 - alpha) - tol and ox >= 2.0 - tol / 2
    return SuiteResult("forward", bool(passed), tol, {"temporal_order": ot, "spatial_order": ox})


def suite_fixed_point(tol=0.5) -> SuiteResult:
    mesh = interval_mesh(20)
    grid = TimeGrid.from_horizon(1.0, 40)
    t = grid.nodes[:, None]
    f = 2.0 * np.sin(3 * t) * np.exp(-((mesh.coords - 0.5) / 0.2) ** 2)
    g = BoundarySignal.zeros(grid, mesh.n_boundary)
    lin = PhysicsParams(c=1.0, b=0.1, alpha=0.5, k=0.0, T=1.0)
    it0 = solve_westervelt(g, f, lin, mesh, grid, FixedPointOptions(tol=1e-12)).iterations
    k = 0.045 / max(1e-300, float(np.max(np.abs(solve_westervelt(g, f, lin, mesh, grid).u))))
    nl = PhysicsParams(c=1.0, b=0.1, alpha=0.5, k=k, T=1.0)
    traj = solve_westervelt(g, f, nl, mesh, grid, FixedPointOptions(tol=1e-12))
    ratio = float(np.max(traj.contraction_ratios()[:-1])) if traj.iterations > 2 else 0.0
    passed = it0 <= 2 and ratio < tol
    return SuiteResult("fixed-point", bool(passed), tol,
                       {"linear_iterations": it0, "max_contraction": ratio,
                        "max_2kp": float(np.max(np.abs(2 * k * traj.u)))})


def suite_gradient(tol=0.1) -> SuiteResult:
    mesh = interval_mesh(16)
    grid = TimeGrid.from_horizon(1.0, 32)
    x, t = mesh.coords, grid.nodes[:, None]
    params = PhysicsParams(c=1.0, b=0.2, alpha=0.6, k=0.2 * np.exp(-x), T=1.0)
    g = np.zeros((grid.n_nodes, 2))
    g[2:] = np.sin(3 * t[2:]) * t[2:] * np.array([1.0, -0.5])
    f = t * np.exp(-(x - 0.4) ** 2 / 0.05)
    hg = np.zeros_like(g)
    hg[2:] = np.cos(5 * t[2:] + np.array([0.0, 1.0])) * t[2:]
    hf = np.sin(4 * t + 2 * x)
    slopes = {}
    for nu in (0, 1):
        spec = ObjectiveSpec(0.5 * np.sin(2 * t) * np.cos(math.pi * x), nu, 1e-3, 1e-3,
                             (x < 0.6).astype(float), 1.0)
        pr = ControlProblem(params, mesh, grid, spec, AdmissibleSpec(1e6, 1e6))
        st = pr.state(g, f)
        j = pr.objective(g, f, st)
        gg, gf = pr.gradient(g, f, st)
        for name, (dg, df) in (("g", (hg, 0 * hf)), ("f", (0 * hg, hf))):
            d = pr.inner((gg, gf), (dg, df))
            eps = np.array([1e-2, 1e-3, 1e-4])
            rem = [abs(pr.objective(g + e * dg, f + e * df) - j - e * d) for e in eps]
            slopes[f"{name}_nu{nu}"] = float(np.polyfit(np.log10(eps), np.log10(rem), 1)[0])
    passed = all(abs(s - 2.0) <= tol for s in slopes.values())
    return SuiteResult("gradient", bool(passed), tol, slopes)


def suite_conditioning(tol=1e-12, seed=0) -> SuiteResult:
    rng = np.random.default_rng(seed)
    grid = TimeGrid.from_horizon(1.0, 256)
    worst = 0.0
    for _ in range(5):
        raw = rng.standard_normal((grid.n_nodes, 2)).cumsum(axis=0) * 0.1 + rng.standard_normal(2)
        out = condition_boundary_data(raw, ConditioningParams.default(grid), grid)
        worst = max(worst, float(np.max(np.abs(out.values[0]))), float(np.max(np.abs(out.g_t[0]))))
    t = grid.nodes
    smooth = np.column_stack([np.sin(2 * t) * t ** 2, t ** 3])
    errs = []
    for m in (8, 4, 2):
        out = condition_boundary_data(smooth, ConditioningParams(m * grid.dt), grid)
        errs.append(float(np.sqrt(grid.dt * np.sum((out.values - smooth) ** 2))))
    passed = worst <= tol and all(b <= a for a, b in zip(errs, errs[1:]))
    return SuiteResult("conditioning", bool(passed), tol, {"compat_residual": worst, "halving_errors": errs})


SUITES = {
    "frac-ops": suite_frac_ops,
    "coercivity": suite_coercivity,
    "energy": suite_energy,
    "extension": suite_extension,
    "forward": suite_forward,
    "fixed-point": suite_fixed_point,
    "gradient": suite_gradient,
    "conditioning": suite_conditioning,
}


def run_suites(selection=None, tols=None) -> list:
    names = list(SUITES) if not selection or selection == "all" else [selection]
    tols = tols or {}
    out = []
    for name in names:
        if name not in SUITES:
            raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
        fn = SUITES[name]
        out.append(fn(tol=tols[name]) if name in tols else fn())
    return out
