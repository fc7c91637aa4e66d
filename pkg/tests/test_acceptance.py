"""Acceptance criteria 1-12 at their stated tolerances.

Every criterion records one PASS/FAIL line; the lines are printed in the
pytest terminal summary (see conftest.py) and when this file is run directly.
Oracles are computed here, independently of the package's verify suites.
"""

import filecmp
import math
import sys
from pathlib import Path

import numpy as np
import pytest

from fracwave.cli import main as cli_main
from fracwave.control import (
    PINNED,
    AdmissibleSpec,
    ConditioningParams,
    ControlProblem,
    ObjectiveSpec,
    OptOptions,
    condition_boundary_data,
    optimize,
    tracking_error,
)
from fracwave.errors import NonDegeneracyViolation
from fracwave.fem import assemble, h1_norm, interval_mesh, neumann_extension
from fracwave.forward import (
    BoundarySignal,
    FixedPointOptions,
    LinearizedCoefficients,
    PhysicsParams,
    solve_linearized,
    solve_westervelt,
)
from fracwave.fractional import (
    TimeGrid,
    adjoint_caputo,
    caputo_derivative,
    coercivity_check,
    gl_derivative_oracle,
)
from fracwave.studies import run_vanishing_regularization_study

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
RESULTS = {}


def record(n, name, passed, detail):
    line = f"criterion {n:2d} {'PASS' if passed else 'FAIL'}  {name}: {detail}"
    RESULTS[n] = line
    print(line)
    return passed


def orders(errors):
    e = np.asarray(errors, dtype=float)
    return np.log2(e[:-1] / e[1:])


# 1 ------------------------------------------------------------------------------

def criterion_1():
    dts = [64, 128, 256, 512, 1024]
    ok, parts = True, []
    for alpha in (0.3, 0.5, 0.7):
        exact_t = 1.0 / math.gamma(2 - alpha)
        exact_t2 = 2.0 / math.gamma(3 - alpha)
        e_t, e_t2 = [], []
        for N in dts:
            grid = TimeGrid.from_horizon(1.0, N)
            e_t.append(abs(caputo_derivative(grid.nodes, alpha, grid)[-1] - exact_t))
            e_t2.append(abs(caputo_derivative(grid.nodes ** 2, alpha, grid)[-1] - exact_t2))
        need = 2 - alpha - 0.2
        # L1 is exact on t: the order clause holds trivially once errors sit at round-off
        t_ok = max(e_t) < 1e-13 or np.min(orders(e_t)) >= need
        o2 = float(np.min(orders(e_t2)))
        ok &= t_ok and o2 >= need and e_t[-1] < 1e-4 and e_t2[-1] < 1e-4
        parts.append(f"a={alpha}: max err(t)={max(e_t):.1e}, order(t^2)={o2:.2f}>={need:.1f}")
    return record(1, "Caputo power rule", ok, "; ".join(parts))


# 2 ------------------------------------------------------------------------------

def random_compatible_series(rng, t):
    """Smooth series with v(0) = v'(0) = 0 and its exact W^{2,inf} norm on a fine grid."""
    a, b, c = rng.uniform(-1, 1, 3)
    w1, w2 = rng.uniform(0.5, 4.0, 2)
    v = lambda s: a * (1 - np.cos(w1 * s)) + b * s ** 3 + c * s ** 2 * np.sin(w2 * s)
    dv = lambda s: a * w1 * np.sin(w1 * s) + 3 * b * s ** 2 + c * (2 * s * np.sin(w2 * s) + w2 * s ** 2 * np.cos(w2 * s))
    ddv = lambda s: (a * w1 ** 2 * np.cos(w1 * s) + 6 * b * s
                     + c * (2 * np.sin(w2 * s) + 4 * w2 * s * np.cos(w2 * s) - w2 ** 2 * s ** 2 * np.sin(w2 * s)))
    fine = np.linspace(0, t[-1], 20001)
    norm = max(np.max(np.abs(v(fine))), np.max(np.abs(dv(fine))), np.max(np.abs(ddv(fine))))
    return v(t), norm


def criterion_2():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for i in range(20):
        alpha = (0.3, 0.5, 0.7)[i % 3]
        for N in (64, 256, 1024):
            grid = TimeGrid.from_horizon(1.0, N)
            v, norm = random_compatible_series(rng, grid.nodes)
            dev = np.max(np.abs(caputo_derivative(v, alpha, grid) - gl_derivative_oracle(v, alpha, grid)))
            worst = max(worst, dev / (grid.dt * norm))
    return record(2, "L1 vs Grunwald-Letnikov", worst <= 5.0,
                  f"max dev/(dt ||v||_W2inf) = {worst:.3f} <= 5 over 20 series x 3 dt")


# 3 ------------------------------------------------------------------------------

def criterion_3():
    rng = np.random.default_rng(3)
    worst_pair, worst_flip = 0.0, 0.0
    for i in range(100):
        alpha = rng.uniform(0.05, 0.95)
        grid = TimeGrid.from_horizon(rng.uniform(0.5, 2.0), int(rng.integers(8, 200)))
        v = rng.standard_normal(grid.n_nodes)
        v[0] = 0.0
        phi = rng.standard_normal(grid.n_nodes)
        phi[-1] = 0.0
        lhs = grid.dt * caputo_derivative(v, alpha, grid) @ phi
        rhs = grid.dt * v @ adjoint_caputo(phi, alpha, grid)
        scale = grid.dt * np.linalg.norm(v) * np.linalg.norm(phi)
        worst_pair = max(worst_pair, abs(lhs - rhs) / scale)
        # time flip: the adjoint of phi is the reversed Caputo derivative of the reversed phi
        flip = caputo_derivative(phi[::-1], alpha, grid)[::-1]
        out = adjoint_caputo(phi, alpha, grid)
        worst_flip = max(worst_flip, np.max(np.abs(out - flip)) / max(np.max(np.abs(flip)), 1e-300))
    ok = worst_pair <= 1e-12 and worst_flip <= 1e-14
    return record(3, "Adjoint transpose identity", ok,
                  f"pairing {worst_pair:.1e} <= 1e-12, time flip {worst_flip:.1e} <= 1e-14 (100 pairs)")


# 4 ------------------------------------------------------------------------------

def criterion_4():
    rng = np.random.default_rng(4)
    grid = TimeGrid.from_horizon(1.0, 200)
    t = grid.nodes
    worst = math.inf
    for _ in range(100):
        alpha = rng.uniform(0.05, 0.95)
        a = rng.standard_normal(4)
        w = rng.uniform(0.5, 8.0, 2)
        u = a[0] * np.sin(w[0] * t) + a[1] * t * np.cos(w[1] * t) + a[2] * t ** 2 + a[3] * (np.exp(-t) - 1)
        rep = coercivity_check(u, alpha, grid)
        norm2 = float(grid.trapezoid_weights() @ u ** 2)
        worst = min(worst, rep.nonneg / max(norm2, 1e-300))
    mesh = interval_mesh(50)
    egrid = TimeGrid.from_horizon(2.0, 500)
    growth = 0.0
    for alpha, b in ((0.3, 0.1), (0.5, 0.5), (0.8, 2.0)):
        params = PhysicsParams(c=1.0, b=b, alpha=alpha, k=0.0, T=2.0)
        u1 = np.cos(math.pi * mesh.coords) + 0.3 * np.cos(4 * math.pi * mesh.coords)
        E = solve_linearized(LinearizedCoefficients.constant(mesh, egrid, u1=u1), params, mesh, egrid).energy
        growth = max(growth, float(np.max(E) / E[0] - 1))
    ok = worst >= -1e-10 and growth <= 1e-6
    return record(4, "Nonnegativity and energy", ok,
                  f"min pairing/||u||^2 = {worst:.2e} >= -1e-10, max E/E0 - 1 = {growth:.1e} <= 1e-6")


# 5 ------------------------------------------------------------------------------

def criterion_5():
    errs, tip = [], None
    exact1 = math.cosh(1) / math.sinh(1)
    for n in (10, 20, 40, 80, 160):
        mesh = interval_mesh(n)
        mats = assemble(mesh)
        G = neumann_extension(mesh, mats, np.array([0.0, 1.0]))
        errs.append(h1_norm(mats, G - np.cosh(mesh.coords) / math.sinh(1)))
        tip = G[-1]
    o = float(np.min(orders(errs)))
    ok = o >= 1.9 and abs(exact1 - 1.313035) < 1e-6 and abs(tip - exact1) < 1e-4
    return record(5, "Neumann extension", ok, f"G(1) = {tip:.6f} (exact {exact1:.6f}), H1 order {o:.2f} >= 1.9")


# 6 ------------------------------------------------------------------------------

def mms_final_error(ne, N, alpha=0.5, c=1.0, b=0.5):
    mesh = interval_mesh(ne)
    grid = TimeGrid.from_horizon(1.0, N)
    x, t = mesh.coords, grid.nodes[:, None]
    cx = np.cos(math.pi * x)
    F = (2 + c ** 2 * math.pi ** 2 * t ** 2 + b * math.pi ** 2 * 2 * t ** (2 - alpha) / math.gamma(3 - alpha)) * cx
    params = PhysicsParams(c=c, b=b, alpha=alpha, k=0.0, T=1.0)
    traj = solve_linearized(LinearizedCoefficients.constant(mesh, grid, F=F), params, mesh, grid)
    return float(np.max(np.abs(traj.u[-1] - cx)))


def criterion_6():
    alpha = 0.5
    ot = float(np.min(orders([mms_final_error(400, N, alpha) for N in (16, 32, 64)])))
    ox = float(np.min(orders([mms_final_error(n, 4096, alpha) for n in (10, 20, 40)])))
    fine = mms_final_error(200, 1024, alpha)
    ok = ot >= min(2.0, 2.0 - alpha) - 0.2 and ox >= 1.9 and fine < 1e-3
    return record(6, "Manufactured forward solution", ok,
                  f"temporal order {ot:.2f} >= {min(2, 2 - alpha) - 0.2:.1f}, spatial order {ox:.2f} >= 1.9, "
                  f"L_inf error at (1/200, 1/1024) = {fine:.1e} < 1e-3")


# 7 ------------------------------------------------------------------------------

def criterion_7():
    mesh = interval_mesh(40)
    grid = TimeGrid.from_horizon(1.0, 100)
    t = grid.nodes[:, None]
    shape = np.sin(3 * t) * np.exp(-((mesh.coords - 0.5) / 0.15) ** 2)
    g = BoundarySignal.zeros(grid, 2)
    opts = FixedPointOptions(tol=1e-12, max_iter=200)
    lin = PhysicsParams(c=1.0, b=0.1, alpha=0.5, k=0.0, T=1.0)
    it0 = solve_westervelt(g, shape, lin, mesh, grid, opts).iterations
    pmax = float(np.max(np.abs(solve_westervelt(g, shape, lin, mesh, grid).u)))
    k = 1.0 / pmax
    params = PhysicsParams(c=1.0, b=0.1, alpha=0.5, k=k, T=1.0)
    # contraction in the small-nonlinearity regime
    small = solve_westervelt(g, 0.04 * shape, params, mesh, grid, opts)
    small_2kp = float(np.max(np.abs(2 * k * small.u)))
    ratio = float(np.max(small.contraction_ratios()[:-1]))
    # amplitude ramp until the solver refuses
    raised, nan_seen, last_ok, reported = False, False, 0.0, None
    for amp in np.arange(0.02, 1.0, 0.02):
        try:
            tr = solve_westervelt(g, amp * shape, params, mesh, grid, opts)
        except NonDegeneracyViolation as exc:
            raised, reported = True, exc.max_2kp
            break
        nan_seen |= not np.all(np.isfinite(tr.u))
        last_ok = float(np.max(np.abs(2 * k * tr.u)))
    ok = (it0 <= 2 and small_2kp <= 0.1 and ratio < 0.5 and raised and not nan_seen
          and reported is not None and reported >= 0.9)
    return record(7, "Fixed-point behaviour", ok,
                  f"k=0: {it0} iterations; max|2kp|={small_2kp:.3f}: ratio {ratio:.3f} < 0.5; "
                  f"ramp: last solved max|2kp|={last_ok:.2f}, violation at {reported if reported is None else round(reported, 2)}, "
                  f"NaN seen: {nan_seen}")


# 8 ------------------------------------------------------------------------------

def taylor_slopes(ne, N):
    mesh = interval_mesh(ne)
    grid = TimeGrid.from_horizon(1.0, N)
    x, t = mesh.coords, grid.nodes[:, None]
    params = PhysicsParams(c=1.0, b=0.3, alpha=0.6, k=0.2 * np.exp(-x), T=1.0)
    g = np.zeros((grid.n_nodes, 2))
    g[PINNED:] = np.sin(3 * t[PINNED:]) * t[PINNED:] * np.array([1.0, -0.5])
    f = t * np.exp(-(x - 0.4) ** 2 / 0.05)
    dg = np.zeros_like(g)
    dg[PINNED:] = np.cos(5 * t[PINNED:] + np.array([0.0, 1.0])) * t[PINNED:]
    df = np.sin(4 * t + 2 * x)
    out = {}
    for nu in (0, 1):
        spec = ObjectiveSpec(0.5 * np.sin(2 * t) * np.cos(math.pi * x), nu, 1e-3, 1e-3,
                             (x < 0.6).astype(float), 1.0)
        pr = ControlProblem(params, mesh, grid, spec, AdmissibleSpec(1e6, 1e6))
        st = pr.state(g, f)
        j = pr.objective(g, f, st)
        grad = pr.gradient(g, f, st)
        for name, d in (("g", (dg, 0 * df)), ("f", (0 * dg, df))):
            dj = pr.inner(grad, d)
            eps = np.array([1e-2, 3e-3, 1e-3, 3e-4, 1e-4])
            rem = [abs(pr.objective(g + e * d[0], f + e * d[1]) - j - e * dj) for e in eps]
            out[f"{name},nu={nu}"] = float(np.polyfit(np.log10(eps), np.log10(rem), 1)[0])
    return out


def criterion_8():
    slopes = {}
    for ne, N in ((16, 32), (32, 64)):
        for key, s in taylor_slopes(ne, N).items():
            slopes[f"{key},h=1/{ne}"] = s
    ok = all(abs(s - 2.0) <= 0.1 for s in slopes.values())
    lo, hi = min(slopes.values()), max(slopes.values())
    return record(8, "Gradient Taylor test", ok, f"{len(slopes)} slopes in [{lo:.3f}, {hi:.3f}], need 2.0 +- 0.1")


# 9 and 10 -------------------------------------------------------------------------

def attainable_problem():
    mesh = interval_mesh(16)
    grid = TimeGrid.from_horizon(1.0, 30)
    x, t = mesh.coords, grid.nodes[:, None]
    params = PhysicsParams(c=1.0, b=0.2, alpha=0.6, k=0.2 * np.exp(-x), T=1.0)
    g_true = np.zeros((grid.n_nodes, 2))
    g_true[PINNED:] = 0.5 * t[PINNED:] ** 2 * np.array([1.0, 0.6])
    f_true = np.sin(3 * t) * np.exp(-((x - 0.4) / 0.2) ** 2)
    spec = ObjectiveSpec(np.zeros((grid.n_nodes, mesh.n_nodes)), 1, 1e-6, 1e-6, np.ones(mesh.n_nodes), 1.0)
    pr = ControlProblem(params, mesh, grid, spec, AdmissibleSpec(1e6, 1e6))
    return pr, g_true, f_true


def criterion_9():
    pr, g_true, f_true = attainable_problem()
    pr = pr.with_spec(pr.spec.with_weights(target=pr.state(g_true, f_true).u))
    st = optimize(pr.zeros(), pr, OptOptions(max_iter=200))
    start = tracking_error(np.zeros_like(pr.spec.target), pr.spec, pr.mesh)
    end = tracking_error(st.state, pr.spec, pr.mesh)
    js = [h[0] for h in st.history]
    strict = all(b < a for a, b in zip(js, js[1:]))
    ok = end < 0.1 * start and st.iteration <= 200 and strict
    return record(9, "Attainable-target optimization", ok,
                  f"residual {end / start:.2%} of initial after {st.iteration} iterations, "
                  f"j strictly decreasing: {strict}")


def criterion_10():
    pr, g_true, f_true = attainable_problem()
    gammas = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
    rep = run_vanishing_regularization_study(pr, g_true, f_true, gammas, opts=OptOptions(max_iter=200))
    errs = [r[1] for r in rep.rows]
    mono = all(b <= 1.05 * a for a, b in zip(errs, errs[1:]))
    return record(10, "Vanishing-regularization ladder", mono and rep.passed,
                  "tracking errors " + ", ".join(f"{e:.2e}" for e in errs))


# 11 -------------------------------------------------------------------------------

def criterion_11():
    rng = np.random.default_rng(11)
    grid = TimeGrid.from_horizon(1.0, 256)
    worst = 0.0
    for _ in range(20):
        raw = rng.standard_normal((grid.n_nodes, 2)).cumsum(axis=0) * 0.1 + rng.standard_normal(2) * 3
        out = condition_boundary_data(raw, ConditioningParams.default(grid), grid)
        worst = max(worst, float(np.max(np.abs(out.values[0]))), float(np.max(np.abs(out.g_t[0]))))
    t = grid.nodes
    compatible = np.column_stack([t ** 2 * np.sin(2 * t), t ** 3 - t ** 2])
    errs = []
    for m in (16, 8, 4, 2):
        out = condition_boundary_data(compatible, ConditioningParams(m * grid.dt), grid)
        errs.append(float(np.sqrt(grid.dt * np.sum((out.values - compatible) ** 2))))
    mono = all(b <= a for a, b in zip(errs, errs[1:]))
    return record(11, "Compatibility conditioning", worst <= 1e-12 and mono,
                  f"max |g(0)|, |g_t(0)| = {worst:.1e} <= 1e-12; eps-halving errors "
                  + ", ".join(f"{e:.1e}" for e in errs))


# 12 -------------------------------------------------------------------------------

def criterion_12(tmp: Path):
    same = []
    for cmd, cfg in (("simulate", "simulate.ini"), ("optimize", "optimize.ini")):
        runs = []
        for i in (1, 2):
            out = tmp / f"{cmd}{i}"
            rc = cli_main([cmd, "--config", str(CONFIGS / cfg), "--out", str(out), "--seed", "7"])
            runs.append((rc, out / "manifest.json"))
        ok = all(rc == 0 for rc, _ in runs) and filecmp.cmp(runs[0][1], runs[1][1], shallow=False)
        same.append((cmd, ok))
    ok = all(s for _, s in same)
    return record(12, "Reproducibility", ok, ", ".join(f"{c}: manifests identical={s}" for c, s in same))


# -- pytest entry points ---------------------------------------------------------------

@pytest.mark.parametrize("n", range(1, 12))
def test_criterion(n):
    assert globals()[f"criterion_{n}"]()


def test_criterion_12(tmp_path):
    assert criterion_12(tmp_path)


if __name__ == "__main__":
    import tempfile

    results = [globals()[f"criterion_{n}"]() for n in range(1, 12)]
    with tempfile.TemporaryDirectory() as d:
        results.append(criterion_12(Path(d)))
    sys.exit(0 if all(results) else 1)
