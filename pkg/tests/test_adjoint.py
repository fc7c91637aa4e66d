import math

import numpy as np
import pytest

from fracwave.adjoint import AdjointData, TimeStepper, discrete_adjoint, solve_adjoint
from fracwave.errors import PreconditionError
from fracwave.fem import assemble, interval_mesh
from fracwave.forward import BoundarySignal, FixedPointOptions, PhysicsParams, solve_westervelt
from fracwave.fractional import TimeGrid


def setup(ne=20, N=40, **kw):
    mesh = interval_mesh(ne)
    grid = TimeGrid.from_horizon(1.0, N)
    p = dict(c=1.0, b=0.0, alpha=0.5, k=0.0, T=1.0)
    p.update(kw)
    return mesh, grid, PhysicsParams(**p)


def state_of(mesh, grid, params, amp=1.0):
    t = grid.nodes[:, None]
    f = amp * np.sin(3 * t) * np.exp(-((mesh.coords - 0.4) / 0.2) ** 2)
    return solve_westervelt(BoundarySignal.zeros(grid, 2), f, params, mesh, grid)


def test_exact_tracking_gives_zero_adjoint():
    mesh, grid, params = setup(b=0.3, k=0.2)
    st = state_of(mesh, grid, params)
    ones = np.ones(mesh.n_nodes)
    adj = solve_adjoint(AdjointData(st, st.u.copy(), 1, ones), params, mesh, grid)
    assert np.all(adj.u == 0)
    target = np.zeros_like(st.u)
    target[-1] = st.u[-1]
    adj = solve_adjoint(AdjointData(st, target, 0, ones), params, mesh, grid)
    assert np.all(adj.u == 0)
    padj, _ = discrete_adjoint(AdjointData(st, target, 0, ones), params, mesh, grid)
    assert np.all(padj == 0)


def test_empty_region_gives_zero_adjoint():
    mesh, grid, params = setup(k=0.2)
    st = state_of(mesh, grid, params)
    data = AdjointData(st, np.zeros_like(st.u), 1, np.zeros(mesh.n_nodes))
    assert np.all(solve_adjoint(data, params, mesh, grid).u == 0)
    assert np.all(discrete_adjoint(data, params, mesh, grid)[0] == 0)


def test_adjoint_data_validation():
    mesh, grid, params = setup()
    st = state_of(mesh, grid, params)
    with pytest.raises(PreconditionError):
        AdjointData(st, np.zeros_like(st.u), 2, np.ones(mesh.n_nodes))
    with pytest.raises(PreconditionError):
        AdjointData(st, np.zeros_like(st.u), 1, 0.5 * np.ones(mesh.n_nodes))
    with pytest.raises(PreconditionError):
        AdjointData(st, np.zeros((3, 3)), 1, np.ones(mesh.n_nodes))
    other = TimeGrid.from_horizon(1.0, 20)
    with pytest.raises(PreconditionError):
        solve_adjoint(AdjointData(st, np.zeros_like(st.u), 1, np.ones(mesh.n_nodes)), params, mesh, other)


def test_single_mode_tracking_oracle():
    # p = 0, p^d = -cos(pi x): the adjoint is y(T - t) cos(pi x) with y'' + pi^2 y = 1, y(0) = y'(0) = 0
    errs = []
    for lev in range(3):
        mesh, grid, params = setup(ne=20 * 2 ** lev, N=40 * 2 ** lev)
        cx = np.cos(math.pi * mesh.coords)
        st = solve_westervelt(BoundarySignal.zeros(grid, 2), None, params, mesh, grid)
        target = -np.ones((grid.n_nodes, 1)) * cx
        adj = solve_adjoint(AdjointData(st, target, 1, np.ones(mesh.n_nodes)), params, mesh, grid)
        s = (grid.T - grid.nodes)[:, None]
        exact = (1 - np.cos(math.pi * s)) / math.pi ** 2 * cx
        errs.append(np.max(np.abs(adj.u - exact)))
    assert errs[-1] < 1e-3
    assert errs[2] < errs[1] < errs[0]


def test_terminal_mismatch_oracle():
    # nu = 0: p^adj(T) = 0 and the reversed velocity starts at the final mismatch,
    # so the adjoint is sin(pi (T - t)) / pi * cos(pi x)
    mesh, grid, params = setup(ne=80, N=320)
    cx = np.cos(math.pi * mesh.coords)
    st = solve_westervelt(BoundarySignal.zeros(grid, 2), None, params, mesh, grid)
    target = -np.ones((grid.n_nodes, 1)) * cx
    adj = solve_adjoint(AdjointData(st, target, 0, np.ones(mesh.n_nodes)), params, mesh, grid)
    assert np.all(adj.u[-1] == 0)
    s = (grid.T - grid.nodes)[:, None]
    np.testing.assert_allclose(adj.u, np.sin(math.pi * s) / math.pi * cx, atol=2e-3)


@pytest.mark.parametrize("b", [0.0, 0.4])
def test_transpose_sweep_dot_product(b):
    mesh, grid, params = setup(ne=12, N=24, b=b, k=0.3 * np.exp(-interval_mesh(12).coords))
    mats = assemble(mesh)
    st = state_of(mesh, grid, params)
    stepper = TimeStepper.linearized_about(st, params, mesh, mats)
    rng = np.random.default_rng(3)
    rhs = rng.standard_normal(st.u.shape)
    seed = rng.standard_normal(st.u.shape)
    u, _, _ = stepper.forward(rhs)
    rbar = stepper.adjoint(seed)
    lhs, rhs_ = np.sum(seed * u), np.sum(rbar * rhs)
    assert abs(lhs - rhs_) <= 1e-11 * (abs(lhs) + abs(rhs_))


def test_tangent_matches_finite_difference_of_state():
    mesh, grid, params = setup(ne=12, N=24, b=0.2, k=0.3)
    mats = assemble(mesh)
    t = grid.nodes[:, None]
    f = np.sin(3 * t) * np.exp(-((mesh.coords - 0.4) / 0.2) ** 2)
    df = np.cos(2 * t + mesh.coords)
    opts = FixedPointOptions(tol=1e-14)
    solve = lambda ff: solve_westervelt(BoundarySignal.zeros(grid, 2), ff, params, mesh, grid, opts, mats)
    st = solve(f)
    stepper = TimeStepper.linearized_about(st, params, mesh, mats)
    du, _, _ = stepper.forward((mats.M @ df.T).T)
    e = 1e-6
    fd = (solve(f + e * df).u - solve(f - e * df).u) / (2 * e)
    np.testing.assert_allclose(du, fd, atol=1e-7 * np.max(np.abs(fd)))
