"""Turn a :class:`RunConfig` into meshes, parameters, controls and targets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .control import (
    AdmissibleSpec,
    ConditioningParams,
    ControlProblem,
    ObjectiveSpec,
    OptOptions,
    condition_boundary_data,
)
from .errors import ConfigError
from .fem import FemMatrices, SpaceMesh, assemble, interval_mesh, read_mesh
from .forward import BoundarySignal, FixedPointOptions, PhysicsParams
from .fractional import TimeGrid
from .io import read_array


@dataclass
class Scenario:
    config: RunConfig
    mesh: SpaceMesh
    grid: TimeGrid
    params: PhysicsParams
    mats: FemMatrices
    g: BoundarySignal
    f: np.ndarray
    fp_opts: FixedPointOptions

    @property
    def x(self):
        return self.mesh.coords


def _array_file(cfg: RunConfig, section, key, shape):
    arr, _ = read_array(cfg.resolve(cfg[section][key]))
    if arr.shape != shape:
        raise ConfigError(f"{section}.{key}: array has shape {arr.shape}, expected {shape}",
                          key=f"{section}.{key}")
    return arr


def build_mesh(cfg: RunConfig) -> SpaceMesh:
    m = cfg["mesh"]
    if m["file"]:
        return read_mesh(cfg.resolve(m["file"]))
    return interval_mesh(m["n_elements"], m["a"], m["b"])


def build_params(cfg: RunConfig, mesh: SpaceMesh) -> PhysicsParams:
    p = cfg["physics"]
    x0 = mesh.extent[0]
    k = p["k"] * np.exp(-p["k_decay"] * (mesh.coords - x0))
    return PhysicsParams(
        c=p["c"], b=p["b"], alpha=p["alpha"], k=k, T=p["T"],
        b_max=None if math.isinf(p["b_max"]) else p["b_max"],
        delta=None if math.isinf(p["delta"]) else p["delta"],
    )


def build_boundary(cfg: RunConfig, mesh: SpaceMesh, grid: TimeGrid) -> BoundarySignal:
    s = cfg["boundary"]
    t = grid.nodes[:, None]
    shape = (grid.n_nodes, mesh.n_boundary)
    if s["profile"] == "zero":
        return BoundarySignal(np.zeros(shape))
    if s["profile"] == "sine":
        raw = s["amplitude"] * np.sin(2.0 * math.pi * s["frequency"] * t) * np.ones(shape)
    elif s["profile"] == "ramp":
        raw = s["amplitude"] * t * np.ones(shape)
    else:
        raw = _array_file(cfg, "boundary", "file", shape)
    if not s["condition"]:
        return BoundarySignal(raw)
    cond = ConditioningParams(eps=s["eps_steps"] * grid.dt, r=s["bump_r"], R=s["bump_R"])
    return condition_boundary_data(raw, cond, grid)


def build_source(cfg: RunConfig, mesh: SpaceMesh, grid: TimeGrid) -> np.ndarray:
    s = cfg["source"]
    shape = (grid.n_nodes, mesh.n_nodes)
    if s["profile"] == "zero":
        return np.zeros(shape)
    if s["profile"] == "file":
        return _array_file(cfg, "source", "file", shape)
    t = grid.nodes[:, None]
    x = mesh.coords[None, :]
    return (s["amplitude"] * np.sin(2.0 * math.pi * s["frequency"] * t)
            * np.exp(-((x - s["center"]) / s["width"]) ** 2))


def build_scenario(cfg: RunConfig) -> Scenario:
    cfg.check_files()
    mesh = build_mesh(cfg)
    grid = TimeGrid.from_horizon(cfg["physics"]["T"], cfg["time"]["n_steps"])
    sv = cfg["solver"]
    fp = FixedPointOptions(tol=sv["fp_tol"], max_iter=sv["fp_max_iter"],
                           a_lower=sv["a_lower"], a_upper=sv["a_upper"])
    return Scenario(cfg, mesh, grid, build_params(cfg, mesh), assemble(mesh),
                    build_boundary(cfg, mesh, grid), build_source(cfg, mesh, grid), fp)


def build_problem(sc: Scenario) -> ControlProblem:
    """Control problem; an ``attainable`` target is the state of the configured controls."""
    cfg = sc.config
    o = cfg["objective"]
    lo, hi = o["roi"]
    roi = ((sc.x >= lo) & (sc.x <= hi)).astype(float)
    shape = (sc.grid.n_nodes, sc.mesh.n_nodes)
    spec = ObjectiveSpec(np.zeros(shape), o["nu"], o["gamma"], o["eta"], roi, sc.params.T)
    adm = AdmissibleSpec(cfg["admissible"]["L1_g"], cfg["admissible"]["L2_f"])
    problem = ControlProblem(sc.params, sc.mesh, sc.grid, spec, adm, sc.fp_opts, sc.mats)
    if o["target"] == "attainable":
        target = problem.state(sc.g, sc.f).u
    elif o["target"] == "file":
        target = _array_file(cfg, "objective", "target_file", shape)
    else:
        return problem
    return problem.with_spec(spec.with_weights(target=target))


def optimizer_options(cfg: RunConfig) -> OptOptions:
    o = cfg["optimizer"]
    return OptOptions(max_iter=o["max_iter"], step0=o["step0"], shrink=o["shrink"], c1=o["c1"],
                      max_backtracks=o["max_backtracks"], tol=o["tol"])


def manufactured_case(params: PhysicsParams, mesh: SpaceMesh, grid: TimeGrid):
    """Source f and exact state for p*(x, t) = t^2 cos(pi (x - a) / L).

    p* has zero normal derivative at both ends, so g = 0; the source absorbs
    the Westervelt nonlinearity (1 - 2kp) p_tt - 2k p_t^2.
    """
    a, b = mesh.extent
    w = math.pi / (b - a)
    cosx = np.cos(w * (mesh.coords - a))[None, :]
    t = grid.nodes[:, None]
    k = params.k_field(mesh)[None, :]
    al = params.alpha
    p = t ** 2 * cosx
    p_t = 2.0 * t * cosx
    p_tt = 2.0 * cosx
    frac = 2.0 * t ** (2.0 - al) / math.gamma(3.0 - al) * cosx
    f = ((1.0 - 2.0 * k * p) * p_tt - 2.0 * k * p_t ** 2
         + params.c ** 2 * w ** 2 * p + params.b * w ** 2 * frac)
    return f, p
