"""Command-line entry point: ``fracwave simulate|optimize|verify``.

Exit codes: 0 success, 1 failed verification, 2 configuration or input
error, 3 solver error (non-degeneracy, divergence, line-search stall).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from .config import load_config
from .control import optimize, tracking_error
from .errors import ConfigError, FracwaveError
from .fem import interval_mesh
from .forward import BoundarySignal, solve_westervelt
from .fractional import TimeGrid
from .scenario import build_params, build_problem, build_scenario, manufactured_case, optimizer_options
from .studies import run_target_perturbation_study, run_vanishing_regularization_study
from .verify import SUITES, run_suites

log = logging.getLogger("fracwave")

EXIT_VERIFY, EXIT_CONFIG, EXIT_SOLVER = 1, 2, 3


class Bundle:
    """Collects artifact files in an output directory and writes the manifest."""

    def __init__(self, out: Path, grid: TimeGrid, h: float, alpha: float):
        self.out = out
        self.out.mkdir(parents=True, exist_ok=True)
        self.grid, self.h, self.alpha = grid, h, alpha
        self.files = []

    def array(self, name, arr):
        self.files.append(fio.write_array(self.out / name, arr, self.grid.dt, self.h, self.alpha))

    def csv(self, name, columns, rows):
        self.files.append(fio.write_csv(self.out / name, columns, rows))

    def text(self, name, body):
        p = self.out / name
        p.write_text(body)
        self.files.append(p)

    def close(self, meta) -> Path:
        return fio.write_manifest(self.out, self.files, meta)


def _kv(pairs) -> str:
    return "".join(f"{k} = {v!r}\n" if isinstance(v, float) else f"{k} = {v}\n" for k, v in pairs)


def _config(args):
    if not args.config:
        raise ConfigError("--config is required for this command", key="--config")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(run={"seed": args.seed})
    return cfg


def cmd_simulate(args) -> int:
    cfg = _config(args)
    sc = build_scenario(cfg)
    out = Bundle(Path(args.out), sc.grid, sc.mesh.h, sc.params.alpha)
    out.text("config.ini", cfg.to_ini())
    if cfg["simulate"]["mode"] == "manufactured":
        # uniform refinement of the configured extent, halving h and dt per level
        rows = []
        ne, N = sc.mesh.n_nodes - 1, sc.grid.n_steps
        a, b = sc.mesh.extent
        for level in range(cfg["simulate"]["levels"]):
            mesh = interval_mesh(ne * 2 ** level, a, b)
            grid = TimeGrid.from_horizon(sc.params.T, N * 2 ** level)
            params = build_params(cfg, mesh)
            f, exact = manufactured_case(params, mesh, grid)
            traj = solve_westervelt(BoundarySignal.zeros(grid, mesh.n_boundary), f, params, mesh,
                                    grid, sc.fp_opts)
            err = float(np.max(np.abs(traj.u[-1] - exact[-1])))
            rows.append((mesh.n_nodes - 1, grid.n_steps, mesh.h, grid.dt, err))
            log.info("level %d: h=%.4g dt=%.4g error=%.3e", level, mesh.h, grid.dt, err)
        out.csv("mms.csv", ("n_elements", "n_steps", "h", "dt", "linf_error"), rows)
    else:
        traj = solve_westervelt(sc.g, sc.f, sc.params, sc.mesh, sc.grid, sc.fp_opts, sc.mats)
        two_kp = 2.0 * sc.params.k_field(sc.mesh) * traj.u
        out.array("pressure.bin", traj.u)
        out.array("velocity.bin", traj.u_t)
        out.array("boundary.bin", sc.g.values)
        out.csv("energy.csv", ("step", "t", "energy"),
                [(n, float(t), float(e)) for n, (t, e) in enumerate(zip(sc.grid.nodes, traj.energy))])
        out.text("nondegeneracy.txt", _kv([
            ("min_leading_coefficient", float(np.min(1.0 - two_kp))),
            ("max_leading_coefficient", float(np.max(1.0 - two_kp))),
            ("max_abs_2kp", float(np.max(np.abs(two_kp)))),
            ("bounds", f"[{sc.fp_opts.a_lower}, {sc.fp_opts.a_upper}]"),
            ("picard_iterations", traj.iterations),
            ("picard_increments", " ".join(repr(float(v)) for v in traj.increments)),
        ]))
    out.close({"command": "simulate", "seed": cfg["run"]["seed"], "mode": cfg["simulate"]["mode"]})
    return 0


def cmd_optimize(args) -> int:
    cfg = _config(args)
    sc = build_scenario(cfg)
    problem = build_problem(sc)
    opts = optimizer_options(cfg)
    out = Bundle(Path(args.out), sc.grid, sc.mesh.h, sc.params.alpha)
    out.text("config.ini", cfg.to_ini())
    seed = cfg["run"]["seed"]
    if args.study == "perturbation":
        rep = run_target_perturbation_study(problem, (0.0,) + tuple(cfg["study"]["deltas"]),
                                            seed=seed, opts=opts)
    elif args.study == "vanishing-reg":
        rep = run_vanishing_regularization_study(problem, sc.g, sc.f, cfg["study"]["gammas"], opts=opts)
    else:
        rep = None
    if rep is not None:
        out.text("study.csv", rep.to_csv())
        out.text("study.txt", rep.summary())
        out.close({"command": "optimize", "seed": seed, "study": args.study})
        return 0 if rep.passed else EXIT_VERIFY
    st = optimize(problem.zeros(), problem, opts)
    out.array("control_g.bin", st.g)
    out.array("control_f.bin", st.f)
    out.array("pressure.bin", st.state.u)
    out.array("target.bin", problem.spec.target)
    out.csv("history.csv", ("iterate", "j", "stationarity", "step"), st.history_rows())
    out.text("summary.txt", _kv([
        ("j", st.j),
        ("tracking_error", tracking_error(st.state, problem.spec, sc.mesh)),
        ("initial_tracking_error", tracking_error(np.zeros_like(problem.spec.target), problem.spec, sc.mesh)),
        ("iterations", st.iteration),
        ("stationarity", st.stationarity),
        ("converged", str(st.converged).lower()),
    ]))
    out.close({"command": "optimize", "seed": seed, "study": "none"})
    return 0


def _parse_tols(items):
    tols = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep or name not in SUITES:
            raise ConfigError(f"--tol expects SUITE=VALUE with SUITE in {', '.join(SUITES)}", key="--tol")
        try:
            tols[name] = float(value)
        except ValueError:
            raise ConfigError(f"--tol {item}: not a number", key="--tol") from None
    return tols


def cmd_verify(args) -> int:
    if args.suite not in (None, "all") and args.suite not in SUITES:
        raise ConfigError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}", key="--suite")
    results = run_suites(args.suite, _parse_tols(args.tol))
    lines = [json.dumps(r.as_dict(), sort_keys=True, default=float) for r in results]
    for line in lines:
        print(line)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify.jsonl").write_text("\n".join(lines) + "\n")
        fio.write_manifest(out, [out / "verify.jsonl"], {"command": "verify", "suite": args.suite or "all"})
    failed = [r.suite for r in results if not r.passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFY
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracwave", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (("simulate", cmd_simulate, "forward Westervelt solve"),
                               ("optimize", cmd_optimize, "optimal control run or study")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--out", required=True, metavar="DIR")
        p.add_argument("--seed", type=int, default=None)
        if name == "optimize":
            p.add_argument("--study", choices=("perturbation", "vanishing-reg"), default=None)
        p.set_defaults(func=fn)
    p = sub.add_parser("verify", help="run oracle suites")
    p.add_argument("--suite", default=None, help=f"one of: all, {', '.join(SUITES)}")
    p.add_argument("--tol", action="append", metavar="SUITE=VALUE", help="override a suite tolerance")
    p.add_argument("--out", default=None, metavar="DIR")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FracwaveError as exc:
        print(f"solver error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
