"""Stability and vanishing-regularization experiments on the control problem."""

from __future__ import annotations

import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .control import ControlProblem, OptOptions, optimize, tracking_error

SLACK = 1.05


def thread_limit(default: int = 1) -> int:
    """Parallelism cap from FRACWAVE_THREADS (at least 1)."""
    raw = os.environ.get("FRACWAVE_THREADS", "")
    try:
        return max(1, int(raw)) if raw.strip() else default
    except ValueError:
        return default


def _map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def nonincreasing(values, slack: float = SLACK) -> bool:
    v = list(values)
    return all(b <= slack * a + 1e-300 for a, b in zip(v, v[1:]))


@dataclass
class StudyReport:
    name: str
    columns: tuple
    rows: list = field(default_factory=list)
    passed: bool = True
    note: str = ""

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(",".join(self.columns) + "\n")
        for row in self.rows:
            out.write(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)
                               for v in row) + "\n")
        return out.getvalue()

    def summary(self) -> str:
        lines = [f"study = {self.name}", f"passed = {str(self.passed).lower()}"]
        if self.note:
            lines.append(f"note = {self.note}")
        for row in self.rows:
            lines.append("  " + "  ".join(f"{c}={v!r}" if not isinstance(v, float) else f"{c}={v:.6e}"
                                          for c, v in zip(self.columns, row)))
        return "\n".join(lines) + "\n"


def run_target_perturbation_study(problem: ControlProblem, deltas, seed: int = 0,
                                  init=None, opts: OptOptions | None = None,
                                  workers: int | None = None) -> StudyReport:
    """Re-optimize for p^d + delta * noise and measure the control shift.

    ``deltas`` should be a halving ladder; the report checks that the
    distance to the unperturbed minimizer is nonincreasing down the ladder
    (5% slack).  Each perturbed run starts from the unperturbed minimizer.
    """
    opts = opts or OptOptions()
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(problem.spec.target.shape)
    noise /= max(tracking_error(noise, problem.spec.with_weights(target=np.zeros_like(noise)),
                                problem.mesh), 1e-300)
    base = optimize(init or problem.zeros(), problem, opts)
    ladder = sorted((float(d) for d in deltas), reverse=True)

    def run(delta):
        if delta == 0.0:
            return delta, base
        sub = problem.with_spec(problem.spec.with_weights(target=problem.spec.target + delta * noise))
        return delta, optimize((base.g, base.f), sub, opts)

    results = _map(run, ladder, workers or thread_limit())
    report = StudyReport("perturbation", ("delta", "distance", "j", "iterations", "stationarity"))
    dists = []
    for delta, st in results:
        d = problem.norm((st.g - base.g, st.f - base.f))
        dists.append(d)
        report.rows.append((delta, d, st.j, st.iteration, st.stationarity))
    report.passed = nonincreasing(dists)
    return report


def run_vanishing_regularization_study(problem: ControlProblem, g_true, f_true, gammas,
                                       init=None, opts: OptOptions | None = None) -> StudyReport:
    """Solve down a ladder gamma = eta for the attainable target S(g_true, f_true).

    Each rung is warm-started from the previous minimizer; the report checks
    that the tracking error decreases down the ladder (5% slack).
    """
    opts = opts or OptOptions()
    target = problem.state(g_true, f_true).u
    x = init or problem.zeros()
    report = StudyReport("vanishing-reg", ("gamma", "tracking_error", "j", "iterations",
                                           "stationarity", "control_norm"))
    errs = []
    for gamma in sorted((float(g) for g in gammas), reverse=True):
        sub = problem.with_spec(problem.spec.with_weights(gamma=gamma, eta=gamma, target=target))
        st = optimize(x, sub, opts)
        err = tracking_error(st.state, sub.spec, problem.mesh)
        errs.append(err)
        report.rows.append((gamma, err, st.j, st.iteration, st.stationarity,
                            problem.norm((st.g, st.f))))
        x = (st.g, st.f)
    report.passed = nonincreasing(errs)
    return report
