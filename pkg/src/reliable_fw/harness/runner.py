"""Monte-Carlo experiment runner: trials, CSV traces, summary and figures."""
import csv
import dataclasses
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .. import solver
from ..geometry import Polytope
from ..oracles import get_problem
from . import plots
from .config import ConfigError
from .verify import wilson_interval

logger = logging.getLogger(__name__)


def build_setup(spec):
    problem = get_problem(spec.problem, dim=spec.dim, seed=spec.problem_seed, m=spec.m)
    if spec.x0 is not None:
        x0 = np.array(spec.x0, dtype=float)
        if x0.shape != problem.x0.shape:
            raise ConfigError(f"x0 must have {problem.x0.shape[0]} coordinates")
        problem = dataclasses.replace(problem, x0=x0)
    return solver.prepare(problem, spec.config)


def measurement_csv(log, d, m):
    rows = [["t", "l"] + [f"x_{j + 1}" for j in range(d)] + [f"y_{i + 1}" for i in range(m)] + ["reps"]]
    for t, (X, Y, reps) in enumerate(log):
        for ell in range(X.shape[0]):
            rows.append([str(t), str(ell)] + [repr(float(v)) for v in X[ell]]
                        + [repr(float(v)) for v in Y[ell]] + [str(int(reps[ell]))])
    return "\n".join(",".join(r) for r in rows) + "\n"


_WORKER = {}


def _init_worker(spec):
    _WORKER["setup"] = build_setup(spec)


def _trial_job(k):
    return _pack(_WORKER["setup"], solver.run_trial(_WORKER["setup"], k), k)


def _pack(setup, res, k):
    d, m = setup.polytope.d, setup.polytope.m
    out = {
        "trial": k,
        "summary": res.summary(setup.config.variant),
        "trace_csv": res.trace.to_csv(),
        "diag_csv": res.trace.diagnostics_csv(),
        "f_curve": (res.trace.column("nfo_count").tolist(), res.trace.column("f").tolist()),
        "iterates": res.trace.X.tolist(),
        "estimate": None,
        "measurements_csv": measurement_csv(res.measurements, d, m) if res.measurements else None,
    }
    if res.final_estimate is not None:
        out["estimate"] = (res.final_estimate.A.tolist(), res.final_estimate.b.tolist())
    return out


def run_experiment(spec, setup=None):
    """Run ``spec.trials`` seeded trials and write all artifacts under ``spec.out``."""
    spec.validate()
    setup = setup or build_setup(spec)
    os.makedirs(spec.out, exist_ok=True)
    if spec.workers > 1 and spec.trials > 1:
        with ProcessPoolExecutor(spec.workers, initializer=_init_worker, initargs=(spec,)) as pool:
            packs = list(pool.map(_trial_job, range(spec.trials)))
    else:
        packs = [_pack(setup, solver.run_trial(setup, k), k) for k in range(spec.trials)]
    packs.sort(key=lambda p: p["trial"])

    for p in packs:
        k = p["trial"]
        _write(spec.out, f"trace_{k:04d}.csv", p["trace_csv"])
        _write(spec.out, f"diag_{k:04d}.csv", p["diag_csv"])
        if p["measurements_csv"]:
            _write(spec.out, f"measurements_{k:04d}.csv", p["measurements_csv"])
    _write(spec.out, "config.txt", spec.to_text())
    _write(spec.out, "constants.txt", setup.constants.report() + "\n")

    summary = aggregate(setup, [p["summary"] for p in packs])
    with open(os.path.join(spec.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if spec.plots:
        write_plots(spec, setup, packs)
    return summary


def aggregate(setup, trials):
    n = len(trials)
    unsafe = sum(not t["safe"] for t in trials)
    lo, hi = wilson_interval(unsafe, n)
    return {
        "problem": setup.problem.name,
        "variant": setup.config.variant.value,
        "T": setup.T,
        "T_formula": setup.T_formula,
        "f_gap0": setup.f_gap0,
        "f_gap0_source": setup.f_gap0_source,
        "tau": setup.tau,
        "sigma_bar": setup.sigma_bar,
        "scale": setup.config.scale,
        "guarantees": "theory" if setup.config.scale == 1.0 else "forfeited (practical scale)",
        "trials": n,
        "violations": unsafe,
        "violation_fraction": unsafe / n,
        "violation_ci95": [lo, hi],
        "guard_trips": int(sum(t["guard_trips"] for t in trials)),
        "aborted": int(sum(bool(t["aborted"]) for t in trials)),
        "mean_f_out": float(np.mean([t["f_out"] for t in trials])),
        "per_trial": trials,
    }


def write_plots(spec, setup, packs):
    series = [(p["f_curve"][0], p["f_curve"][1], f"trial {p['trial']}") for p in packs[:5]]
    _write(spec.out, "f_vs_nfo.svg",
           plots.line_svg(series, "NFO calls", "f(x_t)", "objective vs. feasibility queries", logx=True))
    if setup.polytope.d == 2:
        first = packs[0]
        est = None
        if first["estimate"] is not None:
            est = Polytope(*first["estimate"])
        _write(spec.out, "region.svg", plots.region_svg(setup.polytope, est, first["iterates"]))


def _write(folder, name, text):
    with open(os.path.join(folder, name), "w", newline="") as fh:
        fh.write(text)


def read_trace(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
