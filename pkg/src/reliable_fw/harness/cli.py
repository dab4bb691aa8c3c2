"""Command line: ``reliable-fw run | verify | constants``.

Exit codes: 0 success, 1 a check failed, 2 invalid configuration.
"""
import argparse
import json
import logging
import sys

from ..estimation import EstimationError, min_samples
from ..geometry import GeometryError
from . import verify
from .config import ConfigError, build_spec, load_config_file
from .runner import build_setup, run_experiment

EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2


def _common(p):
    p.add_argument("--config", help="key=value experiment file; flags override it")
    p.add_argument("--problem")
    p.add_argument("--dim", type=int)
    p.add_argument("--x0", help="start point override, comma separated")
    p.add_argument("--problem-seed", type=int, dest="problem_seed")
    p.add_argument("--variant", help="nonconvex-stochastic|nonconvex-deterministic|convex-stochastic|"
                                     "convex-deterministic or 1-4")
    p.add_argument("--eps", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--sigma0", type=float)
    p.add_argument("--r0", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--scale", type=float, help="multiplier on every n_t (< 1 forfeits the guarantees)")
    p.add_argument("--horizon", type=int, help="override the iteration count")
    p.add_argument("--lmo-shrink", type=float, dest="lmo_shrink",
                   help="opt-in: tighten the estimate by this multiple of tau before the LMO")
    p.add_argument("--zeta-mode", dest="zeta_mode", choices=("horizon", "definition"))


def make_parser():
    ap = argparse.ArgumentParser(prog="reliable-fw", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run seeded trials and write traces")
    _common(run)
    run.add_argument("--trials", type=int)
    run.add_argument("--out")
    run.add_argument("--plots", action="store_true", default=None)
    run.add_argument("--strict-vicinity", action="store_true", default=None, dest="strict_vicinity")
    run.add_argument("--record-measurements", action="store_true", default=None, dest="record_measurements")
    run.add_argument("--workers", type=int)

    ver = sub.add_parser("verify", help="numerical checks of the supporting bounds")
    ver.add_argument("suite", choices=sorted(verify.SUITES) + ["all"])
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--quick", action="store_true", help="smaller sample sizes")

    con = sub.add_parser("constants", help="print the constant ledger")
    _common(con)
    return ap


_QUICK = {"shrinkage": {"n_polytopes": 20, "n_points": 20}, "qnorm": {"T": 50, "trials": 1},
          "estimate_error": {"trials": 40}, "storm_bound": {"trials": 100}, "descent": {"T": 100},
          "coverage": {"trials": 300}, "identities": {"instances": 200}}


def _spec_from(args):
    values = load_config_file(args.config) if args.config else {}
    keys = ("problem", "dim", "x0", "problem_seed", "variant", "eps", "delta", "tau", "sigma", "sigma0", "r0",
            "seed", "scale", "horizon", "zeta_mode", "lmo_shrink", "trials", "out", "plots", "strict_vicinity",
            "record_measurements", "workers")
    return build_spec(values, {k: getattr(args, k, None) for k in keys})


def cmd_run(args):
    spec = _spec_from(args)
    summary = run_experiment(spec, build_setup(spec))
    brief = {k: v for k, v in summary.items() if k != "per_trial"}
    print(json.dumps(brief, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_constants(args):
    spec = _spec_from(args)
    setup = build_setup(spec)
    c = setup.constants
    print(c.report())
    print(f"T={setup.T}")
    print(f"T_formula={setup.T_formula}")
    print(f"f_gap0_source={setup.f_gap0_source}")
    theory = min_samples(spec.config.variant, 0, c.C2, c.d, 1.0)
    practical = min_samples(spec.config.variant, 0, c.C2, c.d, spec.config.scale)
    print(f"n0_theory={theory}")
    print(f"n0_practical={practical}")
    return EXIT_OK


def cmd_verify(args):
    names = sorted(verify.SUITES) if args.suite == "all" else [args.suite]
    results = []
    for name in names:
        kw = dict(_QUICK.get(name, {})) if args.quick else {}
        kw["seed"] = args.seed
        results.append(verify.SUITES[name](**kw))
    print(json.dumps(results, indent=2, default=float))
    return EXIT_OK if all(r["passed"] for r in results) else EXIT_CHECK


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return {"run": cmd_run, "verify": cmd_verify, "constants": cmd_constants}[args.command](args)
    except (ConfigError, EstimationError, GeometryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
