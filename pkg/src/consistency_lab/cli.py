"""Command-line front end.

Exit codes: 0 success, 1 failed check, 2 usage or invalid input,
3 numeric budget exhausted before a certificate was produced.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import resources

from . import __version__
from .core import (
    InvalidInput,
    LabError,
    NoMaximizer,
    Trajectory,
    UncertifiedError,
    posterior,
    sample_trajectory,
)
from .diagnostics import KINDS, ExperimentSpec, dumps, resolve_theta, run_experiment
from .estimators import ESTIMATOR_NAMES, get_estimator
from .smml import smml_search
from .verify import SUITES, run_suite
from .zoo import ZOO, make_problem

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_UNCERTIFIED = 0, 1, 2, 3
SEED_ENV = "CONSISTENCY_LAB_SEED"

log = logging.getLogger("consistency_lab")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def load_defaults() -> dict:
    return json.loads(resources.files(__package__).joinpath("data/defaults.json").read_text("utf-8"))


def load_schema(name: str) -> dict:
    return json.loads(resources.files(__package__).joinpath(f"data/schemas/{name}.json").read_text("utf-8"))


def _seed(args, defaults: dict) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return int(defaults["seed"])


def _params(text: str | None) -> dict:
    if not text:
        return {}
    try:
        out = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--params is not valid JSON: {exc}") from None
    if not isinstance(out, dict):
        raise UsageError("--params must be a JSON object")
    return out


def _traj(text: str) -> tuple[int, ...]:
    text = text.strip()
    if text.startswith("["):
        return Trajectory.from_json(text).symbols
    if not text:
        return ()
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--traj must be comma-separated integers, got {text!r}") from None


def _theta_arg(text: str):
    # "3" is an index; "02", "0.3" and "label:3" are labels
    if text.startswith("label:"):
        return text[6:]
    if text.isdigit() and str(int(text)) == text:
        return int(text)
    return text


def _emit(args, text: str) -> None:
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _only_json(args) -> None:
    if args.format != "json":
        raise UsageError(f"{args.command} only writes json")


# -- subcommands ------------------------------------------------------------


def cmd_list_problems(args, cfg) -> int:
    _only_json(args)
    out = {
        "problems": [{"name": k, "description": v} for k, v in ZOO.items()],
        "estimators": list(ESTIMATOR_NAMES),
        "suites": list(SUITES),
        "kinds": list(KINDS),
    }
    _emit(args, dumps(out))
    return EXIT_OK


def cmd_simulate(args, cfg) -> int:
    _only_json(args)
    problem = make_problem(args.problem, cfg["params"])
    theta = resolve_theta(problem, cfg["theta"])
    traj = sample_trajectory(problem, theta, cfg["n"], (cfg["seed"],))
    out = {
        "problem": problem.config(),
        "theta": problem.param(theta).to_dict(),
        "n": cfg["n"],
        "seed": list(traj.seed),
        "trajectory": list(traj.symbols),
    }
    _emit(args, dumps(out))
    return EXIT_OK


def cmd_posterior(args, cfg) -> int:
    _only_json(args)
    problem = make_problem(args.problem, cfg["params"])
    xs = _traj(args.traj)
    post = posterior(problem, xs, cfg["tail_eps"])
    _emit(args, dumps({"problem": problem.config(), "trajectory": list(xs), "posterior": post.to_dict()}))
    return EXIT_OK


def cmd_estimate(args, cfg) -> int:
    _only_json(args)
    if args.traj is None and args.seed is None:
        raise UsageError("estimate needs --traj or --seed")
    problem = make_problem(args.problem, cfg["params"])
    est = get_estimator(args.estimator)
    if args.traj is not None:
        xs = _traj(args.traj)
        if args.n is not None:
            if args.n > len(xs):
                raise UsageError(f"--n {args.n} exceeds trajectory length {len(xs)}")
            xs = xs[: args.n]
        seed = None
    else:
        theta = resolve_theta(problem, cfg["theta"])
        xs = sample_trajectory(problem, theta, cfg["n"], (cfg["seed"],)).symbols
        seed = [cfg["seed"]]
    out = est(problem, xs)
    rec = {
        "problem": problem.config(),
        "estimator": est.name,
        "tie_break": est.tie_break,
        "n": len(xs),
        "trajectory": list(xs),
        "seed": seed,
        "certified": True,
    }
    if isinstance(out, NoMaximizer):
        rec.update(status="no-maximizer", estimate="NoMaximizer")
    else:
        rec.update(status="ok", estimate=out.to_dict())
    try:
        rec["posterior_tail_bound"] = posterior(problem, xs, cfg["tail_eps"]).tail_bound
    except LabError:
        rec["posterior_tail_bound"] = None
    _emit(args, dumps(rec))
    return EXIT_OK


def cmd_experiment(args, cfg) -> int:
    try:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(raw, dict):
        raise UsageError("experiment config must be a JSON object")
    kind = args.kind or raw.get("kind")
    if kind is None:
        raise UsageError(f"experiment kind missing; valid: {list(KINDS)}")
    if args.seed is not None or "master_seed" not in raw:
        raw = {**raw, "master_seed": cfg["seed"]}
    spec = ExperimentSpec.from_dict(raw)
    log.info("experiment spec %s", dumps(spec.to_dict()).replace("\n", ""))
    report = run_experiment(kind, spec, workers=cfg["workers"])
    _emit(args, report.to_csv() if args.format == "csv" else report.to_json())
    return EXIT_OK


def cmd_smml_search(args, cfg) -> int:
    _only_json(args)
    problem = make_problem(args.problem, cfg["params"])
    lim = cfg["smml"]
    res = smml_search(
        problem,
        args.n,
        quotient=args.quotient,
        max_candidates=lim["max_candidates"],
        max_points=lim["max_points"],
        node_budget=lim["node_budget"],
    )
    _emit(args, dumps(res.to_dict(problem)))
    return EXIT_OK


def cmd_verify_paper(args, cfg) -> int:
    _only_json(args)
    if args.suite not in SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; valid: {list(SUITES)}")
    rep = run_suite(args.suite, seed=cfg["seed"], workers=cfg["workers"])
    _emit(args, rep.to_json())
    for c in rep.checks:
        log.info("%s: %s", "PASS" if c["passed"] else "FAIL", c["name"])
    if not rep.passed:
        for name in rep.failing():
            print(f"failed check: {name}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, help=f"master seed (default: ${SEED_ENV} or the shipped default)")
    common.add_argument("--output", "-o", help="write to this file instead of stdout")
    common.add_argument("--format", choices=("json", "csv"), help="output format")
    common.add_argument("--workers", type=int, help="worker processes for experiments")
    common.add_argument("--quiet", "-q", action="store_true", help="only log warnings")

    prob = _Parser(add_help=False)
    prob.add_argument("--problem", required=True, help=f"one of {sorted(ZOO)}")
    prob.add_argument("--params", help="JSON object of problem parameters")

    p = _Parser(prog="consistency-lab", description="Estimator consistency laboratory.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("list-problems", parents=[common], help="list problems, estimators and suites")

    s = sub.add_parser("simulate", parents=[common, prob], help="sample a trajectory")
    s.add_argument("--theta", help="parameter index, or label (e.g. 02, 0.3, label:4)")
    s.add_argument("--n", type=int, help="trajectory length")

    s = sub.add_parser("posterior", parents=[common, prob], help="truncated posterior for a trajectory")
    s.add_argument("--traj", required=True, help="comma-separated symbols or a JSON array")
    s.add_argument("--tail-eps", type=float)

    s = sub.add_parser("estimate", parents=[common, prob], help="run one estimator")
    s.add_argument("--estimator", required=True, help=f"one of {list(ESTIMATOR_NAMES)}")
    s.add_argument("--traj", help="comma-separated symbols or a JSON array")
    s.add_argument("--theta", help="index or label to sample from when --seed is given")
    s.add_argument("--n", type=int, help="horizon")

    s = sub.add_parser("experiment", parents=[common], help="run a seeded experiment from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--kind", choices=KINDS)

    s = sub.add_parser("smml-search", parents=[common, prob], help="exact SMML codebook search")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--quotient", action="store_true", help="one candidate per class of equal n-step laws")

    s = sub.add_parser("verify-paper", parents=[common], help="run a golden-check suite")
    s.add_argument("suite", help=f"one of {list(SUITES)}")
    return p


COMMANDS = {
    "list-problems": cmd_list_problems,
    "simulate": cmd_simulate,
    "posterior": cmd_posterior,
    "estimate": cmd_estimate,
    "experiment": cmd_experiment,
    "smml-search": cmd_smml_search,
    "verify-paper": cmd_verify_paper,
}


def resolve_config(args) -> dict:
    d = load_defaults()
    cfg = {
        "command": args.command,
        "seed": _seed(args, d),
        "workers": args.workers if args.workers is not None else d["workers"],
        "format": args.format or d["format"],
        "tail_eps": getattr(args, "tail_eps", None) or d["tail_eps"],
        "theta": _theta_arg(getattr(args, "theta", None)) if getattr(args, "theta", None) is not None else d["theta"],
        "n": getattr(args, "n", None) or d["n"],
        "smml": d["smml"],
    }
    if hasattr(args, "problem"):
        cfg["problem"] = args.problem
        cfg["params"] = _params(args.params)
    for key in ("estimator", "traj", "suite", "config", "kind", "quotient"):
        if getattr(args, key, None) is not None:
            cfg[key] = getattr(args, key)
    if cfg["workers"] < 1:
        raise UsageError("--workers must be at least 1")
    args.format = cfg["format"]
    return cfg


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, format="%(name)s %(levelname)s %(message)s", level=logging.INFO, force=True)
    try:
        args = build_parser().parse_args(argv)
        log.setLevel(logging.WARNING if args.quiet else logging.INFO)
        cfg = resolve_config(args)
        log.info("version %s", __version__)
        log.info("config %s", json.dumps(cfg, sort_keys=True))
        log.info("master seed %d", cfg["seed"])
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UncertifiedError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return EXIT_UNCERTIFIED
    except (LabError, InvalidInput) as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
