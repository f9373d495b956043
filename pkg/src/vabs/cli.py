"""Command-line entry point.

Every option may also come from a YAML or JSON config file (``--config``)
whose keys mirror the long flag names; explicit flags win over the file.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import fields
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from . import biaslab
from .datasetgen import DatasetSpec, generate_pairs, validate_dataset
from .engine import SearchConfig
from .envs import GRID_KINDS, TASK_KINDS, cached_instance, load_instance, replay
from .errors import (
    CapabilityError,
    ConfigurationError,
    DatasetParseError,
    GenerationError,
    ReplayError,
    TransportError,
    VabsError,
)
from .harness import STRATEGIES, SWEEP_AXES, BenchmarkReport, PolicySpec, RunSpec, run_benchmark, run_sweep
from .scorekit import TOKEN_SETS, WeightConfig

log = logging.getLogger("vabs")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_TRANSPORT = 3
EXIT_GENERATION = 4

DEFAULT_DEPTH = 3

# option name -> default; keys double as config-file keys (dashes or underscores)
RUN_DEFAULTS: Dict[str, Any] = {
    "task": "frozen-lake",
    "grid": None,
    "jigsaw_n": None,
    "level": None,
    "givens": None,
    "instances": 10,
    "seed": 0,
    "policy": "synthetic",
    "policy_seed": 0,
    "sigma_pri": 0.0,
    "sigma_obs": 0.0,
    "beam": 3,
    "depth": "task",
    "delta": 1.84,
    "beta": 2.0,
    "mu": 0.5,
    "tau": 0.5,
    "observer_tau": 1.0,
    "entropy_base": "e",
    "heuristic_mult": 1.0,
    "path_sum": False,
    "n_cands": 3,
    "max_parallel": 1,
    "strategy": "v-abs",
    "mcts_iterations": 64,
    "endpoint": None,
    "model": None,
    "api_key_env": "OPENAI_API_KEY",
    "token_set": "all-combined",
    "question": "",
    "timeout": 60.0,
    "max_retries": 2,
    "max_in_flight": 4,
    "fallback_text_parse": False,
    "journal": None,
    "workers": 1,
    "out": None,
}


def _float(text) -> float:
    if isinstance(text, str) and text.strip().lower() in ("inf", "+inf", "infinity"):
        return math.inf
    return float(text)


def _base(text) -> float:
    return math.e if str(text).strip().lower() in ("e", "nat", "nats") else float(text)


def load_config(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"config file {path} must hold a mapping")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def resolve_options(args: argparse.Namespace, defaults: Dict[str, Any]) -> dict:
    """defaults < config file < explicit flags."""
    opts = dict(defaults)
    if getattr(args, "config", None):
        file_opts = load_config(args.config)
        unknown = set(file_opts) - set(defaults) - {"values", "axis"}
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        opts.update(file_opts)
    for key, value in vars(args).items():
        if key in defaults and value is not None:
            opts[key] = value
    return opts


def task_params(opts: dict) -> dict:
    task = opts["task"]
    params = {}
    if task in GRID_KINDS and opts.get("grid") is not None:
        params["size"] = int(opts["grid"])
    if task == "visuothink" and opts.get("level") is not None:
        params["level"] = int(opts["level"])
    if task == "jigsaw" and opts.get("jigsaw_n") is not None:
        params["n"] = int(opts["jigsaw_n"])
    if task == "sudoku" and opts.get("givens") is not None:
        params["givens"] = int(opts["givens"])
    return params


def build_run_spec(opts: dict) -> RunSpec:
    depth = str(opts["depth"]).strip().lower()
    depth_per_diameter = None
    max_depth = DEFAULT_DEPTH
    if depth == "auto":
        depth_per_diameter = 2.0
    elif depth == "task":
        # navigation defaults to twice the grid diameter (winding routes can be longer than
        # the diameter itself), everything else to DEFAULT_DEPTH
        depth_per_diameter = 2.0 if opts["task"] in GRID_KINDS else None
    else:
        max_depth = int(depth)
    wcfg = WeightConfig(beta=_float(opts["beta"]), mu=_float(opts["mu"]), tau=_float(opts["tau"]),
                        delta=_float(opts["delta"]), entropy_base=_base(opts["entropy_base"]))
    search = SearchConfig(
        beam_k=int(opts["beam"]), max_depth=max_depth, weight_cfg=wcfg,
        heuristic_multiplier=_float(opts["heuristic_mult"]), seed=int(opts["seed"]),
        max_parallel_scoring=int(opts["max_parallel"]), n_cands=int(opts["n_cands"]),
        path_sum=bool(opts["path_sum"]), observer_tau=_float(opts["observer_tau"]),
    )
    policy = PolicySpec(
        backend=opts["policy"], sigma_pri=_float(opts["sigma_pri"]), sigma_obs=_float(opts["sigma_obs"]),
        seed=int(opts["policy_seed"]), endpoint=opts["endpoint"], model=opts["model"],
        api_key_env=opts["api_key_env"], token_set=opts["token_set"], question=opts["question"],
        timeout=_float(opts["timeout"]), max_retries=int(opts["max_retries"]),
        max_in_flight=int(opts["max_in_flight"]), fallback_text_parse=bool(opts["fallback_text_parse"]),
        journal=opts["journal"],
    )
    return RunSpec(
        task=opts["task"], params=task_params(opts), instances=int(opts["instances"]), seed=int(opts["seed"]),
        policy=policy, search=search, strategy=opts["strategy"], depth_per_diameter=depth_per_diameter,
        mcts_iterations=int(opts["mcts_iterations"]), workers=int(opts["workers"]), out=opts["out"],
    )


def parse_sweep_values(axis: str, raw) -> list:
    items = raw if isinstance(raw, list) else [v for v in str(raw).split(",") if v.strip()]
    out = []
    for v in items:
        if axis == "depth":
            out.append(int(v))
        elif axis in ("delta", "beta"):
            out.append(_float(v))
        elif axis == "heuristic":
            switch = {"on": 1.0, "off": 0.0, "true": 1.0, "false": 0.0}
            s = str(v).strip().lower()
            out.append(switch[s] if s in switch else _float(v))
        elif axis == "token-set":
            if str(v).strip() not in TOKEN_SETS:
                raise ConfigurationError(f"unknown token set {v!r}")
            out.append(str(v).strip())
        elif axis == "sigma":
            parts = list(v) if isinstance(v, (list, tuple)) else str(v).split(":")
            if len(parts) > 2:
                raise ConfigurationError(f"sigma values are PRI or PRI:OBS, got {v!r}")
            out.append([_float(p) for p in parts] if len(parts) == 2 else _float(parts[0]))
        else:
            raise ConfigurationError(f"unknown sweep axis {axis!r}")
    if not out:
        raise ConfigurationError("sweep needs at least one value")
    return out


# ---------------------------------------------------------------- parser

def _add_run_flags(p: argparse.ArgumentParser) -> None:
    # defaults are None so that only explicit flags override the config file
    g = p.add_argument_group("task")
    g.add_argument("--task", choices=TASK_KINDS)
    g.add_argument("--grid", type=int, help="grid side length for navigation tasks")
    g.add_argument("--jigsaw-n", type=int, help="jigsaw side length")
    g.add_argument("--level", type=int, help="visuothink turn count")
    g.add_argument("--givens", type=int, help="sudoku givens")
    g.add_argument("--instances", type=int)
    g.add_argument("--seed", type=int)
    g = p.add_argument_group("policy")
    g.add_argument("--policy", choices=("synthetic", "remote", "uniform"))
    g.add_argument("--policy-seed", type=int)
    g.add_argument("--sigma-pri", type=float)
    g.add_argument("--sigma-obs", type=float)
    g.add_argument("--endpoint")
    g.add_argument("--model")
    g.add_argument("--api-key-env")
    g.add_argument("--token-set", choices=sorted(TOKEN_SETS))
    g.add_argument("--question")
    g.add_argument("--timeout", type=float)
    g.add_argument("--max-retries", type=int)
    g.add_argument("--max-in-flight", type=int)
    g.add_argument("--fallback-text-parse", action="store_true", default=None)
    g.add_argument("--journal", help="JSON-Lines request/response log for remote runs")
    g = p.add_argument_group("search")
    g.add_argument("--strategy", choices=STRATEGIES)
    g.add_argument("--beam", type=int)
    g.add_argument("--depth", help="max depth; 'task' (default) uses twice the grid diameter for navigation "
                                   "and 3 otherwise; 'auto' uses twice the grid diameter for any grid task")
    g.add_argument("--delta", help="entropy skip threshold (accepts 'inf')")
    g.add_argument("--beta", type=float)
    g.add_argument("--mu", type=float)
    g.add_argument("--tau", type=float)
    g.add_argument("--observer-tau", type=float)
    g.add_argument("--entropy-base", help="logarithm base of the prior entropy ('e' or a number)")
    g.add_argument("--heuristic-mult", type=float)
    g.add_argument("--path-sum", action="store_true", default=None)
    g.add_argument("--n-cands", type=int)
    g.add_argument("--max-parallel", type=int)
    g.add_argument("--mcts-iterations", type=int)
    g.add_argument("--workers", type=int)
    g.add_argument("--out")
    p.add_argument("--config", help="YAML/JSON file with option values")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vabs", description="Action-observer beam search benchmarks.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one benchmark")
    _add_run_flags(p)

    p = sub.add_parser("sweep", help="run a benchmark per value of one axis")
    _add_run_flags(p)
    p.add_argument("--axis", choices=SWEEP_AXES)
    p.add_argument("--values", help="comma separated; sigma pairs as PRI:OBS; heuristic on/off or a multiplier")

    p = sub.add_parser("simulate-bias", help="fusion MSE, entropy tracking and prior/observer similarity sweeps")
    p.add_argument("--out-dir", default="bias-out")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variances", default="0.25,0.5,1,2,4")
    p.add_argument("--sigmas", default="0,0.5,1,2,4", help="prior noise levels for the similarity sweep")
    p.add_argument("--sigma-obs", type=float, default=0.1)
    p.add_argument("--transitions", type=int, default=500)

    p = sub.add_parser("gen-dataset", help="write balanced verification pairs")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--config", help="YAML/JSON file overriding per-category counts")

    p = sub.add_parser("validate-dataset", help="re-check a dataset file against the oracles")
    p.add_argument("path")
    p.add_argument("--out")

    p = sub.add_parser("replay", help="re-apply an action sequence and report the final state")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance", help="saved instance file")
    src.add_argument("--report", help="benchmark report; replays one of its instances")
    p.add_argument("--index", type=int, default=0, help="instance index within --report")
    p.add_argument("--actions", help="JSON list of actions (required with --instance)")
    return parser


# ---------------------------------------------------------------- commands

def _summary(report: BenchmarkReport) -> str:
    a = report.aggregates
    return (f"{a['successes']}/{a['instances']} solved (success rate {a['success_rate']:.3f}), "
            f"mean policy calls {a['mean_policy_calls']:.2f}, errors {a['errors']}")


def _transport_failures(report: BenchmarkReport) -> int:
    return sum(1 for r in report.instances if r.error_kind in ("TransportError", "CapabilityError"))


def cmd_run(args) -> int:
    spec = build_run_spec(resolve_options(args, RUN_DEFAULTS))
    report = run_benchmark(spec)
    if not spec.out:
        sys.stdout.write(report.to_json())
    print(_summary(report), file=sys.stderr)
    return EXIT_TRANSPORT if _transport_failures(report) else EXIT_OK


def cmd_sweep(args) -> int:
    defaults = dict(RUN_DEFAULTS, axis=None, values=None)
    opts = resolve_options(args, defaults)
    if not opts.get("axis") or opts.get("values") in (None, "", []):
        raise ConfigurationError("sweep needs --axis and --values")
    values = parse_sweep_values(opts["axis"], opts["values"])
    base = build_run_spec(opts)
    sweep = run_sweep(opts["axis"], base, values)
    if not base.out:
        sys.stdout.write(sweep.to_csv())
    for v, rep in zip(values, sweep.reports):
        print(f"{opts['axis']}={v}: {_summary(rep)}", file=sys.stderr)
    failures = sum(_transport_failures(r) for r in sweep.reports)
    return EXIT_TRANSPORT if failures else EXIT_OK


def _floats(text) -> List[float]:
    return [_float(v) for v in str(text).split(",") if v.strip()]


def cmd_simulate_bias(args) -> int:
    out = Path(args.out_dir)
    variances = _floats(args.variances)
    rows = biaslab.fusion_sweep(variances, variances, trials=args.trials, seed=args.seed)
    biaslab.write_rows_csv(rows, out / "fusion_mse.csv")
    sigmas = [0.1 * (100 ** (k / 19)) for k in range(20)]
    tracking = biaslab.entropy_weight_tracking(sigmas, trials=args.trials, seed=args.seed)
    biaslab.write_rows_csv(tracking.rows, out / "entropy_tracking.csv")
    iao = biaslab.iao_sweep(_floats(args.sigmas), args.sigma_obs, args.transitions, args.seed)
    biaslab.write_rows_csv(iao, out / "iao_similarity.csv")
    print(f"fusion rows: {len(rows)}; weight-tracking Spearman: {tracking.spearman:.4f}")
    for r in iao:
        print(f"sigma_pri={r.sigma_pri:g}: mean similarity {r.mean_similarity:.4f} +/- {r.stderr:.4f}")
    return EXIT_OK


def cmd_gen_dataset(args) -> int:
    overrides = load_config(args.config) if args.config else {}
    known = {f.name for f in fields(DatasetSpec)}
    unknown = set(overrides) - known
    if unknown:
        raise ConfigurationError(f"unknown dataset keys: {sorted(unknown)}")
    overrides.setdefault("seed", args.seed)
    spec = DatasetSpec(**overrides)
    stats = generate_pairs(spec, args.out, workers=args.workers)
    print(stats.to_json(), end="")
    return EXIT_OK


def cmd_validate_dataset(args) -> int:
    report = validate_dataset(args.path)
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(f"{report.records} records, {len(report.label_mismatches)} label mismatches, "
          f"{len(report.schema_violations)} schema violations, {len(report.leaks)} leaks, "
          f"duplicate rate {report.duplicate_rate:.4f}", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_FAILED


def cmd_replay(args) -> int:
    if args.report:
        report = BenchmarkReport.from_json(Path(args.report).read_text(encoding="utf-8"))
        cfg = report.config
        matches = [r for r in report.instances if r.index == args.index]
        if not matches:
            raise ConfigurationError(f"report has no instance {args.index}")
        rec = matches[0]
        instance = cached_instance(cfg["task"], cfg["params"], rec.seed)
        raw_actions = rec.trajectory
    else:
        if args.actions is None:
            raise ConfigurationError("--actions is required with --instance")
        instance = load_instance(args.instance, with_truth=True)
        raw_actions = json.loads(args.actions)
    actions = [instance.action_from_json(a) for a in raw_actions]
    state = replay(instance, actions)
    print(json.dumps({"steps": state.depth, "history": list(state.history),
                      "goal": bool(instance.check_goal(state)), "terminal": bool(instance.is_terminal(state))},
                     indent=2))
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "simulate-bias": cmd_simulate_bias,
    "gen-dataset": cmd_gen_dataset,
    "validate-dataset": cmd_validate_dataset,
    "replay": cmd_replay,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TransportError, CapabilityError) as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except GenerationError as exc:
        print(f"generation error: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    except (DatasetParseError, ReplayError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except VabsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
