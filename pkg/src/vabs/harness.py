"""Benchmark orchestration: strategies, per-instance runs, sweeps and reports."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence

from .engine import BeamNode, SearchConfig, SearchResult, SearchStats, run_search
from .envs import GRID_KINDS, TASK_KINDS, cached_instance
from .errors import ConfigurationError, InvalidActionError, VabsError
from .policies import (
    RemoteEndpointConfig,
    RemotePolicy,
    SyntheticOracleConfig,
    SyntheticPolicy,
    UniformPolicy,
    derived_rng,
    propose_open_actions,
)
from .policies.base import PolicyBackend
from .scorekit import TOKEN_SETS, WeightConfig

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
STRATEGIES = ("v-abs", "prior-only", "observer-only", "static-average", "mcts-rollout")
BACKENDS = ("synthetic", "remote", "uniform")
SWEEP_AXES = ("depth", "delta", "token-set", "heuristic", "beta", "sigma")

ROLE_ROLLOUT = 3


# ---------------------------------------------------------------- specs

@dataclass(frozen=True)
class PolicySpec:
    backend: str = "synthetic"
    sigma_pri: float = 0.0
    sigma_obs: float = 0.0
    seed: int = 0
    # remote-only settings
    endpoint: Optional[str] = None
    model: Optional[str] = None
    api_key_env: str = "OPENAI_API_KEY"
    token_set: str = "all-combined"
    question: str = ""
    timeout: float = 60.0
    max_retries: int = 2
    max_in_flight: int = 4
    fallback_text_parse: bool = False
    journal: Optional[str] = None
    # synthetic sudoku proposals fill this many cells per step (None = all)
    fill_per_step: Optional[int] = None

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ConfigurationError(f"unknown policy backend {self.backend!r}")
        if self.token_set not in TOKEN_SETS:
            raise ConfigurationError(f"unknown token set {self.token_set!r}")
        if self.backend == "remote" and not (self.endpoint and self.model):
            raise ConfigurationError("remote backend needs an endpoint and a model name")


@dataclass(frozen=True)
class RunSpec:
    task: str = "frozen-lake"
    params: Dict[str, Any] = field(default_factory=dict)
    instances: int = 10
    seed: int = 0
    policy: PolicySpec = field(default_factory=PolicySpec)
    search: SearchConfig = field(default_factory=SearchConfig)
    strategy: str = "v-abs"
    # grid tasks only: search depth = depth_per_diameter * grid diameter
    depth_per_diameter: Optional[float] = None
    mcts_iterations: int = 64
    mcts_c: float = 1.4
    workers: int = 1
    out: Optional[str] = None

    def __post_init__(self):
        if self.task not in TASK_KINDS:
            raise ConfigurationError(f"unknown task {self.task!r}")
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(f"unknown strategy {self.strategy!r}")
        if self.instances < 0:
            raise ConfigurationError("instances must be >= 0")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        if self.mcts_iterations < 1:
            raise ConfigurationError("mcts_iterations must be >= 1")
        if self.depth_per_diameter is not None and self.depth_per_diameter <= 0:
            raise ConfigurationError("depth_per_diameter must be > 0")

    def resolved_config(self) -> dict:
        """Everything that affects results; output paths and worker counts are excluded."""
        d = _jsonable(asdict(self))
        for key in ("out", "workers"):
            d.pop(key)
        d["policy"].pop("journal")
        d["effective_weights"] = _jsonable(asdict(strategy_weights(self.strategy, self.search.weight_cfg)))
        return d


def strategy_weights(strategy: str, base: WeightConfig) -> WeightConfig:
    """Weight configuration a strategy actually runs with."""
    if strategy == "prior-only":
        return replace(base, delta=math.inf, forced_w_p=None)
    if strategy == "observer-only":
        return replace(base, delta=0.0, forced_w_p=0.0)
    if strategy == "static-average":
        return replace(base, delta=0.0, forced_w_p=0.5)
    return base


def _jsonable(obj):
    """Non-finite floats become strings so reports stay strict JSON."""
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        if math.isnan(obj):
            return "nan"
        return obj
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def build_policy(spec: PolicySpec) -> PolicyBackend:
    if spec.backend == "synthetic":
        return SyntheticPolicy(SyntheticOracleConfig(spec.sigma_pri, spec.sigma_obs, spec.seed), spec.fill_per_step)
    if spec.backend == "uniform":
        return UniformPolicy(spec.seed)
    endpoint = RemoteEndpointConfig(
        base_url=spec.endpoint, model=spec.model, api_key_env=spec.api_key_env, timeout=spec.timeout,
        max_retries=spec.max_retries, max_in_flight=spec.max_in_flight,
        fallback_text_parse=spec.fallback_text_parse,
    )
    return RemotePolicy(endpoint, spec.question, TOKEN_SETS[spec.token_set], journal_path=spec.journal, seed=spec.seed)


# ---------------------------------------------------------------- MCTS scaffold

class _TreeNode:
    __slots__ = ("state", "parent", "action", "children", "untried", "visits", "value", "stream")

    def __init__(self, state, parent=None, action=None, stream=()):
        self.state = state
        self.parent = parent
        self.action = action
        self.children: List["_TreeNode"] = []
        self.untried: Optional[list] = None
        self.visits = 0
        self.value = 0.0
        self.stream = stream


def _logistic(x: float) -> float:
    return 0.5 * (1.0 + math.tanh(0.5 * x))


def run_mcts(instance, policy: PolicyBackend, cfg: SearchConfig, iterations: int = 64,
             c_uct: float = 1.4) -> SearchResult:
    """UCT over the environment with random rollouts valued by the observer at the leaf.

    A rollout that reaches the goal is worth 1; otherwise the leaf value is the
    logistic of the observer's raw score for the rollout's last transition.
    The returned path follows the most-visited child from the root.
    """
    t0 = time.perf_counter()
    stats = SearchStats()
    tokens0 = policy.tokens_used
    root = _TreeNode(instance.initial_state(), stream=(cfg.seed & (2**64 - 1), instance.seed & (2**64 - 1)))

    def actions_of(node):
        if node.untried is None:
            if instance.is_terminal(node.state) or node.state.depth >= cfg.max_depth:
                node.untried = []
            elif instance.open_actions:
                stats.proposal_calls += 1
                node.untried = list(propose_open_actions(policy, instance, node.state, cfg.n_cands, node.stream))
            else:
                node.untried = list(instance.action_space(node.state))
        return node.untried

    for it in range(iterations):
        node = root
        # selection
        while not actions_of(node) and node.children:
            log_n = math.log(node.visits)
            node = max(node.children,
                       key=lambda ch: ch.value / ch.visits + c_uct * math.sqrt(log_n / ch.visits))
        # expansion
        untried = actions_of(node)
        while untried:
            action = untried.pop(0)
            try:
                child_state = instance.apply_action(node.state, action)
            except InvalidActionError:
                stats.dropped_candidates += 1
                continue
            child = _TreeNode(child_state, node, action, node.stream + (len(node.children),))
            node.children.append(child)
            stats.nodes_expanded += 1
            node = child
            break
        # rollout
        rng = derived_rng(cfg.seed, node.stream + (it,), ROLE_ROLLOUT)
        state, last = node.state, None
        if node.parent is not None:
            last = (node.parent.state, node.action, node.state, node.stream)
        while not instance.is_terminal(state) and state.depth < cfg.max_depth:
            if instance.open_actions:
                stats.proposal_calls += 1
                options = propose_open_actions(policy, instance, state, cfg.n_cands, node.stream + (it, state.depth))
            else:
                options = instance.action_space(state)
            if not options:
                break
            action = options[int(rng.integers(len(options)))]
            try:
                nxt = instance.apply_action(state, action)
            except InvalidActionError:
                stats.dropped_candidates += 1
                break
            last = (state, action, nxt, node.stream + (it, state.depth))
            state = nxt
        if instance.check_goal(state):
            value = 1.0
        elif last is not None:
            stats.observer_calls += 1
            value = _logistic(policy.score_observer(instance, last[0], last[1], last[2], last[3]))
        else:
            value = 0.0
        stats.candidates_scored += 1
        # backpropagation
        while node is not None:
            node.visits += 1
            node.value += value
            node = node.parent

    # read out the most-visited path, stopping early at a goal
    best = BeamNode(root.state, stream=root.stream)
    node = root
    goal_hit = instance.check_goal(root.state)
    while node.children and not goal_hit:
        node = max(node.children, key=lambda ch: ch.visits)
        best = BeamNode(node.state, node.value / node.visits, parent=best, action=node.action, stream=node.stream)
        goal_hit = instance.check_goal(node.state)
    stats.tokens = policy.tokens_used - tokens0
    stats.wall_time = time.perf_counter() - t0
    return SearchResult(best, best.actions(), stats, best, goal_hit, [])


# ---------------------------------------------------------------- reports

@dataclass
class InstanceResult:
    index: int
    seed: int
    success: bool
    trajectory: list
    trajectory_length: int
    stats: dict
    terminated_by_goal: bool = False
    error: Optional[str] = None
    error_kind: Optional[str] = None


@dataclass
class BenchmarkReport:
    config: dict
    instances: List[InstanceResult]
    aggregates: dict
    schema_version: int = REPORT_SCHEMA_VERSION
    # wall-clock timings are kept out of the serialized report so reruns stay byte-identical
    timings: dict = field(default_factory=dict, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "config": self.config,
            "aggregates": self.aggregates,
            "instances": [asdict(r) for r in self.instances],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkReport":
        version = d.get("schema_version")
        if version != REPORT_SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported report schema version {version!r}")
        return cls(d["config"], [InstanceResult(**r) for r in d["instances"]], d["aggregates"], version)

    @classmethod
    def from_json(cls, text: str) -> "BenchmarkReport":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["index", "seed", "success", "trajectory_length", "policy_calls", "thinker_calls",
                "observer_calls", "observer_skips", "tokens", "error_kind"]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.instances:
            w.writerow([r.index, r.seed, int(r.success), r.trajectory_length,
                        r.stats.get("policy_calls", 0), r.stats.get("thinker_calls", 0),
                        r.stats.get("observer_calls", 0), r.stats.get("observer_skips", 0),
                        r.stats.get("tokens", 0), r.error_kind or ""])
        return buf.getvalue()

    def write(self, path) -> None:
        """Write the JSON report plus a ``.csv`` projection and a ``.timing.json`` sidecar."""
        from pathlib import Path

        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(self.to_json(), encoding="utf-8")
        p.with_suffix(".csv").write_text(self.to_csv(), encoding="utf-8")
        p.with_suffix(".timing.json").write_text(json.dumps(self.timings, sort_keys=True, indent=2) + "\n",
                                                 encoding="utf-8")


def aggregate(results: Sequence[InstanceResult], remote: bool) -> dict:
    n = len(results)
    successes = sum(1 for r in results if r.success)

    def mean(key):
        return sum(r.stats.get(key, 0) for r in results) / n if n else 0.0

    agg = {
        "instances": n,
        "successes": successes,
        "success_rate": successes / n if n else 0.0,
        "errors": sum(1 for r in results if r.error is not None),
        "mean_policy_calls": mean("policy_calls"),
        "mean_thinker_calls": mean("thinker_calls"),
        "mean_observer_calls": mean("observer_calls"),
        "total_observer_calls": sum(r.stats.get("observer_calls", 0) for r in results),
        "total_observer_skips": sum(r.stats.get("observer_skips", 0) for r in results),
        "total_candidates_scored": sum(r.stats.get("candidates_scored", 0) for r in results),
        "mean_trajectory_length": mean_len(results),
    }
    # token usage only exists for remote models; synthetic runs report call counts instead
    agg["mean_tokens"] = mean("tokens") if remote else None
    return agg


def mean_len(results) -> float:
    return sum(r.trajectory_length for r in results) / len(results) if results else 0.0


# ---------------------------------------------------------------- running

def _effective_search(spec: RunSpec, instance) -> SearchConfig:
    cfg = replace(spec.search, weight_cfg=strategy_weights(spec.strategy, spec.search.weight_cfg))
    if spec.depth_per_diameter is not None and spec.task in GRID_KINDS:
        cfg = replace(cfg, max_depth=max(1, int(math.ceil(spec.depth_per_diameter * instance.diameter))))
    return cfg


def run_instance(spec: RunSpec, index: int, policy: Optional[PolicyBackend] = None) -> tuple:
    """Run one instance; returns ``(InstanceResult, wall_time)``.

    Generation errors propagate (the requested parameters cannot be served);
    every error raised during the search itself is recorded on the result.
    """
    seed = spec.seed + index
    instance = cached_instance(spec.task, spec.params, seed)
    policy = policy or build_policy(spec.policy)
    cfg = _effective_search(spec, instance)
    t0 = time.perf_counter()
    try:
        if spec.strategy == "mcts-rollout":
            res = run_mcts(instance, policy, cfg, spec.mcts_iterations, spec.mcts_c)
        else:
            res = run_search(instance, policy, cfg)
    except VabsError as exc:
        log.info("instance %d failed: %s", index, exc)
        best = getattr(exc, "best", None)
        traj = best.actions() if best is not None else []
        result = InstanceResult(index, seed, False, [instance.action_to_json(a) for a in traj], len(traj),
                                {}, False, str(exc), type(exc).__name__)
        return result, time.perf_counter() - t0
    traj = res.trajectory
    result = InstanceResult(
        index, seed, bool(instance.check_goal(res.best.state)), [instance.action_to_json(a) for a in traj],
        len(traj), res.stats.counters(), res.terminated_by_goal,
    )
    return result, res.stats.wall_time


def _run_one(args):
    spec, index = args
    return run_instance(spec, index)


def run_benchmark(spec: RunSpec) -> BenchmarkReport:
    """Run ``spec.strategy`` on ``spec.instances`` seeded instances, ordered by index."""
    t0 = time.perf_counter()
    jobs = [(spec, i) for i in range(spec.instances)]
    if spec.workers > 1 and spec.instances > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            outcomes = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * spec.workers))))
    else:
        policy = build_policy(spec.policy)
        outcomes = [run_instance(spec, i, policy) for i in range(spec.instances)]
    results = [r for r, _ in outcomes]
    report = BenchmarkReport(spec.resolved_config(), results, aggregate(results, spec.policy.backend == "remote"))
    report.timings = {
        "total_wall_time": time.perf_counter() - t0,
        "per_instance": [t for _, t in outcomes],
    }
    if spec.out:
        report.write(spec.out)
    return report


# ---------------------------------------------------------------- sweeps

def _format_value(value) -> str:
    if isinstance(value, (list, tuple)):
        return ":".join(_format_value(v) for v in value)
    return str(_jsonable(value))


@dataclass
class SweepReport:
    axis: str
    values: list
    reports: List[BenchmarkReport]

    def rows(self) -> List[dict]:
        out = []
        for value, rep in zip(self.values, self.reports):
            a = rep.aggregates
            out.append({
                "axis": self.axis,
                "value": _format_value(value),
                "instances": a["instances"],
                "success_rate": a["success_rate"],
                "mean_policy_calls": a["mean_policy_calls"],
                "mean_thinker_calls": a["mean_thinker_calls"],
                "mean_observer_calls": a["mean_observer_calls"],
                "total_observer_calls": a["total_observer_calls"],
                "total_observer_skips": a["total_observer_skips"],
                "mean_tokens": "" if a["mean_tokens"] is None else a["mean_tokens"],
            })
        return out

    def to_csv(self) -> str:
        rows = self.rows()
        buf = io.StringIO()
        cols = ["axis", "value", "instances", "success_rate", "mean_policy_calls", "mean_thinker_calls",
                "mean_observer_calls", "total_observer_calls", "total_observer_skips", "mean_tokens"]
        w = csv.DictWriter(buf, cols, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            "schema_version": REPORT_SCHEMA_VERSION,
            "axis": self.axis,
            "values": _jsonable(list(self.values)),
            "reports": [r.to_dict() for r in self.reports],
        }, sort_keys=True, indent=2) + "\n"

    def write(self, path) -> None:
        from pathlib import Path

        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(self.to_json(), encoding="utf-8")
        p.with_suffix(".csv").write_text(self.to_csv(), encoding="utf-8")


def apply_axis(base: RunSpec, axis: str, value) -> RunSpec:
    """The run spec for one sweep point."""
    search, wcfg, pol = base.search, base.search.weight_cfg, base.policy
    if axis == "depth":
        return replace(base, search=replace(search, max_depth=int(value)), depth_per_diameter=None)
    if axis == "delta":
        return replace(base, search=replace(search, weight_cfg=replace(wcfg, delta=float(value))))
    if axis == "beta":
        return replace(base, search=replace(search, weight_cfg=replace(wcfg, beta=float(value))))
    if axis == "heuristic":
        mult = (1.0 if value else 0.0) if isinstance(value, bool) else float(value)
        return replace(base, search=replace(search, heuristic_multiplier=mult))
    if axis == "token-set":
        return replace(base, policy=replace(pol, token_set=str(value)))
    if axis == "sigma":
        if isinstance(value, (list, tuple)):
            sp, so = (float(v) for v in value)
        else:
            sp, so = float(value), pol.sigma_obs
        return replace(base, policy=replace(pol, sigma_pri=sp, sigma_obs=so))
    raise ConfigurationError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def run_sweep(axis: str, base: RunSpec, values: Sequence) -> SweepReport:
    if not values:
        raise ConfigurationError("sweep needs at least one value")
    reports = []
    for v in values:
        spec = replace(apply_axis(base, axis, v), out=None)
        log.info("sweep %s=%r", axis, v)
        reports.append(run_benchmark(spec))
    sweep = SweepReport(axis, list(values), reports)
    if base.out:
        sweep.write(base.out)
    return sweep


# ---------------------------------------------------------------- (de)serialization of specs

def _float(v):
    if isinstance(v, str) and v.strip().lower() in ("inf", "+inf", "infinity"):
        return math.inf
    return float(v)


def spec_from_dict(d: dict) -> RunSpec:
    """Inverse of ``asdict(RunSpec)``; unknown keys are rejected."""
    d = dict(d)
    pol = dict(d.pop("policy", {}) or {})
    search = dict(d.pop("search", {}) or {})
    wcfg = dict(search.pop("weight_cfg", {}) or {})
    for key in ("beta", "mu", "tau", "delta", "entropy_base"):
        if key in wcfg:
            wcfg[key] = _float(wcfg[key])
    if wcfg.get("forced_w_p") is not None:
        wcfg["forced_w_p"] = float(wcfg["forced_w_p"])
    try:
        search_cfg = SearchConfig(weight_cfg=WeightConfig(**wcfg), **search)
        return RunSpec(policy=PolicySpec(**pol), search=search_cfg, **d)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc
