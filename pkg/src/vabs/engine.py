"""Closed-loop thinker/actor/observer beam search."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, List, Optional, Sequence, Tuple

from .envs.base import SearchState, TaskInstance, replay
from .errors import ConfigurationError, InvalidActionError, SearchExhaustedError
from .policies import propose_open_actions
from .policies.base import PolicyBackend
from .scorekit import (
    ROOT_BREAKDOWN,
    ScoreBreakdown,
    WeightConfig,
    final_score,
    observer_active,
    shannon_entropy,
    softmax_with_temperature,
)

log = logging.getLogger(__name__)

_MASK64 = 2**64 - 1


@dataclass(frozen=True)
class SearchConfig:
    beam_k: int = 3
    max_depth: int = 3
    weight_cfg: WeightConfig = field(default_factory=WeightConfig)
    heuristic_multiplier: float = 1.0
    seed: int = 0
    max_parallel_scoring: int = 1
    # proposals requested per node for open action spaces
    n_cands: int = 3
    # rank by the running sum of transition scores instead of the last transition
    path_sum: bool = False
    # softmax temperature used to normalize observer scores across siblings
    observer_tau: float = 1.0
    goal_anywhere: bool = False

    def __post_init__(self):
        if self.beam_k < 1:
            raise ConfigurationError("beam_k must be >= 1")
        if self.max_depth < 1:
            raise ConfigurationError("max_depth must be >= 1")
        if self.heuristic_multiplier < 0:
            raise ConfigurationError("heuristic_multiplier must be >= 0")
        if self.max_parallel_scoring < 1:
            raise ConfigurationError("max_parallel_scoring must be >= 1")
        if self.n_cands < 1:
            raise ConfigurationError("n_cands must be >= 1")


@dataclass
class BeamNode:
    state: SearchState
    score: float = 0.0
    breakdown: ScoreBreakdown = ROOT_BREAKDOWN
    parent: Optional["BeamNode"] = None
    action: Any = None
    stream: Tuple[int, ...] = ()

    @property
    def depth(self) -> int:
        return self.state.depth

    def actions(self) -> list:
        out = []
        node = self
        while node.parent is not None:
            out.append(node.action)
            node = node.parent
        return out[::-1]


@dataclass
class SearchStats:
    thinker_calls: int = 0
    observer_calls: int = 0
    observer_skips: int = 0
    candidates_scored: int = 0
    nodes_expanded: int = 0
    dropped_candidates: int = 0
    proposal_calls: int = 0
    tokens: int = 0
    wall_time: float = 0.0

    @property
    def policy_calls(self) -> int:
        """Batched thinker calls plus per-state observer calls plus proposal calls."""
        return self.thinker_calls + self.observer_calls + self.proposal_calls

    def counters(self) -> dict:
        d = asdict(self)
        d.pop("wall_time")
        d["policy_calls"] = self.policy_calls
        return d


@dataclass
class SearchResult:
    best: BeamNode
    trajectory: list
    stats: SearchStats
    best_last_layer: Optional[BeamNode] = None
    terminated_by_goal: bool = False
    # one entry per expanded node: (depth, entropy, observer_used, n_candidates)
    trace: List[tuple] = field(default_factory=list)


def select_top_k(candidates: Sequence[BeamNode], k: int) -> List[BeamNode]:
    """Highest-score nodes first; equal scores keep insertion order."""
    order = sorted(range(len(candidates)), key=lambda i: -candidates[i].score)
    return [candidates[i] for i in order[:k]]


def _best(nodes: Sequence[BeamNode]) -> BeamNode:
    return select_top_k(nodes, 1)[0]


class _Runner:
    """Holds the per-search executor and counters."""

    def __init__(self, instance: TaskInstance, policy: PolicyBackend, cfg: SearchConfig):
        self.instance = instance
        self.policy = policy
        self.cfg = cfg
        self.stats = SearchStats()
        self.trace = []
        workers = min(cfg.max_parallel_scoring, getattr(policy, "max_in_flight", 1))
        self.pool = ThreadPoolExecutor(workers) if workers > 1 and policy.concurrent else None

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()

    def _map(self, fn, items):
        if self.pool is None:
            return [fn(x) for x in items]
        return list(self.pool.map(fn, items))

    def expand(self, node: BeamNode) -> List[BeamNode]:
        inst, policy, cfg = self.instance, self.policy, self.cfg
        wcfg = cfg.weight_cfg
        state = node.state
        if inst.open_actions:
            self.stats.proposal_calls += 1
            actions = propose_open_actions(policy, inst, state, cfg.n_cands, node.stream)
        else:
            actions = inst.action_space(state)
        if not actions:
            return []
        self.stats.nodes_expanded += 1

        raw = policy.score_prior_batch(inst, state, actions, node.stream)
        self.stats.thinker_calls += 1
        f_pri = softmax_with_temperature(raw, wcfg.tau)
        entropy = shannon_entropy(f_pri, wcfg.entropy_base)

        def act(b):
            try:
                return inst.apply_action(state, actions[b])
            except InvalidActionError as exc:
                log.debug("dropping candidate %r: %s", actions[b], exc)
                return None

        children = self._map(act, range(len(actions)))
        alive = [b for b, c in enumerate(children) if c is not None]
        self.stats.dropped_candidates += len(actions) - len(alive)
        self.stats.candidates_scored += len(alive)
        if not alive:
            return []

        use_observer = observer_active(entropy, wcfg)
        f_obs = {}
        if use_observer:
            obs_raw = self._map(
                lambda b: policy.score_observer(inst, state, actions[b], children[b], node.stream + (b,)),
                alive,
            )
            self.stats.observer_calls += len(alive)
            probs = softmax_with_temperature(obs_raw, cfg.observer_tau)
            f_obs = {b: float(p) for b, p in zip(alive, probs)}
        else:
            self.stats.observer_skips += len(alive)
        self.trace.append((state.depth, entropy, use_observer, len(alive)))

        out = []
        for b in alive:
            child = children[b]
            heur = cfg.heuristic_multiplier * inst.heuristic_score(child) if cfg.heuristic_multiplier else 0.0
            bd = final_score(float(f_pri[b]), f_obs.get(b), heur, entropy, wcfg)
            score = bd.final + (node.score if cfg.path_sum else 0.0)
            out.append(BeamNode(child, score, bd, node, actions[b], node.stream + (b,)))
        return out


def expand_node(node: BeamNode, instance: TaskInstance, policy: PolicyBackend,
                cfg: SearchConfig, stats: Optional[SearchStats] = None) -> List[BeamNode]:
    """Score and expand one node; returns its surviving children in action order."""
    runner = _Runner(instance, policy, cfg)
    if stats is not None:
        runner.stats = stats
    try:
        return runner.expand(node)
    finally:
        runner.close()


def root_node(instance: TaskInstance, cfg: SearchConfig) -> BeamNode:
    return BeamNode(instance.initial_state(), stream=(cfg.seed & _MASK64, instance.seed & _MASK64))


def run_search(instance: TaskInstance, policy: PolicyBackend, cfg: SearchConfig) -> SearchResult:
    t0 = time.perf_counter()
    runner = _Runner(instance, policy, cfg)
    tokens0 = policy.tokens_used
    root = root_node(instance, cfg)
    beam = [root]
    seen_layers: List[BeamNode] = []
    last_best = None
    goal_hit = False
    try:
        for _ in range(cfg.max_depth):
            candidates = []
            dropped_before = runner.stats.dropped_candidates
            for node in beam:
                if instance.is_terminal(node.state):
                    continue
                candidates.extend(runner.expand(node))
            if not candidates:
                if runner.stats.dropped_candidates > dropped_before:
                    best = _best(seen_layers) if seen_layers else root
                    raise SearchExhaustedError("every candidate of the layer was dropped", best)
                break
            beam = select_top_k(candidates, cfg.beam_k)
            seen_layers.extend(beam)
            last_best = beam[0]
            if cfg.goal_anywhere:
                hit = next((n for n in beam if instance.check_goal(n.state)), None)
                if hit is not None:
                    last_best = hit
            if instance.check_goal(last_best.state):
                goal_hit = True
                break
    finally:
        runner.close()
        runner.stats.tokens = policy.tokens_used - tokens0
        runner.stats.wall_time = time.perf_counter() - t0

    if goal_hit:
        best = last_best
    elif seen_layers:
        best = _best(seen_layers)
    else:
        best = root
    return SearchResult(best, best.actions(), runner.stats, last_best, goal_hit, runner.trace)


def replay_trajectory(instance: TaskInstance, actions: Sequence) -> SearchState:
    """Re-apply ``actions`` from the initial state; raises ReplayError at the first illegal step."""
    return replay(instance, actions)
