"""Action-observer beam search for tool-driven visual reasoning, with synthetic oracles and benchmarks."""

from .engine import BeamNode, SearchConfig, SearchResult, SearchStats, expand_node, replay_trajectory, run_search
from .scorekit import ScoreBreakdown, WeightConfig, adaptive_weights, final_score

__version__ = "0.1.0"

__all__ = [
    "BeamNode", "SearchConfig", "SearchResult", "SearchStats", "expand_node", "replay_trajectory", "run_search",
    "ScoreBreakdown", "WeightConfig", "adaptive_weights", "final_score",
]
