"""Jigsaw rearrangement over an N x N patch permutation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..errors import GenerationError, InvalidActionError
from .base import SearchState, TaskInstance


@dataclass(frozen=True)
class JigsawView:
    # perm[slot] = original patch index (1-based) currently shown in that slot
    perm: Tuple[int, ...]


def is_bijection(perm: Sequence[int], size: int) -> bool:
    return len(perm) == size and sorted(perm) == list(range(1, size + 1))


def rearrange(perm: Sequence[int], proposal: Sequence[int]) -> Tuple[int, ...]:
    """Move patches so that new slot ``i`` shows what old slot ``proposal[i]`` showed."""
    return tuple(perm[p - 1] for p in proposal)


def inverse(perm: Sequence[int]) -> Tuple[int, ...]:
    inv = [0] * len(perm)
    for slot, patch in enumerate(perm, start=1):
        inv[patch - 1] = slot
    return tuple(inv)


class JigsawInstance(TaskInstance):
    kind = "jigsaw"
    open_actions = True

    def __init__(self, params: dict, seed: int, n: int, initial_perm: Sequence[int]):
        self.params = dict(params)
        self.seed = int(seed)
        self.n = int(n)
        self.initial_perm = tuple(int(v) for v in initial_perm)
        if not is_bijection(self.initial_perm, self.n * self.n):
            raise GenerationError("initial permutation is not a bijection")

    @property
    def size(self) -> int:
        return self.n * self.n

    @property
    def solved_perm(self) -> Tuple[int, ...]:
        return tuple(range(1, self.size + 1))

    def solution_for(self, state: SearchState) -> Tuple[int, ...]:
        """The proposal that restores the original order from ``state``."""
        return inverse(state.visual.perm)

    def initial_state(self) -> SearchState:
        return SearchState(JigsawView(self.initial_perm))

    def action_space(self, state: SearchState) -> List:
        # open action space: candidates come from the policy's proposer
        return []

    def validate_action(self, state: SearchState, action) -> None:
        try:
            proposal = tuple(int(v) for v in action)
        except (TypeError, ValueError) as exc:
            raise InvalidActionError(f"jigsaw proposal must be a sequence of ints: {action!r}") from exc
        if not is_bijection(proposal, self.size):
            raise InvalidActionError(f"proposal is not a bijection on 1..{self.size}")

    def transition(self, state: SearchState, action) -> JigsawView:
        return JigsawView(rearrange(state.visual.perm, tuple(int(v) for v in action)))

    def describe(self, action) -> str:
        rows = [list(action[i * self.n:(i + 1) * self.n]) for i in range(self.n)]
        return f"rearrange patches to {rows}"

    def check_goal(self, state: SearchState) -> bool:
        return state.visual.perm == self.solved_perm

    def true_utility(self, state: SearchState, action) -> float:
        new = rearrange(state.visual.perm, tuple(int(v) for v in action))
        return sum(1 for i, p in enumerate(new, start=1) if p == i) / self.size

    def action_to_json(self, action):
        return [int(v) for v in action]

    def action_from_json(self, data):
        return tuple(int(v) for v in data)

    def public_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params,
            "seed": self.seed,
            "n": self.n,
            "current_perm": list(self.initial_perm),
        }

    def truth_dict(self) -> dict:
        return {"solved_perm": list(self.solved_perm), "solution": list(inverse(self.initial_perm))}

    @classmethod
    def from_dicts(cls, public: dict, truth: Optional[dict] = None) -> "JigsawInstance":
        return cls(public["params"], public["seed"], public["n"], public["current_perm"])


def generate_jigsaw(params: dict, seed: int) -> JigsawInstance:
    n = int(params.get("n", 3))
    if not 2 <= n <= 8:
        raise GenerationError(f"jigsaw side must be in [2, 8], got {n}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 202, n]))
    size = n * n
    identity = tuple(range(1, size + 1))
    perm = identity
    while perm == identity:
        perm = tuple(int(v) + 1 for v in rng.permutation(size))
    return JigsawInstance({"n": n}, seed, n, perm)
