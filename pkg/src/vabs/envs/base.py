"""Shared state types and the task-instance protocol."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Hashable, List, Sequence, Tuple

from ..errors import InvalidActionError


@dataclass(frozen=True)
class SearchState:
    """MDP state: task-specific visual context plus the action-description history."""

    visual: Hashable
    history: Tuple[str, ...] = ()

    @property
    def depth(self) -> int:
        return len(self.history)

    def extend(self, visual, description: str) -> "SearchState":
        return SearchState(visual=visual, history=self.history + (description,))


class TaskInstance:
    """Base class for generated environment instances.

    Subclasses are immutable after construction and all transition methods
    are pure, so one instance can be shared across threads.
    """

    kind: str = ""
    #: True when candidate actions come from a proposer rather than a fixed set.
    open_actions: bool = False

    # identity used for regeneration and dataset references
    params: dict
    seed: int

    def initial_state(self) -> SearchState:
        raise NotImplementedError

    def action_space(self, state: SearchState) -> List[Any]:
        raise NotImplementedError

    def validate_action(self, state: SearchState, action) -> None:
        """Raise InvalidActionError if ``action`` is structurally invalid at ``state``."""
        raise NotImplementedError

    def transition(self, state: SearchState, action):
        """Return the child visual context for a validated action."""
        raise NotImplementedError

    def describe(self, action) -> str:
        raise NotImplementedError

    def apply_action(self, state: SearchState, action) -> SearchState:
        self.validate_action(state, action)
        return state.extend(self.transition(state, action), self.describe(action))

    def heuristic_score(self, state: SearchState) -> float:
        return 0.0

    def check_goal(self, state: SearchState) -> bool:
        raise NotImplementedError

    def is_terminal(self, state: SearchState) -> bool:
        """Goal reached or no further expansion is meaningful."""
        return self.check_goal(state)

    def true_utility(self, state: SearchState, action) -> float:
        raise NotImplementedError

    def is_optimal_action(self, state: SearchState, action) -> bool:
        return self.true_utility(state, action) >= 1.0

    # serialization; subclasses fill these in
    def public_dict(self) -> dict:
        raise NotImplementedError

    def truth_dict(self) -> dict:
        raise NotImplementedError

    def action_to_json(self, action):
        return action

    def action_from_json(self, data):
        return data


def replay(instance: TaskInstance, actions: Sequence) -> SearchState:
    from ..errors import ReplayError

    state = instance.initial_state()
    for i, action in enumerate(actions):
        try:
            state = instance.apply_action(state, action)
        except InvalidActionError as exc:
            raise ReplayError(i, str(exc)) from exc
    return state
