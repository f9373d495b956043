"""The scoring-backend contract and deterministic per-candidate random streams."""

from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np

# role tags appended to a stream key
ROLE_PRIOR = 0
ROLE_OBSERVER = 1
ROLE_PROPOSE = 2

Stream = Tuple[int, ...]


def derived_rng(seed: int, stream: Stream, role: int) -> np.random.Generator:
    """Generator keyed by (seed, stream, role); independent of call order."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed) & (2**64 - 1),
                                                         spawn_key=tuple(stream) + (role,)))


class PolicyBackend:
    """Thinker/observer scoring oracle.

    Raw scores live in whatever space the backend produces (utility units for
    the synthetic oracle, summed log-probabilities for remote models); the
    engine turns them into distributions with the same softmax path.
    """

    name = "base"
    seed: int = 0
    #: whether the engine may call this backend from several threads at once
    concurrent: bool = True
    max_in_flight: int = 1 << 16

    def score_prior_batch(self, instance, state, actions: Sequence, stream: Stream) -> List[float]:
        raise NotImplementedError

    def score_observer(self, instance, parent_state, action, child_state, stream: Stream) -> float:
        raise NotImplementedError

    def propose(self, instance, state, n_cands: int, stream: Stream) -> List:
        raise NotImplementedError(f"{self.name} backend cannot propose open actions")

    @property
    def tokens_used(self) -> int:
        return 0
