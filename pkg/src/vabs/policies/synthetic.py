"""Noisy ground-truth oracle and the uniform baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from ..errors import ConfigurationError, InvalidActionError
from .base import ROLE_OBSERVER, ROLE_PRIOR, ROLE_PROPOSE, PolicyBackend, derived_rng


@dataclass(frozen=True)
class SyntheticOracleConfig:
    sigma_pri: float = 0.0
    sigma_obs: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_pri < 0 or self.sigma_obs < 0:
            raise ConfigurationError("noise standard deviations must be >= 0")


def synthetic_score_prior(instance, state, actions, cfg: SyntheticOracleConfig, stream=()) -> List[float]:
    """True utility plus N(0, sigma_pri) per candidate."""
    out = []
    for b, action in enumerate(actions):
        q = instance.true_utility(state, action)
        if cfg.sigma_pri > 0:
            q += cfg.sigma_pri * derived_rng(cfg.seed, tuple(stream) + (b,), ROLE_PRIOR).standard_normal()
        out.append(float(q))
    return out


def synthetic_score_observer(instance, parent_state, action, cfg: SyntheticOracleConfig, stream=()) -> float:
    """True utility of the transition that produced the child plus N(0, sigma_obs)."""
    q = instance.true_utility(parent_state, action)
    if cfg.sigma_obs > 0:
        q += cfg.sigma_obs * derived_rng(cfg.seed, stream, ROLE_OBSERVER).standard_normal()
    return float(q)


def _perturb_permutation(rng, perm, max_swaps=3):
    p = list(perm)
    for _ in range(int(rng.integers(1, max_swaps + 1))):
        i, j = rng.choice(len(p), size=2, replace=False)
        p[i], p[j] = p[j], p[i]
    return tuple(p)


def _perturb_fill(rng, fill):
    f = [list(t) for t in fill]
    k = int(rng.integers(1, min(3, len(f)) + 1))
    for idx in rng.choice(len(f), size=k, replace=False):
        old = f[idx][2]
        f[idx][2] = int(rng.choice([d for d in range(1, 10) if d != old]))
    return tuple(tuple(t) for t in f)


def synthetic_proposals(instance, state, n_cands: int, rng, fill_per_step=None) -> list:
    """Hidden solution plus ``n_cands - 1`` distinct perturbations, in shuffled order."""
    if n_cands < 1:
        raise ConfigurationError("n_cands must be >= 1")
    if instance.kind == "jigsaw":
        solution = instance.solution_for(state)
        perturb = _perturb_permutation
    elif instance.kind == "sudoku":
        empties = instance.empty_cells(state)
        if not empties:
            return []
        if fill_per_step:
            empties = empties[:fill_per_step]
        solution = tuple((r, c, instance.solution[9 * r + c]) for r, c in empties)
        perturb = _perturb_fill
    else:
        raise InvalidActionError(f"task {instance.kind!r} has a closed action space")
    out = [solution]
    tries = 0
    while len(out) < n_cands and tries < 50 * n_cands:
        tries += 1
        cand = perturb(rng, solution)
        if cand not in out:
            out.append(cand)
    order = rng.permutation(len(out))
    return [out[i] for i in order]


def random_proposals(instance, state, n_cands: int, rng) -> list:
    out = []
    if instance.kind == "jigsaw":
        for _ in range(n_cands):
            out.append(tuple(int(v) + 1 for v in rng.permutation(instance.size)))
    elif instance.kind == "sudoku":
        empties = instance.empty_cells(state)
        if not empties:
            return []
        for _ in range(n_cands):
            out.append(tuple((r, c, int(rng.integers(1, 10))) for r, c in empties))
    else:
        raise InvalidActionError(f"task {instance.kind!r} has a closed action space")
    return out


class SyntheticPolicy(PolicyBackend):
    """Ground-truth utility corrupted by independent Gaussian noise per role."""

    name = "synthetic"

    def __init__(self, cfg: SyntheticOracleConfig = SyntheticOracleConfig(), fill_per_step=None):
        self.cfg = cfg
        self.seed = cfg.seed
        self.fill_per_step = fill_per_step

    def score_prior_batch(self, instance, state, actions, stream):
        return synthetic_score_prior(instance, state, actions, self.cfg, stream)

    def score_observer(self, instance, parent_state, action, child_state, stream):
        return synthetic_score_observer(instance, parent_state, action, self.cfg, stream)

    def propose(self, instance, state, n_cands, stream):
        rng = derived_rng(self.seed, stream, ROLE_PROPOSE)
        return synthetic_proposals(instance, state, n_cands, rng, self.fill_per_step)


class UniformPolicy(PolicyBackend):
    """Scores every candidate equally; proposals are uniformly random."""

    name = "uniform"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def score_prior_batch(self, instance, state, actions, stream):
        return [0.0] * len(actions)

    def score_observer(self, instance, parent_state, action, child_state, stream):
        return 0.0

    def propose(self, instance, state, n_cands, stream):
        return random_proposals(instance, state, n_cands, derived_rng(self.seed, stream, ROLE_PROPOSE))
