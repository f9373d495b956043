"""Scoring math: token aggregation, tempered softmax, entropy and adaptive fusion.

Everything here is a pure function of its inputs. Entropies are in nats
unless a WeightConfig asks for another logarithm base.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, ContractViolation, DegenerateInputError, InputError

DEFAULT_FLOOR = -20.0
_P_EPS = 1e-12


@dataclass(frozen=True)
class PositiveTokenSet:
    name: str
    tokens: tuple

    def __post_init__(self):
        tokens = tuple(self.tokens)
        if not tokens:
            raise ConfigurationError("positive token set must not be empty")
        if any(not t for t in tokens):
            raise ConfigurationError("token strings must be non-empty")
        if len(set(tokens)) != len(tokens):
            raise ConfigurationError(f"duplicate tokens in set {self.name!r}")
        object.__setattr__(self, "tokens", tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __len__(self):
        return len(self.tokens)


def _casings(*words):
    out = []
    for w in words:
        for v in (w, w.lower(), w.upper()):
            if v not in out:
                out.append(v)
    return tuple(out)


# Named sets from the token ablation. Matching is trimmed and case-sensitive,
# so each casing variant is listed explicitly.
TOKEN_SETS = {
    "yes-no": PositiveTokenSet("yes-no", _casings("Yes")),
    "true-false": PositiveTokenSet("true-false", _casings("True")),
    "correct-incorrect": PositiveTokenSet("correct-incorrect", _casings("Correct")),
    "all-combined": PositiveTokenSet("all-combined", _casings("Yes", "True", "Correct")),
}
DEFAULT_TOKEN_SET = TOKEN_SETS["all-combined"]


@dataclass(frozen=True)
class WeightConfig:
    """Hyperparameters of the entropy-adaptive fusion.

    ``beta`` and ``mu`` shape the sigmoid, ``tau`` is the prior softmax
    temperature and ``delta`` the entropy below which the observer is skipped.
    """

    beta: float = 2.0
    mu: float = 0.5
    tau: float = 0.5
    delta: float = 1.84
    # None means "use the sigmoid"; a float pins w_p (ablation strategies).
    forced_w_p: Optional[float] = None
    # logarithm base of the prior entropy that mu and delta are compared against
    entropy_base: float = math.e

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigurationError(f"beta must be > 0, got {self.beta}")
        if not self.tau > 0:
            raise ConfigurationError(f"tau must be > 0, got {self.tau}")
        if not self.mu >= 0:
            raise ConfigurationError(f"mu must be >= 0, got {self.mu}")
        if not self.delta >= 0:
            raise ConfigurationError(f"delta must be >= 0, got {self.delta}")
        if self.forced_w_p is not None and not 0.0 <= self.forced_w_p <= 1.0:
            raise ConfigurationError("forced_w_p must lie in [0, 1]")
        if not (self.entropy_base > 0 and self.entropy_base != 1):
            raise ConfigurationError(f"entropy_base must be positive and != 1, got {self.entropy_base}")


@dataclass(frozen=True)
class ScoreBreakdown:
    f_pri: float
    f_obs: Optional[float]
    f_heur: float
    entropy: float
    w_p: float
    w_o: float
    final: float

    @property
    def observer_used(self) -> bool:
        return self.f_obs is not None

    def to_dict(self) -> dict:
        return {
            "f_pri": self.f_pri,
            "f_obs": self.f_obs,
            "f_heur": self.f_heur,
            "entropy": self.entropy,
            "w_p": self.w_p,
            "w_o": self.w_o,
            "final": self.final,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScoreBreakdown":
        return cls(**{k: d[k] for k in ("f_pri", "f_obs", "f_heur", "entropy", "w_p", "w_o", "final")})


ROOT_BREAKDOWN = ScoreBreakdown(0.0, None, 0.0, 0.0, 1.0, 0.0, 0.0)


def aggregate_positive_logprob(
    logprobs: Mapping[str, float],
    token_set: Sequence[str],
    floor: float = DEFAULT_FLOOR,
) -> float:
    """Sum the log-probabilities of the positive tokens.

    Tokens missing from ``logprobs`` (truncated top-k responses) contribute
    ``floor`` each.
    """
    tokens = tuple(token_set)
    if not tokens:
        raise ConfigurationError("positive token set must not be empty")
    if not math.isfinite(floor) or floor > 0:
        raise ConfigurationError(f"floor must be finite and <= 0, got {floor}")
    total = 0.0
    for tok in tokens:
        lp = logprobs.get(tok)
        if lp is None:
            total += floor
            continue
        if not math.isfinite(lp):
            raise InputError(f"non-finite log-probability for token {tok!r}")
        total += lp
    return total


def softmax_with_temperature(raw_scores: Sequence[float], tau: float = 0.5) -> np.ndarray:
    if not tau > 0:
        raise ConfigurationError(f"tau must be > 0, got {tau}")
    x = np.asarray(raw_scores, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise InputError("raw scores must be a non-empty vector")
    if not np.all(np.isfinite(x)):
        raise InputError("raw scores must be finite")
    z = (x - x.max()) / tau
    e = np.exp(z)
    return e / e.sum()


def shannon_entropy(dist: Sequence[float], base: float = math.e) -> float:
    """Entropy in nats by default; terms with p < 1e-12 are dropped."""
    p = np.asarray(dist, dtype=np.float64)
    mask = p >= _P_EPS
    q = p[mask]
    h = float(-(q * np.log(q)).sum()) if q.size else 0.0
    return h if base == math.e else h / math.log(base)


def adaptive_weights(entropy: float, cfg: WeightConfig = WeightConfig()) -> tuple:
    """Return ``(w_p, w_o)``; ``w_p`` is a decreasing sigmoid of the entropy."""
    if cfg.forced_w_p is not None:
        w_p = float(cfg.forced_w_p)
        return w_p, 1.0 - w_p
    z = cfg.beta * (entropy - cfg.mu)
    # two branches keep exp() from overflowing at either tail
    if z >= 0:
        e = math.exp(-z)
        w_p = e / (1.0 + e)
    else:
        w_p = 1.0 / (1.0 + math.exp(z))
    return w_p, 1.0 - w_p


def observer_active(entropy: float, cfg: WeightConfig) -> bool:
    return entropy >= cfg.delta


def final_score(
    f_pri: float,
    f_obs: Optional[float],
    f_heur: float,
    entropy: float,
    cfg: WeightConfig = WeightConfig(),
) -> ScoreBreakdown:
    w_p, w_o = adaptive_weights(entropy, cfg)
    active = observer_active(entropy, cfg)
    if active and f_obs is None:
        raise ContractViolation(
            f"entropy {entropy:.6g} >= delta {cfg.delta:.6g} requires an observer score"
        )
    obs_term = w_o * f_obs if (active and f_obs is not None) else 0.0
    total = w_p * f_pri + obs_term + f_heur
    return ScoreBreakdown(
        f_pri=float(f_pri),
        f_obs=None if f_obs is None else float(f_obs),
        f_heur=float(f_heur),
        entropy=float(entropy),
        w_p=w_p,
        w_o=w_o,
        final=float(total),
    )


def optimal_weight(var_pri: float, var_obs: float) -> float:
    """Inverse-variance optimum for the prior weight."""
    if var_pri < 0 or var_obs < 0:
        raise DegenerateInputError("variances must be non-negative")
    denom = var_pri + var_obs
    if denom == 0:
        raise DegenerateInputError("both variances are zero")
    return var_obs / denom


def gaussian_entropy(variance: float) -> float:
    """Differential entropy of N(., variance) in nats."""
    return 0.5 * math.log(2.0 * math.pi * math.e * variance)


def fused_mse(w_p: float, var_pri: float, var_obs: float) -> float:
    """Closed-form MSE of ``w_p*Q_pri + (1-w_p)*Q_obs`` for independent unbiased estimates."""
    return w_p**2 * var_pri + (1.0 - w_p) ** 2 * var_obs
