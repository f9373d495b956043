"""Prior/observer misalignment measurement and Monte-Carlo checks of inverse-variance fusion."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from scipy import stats

from .envs import generate_instance
from .errors import ConfigurationError, InputError
from .policies import SyntheticOracleConfig
from .policies.synthetic import synthetic_score_observer, synthetic_score_prior
from .scorekit import WeightConfig, adaptive_weights, gaussian_entropy, optimal_weight, softmax_with_temperature

log = logging.getLogger(__name__)

FUSION_RULES = ("fixed", "entropy-adaptive", "optimal")
CHUNK = 10_000
# minimum cosine between two points of the probability simplex (attained by disjoint one-hots)
COS_MIN = 0.0


def _as_distribution(x, name):
    p = np.asarray(x, dtype=np.float64)
    if p.ndim != 1:
        raise InputError(f"{name} must be a vector")
    if not np.all(np.isfinite(p)) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
        raise InputError(f"{name} is not a probability distribution")
    return p


def iao_similarity(f_pri: Sequence[float], f_obs: Sequence[float]) -> float:
    """Scaled cosine similarity between prior and observed confidence vectors.

    The raw cosine is rescaled by ``(cos - COS_MIN) / (1 - COS_MIN)`` so that the
    attainable range over pairs of distributions maps onto [0, 1].
    """
    p, q = _as_distribution(f_pri, "f_pri"), _as_distribution(f_obs, "f_obs")
    if p.size != q.size:
        raise InputError(f"length mismatch: {p.size} vs {q.size}")
    if p.size < 2:
        raise InputError("need at least two actions")
    if np.array_equal(p, q):
        return 1.0
    cos = float(p @ q / (np.linalg.norm(p) * np.linalg.norm(q)))
    return float(np.clip((cos - COS_MIN) / (1.0 - COS_MIN), 0.0, 1.0))


# ---------------------------------------------------------------- fusion MSE

@dataclass(frozen=True)
class FusionRow:
    var_pri: float
    var_obs: float
    rule: str
    w: float
    mse: float
    stderr: float


def weight_grid(step: float = 0.05) -> np.ndarray:
    n = int(round(1.0 / step))
    if not math.isclose(n * step, 1.0):
        raise ConfigurationError("weight grid step must divide 1")
    return np.round(np.linspace(0.0, 1.0, n + 1), 10)


def entropy_adaptive_weight(var_pri: float, cfg: WeightConfig = WeightConfig()) -> float:
    """Sigmoid prior weight evaluated at the Gaussian entropy of the prior's noise."""
    return adaptive_weights(gaussian_entropy(var_pri), cfg)[0]


def simulate_fusion_mse(var_pri: float, var_obs: float, rules: Sequence[str] = FUSION_RULES,
                        trials: int = 100_000, seed: int = 0, step: float = 0.05,
                        cfg: WeightConfig = WeightConfig()) -> List[FusionRow]:
    """Empirical MSE of ``w Q_pri + (1-w) Q_obs`` for each weight rule.

    All rules share the same noise draws (common random numbers), so
    differences between rules are not blurred by sampling noise. Draws are
    produced in fixed-size chunks, each from its own spawned seed stream.
    """
    if trials < 10_000:
        raise ConfigurationError("trials must be >= 10^4")
    if var_pri < 0 or var_obs < 0:
        raise ConfigurationError("variances must be >= 0")
    unknown = set(rules) - set(FUSION_RULES)
    if unknown:
        raise ConfigurationError(f"unknown weight rules {sorted(unknown)}")

    plan = []  # (rule, w)
    if "fixed" in rules:
        plan += [("fixed", float(w)) for w in weight_grid(step)]
    if "entropy-adaptive" in rules:
        plan.append(("entropy-adaptive", entropy_adaptive_weight(var_pri, cfg)))
    if "optimal" in rules:
        plan.append(("optimal", optimal_weight(var_pri, var_obs)))
    w = np.array([p[1] for p in plan])

    sd_p, sd_o = math.sqrt(var_pri), math.sqrt(var_obs)
    s1 = np.zeros(len(plan))
    s2 = np.zeros(len(plan))
    children = np.random.SeedSequence(seed).spawn(math.ceil(trials / CHUNK))
    done = 0
    for child in children:
        m = min(CHUNK, trials - done)
        rng = np.random.default_rng(child)
        q_star = rng.standard_normal(m)
        q_pri = q_star + sd_p * rng.standard_normal(m)
        q_obs = q_star + sd_o * rng.standard_normal(m)
        err2 = (w[:, None] * q_pri + (1.0 - w[:, None]) * q_obs - q_star) ** 2
        s1 += err2.sum(axis=1)
        s2 += (err2 ** 2).sum(axis=1)
        done += m
    mse = s1 / trials
    var = np.maximum(s2 / trials - mse ** 2, 0.0)
    se = np.sqrt(var / trials)
    return [FusionRow(float(var_pri), float(var_obs), rule, float(wi), float(m_), float(e_))
            for (rule, wi), m_, e_ in zip(plan, mse, se)]


def fusion_sweep(var_pri_values: Sequence[float], var_obs_values: Sequence[float], trials: int = 100_000,
                 seed: int = 0, step: float = 0.05, cfg: WeightConfig = WeightConfig()) -> List[FusionRow]:
    rows = []
    for i, vp in enumerate(var_pri_values):
        for j, vo in enumerate(var_obs_values):
            cell_seed = int(np.random.SeedSequence([seed, i, j]).generate_state(1)[0])
            rows += simulate_fusion_mse(vp, vo, FUSION_RULES, trials, cell_seed, step, cfg)
    return rows


def pick(rows: Sequence[FusionRow], rule: str, w: Optional[float] = None) -> FusionRow:
    for r in rows:
        if r.rule == rule and (w is None or math.isclose(r.w, w, abs_tol=1e-9)):
            return r
    raise KeyError((rule, w))


def grid_minimizer(rows: Sequence[FusionRow]) -> float:
    fixed = [r for r in rows if r.rule == "fixed"]
    return min(fixed, key=lambda r: r.mse).w


def write_rows_csv(rows: Sequence, path) -> Path:
    """One CSV per sweep; columns follow the row dataclass field order."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        raise InputError("nothing to write")
    with p.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f.name for f in fields(rows[0])])
        for r in rows:
            w.writerow(astuple(r))
    return p


# ---------------------------------------------------------------- entropy tracking

@dataclass(frozen=True)
class TrackingRow:
    sigma_pri: float
    entropy: float
    entropy_empirical: float
    w_p_sigmoid: float
    w_p_sigmoid_beta2: float
    w_p_star: float


@dataclass
class TrackingTable:
    rows: List[TrackingRow]
    spearman: float


def entropy_weight_tracking(sigma_values: Sequence[float], cfg: WeightConfig = WeightConfig(),
                            var_obs: float = 1.0, trials: int = 0, seed: int = 0) -> TrackingTable:
    """Sigmoid weight vs inverse-variance optimum along a sweep of prior noise levels.

    The entropy is the analytic Gaussian one. With ``trials > 0`` an empirical
    estimate from samples is reported alongside it (NaN otherwise). The weight
    is given both for ``cfg.beta`` and for beta=2, the Gaussian case.
    """
    if len(sigma_values) == 0:
        raise ConfigurationError("sigma sweep must not be empty")
    rows = []
    for k, s in enumerate(sigma_values):
        if not s > 0:
            raise ConfigurationError("sigma values must be > 0")
        h = gaussian_entropy(s * s)
        h_emp = float("nan")
        if trials > 0:
            draws = s * np.random.default_rng([seed, k]).standard_normal(trials)
            h_emp = float(stats.differential_entropy(draws))
        w_sig = adaptive_weights(h, cfg)[0]
        w_sig2 = adaptive_weights(h, WeightConfig(beta=2.0, mu=cfg.mu, tau=cfg.tau, delta=cfg.delta))[0]
        rows.append(TrackingRow(float(s), h, h_emp, w_sig, w_sig2, float(optimal_weight(s * s, var_obs))))
    if len(rows) > 1:
        rho = float(stats.spearmanr([r.w_p_sigmoid for r in rows], [r.w_p_star for r in rows]).statistic)
    else:
        rho = float("nan")
    return TrackingTable(rows, rho)


# ---------------------------------------------------------------- IAO bias on synthetic navigation

@dataclass(frozen=True)
class IaoRow:
    sigma_pri: float
    sigma_obs: float
    transitions: int
    mean_similarity: float
    stderr: float


def sample_transitions(n: int, task: str = "frozen-lake", params: Optional[dict] = None, seed: int = 0):
    """``n`` (instance, state, actions) triples from random walks on generated grids."""
    params = params or {"size": 6}
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB1A5]))
    out = []
    inst_seed = seed
    while len(out) < n:
        inst = generate_instance(task, params, inst_seed)
        inst_seed += 1
        state = inst.initial_state()
        for _ in range(2 * inst.diameter):
            actions = inst.action_space(state)
            if len(actions) < 2:
                break
            out.append((inst, state, actions))
            if len(out) >= n:
                break
            nxt = [a for a in actions if inst.true_utility(state, a) > 0]
            if not nxt:
                break
            state = inst.apply_action(state, nxt[int(rng.integers(len(nxt)))])
            if inst.is_terminal(state):
                break
    return out


def iao_sweep(sigma_pri_values: Sequence[float], sigma_obs: float = 0.1, n_transitions: int = 500,
              seed: int = 0, tau: float = 0.5, observer_tau: float = 1.0, task: str = "frozen-lake",
              params: Optional[dict] = None) -> List[IaoRow]:
    """Mean prior/observer similarity per prior noise level on the same transitions.

    Priors are softmaxed at ``tau`` and observer scores across siblings at
    ``observer_tau``, exactly as the search engine does.
    """
    transitions = sample_transitions(n_transitions, task, params, seed)
    rows = []
    for s in sigma_pri_values:
        cfg = SyntheticOracleConfig(float(s), float(sigma_obs), seed)
        sims = []
        for t, (inst, state, actions) in enumerate(transitions):
            stream = (t,)
            f_pri = softmax_with_temperature(synthetic_score_prior(inst, state, actions, cfg, stream), tau)
            obs = [synthetic_score_observer(inst, state, a, cfg, stream + (b,)) for b, a in enumerate(actions)]
            f_obs = softmax_with_temperature(obs, observer_tau)
            sims.append(iao_similarity(f_pri, f_obs))
        arr = np.asarray(sims)
        se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
        rows.append(IaoRow(float(s), float(sigma_obs), int(arr.size), float(arr.mean()), se))
    return rows


__all__ = [
    "COS_MIN", "FUSION_RULES", "FusionRow", "IaoRow", "TrackingRow", "TrackingTable",
    "entropy_adaptive_weight", "entropy_weight_tracking", "fusion_sweep", "grid_minimizer",
    "iao_similarity", "iao_sweep", "pick", "sample_transitions", "simulate_fusion_mse",
    "weight_grid", "write_rows_csv",
]
