"""Balanced Yes/No verification pairs for fine-tuning a verifier.

Every record names its instance by ``(kind, params, seed)`` and its state by
the action history from the initial state, so the generator can be re-run to
check labels. The fine-tuning objective a consumer is expected to optimize is
the cross-entropy of the single answer token::

    L = -log p(y | s_t, a_t),   y in {"Yes", "No"}

which pushes the model's positive-token mass toward correct actions.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from .envs import cached_instance, generate_instance, replay
from .envs.visual_search import QUADRANT_NAMES, QUADRANTS
from .errors import ConfigurationError, DatasetParseError, GenerationError, ReplayError
from .policies.prompts import get_template, render_prompt
from .policies.synthetic import _perturb_permutation

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
NAV_TASK = "frozen-lake"
SEARCH_QUESTION = "Where in the image is the target object, and what does it look like?"
PERCEPTION_TEMPLATE = (
    "There is the map image {img}. Look at the cell in row {row}, column {col} "
    "(counting from 1 at the top-left).\n\nQuestion: Is this cell a hole?\nPlease answer Yes or No."
)
REQUIRED_FIELDS = {
    "schema_version": int, "id": str, "category": str, "pair": int, "task": str, "instance": dict,
    "state": list, "action": object, "label": str, "rendered_prompt": str,
}


@dataclass(frozen=True)
class DatasetSpec:
    """Per-category record counts; each category splits evenly into Yes and No."""

    search_correct: int = 3520
    search_error: int = 3520
    nav_perception: int = 4000
    nav_correct: int = 5000
    nav_error: int = 5000
    jigsaw3_correct: int = 10000
    jigsaw3_error: int = 10000
    jigsaw4_correct: int = 10000
    jigsaw4_error: int = 10000
    jigsaw5_correct: int = 10000
    jigsaw5_error: int = 10000
    seed: int = 0
    nav_size: int = 4
    search_width: int = 2000
    search_height: int = 1500
    # give up on a category after this many generation attempts per requested pair
    max_attempts_per_pair: int = 50

    def __post_init__(self):
        for name, value in asdict(self).items():
            if name != "seed" and value < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        for a, b in (("search_correct", "search_error"), ("nav_correct", "nav_error"),
                     ("jigsaw3_correct", "jigsaw3_error"), ("jigsaw4_correct", "jigsaw4_error"),
                     ("jigsaw5_correct", "jigsaw5_error")):
            if getattr(self, a) != getattr(self, b):
                raise ConfigurationError(f"{a} and {b} must be equal")
        if self.nav_perception % 2:
            raise ConfigurationError("nav_perception must be even")

    @classmethod
    def empty(cls, **kw) -> "DatasetSpec":
        zero = {f: 0 for f in ("search_correct", "search_error", "nav_perception", "nav_correct", "nav_error",
                               "jigsaw3_correct", "jigsaw3_error", "jigsaw4_correct", "jigsaw4_error",
                               "jigsaw5_correct", "jigsaw5_error")}
        zero.update(kw)
        return cls(**zero)

    def categories(self) -> List[Tuple[str, int]]:
        """``(category, pairs)`` in output order."""
        return [
            ("search-crop", self.search_correct),
            ("nav-perception", self.nav_perception // 2),
            ("nav-action", self.nav_correct),
            ("jigsaw-3", self.jigsaw3_correct),
            ("jigsaw-4", self.jigsaw4_correct),
            ("jigsaw-5", self.jigsaw5_correct),
        ]

    @property
    def total(self) -> int:
        return 2 * sum(n for _, n in self.categories())


# ---------------------------------------------------------------- rendering

def image_ref(kind: str, seed: int, tag: str) -> str:
    """Opaque handle for an image the consumer renders from the instance reference."""
    return f"<image:{kind}:{seed}:{tag}>"


def _digest(obj) -> str:
    return hashlib.sha1(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:12]


def _record(category, pair, idx, instance, history, action_json, label, prompt, extra=None):
    rec = {
        "schema_version": SCHEMA_VERSION,
        "id": f"{category}-{idx:06d}",
        "category": category,
        "pair": pair,
        "task": instance.kind,
        "instance": {"kind": instance.kind, "params": instance.params, "seed": instance.seed},
        "state": [instance.action_to_json(a) for a in history],
        "action": action_json,
        "label": label,
        "rendered_prompt": prompt,
    }
    if extra:
        rec.update(extra)
    return rec


def _nav_action_prompt(instance, state, action) -> str:
    view = image_ref(instance.kind, instance.seed, f"step{state.depth}")
    return render_prompt(get_template("thinker", instance.kind),
                         {"img-url": view, "direction": "Upper" if action == "Up" else action,
                          "position": "human"})


def _search_prompt(instance, state, quadrant) -> str:
    view = image_ref(instance.kind, instance.seed, f"view{state.depth}")
    return render_prompt(get_template("thinker", instance.kind),
                         {"question": SEARCH_QUESTION, "img-url": view, "quadrant": QUADRANT_NAMES[quadrant]})


def _jigsaw_prompt(instance, action) -> str:
    # the rearranged image is named by a digest so neither the permutation nor the label shows
    after = image_ref(instance.kind, instance.seed, "arranged-" + _digest([instance.seed, list(action)]))
    return render_prompt(get_template("observer", instance.kind),
                         {"img-url": [image_ref(instance.kind, instance.seed, "original"), after]})


def _perception_prompt(instance, cell) -> str:
    return PERCEPTION_TEMPLATE.format(img=image_ref(instance.kind, instance.seed, "step0"),
                                      row=cell[0] + 1, col=cell[1] + 1)


# ---------------------------------------------------------------- per-category generators

def _category_rng(seed: int, category: str) -> Tuple[np.random.Generator, int]:
    ss = np.random.SeedSequence([seed, int(_digest(category), 16) & 0xFFFFFFFF])
    base = int(ss.generate_state(1)[0]) & 0x3FFFFFFF
    return np.random.default_rng(ss), base


def _pairs_search(spec, n_pairs, rng, base) -> Iterator[tuple]:
    params = {"width": spec.search_width, "height": spec.search_height}
    k = 0
    while True:
        inst = generate_instance("visual-search", params, base + k)
        k += 1
        state, hist = inst.initial_state(), []
        while not inst.is_terminal(state):
            utils = {q: inst.true_utility(state, q) for q in QUADRANTS}
            good = [q for q in QUADRANTS if utils[q] >= 1.0]
            bad = [q for q in QUADRANTS if utils[q] < 1.0]
            if not good:
                break
            if bad:
                yes = good[int(rng.integers(len(good)))]
                no = bad[int(rng.integers(len(bad)))]
                yield inst, state, hist, yes, no
            step = good[int(rng.integers(len(good)))]
            state, hist = inst.apply_action(state, step), hist + [step]


def _pairs_nav(spec, n_pairs, rng, base) -> Iterator[tuple]:
    k = 0
    while True:
        inst = generate_instance(NAV_TASK, {"size": spec.nav_size}, base + k)
        k += 1
        state, hist = inst.initial_state(), []
        for move in inst.unique_moves:
            actions = inst.action_space(state)
            good = [a for a in actions if inst.is_optimal_action(state, a)]
            bad = [a for a in actions if not inst.is_optimal_action(state, a)]
            if good and bad:
                yield inst, state, hist, good[int(rng.integers(len(good)))], bad[int(rng.integers(len(bad)))]
            state, hist = inst.apply_action(state, move), hist + [move]


def _pairs_perception(spec, n_pairs, rng, base) -> Iterator[tuple]:
    k = 0
    while True:
        inst = generate_instance(NAV_TASK, {"size": spec.nav_size}, base + k)
        k += 1
        holes = [(r, c) for r, row in enumerate(inst.grid) for c, ch in enumerate(row) if ch == "H"]
        safe = [(r, c) for r, row in enumerate(inst.grid) for c, ch in enumerate(row) if ch != "H"]
        if holes and safe:
            yield inst, inst.initial_state(), [], holes[int(rng.integers(len(holes)))], safe[int(rng.integers(len(safe)))]


def _pairs_jigsaw(n):
    def gen(spec, n_pairs, rng, base):
        k = 0
        while True:
            inst = generate_instance("jigsaw", {"n": n}, base + k)
            k += 1
            state = inst.initial_state()
            yes = inst.solution_for(state)
            no = yes
            while no == yes:  # two swaps of the same pair cancel out
                no = _perturb_permutation(rng, yes)
            yield inst, state, [], yes, no
    return gen


_GENERATORS = {
    "search-crop": _pairs_search,
    "nav-perception": _pairs_perception,
    "nav-action": _pairs_nav,
    "jigsaw-3": _pairs_jigsaw(3),
    "jigsaw-4": _pairs_jigsaw(4),
    "jigsaw-5": _pairs_jigsaw(5),
}


def _pair_key(category, inst, state, yes, no):
    """Content key used to keep generated pairs unique (seeds are excluded on purpose)."""
    if category.startswith("jigsaw"):
        return (category, inst.initial_perm)
    if category.startswith("nav"):
        return (category, tuple(inst.grid), state.visual.pos, yes, no)
    return (category, inst.target_box, state.visual.region, yes, no)


def generate_category(spec: DatasetSpec, category: str, n_pairs: int) -> List[dict]:
    """Records for one category: Yes then No for each pair, pairs in index order."""
    if n_pairs == 0:
        return []
    rng, base = _category_rng(spec.seed, category)
    source = _GENERATORS[category](spec, n_pairs, rng, base)
    seen = set()
    out = []
    budget = spec.max_attempts_per_pair * n_pairs
    for attempt, (inst, state, history, yes, no) in enumerate(source):
        if attempt >= budget:
            raise GenerationError(
                f"{category}: only {len(out) // 2} unique pairs after {budget} attempts, {n_pairs} requested"
            )
        key = _pair_key(category, inst, state, yes, no)
        if key in seen:
            continue
        seen.add(key)
        pair = len(out) // 2
        if category == "nav-perception":
            out.append(_record(category, pair, len(out), inst, history, {"query": "hole", "cell": list(yes)},
                               "Yes", _perception_prompt(inst, yes)))
            out.append(_record(category, pair, len(out), inst, history, {"query": "hole", "cell": list(no)},
                               "No", _perception_prompt(inst, no)))
        else:
            for action, label in ((yes, "Yes"), (no, "No")):
                if category == "search-crop":
                    prompt = _search_prompt(inst, state, action)
                elif category == "nav-action":
                    prompt = _nav_action_prompt(inst, state, action)
                else:
                    prompt = _jigsaw_prompt(inst, action)
                out.append(_record(category, pair, len(out), inst, history, inst.action_to_json(action),
                                   label, prompt))
        if len(out) >= 2 * n_pairs:
            break
    return out


def _category_job(args):
    spec, category, n = args
    return generate_category(spec, category, n)


@dataclass
class DatasetStats:
    total: int
    per_category: Dict[str, Dict[str, int]]
    yes: int
    no: int
    yes_no_ratio: Optional[float]
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"


def compute_stats(records: List[dict]) -> DatasetStats:
    per = {}
    for r in records:
        per.setdefault(r["category"], Counter())[r["label"]] += 1
    yes = sum(c["Yes"] for c in per.values())
    no = sum(c["No"] for c in per.values())
    return DatasetStats(
        total=len(records),
        per_category={k: {"Yes": v["Yes"], "No": v["No"], "total": v["Yes"] + v["No"]} for k, v in per.items()},
        yes=yes, no=no, yes_no_ratio=(yes / no) if no else None,
    )


def generate_pairs(spec: DatasetSpec, out_path, workers: int = 1) -> DatasetStats:
    """Write the dataset as JSON Lines plus a ``.stats.json`` report next to it."""
    jobs = [(spec, cat, n) for cat, n in spec.categories()]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            chunks = list(pool.map(_category_job, jobs))
    else:
        chunks = [_category_job(j) for j in jobs]
    records = [r for chunk in chunks for r in chunk]
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n")
    stats = compute_stats(records)
    stats_path(out).write_text(stats.to_json(), encoding="utf-8")
    log.info("wrote %d records to %s", len(records), out)
    return stats


def stats_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".stats.json")


# ---------------------------------------------------------------- validation

def expected_label(record: dict) -> str:
    """Recompute a record's label from the ground-truth generator."""
    ref = record["instance"]
    inst = cached_instance(ref["kind"], ref["params"], ref["seed"])
    state = replay(inst, [inst.action_from_json(a) for a in record["state"]])
    if record["category"] == "nav-perception":
        r, c = record["action"]["cell"]
        return "Yes" if inst.grid[r][c] == "H" else "No"
    action = inst.action_from_json(record["action"])
    if inst.kind == "jigsaw":
        return "Yes" if tuple(action) == inst.solution_for(state) else "No"
    return "Yes" if inst.is_optimal_action(state, action) else "No"


def _leaks(record: dict) -> bool:
    ref = record["instance"]
    inst = cached_instance(ref["kind"], ref["params"], ref["seed"])
    prompt = record["rendered_prompt"]
    for value in inst.truth_dict().values():
        if value in (None, [], ""):
            continue
        for text in (json.dumps(value), json.dumps(value, separators=(",", ":"))):
            if text in prompt:
                return True
    return False


@dataclass
class ValidationReport:
    records: int
    label_mismatches: List[int]
    schema_violations: List[Tuple[int, str]]
    leaks: List[int]
    duplicates: int
    duplicate_rate: float
    stats: DatasetStats

    @property
    def ok(self) -> bool:
        return not (self.label_mismatches or self.schema_violations or self.leaks)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"


def _schema_problem(rec) -> Optional[str]:
    if not isinstance(rec, dict):
        return "record is not an object"
    for key, typ in REQUIRED_FIELDS.items():
        if key not in rec:
            return f"missing field {key!r}"
        if typ is not object and not isinstance(rec[key], typ):
            return f"field {key!r} has type {type(rec[key]).__name__}"
    if rec["schema_version"] != SCHEMA_VERSION:
        return f"unsupported schema_version {rec['schema_version']!r}"
    if rec["label"] not in ("Yes", "No"):
        return f"label must be Yes or No, got {rec['label']!r}"
    if not {"kind", "params", "seed"} <= set(rec["instance"]):
        return "instance reference needs kind, params and seed"
    return None


def validate_dataset(path) -> ValidationReport:
    """Re-check every record against the oracle; line numbers are 1-based."""
    path = Path(path)
    mismatches, violations, leaks, records = [], [], [], []
    seen, dups = set(), 0
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetParseError(lineno, f"unreadable record: {exc.msg}") from exc
            problem = _schema_problem(rec)
            if problem:
                violations.append((lineno, problem))
                continue
            records.append(rec)
            key = json.dumps([rec["task"], rec["instance"]["params"], rec["instance"]["seed"], rec["state"],
                              rec["action"]], sort_keys=True)
            if key in seen:
                dups += 1
            seen.add(key)
            try:
                if expected_label(rec) != rec["label"]:
                    mismatches.append(lineno)
            except (ReplayError, GenerationError, KeyError, TypeError, ValueError, IndexError) as exc:
                violations.append((lineno, f"cannot evaluate record: {exc}"))
                continue
            if _leaks(rec):
                leaks.append(lineno)
    n = len(records)
    return ValidationReport(n, mismatches, violations, leaks, dups, dups / n if n else 0.0, compute_stats(records))
