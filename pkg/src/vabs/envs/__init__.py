"""Task environments and their instance generators."""

from __future__ import annotations

import json
from functools import lru_cache
from pathlib import Path
from typing import Optional, Tuple

from ..errors import GenerationError
from .base import SearchState, TaskInstance, replay
from .gridnav import GRID_KINDS, GridNavInstance, GridView, generate_grid
from .jigsaw import JigsawInstance, JigsawView, generate_jigsaw
from .sudoku import SudokuInstance, SudokuView, ValidityReport, Violation, validate_sudoku
from .sudoku import generate_sudoku
from .visual_search import CropRegion, SearchView, VisualSearchInstance, generate_visual_search

TASK_KINDS = GRID_KINDS + ("visual-search", "jigsaw", "sudoku")

_CLASSES = {
    "frozen-lake": GridNavInstance,
    "maze": GridNavInstance,
    "visuothink": GridNavInstance,
    "visual-search": VisualSearchInstance,
    "jigsaw": JigsawInstance,
    "sudoku": SudokuInstance,
}


def generate_instance(task: str, params: Optional[dict] = None, seed: int = 0) -> TaskInstance:
    """Deterministically build one instance of ``task`` from ``params`` and ``seed``."""
    params = dict(params or {})
    if task in GRID_KINDS:
        return generate_grid(task, params, seed)
    if task == "visual-search":
        return generate_visual_search(params, seed)
    if task == "jigsaw":
        return generate_jigsaw(params, seed)
    if task == "sudoku":
        return generate_sudoku(params, seed)
    raise GenerationError(f"unknown task kind {task!r}")


@lru_cache(maxsize=4096)
def _cached(task: str, params_key: str, seed: int) -> TaskInstance:
    return generate_instance(task, json.loads(params_key), seed)


def cached_instance(task: str, params: dict, seed: int) -> TaskInstance:
    """Memoized generate_instance; instances are immutable so sharing is safe."""
    return _cached(task, json.dumps(params, sort_keys=True), int(seed))


# module-level wrappers mirroring the instance protocol
def action_space(instance: TaskInstance, state: SearchState):
    return instance.action_space(state)


def apply_action(instance: TaskInstance, state: SearchState, action) -> SearchState:
    return instance.apply_action(state, action)


def heuristic_score(instance: TaskInstance, state: SearchState) -> float:
    return instance.heuristic_score(state)


def check_goal(instance: TaskInstance, state: SearchState) -> bool:
    return instance.check_goal(state)


def true_utility(instance: TaskInstance, state: SearchState, action) -> float:
    return instance.true_utility(state, action)


# serialization
def instance_to_json(instance: TaskInstance) -> Tuple[str, str]:
    """Return ``(public_json, truth_json)``; the truth document is stored separately."""
    public = json.dumps(instance.public_dict(), sort_keys=True)
    truth = json.dumps(instance.truth_dict(), sort_keys=True)
    return public, truth


def instance_from_json(public_json: str, truth_json: Optional[str] = None) -> TaskInstance:
    public = json.loads(public_json)
    truth = None if truth_json is None else json.loads(truth_json)
    cls = _CLASSES.get(public.get("kind"))
    if cls is None:
        raise GenerationError(f"unknown instance kind {public.get('kind')!r}")
    return cls.from_dicts(public, truth)


def truth_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".truth" + path.suffix)


def save_instance(instance: TaskInstance, path) -> Tuple[Path, Path]:
    path = Path(path)
    public, truth = instance_to_json(instance)
    path.write_text(public + "\n", encoding="utf-8")
    tpath = truth_path(path)
    tpath.write_text(truth + "\n", encoding="utf-8")
    return path, tpath


def load_instance(path, with_truth: bool = False) -> TaskInstance:
    """Load an instance; ground truth is read only when explicitly requested."""
    path = Path(path)
    public = path.read_text(encoding="utf-8")
    truth = truth_path(path).read_text(encoding="utf-8") if with_truth else None
    return instance_from_json(public, truth)


__all__ = [
    "TASK_KINDS", "SearchState", "TaskInstance", "replay",
    "GridNavInstance", "GridView", "VisualSearchInstance", "SearchView", "CropRegion",
    "JigsawInstance", "JigsawView", "SudokuInstance", "SudokuView",
    "ValidityReport", "Violation", "validate_sudoku",
    "generate_instance", "cached_instance", "action_space", "apply_action",
    "heuristic_score", "check_goal", "true_utility",
    "instance_to_json", "instance_from_json", "save_instance", "load_instance",
]
