"""Quadrant-crop visual search over a symbolic high-resolution image."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from ..errors import GenerationError, InvalidActionError
from .base import SearchState, TaskInstance

CROP_RATIO = 0.7
QUADRANTS = ("TL", "TR", "BL", "BR")
ANSWER = "ANSWER"
QUADRANT_NAMES = {"TL": "Top-Left", "TR": "Top-Right", "BL": "Bottom-Left", "BR": "Bottom-Right"}

Box = Tuple[int, int, int, int]


@dataclass(frozen=True)
class CropRegion:
    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (0 <= self.x0 < self.x1 and 0 <= self.y0 < self.y1):
            raise ValueError(f"degenerate crop {self.as_tuple()}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    def as_tuple(self) -> Box:
        return (self.x0, self.y0, self.x1, self.y1)

    def contains(self, box: Box) -> bool:
        bx0, by0, bx1, by1 = box
        return self.x0 <= bx0 and self.y0 <= by0 and bx1 <= self.x1 and by1 <= self.y1

    def intersection_area(self, box: Box) -> int:
        bx0, by0, bx1, by1 = box
        w = min(self.x1, bx1) - max(self.x0, bx0)
        h = min(self.y1, by1) - max(self.y0, by0)
        return max(w, 0) * max(h, 0)


def _extent(n: int) -> int:
    # ceil so the box never shrinks below the ratio; the epsilon absorbs 0.7*n float noise
    return min(n, max(1, math.ceil(CROP_RATIO * n - 1e-9)))


def crop(region: CropRegion, quadrant: str) -> CropRegion:
    """Corner-anchored sub-box covering 0.7 x 0.7 of ``region``."""
    if quadrant not in QUADRANTS:
        raise InvalidActionError(f"unknown quadrant {quadrant!r}")
    w, h = _extent(region.width), _extent(region.height)
    x0 = region.x0 if quadrant[1] == "L" else region.x1 - w
    y0 = region.y0 if quadrant[0] == "T" else region.y1 - h
    return CropRegion(x0, y0, x0 + w, y0 + h)


@dataclass(frozen=True)
class SearchView:
    region: CropRegion
    answered: bool = False


class VisualSearchInstance(TaskInstance):
    kind = "visual-search"

    def __init__(self, params: dict, seed: int, image_dims: Tuple[int, int],
                 target_box: Optional[Box] = None, image_payload: Optional[str] = None,
                 resolve_ratio: float = 0.25):
        self.params = dict(params)
        self.seed = int(seed)
        self.image_dims = (int(image_dims[0]), int(image_dims[1]))
        self.target_box = None if target_box is None else tuple(int(v) for v in target_box)
        self.image_payload = image_payload
        self.resolve_ratio = float(params.get("resolve_ratio", resolve_ratio))
        if self.target_box is not None:
            W, H = self.image_dims
            x0, y0, x1, y1 = self.target_box
            if not (0 <= x0 < x1 <= W and 0 <= y0 < y1 <= H):
                raise GenerationError(f"target box {self.target_box} outside image {self.image_dims}")

    @property
    def full_region(self) -> CropRegion:
        return CropRegion(0, 0, *self.image_dims)

    def area_ratio(self, state: SearchState) -> float:
        return state.visual.region.area / self.full_region.area

    def initial_state(self) -> SearchState:
        return SearchState(SearchView(self.full_region))

    def action_space(self, state: SearchState) -> List[str]:
        if state.visual.answered:
            return []
        return list(QUADRANTS) + [ANSWER]

    def validate_action(self, state: SearchState, action) -> None:
        if state.visual.answered:
            raise InvalidActionError("search already answered")
        if action != ANSWER and action not in QUADRANTS:
            raise InvalidActionError(f"unknown visual-search action {action!r}")
        if action != ANSWER:
            r = state.visual.region
            if r.width < 2 or r.height < 2:
                raise InvalidActionError("view too small to crop further")

    def transition(self, state: SearchState, action) -> SearchView:
        if action == ANSWER:
            return SearchView(state.visual.region, answered=True)
        return SearchView(crop(state.visual.region, action))

    def describe(self, action) -> str:
        if action == ANSWER:
            return "answer from current view"
        return f"crop {QUADRANT_NAMES[action]} quadrant"

    def heuristic_score(self, state: SearchState) -> float:
        d = state.depth
        return 0.7 * (1.0 / (1.0 + 0.1 * d)) + 0.3 * self.area_ratio(state)

    def check_goal(self, state: SearchState) -> bool:
        if self.target_box is None:
            return False
        return state.visual.region.contains(self.target_box) and self.area_ratio(state) <= self.resolve_ratio

    def is_terminal(self, state: SearchState) -> bool:
        return state.visual.answered or self.check_goal(state)

    def true_utility(self, state: SearchState, action) -> float:
        if action == ANSWER:
            # answering ends the episode, so it is only worth anything once the view is resolved
            if self.area_ratio(state) > self.resolve_ratio:
                return 0.0
            region = state.visual.region
        else:
            region = crop(state.visual.region, action)
        x0, y0, x1, y1 = self.target_box
        return region.intersection_area(self.target_box) / ((x1 - x0) * (y1 - y0))

    def public_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params,
            "seed": self.seed,
            "image_dims": list(self.image_dims),
            "image_payload": self.image_payload,
        }

    def truth_dict(self) -> dict:
        return {"target_box": list(self.target_box) if self.target_box else None}

    @classmethod
    def from_dicts(cls, public: dict, truth: Optional[dict] = None) -> "VisualSearchInstance":
        box = None if truth is None else truth["target_box"]
        return cls(public["params"], public["seed"], tuple(public["image_dims"]), box,
                   public.get("image_payload"))


def generate_visual_search(params: dict, seed: int) -> VisualSearchInstance:
    W = int(params.get("width", 2000))
    H = int(params.get("height", 1500))
    if W < 16 or H < 16:
        raise GenerationError("image dimensions must be at least 16 px")
    frac = float(params.get("target_frac", 0.04))
    if not 0 < frac < 1:
        raise GenerationError("target_frac must lie in (0, 1)")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 101]))
    tw = max(1, int(round(W * frac * rng.uniform(0.5, 1.5))))
    th = max(1, int(round(H * frac * rng.uniform(0.5, 1.5))))
    x0 = int(rng.integers(0, W - tw + 1))
    y0 = int(rng.integers(0, H - th + 1))
    full = {"width": W, "height": H, "target_frac": frac}
    full.update({k: v for k, v in params.items() if k not in full})
    return VisualSearchInstance(full, seed, (W, H), (x0, y0, x0 + tw, y0 + th))
