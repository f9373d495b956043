"""Grid navigation: Frozen Lake, maze and VisuoThink-style maps with a unique route."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import GenerationError, InvalidActionError
from .base import SearchState, TaskInstance

START, GOAL, SAFE, HOLE = "S", "G", "F", "H"
MOVES = {"Up": (-1, 0), "Down": (1, 0), "Left": (0, -1), "Right": (0, 1)}
MOVE_ORDER = ("Up", "Down", "Left", "Right")

Pos = Tuple[int, int]


@dataclass(frozen=True)
class GridView:
    """Symbolic visual context: agent position plus the regional view of its cell."""

    pos: Pos
    cell: str
    dead: bool = False


def _neighbors(pos: Pos, h: int, w: int):
    r, c = pos
    for name in MOVE_ORDER:
        dr, dc = MOVES[name]
        nr, nc = r + dr, c + dc
        if 0 <= nr < h and 0 <= nc < w:
            yield name, (nr, nc)


def _safe_adjacency(safe: np.ndarray) -> Dict[Pos, List[Pos]]:
    h, w = safe.shape
    adj = {}
    for r in range(h):
        for c in range(w):
            if safe[r, c]:
                adj[(r, c)] = [p for _, p in _neighbors((r, c), h, w) if safe[p]]
    return adj


def _bridges(adj: Dict[Pos, List[Pos]]) -> set:
    """Bridge edges (as frozensets) of an undirected graph; iterative Tarjan."""
    disc, low = {}, {}
    out = set()
    counter = 0
    for root in adj:
        if root in disc:
            continue
        disc[root] = low[root] = counter
        counter += 1
        stack = [(root, None, iter(adj[root]))]
        while stack:
            v, parent, it = stack[-1]
            advanced = False
            for u in it:
                if u == parent:
                    continue
                if u in disc:
                    low[v] = min(low[v], disc[u])
                else:
                    disc[u] = low[u] = counter
                    counter += 1
                    stack.append((u, v, iter(adj[u])))
                    advanced = True
                    break
            if not advanced:
                stack.pop()
                if parent is not None:
                    low[parent] = min(low[parent], low[v])
                    if low[v] > disc[parent]:
                        out.add(frozenset((parent, v)))
    return out


def _has_unique_route(safe: np.ndarray, path: Sequence[Pos]) -> bool:
    # the s-t simple path is unique iff every edge of one such path is a bridge
    bridges = _bridges(_safe_adjacency(safe))
    return all(frozenset((a, b)) in bridges for a, b in zip(path, path[1:]))


def _is_induced_extension(path: List[Pos], nxt: Pos, h: int, w: int) -> bool:
    """``nxt`` touches no earlier path cell except the current tail."""
    if nxt in path:
        return False
    tail = path[-1]
    for _, p in _neighbors(nxt, h, w):
        if p != tail and p in path:
            return False
    return True


def _random_route(rng, h: int, w: int, start: Pos, goal: Pos, greed: float = 0.6) -> Optional[List[Pos]]:
    """Random induced simple path from start to goal via randomized DFS."""
    path = [start]
    options = []

    def candidates(tail):
        nbrs = [p for _, p in _neighbors(tail, h, w) if _is_induced_extension(path, p, h, w)]
        rng.shuffle(nbrs)
        if rng.random() < greed:
            nbrs.sort(key=lambda p: abs(p[0] - goal[0]) + abs(p[1] - goal[1]))
        return nbrs

    options.append(candidates(start))
    steps = 0
    while options:
        steps += 1
        if steps > 20 * h * w:
            return None
        if path[-1] == goal:
            return path
        if not options[-1]:
            options.pop()
            path.pop()
            continue
        nxt = options[-1].pop(0)
        if not _is_induced_extension(path, nxt, h, w):
            continue
        path.append(nxt)
        options.append(candidates(nxt) if nxt != goal else [])
    return None


def _segment_route(rng, h: int, w: int, turns: int) -> Optional[List[Pos]]:
    """Induced path made of ``turns + 1`` straight segments."""
    start = (int(rng.integers(h)), int(rng.integers(w)))
    path = [start]
    axis = int(rng.integers(2))
    for _ in range(turns + 1):
        dirs = [(0, 1), (0, -1)] if axis else [(1, 0), (-1, 0)]
        if rng.random() < 0.5:
            dirs.reverse()
        for d in dirs:
            run = []
            while True:
                r, c = (run or path)[-1]
                nxt = (r + d[0], c + d[1])
                if not (0 <= nxt[0] < h and 0 <= nxt[1] < w):
                    break
                if not _is_induced_extension(path + run, nxt, h, w):
                    break
                run.append(nxt)
            if run:
                break
        if not run:
            return None
        path.extend(run[:int(rng.integers(1, len(run) + 1))])
        axis ^= 1
    return path


def count_turns(path: Sequence[Pos]) -> int:
    dirs = [(b[0] - a[0], b[1] - a[1]) for a, b in zip(path, path[1:])]
    return sum(1 for d0, d1 in zip(dirs, dirs[1:]) if d0 != d1)


def _moves_of(path: Sequence[Pos]) -> Tuple[str, ...]:
    inv = {v: k for k, v in MOVES.items()}
    return tuple(inv[(b[0] - a[0], b[1] - a[1])] for a, b in zip(path, path[1:]))


class GridNavInstance(TaskInstance):
    """A grid map with exactly one simple safe route from start to goal.

    ``fatal_holes`` distinguishes Frozen Lake (stepping on a hole ends the
    episode) from maze-style maps where obstacle cells simply cannot be entered.
    """

    def __init__(self, kind: str, params: dict, seed: int, grid: Sequence[str],
                 start: Pos, goal: Pos, unique_path: Optional[Sequence[Pos]] = None,
                 off_path_utility: float = 0.3):
        self.kind = kind
        self.params = dict(params)
        self.seed = int(seed)
        self.grid = tuple(grid)
        self.start = tuple(start)
        self.goal = tuple(goal)
        self.unique_path = None if unique_path is None else tuple(tuple(p) for p in unique_path)
        self.off_path_utility = off_path_utility
        self.fatal_holes = kind == "frozen-lake"
        self.height = len(self.grid)
        self.width = len(self.grid[0])
        self._dist = self._goal_distances()

    # geometry helpers
    def cell(self, pos: Pos) -> str:
        return self.grid[pos[0]][pos[1]]

    def is_safe(self, pos: Pos) -> bool:
        return self.cell(pos) != HOLE

    @property
    def diameter(self) -> int:
        return self.height - 1 + self.width - 1

    @property
    def unique_moves(self) -> Tuple[str, ...]:
        return _moves_of(self.unique_path) if self.unique_path else ()

    def _goal_distances(self) -> Dict[Pos, int]:
        dist = {self.goal: 0}
        q = deque([self.goal])
        while q:
            v = q.popleft()
            for _, u in _neighbors(v, self.height, self.width):
                if u not in dist and self.is_safe(u):
                    dist[u] = dist[v] + 1
                    q.append(u)
        return dist

    def goal_distance(self, pos: Pos) -> Optional[int]:
        return self._dist.get(tuple(pos))

    # protocol
    def initial_state(self) -> SearchState:
        return SearchState(GridView(self.start, START))

    def _target(self, pos: Pos, action: str) -> Pos:
        if action not in MOVES:
            raise InvalidActionError(f"unknown move {action!r}")
        dr, dc = MOVES[action]
        return (pos[0] + dr, pos[1] + dc)

    def action_space(self, state: SearchState) -> List[str]:
        view = state.visual
        if view.dead or view.pos == self.goal:
            return []
        out = []
        for name, p in _neighbors(view.pos, self.height, self.width):
            if self.fatal_holes or self.is_safe(p):
                out.append(name)
        return out

    def validate_action(self, state: SearchState, action) -> None:
        view = state.visual
        if view.dead:
            raise InvalidActionError("agent fell into a hole; no further moves")
        r, c = self._target(view.pos, action)
        if not (0 <= r < self.height and 0 <= c < self.width):
            raise InvalidActionError(f"move {action} from {view.pos} leaves the grid")
        if not self.fatal_holes and not self.is_safe((r, c)):
            raise InvalidActionError(f"move {action} from {view.pos} is blocked")

    def transition(self, state: SearchState, action) -> GridView:
        target = self._target(state.visual.pos, action)
        kind = self.cell(target)
        return GridView(target, kind, dead=kind == HOLE)

    def describe(self, action) -> str:
        return f"move {action}"

    def heuristic_score(self, state: SearchState) -> float:
        if state.visual.dead:
            return 0.0
        r, c = state.visual.pos
        d = abs(r - self.goal[0]) + abs(c - self.goal[1])
        return 1.0 - d / self.diameter

    def check_goal(self, state: SearchState) -> bool:
        return state.visual.pos == self.goal and not state.visual.dead

    def is_terminal(self, state: SearchState) -> bool:
        return state.visual.dead or state.visual.pos == self.goal

    def true_utility(self, state: SearchState, action) -> float:
        pos = state.visual.pos
        target = self._target(pos, action)
        if not (0 <= target[0] < self.height and 0 <= target[1] < self.width):
            return 0.0
        if not self.is_safe(target):
            return 0.0
        here, there = self._dist.get(pos), self._dist.get(target)
        if here is not None and there is not None and there < here:
            return 1.0
        return self.off_path_utility

    def public_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params,
            "seed": self.seed,
            "grid": list(self.grid),
            "start": list(self.start),
            "goal": list(self.goal),
        }

    def truth_dict(self) -> dict:
        return {"unique_path": [list(p) for p in self.unique_path or ()]}

    @classmethod
    def from_dicts(cls, public: dict, truth: Optional[dict] = None) -> "GridNavInstance":
        return cls(
            public["kind"], public["params"], public["seed"], public["grid"],
            tuple(public["start"]), tuple(public["goal"]),
            None if truth is None else [tuple(p) for p in truth["unique_path"]],
        )


GRID_KINDS = ("frozen-lake", "maze", "visuothink")


def _fill_extra_safe(rng, h, w, path, p_safe):
    safe = np.zeros((h, w), dtype=bool)
    for p in path:
        safe[p] = True
    cells = [(r, c) for r in range(h) for c in range(w) if not safe[r, c]]
    order = rng.permutation(len(cells))
    for i in order:
        cell = cells[i]
        if rng.random() >= p_safe:
            continue
        safe[cell] = True
        if not _has_unique_route(safe, path):
            safe[cell] = False
    return safe


def _render(h, w, safe, start, goal):
    rows = []
    for r in range(h):
        row = []
        for c in range(w):
            if (r, c) == start:
                row.append(START)
            elif (r, c) == goal:
                row.append(GOAL)
            else:
                row.append(SAFE if safe[r, c] else HOLE)
        rows.append("".join(row))
    return rows


def generate_grid(kind: str, params: dict, seed: int, max_tries: int = 200) -> GridNavInstance:
    if kind not in GRID_KINDS:
        raise GenerationError(f"unknown grid kind {kind!r}")
    size = int(params.get("size", {"frozen-lake": 4, "maze": 7, "visuothink": 6}[kind]))
    if not 2 <= size <= 16:
        raise GenerationError(f"grid size must be in [2, 16], got {size}")
    p_safe = float(params.get("p_safe", 0.5 if kind == "frozen-lake" else 0.6))
    level = int(params.get("level", 3)) if kind == "visuothink" else None
    rng = np.random.default_rng(np.random.SeedSequence([seed, GRID_KINDS.index(kind), size]))
    h = w = size
    for _ in range(max_tries):
        if kind == "frozen-lake":
            start = (int(rng.integers(h)), int(rng.integers(w)))
            goal = (int(rng.integers(h)), int(rng.integers(w)))
            if abs(start[0] - goal[0]) + abs(start[1] - goal[1]) < size - 1:
                continue
            path = _random_route(rng, h, w, start, goal)
        elif kind == "maze":
            start, goal = (0, 0), (h - 1, w - 1)
            path = _random_route(rng, h, w, start, goal, greed=0.3)
        else:
            path = _segment_route(rng, h, w, level)
            if path is not None:
                start, goal = path[0], path[-1]
        if path is None:
            continue
        if level is not None and count_turns(path) != level:
            continue
        safe = _fill_extra_safe(rng, h, w, path, p_safe)
        if kind == "maze":
            # at least one junction along the route
            adj = _safe_adjacency(safe)
            if not any(len(adj[p]) >= 3 for p in path[1:-1]):
                continue
        grid = _render(h, w, safe, start, goal)
        return GridNavInstance(kind, {"size": size, **{k: v for k, v in params.items() if k != "size"}},
                               seed, grid, start, goal, path)
    raise GenerationError(f"could not generate a {kind} grid for params {params} within {max_tries} tries")

