"""Independent reference implementations used only by the tests.

None of these import the package's own algorithms for the quantity they
check; they re-derive it by brute force or closed form.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from typing import List, Sequence, Tuple

# ---------------------------------------------------------------- frozen closed-form values
# computed by hand from the defining formulas and frozen here
SOFTMAX_10_TAU05 = (math.e**2 / (math.e**2 + 1), 1 / (math.e**2 + 1))          # (0.880797, 0.119203)
SOFTMAX_210_TAU1 = tuple(math.exp(v) / sum(math.exp(u) for u in (2, 1, 0)) for v in (2, 1, 0))
SIGMOID_H0 = 1 / (1 + math.exp(-1.0))                                            # 0.731059
SIGMOID_H15 = 1 / (1 + math.exp(2.0))                                            # 0.119203
FINAL_SCORE_EXAMPLE = (1 / (1 + math.e)) * 0.6 + (1 - 1 / (1 + math.e)) * 0.9 + 0.1  # 0.919331
HEURISTIC_D3 = 0.7 / 1.3 + 0.3 * 0.49                                           # 0.685462


def fused_mse_closed_form(w: float, var_pri: float, var_obs: float) -> float:
    return w * w * var_pri + (1 - w) ** 2 * var_obs


def optimal_mse_closed_form(var_pri: float, var_obs: float) -> float:
    return var_pri * var_obs / (var_pri + var_obs)


# ---------------------------------------------------------------- grids

Pos = Tuple[int, int]


def _safe(grid: Sequence[str], pos: Pos) -> bool:
    r, c = pos
    return 0 <= r < len(grid) and 0 <= c < len(grid[0]) and grid[r][c] != "H"


def count_simple_paths(grid: Sequence[str], start: Pos, goal: Pos, limit: int = 10**6) -> int:
    """Number of simple safe-cell paths from start to goal, by plain DFS."""
    count = 0
    seen = {start}

    def dfs(pos):
        nonlocal count
        if count >= limit:
            return
        if pos == goal:
            count += 1
            return
        r, c = pos
        for nxt in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if _safe(grid, nxt) and nxt not in seen:
                seen.add(nxt)
                dfs(nxt)
                seen.discard(nxt)

    dfs(start)
    return count


def shortest_safe_paths(grid: Sequence[str], start: Pos, goal: Pos) -> Tuple[int, int]:
    """(length, number of distinct shortest paths) by layered BFS counting."""
    dist = {start: 0}
    ways = {start: 1}
    frontier = [start]
    while frontier:
        nxt_frontier = []
        for pos in frontier:
            r, c = pos
            for nxt in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                if not _safe(grid, nxt):
                    continue
                if nxt not in dist:
                    dist[nxt] = dist[pos] + 1
                    ways[nxt] = ways[pos]
                    nxt_frontier.append(nxt)
                elif dist[nxt] == dist[pos] + 1:
                    ways[nxt] += ways[pos]
        frontier = nxt_frontier
    if goal not in dist:
        return -1, 0
    return dist[goal], ways[goal]


def exhaustive_nav_solvable(grid: Sequence[str], start: Pos, goal: Pos, max_depth: int) -> bool:
    """Whether any move sequence of length <= max_depth reaches the goal without touching a hole.

    Enumerates every sequence over {Up, Down, Left, Right}; off-grid moves are illegal.
    """
    moves = ((-1, 0), (1, 0), (0, -1), (0, 1))
    h, w = len(grid), len(grid[0])
    for depth in range(max_depth + 1):
        for seq in itertools.product(moves, repeat=depth):
            r, c = start
            ok = True
            for dr, dc in seq:
                r, c = r + dr, c + dc
                if not (0 <= r < h and 0 <= c < w) or grid[r][c] == "H":
                    ok = False
                    break
                if (r, c) == goal:
                    break
            if ok and (r, c) == goal:
                return True
    return False


# ---------------------------------------------------------------- sudoku

def brute_force_sudoku_violations(board: Sequence[Sequence[int]]) -> List[Tuple[str, int, int]]:
    """Every (unit kind, unit index, digit) whose unit contains the digit more than once."""
    out = []
    for i in range(9):
        row = [board[i][j] for j in range(9)]
        col = [board[j][i] for j in range(9)]
        box = [board[3 * (i // 3) + a][3 * (i % 3) + b] for a in range(3) for b in range(3)]
        for kind, cells in (("row", row), ("col", col), ("box", box)):
            for digit, n in Counter(v for v in cells if v).items():
                if n > 1:
                    out.append((kind, i, digit))
    return sorted(out)


def brute_force_sudoku_valid(board) -> bool:
    return not brute_force_sudoku_violations(board)


# ---------------------------------------------------------------- jigsaw

def brute_force_jigsaw_solutions(perm: Sequence[int]) -> List[Tuple[int, ...]]:
    """All proposals p with perm[p[i]-1] == i+1 for every slot, by enumeration."""
    n = len(perm)
    target = tuple(range(1, n + 1))
    return [p for p in itertools.permutations(range(1, n + 1))
            if tuple(perm[p[i] - 1] for i in range(n)) == target]


# ---------------------------------------------------------------- crops

def crop_box(x0: int, y0: int, x1: int, y1: int, corner: str) -> Tuple[int, int, int, int]:
    """Corner-anchored 0.7 x 0.7 box with ceil extents, written out longhand."""
    w, h = x1 - x0, y1 - y0
    cw = min(w, max(1, -(-7 * w // 10)))
    ch = min(h, max(1, -(-7 * h // 10)))
    left = x0 if corner in ("TL", "BL") else x1 - cw
    top = y0 if corner in ("TL", "TR") else y1 - ch
    return left, top, left + cw, top + ch
