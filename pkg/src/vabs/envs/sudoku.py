"""9x9 Sudoku filling with a uniqueness-enforcing generator."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..errors import GenerationError, InvalidActionError
from .base import SearchState, TaskInstance

Board = Tuple[int, ...]  # 81 cells, row-major, 0 = empty


@dataclass(frozen=True)
class Violation:
    unit: str  # "row" | "col" | "box"
    index: int
    digit: int
    cells: Tuple[Tuple[int, int], ...]


@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    violations: Tuple[Violation, ...] = ()


def _units():
    for r in range(9):
        yield "row", r, [(r, c) for c in range(9)]
    for c in range(9):
        yield "col", c, [(r, c) for r in range(9)]
    for b in range(9):
        br, bc = 3 * (b // 3), 3 * (b % 3)
        yield "box", b, [(br + i, bc + j) for i in range(3) for j in range(3)]


_UNITS = list(_units())


def _as_rows(board) -> List[List[int]]:
    flat = list(np.asarray(board, dtype=int).reshape(-1))
    if len(flat) != 81:
        raise ValueError("sudoku board must have 81 cells")
    return [flat[9 * r:9 * r + 9] for r in range(9)]


def validate_sudoku(board) -> ValidityReport:
    """Row, column and box uniqueness over non-zero cells."""
    rows = _as_rows(board)
    violations = []
    for unit, idx, cells in _UNITS:
        seen = {}
        for r, c in cells:
            v = rows[r][c]
            if v:
                seen.setdefault(v, []).append((r, c))
        for digit in sorted(seen):
            if len(seen[digit]) > 1:
                violations.append(Violation(unit, idx, digit, tuple(seen[digit])))
    return ValidityReport(not violations, tuple(violations))


# bitmask solver
_BOX = [3 * (r // 3) + c // 3 for r in range(9) for c in range(9)]


def count_solutions(board: Sequence[int], limit: int = 2) -> int:
    cells = list(board)
    rows, cols, boxes = [0] * 9, [0] * 9, [0] * 9
    empty = []
    for i, v in enumerate(cells):
        if v:
            bit = 1 << v
            r, c, b = i // 9, i % 9, _BOX[i]
            if rows[r] & bit or cols[c] & bit or boxes[b] & bit:
                return 0
            rows[r] |= bit
            cols[c] |= bit
            boxes[b] |= bit
        else:
            empty.append(i)
    count = 0

    def search():
        nonlocal count
        if not empty:
            count += 1
            return
        # most constrained cell first
        best_i, best_mask, best_n = None, 0, 10
        for k, i in enumerate(empty):
            mask = ~(rows[i // 9] | cols[i % 9] | boxes[_BOX[i]]) & 0x3FE
            n = bin(mask).count("1")
            if n < best_n:
                best_i, best_mask, best_n = k, mask, n
                if n <= 1:
                    break
        if best_n == 0:
            return
        i = empty.pop(best_i)
        r, c, b = i // 9, i % 9, _BOX[i]
        mask = best_mask
        while mask and count < limit:
            bit = mask & -mask
            mask ^= bit
            rows[r] |= bit
            cols[c] |= bit
            boxes[b] |= bit
            search()
            rows[r] ^= bit
            cols[c] ^= bit
            boxes[b] ^= bit
        empty.insert(best_i, i)

    search()
    return count


def _random_full_board(rng) -> Board:
    cells = [0] * 81

    def fill(i):
        if i == 81:
            return True
        r, c = divmod(i, 9)
        used = set(cells[9 * r:9 * r + 9]) | {cells[9 * k + c] for k in range(9)}
        br, bc = 3 * (r // 3), 3 * (c // 3)
        used |= {cells[9 * (br + a) + bc + b] for a in range(3) for b in range(3)}
        for v in rng.permutation(9) + 1:
            if int(v) not in used:
                cells[i] = int(v)
                if fill(i + 1):
                    return True
        cells[i] = 0
        return False

    fill(0)
    return tuple(cells)


@dataclass(frozen=True)
class SudokuView:
    board: Board


class SudokuInstance(TaskInstance):
    kind = "sudoku"
    open_actions = True

    def __init__(self, params: dict, seed: int, board: Sequence[int], solution: Optional[Sequence[int]] = None):
        self.params = dict(params)
        self.seed = int(seed)
        self.board = tuple(int(v) for v in np.asarray(board).reshape(-1))
        self.givens_mask = tuple(v != 0 for v in self.board)
        self.solution = None if solution is None else tuple(int(v) for v in np.asarray(solution).reshape(-1))

    def empty_cells(self, state: SearchState) -> List[Tuple[int, int]]:
        return [divmod(i, 9) for i, v in enumerate(state.visual.board) if v == 0]

    def initial_state(self) -> SearchState:
        return SearchState(SudokuView(self.board))

    def action_space(self, state: SearchState) -> List:
        return []

    def validate_action(self, state: SearchState, action) -> None:
        try:
            fills = [(int(r), int(c), int(v)) for r, c, v in action]
        except (TypeError, ValueError) as exc:
            raise InvalidActionError(f"sudoku proposal must be (row, col, value) triples: {action!r}") from exc
        if not fills:
            raise InvalidActionError("empty sudoku proposal")
        seen = set()
        for r, c, v in fills:
            if not (0 <= r < 9 and 0 <= c < 9):
                raise InvalidActionError(f"cell ({r}, {c}) outside the board")
            if not 1 <= v <= 9:
                raise InvalidActionError(f"digit {v} outside 1-9")
            if self.givens_mask[9 * r + c]:
                raise InvalidActionError(f"cell ({r}, {c}) is a given")
            if state.visual.board[9 * r + c]:
                raise InvalidActionError(f"cell ({r}, {c}) is already filled")
            if (r, c) in seen:
                raise InvalidActionError(f"cell ({r}, {c}) filled twice")
            seen.add((r, c))

    def transition(self, state: SearchState, action) -> SudokuView:
        cells = list(state.visual.board)
        for r, c, v in action:
            cells[9 * int(r) + int(c)] = int(v)
        return SudokuView(tuple(cells))

    def describe(self, action) -> str:
        coords = [[int(r) + 1, int(c) + 1] for r, c, _ in action]
        values = [int(v) for _, _, v in action]
        return f"fill {coords} with {values}"

    def check_goal(self, state: SearchState) -> bool:
        board = state.visual.board
        return all(board) and validate_sudoku(board).valid

    def is_terminal(self, state: SearchState) -> bool:
        return all(state.visual.board)

    def true_utility(self, state: SearchState, action) -> float:
        fills = list(action)
        if not fills:
            return 0.0
        hits = sum(1 for r, c, v in fills if self.solution[9 * int(r) + int(c)] == int(v))
        return hits / len(fills)

    def action_to_json(self, action):
        return [[int(r), int(c), int(v)] for r, c, v in action]

    def action_from_json(self, data):
        return tuple((int(r), int(c), int(v)) for r, c, v in data)

    def public_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params,
            "seed": self.seed,
            "board": [list(self.board[9 * r:9 * r + 9]) for r in range(9)],
        }

    def truth_dict(self) -> dict:
        return {"solution": [list(self.solution[9 * r:9 * r + 9]) for r in range(9)]}

    @classmethod
    def from_dicts(cls, public: dict, truth: Optional[dict] = None) -> "SudokuInstance":
        return cls(public["params"], public["seed"], public["board"],
                   None if truth is None else truth["solution"])


def generate_sudoku(params: dict, seed: int, max_tries: int = 20) -> SudokuInstance:
    givens = int(params.get("givens", 36))
    if not 17 <= givens <= 80:
        raise GenerationError(f"givens must be in [17, 80], got {givens}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 303, givens]))
    for _ in range(max_tries):
        solution = _random_full_board(rng)
        board = list(solution)
        filled = 81
        for i in rng.permutation(81):
            if filled == givens:
                break
            keep = board[i]
            board[i] = 0
            if count_solutions(board, 2) == 1:
                filled -= 1
            else:
                board[i] = keep
        if filled == givens:
            return SudokuInstance({"givens": givens}, seed, board, solution)
    raise GenerationError(f"could not reach {givens} givens with a unique solution in {max_tries} tries")
