import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vabs.envs import (
    TASK_KINDS,
    cached_instance,
    generate_instance,
    instance_from_json,
    instance_to_json,
    load_instance,
    replay,
    save_instance,
    validate_sudoku,
)
from vabs.envs.gridnav import GridNavInstance, count_turns
from vabs.envs.jigsaw import inverse, is_bijection, rearrange
from vabs.envs.sudoku import count_solutions
from vabs.envs.visual_search import ANSWER, QUADRANTS, CropRegion, crop
from vabs.errors import GenerationError, InvalidActionError, ReplayError

from oracles import (
    HEURISTIC_D3,
    brute_force_jigsaw_solutions,
    brute_force_sudoku_violations,
    count_simple_paths,
    crop_box,
    shortest_safe_paths,
)


class TestGeneration:
    @pytest.mark.parametrize("task", TASK_KINDS)
    def test_deterministic(self, task):
        a, b = generate_instance(task, {}, 7), generate_instance(task, {}, 7)
        assert instance_to_json(a) == instance_to_json(b)

    def test_different_seeds_differ(self):
        grids = {generate_instance("frozen-lake", {"size": 6}, s).grid for s in range(10)}
        assert len(grids) > 1

    @pytest.mark.parametrize("kind", ["frozen-lake", "maze", "visuothink"])
    @pytest.mark.parametrize("size", [4, 6])
    def test_unique_simple_path(self, kind, size):
        params = {"size": size, "level": 2} if kind == "visuothink" else {"size": size}
        for seed in range(15):
            inst = generate_instance(kind, params, seed)
            assert count_simple_paths(inst.grid, inst.start, inst.goal) == 1
            assert "".join(inst.grid).count("S") == 1 and "".join(inst.grid).count("G") == 1

    def test_six_by_six_has_one_shortest_path(self):
        for seed in range(20):
            inst = generate_instance("frozen-lake", {"size": 6}, seed)
            length, ways = shortest_safe_paths(inst.grid, inst.start, inst.goal)
            assert ways == 1
            assert length == len(inst.unique_path) - 1

    def test_visuothink_turn_count(self):
        for level in (3, 4, 5):
            inst = generate_instance("visuothink", {"size": 6, "level": level}, 3)
            assert count_turns(inst.unique_path) == level

    def test_maze_has_a_junction_on_the_route(self):
        inst = generate_instance("maze", {"size": 7}, 1)
        h, w = inst.height, inst.width

        def degree(p):
            r, c = p
            return sum(1 for q in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1))
                       if 0 <= q[0] < h and 0 <= q[1] < w and inst.grid[q[0]][q[1]] != "H")

        assert any(degree(p) >= 3 for p in inst.unique_path[1:-1])

    @pytest.mark.parametrize("task,params", [
        ("frozen-lake", {"size": 40}), ("jigsaw", {"n": 9}), ("sudoku", {"givens": 10}),
        ("visual-search", {"width": 4}), ("chess", {}),
    ])
    def test_invalid_params(self, task, params):
        with pytest.raises(GenerationError):
            generate_instance(task, params, 0)

    def test_cached_instance_is_shared(self):
        assert cached_instance("jigsaw", {"n": 3}, 5) is cached_instance("jigsaw", {"n": 3}, 5)


class TestGridNav:
    def grid(self):
        # S at the top-left, one route along the top row and down the right column
        return GridNavInstance("frozen-lake", {"size": 4}, 0,
                               ["SFFF", "HHHF", "HHHF", "HHHG"], (0, 0), (3, 3))

    def test_corner_actions(self):
        inst = self.grid()
        assert sorted(inst.action_space(inst.initial_state())) == ["Down", "Right"]

    def test_utilities(self):
        inst = self.grid()
        s0 = inst.initial_state()
        assert inst.true_utility(s0, "Right") == 1.0
        assert inst.true_utility(s0, "Down") == 0.0
        assert inst.true_utility(s0, "Up") == 0.0

    def test_off_path_safe_move_gets_partial_credit(self):
        inst = GridNavInstance("frozen-lake", {}, 0, ["SFF", "FHF", "HHG"], (0, 0), (2, 2))
        s = inst.apply_action(inst.initial_state(), "Right")
        assert inst.true_utility(s, "Left") == pytest.approx(0.3)

    def test_hole_is_terminal_and_not_goal(self):
        inst = self.grid()
        s = inst.apply_action(inst.initial_state(), "Down")
        assert s.visual.dead and inst.is_terminal(s) and not inst.check_goal(s)
        assert inst.action_space(s) == [] and inst.heuristic_score(s) == 0.0

    def test_reaching_goal(self):
        inst = self.grid()
        s = replay(inst, ["Right", "Right", "Right", "Down", "Down", "Down"])
        assert inst.check_goal(s) and inst.heuristic_score(s) == 1.0
        assert s.depth == 6 and s.history[0] == "move Right"

    def test_off_grid_move_rejected(self):
        inst = self.grid()
        with pytest.raises(InvalidActionError):
            inst.apply_action(inst.initial_state(), "Up")
        with pytest.raises(ReplayError) as err:
            replay(inst, ["Up"])
        assert err.value.index == 0

    def test_maze_obstacles_are_not_legal_moves(self):
        inst = GridNavInstance("maze", {}, 0, ["SFF", "HHF", "HHG"], (0, 0), (2, 2))
        assert inst.action_space(inst.initial_state()) == ["Right"]

    def test_transitions_keep_the_grid(self):
        inst = generate_instance("frozen-lake", {"size": 5}, 2)
        before = inst.grid
        replay(inst, list(inst.unique_moves))
        assert inst.grid == before

    def test_unique_moves_reach_the_goal(self):
        for seed in range(10):
            inst = generate_instance("frozen-lake", {"size": 6}, seed)
            s = replay(inst, list(inst.unique_moves))
            assert inst.check_goal(s)
            # every step along the route is an optimal move
            state = inst.initial_state()
            for m in inst.unique_moves:
                assert inst.true_utility(state, m) == 1.0
                state = inst.apply_action(state, m)


class TestVisualSearch:
    def test_crop_examples(self):
        r = CropRegion(0, 0, 1000, 800)
        assert crop(r, "TL").as_tuple() == (0, 0, 700, 560)
        assert crop(r, "TR").as_tuple() == (300, 0, 1000, 560)

    @settings(max_examples=200)
    @given(st.integers(0, 500), st.integers(0, 500), st.integers(2, 3000), st.integers(2, 3000),
           st.sampled_from(QUADRANTS))
    def test_crop_matches_longhand(self, x0, y0, w, h, q):
        r = CropRegion(x0, y0, x0 + w, y0 + h)
        c = crop(r, q)
        assert c.as_tuple() == crop_box(x0, y0, x0 + w, y0 + h, q)
        assert r.contains(c.as_tuple())

    def test_five_actions(self):
        inst = generate_instance("visual-search", {}, 0)
        assert inst.action_space(inst.initial_state()) == list(QUADRANTS) + [ANSWER]

    def test_heuristic_examples(self):
        inst = generate_instance("visual-search", {"width": 1000, "height": 1000}, 0)
        assert inst.heuristic_score(inst.initial_state()) == pytest.approx(1.0)
        s = replay(inst, ["TL", "TL", "TL"])
        ratio = inst.area_ratio(s)
        assert ratio == pytest.approx(0.49**3, abs=1e-3)
        assert inst.heuristic_score(s) == pytest.approx(0.7 / 1.3 + 0.3 * ratio)
        assert 0.7 / 1.3 + 0.3 * 0.49 == pytest.approx(HEURISTIC_D3)

    def test_goal_needs_containment_and_zoom(self):
        inst = generate_instance("visual-search", {}, 4)
        s = inst.initial_state()
        assert not inst.check_goal(s)  # full view is too wide
        while not inst.check_goal(s):
            good = [q for q in QUADRANTS if inst.true_utility(s, q) == 1.0]
            if not good:
                break
            s = inst.apply_action(s, good[0])
        if inst.check_goal(s):
            assert inst.area_ratio(s) <= 0.25
            assert s.visual.region.contains(inst.target_box)

    def test_answer_ends_the_episode(self):
        inst = generate_instance("visual-search", {}, 0)
        s = inst.apply_action(inst.initial_state(), ANSWER)
        assert inst.is_terminal(s) and inst.action_space(s) == []
        with pytest.raises(InvalidActionError):
            inst.apply_action(s, "TL")

    def test_utility_is_retained_fraction(self):
        inst = generate_instance("visual-search", {}, 9)
        s = inst.initial_state()
        assert inst.true_utility(s, ANSWER) == 0.0  # premature answer
        for q in QUADRANTS:
            assert 0.0 <= inst.true_utility(s, q) <= 1.0


class TestJigsaw:
    def test_generated_perm_is_a_bijection(self):
        inst = generate_instance("jigsaw", {"n": 3}, 1)
        assert is_bijection(inst.initial_perm, 9) and sorted(inst.initial_perm) == list(range(1, 10))

    def test_identity_proposal_keeps_the_arrangement(self):
        inst = generate_instance("jigsaw", {"n": 3}, 1)
        s = inst.apply_action(inst.initial_state(), tuple(range(1, 10)))
        assert s.visual.perm == inst.initial_perm and s.depth == 1

    def test_inverse_solves(self):
        for seed in range(20):
            inst = generate_instance("jigsaw", {"n": 4}, seed)
            s = inst.apply_action(inst.initial_state(), inverse(inst.initial_perm))
            assert inst.check_goal(s)

    def test_inverse_is_the_only_solution(self):
        for seed in range(5):
            inst = generate_instance("jigsaw", {"n": 2}, seed)
            assert brute_force_jigsaw_solutions(inst.initial_perm) == [inverse(inst.initial_perm)]

    @given(st.permutations(list(range(1, 10))))
    def test_rearrange_then_inverse_is_identity(self, perm):
        perm = tuple(perm)
        assert rearrange(perm, inverse(perm)) == tuple(range(1, 10))

    @pytest.mark.parametrize("bad", [(1, 1, 2, 3, 4, 5, 6, 7, 8), (1, 2, 3), (0, 1, 2, 3, 4, 5, 6, 7, 8)])
    def test_invalid_proposals(self, bad):
        inst = generate_instance("jigsaw", {"n": 3}, 0)
        with pytest.raises(InvalidActionError):
            inst.apply_action(inst.initial_state(), bad)

    def test_utility_is_fraction_correct(self):
        inst = generate_instance("jigsaw", {"n": 3}, 2)
        s = inst.initial_state()
        assert inst.true_utility(s, inverse(inst.initial_perm)) == 1.0
        ident = tuple(range(1, 10))
        correct = sum(1 for i, v in enumerate(inst.initial_perm) if v == i + 1)
        assert inst.true_utility(s, ident) == pytest.approx(correct / 9)


class TestSudoku:
    def test_empty_board_is_valid(self):
        assert validate_sudoku([[0] * 9 for _ in range(9)]).valid

    def test_row_duplicate(self):
        board = [[0] * 9 for _ in range(9)]
        board[0][0] = board[0][5] = 5
        rep = validate_sudoku(board)
        assert not rep.valid
        assert [(v.unit, v.index, v.digit) for v in rep.violations] == [("row", 0, 5)]
        assert rep.violations[0].cells == ((0, 0), (0, 5))

    def test_agrees_with_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            board = rng.integers(0, 10, size=(9, 9)) * (rng.random((9, 9)) < rng.random())
            ours = sorted((v.unit, v.index, v.digit) for v in validate_sudoku(board).violations)
            assert ours == brute_force_sudoku_violations(board.tolist())

    def test_generated_puzzle_has_unique_solution(self):
        inst = generate_instance("sudoku", {"givens": 30}, 3)
        assert count_solutions(inst.board, limit=2) == 1
        assert sum(1 for v in inst.board if v) == 30
        assert validate_sudoku(inst.solution).valid

    def test_fill_actions(self):
        inst = generate_instance("sudoku", {"givens": 36}, 1)
        s = inst.initial_state()
        empties = inst.empty_cells(s)
        full = tuple((r, c, inst.solution[9 * r + c]) for r, c in empties)
        assert inst.true_utility(s, full) == 1.0
        done = inst.apply_action(s, full)
        assert inst.check_goal(done) and inst.is_terminal(done)

    def test_single_empty_cell(self):
        inst = generate_instance("sudoku", {"givens": 36}, 1)
        s = inst.initial_state()
        empties = inst.empty_cells(s)
        rest = tuple((r, c, inst.solution[9 * r + c]) for r, c in empties[1:])
        s = inst.apply_action(s, rest)
        assert inst.empty_cells(s) == [empties[0]]
        r, c = empties[0]
        with pytest.raises(InvalidActionError):
            inst.apply_action(s, ((r, c, 0),))
        with pytest.raises(InvalidActionError):
            inst.apply_action(s, ((empties[1][0], empties[1][1], 1),))

    def test_given_cells_are_protected(self):
        inst = generate_instance("sudoku", {"givens": 36}, 1)
        idx = next(i for i, v in enumerate(inst.board) if v)
        with pytest.raises(InvalidActionError):
            inst.apply_action(inst.initial_state(), ((idx // 9, idx % 9, 1),))

    def test_duplicate_is_not_goal(self):
        inst = generate_instance("sudoku", {"givens": 36}, 1)
        s = inst.initial_state()
        wrong = []
        for r, c in inst.empty_cells(s):
            v = inst.solution[9 * r + c]
            wrong.append((r, c, v % 9 + 1))
        done = inst.apply_action(s, tuple(wrong))
        assert inst.is_terminal(done) and not inst.check_goal(done)


class TestSerialization:
    @pytest.mark.parametrize("task", TASK_KINDS)
    def test_round_trip(self, task, tmp_path):
        inst = generate_instance(task, {}, 11)
        pub, truth = instance_to_json(inst)
        again = instance_from_json(pub, truth)
        assert instance_to_json(again) == (pub, truth)
        path, tpath = save_instance(inst, tmp_path / "inst.json")
        assert tpath.name == "inst.truth.json"
        assert instance_to_json(load_instance(path, with_truth=True)) == (pub, truth)

    @pytest.mark.parametrize("task", TASK_KINDS)
    def test_public_document_hides_the_truth(self, task):
        inst = generate_instance(task, {}, 11)
        pub, truth = instance_to_json(inst)
        for key in json.loads(truth):
            assert key not in json.loads(pub)

    def test_policy_facing_load_has_no_truth(self, tmp_path):
        inst = generate_instance("frozen-lake", {"size": 5}, 1)
        path, _ = save_instance(inst, tmp_path / "g.json")
        assert load_instance(path).unique_path is None
