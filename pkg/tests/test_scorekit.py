import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vabs.errors import ConfigurationError, ContractViolation, DegenerateInputError, InputError
from vabs.scorekit import (
    DEFAULT_TOKEN_SET,
    TOKEN_SETS,
    PositiveTokenSet,
    ScoreBreakdown,
    WeightConfig,
    adaptive_weights,
    aggregate_positive_logprob,
    final_score,
    fused_mse,
    gaussian_entropy,
    observer_active,
    optimal_weight,
    shannon_entropy,
    softmax_with_temperature,
)

from oracles import (
    FINAL_SCORE_EXAMPLE,
    SIGMOID_H0,
    SIGMOID_H15,
    SOFTMAX_10_TAU05,
    SOFTMAX_210_TAU1,
    fused_mse_closed_form,
)

finite = st.floats(min_value=-50, max_value=50, allow_nan=False)
score_vectors = st.lists(finite, min_size=1, max_size=12)


class TestTokenAggregation:
    def test_sums_present_tokens(self):
        assert aggregate_positive_logprob({"Yes": -0.1, "yes": -2.3}, ["Yes", "yes"]) == pytest.approx(-2.4)

    def test_absent_tokens_take_the_floor(self):
        got = aggregate_positive_logprob({"Yes": -0.1}, ["Yes", "yes", "True"], floor=-20)
        assert got == pytest.approx(-40.1)

    def test_empty_logprobs(self):
        assert aggregate_positive_logprob({}, ["Yes"], floor=-20) == -20

    def test_empty_token_set_is_a_config_error(self):
        with pytest.raises(ConfigurationError):
            aggregate_positive_logprob({"Yes": 0.0}, [])

    @pytest.mark.parametrize("floor", [1.0, math.inf, math.nan])
    def test_bad_floor(self, floor):
        with pytest.raises(ConfigurationError):
            aggregate_positive_logprob({}, ["Yes"], floor=floor)

    def test_non_finite_logprob_rejected(self):
        with pytest.raises(InputError):
            aggregate_positive_logprob({"Yes": math.nan}, ["Yes"])

    def test_token_set_validation(self):
        with pytest.raises(ConfigurationError):
            PositiveTokenSet("dup", ("Yes", "Yes"))
        with pytest.raises(ConfigurationError):
            PositiveTokenSet("empty", ())

    def test_default_set_merges_all_groups(self):
        assert DEFAULT_TOKEN_SET is TOKEN_SETS["all-combined"]
        for word in ("Yes", "yes", "True", "true", "Correct", "correct"):
            assert word in DEFAULT_TOKEN_SET.tokens
        assert len(set(DEFAULT_TOKEN_SET.tokens)) == len(DEFAULT_TOKEN_SET.tokens)


class TestSoftmax:
    def test_equal_scores_are_uniform(self):
        np.testing.assert_allclose(softmax_with_temperature([0, 0, 0, 0], 0.5), [0.25] * 4)

    def test_two_way_closed_form(self):
        np.testing.assert_allclose(softmax_with_temperature([1, 0], 0.5), SOFTMAX_10_TAU05, atol=1e-4)
        np.testing.assert_allclose(softmax_with_temperature([1, 0], 0.5), [0.8808, 0.1192], atol=1e-4)

    def test_three_way_closed_form(self):
        np.testing.assert_allclose(softmax_with_temperature([2, 1, 0], 1.0), SOFTMAX_210_TAU1, atol=1e-12)
        np.testing.assert_allclose(softmax_with_temperature([2, 1, 0], 1.0), [0.6652, 0.2447, 0.0900], atol=1e-4)

    @pytest.mark.parametrize("tau", [0.0, -1.0])
    def test_bad_temperature(self, tau):
        with pytest.raises(ConfigurationError):
            softmax_with_temperature([1.0], tau)

    @pytest.mark.parametrize("raw", [[math.nan, 0.0], [math.inf], []])
    def test_bad_input(self, raw):
        with pytest.raises(InputError):
            softmax_with_temperature(raw, 0.5)

    def test_huge_scores_do_not_overflow(self):
        p = softmax_with_temperature([1e6, 0.0], 0.5)
        assert p[0] == 1.0 and p[1] == 0.0

    @given(score_vectors, st.floats(min_value=0.05, max_value=5))
    def test_is_a_distribution(self, raw, tau):
        p = softmax_with_temperature(raw, tau)
        assert abs(p.sum() - 1) < 1e-9
        assert np.all((p >= 0) & (p <= 1))

    @given(score_vectors, st.floats(min_value=-1e3, max_value=1e3), st.floats(min_value=0.1, max_value=5))
    def test_shift_invariance(self, raw, c, tau):
        a = softmax_with_temperature(raw, tau)
        b = softmax_with_temperature([x + c for x in raw], tau)
        np.testing.assert_allclose(a, b, atol=1e-9)


class TestEntropy:
    def test_one_hot_is_zero(self):
        assert shannon_entropy([1, 0, 0]) == 0.0

    def test_known_values(self):
        assert shannon_entropy([0.5, 0.5]) == pytest.approx(0.6931, abs=1e-4)
        assert shannon_entropy([0.25] * 4) == pytest.approx(1.3863, abs=1e-4)

    @pytest.mark.parametrize("B", range(2, 9))
    def test_uniform_is_maximal(self, B):
        h_uni = shannon_entropy([1 / B] * B)
        assert h_uni == pytest.approx(math.log(B), abs=1e-9)
        rng = np.random.default_rng(B)
        for _ in range(1000):
            assert shannon_entropy(rng.dirichlet(np.ones(B))) <= h_uni + 1e-12

    def test_other_base(self):
        assert shannon_entropy([0.5, 0.5], base=2) == pytest.approx(1.0)

    def test_tiny_probabilities_skipped(self):
        assert shannon_entropy([1 - 1e-15, 1e-15]) == pytest.approx(0.0, abs=1e-12)


class TestAdaptiveWeights:
    def test_midpoint(self):
        assert adaptive_weights(0.5, WeightConfig()) == (0.5, 0.5)

    def test_closed_forms(self):
        assert adaptive_weights(0.0)[0] == pytest.approx(SIGMOID_H0, abs=1e-12)
        assert adaptive_weights(0.0)[0] == pytest.approx(0.7311, abs=1e-4)
        assert adaptive_weights(1.5)[0] == pytest.approx(SIGMOID_H15, abs=1e-12)
        assert adaptive_weights(1.5)[1] == pytest.approx(0.8808, abs=1e-4)

    def test_extremes_do_not_overflow(self):
        assert adaptive_weights(1e6) == (0.0, 1.0)
        w_p, w_o = adaptive_weights(0.0, WeightConfig(beta=1e4))
        assert w_p == pytest.approx(1.0) and w_o == pytest.approx(0.0)

    def test_forced_weight(self):
        assert adaptive_weights(3.0, WeightConfig(forced_w_p=0.5)) == (0.5, 0.5)

    @given(st.floats(min_value=0, max_value=20), st.floats(min_value=0, max_value=20))
    def test_monotone_decreasing_and_complementary(self, h1, h2):
        lo, hi = sorted((h1, h2))
        wl, ol = adaptive_weights(lo)
        wh, oh = adaptive_weights(hi)
        assert wl >= wh
        assert abs(wl + ol - 1) < 1e-12 and abs(wh + oh - 1) < 1e-12

    @pytest.mark.parametrize("kw", [dict(beta=0), dict(tau=0), dict(mu=-1), dict(delta=-0.1),
                                    dict(forced_w_p=1.5), dict(entropy_base=1.0)])
    def test_invalid_config(self, kw):
        with pytest.raises(ConfigurationError):
            WeightConfig(**kw)


class TestFinalScore:
    def test_weighted_example(self):
        cfg = WeightConfig(beta=2, mu=0.5, delta=0.5)
        bd = final_score(0.6, 0.9, 0.1, 1.0, cfg)
        assert bd.final == pytest.approx(FINAL_SCORE_EXAMPLE, abs=1e-12)
        assert bd.final == pytest.approx(0.9193, abs=1e-3)
        assert bd.w_p == pytest.approx(0.2689, abs=1e-4)

    def test_skip_branch(self):
        cfg = WeightConfig(delta=0.5)
        bd = final_score(0.6, None, 0.0, 0.1, cfg)
        w_p, _ = adaptive_weights(0.1, cfg)
        assert bd.final == pytest.approx(w_p * 0.6)
        assert not bd.observer_used

    def test_skip_ignores_a_supplied_observer_score(self):
        cfg = WeightConfig(delta=0.5)
        assert final_score(0.6, 0.9, 0.0, 0.1, cfg).final == final_score(0.6, None, 0.0, 0.1, cfg).final

    def test_missing_observer_above_threshold(self):
        with pytest.raises(ContractViolation):
            final_score(0.6, None, 0.0, 1.0, WeightConfig(delta=0.5))

    @given(st.floats(min_value=0, max_value=1), st.floats(min_value=0, max_value=5))
    def test_tie_case(self, p, h):
        cfg = WeightConfig(delta=0.0)
        assert final_score(p, p, 0.0, h, cfg).final == pytest.approx(p, abs=1e-12)

    def test_breakdown_round_trip(self):
        bd = final_score(0.3, 0.7, 0.2, 1.1, WeightConfig(delta=0))
        assert ScoreBreakdown.from_dict(bd.to_dict()) == bd
        assert bd.w_p + bd.w_o == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=50)
    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=2, max_size=8),
           st.floats(min_value=0, max_value=1.8))
    def test_skip_preserves_prior_plus_heuristic_ranking(self, cands, h):
        cfg = WeightConfig()
        assert not observer_active(h, cfg)
        w_p, _ = adaptive_weights(h, cfg)
        scores = [final_score(fp, None, fh, h, cfg).final for fp, fh in cands]
        expected = [w_p * fp + fh for fp, fh in cands]
        assert np.argsort(scores, kind="stable").tolist() == np.argsort(expected, kind="stable").tolist()


class TestTheory:
    def test_optimal_weight_examples(self):
        assert optimal_weight(1, 1) == 0.5
        assert optimal_weight(3, 1) == 0.25
        assert optimal_weight(1e9, 1) == pytest.approx(0.0, abs=1e-8)

    def test_degenerate(self):
        with pytest.raises(DegenerateInputError):
            optimal_weight(0, 0)

    @pytest.mark.parametrize("sigma", [0.1, 1.0, 10.0])
    def test_variance_entropy_identity(self, sigma):
        h = gaussian_entropy(sigma**2)
        assert math.exp(2 * h) == pytest.approx(2 * math.pi * math.e * sigma**2, rel=1e-9)

    @given(st.floats(0, 1), st.floats(0.01, 10), st.floats(0.01, 10))
    def test_fused_mse_matches_closed_form(self, w, vp, vo):
        assert fused_mse(w, vp, vo) == pytest.approx(fused_mse_closed_form(w, vp, vo))

    @given(st.floats(0.01, 10), st.floats(0.01, 10))
    def test_optimum_minimizes_closed_form(self, vp, vo):
        w_star = optimal_weight(vp, vo)
        for w in np.linspace(0, 1, 21):
            assert fused_mse(w_star, vp, vo) <= fused_mse(w, vp, vo) + 1e-12
