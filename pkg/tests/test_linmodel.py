import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logsumexp

from bvsmcmc.linmodel import (
    PriorSpec,
    SingularModelError,
    center_data,
    enumerate_posterior,
    flip_model_state,
    gamma_index,
    log_marginal_likelihood,
    log_model_prior,
    make_model_state,
    move_model_state,
    rb_flip_logits,
)

from oracles import all_log_posts, bits, exact_pips, log_post_direct


def _data(n, p, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y = X[:, : min(p, 3)] @ np.array([1.0, -0.7, 0.5])[: min(p, 3)] + rng.normal(size=n)
    return center_data(y, X), y, X


class TestCenterData:
    def test_hand_example(self):
        d = center_data([1, 2, 3], [[4], [6], [8]])
        np.testing.assert_allclose(d.y, [-1, 0, 1])
        np.testing.assert_allclose(d.X[:, 0], [-2, 0, 2])

    def test_idempotent_on_centered_y(self):
        y = np.array([-1.5, 0.5, 1.0])
        d = center_data(y, np.arange(6.0).reshape(3, 2) ** 2)
        np.testing.assert_array_equal(d.y, y)

    def test_column_means_vanish(self):
        rng = np.random.default_rng(0)
        d = center_data(rng.normal(size=10), rng.normal(loc=5, size=(10, 3)))
        assert np.all(np.abs(d.X.mean(axis=0)) < 1e-12)
        assert abs(d.y.mean()) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            center_data(np.ones(4), np.ones((3, 2)))

    def test_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            center_data([1.0, np.nan, 2.0], np.ones((3, 1)))

    def test_constant_column_warns_and_is_kept(self):
        with pytest.warns(UserWarning, match="constant"):
            d = center_data([1.0, 2.0, 4.0], [[1.0, 3.0], [2.0, 3.0], [5.0, 3.0]])
        assert d.p == 2


class TestPriorSpec:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(g=0, h=0.5),
            dict(g=9, h=1.0),
            dict(g=9, h=0.0),
            dict(g=9, model_prior="betabinomial", a=1, b=0),
            dict(g=9, v_form="ridge", h=0.5),
        ],
    )
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            PriorSpec(**kwargs)


class TestLogModelPrior:
    def test_half_is_flat(self):
        pr = PriorSpec(h=0.5)
        rng = np.random.default_rng(1)
        for _ in range(5):
            gamma = rng.random(10) < 0.5
            assert log_model_prior(pr, gamma) == pytest.approx(10 * np.log(0.5))

    def test_empty_model_fixed_h(self):
        p = 100
        pr = PriorSpec(h=10 / p)
        assert log_model_prior(pr, np.zeros(p, bool)) == pytest.approx(p * np.log(1 - 10 / p))

    @pytest.mark.parametrize("p", [3, 7, 12])
    def test_betabinomial_sums_to_one(self, p):
        pr = PriorSpec(model_prior="betabinomial", a=1.3, b=2.1)
        lps = [log_model_prior(pr, bits(i, p)) for i in range(1 << p)]
        assert np.exp(logsumexp(lps)) == pytest.approx(1.0, abs=1e-12)


class TestMarginalLikelihood:
    def test_empty_model(self, small_data):
        d, _, _ = small_data
        pr = PriorSpec(g=9, h=0.5)
        expected = -0.5 * (d.n - 1) * np.log(d.y @ d.y)
        assert log_marginal_likelihood(d, pr, np.zeros(d.p, bool)) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("v_form", ["identity", "gprior"])
    def test_matches_direct_formula(self, small_data, v_form):
        d, y, X = small_data
        pr = PriorSpec(g=9, h=0.3, v_form=v_form)
        for i in range(1 << d.p):
            gamma = bits(i, d.p)
            got = make_model_state(d, pr, gamma).log_post
            assert got == pytest.approx(log_post_direct(y, X, gamma, g=9, h=0.3, v_form=v_form), abs=1e-9)

    def test_forms_agree_on_unit_norm_column(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=12)
        x -= x.mean()
        x /= np.linalg.norm(x)
        y = 0.3 * x + rng.normal(size=12)
        d = center_data(y, x[:, None])
        # X'X = 1: identity gives -1/2 log g - 1/2 log(1 + 1/g) = -1/2 log(1 + g), same S
        g = 4.0
        a = log_marginal_likelihood(d, PriorSpec(g=g, h=0.5), [True])
        b = log_marginal_likelihood(d, PriorSpec(g=g, h=0.5, v_form="gprior"), [True])
        assert a == pytest.approx(b, abs=1e-10)

    def test_gprior_duplicate_column_is_singular(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=15)
        X = np.column_stack([x, x, rng.normal(size=15)])
        d = center_data(rng.normal(size=15), X)
        pr = PriorSpec(g=9, h=0.5, v_form="gprior")
        s = make_model_state(d, pr, [True, False, False])
        with pytest.raises(SingularModelError):
            flip_model_state(s, 1, d, pr)
        with pytest.raises(SingularModelError):
            make_model_state(d, pr, [True, True, False])

    def test_gprior_too_many_columns(self):
        rng = np.random.default_rng(4)
        d = center_data(rng.normal(size=4), rng.normal(size=(4, 3)))
        with pytest.raises(SingularModelError):
            make_model_state(d, PriorSpec(g=9, h=0.5, v_form="gprior"), [True, True, True])


class TestModelState:
    def test_empty(self, small_data):
        d, _, _ = small_data
        pr = PriorSpec(g=9, h=0.2)
        s = make_model_state(d, pr, np.zeros(d.p, bool))
        assert s.chol.shape == (0, 0)
        assert s.log_post == pytest.approx(
            log_marginal_likelihood(d, pr, s.gamma) + log_model_prior(pr, s.gamma), abs=1e-12
        )

    def test_cholesky_reconstructs_F(self, small_data):
        d, _, _ = small_data
        pr = PriorSpec(g=9, h=0.2)
        gamma = np.array([True, False, True, True])
        s = make_model_state(d, pr, gamma)
        Xg = d.X[:, s.active]
        F = Xg.T @ Xg + np.eye(3) / 9
        np.testing.assert_allclose(s.chol @ s.chol.T, F, atol=1e-10)

    def test_flip_twice_is_identity(self, small_data):
        d, _, _ = small_data
        pr = PriorSpec(g=9, h=0.2)
        s = make_model_state(d, pr, [True, True, False, False])
        back = flip_model_state(flip_model_state(s, 2, d, pr), 2, d, pr)
        assert back.log_post == pytest.approx(s.log_post, abs=1e-8)
        back = flip_model_state(flip_model_state(s, 0, d, pr), 0, d, pr)
        assert back.log_post == pytest.approx(s.log_post, abs=1e-8)

    def test_flip_on_five_variable_model(self):
        d, _, _ = _data(40, 8, 7)
        pr = PriorSpec(g=9, h=0.3)
        gamma = np.array([1, 1, 0, 1, 1, 0, 1, 0], bool)
        s = make_model_state(d, pr, gamma)
        for j in range(8):
            flipped = gamma.copy()
            flipped[j] = ~flipped[j]
            assert flip_model_state(s, j, d, pr).log_post == pytest.approx(
                make_model_state(d, pr, flipped).log_post, abs=1e-8
            )

    def test_flip_out_of_range(self, small_data):
        d, _, _ = small_data
        s = make_model_state(d, PriorSpec(h=0.5), np.zeros(d.p, bool))
        with pytest.raises(IndexError):
            flip_model_state(s, d.p, d, PriorSpec(h=0.5))

    def test_long_random_flip_sequences(self):
        # 1000 random flip sequences over a handful of small datasets
        rng = np.random.default_rng(11)
        worst = 0.0
        for rep in range(10):
            d, _, _ = _data(25, 7, 100 + rep)
            pr = PriorSpec(g=float(rng.uniform(0.5, 50)), model_prior="betabinomial", a=1.0, b=2.0)
            for _ in range(100):
                s = make_model_state(d, pr, rng.random(7) < 0.4)
                for j in rng.integers(0, 7, size=15):
                    s = flip_model_state(s, int(j), d, pr)
                ref = make_model_state(d, pr, s.gamma)
                worst = max(worst, abs(s.log_post - ref.log_post))
        assert worst < 1e-8

    def test_downdate_and_refactor_paths(self):
        from bvsmcmc import linmodel

        d, _, _ = _data(120, 80, 9)
        pr = PriorSpec(g=9, h=0.3)
        gamma = np.zeros(80, bool)
        gamma[:70] = True
        s = make_model_state(d, pr, gamma)
        assert s.p_gamma > linmodel.DOWNDATE_MAX_SIZE
        for j in (0, 35, 69):
            g2 = gamma.copy()
            g2[j] = False
            assert flip_model_state(s, j, d, pr).log_post == pytest.approx(
                make_model_state(d, pr, g2).log_post, abs=1e-8
            )

    @settings(max_examples=60, deadline=None)
    @given(
        seed=st.integers(0, 10_000),
        start=st.lists(st.booleans(), min_size=6, max_size=6),
        target=st.lists(st.booleans(), min_size=6, max_size=6),
    )
    def test_move_matches_scratch(self, seed, start, target):
        d, _, _ = _data(20, 6, seed)
        pr = PriorSpec(g=9, h=0.4)
        s = move_model_state(make_model_state(d, pr, start), target, d, pr)
        np.testing.assert_array_equal(s.gamma, target)
        assert s.log_post == pytest.approx(make_model_state(d, pr, target).log_post, abs=1e-8)


class TestRbFlipLogits:
    @pytest.mark.parametrize("v_form", ["identity", "gprior"])
    def test_pairwise_oracle(self, v_form):
        d, _, _ = _data(25, 6, 3)
        pr = PriorSpec(g=9, h=0.3, v_form=v_form)
        rng = np.random.default_rng(0)
        for _ in range(20):
            s = make_model_state(d, pr, rng.random(6) < 0.5)
            got = rb_flip_logits(s, d, pr)
            for j in range(6):
                other = flip_model_state(s, j, d, pr)
                want = s.log_post - other.log_post if s.gamma[j] else other.log_post - s.log_post
                assert got[j] == pytest.approx(want, abs=1e-8)

    def test_sign_convention_active(self, small_data):
        d, _, _ = small_data
        pr = PriorSpec(g=9, h=0.5)
        s = make_model_state(d, pr, [True, False, False, False])
        assert rb_flip_logits(s, d, pr)[0] == pytest.approx(
            s.log_post - flip_model_state(s, 0, d, pr).log_post, abs=1e-10
        )

    def test_matches_enumerated_conditionals(self):
        d, y, X = _data(30, 4, 8)
        pr = PriorSpec(g=9, h=0.3)
        lp = all_log_posts(y, X, g=9, h=0.3)
        for i in range(16):
            s = make_model_state(d, pr, bits(i, 4))
            cond = 1 / (1 + np.exp(-rb_flip_logits(s, d, pr)))
            for j in range(4):
                on, off = i | (1 << j), i & ~(1 << j)
                want = 1 / (1 + np.exp(lp[off] - lp[on]))
                assert cond[j] == pytest.approx(want, abs=1e-10)

    def test_duplicate_column_identity_is_finite(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=20)
        d = center_data(rng.normal(size=20), np.column_stack([x, x]))
        pr = PriorSpec(g=9, h=0.5)
        s = make_model_state(d, pr, [True, False])
        assert np.all(np.isfinite(rb_flip_logits(s, d, pr)))

    def test_duplicate_column_gprior_is_minus_inf(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=20)
        d = center_data(rng.normal(size=20), np.column_stack([x, x, rng.normal(size=20)]))
        pr = PriorSpec(g=9, h=0.5, v_form="gprior")
        s = make_model_state(d, pr, [True, False, False])
        out = rb_flip_logits(s, d, pr)
        assert out[1] == -np.inf
        assert np.isfinite(out[[0, 2]]).all()


class TestEnumeratePosterior:
    def test_single_variable(self):
        d, _, _ = _data(20, 1, 1)
        pr = PriorSpec(g=9, h=0.5)
        ex = enumerate_posterior(d, pr)
        lp0 = make_model_state(d, pr, [False]).log_post
        lp1 = make_model_state(d, pr, [True]).log_post
        assert ex.pips[0] == pytest.approx(np.exp(lp1) / (np.exp(lp0) + np.exp(lp1)), abs=1e-12)

    def test_normalised(self):
        d, _, _ = _data(50, 10, 2)
        ex = enumerate_posterior(d, PriorSpec(g=9, h=0.5))
        assert np.exp(logsumexp(ex.log_probs)) == pytest.approx(1.0, abs=1e-10)
        assert np.all((ex.pips >= 0) & (ex.pips <= 1))

    def test_gray_code_matches_naive(self):
        d, y, X = _data(40, 8, 6)
        ex = enumerate_posterior(d, PriorSpec(g=9, h=0.3))
        lp = all_log_posts(y, X, g=9, h=0.3)
        np.testing.assert_allclose(ex.pips, exact_pips(lp, 8), atol=1e-10)
        np.testing.assert_allclose(ex.log_probs, lp - logsumexp(lp), atol=1e-10)

    def test_index_convention(self):
        assert gamma_index([True, False, True]) == 5

    def test_refuses_large_p(self):
        d, _, _ = _data(30, 6, 1)
        with pytest.raises(ValueError, match="cap"):
            enumerate_posterior(d, PriorSpec(h=0.5), max_p=5)

    def test_gprior_skips_singular_models(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=25)
        X = np.column_stack([x, x, rng.normal(size=25)])
        d = center_data(x + rng.normal(size=25), X)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            ex = enumerate_posterior(d, PriorSpec(g=9, h=0.5, v_form="gprior"))
        assert ex.log_probs[gamma_index([True, True, False])] == -np.inf
        assert np.exp(logsumexp(ex.log_probs)) == pytest.approx(1.0, abs=1e-10)
