import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from riskest.errors import DegenerateStatisticWarning, RankDeficiencyError, StatError, ValidationError
from riskest.statcore import (
    DesignMatrix,
    default_reference,
    dummy_encode,
    f_pvalue,
    one_way_anova,
    ols,
    pearson,
    reg_inc_beta,
    t_pvalue,
)

GRID_X = [i / 100 for i in range(1, 100)]
GRID_AB = [0.5, 1, 2, 5, 10]


def binomial_tail(x, a, n):
    # I_x(a, n - a + 1) = P(Binomial(n, x) >= a) for integer a, b
    return sum(math.comb(n, j) * x ** j * (1 - x) ** (n - j) for j in range(a, n + 1))


def f_sf_quadrature(F, d1, d2):
    def density(u):
        return (math.sqrt((d1 * u) ** d1 * d2 ** d2 / (d1 * u + d2) ** (d1 + d2))
                / (u * special.beta(d1 / 2, d2 / 2)))
    # substitute u = F + s/(1-s) to map the infinite tail onto [0, 1)
    val, _ = integrate.quad(lambda s: density(F + s / (1 - s)) / (1 - s) ** 2, 0, 1, epsabs=1e-13, epsrel=1e-12)
    return val


class TestRegIncBeta:
    def test_uniform_identity(self):
        assert reg_inc_beta(0.3, 1, 1) == pytest.approx(0.3, abs=1e-12)

    def test_symmetric_midpoint(self):
        assert reg_inc_beta(0.5, 2, 2) == pytest.approx(0.5, abs=1e-12)

    def test_binomial_closed_form(self):
        expected = binomial_tail(0.25, 2, 4)
        assert expected == 0.26171875
        assert reg_inc_beta(0.25, 2, 3) == pytest.approx(expected, abs=1e-10)

    @pytest.mark.parametrize("a,n", [(1, 3), (3, 7), (5, 9), (2, 12)])
    @pytest.mark.parametrize("x", [0.05, 0.3, 0.5, 0.77, 0.95])
    def test_integer_parameters_match_binomial(self, a, n, x):
        assert reg_inc_beta(x, a, n - a + 1) == pytest.approx(binomial_tail(x, a, n), abs=1e-10)

    def test_endpoints(self):
        assert reg_inc_beta(0.0, 2.5, 3.5) == 0.0
        assert reg_inc_beta(1.0, 2.5, 3.5) == 1.0

    @pytest.mark.parametrize("x,a,b", [(-0.1, 1, 1), (1.1, 1, 1), (0.5, 0, 1), (0.5, 1, -2), (float("nan"), 1, 1)])
    def test_domain_errors(self, x, a, b):
        with pytest.raises(ValidationError):
            reg_inc_beta(x, a, b)

    def test_reflection_grid(self):
        worst = max(
            abs(reg_inc_beta(x, a, b) + reg_inc_beta(1 - x, b, a) - 1)
            for x in GRID_X for a in GRID_AB for b in GRID_AB
        )
        assert worst <= 1e-10

    def test_against_reference(self):
        worst = max(
            abs(reg_inc_beta(x, a, b) - special.betainc(a, b, x))
            for x in GRID_X for a in GRID_AB for b in GRID_AB
        )
        assert worst <= 1e-10

    def test_large_parameters(self):
        assert reg_inc_beta(0.6, 200.0, 150.0) == pytest.approx(special.betainc(200.0, 150.0, 0.6), abs=1e-10)


class TestTails:
    def test_t_center(self):
        for df in (1, 2, 7, 100):
            assert t_pvalue(0.0, df) == 1.0

    def test_cauchy_closed_form(self):
        assert t_pvalue(1.0, 1) == pytest.approx(2 * (0.5 - math.atan(1.0) / math.pi), abs=1e-12)
        assert t_pvalue(1.0, 1) == pytest.approx(0.5, abs=1e-12)

    def test_cauchy_sixth(self):
        t = 0.5774
        assert t_pvalue(t, 1) == pytest.approx(2 * (0.5 - math.atan(t) / math.pi), abs=1e-12)
        assert t_pvalue(t, 1) == pytest.approx(2 / 3, abs=1e-4)

    def test_t_sign_symmetric(self):
        assert t_pvalue(-2.3, 9) == t_pvalue(2.3, 9)

    def test_t_df_error(self):
        with pytest.raises(ValidationError):
            t_pvalue(1.0, 0)

    def test_f_full_tail(self):
        assert f_pvalue(0.0, 2, 10) == 1.0

    def test_f_negative_error(self):
        with pytest.raises(ValidationError):
            f_pvalue(-0.1, 1, 4)

    def test_f_example_against_quadrature(self):
        oracle = f_sf_quadrature(1.5, 1, 4)
        assert oracle == pytest.approx(0.2878641347266907, abs=1e-9)
        assert f_pvalue(1.5, 1, 4) == pytest.approx(oracle, abs=1e-9)
        assert f_pvalue(1.5, 1, 4) == pytest.approx(stats.f.sf(1.5, 1, 4), abs=1e-12)

    @pytest.mark.parametrize("d1,d2,F", [(2, 10, 3.1), (5, 40, 0.7), (3, 197, 4.5), (1, 1, 9.0)])
    def test_f_against_reference(self, d1, d2, F):
        assert f_pvalue(F, d1, d2) == pytest.approx(stats.f.sf(F, d1, d2), abs=1e-10)

    @pytest.mark.parametrize("df", [1, 2, 5, 30, 150])
    def test_t_against_reference(self, df):
        for t in (0.01, 0.4, 1.7, 3.0, 8.0):
            assert t_pvalue(t, df) == pytest.approx(2 * stats.t.sf(t, df), abs=1e-10)

    def test_f_t_identity(self):
        for t in np.arange(0.1, 5.01, 0.1):
            for df in range(1, 31):
                assert abs(f_pvalue(t * t, 1, df) - t_pvalue(t, df)) <= 1e-9

    @given(st.floats(0, 50), st.floats(0, 50), st.integers(1, 60))
    def test_t_monotone(self, t1, t2, df):
        lo, hi = sorted((t1, t2))
        assert t_pvalue(hi, df) <= t_pvalue(lo, df) + 1e-15

    @given(st.floats(0, 500), st.floats(0, 500), st.integers(1, 20), st.integers(1, 200))
    def test_f_monotone(self, f1, f2, d1, d2):
        lo, hi = sorted((f1, f2))
        assert f_pvalue(hi, d1, d2) <= f_pvalue(lo, d1, d2) + 1e-15


class TestPearson:
    def test_perfect(self):
        res = pearson([1, 2, 3], [2, 4, 6])
        assert res.statistic == pytest.approx(1.0, abs=1e-12)
        assert res.p_value == 0.0

    def test_hand_example(self):
        # dx = (-1, 0, 1), dy = (1, -1, 0): sxy = -1, sxx = syy = 2
        res = pearson([1, 2, 3], [6, 4, 5])
        assert res.statistic == pytest.approx(-0.5, abs=1e-9)
        assert res.df == (1,)
        assert res.p_value == pytest.approx(2 / 3, abs=1e-6)

    def test_constant(self):
        with pytest.raises(StatError, match="constant sample"):
            pearson([1, 1, 1], [1, 2, 3])

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            pearson([1, 2, 3], [1, 2])

    @settings(max_examples=60)
    @given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=4, max_size=30),
           st.floats(0.1, 100), st.floats(-50, 50))
    def test_symmetry_and_affine(self, pairs, scale, shift):
        x, y = map(np.array, zip(*pairs))
        if np.ptp(x) < 1e-3 or np.ptp(y) < 1e-3:
            return
        r = pearson(x, y).statistic
        assert pearson(y, x).statistic == pytest.approx(r, abs=1e-9)
        assert pearson(scale * x + shift, y).statistic == pytest.approx(r, abs=1e-7)
        assert pearson(-scale * x, y).statistic == pytest.approx(-r, abs=1e-7)
        assert -1.0 <= r <= 1.0


class TestAnova:
    def test_hand_example(self):
        # means 2 and 3, grand 2.5: SSB = 6 * 0.25 = 1.5, SSW = 2 + 2 = 4
        res = one_way_anova({"a": [1, 2, 3], "b": [2, 3, 4]})
        assert res.statistic == pytest.approx(1.5, abs=1e-9)
        assert res.df == (1, 4)
        assert res.p_value == pytest.approx(stats.f_oneway([1, 2, 3], [2, 3, 4]).pvalue, abs=1e-6)

    def test_identical_groups(self):
        res = one_way_anova([[1, 2], [1, 2]])
        assert res.statistic == 0.0
        assert res.p_value == 1.0

    def test_single_group(self):
        with pytest.raises(StatError):
            one_way_anova({"a": [1, 2, 3]})

    def test_empty_group(self):
        with pytest.raises(StatError):
            one_way_anova({"a": [1, 2], "b": []})

    def test_zero_within_variance(self):
        with pytest.warns(DegenerateStatisticWarning):
            res = one_way_anova({"a": [1, 1], "b": [2, 2]})
        assert res.infinite and math.isinf(res.statistic) and res.p_value == 0.0

    def test_all_constant(self):
        with pytest.raises(StatError, match="zero variance"):
            one_way_anova({"a": [3, 3], "b": [3, 3]})

    @settings(max_examples=50)
    @given(st.lists(st.lists(st.floats(-100, 100), min_size=1, max_size=8), min_size=2, max_size=5), st.randoms())
    def test_permutation_invariance(self, groups, rnd):
        if sum(len(g) for g in groups) <= len(groups):
            return
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateStatisticWarning)
            try:
                res = one_way_anova(groups)
            except StatError:
                return
            shuffled = groups[:]
            rnd.shuffle(shuffled)
            again = one_way_anova(shuffled)
        assert res.statistic >= 0
        assert 0.0 <= res.p_value <= 1.0
        assert again.statistic == res.statistic


class TestDummy:
    def test_two_levels(self):
        cols = dummy_encode(["a", "b", "a"], "a")
        assert list(cols) == ["b"]
        assert cols["b"].tolist() == [0, 1, 0]

    def test_three_levels(self):
        cols = dummy_encode(["a", "b", "c"], "a")
        assert len(cols) == 2
        assert all(s <= 1 for s in np.sum(list(cols.values()), axis=0))

    def test_single_level(self):
        assert dummy_encode(["a", "a"], "a") == {}

    def test_unknown_reference(self):
        with pytest.raises(ValidationError):
            dummy_encode(["a", "b"], "z")

    def test_default_reference(self):
        assert default_reference(["b", "a", "b", "c"]) == "b"
        assert default_reference(["b", "a"]) == "a"

    @given(st.lists(st.sampled_from("pqrs"), min_size=1, max_size=30))
    def test_rows_indicate_level(self, labels):
        ref = default_reference(labels)
        cols = dummy_encode(labels)
        for i, lab in enumerate(labels):
            row = {lvl: col[i] for lvl, col in cols.items()}
            if lab == ref:
                assert sum(row.values()) == 0
            else:
                assert row[lab] == 1 and sum(row.values()) == 1


class TestOls:
    def test_exact_fit(self):
        fit = ols(DesignMatrix(("x",), [[1], [2], [3]]), [3, 5, 7])
        assert fit.intercept == pytest.approx(1.0, abs=1e-12)
        assert fit.coefficients["x"] == pytest.approx(2.0, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_hand_least_squares(self):
        # slope = Sxy/Sxx = 1/2; intercept = 5/3 - 2*1/2; SSE = 1/6, SST = 2/3
        fit = ols(DesignMatrix(("x",), [[1], [2], [3]]), [1, 2, 2])
        assert fit.intercept == pytest.approx(2 / 3, abs=1e-9)
        assert fit.coefficients["x"] == pytest.approx(0.5, abs=1e-9)
        assert fit.r_squared == pytest.approx(0.75, abs=1e-9)
        assert fit.n == 3 and fit.rank == 2

    def test_duplicate_column(self):
        X = DesignMatrix(("a", "b"), [[1, 1], [2, 2], [3, 3], [4, 4.0]])
        with pytest.raises(RankDeficiencyError) as info:
            ols(X, [1, 2, 3, 5])
        assert set(info.value.columns) == {"a", "b"}

    def test_collinear_with_intercept(self):
        X = DesignMatrix(("a", "c"), [[1, 7], [2, 7], [3, 7], [4, 7.0]])
        with pytest.raises(RankDeficiencyError) as info:
            ols(X, [1, 2, 3, 5])
        assert "c" in info.value.columns

    def test_too_few_rows(self):
        with pytest.raises(StatError):
            ols(DesignMatrix(("a",), [[1], [2]]), [1, 2])

    def test_constant_target(self):
        fit = ols(DesignMatrix(("a",), [[1], [2], [4], [5]]), [7, 7, 7, 7])
        assert fit.intercept == pytest.approx(7.0, abs=1e-9)
        assert fit.coefficients["a"] == pytest.approx(0.0, abs=1e-9)
        assert fit.degenerate

    def test_against_lstsq(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(40, 4)) * [1, 100, 0.01, 5]
        y = rng.normal(size=40)
        fit = ols(X, y)
        ref, *_ = np.linalg.lstsq(np.column_stack([np.ones(40), X]), y, rcond=None)
        got = np.array([fit.intercept] + list(fit.coefficients.values()))
        np.testing.assert_allclose(got, ref, rtol=1e-9, atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 5), st.integers(8, 40))
    def test_residual_orthogonality(self, seed, p, n):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, p)) * rng.uniform(0.01, 100, size=p)
        y = X @ rng.normal(size=p) + rng.normal(size=n)
        fit = ols(X, y)
        A = np.column_stack([np.ones(n), X])
        rnorm = np.linalg.norm(fit.residuals)
        for j in range(A.shape[1]):
            assert abs(A[:, j] @ fit.residuals) <= 1e-8 * np.linalg.norm(A[:, j]) * max(rnorm, 1e-300) + 1e-12
        beta = np.array(list(fit.coefficients.values()))
        assert np.array_equal(fit.fitted, fit.intercept + X @ beta)
        assert 0.0 <= fit.r_squared <= 1.0
        assert len(fit.residuals) == n
