import itertools
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from evspectral.basis import trig_basis
from evspectral.config import EULER_GAMMA
from evspectral.core import (
    BasisFamily,
    Theta,
    copula_eval,
    family_A,
    mai_scherer_fixture,
    validate_pickands_values,
)
from evspectral.errors import (
    DegenerateBasisWarning,
    DegenerateColumn,
    DimensionMismatch,
    MissingCovariance,
    NonFiniteInput,
    OutOfRange,
    RankDeficient,
    SingularDesign,
    ZeroXi,
)
from evspectral.estimators import (
    ExpMarginSample,
    GridMeasure,
    ProjectionFit,
    asym_cov,
    ci_for_A,
    ci_for_C,
    constrain_theta,
    exp_margins,
    fit_parametric_A,
    gram_matrix,
    is_full_rank,
    pickands_np,
    pickands_ols,
    plugin_sigma,
    project_theta,
    xi,
)
from evspectral.sampler import SamplerState

M19 = GridMeasure.uniform()
A3_HALF = 1 - 1 / np.pi


def draw(theta, n, seed=1, rep=0):
    x = SamplerState.build(trig_basis(), theta, seed).sample(n, rep)
    return ExpMarginSample(-np.log(x))


def fit_from(S, target):
    S = np.asarray(S, dtype=float)
    return ProjectionFit(Theta(target), S, S @ np.asarray(target), True)


def grid_search(S, target, region="simplex", step=1e-3):
    g = np.arange(0, 1 + step / 2, step)
    t1, t2 = np.meshgrid(g, g, indexing="ij")
    c = np.column_stack([t1.ravel(), t2.ravel()])
    if region == "simplex":
        c = c[c.sum(axis=1) <= 1 + 1e-12]
    d = c - target
    return c[np.argmin(np.einsum("ij,jk,ik->i", d, S, d))]


class TestMargins:
    def test_uniform(self):
        s = exp_margins([[0.5, 0.25], [0.1, 0.9]], "uniform")
        assert s.y[0, 0] == pytest.approx(np.log(2), abs=1e-15)

    def test_ranks(self):
        s = exp_margins(np.array([[3, 1], [1, 2], [2, 3]]), "ranks")
        assert_allclose(s.y[:, 0], [-np.log(3 / 4), -np.log(1 / 4), -np.log(2 / 4)])

    def test_ties_average(self):
        s = exp_margins(np.array([[1, 1], [1, 2], [2, 3], [4, 0]]), "ranks")
        assert_allclose(s.y[:2, 0], -np.log(1.5 / 5))

    def test_known_exponential_cdf(self):
        s = exp_margins([[1.0, 1.0], [2.0, 0.5]], stats.expon())
        assert s.y[0, 0] == pytest.approx(0.45868, abs=1e-5)
        assert s.y[0, 0] == pytest.approx(-np.log(1 - np.exp(-1)), rel=1e-14)

    def test_per_column(self):
        s = exp_margins([[0.5, 1.0], [0.25, 2.0]], ["uniform", lambda x: 1 - np.exp(-x)])
        assert_allclose(s.y[:, 0], [np.log(2), np.log(4)])

    def test_errors(self):
        with pytest.raises(NonFiniteInput):
            exp_margins([[np.nan, 1], [1, 2]])
        with pytest.raises(DegenerateColumn):
            exp_margins([[1, 1], [1, 2], [1, 3]])
        with pytest.raises(DimensionMismatch):
            exp_margins([[1, 2]], "ranks")
        with pytest.raises(DimensionMismatch):
            exp_margins([[1, 2], [3, 4]], ["ranks"])
        with pytest.raises(NonFiniteInput):
            exp_margins([[0.0, 0.5], [0.5, 0.5]], "uniform")

    def test_sample_invariants(self):
        with pytest.raises(OutOfRange):
            ExpMarginSample(np.array([[-1.0, 1], [1, 1]]))
        with pytest.raises(DimensionMismatch):
            ExpMarginSample(np.array([[1.0, 1]]))
        s = ExpMarginSample(np.ones((3, 2)))
        with pytest.raises(ValueError):
            s.y[0, 0] = 2


class TestGrid:
    def test_uniform_grid(self):
        assert_allclose(M19.t, 0.05 * np.arange(1, 20), atol=1e-15)
        assert M19.weights.sum() == pytest.approx(1, abs=1e-12)

    def test_invalid(self):
        with pytest.raises(OutOfRange):
            GridMeasure([[0.5, 0.5], [0.2, 0.8]], [0.5, 0.6])
        with pytest.raises(ValueError):
            GridMeasure([[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5])


class TestXi:
    def test_examples(self):
        s = ExpMarginSample(np.array([[1.0, 2.0], [0.0, 5.0]]))
        assert_allclose(xi(s, [0.5, 0.5]), [2.0, 0.0])
        assert_allclose(xi(s, [1.0, 0.0]), [1.0, 0.0])

    def test_many_points_d3(self):
        s = ExpMarginSample(np.array([[1.0, 2.0, 3.0]] * 2))
        out = xi(s, np.array([[1 / 3, 1 / 3, 1 / 3], [0, 0, 1]]))
        assert_allclose(out[0], [3.0, 3.0])

    @given(st.floats(0.01, 0.99))
    def test_exponential_law_mean(self, t):
        s = draw((0.1, 0.1), 20_000, seed=5)
        w = np.array([t, 1 - t])
        rate = family_A(trig_basis(), (0.1, 0.1), w)
        assert abs(xi(s, w).mean() * rate - 1) < 5 / np.sqrt(20_000)

    def test_exponential_goodness_of_fit(self):
        fam = trig_basis()
        w = np.array([0.3, 0.7])
        rate = family_A(fam, (0.8, 0.1), w)
        state = SamplerState.build(fam, (0.8, 0.1), 17)
        crit = stats.kstwo.ppf(0.99, 10_000)
        passed = 0
        for r in range(100):
            x = xi(ExpMarginSample(-np.log(state.sample(10_000, r))), w)
            passed += stats.kstest(x, stats.expon(scale=1 / rate).cdf).statistic < crit
        assert passed >= 95


class TestRawEstimator:
    def test_unit(self):
        y = np.full((5, 2), np.exp(-EULER_GAMMA) / 2)
        assert pickands_np(ExpMarginSample(y), [0.5, 0.5]) == pytest.approx(1.0, rel=1e-14)

    def test_location_shift(self):
        y = np.full((5, 2), np.exp(-EULER_GAMMA) / 4)
        assert pickands_np(ExpMarginSample(y), [0.5, 0.5]) == pytest.approx(2.0, rel=1e-14)

    def test_zero_xi(self):
        s = ExpMarginSample(np.array([[0.0, 1.0], [1.0, 2.0], [2.0, 1.0]]))
        with pytest.raises(ZeroXi):
            pickands_np(s, [0.5, 0.5], on_zero="raise")
        with pytest.warns(RuntimeWarning):
            val = pickands_np(s, [0.5, 0.5])
        ref = pickands_np(ExpMarginSample(s.y[1:]), [0.5, 0.5])
        assert val == pytest.approx(ref, rel=1e-14)

    def test_large_sample(self):
        s = draw((0, 0), 100_000, seed=3)
        se = A3_HALF * np.sqrt(np.pi**2 / 6 / s.n)
        assert abs(pickands_np(s, [0.5, 0.5]) - A3_HALF) < 3 * se


class TestOLSEstimator:
    def test_vertices(self):
        s = draw((0.3, 0.2), 300)
        out = pickands_ols(s, np.array([[1.0, 0.0], [0.0, 1.0]]))
        assert_allclose(out, 1.0, atol=1e-12)

    def test_singular(self):
        with pytest.raises(SingularDesign):
            pickands_ols(ExpMarginSample(np.array([[1.0, 2.0], [2.0, 1.0]])), [0.5, 0.5])
        y = np.column_stack([np.arange(1, 11.0), np.arange(1, 11.0)])
        with pytest.raises(SingularDesign):
            pickands_ols(ExpMarginSample(y), [0.5, 0.5])

    def test_intercept_matches_lstsq(self):
        s = draw((0.05, 0.9), 400)
        w = np.array([0.35, 0.65])
        z = -np.log(s.y) - EULER_GAMMA
        r = -np.log(xi(s, w)) - EULER_GAMMA
        X = np.column_stack([np.ones(s.n), z])
        beta = np.linalg.lstsq(X, r, rcond=None)[0]
        assert pickands_ols(s, w) == pytest.approx(np.exp(beta[0]), rel=1e-12)

    def test_large_sample_and_variance(self):
        s = draw((0, 0), 100_000, seed=4)
        se = A3_HALF * np.sqrt(np.pi**2 / 6 / s.n)
        assert abs(pickands_ols(s, [0.5, 0.5]) - A3_HALF) < 3 * se
        state = SamplerState.build(trig_basis(), (0, 0), 8)
        vals = np.array([[pickands_np(ExpMarginSample(-np.log(state.sample(500, r))), [0.5, 0.5]),
                          pickands_ols(ExpMarginSample(-np.log(state.sample(500, r))), [0.5, 0.5])]
                         for r in range(200)])
        assert vals[:, 1].var() < vals[:, 0].var()


class TestGram:
    def test_degenerate(self):
        m = trig_basis().basis[0]
        with pytest.warns(DegenerateBasisWarning):
            fam = BasisFamily((m, m))
        S = gram_matrix(fam, M19)
        assert_array_equal(S, np.zeros((1, 1)))
        assert not is_full_rank(S)

    def test_non_identifiable_fixture(self):
        fam = BasisFamily(tuple(mai_scherer_fixture()))
        S = gram_matrix(fam, M19)
        assert not is_full_rank(S)
        with pytest.raises(RankDeficient):
            project_theta(np.zeros(19), fam, M19)

    def test_trig(self, fam):
        S = gram_matrix(fam, M19)
        H = fam.h_matrix(M19.points)
        assert_allclose(S, S.T, atol=0)
        assert np.all(np.linalg.eigvalsh(S) > 0)
        direct = np.array([[sum(H[l, i] * H[l, j] / 19 for l in range(19)) for j in range(2)]
                           for i in range(2)])
        assert_allclose(S, direct, rtol=1e-13)


class TestProjection:
    @given(st.tuples(st.floats(0, 1), st.floats(0, 1)).filter(lambda t: sum(t) <= 1))
    def test_recovery(self, theta):
        fam = trig_basis()
        a_hat = fam.h_matrix(M19.points) @ np.array(theta)
        fit = project_theta(a_hat, fam, M19)
        assert_allclose(fit.theta_hat.values, theta, atol=1e-10)

    def test_zero(self, fam):
        assert_allclose(project_theta(np.zeros(19), fam, M19).theta_hat.values, 0, atol=1e-15)

    def test_random_against_normal_equations(self, fam, rng):
        H = fam.h_matrix(M19.points)
        for _ in range(20):
            a = rng.normal(size=19)
            fit = project_theta(a, fam, M19)
            q0 = np.linalg.solve(H.T @ H, H.T @ a)
            assert_allclose(fit.theta_hat.values, q0, rtol=1e-12, atol=1e-12)
            assert np.linalg.norm(fit.gram @ fit.theta_hat.values - fit.rhs) <= 1e-10 * np.linalg.norm(fit.rhs)
            # independent oracle: ordinary least squares
            ref = np.linalg.lstsq(H, a, rcond=None)[0]
            assert_allclose(fit.theta_hat.values, ref, atol=1e-3)

    def test_weighted(self, fam, rng):
        wts = rng.uniform(0.5, 1.5, 19)
        M = GridMeasure(M19.points, wts / wts.sum())
        a = rng.normal(size=19)
        H = fam.h_matrix(M.points)
        sw = np.sqrt(M.weights)
        ref = np.linalg.lstsq(sw[:, None] * H, sw * a, rcond=None)[0]
        assert_allclose(project_theta(a, fam, M).theta_hat.values, ref, rtol=1e-10)

    @given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
    def test_linearity(self, seed, alpha, beta):
        fam = trig_basis()
        r = np.random.default_rng(seed)
        a, b = r.normal(size=19), r.normal(size=19)
        lhs = project_theta(alpha * a + beta * b, fam, M19).theta_hat.values
        rhs = (alpha * project_theta(a, fam, M19).theta_hat.values
               + beta * project_theta(b, fam, M19).theta_hat.values)
        assert_allclose(lhs, rhs, atol=1e-10)

    def test_wrong_length(self, fam):
        with pytest.raises(DimensionMismatch):
            project_theta(np.zeros(5), fam, M19)


class TestConstrain:
    def test_feasible_unchanged(self):
        fit = fit_from(np.eye(2), [0.2, 0.3])
        out = constrain_theta(fit)
        assert_array_equal(out.theta_hat.values, [0.2, 0.3])
        assert out.constrained

    @pytest.mark.parametrize("target,expected", [((1.2, -0.1), (1.0, 0.0)), ((0.8, 0.8), (0.5, 0.5))])
    def test_identity_metric(self, target, expected):
        out = constrain_theta(fit_from(np.eye(2), target)).theta_hat.values
        assert_allclose(out, expected, atol=1e-12)
        assert_allclose(out, grid_search(np.eye(2), np.array(target)), atol=1e-3)

    @given(st.integers(0, 2**32 - 1), st.sampled_from(["simplex", "box"]))
    def test_against_grid_search(self, seed, region):
        r = np.random.default_rng(seed)
        L = r.normal(size=(2, 2))
        S = L @ L.T + 0.1 * np.eye(2)
        target = r.uniform(-1, 2, 2)
        out = constrain_theta(fit_from(S, target), region).theta_hat.values
        ref = grid_search(S, target, region, step=2e-3)
        val = lambda t: (t - target) @ S @ (t - target)
        assert val(out) <= val(ref) + 1e-12
        assert np.all(out >= 0) and np.all(out <= 1)
        if region == "simplex":
            assert out.sum() <= 1 + 1e-12

    def test_higher_dimension(self, rng):
        L = rng.normal(size=(4, 4))
        S = L @ L.T + np.eye(4)
        target = np.array([0.9, -0.3, 0.6, 0.4])
        out = constrain_theta(fit_from(S, target)).theta_hat.values
        assert np.all(out >= 0) and out.sum() <= 1 + 1e-12
        val = lambda t: (t - target) @ S @ (t - target)
        # no random feasible point does better
        cand = rng.dirichlet(np.ones(5), size=20_000)[:, :4]
        assert val(out) <= min(val(c) for c in cand) + 1e-12

    def test_box_allows_sum_above_one(self):
        out = constrain_theta(fit_from(np.eye(2), [0.8, 0.8]), "box").theta_hat.values
        assert_allclose(out, [0.8, 0.8])

    def test_rank_deficient(self):
        fit = ProjectionFit(Theta([2.0]), np.zeros((1, 1)), np.zeros(1), False)
        with pytest.raises(RankDeficient):
            constrain_theta(fit)


class TestFit:
    def test_exact_input(self, fam):
        # bypassing the noise: an exact A on the grid gives back theta
        th = np.array([0.3, 0.45])
        a_hat = family_A(fam, th, M19.points) - fam.evaluate_all(M19.points)[:, -1]
        assert_allclose(project_theta(a_hat, fam, M19).theta_hat.values, th, atol=1e-12)

    def test_vertex_theta_large_n(self, fam):
        s = draw((1.0, 0.0), 100_000, seed=21)
        fit = fit_parametric_A(s, fam, M19, "ols", with_cov=True)
        se = np.sqrt(np.diag(fit.v_hat) / s.n)
        assert np.all(np.abs(fit.theta_hat.values - [1, 0]) <= 3 * se)

    def test_constrained_small_n_always_feasible(self, fam):
        state = SamplerState.build(fam, (0.1, 0.1), 31)
        for r in range(100):
            s = ExpMarginSample(-np.log(state.sample(25, r)))
            fit = fit_parametric_A(s, fam, M19, "ols", constrained=True)
            assert fit.feasible and fit.constrained

    def test_propriety(self, fam):
        state = SamplerState.build(fam, (0.05, 0.9), 32)
        t = np.linspace(0, 1, 201)
        pts = np.column_stack([t, 1 - t])
        raw_failures = 0
        for r in range(100):
            s = ExpMarginSample(-np.log(state.sample(25, r)))
            fit = fit_parametric_A(s, fam, M19, "ols", constrained=True)
            assert validate_pickands_values(t, family_A(fam, fit.theta_hat, pts)).passed
            raw_failures += not validate_pickands_values(t, pickands_ols(s, pts)).passed
        # the raw estimate is proper only by chance at this sample size
        assert raw_failures > 0

    def test_kinds(self, fam):
        s = draw((0.1, 0.1), 200)
        with pytest.raises(ValueError):
            fit_parametric_A(s, fam, M19, "median")
        fit = fit_parametric_A(s, fam, kind="plain")
        assert fit.kind == "plain" and fit.raw.shape == (19,)


class TestCovariance:
    def test_gumbel_variance(self):
        s = draw((0.1, 0.1), 100_000, seed=41)
        w = np.array([[0.5, 0.5], [0.2, 0.8]])
        a = family_A(trig_basis(), (0.1, 0.1), w)
        sig = plugin_sigma(s, w, "plain", a)
        assert_allclose(np.diag(sig), a**2 * np.pi**2 / 6, rtol=0.05)

    def test_ols_kernel_vanishes_at_vertices(self):
        s = draw((0.1, 0.1), 2000)
        sig = plugin_sigma(s, np.array([[1.0, 0.0], [0.5, 0.5]]), "ols", [1.0, 0.7])
        assert abs(sig[0, 0]) < 1e-20

    def test_symmetric_psd(self, fam):
        s = draw((0.3, 0.3), 1000)
        for kind in ("plain", "ols"):
            V = asym_cov(s, fam, M19, kind, lambda w: family_A(fam, (0.3, 0.3), w))
            assert_array_equal(V, V.T)
            assert np.all(np.linalg.eigvalsh(V) >= -1e-12)

    def test_degenerate_basis(self):
        m = trig_basis().basis[0]
        with pytest.warns(DegenerateBasisWarning):
            fam = BasisFamily((m, m))
        with pytest.raises(RankDeficient):
            asym_cov(draw((0.1, 0.1), 100), fam, M19, "plain", np.ones(19))


class TestIntervals:
    @pytest.fixture
    def fit(self, fam):
        return fit_parametric_A(draw((0.2, 0.3), 800), fam, M19, "ols", with_cov=True)

    def test_vertex(self, fit, fam):
        lo, hi = ci_for_A(fit, fam, [1.0, 0.0])
        assert lo == hi == pytest.approx(1.0, abs=1e-14)

    def test_zero_covariance(self, fit, fam):
        from dataclasses import replace
        f0 = replace(fit, v_hat=np.zeros((2, 2)))
        lo, hi = ci_for_A(f0, fam, [0.4, 0.6])
        assert lo == hi
        lo, hi = ci_for_C(f0, fam, [0.4, 0.6])
        assert lo == hi

    def test_c_at_one(self, fit, fam):
        lo, hi = ci_for_C(fit, fam, [1.0, 1.0])
        assert lo == hi == 1.0

    def test_bounds(self, fit, fam):
        t = np.linspace(0, 1, 21)
        pts = np.column_stack([t, 1 - t])
        lo, hi = ci_for_A(fit, fam, pts, level=0.99)
        assert np.all(lo <= hi)
        assert np.all(lo >= pts.max(axis=1) - 1e-15) and np.all(hi <= 1)
        est = family_A(fam, fit.theta_hat, pts)
        assert np.all((lo <= est + 1e-15) & (est <= hi + 1e-15))

    def test_missing(self, fam):
        fit = fit_parametric_A(draw((0.2, 0.3), 300), fam, M19)
        with pytest.raises(MissingCovariance):
            ci_for_A(fit, fam, [0.5, 0.5])
        with pytest.raises(MissingCovariance):
            ci_for_C(fit, fam, [0.5, 0.5])

    def test_level(self, fit, fam):
        with pytest.raises(OutOfRange):
            ci_for_A(fit, fam, [0.5, 0.5], level=1.5)

    @pytest.mark.slow
    def test_coverage(self, fam):
        th, n = (0.8, 0.1), 1600
        state = SamplerState.build(fam, th, 51)
        a0 = family_A(fam, th, [0.5, 0.5])
        c0 = copula_eval(fam, th, [0.5, 0.5])
        hits_a = hits_c = 0
        for r in range(1000):
            fit = fit_parametric_A(ExpMarginSample(-np.log(state.sample(n, r))), fam, M19,
                                   "ols", with_cov=True)
            lo, hi = ci_for_A(fit, fam, [0.5, 0.5])
            hits_a += lo <= a0 <= hi
            lo, hi = ci_for_C(fit, fam, [0.5, 0.5])
            hits_c += lo <= c0 <= hi
        assert 0.92 <= hits_a / 1000 <= 0.97
        assert 0.92 <= hits_c / 1000 <= 0.97
