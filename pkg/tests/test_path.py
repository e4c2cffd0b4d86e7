import numpy as np
import pytest

from csclasso import (BudgetExceededError, InfeasibleError, PreconditionError, ProblemSpec,
                      Status, group_mse, lasso_lambda_star, make_spec, solve_csclasso,
                      solve_lasso_cd, solve_min_l1_feasible, solve_ols)
from csclasso.path import (START_LAMBDA, TAU_MIN_MARGIN, build_lambda_grid, default_axes,
                           find_lambda_star_dynamic, heatmap_grid, solve_path)
from csclasso.thresholds import compute_tau_max

from conftest import one_predictor_two_groups, random_instance


def active_spec(seed=0):
    """One constraint that keeps beta(inf) away from the intercept-only fit."""
    d = random_instance(seed, n=80, p=5, L=1)
    yl, Xl = d.group_data(0)
    lo = group_mse(d, solve_ols(d.with_objective_rows(d.groups[0])))[0]
    hi = np.mean((yl - yl.mean()) ** 2)
    return ProblemSpec(d, 0.0, [lo + 0.3 * (hi - lo)])


class TestBuildGrid:
    def test_linear(self):
        np.testing.assert_allclose(build_lambda_grid(30, 4), [0, 10, 20, 30])

    def test_endpoints_only(self):
        np.testing.assert_array_equal(build_lambda_grid(7.5, 2), [0, 7.5])

    def test_doubling(self):
        expected = [0.0] + [2.0 ** k for k in range(-5, 4)]
        np.testing.assert_array_equal(build_lambda_grid(8.0, scale="doubling"), expected)

    def test_doubling_reuses_visited(self):
        grid = build_lambda_grid(0.125, scale="doubling", visited=[2 ** -5, 2 ** -4, 2 ** -3])
        np.testing.assert_array_equal(grid, [0, 2 ** -5, 2 ** -4, 2 ** -3])

    @pytest.mark.parametrize("args", [(0.0, 5), (1.0, 1), (-1.0, 3)])
    def test_invalid(self, args):
        with pytest.raises(PreconditionError):
            build_lambda_grid(*args)

    def test_unknown_scale(self):
        with pytest.raises(ValueError):
            build_lambda_grid(1.0, scale="log")


class TestSolvePath:
    def test_unconstrained_matches_cd(self, instance):
        grid = build_lambda_grid(lasso_lambda_star(instance), 8)
        path = solve_path(make_spec(instance), grid)
        assert len(path) == 8 and all(s is Status.CONVERGED for s in path.statuses)
        for lam, beta in zip(grid, path.betas):
            np.testing.assert_allclose(beta, solve_lasso_cd(instance, lam).beta, atol=1e-4)

    def test_single_zero_point_is_ols(self, instance):
        path = solve_path(make_spec(instance), [0.0])
        np.testing.assert_allclose(path.betas[0], solve_ols(instance), atol=1e-6)

    def test_warm_start_independence(self):
        spec = active_spec(1)
        grid = np.linspace(0, 2.0, 6)
        path = solve_path(spec, grid)
        for lam, beta in zip(grid, path.betas):
            cold = solve_csclasso(spec.with_lambda(lam)).beta
            np.testing.assert_allclose(beta, cold, atol=1e-5)

    def test_tail_does_not_shrink_to_zero(self):
        spec = active_spec(2)
        star = find_lambda_star_dynamic(spec)
        path = solve_path(spec, [star.lambda_star, 2 * star.lambda_star])
        beta_inf = solve_min_l1_feasible(spec)
        assert np.abs(beta_inf[1:]).sum() > 1e-3
        for beta in path.betas:
            assert np.linalg.norm(beta - beta_inf) <= 2 * star.epsilon

    def test_infeasible_points_recorded(self):
        d = one_predictor_two_groups(0)
        spec = ProblemSpec(d, 0.0, 0.5 * group_mse(d, solve_ols(d)))
        path = solve_path(spec, [0.0, 0.5, 1.0])
        assert all(s is Status.INFEASIBLE for s in path.statuses)

    @pytest.mark.parametrize("grid", [[], [0.5, 0.1], [-1.0, 1.0], [0.0, np.inf]])
    def test_bad_grid(self, instance, grid):
        with pytest.raises(PreconditionError):
            solve_path(make_spec(instance), grid)


class TestLambdaStarDynamic:
    def test_plain_lasso_reaches_closed_form(self, instance):
        res = find_lambda_star_dynamic(make_spec(instance))
        assert res.lambda_star >= lasso_lambda_star(instance)
        target = np.zeros(instance.p + 1)
        target[0] = instance.y.mean()
        assert np.linalg.norm(res.betas[-1] - target) <= res.epsilon

    def test_huge_epsilon_stops_at_start(self, instance):
        res = find_lambda_star_dynamic(make_spec(instance), epsilon=1e6)
        assert res.lambda_star == START_LAMBDA and len(res.grid) == 1

    def test_visited_grid_is_doubling(self, instance):
        res = find_lambda_star_dynamic(make_spec(instance))
        np.testing.assert_allclose(res.grid, START_LAMBDA * 2.0 ** np.arange(len(res.grid)))
        np.testing.assert_array_equal(
            build_lambda_grid(res.lambda_star, scale="doubling", visited=res.grid),
            np.concatenate([[0.0], res.grid]))

    def test_active_constraint_stabilization(self):
        spec = active_spec(0)
        res = find_lambda_star_dynamic(spec)
        assert np.linalg.norm(res.betas[-1] - res.beta_inf) <= res.epsilon
        assert np.linalg.norm(res.beta_inf[1:]) > 1e-3
        twice = solve_csclasso(spec.with_lambda(2 * res.lambda_star)).beta
        assert np.linalg.norm(twice - res.beta_inf) <= 2 * res.epsilon

    def test_distances_nonincreasing_beyond_star(self):
        spec = active_spec(3)
        res = find_lambda_star_dynamic(spec)
        lams = res.lambda_star * np.array([1.0, 2.0, 4.0])
        dist = [np.linalg.norm(b - res.beta_inf) for b in solve_path(spec, lams).betas]
        assert np.all(np.diff(dist) <= 1e-6)

    def test_budget_exceeded(self, instance):
        with pytest.raises(BudgetExceededError):
            find_lambda_star_dynamic(make_spec(instance), epsilon=1e-30, max_doublings=3)

    def test_infeasible(self):
        d = one_predictor_two_groups(0)
        with pytest.raises(InfeasibleError):
            find_lambda_star_dynamic(ProblemSpec(d, 0.0, 0.5 * group_mse(d, solve_ols(d))))

    def test_nonpositive_epsilon(self, instance):
        with pytest.raises(PreconditionError):
            find_lambda_star_dynamic(make_spec(instance), epsilon=0.0)


@pytest.fixture(scope="module")
def setup():
    d = one_predictor_two_groups(1)
    lam_axis = np.linspace(0, lasso_lambda_star(d), 6)
    tau_axis = np.array([-0.05, 0.001, 0.05, 0.2, 0.5, 5.0])
    return d, lam_axis, tau_axis, heatmap_grid(d, lam_axis, tau_axis)


class TestHeatmap:
    def test_shapes_and_mask(self, setup):
        d, lam_axis, tau_axis, hm = setup
        assert hm.beta_cube.shape == (6, 6, 2)
        assert np.all(np.isfinite(hm.beta_cube[~hm.infeasible_mask]))
        # tau below tau_min = 0 is infeasible for every lambda
        assert np.all(hm.infeasible_mask[:, 0]) and not hm.infeasible_mask[:, 1:].any()
        assert hm.coefficient(1).shape == (6, 6)

    def test_slack_row_is_lasso_path(self, setup):
        d, lam_axis, tau_axis, hm = setup
        assert tau_axis[-1] >= max(compute_tau_max(d, lam) for lam in lam_axis)
        for i, lam in enumerate(lam_axis):
            np.testing.assert_allclose(hm.beta_cube[i, -1], solve_lasso_cd(d, lam).beta,
                                       atol=1e-4)

    def test_zero_lambda_huge_tau_is_ols(self, setup):
        d, _, _, hm = setup
        np.testing.assert_allclose(hm.beta_cube[0, -1], solve_ols(d), atol=1e-5)

    def test_monotone_frontier(self, setup):
        mask = setup[3].infeasible_mask
        for i in range(mask.shape[0]):
            row = mask[i]
            last = np.flatnonzero(row)
            if len(last):
                assert row[:last[-1] + 1].all()

    def test_jobs_do_not_change_results(self, setup):
        d, lam_axis, tau_axis, hm = setup
        par = heatmap_grid(d, lam_axis, tau_axis, jobs=2)
        np.testing.assert_array_equal(par.infeasible_mask, hm.infeasible_mask)
        np.testing.assert_array_equal(par.beta_cube, hm.beta_cube)

    def test_bad_tau_axis(self, setup):
        d, lam_axis, _, _ = setup
        with pytest.raises(PreconditionError):
            heatmap_grid(d, lam_axis, [0.5, 0.1])

    def test_default_axes(self):
        d = one_predictor_two_groups(2)
        lam_axis, tau_axis = default_axes(d, n_lambda=5, n_tau=4)
        assert lam_axis[0] == 0 and lam_axis[-1] == pytest.approx(lasso_lambda_star(d))
        assert tau_axis[0] == pytest.approx(TAU_MIN_MARGIN, abs=1e-6)
        top = max(compute_tau_max(d, lam) for lam in lam_axis) + 2
        assert tau_axis[-1] == pytest.approx(top)
        hm = heatmap_grid(d, lam_axis, tau_axis)
        assert np.all(np.isfinite(hm.beta_cube[~hm.infeasible_mask]))
