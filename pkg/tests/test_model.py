import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csclasso import (GroupedDataset, PenaltyKind, PenaltyMatrix, ProblemSpec, SolverConfig,
                      make_spec, validate_problem)
from csclasso.model import FitResult, Status


def small_data(n=6, p=2, groups=((0, 1, 2), (3, 4))):
    rng = np.random.default_rng(0)
    return GroupedDataset.from_predictors(rng.standard_normal((n, p)), rng.standard_normal(n),
                                          [np.array(g) for g in groups])


class TestGroupedDataset:
    def test_intercept_column_prepended(self):
        d = small_data()
        assert d.X.shape == (6, 3)
        assert np.all(d.X[:, 0] == 1.0)
        assert d.n == 6 and d.p == 2 and d.n_groups == 2

    def test_arrays_are_read_only(self):
        d = small_data()
        with pytest.raises(ValueError):
            d.X[0, 0] = 2.0
        with pytest.raises(ValueError):
            d.groups[0][0] = 5

    def test_objective_rows_default_to_all(self):
        d = small_data()
        np.testing.assert_array_equal(d.obj_rows, np.arange(6))
        y0, X0 = d.with_objective_rows([1, 2]).objective_data()
        assert len(y0) == 2 and X0.shape == (2, 3)

    def test_restrict_rows_remaps_groups(self):
        d = small_data()
        sub = d.restrict_rows([4, 0, 2])
        np.testing.assert_array_equal(sub.y, d.y[[4, 0, 2]])
        # group (0,1,2) keeps rows 0 and 2, now at positions 1 and 2
        np.testing.assert_array_equal(sub.groups[0], [1, 2])
        np.testing.assert_array_equal(sub.groups[1], [0])

    def test_overlapping_groups_allowed(self):
        d = small_data(groups=((0, 1, 2), (2, 3)))
        assert validate_problem(ProblemSpec(d, 0.1, [1.0, 1.0])).ok


class TestPenaltyMatrix:
    def test_lasso_shape(self):
        pen = PenaltyMatrix.lasso(3)
        assert pen.kind is PenaltyKind.IDENTITY_NO_INTERCEPT
        np.testing.assert_array_equal(pen.A, np.hstack([np.zeros((3, 1)), np.eye(3)]))
        assert pen.l1(np.array([5.0, 1.0, -2.0, 0.0])) == 3.0

    def test_fused_differences(self):
        pen = PenaltyMatrix.fused(3)
        assert not pen.is_identity
        np.testing.assert_allclose(pen.apply(np.array([9.0, 1.0, 3.0, 2.0])), [2.0, -1.0])


class TestValidation:
    def test_well_formed_spec_ok(self):
        out = validate_problem(ProblemSpec(small_data(), 0.5, [1.0, 2.0]))
        assert out.ok and bool(out)

    def test_threshold_count_mismatch(self):
        d = small_data(groups=((0, 1), (2, 3), (4, 5)))
        out = validate_problem(ProblemSpec(d, 0.5, [1.0, 2.0]))
        assert any("threshold/group count mismatch" in v for v in out.violations)

    def test_missing_intercept(self):
        rng = np.random.default_rng(1)
        d = GroupedDataset(y=rng.standard_normal(4), X=rng.standard_normal((4, 3)))
        out = validate_problem(make_spec(d, 0.1))
        assert "missing intercept column" in out.violations

    def test_nonpositive_threshold_and_negative_lambda(self):
        out = validate_problem(ProblemSpec(small_data(), -1.0, [0.0, 1.0]))
        text = " ".join(out.violations)
        assert "nonpositive threshold" in text and "lambda" in text

    def test_empty_group(self):
        d = small_data(groups=((0, 1), ()))
        out = validate_problem(ProblemSpec(d, 0.1, [1.0, 1.0]))
        assert any("empty group" in v for v in out.violations)

    def test_mislabeled_identity_penalty(self):
        pen = PenaltyMatrix(np.eye(3), PenaltyKind.IDENTITY_NO_INTERCEPT)
        out = validate_problem(ProblemSpec(small_data(), 0.1, [1.0, 1.0], pen))
        assert any("identity" in v for v in out.violations)

    @settings(max_examples=40, deadline=None)
    @given(lam=st.floats(-2, 2), t1=st.floats(-1, 3), t2=st.floats(-1, 3))
    def test_validation_is_pure(self, lam, t1, t2):
        spec = ProblemSpec(small_data(), lam, [t1, t2])
        assert validate_problem(spec) == validate_problem(spec)


class TestConfigAndResult:
    def test_defaults(self):
        cfg = SolverConfig()
        assert (cfg.tol_stat, cfg.tol_feas, cfg.max_outer, cfg.max_inner) == (1e-6, 1e-8, 100, 20000)
        assert cfg.penalty_growth == 10

    @pytest.mark.parametrize("kwargs", [{"tol_stat": 0}, {"tol_feas": -1}, {"penalty_growth": 1.0},
                                        {"max_outer": 0}])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ValueError):
            SolverConfig(**kwargs)

    def test_fit_result_roundtrip_dict(self):
        fit = FitResult(beta=np.array([1.0, 0.0, 2e-9, -3.0]), objective=1.0,
                        group_mse=np.array([0.5]), multipliers=np.array([0.1]),
                        kkt_stationarity=0.0, kkt_feasibility=0.0, kkt_complementarity=0.0,
                        iterations_outer=1, iterations_inner=2, status=Status.CONVERGED, lam=0.3)
        d = fit.to_dict()
        assert d["status"] == "converged" and d["nz_count"] == 1 and fit.converged

    def test_objective_value_direct(self):
        d = small_data()
        spec = make_spec(d, 0.5)
        beta = np.array([0.1, -1.0, 2.0])
        r = d.y - d.X @ beta
        assert spec.objective_value(beta) == pytest.approx(r @ r / 6 + 0.5 * 3.0, abs=1e-14)
