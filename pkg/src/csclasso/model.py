"""Domain types shared by every solver.

Conventions
-----------
* ``X`` carries an explicit all-ones intercept column at index 0, so a
  coefficient vector has length ``p + 1`` and ``beta[0]`` is the intercept.
* Groups are arrays of 0-based row indexes; they may overlap and need not
  cover the rows.
* ``objective_rows`` selects the rows entering the least-squares objective
  (all rows when ``None``).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

#: Magnitude at or below which a (penalized) coefficient counts as zero.
ZERO_TOL = 1e-8


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


class Status(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"

    def __str__(self):
        return self.value


@dataclass(frozen=True, eq=False)
class GroupedDataset:
    """Response, design matrix with intercept column, and groups of interest."""

    y: np.ndarray
    X: np.ndarray
    groups: tuple = ()
    objective_rows: Optional[np.ndarray] = None
    group_names: Optional[tuple] = None
    feature_names: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "y", _frozen(self.y).ravel())
        X = _frozen(self.X)
        if X.ndim == 1:
            X = _frozen(X[:, None])
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "groups",
                           tuple(_frozen(g, dtype=np.int64).ravel() for g in self.groups))
        if self.objective_rows is not None:
            object.__setattr__(self, "objective_rows",
                               _frozen(self.objective_rows, dtype=np.int64).ravel())
        if self.group_names is None:
            object.__setattr__(self, "group_names",
                               tuple(f"group{l + 1}" for l in range(len(self.groups))))
        else:
            object.__setattr__(self, "group_names", tuple(self.group_names))
        if self.feature_names is None:
            object.__setattr__(self, "feature_names",
                               ("intercept",) + tuple(f"x{j}" for j in range(1, self.X.shape[1])))
        else:
            object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @classmethod
    def from_predictors(cls, Z, y, groups=(), **kwargs):
        """Build a dataset from a predictor matrix *without* intercept column."""
        Z = np.asarray(Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        X = np.column_stack([np.ones(Z.shape[0]), Z])
        names = kwargs.pop("feature_names", None)
        if names is not None and len(names) == Z.shape[1]:
            names = ("intercept",) + tuple(names)
        return cls(y=y, X=X, groups=tuple(groups), feature_names=names, **kwargs)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1] - 1

    @property
    def n_groups(self):
        return len(self.groups)

    @property
    def obj_rows(self):
        if self.objective_rows is None:
            return np.arange(self.n)
        return self.objective_rows

    def objective_data(self):
        rows = self.obj_rows
        return self.y[rows], self.X[rows]

    def group_data(self, l):
        rows = self.groups[l]
        return self.y[rows], self.X[rows]

    def with_groups(self, which):
        """Keep only the groups at positions ``which`` (in that order)."""
        which = list(which)
        return replace(self,
                       groups=tuple(self.groups[l] for l in which),
                       group_names=tuple(self.group_names[l] for l in which))

    def with_objective_rows(self, rows):
        return replace(self, objective_rows=rows)

    def restrict_rows(self, rows, keep_empty_groups=True):
        """Sub-dataset on ``rows``; group indexes are remapped into the new order."""
        rows = np.asarray(rows, dtype=np.int64)
        pos = np.full(self.n, -1, dtype=np.int64)
        pos[rows] = np.arange(len(rows))
        groups, names = [], []
        for g, name in zip(self.groups, self.group_names):
            mapped = pos[g]
            mapped = np.sort(mapped[mapped >= 0])
            if len(mapped) or keep_empty_groups:
                groups.append(mapped)
                names.append(name)
        obj = None
        if self.objective_rows is not None:
            mapped = pos[self.objective_rows]
            obj = np.sort(mapped[mapped >= 0])
        return GroupedDataset(y=self.y[rows], X=self.X[rows], groups=tuple(groups),
                              objective_rows=obj, group_names=tuple(names),
                              feature_names=self.feature_names)


class PenaltyKind(str, enum.Enum):
    IDENTITY_NO_INTERCEPT = "identity_no_intercept"
    GENERAL = "general"


@dataclass(frozen=True, eq=False)
class PenaltyMatrix:
    """Linear map whose image is L1-penalized."""

    A: np.ndarray
    kind: PenaltyKind = PenaltyKind.GENERAL

    def __post_init__(self):
        A = _frozen(self.A)
        if A.ndim == 1:
            A = _frozen(A[None, :])
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "kind", PenaltyKind(self.kind))

    @classmethod
    def lasso(cls, p):
        """``A = (0 | I)``: penalize every coefficient except the intercept."""
        return cls(np.hstack([np.zeros((p, 1)), np.eye(p)]), PenaltyKind.IDENTITY_NO_INTERCEPT)

    @classmethod
    def fused(cls, p):
        """Successive differences ``beta_{j+1} - beta_j`` of the non-intercept coefficients."""
        D = np.zeros((max(p - 1, 1), p + 1))
        for j in range(p - 1):
            D[j, j + 1] = -1.0
            D[j, j + 2] = 1.0
        return cls(D, PenaltyKind.GENERAL)

    @property
    def is_identity(self):
        return self.kind is PenaltyKind.IDENTITY_NO_INTERCEPT

    @property
    def m(self):
        return self.A.shape[0]

    def apply(self, beta):
        if self.is_identity:
            return np.asarray(beta)[1:]
        return self.A @ beta

    def l1(self, beta):
        return float(np.sum(np.abs(self.apply(beta))))


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Dataset plus penalty, regularization weight and per-group MSE bounds."""

    data: GroupedDataset
    lam: float = 0.0
    thresholds: np.ndarray = field(default_factory=lambda: np.zeros(0))
    penalty: Optional[PenaltyMatrix] = None

    def __post_init__(self):
        if self.penalty is None:
            object.__setattr__(self, "penalty", PenaltyMatrix.lasso(self.data.p))
        object.__setattr__(self, "thresholds", _frozen(np.atleast_1d(self.thresholds)).ravel())
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def n_constraints(self):
        return len(self.thresholds)

    def with_lambda(self, lam):
        return replace(self, lam=float(lam))

    def with_thresholds(self, thresholds):
        return replace(self, thresholds=thresholds)

    def objective_value(self, beta):
        """``(1/n0)||y0 - X0 beta||^2 + lam ||A beta||_1`` evaluated directly."""
        y0, X0 = self.data.objective_data()
        r = y0 - X0 @ beta
        return float(r @ r) / len(y0) + self.lam * self.penalty.l1(beta)

    def group_mse(self, beta):
        out = np.empty(self.data.n_groups)
        for l in range(self.data.n_groups):
            yl, Xl = self.data.group_data(l)
            r = yl - Xl @ beta
            out[l] = float(r @ r) / len(yl)
        return out


@dataclass(frozen=True)
class SolverConfig:
    tol_stat: float = 1e-6
    tol_feas: float = 1e-8
    max_outer: int = 100
    max_inner: int = 20000
    penalty_growth: float = 10.0
    warm_start: Optional[np.ndarray] = None
    seed: int = 0

    def __post_init__(self):
        if self.tol_stat <= 0 or self.tol_feas <= 0:
            raise ValueError("tolerances must be positive")
        if self.penalty_growth <= 1:
            raise ValueError("penalty_growth must exceed 1")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration budgets must be positive")


@dataclass(frozen=True, eq=False)
class FitResult:
    beta: np.ndarray
    objective: float
    group_mse: np.ndarray
    multipliers: np.ndarray
    kkt_stationarity: float
    kkt_feasibility: float
    kkt_complementarity: float
    iterations_outer: int
    iterations_inner: int
    status: Status
    lam: float = float("nan")
    seconds: float = 0.0
    state: Optional["AugLagState"] = field(default=None, repr=False)

    @property
    def converged(self):
        return self.status is Status.CONVERGED

    @property
    def nz_count(self):
        return int(np.sum(np.abs(self.beta[1:]) > ZERO_TOL))

    def to_dict(self):
        return {
            "beta": [float(b) for b in self.beta],
            "objective": float(self.objective),
            "group_mse": [float(v) for v in self.group_mse],
            "multipliers": [float(v) for v in self.multipliers],
            "kkt": {
                "stationarity": float(self.kkt_stationarity),
                "feasibility": float(self.kkt_feasibility),
                "complementarity": float(self.kkt_complementarity),
            },
            "iterations": {"outer": self.iterations_outer, "inner": self.iterations_inner},
            "status": self.status.value,
            "lambda": float(self.lam),
            "nz_count": self.nz_count,
        }


@dataclass(frozen=True)
class ValidationOutcome:
    violations: tuple = ()

    @property
    def ok(self):
        return not self.violations

    def __bool__(self):
        return self.ok


def validate_dataset(data: GroupedDataset) -> list:
    out = []
    n = data.X.shape[0]
    if n == 0:
        out.append("empty dataset (n = 0)")
    if data.X.shape[1] < 2:
        out.append("need at least one predictor (p >= 1)")
    if data.y.shape[0] != n:
        out.append(f"response length {data.y.shape[0]} does not match {n} design rows")
    if not (np.all(np.isfinite(data.X)) and np.all(np.isfinite(data.y))):
        out.append("non-finite values in X or y")
    if data.X.shape[1] >= 1 and n > 0 and not np.all(data.X[:, 0] == 1.0):
        out.append("missing intercept column")
    for l, g in enumerate(data.groups):
        name = data.group_names[l]
        if len(g) == 0:
            out.append(f"empty group {name!r}")
        elif g.min() < 0 or g.max() >= n:
            out.append(f"group {name!r} has row indexes outside [0, {n})")
    rows = data.objective_rows
    if rows is not None:
        if len(rows) == 0:
            out.append("empty objective row set")
        elif rows.min() < 0 or rows.max() >= n:
            out.append(f"objective rows outside [0, {n})")
    return out


def validate_problem(spec: ProblemSpec) -> ValidationOutcome:
    """Collect every violated invariant of ``spec``; never raises."""
    out = validate_dataset(spec.data)
    if not np.isfinite(spec.lam) or spec.lam < 0:
        out.append("lambda must be a finite nonnegative number")
    if len(spec.thresholds) != spec.data.n_groups:
        out.append("threshold/group count mismatch: "
                   f"{len(spec.thresholds)} thresholds for {spec.data.n_groups} groups")
    if np.any(~np.isfinite(spec.thresholds)) or np.any(spec.thresholds <= 0):
        out.append("nonpositive threshold (MSE bounds must be > 0)")
    A = spec.penalty.A
    if A.shape[1] != spec.data.X.shape[1]:
        out.append(f"penalty matrix has {A.shape[1]} columns, expected {spec.data.X.shape[1]}")
    if A.shape[0] < 1:
        out.append("penalty matrix needs at least one row")
    if spec.penalty.is_identity and A.shape[1] == spec.data.X.shape[1]:
        expect = np.hstack([np.zeros((spec.data.p, 1)), np.eye(spec.data.p)])
        if A.shape != expect.shape or not np.array_equal(A, expect):
            out.append("penalty tagged identity_no_intercept but A != (0 | I)")
    return ValidationOutcome(tuple(out))


def make_spec(data, lam=0.0, thresholds=None, penalty=None):
    """Convenience constructor; ``thresholds=None`` means no constraints."""
    if thresholds is None:
        data = data.with_groups([])
        thresholds = np.zeros(0)
    return ProblemSpec(data=data, lam=lam, thresholds=np.asarray(thresholds, float), penalty=penalty)


@dataclass(frozen=True, eq=False)
class AugLagState:
    """Final iterate of the augmented-Lagrangian loop.

    ``w`` and ``dual_u`` are only populated for a general penalty matrix,
    where ``w`` is the consensus copy of ``A beta``.
    """

    beta: np.ndarray
    eta: np.ndarray
    rho: float
    w: Optional[np.ndarray] = None
    dual_u: Optional[np.ndarray] = None
