"""Prediction and support-recovery metrics, and the cross-validation harness."""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .baselines import group_mse as _group_mse
from .baselines import lasso_lambda_star, solve_lasso_cd, solve_ols
from .data import kfold_split, standardize
from .exceptions import InvalidGammaError, PreconditionError
from .model import ZERO_TOL, GroupedDataset, ProblemSpec, SolverConfig, Status
from .solver import solve_csclasso


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def mse_group(beta, data: GroupedDataset, group="all"):
    """``(1/n_l)||y_l - X_l beta||^2`` for group ``group``, or over every row."""
    beta = np.asarray(beta, dtype=float)
    if isinstance(group, str):
        if group != "all":
            raise ValueError(f"unknown group selector {group!r}")
        y, X = data.y, data.X
    else:
        if not 0 <= group < data.n_groups:
            raise PreconditionError(f"group {group} does not exist")
        y, X = data.group_data(group)
    r = y - X @ beta
    return float(r @ r) / len(y)


def nz_percent(beta, zero_tol=ZERO_TOL):
    b = np.asarray(beta, dtype=float)[1:]
    return 100.0 * float(np.sum(np.abs(b) > zero_tol)) / len(b)


def l2_distance(beta_hat, beta_true, include_intercept=False):
    """Euclidean distance between coefficient vectors, intercept excluded by default."""
    a = np.asarray(beta_hat, dtype=float)
    b = np.asarray(beta_true, dtype=float)
    if a.shape != b.shape:
        raise PreconditionError(f"length mismatch: {a.shape} vs {b.shape}")
    s = slice(0, None) if include_intercept else slice(1, None)
    return float(np.linalg.norm(a[s] - b[s]))


def fpr_fnr(beta_hat, beta_true, mode="conventional", zero_tol=ZERO_TOL):
    """Support-recovery error rates over the penalized coefficients.

    ``conventional``: FPR = share of true zeros estimated nonzero; FNR =
    share of true nonzeros estimated zero.  ``as_printed`` replaces the FPR
    numerator by the count of true zeros estimated zero (kept for audits).
    A rate whose denominator is empty is returned as ``None``.
    """
    if mode not in ("conventional", "as_printed"):
        raise ValueError(f"unknown mode {mode!r}")
    est = np.abs(np.asarray(beta_hat, dtype=float)[1:]) > zero_tol
    true = np.abs(np.asarray(beta_true, dtype=float)[1:]) > zero_tol
    if est.shape != true.shape:
        raise PreconditionError("length mismatch")
    n_zero, n_nz = int(np.sum(~true)), int(np.sum(true))
    fpr = fnr = None
    if n_zero:
        hits = (~true & est) if mode == "conventional" else (~true & ~est)
        fpr = float(np.sum(hits)) / n_zero
    if n_nz:
        fnr = float(np.sum(true & ~est)) / n_nz
    return fpr, fnr


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

SCALARS = ("lam", "overall_mse", "nz_percent", "l2_distance", "fpr", "fnr", "seconds")
VECTORS = ("group_mse", "thresholds", "train_group_mse")


@dataclass
class FoldReport:
    """Test-set metrics of one fold (``status`` infeasible leaves them empty)."""

    fold_id: int
    status: str
    lam: Optional[float] = None
    overall_mse: Optional[float] = None
    group_mse: Optional[list] = None
    thresholds: Optional[list] = None
    train_group_mse: Optional[list] = None
    train_satisfied: Optional[bool] = None
    test_satisfied: Optional[list] = None
    nz_percent: Optional[float] = None
    l2_distance: Optional[float] = None
    fpr: Optional[float] = None
    fnr: Optional[float] = None
    seconds: float = 0.0
    infeasible_lambdas: int = 0

    @property
    def solved(self):
        return self.status == "solved"


def aggregate_medians(per_fold):
    """Coordinatewise medians over solved folds; ``None`` where nothing is available."""
    solved = [r for r in per_fold if r.solved]
    out = {"folds_solved": len(solved), "folds": len(per_fold)}
    for name in SCALARS:
        vals = [getattr(r, name) for r in solved if getattr(r, name) is not None]
        out[name] = float(np.median(vals)) if vals else None
    for name in VECTORS:
        vals = [getattr(r, name) for r in solved if getattr(r, name) is not None]
        out[name] = _median_columns(vals) if vals else None
    return out


def _median_columns(rows):
    """Per-position medians of equal-length lists, skipping ``None`` entries."""
    out = []
    for col in zip(*rows):
        vals = [v for v in col if v is not None]
        out.append(float(np.median(vals)) if vals else None)
    return out


@dataclass
class EvalReport:
    method: str
    group_names: list
    constrained: list
    level: Optional[float]
    per_fold: list
    medians: dict = field(default_factory=dict)

    @property
    def infeasible_folds(self):
        return [r.fold_id for r in self.per_fold if r.status == "infeasible"]

    def to_dict(self):
        return {"method": self.method, "level": self.level, "group_names": self.group_names,
                "constrained": self.constrained,
                "per_fold": [asdict(r) for r in self.per_fold], "medians": self.medians}

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    def csv_header(self):
        cols = ["fold", "status", "lambda"]
        cols += [f"mse_{g}" for g in self.group_names]
        cols += [f"f_{self.group_names[l]}" for l in self.constrained]
        cols += ["overall_mse", "nz_percent", "l2_distance", "fpr", "fnr", "seconds"]
        return cols

    def csv_rows(self):
        def cell(v):
            return "" if v is None else repr(float(v))

        rows = []
        entries = [(str(r.fold_id), r.status, asdict(r)) for r in self.per_fold]
        med = dict(self.medians)
        entries.append(("median", "solved" if med.get("folds_solved") else "infeasible", med))
        G = len(self.group_names)
        for label, status, d in entries:
            gm = d.get("group_mse") or [None] * G
            thr = d.get("thresholds")
            thr = [thr[l] for l in self.constrained] if thr else [None] * len(self.constrained)
            rows.append([label, status, cell(d.get("lam"))] + [cell(v) for v in gm]
                        + [cell(v) for v in thr]
                        + [cell(d.get(k)) for k in ("overall_mse", "nz_percent", "l2_distance",
                                                    "fpr", "fnr", "seconds")])
        return rows

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.csv_header())
        w.writerows(self.csv_rows())
        return buf.getvalue()


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _FoldTask:
    data: GroupedDataset
    split: object
    lambdas: Optional[np.ndarray]
    grid_count: int
    gamma: Optional[float]
    tau: Optional[float]
    constrained: tuple
    beta_true: Optional[np.ndarray]
    cfg: SolverConfig
    fpr_mode: str


def _thresholds(task, train, lam, lasso_beta, ols_mse):
    sub = train.with_groups(task.constrained)
    if task.gamma is not None:
        return (1.0 - task.gamma) * _group_mse(sub, lasso_beta)
    return (1.0 + task.tau) * ols_mse


def _run_fold(task: _FoldTask) -> FoldReport:
    split = task.split
    std, stats = standardize(task.data, stats_from=split.train)
    train = std.restrict_rows(split.train)
    valid = std.restrict_rows(split.valid)
    test = std.restrict_rows(split.test)
    lasso_only = task.gamma is None and task.tau is None

    grid = task.lambdas
    if grid is None:
        grid = np.linspace(0.0, lasso_lambda_star(train), task.grid_count)
    ols_mse = None
    if task.tau is not None:
        ols_mse = _group_mse(train.with_groups(task.constrained), solve_ols(train))

    started = time.perf_counter()
    best = None          # (valid_mse, lam, beta, thresholds)
    infeasible = 0
    warm = lasso_warm = None
    for lam in grid:
        lasso = solve_lasso_cd(train, lam, warm_start=lasso_warm)
        lasso_warm = lasso.beta
        if lasso_only:
            beta, thr = lasso.beta, None
        else:
            thr = _thresholds(task, train, lam, lasso.beta, ols_mse)
            spec = ProblemSpec(data=train.with_groups(task.constrained), lam=lam, thresholds=thr)
            start = lasso.beta if task.gamma is not None else (warm if warm is not None
                                                                 else lasso.beta)
            fit = solve_csclasso(spec, replace(task.cfg, warm_start=start))
            if fit.status is Status.INFEASIBLE or fit.kkt_feasibility > task.cfg.tol_feas:
                infeasible += 1
                continue
            beta = fit.beta
        warm = beta
        v = mse_group(beta, valid)
        # ties go to the larger lambda (the grid is increasing)
        if best is None or v <= best[0]:
            best = (v, float(lam), beta, thr)
    seconds = time.perf_counter() - started

    if best is None:
        return FoldReport(fold_id=split.fold_id, status="infeasible", seconds=seconds,
                          infeasible_lambdas=infeasible)
    _, lam, beta, thr = best
    gm = [mse_group(beta, test, l) if len(test.groups[l]) else None
          for l in range(test.n_groups)]
    rep = FoldReport(fold_id=split.fold_id, status="solved", lam=lam,
                     overall_mse=mse_group(beta, test), group_mse=gm,
                     nz_percent=nz_percent(beta), seconds=seconds,
                     infeasible_lambdas=infeasible)
    rep.train_group_mse = [mse_group(beta, train, l) for l in range(train.n_groups)]
    if thr is not None:
        full = [None] * task.data.n_groups
        for j, l in enumerate(task.constrained):
            full[l] = float(thr[j])
        rep.thresholds = full
        rep.train_satisfied = bool(all(rep.train_group_mse[l] <= full[l] + task.cfg.tol_feas
                                       for l in task.constrained))
        rep.test_satisfied = [None if gm[l] is None else bool(gm[l] <= full[l])
                              for l in task.constrained]
    if task.beta_true is not None:
        ref = stats.beta_to_standardized(task.beta_true)
        rep.l2_distance = l2_distance(beta, ref)
        rep.fpr, rep.fnr = fpr_fnr(beta, ref, mode=task.fpr_mode)
    return rep


def cross_validate(data: GroupedDataset, lambdas=None, gamma=None, tau=None,
                   constrained_groups=None, folds=5, seed=0, grid_count=30,
                   beta_true=None, cfg: SolverConfig = None,
                   fpr_mode="conventional", jobs=1) -> EvalReport:
    """Fold-wise model selection and test evaluation.

    Per fold the data are standardized with training statistics, thresholds
    are set on the training rows (``gamma``: ``(1 - gamma)`` times the Lasso
    group MSE at each ``lam``; ``tau``: ``(1 + tau)`` times the OLS group
    MSE), the constrained fit is computed over the ``lam`` grid, and the
    ``lam`` with the smallest validation MSE (ties to the larger ``lam``) is
    evaluated on the test rows.  With neither ``gamma`` nor ``tau`` the plain
    Lasso is cross-validated.

    ``lambdas=None`` uses ``grid_count`` evenly spaced values on
    ``[0, lambda*]`` of the fold's training Lasso.  ``beta_true`` enables the
    l2 / FPR / FNR metrics; it is given in the units of ``data`` and mapped
    through each fold's training statistics before comparison.
    """
    if gamma is not None and tau is not None:
        raise PreconditionError("give gamma or tau, not both")
    if gamma is not None and not 0.0 <= gamma < 1.0:
        raise InvalidGammaError(f"gamma must lie in [0, 1), got {gamma:g}")
    if folds < 3:
        raise PreconditionError("need at least 3 folds")
    cfg = cfg or SolverConfig()
    if constrained_groups is None:
        constrained_groups = range(data.n_groups)
    constrained = tuple(int(l) for l in constrained_groups)
    if any(not 0 <= l < data.n_groups for l in constrained):
        raise PreconditionError("constrained group index out of range")
    if lambdas is not None:
        lambdas = np.asarray(lambdas, dtype=float)
        if lambdas.size == 0 or np.any(np.diff(lambdas) <= 0) or np.any(lambdas < 0):
            raise PreconditionError("lambdas must be nonnegative and strictly increasing")
    if beta_true is not None:
        beta_true = np.asarray(beta_true, dtype=float)
        if beta_true.shape != (data.p + 1,):
            raise PreconditionError(f"beta_true must have length {data.p + 1}")
    splits = kfold_split(data, folds=folds, seed=seed)
    tasks = [_FoldTask(data=data, split=s, lambdas=lambdas, grid_count=grid_count, gamma=gamma,
                       tau=tau, constrained=constrained, beta_true=beta_true, cfg=cfg,
                       fpr_mode=fpr_mode) for s in splits]
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_fold = list(pool.map(_run_fold, tasks))
    else:
        per_fold = [_run_fold(t) for t in tasks]
    method = "lasso" if gamma is None and tau is None else "csclasso"
    level = gamma if gamma is not None else tau
    return EvalReport(method=method, group_names=list(data.group_names),
                      constrained=list(constrained), level=level, per_fold=per_fold,
                      medians=aggregate_medians(per_fold))
