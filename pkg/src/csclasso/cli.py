"""Command-line interface.

Subcommands ``fit``, ``thresholds``, ``path``, ``heatmap``, ``simulate`` and
``cv``.  Every run writes its outputs atomically next to a
``<out>.manifest.json`` sidecar recording the command, configuration, seed,
input digests and stage timings.

Exit codes: 0 success, 2 input error, 3 infeasible, 4 solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import platform
import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import solve_lasso_cd, solve_ols
from .data import SyntheticConfig, generate_synthetic, load_csv_dataset, reference_beta, standardize
from .evaluation import cross_validate
from .exceptions import CSCLassoError, DataFormatError, PreconditionError
from .model import PenaltyMatrix, ProblemSpec, SolverConfig, Status
from .path import build_lambda_grid, default_axes, find_lambda_star_dynamic, heatmap_grid, solve_path
from .solver import solve_csclasso
from .thresholds import (compute_gamma_max, compute_tau_max, compute_tau_min, lasso_baseline_mse,
                         ols_baseline_mse, thresholds_from_gamma, thresholds_from_tau)

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NONCONVERGED = 0, 2, 3, 4


class InfeasibleRun(Exception):
    pass


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------

def derive_seed(seed, *labels):
    """Stable child seed from the run seed and a label path."""
    h = hashlib.sha256(repr((int(seed),) + labels).encode()).digest()
    return int.from_bytes(h[:4], "little")


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_atomic(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(v):
    return "" if v is None or (isinstance(v, float) and not np.isfinite(v)) else repr(float(v))


class RunManifest:
    """Provenance record written beside each output."""

    def __init__(self, args):
        self.command = args.command
        self.config = {k: v for k, v in vars(args).items() if k not in ("func",)}
        self.seed = getattr(args, "seed", 0)
        self.inputs = {}
        for key in ("data", "groups"):
            p = getattr(args, key, None)
            if p:
                self.inputs[str(p)] = _digest(p)
        self.timings = {}
        self.outputs = []
        self._t = time.perf_counter()

    def stage(self, name):
        now = time.perf_counter()
        self.timings[name] = round(now - self._t, 6)
        self._t = now

    def manifest_path(self, out):
        return Path(str(out) + ".manifest.json")

    def write_output(self, path, text):
        write_atomic(path, text)
        self.outputs.append(str(path))

    def finish(self, out, status):
        doc = {
            "command": self.command, "config": self.config, "seed": self.seed,
            "inputs": self.inputs, "outputs": self.outputs, "status": status,
            "tool_version": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "timings": self.timings,
        }
        write_atomic(self.manifest_path(out), json.dumps(doc, indent=2, default=str) + "\n")


def _floats(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise DataFormatError(f"expected comma-separated numbers, got {text!r}") from None


def _range(text):
    parts = _floats(text.replace(":", ","))
    if len(parts) != 3 or parts[2] < 1 or parts[2] != int(parts[2]):
        raise DataFormatError(f"range must be lo:hi:count, got {text!r}")
    return np.linspace(parts[0], parts[1], int(parts[2]))


def _load(args):
    data, report = load_csv_dataset(args.data, args.target, args.groups)
    if report.dropped_columns:
        print(f"dropped columns with missing values: {', '.join(report.dropped_columns)}",
              file=sys.stderr)
    if getattr(args, "standardize", False):
        data, _ = standardize(data)
    return data, report


def _cfg(args):
    return SolverConfig(tol_stat=args.tol_stat, tol_feas=args.tol_feas, max_outer=args.max_outer,
                        seed=args.seed)


def _penalty(args, data):
    if getattr(args, "penalty", "lasso") == "fused":
        return PenaltyMatrix.fused(data.p)
    return PenaltyMatrix.lasso(data.p)


def _threshold_vector(args, data, baseline_lam):
    """Thresholds requested by --tau / --gamma / --thresholds, or ``None``."""
    given = [v is not None for v in (args.tau, args.gamma, args.thresholds)]
    if sum(given) > 1:
        raise PreconditionError("give at most one of --tau, --gamma, --thresholds")
    if data.n_groups == 0:
        if any(given):
            raise PreconditionError("thresholds need --groups")
        return None, None
    if args.tau is not None:
        rep = thresholds_from_tau(data, args.tau, baseline=args.baseline, check=False)
        return rep.thresholds, rep
    if args.gamma is not None:
        rep = thresholds_from_gamma(data, baseline_lam, args.gamma, check=False)
        return rep.thresholds, rep
    if args.thresholds is not None:
        thr = np.array(_floats(args.thresholds))
        if len(thr) != data.n_groups:
            raise PreconditionError(f"{len(thr)} thresholds for {data.n_groups} groups")
        return thr, None
    return None, None


def _bound_message(args, data, baseline_lam):
    try:
        if args.gamma is not None:
            return f"gamma_max = {compute_gamma_max(data, baseline_lam):.6g}"
        return f"tau_min = {compute_tau_min(data, baseline=args.baseline):.6g}"
    except CSCLassoError as exc:
        return f"feasibility bound unavailable ({exc})"


def _warm_start(data, lam):
    if lam == 0:
        return solve_ols(data)
    return solve_lasso_cd(data, lam).beta


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_fit(args, man):
    data, _ = _load(args)
    man.stage("load")
    thr, _ = _threshold_vector(args, data, args.lam)
    if thr is None:
        data = data.with_groups([])
        thr = np.zeros(0)
    spec = ProblemSpec(data=data, lam=args.lam, thresholds=thr, penalty=_penalty(args, data))
    cfg = _cfg(args)
    if spec.penalty.is_identity:
        cfg = replace(cfg, warm_start=_warm_start(data, args.lam))
    fit = solve_csclasso(spec, cfg)
    man.stage("solve")
    doc = fit.to_dict()
    doc["thresholds"] = [float(v) for v in thr]
    doc["group_names"] = list(data.group_names)
    doc["feature_names"] = list(data.feature_names)
    doc["manifest"] = man.manifest_path(args.out).name
    man.write_output(args.out, json.dumps(doc, indent=2) + "\n")
    print(f"status {fit.status.value}  lambda {args.lam:g}  objective {fit.objective:.6g}  "
          f"nonzero {fit.nz_count}/{data.p}")
    for name, m, f in zip(data.group_names, fit.group_mse, thr):
        print(f"  {name}: mse {m:.6g} <= {f:.6g}")
    print(f"  kkt: stationarity {fit.kkt_stationarity:.2e}  feasibility "
          f"{fit.kkt_feasibility:.2e}  complementarity {fit.kkt_complementarity:.2e}")
    if fit.status is Status.INFEASIBLE:
        raise InfeasibleRun("constraint set is empty; " + _bound_message(args, data, args.lam))
    return EXIT_OK if fit.converged else EXIT_NONCONVERGED


def cmd_thresholds(args, man):
    data, _ = _load(args)
    if data.n_groups == 0:
        raise PreconditionError("thresholds need --groups")
    man.stage("load")
    doc = {
        "lambda": args.lam,
        "baseline": args.baseline,
        "group_names": list(data.group_names),
        "ols_mse": [float(v) for v in ols_baseline_mse(data, args.baseline)],
        "lasso_mse": [float(v) for v in lasso_baseline_mse(data, args.lam)],
        "tau_min": compute_tau_min(data, baseline=args.baseline),
        "tau_max": compute_tau_max(data, args.lam, baseline=args.baseline),
        "gamma_max": compute_gamma_max(data, args.lam),
        "manifest": man.manifest_path(args.out).name,
    }
    man.stage("bounds")
    man.write_output(args.out, json.dumps(doc, indent=2) + "\n")
    print(f"tau_min {doc['tau_min']:.6g}  tau_max({args.lam:g}) {doc['tau_max']:.6g}  "
          f"gamma_max({args.lam:g}) {doc['gamma_max']:.6g}")
    return EXIT_OK


def cmd_path(args, man):
    data, _ = _load(args)
    man.stage("load")
    thr, _ = _threshold_vector(args, data, args.baseline_lambda)
    if thr is None:
        data = data.with_groups([])
        thr = np.zeros(0)
    spec = ProblemSpec(data=data, lam=0.0, thresholds=thr, penalty=_penalty(args, data))
    cfg = _cfg(args)
    if args.lambda_star is not None:
        lam_star, visited = args.lambda_star, None
    else:
        found = find_lambda_star_dynamic(spec, epsilon=args.epsilon, cfg=cfg)
        lam_star, visited = found.lambda_star, found.grid
        print(f"lambda* {lam_star:g} after {len(found.grid)} solves "
              f"(epsilon {found.epsilon:.3g})")
    man.stage("lambda_star")
    grid = build_lambda_grid(lam_star, args.grid_count, args.scale, visited=visited)
    path = solve_path(spec, grid, cfg)
    man.stage("path")
    header = ["lambda"] + [f"beta_{j}" for j in range(data.p + 1)] + ["objective", "status"]
    rows = [[_num(lam)] + [_num(b) for b in beta] + [_num(obj), st.value]
            for lam, beta, obj, st in zip(path.lambdas, path.betas, path.objectives,
                                          path.statuses)]
    man.write_output(args.out, _csv_text(header, rows))
    if all(s is Status.INFEASIBLE for s in path.statuses):
        raise InfeasibleRun("constraint set is empty")
    return EXIT_OK if all(s is Status.CONVERGED for s in path.statuses) else EXIT_NONCONVERGED


def cmd_heatmap(args, man):
    data, _ = _load(args)
    if data.n_groups == 0:
        raise PreconditionError("heatmap needs --groups")
    man.stage("load")
    cfg = _cfg(args)
    if args.lambda_range is None or args.tau_range is None:
        lam_axis, tau_axis = default_axes(data, baseline=args.baseline, cfg=cfg)
    if args.lambda_range is not None:
        lam_axis = _range(args.lambda_range)
    if args.tau_range is not None:
        tau_axis = _range(args.tau_range)
    man.stage("axes")
    grid = heatmap_grid(data, lam_axis, tau_axis, baseline=args.baseline, cfg=cfg, jobs=args.jobs)
    man.stage("grid")
    rows = []
    for i, lam in enumerate(grid.lambda_axis):
        for k, tau in enumerate(grid.tau_axis):
            feasible = not grid.infeasible_mask[i, k]
            for j in range(data.p + 1):
                rows.append([_num(lam), _num(tau), j, _num(grid.beta_cube[i, k, j]),
                             int(feasible)])
    man.write_output(args.out, _csv_text(["lambda", "tau", "coef", "value", "feasible"], rows))
    return EXIT_OK


TABLE_METRICS = ("overall_mse", "l2_distance", "fpr", "fnr", "nz_percent")


def _level_rows(report, constrained, blank):
    med = report.medians
    gm = med.get("group_mse") or [None] * len(report.group_names)
    thr = med.get("thresholds") or [None] * len(report.group_names)
    vals = []
    for l in constrained:
        vals += [None if blank else thr[l], None if blank else gm[l]]
    return vals, [None if blank else med.get(k) for k in TABLE_METRICS]


def cmd_simulate(args, man):
    p_values = [int(v) for v in _floats(args.p)]
    levels = [v / 100.0 for v in _floats(args.improvements)]
    constrained = list(range(min(6, args.K)))
    cfg = _cfg(args)
    out = Path(args.out)
    mse_rows, metric_rows, timing_rows, reports = [], [], [], {}
    for p in p_values:
        synth = SyntheticConfig(K=args.K, n_k=args.n_k, p=p, seed=derive_seed(args.seed, "data", p),
                                signal_size=min(20, p))
        data, truth, stats = generate_synthetic(synth)
        ref = stats.beta_to_standardized(reference_beta(truth, args.truth))
        fold_seed = derive_seed(args.seed, "folds", p)
        common = dict(folds=args.folds, seed=fold_seed, grid_count=args.grid_count, beta_true=ref,
                      cfg=cfg, jobs=args.jobs, constrained_groups=constrained)
        runs = [("lasso", 0.0, cross_validate(data, **common))]
        for g in levels:
            runs.append(("csclasso", g, cross_validate(data, gamma=g, **common)))
        man.stage(f"p={p}")
        for method, g, rep in runs:
            n_inf = len(rep.infeasible_folds)
            blank = method != "lasso" and n_inf > 0
            pair, metrics = _level_rows(rep, constrained, blank)
            if method == "lasso":
                pair = [v if i % 2 else None for i, v in enumerate(pair)]
            lead = [p, args.n_k, method, _num(round(100 * g, 9)), rep.medians["folds_solved"], n_inf]
            mse_rows.append(lead + [_num(v) for v in pair])
            metric_rows.append(lead + [_num(v) for v in metrics])
            secs = [r.seconds for r in rep.per_fold]
            timing_rows.append([p, args.n_k, method, _num(round(100 * g, 9)), _num(float(np.median(secs)))])
            reports[f"p{p}_{method}_{int(round(100 * g))}"] = rep.to_dict()
    lead_h = ["p", "n_k", "method", "improvement_pct", "folds_solved", "folds_infeasible"]
    mse_h = lead_h + [c for l in constrained for c in (f"f_group{l + 1}", f"mse_group{l + 1}")]
    man.write_output(out / "group_mse.csv", _csv_text(mse_h, mse_rows))
    man.write_output(out / "metrics.csv", _csv_text(lead_h + list(TABLE_METRICS), metric_rows))
    man.write_output(out / "timing.csv", _csv_text(
        ["p", "n_k", "method", "improvement_pct", "seconds"], timing_rows))
    man.write_output(out / "reports.json", json.dumps(
        {"manifest": man.manifest_path(out).name, "reports": reports}, indent=2) + "\n")
    for row in metric_rows:
        print(",".join(str(c) for c in row))
    return EXIT_OK


def _group_index(data, token):
    if token in data.group_names:
        return data.group_names.index(token)
    try:
        k = int(token)
    except ValueError:
        raise PreconditionError(f"unknown group {token!r}") from None
    if not 1 <= k <= data.n_groups:
        raise PreconditionError(f"group number {k} out of range")
    return k - 1


def cmd_cv(args, man):
    data, _ = _load(args)
    if data.n_groups == 0:
        raise PreconditionError("cv needs --groups")
    man.stage("load")
    if args.constrain:
        constrained = [_group_index(data, t.strip()) for t in args.constrain.split(",")]
    else:
        constrained = list(range(data.n_groups))
    levels = [v / 100.0 for v in _floats(args.gamma)] if args.gamma else []
    lambdas = _floats(args.lambdas) if args.lambdas else None
    common = dict(lambdas=lambdas, folds=args.folds, seed=derive_seed(args.seed, "folds"),
                  grid_count=args.grid_count, cfg=_cfg(args), jobs=args.jobs,
                  constrained_groups=constrained)
    runs = [("lasso", 0.0, cross_validate(data, **common))]
    for g in levels:
        runs.append(("csclasso", g, cross_validate(data, gamma=g, **common)))
    man.stage("cv")
    names = list(data.group_names)
    header = ["method", "improvement_pct", "folds_solved", "folds_infeasible"]
    header += [f"f_{names[l]}" for l in constrained] + [f"mse_{n}" for n in names]
    header += ["overall_mse", "nz_percent"]
    rows, reports = [], {}
    for method, g, rep in runs:
        med = rep.medians
        n_inf = len(rep.infeasible_folds)
        blank = method != "lasso" and n_inf > 0
        thr = med.get("thresholds") or [None] * len(names)
        gm = med.get("group_mse") or [None] * len(names)
        row = [method, _num(round(100 * g, 9)), med["folds_solved"], n_inf]
        row += [_num(None if blank or method == "lasso" else thr[l]) for l in constrained]
        row += [_num(None if blank else v) for v in gm]
        row += [_num(None if blank else med.get("overall_mse")),
                _num(None if blank else med.get("nz_percent"))]
        rows.append(row)
        reports[f"{method}_{int(round(100 * g))}"] = rep.to_dict()
    out = Path(args.out)
    man.write_output(out / "table.csv", _csv_text(header, rows))
    man.write_output(out / "reports.json", json.dumps(
        {"manifest": man.manifest_path(out).name, "reports": reports}, indent=2) + "\n")
    for row in rows:
        print(",".join(str(c) for c in row))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(p, data=True):
    if data:
        p.add_argument("--data", required=True, help="CSV file with a header row")
        p.add_argument("--target", required=True, help="response column name")
        p.add_argument("--groups", help="group spec JSON (0-based row indexes)")
        p.add_argument("--standardize", action="store_true",
                       help="z-score predictors and response before fitting")
    p.add_argument("--out", required=True, help="output file (or directory for table commands)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol-stat", type=float, default=1e-6)
    p.add_argument("--tol-feas", type=float, default=1e-8)
    p.add_argument("--max-outer", type=int, default=100)


def _add_thresholds(p):
    p.add_argument("--tau", type=float, help="thresholds (1 + tau) x OLS group MSE")
    p.add_argument("--gamma", type=float, help="thresholds (1 - gamma) x Lasso group MSE")
    p.add_argument("--thresholds", help="explicit comma-separated thresholds, one per group")
    p.add_argument("--baseline", choices=("global", "per_group"), default="global",
                   help="OLS baseline for --tau")


def build_parser():
    ap = argparse.ArgumentParser(prog="csclasso", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one constrained Lasso")
    _add_common(p)
    _add_thresholds(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--penalty", choices=("lasso", "fused"), default="lasso")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("thresholds", help="feasibility bounds tau_min, tau_max, gamma_max")
    _add_common(p)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--baseline", choices=("global", "per_group"), default="global")
    p.set_defaults(func=cmd_thresholds)

    p = sub.add_parser("path", help="doubling search for lambda* and the solution path")
    _add_common(p)
    _add_thresholds(p)
    p.add_argument("--baseline-lambda", type=float, default=0.0,
                   help="lambda of the Lasso baseline used by --gamma")
    p.add_argument("--epsilon", type=float, help="stabilization tolerance")
    p.add_argument("--lambda-star", type=float, help="skip the search and use this lambda*")
    p.add_argument("--grid-count", type=int, default=50)
    p.add_argument("--scale", choices=("linear", "doubling"), default="linear")
    p.add_argument("--penalty", choices=("lasso", "fused"), default="lasso")
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("heatmap", help="coefficients over a (lambda, tau) grid")
    _add_common(p)
    p.add_argument("--lambda-range", help="lo:hi:count")
    p.add_argument("--tau-range", help="lo:hi:count")
    p.add_argument("--baseline", choices=("global", "per_group"), default="global")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("simulate", help="synthetic study tables and timings")
    _add_common(p, data=False)
    p.add_argument("--K", type=int, default=20)
    p.add_argument("--n_k", "--n-k", dest="n_k", type=int, default=150)
    p.add_argument("--p", default="20", help="predictor count(s), comma-separated")
    p.add_argument("--improvements", default="3,5,7,10,15,20", help="percentages")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--grid-count", type=int, default=30)
    p.add_argument("--truth", default="majority",
                   help="reference truth for l2/FPR/FNR: majority, minority or a group number")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("cv", help="cross-validated comparison on a real dataset")
    _add_common(p)
    p.add_argument("--gamma", help="improvement percentages, comma-separated")
    p.add_argument("--constrain", help="groups to constrain (names or 1-based numbers)")
    p.add_argument("--lambdas", help="explicit comma-separated lambda grid")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--grid-count", type=int, default=30)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_cv)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        man = RunManifest(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    code = EXIT_INPUT
    try:
        code = args.func(args, man)
        return code
    except InfeasibleRun as exc:
        code = EXIT_INFEASIBLE
        print(f"infeasible: {exc}", file=sys.stderr)
        return code
    except (CSCLassoError, ValueError, OSError) as exc:
        code = EXIT_INPUT
        print(f"error: {exc}", file=sys.stderr)
        return code
    finally:
        if man.outputs:
            man.finish(args.out, code)


if __name__ == "__main__":
    sys.exit(main())
