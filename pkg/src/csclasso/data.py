"""Synthetic grouped data, CSV ingestion, standardization and fold splits."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import linalg

from .exceptions import ConstantColumnError, DataFormatError, PreconditionError
from .model import GroupedDataset

CONSTANT_SD = 1e-12


# ---------------------------------------------------------------------------
# synthetic study data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticConfig:
    """Stratified Gaussian design.

    ``K`` groups of ``n_k`` rows each; predictors are Gaussian with Toeplitz
    covariance ``rho_base^|i-j|``.  ``signal_size`` predictors carry signal;
    for groups ``k <= 6`` half of them (``S_A``) get ``1 + sqrt(K)`` and the
    other half (``S_B``) get 1, and the roles swap for ``k > 6``.
    """

    K: int = 20
    n_k: int = 150
    p: int = 20
    rho_base: float = 0.5
    seed: int = 0
    signal_size: int = 20
    noise_sd: float = 1.0

    def __post_init__(self):
        if self.K < 7:
            raise PreconditionError("K must be at least 7 (groups 1-6 and k > 6 differ)")
        if self.n_k < 2 or self.p < 1:
            raise PreconditionError("need n_k >= 2 and p >= 1")
        if not 1 <= self.signal_size <= self.p:
            raise PreconditionError(f"signal_size must lie in [1, p], got {self.signal_size}")
        if not -1 < self.rho_base < 1:
            raise PreconditionError("rho_base must lie in (-1, 1)")
        if self.seed < 0:
            raise PreconditionError("seed must be nonnegative")


@dataclass(frozen=True, eq=False)
class SyntheticTruth:
    """Generating coefficients (raw units) and the signal partition.

    ``beta`` has one row per group: ``beta[k]`` generated the rows of group
    ``k + 1``.  ``support`` lists the signal predictors (1-based coefficient
    positions), split into ``set_a`` and ``set_b``.
    """

    beta: np.ndarray
    support: np.ndarray
    set_a: np.ndarray
    set_b: np.ndarray


def toeplitz_cov(p, rho=0.5):
    return linalg.toeplitz(rho ** np.arange(p))


def generate_synthetic(cfg: SyntheticConfig = None):
    """Draw a study dataset.

    Returns ``(data, truth, stats)``: the standardized dataset (groups
    ``group1..groupK`` of consecutive rows), the raw-unit generating
    coefficients, and the standardization statistics that link the two.
    """
    cfg = cfg or SyntheticConfig()
    rng = np.random.default_rng(cfg.seed)
    K, n_k, p = cfg.K, cfg.n_k, cfg.p
    n = K * n_k
    chol = np.linalg.cholesky(toeplitz_cov(p, cfg.rho_base))
    Z = rng.standard_normal((n, p)) @ chol.T

    support = rng.choice(p, size=cfg.signal_size, replace=False)
    half = cfg.signal_size // 2
    perm = rng.permutation(support)
    set_a, set_b = np.sort(perm[:half]), np.sort(perm[half:])
    big = 1.0 + math.sqrt(K)
    beta = np.zeros((K, p + 1))
    for k in range(K):
        if k + 1 <= 6:
            beta[k, 1 + set_a] = big
            beta[k, 1 + set_b] = 1.0
        else:
            beta[k, 1 + set_a] = 1.0
            beta[k, 1 + set_b] = big

    labels = np.repeat(np.arange(K), n_k)
    noise = cfg.noise_sd * rng.standard_normal(n)
    y = np.einsum("ij,ij->i", Z, beta[labels, 1:]) + noise
    groups = [np.arange(k * n_k, (k + 1) * n_k) for k in range(K)]
    raw = GroupedDataset.from_predictors(Z, y, groups,
                                         group_names=tuple(f"group{k + 1}" for k in range(K)))
    data, stats = standardize(raw)
    truth = SyntheticTruth(beta=beta, support=np.sort(support) + 1, set_a=set_a + 1,
                           set_b=set_b + 1)
    return data, truth, stats


def reference_beta(truth: SyntheticTruth, which="majority"):
    """Single reference coefficient vector from the group-specific truth.

    ``majority`` is the pattern of groups ``k > 6``, ``minority`` that of
    groups 1-6; an integer selects that 1-based group.
    """
    if which == "majority":
        return truth.beta[-1].copy()
    if which == "minority":
        return truth.beta[0].copy()
    k = int(which)
    if not 1 <= k <= truth.beta.shape[0]:
        raise PreconditionError(f"group {k} out of range")
    return truth.beta[k - 1].copy()


# ---------------------------------------------------------------------------
# standardization
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StandardizationStats:
    """Column means and sample standard deviations used for z-scoring."""

    names: tuple
    means: np.ndarray
    stdevs: np.ndarray
    y_mean: float
    y_stdev: float

    def transform(self, data: GroupedDataset) -> GroupedDataset:
        Z = (data.X[:, 1:] - self.means) / self.stdevs
        X = np.column_stack([np.ones(data.n), Z])
        y = (data.y - self.y_mean) / self.y_stdev
        return replace(data, X=X, y=y)

    def inverse(self, data: GroupedDataset) -> GroupedDataset:
        Z = data.X[:, 1:] * self.stdevs + self.means
        X = np.column_stack([np.ones(data.n), Z])
        y = data.y * self.y_stdev + self.y_mean
        return replace(data, X=X, y=y)

    def beta_to_standardized(self, beta):
        """Map raw-unit coefficients (intercept first) into standardized units."""
        beta = np.asarray(beta, dtype=float)
        slopes = beta[1:] * self.stdevs / self.y_stdev
        icpt = (beta[0] + self.means @ beta[1:] - self.y_mean) / self.y_stdev
        return np.concatenate([[icpt], slopes])

    def beta_to_raw(self, beta):
        beta = np.asarray(beta, dtype=float)
        slopes = beta[1:] * self.y_stdev / self.stdevs
        icpt = self.y_mean + self.y_stdev * beta[0] - self.means @ slopes
        return np.concatenate([[icpt], slopes])

    def to_dict(self):
        return {
            "columns": [{"name": n, "mean": float(m), "stdev": float(s)}
                        for n, m, s in zip(self.names, self.means, self.stdevs)],
            "response": {"mean": float(self.y_mean), "stdev": float(self.y_stdev)},
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d):
        cols = d["columns"]
        return cls(names=tuple(c["name"] for c in cols),
                   means=np.array([c["mean"] for c in cols], dtype=float),
                   stdevs=np.array([c["stdev"] for c in cols], dtype=float),
                   y_mean=float(d["response"]["mean"]), y_stdev=float(d["response"]["stdev"]))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def standardize(data: GroupedDataset, stats_from=None):
    """Z-score the predictors and response with statistics from ``stats_from`` rows.

    Sample standard deviations (``ddof=1``) are used; all rows are
    transformed with the same statistics, so held-out rows never leak into
    them.  Returns ``(standardized_data, stats)``.
    """
    rows = np.arange(data.n) if stats_from is None else np.asarray(stats_from, dtype=np.int64)
    if len(rows) < 2:
        raise PreconditionError("standardization needs at least two rows")
    Z = data.X[rows, 1:]
    means = Z.mean(axis=0)
    sds = Z.std(axis=0, ddof=1)
    names = data.feature_names[1:]
    bad = np.flatnonzero(sds <= CONSTANT_SD)
    if len(bad):
        raise ConstantColumnError(f"constant column(s): {[names[j] for j in bad]}")
    y = data.y[rows]
    y_sd = float(y.std(ddof=1))
    if y_sd <= CONSTANT_SD:
        raise ConstantColumnError("constant response")
    stats = StandardizationStats(names=tuple(names), means=means, stdevs=sds,
                                 y_mean=float(y.mean()), y_stdev=y_sd)
    return stats.transform(data), stats


# ---------------------------------------------------------------------------
# CSV / JSON ingestion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IngestReport:
    n_rows: int
    n_predictors: int
    dropped_columns: tuple = ()
    target: str = ""

    def to_dict(self):
        return {"n_rows": self.n_rows, "n_predictors": self.n_predictors,
                "dropped_columns": list(self.dropped_columns), "target": self.target}


def _parse_float(text, row, column):
    try:
        v = float(text)
    except ValueError:
        raise DataFormatError(f"cannot parse {text!r} as a number", row=row, column=column) from None
    if not math.isfinite(v):
        raise DataFormatError(f"non-finite value {text!r}", row=row, column=column)
    return v


def load_group_spec(path, n_rows=None):
    """Read ``{"groups": [{"name": ..., "rows": [...]}, ...]}`` (0-based rows)."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"group spec is not valid JSON: {exc.msg}", row=exc.lineno) from None
    if not isinstance(doc, dict) or not isinstance(doc.get("groups"), list):
        raise DataFormatError('group spec must be an object with a "groups" list')
    names, groups = [], []
    for i, g in enumerate(doc["groups"]):
        if not isinstance(g, dict) or "rows" not in g:
            raise DataFormatError(f"group entry {i} lacks a rows array")
        name = str(g.get("name", f"group{i + 1}"))
        rows = g["rows"]
        if not isinstance(rows, list) or not all(isinstance(r, int) and not isinstance(r, bool)
                                                 for r in rows):
            raise DataFormatError(f"group {name!r} rows must be a list of integers")
        if len(rows) == 0:
            raise DataFormatError(f"empty group {name!r}")
        if n_rows is not None and (min(rows) < 0 or max(rows) >= n_rows):
            raise DataFormatError(f"group {name!r} has row indexes outside [0, {n_rows})")
        names.append(name)
        groups.append(np.array(sorted(set(rows)), dtype=np.int64))
    return names, groups


def load_csv_dataset(path, target, group_spec_path=None):
    """Read a numeric CSV with a header row.

    Predictor columns containing an empty cell are dropped and listed in the
    report; an empty response cell is an error.  Returns ``(data, report)``.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError("empty CSV file") from None
        if target not in header:
            raise DataFormatError(f"unknown target column {target!r}")
        if len(set(header)) != len(header):
            raise DataFormatError("duplicate column names in header")
        rows = []
        for i, rec in enumerate(reader):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataFormatError(f"expected {len(header)} fields, found {len(rec)}", row=i)
            rows.append(rec)
    if not rows:
        raise DataFormatError("CSV has no data rows")
    n = len(rows)
    tcol = header.index(target)
    values = np.full((n, len(header)), np.nan)
    missing = np.zeros(len(header), dtype=bool)
    for i, rec in enumerate(rows):
        for j, cell in enumerate(rec):
            cell = cell.strip()
            if cell == "":
                if j == tcol:
                    raise DataFormatError("missing response value", row=i, column=target)
                missing[j] = True
                continue
            values[i, j] = _parse_float(cell, i, header[j])
    keep = [j for j in range(len(header)) if j != tcol and not missing[j]]
    dropped = tuple(header[j] for j in range(len(header)) if j != tcol and missing[j])
    if not keep:
        raise DataFormatError("no complete predictor columns remain")
    names, groups = ([], []) if group_spec_path is None else load_group_spec(group_spec_path, n)
    data = GroupedDataset.from_predictors(values[:, keep], values[:, tcol], groups,
                                          group_names=tuple(names),
                                          feature_names=tuple(header[j] for j in keep))
    report = IngestReport(n_rows=n, n_predictors=len(keep), dropped_columns=dropped,
                          target=target)
    return data, report


# ---------------------------------------------------------------------------
# folds
# ---------------------------------------------------------------------------

class GroupTooSmallWarning(UserWarning):
    """A stratum has too few rows to appear in every block of a fold split."""


@dataclass(frozen=True, eq=False)
class FoldSplit:
    fold_id: int
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray


def _strata(data):
    """First group containing each row (``-1`` for rows in no group)."""
    label = np.full(data.n, -1, dtype=np.int64)
    for l in reversed(range(data.n_groups)):
        label[data.groups[l]] = l
    return label


def kfold_split(data: GroupedDataset, folds=5, seed=0):
    """Rotating train/valid/test splits stratified by group.

    Rows are dealt into ``folds`` blocks stratum by stratum (a row's stratum
    is the first group containing it).  Fold ``f`` tests on block ``f``,
    validates on block ``f + 1`` (mod ``folds``) and trains on the rest.
    """
    if folds < 3:
        raise PreconditionError("need at least 3 folds")
    if data.n < folds:
        raise PreconditionError(f"{data.n} rows cannot fill {folds} folds")
    rng = np.random.default_rng(seed)
    label = _strata(data)
    block = np.empty(data.n, dtype=np.int64)
    offset = 0
    for s in np.unique(label):
        members = rng.permutation(np.flatnonzero(label == s))
        if s >= 0 and len(members) < folds:
            warnings.warn(f"group {data.group_names[s]!r} has {len(members)} rows; it cannot "
                          f"appear in all three sets of every fold", GroupTooSmallWarning,
                          stacklevel=2)
        block[members] = (offset + np.arange(len(members))) % folds
        offset = (offset + len(members)) % folds
    out = []
    for f in range(folds):
        test = np.flatnonzero(block == f)
        valid = np.flatnonzero(block == (f + 1) % folds)
        train = np.flatnonzero((block != f) & (block != (f + 1) % folds))
        out.append(FoldSplit(fold_id=f, train=train, valid=valid, test=test))
    return out
