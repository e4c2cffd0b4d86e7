"""Augmented-Lagrangian engine for L1-penalized, quadratically constrained programs.

Problems have the form::

    min_x   weight * q0(beta) + linear' x + lam * ||A beta||_1
    s.t.    scale_l * q_l(beta) + lin_l' x + const_l <= 0,   l = 1..L

where ``x = (beta, extra)`` and every ``q`` is a mean squared residual
``(1/n)||y - X beta||^2``.  ``extra`` holds epigraph variables (at most a
handful) that enter linearly.

Outer loop: PHR multiplier updates with a quadratic penalty on positive
violations.  Inner loop: FISTA with backtracking and adaptive restart; the
L1 term is handled by an exact soft-threshold prox for ``A = (0 | I)`` and
by a consensus split ``w = A beta`` otherwise.  Once the outer loop has
settled the zero pattern and the active constraints, a Newton solve of the
reduced KKT system polishes the iterate; the result is only accepted when
the full KKT residuals certify it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg, optimize

from .model import ZERO_TOL, SolverConfig, Status


class QuadForm:
    """Mean squared residual ``(1/n)||y - X b||^2``.

    Caches ``X'X/n`` and ``X'y/n`` when there are more rows than columns,
    otherwise works from the data matrix directly.
    """

    def __init__(self, X, y, cache=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self.n, self.dim = X.shape
        if cache is None:
            cache = self.n > self.dim
        self.cached = bool(cache)
        self.yy = float(y @ y) / self.n
        if self.cached:
            self.gram = X.T @ X / self.n
            self.xty = X.T @ y / self.n
        else:
            self.X = X
            self.y = y

    def value(self, b):
        if self.cached:
            return max(float(b @ (self.gram @ b) - 2.0 * (self.xty @ b)) + self.yy, 0.0)
        r = self.y - self.X @ b
        return float(r @ r) / self.n

    def value_grad(self, b):
        if self.cached:
            gb = self.gram @ b
            v = max(float(b @ gb - 2.0 * (self.xty @ b)) + self.yy, 0.0)
            return v, 2.0 * (gb - self.xty)
        r = self.y - self.X @ b
        return float(r @ r) / self.n, -2.0 / self.n * (self.X.T @ r)

    def grad(self, b):
        return self.value_grad(b)[1]

    def hess_vec(self, v):
        if self.cached:
            return 2.0 * (self.gram @ v)
        return 2.0 / self.n * (self.X.T @ (self.X @ v))

    def hessian(self):
        if self.cached:
            return 2.0 * self.gram
        return 2.0 / self.n * (self.X.T @ self.X)

    def minimum(self):
        """Smallest attainable value (least-squares residual)."""
        if self.cached:
            b, *_ = np.linalg.lstsq(self.gram, self.xty, rcond=None)
        else:
            b, *_ = np.linalg.lstsq(self.X, self.y, rcond=None)
        return self.value(b)


@dataclass
class Constraint:
    quad: QuadForm
    scale: float = 1.0
    linear: Optional[np.ndarray] = None
    const: float = 0.0
    unit: float = 1.0   # user units per internal unit of constraint value


@dataclass
class Program:
    dim: int
    constraints: list
    objective: Optional[QuadForm] = None
    weight: float = 1.0
    linear: Optional[np.ndarray] = None
    lam: float = 0.0
    A: Optional[np.ndarray] = None
    identity: bool = True
    n_extra: int = 0
    rho0: float = 10.0
    stat_unit: float = 1.0   # user stationarity units per internal unit

    @property
    def size(self):
        return self.dim + self.n_extra

    @property
    def penalized(self):
        return self.lam > 0 and (self.identity or self.A is not None)

    @property
    def split(self):
        return self.penalized and not self.identity

    def linear_full(self):
        if self.linear is None:
            return np.zeros(self.size)
        return self.linear

    # --- constraint values ------------------------------------------------
    def cons_values(self, x):
        b = x[:self.dim]
        out = np.empty(len(self.constraints))
        for l, c in enumerate(self.constraints):
            v = c.scale * c.quad.value(b) + c.const
            if c.linear is not None:
                v += c.linear @ x
            out[l] = v
        return out

    def cons_value_grads(self, x):
        b = x[:self.dim]
        vals = np.empty(len(self.constraints))
        grads = np.zeros((len(self.constraints), self.size))
        for l, c in enumerate(self.constraints):
            v, g = c.quad.value_grad(b)
            vals[l] = c.scale * v + c.const
            grads[l, :self.dim] = c.scale * g
            if c.linear is not None:
                vals[l] += c.linear @ x
                grads[l] += c.linear
        return vals, grads

    def smooth_objective_grad(self, x):
        g = self.linear_full().copy()
        if self.objective is not None and self.weight != 0:
            g[:self.dim] += self.weight * self.objective.grad(x[:self.dim])
        return g

    def lagrangian_grad(self, x, eta):
        g = self.smooth_objective_grad(x)
        if len(self.constraints):
            _, grads = self.cons_value_grads(x)
            g += eta @ grads
        return g

    def penalty_image(self, x):
        b = x[:self.dim]
        if self.identity:
            return b[1:]
        return self.A @ b

    def objective_value(self, x):
        v = float(self.linear_full() @ x)
        if self.objective is not None and self.weight != 0:
            v += self.weight * self.objective.value(x[:self.dim])
        if self.penalized:
            v += self.lam * float(np.sum(np.abs(self.penalty_image(x))))
        return v


# ---------------------------------------------------------------------------
# KKT residuals
# ---------------------------------------------------------------------------

def stationarity_distance(prog: Program, x, grad, zero_tol=ZERO_TOL):
    """Sup-norm distance from 0 to ``grad + lam * A' d||.||_1(A beta)``.

    ``grad`` is the gradient of the smooth part of the Lagrangian over ``x``.
    """
    grad = np.asarray(grad, dtype=float)
    if not prog.penalized:
        return float(np.max(np.abs(grad))) if grad.size else 0.0
    lam = prog.lam
    b = x[:prog.dim]
    if prog.identity:
        parts = [np.abs(grad[0:1]), np.abs(grad[prog.dim:])]
        pen = grad[1:prog.dim]
        bb = b[1:]
        nz = np.abs(bb) > zero_tol
        parts.append(np.abs(pen[nz] + lam * np.sign(bb[nz])))
        parts.append(np.maximum(np.abs(pen[~nz]) - lam, 0.0))
        return float(max((np.max(p) for p in parts if p.size), default=0.0))
    A = prog.A
    v = A @ b
    nz = np.abs(v) > zero_tol
    r = grad.copy()
    r[:prog.dim] += lam * (A[nz].T @ np.sign(v[nz]))
    AZ = A[~nz]
    if AZ.shape[0] == 0:
        return float(np.max(np.abs(r)))
    return _box_sup_distance(r, AZ, lam, prog.size)


def _box_sup_distance(r, AZ, lam, size):
    """``min_{|u| <= lam} || r + [AZ' u; 0] ||_inf`` via a small LP."""
    k, d = AZ.shape
    M = np.zeros((size, k))
    M[:d] = AZ.T
    # variables (u, t); minimize t subject to -t <= r + M u <= t
    c = np.zeros(k + 1)
    c[-1] = 1.0
    ones = np.ones((size, 1))
    A_ub = np.vstack([np.hstack([M, -ones]), np.hstack([-M, -ones])])
    b_ub = np.concatenate([-r, r])
    bounds = [(-lam, lam)] * k + [(0, None)]
    res = optimize.linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        # least-squares fallback gives an upper bound on the distance
        u = optimize.lsq_linear(M, -r, bounds=(-lam, lam)).x
        return float(np.max(np.abs(r + M @ u)))
    u = res.x[:k]
    return float(np.max(np.abs(r + M @ u)))


def residuals(prog: Program, x, eta):
    """Stationarity, feasibility and complementarity in user units."""
    grad = prog.lagrangian_grad(x, eta)
    stat = stationarity_distance(prog, x, grad) * prog.stat_unit
    if prog.constraints:
        c = prog.cons_values(x)
        units = np.array([k.unit for k in prog.constraints])
        feas = float(np.max(np.maximum(c * units, 0.0)))
        comp = float(np.max(np.abs(eta * c))) * prog.stat_unit
    else:
        feas = comp = 0.0
    return stat, feas, comp


def user_multipliers(prog: Program, eta):
    units = np.array([k.unit for k in prog.constraints]) if prog.constraints else np.ones(0)
    return eta * prog.stat_unit / units


# ---------------------------------------------------------------------------
# inner accelerated proximal gradient
# ---------------------------------------------------------------------------

class _Subproblem:
    """Smooth augmented Lagrangian for fixed multipliers and penalty."""

    def __init__(self, prog: Program, eta, rho, u=None):
        self.prog = prog
        self.eta = eta
        self.rho = rho
        self.u = u
        self.m = prog.A.shape[0] if prog.split else 0

    def _split(self, z):
        n = self.prog.size
        return z[:n], z[n:]

    def value_grad(self, z):
        prog = self.prog
        x, w = self._split(z)
        b = x[:prog.dim]
        g = prog.linear_full().copy()
        v = float(g @ x)
        if prog.objective is not None and prog.weight != 0:
            qv, qg = prog.objective.value_grad(b)
            v += prog.weight * qv
            g[:prog.dim] += prog.weight * qg
        rho = self.rho
        for l, c in enumerate(prog.constraints):
            qv, qg = c.quad.value_grad(b)
            cv = c.scale * qv + c.const
            if c.linear is not None:
                cv += c.linear @ x
            shifted = self.eta[l] + rho * cv
            if shifted > 0:
                v += (shifted * shifted - self.eta[l] ** 2) / (2 * rho)
                g[:prog.dim] += shifted * c.scale * qg
                if c.linear is not None:
                    g += shifted * c.linear
            else:
                v -= self.eta[l] ** 2 / (2 * rho)
        if not self.m:
            return v, g
        gw = np.zeros(self.m)
        resid = prog.A @ b - w + self.u / rho
        v += 0.5 * rho * float(resid @ resid)
        g[:prog.dim] += rho * (prog.A.T @ resid)
        gw = -rho * resid
        return v, np.concatenate([g, gw])

    def value(self, z):
        return self.value_grad(z)[0]

    def prox(self, z, step):
        prog = self.prog
        if not prog.penalized:
            return z
        t = step * prog.lam
        out = z.copy()
        if self.m:
            w = z[prog.size:]
            out[prog.size:] = np.sign(w) * np.maximum(np.abs(w) - t, 0.0)
        else:
            s = slice(1, prog.dim)
            out[s] = np.sign(z[s]) * np.maximum(np.abs(z[s]) - t, 0.0)
        return out

    def hess_vec(self, z, v):
        prog = self.prog
        x, _ = self._split(z)
        vx, vw = self._split(v)
        b = x[:prog.dim]
        out = np.zeros_like(v)
        if prog.objective is not None and prog.weight != 0:
            out[:prog.dim] += prog.weight * prog.objective.hess_vec(vx[:prog.dim])
        for l, c in enumerate(prog.constraints):
            qv, qg = c.quad.value_grad(b)
            cv = c.scale * qv + c.const
            grad = np.zeros(prog.size)
            grad[:prog.dim] = c.scale * qg
            if c.linear is not None:
                cv += c.linear @ x
                grad += c.linear
            shifted = self.eta[l] + self.rho * cv
            if shifted > 0:
                out[:prog.dim] += shifted * c.scale * c.quad.hess_vec(vx[:prog.dim])
                out[:prog.size] += self.rho * grad * (grad @ vx)
        if self.m:
            d = prog.A @ vx[:prog.dim] - vw
            out[:prog.dim] += self.rho * (prog.A.T @ d)
            out[prog.size:] += -self.rho * d
        return out


def _power_lipschitz(sub: _Subproblem, z, rng, iters=30):
    v = rng.standard_normal(z.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        hv = sub.hess_vec(z, v)
        nrm = np.linalg.norm(hv)
        if nrm == 0:
            return 1.0
        est = nrm
        v = hv / nrm
    return max(est, 1e-12)


def _fista(sub: _Subproblem, z, L, tol, max_iter):
    """Backtracking FISTA with gradient-based restart.

    Stops when the sup-norm of the gradient mapping drops below ``tol``.
    Returns ``(z, L, iterations, final_mapping_norm)``.
    """
    x_prev = z.copy()
    yk = z.copy()
    t = 1.0
    gm = np.inf
    for k in range(1, max_iter + 1):
        fy, gy = sub.value_grad(yk)
        while True:
            xn = sub.prox(yk - gy / L, 1.0 / L)
            d = xn - yk
            fx = sub.value(xn)
            if fx <= fy + gy @ d + 0.5 * L * (d @ d) + 1e-13 * max(1.0, abs(fy)):
                break
            L *= 2.0
        gm = L * float(np.max(np.abs(d))) if d.size else 0.0
        if gm <= tol:
            return xn, L, k, gm
        if (yk - xn) @ (xn - x_prev) > 0:
            t = 1.0
            yk = xn.copy()
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            yk = xn + ((t - 1.0) / t_next) * (xn - x_prev)
            t = t_next
        x_prev = xn
    return x_prev, L, max_iter, gm


# ---------------------------------------------------------------------------
# Newton polish on the identified active structure
# ---------------------------------------------------------------------------

def _polish(prog: Program, x, eta, zero_set, signs, tol_feas_internal, max_newton=40,
            max_swaps=8):
    """Solve the KKT system with fixed zero pattern, signs and active constraints.

    ``zero_set``/``signs`` index the rows of the penalty image (``beta[1:]``
    for the identity penalty).  Returns ``(x, eta)`` or ``None``.
    """
    size, dim = prog.size, prog.dim
    lam = prog.lam if prog.penalized else 0.0
    if prog.penalized:
        Afull = np.hstack([np.zeros((dim - 1, 1)), np.eye(dim - 1)]) if prog.identity else prog.A
    else:
        Afull = np.zeros((0, dim))
    m = Afull.shape[0]
    zero_set = np.array(zero_set, dtype=bool) if m else np.zeros(0, dtype=bool)
    signs = np.array(signs, dtype=float) if m else np.zeros(0)
    if lam == 0:
        zero_set[:] = False
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(eta))):
        return None
    active = eta > 0
    x = x.copy()
    eta = eta.copy()
    units = np.array([c.unit for c in prog.constraints]) if prog.constraints else np.ones(0)

    hess_obj = None
    if prog.objective is not None and prog.weight != 0:
        hess_obj = prog.weight * prog.objective.hessian()
    hess_cons = [c.scale * c.quad.hessian() for c in prog.constraints]
    lin = prog.linear_full()

    for _ in range(max_swaps):
        nz = ~zero_set
        # basis of {x : A_Z beta = 0}
        AZ = Afull[zero_set]
        if prog.identity:
            keep = np.ones(dim, dtype=bool)
            keep[1:] = nz if m else True
            Nb = np.eye(dim)[:, keep]
        elif AZ.shape[0]:
            Nb = linalg.null_space(AZ)
        else:
            Nb = np.eye(dim)
        N = np.zeros((size, Nb.shape[1] + prog.n_extra))
        N[:dim, :Nb.shape[1]] = Nb
        if prog.n_extra:
            N[dim:, Nb.shape[1]:] = np.eye(prog.n_extra)
        theta, *_ = np.linalg.lstsq(N, x, rcond=None)
        act = np.flatnonzero(active)
        pen_lin = np.zeros(size)
        if m and lam > 0:
            pen_lin[:dim] = lam * (Afull[nz].T @ signs[nz])

        eta_a = eta[act].copy()
        for _it in range(max_newton):
            x = N @ theta
            g = lin + pen_lin
            H = np.zeros((size, size))
            if hess_obj is not None:
                g = g.copy()
                g[:dim] += prog.weight * prog.objective.grad(x[:dim])
                H[:dim, :dim] += hess_obj
            vals, grads = (prog.cons_value_grads(x) if prog.constraints
                           else (np.zeros(0), np.zeros((0, size))))
            for j, l in enumerate(act):
                g = g + eta_a[j] * grads[l]
                H[:dim, :dim] += eta_a[j] * hess_cons[l]
            F1 = N.T @ g
            F2 = vals[act]
            F = np.concatenate([F1, F2])
            if np.max(np.abs(F), initial=0.0) <= 1e-15 * max(1.0, np.max(np.abs(g), initial=0.0)):
                break
            J = grads[act] @ N
            k = N.shape[1]
            K = np.zeros((k + len(act), k + len(act)))
            K[:k, :k] = N.T @ H @ N
            K[:k, k:] = J.T
            K[k:, :k] = J
            try:
                step = np.linalg.solve(K, -F)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(K, -F, rcond=None)[0]
            if not np.all(np.isfinite(step)):
                return None
            theta = theta + step[:k]
            eta_a = eta_a + step[k:]
            # a diverging Newton iterate means this structure has no KKT point
            if np.max(np.abs(eta_a), initial=0.0) > 1e100 or not np.all(np.isfinite(theta)):
                return None
            if np.max(np.abs(step), initial=0.0) <= 1e-14 * max(1.0, np.max(np.abs(theta), initial=0.0)):
                break
        x = N @ theta
        eta = np.zeros_like(eta)
        eta[act] = eta_a

        changed = False
        # multipliers must be nonnegative
        neg = act[eta_a < 0]
        if len(neg):
            active[neg] = False
            eta[neg] = 0.0
            changed = True
        # inactive constraints must hold
        if prog.constraints:
            vals = prog.cons_values(x)
            bad = np.flatnonzero((~active) & (vals * units > tol_feas_internal))
            if len(bad):
                active[bad] = True
                eta[bad] = 0.0
                changed = True
        if m and lam > 0:
            v = prog.penalty_image(x)
            # sign consistency on the nonzero set
            flip = nz & (np.sign(v) != signs)
            flip &= np.abs(v) > 0
            tiny = nz & (np.abs(v) <= 0)
            if np.any(flip | tiny):
                zero_set = zero_set | flip | tiny
                changed = True
            # dual feasibility on the zero set
            g = prog.lagrangian_grad(x, eta) + pen_lin
            if prog.identity:
                u = -g[1:dim]
                over = zero_set & (np.abs(u) > lam * (1 + 1e-9))
                if np.any(over):
                    zero_set = zero_set & ~over
                    signs[over] = -np.sign(u[over])
                    changed = True
            elif AZ.shape[0]:
                u, *_ = np.linalg.lstsq(AZ.T, -g[:dim], rcond=None)
                idx = np.flatnonzero(zero_set)
                over = np.abs(u) > lam * (1 + 1e-9)
                if np.any(over):
                    zero_set[idx[over]] = False
                    signs[idx[over]] = -np.sign(u[over])
                    changed = True
        if not changed:
            return x, eta
    return None


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

@dataclass
class EngineResult:
    x: np.ndarray
    eta: np.ndarray          # internal multipliers
    status: Status
    stationarity: float
    feasibility: float
    complementarity: float
    outer: int
    inner: int
    rho: float
    w: Optional[np.ndarray] = None
    dual_u: Optional[np.ndarray] = None
    polished: bool = False


def _certified(res, cfg):
    stat, feas, comp = res
    return stat <= cfg.tol_stat and feas <= cfg.tol_feas and comp <= cfg.tol_stat


def min_max_violation(prog: Program, x0, cfg: SolverConfig, tight=True):
    """``min_x max_l c_l(x)`` (internal units) via the epigraph program.

    ``tight=False`` uses looser tolerances, enough for the multipliers to
    feed :func:`dual_lower_bound`.
    """
    size = prog.size
    cons = []
    for c in prog.constraints:
        lin = np.zeros(size + 1)
        if c.linear is not None:
            lin[:size] = c.linear
        lin[size] = -1.0
        cons.append(Constraint(quad=c.quad, scale=c.scale, linear=lin, const=c.const))
    lin_obj = np.zeros(size + 1)
    lin_obj[size] = 1.0
    epi = Program(dim=prog.dim, constraints=cons, objective=None, weight=0.0, linear=lin_obj,
                  lam=0.0, n_extra=prog.n_extra + 1, rho0=10.0)
    x0 = np.asarray(x0, dtype=float)
    start = np.concatenate([x0, [float(np.max(prog.cons_values(x0)))]])
    tols = dict(tol_stat=1e-9, tol_feas=1e-10, max_outer=60) if tight else \
        dict(tol_stat=1e-5, tol_feas=1e-7, max_outer=30)
    res = solve(epi, start, None, SolverConfig(max_inner=cfg.max_inner, seed=cfg.seed, **tols),
                detect_infeasible=False)
    return float(res.x[-1]), res


def dual_lower_bound(prog: Program, eta):
    """Weak-duality bound ``min_x sum_l w_l c_l(x) <= min_x max_l c_l(x)``.

    ``w`` is ``eta`` normalized to sum to one.  Returns ``-inf`` when no
    usable bound exists (zero weights, or constraints with linear terms).
    """
    w = np.maximum(np.asarray(eta, dtype=float), 0.0)
    total = float(np.sum(w))
    if not (np.isfinite(total) and total > 0):
        return -np.inf
    w = w / total
    used = [(wl, c) for wl, c in zip(w, prog.constraints) if wl > 0]
    if any(c.linear is not None for _, c in used):
        return -np.inf
    H = np.zeros((prog.dim, prog.dim))
    g = np.zeros(prog.dim)
    for wl, c in used:
        H += (wl * c.scale / 2.0) * c.quad.hessian()
        q = c.quad
        g += wl * c.scale * (q.xty if q.cached else q.X.T @ q.y / q.n)
    # g lies in the range of H, so the least-squares solution is a minimizer
    b, *_ = np.linalg.lstsq(H, g, rcond=None)
    val = sum(wl * (c.scale * c.quad.value(b) + c.const) for wl, c in used)
    return float(val) - 1e-12 * (1.0 + abs(float(val)))


def constraints_infeasible(prog: Program, x0, cfg: SolverConfig, threshold, eta=None):
    """Whether ``min_x max_l c_l(x) > threshold``.

    Cheap dual bounds come first (the caller's multipliers ``eta``, then
    uniform weights).  Next a loose epigraph solve, whose multipliers give a
    certified lower bound and whose iterate an upper bound.  Only an
    ambiguous outcome pays for the tight solve.
    """
    for w in (eta, np.ones(len(prog.constraints))):
        if w is not None and dual_lower_bound(prog, w) > threshold:
            return True
    _, res = min_max_violation(prog, x0, cfg, tight=False)
    if dual_lower_bound(prog, res.eta) > threshold:
        return True
    if float(np.max(prog.cons_values(res.x[:prog.size]))) <= threshold:
        return False
    worst, res = min_max_violation(prog, res.x[:prog.size], cfg)
    return worst > threshold or dual_lower_bound(prog, res.eta) > threshold


STAGNATION_WINDOW = 5


def _merit(res, cfg):
    return max(res[0] / cfg.tol_stat, res[1] / cfg.tol_feas, res[2] / cfg.tol_stat)


def solve(prog: Program, x0, eta0, cfg: SolverConfig, *, detect_infeasible=True,
          rho_cap=1e8) -> EngineResult:
    rng = np.random.default_rng(cfg.seed)
    x = np.array(x0, dtype=float)
    L = len(prog.constraints)
    eta = np.zeros(L) if eta0 is None else np.maximum(np.array(eta0, dtype=float), 0.0)
    units = np.array([c.unit for c in prog.constraints]) if L else np.ones(0)
    tol_feas_int = cfg.tol_feas

    res0 = residuals(prog, x, eta)
    if _certified(res0, cfg):
        return EngineResult(x, eta, Status.CONVERGED, *res0, outer=0, inner=0, rho=prog.rho0)

    rho = prog.rho0
    rho_max = prog.rho0 * rho_cap
    m = prog.A.shape[0] if prog.split else 0
    w = prog.A @ x[:prog.dim] if m else None
    u = np.zeros(m) if m else None
    z = np.concatenate([x, w]) if m else x.copy()

    tol_floor = 0.05 * cfg.tol_stat / prog.stat_unit
    tol_in = max(1e-2, tol_floor)
    prev_v = np.inf
    stall = 0
    inner_total = 0
    tried = set()
    status = Status.MAX_ITER
    best = (x.copy(), eta.copy(), res0)
    polished = False
    outer = 0
    res = res0
    mark, since_mark = _merit(res0, cfg), 0

    for outer in range(1, cfg.max_outer + 1):
        sub = _Subproblem(prog, eta, rho, u)
        Lip = 1.2 * _power_lipschitz(sub, z, rng)
        z, Lip, its, gm = _fista(sub, z, Lip, tol_in, cfg.max_inner)
        inner_total += its
        x = z[:prog.size]
        c = prog.cons_values(x) if L else np.zeros(0)
        viol = float(np.max(np.abs(np.minimum(-c, eta / rho)) * units)) if L else 0.0
        eta = np.maximum(0.0, eta + rho * c) if L else eta
        if m:
            cons_gap = prog.A @ x[:prog.dim] - z[prog.size:]
            u = u + rho * cons_gap
            viol = max(viol, float(np.max(np.abs(cons_gap))))
        res = residuals(prog, x, eta)
        if res[1] <= best[2][1] * 1.0001 or (res[1] <= cfg.tol_feas and res[0] < best[2][0]):
            best = (x.copy(), eta.copy(), res)
        if _certified(res, cfg):
            status = Status.CONVERGED
            break

        # polish attempt on the current structure
        if prog.penalized:
            img = z[prog.size:] if m else x[1:prog.dim]
            zset = img == 0 if m else np.abs(img) <= ZERO_TOL
            sg = np.sign(img)
        else:
            zset = np.zeros(0, dtype=bool)
            sg = np.zeros(0)
        key = (zset.tobytes(), (eta > 0).tobytes())
        if key not in tried and res[1] <= 1e-2 * max(1.0, np.max(units, initial=1.0)):
            tried.add(key)
            out = _polish(prog, x, eta, zset, sg, tol_feas_int)
            if out is not None:
                px, peta = out
                pres = residuals(prog, px, peta)
                if _certified(pres, cfg):
                    x, eta, res = px, peta, pres
                    polished = True
                    status = Status.CONVERGED
                    break

        if viol > 0.25 * prev_v and viol > cfg.tol_feas:
            rho = min(rho * cfg.penalty_growth, rho_max)
            stall += 1
        else:
            stall = 0
        prev_v = viol
        tol_in = max(tol_in * 0.1, tol_floor)

        if detect_infeasible and L and stall and res[1] > 1e3 * cfg.tol_feas:
            limit = max(10 * cfg.tol_feas / max(np.max(units), 1e-300), 1e-9)
            # the running multipliers often certify an empty set long before
            # the full check below would run
            if dual_lower_bound(prog, eta) > limit or (
                    stall >= 3 and constraints_infeasible(prog, x, cfg, limit, eta)):
                status = Status.INFEASIBLE
                break
            if stall >= 3:
                stall = 0
        if detect_infeasible and L and rho >= rho_max and res[1] > 1e3 * cfg.tol_feas and stall >= 6:
            status = Status.INFEASIBLE
            break

        # with the penalty at its cap, give up once the worst tolerance ratio has not
        # halved for STAGNATION_WINDOW outer steps; a point without KKT multipliers
        # looks like this (eta drifts upward)
        if _merit(res, cfg) <= 0.5 * mark or rho < rho_max:
            mark, since_mark = min(mark, _merit(res, cfg)), 0
        else:
            since_mark += 1
            if since_mark >= STAGNATION_WINDOW:
                break

    if status is Status.MAX_ITER:
        bx, beta_eta, bres = best
        if bres[1] <= res[1] and bres[0] <= res[0]:
            x, eta, res = bx, beta_eta, bres
    if m:
        w_out = z[prog.size:]
    else:
        w_out = None
    return EngineResult(x=x, eta=eta, status=status, stationarity=res[0], feasibility=res[1],
                        complementarity=res[2], outer=outer, inner=inner_total, rho=rho,
                        w=w_out, dual_u=u, polished=polished)
