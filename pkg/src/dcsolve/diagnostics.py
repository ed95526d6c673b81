"""Assertions over solver traces and sampled problem properties.

All checks return a :class:`CheckReport` whose ``worst_violation`` is the
largest ``lhs - rhs`` over the checked iterations (negative when every
inequality holds with room to spare).  Rate bounds use the last recorded
function value in place of the unknown optimal value; by telescoping this
is never weaker than the bound stated with the true minimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np

from .core import DcProblem, SolveTrace, UsageError, dc_gradient, objective_float

__all__ = [
    "CheckReport",
    "RateFit",
    "running_arith_mean",
    "running_geo_mean",
    "check_descent",
    "check_rate_bound",
    "check_next_gradient_bound",
    "fit_loglog_slope",
    "estimate_curvature",
    "check_weak_smoothness",
    "finite_diff_gradient",
    "gradient_check",
]

DESCENT_RTOL = 1e-10
RATE_TOL = 1e-8


@dataclass(frozen=True)
class CheckReport:
    name: str
    worst_violation: float
    passed: bool
    k_worst: int = -1
    detail: str = ""

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"[{flag}] {self.name}: worst={self.worst_violation:.3e} at k={self.k_worst}{extra}"


@dataclass(frozen=True)
class RateFit:
    slope: float
    window: tuple
    r2: float


def _report(name, violations, tol, detail=""):
    violations = np.asarray(violations, dtype=float)
    if violations.size == 0:
        return CheckReport(name, -math.inf, True, -1, detail or "vacuous")
    # NaN counts as a failure
    bad = np.where(np.isnan(violations), math.inf, violations)
    k = int(np.argmax(bad))
    worst = float(bad[k])
    return CheckReport(name, worst, bool(worst <= tol), k, detail)


def running_arith_mean(seq) -> np.ndarray:
    seq = np.asarray(seq, dtype=float)
    if seq.size == 0:
        raise UsageError("running mean of an empty sequence")
    return np.cumsum(seq) / np.arange(1, seq.size + 1)


def running_geo_mean(seq) -> np.ndarray:
    seq = np.asarray(seq, dtype=float)
    if seq.size == 0:
        raise UsageError("running mean of an empty sequence")
    if np.any(seq < 0):
        raise UsageError("geometric mean needs nonnegative entries")
    out = np.zeros_like(seq)
    zero_at = np.flatnonzero(seq == 0)
    stop = zero_at[0] if zero_at.size else seq.size
    if stop:
        logs = np.cumsum(np.log(seq[:stop]))
        out[:stop] = np.exp(logs / np.arange(1, stop + 1))
    return out


_DESCENT_ALGOS = {
    "subgradient": "alg1",
    "backtracking": "alg4",
    "prox": "alg2",
    "cccp": "cccp",
}


def check_descent(trace: SolveTrace, algo: str, alpha: Optional[float] = None) -> CheckReport:
    """Per-iteration sufficient decrease for the named algorithm.

    * ``subgradient``: ``f_k - f_{k+1} >= alpha/2 ||grad f_k||^2``
    * ``backtracking``: same with the accepted step ``t_k`` in place of ``alpha``
    * ``prox``: ``f_k - f_{k+1} >= ||x_k - x_{k+1}||^2 / (2 alpha)``
    * ``cccp``: ``f_k - f_{k+1} >= Q(x_k; x_k) - Q(x_{k+1}; x_k) >= 0``

    Each inequality is allowed a slack of ``1e-10 * max(1, |f_k|)``.
    """
    if algo not in _DESCENT_ALGOS:
        raise UsageError(f"no descent inequality for {algo!r}")
    if trace.algorithm != algo:
        raise UsageError(f"trace came from {trace.algorithm!r}, not {algo!r}")
    f = trace.f_val
    K = len(f) - 1
    name = f"descent[{algo}]"
    if K < 1:
        return _report(name, [], 0.0)
    drop = f[:-1] - f[1:]
    slack = DESCENT_RTOL * np.maximum(1.0, np.abs(f[:-1]))
    if algo == "subgradient":
        a = trace.alpha if alpha is None else alpha
        need = 0.5 * a * trace.grad_norm[:-1] ** 2
    elif algo == "backtracking":
        need = 0.5 * trace.step_size[:-1] * trace.grad_norm[:-1] ** 2
    elif algo == "prox":
        a = trace.alpha if alpha is None else alpha
        need = trace.step_norm[:-1] ** 2 / (2.0 * a)
    else:
        md = trace.model_decrease[:-1]
        # majorization and monotone inner solve, checked together
        need = np.maximum(md, 0.0)
        neg = -md - slack
        viol = np.maximum(need - drop - slack, neg)
        return _report(name, viol, 0.0)
    return _report(name, need - drop - slack, 0.0)


def _need(constants, key, theorem):
    if key not in constants or constants[key] is None:
        raise UsageError(f"{theorem} needs constant {key!r}")
    return float(constants[key])


def check_rate_bound(trace: SolveTrace, theorem: str, constants: Mapping[str, float] = None,
                     tol: float = RATE_TOL) -> CheckReport:
    """Averaged-rate bound at every ``k``, with ``f*`` replaced by ``f_{k+1}`` (``f_k`` for T3).

    ``theorem`` selects the inequality:

    ``T1``         mean_{j<=k} ||grad f_j||^2        <= 2 (f_0 - f_{k+1}) / (alpha (k+1))
    ``T2-step``    mean_{j<=k} ||x_j - x_{j+1}||^2  <= 2 alpha (f_0 - f_{k+1}) / (k+1)
    ``T2-grad``    mean_{j<=k} ||grad f_{j+1}||^2   <= 2 alpha C (f_0 - f_{k+1}) / (k+1),
                   ``C = (M_g + M_h + 1/alpha)^2``
    ``T3``         min_{j<=k} G_j                   <= max(2 (f_0 - f_k), c0) / sqrt(k+1)
    ``P1-strong``  mean_{j<=k} ||x_j - x_{j+1}||^2  <= 2 (f_0 - f_{k+1}) / (mu (k+1))
    """
    constants = dict(constants or {})
    f = trace.f_val
    K = len(f) - 1
    if theorem == "T3":
        c0 = _need(constants, "c0", theorem)
        if trace.fw_gap is None:
            raise UsageError("T3 needs a Frank-Wolfe trace")
        g = trace.fw_gap
        kk = np.arange(len(g))
        # f_{k+1} is unknown on the last row; f_k is a valid (weaker) substitute there
        f_next = np.append(f[1:], f[-1])
        rhs = np.maximum(2.0 * (f[0] - f_next), c0) / np.sqrt(kk + 1.0)
        return _report("rate[T3]", np.minimum.accumulate(g) - rhs, tol)
    if K < 1:
        return _report(f"rate[{theorem}]", [], tol)
    k = np.arange(K)
    drop = f[0] - f[1:]
    if theorem == "T1":
        alpha = _need(constants, "alpha", theorem)
        lhs = running_arith_mean(trace.grad_norm[:-1] ** 2)
        rhs = 2.0 * drop / (alpha * (k + 1))
    elif theorem == "T2-step":
        alpha = _need(constants, "alpha", theorem)
        lhs = running_arith_mean(trace.step_norm[:-1] ** 2)
        rhs = 2.0 * alpha * drop / (k + 1)
    elif theorem == "T2-grad":
        alpha = _need(constants, "alpha", theorem)
        mg = _need(constants, "M_g", theorem)
        mh = _need(constants, "M_h", theorem)
        if trace.next_grad_norm is None:
            raise UsageError("T2-grad needs a prox trace")
        c = (mg + mh + 1.0 / alpha) ** 2
        lhs = running_arith_mean(trace.next_grad_norm[:-1] ** 2)
        rhs = 2.0 * alpha * c * drop / (k + 1)
    elif theorem == "P1-strong":
        mu = _need(constants, "mu", theorem)
        lhs = running_arith_mean(trace.step_norm[:-1] ** 2)
        rhs = 2.0 * drop / (mu * (k + 1))
    else:
        raise UsageError(f"unknown theorem {theorem!r}")
    return _report(f"rate[{theorem}]", lhs - rhs, tol)


def check_next_gradient_bound(trace: SolveTrace, m_g: float, m_h: float,
                              tol: float = RATE_TOL) -> CheckReport:
    """``||grad f(x_{k+1})|| <= (M_g + M_h + 1/alpha) ||x_k - x_{k+1}||`` for a prox trace."""
    if trace.next_grad_norm is None:
        raise UsageError("needs a prox trace")
    c = m_g + m_h + 1.0 / trace.alpha
    lhs = trace.next_grad_norm[:-1]
    rhs = c * trace.step_norm[:-1]
    return _report("next-gradient bound", lhs - rhs, tol)


def fit_loglog_slope(seq, k_min: int, k_max: int) -> RateFit:
    """Least-squares slope of ``log seq[k]`` against ``log k`` for ``k_min <= k <= k_max``.

    The window is cut at the first nonpositive entry.
    """
    seq = np.asarray(seq, dtype=float)
    if k_min < 1 or k_max >= seq.size or k_max < k_min:
        raise UsageError(f"bad window [{k_min}, {k_max}] for a sequence of length {seq.size}")
    window = seq[k_min:k_max + 1]
    bad = np.flatnonzero(~(window > 0))
    if bad.size:
        window = window[:bad[0]]
    if window.size < 3:
        raise UsageError("fewer than 3 positive points in the fit window")
    kk = np.arange(k_min, k_min + window.size, dtype=float)
    lx = np.log(kk)
    ly = np.log(window)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    sst = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if sst == 0 else max(0.0, 1.0 - float(np.sum(resid ** 2)) / sst)
    return RateFit(float(slope), (k_min, k_min + window.size - 1), min(r2, 1.0))


def estimate_curvature(p: DcProblem, sampler: Callable, n: int, seed: int = 0) -> float:
    """Sampled lower estimate of the generalized curvature constant.

    ``sampler(rng)`` returns a pair ``(x, s)`` of points of the feasible set.
    For each sample ``gamma`` is uniform on ``(0, 1]``, ``y = x + gamma (s - x)``
    and the quantity ``2/gamma^2 [f(y) - f(x) - <y - x, grad g(x) - u(x)>]`` is
    maximized.  Samples are drawn sequentially, so the estimate for ``n`` is the
    running maximum over the first ``n`` draws of the same seed.  This is *not*
    a valid ``c0`` for Frank-Wolfe; that needs a true upper bound.
    """
    if n < 1:
        raise UsageError("n must be positive")
    rng = np.random.default_rng(seed)
    best = -math.inf
    for _ in range(n):
        x, s = sampler(rng)
        x = np.asarray(x, dtype=float)
        s = np.asarray(s, dtype=float)
        gamma = 1.0 - rng.random()
        y = x + gamma * (s - x)
        val = objective_float(p, y) - objective_float(p, x) - float((y - x) @ dc_gradient(p, x))
        best = max(best, 2.0 * val / gamma ** 2)
    return best


def check_weak_smoothness(grad: Callable, sampler: Callable, M: float, n: int,
                          seed: int = 0, tol: float = 1e-9, name: str = "weak-smoothness") -> CheckReport:
    """Sampled check of ``<grad f(x) - grad f(y), x - y> <= M ||x - y||^2``.

    Passing on a region means ``f`` behaves there like an ``M``-smooth function
    minus a differentiable convex one.
    """
    rng = np.random.default_rng(seed)
    viol = np.empty(n)
    for i in range(n):
        x = np.asarray(sampler(rng), dtype=float)
        y = np.asarray(sampler(rng), dtype=float)
        diff = x - y
        lhs = float((np.asarray(grad(x)) - np.asarray(grad(y))) @ diff)
        viol[i] = lhs - M * float(diff @ diff)
    return _report(f"{name}[M={M:g}]", viol, tol)


def finite_diff_gradient(fval: Callable, x, h: Optional[float] = None) -> np.ndarray:
    """Central differences; default step ``1e-5 * max(1, ||x||_inf)``."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = 1e-5 * max(1.0, float(np.max(np.abs(x))) if x.size else 1.0)
    if not h > 0:
        raise UsageError("finite-difference step must be positive")
    out = np.empty_like(x)
    e = np.zeros_like(x)
    for i in range(x.size):
        e[i] = h
        fp = float(fval(x + e))
        fm = float(fval(x - e))
        e[i] = 0.0
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise ArithmeticError(f"non-finite function value when perturbing coordinate {i}")
        out[i] = (fp - fm) / (2.0 * h)
    return out


def gradient_check(fval: Callable, grad: Callable, points, rtol: float = 1e-5,
                   name: str = "gradient") -> CheckReport:
    """Relative error ``||g_fd - g|| / max(1, ||g||)`` at each point, against ``rtol``."""
    errs = []
    for x in points:
        g = np.asarray(grad(x), dtype=float)
        fd = finite_diff_gradient(fval, x)
        errs.append(float(np.linalg.norm(fd - g)) / max(1.0, float(np.linalg.norm(g))))
    errs = np.asarray(errs)
    return _report(name, errs - rtol, 0.0, detail=f"max rel err {errs.max():.2e}")
