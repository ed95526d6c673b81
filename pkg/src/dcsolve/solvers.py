"""Iterative methods for ``min g - h + phi``.

Every solver takes a :class:`~dcsolve.core.DcProblem`, a starting point and
a :class:`~dcsolve.core.SolverConfig`, and returns a
:class:`~dcsolve.core.SolveTrace`.  Stopping rules:

* ``subgradient_dc`` and ``backtracking_gd`` stop when ``||grad f|| <= tol``;
* ``prox_dc`` and ``cccp`` stop when ``||x^k - x^{k+1}|| / alpha <= tol``;
* ``frank_wolfe_dc`` stops when the Frank-Wolfe gap is ``<= tol``;

and all of them stop after ``max_iter`` steps (``max_iter + 1`` rows).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import (
    DcProblem,
    SolverConfig,
    SolveTrace,
    Status,
    TraceRecorder,
    UsageError,
    dc_gradient,
    objective_float,
)

__all__ = [
    "LinearMinOracle",
    "CccpConfig",
    "lmo_box",
    "lmo_ball",
    "subgradient_dc",
    "backtracking_gd",
    "prox_dc",
    "frank_wolfe_dc",
    "cccp",
    "solve",
]

MAX_BACKTRACKS = 200


@dataclass(frozen=True)
class LinearMinOracle:
    """``c -> argmin_{s in X} <s, c>`` over a compact convex set ``X``."""

    oracle: Callable
    diameter: float
    contains: Optional[Callable] = None

    def __call__(self, c):
        return self.oracle(c)


@dataclass(frozen=True)
class CccpConfig:
    """Inner proximal-gradient solve of the convex majorant.

    ``inner_step=None`` uses ``1 / M_g``.
    """

    inner_max_iter: int = 1000
    inner_tol: float = 1e-8
    inner_step: Optional[float] = None

    def __post_init__(self):
        if int(self.inner_max_iter) < 1:
            raise UsageError("inner_max_iter must be positive")
        if not self.inner_tol > 0:
            raise UsageError("inner_tol must be positive")
        if self.inner_step is not None and not self.inner_step > 0:
            raise UsageError("inner_step must be positive")


def lmo_box(lo, hi) -> LinearMinOracle:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != hi.shape or np.any(lo > hi):
        raise UsageError("invalid box")

    def oracle(c):
        return np.where(np.asarray(c) < 0, hi, lo).astype(float)

    def contains(x, tol=1e-12):
        x = np.asarray(x, dtype=float)
        return x.shape == lo.shape and bool(np.all(x >= lo - tol) and np.all(x <= hi + tol))

    return LinearMinOracle(oracle, float(np.linalg.norm(hi - lo)), contains)


def lmo_ball(center, radius: float) -> LinearMinOracle:
    center = np.asarray(center, dtype=float)
    if radius < 0:
        raise UsageError("radius must be nonnegative")

    def oracle(c):
        c = np.asarray(c, dtype=float)
        nc = np.linalg.norm(c)
        if nc == 0:
            return center.copy()
        return center - radius * c / nc

    def contains(x, tol=1e-12):
        x = np.asarray(x, dtype=float)
        return x.shape == center.shape and bool(np.linalg.norm(x - center) <= radius + tol)

    return LinearMinOracle(oracle, 2.0 * float(radius), contains)


def _finite(*values) -> bool:
    return all(np.all(np.isfinite(v)) for v in values)


def _no_prox(p, algo):
    if p.has_prox_part:
        raise UsageError(f"{algo} requires phi = 0; {p.name} has a prox term")


def subgradient_dc(p: DcProblem, x0, cfg: SolverConfig = SolverConfig()) -> SolveTrace:
    """Fixed-step subgradient-type method: ``x <- x - alpha (grad g(x) - u)``."""
    _no_prox(p, "subgradient_dc")
    alpha = cfg.step_for(p)
    x = p.check_point(x0).copy()
    rec = TraceRecorder("subgradient", alpha)
    start = time.perf_counter()
    status = Status.ITER_CAP
    for k in range(cfg.max_iter + 1):
        f = objective_float(p, x)
        d = dc_gradient(p, x)
        gn = float(np.linalg.norm(d))
        rec.add(f, gn, alpha * gn, alpha, time.perf_counter() - start)
        if not _finite(f, d):
            status = Status.DIVERGED
            break
        if gn <= cfg.tol:
            status = Status.CONVERGED
            break
        if k == cfg.max_iter:
            break
        x = x - alpha * d
    return rec.finish(x, status)


def backtracking_gd(p: DcProblem, x0, cfg: SolverConfig = SolverConfig()) -> SolveTrace:
    """Gradient descent with the step ``beta**i`` for the smallest ``i >= 0`` passing
    ``f(x - t grad f) <= f(x) - t/2 ||grad f||^2``.

    The final row records a zero step: no search is run once the loop stops.
    """
    _no_prox(p, "backtracking_gd")
    beta = cfg.beta
    x = p.check_point(x0).copy()
    rec = TraceRecorder("backtracking")
    start = time.perf_counter()
    status = Status.ITER_CAP
    f = objective_float(p, x)
    for k in range(cfg.max_iter + 1):
        d = dc_gradient(p, x)
        gn = float(np.linalg.norm(d))
        if not _finite(f, d):
            rec.add(f, gn, 0.0, 0.0, time.perf_counter() - start)
            status = Status.DIVERGED
            break
        if gn <= cfg.tol or k == cfg.max_iter:
            rec.add(f, gn, 0.0, 0.0, time.perf_counter() - start)
            if gn <= cfg.tol:
                status = Status.CONVERGED
            break
        gn2 = gn * gn
        t = 1.0
        for _ in range(MAX_BACKTRACKS + 1):
            x_new = x - t * d
            f_new = objective_float(p, x_new)
            if f_new <= f - 0.5 * t * gn2:
                break
            t *= beta
        else:
            rec.add(f, gn, 0.0, 0.0, time.perf_counter() - start)
            status = Status.DIVERGED
            break
        rec.add(f, gn, t * gn, t, time.perf_counter() - start)
        x, f = x_new, f_new
    return rec.finish(x, status, beta=beta)


def prox_dc(p: DcProblem, x0, cfg: SolverConfig = SolverConfig()) -> SolveTrace:
    """Proximal-type method: ``x <- prox_phi(x - alpha (grad g(x) - u), alpha)``.

    ``grad_norm`` holds the prox residual ``||x^k - x^{k+1}|| / alpha``.
    ``next_grad_norm[k]`` holds ``||grad g(x^{k+1}) - u^{k+1} + v^{k+1}||`` where
    ``v^{k+1} = (z^k - x^{k+1}) / alpha`` is the element of ``d phi(x^{k+1})``
    certified by the prox step.
    """
    if p.prox_map is None:
        raise UsageError(f"prox_dc needs a prox_map; {p.name} has none")
    alpha = cfg.step_for(p)
    x = p.check_point(x0).copy()
    rec = TraceRecorder("prox", alpha, prox=True)
    start = time.perf_counter()
    status = Status.ITER_CAP
    f = objective_float(p, x)
    grad = np.asarray(p.smooth_grad(x), dtype=float)
    u = np.asarray(p.convex_subgrad(x), dtype=float)
    for k in range(cfg.max_iter + 1):
        if not _finite(f, grad, u):
            rec.add(f, math.nan, math.nan, alpha, time.perf_counter() - start)
            status = Status.DIVERGED
            break
        z = x - alpha * (grad - u)
        try:
            x_new = np.asarray(p.prox_map(z, alpha), dtype=float)
        except (ArithmeticError, ValueError, np.linalg.LinAlgError):
            rec.add(f, math.nan, math.nan, alpha, time.perf_counter() - start)
            status = Status.DIVERGED
            break
        step = float(np.linalg.norm(x - x_new))
        rec.add(f, step / alpha, step, alpha, time.perf_counter() - start)
        if step / alpha <= cfg.tol:
            status = Status.CONVERGED
            break
        if k == cfg.max_iter:
            break
        x = x_new
        f = objective_float(p, x)
        grad = np.asarray(p.smooth_grad(x), dtype=float)
        u = np.asarray(p.convex_subgrad(x), dtype=float)
        v = (z - x) / alpha
        rec.set_last("next_grad_norm", float(np.linalg.norm(grad - u + v)))
    return rec.finish(x, status)


def frank_wolfe_dc(p: DcProblem, lmo: LinearMinOracle, x0,
                   cfg: SolverConfig = SolverConfig()) -> SolveTrace:
    """Frank-Wolfe type method with step ``min(G^k / c0, 1)``.

    ``c0`` must upper-bound the generalized curvature constant of ``g - h``
    over the feasible set for the rate guarantee to apply.
    """
    _no_prox(p, "frank_wolfe_dc")
    x = p.check_point(x0).copy()
    if lmo.contains is not None and not lmo.contains(x):
        raise UsageError("x0 is not in the feasible set of the oracle")
    c0 = cfg.c0
    rec = TraceRecorder("frank_wolfe", fw=True)
    start = time.perf_counter()
    status = Status.ITER_CAP
    for k in range(cfg.max_iter + 1):
        f = objective_float(p, x)
        c = dc_gradient(p, x)
        if not _finite(f, c):
            rec.add(f, math.nan, math.nan, math.nan, time.perf_counter() - start, fw_gap=math.nan)
            status = Status.DIVERGED
            break
        s = np.asarray(lmo(c), dtype=float)
        d = s - x
        gap = float(-(d @ c))
        gamma = min(max(gap, 0.0) / c0, 1.0)
        rec.add(f, float(np.linalg.norm(c)), gamma * float(np.linalg.norm(d)), gamma,
                time.perf_counter() - start, fw_gap=gap)
        if gap <= cfg.tol:
            status = Status.CONVERGED
            break
        if k == cfg.max_iter:
            break
        x = x + gamma * d
    return rec.finish(x, status, c0=c0)


def _majorant_solve(p, xk, uk, step, inner):
    """Proximal gradient on ``w -> g(w) - <uk, w> + phi(w)`` started at ``xk``.

    Returns ``(w, first_step_norm, iterations, capped)``; ``first_step_norm`` is
    the length of the first inner step, i.e. the prox residual of ``f`` at
    ``xk`` times ``step``.
    """
    w = xk
    first = None
    prox = p.prox_map
    for it in range(1, inner.inner_max_iter + 1):
        z = w - step * (np.asarray(p.smooth_grad(w), dtype=float) - uk)
        w_new = np.asarray(prox(z, step), dtype=float) if prox is not None else z
        move = float(np.linalg.norm(w_new - w))
        if first is None:
            first = move
        w = w_new
        if move / step <= inner.inner_tol:
            return w, first, it, False
    return w, first, inner.inner_max_iter, True


def cccp(p: DcProblem, x0, cfg: SolverConfig = SolverConfig(),
         inner: CccpConfig = CccpConfig()) -> SolveTrace:
    """Convex-concave procedure: minimize ``g(x) - h(x^k) - <u^k, x - x^k> + phi(x)``
    at each outer step.

    ``g`` must be convex (not checked).  The majorant is minimized by proximal
    gradient to ``inner.inner_tol`` on the inner residual; inner solves that hit
    ``inner.inner_max_iter`` are flagged in ``inner_capped`` and the outer loop
    carries on.
    """
    if p.has_prox_part and p.prox_map is None:
        raise UsageError(f"cccp needs a prox_map for the phi term of {p.name}")
    alpha = cfg.step_for(p)
    if inner.inner_step is not None:
        step = inner.inner_step
    elif p.smoothness is not None:
        step = 1.0 / p.smoothness
    else:
        raise UsageError("inner_step must be given when the problem has no smoothness constant")
    x = p.check_point(x0).copy()
    rec = TraceRecorder("cccp", alpha, cccp=True)
    start = time.perf_counter()
    status = Status.ITER_CAP
    total_inner = 0
    f = objective_float(p, x)
    for k in range(cfg.max_iter + 1):
        u = np.asarray(p.convex_subgrad(x), dtype=float)
        if not _finite(f, u):
            rec.add(f, math.nan, math.nan, alpha, time.perf_counter() - start,
                    inner_iters=total_inner)
            status = Status.DIVERGED
            break
        x_new, first, iters, capped = _majorant_solve(p, x, u, step, inner)
        total_inner += iters
        f_new = objective_float(p, x_new)
        h_x = float(p.convex_value(x))
        phi_new = float(p.prox_value(x_new)) if p.prox_value is not None else 0.0
        q_new = float(p.smooth_value(x_new)) - h_x - float(u @ (x_new - x)) + phi_new
        step_norm = float(np.linalg.norm(x - x_new))
        rec.add(f, first / step, step_norm, step, time.perf_counter() - start,
                inner_iters=total_inner, model_decrease=f - q_new, inner_capped=capped)
        if step_norm / alpha <= cfg.tol:
            status = Status.CONVERGED
            break
        if k == cfg.max_iter:
            break
        x, f = x_new, f_new
    return rec.finish(x, status, inner_step=step, inner_tol=inner.inner_tol)


def solve(algorithm: str, p: DcProblem, x0, cfg: SolverConfig = SolverConfig(),
          lmo: Optional[LinearMinOracle] = None, inner: Optional[CccpConfig] = None) -> SolveTrace:
    """Dispatch by name: subgradient, backtracking, prox, frank_wolfe, cccp."""
    if algorithm == "subgradient":
        return subgradient_dc(p, x0, cfg)
    if algorithm == "backtracking":
        return backtracking_gd(p, x0, cfg)
    if algorithm == "prox":
        return prox_dc(p, x0, cfg)
    if algorithm == "frank_wolfe":
        if lmo is None:
            raise UsageError("frank_wolfe needs a linear minimization oracle")
        return frank_wolfe_dc(p, lmo, x0, cfg)
    if algorithm == "cccp":
        return cccp(p, x0, cfg, inner or CccpConfig())
    raise UsageError(f"unknown algorithm {algorithm!r}")


ALGORITHMS = ("subgradient", "backtracking", "prox", "frank_wolfe", "cccp")
