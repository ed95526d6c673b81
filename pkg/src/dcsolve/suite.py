"""The diagnostics battery run by ``dcsolve check`` and the acceptance tests.

Each ``suite_*`` function builds its own seeded instances, runs the solvers
and returns a list of :class:`~dcsolve.diagnostics.CheckReport`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import diagnostics as dg
from .core import DcProblem, SolverConfig, Status, dc_gradient, objective_float
from .data import gen_mixture_samples, gen_regression, hemisphere, render_sfs, rng_for
from .problems import (
    BestSubsetInstance,
    MixtureInstance,
    SfsInstance,
    TukeyInstance,
    brute_force_best_subset,
    convex_subproblem_residual,
    default_lambda,
    make_best_subset,
    make_gaussian_mixture_nll,
    make_sfs,
    make_toy,
    make_tukey,
    with_box,
    with_l1,
)
from .solvers import CccpConfig, backtracking_gd, cccp, frank_wolfe_dc, lmo_box, prox_dc, solve

CheckReport = dg.CheckReport

__all__ = ["Builtin", "builtin_problems", "SUITES", "run_suite", "run_all"]


@dataclass
class Builtin:
    """A named problem with a start point, the algorithms it supports and the
    region used for sampled property checks."""

    problem: DcProblem
    x0: np.ndarray
    algorithms: tuple
    config: SolverConfig = field(default_factory=SolverConfig)
    # sampler(rng) -> point, for gradient and smoothness checks
    sampler: Optional[Callable] = None
    # constant for the weak-smoothness check on the sampled region
    weak_M: Optional[float] = None
    inner: CccpConfig = field(default_factory=CccpConfig)


def _tukey_instance(seed=0):
    rng = rng_for(seed, 11)
    Z = rng.standard_normal((60, 3))
    mu = np.array([1.0, -0.5, 0.25])
    y = Z @ mu + 0.1 * rng.standard_normal(60)
    # a handful of gross outliers
    y[:6] += rng.choice([-8.0, 8.0], size=6)
    return TukeyInstance(Z, y, lam=1.0)


def _best_subset_instance(seed=0, n=40, p=10, s=3, stream=12):
    ds = gen_regression(n, p, 0.5, s, noise_sd=0.5, seed=seed, stream=stream)
    return BestSubsetInstance(ds.X, ds.y, lam=default_lambda(n, p, 0.5), s=s), ds


def _sfs_instance(m=6, n=6, seed=0):
    z = hemisphere(m, n, height=1.0)
    return SfsInstance(render_sfs(z, (0.3, 0.2, 0.93)), light=(0.3, 0.2, 0.93)), z


def _mixture_instance(seed=0):
    y = gen_mixture_samples(200, 0.4, -1.0, 0.5, 1.5, 0.8, seed=seed, stream=13)
    return MixtureInstance(y, R0=10.0, R1=10.0, eps=1e-3)


def _box_sampler(lo, hi, d):
    def sample(rng):
        return rng.uniform(lo, hi, size=d)
    return sample


def builtin_problems(seed: int = 0) -> dict:
    """Every builtin problem, keyed by name."""
    rng = rng_for(seed, 10)
    out = {}
    out["quadratic"] = Builtin(
        make_toy("quadratic"), np.array([1.0, 1.0]),
        ("subgradient", "backtracking", "cccp", "frank_wolfe"),
        sampler=_box_sampler(-3, 3, 2), weak_M=4.0,
    )
    out["quadratic+l1"] = Builtin(
        with_l1(make_toy("quadratic", b=[2.0, -3.0]), 0.5), np.array([1.0, 1.0]),
        ("prox", "cccp"),
    )
    qdc = make_toy("quadratic", A=np.diag([2.0, 3.0, 5.0]), b=[1.0, -1.0, 0.5], eps=0.5)
    out["quadratic_dc"] = Builtin(
        qdc, np.array([2.0, -1.0, 1.0]), ("subgradient", "backtracking", "cccp"),
        sampler=_box_sampler(-3, 3, 3), weak_M=5.0,
    )
    out["quadratic_dc+l1"] = Builtin(with_l1(qdc, 0.3), np.array([2.0, -1.0, 1.0]), ("prox", "cccp"))
    out["strict_saddle"] = Builtin(
        make_toy("strict_saddle"), np.array([0.3, 1.2]), ("backtracking",),
        sampler=_box_sampler(-2, 2, 2), weak_M=12.0,
    )
    out["norm_power"] = Builtin(
        make_toy("norm_power", q=1.5), np.array([1.5, -2.0]),
        ("subgradient", "backtracking", "cccp"),
        sampler=_box_sampler(-3, 3, 2), weak_M=1.0,
    )
    out["abs_dc"] = Builtin(
        make_toy("abs_dc"), np.array([0.9]), ("subgradient", "cccp", "frank_wolfe"),
        sampler=_box_sampler(-2, 2, 1), weak_M=2.0,
    )
    out["abs_dc+box"] = Builtin(with_box(make_toy("abs_dc"), -0.3, 0.3), np.array([0.25]), ("prox",))
    tk = _tukey_instance(seed)
    tp = make_tukey(tk)
    out["tukey"] = Builtin(
        tp, np.zeros(3), ("subgradient", "backtracking"),
        config=SolverConfig(max_iter=300),
        sampler=lambda r: 2.0 * r.standard_normal(3), weak_M=tp.smoothness,
    )
    bs, _ = _best_subset_instance(seed)
    bp = make_best_subset(bs)
    out["best_subset"] = Builtin(
        bp, 0.1 * rng.standard_normal(bs.p), ("prox", "cccp"),
        config=SolverConfig(max_iter=300),
        sampler=lambda r: r.standard_normal(bs.p), weak_M=bp.smoothness,
        inner=CccpConfig(inner_max_iter=200),
    )
    si, _ = _sfs_instance()
    sp = make_sfs(si)
    out["sfs"] = Builtin(
        sp, 0.1 * rng.standard_normal(sp.dim), ("backtracking",),
        config=SolverConfig(max_iter=200),
        sampler=lambda r: 0.5 * r.standard_normal(sp.dim),
    )
    mi = _mixture_instance(seed)
    mp = make_gaussian_mixture_nll(mi)

    def mix_sampler(r):
        return np.array([r.normal(), -r.uniform(0.2, 2.0), r.normal(), -r.uniform(0.2, 2.0),
                         r.uniform(0.05, 0.95)])

    out["mixture"] = Builtin(
        mp, np.array([0.0, -0.5, 0.5, -0.5, 0.5]), ("prox",),
        config=SolverConfig(alpha=1e-3, max_iter=300),
        sampler=mix_sampler,
    )
    return out


def _run(b: Builtin, algo: str):
    if algo == "frank_wolfe":
        raise ValueError("frank_wolfe needs an oracle; handled separately")
    return solve(algo, b.problem, b.x0, b.config, inner=b.inner)


_DESCENT_ALGOS = ("subgradient", "backtracking", "prox", "cccp")


def suite_descent(seed: int = 0) -> list:
    """Per-iteration descent on every builtin problem x applicable algorithm."""
    reports = []
    for name, b in builtin_problems(seed).items():
        for algo in b.algorithms:
            if algo not in _DESCENT_ALGOS:
                continue
            tr = _run(b, algo)
            r = dg.check_descent(tr, algo)
            ok = r.passed and tr.status is not Status.DIVERGED
            reports.append(replace(r, name=f"{r.name} on {name}", passed=ok,
                                   detail=f"{len(tr)} rows, {tr.status}"))
    return reports


def suite_rate(seed: int = 0) -> list:
    reports = []
    q = make_toy("quadratic")
    cfg = SolverConfig(alpha=0.25, max_iter=100, tol=0.0)
    tr = solve("subgradient", q, [1.0, 1.0], cfg)
    reports.append(_tag(dg.check_rate_bound(tr, "T1", {"alpha": 0.25}), "quadratic diag(1,4)"))

    b = builtin_problems(seed)["best_subset"]
    tr = prox_dc(b.problem, b.x0, b.config)
    reports.append(_tag(dg.check_rate_bound(tr, "T2-step", {"alpha": tr.alpha}), "best_subset"))

    qb = builtin_problems(seed)["quadratic_dc+l1"]
    p = qb.problem
    tr = prox_dc(p, qb.x0, SolverConfig(max_iter=200))
    consts = {"alpha": tr.alpha, "M_g": p.smoothness, "M_h": p.convex_smoothness}
    reports.append(_tag(dg.check_rate_bound(tr, "T2-step", consts), "quadratic_dc+l1"))
    reports.append(_tag(dg.check_rate_bound(tr, "T2-grad", consts), "quadratic_dc+l1"))
    reports.append(_tag(dg.check_next_gradient_bound(tr, p.smoothness, p.convex_smoothness),
                        "quadratic_dc+l1"))

    # box-constrained quadratic, c0 = M * diam^2
    A = np.diag([1.0, 3.0])
    fq = make_toy("quadratic", A=A, b=[2.5, -1.0])
    lmo = lmo_box([-1.0, -1.0], [1.0, 1.0])
    c0 = 3.0 * lmo.diameter ** 2
    tr = frank_wolfe_dc(fq, lmo, np.zeros(2), SolverConfig(c0=c0, max_iter=400, tol=0.0))
    reports.append(_tag(dg.check_rate_bound(tr, "T3", {"c0": c0}), "box quadratic"))
    # nonconvex f = x^2 - |x| on [-1, 1]
    ab = make_toy("abs_dc")
    lmo1 = lmo_box([-1.0], [1.0])
    tr = frank_wolfe_dc(ab, lmo1, [0.8], SolverConfig(c0=2.0 * 4.0, max_iter=400, tol=0.0))
    reports.append(_tag(dg.check_rate_bound(tr, "T3", {"c0": 8.0}), "abs_dc on [-1,1]"))

    for key, mu in (("quadratic_dc", 2.0), ("norm_power", 1.0)):
        bb = builtin_problems(seed)[key]
        tr = cccp(bb.problem, bb.x0, SolverConfig(max_iter=200), CccpConfig())
        reports.append(_tag(dg.check_rate_bound(tr, "P1-strong", {"mu": mu}), key))
    return reports


def _tag(r: CheckReport, where: str) -> CheckReport:
    return replace(r, name=f"{r.name} on {where}")


def suite_gradient(seed: int = 0) -> list:
    """Analytic against central-difference gradients of ``g - h`` at 20 random points."""
    reports = []
    rng = rng_for(seed, 20)
    for name, b in builtin_problems(seed).items():
        if b.sampler is None or "+" in name:
            continue
        p = b.problem
        pts = [b.sampler(rng) for _ in range(20)]

        def fval(x, p=p):
            return float(p.smooth_value(x)) - float(p.convex_value(x))

        reports.append(dg.gradient_check(fval, lambda x, p=p: dc_gradient(p, x), pts,
                                         rtol=1e-5, name=f"gradient[{name}]"))
    return reports


def fixed_point_extended(seq, trace, length: int) -> np.ndarray:
    """Extend a residual sequence with zeros when the run stopped at an exact fixed point.

    Continuing the iteration from an exact fixed point reproduces it, so the
    zeros are what the solver would have recorded.
    """
    seq = np.asarray(seq, dtype=float)
    if seq.size >= length:
        return seq[:length]
    if trace.status is not Status.CONVERGED or seq[-1] != 0.0:
        raise ValueError("run stopped early without reaching an exact fixed point")
    return np.concatenate([seq, np.zeros(length - seq.size)])


def kl_runs(seed: int = 0):
    """The two runs used for the fast-rate checks: plain gradient steps on a
    strongly convex quadratic, and prox steps with an l1 term on another."""
    q = make_toy("quadratic", A=np.diag([1.0, 2.0, 4.0]), b=[1.0, 1.0, 1.0])
    t1 = solve("subgradient", q, [3.0, -2.0, 1.0], SolverConfig(max_iter=1000, tol=0.0))
    ql = with_l1(make_toy("quadratic", A=np.diag([1.0, 2.0, 4.0]), b=[2.0, 0.2, -3.0]), 0.5)
    t2 = prox_dc(ql, np.array([3.0, -2.0, 1.0]), SolverConfig(max_iter=1000, tol=0.0))
    return (q, t1), (ql, t2)


def suite_kl(seed: int = 0) -> list:
    reports = []
    for label, (p, tr) in zip(("gradient", "prox+l1"), kl_runs(seed)):
        g = fixed_point_extended(tr.grad_norm, tr, 1001)
        fit = dg.fit_loglog_slope(dg.running_arith_mean(g), 10, 1000)
        reports.append(CheckReport(f"kl-slope[{label}]", fit.slope + 0.9, fit.slope <= -0.9, -1,
                                   f"slope={fit.slope:.4f} r2={fit.r2:.4f}"))
        reports.append(_tag(dg.check_rate_bound(tr, "T1", {"alpha": tr.alpha}), f"kl run {label}"))
    return reports


def suite_amgm(seed: int = 0) -> list:
    reports = []
    for label, (p, tr) in zip(("gradient", "prox+l1"), kl_runs(seed)):
        seq = tr.grad_norm
        am = dg.running_arith_mean(seq)
        gm = dg.running_geo_mean(seq)
        mn = np.minimum.accumulate(seq)
        reports.append(dg._report(f"am-gm[{label}]", gm - am, 1e-12))
        reports.append(dg._report(f"min<=means[{label}]", np.maximum(mn - gm, mn - am), 1e-12))
    return reports


def saddle_runs(n: int = 100, seed: int = 0):
    p = make_toy("strict_saddle")
    rng = rng_for(seed, 30)
    cfg = SolverConfig(max_iter=1000, tol=1e-8)
    return [backtracking_gd(p, rng.uniform(-2.0, 2.0, size=2), cfg) for _ in range(n)]


def suite_saddle(seed: int = 0) -> list:
    """100 random starts of backtracking on the strict-saddle toy must all end at a minimum."""
    runs = saddle_runs(100, seed)
    minima = np.array([[1.0, 0.0], [-1.0, 0.0]])
    worst_g = max(float(t.grad_norm[-1]) for t in runs)
    dist = [float(np.min(np.linalg.norm(minima - t.x_final, axis=1))) for t in runs]
    near_saddle = sum(float(np.linalg.norm(t.x_final)) < 1e-3 for t in runs)
    return [
        CheckReport("saddle: final grad <= 1e-6", worst_g - 1e-6, worst_g <= 1e-6, -1),
        CheckReport("saddle: final x within 1e-3 of a minimum", max(dist) - 1e-3, max(dist) <= 1e-3, -1),
        CheckReport("saddle: no run ends at the origin", float(near_saddle), near_saddle == 0, -1,
                    f"{near_saddle} of {len(runs)}"),
    ]


def curvature_setup(M: float = 5.0, mu: float = 2.0):
    A = M * np.eye(2)
    p = make_toy("quadratic", A=A, eps=mu)
    lo, hi = -np.ones(2), np.ones(2)
    D = float(np.linalg.norm(hi - lo))

    def sampler(rng):
        return rng.uniform(lo, hi), rng.uniform(lo, hi)

    return p, sampler, (M - mu) * D ** 2


def suite_curvature(seed: int = 0, n: int = 100_000) -> list:
    p, sampler, bound = curvature_setup()
    est = dg.estimate_curvature(p, sampler, n, seed)
    return [
        CheckReport("curvature <= (M-mu) D^2", est - bound, est <= bound + 1e-9, -1,
                    f"estimate={est:.6f} bound={bound:.6f}"),
        CheckReport("curvature >= 0.5 (M-mu) D^2", 0.5 * bound - est, est >= 0.5 * bound, -1),
    ]


def suite_smoothness(seed: int = 0) -> list:
    reports = [
        dg.check_weak_smoothness(lambda x: -2.0 * x, lambda r: r.uniform(-3, 3, 3), 0.0, 2000, seed,
                                 name="weak-smoothness[-||x||^2]"),
        dg.check_weak_smoothness(lambda x: 4.0 * x ** 3, lambda r: r.uniform(-1, 1, 1), 12.0, 2000,
                                 seed, name="weak-smoothness[x^4]"),
    ]
    fail = dg.check_weak_smoothness(lambda x: 4.0 * x ** 3, lambda r: r.uniform(-1, 1, 1), 1.0, 2000,
                                     seed, name="weak-smoothness[x^4]")
    reports.append(CheckReport(f"{fail.name} rejects M=1", fail.worst_violation, not fail.passed,
                               fail.k_worst))
    for name, b in builtin_problems(seed).items():
        if b.weak_M is None or b.sampler is None:
            continue
        p = b.problem
        reports.append(dg.check_weak_smoothness(lambda x, p=p: dc_gradient(p, x), b.sampler,
                                                b.weak_M, 2000, seed, name=f"weak-smoothness[{name}]"))
    return reports


def stationarity_runs(seed: int = 0, count: int = 10):
    out = []
    for i in range(count):
        inst, ds = _best_subset_instance(seed, n=40, p=10, s=3, stream=100 + i)
        p = make_best_subset(inst)
        tr = prox_dc(p, np.zeros(10), SolverConfig(max_iter=100_000, tol=1e-8))
        out.append((inst, tr))
    return out


def suite_stationarity(seed: int = 0) -> list:
    reports = []
    for i, (inst, tr) in enumerate(stationarity_runs(seed)):
        xbar = tr.x_final
        res = convex_subproblem_residual(xbar, inst)
        supp = np.flatnonzero(xbar)
        if supp.size:
            coef, *_ = np.linalg.lstsq(inst.X[:, supp], inst.y, rcond=None)
            r = inst.y - inst.X[:, supp] @ coef
        else:
            r = inst.y
        refit = float(r @ r)
        _, _, best = brute_force_best_subset(inst.X, inst.y, inst.s)
        ok = res <= 1e-6 and refit >= best - 1e-9 and tr.status is Status.CONVERGED
        reports.append(CheckReport(f"best-subset stationarity[{i}]", res - 1e-6, ok, len(tr) - 1,
                                   f"residual={res:.2e} refit={refit:.6f} optimum={best:.6f}"))
    return reports


def sfs_roundtrip(m: int = 32, n: int = 32, iters: int = 500, seed: int = 0):
    # flat z is stationary under overhead light, hence the random start
    light = (0.0, 0.0, 1.0)
    z = hemisphere(m, n, height=4.0)
    img = render_sfs(z, light)
    p = make_sfs(SfsInstance(img, light=light))
    z0 = 0.1 * rng_for(seed, 40).standard_normal(m * n)
    tr = backtracking_gd(p, z0, SolverConfig(max_iter=iters, tol=0.0))
    return p, z, tr


def suite_sfs(seed: int = 0) -> list:
    p, z, tr = sfs_roundtrip(seed=seed)
    f = tr.f_val
    at_truth = objective_float(p, z.ravel())
    ratio = f[-1] / f[0]
    inc = float(np.max(np.diff(f))) if f.size > 1 else -math.inf
    return [
        CheckReport("sfs: objective at generating surface ~ 0", at_truth, at_truth <= 1e-18 * (p.dim), -1),
        CheckReport("sfs: final <= 1e-2 initial", ratio - 1e-2, ratio <= 1e-2, len(f) - 1,
                    f"{f[0]:.4e} -> {f[-1]:.4e} in {len(f) - 1} iterations"),
        CheckReport("sfs: monotone", inc, inc <= 0.0, int(np.argmax(np.diff(f))) if f.size > 1 else -1),
    ]


SUITES = {
    "descent": suite_descent,
    "rate": suite_rate,
    "gradient": suite_gradient,
    "kl": suite_kl,
    "amgm": suite_amgm,
    "saddle": suite_saddle,
    "curvature": suite_curvature,
    "smoothness": suite_smoothness,
    "stationarity": suite_stationarity,
    "sfs": suite_sfs,
}


def run_suite(name: str, seed: int = 0) -> list:
    return SUITES[name](seed)


def run_all(seed: int = 0) -> list:
    out = []
    for name in SUITES:
        out.extend(run_suite(name, seed))
    return out
