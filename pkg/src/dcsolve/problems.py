"""Concrete problem builders: best subset selection, Tukey robust regression,
shape from shading, a two-component Gaussian mixture likelihood, and toys.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .core import (
    INFEASIBLE,
    DcProblem,
    UsageError,
    project_box,
    prox_l1,
    topk_abs_subgradient,
    topk_abs_value,
)

__all__ = [
    "BestSubsetInstance",
    "TukeyInstance",
    "SfsInstance",
    "MixtureInstance",
    "make_best_subset",
    "default_lambda",
    "convex_subproblem_residual",
    "brute_force_best_subset",
    "tukey_rho",
    "tukey_rho_prime",
    "make_tukey",
    "sfs_coefficients",
    "make_sfs",
    "make_gaussian_mixture_nll",
    "mixture_project",
    "make_toy",
    "with_l1",
    "with_box",
    "TOYS",
]

TIE_TOL = 1e-12
BRUTE_FORCE_MAX_P = 15


def _lambda_max_gram(A) -> float:
    """Largest eigenvalue of ``A^T A``."""
    s = np.linalg.svd(np.asarray(A, dtype=float), compute_uv=False)
    return float(s[0] ** 2) if s.size else 0.0


# best subset selection


@dataclass(frozen=True, eq=False)
class BestSubsetInstance:
    X: np.ndarray
    y: np.ndarray
    lam: float
    s: int

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise UsageError(f"design {X.shape} and response {y.shape} do not match")
        if self.lam < 0:
            raise UsageError("lam must be nonnegative")
        if not 1 <= self.s <= X.shape[1]:
            raise UsageError(f"s must lie in [1, {X.shape[1]}], got {self.s}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def p(self) -> int:
        return self.X.shape[1]


def default_lambda(n: int, p: int, noise_sd: float) -> float:
    """``2 sigma sqrt(2 n log p)``: the usual ``sigma sqrt(log p / n)`` level for a
    mean-squared loss, rescaled to the unnormalized ``||y - X x||^2``."""
    return 2.0 * noise_sd * math.sqrt(2.0 * n * math.log(max(p, 2)))


def make_best_subset(inst: BestSubsetInstance) -> DcProblem:
    """``||y - X x||^2 - lam * topk_s(|x|) + lam * ||x||_1``.

    The difference of the two penalty terms is ``lam`` times the sum of the
    ``p - s`` smallest magnitudes, which vanishes exactly on ``s``-sparse
    vectors.
    """
    X, y, lam, s = inst.X, inst.y, float(inst.lam), int(inst.s)

    def gval(x):
        r = y - X @ x
        return float(r @ r)

    def ggrad(x):
        return 2.0 * (X.T @ (X @ x - y))

    def hval(x):
        return lam * topk_abs_value(x, s)

    def hsub(x):
        return lam * topk_abs_subgradient(x, s)

    def phival(x):
        return lam * float(np.sum(np.abs(x)))

    def prox(z, t):
        return prox_l1(z, t, lam)

    return DcProblem(
        dim=inst.p,
        smooth_value=gval,
        smooth_grad=ggrad,
        convex_value=hval,
        convex_subgrad=hsub,
        prox_value=phival,
        prox_map=prox,
        smoothness=max(2.0 * _lambda_max_gram(X), 1e-300),
        name=f"best_subset(s={s})",
    )


def convex_subproblem_residual(xbar, inst: BestSubsetInstance) -> float:
    """Distance from 0 to the subdifferential of the convex relaxation at ``xbar``.

    The relaxation is ``||y - X x||^2 + lam ||x||_1 - lam <v, x>`` with ``v``
    the top-``s`` sign vector of ``xbar``.  A value near zero certifies that
    ``xbar`` minimizes it.  Requires a strict gap between the ``s``-th and
    ``(s+1)``-th largest magnitudes of ``xbar``.
    """
    xbar = np.asarray(xbar, dtype=float)
    if xbar.shape != (inst.p,):
        raise UsageError(f"expected a vector of length {inst.p}")
    s, lam = inst.s, float(inst.lam)
    if s < inst.p:
        mags = np.sort(np.abs(xbar))[::-1]
        if mags[s - 1] - mags[s] <= TIE_TOL:
            raise UsageError(
                f"no gap at the {s}-th largest magnitude ({mags[s - 1]:.3e} vs {mags[s]:.3e})"
            )
    a = 2.0 * (inst.X.T @ (inst.X @ xbar - inst.y)) - lam * topk_abs_subgradient(xbar, s)
    nz = xbar != 0
    res = np.where(nz, a + lam * np.sign(xbar), np.sign(a) * np.maximum(np.abs(a) - lam, 0.0))
    return float(np.linalg.norm(res))


def brute_force_best_subset(X, y, s: int):
    """Exact ``min ||y - X x||^2`` over ``||x||_0 <= s`` by enumeration.

    Returns ``(support, coef, objective)`` with ``support`` a sorted tuple of
    column indices and ``coef`` the full-length coefficient vector.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if p > BRUTE_FORCE_MAX_P:
        raise UsageError(f"refusing to enumerate supports for p={p} > {BRUTE_FORCE_MAX_P}")
    if not 1 <= s <= p:
        raise UsageError(f"s must lie in [1, {p}]")
    best = (None, None, math.inf)
    # supersets never fit worse, so supports of size exactly s suffice
    for support in itertools.combinations(range(p), s):
        cols = X[:, support]
        coef, *_ = np.linalg.lstsq(cols, y, rcond=None)
        r = y - cols @ coef
        obj = float(r @ r)
        if obj < best[2]:
            full = np.zeros(p)
            full[list(support)] = coef
            best = (tuple(support), full, obj)
    return best


# Tukey bi-weight regression


@dataclass(frozen=True, eq=False)
class TukeyInstance:
    Z: np.ndarray
    y: np.ndarray
    lam: float = 1.0

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if Z.ndim != 2 or Z.shape[0] != y.shape[0] or Z.shape[0] < 1:
            raise UsageError("Z must be n x d with n = len(y) >= 1")
        if not self.lam > 0:
            raise UsageError("lam must be positive")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "y", y)


def tukey_rho(t, lam: float = 1.0):
    u = np.asarray(t, dtype=float) / lam
    inside = np.abs(u) <= 1.0
    return np.where(inside, 1.0 - (1.0 - np.minimum(u * u, 1.0)) ** 3, 1.0)


def tukey_rho_prime(t, lam: float = 1.0):
    t = np.asarray(t, dtype=float)
    u = t / lam
    w = np.maximum(1.0 - u * u, 0.0)
    return 6.0 * t / lam ** 2 * w * w


def make_tukey(inst: TukeyInstance) -> DcProblem:
    """Mean Tukey loss of the residuals ``y - Z mu``.

    The smoothness constant uses the bound ``|rho''| <= 36 / lam^2``.
    """
    Z, y, lam = inst.Z, inst.y, float(inst.lam)
    n = Z.shape[0]

    def gval(mu):
        return float(np.mean(tukey_rho(y - Z @ mu, lam)))

    def ggrad(mu):
        return -(Z.T @ tukey_rho_prime(y - Z @ mu, lam)) / n

    return DcProblem(
        dim=Z.shape[1],
        smooth_value=gval,
        smooth_grad=ggrad,
        smoothness=36.0 / lam ** 2 * _lambda_max_gram(Z) / n,
        lower_bound=0.0,
        name="tukey",
    )


# shape from shading


@dataclass(frozen=True, eq=False)
class SfsInstance:
    """Intensity image plus light direction and pixel coordinates.

    ``xg``/``yg`` default to column and row indices.
    """

    intensity: np.ndarray
    light: tuple = (0.0, 0.0, 1.0)
    xg: np.ndarray = None
    yg: np.ndarray = None

    def __post_init__(self):
        img = np.asarray(self.intensity, dtype=float)
        if img.ndim != 2 or img.shape[0] < 2 or img.shape[1] < 2:
            raise UsageError(f"shape from shading needs at least a 2 x 2 grid, got {img.shape}")
        light = np.asarray(self.light, dtype=float)
        if light.shape != (3,):
            raise UsageError("light must be a 3-vector")
        m, n = img.shape
        yy, xx = np.mgrid[0:m, 0:n].astype(float)
        xg = xx if self.xg is None else np.asarray(self.xg, dtype=float)
        yg = yy if self.yg is None else np.asarray(self.yg, dtype=float)
        if xg.shape != img.shape or yg.shape != img.shape:
            raise UsageError("coordinate grids must match the image shape")
        object.__setattr__(self, "intensity", img)
        object.__setattr__(self, "light", tuple(float(v) for v in light))
        object.__setattr__(self, "xg", xg)
        object.__setattr__(self, "yg", yg)

    @property
    def shape(self):
        return self.intensity.shape


def sfs_coefficients(xg, yg):
    """Per-cell coefficients mapping the right/down height differences to normal slopes.

    With ``d1 = z[i, j+1] - z[i, j]`` and ``d2 = z[i+1, j] - z[i, j]``:
    ``nx = ax1*d1 + ax2*d2`` and ``ny = ay1*d1 + ay2*d2``.
    """
    xg = np.asarray(xg, dtype=float)
    yg = np.asarray(yg, dtype=float)
    dx1 = xg[:-1, 1:] - xg[:-1, :-1]
    dy1 = yg[:-1, 1:] - yg[:-1, :-1]
    dx2 = xg[1:, :-1] - xg[:-1, :-1]
    dy2 = yg[1:, :-1] - yg[:-1, :-1]
    det = dx1 * dy2 - dx2 * dy1
    if np.any(det == 0) or not np.all(np.isfinite(det)):
        raise UsageError("degenerate coordinate grid (zero cell determinant)")
    return -dy2 / det, dy1 / det, -dx2 / det, dx1 / det


def make_sfs(inst: SfsInstance) -> DcProblem:
    """Quartic shading mismatch over the ``(m-1) x (n-1)`` cells, as a function
    of the flattened height map.

    No global smoothness constant exists; solve with backtracking.
    """
    m, n = inst.shape
    ax1, ax2, ay1, ay2 = (np.ascontiguousarray(a) for a in sfs_coefficients(inst.xg, inst.yg))
    i2 = np.ascontiguousarray(inst.intensity[:-1, :-1] ** 2)
    l1, l2, l3 = inst.light
    kern = kernels.sfs_value_grad

    def gval(z):
        return kern(z.reshape(m, n), i2, ax1, ax2, ay1, ay2, l1, l2, l3, False)[0]

    def ggrad(z):
        return kern(z.reshape(m, n), i2, ax1, ax2, ay1, ay2, l1, l2, l3, True)[1].ravel()

    return DcProblem(dim=m * n, smooth_value=gval, smooth_grad=ggrad, lower_bound=0.0,
                     name=f"sfs({m}x{n})")


# Gaussian mixture likelihood


@dataclass(frozen=True, eq=False)
class MixtureInstance:
    """Samples and constraint set for the mixture likelihood.

    Parameters are ``theta = (eta0_1, eta0_2, eta1_1, eta1_2, pi)`` with each
    ``eta`` the natural parameter of a Gaussian for the statistic ``(y, y^2)``.
    """

    samples: np.ndarray
    R0: float = 10.0
    R1: float = 10.0
    eps: float = 1e-3

    def __post_init__(self):
        y = np.asarray(self.samples, dtype=float).ravel()
        if y.size < 1:
            raise UsageError("need at least one sample")
        if not (self.R0 > 0 and self.R1 > 0 and self.eps > 0):
            raise UsageError("radii and eps must be positive")
        if self.eps >= min(self.R0, self.R1):
            raise UsageError("eps must be smaller than both radii")
        object.__setattr__(self, "samples", y)


def _log_partition(eta):
    e1, e2 = eta
    return -e1 * e1 / (4.0 * e2) - 0.5 * math.log(-2.0 * e2)


def _log_partition_grad(eta):
    e1, e2 = eta
    return np.array([-e1 / (2.0 * e2), e1 * e1 / (4.0 * e2 * e2) - 1.0 / (2.0 * e2)])


def mixture_project(theta, inst: MixtureInstance) -> np.ndarray:
    """Blockwise projection onto the feasible set of ``inst``."""
    theta = np.asarray(theta, dtype=float)
    out = np.empty(5)
    out[0:2] = kernels.dykstra_ball_halfspace(theta[0:2], inst.R0, inst.eps)
    out[2:4] = kernels.dykstra_ball_halfspace(theta[2:4], inst.R1, inst.eps)
    out[4] = min(max(theta[4], 0.0), 1.0)
    return out


def _mixture_feasible(theta, inst, tol=1e-9):
    return (np.linalg.norm(theta[0:2]) <= inst.R0 + tol
            and np.linalg.norm(theta[2:4]) <= inst.R1 + tol
            and theta[1] <= -inst.eps + tol
            and theta[3] <= -inst.eps + tol
            and -tol <= theta[4] <= 1.0 + tol)


def make_gaussian_mixture_nll(inst: MixtureInstance) -> DcProblem:
    """Negative log-likelihood of a two-component Gaussian mixture in natural
    parameters, with the feasible set as the nonsmooth indicator part.

    The base-measure constant ``n log sqrt(2 pi)`` is dropped.
    """
    y = inst.samples
    stats = np.stack([y, y * y], axis=1)

    def _logs(theta):
        e0, e1, pi = theta[0:2], theta[2:4], theta[4]
        if e0[1] >= 0 or e1[1] >= 0 or not 0.0 <= pi <= 1.0:
            return None
        l0 = stats @ e0 - _log_partition(e0)
        l1 = stats @ e1 - _log_partition(e1)
        with np.errstate(divide="ignore"):
            lw = np.log([pi, 1.0 - pi])
        return l0, l1, lw

    def gval(theta):
        logs = _logs(theta)
        if logs is None:
            return math.inf
        l0, l1, lw = logs
        return float(-np.sum(logsumexp(np.stack([l0 + lw[0], l1 + lw[1]]), axis=0)))

    def ggrad(theta):
        logs = _logs(theta)
        if logs is None:
            return np.full(5, np.nan)
        l0, l1, lw = logs
        m = np.maximum(l0, l1)
        e0 = np.exp(l0 - m)
        e1 = np.exp(l1 - m)
        pi = theta[4]
        mix = pi * e0 + (1.0 - pi) * e1
        r0 = pi * e0 / mix
        r1 = 1.0 - r0
        out = np.empty(5)
        out[0:2] = -(r0 @ stats - r0.sum() * _log_partition_grad(theta[0:2]))
        out[2:4] = -(r1 @ stats - r1.sum() * _log_partition_grad(theta[2:4]))
        out[4] = -float(np.sum((e0 - e1) / mix))
        return out

    def phival(theta):
        return 0.0 if _mixture_feasible(theta, inst) else INFEASIBLE

    def prox(z, t):
        return mixture_project(z, inst)

    return DcProblem(dim=5, smooth_value=gval, smooth_grad=ggrad, prox_value=phival,
                     prox_map=prox, name="gaussian_mixture")


# toys


def _toy_quadratic(A=None, b=None, eps=0.0):
    A = np.diag([1.0, 4.0]) if A is None else np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[0]
    b = np.zeros(d) if b is None else np.asarray(b, dtype=float)
    if A.shape != (d, d) or b.shape != (d,):
        raise UsageError("quadratic needs a square A and matching b")
    if not np.allclose(A, A.T):
        raise UsageError("A must be symmetric")
    evals = np.linalg.eigvalsh(A)
    if evals[0] < -1e-12:
        raise UsageError("A must be positive semidefinite")
    if eps < 0:
        raise UsageError("eps must be nonnegative")
    lower = None
    if eps == 0 and evals[0] > 0:
        lower = float(-0.5 * b @ np.linalg.solve(A, b))
    kw = {}
    if eps > 0:
        kw = dict(
            convex_value=lambda x: 0.5 * eps * float(x @ x),
            convex_subgrad=lambda x: eps * np.asarray(x, dtype=float),
            convex_smoothness=float(eps),
        )
    return DcProblem(
        dim=d,
        smooth_value=lambda x: 0.5 * float(x @ A @ x) - float(b @ x),
        smooth_grad=lambda x: A @ x - b,
        smoothness=max(float(evals[-1]), 1e-300),
        lower_bound=lower,
        name="quadratic" if eps == 0 else f"quadratic_dc(eps={eps:g})",
        **kw,
    )


def _toy_strict_saddle():
    return DcProblem(
        dim=2,
        smooth_value=lambda v: v[0] ** 4 / 4.0 + v[1] ** 2 / 2.0,
        smooth_grad=lambda v: np.array([v[0] ** 3, v[1]]),
        convex_value=lambda v: v[0] ** 2 / 2.0,
        convex_subgrad=lambda v: np.array([v[0], 0.0]),
        convex_smoothness=1.0,
        lower_bound=-0.25,
        name="strict_saddle",
    )


def _toy_norm_power(q=1.5, mu=1.0, dim=2):
    if not 1 < q < 2:
        raise UsageError("q must lie in (1, 2)")
    if not mu > 0:
        raise UsageError("mu must be positive")

    def hsub(x):
        r = float(np.linalg.norm(x))
        if r == 0:
            return np.zeros_like(x, dtype=float)
        return q * r ** (q - 2.0) * np.asarray(x, dtype=float)

    return DcProblem(
        dim=dim,
        smooth_value=lambda x: 0.5 * mu * float(x @ x),
        smooth_grad=lambda x: mu * np.asarray(x, dtype=float),
        convex_value=lambda x: float(np.linalg.norm(x)) ** q,
        convex_subgrad=hsub,
        smoothness=float(mu),
        name=f"norm_power(q={q:g})",
    )


def _toy_abs_dc():
    return DcProblem(
        dim=1,
        smooth_value=lambda x: float(x[0] ** 2),
        smooth_grad=lambda x: 2.0 * np.asarray(x, dtype=float),
        convex_value=lambda x: abs(float(x[0])),
        convex_subgrad=lambda x: np.sign(np.asarray(x, dtype=float)),
        smoothness=2.0,
        lower_bound=-0.25,
        name="abs_dc",
    )


TOYS = {
    "quadratic": _toy_quadratic,
    "strict_saddle": _toy_strict_saddle,
    "norm_power": _toy_norm_power,
    "abs_dc": _toy_abs_dc,
}


def make_toy(name: str, **params) -> DcProblem:
    """Build a toy problem.

    ``quadratic``      ``1/2 x'Ax - b'x``, optionally minus ``eps/2 ||x||^2``
                       (params ``A``, ``b``, ``eps``; default ``A = diag(1, 4)``)
    ``strict_saddle``  ``x^4/4 - x^2/2 + y^2/2``: saddle at the origin, minima at ``(+-1, 0)``
    ``norm_power``     ``mu/2 ||x||^2 - ||x||^q`` (params ``q``, ``mu``, ``dim``)
    ``abs_dc``         ``x^2 - |x|``
    """
    try:
        builder = TOYS[name]
    except KeyError:
        raise UsageError(f"unknown toy {name!r}; choose from {sorted(TOYS)}") from None
    try:
        return builder(**params)
    except TypeError as exc:
        raise UsageError(f"bad parameters for toy {name!r}: {exc}") from None


def with_l1(p: DcProblem, lam: float) -> DcProblem:
    """Add ``lam * ||x||_1`` as the prox term of ``p``."""
    if lam < 0:
        raise UsageError("lam must be nonnegative")
    if p.has_prox_part:
        raise UsageError(f"{p.name} already has a prox term")
    return replace(
        p,
        prox_value=lambda x: lam * float(np.sum(np.abs(x))),
        prox_map=lambda z, t: prox_l1(z, t, lam),
        lower_bound=None,
        name=f"{p.name}+l1({lam:g})",
    )


def with_box(p: DcProblem, lo, hi) -> DcProblem:
    """Restrict ``p`` to the box ``[lo, hi]`` through an indicator prox term."""
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (p.dim,)).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (p.dim,)).copy()
    if np.any(lo > hi):
        raise UsageError("box lower bound exceeds upper bound")
    if p.has_prox_part:
        raise UsageError(f"{p.name} already has a prox term")

    def phival(x):
        return 0.0 if np.all(x >= lo) and np.all(x <= hi) else INFEASIBLE

    return replace(
        p,
        prox_value=phival,
        prox_map=lambda z, t: project_box(z, lo, hi),
        lower_bound=None,
        name=f"{p.name}+box",
    )
