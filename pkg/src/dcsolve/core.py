"""Problem abstraction, solver traces and exact prox/projection primitives.

Objectives have the form ``f = g - h + phi`` where ``g`` is smooth, ``h`` is
convex and continuous and ``phi`` is proper, convex and lower
semicontinuous.  A :class:`DcProblem` bundles the oracles for the three
pieces; every solver in :mod:`dcsolve.solvers` consumes one and returns a
:class:`SolveTrace`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels


class UsageError(ValueError):
    """Raised when an operation is called outside its preconditions."""


class _Infeasible:
    """Marker for ``phi(x) = +inf``.

    Kept distinct from a float so that ``g - h + phi`` is never formed with an
    infinite term (``inf - inf`` would give NaN).  Converts to ``math.inf``.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFEASIBLE"

    def __float__(self):
        return math.inf

    def __eq__(self, other):
        return other is self or (isinstance(other, float) and other == math.inf)

    def __hash__(self):
        return hash(math.inf)

    def __gt__(self, other):
        return float(other) < math.inf

    def __ge__(self, other):
        return True

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return self == other


INFEASIBLE = _Infeasible()


def is_infeasible(value) -> bool:
    return value is INFEASIBLE or (isinstance(value, float) and value == math.inf)


def _zero_value(x):
    return 0.0


def _zero_grad(x):
    return np.zeros_like(x, dtype=float)


@dataclass(frozen=True)
class DcProblem:
    """Oracle bundle for ``f = g - h + phi``.

    Parameters
    ----------
    dim : int
        Ambient dimension.
    smooth_value, smooth_grad : callable
        Value and gradient of the smooth part ``g``.
    convex_value, convex_subgrad : callable, optional
        Value of ``h`` and a deterministic element of its subdifferential.
        Default to ``h = 0``.
    prox_value : callable, optional
        Value of ``phi``; may return :data:`INFEASIBLE` (or ``inf``).
    prox_map : callable, optional
        ``(z, t) -> argmin_w phi(w) + ||w - z||^2 / (2 t)``.
    smoothness : float, optional
        Lipschitz constant ``M_g`` of ``grad g``.
    convex_smoothness : float, optional
        Lipschitz constant of ``grad h`` when ``h`` is differentiable.
    lower_bound : float, optional
        Known minimum value of ``f`` (toys only).
    """

    dim: int
    smooth_value: Callable
    smooth_grad: Callable
    convex_value: Callable = _zero_value
    convex_subgrad: Callable = _zero_grad
    prox_value: Optional[Callable] = None
    prox_map: Optional[Callable] = None
    smoothness: Optional[float] = None
    convex_smoothness: Optional[float] = None
    lower_bound: Optional[float] = None
    name: str = "problem"

    def __post_init__(self):
        if int(self.dim) < 1:
            raise UsageError(f"dim must be positive, got {self.dim}")
        if self.smoothness is not None and not self.smoothness > 0:
            raise UsageError("smoothness must be positive")

    @property
    def has_convex_part(self) -> bool:
        return self.convex_subgrad is not _zero_grad

    @property
    def has_prox_part(self) -> bool:
        return self.prox_value is not None or self.prox_map is not None

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.shape[0] != self.dim:
            raise UsageError(f"expected a vector of length {self.dim}, got shape {x.shape}")
        return x


def eval_objective(p: DcProblem, x):
    """Return ``g(x) - h(x) + phi(x)``, or :data:`INFEASIBLE` when ``phi(x)`` is infinite."""
    x = p.check_point(x)
    phi = 0.0
    if p.prox_value is not None:
        phi = p.prox_value(x)
        if is_infeasible(phi):
            return INFEASIBLE
    return float(p.smooth_value(x)) - float(p.convex_value(x)) + float(phi)


def objective_float(p: DcProblem, x) -> float:
    """Like :func:`eval_objective` but with ``inf`` in place of the marker."""
    return float(eval_objective(p, x))


def dc_gradient(p: DcProblem, x) -> np.ndarray:
    """``grad g(x) - u(x)`` with ``u`` the problem's chosen subgradient of ``h``.

    ``phi`` contributes nothing here; callers working with a prox term use the
    prox residual instead.
    """
    x = p.check_point(x)
    return np.asarray(p.smooth_grad(x), dtype=float) - np.asarray(p.convex_subgrad(x), dtype=float)


def prox_l1(z, t: float, lam: float) -> np.ndarray:
    """Soft threshold: prox of ``lam * ||.||_1`` with step ``t``."""
    if not t > 0:
        raise UsageError(f"prox step must be positive, got {t}")
    if lam < 0:
        raise UsageError(f"lam must be nonnegative, got {lam}")
    z = np.asarray(z, dtype=float)
    if lam == 0:
        return z.copy()
    return kernels.soft_threshold(z, t * lam)


# points this close to the sphere count as inside, so that the rounded output
# of a radial scaling is itself a fixed point (exact idempotence); the slack
# scales with |center| since z - center is recomputed with that much cancellation
_BALL_SLACK = 8 * np.finfo(float).eps


def project_ball(z, center, radius: float) -> np.ndarray:
    if radius < 0:
        raise UsageError(f"radius must be nonnegative, got {radius}")
    z = np.asarray(z, dtype=float)
    center = np.broadcast_to(np.asarray(center, dtype=float), z.shape)
    diff = z - center
    # scaled so that tiny or huge offsets do not under/overflow when squared
    scale = float(np.max(np.abs(diff))) if diff.size else 0.0
    dist = scale * float(np.linalg.norm(diff / scale)) if scale > 0 else 0.0
    if dist <= radius + _BALL_SLACK * (radius + float(np.linalg.norm(center))):
        return z.copy()
    return center + radius * diff / dist


def project_box(z, lo, hi) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), z.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), z.shape)
    if np.any(lo > hi):
        raise UsageError("box lower bound exceeds upper bound")
    return np.minimum(np.maximum(z, lo), hi)


def _check_sparsity(x, s):
    if not 1 <= s <= x.shape[0]:
        raise UsageError(f"s must lie in [1, {x.shape[0]}], got {s}")


def topk_indices(x, s: int) -> np.ndarray:
    """Indices of the ``s`` largest ``|x_i|``; ties go to the lowest index."""
    x = np.asarray(x, dtype=float)
    _check_sparsity(x, s)
    order = np.argsort(-np.abs(x), kind="stable")
    return order[:s]


def topk_abs_value(x, s: int) -> float:
    """Sum of the ``s`` largest absolute entries of ``x``."""
    x = np.asarray(x, dtype=float)
    return float(np.sum(np.abs(x[topk_indices(x, s)])))


def topk_abs_subgradient(x, s: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.zeros_like(x)
    idx = topk_indices(x, s)
    u[idx] = np.sign(x[idx])
    return u


class Status(enum.Enum):
    CONVERGED = "Converged"
    ITER_CAP = "IterCap"
    DIVERGED = "Diverged"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class SolverConfig:
    """Step size, backtracking fraction, curvature bound and stopping rule.

    ``alpha=None`` means ``1 / M_g`` of the problem being solved.
    """

    alpha: Optional[float] = None
    beta: float = 0.5
    c0: float = 1.0
    max_iter: int = 1000
    tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.alpha is not None and not self.alpha > 0:
            raise UsageError(f"alpha must be positive, got {self.alpha}")
        if not 0 < self.beta < 1:
            raise UsageError(f"beta must lie in (0, 1), got {self.beta}")
        if not self.c0 > 0:
            raise UsageError(f"c0 must be positive, got {self.c0}")
        if int(self.max_iter) < 1:
            raise UsageError(f"max_iter must be at least 1, got {self.max_iter}")
        if self.tol < 0:
            raise UsageError(f"tol must be nonnegative, got {self.tol}")
        if not 0 <= int(self.seed) < 2**64:
            raise UsageError("seed must be a 64-bit unsigned integer")

    def step_for(self, p: DcProblem) -> float:
        """Resolve the step size against ``p`` and enforce ``alpha <= 1/M_g``."""
        if self.alpha is None:
            if p.smoothness is None:
                raise UsageError("alpha must be given when the problem has no smoothness constant")
            return 1.0 / p.smoothness
        if p.smoothness is not None and self.alpha * p.smoothness > 1.0 + 1e-12:
            raise UsageError(
                f"alpha={self.alpha} exceeds 1/M_g={1.0 / p.smoothness} for {p.name}"
            )
        return float(self.alpha)


def _opt_array(values):
    return None if values is None else np.asarray(values, dtype=float)


@dataclass(frozen=True)
class SolveTrace:
    """Per-iterate record of one solver run.

    Row ``k`` describes iterate ``x^k`` and the step taken (or proposed, for
    the final row) from it.  ``grad_norm`` is ``||grad g - u||`` for the
    gradient-type methods and the prox residual ``step_norm / alpha`` for the
    prox-type ones.
    """

    algorithm: str
    f_val: np.ndarray
    grad_norm: np.ndarray
    step_norm: np.ndarray
    step_size: np.ndarray
    elapsed: np.ndarray
    x_final: np.ndarray
    status: Status
    fw_gap: Optional[np.ndarray] = None
    alpha: Optional[float] = None
    # prox-type only: ||grad g(x^{k+1}) - u^{k+1} + v^{k+1}|| with v^{k+1} the
    # subgradient of phi implied by the prox step; NaN on the last row
    next_grad_norm: Optional[np.ndarray] = None
    # cccp only
    inner_iters: Optional[np.ndarray] = None
    model_decrease: Optional[np.ndarray] = None
    inner_capped: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.f_val)
        for name in ("grad_norm", "step_norm", "step_size", "elapsed", "fw_gap",
                     "next_grad_norm", "inner_iters", "model_decrease", "inner_capped"):
            arr = getattr(self, name)
            if arr is not None and len(arr) != n:
                raise ValueError(f"trace field {name} has length {len(arr)}, expected {n}")

    def __len__(self):
        return len(self.f_val)

    @property
    def n_iter(self) -> int:
        return len(self.f_val) - 1


class TraceRecorder:
    """Mutable accumulator the solvers fill row by row."""

    def __init__(self, algorithm, alpha=None, fw=False, prox=False, cccp=False):
        self.algorithm = algorithm
        self.alpha = alpha
        self.rows = {k: [] for k in ("f_val", "grad_norm", "step_norm", "step_size", "elapsed")}
        self.fw_gap = [] if fw else None
        self.next_grad_norm = [] if prox else None
        self.inner_iters = [] if cccp else None
        self.model_decrease = [] if cccp else None
        self.inner_capped = [] if cccp else None

    def add(self, f_val, grad_norm, step_norm, step_size, elapsed, fw_gap=None,
            next_grad_norm=None, inner_iters=None, model_decrease=None, inner_capped=None):
        self.rows["f_val"].append(f_val)
        self.rows["grad_norm"].append(grad_norm)
        self.rows["step_norm"].append(step_norm)
        self.rows["step_size"].append(step_size)
        self.rows["elapsed"].append(elapsed)
        if self.fw_gap is not None:
            self.fw_gap.append(np.nan if fw_gap is None else fw_gap)
        if self.next_grad_norm is not None:
            self.next_grad_norm.append(np.nan if next_grad_norm is None else next_grad_norm)
        if self.inner_iters is not None:
            self.inner_iters.append(0 if inner_iters is None else inner_iters)
            self.model_decrease.append(np.nan if model_decrease is None else model_decrease)
            self.inner_capped.append(bool(inner_capped))

    def set_last(self, name, value):
        getattr(self, name)[-1] = value

    def finish(self, x_final, status, **meta) -> SolveTrace:
        return SolveTrace(
            algorithm=self.algorithm,
            f_val=np.asarray(self.rows["f_val"], dtype=float),
            grad_norm=np.asarray(self.rows["grad_norm"], dtype=float),
            step_norm=np.asarray(self.rows["step_norm"], dtype=float),
            step_size=np.asarray(self.rows["step_size"], dtype=float),
            elapsed=np.asarray(self.rows["elapsed"], dtype=float),
            x_final=np.array(x_final, dtype=float),
            status=status,
            fw_gap=_opt_array(self.fw_gap),
            alpha=self.alpha,
            next_grad_norm=_opt_array(self.next_grad_norm),
            inner_iters=None if self.inner_iters is None else np.asarray(self.inner_iters, dtype=np.int64),
            model_decrease=_opt_array(self.model_decrease),
            inner_capped=None if self.inner_capped is None else np.asarray(self.inner_capped, dtype=bool),
            meta=dict(meta),
        )
