"""Synthetic data, image and CSV I/O, and the estimation-error metric."""

from __future__ import annotations

import csv
import math
import os
import re
from dataclasses import dataclass

import numpy as np

from .core import SolveTrace, UsageError
from .problems import sfs_coefficients

__all__ = [
    "RegressionDataset",
    "rng_for",
    "gen_equicorr_design",
    "gen_regression",
    "gen_mixture_samples",
    "render_sfs",
    "hemisphere",
    "PgmParseError",
    "load_pgm",
    "write_pgm",
    "TRACE_HEADER",
    "write_csv",
    "read_trace_csv",
    "write_dataset_csv",
    "read_dataset_csv",
    "estimation_error",
]


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, stream...)``.

    Streams are independent of the order in which they are created, so
    replications give the same numbers regardless of scheduling.
    """
    if not 0 <= int(seed) < 2**64:
        raise UsageError("seed must be a 64-bit unsigned integer")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class RegressionDataset:
    X: np.ndarray
    y: np.ndarray
    xstar: np.ndarray
    seed: int
    noise_sd: float = 0.5
    rho: float = 0.0

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def gen_equicorr_design(n: int, p: int, rho: float, seed: int, stream: int = 0) -> np.ndarray:
    """Rows i.i.d. ``N(0, (1 - rho) I + rho 11')`` via a shared scalar factor per row."""
    if not 0 <= rho < 1:
        raise UsageError(f"rho must lie in [0, 1), got {rho}")
    if n < 1 or p < 1:
        raise UsageError("n and p must be positive")
    rng = rng_for(seed, stream, 0)
    w = rng.standard_normal(n)
    e = rng.standard_normal((n, p))
    return math.sqrt(rho) * w[:, None] + math.sqrt(1.0 - rho) * e


def gen_regression(n: int, p: int, rho: float, s_star: int, noise_sd: float = 0.5,
                   seed: int = 0, stream: int = 0) -> RegressionDataset:
    """Equicorrelated design, binary ``xstar`` with ``s_star`` ones on a uniform
    random support, and ``y = X xstar + noise_sd * N(0, I)``."""
    if not 0 <= s_star <= p:
        raise UsageError(f"s_star must lie in [0, {p}], got {s_star}")
    if noise_sd < 0:
        raise UsageError("noise_sd must be nonnegative")
    X = gen_equicorr_design(n, p, rho, seed, stream)
    support = rng_for(seed, stream, 1).choice(p, size=s_star, replace=False)
    xstar = np.zeros(p)
    xstar[support] = 1.0
    y = X @ xstar
    if noise_sd > 0:
        y = y + noise_sd * rng_for(seed, stream, 2).standard_normal(n)
    return RegressionDataset(X, y, xstar, int(seed), float(noise_sd), float(rho))


def gen_mixture_samples(n: int, pi: float, mu0: float, sd0: float, mu1: float, sd1: float,
                        seed: int = 0, stream: int = 0) -> np.ndarray:
    """``n`` draws: component 0 with probability ``pi``, else component 1."""
    if not 0 <= pi <= 1:
        raise UsageError("pi must lie in [0, 1]")
    if not (sd0 > 0 and sd1 > 0):
        raise UsageError("standard deviations must be positive")
    rng = rng_for(seed, stream)
    pick0 = rng.random(n) < pi
    z = rng.standard_normal(n)
    return np.where(pick0, mu0 + sd0 * z, mu1 + sd1 * z)


def render_sfs(z, light=(0.0, 0.0, 1.0), xg=None, yg=None) -> np.ndarray:
    """Lambertian intensity ``<light, N> / ||N||`` with ``N = (nx, ny, 1)``, clamped to [0, 1].

    Normals live on the ``(m-1) x (n-1)`` cells; the last row and column are
    filled by edge replication so the image has the same shape as ``z``.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[0] < 2 or z.shape[1] < 2:
        raise UsageError(f"need at least a 2 x 2 height map, got shape {z.shape}")
    m, n = z.shape
    if xg is None or yg is None:
        yy, xx = np.mgrid[0:m, 0:n].astype(float)
        xg = xx if xg is None else xg
        yg = yy if yg is None else yg
    ax1, ax2, ay1, ay2 = sfs_coefficients(xg, yg)
    d1 = z[:-1, 1:] - z[:-1, :-1]
    d2 = z[1:, :-1] - z[:-1, :-1]
    nx = ax1 * d1 + ax2 * d2
    ny = ay1 * d1 + ay2 * d2
    l1, l2, l3 = (float(v) for v in light)
    cells = (l1 * nx + l2 * ny + l3) / np.sqrt(1.0 + nx * nx + ny * ny)
    return np.pad(np.clip(cells, 0.0, 1.0), ((0, 1), (0, 1)), mode="edge")


def hemisphere(m: int, n: int, radius: float = None, height: float = None) -> np.ndarray:
    """Spherical cap height map centred on the grid.

    The default radius is twice the grid half-diagonal so slopes stay moderate.
    """
    yy, xx = np.mgrid[0:m, 0:n].astype(float)
    cy, cx = (m - 1) / 2.0, (n - 1) / 2.0
    r2 = (xx - cx) ** 2 + (yy - cy) ** 2
    if radius is None:
        radius = 2.0 * math.hypot(cx, cy) + 1.0
    cap = np.sqrt(np.maximum(radius ** 2 - r2, 0.0))
    cap -= cap.min()
    if height is not None and cap.max() > 0:
        cap *= height / cap.max()
    return cap


# PGM images


class PgmParseError(UsageError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


_WS = b" \t\r\n\v\f"


def _pgm_tokens(buf: bytes, count: int, pos: int):
    """Read ``count`` whitespace-separated ASCII integers starting at ``pos``."""
    out = []
    n = len(buf)
    while len(out) < count:
        while pos < n and (buf[pos] in _WS or buf[pos] == ord("#")):
            if buf[pos] == ord("#"):
                while pos < n and buf[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        if pos >= n:
            raise PgmParseError("unexpected end of file", pos)
        m = re.compile(rb"\d+").match(buf, pos)
        if m is None:
            raise PgmParseError(f"expected an integer, found {buf[pos:pos + 1]!r}", pos)
        out.append(int(m.group()))
        pos = m.end()
    return out, pos


def load_pgm(path, return_maxval: bool = False):
    """Read a P2 or P5 PGM and scale it to [0, 1]."""
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    if len(buf) < 2 or buf[:2] not in (b"P2", b"P5"):
        raise PgmParseError("not a P2/P5 PGM file", 0)
    binary = buf[:2] == b"P5"
    (width, height, maxval), pos = _pgm_tokens(buf, 3, 2)
    if width < 1 or height < 1:
        raise PgmParseError(f"bad dimensions {width} x {height}", pos)
    if not 1 <= maxval <= 65535:
        raise PgmParseError(f"maxval {maxval} outside [1, 65535]", pos)
    count = width * height
    if binary:
        if pos >= len(buf) or buf[pos] not in _WS:
            raise PgmParseError("missing whitespace before raster", pos)
        pos += 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = count * dtype.itemsize
        if len(buf) - pos < need:
            raise PgmParseError(f"raster truncated: need {need} bytes, have {len(buf) - pos}", len(buf))
        vals = np.frombuffer(buf, dtype=dtype, count=count, offset=pos).astype(np.int64)
    else:
        vals, _ = _pgm_tokens(buf, count, pos)
        vals = np.asarray(vals, dtype=np.int64)
    if np.any(vals > maxval):
        raise PgmParseError(f"sample exceeds maxval {maxval}", pos)
    grid = vals.reshape(height, width) / float(maxval)
    return (grid, maxval) if return_maxval else grid


def write_pgm(path, grid, maxval: int = 255, binary: bool = True) -> None:
    """Write a [0, 1] grid as PGM; values are clipped and rounded to ``maxval`` levels."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2:
        raise UsageError("PGM grid must be 2-D")
    if not 1 <= maxval <= 65535:
        raise UsageError("maxval must lie in [1, 65535]")
    vals = np.rint(np.clip(grid, 0.0, 1.0) * maxval).astype(np.int64)
    h, w = vals.shape
    header = f"{'P5' if binary else 'P2'}\n{w} {h}\n{maxval}\n".encode()
    with open(path, "wb") as fh:
        fh.write(header)
        if binary:
            fh.write(vals.astype(">u2" if maxval > 255 else "u1").tobytes())
        else:
            for row in vals:
                fh.write((" ".join(map(str, row)) + "\n").encode())


# CSV


TRACE_HEADER = ("iter", "f", "grad_norm", "step_norm", "fw_gap", "step_size", "elapsed_ms")


def _fmt(v) -> str:
    # repr round-trips doubles exactly
    return repr(float(v))


def write_csv(path, trace: SolveTrace) -> None:
    """One row per trace row; ``fw_gap`` is blank for methods without one."""
    gap = trace.fw_gap
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for k in range(len(trace)):
            w.writerow([
                k,
                _fmt(trace.f_val[k]),
                _fmt(trace.grad_norm[k]),
                _fmt(trace.step_norm[k]),
                "" if gap is None else _fmt(gap[k]),
                _fmt(trace.step_size[k]),
                _fmt(trace.elapsed[k] * 1e3),
            ])


def read_trace_csv(path) -> dict:
    """Parse a trace CSV into ``{column: array}``; a blank ``fw_gap`` column gives ``None``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRACE_HEADER:
        raise UsageError(f"{path}: header must be {','.join(TRACE_HEADER)}")
    body = rows[1:]
    out = {}
    for j, name in enumerate(TRACE_HEADER):
        col = [r[j] for r in body]
        if name == "iter":
            out[name] = np.asarray([int(v) for v in col], dtype=np.int64)
        elif name == "fw_gap" and all(v == "" for v in col):
            out[name] = None
        else:
            out[name] = np.asarray([float(v) for v in col], dtype=float)
    return out


def write_dataset_csv(path, ds: RegressionDataset) -> None:
    """Columns ``x1..xp, y, xstar``; ``y`` and ``xstar`` are blank-padded to a common length."""
    n, p = ds.X.shape
    rows = max(n, p)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j + 1}" for j in range(p)] + ["y", "xstar"])
        for i in range(rows):
            xs = [_fmt(v) for v in ds.X[i]] if i < n else [""] * p
            w.writerow(xs + [_fmt(ds.y[i]) if i < n else "", _fmt(ds.xstar[i]) if i < p else ""])


def read_dataset_csv(path, seed: int = 0) -> RegressionDataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    p = len(header) - 2
    if p < 1 or header[-2:] != ["y", "xstar"]:
        raise UsageError(f"{path}: not a dataset CSV")
    body = rows[1:]
    y = [float(r[p]) for r in body if r[p] != ""]
    n = len(y)
    X = np.asarray([[float(v) for v in r[:p]] for r in body[:n]], dtype=float).reshape(n, p)
    xstar = np.asarray([float(r[p + 1]) for r in body if r[p + 1] != ""], dtype=float)
    return RegressionDataset(X, np.asarray(y), xstar, seed)


def estimation_error(xhat, xstar) -> float:
    """``||xhat - xstar|| / (sqrt(p) ||xhat||)``."""
    xhat = np.asarray(xhat, dtype=float)
    xstar = np.asarray(xstar, dtype=float)
    if xhat.shape != xstar.shape:
        raise UsageError("xhat and xstar differ in shape")
    nh = float(np.linalg.norm(xhat))
    if nh == 0:
        raise UsageError("estimation error is undefined for xhat = 0")
    return float(np.linalg.norm(xhat - xstar)) / (math.sqrt(xhat.size) * nh)


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path
