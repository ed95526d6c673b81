"""Pure NumPy implementations of the hot kernels.

Mirrors the compiled ``_kernels`` extension function for function; used
when the extension is not built or ``DCSOLVE_PURE_PYTHON`` is set.
"""

import numpy as np


def soft_threshold(z, thresh):
    z = np.asarray(z, dtype=float)
    return np.sign(z) * np.maximum(np.abs(z) - thresh, 0.0)


def sfs_value_grad(z, i2, ax1, ax2, ay1, ay2, l1, l2, l3, want_grad=True):
    """Quartic shading residual and its gradient on an m x n height grid.

    ``i2`` and the four coefficient arrays live on the (m-1) x (n-1) cells.
    For a cell with right difference ``d1 = z[i, j+1] - z[i, j]`` and down
    difference ``d2 = z[i+1, j] - z[i, j]`` the normal slopes are
    ``nx = ax1*d1 + ax2*d2`` and ``ny = ay1*d1 + ay2*d2``.
    """
    z = np.asarray(z, dtype=float)
    d1 = z[:-1, 1:] - z[:-1, :-1]
    d2 = z[1:, :-1] - z[:-1, :-1]
    nx = ax1 * d1 + ax2 * d2
    ny = ay1 * d1 + ay2 * d2
    lin = l1 * nx + l2 * ny + l3
    r = (1.0 + nx * nx + ny * ny) * i2 - lin * lin
    value = float(np.sum(r * r))
    if not want_grad:
        return value, None
    gx = 2.0 * r * (2.0 * nx * i2 - 2.0 * lin * l1)
    gy = 2.0 * r * (2.0 * ny * i2 - 2.0 * lin * l2)
    g1 = gx * ax1 + gy * ay1
    g2 = gx * ax2 + gy * ay2
    grad = np.zeros_like(z)
    grad[:-1, 1:] += g1
    grad[1:, :-1] += g2
    grad[:-1, :-1] -= g1 + g2
    return value, grad


def ball_halfspace_exact(z, radius, eps):
    """Closed-form projection onto ``{||w|| <= radius, w[-1] <= -eps}``.

    Used when Dykstra stalls; the minimizer is either the ball projection,
    the halfspace projection, or lies on the sphere-hyperplane intersection.
    """
    z = np.array(z, dtype=float).ravel()
    nz = np.linalg.norm(z)
    w = z if nz <= radius else z * (radius / nz)
    if w[-1] <= -eps:
        return w
    w = z.copy()
    w[-1] = -eps
    if np.linalg.norm(w) <= radius:
        return w
    rho = np.sqrt(max(radius * radius - eps * eps, 0.0))
    head = z[:-1]
    nh = np.linalg.norm(head)
    w[:-1] = 0.0
    if nh > 0:
        w[:-1] = head * (rho / nh)
    elif w.size > 1:
        w[0] = rho
    return w


def dykstra_ball_halfspace(z, radius, eps, max_sweeps=100, tol=1e-12):
    """Project ``z`` onto ``{w : ||w|| <= radius, w[-1] <= -eps}`` by Dykstra.

    Falls back to :func:`ball_halfspace_exact` if the sweeps do not reach
    ``tol`` (corner solutions converge only linearly).
    """
    x = np.array(z, dtype=float)
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(max_sweeps):
        v = x + p
        nv = np.linalg.norm(v)
        y = v if nv <= radius else v * (radius / nv)
        p = v - y
        w = y + q
        x_new = w.copy()
        if x_new[-1] > -eps:
            x_new[-1] = -eps
        q = w - x_new
        change = np.linalg.norm(x_new - x)
        x = x_new
        if change <= tol and np.linalg.norm(x) <= radius * (1.0 + 1e-15):
            return x
    return ball_halfspace_exact(z, radius, eps)
