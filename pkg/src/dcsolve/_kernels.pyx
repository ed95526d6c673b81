# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels in ``_kernels_py``."""

import numpy as np

from ._kernels_py import ball_halfspace_exact

from libc.math cimport fabs, sqrt


def soft_threshold(z, double thresh):
    cdef double[::1] zv = np.ascontiguousarray(z, dtype=np.float64).ravel()
    out = np.empty(zv.shape[0], dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    cdef double a
    for i in range(zv.shape[0]):
        a = fabs(zv[i]) - thresh
        if a <= 0.0:
            ov[i] = 0.0
        elif zv[i] > 0.0:
            ov[i] = a
        else:
            ov[i] = -a
    return out.reshape(np.shape(z))


def sfs_value_grad(z, i2, ax1, ax2, ay1, ay2, double l1, double l2, double l3,
                   bint want_grad=True):
    cdef double[:, ::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[:, ::1] iv = np.ascontiguousarray(i2, dtype=np.float64)
    cdef double[:, ::1] cx1 = np.ascontiguousarray(ax1, dtype=np.float64)
    cdef double[:, ::1] cx2 = np.ascontiguousarray(ax2, dtype=np.float64)
    cdef double[:, ::1] cy1 = np.ascontiguousarray(ay1, dtype=np.float64)
    cdef double[:, ::1] cy2 = np.ascontiguousarray(ay2, dtype=np.float64)
    cdef Py_ssize_t m = zv.shape[0], n = zv.shape[1]
    cdef Py_ssize_t i, j
    cdef double d1, d2, nx, ny, lin, r, ii, gx, gy, g1, g2
    cdef double value = 0.0
    grad = np.zeros((m, n), dtype=np.float64) if want_grad else None
    cdef double[:, ::1] gv
    if want_grad:
        gv = grad
    for i in range(m - 1):
        for j in range(n - 1):
            d1 = zv[i, j + 1] - zv[i, j]
            d2 = zv[i + 1, j] - zv[i, j]
            nx = cx1[i, j] * d1 + cx2[i, j] * d2
            ny = cy1[i, j] * d1 + cy2[i, j] * d2
            ii = iv[i, j]
            lin = l1 * nx + l2 * ny + l3
            r = (1.0 + nx * nx + ny * ny) * ii - lin * lin
            value += r * r
            if want_grad:
                gx = 2.0 * r * (2.0 * nx * ii - 2.0 * lin * l1)
                gy = 2.0 * r * (2.0 * ny * ii - 2.0 * lin * l2)
                g1 = gx * cx1[i, j] + gy * cy1[i, j]
                g2 = gx * cx2[i, j] + gy * cy2[i, j]
                gv[i, j + 1] += g1
                gv[i + 1, j] += g2
                gv[i, j] -= g1 + g2
    return value, grad


def dykstra_ball_halfspace(z, double radius, double eps, int max_sweeps=100,
                           double tol=1e-12):
    cdef double[::1] zin = np.ascontiguousarray(z, dtype=np.float64).ravel()
    cdef Py_ssize_t d = zin.shape[0], k
    cdef int sweep
    out = np.array(zin, dtype=np.float64)
    cdef double[::1] x = out
    cdef double[::1] p = np.zeros(d)
    cdef double[::1] q = np.zeros(d)
    cdef double[::1] v = np.zeros(d)
    cdef double[::1] w = np.zeros(d)
    cdef double nv, scale, change, xn, t
    for sweep in range(max_sweeps):
        nv = 0.0
        for k in range(d):
            v[k] = x[k] + p[k]
            nv += v[k] * v[k]
        nv = sqrt(nv)
        scale = 1.0 if nv <= radius else radius / nv
        for k in range(d):
            t = v[k] * scale
            p[k] = v[k] - t
            w[k] = t + q[k]
        change = 0.0
        xn = 0.0
        for k in range(d):
            t = w[k]
            if k == d - 1 and t > -eps:
                t = -eps
            q[k] = w[k] - t
            change += (t - x[k]) * (t - x[k])
            x[k] = t
            xn += t * t
        if sqrt(change) <= tol and sqrt(xn) <= radius * (1.0 + 1e-15):
            return out
    return ball_halfspace_exact(zin, radius, eps)
