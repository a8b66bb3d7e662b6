# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the truncated sinc product and the spectral multiplier."""
import numpy as np
from libc.math cimport sin, exp, fabs


def sinc2_product(const double[::1] t, const double[::1] a, const double[::1] a2_tail,
                  const double[::1] a4_tail, double x_small):
    """prod_n (sin(a_n t)/(a_n t))^2 with ``a`` sorted in decreasing order.

    Factors with a_n|t| < x_small are resummed from the suffix power sums.
    """
    cdef Py_ssize_t nt = t.shape[0], na = a.shape[0]
    cdef Py_ssize_t i, n
    cdef double tt, x, s, p, t2
    out = np.empty(nt)
    cdef double[::1] o = out
    for i in range(nt):
        tt = fabs(t[i])
        p = 1.0
        n = 0
        while n < na and a[n] * tt >= x_small:
            x = a[n] * tt
            s = sin(x) / x
            p *= s * s
            n += 1
            if p < 1e-300:
                p = 0.0
                break
        if p != 0.0:
            t2 = tt * tt
            p *= exp(-t2 * a2_tail[n] / 3.0 - t2 * t2 * a4_tail[n] / 90.0)
        o[i] = p
    return out


cdef inline double _g_eval(double w, const double[:, ::1] coefs, double radius) noexcept nogil:
    cdef Py_ssize_t npan = coefs.shape[0], deg = coefs.shape[1] - 1
    cdef double aw = fabs(w), h, x, b0, b1, b2, val
    cdef Py_ssize_t p, k
    if aw == 0.0:
        return 0.0
    if aw >= radius:
        return 1.0 / w
    h = radius / npan
    p = <Py_ssize_t>(aw / h)
    if p >= npan:
        p = npan - 1
    x = (aw - (p + 0.5) * h) / (0.5 * h)
    b1 = 0.0
    b2 = 0.0
    for k in range(deg, 0, -1):
        b0 = coefs[p, k] + 2.0 * x * b1 - b2
        b2 = b1
        b1 = b0
    val = coefs[p, 0] + x * b1 - b2
    return val if w > 0 else -val


def multiplier_values(const double[::1] w, const double[:, ::1] coefs, double radius):
    """Odd profile g(w) with sigma(w) = -i g(w)."""
    cdef Py_ssize_t n = w.shape[0], i
    out = np.empty(n)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = _g_eval(w[i], coefs, radius)
    return out


def multiplier_matrix(const double[::1] E, const double[:, ::1] coefs, double radius):
    """Antisymmetric matrix G[j, k] = g(E[k] - E[j])."""
    cdef Py_ssize_t n = E.shape[0], j, k
    out = np.zeros((n, n))
    cdef double[:, ::1] G = out
    cdef double v
    with nogil:
        for j in range(n):
            for k in range(j + 1, n):
                v = _g_eval(E[k] - E[j], coefs, radius)
                G[j, k] = v
                G[k, j] = -v
    return out
