# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled solver inner loops; see ``_kernels_py`` for the reference versions."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log, fabs, INFINITY

cnp.import_array()


cdef inline void _degrees(const double[::1] w, const long[::1] ei, const long[::1] ej,
                          double[::1] d) noexcept nogil:
    cdef Py_ssize_t e, n = d.shape[0], m = w.shape[0]
    for e in range(n):
        d[e] = 0.0
    for e in range(m):
        d[ei[e]] += w[e]
        d[ej[e]] += w[e]


cdef double _smooth_obj(const double[::1] w, const double[::1] z, const long[::1] ei,
                        const long[::1] ej, double[::1] d, double beta1,
                        double beta2) noexcept nogil:
    cdef Py_ssize_t e, i
    cdef double s = 0.0, ww = 0.0, lg = 0.0
    _degrees(w, ei, ej, d)
    for i in range(d.shape[0]):
        if d[i] <= 0.0:
            return INFINITY
        lg += log(d[i])
    for e in range(w.shape[0]):
        s += w[e] * z[e]
        ww += w[e] * w[e]
    return s - beta1 * lg + 2.0 * beta2 * ww


def smooth_objective(w, z, ei, ej, Py_ssize_t n, double beta1, double beta2):
    cdef double[::1] d = np.zeros(n)
    return _smooth_obj(np.ascontiguousarray(w, dtype=np.float64),
                       np.ascontiguousarray(z, dtype=np.float64),
                       np.ascontiguousarray(ei, dtype=np.int_),
                       np.ascontiguousarray(ej, dtype=np.int_), d, beta1, beta2)


def smooth_primal_dual(z_in, ei_in, ej_in, Py_ssize_t n, double beta1, double beta2,
                       double step, Py_ssize_t max_iter, double tol, w0, v0):
    cdef const double[::1] z = np.ascontiguousarray(z_in, dtype=np.float64)
    cdef const long[::1] ei = np.ascontiguousarray(ei_in, dtype=np.int_)
    cdef const long[::1] ej = np.ascontiguousarray(ej_in, dtype=np.int_)
    cdef Py_ssize_t m = z.shape[0]
    cdef double[::1] w = np.array(w0, dtype=np.float64)
    cdef double[::1] v = np.array(v0, dtype=np.float64)
    cdef double[::1] Y = np.empty(m)
    cdef double[::1] P = np.maximum(np.asarray(w), 0.0)
    cdef double[::1] y = np.empty(n)
    cdef double[::1] p = np.empty(n)
    cdef double[::1] d = np.empty(n)
    cdef double[::1] trace = np.empty(max_iter)
    cdef double c2 = 4.0 * beta2, q, Q, dw2, dv2, nw2, nv2, val, bb = 4.0 * beta1 * step
    cdef Py_ssize_t it = 0, e, i
    with nogil:
        while it < max_iter:
            _degrees(w, ei, ej, d)
            for i in range(n):
                y[i] = v[i] + step * d[i]
                p[i] = 0.5 * (y[i] - sqrt(y[i] * y[i] + bb))
            for e in range(m):
                Y[e] = w[e] - step * (c2 * w[e] + v[ei[e]] + v[ej[e]])
                val = Y[e] - step * z[e]
                P[e] = val if val > 0.0 else 0.0
            _degrees(P, ei, ej, d)
            dw2 = 0.0
            nw2 = 0.0
            for e in range(m):
                Q = P[e] - step * (c2 * P[e] + p[ei[e]] + p[ej[e]])
                val = Q - Y[e]
                w[e] += val
                dw2 += val * val
                nw2 += w[e] * w[e]
            dv2 = 0.0
            nv2 = 0.0
            for i in range(n):
                q = p[i] + step * d[i]
                val = q - y[i]
                v[i] += val
                dv2 += val * val
                nv2 += v[i] * v[i]
            trace[it] = _smooth_obj(P, z, ei, ej, d, beta1, beta2)
            it += 1
            if dw2 <= tol * tol * (nw2 if nw2 > 1e-300 else 1e-300) and \
               dv2 <= tol * tol * (nv2 if nv2 > 1e-300 else 1e-300):
                break
    return (np.asarray(P).copy(), np.asarray(w), np.asarray(v), it,
            np.asarray(trace)[:it].copy())


cdef double _heat_obj(const double[::1] w, const double[::1] a_off, const double[::1] a_diag,
                      double const, const long[::1] ei, const long[::1] ej, double[::1] d,
                      double tau, double beta) noexcept nogil:
    cdef Py_ssize_t e, i
    cdef double s = const, r, sw = 0.0
    _degrees(w, ei, ej, d)
    for i in range(d.shape[0]):
        r = a_diag[i] + 2.0 * tau * d[i]
        s += r * r
    for e in range(w.shape[0]):
        r = a_off[e] - 2.0 * tau * w[e]
        s += 2.0 * r * r
        sw += w[e]
    return s + 2.0 * beta * sw


cdef void _heat_grad(const double[::1] w, const double[::1] a_off, const double[::1] a_diag,
                     const long[::1] ei, const long[::1] ej, double[::1] d, double tau,
                     double[::1] g) noexcept nogil:
    cdef Py_ssize_t e, i
    _degrees(w, ei, ej, d)
    for i in range(d.shape[0]):
        d[i] = a_diag[i] + 2.0 * tau * d[i]
    for e in range(w.shape[0]):
        g[e] = 4.0 * tau * (d[ei[e]] + d[ej[e]] - 2.0 * (a_off[e] - 2.0 * tau * w[e]))


def heat_objective(w, a_off, a_diag, double const, ei, ej, Py_ssize_t n, double tau,
                   double beta):
    cdef double[::1] d = np.zeros(n)
    return _heat_obj(np.ascontiguousarray(w, dtype=np.float64),
                     np.ascontiguousarray(a_off, dtype=np.float64),
                     np.ascontiguousarray(a_diag, dtype=np.float64), const,
                     np.ascontiguousarray(ei, dtype=np.int_),
                     np.ascontiguousarray(ej, dtype=np.int_), d, tau, beta)


def heat_gradient(w_in, a_off, a_diag, ei, ej, Py_ssize_t n, double tau):
    cdef const double[::1] w = np.ascontiguousarray(w_in, dtype=np.float64)
    cdef double[::1] d = np.zeros(n)
    cdef double[::1] g = np.empty(w.shape[0])
    _heat_grad(w, np.ascontiguousarray(a_off, dtype=np.float64),
               np.ascontiguousarray(a_diag, dtype=np.float64),
               np.ascontiguousarray(ei, dtype=np.int_),
               np.ascontiguousarray(ej, dtype=np.int_), d, tau, g)
    return np.asarray(g)


def heat_fista(a_off_in, a_diag_in, double const, ei_in, ej_in, Py_ssize_t n, double tau,
               double beta, double step, Py_ssize_t max_iter, double tol, w0):
    cdef const double[::1] a_off = np.ascontiguousarray(a_off_in, dtype=np.float64)
    cdef const double[::1] a_diag = np.ascontiguousarray(a_diag_in, dtype=np.float64)
    cdef const long[::1] ei = np.ascontiguousarray(ei_in, dtype=np.int_)
    cdef const long[::1] ej = np.ascontiguousarray(ej_in, dtype=np.int_)
    cdef Py_ssize_t m = a_off.shape[0]
    cdef double[::1] x = np.maximum(np.array(w0, dtype=np.float64), 0.0)
    cdef double[::1] y = np.array(x, copy=True)
    cdef double[::1] xn = np.empty(m)
    cdef double[::1] g = np.empty(m)
    cdef double[::1] d = np.empty(n)
    cdef double[::1] trace = np.empty(max_iter)
    cdef double t = 1.0, tn, fx, fn, thr = 2.0 * beta * step, val, mom
    cdef Py_ssize_t it = 0, e
    cdef bint done
    with nogil:
        fx = _heat_obj(x, a_off, a_diag, const, ei, ej, d, tau, beta)
        while it < max_iter:
            _heat_grad(y, a_off, a_diag, ei, ej, d, tau, g)
            for e in range(m):
                val = y[e] - step * g[e] - thr
                xn[e] = val if val > 0.0 else 0.0
            fn = _heat_obj(xn, a_off, a_diag, const, ei, ej, d, tau, beta)
            if fn > fx:
                t = 1.0
                _heat_grad(x, a_off, a_diag, ei, ej, d, tau, g)
                for e in range(m):
                    val = x[e] - step * g[e] - thr
                    xn[e] = val if val > 0.0 else 0.0
                fn = _heat_obj(xn, a_off, a_diag, const, ei, ej, d, tau, beta)
                if fn > fx:
                    fn = fx
                    for e in range(m):
                        xn[e] = x[e]
            tn = 0.5 * (1.0 + sqrt(1.0 + 4.0 * t * t))
            mom = (t - 1.0) / tn
            for e in range(m):
                y[e] = xn[e] + mom * (xn[e] - x[e])
                x[e] = xn[e]
            trace[it] = fn
            it += 1
            done = fabs(fx - fn) <= tol * fabs(fx)
            fx = fn
            t = tn
            if done:
                break
    return np.asarray(x).copy(), it, np.asarray(trace)[:it].copy()
