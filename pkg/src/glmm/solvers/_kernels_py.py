"""Pure NumPy implementations of the solver inner loops.

Used when the compiled extension is unavailable (or when
``GLMM_PURE_PYTHON=1``). Signatures and results match ``_kernels.pyx``
up to floating-point summation order.

Edges are given as parallel arrays ``ei < ej``; ``S`` denotes the
unsigned incidence operator mapping edge weights to vertex degrees.
"""

import numpy as np


def _degrees(w, ei, ej, n):
    return np.bincount(ei, w, n) + np.bincount(ej, w, n)


def smooth_objective(w, z, ei, ej, n, beta1, beta2):
    d = _degrees(w, ei, ej, n)
    if np.any(d <= 0):
        return np.inf
    return float(w @ z - beta1 * np.log(d).sum() + 2.0 * beta2 * (w @ w))


def smooth_primal_dual(z, ei, ej, n, beta1, beta2, step, max_iter, tol, w0, v0):
    """Forward-backward-forward primal-dual iteration for the log-degree graph learner.

    Minimises ``z.w - beta1 * sum(log(S w)) + 2 beta2 |w|^2`` over ``w >= 0``.
    Returns ``(w_feasible, w, v, iterations, objective_trace)``.
    """
    w = np.array(w0, dtype=float)
    v = np.array(v0, dtype=float)
    P = np.maximum(w, 0.0)
    c2 = 4.0 * beta2
    trace = np.empty(max_iter)
    it = 0
    while it < max_iter:
        Y = w - step * (c2 * w + v[ei] + v[ej])
        y = v + step * _degrees(w, ei, ej, n)
        P = np.maximum(Y - step * z, 0.0)
        p = 0.5 * (y - np.sqrt(y * y + 4.0 * beta1 * step))
        Q = P - step * (c2 * P + p[ei] + p[ej])
        q = p + step * _degrees(P, ei, ej, n)
        dw = Q - Y
        dv = q - y
        w = w + dw
        v = v + dv
        trace[it] = smooth_objective(P, z, ei, ej, n, beta1, beta2)
        it += 1
        nw = np.linalg.norm(w)
        nv = np.linalg.norm(v)
        if np.linalg.norm(dw) <= tol * max(nw, 1e-300) and np.linalg.norm(dv) <= tol * max(nv, 1e-300):
            break
    return P, w, v, it, trace[:it].copy()


def heat_objective(w, a_off, a_diag, const, ei, ej, n, tau, beta):
    """``|A + 2 tau L(w)|_F^2 + 2 beta sum(w)`` where ``A`` is split into diagonal and edge parts."""
    d = _degrees(w, ei, ej, n)
    r = a_diag + 2.0 * tau * d
    e = a_off - 2.0 * tau * w
    return float(r @ r + 2.0 * (e @ e) + const + 2.0 * beta * w.sum())


def heat_gradient(w, a_off, a_diag, ei, ej, n, tau):
    d = _degrees(w, ei, ej, n)
    r = a_diag + 2.0 * tau * d
    return 4.0 * tau * (r[ei] + r[ej] - 2.0 * (a_off - 2.0 * tau * w))


def heat_fista(a_off, a_diag, const, ei, ej, n, tau, beta, step, max_iter, tol, w0):
    """FISTA with objective-increase restart for the log-covariance matching problem.

    Returns ``(w, iterations, objective_trace)``; the trace is non-increasing.
    """
    x = np.maximum(np.array(w0, dtype=float), 0.0)
    y = x.copy()
    t = 1.0
    thr = 2.0 * beta * step
    fx = heat_objective(x, a_off, a_diag, const, ei, ej, n, tau, beta)
    trace = np.empty(max_iter)
    it = 0
    while it < max_iter:
        g = heat_gradient(y, a_off, a_diag, ei, ej, n, tau)
        xn = np.maximum(y - step * g - thr, 0.0)
        fn = heat_objective(xn, a_off, a_diag, const, ei, ej, n, tau, beta)
        if fn > fx:
            # momentum overshoot: restart from x with a plain proximal step
            t = 1.0
            g = heat_gradient(x, a_off, a_diag, ei, ej, n, tau)
            xn = np.maximum(x - step * g - thr, 0.0)
            fn = heat_objective(xn, a_off, a_diag, const, ei, ej, n, tau, beta)
            if fn > fx:
                fn = fx
                xn = x.copy()
        tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = xn + ((t - 1.0) / tn) * (xn - x)
        trace[it] = fn
        it += 1
        done = abs(fx - fn) <= tol * abs(fx)
        x, fx, t = xn, fn, tn
        if done:
            break
    return x, it, trace[:it].copy()
