"""Hot inner loops for the obstacle solvers.

Compiled with numba when available; the pure-Python definitions are the
fallback and the reference semantics (identical arithmetic order, no
fastmath, so results are bitwise reproducible either way).

The projected iterations keep the update y <- min(psi, y + tau * r / D) but
accept or reject trial steps on the operator's convex potential: the
complementarity residual is not a descent quantity for a simultaneous update,
while the energy decreases monotonically for small enough tau.  The residual
remains the termination test.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap

_TAU_FLOOR = 1e-12


@njit(cache=True, nogil=True)
def psor_solve(lower, diag, upper, f, psi, y, omega, tol, max_iter):
    """Projected SOR sweeps in ascending dof order; returns (sweeps, kkt)."""
    n = y.shape[0]
    kkt = np.inf
    for sweep in range(1, max_iter + 1):
        for i in range(n):
            r = f[i] - diag[i] * y[i]
            if i > 0:
                r -= lower[i] * y[i - 1]
            if i < n - 1:
                r -= upper[i] * y[i + 1]
            yi = y[i] + omega * r / diag[i]
            if yi > psi[i]:
                yi = psi[i]
            y[i] = yi
        kkt = 0.0
        for i in range(n):
            r = f[i] - diag[i] * y[i]
            if i > 0:
                r -= lower[i] * y[i - 1]
            if i < n - 1:
                r -= upper[i] * y[i + 1]
            gap = psi[i] - y[i]
            m = gap if gap < r else r
            if m < 0.0:
                m = -m
            if m > kkt:
                kkt = m
        if kkt <= tol:
            return sweep, kkt
    return max_iter, kkt


@njit(cache=True, nogil=True)
def _tridiag_sine_residual(lower, diag, upper, lam, f, y, r):
    n = y.shape[0]
    for i in range(n):
        ri = f[i] - diag[i] * y[i] - lam * np.sin(y[i])
        if i > 0:
            ri -= lower[i] * y[i - 1]
        if i < n - 1:
            ri -= upper[i] * y[i + 1]
        r[i] = ri


@njit(cache=True, nogil=True)
def _tridiag_sine_merit(lower, diag, upper, hw, lam, f, y):
    n = y.shape[0]
    e = 0.0
    for i in range(n):
        ay = diag[i] * y[i]
        if i > 0:
            ay += lower[i] * y[i - 1]
        if i < n - 1:
            ay += upper[i] * y[i + 1]
        e += hw[i] * (0.5 * y[i] * ay - lam * np.cos(y[i]) - f[i] * y[i])
    return e


@njit(cache=True, nogil=True)
def projected_tridiag_sine(lower, diag, upper, hw, lam, f, psi, y, tau, tol, max_iter, tau_cap):
    """Damped projected iteration for A y + lam*sin(y), base-diagonal scaling.

    Returns (iterations, kkt, tau, stagnated).
    """
    n = y.shape[0]
    r = np.empty(n)
    yt = np.empty(n)
    e = _tridiag_sine_merit(lower, diag, upper, hw, lam, f, y)
    kkt = np.inf
    for it in range(1, max_iter + 1):
        _tridiag_sine_residual(lower, diag, upper, lam, f, y, r)
        for i in range(n):
            v = y[i] + tau * r[i] / diag[i]
            if v > psi[i]:
                v = psi[i]
            yt[i] = v
        et = _tridiag_sine_merit(lower, diag, upper, hw, lam, f, yt)
        if et <= e + 1e-14 * (abs(e) + 1.0):
            for i in range(n):
                y[i] = yt[i]
            e = et
            _tridiag_sine_residual(lower, diag, upper, lam, f, y, r)
            kkt = 0.0
            for i in range(n):
                gap = psi[i] - y[i]
                m = gap if gap < r[i] else r[i]
                if m < 0.0:
                    m = -m
                if m > kkt:
                    kkt = m
            if kkt <= tol:
                return it, kkt, tau, False
            tau = min(tau * 1.25, tau_cap)
        else:
            tau *= 0.5
            if tau < _TAU_FLOOR:
                return it, kkt, tau, True
    return max_iter, kkt, tau, False


@njit(cache=True, nogil=True)
def _plap_flux(p, eps, h, y, flux):
    n = y.shape[0]
    ex = (p - 2.0) / 2.0
    for e in range(n + 1):
        left = y[e - 1] if e > 0 else 0.0
        right = y[e] if e < n else 0.0
        g = (right - left) / h
        s = g * g + eps
        flux[e] = s**ex * g if s > 0.0 else 0.0


@njit(cache=True, nogil=True)
def _plap_merit(p, eps, h, reg_eps, hw, f, y):
    n = y.shape[0]
    e = 0.0
    for k in range(n + 1):
        left = y[k - 1] if k > 0 else 0.0
        right = y[k] if k < n else 0.0
        g = (right - left) / h
        e += (h / p) * (g * g + eps) ** (p / 2.0)
    for i in range(n):
        e += hw[i] * (0.5 * reg_eps * y[i] * y[i] - f[i] * y[i])
    return e


@njit(cache=True, nogil=True)
def projected_plap(p, eps, h, reg_eps, hw, f, psi, y, tau, tol, max_iter, tau_cap):
    """Damped projected iteration for the (regularized) p-Laplacian with
    diagonal scaling relinearized at every accepted iterate.

    Returns (iterations, kkt, tau, stagnated).
    """
    n = y.shape[0]
    flux = np.empty(n + 1)
    dflux = np.empty(n + 1)
    yt = np.empty(n)
    exd = (p - 4.0) / 2.0
    dlimit = 1.0 if p == 2.0 else 0.0
    e = _plap_merit(p, eps, h, reg_eps, hw, f, y)
    kkt = np.inf
    for it in range(1, max_iter + 1):
        for k in range(n + 1):
            left = y[k - 1] if k > 0 else 0.0
            right = y[k] if k < n else 0.0
            g = (right - left) / h
            s = g * g + eps
            if s > 0.0:
                flux[k] = s ** ((p - 2.0) / 2.0) * g
                dflux[k] = s**exd * ((p - 1.0) * g * g + eps)
            else:
                flux[k] = 0.0
                dflux[k] = dlimit
        dmax = 0.0
        for i in range(n):
            di = (dflux[i] + dflux[i + 1]) / (h * h) + reg_eps
            if di > dmax:
                dmax = di
        floor = 1e-12 * (dmax if dmax > 0.0 else 1.0)
        for i in range(n):
            ri = f[i] - (flux[i] - flux[i + 1]) / h - reg_eps * y[i]
            di = (dflux[i] + dflux[i + 1]) / (h * h) + reg_eps
            if di < floor:
                di = floor
            v = y[i] + tau * ri / di
            if v > psi[i]:
                v = psi[i]
            yt[i] = v
        et = _plap_merit(p, eps, h, reg_eps, hw, f, yt)
        if et <= e + 1e-14 * (abs(e) + 1.0):
            for i in range(n):
                y[i] = yt[i]
            e = et
            _plap_flux(p, eps, h, y, flux)
            kkt = 0.0
            for i in range(n):
                ri = f[i] - (flux[i] - flux[i + 1]) / h - reg_eps * y[i]
                gap = psi[i] - y[i]
                m = gap if gap < ri else ri
                if m < 0.0:
                    m = -m
                if m > kkt:
                    kkt = m
            if kkt <= tol:
                return it, kkt, tau, False
            tau = min(tau * 1.25, tau_cap)
        else:
            tau *= 0.5
            if tau < _TAU_FLOOR:
                return it, kkt, tau, True
    return max_iter, kkt, tau, False
