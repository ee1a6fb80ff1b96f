"""Compiled inner loop for the batched control law.

``penalized_solve`` fuses the barrier combination with the per-agent Hessian
solve.  The numpy routes in ``barrier.combine`` and ``controller.spd_solve``
compute the same quantities and serve as the test reference.
"""

from __future__ import annotations

import numpy as np
from numba import njit

OK, DOMAIN, SINGULAR = 0, 1, 2


@njit(cache=True)
def _eig2(a, b, d):
    half_tr = 0.5 * (a + d)
    rad = np.hypot(0.5 * (a - d), b)
    hi = half_tr + rad
    lo = (a * d - b * b) / hi if hi > 0 else half_tr - rad
    return lo, hi


@njit(cache=True)
def penalized_solve(obj_val, obj_grad, obj_hess, obj_tg, g, dg, d2g, dtg, gdot, mask,
                    rho, rho_dot, sv, beta, eig_tol):
    """Barrier jets of all agents plus ``H^{-1} [-beta sv, -(grad + dt grad)]``.

    Returns ``(status, where, value, grad, hess, tgrad, consensus, phi, eig)``.
    ``status`` is OK, DOMAIN (``where`` = flat index of the worst margin) or
    SINGULAR (``where`` = agent).
    """
    n, q = g.shape
    m = obj_grad.shape[1]
    value = obj_val.copy()
    grad = obj_grad.copy()
    hess = obj_hess.copy()
    tgrad = obj_tg.copy()
    cons = np.zeros((n, m))
    phi = np.zeros((n, m))
    eig = np.zeros((n, m))
    inv_rho = 1.0 / rho
    worst = -np.inf
    where = -1
    for i in range(n):
        for j in range(q):
            if mask[i, j]:
                marg = g[i, j] - inv_rho
                s = 1.0 - rho * g[i, j]
                if marg >= 0 or s <= 0:
                    if marg > worst or where < 0:
                        worst = marg
                        where = i * q + j
    if where >= 0:
        return DOMAIN, where, value, grad, hess, tgrad, cons, phi, eig

    for i in range(n):
        for j in range(q):
            s = 1.0 - rho * g[i, j]
            inv = 1.0 / s
            w = rho * inv * inv
            coef = inv * inv * (rho_dot * g[i, j] + rho * gdot[i, j])
            value[i] -= np.log1p(-rho * g[i, j]) * inv_rho
            for a in range(m):
                grad[i, a] += inv * dg[i, j, a]
                tgrad[i, a] += inv * dtg[i, j, a] + coef * dg[i, j, a]
                for b in range(m):
                    hess[i, a, b] += inv * d2g[i, j, a, b] + w * dg[i, j, a] * dg[i, j, b]

    rhs = np.empty((m, 2))
    for i in range(n):
        for a in range(m):
            rhs[a, 0] = -beta * sv[i, a]
            rhs[a, 1] = -(grad[i, a] + tgrad[i, a])
        H = hess[i]
        if m == 2:
            lo, hi = _eig2(H[0, 0], H[0, 1], H[1, 1])
            eig[i, 0] = lo
            eig[i, 1] = hi
            if not lo > eig_tol:
                return SINGULAR, i, value, grad, hess, tgrad, cons, phi, eig
            det = H[0, 0] * H[1, 1] - H[0, 1] * H[0, 1]
            for k in range(2):
                x0 = (H[1, 1] * rhs[0, k] - H[0, 1] * rhs[1, k]) / det
                x1 = (H[0, 0] * rhs[1, k] - H[0, 1] * rhs[0, k]) / det
                if k == 0:
                    cons[i, 0], cons[i, 1] = x0, x1
                else:
                    phi[i, 0], phi[i, 1] = x0, x1
        else:
            ev = np.linalg.eigvalsh(H)
            eig[i] = ev
            if not ev[0] > eig_tol:
                return SINGULAR, i, value, grad, hess, tgrad, cons, phi, eig
            sol = np.linalg.solve(H, rhs)
            cons[i] = sol[:, 0]
            phi[i] = sol[:, 1]
    return OK, -1, value, grad, hess, tgrad, cons, phi, eig
