"""Compiled inner loops for the radial potential flow.

All arrays have length ``N + 1`` over the nodes ``s_i = i * ds``. Node ``N`` is
the Dirichlet boundary and is never updated. Status codes: ``OK`` or the index
of the first node where ``a`` or ``b`` is not positive, ``NONFINITE`` for NaN/inf.
"""

import numba
import numpy as np

OK = -1
NONFINITE = -2


@numba.njit(cache=True)
def eigen_parts(phi, t, s, ds, a0, b0, dF0, sdF0, a, b):
    """Eigen-parts of ``chi(t) + i d dbar phi`` at every node, returns status."""
    N = phi.size - 1
    e = np.exp(-t)
    inv2 = 1.0 / (2.0 * ds)
    invsq = 1.0 / (ds * ds)
    # s = 0: a(0) = b(0) by symmetry, one-sided second-order first derivative
    d0 = (-3.0 * phi[0] + 4.0 * phi[1] - phi[2]) * inv2
    a[0] = e * (a0[0] - dF0[0]) + dF0[0] + d0
    b[0] = e * (b0[0] - sdF0[0]) + sdF0[0] + d0
    status = OK
    if not (a[0] > 0.0 and b[0] > 0.0):
        status = 0
    for i in range(1, N):
        d1 = (phi[i + 1] - phi[i - 1]) * inv2
        sp = s[i] + 0.5 * ds
        sm = s[i] - 0.5 * ds
        d2 = (sp * (phi[i + 1] - phi[i]) - sm * (phi[i] - phi[i - 1])) * invsq
        a[i] = e * (a0[i] - dF0[i]) + dF0[i] + d1
        b[i] = e * (b0[i] - sdF0[i]) + sdF0[i] + d2
        if status == OK and not (a[i] > 0.0 and b[i] > 0.0):
            status = i
    # boundary node: one-sided stencils, diagnostics only
    d1 = (3.0 * phi[N] - 4.0 * phi[N - 1] + phi[N - 2]) * inv2
    dd = (2.0 * phi[N] - 5.0 * phi[N - 1] + 4.0 * phi[N - 2] - phi[N - 3]) * invsq
    a[N] = e * (a0[N] - dF0[N]) + dF0[N] + d1
    b[N] = e * (b0[N] - sdF0[N]) + sdF0[N] + d1 + s[N] * dd
    return status


@numba.njit(cache=True)
def rhs_into(phi, t, n, s, ds, a0, b0, dF0, sdF0, out, a, b):
    status = eigen_parts(phi, t, s, ds, a0, b0, dF0, sdF0, a, b)
    N = phi.size - 1
    out[N] = 0.0
    if status != OK:
        return status
    for i in range(N):
        out[i] = (n - 1) * np.log(a[i] / a0[i]) + np.log(b[i] / b0[i]) - phi[i]
    return OK


@numba.njit(cache=True)
def cfl_from(b, s, ds, sigma):
    N = b.size - 1
    m = np.inf
    for i in range(N):
        v = b[i] / max(s[i], ds)
        if v < m:
            m = v
    return sigma * ds * ds * m


@numba.njit(cache=True)
def heun_into(phi, t, dt, k1, n, s, ds, a0, b0, dF0, sdF0, out, k2, a, b):
    """One explicit trapezoidal step given ``k1 = rhs(phi, t)``; returns status."""
    N = phi.size - 1
    for i in range(N + 1):
        out[i] = phi[i] + dt * k1[i]
    status = rhs_into(out, t + dt, n, s, ds, a0, b0, dF0, sdF0, k2, a, b)
    if status != OK:
        return status
    for i in range(N + 1):
        out[i] = phi[i] + 0.5 * dt * (k1[i] + k2[i])
        if not np.isfinite(out[i]):
            return NONFINITE
    return OK


@numba.njit(cache=True)
def advance(phi, t, t_stop, sigma, n, s, ds, a0, b0, dF0, sdF0):
    """Step ``phi`` in place until ``t == t_stop``.

    Returns ``(t, steps, last_dt, status, fail_t)``. A failed step is retried
    once with half the time step before giving up.
    """
    N = phi.size - 1
    k1 = np.empty(N + 1)
    k2 = np.empty(N + 1)
    a = np.empty(N + 1)
    b = np.empty(N + 1)
    out = np.empty(N + 1)
    steps = 0
    last_dt = 0.0
    while t < t_stop:
        status = rhs_into(phi, t, n, s, ds, a0, b0, dF0, sdF0, k1, a, b)
        if status != OK:
            return t, steps, last_dt, status, t
        dt = cfl_from(b, s, ds, sigma)
        remaining = t_stop - t
        landing = dt >= remaining
        if landing:
            dt = remaining
        status = heun_into(phi, t, dt, k1, n, s, ds, a0, b0, dF0, sdF0, out, k2, a, b)
        if status != OK:
            dt = 0.5 * dt
            landing = False
            status = heun_into(phi, t, dt, k1, n, s, ds, a0, b0, dF0, sdF0, out, k2, a, b)
            if status != OK:
                return t, steps, last_dt, status, t + dt
        for i in range(N + 1):
            phi[i] = out[i]
        t = t_stop if landing else t + dt
        last_dt = dt
        steps += 1
    return t, steps, last_dt, OK, t
