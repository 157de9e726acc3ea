"""Compiled RK4 for models whose phi-geodesic right-hand side has a closed form.

A kernel is a jitted ``rhs(x, v, a, prm) -> lagrangian`` writing the
acceleration into ``a``; ``dispatch`` selects one by integer code so that
the driver never takes a function argument and stays disk-cacheable.  Kernels exist for the analytic cigar family and Euclidean
space; everything else goes through the numpy integrator.
"""

from __future__ import annotations

import math

import numba
import numpy as np


@numba.njit(cache=True)
def cigar_rhs(x, v, a, prm):
    """phi = c R on cigar x R^(n-2); prm = (c,)."""
    c = prm[0]
    n = x.shape[0]
    q1 = 1.0 + x[0] * x[0] + x[1] * x[1]
    du0 = -x[0] / q1
    du1 = -x[1] / q1
    dv = du0 * v[0] + du1 * v[1]
    vv = v[0] * v[0] + v[1] * v[1]
    # grad R in coordinates is -2x/q1^2 and g^{-1} = q1/4
    s = -0.5 * c / q1
    a[0] = -2.0 * dv * v[0] + vv * du0 + s * x[0]
    a[1] = -2.0 * dv * v[1] + vv * du1 + s * x[1]
    flat = 0.0
    for i in range(2, n):
        a[i] = 0.0
        flat += v[i] * v[i]
    return 4.0 * vv / q1 + flat + 2.0 * c / q1


@numba.njit(cache=True)
def euclidean_rhs(x, v, a, prm):
    """prm = (quadratic flag, constant value)."""
    quadratic = prm[0] > 0.5
    vv = 0.0
    xx = 0.0
    for i in range(x.shape[0]):
        vv += v[i] * v[i]
        xx += x[i] * x[i]
        a[i] = x[i] if quadratic else 0.0
    phi = 0.5 * (1.0 + xx) if quadratic else prm[1]
    return vv + 2.0 * phi


# packed Bryant parameters: header, then SERIES_SLOTS coefficients for each of
# A, Q, U, R_r, R (series region), then the knot arrays w, w', w'', f', f''
HEADER = 6
SERIES_SLOTS = 24


@numba.njit(cache=True)
def _horner(prm, start, r):
    out = 0.0
    for i in range(SERIES_SLOTS - 1, -1, -1):
        out = out * r + prm[start + i]
    return out


@numba.njit(cache=True)
def bryant_rhs(x, v, a, prm):
    """Warped product dr^2 + w^2 g_S in Cartesian form; phi = c R.

    x'' = A |v_t|^2 x - 2 (v.x) B v_t + c R_r x with A = (w w'/r - 1)/r^2,
    B = (w'/w - 1/r)/r and R_r = R'/r."""
    c, N, r0, dr, rlim = prm[0], int(prm[1]), prm[2], prm[3], prm[4]
    n = x.shape[0]
    rr = 0.0
    xv = 0.0
    vv = 0.0
    for i in range(n):
        rr += x[i] * x[i]
        xv += x[i] * v[i]
        vv += v[i] * v[i]
    r = math.sqrt(rr)
    if not r < rlim:  # also catches NaN, which would index past the knots
        for i in range(n):
            a[i] = math.nan
        return math.nan
    if r <= r0:
        s0 = HEADER
        A = _horner(prm, s0, r)
        B = _horner(prm, s0 + SERIES_SLOTS, r) / _horner(prm, s0 + 2 * SERIES_SLOTS, r)
        U = _horner(prm, s0 + 2 * SERIES_SLOTS, r)
        h = U * U
        Rr = _horner(prm, s0 + 3 * SERIES_SLOTS, r)
        R = _horner(prm, s0 + 4 * SERIES_SLOTS, r)
    else:
        base = HEADER + 5 * SERIES_SLOTS
        k = int((r - r0) / dr)
        if k > N - 2:
            k = N - 2
        t = (r - (r0 + k * dr)) / dr
        t2 = t * t
        t3 = t2 * t
        h00 = 2 * t3 - 3 * t2 + 1
        h10 = t3 - 2 * t2 + t
        h01 = -2 * t3 + 3 * t2
        h11 = t3 - t2
        W, W1, W2, FP, F2 = base, base + N, base + 2 * N, base + 3 * N, base + 4 * N
        w = h00 * prm[W + k] + h10 * dr * prm[W1 + k] + h01 * prm[W + k + 1] + h11 * dr * prm[W1 + k + 1]
        w1 = h00 * prm[W1 + k] + h10 * dr * prm[W2 + k] + h01 * prm[W1 + k + 1] + h11 * dr * prm[W2 + k + 1]
        fp = h00 * prm[FP + k] + h10 * dr * prm[F2 + k] + h01 * prm[FP + k + 1] + h11 * dr * prm[F2 + k + 1]
        ndim = prm[5]
        w2 = (ndim - 2) * (1 - w1 * w1) / w + fp * w1
        f2 = (ndim - 1) * w2 / w
        A = (w * w1 / r - 1.0) / rr
        B = (w1 / w - 1.0 / r) / r
        h = (w / r) ** 2
        Rr = -2.0 * fp * f2 / r
        R = 1.0 - fp * fp
    vr = xv / r if r > 0 else 0.0
    vt2 = vv - vr * vr if r > 0 else vv
    for i in range(n):
        vti = v[i] - xv * x[i] / rr if r > 0 else v[i]
        a[i] = A * vt2 * x[i] - 2.0 * xv * B * vti + c * Rr * x[i]
    return h * vt2 + vr * vr + 2.0 * c * R


CIGAR = 0
EUCLIDEAN = 1
BRYANT = 2


@numba.njit(cache=True)
def dispatch(code, x, v, a, prm):
    if code == 0:
        return cigar_rhs(x, v, a, prm)
    if code == 2:
        return bryant_rhs(x, v, a, prm)
    return euclidean_rhs(x, v, a, prm)


@numba.njit(cache=True)
def _step(code, prm, x, v, h, k, tmpx, tmpv, a1, a2, a3, a4):
    n = x.shape[0]
    l1 = dispatch(code, x, v, a1, prm)
    for i in range(n):
        tmpx[i] = x[i] + 0.5 * h * v[i]
        tmpv[i] = v[i] + 0.5 * h * a1[i]
        k[0, i] = tmpv[i]
    l2 = dispatch(code, tmpx, tmpv, a2, prm)
    for i in range(n):
        tmpx[i] = x[i] + 0.5 * h * k[0, i]
        tmpv[i] = v[i] + 0.5 * h * a2[i]
        k[1, i] = tmpv[i]
    l3 = dispatch(code, tmpx, tmpv, a3, prm)
    for i in range(n):
        tmpx[i] = x[i] + h * k[1, i]
        tmpv[i] = v[i] + h * a3[i]
        k[2, i] = tmpv[i]
    l4 = dispatch(code, tmpx, tmpv, a4, prm)
    for i in range(n):
        x[i] = x[i] + h / 6.0 * (v[i] + 2.0 * k[0, i] + 2.0 * k[1, i] + k[2, i])
        v[i] = v[i] + h / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i])
    return h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4)


@numba.njit(cache=True)
def rk4_batch(code, prm, x0, v0, h, nsteps, store):
    """Integrate a batch; returns (X, V, J, exited).  With ``store`` X, V are
    (nsteps+1, B, n), otherwise (1, B, n) holding the final state."""
    B, n = x0.shape
    rows = nsteps + 1 if store else 1
    X = np.full((rows, B, n), np.nan)
    V = np.full((rows, B, n), np.nan)
    J = np.zeros(B)
    exited = np.zeros(B, dtype=np.bool_)
    k = np.empty((3, n))
    tmpx = np.empty(n)
    tmpv = np.empty(n)
    a1 = np.empty(n)
    a2 = np.empty(n)
    a3 = np.empty(n)
    a4 = np.empty(n)
    for b in range(B):
        x = x0[b].copy()
        v = v0[b].copy()
        X[0, b] = x
        V[0, b] = v
        # compensated sum keeps J at the truncation level over long runs
        acc = 0.0
        comp = 0.0
        for s in range(nsteps):
            dj = _step(code, prm, x, v, h, k, tmpx, tmpv, a1, a2, a3, a4)
            y = dj - comp
            t = acc + y
            comp = (t - acc) - y
            acc = t
            ok = True
            for i in range(n):
                if not (math.isfinite(x[i]) and math.isfinite(v[i])):
                    ok = False
            if not ok:
                exited[b] = True
                break
            if store:
                X[s + 1, b] = x
                V[s + 1, b] = v
        if not store:
            X[0, b] = x
            V[0, b] = v
        J[b] = acc
    return X, V, J, exited
