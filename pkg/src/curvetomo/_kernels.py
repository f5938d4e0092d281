"""Numba kernels for line integrals and backprojection on uniform grids (n = 2, 3)."""

import math

import numpy as np
from numba import njit, prange


@njit(cache=True)
def _powers(w, E, out):
    D, n = E.shape
    for a in range(D):
        p = 1.0
        for k in range(n):
            e = E[a, k]
            for _ in range(e):
                p *= w[k]
        out[a] = p


@njit(cache=True)
def _slab(p, w, lo, hi):
    # ray p + s w against the box [lo, hi]; returns (s0, s1) with s0 > s1 on a miss
    s0 = -1e300
    s1 = 1e300
    for k in range(p.shape[0]):
        if w[k] == 0.0:
            if p[k] < lo[k] or p[k] > hi[k]:
                return 1.0, 0.0
        else:
            a = (lo[k] - p[k]) / w[k]
            b = (hi[k] - p[k]) / w[k]
            if a > b:
                a, b = b, a
            if a > s0:
                s0 = a
            if b < s1:
                s1 = b
    return s0, s1


@njit(cache=True)
def _sample3(vals, origin, h, q, coef):
    nx, ny, nz, D = vals.shape
    u0 = (q[0] - origin[0]) / h[0]
    u1 = (q[1] - origin[1]) / h[1]
    u2 = (q[2] - origin[2]) / h[2]
    if u0 < 0.0 or u1 < 0.0 or u2 < 0.0 or u0 > nx - 1 or u1 > ny - 1 or u2 > nz - 1:
        return 0.0
    i = min(int(u0), nx - 2)
    j = min(int(u1), ny - 2)
    k = min(int(u2), nz - 2)
    fx = u0 - i
    fy = u1 - j
    fz = u2 - k
    acc = 0.0
    for di in range(2):
        wx = fx if di else 1.0 - fx
        for dj in range(2):
            wy = fy if dj else 1.0 - fy
            for dk in range(2):
                wz = fz if dk else 1.0 - fz
                wgt = wx * wy * wz
                if wgt == 0.0:
                    continue
                s = 0.0
                for a in range(D):
                    s += coef[a] * vals[i + di, j + dj, k + dk, a]
                acc += wgt * s
    return acc


@njit(cache=True)
def _sample2(vals, origin, h, q, coef):
    nx, ny, D = vals.shape
    u0 = (q[0] - origin[0]) / h[0]
    u1 = (q[1] - origin[1]) / h[1]
    if u0 < 0.0 or u1 < 0.0 or u0 > nx - 1 or u1 > ny - 1:
        return 0.0
    i = min(int(u0), nx - 2)
    j = min(int(u1), ny - 2)
    fx = u0 - i
    fy = u1 - j
    acc = 0.0
    for di in range(2):
        wx = fx if di else 1.0 - fx
        for dj in range(2):
            wy = fy if dj else 1.0 - fy
            wgt = wx * wy
            if wgt == 0.0:
                continue
            s = 0.0
            for a in range(D):
                s += coef[a] * vals[i + di, j + dj, a]
            acc += wgt * s
    return acc


@njit(cache=True)
def _line3(vals, origin, h, lo, hi, p, w, coef, s_step):
    s0, s1 = _slab(p, w, lo, hi)
    if s1 <= s0:
        return 0.0
    N = int(math.ceil((s1 - s0) / s_step))
    if N < 1:
        N = 1
    ds = (s1 - s0) / N
    q = np.empty(3)
    acc = 0.0
    for k in range(N + 1):
        s = s0 + k * ds
        q[0] = p[0] + s * w[0]
        q[1] = p[1] + s * w[1]
        q[2] = p[2] + s * w[2]
        v = _sample3(vals, origin, h, q, coef)
        if k == 0 or k == N:
            v *= 0.5
        acc += v
    return acc * ds


@njit(cache=True)
def _line2(vals, origin, h, lo, hi, p, w, coef, s_step):
    s0, s1 = _slab(p, w, lo, hi)
    if s1 <= s0:
        return 0.0
    N = int(math.ceil((s1 - s0) / s_step))
    if N < 1:
        N = 1
    ds = (s1 - s0) / N
    q = np.empty(2)
    acc = 0.0
    for k in range(N + 1):
        s = s0 + k * ds
        q[0] = p[0] + s * w[0]
        q[1] = p[1] + s * w[1]
        v = _sample2(vals, origin, h, q, coef)
        if k == 0 or k == N:
            v *= 0.5
        acc += v
    return acc * ds


@njit(cache=True)
def _box(vals, origin, h, n):
    shape = np.empty(n)
    for k in range(n):
        shape[k] = vals.shape[k]
    return origin.copy(), origin + (shape - 1.0) * h


@njit(cache=True)
def _coef(w, E, mult, coef):
    _powers(w, E, coef)
    for a in range(E.shape[0]):
        coef[a] *= mult[a]


@njit(parallel=True, cache=True)
def forward3(vals, origin, h, src, dirs, E, mult, s_step):
    """Trapezoid line integrals of <f, w^m> for rays src[t] + s dirs[t, j]."""
    Nt, Nd = dirs.shape[0], dirs.shape[1]
    lo, hi = _box(vals, origin, h, 3)
    out = np.zeros((Nt, Nd))
    for idx in prange(Nt * Nd):
        it = idx // Nd
        j = idx - it * Nd
        coef = np.empty(E.shape[0])
        _coef(dirs[it, j], E, mult, coef)
        out[it, j] = _line3(vals, origin, h, lo, hi, src[it], dirs[it, j], coef, s_step)
    return out


@njit(parallel=True, cache=True)
def forward2(vals, origin, h, src, dirs, E, mult, s_step):
    Nt, Nd = dirs.shape[0], dirs.shape[1]
    lo, hi = _box(vals, origin, h, 2)
    out = np.zeros((Nt, Nd))
    for idx in prange(Nt * Nd):
        it = idx // Nd
        j = idx - it * Nd
        coef = np.empty(E.shape[0])
        _coef(dirs[it, j], E, mult, coef)
        out[it, j] = _line2(vals, origin, h, lo, hi, src[it], dirs[it, j], coef, s_step)
    return out


@njit(cache=True)
def _chart(loc, n):
    # local direction (axis last) -> chart coordinates; Lambert equal-area for n = 3
    if n == 3:
        c = loc[2]
        k = math.sqrt(2.0 / (1.0 + c)) if c > -1.0 else 0.0
        return k * loc[0], k * loc[1]
    return math.atan2(loc[0], loc[1]), 0.0


@njit(parallel=True, cache=True)
def backproject(g, frames, r_max, n_side, src, wt, coords, E, min_dist):
    """sum_t wt g(t, w_x) w_x^m |x - src_t|^(1-n) at each point of ``coords``.

    ``g`` is sampled on a per-t chart grid; bilinear (n=3) or linear (n=2)
    interpolation in chart coordinates.  Returns (values, skipped count).
    """
    P, n = coords.shape
    Nt = src.shape[0]
    D = E.shape[0]
    out = np.zeros((P, D))
    skipped = np.zeros(P, dtype=np.int64)
    for ip in prange(P):
        x = coords[ip]
        d = np.empty(n)
        loc = np.empty(n)
        pw = np.empty(D)
        acc = np.zeros(D)
        for it in range(Nt):
            r2 = 0.0
            for k in range(n):
                d[k] = x[k] - src[it, k]
                r2 += d[k] * d[k]
            r = math.sqrt(r2)
            if r < min_dist:
                skipped[ip] += 1
                continue
            for k in range(n):
                d[k] /= r
            for a in range(n):
                s = 0.0
                for k in range(n):
                    s += frames[it, k, a] * d[k]
                loc[a] = s
            X, Y = _chart(loc, n)
            step = 2.0 * r_max[it] / (n_side - 1)
            uX = (X + r_max[it]) / step
            if uX < 0.0 or uX > n_side - 1:
                continue
            i = min(int(uX), n_side - 2)
            fx = uX - i
            if n == 3:
                uY = (Y + r_max[it]) / step
                if uY < 0.0 or uY > n_side - 1:
                    continue
                j = min(int(uY), n_side - 2)
                fy = uY - j
                val = ((1 - fx) * (1 - fy) * g[it, i * n_side + j] + fx * (1 - fy) * g[it, (i + 1) * n_side + j]
                       + (1 - fx) * fy * g[it, i * n_side + j + 1] + fx * fy * g[it, (i + 1) * n_side + j + 1])
            else:
                val = (1 - fx) * g[it, i] + fx * g[it, i + 1]
            if val == 0.0:
                continue
            val *= wt[it] * r ** (1 - n)
            _powers(d, E, pw)
            for a in range(D):
                acc[a] += val * pw[a]
        for a in range(D):
            out[ip, a] = acc[a]
    return out, skipped


@njit(cache=True)
def _unit_from(x, p, d):
    r2 = 0.0
    for k in range(x.shape[0]):
        d[k] = x[k] - p[k]
        r2 += d[k] * d[k]
    r = math.sqrt(r2)
    if r > 0.0:
        for k in range(x.shape[0]):
            d[k] /= r
    return r


@njit(parallel=True, cache=True)
def direct3(vals, origin, h, src, wt, coords, E, mult, s_step, min_dist):
    """Kernel route: sum_t wt |x - src_t|^(-2) w^m * (line integral through x along w)."""
    P = coords.shape[0]
    D = E.shape[0]
    lo, hi = _box(vals, origin, h, 3)
    out = np.zeros((P, D))
    skipped = np.zeros(P, dtype=np.int64)
    for ip in prange(P):
        d = np.empty(3)
        pw = np.empty(D)
        coef = np.empty(D)
        for it in range(src.shape[0]):
            r = _unit_from(coords[ip], src[it], d)
            if r < min_dist:
                skipped[ip] += 1
                continue
            _powers(d, E, pw)
            for a in range(D):
                coef[a] = mult[a] * pw[a]
            val = _line3(vals, origin, h, lo, hi, src[it], d, coef, s_step) * wt[it] / (r * r)
            for a in range(D):
                out[ip, a] += val * pw[a]
    return out, skipped


@njit(parallel=True, cache=True)
def direct2(vals, origin, h, src, wt, coords, E, mult, s_step, min_dist):
    P = coords.shape[0]
    D = E.shape[0]
    lo, hi = _box(vals, origin, h, 2)
    out = np.zeros((P, D))
    skipped = np.zeros(P, dtype=np.int64)
    for ip in prange(P):
        d = np.empty(2)
        pw = np.empty(D)
        coef = np.empty(D)
        for it in range(src.shape[0]):
            r = _unit_from(coords[ip], src[it], d)
            if r < min_dist:
                skipped[ip] += 1
                continue
            _powers(d, E, pw)
            for a in range(D):
                coef[a] = mult[a] * pw[a]
            val = _line2(vals, origin, h, lo, hi, src[it], d, coef, s_step) * wt[it] / r
            for a in range(D):
                out[ip, a] += val * pw[a]
    return out, skipped
