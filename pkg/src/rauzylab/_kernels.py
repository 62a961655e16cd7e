"""Compiled float64 orbit kernels for the accelerated and induced maps.

All kernels work on lengths normalised to the unit simplex and on the
integer tables of :meth:`rauzylab.rauzy_veech.RauzyClass.kernel_tables`.
They return a status code instead of raising.
"""
import numpy as np
from numba import njit

OK = 0
TIE = 1
DEGENERATE = 2
RETURN_CAP = 3

TIE_TOL = 1e-12
DEGENERATE_TOL = 1e-13


@njit(cache=True, nogil=True)
def t1_step(lam, v, last, nxt, tail, tlen):
    """One accelerated step in place.

    During a burst of type ``eps`` the winner stays fixed while the symbols
    after it in the opposite row rotate; whole rotations are removed in one
    division.  Returns ``(status, v, n1, eps, roof)`` where ``roof`` is the
    sum of the elementary roofs ``-log(1 - loser/|lambda|)``.
    """
    a0 = last[v, 0]
    a1 = last[v, 1]
    diff = lam[a0] - lam[a1]
    if abs(diff) <= TIE_TOL:
        return TIE, v, 0, 0, 0.0
    eps = 0 if diff > 0 else 1
    w = last[v, eps]
    removed = 0.0
    n = 0
    c = tlen[v, eps]
    s = 0.0
    big = 0.0
    for i in range(c):
        x = lam[tail[v, eps, i]]
        s += x
        if x > big:
            big = x
    excess = lam[w] - big
    if excess > 3.0 * s:
        q = np.int64(excess / s) - 1
        lam[w] -= q * s
        removed += q * s
        n += q * c
    while True:
        loser = last[v, 1 - eps]
        diff = lam[w] - lam[loser]
        if abs(diff) <= TIE_TOL * (1.0 - removed):
            return TIE, v, n, eps, 0.0
        if diff < 0:
            break
        removed += lam[loser]
        lam[w] = diff
        v = nxt[v, eps]
        n += 1
    total = 0.0
    for i in range(lam.shape[0]):
        total += lam[i]
    small = 1.0
    for i in range(lam.shape[0]):
        lam[i] /= total
        if lam[i] < small:
            small = lam[i]
    if small < DEGENERATE_TOL:
        return DEGENERATE, v, n, eps, 0.0
    return OK, v, n, eps, -np.log1p(-removed)


@njit(cache=True, nogil=True)
def in_cone(inv, lam):
    d = lam.shape[0]
    for i in range(d):
        s = 0.0
        for j in range(d):
            s += inv[i, j] * lam[j]
        if s <= 0.0:
            return False
    return True


@njit(cache=True, nogil=True)
def t2_step(lam, v, last, nxt, tail, tlen, vb, binv, cap):
    """Iterate :func:`t1_step` until the point re-enters the base cone.

    Returns ``(status, v, n2, r2)``.
    """
    n2 = 0
    r2 = 0.0
    while n2 < cap:
        st, v, n1, eps, r = t1_step(lam, v, last, nxt, tail, tlen)
        if st != OK:
            return st, v, n2, r2
        n2 += 1
        r2 += r
        if v == vb and in_cone(binv, lam):
            return OK, v, n2, r2
    return RETURN_CAP, v, n2, r2


@njit(cache=True, nogil=True)
def t1_orbit(lam0, v0, n, last, nxt, tail, tlen):
    """``n`` accelerated steps; row ``j`` of the output is the j-th iterate."""
    d = lam0.shape[0]
    pts = np.empty((n + 1, d))
    verts = np.empty(n + 1, np.int64)
    n1s = np.empty(n, np.int64)
    types = np.empty(n, np.int64)
    roofs = np.empty(n)
    lam = lam0.copy()
    v = v0
    pts[0] = lam
    verts[0] = v
    for j in range(n):
        st, v, n1, eps, r = t1_step(lam, v, last, nxt, tail, tlen)
        if st != OK:
            return st, j, pts, verts, n1s, types, roofs
        pts[j + 1] = lam
        verts[j + 1] = v
        n1s[j] = n1
        types[j] = eps
        roofs[j] = r
    return OK, n, pts, verts, n1s, types, roofs


@njit(cache=True, nogil=True)
def t2_orbit(lam0, v0, n, last, nxt, tail, tlen, vb, binv, cap):
    """``n`` first-return steps from a point of the base."""
    d = lam0.shape[0]
    pts = np.empty((n + 1, d))
    n2s = np.empty(n, np.int64)
    r2s = np.empty(n)
    lam = lam0.copy()
    v = v0
    pts[0] = lam
    for j in range(n):
        st, v, n2, r2 = t2_step(lam, v, last, nxt, tail, tlen, vb, binv, cap)
        if st != OK:
            return st, j, pts, n2s, r2s
        pts[j + 1] = lam
        n2s[j] = n2
        r2s[j] = r2
    return OK, n, pts, n2s, r2s


@njit(cache=True, nogil=True)
def t2_map_batch(points, v0, last, nxt, tail, tlen, vb, binv, cap):
    """Apply the first-return map once to every row of ``points``."""
    m, d = points.shape
    out = np.empty((m, d))
    n2s = np.zeros(m, np.int64)
    r2s = np.zeros(m)
    status = np.zeros(m, np.int64)
    for i in range(m):
        lam = points[i].copy()
        st, v, n2, r2 = t2_step(lam, v0, last, nxt, tail, tlen, vb, binv, cap)
        out[i] = lam
        n2s[i] = n2
        r2s[i] = r2
        status[i] = st
    return out, n2s, r2s, status


@njit(cache=True, nogil=True)
def t2_iterate(lam0, v0, k, last, nxt, tail, tlen, vb, binv, cap):
    """``k`` first-return steps, keeping only the end point."""
    lam = lam0.copy()
    v = v0
    for j in range(k):
        st, v, n2, r2 = t2_step(lam, v, last, nxt, tail, tlen, vb, binv, cap)
        if st != OK:
            return st, lam
    return OK, lam


@njit(cache=True, nogil=True)
def t2_first_hit(lam0, v0, center, radius, cap_steps, last, nxt, tail, tlen, vb, binv, cap):
    """Smallest ``j >= 1`` with the j-th return inside the ball (full coordinates).

    Returns ``(status, j)``; ``j = 0`` when no hit occurred within
    ``cap_steps`` returns.
    """
    lam = lam0.copy()
    v = v0
    m = lam.shape[0]
    r2max = radius * radius
    for j in range(1, cap_steps + 1):
        st, v, n2, r2 = t2_step(lam, v, last, nxt, tail, tlen, vb, binv, cap)
        if st != OK:
            return st, j
        dist = 0.0
        for i in range(m):
            x = lam[i] - center[i]
            dist += x * x
        if dist < r2max:
            return OK, j
    return OK, 0


@njit(cache=True, nogil=True)
def t1_first_hit(lam0, v0, center, radius, cap_steps, last, nxt, tail, tlen, vb, binv):
    """As :func:`t2_first_hit` for the accelerated map, target inside the base."""
    lam = lam0.copy()
    v = v0
    m = lam.shape[0]
    r2max = radius * radius
    for j in range(1, cap_steps + 1):
        st, v, n1, eps, r = t1_step(lam, v, last, nxt, tail, tlen)
        if st != OK:
            return st, j
        if v != vb:
            continue
        dist = 0.0
        for i in range(m):
            x = lam[i] - center[i]
            dist += x * x
        if dist < r2max and in_cone(binv, lam):
            return OK, j
    return OK, 0


@njit(cache=True, nogil=True)
def _dist2(lam, center):
    s = 0.0
    for i in range(lam.shape[0]):
        x = lam[i] - center[i]
        s += x * x
    return s


@njit(cache=True, nogil=True)
def t2_min_dist(lam0, v0, n, center, last, nxt, tail, tlen, vb, binv, cap):
    """Smallest squared distance to ``center`` over the points ``T2^j x``, ``0 <= j < n``."""
    lam = lam0.copy()
    v = v0
    best = _dist2(lam, center)
    for j in range(1, n):
        st, v, n2, r2 = t2_step(lam, v, last, nxt, tail, tlen, vb, binv, cap)
        if st != OK:
            return st, j, best
        d2 = _dist2(lam, center)
        if d2 < best:
            best = d2
    return OK, n, best


@njit(cache=True, nogil=True)
def t2_nested_hits(lam0, v0, n, center, rad2, last, nxt, tail, tlen, vb, binv, cap):
    """Indices ``j < n`` with ``|T2^j x - center|^2 < rad2[j]``.

    Returns ``(status, steps_done, hits)``.
    """
    lam = lam0.copy()
    v = v0
    buf = np.empty(1024, np.int64)
    k = 0
    for j in range(n):
        if j > 0:
            st, v, n2, r2 = t2_step(lam, v, last, nxt, tail, tlen, vb, binv, cap)
            if st != OK:
                return st, j, buf[:k].copy()
        if _dist2(lam, center) < rad2[j]:
            if k == buf.shape[0]:
                nb = np.empty(2 * k, np.int64)
                nb[:k] = buf
                buf = nb
            buf[k] = j
            k += 1
    return OK, n, buf[:k].copy()


@njit(cache=True, nogil=True)
def t1_nested_hits(lam0, v0, n, stride, center, rad2, last, nxt, tail, tlen, vb, binv):
    """Indices ``j < n`` with ``T1^(stride j) x`` in the base and within ``rad2[j]`` of ``center``."""
    lam = lam0.copy()
    v = v0
    buf = np.empty(1024, np.int64)
    k = 0
    for j in range(n):
        if j > 0:
            for _ in range(stride):
                st, v, n1, eps, r = t1_step(lam, v, last, nxt, tail, tlen)
                if st != OK:
                    return st, j, buf[:k].copy()
        if v == vb and _dist2(lam, center) < rad2[j] and in_cone(binv, lam):
            if k == buf.shape[0]:
                nb = np.empty(2 * k, np.int64)
                nb[:k] = buf
                buf = nb
            buf[k] = j
            k += 1
    return OK, n, buf[:k].copy()


@njit(cache=True, nogil=True)
def t1_min_dist(lam0, v0, n, center, last, nxt, tail, tlen, vb, binv):
    """Smallest squared distance to ``center`` over ``T1^j x`` lying in the base, ``0 <= j < n``."""
    lam = lam0.copy()
    v = v0
    best = np.inf
    for j in range(n):
        if j > 0:
            st, v, n1, eps, r = t1_step(lam, v, last, nxt, tail, tlen)
            if st != OK:
                return st, j, best
        if v == vb and in_cone(binv, lam):
            d2 = _dist2(lam, center)
            if d2 < best:
                best = d2
    return OK, n, best
