"""Pure-Python twins of the compiled kernels in ``_kernels.pyx``.

For the geometric kernels arithmetic is issued in the same order as the C
code, so results agree bit for bit; their inner loops are plain Python
floats.  The Michell transforms are numpy-vectorised and agree to rounding.
"""
from __future__ import annotations

import math

import numpy as np

# ---------------------------------------------------------------- tri / tri


def _sign(x: float) -> int:
    return 1 if x > 0.0 else (-1 if x < 0.0 else 0)


def _orient2(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _segments_meet(ax, ay, bx, by, cx, cy, dx, dy) -> bool:
    o1 = _sign(_orient2(ax, ay, bx, by, cx, cy))
    o2 = _sign(_orient2(ax, ay, bx, by, dx, dy))
    o3 = _sign(_orient2(cx, cy, dx, dy, ax, ay))
    o4 = _sign(_orient2(cx, cy, dx, dy, bx, by))
    if o1 * o2 > 0 or o3 * o4 > 0:
        return False
    if o1 == 0 and o2 == 0:
        if max(ax, bx) < min(cx, dx) or max(cx, dx) < min(ax, bx):
            return False
        if max(ay, by) < min(cy, dy) or max(cy, dy) < min(ay, by):
            return False
    return True


def _point_in_tri(px, py, t) -> bool:
    s0 = _sign(_orient2(t[0], t[1], t[2], t[3], px, py))
    s1 = _sign(_orient2(t[2], t[3], t[4], t[5], px, py))
    s2 = _sign(_orient2(t[4], t[5], t[0], t[1], px, py))
    return (s0 >= 0 and s1 >= 0 and s2 >= 0) or (s0 <= 0 and s1 <= 0 and s2 <= 0)


def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _coplanar(n, v0, v1, v2, u0, u1, u2) -> bool:
    ax, ay, az = abs(n[0]), abs(n[1]), abs(n[2])
    if ax > ay:
        i0, i1 = (1, 2) if ax > az else (0, 1)
    else:
        i0, i1 = (0, 1) if az > ay else (0, 2)
    tv = (v0[i0], v0[i1], v1[i0], v1[i1], v2[i0], v2[i1])
    tu = (u0[i0], u0[i1], u1[i0], u1[i1], u2[i0], u2[i1])
    for i in range(3):
        for j in range(3):
            if _segments_meet(tv[2 * i], tv[2 * i + 1], tv[(2 * i + 2) % 6], tv[(2 * i + 3) % 6],
                              tu[2 * j], tu[2 * j + 1], tu[(2 * j + 2) % 6], tu[(2 * j + 3) % 6]):
                return True
    return _point_in_tri(tv[0], tv[1], tu) or _point_in_tri(tu[0], tu[1], tv)


def _interval(p0, p1, p2, d0, d1, d2):
    if d0 * d1 > 0.0:
        a = p2 + (p0 - p2) * d2 / (d2 - d0)
        b = p2 + (p1 - p2) * d2 / (d2 - d1)
    elif d0 * d2 > 0.0:
        a = p1 + (p0 - p1) * d1 / (d1 - d0)
        b = p1 + (p2 - p1) * d1 / (d1 - d2)
    elif d1 * d2 > 0.0 or d0 != 0.0:
        a = p0 + (p1 - p0) * d0 / (d0 - d1)
        b = p0 + (p2 - p0) * d0 / (d0 - d2)
    elif d1 != 0.0:
        a = p1 + (p0 - p1) * d1 / (d1 - d0)
        b = p1 + (p2 - p1) * d1 / (d1 - d2)
    elif d2 != 0.0:
        a = p2 + (p0 - p2) * d2 / (d2 - d0)
        b = p2 + (p1 - p2) * d2 / (d2 - d1)
    else:
        return None
    return (a, b) if a <= b else (b, a)


COPLANAR_TOL = 1e-10


def _extent(v0, v1, v2, u0, u1, u2):
    e = 0.0
    for k in range(3):
        for p in (v1, v2, u0, u1, u2):
            t = abs(p[k] - v0[k])
            if t > e:
                e = t
    return e


def _snap(d, tol):
    return 0.0 if abs(d) <= tol else d


def _tri_tri(v0, v1, v2, u0, u1, u2) -> bool:
    ext = _extent(v0, v1, v2, u0, u1, u2)
    n1 = _cross(_sub(v1, v0), _sub(v2, v0))
    d1 = -_dot(n1, v0)
    tol = COPLANAR_TOL * (abs(n1[0]) + abs(n1[1]) + abs(n1[2])) * ext
    du0, du1, du2 = (_snap(_dot(n1, u) + d1, tol) for u in (u0, u1, u2))
    if du0 * du1 > 0.0 and du0 * du2 > 0.0:
        return False
    n2 = _cross(_sub(u1, u0), _sub(u2, u0))
    d2 = -_dot(n2, u0)
    tol = COPLANAR_TOL * (abs(n2[0]) + abs(n2[1]) + abs(n2[2])) * ext
    dv0, dv1, dv2 = (_snap(_dot(n2, v) + d2, tol) for v in (v0, v1, v2))
    if dv0 * dv1 > 0.0 and dv0 * dv2 > 0.0:
        return False
    if du0 == 0.0 and du1 == 0.0 and du2 == 0.0:
        return _coplanar(n1, v0, v1, v2, u0, u1, u2)
    dd = _cross(n1, n2)
    mx, axis = abs(dd[0]), 0
    if abs(dd[1]) > mx:
        mx, axis = abs(dd[1]), 1
    if abs(dd[2]) > mx:
        axis = 2
    iv = _interval(v0[axis], v1[axis], v2[axis], dv0, dv1, dv2)
    iu = _interval(u0[axis], u1[axis], u2[axis], du0, du1, du2)
    if iv is None or iu is None:
        return _coplanar(n1, v0, v1, v2, u0, u1, u2)
    return not (iv[1] < iu[0] or iu[1] < iv[0])


def tri_tri_intersect(verts: np.ndarray, faces: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    vl = verts.tolist()
    fl = faces.tolist()
    out = np.zeros(len(pairs), dtype=np.uint8)
    for k, (a, b) in enumerate(pairs.tolist()):
        fa, fb = fl[a], fl[b]
        out[k] = _tri_tri(vl[fa[0]], vl[fa[1]], vl[fa[2]], vl[fb[0]], vl[fb[1]], vl[fb[2]])
    return out


# ---------------------------------------------------------------- maxbox


def _half_breadth(prm, x, h):
    us = 1.0 - x / prm[3]
    ub = 1.0 - (1.0 - x) / prm[2]
    us = min(max(us, 0.0), 1.0)
    ub = min(max(ub, 0.0), 1.0)
    b = (1.0 - math.pow(us, prm[5])) * (1.0 - math.pow(ub, prm[4]))
    ks = prm[10] * us * us
    kb = prm[9] * ub * ub
    k = ks if ks > kb else kb
    if h < k:
        return 0.0
    zeta = (h - k) / (1.0 - k)
    r = 1.0 if zeta >= prm[7] else zeta / prm[7]
    s = prm[6] + (1.0 - prm[6]) * math.pow(r, prm[8])
    return prm[0] * b * s


def _box_objective(prm, u, nsamp, penalty):
    x0, l, w, d = u[0], u[1], u[2] * prm[0], u[3] * prm[1]
    pen = 0.0
    for viol in (-x0, x0 + l - 1.0, -l, -w, -d, d - prm[1]):
        if viol > pen:
            pen = viol
    h = min(max((prm[1] - d) / prm[1], 0.0), 1.0)
    for s in range(nsamp):
        y = _half_breadth(prm, x0 + l * s / (nsamp - 1), h)
        if w - y > pen:
            pen = w - y
    return -(l * 2.0 * w * d) + penalty * pen


def _det4(m):
    s0 = m[0][0] * m[1][1] - m[1][0] * m[0][1]
    s1 = m[0][0] * m[1][2] - m[1][0] * m[0][2]
    s2 = m[0][0] * m[1][3] - m[1][0] * m[0][3]
    s3 = m[0][1] * m[1][2] - m[1][1] * m[0][2]
    s4 = m[0][1] * m[1][3] - m[1][1] * m[0][3]
    s5 = m[0][2] * m[1][3] - m[1][2] * m[0][3]
    c5 = m[2][2] * m[3][3] - m[3][2] * m[2][3]
    c4 = m[2][1] * m[3][3] - m[3][1] * m[2][3]
    c3 = m[2][1] * m[3][2] - m[3][1] * m[2][2]
    c2 = m[2][0] * m[3][3] - m[3][0] * m[2][3]
    c1 = m[2][0] * m[3][2] - m[3][0] * m[2][2]
    c0 = m[2][0] * m[3][1] - m[3][0] * m[2][1]
    return s0 * c5 - s1 * c4 + s2 * c3 + s3 * c2 - s4 * c1 + s5 * c0


def _sort_simplex(sx, f):
    # insertion sort, stable like the C version
    for i in range(1, 5):
        tf, tx = f[i], sx[i]
        j = i - 1
        while j >= 0 and f[j] > tf:
            f[j + 1], sx[j + 1] = f[j], sx[j]
            j -= 1
        f[j + 1], sx[j + 1] = tf, tx


def _nelder_mead(prm, start, step, max_iter, vol_tol, nsamp, penalty):
    sx = []
    for i in range(5):
        x = list(start)
        if i > 0:
            x[i - 1] = start[i - 1] + step
        sx.append(x)
    f = [_box_objective(prm, x, nsamp, penalty) for x in sx]
    _sort_simplex(sx, f)
    it = 0
    while it < max_iter:
        m = [[sx[i + 1][k] - sx[0][k] for k in range(4)] for i in range(4)]
        if abs(_det4(m)) / 24.0 < vol_tol:
            break
        it += 1
        c = [(sx[0][k] + sx[1][k] + sx[2][k] + sx[3][k]) / 4.0 for k in range(4)]
        xr = [c[k] + (c[k] - sx[4][k]) for k in range(4)]
        fr = _box_objective(prm, xr, nsamp, penalty)
        shrink = False
        if fr < f[0]:
            xe = [c[k] + 2.0 * (xr[k] - c[k]) for k in range(4)]
            fe = _box_objective(prm, xe, nsamp, penalty)
            if fe < fr:
                sx[4], f[4] = xe, fe
            else:
                sx[4], f[4] = xr, fr
        elif fr < f[3]:
            sx[4], f[4] = xr, fr
        elif fr < f[4]:
            xc = [c[k] + 0.5 * (xr[k] - c[k]) for k in range(4)]
            fc = _box_objective(prm, xc, nsamp, penalty)
            if fc <= fr:
                sx[4], f[4] = xc, fc
            else:
                shrink = True
        else:
            xc = [c[k] + 0.5 * (sx[4][k] - c[k]) for k in range(4)]
            fc = _box_objective(prm, xc, nsamp, penalty)
            if fc < f[4]:
                sx[4], f[4] = xc, fc
            else:
                shrink = True
        if shrink:
            for i in range(1, 5):
                sx[i] = [sx[0][k] + 0.5 * (sx[i][k] - sx[0][k]) for k in range(4)]
                f[i] = _box_objective(prm, sx[i], nsamp, penalty)
        _sort_simplex(sx, f)
    return sx[0], it


def maxbox_search(prm, starts, step, max_iter, vol_tol, nsamp, penalty) -> np.ndarray:
    prm = [float(p) for p in prm]
    out = np.zeros((len(starts), 5))
    for i, s in enumerate(np.asarray(starts).tolist()):
        best, it = _nelder_mead(prm, s, step, max_iter, vol_tol, nsamp, penalty)
        out[i, :4] = best
        out[i, 4] = it
    return out


def box_half_breadth(prm, x, h):
    return _half_breadth([float(p) for p in prm], float(x), float(h))


# ---------------------------------------------------------------- nearest neighbour


def nearest_indices(queries: np.ndarray, pool: np.ndarray, exclude: np.ndarray):
    """Vectorised over the pool; the per-coordinate accumulation order matches C."""
    nq = len(queries)
    idx = np.empty(nq, dtype=np.int64)
    dist = np.empty(nq)
    chunk = max(1, 2_000_000 // max(len(pool), 1))
    for s in range(0, nq, chunk):
        q = queries[s:s + chunk]
        d2 = np.zeros((len(q), len(pool)))
        for k in range(pool.shape[1]):
            t = q[:, k, None] - pool[None, :, k]
            d2 = d2 + t * t
        ex = exclude[s:s + chunk]
        rows = np.flatnonzero(ex >= 0)
        d2[rows, ex[rows]] = np.inf
        arg = np.argmin(d2, axis=1)      # first occurrence on ties
        idx[s:s + chunk] = arg
        dist[s:s + chunk] = d2[np.arange(len(q)), arg]
    return idx, dist


# ---------------------------------------------------------------- Michell transforms


def z_transform(Y: np.ndarray, Z: np.ndarray, kappa: np.ndarray) -> np.ndarray:
    step = np.diff(Z, axis=1)
    a = kappa[:, None, None] * step[None, :, :]
    top = np.exp(kappa[:, None, None] * Z[None, :, 1:])
    em = -np.expm1(-a)
    small = a < 1e-2
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        e0 = np.where(small, 1.0 - a * (1 / 2 - a * (1 / 6 - a * (1 / 24 - a / 120))), em / a)
        e1 = np.where(small, 0.5 - a * (1 / 3 - a * (1 / 8 - a * (1 / 30 - a / 144))),
                      (em - a * np.exp(-a)) / (a * a))
    cell = step[None] * top * ((e0 - e1) * Y[None, :, 1:] + e1 * Y[None, :, :-1])
    return cell.sum(axis=2)


def x_transform(G: np.ndarray, x: np.ndarray, k: np.ndarray) -> np.ndarray:
    h = np.diff(x)
    th = k[:, None] * h[None, :]
    small = np.abs(th) < 1e-2
    c, s = np.cos(th), np.sin(th)
    with np.errstate(divide="ignore", invalid="ignore"):
        a0 = np.where(small, 1.0 - th * th / 6.0 + 1j * (th / 2.0 - th ** 3 / 24.0),
                      s / th + 1j * (1.0 - c) / th)
        a1 = np.where(small, 0.5 - th * th / 8.0 + 1j * (th / 3.0 - th ** 3 / 30.0),
                      s / th + (c - 1.0) / (th * th) + 1j * (-c / th + s / (th * th)))
    g0 = G[:, :-1]
    dg = G[:, 1:] - g0
    phase = np.exp(1j * k[:, None] * x[None, :-1])
    return (phase * h[None, :] * (g0 * a0 + dg * a1)).sum(axis=1)
