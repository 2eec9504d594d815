# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops.

Each routine has a twin in ``_fallback.py``.  The geometric kernels issue
their floating-point operations in the same order so both paths give
identical bits; the two Michell transforms are vectorised there instead and
agree to rounding.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport pow, fabs, sin, cos, exp, expm1

cnp.import_array()

# ---------------------------------------------------------------- tri / tri


cdef inline void _sub(const double* a, const double* b, double* out) noexcept nogil:
    out[0] = a[0] - b[0]
    out[1] = a[1] - b[1]
    out[2] = a[2] - b[2]


cdef inline void _cross(const double* a, const double* b, double* out) noexcept nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


cdef inline double _dot(const double* a, const double* b) noexcept nogil:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


cdef inline double _orient2(double ax, double ay, double bx, double by,
                            double cx, double cy) noexcept nogil:
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


cdef inline int _sign(double x) noexcept nogil:
    if x > 0.0:
        return 1
    if x < 0.0:
        return -1
    return 0


cdef int _segments_meet(double ax, double ay, double bx, double by,
                        double cx, double cy, double dx, double dy) noexcept nogil:
    cdef int o1 = _sign(_orient2(ax, ay, bx, by, cx, cy))
    cdef int o2 = _sign(_orient2(ax, ay, bx, by, dx, dy))
    cdef int o3 = _sign(_orient2(cx, cy, dx, dy, ax, ay))
    cdef int o4 = _sign(_orient2(cx, cy, dx, dy, bx, by))
    if o1 * o2 > 0 or o3 * o4 > 0:
        return 0
    if o1 == 0 and o2 == 0:
        # collinear: overlapping projections
        if max(ax, bx) < min(cx, dx) or max(cx, dx) < min(ax, bx):
            return 0
        if max(ay, by) < min(cy, dy) or max(cy, dy) < min(ay, by):
            return 0
    return 1


cdef int _point_in_tri(double px, double py, double* t) noexcept nogil:
    cdef int s0 = _sign(_orient2(t[0], t[1], t[2], t[3], px, py))
    cdef int s1 = _sign(_orient2(t[2], t[3], t[4], t[5], px, py))
    cdef int s2 = _sign(_orient2(t[4], t[5], t[0], t[1], px, py))
    if (s0 >= 0 and s1 >= 0 and s2 >= 0) or (s0 <= 0 and s1 <= 0 and s2 <= 0):
        return 1
    return 0


cdef int _coplanar(const double* n, const double* v0, const double* v1, const double* v2,
                   const double* u0, const double* u1, const double* u2) noexcept nogil:
    cdef int i0, i1, i, j
    cdef double ax = fabs(n[0]), ay = fabs(n[1]), az = fabs(n[2])
    cdef double tv[6]
    cdef double tu[6]
    if ax > ay:
        if ax > az:
            i0 = 1; i1 = 2
        else:
            i0 = 0; i1 = 1
    else:
        if az > ay:
            i0 = 0; i1 = 1
        else:
            i0 = 0; i1 = 2
    tv[0] = v0[i0]; tv[1] = v0[i1]; tv[2] = v1[i0]; tv[3] = v1[i1]; tv[4] = v2[i0]; tv[5] = v2[i1]
    tu[0] = u0[i0]; tu[1] = u0[i1]; tu[2] = u1[i0]; tu[3] = u1[i1]; tu[4] = u2[i0]; tu[5] = u2[i1]
    for i in range(3):
        for j in range(3):
            if _segments_meet(tv[2 * i], tv[2 * i + 1], tv[(2 * i + 2) % 6], tv[(2 * i + 3) % 6],
                              tu[2 * j], tu[2 * j + 1], tu[(2 * j + 2) % 6], tu[(2 * j + 3) % 6]):
                return 1
    if _point_in_tri(tv[0], tv[1], tu):
        return 1
    if _point_in_tri(tu[0], tu[1], tv):
        return 1
    return 0


cdef int _interval(double p0, double p1, double p2, double d0, double d1, double d2,
                   double* lo, double* hi) noexcept nogil:
    """Segment of the plane-intersection line covered by one triangle; 1 if coplanar."""
    cdef double a, b
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
        return 1
    if a > b:
        a, b = b, a
    lo[0] = a
    hi[0] = b
    return 0


cdef double COPLANAR_TOL = 1e-10


cdef double _extent(const double* v0, const double* v1, const double* v2,
                    const double* u0, const double* u1, const double* u2) noexcept nogil:
    cdef double e = 0.0, t
    cdef int k
    for k in range(3):
        t = fabs(v1[k] - v0[k])
        if t > e:
            e = t
        t = fabs(v2[k] - v0[k])
        if t > e:
            e = t
        t = fabs(u0[k] - v0[k])
        if t > e:
            e = t
        t = fabs(u1[k] - v0[k])
        if t > e:
            e = t
        t = fabs(u2[k] - v0[k])
        if t > e:
            e = t
    return e


cdef int _tri_tri(const double* v0, const double* v1, const double* v2,
                  const double* u0, const double* u1, const double* u2) noexcept nogil:
    cdef double e1[3]
    cdef double e2[3]
    cdef double n1[3]
    cdef double n2[3]
    cdef double dd[3]
    cdef double d1, d2, du0, du1, du2, dv0, dv1, dv2, mx, bb, cc
    cdef double lo1, hi1, lo2, hi2, ext, tol
    cdef int axis
    ext = _extent(v0, v1, v2, u0, u1, u2)
    _sub(v1, v0, e1)
    _sub(v2, v0, e2)
    _cross(e1, e2, n1)
    d1 = -_dot(n1, v0)
    du0 = _dot(n1, u0) + d1
    du1 = _dot(n1, u1) + d1
    du2 = _dot(n1, u2) + d1
    # plane distances below round-off level of the pair are treated as zero
    tol = COPLANAR_TOL * (fabs(n1[0]) + fabs(n1[1]) + fabs(n1[2])) * ext
    if fabs(du0) <= tol:
        du0 = 0.0
    if fabs(du1) <= tol:
        du1 = 0.0
    if fabs(du2) <= tol:
        du2 = 0.0
    if du0 * du1 > 0.0 and du0 * du2 > 0.0:
        return 0
    _sub(u1, u0, e1)
    _sub(u2, u0, e2)
    _cross(e1, e2, n2)
    d2 = -_dot(n2, u0)
    dv0 = _dot(n2, v0) + d2
    dv1 = _dot(n2, v1) + d2
    dv2 = _dot(n2, v2) + d2
    tol = COPLANAR_TOL * (fabs(n2[0]) + fabs(n2[1]) + fabs(n2[2])) * ext
    if fabs(dv0) <= tol:
        dv0 = 0.0
    if fabs(dv1) <= tol:
        dv1 = 0.0
    if fabs(dv2) <= tol:
        dv2 = 0.0
    if dv0 * dv1 > 0.0 and dv0 * dv2 > 0.0:
        return 0
    if du0 == 0.0 and du1 == 0.0 and du2 == 0.0:
        return _coplanar(n1, v0, v1, v2, u0, u1, u2)
    _cross(n1, n2, dd)
    mx = fabs(dd[0])
    axis = 0
    bb = fabs(dd[1])
    cc = fabs(dd[2])
    if bb > mx:
        mx = bb
        axis = 1
    if cc > mx:
        axis = 2
    if _interval(v0[axis], v1[axis], v2[axis], dv0, dv1, dv2, &lo1, &hi1):
        return _coplanar(n1, v0, v1, v2, u0, u1, u2)
    if _interval(u0[axis], u1[axis], u2[axis], du0, du1, du2, &lo2, &hi2):
        return _coplanar(n1, v0, v1, v2, u0, u1, u2)
    if hi1 < lo2 or hi2 < lo1:
        return 0
    return 1


def tri_tri_intersect(const double[:, ::1] verts, const cnp.int64_t[:, ::1] faces,
                      const cnp.int64_t[:, ::1] pairs):
    """1 where the two faces of a pair intersect (touching counts), else 0."""
    cdef Py_ssize_t k, n = pairs.shape[0]
    cdef cnp.int64_t a, b
    out = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] res = out
    with nogil:
        for k in range(n):
            a = pairs[k, 0]
            b = pairs[k, 1]
            res[k] = _tri_tri(&verts[faces[a, 0], 0], &verts[faces[a, 1], 0], &verts[faces[a, 2], 0],
                              &verts[faces[b, 0], 0], &verts[faces[b, 1], 0], &verts[faces[b, 2], 0])
    return out


# ---------------------------------------------------------------- maxbox

# prm layout: Bd, Dd, Lb, Ls, pB, pS, Bk, zk, pC, rB, rS (all LOA-normalised)

cdef double _half_breadth(const double* prm, double x, double h) noexcept nogil:
    cdef double us = 1.0 - x / prm[3]
    cdef double ub = 1.0 - (1.0 - x) / prm[2]
    cdef double b, k, ks, kb, zeta, r, s
    if us < 0.0:
        us = 0.0
    if us > 1.0:
        us = 1.0
    if ub < 0.0:
        ub = 0.0
    if ub > 1.0:
        ub = 1.0
    b = (1.0 - pow(us, prm[5])) * (1.0 - pow(ub, prm[4]))
    ks = prm[10] * us * us
    kb = prm[9] * ub * ub
    k = ks if ks > kb else kb
    if h < k:
        return 0.0
    zeta = (h - k) / (1.0 - k)
    if zeta >= prm[7]:
        r = 1.0
    else:
        r = zeta / prm[7]
    s = prm[6] + (1.0 - prm[6]) * pow(r, prm[8])
    return prm[0] * b * s


cdef double _box_objective(const double* prm, const double* u, int nsamp,
                           double penalty) noexcept nogil:
    cdef double x0 = u[0], l = u[1], w = u[2] * prm[0], d = u[3] * prm[1]
    cdef double pen = 0.0, h, xs, y
    cdef int s
    if -x0 > pen:
        pen = -x0
    if x0 + l - 1.0 > pen:
        pen = x0 + l - 1.0
    if -l > pen:
        pen = -l
    if -w > pen:
        pen = -w
    if -d > pen:
        pen = -d
    if d - prm[1] > pen:
        pen = d - prm[1]
    h = (prm[1] - d) / prm[1]
    if h < 0.0:
        h = 0.0
    if h > 1.0:
        h = 1.0
    for s in range(nsamp):
        xs = x0 + l * s / (nsamp - 1)
        y = _half_breadth(prm, xs, h)
        if w - y > pen:
            pen = w - y
    return -(l * 2.0 * w * d) + penalty * pen


cdef double _det4(double m[4][4]) noexcept nogil:
    cdef double s0 = m[0][0] * m[1][1] - m[1][0] * m[0][1]
    cdef double s1 = m[0][0] * m[1][2] - m[1][0] * m[0][2]
    cdef double s2 = m[0][0] * m[1][3] - m[1][0] * m[0][3]
    cdef double s3 = m[0][1] * m[1][2] - m[1][1] * m[0][2]
    cdef double s4 = m[0][1] * m[1][3] - m[1][1] * m[0][3]
    cdef double s5 = m[0][2] * m[1][3] - m[1][2] * m[0][3]
    cdef double c5 = m[2][2] * m[3][3] - m[3][2] * m[2][3]
    cdef double c4 = m[2][1] * m[3][3] - m[3][1] * m[2][3]
    cdef double c3 = m[2][1] * m[3][2] - m[3][1] * m[2][2]
    cdef double c2 = m[2][0] * m[3][3] - m[3][0] * m[2][3]
    cdef double c1 = m[2][0] * m[3][2] - m[3][0] * m[2][2]
    cdef double c0 = m[2][0] * m[3][1] - m[3][0] * m[2][1]
    return s0 * c5 - s1 * c4 + s2 * c3 + s3 * c2 - s4 * c1 + s5 * c0


cdef void _sort_simplex(double sx[5][4], double* f) noexcept nogil:
    cdef int i, j, k
    cdef double tf
    cdef double tx[4]
    for i in range(1, 5):
        tf = f[i]
        for k in range(4):
            tx[k] = sx[i][k]
        j = i - 1
        while j >= 0 and f[j] > tf:
            f[j + 1] = f[j]
            for k in range(4):
                sx[j + 1][k] = sx[j][k]
            j -= 1
        f[j + 1] = tf
        for k in range(4):
            sx[j + 1][k] = tx[k]


cdef int _nelder_mead(const double* prm, double* start, double step, int max_iter,
                      double vol_tol, int nsamp, double penalty) noexcept nogil:
    """Minimise the box objective from ``start``; the best vertex is written back."""
    cdef double sx[5][4]
    cdef double f[5]
    cdef double c[4]
    cdef double xr[4]
    cdef double xe[4]
    cdef double xc[4]
    cdef double m[4][4]
    cdef double fr, fe, fc
    cdef int i, k, it = 0, shrink
    for i in range(5):
        for k in range(4):
            sx[i][k] = start[k]
        if i > 0:
            sx[i][i - 1] = start[i - 1] + step
        f[i] = _box_objective(prm, sx[i], nsamp, penalty)
    _sort_simplex(sx, f)
    while it < max_iter:
        for i in range(4):
            for k in range(4):
                m[i][k] = sx[i + 1][k] - sx[0][k]
        if fabs(_det4(m)) / 24.0 < vol_tol:
            break
        it += 1
        for k in range(4):
            c[k] = (sx[0][k] + sx[1][k] + sx[2][k] + sx[3][k]) / 4.0
        for k in range(4):
            xr[k] = c[k] + (c[k] - sx[4][k])
        fr = _box_objective(prm, xr, nsamp, penalty)
        shrink = 0
        if fr < f[0]:
            for k in range(4):
                xe[k] = c[k] + 2.0 * (xr[k] - c[k])
            fe = _box_objective(prm, xe, nsamp, penalty)
            if fe < fr:
                for k in range(4):
                    sx[4][k] = xe[k]
                f[4] = fe
            else:
                for k in range(4):
                    sx[4][k] = xr[k]
                f[4] = fr
        elif fr < f[3]:
            for k in range(4):
                sx[4][k] = xr[k]
            f[4] = fr
        elif fr < f[4]:
            for k in range(4):
                xc[k] = c[k] + 0.5 * (xr[k] - c[k])
            fc = _box_objective(prm, xc, nsamp, penalty)
            if fc <= fr:
                for k in range(4):
                    sx[4][k] = xc[k]
                f[4] = fc
            else:
                shrink = 1
        else:
            for k in range(4):
                xc[k] = c[k] + 0.5 * (sx[4][k] - c[k])
            fc = _box_objective(prm, xc, nsamp, penalty)
            if fc < f[4]:
                for k in range(4):
                    sx[4][k] = xc[k]
                f[4] = fc
            else:
                shrink = 1
        if shrink:
            for i in range(1, 5):
                for k in range(4):
                    sx[i][k] = sx[0][k] + 0.5 * (sx[i][k] - sx[0][k])
                f[i] = _box_objective(prm, sx[i], nsamp, penalty)
        _sort_simplex(sx, f)
    for k in range(4):
        start[k] = sx[0][k]
    return it


def maxbox_search(const double[::1] prm, const double[:, ::1] starts, double step,
                  int max_iter, double vol_tol, int nsamp, double penalty):
    """Run one Nelder-Mead per start; rows of (u0, u1, u2, u3, iterations)."""
    cdef Py_ssize_t i, n = starts.shape[0]
    cdef int k
    cdef double u[4]
    out = np.zeros((n, 5))
    cdef double[:, ::1] res = out
    with nogil:
        for i in range(n):
            for k in range(4):
                u[k] = starts[i, k]
            res[i, 4] = _nelder_mead(&prm[0], u, step, max_iter, vol_tol, nsamp, penalty)
            for k in range(4):
                res[i, k] = u[k]
    return out


def box_half_breadth(const double[::1] prm, double x, double h):
    return _half_breadth(&prm[0], x, h)


# ---------------------------------------------------------------- nearest neighbour


def nearest_indices(const double[:, ::1] queries, const double[:, ::1] pool,
                    const cnp.int64_t[::1] exclude):
    """Index and squared distance of the nearest pool row for every query.

    Ties go to the lowest index; ``exclude[i] >= 0`` removes that pool row
    from query ``i``'s search.
    """
    cdef Py_ssize_t i, j, k, nq = queries.shape[0], npool = pool.shape[0], dim = pool.shape[1]
    cdef double best, d2, t
    cdef cnp.int64_t arg
    idx = np.empty(nq, dtype=np.int64)
    dist = np.empty(nq)
    cdef cnp.int64_t[::1] ri = idx
    cdef double[::1] rd = dist
    with nogil:
        for i in range(nq):
            best = 1e308
            arg = -1
            for j in range(npool):
                if j == exclude[i]:
                    continue
                d2 = 0.0
                for k in range(dim):
                    t = queries[i, k] - pool[j, k]
                    d2 = d2 + t * t
                if d2 < best or arg < 0:
                    best = d2
                    arg = j
            ri[i] = arg
            rd[i] = best
    return idx, dist


# ---------------------------------------------------------------- Michell transforms


def z_transform(const double[:, ::1] Y, const double[:, ::1] Z, const double[::1] kappa):
    """int Y(z) exp(kappa z) dz per station, exact for piecewise-linear Y.

    Rows of ``Y`` and ``Z`` run from the keel (Z < 0) up to the waterline.
    One exponential per node: exp(-kappa dz) is the ratio of neighbours.
    """
    cdef Py_ssize_t n, i, j, nk = kappa.shape[0], nx = Y.shape[0], m = Y.shape[1] - 1
    cdef double kap, step, a, lo, hi, r, em, e0, e1, acc
    out = np.empty((nk, nx))
    cdef double[:, ::1] res = out
    with nogil:
        for n in range(nk):
            kap = kappa[n]
            for i in range(nx):
                acc = 0.0
                lo = exp(kap * Z[i, 0])
                for j in range(m):
                    hi = exp(kap * Z[i, j + 1])
                    step = Z[i, j + 1] - Z[i, j]
                    a = kap * step
                    if a < 1e-2:
                        e0 = 1.0 - a * (1.0 / 2.0 - a * (1.0 / 6.0 - a * (1.0 / 24.0 - a / 120.0)))
                        e1 = 0.5 - a * (1.0 / 3.0 - a * (1.0 / 8.0 - a * (1.0 / 30.0 - a / 144.0)))
                    elif hi > 0.0:
                        r = lo / hi
                        em = 1.0 - r
                        e0 = em / a
                        e1 = (em - a * r) / (a * a)
                    else:
                        e0 = 0.0
                        e1 = 0.0
                    acc = acc + step * hi * ((e0 - e1) * Y[i, j + 1] + e1 * Y[i, j])
                    lo = hi
                res[n, i] = acc
    return out


def x_transform(const double[:, ::1] G, const double[::1] x, const double[::1] k):
    """int G(x) exp(i k x) dx per row of ``G``, exact for piecewise-linear G.

    The phase exp(i k x_i) is carried from station to station by the
    per-interval factor exp(i k h) that the Filon weights need anyway.
    """
    cdef Py_ssize_t n, i, nk = k.shape[0], nx = x.shape[0]
    cdef double kk, h, th, c, s, pr, pi_, t, a0r, a0i, a1r, a1i, g0, dg, br, bi, accr, acci
    out = np.empty(nk, dtype=np.complex128)
    cdef double complex[::1] res = out
    with nogil:
        for n in range(nk):
            kk = k[n]
            accr = 0.0
            acci = 0.0
            pr = cos(kk * x[0])
            pi_ = sin(kk * x[0])
            for i in range(nx - 1):
                h = x[i + 1] - x[i]
                th = kk * h
                c = cos(th)
                s = sin(th)
                if fabs(th) < 1e-2:
                    a0r = 1.0 - th * th / 6.0
                    a0i = th / 2.0 - th * th * th / 24.0
                    a1r = 0.5 - th * th / 8.0
                    a1i = th / 3.0 - th * th * th / 30.0
                else:
                    a0r = s / th
                    a0i = (1.0 - c) / th
                    a1r = s / th + (c - 1.0) / (th * th)
                    a1i = -c / th + s / (th * th)
                g0 = G[n, i]
                dg = G[n, i + 1] - g0
                br = h * (g0 * a0r + dg * a1r)
                bi = h * (g0 * a0i + dg * a1i)
                accr = accr + pr * br - pi_ * bi
                acci = acci + pr * bi + pi_ * br
                t = pr * c - pi_ * s
                pi_ = pr * s + pi_ * c
                pr = t
            res[n] = accr + 1j * acci
    return out
