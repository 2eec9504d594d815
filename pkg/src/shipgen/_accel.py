"""Kernel dispatch: the compiled extension when importable, else the Python twin.

Set ``SHIPGEN_PURE_PYTHON=1`` to force the fallback (useful for checking that
both paths agree).
"""
from __future__ import annotations

import os

import numpy as np

from shipgen import _fallback

try:
    if os.environ.get("SHIPGEN_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python kernels requested")
    from shipgen import _kernels as _impl
    COMPILED = True
except ImportError:
    _impl = _fallback
    COMPILED = False

BACKENDS = {"python": _fallback}
if COMPILED:
    BACKENDS["compiled"] = _impl


def tri_tri_intersect(verts, faces, pairs, backend=None) -> np.ndarray:
    impl = BACKENDS[backend] if backend else _impl
    return impl.tri_tri_intersect(np.ascontiguousarray(verts, dtype=np.float64),
                                  np.ascontiguousarray(faces, dtype=np.int64),
                                  np.ascontiguousarray(pairs, dtype=np.int64))


def maxbox_search(prm, starts, step, max_iter, vol_tol, nsamp, penalty, backend=None):
    impl = BACKENDS[backend] if backend else _impl
    return impl.maxbox_search(np.ascontiguousarray(prm, dtype=np.float64),
                              np.ascontiguousarray(starts, dtype=np.float64),
                              float(step), int(max_iter), float(vol_tol), int(nsamp),
                              float(penalty))


def box_half_breadth(prm, x, h, backend=None) -> float:
    impl = BACKENDS[backend] if backend else _impl
    return impl.box_half_breadth(np.ascontiguousarray(prm, dtype=np.float64), float(x), float(h))


def nearest_indices(queries, pool, exclude=None, backend=None):
    """Nearest pool row (lowest index on ties) and its squared distance per query."""
    impl = BACKENDS[backend] if backend else _impl
    q = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float64)
    p = np.ascontiguousarray(np.atleast_2d(pool), dtype=np.float64)
    if q.shape[1] != p.shape[1]:
        raise ValueError("query and pool dimensions differ")
    if exclude is None:
        ex = np.full(len(q), -1, dtype=np.int64)
    else:
        ex = np.ascontiguousarray(exclude, dtype=np.int64)
        if len(p) < 2:
            raise ValueError("excluding a member needs a pool of at least two")
    return impl.nearest_indices(q, p, ex)


def z_transform(Y, Z, kappa, backend=None) -> np.ndarray:
    """Station-wise exponential depth transform, shape (len(kappa), n_stations)."""
    impl = BACKENDS[backend] if backend else _impl
    return impl.z_transform(np.ascontiguousarray(Y, dtype=np.float64),
                            np.ascontiguousarray(Z, dtype=np.float64),
                            np.ascontiguousarray(kappa, dtype=np.float64))


def x_transform(G, x, k, backend=None) -> np.ndarray:
    """Filon transform of each row of G against exp(i k x)."""
    impl = BACKENDS[backend] if backend else _impl
    return impl.x_transform(np.ascontiguousarray(G, dtype=np.float64),
                            np.ascontiguousarray(x, dtype=np.float64),
                            np.ascontiguousarray(k, dtype=np.float64))
