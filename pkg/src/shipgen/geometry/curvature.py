"""Area-weighted mean Gaussian curvature of a parametric surface grid."""
from __future__ import annotations

import numpy as np

from shipgen.designspace import ZK, require_feasible

DEFAULT_GRID = 64


def gaussian_curvature_field(X: np.ndarray, Y: np.ndarray, Z: np.ndarray):
    """Pointwise Gaussian curvature and area weights on a structured grid.

    Derivatives along both grid directions come from second-order finite
    differences (central inside, one-sided on the border), so the grid
    spacing needs to be smooth but not uniform in space.  Returns ``(K, dA)``.
    """
    P = np.stack([X, Y, Z], axis=-1).astype(float)
    if P.shape[0] < 3 or P.shape[1] < 3:
        raise ValueError("curvature grid must be at least 3 x 3")
    Pu, Pv = np.gradient(P, axis=(0, 1), edge_order=2)
    Puu = np.gradient(Pu, axis=0, edge_order=2)
    Puv = np.gradient(Pu, axis=1, edge_order=2)
    Pvv = np.gradient(Pv, axis=1, edge_order=2)
    n = np.cross(Pu, Pv)
    area = np.linalg.norm(n, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        nu = n / area[..., None]
        E, F, G = (np.einsum("...i,...i", a, b) for a, b in ((Pu, Pu), (Pu, Pv), (Pv, Pv)))
        L, M, N = (np.einsum("...i,...i", a, nu) for a in (Puu, Puv, Pvv))
        K = (L * N - M * M) / (E * G - F * F)
    K = np.where(area > 0.0, K, 0.0)
    return K, area


def mean_abs_curvature(X, Y, Z, interior_rows: bool = False) -> float:
    """Area-weighted mean of |K| over the grid.

    ``interior_rows`` drops the first and last grid rows (degenerate tips).
    """
    K, dA = gaussian_curvature_field(X, Y, Z)
    if interior_rows:
        K, dA = K[1:-1], dA[1:-1]
    total = dA.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise ValueError("degenerate curvature grid (zero area)")
    return float((np.abs(K) * dA).sum() / total)


def _trapezoid_weights(n: int) -> np.ndarray:
    w = np.ones(n)
    w[[0, -1]] = 0.5
    return w


CLUSTER = 0.8


def _clustered(a: float, b: float, n: int) -> np.ndarray:
    """Nodes on [a, b] packed toward both ends, where the surface law is least smooth.

    The map t -> t - c sin(2 pi t) / (2 pi) keeps a non-zero slope (1 - c) at
    the ends, so the grid stays a regular parametrisation.
    """
    t = np.linspace(0.0, 1.0, n)
    return a + (b - a) * (t - CLUSTER * np.sin(2.0 * np.pi * t) / (2.0 * np.pi))


def _hull_patches(v: np.ndarray, n: int):
    """Smooth (xi, zeta) patches of the hull side, split at the creases.

    The surface law has slope jumps at the taper joins and at the bilge
    height; inside each patch it is smooth.  Coordinates are LOA units.
    """
    from shipgen.designspace import BD, DD, LB, LS
    from shipgen.geometry.surface import keel, plan, section

    xi_cuts = [0.0, v[LS], 1.0 - v[LB], 1.0]
    zeta_cuts = [0.0, v[ZK], 1.0]
    for xa, xb in zip(xi_cuts[:-1], xi_cuts[1:]):
        xi = _clustered(xa, xb, n)
        for za, zb in zip(zeta_cuts[:-1], zeta_cuts[1:]):
            zeta = _clustered(za, zb, max(n // 2, 3))
            k = keel(v, xi)[:, None]
            X = np.broadcast_to(xi[:, None], (len(xi), len(zeta)))
            Y = v[BD] * plan(v, xi)[:, None] * section(v, zeta)[None, :]
            Z = v[DD] * (k + (1.0 - k) * zeta[None, :])
            yield X, Y, Z


def hull_curvature(v, n: int = DEFAULT_GRID) -> float:
    """GC * LOA**2 for a feasible design: area-weighted mean |K| over the side.

    Integration is per smooth patch with trapezoid weights in grid-index
    space (the curvature itself is parametrisation independent).  Nodes on
    the tip rows get zero weight, and the deck cap is flat and not included.
    """
    v = require_feasible(v)
    num = den = 0.0
    for X, Y, Z in _hull_patches(v, n):
        K, dA = gaussian_curvature_field(X, Y, Z)
        w = _trapezoid_weights(X.shape[0])[:, None] * _trapezoid_weights(X.shape[1])[None, :]
        tip = (X[:, 0] == 0.0) | (X[:, 0] == 1.0)
        w = np.where(tip[:, None], 0.0, w)
        num += float((np.abs(K) * dA * w).sum())
        den += float((dA * w).sum())
    if den <= 0.0:
        raise ValueError("degenerate hull surface")
    return num / den


def gaussian_curvature(source, nx: int = DEFAULT_GRID, nz: int | None = None) -> float:
    """Mean Gaussian curvature magnitude, in units of 1 / length**2.

    ``source`` is either a design vector, giving GC * LOA**2 from
    :func:`hull_curvature` at ``nx`` nodes per patch direction, or a tuple
    ``(X, Y, Z)`` of grid coordinates in consistent units.
    """
    if isinstance(source, tuple):
        return mean_abs_curvature(*source)
    return hull_curvature(source, nx)
