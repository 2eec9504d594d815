"""Closed-form hull surface for the reduced design space.

Coordinates are LOA-normalised: ``xi`` runs from the stern tip (0) to the bow
tip (1), ``h`` is height above the baseline as a fraction of depth, and
``zeta`` is the height fraction between the local keel and the deck.  The
half-breadth factorises into a plan envelope ``b(xi)`` and a section shape
``s(zeta)``; ``K(xi)`` lifts the keel in the taper regions.
"""
from __future__ import annotations

import numpy as np

from shipgen.designspace import (BD, BK, DD, LB, LOA, LS, PB, PC, PS, RB, RS, ZK,
                                 as_vector, require_feasible)


def _taper_coords(v: np.ndarray, xi):
    xi = np.asarray(xi, dtype=float)
    # written so that both tips land on exactly u = 1
    u_stern = np.clip(1.0 - xi / v[LS], 0.0, 1.0)
    u_bow = np.clip(1.0 - (1.0 - xi) / v[LB], 0.0, 1.0)
    return u_stern, u_bow


def plan(v: np.ndarray, xi) -> np.ndarray:
    """Plan envelope b(xi): 1 on the parallel midbody, 0 at both tips."""
    us, ub = _taper_coords(v, xi)
    # product form only matters when tapers overlap (C1 violated)
    return (1.0 - us ** v[PS]) * (1.0 - ub ** v[PB])


def plan_slope(v: np.ndarray, xi) -> np.ndarray:
    """d b / d xi (one-sided limits taken at the taper joins)."""
    us, ub = _taper_coords(v, xi)
    with np.errstate(divide="ignore", invalid="ignore"):
        ds = np.where(us > 0.0, v[PS] * us ** (v[PS] - 1.0) / v[LS], 0.0)
        db = np.where(ub > 0.0, -v[PB] * ub ** (v[PB] - 1.0) / v[LB], 0.0)
    return ds * (1.0 - ub ** v[PB]) + db * (1.0 - us ** v[PS])


def keel(v: np.ndarray, xi) -> np.ndarray:
    """Local keel height K(xi) as a fraction of depth."""
    us, ub = _taper_coords(v, xi)
    return np.maximum(v[RS] * us ** 2, v[RB] * ub ** 2)


def section(v: np.ndarray, zeta) -> np.ndarray:
    """Section shape s(zeta): Bk at the keel, rising to 1 at the bilge height."""
    zeta = np.asarray(zeta, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(zeta >= v[ZK], 1.0, np.clip(zeta / v[ZK], 0.0, 1.0))
    return v[BK] + (1.0 - v[BK]) * r ** v[PC]


def section_integral(v: np.ndarray, zeta) -> np.ndarray:
    """Closed-form integral of s from 0 to ``zeta``."""
    zeta = np.asarray(zeta, dtype=float)
    zk, pc, bk = v[ZK], v[PC], v[BK]
    below = np.minimum(zeta, zk)
    curved = zk * (below / zk) ** (pc + 1.0) / (pc + 1.0)
    return bk * zeta + (1.0 - bk) * (curved + np.maximum(zeta - zk, 0.0))


def local_zeta(v: np.ndarray, xi, h):
    """Height fraction between keel and deck for absolute depth fraction ``h``."""
    k = keel(v, xi)
    return (np.asarray(h, dtype=float) - k) / (1.0 - k), k


def half_breadth_unchecked(v: np.ndarray, xi, h) -> np.ndarray:
    """Half-breadth in metres at (xi, h); zero below the local keel."""
    zeta, _ = local_zeta(v, xi, h)
    y = v[LOA] * v[BD] * plan(v, xi) * section(v, np.minimum(zeta, 1.0))
    return np.where(zeta < 0.0, 0.0, y)


def half_breadth(v, xi, h) -> np.ndarray:
    """Half-breadth in metres of a feasible design.

    ``xi`` is the longitudinal position over LOA (0 stern, 1 bow) and ``h`` the
    height above the baseline as a fraction of depth.  Both broadcast.
    """
    v = require_feasible(v)
    xi = np.asarray(xi, dtype=float)
    h = np.asarray(h, dtype=float)
    if np.any((xi < 0) | (xi > 1)) or np.any((h < 0) | (h > 1)):
        raise ValueError("xi and h must lie in [0, 1]")
    return half_breadth_unchecked(v, xi, h)


def surface_grid(v, nx: int, nz: int, check: bool = True):
    """Port-side surface points on a uniform (xi, zeta) grid.

    Returns ``(X, Y, Z)`` arrays of shape ``(nx, nz)`` in metres, rows ordered
    stern to bow and columns keel to deck.
    """
    v = require_feasible(v) if check else as_vector(v)
    xi = np.linspace(0.0, 1.0, nx)
    zeta = np.linspace(0.0, 1.0, nz)
    k = keel(v, xi)[:, None]
    depth = v[LOA] * v[DD]
    X = np.broadcast_to(v[LOA] * xi[:, None], (nx, nz)).copy()
    Y = v[LOA] * v[BD] * plan(v, xi)[:, None] * section(v, zeta)[None, :]
    Z = depth * (k + (1.0 - k) * zeta[None, :])
    return X, Y, Z
