"""Michell thin-ship wave resistance on the 4 x 8 draft/speed grid.

The centreplane integrals are integrated by parts in x, so the half-breadth
itself (not its slope) is transformed:

    I + iJ = -ik * F,   F = int int Y(x, z) exp(i k x + kappa z) dx dz,

with k = k0 lambda and kappa = k0 lambda**2.  Y is taken as zero outside
the hull, so the boundary terms drop and the step in Y where a flat keel
meets a rising keel line (or the waterline ends on it) enters exactly,
rather than being smeared by a difference quotient.  The z-transform uses
the exact integral of the piecewise-linear interpolant against
exp(kappa z) on each station's own keel-to-waterline grid; the x-transform
is the same Filon-type rule against exp(i k x) on stations that land on
every slope discontinuity.  All work is done in LOA units, so the
coefficients are exactly scale free.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from shipgen import _accel
from shipgen.designspace import BD, DD, LB, LOA, LS, PB, PC, PS, ZK, require_shape_feasible
from shipgen.geometry.hydrostatics import waterline_extent
from shipgen.geometry.surface import keel, plan, section

RHO = 1025.0
G = 9.81
DRAFTS = (0.25, 1.0 / 3.0, 0.50, 2.0 / 3.0)
DRAFT_TAGS = ("25", "33", "50", "67")
FROUDE = tuple(round(0.10 + 0.05 * i, 2) for i in range(8))
FROUDE_TAGS = tuple(f"{int(round(f * 100)):02d}" for f in FROUDE)
FN_RANGE = (0.05, 0.6)
CSV_COLUMNS = tuple(f"cw_d{d}_f{f}" for d in DRAFT_TAGS for f in FROUDE_TAGS)


@dataclass(frozen=True)
class Quadrature:
    """Discretisation settings; ``refined()`` doubles every density."""
    stations_per_segment: int = 96
    levels: int = 48
    panels_per_period: int = 1
    nodes_per_panel: int = 6
    kappa_nodes: int = 24
    envelope: float = 1e-8
    reference_levels: int = 64

    def refined(self) -> "Quadrature":
        return replace(self, stations_per_segment=2 * self.stations_per_segment,
                       levels=2 * self.levels, panels_per_period=2 * self.panels_per_period,
                       kappa_nodes=2 * self.kappa_nodes)


DEFAULT_QUADRATURE = Quadrature()


def froude_speed(fn: float, length: float) -> float:
    """Ship speed U = Fn sqrt(g L)."""
    if fn < 0.0 or length <= 0.0:
        raise ValueError("Froude number must be >= 0 and the length positive")
    return fn * math.sqrt(G * length)


def wave_coefficient(rw: float, u: float, loa: float) -> float:
    """Cw = Rw / (0.5 rho U^2 LOA^2)."""
    if u <= 0.0 or loa <= 0.0:
        raise ValueError("speed and LOA must be positive")
    return rw / (0.5 * RHO * u * u * loa * loa)


END_POWER = 2.0


def _graded(n: int, p0: float = 1.0, p1: float = 1.0) -> np.ndarray:
    """n + 1 points on [0, 1] packed toward both ends.

    A sine stretch (end slope 0.2) is followed by algebraic grading
    w ~ t**p0 near 0 and 1 - w ~ (1 - t)**p1 near 1, for ends where the
    integrand is not smooth.
    """
    t = np.linspace(0.0, 1.0, n + 1)
    s = t - 0.8 * np.sin(2.0 * np.pi * t) / (2.0 * np.pi)
    s = np.clip(s, 0.0, 1.0)
    f0, f1 = s ** p0, (1.0 - s) ** p1
    w = f0 / (f0 + f1)
    w[0], w[-1] = 0.0, 1.0
    return w


def _cusp_power(p: float) -> float:
    return 2.0 if p < 1.0 else 1.0


def stations(v: np.ndarray, draft: float, per_segment: int) -> np.ndarray:
    """Waterline stations with nodes on the taper joins (LOA units).

    Grading is algebraic toward the waterline ends, where the submerged depth
    vanishes and the deep-decay boundary layer is thin, and toward a join
    whose plan exponent is below one.
    """
    xa, xb = waterline_extent(v, draft)
    if xb - xa <= 0.0:
        raise ValueError("hull has no waterline at this draft")
    parts = []
    ls, xm = v[LS], 1.0 - v[LB]
    if xa < ls:
        parts.append(xa + (ls - xa) * _graded(per_segment, END_POWER, _cusp_power(v[PS])))
    lo, hi = max(xa, ls), min(xb, xm)
    parts.append(lo + (hi - lo) * _graded(per_segment))
    if xb > xm:
        parts.append(xm + (xb - xm) * _graded(per_segment, _cusp_power(v[PB]), END_POWER))
    return np.concatenate([parts[0]] + [q[1:] for q in parts[1:]])


def submerged_grid(v: np.ndarray, draft: float, quad: Quadrature = DEFAULT_QUADRATURE):
    """Stations, node depths and half-breadths of the hull below waterline ``draft``.

    ``draft`` is a fraction of the depth.  Returns ``(x, Z, Y)`` with Z and Y
    of shape (nx, levels + 1); row i runs from the local keel (Z < 0, column
    0) up to the waterline (Z = 0).  Each row is split at the bilge crease
    when that lies below the waterline.  All lengths are LOA units.
    """
    x = stations(v, draft, quad.stations_per_segment)
    k = np.minimum(keel(v, x), draft)
    bilge = k + (1.0 - k) * v[ZK]
    m = quad.levels
    lo_n = m // 2
    gl = _graded(lo_n, _cusp_power(v[PC]))
    gu = _graded(m - lo_n)
    top = np.minimum(bilge, draft)
    h = np.empty((len(x), m + 1))
    h[:, :lo_n + 1] = k[:, None] + (top - k)[:, None] * gl[None, :]
    h[:, lo_n:] = top[:, None] + (draft - top)[:, None] * gu[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        zeta = np.where((1.0 - k)[:, None] > 0.0, (h - k[:, None]) / (1.0 - k[:, None]), 0.0)
    Y = v[BD] * plan(v, x)[:, None] * section(v, np.clip(zeta, 0.0, 1.0))
    Y[k >= draft] = 0.0
    Z = (h - draft) * v[DD]
    return x, Z, Y


def lambda_rule(k0: float, lwl: float, draft_depth: float,
                quad: Quadrature = DEFAULT_QUADRATURE) -> tuple[np.ndarray, np.ndarray]:
    """Nodes in lambda and weights for int_1^lmax f(lambda) lambda^2 / sqrt(lambda^2 - 1).

    Substituting lambda = sec(theta) turns the weight into sec^3(theta) and
    removes the endpoint singularity.  |F|^2 oscillates in lambda with period
    about 2 pi / (k0 Lwl), so the theta range is cut into Gauss-Legendre
    panels whose lambda-width is at most one such period.  The range ends
    where exp(k0 (lambda^2 - 1) z) drops to ``quad.envelope`` at one
    reference depth step, z = -T / reference_levels (a fixed physical
    depth, so refining the grids does not move the cut-off).
    """
    zref = draft_depth / quad.reference_levels
    lam_max = math.sqrt(1.0 + math.log(1.0 / quad.envelope) / (k0 * zref))
    period = 2.0 * math.pi / (k0 * lwl)
    n_pan = max(1, math.ceil(quad.panels_per_period * (lam_max - 1.0) / period))
    edges = np.arccos(1.0 / np.linspace(1.0, lam_max, n_pan + 1))
    t, w = np.polynomial.legendre.leggauss(quad.nodes_per_panel)
    half = 0.5 * np.diff(edges)
    th = (edges[:-1, None] + half[:, None] * (t[None, :] + 1.0)).ravel()
    wt = (half[:, None] * w[None, :]).ravel()
    sec = 1.0 / np.cos(th)
    return sec, wt * sec ** 3


def _cheb_interp_matrix(s_nodes: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Barycentric interpolation matrix on Chebyshev points of the second kind."""
    n = len(s_nodes) - 1
    wb = (-1.0) ** np.arange(n + 1)
    wb[[0, -1]] *= 0.5
    d = s[:, None] - s_nodes[None, :]
    hit = d == 0.0
    d[hit] = 1.0
    c = wb[None, :] / d
    c[hit.any(axis=1)] = hit[hit.any(axis=1)]
    return c / c.sum(axis=1, keepdims=True)


def _z_transform_interp(Y, Z, kappa, n_nodes: int, backend=None) -> np.ndarray:
    """z-transform at many kappa from exact values at Chebyshev nodes in log kappa.

    kappa * G(kappa) is a smooth, order-one function of log kappa (it tends
    to the waterline offset for deep decay), so a few dozen nodes suffice.
    """
    lo, hi = math.log(kappa.min()), math.log(kappa.max())
    if hi - lo < 1e-12:
        return _accel.z_transform(Y, Z, kappa, backend)
    s_nodes = 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos(np.pi * np.arange(n_nodes) / (n_nodes - 1))
    kn = np.exp(s_nodes)
    H = kn[:, None] * _accel.z_transform(Y, Z, kn, backend)
    M = _cheb_interp_matrix(s_nodes, np.log(kappa))
    return (M @ H) / kappa[:, None]


def michell_integral(v: np.ndarray, draft: float, fn: float,
                     quad: Quadrature = DEFAULT_QUADRATURE,
                     backend: str | None = None) -> tuple[float, float]:
    """Wave drag coefficient Rw / (0.5 rho U^2 LOA^2) and the waterline length / LOA.

    In LOA units with k0 = 1 / (Fn^2 Lwl) the dimensional constant collapses to
    Cw = 8 / (pi Fn^4 Lwl^2) int k^2 |F|^2 lambda^2 / sqrt(lambda^2 - 1) d lambda.
    No feasibility check; see :func:`michell_resistance`.
    """
    x, Z, Y = submerged_grid(v, draft, quad)
    lwl = x[-1] - x[0]
    k0 = 1.0 / (fn * fn * lwl)
    lam, w = lambda_rule(k0, lwl, draft * v[DD], quad)
    Gz = _z_transform_interp(Y, Z, k0 * lam * lam, quad.kappa_nodes, backend)
    F = _accel.x_transform(Gz, x, k0 * lam, backend)
    integrand = (k0 * lam) ** 2 * (F.real ** 2 + F.imag ** 2)
    cw = 8.0 / (math.pi * fn ** 4 * lwl ** 2) * float(np.dot(w, integrand))
    return cw, lwl


def _check_condition(draft: float, fn: float) -> None:
    if not 0.0 < draft < 1.0:
        raise ValueError(f"draft fraction must lie in (0, 1), got {draft}")
    if not FN_RANGE[0] <= fn <= FN_RANGE[1]:
        raise ValueError(f"Froude number must lie in {FN_RANGE}, got {fn}")


def michell_resistance(v, draft_fraction: float, fn: float,
                       quad: Quadrature = DEFAULT_QUADRATURE,
                       backend: str | None = None) -> float:
    """Thin-ship wave resistance in newtons at the given draft and Froude number.

    The Froude number is based on the waterline length at that draft.  LOA
    is not limited to the sampling box, so scaled copies can be compared.
    """
    v = require_shape_feasible(v)
    _check_condition(draft_fraction, fn)
    cw, lwl = michell_integral(v, draft_fraction, fn, quad, backend)
    u = froude_speed(fn, lwl * v[LOA])
    return cw * 0.5 * RHO * u * u * v[LOA] ** 2


@dataclass(frozen=True)
class DragGrid:
    """Cw at 4 drafts (rows) by 8 Froude numbers (columns)."""
    cw: np.ndarray

    def __post_init__(self):
        cw = np.asarray(self.cw, dtype=float)
        if cw.shape != (len(DRAFTS), len(FROUDE)):
            raise ValueError(f"drag grid must be {len(DRAFTS)} x {len(FROUDE)}, got {cw.shape}")
        object.__setattr__(self, "cw", cw)

    def row(self) -> np.ndarray:
        """Flattened in CSV_COLUMNS order (draft-major)."""
        return self.cw.ravel()

    @classmethod
    def from_row(cls, row) -> "DragGrid":
        return cls(np.asarray(row, dtype=float).reshape(len(DRAFTS), len(FROUDE)))


def drag_grid(v, quad: Quadrature = DEFAULT_QUADRATURE, backend: str | None = None) -> DragGrid:
    """Cw over the full draft / Froude grid."""
    v = require_shape_feasible(v)
    out = np.empty((len(DRAFTS), len(FROUDE)))
    for i, d in enumerate(DRAFTS):
        for j, fn in enumerate(FROUDE):
            out[i, j] = michell_integral(v, d, fn, quad, backend)[0]
    return DragGrid(out)


def aggregate_cw(grid) -> float:
    """Sum of log10 Cw over all 32 conditions."""
    cw = grid.cw if isinstance(grid, DragGrid) else np.asarray(grid, dtype=float)
    if cw.size != len(DRAFTS) * len(FROUDE):
        raise ValueError("expected 32 drag coefficients")
    if not np.all(cw > 0.0):
        raise ValueError("aggregate Cw needs strictly positive coefficients")
    return float(np.log10(cw).sum())
