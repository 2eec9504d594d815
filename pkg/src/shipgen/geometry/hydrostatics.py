"""Hydrostatics by trapezoidal integration over draft marks.

All quantities are LOA-normalised (lengths / LOA, areas / LOA**2, volumes /
LOA**3, second moments / LOA**4); the computation never touches LOA, so the
records are exactly scale invariant.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from shipgen.designspace import BD, BK, DD, LB, LS, RB, RS, require_feasible
from shipgen.geometry.surface import keel, plan, section

DEFAULT_MARKS = 10
MARK_GRADING = 1.5
SUBPANELS = 4
_STATIONS_PER_SPAN = 120
_GIRTH_LEVELS = 48


@dataclass(frozen=True)
class HydroRecord:
    draft: float      # draft height
    lwl: float        # waterline length
    awp: float        # waterplane area
    wetted: float     # wetted surface below the draft mark
    lcf: float        # longitudinal centre of flotation (from stern tip)
    i_l: float        # waterplane second moment about the transverse axis through LCF
    i_t: float        # waterplane second moment about the centreline
    volume: float     # displaced volume
    lcb: float        # longitudinal centre of buoyancy
    vcb: float        # vertical centre of buoyancy above baseline

    def as_dict(self) -> dict:
        return asdict(self)


def draft_marks(draft_fraction: float, n_marks: int = DEFAULT_MARKS,
                grading: float = MARK_GRADING) -> np.ndarray:
    """Mark heights (fractions of depth) from the baseline to the draft.

    Marks are clustered toward the keel, where the bilge makes the waterplane
    area change fastest.
    """
    if n_marks < 2:
        raise ValueError("need at least two draft marks")
    return draft_fraction * np.linspace(0.0, 1.0, n_marks) ** grading


def waterline_extent(v: np.ndarray, h: float) -> tuple[float, float]:
    """Stern and bow ends of the waterline at depth fraction ``h``."""
    xa = 0.0
    if v[RS] > h:
        xa = v[LS] * (1.0 - np.sqrt(h / v[RS]))
    xb = 1.0
    if v[RB] > h:
        xb = 1.0 - v[LB] + v[LB] * np.sqrt(h / v[RB])
    return float(xa), float(xb)


def _stations(v: np.ndarray, xa: float, xb: float, per_span: int) -> np.ndarray:
    cuts = [xa] + [c for c in (v[LS], 1.0 - v[LB]) if xa < c < xb] + [xb]
    pieces = [np.linspace(a, b, per_span + 1)[:-1] for a, b in zip(cuts[:-1], cuts[1:])]
    return np.concatenate(pieces + [np.array([xb])])


def _waterplane(v: np.ndarray, h: float, per_span: int):
    """Waterplane area, first moment about the stern tip, centroid, I_L, I_T, Lwl."""
    xa, xb = waterline_extent(v, h)
    x = _stations(v, xa, xb, per_span)
    k = keel(v, x)
    zeta = np.clip((h - k) / (1.0 - k), 0.0, 1.0)
    y = v[BD] * plan(v, x) * section(v, zeta)
    area = np.trapezoid(2.0 * y, x)
    moment = np.trapezoid(2.0 * y * x, x)
    lcf = moment / area if area > 0 else 0.5 * (xa + xb)
    i_l = np.trapezoid(2.0 * y * (x - lcf) ** 2, x)
    i_t = np.trapezoid(2.0 / 3.0 * y ** 3, x)
    return area, moment, lcf, i_l, i_t, xb - xa


def _wetted_surface(v: np.ndarray, h: float, per_span: int, levels: int) -> float:
    """Area of the triangulated hull surface below depth fraction ``h`` (both sides)."""
    if h <= 0.0:
        return 0.0
    xa, xb = waterline_extent(v, h)
    x = _stations(v, xa, xb, per_span)
    k = keel(v, x)
    zt = np.clip((h - k) / (1.0 - k), 0.0, 1.0)
    g = np.linspace(0.0, 1.0, levels + 1) ** 2
    zeta = zt[:, None] * g[None, :]
    b = plan(v, x)[:, None]
    depth = v[DD]
    ys = v[BD] * b * section(v, zeta)
    zs = depth * (k[:, None] + (1.0 - k[:, None]) * zeta)
    # prepend the centreline keel point so the flat bottom is included
    Y = np.concatenate([np.zeros((len(x), 1)), ys], axis=1)
    Z = np.concatenate([depth * k[:, None], zs], axis=1)
    X = np.broadcast_to(x[:, None], Y.shape)
    P = np.stack([X, Y, Z], axis=-1)
    a, b_, c, d = P[:-1, :-1], P[:-1, 1:], P[1:, 1:], P[1:, :-1]
    area = 0.5 * np.linalg.norm(np.cross(b_ - a, c - a), axis=-1)
    area += 0.5 * np.linalg.norm(np.cross(c - a, d - a), axis=-1)
    return float(2.0 * area.sum())


def hydrostatic_table(v, draft_fraction: float = 1.0, n_marks: int = DEFAULT_MARKS,
                      grading: float = MARK_GRADING, subpanels: int = SUBPANELS,
                      per_span: int = _STATIONS_PER_SPAN, check: bool = True,
                      wetted_at: str = "all") -> list[HydroRecord]:
    """Records at every draft mark between the baseline and ``draft_fraction``.

    Volume, LCB and VCB are cumulative composite-trapezoid integrals of the
    waterplane quantities, with ``subpanels`` panels between consecutive
    marks, so they are non-decreasing in draft by construction.  Wetted
    surface is evaluated at every mark, or only the last with
    ``wetted_at="last"``.
    """
    v = require_feasible(v) if check else np.asarray(v, dtype=float)
    if not 0.0 < draft_fraction <= 1.0:
        raise ValueError("draft fraction must lie in (0, 1]")
    marks = draft_marks(draft_fraction, n_marks, grading)
    # subdivide every mark interval; marks sit at every ``subpanels``-th level
    t = np.linspace(0.0, 1.0, subpanels + 1)[:-1]
    levels = np.concatenate([a + t * (b - a) for a, b in zip(marks[:-1], marks[1:])]
                            + [marks[-1:]])
    depth = v[DD]
    wp = np.array([_waterplane(v, h, per_span) for h in levels])
    awp, moment = wp[:, 0], wp[:, 1]
    z = levels * depth
    dz = np.diff(z)

    def cumtrapz(f):
        return np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * dz)])

    vol, mx, mz = cumtrapz(awp), cumtrapz(moment), cumtrapz(awp * z)
    records = []
    for i, h in enumerate(marks):
        j = i * subpanels
        if wetted_at == "all" or i == len(marks) - 1:
            wet = _wetted_surface(v, h, per_span, _GIRTH_LEVELS)
        else:
            wet = float("nan")
        lcb = mx[j] / vol[j] if vol[j] > 0 else wp[j, 2]
        vcb = mz[j] / vol[j] if vol[j] > 0 else 0.0
        records.append(HydroRecord(
            draft=float(z[j]), lwl=float(wp[j, 5]), awp=float(awp[j]), wetted=wet,
            lcf=float(wp[j, 2]), i_l=float(wp[j, 3]), i_t=float(wp[j, 4]),
            volume=float(vol[j]), lcb=float(lcb), vcb=float(vcb)))
    return records


def hydrostatics(v, draft_fraction: float, n_marks: int = DEFAULT_MARKS,
                 grading: float = MARK_GRADING, subpanels: int = SUBPANELS,
                 check: bool = True) -> HydroRecord:
    """Hydrostatic record at ``draft_fraction`` of the depth."""
    return hydrostatic_table(v, draft_fraction, n_marks, grading, subpanels,
                             check=check, wetted_at="last")[-1]
