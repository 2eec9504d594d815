"""Largest box that can be lowered into the hull through the deck opening."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from shipgen import _accel
from shipgen.designspace import BD, DD, require_feasible

N_STARTS = 16
MAX_ITER = 2000
VOLUME_TOL = 1e-12
PENALTY = 1e3
EDGE_SAMPLES = 9
INITIAL_STEP = 0.1


@dataclass(frozen=True)
class BoxRecord:
    x0: float       # aft end of the box
    length: float
    half_width: float
    depth: float    # measured down from the deck
    volume: float

    def as_dict(self) -> dict:
        return asdict(self)


def kernel_params(v: np.ndarray) -> np.ndarray:
    """Surface parameters in the order the compiled kernel expects."""
    return np.ascontiguousarray(v[1:], dtype=np.float64)


def box_corners(box: BoxRecord, dd: float, n: int = EDGE_SAMPLES) -> tuple[np.ndarray, float]:
    """Longitudinal sample positions along the bottom edge and its height fraction."""
    xs = np.array([box.x0 + box.length * s / (n - 1) for s in range(n)])
    return xs, (dd - box.depth) / dd


def containment_margin(v: np.ndarray, box: BoxRecord, n: int = EDGE_SAMPLES,
                       backend: str | None = None) -> float:
    """Smallest (half-breadth - half-width) over the bottom-edge samples.

    The hull half-breadth never decreases with height and is unimodal along
    the length, so the bottom edge (its ends in particular) binds.
    """
    prm = kernel_params(v)
    xs, h = box_corners(box, v[DD], n)
    return min(_accel.box_half_breadth(prm, x, h, backend) - box.half_width for x in xs)


def _repair(v: np.ndarray, u: np.ndarray, prm: np.ndarray, backend) -> BoxRecord:
    """Snap an optimiser point onto the feasible set (shrinking width only)."""
    x0 = min(max(float(u[0]), 0.0), 1.0)
    length = min(max(float(u[1]), 0.0), 1.0 - x0)
    depth = min(max(float(u[3]) * v[DD], 0.0), v[DD])
    h = (v[DD] - depth) / v[DD]
    ys = [_accel.box_half_breadth(prm, x0 + length * s / (EDGE_SAMPLES - 1), h, backend)
          for s in range(EDGE_SAMPLES)]
    w = max(min(float(u[2]) * v[BD], min(ys)), 0.0)
    return BoxRecord(x0, length, w, depth, length * 2.0 * w * depth)


def feasible_starts(v: np.ndarray, prm: np.ndarray, r: np.ndarray, backend=None) -> np.ndarray:
    """Map uniform draws to contained boxes as wide as the hull allows.

    Starting inside the feasible set keeps the simplex away from the flat
    zero-width region the penalty would otherwise drive it into.
    """
    out = np.empty_like(r)
    for i, (a, b, c, d) in enumerate(r):
        box = _repair(v, np.array([a, b * (1.0 - a), 1.0, c]), prm, backend)
        out[i] = [box.x0, box.length, box.half_width / v[BD] * (0.5 + 0.5 * d), box.depth / v[DD]]
    return out


def maxbox_candidates(v, seed: int, n_starts: int = N_STARTS,
                      backend: str | None = None) -> list[BoxRecord]:
    """One repaired Nelder-Mead result per start, in start order."""
    v = require_feasible(v)
    prm = kernel_params(v)
    starts = feasible_starts(v, prm, np.random.default_rng(seed).random((n_starts, 4)), backend)
    raw = _accel.maxbox_search(prm, starts, INITIAL_STEP, MAX_ITER, VOLUME_TOL,
                               EDGE_SAMPLES, PENALTY, backend)
    return [_repair(v, row[:4], prm, backend) for row in raw]


def maxbox(v, seed: int = 0, n_starts: int = N_STARTS, backend: str | None = None) -> BoxRecord:
    """Best box over ``n_starts`` seeded Nelder-Mead runs (first one wins ties).

    Optimisation is over (x0, length, half-width / Bd, depth / Dd) with a
    penalty of 1e3 times the worst containment violation.  Because the start
    points for fewer starts are a prefix of those for more starts, the volume
    never decreases as ``n_starts`` grows.
    """
    cands = maxbox_candidates(v, seed, n_starts, backend)
    best = cands[0]
    for c in cands[1:]:
        if c.volume > best.volume:
            best = c
    return best


def grid_search(v, n: int = 8) -> BoxRecord:
    """Exhaustive search over an n**4 grid of boxes (slow reference)."""
    v = require_feasible(v)
    prm = kernel_params(v)
    g = np.linspace(0.0, 1.0, n)
    best = BoxRecord(0.0, 0.0, 0.0, 0.0, 0.0)
    for x0 in g:
        for length in g[g <= 1.0 - x0 + 1e-12]:
            for d in g * v[DD]:
                h = (v[DD] - d) / v[DD]
                ymin = min(_accel.box_half_breadth(prm, x0 + length * s / (EDGE_SAMPLES - 1), h)
                           for s in range(EDGE_SAMPLES))
                for w in g * v[BD]:
                    if w <= ymin:
                        vol = length * 2.0 * w * d
                        if vol > best.volume:
                            best = BoxRecord(float(x0), float(length), float(w), float(d), vol)
    return best
