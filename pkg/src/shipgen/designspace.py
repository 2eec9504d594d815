"""Reduced parametric hull design space.

Twelve parameters with box bounds, ten closed-form feasibility constraints,
seeded uniform sampling and the interpolation benchmarks.  Everything that
touches the design space from the diffusion or evaluation side goes through
:class:`DesignSpace`, so a different parameterisation can be plugged in by
providing another instance.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

PARAM_NAMES = ("LOA", "Bd", "Dd", "Lb", "Ls", "pB", "pS", "Bk", "zk", "pC", "rB", "rS")

LOWER = np.array([10.0, 0.02, 0.03, 0.05, 0.05, 0.5, 0.5, -0.2, 0.0, 0.3, -0.3, -0.3])
UPPER = np.array([400.0, 0.35, 0.30, 0.80, 0.80, 5.0, 5.0, 0.9, 1.0, 6.0, 0.95, 0.95])

(LOA, BD, DD, LB, LS, PB, PS, BK, ZK, PC, RB, RS) = range(12)


class OutOfBoxError(ValueError):
    """A design vector lies outside the sampling box."""


class InfeasibleDesignError(ValueError):
    """A design vector violates at least one feasibility constraint."""


@dataclass(frozen=True)
class ConstraintReport:
    violations: tuple[str, ...]

    @property
    def feasible(self) -> bool:
        return not self.violations

    @property
    def mask(self) -> int:
        """Bitmask with bit i set when constraint C(i+1) is violated."""
        return sum(1 << (int(c[1:]) - 1) for c in self.violations)


def _constraint_margins(p: np.ndarray) -> np.ndarray:
    """Signed margins g(p) for all ten constraints; violated where g < 0.

    Works row-wise on an (n, 12) array.
    """
    p = np.atleast_2d(p)
    lb, ls, pb, ps = p[:, LB], p[:, LS], p[:, PB], p[:, PS]
    bd, bk, zk, pc = p[:, BD], p[:, BK], p[:, ZK], p[:, PC]
    rb, rs = p[:, RB], p[:, RS]
    return np.stack(
        [
            0.95 - (lb + ls),           # C1 tapers leave room for each other
            bk,                         # C2 keel flat not negative
            zk - 0.05,                  # C3 bilge height away from the keel
            rb,                         # C4 bow keel does not dip below baseline
            rs,                         # C5 stern keel likewise
            0.9 - rb,                   # C6 bow keel stays below the deck
            0.9 - rs,                   # C7 stern keel likewise
            2.0 * lb - pb * bd,         # C8 pB*Bd/Lb <= 2, bounded bow slope
            2.0 * ls - ps * bd,         # C9 pS*Bd/Ls <= 2
            20.0 * zk - pc * (1.0 - bk),  # C10 pC*(1-Bk)/zk <= 20
        ],
        axis=1,
    )


@dataclass(frozen=True)
class DesignSpace:
    """Narrow interface the rest of the package relies on.

    ``surface`` maps ``(v, xi, zeta)`` to half-breadth; the geometry module
    registers the hull surface law for the default space.
    """

    names: tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray
    constraint_ids: tuple[str, ...]
    margins: Callable[[np.ndarray], np.ndarray]
    surface: Callable | None = field(default=None, compare=False)

    @property
    def dim(self) -> int:
        return len(self.names)

    def in_box(self, p: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(p)
        return np.all((p >= self.lower) & (p <= self.upper), axis=1)

    def violation_masks(self, p: np.ndarray) -> np.ndarray:
        """Vectorised bitmask per row (bit i <=> constraint C(i+1) violated)."""
        viol = self.margins(np.asarray(p, dtype=float)) < 0.0
        weights = 1 << np.arange(viol.shape[1])
        return (viol * weights).sum(axis=1).astype(np.int64)

    def feasible(self, p: np.ndarray) -> np.ndarray:
        return self.violation_masks(p) == 0

    def clamp(self, p: np.ndarray) -> np.ndarray:
        return np.clip(p, self.lower, self.upper)


HULL_SPACE = DesignSpace(
    names=PARAM_NAMES,
    lower=LOWER,
    upper=UPPER,
    constraint_ids=tuple(f"C{i}" for i in range(1, 11)),
    margins=_constraint_margins,
)


def as_vector(v: Sequence[float] | np.ndarray, space: DesignSpace = HULL_SPACE) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (space.dim,):
        raise ValueError(f"design vector must have shape ({space.dim},), got {v.shape}")
    return v


def sample_uniform(seed: int, n: int, space: DesignSpace = HULL_SPACE) -> np.ndarray:
    """Draw ``n`` i.i.d. vectors uniformly over the sampling box."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    return space.lower + rng.random((n, space.dim)) * (space.upper - space.lower)


def check_constraints(v, space: DesignSpace = HULL_SPACE) -> ConstraintReport:
    v = as_vector(v, space)
    if not space.in_box(v)[0]:
        bad = [space.names[i] for i in np.flatnonzero((v < space.lower) | (v > space.upper))]
        raise OutOfBoxError(f"parameters outside sampling box: {', '.join(bad)}")
    g = space.margins(v)[0]
    return ConstraintReport(tuple(space.constraint_ids[i] for i in np.flatnonzero(g < 0.0)))


def require_feasible(v, space: DesignSpace = HULL_SPACE) -> np.ndarray:
    v = as_vector(v, space)
    report = check_constraints(v, space)
    if not report.feasible:
        raise InfeasibleDesignError("infeasible design: violates " + ", ".join(report.violations))
    return v


def require_shape_feasible(v, space: DesignSpace = HULL_SPACE) -> np.ndarray:
    """Feasibility of the shape alone: LOA may be any positive length.

    Lets geometrically scaled copies of a feasible hull through checks that
    are scale free (wave drag at fixed Froude number, for instance).
    """
    v = as_vector(v, space)
    if not v[LOA] > 0.0:
        raise ValueError("LOA must be positive")
    probe = v.copy()
    probe[LOA] = min(max(v[LOA], space.lower[LOA]), space.upper[LOA])
    require_feasible(probe, space)
    return v


def interpolate(a, b, s: float) -> np.ndarray:
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"interpolation fraction must lie in [0, 1], got {s}")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a + s * (b - a)


def nearest_neighbor(v, pool) -> tuple[int, float]:
    """Index and squared distance of the closest pool member (lowest index on ties)."""
    from shipgen._accel import nearest_indices

    pool = np.atleast_2d(np.asarray(pool, dtype=float))
    if pool.shape[0] == 0 or pool.size == 0:
        raise ValueError("pool must be non-empty")
    idx, d2 = nearest_indices(np.atleast_2d(np.asarray(v, dtype=float)), pool)
    return int(idx[0]), float(d2[0])


def interpolation_study(designs: np.ndarray, n: int, seed: int, nearest: bool = False,
                        space: DesignSpace = HULL_SPACE) -> np.ndarray:
    """Midpoints between feasible dataset members.

    ``nearest=False`` pairs two random members; ``nearest=True`` pairs a random
    member with its nearest neighbour (excluding itself).  Returns the midpoints.
    """
    from shipgen._accel import nearest_indices

    rng = np.random.default_rng(seed)
    designs = np.asarray(designs, dtype=float)
    m = len(designs)
    i = rng.integers(0, m, size=n)
    if not nearest:
        j = rng.integers(0, m - 1, size=n)
        j = np.where(j >= i, j + 1, j)
    else:
        # the LOA column is excluded from the distance, as in coverage metrics
        cols = np.arange(1, space.dim)
        j, _ = nearest_indices(designs[i][:, cols], designs[:, cols], exclude=i)
    return 0.5 * (designs[i] + designs[j])


def to_csv(designs: np.ndarray, masks: np.ndarray | None = None,
           space: DesignSpace = HULL_SPACE) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(space.names) + (["viol_mask"] if masks is not None else []))
    for k, row in enumerate(np.atleast_2d(designs)):
        cells = [repr(float(x)) for x in row]
        if masks is not None:
            cells.append(str(int(masks[k])))
        w.writerow(cells)
    return buf.getvalue()


def from_csv(text: str, space: DesignSpace = HULL_SPACE) -> tuple[np.ndarray, np.ndarray | None]:
    rows = list(csv.reader(io.StringIO(text)))
    header = rows[0]
    if tuple(header[: space.dim]) != space.names:
        raise ValueError(f"unexpected design CSV header: {header}")
    has_mask = len(header) > space.dim and header[space.dim] == "viol_mask"
    body = rows[1:]
    designs = np.array([[float(x) for x in r[: space.dim]] for r in body], dtype=float)
    designs = designs.reshape(-1, space.dim)
    masks = np.array([int(r[space.dim]) for r in body], dtype=np.int64) if has_mask else None
    return designs, masks
