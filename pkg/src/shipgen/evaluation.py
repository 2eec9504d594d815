"""Sample-quality measures: chamfer coverage and realism, PCA, feasibility, performance tables.

Distances are squared Euclidean in raw parameter space with the LOA column
dropped.  Plot output is plain CSV plus a tiny SVG writer.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ._accel import nearest_indices
from .dataset import LOG_METRICS, METRICS, LabeledDataset
from .designspace import HULL_SPACE, LOA, DesignSpace
from .hydro import DRAFTS, FROUDE

N_CONDITIONS = len(DRAFTS) * len(FROUDE)
WILSON_Z = 1.959963984540054


def _vectors(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or len(a) == 0:
        raise ValueError(f"{name} must be a non-empty set of vectors")
    return a


# ---------------------------------------------------------------- chamfer


def nearest_sq(A, B) -> np.ndarray:
    """Squared distance from each row of A to its nearest row of B."""
    A, B = _vectors(A, "A"), _vectors(B, "B")
    return nearest_indices(A, B)[1]


def chamfer_mean(A, B) -> float:
    """Mean over A of the squared distance to the nearest member of B."""
    return float(nearest_sq(A, B).mean())


def _nearest_distinct(A, B) -> np.ndarray:
    """Like nearest_sq, but an exact copy never counts as a neighbour.

    A dataset scored against itself then lands on the leave-one-out value.
    Queries whose only matches are copies score zero.
    """
    d = nearest_sq(A, B)
    for i in np.flatnonzero(d == 0.0):
        diff = B - A[i]
        d2 = np.einsum("ij,ij->i", diff, diff)
        d2 = d2[d2 > 0.0]
        d[i] = d2.min() if len(d2) else 0.0
    return d


def shape_columns(X, space: DesignSpace = HULL_SPACE) -> np.ndarray:
    X = _vectors(X, "vectors")
    if X.shape[1] != space.dim:
        raise ValueError(f"expected {space.dim} parameters, got {X.shape[1]}")
    return np.delete(X, LOA, axis=1)


@dataclass(frozen=True)
class Baselines:
    coverage_best: float        # leave-one-out nearest-neighbour mean inside the dataset
    coverage_worst: float       # mean distance of dataset members to their centroid
    realism_best: float         # smallest leave-one-out nearest-neighbour distance
    realism_worst: float        # largest one
    n: int


def dataset_baselines(ds, space: DesignSpace = HULL_SPACE) -> Baselines:
    X = shape_columns(ds, space)
    if len(X) < 2:
        raise ValueError("baselines need at least two dataset vectors")
    loo = nearest_indices(X, X, exclude=np.arange(len(X)))[1]
    c = X.mean(axis=0)
    worst = float(np.mean(np.sum((X - c) ** 2, axis=1)))
    return Baselines(float(loo.mean()), worst, float(loo.min()), float(loo.max()), len(X))


def normalise(raw: float, best: float, worst: float) -> float:
    """Linear map sending worst to 0 and best to 1."""
    if best == worst:
        raise ValueError("degenerate baselines")
    return (raw - worst) / (best - worst)


@dataclass(frozen=True)
class CoverageReport:
    coverage_raw: float
    coverage: float
    realism_raw: float
    realism: float
    baselines: Baselines
    n_generated: int

    def to_dict(self) -> dict:
        return asdict(self)


def coverage_realism(gen, ds, baselines: Baselines | None = None,
                     space: DesignSpace = HULL_SPACE) -> CoverageReport:
    """Coverage scores ds->gen, realism gen->ds, both normalised by dataset baselines."""
    G, D = shape_columns(gen, space), shape_columns(ds, space)
    b = baselines or dataset_baselines(ds, space)
    cov = float(_nearest_distinct(D, G).mean())
    real = float(_nearest_distinct(G, D).mean())
    return CoverageReport(
        coverage_raw=cov,
        coverage=normalise(cov, b.coverage_best, b.coverage_worst),
        realism_raw=real,
        realism=normalise(real, b.realism_best, b.realism_worst),
        baselines=b,
        n_generated=len(G),
    )


def coverage_se(gen, ds, baselines: Baselines | None = None, n_boot: int = 100, seed: int = 0,
                space: DesignSpace = HULL_SPACE) -> float:
    """Bootstrap standard error of the normalised coverage over generated rows."""
    G, D = shape_columns(gen, space), shape_columns(ds, space)
    b = baselines or dataset_baselines(ds, space)
    rng = np.random.default_rng(seed)
    vals = np.empty(n_boot)
    for k in range(n_boot):
        Gk = G[rng.integers(0, len(G), len(G))]
        vals[k] = normalise(float(_nearest_distinct(D, Gk).mean()), b.coverage_best, b.coverage_worst)
    return float(vals.std(ddof=1))


# ---------------------------------------------------------------- PCA


@dataclass(frozen=True)
class PCA2:
    mean: np.ndarray
    components: np.ndarray      # (2, dim), unit rows
    variances: np.ndarray       # top two eigenvalues of the sample covariance

    def project(self, X) -> np.ndarray:
        X = _vectors(X, "vectors")
        if X.shape[1] != len(self.mean):
            raise ValueError("dimension mismatch")
        return (X - self.mean) @ self.components.T


def pca2_fit(ds, rtol: float = 1e-10) -> PCA2:
    X = _vectors(ds, "dataset")
    if len(X) < 3:
        raise ValueError("PCA needs at least three vectors")
    mu = X.mean(axis=0)
    _, s, Vt = np.linalg.svd(X - mu, full_matrices=False)
    if len(s) < 2 or s[1] <= rtol * max(s[0], 1e-300):
        raise ValueError("data has rank below two")
    comps = Vt[:2].copy()
    # fix the sign so the largest loading is positive
    for k in range(2):
        j = np.argmax(np.abs(comps[k]))
        if comps[k, j] < 0:
            comps[k] = -comps[k]
    return PCA2(mu, comps, s[:2] ** 2 / (len(X) - 1))


def pca2_project(pca: PCA2, X) -> np.ndarray:
    return pca.project(X)


# ---------------------------------------------------------------- feasibility


@dataclass(frozen=True)
class FeasibilityReport:
    rate: float
    lower: float
    upper: float
    n: int
    feasible: int

    def to_dict(self) -> dict:
        return asdict(self)


def wilson_interval(k: int, n: int, z: float = WILSON_Z) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("empty sample")
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


def feasible_mask(samples, space: DesignSpace = HULL_SPACE) -> np.ndarray:
    """Rows inside the box that satisfy every constraint."""
    X = _vectors(samples, "samples")
    ok = space.in_box(X)
    ok[ok] = np.all(space.margins(X[ok]) >= 0.0, axis=1)
    return ok


def feasibility_rate(samples, space: DesignSpace = HULL_SPACE) -> FeasibilityReport:
    ok = feasible_mask(samples, space)
    k, n = int(ok.sum()), len(ok)
    lo, hi = wilson_interval(k, n)
    return FeasibilityReport(k / n, lo, hi, n, k)


def two_sigma_greater(a: FeasibilityReport, b: FeasibilityReport) -> bool:
    """a.rate exceeds b.rate by more than two pooled binomial standard errors."""
    se = math.sqrt(a.rate * (1 - a.rate) / a.n + b.rate * (1 - b.rate) / b.n)
    return a.rate - b.rate > 2 * se


# ---------------------------------------------------------------- performance


@dataclass(frozen=True)
class MetricRow:
    metric: str
    ds_mean: float
    ds_std: float
    gen_mean: float
    gen_std: float
    scale: float


@dataclass(frozen=True)
class PerformanceTable:
    rows: tuple[MetricRow, ...]
    cw_reduction: tuple[float, ...] | None     # per condition, 1 - gen/ds geometric-mean Cw
    n_ds: int
    n_gen: int

    def row(self, metric: str) -> MetricRow:
        for r in self.rows:
            if r.metric == metric:
                return r
        raise KeyError(metric)

    @property
    def mean_cw_reduction(self) -> float | None:
        return None if self.cw_reduction is None else float(np.mean(self.cw_reduction))


def scale_factor(metric: str, gen_mean: float, ds_mean: float) -> float:
    """Ratio of the underlying raw quantity, generated over dataset.

    Log metrics are undone with base 10; the volume metrics carry a minus sign
    and the drag aggregate sums all conditions, so both are unwound first.
    """
    diff = gen_mean - ds_mean
    if metric == "cw_star":
        return 10.0 ** (diff / N_CONDITIONS)
    if metric in ("v50", "v100"):
        return 10.0 ** (-diff)
    if metric in LOG_METRICS:
        return 10.0 ** diff
    return gen_mean / ds_mean


def _metric_block(x, drag=None):
    if isinstance(x, LabeledDataset):
        _, Y = x.performance_matrix()
        return Y, (x.drag_matrix() if len(Y) else None)
    Y = np.asarray(x, dtype=float)
    return Y, (None if drag is None else np.asarray(drag, dtype=float))


def performance_table(gen, ds, gen_drag=None, ds_drag=None) -> PerformanceTable:
    """Mean/std of all seven metrics for both sets, plus scale factors.

    ``gen`` and ``ds`` are labelled datasets or (n, 7) metric matrices; drag
    grids (n, 32) enable the per-condition Cw reduction.
    """
    G, gd = _metric_block(gen, gen_drag)
    D, dd = _metric_block(ds, ds_drag)
    for name, Y in (("generated", G), ("dataset", D)):
        if Y.ndim != 2 or Y.shape[1] != len(METRICS) or len(Y) == 0:
            raise ValueError(f"{name} set has no performance labels")
        if not np.all(np.isfinite(Y)):
            raise ValueError(f"{name} set has non-finite labels")
    rows = []
    for j, m in enumerate(METRICS):
        gm, dm = float(G[:, j].mean()), float(D[:, j].mean())
        rows.append(MetricRow(m, dm, float(D[:, j].std(ddof=1)) if len(D) > 1 else 0.0,
                              gm, float(G[:, j].std(ddof=1)) if len(G) > 1 else 0.0,
                              scale_factor(m, gm, dm)))
    red = None
    if gd is not None and dd is not None:
        if gd.shape[1:] != (N_CONDITIONS,) or dd.shape[1:] != (N_CONDITIONS,):
            raise ValueError("drag grids must have 32 columns")
        lg = np.log10(gd).mean(axis=0) - np.log10(dd).mean(axis=0)
        red = tuple(float(r) for r in 1.0 - 10.0 ** lg)
    return PerformanceTable(tuple(rows), red, len(D), len(G))


# ---------------------------------------------------------------- writers


def _fmt(x: float) -> str:
    return repr(float(x))


def write_coverage_json(report: CoverageReport, path, extra: Mapping | None = None) -> Path:
    path = Path(path)
    d = report.to_dict()
    if extra:
        d.update(extra)
    path.write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
    return path


def write_pca_csv(path, projected: Mapping[str, np.ndarray]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("set", "pc1", "pc2"))
        for name, P in projected.items():
            for a, b in np.asarray(P, dtype=float):
                w.writerow((name, _fmt(a), _fmt(b)))
    return path


GAMMA_COLUMNS = ("gamma", "feasibility", "coverage", "realism", "coverage_se")


def write_gamma_sweep(path, rows: Sequence[Sequence[float]]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GAMMA_COLUMNS)
        for r in rows:
            if len(r) != len(GAMMA_COLUMNS):
                raise ValueError(f"gamma sweep rows need {len(GAMMA_COLUMNS)} values")
            w.writerow(tuple(_fmt(x) for x in r))
    return path


def read_gamma_sweep(path) -> np.ndarray:
    with Path(path).open() as fh:
        r = csv.reader(fh)
        if tuple(next(r)) != GAMMA_COLUMNS:
            raise ValueError("unexpected gamma sweep header")
        return np.array([[float(x) for x in row] for row in r])


def write_performance_table(path, table: PerformanceTable) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("metric", "ds_mean", "ds_std", "gen_mean", "gen_std", "scale_factor"))
        for r in table.rows:
            w.writerow((r.metric, _fmt(r.ds_mean), _fmt(r.ds_std), _fmt(r.gen_mean),
                        _fmt(r.gen_std), _fmt(r.scale)))
        if table.cw_reduction is not None:
            w.writerow(("cw_condition_reduction_mean", "", "", "", "", _fmt(table.mean_cw_reduction)))
    return path


# ---------------------------------------------------------------- SVG

_PALETTE = ("#7f7f7f", "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")
_W, _H, _PAD = 480, 360, 48


def _frame(xs, ys):
    x0, x1 = float(np.min(xs)), float(np.max(xs))
    y0, y1 = float(np.min(ys)), float(np.max(ys))
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def to_px(x, y):
        px = _PAD + (np.asarray(x) - x0) / (x1 - x0) * (_W - 2 * _PAD)
        py = _H - _PAD - (np.asarray(y) - y0) / (y1 - y0) * (_H - 2 * _PAD)
        return px, py
    return to_px, (x0, x1, y0, y1)


def _svg_doc(body: list[str], title: str, xlabel: str, ylabel: str, bounds) -> str:
    x0, x1, y0, y1 = bounds
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" font-family="sans-serif" font-size="11">',
        f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" height="{_H - 2 * _PAD}" fill="none" stroke="black"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="13">{title}</text>',
        f'<text x="{_W / 2}" y="{_H - 10}" text-anchor="middle">{xlabel}</text>',
        f'<text x="14" y="{_H / 2}" text-anchor="middle" transform="rotate(-90 14 {_H / 2})">{ylabel}</text>',
        f'<text x="{_PAD}" y="{_H - _PAD + 14}">{x0:.3g}</text>',
        f'<text x="{_W - _PAD}" y="{_H - _PAD + 14}" text-anchor="end">{x1:.3g}</text>',
        f'<text x="{_PAD - 4}" y="{_H - _PAD}" text-anchor="end">{y0:.3g}</text>',
        f'<text x="{_PAD - 4}" y="{_PAD + 8}" text-anchor="end">{y1:.3g}</text>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def _legend(names) -> list[str]:
    out = []
    for k, name in enumerate(names):
        y = _PAD + 12 + 14 * k
        out.append(f'<circle cx="{_W - _PAD - 90}" cy="{y - 4}" r="4" fill="{_PALETTE[k % len(_PALETTE)]}"/>')
        out.append(f'<text x="{_W - _PAD - 82}" y="{y}">{name}</text>')
    return out


def svg_scatter(path, sets: Mapping[str, np.ndarray], title="PCA", xlabel="pc1", ylabel="pc2") -> Path:
    pts = [np.asarray(P, dtype=float).reshape(-1, 2) for P in sets.values()]
    allp = np.concatenate(pts)
    to_px, bounds = _frame(allp[:, 0], allp[:, 1])
    body = []
    for k, P in enumerate(pts):
        col = _PALETTE[k % len(_PALETTE)]
        px, py = to_px(P[:, 0], P[:, 1])
        body += [f'<circle cx="{a:.1f}" cy="{b:.1f}" r="1.6" fill="{col}" fill-opacity="0.6"/>'
                 for a, b in zip(px, py)]
    path = Path(path)
    path.write_text(_svg_doc(body + _legend(sets.keys()), title, xlabel, ylabel, bounds))
    return path


def svg_lines(path, x, series: Mapping[str, Sequence[float]], title="", xlabel="x", ylabel="") -> Path:
    x = np.asarray(x, dtype=float)
    ys = [np.asarray(v, dtype=float) for v in series.values()]
    to_px, bounds = _frame(np.tile(x, len(ys)), np.concatenate(ys))
    body = []
    for k, y in enumerate(ys):
        px, py = to_px(x, y)
        pts = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(px, py))
        body.append(f'<polyline points="{pts}" fill="none" stroke="{_PALETTE[k % len(_PALETTE)]}" stroke-width="1.5"/>')
    path = Path(path)
    path.write_text(_svg_doc(body + _legend(series.keys()), title, xlabel, ylabel, bounds))
    return path
