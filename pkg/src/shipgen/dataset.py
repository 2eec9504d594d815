"""Training corpus: feasible and invalid design vectors, performance labels,
the quantile normalizer, and the on-disk format.

On disk a dataset is a directory of CSV files plus ``manifest.json``, which
records how it was made and a SHA-256 for every file.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri

from shipgen.designspace import HULL_SPACE, DesignSpace, check_constraints, from_csv, to_csv
from shipgen.geometry.curvature import DEFAULT_GRID, hull_curvature
from shipgen.geometry.hydrostatics import HydroRecord, hydrostatics
from shipgen.geometry.maxbox import BoxRecord, maxbox
from shipgen.hydro import CSV_COLUMNS, DEFAULT_QUADRATURE, DragGrid, Quadrature, aggregate_cw, drag_grid

log = logging.getLogger(__name__)

GENERATOR_VERSION = "1.0"
CHUNK = 4096
MAX_ATTEMPTS = 10_000_000
METRICS = ("cw_star", "sa50", "sa100", "v50", "v100", "maxbox", "gc")
LOG_METRICS = ("cw_star", "sa50", "sa100", "v50", "v100", "gc")     # base-10 log columns
FILES = ("designs.csv", "performance.csv", "dragrid.csv", "hydrostatics.csv")


class DatasetError(Exception):
    """Base class for dataset persistence problems."""


class MissingFileError(DatasetError, FileNotFoundError):
    pass


class HashMismatchError(DatasetError):
    pass


# ---------------------------------------------------------------- records


@dataclass(frozen=True)
class PerformanceRecord:
    cw_star: float
    sa50: float
    sa100: float
    v50: float
    v100: float
    maxbox: float
    gc: float
    drag: DragGrid = field(repr=False)
    hydro50: HydroRecord = field(repr=False)
    hydro100: HydroRecord = field(repr=False)
    box: BoxRecord = field(repr=False)
    gc_raw: float = field(repr=False)      # GC * LOA^2

    def metrics(self) -> np.ndarray:
        return np.array([getattr(self, m) for m in METRICS])


@dataclass
class LabeledDataset:
    designs: np.ndarray                    # (n, dim)
    masks: np.ndarray                      # (n,) constraint-violation bitmasks
    manifest: dict
    performance: dict[int, PerformanceRecord] = field(default_factory=dict)

    @property
    def feasible(self) -> np.ndarray:
        return self.masks == 0

    @property
    def feasible_designs(self) -> np.ndarray:
        return self.designs[self.feasible]

    @property
    def labeled_rows(self) -> np.ndarray:
        return np.array(sorted(self.performance), dtype=np.int64)

    def performance_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """Labelled designs and their (m, 7) metric matrix, in row order."""
        rows = self.labeled_rows
        if len(rows) == 0:
            return np.empty((0, self.designs.shape[1])), np.empty((0, len(METRICS)))
        return self.designs[rows], np.stack([self.performance[r].metrics() for r in rows])

    def drag_matrix(self) -> np.ndarray:
        rows = self.labeled_rows
        return np.stack([self.performance[r].drag.row() for r in rows]) if len(rows) else np.empty((0, 32))


# ---------------------------------------------------------------- generation


def _chunk(seed: int, index: int, space: DesignSpace) -> np.ndarray:
    rng = np.random.default_rng([seed, index])
    return space.lower + rng.random((CHUNK, space.dim)) * (space.upper - space.lower)


def generate(n_feasible: int, n_invalid: int, seed: int,
             space: DesignSpace = HULL_SPACE) -> LabeledDataset:
    """Rejection-sample the box until both quotas are met.

    Draws come in fixed chunks, chunk ``c`` from the stream keyed by
    ``(seed, c)``, so the result does not depend on how the work is split.
    Feasible rows come first, then invalid rows, each in draw order.
    """
    if n_feasible < 1 or n_invalid < 1:
        raise ValueError("both quotas must be at least 1")
    feas, inval = [], []
    nf = ni = 0
    attempts = 0
    feasible_attempts = None
    c = 0
    while nf < n_feasible or ni < n_invalid:
        if attempts >= MAX_ATTEMPTS:
            raise RuntimeError(
                f"gave up after {attempts} draws: {nf}/{n_feasible} feasible, "
                f"{ni}/{n_invalid} invalid; the feasible region may be too small")
        P = _chunk(seed, c, space)
        m = space.violation_masks(P)
        f_idx = np.flatnonzero(m == 0)[:n_feasible - nf]
        i_idx = np.flatnonzero(m != 0)[:n_invalid - ni]
        feas.append(P[f_idx])
        inval.append((P[i_idx], m[i_idx]))
        nf += len(f_idx)
        ni += len(i_idx)
        if feasible_attempts is None and nf >= n_feasible:
            feasible_attempts = attempts + int(f_idx[-1]) + 1
        if nf >= n_feasible and ni >= n_invalid:
            last = max([int(ix[-1]) for ix in (f_idx, i_idx) if len(ix)], default=-1)
            attempts += last + 1
        else:
            attempts += CHUNK
        c += 1
    designs = np.concatenate(feas + [t[0] for t in inval])
    masks = np.concatenate([np.zeros(n_feasible, dtype=np.int64)] + [t[1] for t in inval])
    manifest = {
        "generator_version": GENERATOR_VERSION,
        "seed": int(seed),
        "n_feasible": int(n_feasible),
        "n_invalid": int(n_invalid),
        "attempts": int(attempts),
        "feasible_attempts": int(feasible_attempts),
        "feasibility_rate": n_feasible / feasible_attempts,
        "chunk": CHUNK,
        "parameters": list(space.names),
        "lower": [float(x) for x in space.lower],
        "upper": [float(x) for x in space.upper],
    }
    return LabeledDataset(designs, masks, manifest)


# ---------------------------------------------------------------- labelling


def design_seed(v: np.ndarray, seed: int) -> int:
    """Stream seed that depends on the design itself, never on its row."""
    h = hashlib.blake2b(np.asarray(v, dtype="<f8").tobytes(), digest_size=8,
                        key=int(seed).to_bytes(8, "little", signed=True))
    return int.from_bytes(h.digest(), "little") >> 1


def label_design(v, seed: int = 0, quad: Quadrature = DEFAULT_QUADRATURE,
                 curvature_grid: int = DEFAULT_GRID) -> PerformanceRecord:
    """All seven normalised performance metrics for one feasible design."""
    v = np.asarray(v, dtype=float)
    drag = drag_grid(v, quad)
    h50 = hydrostatics(v, 0.5)
    h100 = hydrostatics(v, 1.0)
    box = maxbox(v, seed=design_seed(v, seed))
    gc_raw = hull_curvature(v, curvature_grid)
    if not gc_raw > 0.0:
        raise ValueError("zero mean curvature")
    return PerformanceRecord(
        cw_star=aggregate_cw(drag),
        sa50=math.log10(h50.wetted),
        sa100=math.log10(h100.wetted),
        v50=-math.log10(h50.volume),
        v100=-math.log10(h100.volume),
        maxbox=-box.volume / h100.volume,
        gc=math.log10(gc_raw),
        drag=drag, hydro50=h50, hydro100=h100, box=box, gc_raw=gc_raw,
    )


def _label_one(args):
    row, v, seed = args
    try:
        return row, label_design(v, seed), None
    except Exception as exc:          # recorded and reported by the caller
        return row, None, f"{type(exc).__name__}: {exc}"


def label(ds: LabeledDataset, seed: int | None = None, jobs: int = 1) -> LabeledDataset:
    """Label every feasible design.

    Designs whose evaluation fails are dropped from the returned dataset and
    listed in ``manifest['label_failures']`` with the error.
    """
    rows = np.flatnonzero(ds.feasible)
    if len(rows) == 0:
        raise ValueError("no feasible designs to label")
    seed = ds.manifest.get("seed", 0) if seed is None else seed
    tasks = [(int(r), ds.designs[r], seed) for r in rows]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_label_one, tasks, chunksize=16))
    else:
        results = []
        for i, t in enumerate(tasks):
            results.append(_label_one(t))
            if (i + 1) % 250 == 0:
                log.info("labelled %d / %d designs", i + 1, len(tasks))
    perf, failed = {}, []
    for row, rec, err in results:
        if err is None:
            perf[row] = rec
        else:
            log.warning("design %d dropped: %s", row, err)
            failed.append({"row": row, "design": [float(x) for x in ds.designs[row]], "error": err})
    keep = np.ones(len(ds.designs), dtype=bool)
    keep[[f["row"] for f in failed]] = False
    new_index = np.cumsum(keep) - 1
    manifest = dict(ds.manifest)
    manifest["label_failures"] = failed
    manifest["n_labeled"] = len(perf)
    manifest["label_seed"] = int(seed)
    return LabeledDataset(ds.designs[keep], ds.masks[keep], manifest,
                          {int(new_index[r]): rec for r, rec in perf.items()})


# ---------------------------------------------------------------- normaliser


@dataclass
class Normalizer:
    """Per-column empirical-quantile map onto a normal shape, scaled into [-1, 1].

    ``landmarks[j]`` / ``levels[j]`` are the quantile table of column j: data
    values and their empirical CDF levels.  A level F maps to
    z = ndtri(eps + (1 - 2 eps) F), and u = z / zmax with zmax = ndtri(1 - eps),
    so the fitted minimum and maximum land on -1 and +1.  Outside the fitted
    range the map continues linearly with the column's mean slope
    2 / (max - min), which keeps out-of-range (often infeasible) inputs at
    moderate values instead of the steep tail slope of the normal shape.
    """
    landmarks: list
    levels: list
    eps: float

    @property
    def zmax(self) -> float:
        return float(ndtri(1.0 - self.eps))

    @property
    def dim(self) -> int:
        return len(self.landmarks)

    def _u_of_level(self, F):
        return ndtri(self.eps + (1.0 - 2.0 * self.eps) * F) / self.zmax

    def _level_of_u(self, u):
        return (ndtr(u * self.zmax) - self.eps) / (1.0 - 2.0 * self.eps)

    def forward(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        for j in range(self.dim):
            q, F = np.asarray(self.landmarks[j]), np.asarray(self.levels[j])
            col = x[:, j]
            u = self._u_of_level(np.interp(col, q, F))
            slope = 2.0 / (q[-1] - q[0])
            u = np.where(col < q[0], -1.0 + slope * (col - q[0]), u)
            u = np.where(col > q[-1], 1.0 + slope * (col - q[-1]), u)
            out[:, j] = u
        return out

    def inverse(self, u) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        out = np.empty_like(u)
        for j in range(self.dim):
            q, F = np.asarray(self.landmarks[j]), np.asarray(self.levels[j])
            col = u[:, j]
            inside = np.clip(col, -1.0, 1.0)
            x = np.interp(np.clip(self._level_of_u(inside), 0.0, 1.0), F, q)
            scale = 0.5 * (q[-1] - q[0])
            x = np.where(col < -1.0, q[0] + scale * (col + 1.0), x)
            x = np.where(col > 1.0, q[-1] + scale * (col - 1.0), x)
            out[:, j] = x
        return out

    def to_dict(self) -> dict:
        return {"landmarks": [list(map(float, q)) for q in self.landmarks],
                "levels": [list(map(float, F)) for F in self.levels], "eps": self.eps}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(d["landmarks"], d["levels"], float(d["eps"]))


def fit_normalizer(data, n_quantiles: int = 1000) -> Normalizer:
    """Fit on an (n, d) array, or on the feasible designs of a dataset."""
    X = data.feasible_designs if isinstance(data, LabeledDataset) else np.asarray(data, dtype=float)
    X = np.atleast_2d(X)
    if len(X) < 100:
        raise ValueError(f"need at least 100 rows to fit the normalizer, got {len(X)}")
    n_q = min(n_quantiles, len(X))
    grid = np.linspace(0.0, 1.0, n_q)
    landmarks, levels = [], []
    for j in range(X.shape[1]):
        q = np.quantile(X[:, j], grid)
        if q[-1] <= q[0]:
            raise ValueError(f"column {j} is constant; the quantile map is degenerate")
        # merge tied landmarks so the map stays strictly monotone
        qu, inv = np.unique(q, return_inverse=True)
        F = np.bincount(inv, grid) / np.bincount(inv)
        F[0], F[-1] = 0.0, 1.0
        landmarks.append(qu)
        levels.append(F)
    return Normalizer(landmarks, levels, 0.5 / n_q)


# ---------------------------------------------------------------- persistence


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_table(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([x if isinstance(x, (int, np.integer)) else repr(float(x)) for x in r])
    path.write_text(buf.getvalue())


def _read_table(path: Path):
    rows = list(csv.reader(io.StringIO(path.read_text())))
    return rows[0], rows[1:]


_HYDRO_FIELDS = tuple(f.name for f in fields(HydroRecord))
_BOX_FIELDS = tuple(f.name for f in fields(BoxRecord))
HYDRO_COLUMNS = (tuple(f"h50_{n}" for n in _HYDRO_FIELDS) + tuple(f"h100_{n}" for n in _HYDRO_FIELDS)
                 + tuple(f"box_{n}" for n in _BOX_FIELDS) + ("gc_raw",))


def save(ds: LabeledDataset, directory) -> Path:
    """Write the dataset and a manifest with per-file SHA-256 hashes."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "designs.csv").write_text(to_csv(ds.designs, ds.masks))
    rows = ds.labeled_rows
    recs = [ds.performance[r] for r in rows]
    _write_table(d / "performance.csv", ("row",) + METRICS,
                 [[int(r)] + list(p.metrics()) for r, p in zip(rows, recs)])
    _write_table(d / "dragrid.csv", ("row",) + CSV_COLUMNS,
                 [[int(r)] + list(p.drag.row()) for r, p in zip(rows, recs)])
    _write_table(d / "hydrostatics.csv", ("row",) + HYDRO_COLUMNS,
                 [[int(r)] + [getattr(p.hydro50, n) for n in _HYDRO_FIELDS]
                  + [getattr(p.hydro100, n) for n in _HYDRO_FIELDS]
                  + [getattr(p.box, n) for n in _BOX_FIELDS] + [p.gc_raw]
                  for r, p in zip(rows, recs)])
    manifest = dict(ds.manifest)
    manifest["files"] = {name: _sha256(d / name) for name in FILES}
    tmp = d / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, d / "manifest.json")
    return d


def load(directory) -> LabeledDataset:
    """Read a saved dataset, verifying every file against the manifest."""
    d = Path(directory)
    mpath = d / "manifest.json"
    if not mpath.is_file():
        raise MissingFileError(f"missing file: {mpath}")
    manifest = json.loads(mpath.read_text())
    hashes = manifest.get("files", {})
    for name in FILES:
        p = d / name
        if not p.is_file():
            raise MissingFileError(f"missing file: {p}")
        if hashes.get(name) != _sha256(p):
            raise HashMismatchError(f"hash mismatch for {p}; the file changed after it was saved")
    designs, masks = from_csv((d / "designs.csv").read_text())
    if masks is None:
        raise DatasetError("designs.csv has no violation-mask column")
    _, perf_rows = _read_table(d / "performance.csv")
    _, drag_rows = _read_table(d / "dragrid.csv")
    _, hyd_rows = _read_table(d / "hydrostatics.csv")
    nh = len(_HYDRO_FIELDS)
    perf = {}
    for pr, dr, hr in zip(perf_rows, drag_rows, hyd_rows):
        row = int(pr[0])
        if int(dr[0]) != row or int(hr[0]) != row:
            raise DatasetError(f"row {row} misaligned across label files")
        vals = [float(x) for x in hr[1:]]
        metrics = dict(zip(METRICS, (float(x) for x in pr[1:])))
        perf[row] = PerformanceRecord(
            **metrics,
            drag=DragGrid.from_row([float(x) for x in dr[1:]]),
            hydro50=HydroRecord(*vals[:nh]),
            hydro100=HydroRecord(*vals[nh:2 * nh]),
            box=BoxRecord(*vals[2 * nh:2 * nh + len(_BOX_FIELDS)]),
            gc_raw=vals[-1],
        )
    manifest.pop("files", None)
    return LabeledDataset(designs, masks, manifest, perf)


def verify_feasible_rows(ds: LabeledDataset) -> bool:
    """Every row flagged feasible re-passes the constraint check."""
    return all(check_constraints(v).feasible for v in ds.feasible_designs)
