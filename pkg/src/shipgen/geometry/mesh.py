"""Closed triangle meshes of the hull, feasibility checks and export."""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from shipgen.designspace import as_vector, require_feasible
from shipgen.geometry.surface import surface_grid


@dataclass(frozen=True)
class HullMesh:
    vertices: np.ndarray            # (V, 3) metres
    faces: np.ndarray               # (F, 3) vertex indices, outward winding
    design: np.ndarray | None = field(default=None, compare=False)
    resolution: tuple[int, int] = (0, 0)

    @property
    def point_cloud(self) -> np.ndarray:
        return self.vertices

    def euler_characteristic(self) -> int:
        return len(self.vertices) - len(unique_edges(self.faces)) + len(self.faces)

    def volume(self) -> float:
        a, b, c = (self.vertices[self.faces[:, k]] for k in range(3))
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)

    def area(self) -> float:
        return float(triangle_areas(self.vertices, self.faces).sum())

    def without_face(self, k: int) -> "HullMesh":
        keep = np.ones(len(self.faces), dtype=bool)
        keep[k] = False
        return HullMesh(self.vertices, self.faces[keep], self.design, self.resolution)


def triangle_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    a, b, c = (vertices[faces[:, k]] for k in range(3))
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def unique_edges(faces: np.ndarray) -> np.ndarray:
    e = np.sort(faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    return np.unique(e, axis=0)


def gen_mesh(v, nx: int = 64, nz: int = 64, check: bool = True) -> HullMesh:
    """Watertight mesh of the hull from an ``nx`` x ``nz`` surface grid.

    Each station becomes a closed ring running port deck -> keel ->
    starboard deck and back across the deck, so joining consecutive rings
    yields the sides, the bottom and the deck cap in one sweep.  The tip
    stations collapse onto the centreplane; coincident vertices are welded
    and the resulting degenerate triangles dropped.  ``check=False`` meshes
    infeasible designs too (used to cross-check the algebraic constraints).
    """
    if nx < 8 or nz < 8:
        raise ValueError("mesh resolution must be at least 8 x 8")
    v = require_feasible(v) if check else as_vector(v)
    X, Y, Z = surface_grid(v, nx, nz, check=False)
    # ring order: port deck..keel, starboard keel..deck
    ring_x = np.concatenate([X[:, ::-1], X], axis=1)
    ring_y = np.concatenate([Y[:, ::-1], -Y], axis=1) + 0.0   # +0.0 folds -0.0 into 0.0
    ring_z = np.concatenate([Z[:, ::-1], Z], axis=1)
    pts = np.stack([ring_x, ring_y, ring_z], axis=-1).reshape(-1, 3)
    m = 2 * nz
    i = np.arange(nx - 1)[:, None]
    k = np.arange(m)[None, :]
    a = i * m + k
    b = i * m + (k + 1) % m
    c = b + m
    d = a + m
    faces = np.concatenate([np.stack([a, b, c], -1).reshape(-1, 3),
                            np.stack([a, c, d], -1).reshape(-1, 3)])
    vertices, inverse = np.unique(pts, axis=0, return_inverse=True)
    faces = inverse.reshape(-1)[faces]
    good = ((faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2])
            & (faces[:, 0] != faces[:, 2]))
    faces = faces[good]
    mesh = HullMesh(vertices, faces.astype(np.int64), v.copy(), (nx, nz))
    if mesh.volume() < 0.0:
        mesh = HullMesh(vertices, faces[:, ::-1].copy(), v.copy(), (nx, nz))
    return mesh


def is_closed(mesh: HullMesh) -> bool:
    """Every edge is shared by exactly two faces."""
    f = mesh.faces
    if len(f) == 0:
        return False
    e = np.sort(f[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    return bool(np.all(counts == 2))


def candidate_pairs(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Triangle pairs whose bounding boxes overlap and that share no vertex.

    Spatial-hash broad phase: every triangle is registered in all cells its
    bounding box touches; pairs are formed within cells.
    """
    tri = vertices[faces]
    lo, hi = tri.min(axis=1), tri.max(axis=1)
    cell = max(float(np.median(hi - lo)) * 2.0, 1e-12)
    span = hi.max(axis=0) - lo.min(axis=0)
    dims = np.maximum(np.ceil(span / cell).astype(np.int64) + 1, 1)
    origin = lo.min(axis=0)
    c0 = np.floor((lo - origin) / cell).astype(np.int64)
    c1 = np.floor((hi - origin) / cell).astype(np.int64)
    keys, owners = [], []
    ext = c1 - c0
    for dx in range(int(ext[:, 0].max()) + 1):
        for dy in range(int(ext[:, 1].max()) + 1):
            for dz in range(int(ext[:, 2].max()) + 1):
                sel = (ext[:, 0] >= dx) & (ext[:, 1] >= dy) & (ext[:, 2] >= dz)
                cc = c0[sel] + np.array([dx, dy, dz])
                keys.append((cc[:, 0] * dims[1] + cc[:, 1]) * dims[2] + cc[:, 2])
                owners.append(np.flatnonzero(sel))
    keys = np.concatenate(keys)
    owners = np.concatenate(owners)
    order = np.lexsort((owners, keys))
    keys, owners = keys[order], owners[order]
    pairs = []
    for off in range(1, len(keys)):
        same = keys[off:] == keys[:-off]
        if not same.any():
            break
        pairs.append(np.stack([owners[:-off][same], owners[off:][same]], axis=1))
    if not pairs:
        return np.empty((0, 2), dtype=np.int64)
    p = np.concatenate(pairs)
    p = np.unique(np.sort(p, axis=1), axis=0)
    fa, fb = faces[p[:, 0]], faces[p[:, 1]]
    shared = (fa[:, :, None] == fb[:, None, :]).any(axis=(1, 2))
    overlap = np.all((lo[p[:, 0]] <= hi[p[:, 1]]) & (lo[p[:, 1]] <= hi[p[:, 0]]), axis=1)
    return p[~shared & overlap]


def self_intersections(mesh: HullMesh) -> np.ndarray:
    """Pairs of non-adjacent faces that intersect."""
    from shipgen._accel import tri_tri_intersect

    verts = np.ascontiguousarray(mesh.vertices, dtype=np.float64)
    faces = mesh.faces
    nondegenerate = triangle_areas(verts, faces) > 0.0
    pairs = candidate_pairs(verts, faces)
    pairs = pairs[nondegenerate[pairs[:, 0]] & nondegenerate[pairs[:, 1]]]
    if len(pairs) == 0:
        return pairs
    hit = tri_tri_intersect(verts, np.ascontiguousarray(faces, dtype=np.int64),
                            np.ascontiguousarray(pairs, dtype=np.int64))
    return pairs[hit.astype(bool)]


def mesh_feasibility(mesh: HullMesh) -> bool:
    """True iff the mesh is watertight and free of self-intersections."""
    if not is_closed(mesh):
        return False
    return len(self_intersections(mesh)) == 0


def to_stl(mesh: HullMesh, header: bytes = b"shipgen hull") -> bytes:
    """Binary little-endian STL, units metres."""
    tri = mesh.vertices[mesh.faces]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    n = np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)
    rec = np.zeros(len(tri), dtype=np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)),
                                             ("attr", "<u2")]))
    rec["n"] = n
    rec["v"] = tri
    return header[:80].ljust(80, b"\0") + struct.pack("<I", len(tri)) + rec.tobytes()


def read_stl(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    """Normals and triangle corners from binary STL bytes."""
    (count,) = struct.unpack_from("<I", data, 80)
    rec = np.frombuffer(data, offset=84, count=count,
                        dtype=np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")]))
    return rec["n"].astype(float), rec["v"].astype(float)


def point_cloud_csv(mesh: HullMesh) -> str:
    buf = io.StringIO()
    buf.write("x,y,z\n")
    for x, y, z in mesh.point_cloud.tolist():
        buf.write(f"{x!r},{y!r},{z!r}\n")
    return buf.getvalue()
