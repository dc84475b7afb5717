"""Triangle-mesh data model, OBJ I/O, one-ring adjacency and cotangent weights.

Meshes are immutable after construction: vertex/face arrays are marked
read-only and the weight table is rebuilt, not mutated, by
:func:`compute_weights`. All downstream modules share this data model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from deformsynth.errors import (
    DegenerateGeometryError,
    MeshFormatError,
    MeshStructureError,
    ShapeError,
)

WEIGHT_CLAMP = 1.0e4  # cotangent weights clamped to +-this to tame near-degenerate triangles


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Mesh:
    """Shared-topology triangle mesh.

    vertices: (V, 3) float64 positions.
    faces: (F, 3) int64 vertex-index triples.
    adjacency: per-vertex sorted one-ring neighbor arrays.
    edge_weights: {(i, j) with i < j: cotangent weight}, empty until
        :func:`compute_weights` has been applied.
    """

    vertices: np.ndarray
    faces: np.ndarray
    adjacency: tuple
    edge_weights: dict = field(default_factory=dict)

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def face_count(self) -> int:
        return len(self.faces)

    @property
    def has_weights(self) -> bool:
        return bool(self.edge_weights)

    def weight(self, i: int, j: int) -> float:
        return self.edge_weights[(i, j) if i < j else (j, i)]

    def edges(self) -> list:
        """Undirected edge list as sorted (i, j) tuples, in index order."""
        out = []
        for i, nbrs in enumerate(self.adjacency):
            for j in nbrs:
                if j > i:
                    out.append((i, int(j)))
        return out

    def degree(self, i: int) -> int:
        return len(self.adjacency[i])


def build_mesh(vertices: np.ndarray, faces: np.ndarray) -> Mesh:
    """Validate topology and construct a Mesh (weights not yet computed).

    Rejects out-of-range/repeated indices, edges shared by more than two
    faces, and vertices with fewer than two neighbors (the gradient fit
    needs |N_i| >= 2).
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise ShapeError(f"vertices must be (V, 3), got {vertices.shape}")
    if faces.ndim != 2 or faces.shape[1] != 3:
        raise ShapeError(f"faces must be (F, 3), got {faces.shape}")
    nv = len(vertices)
    if faces.size and (faces.min() < 0 or faces.max() >= nv):
        bad = faces[(faces < 0) | (faces >= nv)][0]
        raise MeshStructureError(f"face index {bad} out of range [0, {nv})")

    edge_faces: dict = {}
    neighbor_sets = [set() for _ in range(nv)]
    for fi, (a, b, c) in enumerate(faces):
        if a == b or b == c or a == c:
            raise MeshStructureError(f"face {fi} repeats a vertex index")
        for i, j in ((a, b), (b, c), (c, a)):
            key = (min(i, j), max(i, j))
            edge_faces[key] = edge_faces.get(key, 0) + 1
            if edge_faces[key] > 2:
                raise MeshStructureError(f"edge {key} shared by more than two faces")
            neighbor_sets[i].add(int(j))
            neighbor_sets[j].add(int(i))
    for i, nbrs in enumerate(neighbor_sets):
        if len(nbrs) < 2:
            raise MeshStructureError(f"vertex {i} has fewer than two neighbors")

    adjacency = tuple(_readonly(np.array(sorted(s), dtype=np.int64)) for s in neighbor_sets)
    return Mesh(_readonly(vertices), _readonly(faces), adjacency)


def load_obj(path) -> Mesh:
    """Load a Wavefront OBJ subset: `v x y z` and triangle/quad/polygon `f`.

    Polygon faces are fan-triangulated. Indices are 1-based; `i/t/n` forms
    keep only the vertex index. Unknown keywords and `#` comments are
    skipped. Weights are left empty until :func:`compute_weights`.
    """
    vertices = []
    raw_faces = []  # (line_no, [indices])
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise MeshFormatError("vertex needs three coordinates", line_no)
                try:
                    vertices.append([float(x) for x in parts[1:4]])
                except ValueError as exc:
                    raise MeshFormatError(f"bad vertex coordinate: {exc}", line_no) from exc
            elif tag == "f":
                if len(parts) < 4:
                    raise MeshFormatError("face needs at least three indices", line_no)
                idx = []
                for tok in parts[1:]:
                    head = tok.split("/", 1)[0]
                    try:
                        idx.append(int(head))
                    except ValueError as exc:
                        raise MeshFormatError(f"bad face index {tok!r}", line_no) from exc
                raw_faces.append((line_no, idx))
            # all other tags (vn, vt, o, g, s, usemtl, mtllib, ...) are ignored

    nv = len(vertices)
    faces = []
    for line_no, idx in raw_faces:
        for k in idx:
            if k < 1 or k > nv:
                raise MeshStructureError(f"line {line_no}: face index {k} out of range [1, {nv}]")
        zero_based = [k - 1 for k in idx]
        for k in range(1, len(zero_based) - 1):  # fan triangulation
            faces.append((zero_based[0], zero_based[k], zero_based[k + 1]))

    if nv == 0 or not faces:
        raise MeshFormatError(f"{path}: no usable 'v'/'f' records")
    return build_mesh(np.array(vertices), np.array(faces))


def save_obj(path, vertices: np.ndarray, faces: np.ndarray) -> None:
    """Write OBJ with 9-significant-digit floats and 1-based face indices."""
    vertices = np.asarray(vertices, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in vertices:
            fh.write(f"v {x:.9g} {y:.9g} {z:.9g}\n")
        for a, b, c in np.asarray(faces):
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


def compute_weights(mesh: Mesh) -> Mesh:
    """Return a copy of `mesh` with cotangent edge weights populated.

    Each edge accumulates cot(opposite angle) from every incident face, so
    boundary edges naturally use the single available angle. Weights are
    clamped to +-WEIGHT_CLAMP.
    """
    v = mesh.vertices
    weights: dict = {}
    for fi, tri in enumerate(mesh.faces):
        p = v[tri]
        area2 = np.linalg.norm(np.cross(p[1] - p[0], p[2] - p[0]))
        if area2 <= 0.0 or not np.isfinite(area2):
            raise DegenerateGeometryError(f"face {fi} {tuple(int(x) for x in tri)} has zero area")
        for k in range(3):
            o, i, j = tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]
            u = v[i] - v[o]
            w = v[j] - v[o]
            cot = float(np.dot(u, w) / np.linalg.norm(np.cross(u, w)))
            key = (min(i, j), max(i, j))
            weights[key] = weights.get(key, 0.0) + cot
    for key, val in weights.items():
        weights[key] = float(np.clip(val, -WEIGHT_CLAMP, WEIGHT_CLAMP))
    return Mesh(mesh.vertices, mesh.faces, mesh.adjacency, weights)


def vertex_normals(faces: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Area-weighted vertex normals for the given positions."""
    positions = np.asarray(positions, dtype=np.float64)
    n = np.zeros_like(positions)
    fn = np.cross(
        positions[faces[:, 1]] - positions[faces[:, 0]],
        positions[faces[:, 2]] - positions[faces[:, 0]],
    )
    for k in range(3):
        np.add.at(n, faces[:, k], fn)
    norms = np.linalg.norm(n, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return n / norms


def bbox_diagonal(positions: np.ndarray) -> float:
    positions = np.asarray(positions)
    return float(np.linalg.norm(positions.max(axis=0) - positions.min(axis=0)))


@dataclass(frozen=True)
class MeshSequence:
    """A reference mesh plus per-frame vertex positions of fixed topology."""

    reference: Mesh
    frames: tuple

    def __post_init__(self):
        nv = self.reference.vertex_count
        for t, f in enumerate(self.frames):
            if f.shape != (nv, 3):
                raise ShapeError(f"frame {t} has shape {f.shape}, expected ({nv}, 3)")

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    @property
    def vertex_count(self) -> int:
        return self.reference.vertex_count


def make_sequence(reference: Mesh, frames) -> MeshSequence:
    return MeshSequence(reference, tuple(_readonly(np.asarray(f, dtype=np.float64)) for f in frames))


def write_obj_sequence(dirpath, seq: MeshSequence) -> None:
    """Write frames as frame_%05d.obj under dirpath (created if needed)."""
    import os

    os.makedirs(dirpath, exist_ok=True)
    for t, frame in enumerate(seq.frames):
        save_obj(os.path.join(dirpath, f"frame_{t:05d}.obj"), frame, seq.reference.faces)


def read_obj_sequence(dirpath) -> MeshSequence:
    """Load frame_*.obj files (sorted) as a MeshSequence.

    The first frame supplies the reference topology and rest positions;
    cotangent weights are computed on it.
    """
    import glob
    import os

    paths = sorted(glob.glob(os.path.join(dirpath, "frame_*.obj")))
    if not paths:
        raise MeshFormatError(f"no frame_*.obj files in {dirpath}")
    reference = compute_weights(load_obj(paths[0]))
    frames = [reference.vertices]
    for p in paths[1:]:
        m = load_obj(p)
        if m.vertex_count != reference.vertex_count or not np.array_equal(m.faces, reference.faces):
            raise MeshStructureError(f"{p}: topology differs from {paths[0]}")
        frames.append(m.vertices)
    return make_sequence(reference, frames)
