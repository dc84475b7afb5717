"""Sequence and mesh comparison metrics: RMSE, Hausdorff, STED."""

from __future__ import annotations

import numpy as np

from deformsynth.errors import ShapeError
from deformsynth.meshcore import Mesh, MeshSequence


def _frames_array(seq) -> np.ndarray:
    if isinstance(seq, MeshSequence):
        return np.stack(seq.frames) if seq.frame_count else np.zeros((0, 0, 3))
    return np.asarray(seq, dtype=np.float64)


def rmse(a, b) -> float:
    """Root mean squared per-vertex Euclidean distance over all frames."""
    fa, fb = _frames_array(a), _frames_array(b)
    if fa.shape != fb.shape:
        raise ShapeError(f"sequence shapes differ: {fa.shape} vs {fb.shape}")
    if fa.size == 0:
        raise ShapeError("empty sequences")
    d2 = np.sum((fa - fb) ** 2, axis=-1)
    return float(np.sqrt(np.mean(d2)))


def point_triangle_distance(points: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Distances from points (P, 3) to one triangle (3, 3)."""
    return _point_tris_distance(points, tri[None])[:, 0]


def _segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = np.einsum("fi,fi->f", ab, ab)
    denom = np.where(denom < 1e-300, 1.0, denom)
    t = np.clip(np.einsum("pfi,fi->pf", p[:, None] - a, ab) / denom, 0.0, 1.0)
    closest = a + t[:, :, None] * ab
    return np.linalg.norm(p[:, None] - closest, axis=-1)


def _point_tris_distance(points: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Distances (P, F) from each point to each triangle (F, 3, 3).

    Projection onto the triangle plane when the barycentric point is
    interior, otherwise the nearest of the three edge segments.
    """
    p = np.asarray(points, dtype=np.float64)
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    n = np.cross(b - a, c - a)
    nn = np.einsum("fi,fi->f", n, n)
    safe_nn = np.where(nn < 1e-300, 1.0, nn)

    n_unit = n / np.sqrt(safe_nn)[:, None]
    rel = p[:, None] - a  # (P, F, 3)
    dist_plane = np.einsum("pfi,fi->pf", rel, n_unit)
    proj = p[:, None] - dist_plane[:, :, None] * n_unit[None]

    # interior test via same-side cross products against the normal
    def side(u0, u1):
        cr = np.cross(u1[None] - u0[None], proj - u0[None])
        return np.einsum("pfi,fi->pf", cr, n)

    inside = (side(a, b) >= -1e-12 * safe_nn) & (side(b, c) >= -1e-12 * safe_nn) & (
        side(c, a) >= -1e-12 * safe_nn
    )
    edge_d = np.minimum(
        _segment_distance(p, a, b),
        np.minimum(_segment_distance(p, b, c), _segment_distance(p, c, a)),
    )
    degenerate = nn < 1e-300
    inside = inside & ~degenerate[None, :]
    return np.where(inside, np.abs(dist_plane), edge_d)


def _directed_surface_distance(points: np.ndarray, verts: np.ndarray,
                               faces: np.ndarray) -> float:
    """max over points of the exact distance to the triangle surface.

    The nearest-vertex distance bounds the surface distance from above, so
    only triangles with a vertex within that bound plus the largest
    triangle diameter can host the closest point; a KD-tree prunes to that
    candidate set, keeping the result exact.
    """
    from scipy.spatial import cKDTree

    points = np.asarray(points, dtype=np.float64)
    verts = np.asarray(verts, dtype=np.float64)
    faces = np.asarray(faces)
    tris = verts[faces]
    edge_max = max(
        np.linalg.norm(tris[:, 0] - tris[:, 1], axis=1).max(),
        np.linalg.norm(tris[:, 1] - tris[:, 2], axis=1).max(),
        np.linalg.norm(tris[:, 2] - tris[:, 0], axis=1).max(),
    )
    incident = [[] for _ in range(len(verts))]
    for fi, tri in enumerate(faces):
        for v in tri:
            incident[int(v)].append(fi)
    tree = cKDTree(verts)
    d_nn, _ = tree.query(points)
    worst = 0.0
    for p, bound in zip(points, d_nn):
        cand_vertices = tree.query_ball_point(p, bound + edge_max + 1e-12)
        cand = sorted({fi for v in cand_vertices for fi in incident[v]})
        d = _point_tris_distance(p[None], tris[cand]).min()
        worst = max(worst, float(d))
    return worst


def hausdorff(a: Mesh, b: Mesh) -> float:
    """Symmetric Hausdorff distance over vertex-to-nearest-triangle distances."""
    if a.vertex_count == 0 or b.vertex_count == 0:
        raise ShapeError("hausdorff needs nonempty meshes")
    return hausdorff_positions(a.vertices, a.faces, b.vertices, b.faces)


def hausdorff_positions(pos_a: np.ndarray, faces_a: np.ndarray,
                        pos_b: np.ndarray, faces_b: np.ndarray) -> float:
    """Hausdorff between two (positions, faces) surfaces without Mesh wrappers."""
    return max(
        _directed_surface_distance(pos_a, pos_b, faces_b),
        _directed_surface_distance(pos_b, pos_a, faces_a),
    )


def sted_terms(a: MeshSequence, b: MeshSequence):
    """(spatial, temporal) parts of the spatio-temporal edge difference.

    Spatial: RMS over frames and edges of the relative edge-length
    difference (b vs a). Temporal: RMS over frames and vertices of the
    per-vertex velocity difference (one-frame window).
    """
    if a.vertex_count != b.vertex_count or a.frame_count != b.frame_count:
        raise ShapeError("sted needs equal topology and frame counts")
    if a.frame_count == 0:
        raise ShapeError("empty sequences")
    edges = np.array(a.reference.edges(), dtype=np.int64)
    fa = np.stack(a.frames)
    fb = np.stack(b.frames)

    la = np.linalg.norm(fa[:, edges[:, 0]] - fa[:, edges[:, 1]], axis=-1)
    lb = np.linalg.norm(fb[:, edges[:, 0]] - fb[:, edges[:, 1]], axis=-1)
    if np.any(la <= 0.0):
        raise ShapeError("reference sequence has a zero-length edge")
    spatial = float(np.sqrt(np.mean(((lb - la) / la) ** 2)))

    if a.frame_count > 1:
        va = np.diff(fa, axis=0)
        vb = np.diff(fb, axis=0)
        temporal = float(np.sqrt(np.mean(np.sum((vb - va) ** 2, axis=-1))))
    else:
        temporal = 0.0
    return spatial, temporal


def sted(a: MeshSequence, b: MeshSequence, velocity_weight: float = 1.0) -> float:
    """sqrt(spatial^2 + w^2 * temporal^2) over the sted_terms parts."""
    spatial, temporal = sted_terms(a, b)
    return float(np.hypot(spatial, velocity_weight * temporal))
