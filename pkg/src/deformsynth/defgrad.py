"""Per-vertex deformation gradients and their rotation/scale-shear factors.

The gradient at vertex i is the 3x3 matrix T minimizing

    sum_{j in N_i} c_ij || (p_i - p_j) - T (p0_i - p0_j) ||^2

over the one-ring, solved in closed form through the normal equations
A = sum c e0 e0^T, B = sum c e e0^T, T = B A^{-1}. Flat one-rings make A
rank-2; those fits are regularized with one synthetic pair mapping the
reference vertex normal to the deformed vertex normal, weighted by the
mean one-ring weight. T is then factored as T = R S with R a proper
rotation (sign-corrected SVD) and S symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from deformsynth.errors import DegenerateNeighborhoodError, NumericError, ShapeError
from deformsynth.meshcore import Mesh, vertex_normals

# smallest/largest eigenvalue ratio below which the one-ring counts as planar
_PLANAR_TOL = 1.0e-8


@dataclass(frozen=True)
class DeformField:
    """Per-vertex gradients T and their polar factors R (rotation), S (symmetric)."""

    T: np.ndarray  # (V, 3, 3)
    R: np.ndarray  # (V, 3, 3)
    S: np.ndarray  # (V, 3, 3)

    @property
    def vertex_count(self) -> int:
        return len(self.T)


def polar_decompose(T: np.ndarray):
    """Factor T = R S with det(R) = +1 and S symmetric.

    Reflections (det T < 0) are absorbed into S by flipping the smallest
    singular direction, keeping R a proper rotation.
    """
    T = np.asarray(T, dtype=np.float64)
    if not np.all(np.isfinite(T)):
        raise NumericError("deformation gradient contains non-finite entries")
    U, _, Vt = np.linalg.svd(T)
    d = np.sign(np.linalg.det(U @ Vt))
    U[:, 2] *= d
    R = U @ Vt
    S = R.T @ T
    S = 0.5 * (S + S.T)  # kill round-off asymmetry
    return R, S


def _normal_equations(reference: Mesh, frame_positions: np.ndarray, i: int):
    p0 = reference.vertices
    pt = frame_positions
    A = np.zeros((3, 3))
    B = np.zeros((3, 3))
    ws = []
    for j in reference.adjacency[i]:
        c = reference.weight(i, j)
        ws.append(c)
        e0 = p0[i] - p0[j]
        et = pt[i] - pt[j]
        A += c * np.outer(e0, e0)
        B += c * np.outer(et, e0)
    return A, B, float(np.mean(ws))


def fit_gradient(
    reference: Mesh,
    frame_positions: np.ndarray,
    i: int,
    normals0: np.ndarray | None = None,
    normals_t: np.ndarray | None = None,
) -> np.ndarray:
    """Closed-form Eq.-(least-squares) deformation gradient at vertex i.

    `normals0`/`normals_t` may be passed to reuse precomputed vertex
    normals; they are only consulted when the one-ring is planar.
    """
    if not reference.has_weights:
        raise ShapeError("reference mesh needs compute_weights() first")
    frame_positions = np.asarray(frame_positions, dtype=np.float64)
    if frame_positions.shape != reference.vertices.shape:
        raise ShapeError(
            f"frame has shape {frame_positions.shape}, expected {reference.vertices.shape}"
        )
    A, B, mean_w = _normal_equations(reference, frame_positions, i)
    evals = np.linalg.eigvalsh(A)
    if evals[0] < _PLANAR_TOL * max(evals[-1], 1e-300):
        if normals0 is None:
            normals0 = vertex_normals(reference.faces, reference.vertices)
        if normals_t is None:
            normals_t = vertex_normals(reference.faces, frame_positions)
        w = mean_w if mean_w > 1e-12 else 1.0
        A = A + w * np.outer(normals0[i], normals0[i])
        B = B + w * np.outer(normals_t[i], normals0[i])
        evals = np.linalg.eigvalsh(A)
        if evals[0] < _PLANAR_TOL * max(evals[-1], 1e-300):
            raise DegenerateNeighborhoodError(
                f"one-ring of vertex {i} is degenerate even after normal regularization"
            )
    return np.linalg.solve(A, B.T).T  # A symmetric, so this is B A^{-1}


def fit_field(reference: Mesh, frame_positions: np.ndarray) -> DeformField:
    """Vectorized per-vertex fits for a whole frame, with polar factors."""
    if not reference.has_weights:
        raise ShapeError("reference mesh needs compute_weights() first")
    frame_positions = np.asarray(frame_positions, dtype=np.float64)
    if frame_positions.shape != reference.vertices.shape:
        raise ShapeError(
            f"frame has shape {frame_positions.shape}, expected {reference.vertices.shape}"
        )
    if not np.all(np.isfinite(frame_positions)):
        raise NumericError("frame positions contain non-finite entries")

    nv = reference.vertex_count
    p0 = reference.vertices
    pt = frame_positions
    maxdeg = max(reference.degree(i) for i in range(nv))
    nbr = np.zeros((nv, maxdeg), dtype=np.int64)
    wgt = np.zeros((nv, maxdeg))
    mask = np.zeros((nv, maxdeg))
    for i in range(nv):
        adj = reference.adjacency[i]
        nbr[i, : len(adj)] = adj
        wgt[i, : len(adj)] = [reference.weight(i, j) for j in adj]
        mask[i, : len(adj)] = 1.0

    e0 = (p0[:, None, :] - p0[nbr]) * mask[:, :, None]
    et = (pt[:, None, :] - pt[nbr]) * mask[:, :, None]
    A = np.einsum("vk,vki,vkj->vij", wgt, e0, e0)
    B = np.einsum("vk,vki,vkj->vij", wgt, et, e0)

    evals = np.linalg.eigvalsh(A)
    planar = evals[:, 0] < _PLANAR_TOL * np.maximum(evals[:, -1], 1e-300)
    if np.any(planar):
        n0 = vertex_normals(reference.faces, p0)
        nt = vertex_normals(reference.faces, pt)
        mean_w = wgt.sum(axis=1) / mask.sum(axis=1)
        mean_w = np.where(mean_w > 1e-12, mean_w, 1.0)
        sel = np.where(planar)[0]
        A[sel] += mean_w[sel, None, None] * np.einsum("vi,vj->vij", n0[sel], n0[sel])
        B[sel] += mean_w[sel, None, None] * np.einsum("vi,vj->vij", nt[sel], n0[sel])
        evals = np.linalg.eigvalsh(A)
        still = evals[:, 0] < _PLANAR_TOL * np.maximum(evals[:, -1], 1e-300)
        if np.any(still):
            i = int(np.where(still)[0][0])
            raise DegenerateNeighborhoodError(
                f"one-ring of vertex {i} is degenerate even after normal regularization"
            )
    T = np.transpose(np.linalg.solve(A, np.transpose(B, (0, 2, 1))), (0, 2, 1))

    U, _, Vt = np.linalg.svd(T)
    det = np.linalg.det(np.matmul(U, Vt))
    U[:, :, 2] *= np.sign(det)[:, None]
    R = np.matmul(U, Vt)
    S = np.matmul(np.transpose(R, (0, 2, 1)), T)
    S = 0.5 * (S + np.transpose(S, (0, 2, 1)))
    return DeformField(T=T, R=R, S=S)
