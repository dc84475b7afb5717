"""Vertex recovery from features via one sparse solve, and feature interpolation.

The positions minimize

    sum_i sum_{j in N_i} c_ij || (p_i - p_j) - T_i (p0_i - p0_j) ||^2

with one vertex pinned to an anchor position. The system matrix depends
only on the reference weights, so its factorization is computed once per
reference and shared across frames.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from deformsynth.errors import ConnectivityError, ShapeError
from deformsynth.meshcore import Mesh
from deformsynth.tsacap import FeatureFrame, unpack_features


class Reconstructor:
    """Shared factorization for reconstructing frames over one reference mesh."""

    def __init__(self, reference: Mesh, anchor: int = 0, solver: str = "lu"):
        if not reference.has_weights:
            raise ShapeError("reference mesh needs compute_weights() first")
        if not 0 <= anchor < reference.vertex_count:
            raise ShapeError(f"anchor {anchor} out of range")
        if solver not in ("lu", "cg"):
            raise ValueError(f"unknown solver {solver!r}")
        self.reference = reference
        self.anchor = anchor
        self.solver = solver

        nv = reference.vertex_count
        rows, cols, vals = [], [], []
        for i in range(nv):
            diag = 0.0
            for j in reference.adjacency[i]:
                c = reference.weight(i, j)
                diag += 2.0 * c
                rows.append(i)
                cols.append(int(j))
                vals.append(-2.0 * c)
            rows.append(i)
            cols.append(i)
            vals.append(diag)
        L = sp.csr_matrix((vals, (rows, cols)), shape=(nv, nv))
        self._keep = np.array([k for k in range(nv) if k != anchor])
        self._L_anchor_col = L[self._keep][:, [anchor]].toarray().ravel()
        self._L_reduced = L[self._keep][:, self._keep].tocsc()
        self._lu = None
        if solver == "lu":
            try:
                self._lu = spla.splu(self._L_reduced)
            except RuntimeError as exc:
                raise ConnectivityError(
                    f"reconstruction system is singular ({exc}); is the mesh connected?"
                ) from exc

    def _solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._lu is not None:
            return self._lu.solve(rhs)
        out = np.empty_like(rhs)
        n = self._L_reduced.shape[0]
        for d in range(rhs.shape[1]):
            x, info = spla.cg(self._L_reduced, rhs[:, d], rtol=1e-10, atol=0.0, maxiter=10 * n)
            if info != 0:
                raise ConnectivityError(f"conjugate gradients failed to converge (info={info})")
            out[:, d] = x
        return out

    def reconstruct(self, frame: FeatureFrame, anchor_position: np.ndarray) -> np.ndarray:
        """Positions (V, 3) for one feature frame with the anchor pinned."""
        mesh = self.reference
        if frame.vertex_count != mesh.vertex_count:
            raise ShapeError(
                f"frame has {frame.vertex_count} vertices, reference has {mesh.vertex_count}"
            )
        R, S = unpack_features(frame)
        T = np.matmul(R, S)
        p0 = mesh.vertices
        nv = mesh.vertex_count

        b = np.zeros((nv, 3))
        for i in range(nv):
            Ti = T[i]
            for j in mesh.adjacency[i]:
                c = mesh.weight(i, j)
                b[i] += c * (Ti + T[j]) @ (p0[i] - p0[j])

        anchor_position = np.asarray(anchor_position, dtype=np.float64).reshape(3)
        rhs = b[self._keep] - np.outer(self._L_anchor_col, anchor_position)
        sol = self._solve(rhs)
        out = np.empty((nv, 3))
        out[self.anchor] = anchor_position
        out[self._keep] = sol
        return out


def reconstruct_frame(
    reference: Mesh, frame: FeatureFrame, anchor: int, anchor_position: np.ndarray
) -> np.ndarray:
    """One-shot reconstruction; prefer Reconstructor when solving many frames."""
    return Reconstructor(reference, anchor=anchor).reconstruct(frame, anchor_position)


def interpolate(a: FeatureFrame, b: FeatureFrame, t: float) -> FeatureFrame:
    """Component-wise (1-t)*a + t*b; endpoints are returned bit-exactly."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"feature shapes differ: {a.data.shape} vs {b.data.shape}")
    if t == 0.0:
        return FeatureFrame(a.data.copy())
    if t == 1.0:
        return FeatureFrame(b.data.copy())
    return FeatureFrame((1.0 - t) * a.data + t * b.data)
