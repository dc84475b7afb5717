"""Cloth-obstacle penetration detection and wrinkle-preserving resolution.

Obstacles are analytic signed-distance shapes. Each vertex closer than the
margin is pushed to its closest surface point offset by the margin, while
a Laplacian-difference term holds the local wrinkle pattern of the initial
mesh. Detection and solving alternate until collision-free or max_iter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from deformsynth.errors import ShapeError
from deformsynth.meshcore import Mesh


def _perp_fallback(axis: np.ndarray) -> np.ndarray:
    """Unit vector perpendicular to axis; +x convention when possible."""
    for e in (np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0])):
        v = e - np.dot(e, axis) * axis
        n = np.linalg.norm(v)
        if n > 1e-8:
            return v / n
    return np.array([1.0, 0, 0])


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float
    margin: float = 0.0

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(points - self.center, axis=-1) - self.radius

    def closest_point(self, p: np.ndarray):
        d = p - np.asarray(self.center, dtype=np.float64)
        n = np.linalg.norm(d)
        direction = d / n if n > 1e-12 else np.array([1.0, 0.0, 0.0])  # center: +x convention
        return np.asarray(self.center) + self.radius * direction, direction


@dataclass(frozen=True)
class Capsule:
    p0: np.ndarray
    p1: np.ndarray
    radius: float
    margin: float = 0.0

    def _core(self, p: np.ndarray) -> np.ndarray:
        a = np.asarray(self.p0, dtype=np.float64)
        b = np.asarray(self.p1, dtype=np.float64)
        ab = b - a
        denom = float(np.dot(ab, ab))
        t = 0.0 if denom < 1e-30 else float(np.clip(np.dot(p - a, ab) / denom, 0.0, 1.0))
        return a + t * ab

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.array([np.linalg.norm(p - self._core(p)) for p in pts]) - self.radius

    def closest_point(self, p: np.ndarray):
        core = self._core(p)
        d = p - core
        n = np.linalg.norm(d)
        if n > 1e-12:
            direction = d / n
        else:
            ab = np.asarray(self.p1, dtype=np.float64) - np.asarray(self.p0, dtype=np.float64)
            nab = np.linalg.norm(ab)
            axis = ab / nab if nab > 1e-30 else np.array([0.0, 0.0, 1.0])
            direction = _perp_fallback(axis)
        return core + self.radius * direction, direction


@dataclass(frozen=True)
class Cylinder:
    """Finite closed cylinder: center, unit axis, radius, full height."""

    center: np.ndarray
    axis: np.ndarray
    radius: float
    height: float
    margin: float = 0.0

    def _frame(self, p: np.ndarray):
        c = np.asarray(self.center, dtype=np.float64)
        u = np.asarray(self.axis, dtype=np.float64)
        u = u / np.linalg.norm(u)
        rel = p - c
        h = float(np.dot(rel, u))
        radial = rel - h * u
        rd = float(np.linalg.norm(radial))
        rhat = radial / rd if rd > 1e-12 else _perp_fallback(u)
        return c, u, h, rd, rhat

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        out = np.empty(len(pts))
        half = self.height / 2.0
        for k, p in enumerate(pts):
            _, _, h, rd, _ = self._frame(p)
            dr = rd - self.radius
            da = abs(h) - half
            if dr <= 0.0 and da <= 0.0:
                out[k] = max(dr, da)
            else:
                out[k] = float(np.hypot(max(dr, 0.0), max(da, 0.0)))
        return out

    def closest_point(self, p: np.ndarray):
        c, u, h, rd, rhat = self._frame(p)
        half = self.height / 2.0
        dr = rd - self.radius
        da = abs(h) - half
        sign_h = 1.0 if h >= 0 else -1.0
        if dr <= 0.0 and da <= 0.0:  # inside: exit through the nearer face
            if dr >= da:
                return c + h * u + self.radius * rhat, rhat
            return c + sign_h * half * u + rd * rhat, sign_h * u
        if dr <= 0.0:  # beyond a cap, radially inside
            return c + sign_h * half * u + rd * rhat, sign_h * u
        if da <= 0.0:  # beside the barrel
            return c + h * u + self.radius * rhat, rhat
        closest = c + sign_h * half * u + self.radius * rhat  # rim
        d = p - closest
        n = np.linalg.norm(d)
        normal = d / n if n > 1e-12 else rhat
        return closest, normal


@dataclass(frozen=True)
class CollisionHit:
    vertex: int
    point: np.ndarray
    normal: np.ndarray


@dataclass(frozen=True)
class RefineResult:
    positions: np.ndarray
    iterations: int
    collision_free: bool
    message: str = ""


def detect_collisions(positions: np.ndarray, obstacle) -> list:
    """Vertices with signed distance below the obstacle margin."""
    positions = np.asarray(positions, dtype=np.float64)
    sd = obstacle.signed_distance(positions)
    hits = []
    for i in np.where(sd < obstacle.margin)[0]:
        point, normal = obstacle.closest_point(positions[i])
        hits.append(CollisionHit(vertex=int(i), point=point, normal=normal))
    return hits


def _normalized_laplacian(mesh: Mesh) -> sp.csr_matrix:
    """Cotangent Laplacian with rows scaled by the inverse weight sum."""
    nv = mesh.vertex_count
    rows, cols, vals = [], [], []
    for i in range(nv):
        wsum = sum(mesh.weight(i, j) for j in mesh.adjacency[i])
        if abs(wsum) < 1e-12:
            wsum = float(mesh.degree(i))
            weights = [(j, 1.0) for j in mesh.adjacency[i]]
        else:
            weights = [(j, mesh.weight(i, j)) for j in mesh.adjacency[i]]
        rows.append(i)
        cols.append(i)
        vals.append(1.0)
        for j, w in weights:
            rows.append(i)
            cols.append(int(j))
            vals.append(-w / wsum)
    return sp.csr_matrix((vals, (rows, cols)), shape=(nv, nv))


def refine(
    positions: np.ndarray,
    obstacle,
    initial_positions: np.ndarray,
    mesh: Mesh,
    lam: float = 1.0,
    max_iter: int = 10,
    collide_weight: float = 10.0,
    anchor_weight: float = 0.3,
    overshoot: float = 1.5,
    tol: float = 1e-9,
) -> RefineResult:
    """Push colliding vertices past the margin while preserving local detail.

    Each iteration solves

        argmin  sum_active  wc ||p_i - q_i||^2
              + sum_others  mu ||p_i - p_init,i||^2
              + lam ||L p - L p_init||^2

    with q_i on the offset surface. The active set is sticky and the
    per-vertex offset starts at the margin and grows by `overshoot` times
    the remaining deficit, so the soft solve clears the margin in very few
    iterations instead of stalling just inside it. Stops when every signed
    distance is >= margin - tol; non-convergence is reported, not raised.
    """
    positions = np.asarray(positions, dtype=np.float64).copy()
    initial_positions = np.asarray(initial_positions, dtype=np.float64)
    if positions.shape != initial_positions.shape or positions.shape[0] != mesh.vertex_count:
        raise ShapeError("positions/initial/mesh vertex counts disagree")
    if not mesh.has_weights:
        raise ShapeError("mesh needs compute_weights() first")

    margin = obstacle.margin
    sd = obstacle.signed_distance(positions)
    if sd.min() >= margin - tol:
        return RefineResult(positions=positions, iterations=0, collision_free=True)

    L = _normalized_laplacian(mesh)
    LtL = (L.T @ L).tocsr()
    lap_init = LtL @ initial_positions
    nv = mesh.vertex_count

    offsets: dict = {}
    iterations = 0
    while iterations < max_iter:
        for i in np.where(sd < margin - tol)[0]:
            i = int(i)
            deficit = margin - sd[i]
            if i in offsets:
                offsets[i] += overshoot * deficit
            else:
                offsets[i] = margin + (overshoot - 1.0) * deficit
        iterations += 1
        cdiag = np.full(nv, anchor_weight)
        targets = initial_positions.copy()
        for v, off in offsets.items():
            point, normal = obstacle.closest_point(positions[v])
            cdiag[v] = collide_weight
            targets[v] = point + off * normal
        A = (sp.diags(cdiag) + lam * LtL).tocsc()
        rhs = cdiag[:, None] * targets + lam * lap_init
        lu = spla.splu(A)
        for d in range(3):
            positions[:, d] = lu.solve(rhs[:, d])
        sd = obstacle.signed_distance(positions)
        if sd.min() >= margin - tol:
            return RefineResult(positions=positions, iterations=iterations, collision_free=True)

    remaining = int(np.sum(sd < margin - tol))
    return RefineResult(
        positions=positions,
        iterations=iterations,
        collision_free=False,
        message=f"{remaining} vertices still colliding after {iterations} iterations",
    )
