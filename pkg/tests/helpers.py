"""Shared construction helpers for the test suite."""

from __future__ import annotations

import numpy as np

from deformsynth.meshcore import Mesh, build_mesh, compute_weights


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64)


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)


def random_rotation(rng: np.random.Generator, max_angle: float = np.pi) -> np.ndarray:
    from deformsynth.tsacap import rodrigues

    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return rodrigues(axis, rng.random() * max_angle)


def random_spd(rng: np.random.Generator) -> np.ndarray:
    """Symmetric positive definite 3x3 with eigenvalues in ~[0.5, 2]."""
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    return q @ np.diag(0.5 + 1.5 * rng.random(3)) @ q.T


def octahedron() -> Mesh:
    """All one-rings are non-planar; handy for exact affine-fit tests."""
    verts = np.array(
        [
            [1.0, 0, 0], [-1.0, 0, 0],
            [0, 1.0, 0], [0, -1.0, 0],
            [0, 0, 1.0], [0, 0, -1.0],
        ]
    )
    faces = np.array(
        [
            [0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
            [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5],
        ]
    )
    return compute_weights(build_mesh(verts, faces))


def fan_mesh(rng: np.random.Generator, spokes: int = 6) -> Mesh:
    """Vertex 0 surrounded by a jittered non-planar ring (closed fan)."""
    angles = np.linspace(0, 2 * np.pi, spokes, endpoint=False)
    ring = np.stack(
        [
            np.cos(angles) * (1.0 + 0.2 * rng.random(spokes)),
            np.sin(angles) * (1.0 + 0.2 * rng.random(spokes)),
            0.4 * (rng.random(spokes) - 0.5),
        ],
        axis=1,
    )
    verts = np.vstack([[0.0, 0.0, 0.0], ring])
    faces = np.array([[0, 1 + k, 1 + (k + 1) % spokes] for k in range(spokes)])
    return compute_weights(build_mesh(verts, faces))


def triangle_mesh() -> Mesh:
    verts = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.4, 0.9, 0]])
    faces = np.array([[0, 1, 2]])
    return compute_weights(build_mesh(verts, faces))


def apply_rigid(positions: np.ndarray, R: np.ndarray, t: np.ndarray) -> np.ndarray:
    return positions @ R.T + t
