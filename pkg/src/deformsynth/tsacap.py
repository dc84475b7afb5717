"""Spatio-temporally consistent rotation resolution and 9-dim features.

Canonical axis-angle extraction leaves two discrete ambiguities per vertex
and frame: the axis sign (orientation flag o in {+1,-1}) and the number of
full turns (cycle count r in Z). Both are resolved over the union graph of
all frames (spatial one-ring edges within each frame plus temporal edges
linking the same vertex in consecutive frames) by greedy spanning-tree
propagation followed by local refinement, validated against brute force on
small instances. With temporal edges disabled ("ACAP mode") each frame is
resolved independently under a per-frame root gauge; that mode reproduces
the fold artifacts that the temporal coupling exists to remove.

The packed per-vertex feature is 9 numbers: the resolved log-rotation
(o*axis) * (o*theta + 2*pi*r) followed by the upper triangle of the
symmetric factor S in row-major order.
"""

from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass

import numpy as np

from deformsynth.defgrad import DeformField
from deformsynth.errors import NumericError, ShapeError
from deformsynth.meshcore import Mesh

EPSILON_DOT = 0.5  # |axis dot| at or below this: orientation coupling ignored
EPSILON_THETA = 1.0e-3  # rotations smaller than this are treated as identity (radians)

FEATURE_MAGIC = b"TSACAP01"

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# axis-angle


def rodrigues(axis: np.ndarray, angle) -> np.ndarray:
    """Rotation matrices from unit axes and angles; batched over leading dims."""
    axis = np.asarray(axis, dtype=np.float64)
    angle = np.asarray(angle, dtype=np.float64)
    single = axis.ndim == 1
    a = np.atleast_2d(axis)
    th = np.atleast_1d(angle)
    c = np.cos(th)[:, None, None]
    s = np.sin(th)[:, None, None]
    eye = np.broadcast_to(np.eye(3), (len(a), 3, 3))
    K = np.zeros((len(a), 3, 3))
    K[:, 0, 1] = -a[:, 2]
    K[:, 0, 2] = a[:, 1]
    K[:, 1, 0] = a[:, 2]
    K[:, 1, 2] = -a[:, 0]
    K[:, 2, 0] = -a[:, 1]
    K[:, 2, 1] = a[:, 0]
    outer = a[:, :, None] * a[:, None, :]
    R = c * eye + s * K + (1.0 - c) * outer
    return R[0] if single else R


def to_axis_angle(R: np.ndarray):
    """Canonical (axis, angle) with angle in [0, pi].

    The angle comes from atan2(|skew|, trace - 1), which stays accurate
    near both 0 and pi. Near pi the axis direction is taken from the
    symmetric part (top eigenvector) with its sign restored from the skew
    part when that is above noise, else fixed first-nonzero-positive. The
    conventional axis (0, 0, 1) is returned only when the skew part is at
    noise level, so the Rodrigues round trip stays exact for every
    representable rotation.
    """
    axes, thetas = axis_angle_field(np.asarray(R, dtype=np.float64)[None])
    return axes[0], float(thetas[0])


def axis_angle_field(Rs: np.ndarray):
    """Vectorized canonical extraction for (m, 3, 3) rotations."""
    Rs = np.asarray(Rs, dtype=np.float64)
    if not np.all(np.isfinite(Rs)):
        raise NumericError("rotation field contains non-finite entries")
    m = len(Rs)
    rv = np.stack(
        [
            Rs[:, 2, 1] - Rs[:, 1, 2],
            Rs[:, 0, 2] - Rs[:, 2, 0],
            Rs[:, 1, 0] - Rs[:, 0, 1],
        ],
        axis=1,
    )
    sin_norm = np.linalg.norm(rv, axis=1)
    tr = np.trace(Rs, axis1=1, axis2=2)
    thetas = np.arctan2(sin_norm, tr - 1.0)

    axes = np.zeros((m, 3))
    axes[:, 2] = 1.0  # convention when the axis is numerically unrecoverable
    mid = (sin_norm > 1e-14) & (thetas < np.pi - EPSILON_THETA)
    axes[mid] = rv[mid] / sin_norm[mid, None]
    near_pi = thetas >= np.pi - EPSILON_THETA
    for k in np.where(near_pi)[0]:
        sym = 0.5 * (Rs[k] + Rs[k].T)
        _, vecs = np.linalg.eigh(sym)
        ax = vecs[:, 2]  # eigenvalue 1 dominates cos(theta) near pi
        skew_dot = float(np.dot(ax, rv[k]))
        if abs(skew_dot) > 1e-10:
            # below pi the skew part still carries the axis sign
            if skew_dot < 0:
                ax = -ax
        else:
            # theta == pi within noise: first-nonzero-positive convention
            nz = np.where(np.abs(ax) > 1e-12)[0]
            if len(nz) and ax[nz[0]] < 0:
                ax = -ax
        axes[k] = ax
    return axes, thetas


# ---------------------------------------------------------------------------
# resolution

@dataclass(frozen=True)
class RotationResolution:
    """Per-vertex, per-frame canonical axis/angle plus resolved o and r."""

    axis: np.ndarray  # (n, V, 3) canonical unit axes
    theta: np.ndarray  # (n, V) canonical angles in [0, pi]
    orient: np.ndarray  # (n, V) +-1 flags
    cycles: np.ndarray  # (n, V) integers

    @property
    def frame_count(self) -> int:
        return self.axis.shape[0]

    @property
    def vertex_count(self) -> int:
        return self.axis.shape[1]

    def resolved_axis(self) -> np.ndarray:
        return self.orient[:, :, None] * self.axis

    def resolved_theta(self) -> np.ndarray:
        return self.orient * self.theta + TWO_PI * self.cycles

    def rotation_vectors(self) -> np.ndarray:
        """(n, V, 3) log-rotations: resolved axis times resolved angle."""
        return self.resolved_axis() * self.resolved_theta()[:, :, None]


class _UnionGraph:
    """Union graph over (frame, vertex) nodes with CSR neighbor lists."""

    def __init__(self, mesh: Mesh, n_frames: int, temporal: bool):
        nv = mesh.vertex_count
        self.nv = nv
        self.n_frames = n_frames
        self.temporal = temporal
        self.n_nodes = n_frames * nv
        spatial = np.array(mesh.edges(), dtype=np.int64)
        us, vs = [], []
        for t in range(n_frames):
            us.append(spatial[:, 0] + t * nv)
            vs.append(spatial[:, 1] + t * nv)
        if temporal and n_frames > 1:
            base = np.arange(nv, dtype=np.int64)
            for t in range(1, n_frames):
                us.append(base + (t - 1) * nv)
                vs.append(base + t * nv)
        self.edge_u = np.concatenate(us)
        self.edge_v = np.concatenate(vs)

        src = np.concatenate([self.edge_u, self.edge_v])
        dst = np.concatenate([self.edge_v, self.edge_u])
        eid = np.tile(np.arange(len(self.edge_u)), 2)
        order = np.lexsort((dst, src))
        self.csr_dst = dst[order]
        self.csr_eid = eid[order]
        self.csr_off = np.searchsorted(src[order], np.arange(self.n_nodes + 1))

    def roots(self) -> list:
        if self.temporal:
            return [0]
        return [t * self.nv for t in range(self.n_frames)]

    def neighbors(self, node: int):
        lo, hi = self.csr_off[node], self.csr_off[node + 1]
        return self.csr_dst[lo:hi], self.csr_eid[lo:hi]


def _orientation_couplings(graph: _UnionGraph, axes_flat, thetas_flat):
    u, v = graph.edge_u, graph.edge_v
    dots = np.einsum("ek,ek->e", axes_flat[u], axes_flat[v])
    J = np.where(dots > EPSILON_DOT, 1, np.where(dots < -EPSILON_DOT, -1, 0)).astype(np.int8)
    degenerate = (
        (np.abs(dots) <= EPSILON_DOT)
        | (thetas_flat[u] < EPSILON_THETA)
        | (thetas_flat[v] < EPSILON_THETA)
    )
    J[degenerate] = 0
    return J


def _check_fields(axes: np.ndarray, thetas: np.ndarray, mesh: Mesh):
    axes = np.asarray(axes, dtype=np.float64)
    thetas = np.asarray(thetas, dtype=np.float64)
    if axes.ndim != 3 or axes.shape[2] != 3 or thetas.shape != axes.shape[:2]:
        raise ShapeError(f"bad axis/angle field shapes {axes.shape} / {thetas.shape}")
    if axes.shape[1] != mesh.vertex_count:
        raise ShapeError(
            f"field has {axes.shape[1]} vertices, mesh has {mesh.vertex_count}"
        )
    return axes, thetas


def resolve_orientations(
    axes: np.ndarray, thetas: np.ndarray, mesh: Mesh, temporal: bool = True
) -> np.ndarray:
    """Axis orientation flags maximizing the consistency objective.

    Greedy: breadth-first spanning-tree propagation over the union graph
    (ties broken by node index), then single-flip refinement sweeps until
    no flip improves the objective. Root nodes are fixed to +1.
    """
    axes, thetas = _check_fields(axes, thetas, mesh)
    n, nv = thetas.shape
    graph = _UnionGraph(mesh, n, temporal)
    J = _orientation_couplings(graph, axes.reshape(-1, 3), thetas.reshape(-1))
    uu, vv = graph.edge_u, graph.edge_v

    o = np.ones(graph.n_nodes, dtype=np.int8)
    visited = np.zeros(graph.n_nodes, dtype=bool)
    constrained = np.zeros(graph.n_nodes, dtype=bool)
    queue = deque()
    for root in graph.roots():
        constrained[root] = True
        if not visited[root]:
            visited[root] = True
            queue.append(root)
    next_start = 0
    while True:
        while queue:
            node = queue.popleft()
            nbrs, eids = graph.neighbors(node)
            for nb, eid in zip(nbrs, eids):
                if visited[nb]:
                    continue
                visited[nb] = True
                j = J[eid]
                o[nb] = o[node] * j if j != 0 else 1
                queue.append(nb)
        while next_start < graph.n_nodes and visited[next_start]:
            next_start += 1
        if next_start >= graph.n_nodes:
            break
        visited[next_start] = True  # isolated component gets its own +1 seed
        queue.append(next_start)

    flippable = np.where(~constrained)[0]
    for _ in range(1000):
        changed = False
        for node in flippable:
            nbrs, eids = graph.neighbors(node)
            field = int(np.sum(J[eids] * o[nbrs]))
            if o[node] * field < 0:
                o[node] = -o[node]
                changed = True
        if not changed:
            break
    return o.reshape(n, nv)


def orientation_objective(
    axes: np.ndarray, thetas: np.ndarray, orient: np.ndarray, mesh: Mesh, temporal: bool = True
) -> float:
    """Value of the orientation-consistency objective for given flags."""
    axes, thetas = _check_fields(axes, thetas, mesh)
    graph = _UnionGraph(mesh, thetas.shape[0], temporal)
    J = _orientation_couplings(graph, axes.reshape(-1, 3), thetas.reshape(-1))
    o = np.asarray(orient, dtype=np.int64).reshape(-1)
    return float(np.sum(J * o[graph.edge_u] * o[graph.edge_v]))


def resolve_cycles(
    axes: np.ndarray,
    thetas: np.ndarray,
    orient: np.ndarray,
    mesh: Mesh,
    temporal: bool = True,
) -> np.ndarray:
    """Integer cycle counts minimizing squared angle differences.

    Tree propagation rounds (resolved parent angle - o*theta)/2pi to the
    nearest integer per edge, then +-1 local moves run until no single move
    lowers the objective. Root nodes are fixed to 0.
    """
    axes, thetas = _check_fields(axes, thetas, mesh)
    n, nv = thetas.shape
    graph = _UnionGraph(mesh, n, temporal)
    base = (np.asarray(orient, dtype=np.float64) * thetas).reshape(-1)

    r = np.zeros(graph.n_nodes, dtype=np.int64)
    visited = np.zeros(graph.n_nodes, dtype=bool)
    constrained = np.zeros(graph.n_nodes, dtype=bool)
    queue = deque()
    for root in graph.roots():
        constrained[root] = True
        if not visited[root]:
            visited[root] = True
            queue.append(root)
    next_start = 0
    while True:
        while queue:
            node = queue.popleft()
            resolved = base[node] + TWO_PI * r[node]
            nbrs, _ = graph.neighbors(node)
            for nb in nbrs:
                if visited[nb]:
                    continue
                visited[nb] = True
                r[nb] = int(np.rint((resolved - base[nb]) / TWO_PI))
                queue.append(nb)
        while next_start < graph.n_nodes and visited[next_start]:
            next_start += 1
        if next_start >= graph.n_nodes:
            break
        visited[next_start] = True
        queue.append(next_start)

    movable = np.where(~constrained)[0]
    for _ in range(1000):
        changed = False
        theta_hat = base + TWO_PI * r
        for node in movable:
            nbrs, _ = graph.neighbors(node)
            vals = theta_hat[nbrs]
            best_r, best_cost = r[node], float(np.sum((base[node] + TWO_PI * r[node] - vals) ** 2))
            for cand in (r[node] - 1, r[node] + 1):
                cost = float(np.sum((base[node] + TWO_PI * cand - vals) ** 2))
                if cost < best_cost - 1e-12:
                    best_r, best_cost = cand, cost
            if best_r != r[node]:
                r[node] = best_r
                theta_hat[node] = base[node] + TWO_PI * best_r
                changed = True
        if not changed:
            break
    return r.reshape(n, nv)


def cycle_objective(
    axes: np.ndarray,
    thetas: np.ndarray,
    orient: np.ndarray,
    cycles: np.ndarray,
    mesh: Mesh,
    temporal: bool = True,
) -> float:
    """Value of the angle-smoothness objective for given flags and cycles."""
    axes, thetas = _check_fields(axes, thetas, mesh)
    graph = _UnionGraph(mesh, thetas.shape[0], temporal)
    theta_hat = (
        np.asarray(orient, dtype=np.float64) * thetas
        + TWO_PI * np.asarray(cycles, dtype=np.float64)
    ).reshape(-1)
    diff = theta_hat[graph.edge_u] - theta_hat[graph.edge_v]
    return float(np.sum(diff * diff))


def resolve_rotations(fields, mesh: Mesh, temporal: bool = True) -> RotationResolution:
    """Extract canonical axis-angle from per-frame rotations and resolve o, r."""
    n = len(fields)
    nv = mesh.vertex_count
    axes = np.zeros((n, nv, 3))
    thetas = np.zeros((n, nv))
    for t, fld in enumerate(fields):
        a, th = axis_angle_field(fld.R)
        axes[t], thetas[t] = a, th
    orient = resolve_orientations(axes, thetas, mesh, temporal=temporal)
    cycles = resolve_cycles(axes, thetas, orient, mesh, temporal=temporal)
    return RotationResolution(axis=axes, theta=thetas, orient=orient, cycles=cycles)


# ---------------------------------------------------------------------------
# features

_UPPER = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]


@dataclass(frozen=True)
class FeatureFrame:
    """Per-vertex 9-vectors: log-rotation (3) + upper triangle of S (6)."""

    data: np.ndarray  # (V, 9)

    @property
    def vertex_count(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class FeatureSequence:
    """Ordered feature frames sharing a vertex count."""

    data: np.ndarray  # (n, V, 9)

    @property
    def frame_count(self) -> int:
        return self.data.shape[0]

    @property
    def vertex_count(self) -> int:
        return self.data.shape[1]

    def frame(self, t: int) -> FeatureFrame:
        return FeatureFrame(self.data[t])


def pack_features(field: DeformField, res: RotationResolution, frame: int) -> FeatureFrame:
    """9-vector per vertex for one frame of a resolved sequence."""
    logrot = res.rotation_vectors()[frame]
    out = np.empty((field.vertex_count, 9))
    out[:, :3] = logrot
    for k, (i, j) in enumerate(_UPPER):
        out[:, 3 + k] = field.S[:, i, j]
    return FeatureFrame(out)


def unpack_features(frame: FeatureFrame):
    """Rebuild per-vertex (R, S) from a feature frame; 2*pi-periodic in the angle."""
    data = np.asarray(frame.data, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        raise NumericError("feature frame contains non-finite entries")
    v = data[:, :3]
    ang = np.linalg.norm(v, axis=1)
    axis = np.zeros_like(v)
    axis[:, 2] = 1.0
    nz = ang >= 1e-12
    axis[nz] = v[nz] / ang[nz, None]
    R = rodrigues(axis, ang)
    S = np.empty((len(data), 3, 3))
    for k, (i, j) in enumerate(_UPPER):
        S[:, i, j] = data[:, 3 + k]
        S[:, j, i] = data[:, 3 + k]
    return R, S


def features_from_fields(
    fields, mesh: Mesh, temporal: bool = True
):
    """Resolve rotations for per-frame deformation fields and pack features."""
    res = resolve_rotations(fields, mesh, temporal=temporal)
    data = np.stack([pack_features(fld, res, t).data for t, fld in enumerate(fields)])
    return FeatureSequence(data), res


def extract_features(seq, temporal: bool = True):
    """MeshSequence -> (FeatureSequence, RotationResolution).

    Fits deformation gradients of every frame against the reference, then
    resolves orientations and cycles over the whole sequence.
    """
    from deformsynth.defgrad import fit_field  # local import, avoids cycle at module load

    fields = [fit_field(seq.reference, f) for f in seq.frames]
    return features_from_fields(fields, seq.reference, temporal=temporal)


# ---------------------------------------------------------------------------
# feature file format


def save_features(path, seq: FeatureSequence) -> None:
    """Write magic TSACAP01, u32 frame/vertex counts, float64 LE frame-major data."""
    data = np.ascontiguousarray(seq.data, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<II", seq.frame_count, seq.vertex_count))
        fh.write(data.tobytes())


def load_features(path) -> FeatureSequence:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != FEATURE_MAGIC:
            raise ShapeError(f"{path}: bad magic {magic!r}")
        n, nv = struct.unpack("<II", fh.read(8))
        payload = fh.read()
    expected = n * nv * 9 * 8
    if len(payload) != expected:
        raise ShapeError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype="<f8").reshape(n, nv, 9).copy()
    return FeatureSequence(data)
