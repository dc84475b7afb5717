"""Procedural paired coarse/fine grid sequences standing in for simulation.

Both resolutions sample the same smooth analytic motion field; the fine
sequence additionally carries a high-frequency wrinkle displacement that
the coarse one cannot resolve. No vertex correspondence is used downstream
except the shared grid corners (the wrinkle envelope vanishes on the
boundary), which supply the translation anchor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from deformsynth.errors import ConfigError
from deformsynth.meshcore import Mesh, MeshSequence, build_mesh, compute_weights, make_sequence

MOTION_FAMILIES = ("bend", "twist", "wave", "spin")

_DEFAULT_AMPLITUDE = {
    "bend": 1.2,    # peak curvature (1/length)
    "twist": 2.0 * np.pi,  # total twist across the strip (radians)
    "wave": 0.25,   # peak out-of-plane amplitude (fraction of size)
    "spin": 4.0 * np.pi,   # total rotation angle (radians)
}


@dataclass(frozen=True)
class SyntheticConfig:
    coarse_res: int = 9
    fine_res: int = 33
    frame_count: int = 60
    seed: int = 0
    motion: str = "wave"
    motion_amplitude: float | None = None
    wrinkle_amplitude: float = 0.05
    wrinkle_frequency: float = 3.0
    size: float = 1.0

    def __post_init__(self):
        if self.fine_res <= self.coarse_res:
            raise ConfigError(
                f"fine_res {self.fine_res} must exceed coarse_res {self.coarse_res}"
            )
        if self.frame_count < 4:
            raise ConfigError(f"frame_count {self.frame_count} must be >= 4")
        if self.motion not in MOTION_FAMILIES:
            raise ConfigError(f"unknown motion {self.motion!r}; pick from {MOTION_FAMILIES}")

    @property
    def amplitude(self) -> float:
        if self.motion_amplitude is not None:
            return self.motion_amplitude
        return _DEFAULT_AMPLITUDE[self.motion]


def grid_mesh(n: int, size: float = 1.0) -> Mesh:
    """Regular n x n grid in the z=0 plane, diagonals from (r, c) to (r+1, c+1)."""
    xs = np.linspace(0.0, size, n)
    verts = np.array([[x, y, 0.0] for y in xs for x in xs])
    faces = []
    for r in range(n - 1):
        for c in range(n - 1):
            a = r * n + c
            faces.append((a, a + 1, a + n + 1))
            faces.append((a, a + n + 1, a + n))
    return compute_weights(build_mesh(verts, np.array(faces)))


class _Motion:
    """Analytic deformation map; identity at tau = 0."""

    def __init__(self, config: SyntheticConfig, rng: np.random.Generator):
        self.kind = config.motion
        self.size = config.size
        jitter = 0.8 + 0.4 * rng.random()  # always drawn, keeps the stream stable
        explicit = config.motion_amplitude is not None
        self.amp = config.amplitude if explicit else config.amplitude * jitter
        self.direction = rng.random() * 2.0 * np.pi  # in-plane bend/twist direction
        self.phase_x = rng.random() * 2.0 * np.pi
        self.phase_y = rng.random() * 2.0 * np.pi
        self.wave_freq = 0.5 + 0.5 * rng.random()

    def _rotate_xy(self, p: np.ndarray, angle: float) -> np.ndarray:
        c, s = np.cos(angle), np.sin(angle)
        out = p.copy()
        cx = cy = self.size / 2.0
        x = p[:, 0] - cx
        y = p[:, 1] - cy
        out[:, 0] = c * x - s * y + cx
        out[:, 1] = s * x + c * y + cy
        return out

    def apply(self, points: np.ndarray, tau: float) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        if tau == 0.0:
            return p.copy()  # rest frame is exact
        if self.kind == "bend":
            q = self._rotate_xy(p, self.direction)
            kappa = self.amp * tau
            if abs(kappa) < 1e-9:
                out = q.copy()
            else:
                radius = 1.0 / kappa
                x, z = q[:, 0], q[:, 2]
                out = q.copy()
                out[:, 0] = (radius - z) * np.sin(x / radius)
                out[:, 2] = radius - (radius - z) * np.cos(x / radius)
            return self._rotate_xy(out, -self.direction)
        if self.kind == "twist":
            q = self._rotate_xy(p, self.direction)
            ang = self.amp * tau * (q[:, 0] / self.size)
            cy = self.size / 2.0
            y = q[:, 1] - cy
            z = q[:, 2]
            out = q.copy()
            out[:, 1] = np.cos(ang) * y - np.sin(ang) * z + cy
            out[:, 2] = np.sin(ang) * y + np.cos(ang) * z
            return self._rotate_xy(out, -self.direction)
        if self.kind == "wave":
            out = p.copy()
            f = 2.0 * np.pi * self.wave_freq / self.size
            out[:, 2] = p[:, 2] + self.amp * tau * np.sin(f * p[:, 0] + self.phase_x) * np.sin(
                f * p[:, 1] + self.phase_y
            )
            return out
        # spin: rigid rotation about the vertical axis through the grid center
        ang = self.amp * tau
        out = self._rotate_xy(p, ang)
        return out


class _Wrinkles:
    """High-frequency displacement field, zero on the grid boundary and at tau=0."""

    def __init__(self, config: SyntheticConfig, rng: np.random.Generator):
        self.amp = config.wrinkle_amplitude
        self.freq = config.wrinkle_frequency
        self.size = config.size
        self.phase_x = rng.random() * 2.0 * np.pi
        self.phase_y = rng.random() * 2.0 * np.pi
        self.speed_x = np.pi * (1.0 + rng.random())
        self.speed_y = np.pi * (1.0 + rng.random())

    def offsets(self, points: np.ndarray, tau: float) -> np.ndarray:
        x = points[:, 0] / self.size
        y = points[:, 1] / self.size
        env = np.sin(np.pi * x) * np.sin(np.pi * y)
        w = (
            self.amp
            * tau
            * np.sin(2.0 * np.pi * self.freq * x + self.phase_x + self.speed_x * tau)
            * np.sin(2.0 * np.pi * self.freq * y + self.phase_y + self.speed_y * tau)
            * env
        )
        return w


def gen_dataset(config: SyntheticConfig):
    """-> (coarse MeshSequence, fine MeshSequence), deterministic in the seed."""
    rng = np.random.default_rng(config.seed)
    motion = _Motion(config, rng)
    wrinkles = _Wrinkles(config, rng)
    coarse = grid_mesh(config.coarse_res, config.size)
    fine = grid_mesh(config.fine_res, config.size)

    coarse_frames, fine_frames = [], []
    nT = config.frame_count
    for t in range(nT):
        tau = t / (nT - 1)
        coarse_frames.append(motion.apply(coarse.vertices, tau))
        lifted = fine.vertices.copy()
        lifted[:, 2] += wrinkles.offsets(fine.vertices, tau)
        fine_frames.append(motion.apply(lifted, tau))
    return make_sequence(coarse, coarse_frames), make_sequence(fine, fine_frames)


def subdivide_grid_positions(positions: np.ndarray, n: int, levels: int) -> np.ndarray:
    """Midpoint subdivision of grid positions, diagonal-consistent with grid_mesh."""
    grid = np.asarray(positions, dtype=np.float64).reshape(n, n, 3)
    for _ in range(levels):
        m = 2 * n - 1
        out = np.zeros((m, m, 3))
        out[0::2, 0::2] = grid
        out[0::2, 1::2] = 0.5 * (grid[:, :-1] + grid[:, 1:])
        out[1::2, 0::2] = 0.5 * (grid[:-1, :] + grid[1:, :])
        out[1::2, 1::2] = 0.5 * (grid[:-1, :-1] + grid[1:, 1:])  # the (r,c)-(r+1,c+1) diagonal
        grid, n = out, m
    return grid.reshape(n * n, 3)


def subdivided_baseline(coarse_seq: MeshSequence, coarse_res: int, fine_res: int,
                        fine_mesh: Mesh) -> MeshSequence:
    """Midpoint-subdivide every coarse frame up to the fine resolution."""
    ratio = (fine_res - 1) // (coarse_res - 1)
    levels = int(np.log2(ratio)) if ratio > 0 else 0
    if (coarse_res - 1) * 2**levels + 1 != fine_res:
        raise ConfigError(
            f"fine_res {fine_res} is not a power-of-two midpoint refinement of {coarse_res}"
        )
    frames = [subdivide_grid_positions(f, coarse_res, levels) for f in coarse_seq.frames]
    return make_sequence(fine_mesh, frames)
