"""Procedural desk-scale scenes: textured primitives, smooth trajectories,
a vectorized pinhole ray caster, and the inverse-warp consistency oracle.

Scene units are meters.  Shading is Lambertian under one fixed directional
light, evaluated on fixed geometric normals, so surface appearance is
view-independent and adjacent rendered frames are photoconsistent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError
from .geometry import PoseVector, euler_to_matrix, rotation_angle

DIFFICULTIES = ("easy", "textured", "cluttered")

MAX_STEP_ROTATION = np.deg2rad(2.0)
MAX_STEP_TRANSLATION = 0.05  # per unit of motion_scale

_EPS = 1e-6


@dataclass
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def validate(self, height: int, width: int) -> "Intrinsics":
        if self.fx <= 0 or self.fy <= 0:
            raise ConfigError("focal lengths must be positive")
        if not (0 <= self.cx <= width - 1 and 0 <= self.cy <= height - 1):
            raise ConfigError("principal point must lie inside the image")
        return self

    @classmethod
    def default_for(cls, height: int, width: int) -> "Intrinsics":
        f = 0.85 * width
        return cls(fx=f, fy=f, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.fx, self.fy, self.cx, self.cy], dtype=np.float64)


@dataclass
class Texture:
    """Procedural albedo over a primitive's (u, v) surface chart."""

    kind: str  # "checker" or "waves"
    scale: float
    color_a: np.ndarray
    color_b: np.ndarray
    phase: float = 0.0
    angle: float = 0.0

    def albedo(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        if self.kind == "checker":
            cell = ((np.floor(u / self.scale) + np.floor(v / self.scale)) % 2)[..., None]
            return self.color_a * (1 - cell) + self.color_b * cell
        ca, sa = np.cos(self.angle), np.sin(self.angle)
        w1 = np.sin(2 * np.pi * (ca * u + sa * v) / self.scale + self.phase)
        w2 = np.sin(2 * np.pi * (ca * v - sa * u) / (1.7 * self.scale) + 2.1 * self.phase)
        mix = (0.5 + 0.25 * w1 + 0.25 * w2)[..., None]
        return self.color_a * (1 - mix) + self.color_b * mix


@dataclass
class Rect:
    """Finite textured plane patch."""

    origin: np.ndarray
    u_axis: np.ndarray
    v_axis: np.ndarray
    half_u: float
    half_v: float
    texture: Texture

    @property
    def normal(self) -> np.ndarray:
        return np.cross(self.u_axis, self.v_axis)

    def intersect(self, origin, dirs):
        n = self.normal
        denom = dirs @ n
        num = (self.origin - origin) @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(np.abs(denom) > _EPS, num / denom, np.inf)
        t_safe = np.where(np.isfinite(t), t, 1.0)
        q = origin + t_safe[..., None] * dirs
        lu = (q - self.origin) @ self.u_axis
        lv = (q - self.origin) @ self.v_axis
        hit = np.isfinite(t) & (t > _EPS) & (np.abs(lu) <= self.half_u) \
            & (np.abs(lv) <= self.half_v)
        t = np.where(hit, t, np.inf)
        normals = np.broadcast_to(n, dirs.shape)
        return t, normals, self.texture.albedo(lu, lv)

    def surface_depth_range(self):
        corners = [self.origin + su * self.half_u * self.u_axis + sv * self.half_v * self.v_axis
                   for su in (-1, 1) for sv in (-1, 1)]
        d = [np.linalg.norm(c) for c in corners]
        return min(d), max(d)


@dataclass
class Sphere:
    center: np.ndarray
    radius: float
    texture: Texture
    inward: bool = False  # background shell seen from inside

    def intersect(self, origin, dirs):
        oc = origin - self.center
        a = np.sum(dirs * dirs, axis=-1)
        b = 2.0 * (dirs @ oc)
        c = float(oc @ oc) - self.radius ** 2
        disc = b * b - 4 * a * c
        ok = disc >= 0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t_near = (-b - sq) / (2 * a)
        t_far = (-b + sq) / (2 * a)
        t = np.where(t_near > _EPS, t_near, t_far)
        t = np.where(ok & (t > _EPS), t, np.inf)
        t_safe = np.where(np.isfinite(t), t, 1.0)
        q = origin + t_safe[..., None] * dirs
        normals = (q - self.center) / self.radius
        if self.inward:
            normals = -normals
        theta = np.arctan2(normals[..., 1], normals[..., 0])
        phi = np.arccos(np.clip(normals[..., 2] * (-1 if self.inward else 1), -1, 1))
        u = theta * self.radius
        v = phi * self.radius
        return t, normals, self.texture.albedo(u, v)

    def surface_depth_range(self):
        dist = np.linalg.norm(self.center)
        if self.inward:
            return self.radius - dist, self.radius + dist
        return max(dist - self.radius, 0.0), dist + self.radius


@dataclass
class Scene:
    primitives: list
    background: Sphere
    light: np.ndarray
    ambient: float = 0.35
    # distance attenuation; view-dependence per adjacent frame is <1% intensity
    fog: float = 0.09
    seed: int = 0
    difficulty: str = "easy"

    def all_surfaces(self):
        return list(self.primitives) + [self.background]


def _random_color_pair(rng):
    dark = rng.uniform(0.05, 0.45, size=3)
    bright = rng.uniform(0.55, 0.95, size=3)
    return dark, bright


def _random_texture(rng, busy: float) -> Texture:
    # narrow cell-size band keeps on-screen texture frequency a usable depth cue
    dark, bright = _random_color_pair(rng)
    kind = "checker" if rng.uniform() < 0.5 else "waves"
    scale = float(rng.uniform(0.55, 0.78) / busy)
    return Texture(kind=kind, scale=max(scale, 0.3),
                   color_a=dark, color_b=bright,
                   phase=float(rng.uniform(0, 2 * np.pi)),
                   angle=float(rng.uniform(0, np.pi)))


def _unit(v):
    return v / np.linalg.norm(v)


def generate_scene(seed: int, difficulty: str = "easy") -> Scene:
    """Deterministic scene with >= 3 (easy) to >= 12 (cluttered) primitives."""
    if difficulty not in DIFFICULTIES:
        raise ContractError(f"difficulty must be one of {DIFFICULTIES}")
    level = DIFFICULTIES.index(difficulty)
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, level])
    counts = {"easy": (3, 6), "textured": (7, 11), "cluttered": (12, 17)}[difficulty]
    n = int(rng.integers(counts[0], counts[1] + 1))
    busy = 1.0 + 0.3 * level

    primitives = []
    for _ in range(n):
        z = float(rng.uniform(2.0, 8.0))
        x = float(rng.uniform(-0.5, 0.5)) * z
        y = float(rng.uniform(-0.38, 0.38)) * z
        center = np.array([x, y, z])
        tex = _random_texture(rng, busy)
        if rng.uniform() < 0.5:
            primitives.append(Sphere(center=center,
                                     radius=float(rng.uniform(0.25, 0.8)),
                                     texture=tex))
        else:
            # tilted at most ~40 degrees away from facing the camera
            normal = _unit(np.array([rng.uniform(-0.7, 0.7),
                                     rng.uniform(-0.7, 0.7), -1.0]))
            helper = np.array([0.0, 1.0, 0.0])
            u_axis = _unit(np.cross(helper, normal))
            v_axis = np.cross(normal, u_axis)
            primitives.append(Rect(origin=center, u_axis=u_axis, v_axis=v_axis,
                                   half_u=float(rng.uniform(0.4, 1.2)),
                                   half_v=float(rng.uniform(0.4, 1.2)),
                                   texture=tex))

    background = Sphere(center=np.zeros(3), radius=12.0,
                        texture=_random_texture(rng, 0.25), inward=True)
    light = _unit(np.array([rng.uniform(-0.5, 0.5), rng.uniform(-0.8, -0.2), -1.0]))
    return Scene(primitives=primitives, background=background, light=light,
                 seed=int(seed), difficulty=difficulty)


def sample_trajectory(seed: int, n: int, motion_scale: float = 1.0):
    """Smooth camera trajectory: low-pass filtered random walk, pose 0 identity.

    Per-step rotation stays <= 2 degrees, per-step translation norm
    <= 0.05 * motion_scale.
    """
    if n < 1:
        raise ContractError("trajectory needs at least one pose")
    poses = [PoseVector.identity()]
    if n == 1 or motion_scale == 0.0:
        return poses + [PoseVector.identity() for _ in range(n - 1)]

    rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, 7])
    t_cap = MAX_STEP_TRANSLATION * motion_scale
    r_cap = 0.9 * MAX_STEP_ROTATION

    drift = _unit(rng.normal(size=3)) * 0.75 * t_cap
    spin = rng.normal(size=3) * 0.12 * r_cap

    noise_t = rng.normal(scale=0.22 * t_cap, size=(n - 1, 3))
    noise_r = rng.normal(scale=0.18 * r_cap, size=(n - 1, 3))
    # 3-tap box filter along time keeps steps correlated
    kernel = np.array([0.25, 0.5, 0.25])
    for arr in (noise_t, noise_r):
        padded = np.pad(arr, ((1, 1), (0, 0)), mode="edge")
        arr[:] = (kernel[0] * padded[:-2] + kernel[1] * padded[1:-1]
                  + kernel[2] * padded[2:])

    current = PoseVector.identity()
    for k in range(n - 1):
        dt = drift + noise_t[k]
        norm = np.linalg.norm(dt)
        # keep the step magnitude in a narrow band under the cap
        target = float(np.clip(norm, 0.55 * t_cap, t_cap))
        if norm > 0:
            dt = dt * (target / norm)
        dr = spin + noise_r[k]
        rnorm = np.linalg.norm(dr)
        if rnorm > r_cap:
            dr = dr * (r_cap / rnorm)
        step = PoseVector(dr, dt)
        assert rotation_angle(euler_to_matrix(step.r)) <= MAX_STEP_ROTATION
        current = current.compose(step)
        poses.append(current)
    return poses


def render_frame(scene: Scene, pose: PoseVector, intr: Intrinsics,
                 height: int, width: int):
    """Ray-cast pinhole render: (rgb in [0,1], depth along the optical axis)."""
    intr.validate(height, width)
    rot = euler_to_matrix(pose.r)
    origin = pose.t.astype(np.float64)
    jj, ii = np.meshgrid(np.arange(width, dtype=np.float64),
                         np.arange(height, dtype=np.float64))
    dirs_cam = np.stack([(jj - intr.cx) / intr.fx,
                         (ii - intr.cy) / intr.fy,
                         np.ones_like(jj)], axis=-1)
    dirs = dirs_cam @ rot.T  # unit z-depth parameterization in world frame

    depth = np.full((height, width), np.inf)
    rgb = np.zeros((height, width, 3))
    for prim in scene.all_surfaces():
        t, normals, albedo = prim.intersect(origin, dirs)
        closer = t < depth
        if not np.any(closer):
            continue
        lambert = np.maximum(normals @ -scene.light, 0.0)
        shade = scene.ambient + (1.0 - scene.ambient) * lambert
        t_att = np.where(np.isfinite(t), t, 0.0)
        shade = shade * np.exp(-scene.fog * t_att)
        color = np.clip(albedo * shade[..., None], 0.0, 1.0)
        depth = np.where(closer, t, depth)
        rgb = np.where(closer[..., None], color, rgb)
    return rgb.astype(np.float32), depth.astype(np.float32)


def warp_frame(rgb_source: np.ndarray, depth_target: np.ndarray,
               pose_target_to_source: PoseVector, intr: Intrinsics):
    """Inverse-warp the source image into the target view.

    Each target pixel is back-projected with the target depth, moved by the
    relative pose, projected into the source view and bilinearly sampled.
    Returns (warped rgb, validity mask); out-of-view pixels are masked.
    """
    depth_target = np.asarray(depth_target, dtype=np.float64)
    if np.any(depth_target <= 0):
        raise ContractError("target depths must be strictly positive")
    height, width = depth_target.shape
    rot = euler_to_matrix(pose_target_to_source.r)
    trans = pose_target_to_source.t

    jj, ii = np.meshgrid(np.arange(width, dtype=np.float64),
                         np.arange(height, dtype=np.float64))
    x = (jj - intr.cx) / intr.fx * depth_target
    y = (ii - intr.cy) / intr.fy * depth_target
    points = np.stack([x, y, depth_target], axis=-1) @ rot.T + trans

    z = points[..., 2]
    safe_z = np.where(np.abs(z) > _EPS, z, _EPS)
    u = intr.fx * points[..., 0] / safe_z + intr.cx
    v = intr.fy * points[..., 1] / safe_z + intr.cy
    # small border grace absorbs projection rounding at the image edge
    grace = 1e-6
    valid = (z > _EPS) & (u >= -grace) & (u <= width - 1 + grace) \
        & (v >= -grace) & (v <= height - 1 + grace)
    u = np.clip(u, 0.0, width - 1)
    v = np.clip(v, 0.0, height - 1)

    u0 = np.clip(np.floor(u).astype(int), 0, width - 2)
    v0 = np.clip(np.floor(v).astype(int), 0, height - 2)
    fu = np.clip(u - u0, 0.0, 1.0)[..., None]
    fv = np.clip(v - v0, 0.0, 1.0)[..., None]

    src = np.asarray(rgb_source, dtype=np.float64)
    top = src[v0, u0] * (1 - fu) + src[v0, u0 + 1] * fu
    bottom = src[v0 + 1, u0] * (1 - fu) + src[v0 + 1, u0 + 1] * fu
    warped = top * (1 - fv) + bottom * fv
    warped[~valid] = 0.0
    return warped.astype(np.float32), valid
