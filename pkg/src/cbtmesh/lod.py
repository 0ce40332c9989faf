"""Screen-space LOD verdicts from a camera model.

Split/keep/merge decisions target a fixed on-screen triangle area (49 px
by default) with hysteresis: a split halves the screen area, so the
split and merge thresholds must straddle a factor-two gap or bisectors
flip-flop between epochs.  Optional planet mode projects decoded
vertices onto a sphere before area estimation; a pluggable displacement
hook runs after projection.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import bisector
from .pipeline import KEEP, MERGE, SPLIT, KernelDecide


@dataclass
class Camera:
    """Pinhole camera; forward/up are unit and orthogonal."""

    position: np.ndarray
    forward: np.ndarray
    up: np.ndarray
    fov_y: float = math.radians(60.0)
    width: int = 1920
    height: int = 1080
    near: float = 0.1

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.forward = np.asarray(self.forward, dtype=np.float64)
        self.up = np.asarray(self.up, dtype=np.float64)
        self.forward = self.forward / np.linalg.norm(self.forward)
        # re-orthogonalize up against forward before validating
        self.up = self.up - self.forward * (self.forward @ self.up)
        n = np.linalg.norm(self.up)
        if n == 0.0:
            raise ValueError("up vector is parallel to forward")
        self.up = self.up / n
        if not 0.0 < self.fov_y < math.pi:
            raise ValueError(f"fov_y must lie in (0, pi), got {self.fov_y}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("viewport must be positive")
        assert abs(self.forward @ self.up) < 1e-9

    @property
    def right(self) -> np.ndarray:
        return np.cross(self.forward, self.up)

    @property
    def focal_px(self) -> float:
        return (self.height / 2.0) / math.tan(self.fov_y / 2.0)


@dataclass
class LodConfig:
    """Targets and toggles for the screen-space criterion."""

    target_area_px: float = 49.0
    split_factor: float = 2.0
    merge_factor: float = 0.25
    planet_mode: bool = False
    planet_radius: float = 6.371e6
    frustum_cull: bool = True
    displacement: object = None  # optional per-vertex hook, post-projection

    def __post_init__(self):
        if self.split_factor <= 1.0:
            raise ValueError("split_factor must exceed 1")
        if not 0.0 < self.merge_factor < 1.0:
            raise ValueError("merge_factor must lie in (0, 1)")
        # a split halves the area: thresholds must straddle a factor 2
        if self.merge_factor >= self.split_factor / 2.0:
            raise ValueError(
                "hysteresis violated: merge threshold must be below half "
                "the split threshold"
            )

    @classmethod
    def from_json(cls, text: str) -> "LodConfig":
        return cls(**json.loads(text))


def project_planet(config: LodConfig, p) -> np.ndarray:
    """Project a point radially onto the planet sphere."""
    p = np.asarray(p, dtype=np.float64)
    n = np.linalg.norm(p)
    if n == 0.0:
        raise ValueError("cannot project the origin onto the sphere")
    return p * (config.planet_radius / n)


def sine_displacement(amplitude: float, frequency: float):
    """Built-in analytic displacement demo for the post-projection hook."""

    def hook(p):
        p = np.asarray(p, dtype=np.float64)
        d = (
            amplitude
            * math.sin(frequency * p[0])
            * math.sin(frequency * p[1] + 0.5)
            * math.sin(frequency * p[2] + 1.0)
        )
        n = np.linalg.norm(p)
        direction = p / n if n > 0 else np.array([0.0, 0.0, 1.0])
        return p + direction * d

    hook.amplitude = amplitude
    hook.frequency = frequency
    hook.is_sine_demo = True
    return hook


def _camera_space(camera: Camera, tri: np.ndarray) -> np.ndarray:
    d = tri - camera.position
    return np.stack(
        [d @ camera.right, d @ camera.up, d @ camera.forward], axis=1
    )


def outside_frustum(camera: Camera, tri: np.ndarray) -> bool:
    """Conservative cull: all three vertices beyond one frustum plane."""
    c = _camera_space(camera, tri)
    x, y, z = c[:, 0], c[:, 1], c[:, 2]
    ty = math.tan(camera.fov_y / 2.0)
    tx = ty * camera.width / camera.height
    if np.all(z < camera.near):
        return True
    if np.all(x + tx * z < 0) or np.all(tx * z - x < 0):
        return True
    if np.all(y + ty * z < 0) or np.all(ty * z - y < 0):
        return True
    return False


def screen_space_area(camera: Camera, tri: np.ndarray) -> float:
    """Projected 2D triangle area in pixels; near-plane-clamped depth."""
    c = _camera_space(camera, tri)
    f = camera.focal_px
    z = np.maximum(c[:, 2], camera.near)
    sx = f * c[:, 0] / z
    sy = f * c[:, 1] / z
    cross = (sx[1] - sx[0]) * (sy[2] - sy[0]) - (sx[2] - sx[0]) * (sy[1] - sy[0])
    return 0.5 * abs(cross)


def decide(config: LodConfig, camera: Camera, mesh, bid: int) -> int:
    """Per-bisector LOD verdict; pure in (config, camera, mesh, id)."""
    tri = bisector.bisector_vertices(mesh, bid)
    if config.planet_mode:
        tri = np.stack([project_planet(config, v) for v in tri])
    if config.displacement is not None:
        tri = np.stack([config.displacement(v) for v in tri])
    if config.frustum_cull and outside_frustum(camera, tri):
        return MERGE
    area = screen_space_area(camera, tri)
    if area > config.split_factor * config.target_area_px:
        rank = bisector.root_rank(mesh.n_halfedges)
        if bisector.depth_of(bid, rank) < bisector.max_depth(mesh.n_halfedges):
            return SPLIT
        return KEEP  # depth limit: demoted
    if area < config.merge_factor * config.target_area_px:
        return MERGE
    return KEEP


# -- compiled verdict source -------------------------------------------


@njit(nogil=True, cache=True)
def _k_verdict_lod(verdicts, cache_live, ids, rank, depth_limit, he_next,
                   he_vert, positions, prm, start, end):
    tri = np.empty((3, 3), dtype=np.float64)
    for i in range(start, end):
        s = cache_live[i]
        bid = ids[s]
        bisector.nb_decode_tri(bid, rank, he_next, he_vert, positions, tri)
        if prm[18] > 0.0:  # planet radius
            for r in range(3):
                n = math.sqrt(tri[r, 0] ** 2 + tri[r, 1] ** 2 + tri[r, 2] ** 2)
                scale = prm[18] / n
                tri[r, 0] *= scale
                tri[r, 1] *= scale
                tri[r, 2] *= scale
        if prm[20] > 0.0:  # sine displacement demo
            amp = prm[21]
            freq = prm[22]
            for r in range(3):
                d = (
                    amp
                    * math.sin(freq * tri[r, 0])
                    * math.sin(freq * tri[r, 1] + 0.5)
                    * math.sin(freq * tri[r, 2] + 1.0)
                )
                n = math.sqrt(tri[r, 0] ** 2 + tri[r, 1] ** 2 + tri[r, 2] ** 2)
                if n > 0:
                    tri[r, 0] += tri[r, 0] / n * d
                    tri[r, 1] += tri[r, 1] / n * d
                    tri[r, 2] += tri[r, 2] / n * d
                else:
                    tri[r, 2] += d

        x0 = tri[0, 0] - prm[0]
        y0 = tri[0, 1] - prm[1]
        z0 = tri[0, 2] - prm[2]
        x1 = tri[1, 0] - prm[0]
        y1 = tri[1, 1] - prm[1]
        z1 = tri[1, 2] - prm[2]
        x2 = tri[2, 0] - prm[0]
        y2 = tri[2, 1] - prm[1]
        z2 = tri[2, 2] - prm[2]
        cx0 = x0 * prm[3] + y0 * prm[4] + z0 * prm[5]
        cy0 = x0 * prm[6] + y0 * prm[7] + z0 * prm[8]
        cz0 = x0 * prm[9] + y0 * prm[10] + z0 * prm[11]
        cx1 = x1 * prm[3] + y1 * prm[4] + z1 * prm[5]
        cy1 = x1 * prm[6] + y1 * prm[7] + z1 * prm[8]
        cz1 = x1 * prm[9] + y1 * prm[10] + z1 * prm[11]
        cx2 = x2 * prm[3] + y2 * prm[4] + z2 * prm[5]
        cy2 = x2 * prm[6] + y2 * prm[7] + z2 * prm[8]
        cz2 = x2 * prm[9] + y2 * prm[10] + z2 * prm[11]

        f = prm[12]
        near = prm[13]
        tx = prm[14]
        ty = prm[15]
        if prm[19] > 0.0:  # frustum cull
            out = False
            if cz0 < near and cz1 < near and cz2 < near:
                out = True
            elif (cx0 + tx * cz0 < 0 and cx1 + tx * cz1 < 0 and cx2 + tx * cz2 < 0):
                out = True
            elif (tx * cz0 - cx0 < 0 and tx * cz1 - cx1 < 0 and tx * cz2 - cx2 < 0):
                out = True
            elif (cy0 + ty * cz0 < 0 and cy1 + ty * cz1 < 0 and cy2 + ty * cz2 < 0):
                out = True
            elif (ty * cz0 - cy0 < 0 and ty * cz1 - cy1 < 0 and ty * cz2 - cy2 < 0):
                out = True
            if out:
                verdicts[i] = 2
                continue

        zc0 = cz0 if cz0 > near else near
        zc1 = cz1 if cz1 > near else near
        zc2 = cz2 if cz2 > near else near
        sx0 = f * cx0 / zc0
        sy0 = f * cy0 / zc0
        sx1 = f * cx1 / zc1
        sy1 = f * cy1 / zc1
        sx2 = f * cx2 / zc2
        sy2 = f * cy2 / zc2
        cross = (sx1 - sx0) * (sy2 - sy0) - (sx2 - sx0) * (sy1 - sy0)
        area = 0.5 * abs(cross)

        if area > prm[16]:
            if bisector.nb_depth_of(bid, rank) < depth_limit:
                verdicts[i] = 1
            else:
                verdicts[i] = 0
        elif area < prm[17]:
            verdicts[i] = 2
        else:
            verdicts[i] = 0


class LodDecide(KernelDecide):
    """Compiled LOD verdict source bound to a config/camera/mesh triple."""

    def __init__(self, config: LodConfig, camera: Camera, mesh):
        if config.displacement is not None and not getattr(
            config.displacement, "is_sine_demo", False
        ):
            raise ValueError(
                "the compiled path supports only the sine displacement demo; "
                "use the pure-python decide for arbitrary hooks"
            )
        self.config = config
        self.camera = camera
        self.mesh = mesh
        prm = np.zeros(23, dtype=np.float64)
        prm[0:3] = camera.position
        prm[3:6] = camera.right
        prm[6:9] = camera.up
        prm[9:12] = camera.forward
        prm[12] = camera.focal_px
        prm[13] = camera.near
        ty = math.tan(camera.fov_y / 2.0)
        prm[14] = ty * camera.width / camera.height
        prm[15] = ty
        prm[16] = config.split_factor * config.target_area_px
        prm[17] = config.merge_factor * config.target_area_px
        prm[18] = config.planet_radius if config.planet_mode else 0.0
        prm[19] = 1.0 if config.frustum_cull else 0.0
        if config.displacement is not None:
            prm[20] = 1.0
            prm[21] = config.displacement.amplitude
            prm[22] = config.displacement.frequency
        self._prm = prm

    def fill(self, verdicts, state, count, start, end):
        mesh = self.mesh
        _k_verdict_lod(
            verdicts, state.cache_live, state.ids, state.rank,
            np.int64(state.max_depth), mesh.next, mesh.vert, mesh.positions,
            self._prm, start, end,
        )


# -- scripted camera paths ----------------------------------------------


@dataclass
class Keyframe:
    t: float
    position: np.ndarray
    forward: np.ndarray
    up: np.ndarray
    fov: float = math.radians(60.0)

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.forward = np.asarray(self.forward, dtype=np.float64)
        self.up = np.asarray(self.up, dtype=np.float64)


def load_camera_path(text: str) -> list[Keyframe]:
    """Parse a JSON keyframe list: [{t, position, forward, up, fov}]."""
    data = json.loads(text)
    frames = [
        Keyframe(
            t=float(k["t"]),
            position=k["position"],
            forward=k["forward"],
            up=k["up"],
            fov=float(k.get("fov", math.radians(60.0))),
        )
        for k in data
    ]
    if not frames:
        raise ValueError("camera path is empty")
    if any(b.t < a.t for a, b in zip(frames, frames[1:])):
        raise ValueError("camera path keyframes must be time-sorted")
    return frames


def dump_camera_path(frames: list[Keyframe]) -> str:
    return json.dumps(
        [
            {
                "t": k.t,
                "position": list(map(float, k.position)),
                "forward": list(map(float, k.forward)),
                "up": list(map(float, k.up)),
                "fov": k.fov,
            }
            for k in frames
        ],
        indent=2,
    )


def _nlerp(a, b, w):
    v = (1.0 - w) * a + w * b
    n = np.linalg.norm(v)
    return v / n if n > 0 else a


def camera_path_at(frames: list[Keyframe], t: float, width: int = 1920,
                   height: int = 1080, near: float = 0.1) -> Camera:
    """Piecewise-linear position, normalized-lerp orientation; clamped."""
    if not frames:
        raise ValueError("camera path is empty")
    if t <= frames[0].t or len(frames) == 1:
        k = frames[0]
        return Camera(k.position, k.forward, k.up, k.fov, width, height, near)
    if t >= frames[-1].t:
        k = frames[-1]
        return Camera(k.position, k.forward, k.up, k.fov, width, height, near)
    hi = next(i for i in range(1, len(frames)) if frames[i].t >= t)
    a, b = frames[hi - 1], frames[hi]
    w = 0.0 if b.t == a.t else (t - a.t) / (b.t - a.t)
    return Camera(
        (1.0 - w) * a.position + w * b.position,
        _nlerp(a.forward, b.forward, w),
        _nlerp(a.up, b.up, w),
        (1.0 - w) * a.fov + w * b.fov,
        width, height, near,
    )


def make_zoom_path(radius: float, start_altitude: float, end_altitude: float,
                   duration: float = 1.0) -> list[Keyframe]:
    """Ground-to-space zoom: exponential radial descent over a planet.

    The camera rides a fixed radial ray looking slightly off-nadir so the
    surface stays in frame at every altitude.
    """
    axis = np.array([1.0, 0.0, 0.0])
    tangent = np.array([0.0, 1.0, 0.0])
    look = -axis + 0.35 * tangent
    forward = look / np.linalg.norm(look)
    frames = []
    n = 24
    for i in range(n + 1):
        w = i / n
        alt = start_altitude * (end_altitude / start_altitude) ** w
        pos = axis * (radius + alt)
        frames.append(
            Keyframe(
                t=duration * w,
                position=pos,
                forward=forward,
                up=np.array([0.0, 0.0, 1.0]),
            )
        )
    return frames


def predicted_live_count(config: LodConfig, camera: Camera) -> float:
    """Expected steady-state bisector count from the screen-area target.

    The criterion keeps every in-frustum triangle near the target area
    and there is no occlusion culling, so both the near and far side of
    the planet contribute: the unsigned projected area of a closed
    surface is twice its silhouette disk, clipped to the viewport.
    """
    dist = float(np.linalg.norm(camera.position))
    r = config.planet_radius
    viewport = float(camera.width * camera.height)
    if dist <= r:
        covered = viewport
    else:
        theta = math.asin(min(1.0, r / dist))
        r_px = camera.focal_px * math.tan(theta)
        covered = min(viewport, math.pi * r_px * r_px)
    return 2.0 * covered / config.target_area_px


def zero_area_fractions(mesh, ids, planet_radius: float) -> tuple[float, float]:
    """Fraction of exactly degenerate triangles under f32 vs f64 decoding.

    Both paths decode the same ids and project onto the planet sphere in
    their own precision; an exactly zero cross product marks collapse.
    """
    rank = bisector.root_rank(mesh.n_halfedges)
    ids = np.asarray(ids, dtype=np.uint64)
    pos32 = mesh.positions.astype(np.float32)
    t64 = np.empty((3, 3), dtype=np.float64)
    t32 = np.empty((3, 3), dtype=np.float32)
    zero32 = 0
    zero64 = 0
    for bid in ids:
        bisector.nb_decode_tri(bid, rank, mesh.next, mesh.vert,
                               mesh.positions, t64)
        bisector.nb_decode_tri_f32(bid, rank, mesh.next, mesh.vert, pos32, t32)
        p64 = t64 * (planet_radius / np.linalg.norm(t64, axis=1))[:, None]
        n32 = np.linalg.norm(t32.astype(np.float32), axis=1).astype(np.float32)
        p32 = (t32 * (np.float32(planet_radius) / n32)[:, None]).astype(np.float32)
        c64 = np.cross(p64[1] - p64[0], p64[2] - p64[0])
        c32 = np.cross(p32[1] - p32[0], p32[2] - p32[0]).astype(np.float32)
        if float(np.dot(c64, c64)) == 0.0:
            zero64 += 1
        if float(np.dot(c32, c32)) == 0.0:
            zero32 += 1
    n = max(1, len(ids))
    return zero32 / n, zero64 / n
