"""Triangulation snapshot exporters: OBJ geometry and SVG wireframes.

OBJ defaults to triangle soup because decoded shared vertices are exact
duplicates; welding by coordinate quantization is a presentation option.
SVG draws one polyline per triangle edge under the camera projection and
omits triangles behind the camera.
"""

from __future__ import annotations

import io

import numpy as np

_WELD_SCALE = 1e7  # weld quantization: 1e-7 coordinate buckets


def project_positions(vertices: np.ndarray, config, displacement=None):
    """Apply the planet projection and displacement hook to (n,3) points."""
    out = np.asarray(vertices, dtype=np.float64)
    if config is not None and config.planet_mode:
        norms = np.linalg.norm(out, axis=1)
        out = out * (config.planet_radius / norms)[:, None]
    hook = displacement if displacement is not None else (
        config.displacement if config is not None else None
    )
    if hook is not None:
        out = np.stack([hook(v) for v in out])
    return out


def obj_soup(tris: np.ndarray) -> str:
    """Triangle soup OBJ: three fresh vertices per triangle."""
    buf = io.StringIO()
    for t in tris:
        for v in t:
            buf.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
    for i in range(len(tris)):
        buf.write(f"f {3 * i + 1} {3 * i + 2} {3 * i + 3}\n")
    return buf.getvalue()


def obj_welded(tris: np.ndarray) -> str:
    """OBJ with vertices welded by 1e-7 quantization."""
    index = {}
    verts = []
    faces = []
    for t in tris:
        face = []
        for v in t:
            key = (
                round(v[0] * _WELD_SCALE),
                round(v[1] * _WELD_SCALE),
                round(v[2] * _WELD_SCALE),
            )
            k = index.get(key)
            if k is None:
                k = len(verts)
                index[key] = k
                verts.append(v)
            face.append(k + 1)
        faces.append(face)
    buf = io.StringIO()
    for v in verts:
        buf.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
    for f in faces:
        buf.write(f"f {f[0]} {f[1]} {f[2]}\n")
    return buf.getvalue()


def write_obj(path, tris: np.ndarray, weld: bool = False) -> None:
    text = obj_welded(tris) if weld else obj_soup(tris)
    with open(path, "w") as f:
        f.write(text)


def svg_wireframe(tris: np.ndarray, camera) -> str:
    """Wireframe under the camera projection; culls behind-camera tris."""
    f = camera.focal_px
    w, h = camera.width, camera.height
    right, up, fwd = camera.right, camera.up, camera.forward
    buf = io.StringIO()
    buf.write(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">\n'
        f'<rect width="{w}" height="{h}" fill="white"/>\n'
        '<g stroke="black" stroke-width="0.5" fill="none">\n'
    )
    n_drawn = 0
    for t in tris:
        d = t - camera.position
        z = d @ fwd
        if np.all(z < camera.near):
            continue  # behind the camera
        zc = np.maximum(z, camera.near)
        sx = f * (d @ right) / zc + w / 2.0
        sy = h / 2.0 - f * (d @ up) / zc
        pts = " ".join(f"{sx[i]:.2f},{sy[i]:.2f}" for i in (0, 1, 2, 0))
        buf.write(f'<polyline points="{pts}"/>\n')
        n_drawn += 1
    buf.write("</g>\n</svg>\n")
    return buf.getvalue()


def write_svg(path, tris: np.ndarray, camera) -> None:
    with open(path, "w") as f:
        f.write(svg_wireframe(tris, camera))
