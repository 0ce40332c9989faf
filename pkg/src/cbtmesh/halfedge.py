"""Halfedge meshes in the directed-edge style: six flat operator arrays.

Twin / Next / Prev / Vert / Edge / Face are stored as integer arrays of
length H; vertex positions are double precision.  Boundary halfedges use
twin = -1.  Meshes are immutable after construction and shared freely
across threads.
"""

from __future__ import annotations

import io
import json
import math
import os
from dataclasses import dataclass

import numpy as np


class MeshError(ValueError):
    """Input mesh rejected during construction."""


@dataclass
class Violation:
    """One failed operator identity, with enough context to debug it."""

    operator: str
    halfedge: int
    expected: object
    actual: object

    def __str__(self):
        return (
            f"{self.operator} violated at halfedge {self.halfedge}: "
            f"expected {self.expected}, got {self.actual}"
        )


class HalfedgeMesh:
    def __init__(self, twin, next_, prev, vert, edge, face, positions):
        self.twin = np.asarray(twin, dtype=np.int32)
        self.next = np.asarray(next_, dtype=np.int32)
        self.prev = np.asarray(prev, dtype=np.int32)
        self.vert = np.asarray(vert, dtype=np.int32)
        self.edge = np.asarray(edge, dtype=np.int32)
        self.face = np.asarray(face, dtype=np.int32)
        self.positions = np.ascontiguousarray(positions, dtype=np.float64)
        if self.n_halfedges < 3:
            raise MeshError(f"mesh needs H >= 3 halfedges, got {self.n_halfedges}")

    @property
    def n_halfedges(self) -> int:
        return len(self.next)

    @property
    def n_vertices(self) -> int:
        return len(self.positions)

    @property
    def n_faces(self) -> int:
        return int(self.face.max()) + 1 if len(self.face) else 0

    def face_degree(self, h: int) -> int:
        """Number of halfedges on h's face (terminates on valid meshes)."""
        n = 1
        w = int(self.next[h])
        while w != h:
            n += 1
            w = int(self.next[w])
        return n

    def root_bisector_vertices(self, h: int) -> np.ndarray:
        """Vertices (rows v0, v1, v2) of the root bisector of halfedge h.

        v0 and v1 span the halfedge itself; v2 is the arithmetic mean of
        all vertex positions of h's face, walked via next.
        """
        if not 0 <= h < self.n_halfedges:
            raise IndexError(f"halfedge {h} out of range [0, {self.n_halfedges})")
        pos = self.positions
        nxt = int(self.next[h])
        v0 = pos[self.vert[h]]
        v1 = pos[self.vert[nxt]]
        acc = v0.copy()
        n = 1
        w = nxt
        while w != h:
            acc += pos[self.vert[w]]
            n += 1
            w = int(self.next[w])
        return np.array([v0, v1, acc / n])

    def stats(self) -> dict:
        max_deg = 0
        seen = set()
        for h in range(self.n_halfedges):
            f = int(self.face[h])
            if f not in seen:
                seen.add(f)
                max_deg = max(max_deg, self.face_degree(h))
        return {
            "H": self.n_halfedges,
            "V": self.n_vertices,
            "faces": self.n_faces,
            "boundary_halfedges": int(np.count_nonzero(self.twin == -1)),
            "max_degree": max_deg,
        }

    def stats_json(self) -> str:
        return json.dumps(self.stats())


def validate(mesh: HalfedgeMesh) -> list[Violation]:
    """Check every type invariant; empty list means the mesh is sound."""
    out = []
    H = mesh.n_halfedges
    V = mesh.n_vertices
    nxt, prv, twn, vrt = mesh.next, mesh.prev, mesh.twin, mesh.vert
    for h in range(H):
        if not 0 <= nxt[h] < H:
            out.append(Violation("next range", h, f"[0, {H})", int(nxt[h])))
            continue
        if not 0 <= prv[h] < H:
            out.append(Violation("prev range", h, f"[0, {H})", int(prv[h])))
            continue
        if prv[nxt[h]] != h:
            out.append(Violation("prev(next(h)) = h", h, h, int(prv[nxt[h]])))
        if nxt[prv[h]] != h:
            out.append(Violation("next(prev(h)) = h", h, h, int(nxt[prv[h]])))
        if not 0 <= vrt[h] < V:
            out.append(Violation("vert range", h, f"[0, {V})", int(vrt[h])))
        t = int(twn[h])
        if t != -1:
            if not 0 <= t < H:
                out.append(Violation("twin range", h, f"[0, {H}) or -1", t))
            elif twn[t] != h:
                out.append(Violation("twin(twin(h)) = h", h, h, int(twn[t])))
            else:
                # twins traverse the same undirected edge in reverse
                if vrt[t] != vrt[nxt[h]] or vrt[nxt[t]] != vrt[h]:
                    out.append(Violation(
                        "twin endpoints reversed", h,
                        (int(vrt[nxt[h]]), int(vrt[h])),
                        (int(vrt[t]), int(vrt[nxt[t]])),
                    ))
                if mesh.edge[t] != mesh.edge[h]:
                    out.append(Violation(
                        "edge(twin(h)) = edge(h)", h,
                        int(mesh.edge[h]), int(mesh.edge[t])))
        if mesh.face[nxt[h]] != mesh.face[h]:
            out.append(Violation(
                "face constant along next", h,
                int(mesh.face[h]), int(mesh.face[nxt[h]])))
    return out


def from_polygons(positions, faces) -> HalfedgeMesh:
    """Build a halfedge mesh from polygon vertex-index loops.

    Rejects degenerate faces, non-manifold edges (three or more
    halfedges on one undirected edge) and inconsistent winding (two
    same-direction halfedges on an edge).
    """
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    V = len(positions)

    twin, next_, prev, vert, edge, face = [], [], [], [], [], []
    directed = {}
    h = 0
    for fidx, loop in enumerate(faces):
        n = len(loop)
        if len(set(loop)) < 3:
            raise MeshError(f"degenerate face {fidx}: fewer than 3 distinct vertices")
        for i, v in enumerate(loop):
            if not 0 <= v < V:
                raise MeshError(f"face {fidx} references vertex {v} outside [0, {V})")
            if v == loop[(i + 1) % n]:
                raise MeshError(f"degenerate face {fidx}: zero-length edge at vertex {v}")
        base = h
        for i in range(n):
            u, v = loop[i], loop[(i + 1) % n]
            vert.append(u)
            next_.append(base + (i + 1) % n)
            prev.append(base + (i - 1) % n)
            face.append(fidx)
            directed.setdefault((u, v), []).append(h)
            h += 1

    undirected = {}
    for (u, v), hs in directed.items():
        undirected.setdefault((min(u, v), max(u, v)), []).extend(hs)
    for key, hs in undirected.items():
        if len(hs) > 2:
            raise MeshError(f"non-manifold edge {key}: {len(hs)} halfedges")
    for (u, v), hs in directed.items():
        if len(hs) > 1:
            raise MeshError(
                f"inconsistent winding on edge ({u}, {v}): "
                f"halfedges {hs} share a direction"
            )

    twin = [-1] * h
    edge = [0] * h
    for eidx, (key, hs) in enumerate(sorted(undirected.items())):
        for he in hs:
            edge[he] = eidx
        if len(hs) == 2:
            twin[hs[0]] = hs[1]
            twin[hs[1]] = hs[0]

    return HalfedgeMesh(twin, next_, prev, vert, edge, face, positions)


def parse_obj(text: str) -> HalfedgeMesh:
    """Parse ASCII OBJ content with v and polygonal f records."""
    positions = []
    faces = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if tokens[0] == "v":
            if len(tokens) < 4:
                raise MeshError(f"line {lineno}: vertex needs 3 coordinates")
            positions.append([float(tokens[1]), float(tokens[2]), float(tokens[3])])
        elif tokens[0] == "f":
            loop = []
            for tok in tokens[1:]:
                idx = int(tok.split("/")[0])
                if idx == 0:
                    raise MeshError(f"line {lineno}: OBJ indices are 1-based, got 0")
                # negative indices are relative to the vertices read so far
                loop.append(idx - 1 if idx > 0 else len(positions) + idx)
            if len(loop) < 3:
                raise MeshError(f"line {lineno}: face needs at least 3 vertices")
            faces.append(loop)
        # other records (vn, vt, o, g, usemtl, ...) are ignored
    if not faces:
        raise MeshError("no faces found in OBJ input")
    return from_polygons(positions, faces)


def load_obj(source) -> HalfedgeMesh:
    """Load an OBJ mesh from a path, byte/str content, or file object."""
    if hasattr(source, "read"):
        data = source.read()
    elif isinstance(source, bytes):
        data = source
    elif isinstance(source, (str, os.PathLike)) and (
        isinstance(source, os.PathLike) or "\n" not in str(source)
    ):
        with open(source, "rb") as f:
            data = f.read()
    else:
        data = source
    if isinstance(data, bytes):
        data = data.decode("ascii")
    return parse_obj(data)


# -- built-in meshes used by tests, the CLI demos and benchmarks -------


def single_triangle() -> HalfedgeMesh:
    return from_polygons(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        [[0, 1, 2]],
    )


def single_quad() -> HalfedgeMesh:
    return from_polygons(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]],
        [[0, 1, 2, 3]],
    )


def quad_grid(nx: int = 2, ny: int = 2) -> HalfedgeMesh:
    """Planar grid of nx * ny unit quads."""
    positions = [
        [float(x), float(y), 0.0] for y in range(ny + 1) for x in range(nx + 1)
    ]
    faces = []
    for y in range(ny):
        for x in range(nx):
            a = y * (nx + 1) + x
            faces.append([a, a + 1, a + nx + 2, a + nx + 1])
    return from_polygons(positions, faces)


def dodecahedron(radius: float = 1.0) -> HalfedgeMesh:
    """Regular dodecahedron: 20 vertices, 12 pentagonal faces, H = 60."""
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    inv = 1.0 / phi
    verts = []
    for sx in (-1, 1):
        for sy in (-1, 1):
            for sz in (-1, 1):
                verts.append((sx, sy, sz))
    for s0 in (-1, 1):
        for s1 in (-1, 1):
            verts.extend(
                [
                    (0.0, s0 * inv, s1 * phi),
                    (s0 * inv, s1 * phi, 0.0),
                    (s1 * phi, 0.0, s0 * inv),
                ]
            )
    verts = np.array(verts, dtype=np.float64)
    verts *= radius / np.linalg.norm(verts[0])

    # each vertex has exactly three neighbors at the minimum distance
    d2 = ((verts[:, None, :] - verts[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    edge2 = d2.min()
    nbrs = [list(np.flatnonzero(d2[i] < edge2 * 1.0001)) for i in range(len(verts))]
    assert all(len(n) == 3 for n in nbrs)

    # order neighbors counterclockwise around each outward vertex axis,
    # then trace faces with the rotation system: after arriving at b from
    # a, leave along the neighbor clockwise from a around b
    ccw = []
    for i, p in enumerate(verts):
        axis = p / np.linalg.norm(p)
        ref = verts[nbrs[i][0]] - p
        ref -= axis * (ref @ axis)
        ref /= np.linalg.norm(ref)
        side = np.cross(axis, ref)
        ang = [
            math.atan2((verts[k] - p) @ side, (verts[k] - p) @ ref)
            for k in nbrs[i]
        ]
        ccw.append([k for _, k in sorted(zip(ang, nbrs[i]))])

    faces = []
    seen = set()
    for a0 in range(len(verts)):
        for b0 in ccw[a0]:
            if (a0, b0) in seen:
                continue
            loop = []
            a, b = a0, b0
            while (a, b) not in seen:
                seen.add((a, b))
                loop.append(a)
                ring = ccw[b]
                a, b = b, ring[(ring.index(a) - 1) % 3]
            faces.append(loop)
    assert len(faces) == 12 and all(len(f) == 5 for f in faces)

    # orient all faces outward (positive signed volume)
    vol = 0.0
    for f in faces:
        for i in range(1, 4):
            vol += np.linalg.det(np.stack([verts[f[0]], verts[f[i]], verts[f[i + 1]]]))
    if vol < 0:
        faces = [f[::-1] for f in faces]
    return from_polygons(verts, faces)


def write_obj_text(mesh: HalfedgeMesh) -> str:
    """Serialize a halfedge mesh back to OBJ (faces in next-cycles)."""
    buf = io.StringIO()
    for p in mesh.positions:
        buf.write(f"v {float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")
    done = set()
    for h in range(mesh.n_halfedges):
        f = int(mesh.face[h])
        if f in done:
            continue
        done.add(f)
        loop = [int(mesh.vert[h])]
        w = int(mesh.next[h])
        while w != h:
            loop.append(int(mesh.vert[w]))
            w = int(mesh.next[w])
        buf.write("f " + " ".join(str(v + 1) for v in loop) + "\n")
    return buf.getvalue()
