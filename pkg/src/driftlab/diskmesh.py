"""Structured triangulations of the closed unit disk.

The base mesh is a six-triangle fan around the origin.  Each refinement
quadrisects every triangle and pushes new boundary midpoints radially onto
the unit circle, so boundary vertices always sit exactly on ``|x| = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAX_VERTICES = 2_000_000


class MeshCapacityError(ValueError):
    """Requested refinement would exceed the vertex cap."""


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Conforming triangulation of B_1(0).

    Attributes
    ----------
    vertices : (V, 2) float array
    triangles : (T, 3) int array, counterclockwise
    boundary_edges : (B, 2) int array, ordered counterclockwise around the circle
    boundary_angles : (B,) float array, polar angle of each boundary edge midpoint
    level : int
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_angles: np.ndarray
    level: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def boundary_vertices(self) -> np.ndarray:
        """Boundary vertex indices in counterclockwise order."""
        return self.boundary_edges[:, 0]

    @property
    def interior_vertices(self) -> np.ndarray:
        if "interior" not in self._cache:
            mask = np.ones(self.n_vertices, dtype=bool)
            mask[self.boundary_vertices] = False
            self._cache["interior"] = np.flatnonzero(mask)
        return self._cache["interior"]

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges, sorted lexicographically."""
        if "edges" not in self._cache:
            t = self.triangles
            e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
            e.sort(axis=1)
            self._cache["edges"] = np.unique(e, axis=0)
        return self._cache["edges"]

    @property
    def areas(self) -> np.ndarray:
        """Signed triangle areas (positive for counterclockwise)."""
        if "areas" not in self._cache:
            p = self.vertices[self.triangles]
            d1 = p[:, 1] - p[:, 0]
            d2 = p[:, 2] - p[:, 0]
            self._cache["areas"] = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        return self._cache["areas"]

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def h(self) -> float:
        """Mesh size: longest edge."""
        e = self.edges
        return float(np.max(np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)))

    @property
    def boundary_cells(self) -> np.ndarray:
        """Index of the triangle adjacent to each boundary edge."""
        if "bcells" not in self._cache:
            lookup = {}
            for k, tri in enumerate(self.triangles):
                for a, b in ((0, 1), (1, 2), (2, 0)):
                    lookup[(int(tri[a]), int(tri[b]))] = k
            self._cache["bcells"] = np.array(
                [lookup[(int(i), int(j))] for i, j in self.boundary_edges], dtype=np.int64
            )
        return self._cache["bcells"]


@dataclass(frozen=True)
class BoundaryGeometry:
    """Per-boundary-edge tangent, outward normal (at the edge midpoint) and length.

    ``length`` is the chord length, so the lengths sum to the polygonal
    perimeter.
    """

    tangent: np.ndarray
    normal: np.ndarray
    length: np.ndarray
    midpoint: np.ndarray


def _base_fan() -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    theta = np.arange(6) * np.pi / 3
    verts = np.vstack([[0.0, 0.0], np.column_stack([np.cos(theta), np.sin(theta)])])
    tris = np.array([[0, 1 + k, 1 + (k + 1) % 6] for k in range(6)], dtype=np.int64)
    bedges = np.array([[1 + k, 1 + (k + 1) % 6] for k in range(6)], dtype=np.int64)
    angles = theta + np.pi / 6
    return verts, tris, bedges, angles


def _refine(verts, tris, bedges, angles):
    bset = {(int(i), int(j)): a for (i, j), a in zip(bedges, angles)}
    new_verts = [v for v in verts]
    mid = {}

    def midpoint(i, j):
        key = (min(i, j), max(i, j))
        if key in mid:
            return mid[key]
        if (i, j) in bset or (j, i) in bset:
            a = bset.get((i, j), bset.get((j, i)))
            p = np.array([np.cos(a), np.sin(a)])
        else:
            p = 0.5 * (verts[i] + verts[j])
        mid[key] = len(new_verts)
        new_verts.append(p)
        return mid[key]

    out = np.empty((4 * len(tris), 3), dtype=np.int64)
    for k, (a, b, c) in enumerate(tris.tolist()):
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        out[4 * k : 4 * k + 4] = [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]

    nb_edges = np.empty((2 * len(bedges), 2), dtype=np.int64)
    nb_angles = np.empty(2 * len(bedges))
    for k, ((i, j), a) in enumerate(zip(bedges.tolist(), angles)):
        m = mid[(min(i, j), max(i, j))]
        # midpoint angle a splits the arc symmetrically; half-width is the
        # distance to either endpoint angle
        half = 0.5 * np.angle(np.exp(1j * (a - np.arctan2(verts[i][1], verts[i][0]))))
        nb_edges[2 * k] = (i, m)
        nb_edges[2 * k + 1] = (m, j)
        nb_angles[2 * k] = a - half
        nb_angles[2 * k + 1] = a + half
    return np.array(new_verts), out, nb_edges, nb_angles


def build_disk_mesh(level: int, max_vertices: int = MAX_VERTICES) -> TriMesh:
    """Build the level-``level`` refinement of the six-triangle fan."""
    if level < 0:
        raise ValueError(f"level must be >= 0, got {level}")
    # V(level) = 1 + 3 * 2^level * (2^level + 1)
    n = 2**level
    expected = 1 + 3 * n * (n + 1)
    if expected > max_vertices:
        raise MeshCapacityError(f"level {level} needs {expected} vertices, cap is {max_vertices}")
    verts, tris, bedges, angles = _base_fan()
    for _ in range(level):
        verts, tris, bedges, angles = _refine(verts, tris, bedges, angles)
    angles = np.mod(angles, 2 * np.pi)
    return TriMesh(verts, tris, bedges, angles, level)


def boundary_geometry(mesh: TriMesh) -> BoundaryGeometry:
    if "geometry" in mesh._cache:
        return mesh._cache["geometry"]
    p = mesh.vertices
    i, j = mesh.boundary_edges[:, 0], mesh.boundary_edges[:, 1]
    m = 0.5 * (p[i] + p[j])
    nu = m / np.linalg.norm(m, axis=1)[:, None]
    tau = np.column_stack([-nu[:, 1], nu[:, 0]])
    length = np.linalg.norm(p[j] - p[i], axis=1)
    geom = BoundaryGeometry(tau, nu, length, m)
    mesh._cache["geometry"] = geom
    return geom


def write_mesh(mesh: TriMesh, path) -> None:
    """Write the ``diskmesh v1`` text format."""
    lines = ["diskmesh v1", f"{mesh.n_vertices} {mesh.n_triangles} {len(mesh.boundary_edges)} {mesh.level}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles]
    lines += [f"{i} {j}" for i, j in mesh.boundary_edges]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> TriMesh:
    text = Path(path).read_text().split("\n")
    if text[0].strip() != "diskmesh v1":
        raise ValueError(f"{path}: not a diskmesh v1 file")
    nv, nt, nb, level = (int(s) for s in text[1].split())
    body = text[2:]
    verts = np.array([[float(s) for s in ln.split()] for ln in body[:nv]])
    tris = np.array([[int(s) for s in ln.split()] for ln in body[nv : nv + nt]], dtype=np.int64)
    bedges = np.array([[int(s) for s in ln.split()] for ln in body[nv + nt : nv + nt + nb]], dtype=np.int64)
    m = 0.5 * (verts[bedges[:, 0]] + verts[bedges[:, 1]])
    angles = np.mod(np.arctan2(m[:, 1], m[:, 0]), 2 * np.pi)
    return TriMesh(verts, tris, bedges, angles, level)
