"""Triangular meshes for the three study domains.

Edges are oriented from the lower to the higher vertex index.  Local edge
``j`` of a triangle is the edge opposite local vertex ``j``, traversed
counterclockwise from vertex ``j+1`` to vertex ``j+2``; ``tri_edge_signs``
records whether that traversal agrees with the global orientation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

DOMAINS = ("unit_square", "lshape", "square_with_hole")

# level 2 base resolutions; level l is the base refined (l - 2) times
BASE_RESOLUTION = {"unit_square": 4, "lshape": 4, "square_with_hole": 3}


class MeshError(ValueError):
    pass


@dataclass(eq=False)
class Mesh2D:
    vertices: np.ndarray
    triangles: np.ndarray
    domain: str = "custom"
    parent: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        self._build_topology()

    def _build_topology(self):
        tri = self.triangles
        local = np.array([[1, 2], [2, 0], [0, 1]])
        ends = tri[:, local]  # (F, 3, 2) ccw traversal of each local edge
        lo = ends.min(axis=2)
        hi = ends.max(axis=2)
        keys = np.stack([lo.ravel(), hi.ravel()], axis=1)
        edges, inverse = np.unique(keys, axis=0, return_inverse=True)
        self.edges = edges
        self.tri_edges = inverse.reshape(-1, 3)
        self.tri_edge_signs = np.where(ends[:, :, 0] < ends[:, :, 1], 1, -1)
        counts = np.bincount(self.tri_edges.ravel(), minlength=len(edges))
        if counts.max(initial=0) > 2:
            raise MeshError("edge shared by more than two triangles")
        self.edge_triangle_count = counts
        self.boundary_edges = counts == 1
        bv = np.zeros(len(self.vertices), dtype=bool)
        bv[edges[self.boundary_edges].ravel()] = True
        self.boundary_vertices = bv

    # --- sizes -----------------------------------------------------------
    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_edges)

    # --- geometry --------------------------------------------------------
    @cached_property
    def corners(self) -> np.ndarray:
        """Vertex coordinates per triangle, shape ``(F, 3, 2)``."""
        return self.vertices[self.triangles]

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.corners
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @cached_property
    def bary_gradients(self) -> np.ndarray:
        """``grad(lambda_i)`` on each triangle, shape ``(F, 3, 2)``."""
        p = self.corners
        two_a = 2.0 * self.signed_areas
        g = np.empty_like(p)
        for i in range(3):
            a, b = p[:, (i + 1) % 3], p[:, (i + 2) % 3]
            # rotate the opposite edge clockwise by 90 degrees
            g[:, i, 0] = (a[:, 1] - b[:, 1]) / two_a
            g[:, i, 1] = (b[:, 0] - a[:, 0]) / two_a
        return g

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        v = self.vertices
        return np.linalg.norm(v[self.edges[:, 1]] - v[self.edges[:, 0]], axis=1)

    @property
    def h(self) -> float:
        return float(self.edge_lengths.max())

    @cached_property
    def vertex_triangles(self) -> list[np.ndarray]:
        order = np.argsort(self.triangles.ravel(), kind="stable")
        verts = self.triangles.ravel()[order]
        tris = order // 3
        splits = np.searchsorted(verts, np.arange(1, self.num_vertices))
        return np.split(tris, splits)

    @cached_property
    def edge_triangles(self) -> np.ndarray:
        """``(E, 2)`` triangle indices sharing each edge, ``-1`` if absent."""
        out = -np.ones((self.num_edges, 2), dtype=np.int64)
        fill = np.zeros(self.num_edges, dtype=np.int64)
        for t, row in enumerate(self.tri_edges):
            for e in row:
                out[e, fill[e]] = t
                fill[e] += 1
        return out

    def euler_characteristic(self) -> int:
        return self.num_vertices - self.num_edges + self.num_triangles

    def is_connected(self) -> bool:
        n = self.num_vertices
        e = self.edges
        adj = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        return connected_components(adj, directed=False)[0] == 1

    def boundary_edge_list(self) -> np.ndarray:
        """Boundary edges as counterclockwise-traversed vertex pairs."""
        out = []
        local = ((1, 2), (2, 0), (0, 1))
        for t, row in enumerate(self.tri_edges):
            for j, e in enumerate(row):
                if self.boundary_edges[e]:
                    a, b = local[j]
                    out.append((self.triangles[t, a], self.triangles[t, b]))
        out.sort()
        return np.array(out, dtype=np.int64).reshape(-1, 2)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def isolated_boundary_vertices(mesh: Mesh2D) -> np.ndarray:
    """Boundary vertices with no interior neighbour."""
    e = mesh.edges
    bv = mesh.boundary_vertices
    hits = np.bincount(e[:, 0], weights=~bv[e[:, 1]], minlength=mesh.num_vertices)
    hits += np.bincount(e[:, 1], weights=~bv[e[:, 0]], minlength=mesh.num_vertices)
    has_interior = hits > 0
    return np.flatnonzero(bv & ~has_interior)


def validate(mesh: Mesh2D) -> list[str]:
    """Problems found; an empty list means the mesh is admissible."""
    problems = []
    if np.any(mesh.signed_areas <= 0):
        problems.append(f"{int(np.sum(mesh.signed_areas <= 0))} triangles not counterclockwise")
    if mesh.edge_triangle_count.max(initial=0) > 2:
        problems.append("edge shared by more than two triangles")
    used = np.zeros(mesh.num_vertices, dtype=bool)
    used[mesh.triangles.ravel()] = True
    if not used.all():
        problems.append("unused vertices")
    # on a conforming manifold mesh every boundary vertex meets exactly two
    # boundary edges, so the two counts agree on each boundary component
    deg = np.bincount(mesh.edges[mesh.boundary_edges].ravel(), minlength=mesh.num_vertices)
    if np.any(deg[mesh.boundary_vertices] != 2):
        problems.append("boundary is not a union of simple closed curves (hanging vertex or pinch)")
    if mesh.boundary_edges.sum() != mesh.boundary_vertices.sum():
        problems.append("boundary edge count differs from boundary vertex count")
    bad = isolated_boundary_vertices(mesh)
    if len(bad):
        problems.append(f"boundary vertices without interior neighbour: {bad.tolist()}")
    if not mesh.is_connected():
        problems.append("mesh is disconnected")
    return problems


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def _grid_mesh(n_x: int, n_y: int, spacing: float, keep, domain: str) -> Mesh2D:
    """Structured grid of kept cells, split along the "/" diagonal except for
    cells touching a boundary vertex that would otherwise have no interior
    neighbour; those use the other diagonal."""
    cells = [(i, j) for j in range(n_y) for i in range(n_x) if keep(i, j)]
    used = sorted({(i + a, j + b) for i, j in cells for a in (0, 1) for b in (0, 1)}, key=lambda p: (p[1], p[0]))
    index = {p: k for k, p in enumerate(used)}
    verts = np.array(used, dtype=float) * spacing
    flipped: set[tuple[int, int]] = set()

    def build():
        tris = []
        for i, j in cells:
            p00, p10 = index[(i, j)], index[(i + 1, j)]
            p01, p11 = index[(i, j + 1)], index[(i + 1, j + 1)]
            if (i, j) in flipped:
                tris += [(p00, p10, p01), (p10, p11, p01)]
            else:
                tris += [(p00, p10, p11), (p00, p11, p01)]
        return Mesh2D(verts, np.array(tris), domain)

    mesh = build()
    for _ in range(4):
        bad = isolated_boundary_vertices(mesh)
        if not len(bad):
            return mesh
        for v in bad:
            vi, vj = used[v]
            for c in ((vi - 1, vj - 1), (vi, vj - 1), (vi - 1, vj), (vi, vj)):
                if c in index and keep(*c) and 0 <= c[0] < n_x and 0 <= c[1] < n_y:
                    flipped ^= {c}
        mesh = build()
    return mesh


def generate(domain: str, m: int) -> Mesh2D:
    """Structured mesh of a study domain.

    ``m`` is the number of cells per unit length: the unit square and the
    L-shape get an ``m x m`` grid, the square with a hole ``[0,3]^2 minus
    (1,2)^2`` a ``3m x 3m`` grid without its middle block.
    """
    if domain == "unit_square":
        if m < 2:
            raise MeshError("unit_square needs m >= 2")
        mesh = _grid_mesh(m, m, 1.0 / m, lambda i, j: True, domain)
    elif domain == "lshape":
        if m < 4 or m % 2:
            raise MeshError("lshape needs an even m >= 4")
        half = m // 2
        mesh = _grid_mesh(m, m, 1.0 / m, lambda i, j: not (i >= half and j >= half), domain)
    elif domain == "square_with_hole":
        if m < 3:
            raise MeshError("square_with_hole needs m >= 3")
        mesh = _grid_mesh(3 * m, 3 * m, 1.0 / m, lambda i, j: not (m <= i < 2 * m and m <= j < 2 * m), domain)
    else:
        raise MeshError(f"unknown domain {domain!r}; expected one of {DOMAINS}")
    problems = validate(mesh)
    if problems:
        raise MeshError(f"generator produced an invalid mesh: {problems}")
    return mesh


def refine(mesh: Mesh2D) -> Mesh2D:
    """Red refinement.  The result carries ``parent[t]``, the coarse triangle
    containing child ``t``; children ``4t .. 4t+3`` come from triangle ``t``."""
    nv = mesh.num_vertices
    v = mesh.vertices
    mids = 0.5 * (v[mesh.edges[:, 0]] + v[mesh.edges[:, 1]])
    verts = np.vstack([v, mids])
    t = mesh.triangles
    m = nv + mesh.tri_edges  # midpoint opposite vertex j
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    m_bc, m_ca, m_ab = m[:, 0], m[:, 1], m[:, 2]
    children = np.stack(
        [
            np.stack([a, m_ab, m_ca], axis=1),
            np.stack([m_ab, b, m_bc], axis=1),
            np.stack([m_ca, m_bc, c], axis=1),
            np.stack([m_ab, m_bc, m_ca], axis=1),
        ],
        axis=1,
    ).reshape(-1, 3)
    parent = np.repeat(np.arange(mesh.num_triangles), 4)
    return Mesh2D(verts, children, mesh.domain, parent=parent)


def vertex_patch(mesh: Mesh2D, a: int) -> list[int]:
    """Triangles around vertex ``a`` in counterclockwise order, starting
    from the lowest-numbered one."""
    tris = mesh.vertex_triangles[a]
    if len(tris) == 0:
        return []
    d = mesh.centroids[tris] - mesh.vertices[a]
    ang = np.arctan2(d[:, 1], d[:, 0])
    anchor = int(np.argmin(tris))
    rel = np.mod(ang - ang[anchor], 2 * np.pi)
    rel[anchor] = -1.0
    return [int(tris[i]) for i in np.argsort(rel, kind="stable")]


def betti1(mesh: Mesh2D) -> int:
    if not mesh.is_connected():
        raise MeshError("betti1 needs a connected mesh")
    return 1 - mesh.euler_characteristic()


def level_mesh(domain: str, level: int) -> Mesh2D:
    """Mesh of refinement level ``level >= 2`` (see ``BASE_RESOLUTION``)."""
    if level < 2:
        raise MeshError("levels start at 2")
    if domain not in BASE_RESOLUTION:
        raise MeshError(f"unknown domain {domain!r}; expected one of {DOMAINS}")
    mesh = generate(domain, BASE_RESOLUTION[domain])
    for _ in range(level - 2):
        mesh = refine(mesh)
    return mesh


@dataclass
class MeshFamily:
    """Nested meshes of one domain at consecutive levels."""

    domain: str
    levels: list[int]
    meshes: list[Mesh2D]

    @classmethod
    def build(cls, domain: str, first: int, last: int) -> "MeshFamily":
        mesh = level_mesh(domain, first)
        meshes = [mesh]
        for _ in range(first, last):
            mesh = refine(mesh)
            meshes.append(mesh)
        return cls(domain, list(range(first, last + 1)), meshes)

    @property
    def mesh_sizes(self) -> list[float]:
        return [m.h for m in self.meshes]


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

def format_mesh(mesh: Mesh2D) -> str:
    lines = [f"vertices {mesh.num_vertices}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(f"triangles {mesh.num_triangles}")
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    bnd = mesh.boundary_edge_list()
    lines.append(f"boundary {len(bnd)}")
    lines += [f"{a} {b}" for a, b in bnd.tolist()]
    return "\n".join(lines) + "\n"


def parse_mesh(text: str, domain: str = "custom") -> Mesh2D:
    tokens = iter(text.split("\n"))

    def section(name):
        for line in tokens:
            if line.strip():
                key, count = line.split()
                if key != name:
                    raise MeshError(f"expected section {name!r}, got {key!r}")
                return int(count)
        raise MeshError(f"missing section {name!r}")

    def rows(count, conv):
        out = []
        for _ in range(count):
            out.append([conv(t) for t in next(tokens).split()])
        return out

    verts = rows(section("vertices"), float)
    tris = rows(section("triangles"), int)
    bnd = rows(section("boundary"), int)
    mesh = Mesh2D(np.array(verts, dtype=float).reshape(-1, 2), np.array(tris, dtype=np.int64).reshape(-1, 3), domain)
    got = {tuple(sorted(e)) for e in bnd}
    want = {tuple(sorted(e)) for e in mesh.boundary_edge_list().tolist()}
    if got != want:
        raise MeshError("boundary section does not match the triangulation")
    return mesh


def write_mesh(mesh: Mesh2D, path: str | Path) -> None:
    Path(path).write_text(format_mesh(mesh), encoding="utf-8")


def read_mesh(path: str | Path) -> Mesh2D:
    return parse_mesh(Path(path).read_text(encoding="utf-8"))
