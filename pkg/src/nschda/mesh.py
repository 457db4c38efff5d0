"""Uniform triangulations of the unit square, with nesting support.

The unit square is divided into ``n x n`` axis-aligned cells; every cell is
split into two triangles along the diagonal that runs from the cell's lower
left corner to its upper right corner.  Vertices are numbered row-major
(x fastest), cells are visited row-major with the lower triangle first, and
all triangles are counterclockwise.  Two meshes built this way are nested
whenever the fine subdivision count is an integer multiple of the coarse
one, which is what the coarse-observation operator relies on.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: Side labels, in the order Dirichlet data is applied (top last, so the
#: corner dofs of a moving lid receive the lid value).
SIDES = ("bottom", "left", "right", "top")


@dataclass
class Mesh:
    """Triangulation of the unit square.

    Attributes
    ----------
    n_side : int
        Number of cells per side.
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise vertex triples
    edges : (ne, 2) int array of sorted vertex pairs, lexicographically ordered
    cell_edges : (nt, 3) int array; edge k of a cell joins local vertices
        (k, (k+1) % 3)
    boundary_vertex_flags : dict side -> (nv,) bool array
    boundary_edge_flags : dict side -> (ne,) bool array
    """

    n_side: int
    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    cell_edges: np.ndarray
    boundary_vertex_flags: dict = field(repr=False)
    boundary_edge_flags: dict = field(repr=False)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def h(self) -> float:
        """Cell edge length (axis-aligned)."""
        return 1.0 / self.n_side

    def triangle_areas(self) -> np.ndarray:
        """Signed areas; positive for the counterclockwise orientation."""
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])


def build_uniform_mesh(n: int) -> Mesh:
    """Build the uniform n x n triangulation of [0,1]^2.

    Raises ``ValueError`` for n < 1.  Counts: (n+1)^2 vertices, 2 n^2
    triangles, 3 n^2 + 2 n edges.
    """
    if n < 1:
        raise ValueError(f"mesh subdivision must be >= 1, got {n}")

    # vertices, row-major: index = iy * (n + 1) + ix
    line = np.arange(n + 1) / float(n)
    xx, yy = np.meshgrid(line, line)  # shape (n+1, n+1), row = fixed y
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    ix, iy = np.meshgrid(np.arange(n), np.arange(n))
    ix, iy = ix.ravel(), iy.ravel()
    v00 = iy * (n + 1) + ix
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    # cell (ix, iy): diagonal v00 -> v11; lower triangle then upper triangle
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    # unique edges, sorted pairs in lexicographic order
    raw = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )
    raw.sort(axis=1)
    edges, inverse = np.unique(raw, axis=0, return_inverse=True)
    nt = triangles.shape[0]
    cell_edges = np.column_stack([inverse[:nt], inverse[nt : 2 * nt], inverse[2 * nt :]])

    x, y = vertices[:, 0], vertices[:, 1]
    tol = 1e-14
    vflags = {
        "bottom": np.abs(y) <= tol,
        "left": np.abs(x) <= tol,
        "right": np.abs(x - 1.0) <= tol,
        "top": np.abs(y - 1.0) <= tol,
    }
    eflags = {
        side: vflags[side][edges[:, 0]] & vflags[side][edges[:, 1]] for side in SIDES
    }

    return Mesh(
        n_side=n,
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        cell_edges=cell_edges,
        boundary_vertex_flags=vflags,
        boundary_edge_flags=eflags,
    )


def is_nested(coarse: Mesh, fine: Mesh) -> bool:
    """True when every coarse vertex is a fine vertex.

    For the uniform family this holds exactly when the fine subdivision is
    an integer multiple of the coarse one; the coordinate check below keeps
    the answer tied to the actual geometry (tolerance 1e-14).
    """
    if fine.n_side % coarse.n_side != 0:
        return False
    # coarse vertex (i/nc, j/nc) must land on the fine lattice k/nf
    scaled = coarse.vertices * fine.n_side
    return bool(np.all(np.abs(scaled - np.round(scaled)) <= 1e-14 * fine.n_side))


def write_vtk(mesh: Mesh, path) -> None:
    """Write the triangulation as a legacy ASCII VTK unstructured grid."""
    lines = [
        "# vtk DataFile Version 3.0",
        "triangulation of the unit square",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.num_vertices} double",
    ]
    for p in mesh.vertices:
        lines.append(f"{p[0]:.17g} {p[1]:.17g} 0")
    nt = mesh.num_triangles
    lines.append(f"CELLS {nt} {4 * nt}")
    for t in mesh.triangles:
        lines.append(f"3 {t[0]} {t[1]} {t[2]}")
    lines.append(f"CELL_TYPES {nt}")
    lines.extend(["5"] * nt)  # VTK_TRIANGLE
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
