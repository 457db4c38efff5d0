"""Legacy ASCII VTK snapshots of the simulation fields.

One file per state: points are the P2 dof coordinates (vertices then edge
midpoints, matching the solver's dof ordering), cells are quadratic
triangles, and the point data holds phi, the velocity, the auxiliary
field, and the pressure (the P1 pressure is evaluated at edge midpoints by
averaging its endpoint values).
"""
from __future__ import annotations

import numpy as np

from .fem import Field


def _p2_point_values(field: Field) -> np.ndarray:
    return field.coeffs.reshape(field.space.components, -1).T


def _p1_at_p2_points(field: Field, mesh) -> np.ndarray:
    vert = field.coeffs
    mid = 0.5 * (vert[mesh.edges[:, 0]] + vert[mesh.edges[:, 1]])
    return np.concatenate([vert, mid])


def write_state_vtk(path, state, title: str = "fields") -> None:
    space = state.phi.space
    mesh = space.mesh
    pts = space.dof_coords
    cells = space.cell_dofs

    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {pts.shape[0]} double",
    ]
    lines.extend(f"{p[0]:.17g} {p[1]:.17g} 0" for p in pts)
    nt = cells.shape[0]
    lines.append(f"CELLS {nt} {7 * nt}")
    lines.extend("6 " + " ".join(str(d) for d in row) for row in cells)
    lines.append(f"CELL_TYPES {nt}")
    lines.extend(["22"] * nt)  # VTK_QUADRATIC_TRIANGLE

    lines.append(f"POINT_DATA {pts.shape[0]}")
    lines.append("SCALARS phi double 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(f"{v:.17g}" for v in state.phi.coeffs)

    lines.append("SCALARS pi double 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(f"{v:.17g}" for v in _p1_at_p2_points(state.pi, mesh))

    for name, fld in (("velocity", state.v), ("zeta", state.zeta)):
        vals = _p2_point_values(fld)
        lines.append(f"VECTORS {name} double")
        lines.extend(f"{v[0]:.17g} {v[1]:.17g} 0" for v in vals)

    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
