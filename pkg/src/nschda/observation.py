"""Coarse-mesh observation operator I_H = P o R on nested triangulations.

R restricts a fine-mesh field to the coarse mesh by nodal sampling.  On
the uniform nested family every coarse degree of freedom sits exactly on a
fine degree of freedom (vertices land on vertices; coarse edge midpoints
land on fine vertices or fine edge midpoints, for even and odd refinement
ratios respectively), so R is a pure index selection and introduces no
rounding.  P evaluates the coarse interpolant at the fine dof coordinates.
The composition is idempotent, preserves constants, reproduces any coarse
function exactly, and converges at second order in the coarse spacing for
smooth fields.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .fem import Field, Space, reference_basis

__all__ = ["NotNested", "DegreeMismatch", "ObservationOperator",
           "build_observation", "observe"]


class NotNested(ValueError):
    """The coarse mesh is not a sub-triangulation of the fine mesh."""


class DegreeMismatch(ValueError):
    """Fine and coarse spaces use different polynomial degrees."""


class ObservationOperator:
    """Holds the scalar-layout R, P and their composition I_H.

    Vector fields are handled by applying the scalar operator to each
    component block.
    """

    def __init__(self, fine: Space, coarse: Space,
                 restriction: sp.csr_matrix, prolongation: sp.csr_matrix):
        self.fine = fine
        self.coarse = coarse
        self.restriction = restriction
        self.prolongation = prolongation
        composite = (prolongation @ restriction).tocsr()
        composite.sum_duplicates()
        composite.sort_indices()
        self.composite = composite

    def restrict(self, field: Field) -> Field:
        return Field(self.coarse, self._apply(self.restriction, field,
                                              self.coarse.ndof_scalar))

    def prolong(self, field: Field) -> Field:
        return Field(self.fine, self._apply(self.prolongation, field,
                                            self.fine.ndof_scalar))

    def interp(self, field: Field) -> Field:
        """I_H applied on the fine space."""
        return Field(field.space, self._apply(self.composite, field,
                                              self.fine.ndof_scalar))

    @staticmethod
    def _apply(op: sp.csr_matrix, field: Field, nscalar_out: int) -> np.ndarray:
        s = field.space
        if s.components == 1:
            return op @ field.coeffs
        out = np.empty(2 * nscalar_out)
        for c in range(2):
            out[c * nscalar_out : (c + 1) * nscalar_out] = op @ field.component(c)
        return out


def _coord_keys(coords: np.ndarray, scale: int) -> np.ndarray:
    """Integer lattice keys; dof coordinates are multiples of 1/scale."""
    scaled = coords * scale
    keys = np.round(scaled).astype(np.int64)
    if not np.all(np.abs(scaled - keys) <= 1e-9):
        raise NotNested("dof coordinates do not lie on the common lattice")
    return keys[:, 0] * (4 * scale + 1) + keys[:, 1]


def build_observation(fine: Space, coarse: Space) -> ObservationOperator:
    """Construct I_H between two spaces on nested uniform meshes."""
    if fine.degree != coarse.degree:
        raise DegreeMismatch(
            f"fine degree {fine.degree} vs coarse degree {coarse.degree}")
    if fine.components != coarse.components:
        raise ValueError("fine and coarse spaces must have equal components")
    nf, nc = fine.mesh.n_side, coarse.mesh.n_side
    if nf % nc != 0:
        raise NotNested(f"{nc} does not divide {nf}")

    # --- restriction: coarse dof -> coincident fine dof -------------------
    scale = 2 * nf  # P2 midpoints live on the half-lattice; P1 is a subset
    fine_keys = _coord_keys(fine.dof_coords, scale)
    coarse_keys = _coord_keys(coarse.dof_coords, scale)
    order = np.argsort(fine_keys, kind="stable")
    pos = np.searchsorted(fine_keys[order], coarse_keys)
    if np.any(pos >= len(order)) or np.any(fine_keys[order][np.minimum(pos, len(order) - 1)] != coarse_keys):
        raise NotNested("a coarse dof coordinate has no fine counterpart")
    sel = order[pos]
    ones = np.ones(coarse.ndof_scalar)
    restriction = sp.csr_matrix(
        (ones, (np.arange(coarse.ndof_scalar), sel)),
        shape=(coarse.ndof_scalar, fine.ndof_scalar),
    )

    # --- prolongation: evaluate the coarse field at fine dof coords -------
    x = fine.dof_coords[:, 0]
    y = fine.dof_coords[:, 1]
    cx = np.minimum((x * nc).astype(np.int64), nc - 1)
    cy = np.minimum((y * nc).astype(np.int64), nc - 1)
    fx = x * nc - cx
    fy = y * nc - cy
    lower = fy <= fx + 1e-14

    # barycentric coordinates inside the containing coarse triangle
    lam = np.empty((fine.ndof_scalar, 3))
    lam[lower, 0] = 1.0 - fx[lower]
    lam[lower, 1] = fx[lower] - fy[lower]
    lam[lower, 2] = fy[lower]
    up = ~lower
    lam[up, 0] = 1.0 - fy[up]
    lam[up, 1] = fx[up]
    lam[up, 2] = fy[up] - fx[up]
    lam = np.clip(lam, 0.0, 1.0)

    vals, _ = reference_basis(coarse.degree, lam)     # (nfine, nd)
    cell = 2 * (cy * nc + cx) + np.where(lower, 0, 1)  # triangle index
    cols = coarse.cell_dofs[cell]                      # (nfine, nd)
    rows = np.repeat(np.arange(fine.ndof_scalar), cols.shape[1])
    prolongation = sp.csr_matrix(
        (vals.ravel(), (rows, cols.ravel())),
        shape=(fine.ndof_scalar, coarse.ndof_scalar),
    )
    prolongation.sum_duplicates()
    data = prolongation.data
    data[np.abs(data) <= 1e-15] = 0.0
    prolongation.eliminate_zeros()

    return ObservationOperator(fine, coarse, restriction, prolongation)


def observe(op: ObservationOperator, field: Field) -> Field:
    """Apply I_H to a fine-space field (componentwise for vectors)."""
    if field.space.mesh is not op.fine.mesh or field.space.degree != op.fine.degree:
        raise ValueError("field does not live on the operator's fine space")
    return op.interp(field)
