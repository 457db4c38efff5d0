"""P1/P2 Lagrange finite elements on the uniform triangulations.

Everything is assembled with a single symmetric 7-point triangle rule that
is exact for polynomials of degree <= 5.  Degree-5 exactness is what makes
the skew-symmetric transport forms below vanish on their diagonal to
machine precision for P2 fields advected by a velocity with zero normal
trace: the integrands r a.grad(r) and (div a) r^2 are degree-5 polynomials,
so the quadrature reproduces the exact integrals and the usual
integration-by-parts cancellation survives discretization unchanged.

Vector-valued spaces store their coefficients component-blocked (all x
degrees of freedom first, then all y).  The momentum and auxiliary-field
equations use the full-gradient contraction, so the two components never
couple through a matrix and all vector systems are block diagonal with
identical scalar blocks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, SIDES

__all__ = [
    "QuadratureRule",
    "TRIANGLE_RULE",
    "Space",
    "Field",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_advection",
    "assemble_transport_scalar",
    "assemble_transport_vector",
    "assemble_load",
    "interpolate",
    "l2_norm",
    "l2_error",
    "l2_error_function",
    "dirichlet_eliminate",
    "dirichlet_rhs",
]


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    """Symmetric rule on the reference triangle.

    ``points`` holds barycentric coordinates, ``weights`` are normalized to
    sum to one (weights times triangle area give physical weights).
    ``degree`` is the highest polynomial degree integrated exactly.
    """

    points: np.ndarray   # (nq, 3) barycentric
    weights: np.ndarray  # (nq,)
    degree: int

    @property
    def num_points(self) -> int:
        return self.points.shape[0]


def _degree5_rule() -> QuadratureRule:
    s15 = np.sqrt(15.0)
    a = (6.0 + s15) / 21.0
    b = (6.0 - s15) / 21.0
    wa = (155.0 + s15) / 1200.0
    wb = (155.0 - s15) / 1200.0
    pts = [(1 / 3, 1 / 3, 1 / 3)]
    wts = [9.0 / 40.0]
    for c, w in ((a, wa), (b, wb)):
        r = 1.0 - 2.0 * c
        pts += [(r, c, c), (c, r, c), (c, c, r)]
        wts += [w, w, w]
    return QuadratureRule(np.array(pts), np.array(wts), degree=5)


#: The rule used for every form in the package.
TRIANGLE_RULE = _degree5_rule()


# ---------------------------------------------------------------------------
# reference basis
# ---------------------------------------------------------------------------

# barycentric gradients on the reference triangle (0,0)-(1,0)-(0,1)
_LAMBDA_GRADS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def _basis_p1(lam: np.ndarray):
    """Values (nq, 3) and reference gradients (nq, 3, 2) of P1 shapes."""
    vals = lam.copy()
    grads = np.broadcast_to(_LAMBDA_GRADS, (lam.shape[0], 3, 2)).copy()
    return vals, grads


def _basis_p2(lam: np.ndarray):
    """Values (nq, 6) and reference gradients (nq, 6, 2) of P2 shapes.

    Local order: three vertex functions, then midpoints of local edges
    (0,1), (1,2), (2,0).
    """
    nq = lam.shape[0]
    vals = np.empty((nq, 6))
    grads = np.empty((nq, 6, 2))
    for i in range(3):
        li = lam[:, i]
        vals[:, i] = li * (2.0 * li - 1.0)
        grads[:, i] = (4.0 * li - 1.0)[:, None] * _LAMBDA_GRADS[i]
    for k, (a, b) in enumerate(((0, 1), (1, 2), (2, 0))):
        vals[:, 3 + k] = 4.0 * lam[:, a] * lam[:, b]
        grads[:, 3 + k] = 4.0 * (
            lam[:, a][:, None] * _LAMBDA_GRADS[b] + lam[:, b][:, None] * _LAMBDA_GRADS[a]
        )
    return vals, grads


def reference_basis(degree: int, lam: np.ndarray):
    if degree == 1:
        return _basis_p1(lam)
    if degree == 2:
        return _basis_p2(lam)
    raise ValueError(f"unsupported polynomial degree {degree}")


# ---------------------------------------------------------------------------
# function spaces
# ---------------------------------------------------------------------------

class Space:
    """Scalar or component-blocked vector Lagrange space.

    Parameters
    ----------
    mesh : Mesh
    degree : 1 or 2
    components : 1 for scalar fields, 2 for vector fields
    dirichlet : optional dict side -> value spec.  A value spec is a number,
        a tuple of numbers (vector spaces), or a callable of (x, y).  Sides
        are applied in the order bottom, left, right, top, so a moving lid
        overrides the side walls at the two top corners.
    """

    def __init__(self, mesh: Mesh, degree: int, components: int = 1, dirichlet=None):
        if degree not in (1, 2):
            raise ValueError(f"unsupported polynomial degree {degree}")
        if components not in (1, 2):
            raise ValueError(f"components must be 1 or 2, got {components}")
        if dirichlet:
            for side in dirichlet:
                if side not in SIDES:
                    raise ValueError(f"unknown side {side!r}")
        self.mesh = mesh
        self.degree = degree
        self.components = components
        self.dirichlet = dict(dirichlet) if dirichlet else {}

        nv = mesh.num_vertices
        if degree == 1:
            self.cell_dofs = mesh.triangles.copy()
            self.dof_coords = mesh.vertices.copy()
        else:
            self.cell_dofs = np.column_stack([mesh.triangles, nv + mesh.cell_edges])
            self.dof_coords = np.vstack([mesh.vertices, mesh.edge_midpoints()])
        self.ndof_scalar = self.dof_coords.shape[0]
        self.dof_count = self.components * self.ndof_scalar
        self.local_size = self.cell_dofs.shape[1]

        self._build_tables()
        self._assembly_cache = None
        self._mass = None
        self._lumped = None

    # -- geometry / basis tables -------------------------------------------

    def _build_tables(self):
        rule = TRIANGLE_RULE
        mesh = self.mesh
        tri = mesh.vertices[mesh.triangles]          # (nt, 3, 2)
        j = np.stack([tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]], axis=2)
        det = j[:, 0, 0] * j[:, 1, 1] - j[:, 0, 1] * j[:, 1, 0]
        inv_t = np.empty_like(j)                      # inverse transpose of J
        inv_t[:, 0, 0] = j[:, 1, 1]
        inv_t[:, 0, 1] = -j[:, 1, 0]
        inv_t[:, 1, 0] = -j[:, 0, 1]
        inv_t[:, 1, 1] = j[:, 0, 0]
        inv_t /= det[:, None, None]

        vals, ref_grads = reference_basis(self.degree, rule.points)
        self.quad_rule = rule
        self.basis_values = vals                                 # (nq, nd)
        self.quad_weights = rule.weights                         # (nq,)
        self.det_j = det                                         # (nt,)
        # physical gradients: (nt, nq, nd, 2)
        self.basis_grads = np.einsum("tab,qib->tqia", inv_t, ref_grads)
        # physical quadrature points: (nt, nq, 2)
        self.quad_points = np.einsum("qv,tva->tqa", rule.points, tri)

    # -- dof bookkeeping -----------------------------------------------------

    def boundary_scalar_dofs(self, side: str) -> np.ndarray:
        """Scalar-layout dof indices lying on a side (corners included)."""
        x, y = self.dof_coords[:, 0], self.dof_coords[:, 1]
        tol = 1e-14
        sel = {
            "bottom": np.abs(y) <= tol,
            "top": np.abs(y - 1.0) <= tol,
            "left": np.abs(x) <= tol,
            "right": np.abs(x - 1.0) <= tol,
        }[side]
        return np.nonzero(sel)[0]

    def dirichlet_data(self):
        """Constrained dofs and values in the blocked layout.

        Returns (indices, values); later sides in the fixed application
        order overwrite earlier ones where they share a dof.
        """
        val = {}
        for side in SIDES:
            if side not in self.dirichlet:
                continue
            spec = self.dirichlet[side]
            dofs = self.boundary_scalar_dofs(side)
            coords = self.dof_coords[dofs]
            if callable(spec):
                out = np.asarray([spec(x, y) for x, y in coords], dtype=float)
                if self.components == 2:
                    out = out.reshape(len(dofs), 2)
            elif self.components == 2:
                out = np.tile(np.asarray(spec, dtype=float), (len(dofs), 1))
            else:
                out = np.full(len(dofs), float(spec))
            for k, d in enumerate(dofs):
                if self.components == 2:
                    for c in range(2):
                        val[c * self.ndof_scalar + d] = out[k, c]
                else:
                    val[d] = out[k]
        if not val:
            return np.empty(0, dtype=np.int64), np.empty(0)
        idx = np.array(sorted(val), dtype=np.int64)
        return idx, np.array([val[i] for i in idx])

    # -- assembly scatter ----------------------------------------------------

    def _assembly_maps(self):
        """CSR pattern for nd x nd element matrices plus a scatter map.

        Element-matrix entries (t, i, j) accumulate into CSR slot
        ``slot[t * nd^2 + i * nd + j]`` via bincount.
        """
        if self._assembly_cache is None:
            nd = self.local_size
            rows = np.repeat(self.cell_dofs, nd, axis=1).ravel()
            cols = np.tile(self.cell_dofs, (1, nd)).ravel()
            order = np.lexsort((cols, rows))
            rs, cs = rows[order], cols[order]
            new_entry = np.empty(rs.shape[0], dtype=bool)
            new_entry[0] = True
            new_entry[1:] = (rs[1:] != rs[:-1]) | (cs[1:] != cs[:-1])
            slot_sorted = np.cumsum(new_entry) - 1
            slot = np.empty_like(slot_sorted)
            slot[order] = slot_sorted
            nnz = slot_sorted[-1] + 1
            indices = cs[new_entry]
            counts = np.bincount(rs[new_entry], minlength=self.ndof_scalar)
            indptr = np.concatenate([[0], np.cumsum(counts)])
            self._assembly_cache = (slot, indices.astype(np.int32), indptr.astype(np.int32), nnz)
        return self._assembly_cache

    def scatter_csr(self, element_matrices: np.ndarray) -> sp.csr_matrix:
        """Sum (nt, nd, nd) element matrices into a scalar-layout CSR."""
        slot, indices, indptr, nnz = self._assembly_maps()
        data = np.bincount(slot, weights=element_matrices.ravel(), minlength=nnz)
        return sp.csr_matrix((data, indices, indptr),
                             shape=(self.ndof_scalar, self.ndof_scalar))

    def scatter_vector(self, element_vectors: np.ndarray) -> np.ndarray:
        """Sum (nt, nd) element load vectors into a scalar-layout vector."""
        return np.bincount(self.cell_dofs.ravel(), weights=element_vectors.ravel(),
                           minlength=self.ndof_scalar)

    # -- cached matrices ------------------------------------------------------

    def mass_scalar(self) -> sp.csr_matrix:
        if self._mass is None:
            self._mass = assemble_mass(self, _force_scalar=True)
        return self._mass

    def load_of_one(self) -> np.ndarray:
        """Scalar load vector of the constant 1 (integrals of basis functions)."""
        if self._lumped is None:
            w = self.quad_weights[None, :] * self.det_j[:, None]
            self._lumped = self.scatter_vector(np.einsum("tq,qi->ti", w, self.basis_values))
        return self._lumped

    def zero_field(self) -> "Field":
        return Field(self, np.zeros(self.dof_count))


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

class Field:
    """Coefficient vector bound to a space (blocked layout for vectors)."""

    __slots__ = ("space", "coeffs")

    def __init__(self, space: Space, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (space.dof_count,):
            raise ValueError(
                f"coefficient vector has shape {coeffs.shape}, expected ({space.dof_count},)"
            )
        self.space = space
        self.coeffs = coeffs

    def copy(self) -> "Field":
        return Field(self.space, self.coeffs.copy())

    def component(self, c: int) -> np.ndarray:
        n = self.space.ndof_scalar
        return self.coeffs[c * n : (c + 1) * n]

    def values_at_qp(self) -> np.ndarray:
        """(nt, nq) for scalars, (nt, nq, 2) for vectors."""
        s = self.space
        cell_vals = lambda comp: np.einsum(  # noqa: E731
            "ti,qi->tq", comp[s.cell_dofs], s.basis_values
        )
        if s.components == 1:
            return cell_vals(self.coeffs)
        return np.stack([cell_vals(self.component(c)) for c in range(2)], axis=-1)

    def grads_at_qp(self) -> np.ndarray:
        """(nt, nq, 2) for scalars, (nt, nq, 2, 2) [component, deriv] for vectors."""
        s = self.space
        cell_grads = lambda comp: np.einsum(  # noqa: E731
            "ti,tqia->tqa", comp[s.cell_dofs], s.basis_grads
        )
        if s.components == 1:
            return cell_grads(self.coeffs)
        return np.stack([cell_grads(self.component(c)) for c in range(2)], axis=2)


# ---------------------------------------------------------------------------
# coefficient evaluation at quadrature points
# ---------------------------------------------------------------------------

def _qp_scalar(space: Space, value) -> np.ndarray | None:
    """Normalize a coefficient spec to (nt, nq) values or None for unit."""
    if value is None:
        return None
    if isinstance(value, Field):
        if value.space.components != 1:
            raise ValueError("coefficient fields must be scalar")
        return value.values_at_qp()
    if callable(value):
        x = space.quad_points
        return np.asarray(value(x[..., 0], x[..., 1]), dtype=float)
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.broadcast_to(arr, space.det_j.shape + (space.quad_rule.num_points,))
    return arr


def _block_diag(a: sp.csr_matrix) -> sp.csr_matrix:
    return sp.block_diag([a, a], format="csr")


# ---------------------------------------------------------------------------
# bilinear forms
# ---------------------------------------------------------------------------

def assemble_mass(space: Space, weight=None, *, _force_scalar: bool = False) -> sp.csr_matrix:
    """(w r, s); SPD for positive weights, block diagonal for vector spaces."""
    wq = _qp_scalar(space, weight)
    w = space.quad_weights[None, :] * space.det_j[:, None]
    if wq is not None:
        w = w * wq
    elem = np.einsum("tq,qi,qj->tij", w, space.basis_values, space.basis_values)
    a = space.scatter_csr(elem)
    if space.components == 2 and not _force_scalar:
        return _block_diag(a)
    return a


def assemble_stiffness(space: Space, coefficient=None, *, _force_scalar: bool = False) -> sp.csr_matrix:
    """(c grad r, grad s); symmetric positive semidefinite for c >= 0."""
    cq = _qp_scalar(space, coefficient)
    w = space.quad_weights[None, :] * space.det_j[:, None]
    if cq is not None:
        w = w * cq
    elem = np.einsum("tq,tqia,tqja->tij", w, space.basis_grads, space.basis_grads)
    a = space.scatter_csr(elem)
    if space.components == 2 and not _force_scalar:
        return _block_diag(a)
    return a


def _advection_qp(velocity: Field, space: Space):
    """Velocity values and divergence of a P2 vector field, tabulated on
    the quadrature points of the target space (same mesh required)."""
    if velocity.space.mesh is not space.mesh:
        raise ValueError("advecting velocity must live on the same mesh")
    a = velocity.values_at_qp()          # (nt, nq, 2)
    g = velocity.grads_at_qp()           # (nt, nq, 2, 2)
    div = g[..., 0, 0] + g[..., 1, 1]    # (nt, nq)
    return a, div


def assemble_advection(velocity: Field, space: Space) -> sp.csr_matrix:
    """((a . grad) r, s) + 1/2 ((div a) r, s) on a scalar layout.

    The quadratic form vanishes identically when the advecting field has
    zero normal trace; this is the scalar block shared by the transported
    auxiliary field and the momentum convection term.
    """
    aq, div = _advection_qp(velocity, space)
    w = space.quad_weights[None, :] * space.det_j[:, None]
    adv = np.einsum("tqa,tqja->tqj", aq, space.basis_grads)       # a . grad(trial)
    elem = np.einsum("tq,qi,tqj->tij", w, space.basis_values, adv)
    elem += 0.5 * np.einsum("tq,qi,qj->tij", w * div, space.basis_values, space.basis_values)
    return space.scatter_csr(elem)


def assemble_transport_scalar(velocity: Field, space: Space) -> sp.csr_matrix:
    """-(r a, grad s) - 1/2 ((div a) r, s): phase transport form.

    Skew quadratic form for zero-normal-trace velocities (equals the
    advection form above plus an exact boundary flux that vanishes).
    """
    aq, div = _advection_qp(velocity, space)
    w = space.quad_weights[None, :] * space.det_j[:, None]
    adv = np.einsum("tqa,tqia->tqi", aq, space.basis_grads)       # a . grad(test)
    elem = -np.einsum("tq,tqi,qj->tij", w, adv, space.basis_values)
    elem -= 0.5 * np.einsum("tq,qi,qj->tij", w * div, space.basis_values, space.basis_values)
    return space.scatter_csr(elem)


def assemble_transport_vector(velocity: Field, space: Space) -> sp.csr_matrix:
    """Vector-space transport ((a . grad) z, th) + 1/2 ((div a) z, th).

    With the full-gradient convention the components do not couple, so the
    result is block diagonal with two copies of the scalar advection block.
    """
    if space.components != 2:
        raise ValueError("assemble_transport_vector expects a 2-component space")
    return _block_diag(assemble_advection(velocity, space))


def assemble_load(space: Space, density) -> np.ndarray:
    """(g, s): load vector of a density given as Field, callable, constant,
    or quadrature-point array ((nt, nq) scalar / (nt, nq, 2) vector)."""
    w = space.quad_weights[None, :] * space.det_j[:, None]
    if isinstance(density, Field):
        # any field on the same mesh works: the quadrature points coincide
        gq = density.values_at_qp()
    elif callable(density):
        x = space.quad_points
        gq = np.asarray(density(x[..., 0], x[..., 1]), dtype=float)
        if space.components == 2 and gq.shape[0] == 2:
            gq = np.moveaxis(gq, 0, -1)
    else:
        gq = np.asarray(density, dtype=float)
        if gq.ndim == 0:
            shape = space.det_j.shape + (space.quad_rule.num_points,)
            if space.components == 2:
                shape += (2,)
            gq = np.broadcast_to(gq, shape)
    if space.components == 1:
        elem = np.einsum("tq,qi->ti", w * gq, space.basis_values)
        return space.scatter_vector(elem)
    out = np.empty(space.dof_count)
    n = space.ndof_scalar
    for c in range(2):
        elem = np.einsum("tq,qi->ti", w * gq[..., c], space.basis_values)
        out[c * n : (c + 1) * n] = space.scatter_vector(elem)
    return out


# ---------------------------------------------------------------------------
# interpolation and norms
# ---------------------------------------------------------------------------

def interpolate(space: Space, f) -> Field:
    """Nodal interpolant.  ``f`` maps (x, y) to a scalar or a 2-vector and
    must accept numpy arrays; constants are accepted directly."""
    x, y = space.dof_coords[:, 0], space.dof_coords[:, 1]
    if space.components == 1:
        vals = f(x, y) if callable(f) else f
        arr = np.broadcast_to(np.asarray(vals, dtype=float), x.shape)
        return Field(space, arr.copy())
    vx, vy = f(x, y) if callable(f) else f
    coeffs = np.concatenate([
        np.broadcast_to(np.asarray(vx, dtype=float), x.shape),
        np.broadcast_to(np.asarray(vy, dtype=float), x.shape),
    ])
    return Field(space, coeffs.copy())


def l2_norm(field: Field) -> float:
    """Mass-matrix L2 norm; exact for the stored polynomial degree."""
    s = field.space
    m = s.mass_scalar()
    if s.components == 1:
        return float(np.sqrt(max(field.coeffs @ (m @ field.coeffs), 0.0)))
    acc = 0.0
    for c in range(2):
        v = field.component(c)
        acc += v @ (m @ v)
    return float(np.sqrt(max(acc, 0.0)))


def l2_error(a: Field, b: Field) -> float:
    """||a - b|| in L2; the fields must share a space."""
    if a.space is not b.space and (
        a.space.dof_count != b.space.dof_count or a.space.mesh is not b.space.mesh
    ):
        raise ValueError("fields live on incompatible spaces")
    return l2_norm(Field(a.space, a.coeffs - b.coeffs))


def l2_error_function(field: Field, f) -> float:
    """Quadrature L2 distance between a discrete field and a callable."""
    s = field.space
    x = s.quad_points
    w = s.quad_weights[None, :] * s.det_j[:, None]
    if s.components == 1:
        diff = field.values_at_qp() - np.asarray(f(x[..., 0], x[..., 1]), dtype=float)
        return float(np.sqrt(np.sum(w * diff * diff)))
    exact = np.asarray(f(x[..., 0], x[..., 1]), dtype=float)
    if exact.shape[0] == 2:
        exact = np.moveaxis(exact, 0, -1)
    diff = field.values_at_qp() - exact
    return float(np.sqrt(np.sum(w[..., None] * diff * diff)))


# ---------------------------------------------------------------------------
# strong Dirichlet elimination
# ---------------------------------------------------------------------------

def dirichlet_eliminate(a: sp.csr_matrix, dofs: np.ndarray) -> sp.csr_matrix:
    """Zero the rows and columns of the constrained dofs and put 1 on their
    diagonal.  Keeps the matrix size, so one factorization serves several
    right-hand sides with different boundary values."""
    n = a.shape[0]
    free = np.ones(n)
    free[dofs] = 0.0
    d_free = sp.diags(free)
    fixed = np.zeros(n)
    fixed[dofs] = 1.0
    out = (d_free @ a @ d_free + sp.diags(fixed)).tocsr()
    out.sort_indices()
    return out


def dirichlet_rhs(a_full: sp.csr_matrix, b: np.ndarray, dofs: np.ndarray,
                  values: np.ndarray) -> np.ndarray:
    """Right-hand side matching :func:`dirichlet_eliminate`.

    ``a_full`` must be the matrix *before* elimination so the lifting term
    moves the prescribed values into the free equations symmetrically.
    """
    g = np.zeros_like(b)
    g[dofs] = values
    out = b - a_full @ g
    out[dofs] = values
    return out
