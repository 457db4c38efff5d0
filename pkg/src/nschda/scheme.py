"""Four-substep time splitting for the coupled flow / phase / auxiliary
field system, with optional nudging sources, plus the per-step energy
ledger used to monitor the stepwise stability estimate.

Substeps per time level (all linear in the new unknowns; the advecting
velocity and the capped phase entering the coefficients are frozen at the
previous level where the scheme says so):

1. phase + chemical potential, a coupled 2x2 block system driven by the
   transport form b_phi and the double-well/elastic sources;
2. auxiliary vector field, advected skew-symmetrically and damped by the
   phase-dependent elastic coefficient (one scalar matrix, two solves);
3. momentum, with extrapolated pressure gradient (2 pi^n - pi^{n-1}),
   capillary and elastic forces, permeability resistance, and strong
   Dirichlet values (one scalar matrix, two solves);
4. pressure Poisson correction on the zero-mean space,
   (grad pi^{n+1}, grad q) = s * (rho Re / dt)(div v^{n+1}, q)
                             - (grad pi^n, grad q),
   with the sign s = +1 as the scheme states it (a divergence-free velocity
   then flips the sign of the pressure each step, so the pressure may
   oscillate persistently while the primary fields converge); s = -1 is
   exposed for comparison with the classical incremental update.

The phase is capped nodewise into [0, 1] before coefficient evaluation;
since the capped interpolant can still leave [0, 1] slightly at the
quadrature points, the coefficient arguments are clamped once more there,
which keeps eta, nu, kappa and the resistance weight inside their
admissible ranges and makes the dissipation ledger nonnegative by
construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import model
from .fem import (
    Field,
    Space,
    assemble_advection,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    assemble_transport_scalar,
    dirichlet_eliminate,
    dirichlet_rhs,
)
from .mesh import Mesh
from .model import PhysicalParams
from .sparse import DEFAULT_TOL, LUSolver, SolverError, ZeroMeanSolver

__all__ = ["SimState", "NudgeSources", "LedgerEntry", "Stepper"]


@dataclass
class SimState:
    """All unknowns at one time level.

    ``pi_prev`` carries the pressure one level further back for the
    extrapolation; both pressures start at zero.
    """

    v: Field
    pi: Field
    pi_prev: Field
    phi: Field
    xi: Field
    zeta: Field
    t: float
    n: int

    def is_finite(self) -> bool:
        return all(
            np.isfinite(f.coeffs).all()
            for f in (self.v, self.pi, self.pi_prev, self.phi, self.xi, self.zeta)
        )


@dataclass
class NudgeSources:
    """Feedback sources alpha * I_H(reference - assimilated), already scaled
    by the gains; ``None`` entries mean no feedback in that equation."""

    g_phi: Field | None = None
    g_psi: Field | None = None
    g_u: Field | None = None

    @classmethod
    def none(cls) -> "NudgeSources":
        return cls(None, None, None)


@dataclass(frozen=True)
class LedgerEntry:
    """E at the new level, D of the step just taken, S of its sources."""

    energy: float
    dissipation: float
    source: float


def _capped_qp(phi: Field):
    """Values of the nodewise-capped phase at quadrature points.

    Returns (raw, clamped): ``raw`` is the capped interpolant evaluated at
    the quadrature points (may leave [0,1] slightly for P2), ``clamped``
    re-clamps those values for use as coefficient arguments.
    """
    capped = Field(phi.space, model.cap(phi.coeffs))
    raw = capped.values_at_qp()
    return raw, np.clip(raw, 0.0, 1.0)


class Stepper:
    """Precomputes everything reusable across steps on a fixed mesh."""

    def __init__(self, mesh: Mesh, params: PhysicalParams, dt: float,
                 bc: str = "no_slip", lid_u0: float = 2.0,
                 pressure_sign: int = +1, tol: float = DEFAULT_TOL):
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        if pressure_sign not in (+1, -1):
            raise ValueError("pressure_sign must be +1 or -1")
        if bc not in ("no_slip", "moving_lid"):
            raise ValueError(f"unknown boundary condition preset {bc!r}")
        self.mesh = mesh
        self.params = params
        self.dt = float(dt)
        self.bc = bc
        self.lid_u0 = float(lid_u0)
        self.pressure_sign = int(pressure_sign)
        self.tol = tol

        zero = (0.0, 0.0)
        lid = (lid_u0, 0.0) if bc == "moving_lid" else zero
        dirichlet = {"bottom": zero, "left": zero, "right": zero, "top": lid}

        self.phase_space = Space(mesh, 2)
        self.aux_space = Space(mesh, 2, components=2)
        self.vel_space = Space(mesh, 2, components=2, dirichlet=dirichlet)
        self.pressure_space = Space(mesh, 1)

        self.mass = self.phase_space.mass_scalar()
        self.stiff = assemble_stiffness(self.phase_space)
        self.pressure_mass = self.pressure_space.mass_scalar()
        self.pressure_stiff = assemble_stiffness(self.pressure_space)
        self.pressure_mean = self.pressure_space.load_of_one()
        self.pressure_solver = ZeroMeanSolver(
            self.pressure_stiff, self.pressure_mean, context="pressure correction")

        # scalar-layout Dirichlet dofs are shared by both velocity components
        blocked_idx, blocked_vals = self.vel_space.dirichlet_data()
        ns = self.vel_space.ndof_scalar
        self.dir_scalar = blocked_idx[blocked_idx < ns]
        vals = {0: np.zeros(len(self.dir_scalar)), 1: np.zeros(len(self.dir_scalar))}
        lookup = dict(zip(blocked_idx.tolist(), blocked_vals.tolist()))
        for k, d in enumerate(self.dir_scalar):
            vals[0][k] = lookup.get(int(d), 0.0)
            vals[1][k] = lookup.get(int(d) + ns, 0.0)
        self.dir_values = vals

    # -- helpers -------------------------------------------------------------

    def _qp_weights(self, space: Space) -> np.ndarray:
        return space.quad_weights[None, :] * space.det_j[:, None]

    def _qp_integral(self, space: Space, vals: np.ndarray) -> float:
        return float(np.sum(self._qp_weights(space) * vals))

    def _grad_load(self, qvec: np.ndarray) -> np.ndarray:
        """Scalar load L_i = int qvec . grad(basis_i) for (nt, nq, 2) data."""
        s = self.phase_space
        elem = np.einsum("tq,tqa,tqia->ti", self._qp_weights(s), qvec, s.basis_grads)
        return s.scatter_vector(elem)

    def _component_grad_load(self, scalar_qp: np.ndarray, c: int) -> np.ndarray:
        """Scalar load L_i = int scalar_qp * d(basis_i)/dx_c."""
        s = self.phase_space
        elem = np.einsum("tq,tqi->ti", self._qp_weights(s) * scalar_qp,
                         s.basis_grads[:, :, :, c])
        return s.scatter_vector(elem)

    @staticmethod
    def _grad_sq(zeta: Field) -> np.ndarray:
        """|grad zeta|^2 (Frobenius, summed over components) at qp."""
        g = zeta.grads_at_qp()  # (nt, nq, comp, deriv)
        return np.einsum("tqcd,tqcd->tq", g, g)

    def apply_velocity_bc(self, v: Field) -> Field:
        """Overwrite the constrained dofs with their prescribed values."""
        out = v.copy()
        ns = self.vel_space.ndof_scalar
        for c in range(2):
            out.coeffs[c * ns + self.dir_scalar] = self.dir_values[c]
        return out

    # -- substeps ------------------------------------------------------------

    def ch_step(self, state: SimState, g_phi: Field | None = None,
                transport: sp.csr_matrix | None = None):
        """Coupled phase / chemical-potential solve; returns (phi1, xi1)."""
        p = self.params
        dt = self.dt
        space = self.phase_space
        if transport is None:
            transport = assemble_transport_scalar(state.v, space)
        a11 = (self.mass / dt + transport).tocsr()
        system = sp.bmat([[a11, p.tau * self.stiff],
                          [-p.lam * self.stiff, self.mass]], format="csr")

        rhs1 = self.mass @ (state.phi.coeffs / dt)
        if g_phi is not None:
            rhs1 = rhs1 + self.mass @ g_phi.coeffs

        raw, _ = _capped_qp(state.phi)
        grad2 = self._grad_sq(state.zeta)
        density = (p.lam * p.gamma * model.double_well_deriv(raw)
                   + 0.5 * model.nu_prime(raw, p) * grad2)
        rhs2 = assemble_load(space, density)

        ctx = f"phase step @ n={state.n}"
        sol = LUSolver(system, ctx).solve(np.concatenate([rhs1, rhs2]), self.tol)
        n = space.ndof_scalar
        return Field(space, sol[:n]), Field(space, sol[n:])

    def psi_step(self, state: SimState, phi1: Field,
                 g_psi: Field | None = None,
                 advection: sp.csr_matrix | None = None) -> Field:
        """Auxiliary-field solve; the elastic coefficient uses the fresh phase."""
        p = self.params
        dt = self.dt
        space = self.phase_space
        if advection is None:
            advection = assemble_advection(state.v, space)
        _, s1 = _capped_qp(phi1)
        k_nu = assemble_stiffness(space, model.nu(s1, p))
        system = (self.mass / dt + advection + p.eps * k_nu).tocsr()
        lu = LUSolver(system, f"auxiliary-field step @ n={state.n}")

        n = space.ndof_scalar
        out = np.empty(2 * n)
        for c in range(2):
            rhs = self.mass @ (state.zeta.component(c) / dt)
            if g_psi is not None:
                rhs = rhs + self.mass @ g_psi.component(c)
            out[c * n : (c + 1) * n] = lu.solve(rhs, self.tol)
        return Field(self.aux_space, out)

    def ns_step(self, state: SimState, phi1: Field, xi1: Field, zeta1: Field,
                g_u: Field | None = None,
                advection: sp.csr_matrix | None = None) -> Field:
        """Momentum solve with extrapolated pressure; returns v^{n+1}."""
        p = self.params
        dt = self.dt
        space = self.phase_space
        if advection is None:
            advection = assemble_advection(state.v, space)
        _, s1 = _capped_qp(phi1)
        eta_qp = model.eta(s1, p)
        resist_qp = eta_qp / model.kappa(s1, p) * (1.0 - s1)
        k_eta = assemble_stiffness(space, eta_qp)
        m_resist = assemble_mass(space, resist_qp, _force_scalar=True)
        scale = p.rho * p.re
        system = (scale / dt * self.mass + scale * advection + k_eta + m_resist).tocsr()
        reduced = dirichlet_eliminate(system, self.dir_scalar)
        lu = LUSolver(reduced, f"momentum step @ n={state.n}")

        # quadrature data shared by both components
        pext = Field(self.pressure_space,
                     2.0 * state.pi.coeffs - state.pi_prev.coeffs).values_at_qp()
        gphi = phi1.grads_at_qp()                      # (nt, nq, 2)
        xi_qp = xi1.values_at_qp()
        gz = zeta1.grads_at_qp()                       # (nt, nq, comp, deriv)
        grad2 = np.einsum("tqcd,tqcd->tq", gz, gz)
        nup = model.nu_prime(s1, p)
        nu_qp = model.nu(s1, p)
        # t_ab = sum_j d_a zeta_j d_b zeta_j  (symmetric 2x2 at each qp)
        t_mat = np.einsum("tqja,tqjb->tqab", gz, gz)

        n = space.ndof_scalar
        out = np.empty(2 * n)
        for c in range(2):
            b = scale / dt * (self.mass @ state.v.component(c))
            b += self._component_grad_load(pext, c)
            b += assemble_load(space, xi_qp * gphi[..., c])
            b -= 0.5 * assemble_load(space, nup * grad2 * gphi[..., c])
            b -= self._grad_load(nu_qp[..., None] * t_mat[:, :, c, :])
            if g_u is not None:
                b += self.mass @ g_u.component(c)
            rhs = dirichlet_rhs(system, b, self.dir_scalar, self.dir_values[c])
            out[c * n : (c + 1) * n] = lu.solve(rhs, self.tol)
        return Field(self.vel_space, out)

    def pressure_correction(self, state: SimState, v1: Field) -> Field:
        """Zero-mean Poisson update from the divergence of the new velocity."""
        p = self.params
        gv = v1.grads_at_qp()
        div_qp = gv[:, :, 0, 0] + gv[:, :, 1, 1]
        b = (self.pressure_sign * p.rho * p.re / self.dt
             * assemble_load(self.pressure_space, div_qp))
        b -= self.pressure_stiff @ state.pi.coeffs
        pi1, _ = self.pressure_solver.solve(
            b, self.tol, f"pressure correction @ n={state.n}")
        return Field(self.pressure_space, pi1)

    # -- full step -------------------------------------------------------------

    def advance(self, state: SimState, nudge: NudgeSources | None = None) -> SimState:
        """One full time step; the input state is left untouched."""
        if nudge is None:
            nudge = NudgeSources.none()
        transport = assemble_transport_scalar(state.v, self.phase_space)
        advection = assemble_advection(state.v, self.phase_space)
        phi1, xi1 = self.ch_step(state, nudge.g_phi, transport)
        zeta1 = self.psi_step(state, phi1, nudge.g_psi, advection)
        v1 = self.ns_step(state, phi1, xi1, zeta1, nudge.g_u, advection)
        pi1 = self.pressure_correction(state, v1)
        new = SimState(v=v1, pi=pi1, pi_prev=state.pi, phi=phi1, xi=xi1,
                       zeta=zeta1, t=state.t + self.dt, n=state.n + 1)
        if not new.is_finite():
            raise SolverError("state became non-finite", f"advance to n={new.n}")
        return new

    # -- energy ledger ----------------------------------------------------------

    def _mass_norm_sq(self, field: Field) -> float:
        m = self.mass if field.space.degree == 2 else self.pressure_mass
        if field.space.components == 1:
            return float(field.coeffs @ (m @ field.coeffs))
        return float(sum(field.component(c) @ (m @ field.component(c))
                         for c in range(2)))

    def ledger_energy(self, state: SimState) -> float:
        """rho Re / 2 ||v||^2 + 1/2 ||phi||^2 + 1/2 ||zeta||^2."""
        p = self.params
        return (0.5 * p.rho * p.re * self._mass_norm_sq(state.v)
                + 0.5 * self._mass_norm_sq(state.phi)
                + 0.5 * self._mass_norm_sq(state.zeta))

    def stability_ledger(self, prev: SimState, new: SimState,
                         nudge: NudgeSources | None = None) -> LedgerEntry:
        """Ledger triple for the step prev -> new.

        The dissipation is a sum of quadrature-point quadratic terms with
        clamped nonnegative coefficients, hence nonnegative by construction;
        the source mixes the two levels exactly as the stepwise estimate
        does.
        """
        if nudge is None:
            nudge = NudgeSources.none()
        p = self.params
        space = self.phase_space

        energy = self.ledger_energy(new)

        _, s_new = _capped_qp(new.phi)
        eta_qp = model.eta(s_new, p)
        resist_qp = eta_qp / model.kappa(s_new, p) * (1.0 - s_new)
        gv = new.v.grads_at_qp()
        vv = new.v.values_at_qp()
        gz_new = new.zeta.grads_at_qp()
        dissipation = (
            p.tau / (4.0 * p.lam) * self._mass_norm_sq(new.xi)
            + 0.5 * self._qp_integral(space, eta_qp * np.einsum("tqcd,tqcd->tq", gv, gv))
            + 0.5 * self._qp_integral(space, resist_qp * np.einsum("tqc,tqc->tq", vv, vv))
            + p.eps * self._qp_integral(
                space, model.nu(s_new, p) * np.einsum("tqcd,tqcd->tq", gz_new, gz_new))
        )

        raw_prev, _ = _capped_qp(prev.phi)
        grad2_prev = self._grad_sq(prev.zeta)
        pext = Field(self.pressure_space,
                     2.0 * prev.pi.coeffs - prev.pi_prev.coeffs)
        gphi_new = new.phi.grads_at_qp()
        gphi2_new = np.einsum("tqa,tqa->tq", gphi_new, gphi_new)
        xi_qp = new.xi.values_at_qp()
        grad2_new = np.einsum("tqcd,tqcd->tq", gz_new, gz_new)
        t_new = np.einsum("tqja,tqjb->tqab", gz_new, gz_new)
        nu_new = model.nu(s_new, p)

        source = 0.0
        for g in (nudge.g_phi, nudge.g_psi, nudge.g_u):
            if g is not None:
                source += self._mass_norm_sq(g)
        source += self._qp_integral(space, model.double_well_deriv(raw_prev) ** 2)
        source += self._qp_integral(
            space, (model.nu_prime(raw_prev, p) * grad2_prev) ** 2)
        source += self._mass_norm_sq(pext)
        source += self._qp_integral(space, xi_qp ** 2 * gphi2_new)
        source += self._qp_integral(
            space, (model.nu_prime(s_new, p) * grad2_new) ** 2 * gphi2_new)
        source += self._qp_integral(
            space, nu_new ** 2 * np.einsum("tqab,tqab->tq", t_new, t_new))

        return LedgerEntry(energy=energy, dissipation=dissipation, source=source)
