"""Scalar diagnostics recorded at every step of a twin experiment.

The monitored energies follow the reporting convention of the experiments
(kinetic energy weighted by rho/2), which differs from the rho*Re/2 weight
inside the stability ledger; both are kept as-is on purpose.  The elastic
and mixing energies use the raw transported phase, not the capped one, so
they report what the scheme actually produced.
"""
from __future__ import annotations

from dataclasses import dataclass, fields as dataclass_fields

import numpy as np

from .fem import Field, l2_error, l2_norm
from .model import PhysicalParams, double_well

__all__ = ["StepRecord", "CSV_HEADER", "energies", "sync_errors", "phase_mass"]


@dataclass
class StepRecord:
    """One CSV row of a twin run (see CSV_HEADER for the column order)."""

    step: int
    t: float
    e_u: float
    e_phi: float
    e_psi: float
    e_pi: float
    Ekin_ref: float
    Emix_ref: float
    Eel_ref: float
    Etot_ref: float
    Ekin_da: float
    Emix_da: float
    Eel_da: float
    Etot_da: float
    mass_ref: float
    mass_da: float
    ledger_E: float
    ledger_D: float
    ledger_S: float

    def as_row(self) -> list:
        return [getattr(self, f.name) for f in dataclass_fields(self)]


CSV_HEADER = ",".join(f.name for f in dataclass_fields(StepRecord))


def _qp_integral(space, vals: np.ndarray) -> float:
    w = space.quad_weights[None, :] * space.det_j[:, None]
    return float(np.sum(w * vals))


def energies(state, params: PhysicalParams) -> tuple[float, float, float, float]:
    """(E_kin, E_mix, E_el, E_tot) of one trajectory's state."""
    p = params
    space = state.phi.space

    ekin = 0.5 * p.rho * l2_norm(state.v) ** 2

    gphi = state.phi.grads_at_qp()
    grad_sq = np.einsum("tqa,tqa->tq", gphi, gphi)
    phi_qp = state.phi.values_at_qp()
    emix = _qp_integral(space, 0.5 * p.lam * grad_sq
                        + p.lam * p.gamma * double_well(phi_qp))

    gz = state.zeta.grads_at_qp()
    gz_sq = np.einsum("tqcd,tqcd->tq", gz, gz)
    eel = 0.5 * p.lambda_e * _qp_integral(space, (1.0 - phi_qp) * gz_sq)

    return ekin, emix, eel, ekin + emix + eel


def sync_errors(ref, da) -> tuple[float, float, float, float]:
    """L2 distances (e_u, e_phi, e_psi, e_pi) between the two trajectories.

    The pressure difference is reported as-is; the pressure iterate is only
    determined up to the correction dynamics and commonly keeps
    oscillating after the primary fields have synchronized.
    """
    e_u = l2_error(ref.v, da.v)
    e_phi = l2_error(ref.phi, da.phi)
    e_psi = l2_error(ref.zeta, da.zeta)
    e_pi = l2_error(ref.pi, da.pi)
    return e_u, e_phi, e_psi, e_pi


def phase_mass(phi: Field) -> float:
    """Integral of the phase field (exact for the stored degree)."""
    return float(phi.space.load_of_one() @ phi.coeffs)
