"""Physical parameters, phase-dependent coefficients, double-well potential.

The phase variable is capped into [0, 1] before any coefficient is
evaluated, so viscosity stays within [eta_f, eta_p] (up to ordering),
the elastic coefficient nu stays in [0, lambda_e], and the permeability
stays strictly positive.  The capped phase enters the coefficients only;
the transported phase itself is never modified.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PhysicalParams",
    "cap",
    "eta",
    "nu",
    "nu_prime",
    "kappa",
    "double_well",
    "double_well_deriv",
]


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensionless model constants.

    ``lam`` is the capillary/mixing-energy scale and ``gamma`` the
    double-well strength; ``tau`` and ``eps`` are the mobility-like scales
    of the phase and auxiliary-field equations; ``lambda_e`` the elastic
    modulus; ``k_per`` the (constant) permeability; ``eta_f``/``eta_p``
    the fluid/matrix viscosities; the alphas are the nudging gains.
    """

    rho: float = 1.0
    re: float = 3000.0
    tau: float = 1e-4
    eps: float = 5e-3
    lam: float = 1.0
    gamma: float = 1.0
    lambda_e: float = 0.5
    k_per: float = 1.0
    eta_f: float = 1e-2
    eta_p: float = 1e-1
    alpha_u: float = 1.0
    alpha_phi: float = 1.0
    alpha_psi: float = 1.0

    def __post_init__(self):
        positive = ("rho", "re", "tau", "eps", "lam", "gamma", "lambda_e",
                    "k_per", "eta_f", "eta_p")
        for name in positive:
            if not getattr(self, name) > 0.0:
                raise ValueError(f"parameter {name} must be positive")
        for name in ("alpha_u", "alpha_phi", "alpha_psi"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"nudging gain {name} must be nonnegative")

    @property
    def eta_min(self) -> float:
        return min(self.eta_f, self.eta_p)

    @property
    def eta_max(self) -> float:
        return max(self.eta_f, self.eta_p)


def cap(s):
    """Truncate into [0, 1]: min(1, max(0, s)).  NaN propagates."""
    return np.clip(s, 0.0, 1.0)


def eta(s, p: PhysicalParams):
    """Viscosity eta_p * s + eta_f * (1 - s); affine blend of the phases."""
    s = np.asarray(s, dtype=float)
    return p.eta_p * s + p.eta_f * (1.0 - s)


def nu(s, p: PhysicalParams):
    """Elastic coefficient lambda_e * (1 - s); vanishes in the pure phase."""
    s = np.asarray(s, dtype=float)
    return p.lambda_e * (1.0 - s)


def nu_prime(s, p: PhysicalParams):
    """d(nu)/ds = -lambda_e, constant."""
    return np.full_like(np.asarray(s, dtype=float), -p.lambda_e)


def kappa(s, p: PhysicalParams):
    """Permeability; constant k_per.  Swap this function out to experiment
    with phase-dependent permeabilities (the solver only calls through
    here and assumes kappa >= some positive floor)."""
    return np.full_like(np.asarray(s, dtype=float), p.k_per)


def double_well(s):
    """F(s) = 4 s^2 (1 - s)^2: equal wells at 0 and 1, barrier F(1/2) = 1/4."""
    s = np.asarray(s, dtype=float)
    return 4.0 * s * s * (1.0 - s) ** 2


def double_well_deriv(s):
    """f(s) = F'(s) = 8 s (1 - s) (1 - 2 s)."""
    s = np.asarray(s, dtype=float)
    return 8.0 * s * (1.0 - s) * (1.0 - 2.0 * s)
