"""Finite element solver for a coupled Navier-Stokes-Cahn-Hilliard system
with a transported auxiliary vector field, plus a nudging-based data
assimilation layer driven by coarse-mesh observations.

Subpackage map:

* ``mesh``         -- uniform nested triangulations of the unit square
* ``fem``          -- P1/P2 Lagrange spaces, quadrature, assembly, norms
* ``sparse``       -- sparse linear algebra front end (direct solves,
                      zero-mean Poisson solves)
* ``model``        -- phase-dependent coefficients and double-well potential
* ``observation``  -- coarse-mesh interpolation operator I_H
* ``scheme``       -- the four-substep time splitting and its energy ledger
* ``diagnostics``  -- energies, synchronization errors, phase mass
* ``config``       -- run configuration parsing and experiment presets
* ``experiments``  -- twin-run / perturbation-pair drivers and CSV output
* ``cli``          -- command line entry point
"""

__version__ = "0.1.0"
