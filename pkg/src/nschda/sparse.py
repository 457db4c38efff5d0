"""Sparse solves with an explicit residual contract.

All systems in the time stepper are solved with a sparse direct
factorization (SuperLU through scipy); the result is deterministic for
identical inputs, which the twin experiments rely on.  Every solve checks
the residual ||A x - b||_2 <= tol * max(||b||_2, 1e-30) and performs one
step of iterative refinement before giving up with :class:`NonConvergence`.
A singular factorization raises :class:`SingularSystem`.  Both errors carry
a human-readable context string naming the substep and time step.

The zero-mean Poisson solve augments the singular Neumann stiffness matrix
with a Lagrange multiplier row/column holding the basis integrals, which
pins the mean of the solution to zero and absorbs any incompatible
component of the right-hand side.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DEFAULT_TOL = 1e-10

__all__ = [
    "DEFAULT_TOL",
    "SolverError",
    "NonConvergence",
    "SingularSystem",
    "LUSolver",
    "ZeroMeanSolver",
    "solve",
    "solve_zero_mean",
    "block2x2",
    "finalize",
    "export_matrix_market",
]


class SolverError(RuntimeError):
    """Base class for linear solver failures."""

    def __init__(self, message: str, context: str = ""):
        self.context = context
        super().__init__(f"{message}" + (f" [{context}]" if context else ""))


class NonConvergence(SolverError):
    """Residual contract not met even after iterative refinement."""


class SingularSystem(SolverError):
    """The factorization reported a singular matrix."""


def finalize(a) -> sp.csr_matrix:
    """Canonical CSR: sorted indices, duplicates summed, no stored zeros."""
    a = sp.csr_matrix(a)
    a.sum_duplicates()
    a.eliminate_zeros()
    a.sort_indices()
    return a


def block2x2(a11, a12, a21, a22) -> sp.csr_matrix:
    """Assemble a 2x2 block matrix (None for an empty block)."""
    return sp.bmat([[a11, a12], [a21, a22]], format="csr")


class LUSolver:
    """Sparse LU factorization reused across right-hand sides."""

    def __init__(self, a, context: str = ""):
        self.a = sp.csr_matrix(a)
        self.context = context
        try:
            self._lu = spla.splu(self.a.tocsc())
        except RuntimeError as exc:  # SuperLU signals singularity this way
            raise SingularSystem(str(exc), context) from exc

    def solve(self, b: np.ndarray, tol: float = DEFAULT_TOL, context: str = "") -> np.ndarray:
        ctx = context or self.context
        b = np.asarray(b, dtype=float)
        x = self._lu.solve(b)
        bound = tol * max(np.linalg.norm(b), 1e-30)
        r = b - self.a @ x
        if np.linalg.norm(r) > bound:
            x = x + self._lu.solve(r)  # one step of iterative refinement
            r = b - self.a @ x
            if not np.linalg.norm(r) <= bound:  # catches NaN as well
                raise NonConvergence(
                    f"residual {np.linalg.norm(r):.3e} above {bound:.3e}", ctx
                )
        return x


def solve(a, b: np.ndarray, tol: float = DEFAULT_TOL, context: str = "") -> np.ndarray:
    """Direct solve honoring the residual contract."""
    return LUSolver(a, context).solve(b, tol)


class ZeroMeanSolver:
    """Poisson solves on the zero-mean pressure space.

    Factors [[K, m], [m^T, 0]] once, where ``m`` holds the integrals of the
    basis functions; repeated right-hand sides then cost one
    backsubstitution each.  Returns the solution and the multiplier.
    """

    def __init__(self, k, mean_vector: np.ndarray, context: str = ""):
        m = np.asarray(mean_vector, dtype=float)
        n = k.shape[0]
        if m.shape != (n,):
            raise ValueError("mean vector length does not match the matrix")
        col = sp.csr_matrix(m.reshape(n, 1))
        saddle = sp.bmat([[k, col], [col.T, None]], format="csr")
        self.n = n
        self.mean_vector = m
        self._lu = LUSolver(saddle, context)

    def solve(self, b: np.ndarray, tol: float = DEFAULT_TOL, context: str = ""):
        rhs = np.concatenate([b, [0.0]])
        y = self._lu.solve(rhs, tol, context)
        return y[: self.n], float(y[self.n])


def solve_zero_mean(k, mean_vector: np.ndarray, b: np.ndarray,
                    tol: float = DEFAULT_TOL, context: str = ""):
    """One-shot zero-mean solve; see :class:`ZeroMeanSolver`."""
    return ZeroMeanSolver(k, mean_vector, context).solve(b, tol)


def export_matrix_market(a, path) -> None:
    """Write a matrix in Matrix Market format (exchange/debugging aid)."""
    from scipy.io import mmwrite

    mmwrite(str(path), sp.coo_matrix(a))
