"""Numerical tolerances shared by every module.

All thresholds live in one frozen record so that a caller can tighten or
loosen them in one place and pass the record down explicitly.
"""

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    # dense linear algebra
    solve_residual: float = 1e-12
    singular_condition: float = 1e14
    eig_residual: float = 1e-10
    sqrt_residual: float = 1e-10
    sqrt_eigvec_condition: float = 1e8
    branch_cut: float = 1e-12
    denman_beavers_maxiter: int = 100

    # channel checks
    tp: float = 1e-9
    cp_eigenvalue: float = 1e-9
    fixed_point_cluster: float = 1e-9
    faithful: float = 1e-10
    rank_cutoff: float = 1e-10
    hermitian: float = 1e-10
    density_trace: float = 1e-10
    idempotent: float = 1e-10

    # monitored recurrence
    resolvent_singular: float = 1e-10
    recurrence_deficit: float = 1e-7
    tau_divergence: float = 1e12
    subspace_leak: float = 1e-9
    invariant_residual: float = 1e-8
    extrapolation_kmin: int = 8
    extrapolation_kmax: int = 40

    # splitting
    reconstruction: float = 1e-10
    rank1_match: float = 1e-8
    rule_check: float = 1e-7

    # one-dimensional chains
    invertible: float = 1e-10
    truncation_tol: float = 1e-6
    truncation_nmax: int = 4096

    def with_(self, **kw):
        """Return a copy with some fields replaced."""
        return replace(self, **kw)


DEFAULT = Tolerances()
