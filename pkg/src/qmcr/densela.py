"""Dense complex linear algebra kernel.

Thin, checked wrappers over numpy/scipy.  Vectorization is row-major
("stack the rows"), which is what ``ndarray.reshape(-1)`` does on a C-ordered
array, so that ``vec(A @ X @ B.T) == kron(A, B) @ vec(X)``.
"""

import warnings
from typing import NamedTuple, Tuple

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .config import DEFAULT, Tolerances
from .errors import BranchCut, DimensionMismatch, NoConvergence, SingularMatrix


def as_matrix(a, name="matrix"):
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-d, got shape {m.shape}")
    return m


def _square(a, name="matrix"):
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {m.shape}")
    return m


def dagger(a):
    return np.conj(np.asarray(a)).T


def kron(a, b):
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def vec(a):
    """Row-stacking vectorization."""
    return np.asarray(a).reshape(-1)


def unvec(v, rows, cols=None):
    cols = rows if cols is None else cols
    v = np.asarray(v)
    if v.size != rows * cols:
        raise DimensionMismatch(f"cannot unvec length {v.size} into {rows}x{cols}")
    return v.reshape(rows, cols)


class SolveInfo(NamedTuple):
    condition: float
    residual: float


def _gecon(lu, anorm):
    gecon = lapack.get_lapack_funcs("gecon", (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    if info != 0:
        return 0.0
    return rcond


def solve(a, b, tol: Tolerances = DEFAULT, return_info=False):
    """Solve ``a @ x = b`` by LU with partial pivoting.

    Raises SingularMatrix when the 1-norm condition estimate exceeds
    ``tol.singular_condition``.  One step of iterative refinement is applied
    when the relative residual is above ``tol.solve_residual``.
    """
    a = _square(a, "A")
    b = np.asarray(b, dtype=complex)
    if b.shape[0] != a.shape[0]:
        raise DimensionMismatch(f"A is {a.shape}, B has {b.shape[0]} rows")
    if a.shape[0] == 0:
        return (b.copy(), SolveInfo(1.0, 0.0)) if return_info else b.copy()
    anorm = np.linalg.norm(a, 1)
    with warnings.catch_warnings():
        # exact zero pivots are reported through the condition estimate below
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(a, check_finite=False)
    rcond = _gecon(lu, anorm) if anorm > 0 else 0.0
    cond = np.inf if rcond == 0.0 else 1.0 / rcond
    if cond > tol.singular_condition:
        raise SingularMatrix(f"condition estimate {cond:.3e} exceeds {tol.singular_condition:.1e}")
    x = sla.lu_solve((lu, piv), b, check_finite=False)
    bnorm = np.linalg.norm(b)
    r = b - a @ x
    res = np.linalg.norm(r)
    if bnorm > 0 and res > tol.solve_residual * bnorm:
        x = x + sla.lu_solve((lu, piv), r, check_finite=False)
        res = np.linalg.norm(b - a @ x)
    if return_info:
        return x, SolveInfo(cond, res / bnorm if bnorm > 0 else res)
    return x


def inv(a, tol: Tolerances = DEFAULT):
    a = _square(a)
    return solve(a, np.eye(a.shape[0], dtype=complex), tol)


def min_singular(a):
    a = np.asarray(a)
    if a.size == 0:
        return np.inf
    return np.linalg.svd(a, compute_uv=False)[-1]


def eig(a, tol: Tolerances = DEFAULT) -> Tuple[np.ndarray, np.ndarray]:
    """Full nonsymmetric eigendecomposition with a residual check.

    Returns ``(w, v)`` with unit-norm eigenvectors in the columns of ``v``.
    """
    a = _square(a)
    try:
        w, v = np.linalg.eig(a)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    scale = max(np.linalg.norm(a, 2), 1e-300)
    res = np.linalg.norm(a @ v - v * w, axis=0)
    if np.any(res > tol.eig_residual * scale):
        raise NoConvergence(f"eigenpair residual {res.max():.3e} above tolerance")
    return w, v


def is_hermitian(a, atol=1e-10):
    a = np.asarray(a)
    return a.shape[0] == a.shape[1] and np.allclose(a, dagger(a), atol=atol, rtol=0)


def hermitize(a):
    a = np.asarray(a)
    return 0.5 * (a + dagger(a))


def psd_sqrt(a):
    """Positive square root of a Hermitian positive semidefinite matrix."""
    w, v = np.linalg.eigh(hermitize(a))
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ dagger(v)


def _on_cut(w, scale, tol):
    # eigenvalues on the closed negative real axis, zero excepted
    eps = tol.branch_cut * max(scale, 1.0)
    neg = (w.real < -eps) & (np.abs(w.imag) <= eps)
    return bool(np.any(neg))


def _denman_beavers(m, tol):
    n = m.shape[0]
    y = m.copy()
    z = np.eye(n, dtype=complex)
    for _ in range(tol.denman_beavers_maxiter):
        # determinant scaling speeds up the early iterations
        _, logdet = np.linalg.slogdet(y @ z)
        mu = np.exp(-logdet / (2 * n))
        yi = np.linalg.inv(mu * y)
        zi = np.linalg.inv(mu * z)
        y_new = 0.5 * (mu * y + zi)
        z_new = 0.5 * (mu * z + yi)
        done = np.linalg.norm(y_new - y) <= 1e-15 * np.linalg.norm(y_new)
        y, z = y_new, z_new
        if done:
            break
    return y


def principal_sqrt(m, tol: Tolerances = DEFAULT):
    """Principal square root (spectrum in the open right half-plane).

    Hermitian input goes through ``eigh``.  Otherwise the eigendecomposition
    is used when the eigenvector matrix is well conditioned, with
    Denman-Beavers iteration as the fallback.  Zero eigenvalues map to zero
    on the diagonalizable path; eigenvalues on the negative real axis raise
    BranchCut.
    """
    m = _square(m)
    n = m.shape[0]
    if n == 0:
        return m.copy()
    scale = np.linalg.norm(m, 2)
    if is_hermitian(m, atol=1e-14 * max(scale, 1.0)):
        w, v = np.linalg.eigh(hermitize(m))
        if np.any(w < -tol.branch_cut * max(scale, 1.0)):
            raise BranchCut(f"negative eigenvalue {w.min():.3e}")
        s = (v * np.sqrt(np.clip(w, 0.0, None))) @ dagger(v)
        return s
    w, v = np.linalg.eig(m)
    if _on_cut(w, scale, tol):
        raise BranchCut("eigenvalue on the negative real axis")
    target = tol.sqrt_residual * max(scale, 1e-300)
    if np.linalg.cond(v) < tol.sqrt_eigvec_condition:
        s = v @ np.diag(np.sqrt(w)) @ np.linalg.inv(v)
        if np.linalg.norm(s @ s - m, 2) <= target:
            return s
    if min_singular(m) <= tol.branch_cut * max(scale, 1.0):
        raise NoConvergence("singular, non-diagonalizable matrix has no stable principal root here")
    s = _denman_beavers(m, tol)
    if np.linalg.norm(s @ s - m, 2) > target:
        raise NoConvergence("Denman-Beavers iteration did not reach the residual target")
    return s


def trace_norm(m):
    """Sum of singular values."""
    m = np.asarray(m)
    if is_hermitian(m, atol=0.0):
        return float(np.abs(np.linalg.eigvalsh(m)).sum())
    return float(np.linalg.svd(m, compute_uv=False).sum())


def orthonormal_basis(a, cutoff=1e-10):
    """Orthonormal basis of the column span of ``a`` (rank-revealing SVD)."""
    a = np.asarray(a, dtype=complex)
    if a.size == 0:
        return np.zeros((a.shape[0], 0), dtype=complex)
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((a.shape[0], 0), dtype=complex)
    r = int(np.sum(s > cutoff * max(1.0, s[0])))
    return u[:, :r]
