"""CP maps in Kraus form and their superoperator matrices.

A CP map ``rho -> sum_i B_i rho B_i^*`` is stored as its list of Kraus
matrices.  Its matrix on row-major vectorized operators is
``sum_i kron(B_i, conj(B_i))``.
"""

from dataclasses import dataclass
from typing import Iterable, List, Sequence

import numpy as np

from . import densela as la
from .config import DEFAULT, Tolerances
from .errors import DimensionMismatch, InvalidWeights, NoInvariantState


class KrausMap:
    """CP map on d x d matrices given by Kraus operators.

    An empty Kraus list is the zero map.  Instances are immutable; the
    superoperator matrix is computed lazily and cached.
    """

    __slots__ = ("kraus", "dim", "_matrix")

    def __init__(self, kraus: Iterable, dim: int = None):
        mats = tuple(np.array(k, dtype=complex) for k in kraus)
        if dim is None:
            if not mats:
                raise DimensionMismatch("dim is required for an empty Kraus list")
            dim = mats[0].shape[0]
        for k in mats:
            if k.shape != (dim, dim):
                raise DimensionMismatch(f"Kraus operator of shape {k.shape}, expected {(dim, dim)}")
            k.setflags(write=False)
        self.kraus = mats
        self.dim = int(dim)
        self._matrix = None

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            d = self.dim
            m = np.zeros((d * d, d * d), dtype=complex)
            for b in self.kraus:
                m += np.kron(b, b.conj())
            m.setflags(write=False)
            self._matrix = m
        return self._matrix

    def apply(self, rho):
        rho = np.asarray(rho, dtype=complex)
        out = np.zeros_like(rho)
        for b in self.kraus:
            out += b @ rho @ b.conj().T
        return out

    __call__ = apply

    def scaled(self, c: float) -> "KrausMap":
        """The map c*Phi for c >= 0."""
        if c < 0:
            raise InvalidWeights("CP maps can only be scaled by nonnegative numbers")
        s = np.sqrt(c)
        return KrausMap([s * b for b in self.kraus if c > 0], self.dim)

    def __add__(self, other: "KrausMap") -> "KrausMap":
        if other.dim != self.dim:
            raise DimensionMismatch("cannot add maps of different dimension")
        return KrausMap(self.kraus + other.kraus, self.dim)

    def __matmul__(self, other: "KrausMap") -> "KrausMap":
        return compose(self, other)

    @property
    def is_zero(self):
        return all(not np.any(b) for b in self.kraus)

    def __repr__(self):
        return f"KrausMap(dim={self.dim}, n_kraus={len(self.kraus)})"


@dataclass(frozen=True)
class SuperOperator:
    """Matrix of a linear map acting on vec(rho)."""

    matrix: np.ndarray
    dim: int

    def apply(self, rho):
        rho = np.asarray(rho, dtype=complex)
        return la.unvec(self.matrix @ la.vec(rho), self.dim, self.dim)

    def __matmul__(self, other: "SuperOperator") -> "SuperOperator":
        return SuperOperator(self.matrix @ other.matrix, self.dim)


def _matrix_of(phi):
    if isinstance(phi, KrausMap):
        return phi.matrix, phi.dim
    if isinstance(phi, SuperOperator):
        return np.asarray(phi.matrix), phi.dim
    m = np.asarray(phi, dtype=complex)
    d = int(round(np.sqrt(m.shape[0])))
    if m.shape != (d * d, d * d):
        raise DimensionMismatch(f"superoperator of shape {m.shape} is not d^2 x d^2")
    return m, d


def to_superop(phi: KrausMap) -> SuperOperator:
    return SuperOperator(np.array(phi.matrix), phi.dim)


def dual(phi: KrausMap) -> KrausMap:
    """Heisenberg-picture map X -> sum B_i^* X B_i."""
    return KrausMap([la.dagger(b) for b in phi.kraus], phi.dim)


def identity_channel(d: int) -> KrausMap:
    return KrausMap([np.eye(d)], d)


def unitary_channel(u) -> KrausMap:
    return KrausMap([u])


def amplitude_damping(gamma: float) -> KrausMap:
    k0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]])
    k1 = np.array([[0, np.sqrt(gamma)], [0, 0]])
    return KrausMap([k0, k1])


def depolarizing(p: float, d: int = 2) -> KrausMap:
    """rho -> (1-p) rho + p Tr(rho) I/d, via the Weyl basis."""
    if not 0 <= p <= 1:
        raise InvalidWeights("depolarizing parameter outside [0, 1]")
    w = np.exp(2j * np.pi / d)
    shift = np.roll(np.eye(d), 1, axis=0)
    clock = np.diag(w ** np.arange(d))
    ops = []
    for a in range(d):
        for b in range(d):
            u = np.linalg.matrix_power(shift, a) @ np.linalg.matrix_power(clock, b)
            c = 1 - p + p / d**2 if a == b == 0 else p / d**2
            if c > 0:
                ops.append(np.sqrt(c) * u)
    return KrausMap(ops, d)


def kraus_sum(phi: KrausMap, adjoint=False):
    """sum B^* B (or sum B B^* when ``adjoint``)."""
    s = np.zeros((phi.dim, phi.dim), dtype=complex)
    for b in phi.kraus:
        s += b @ b.conj().T if adjoint else b.conj().T @ b
    return s


def is_trace_preserving(phi, tol: Tolerances = DEFAULT) -> bool:
    if isinstance(phi, KrausMap):
        resid = kraus_sum(phi) - np.eye(phi.dim)
    else:
        m, d = _matrix_of(phi)
        # Tr(Phi(rho)) = vec(I)^T Phi vec(rho)
        resid = la.unvec(la.vec(np.eye(d)) @ m, d, d) - np.eye(d)
    return bool(np.max(np.abs(resid), initial=0.0) <= tol.tp)


def is_unital(phi, tol: Tolerances = DEFAULT) -> bool:
    if isinstance(phi, KrausMap):
        resid = kraus_sum(phi, adjoint=True) - np.eye(phi.dim)
    else:
        m, d = _matrix_of(phi)
        resid = la.unvec(m @ la.vec(np.eye(d)), d, d) - np.eye(d)
    return bool(np.max(np.abs(resid), initial=0.0) <= tol.tp)


def choi(phi) -> np.ndarray:
    """Choi matrix sum_{ab} Phi(|a><b|) (x) |a><b| by reshuffling the superoperator.

    Index layout: ``J[(a, c), (b, d)] = S[(a, b), (c, d)]``.
    """
    m, d = _matrix_of(phi)
    return m.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)


def is_completely_positive(phi, tol: Tolerances = DEFAULT) -> bool:
    j = choi(phi)
    if not la.is_hermitian(j, atol=1e-9):
        return False
    return bool(np.linalg.eigvalsh(la.hermitize(j)).min() >= -tol.cp_eigenvalue)


def kraus_from_superop(phi, tol: Tolerances = DEFAULT) -> KrausMap:
    """Kraus form of a CP superoperator from the spectral decomposition of its Choi matrix."""
    m, d = _matrix_of(phi)
    j = la.hermitize(choi(m))
    w, v = np.linalg.eigh(j)
    scale = max(np.abs(w).max(initial=0.0), 1.0)
    if w.size and w.min() < -tol.cp_eigenvalue * scale:
        raise ValueError(f"map is not completely positive (Choi eigenvalue {w.min():.3e})")
    keep = w > tol.rank_cutoff * scale
    ops = [np.sqrt(wk) * v[:, k].reshape(d, d) for k, wk in zip(np.flatnonzero(keep), w[keep])]
    return KrausMap(ops, d)


def compose(phi: KrausMap, psi: KrausMap) -> KrausMap:
    """phi after psi."""
    if phi.dim != psi.dim:
        raise DimensionMismatch("cannot compose maps of different dimension")
    return KrausMap([a @ b for a in phi.kraus for b in psi.kraus], phi.dim)


def convex_combine(weights: Sequence[float], maps: Sequence[KrausMap]) -> KrausMap:
    weights = np.asarray(weights, dtype=float)
    if len(weights) != len(maps) or not maps:
        raise InvalidWeights("need one weight per map")
    if np.any(weights < 0) or abs(weights.sum() - 1) > 1e-12:
        raise InvalidWeights("weights must be nonnegative and sum to one")
    d = maps[0].dim
    ops = []
    for w, m in zip(weights, maps):
        if m.dim != d:
            raise DimensionMismatch("maps of different dimension")
        if w > 0:
            ops.extend(np.sqrt(w) * b for b in m.kraus)
    return KrausMap(ops, d)


def fixed_space(phi, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Columns span the (numerical) kernel of Phi - I."""
    m, _ = _matrix_of(phi)
    n = m.shape[0]
    _, s, vh = np.linalg.svd(m - np.eye(n))
    return vh[s <= tol.fixed_point_cluster].conj().T


def _hermitian_basis(vectors, d):
    # real span of hermitian parts of the kernel vectors
    cands = []
    for v in vectors.T:
        x = la.unvec(v, d, d)
        cands.append(la.hermitize(x))
        cands.append(la.hermitize(-1j * x))
    if not cands:
        return []
    real = np.array([np.concatenate([h.real.ravel(), h.imag.ravel()]) for h in cands])
    u, s, vh = np.linalg.svd(real, full_matrices=False)
    r = int(np.sum(s > 1e-8 * s[0]))
    out = []
    for row in vh[:r]:
        h = row[: d * d].reshape(d, d) + 1j * row[d * d:].reshape(d, d)
        out.append(la.hermitize(h))
    return out


def invariant_states(phi, tol: Tolerances = DEFAULT) -> List[np.ndarray]:
    """Spanning set of invariant density matrices of a trace preserving map."""
    m, d = _matrix_of(phi)
    kernel = fixed_space(m, tol)
    states = []
    for h in _hermitian_basis(kernel, d):
        w, v = np.linalg.eigh(h)
        for part in ((v * np.clip(w, 0, None)) @ la.dagger(v), (v * np.clip(-w, 0, None)) @ la.dagger(v)):
            t = np.trace(part).real
            if t > 1e-8:
                states.append(part / t)
    # keep a linearly independent subset, largest-rank candidates last
    chosen, stack = [], np.zeros((0, d * d), dtype=complex)
    for rho in states:
        trial = np.vstack([stack, la.vec(rho)[None, :]])
        if np.linalg.matrix_rank(trial, tol=1e-8) > stack.shape[0]:
            resid = la.trace_norm(la.unvec(m @ la.vec(rho), d, d) - rho)
            if resid <= 10 * tol.fixed_point_cluster:
                chosen.append(rho)
                stack = trial
        if len(chosen) == kernel.shape[1]:
            break
    if not chosen:
        raise NoInvariantState("no invariant state found within tolerance")
    return chosen


def is_irreducible(phi, tol: Tolerances = DEFAULT) -> bool:
    """Unique invariant state which is faithful."""
    m, d = _matrix_of(phi)
    w = np.linalg.eigvals(m)
    dist = np.sort(np.abs(w - 1))
    if dist[0] > tol.fixed_point_cluster or (dist.size > 1 and dist[1] <= tol.fixed_point_cluster):
        return False
    states = invariant_states(m, tol)
    if len(states) != 1:
        return False
    return bool(np.linalg.eigvalsh(states[0]).min() >= tol.faithful)


def relevant_subspace(phi: KrausMap, h0, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Isometry onto the smallest Kraus-invariant subspace containing ``h0``.

    ``h0`` is a d x k matrix whose columns span the subspace, or any object
    with an ``isometry`` attribute.
    """
    v = np.asarray(getattr(h0, "isometry", h0), dtype=complex)
    w = la.orthonormal_basis(v, tol.rank_cutoff)
    if w.shape[1] == 0:
        raise ValueError("initial subspace is zero")
    for _ in range(phi.dim + 1):
        grown = np.hstack([w] + [b @ w for b in phi.kraus])
        w2 = la.orthonormal_basis(grown, tol.rank_cutoff)
        if w2.shape[1] == w.shape[1]:
            return w2
        w = w2
    return w


def restrict(phi: KrausMap, isometry) -> KrausMap:
    """Compress Kraus operators to an invariant subspace: V^* B V."""
    v = np.asarray(isometry, dtype=complex)
    return KrausMap([la.dagger(v) @ b @ v for b in phi.kraus], v.shape[1])


def is_density(rho, tol: Tolerances = DEFAULT) -> bool:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        return False
    if not la.is_hermitian(rho, atol=tol.hermitian):
        return False
    if abs(np.trace(rho) - 1) > tol.density_trace:
        return False
    return bool(np.linalg.eigvalsh(la.hermitize(rho)).min() >= -tol.hermitian)
