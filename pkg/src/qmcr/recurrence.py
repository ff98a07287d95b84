"""Monitored recurrence: Schur functions, return probabilities and return times.

Every computation is carried out on a finite vector space with

* ``phi``  the superoperator of the dynamics,
* ``pp``, ``qq``  the superprojectors ``P.P`` and ``Q.Q``,
* ``t``  the trace functional (``t @ v`` is the trace of the operator ``v``).

For a Kraus map this space is the vectorized operator space of a Hilbert
space; for a TOM with an admissible subspace it is the stacked space of
per-site blocks.  When computing return statistics the space is first cut
down to the minimal enclosure of the return subspace, which is exact for
states supported there and removes invariant pieces that never meet it.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from . import channels as ch
from . import densela as la
from . import tom as tm
from .channels import KrausMap, SuperOperator
from .config import DEFAULT, Tolerances
from .errors import (
    DimensionMismatch,
    NonIdempotent,
    NotInvariant,
    NotIrreducible,
    NotUnitalOnEnclosure,
    ResolventSingular,
    SingularMatrix,
    StateOutsideSubspace,
)
from .tom import Tom, TomDensity

INF = float("inf")


# --------------------------------------------------------------------------
# return subspaces


def _check_projector(p, tol, what="projector"):
    p = la.as_matrix(p)
    if p.shape[0] != p.shape[1]:
        raise DimensionMismatch(f"{what} must be square")
    if not la.is_hermitian(p, tol.idempotent) or np.max(np.abs(p @ p - p), initial=0.0) > tol.idempotent:
        raise NonIdempotent(f"{what} is not a Hermitian idempotent")
    return p


@dataclass(frozen=True)
class General:
    """Return subspace given by an isometry ``V`` (orthonormal columns)."""

    isometry: np.ndarray

    def __post_init__(self):
        v = la.as_matrix(self.isometry, "isometry")
        if v.shape[1] == 0:
            raise ValueError("empty subspace")
        if np.max(np.abs(la.dagger(v) @ v - np.eye(v.shape[1]))) > DEFAULT.idempotent:
            raise NonIdempotent("isometry columns are not orthonormal")
        object.__setattr__(self, "isometry", v)

    @classmethod
    def span(cls, *vectors, cutoff=1e-10):
        m = np.column_stack([np.asarray(v, dtype=complex).reshape(-1) for v in vectors])
        return cls(la.orthonormal_basis(m, cutoff))

    @classmethod
    def from_projector(cls, p, tol: Tolerances = DEFAULT):
        p = _check_projector(p, tol)
        return cls(la.orthonormal_basis(p, tol.rank_cutoff))

    @property
    def dim(self):
        return self.isometry.shape[0]

    @property
    def rank(self):
        return self.isometry.shape[1]

    @property
    def projector(self):
        v = self.isometry
        return v @ la.dagger(v)


@dataclass(frozen=True)
class Admissible:
    """Per-site projectors ``P_i`` on the internal space; missing sites are zero."""

    projectors: Mapping

    def __post_init__(self):
        clean = {k: _check_projector(p, DEFAULT, f"projector at site {k!r}") for k, p in self.projectors.items()}
        if not clean or all(np.trace(p).real < 0.5 for p in clean.values()):
            raise ValueError("empty subspace")
        object.__setattr__(self, "projectors", clean)

    @classmethod
    def sites(cls, t: Tom, labels):
        eye = np.eye(t.dim, dtype=complex)
        return cls({lab: eye for lab in labels})

    @classmethod
    def states(cls, vectors: Mapping):
        """One pure internal state (or a list of spanning vectors) per site."""
        out = {}
        for lab, v in vectors.items():
            v = np.asarray(v, dtype=complex)
            basis = la.orthonormal_basis(v.reshape(v.shape[0], -1))
            out[lab] = basis @ la.dagger(basis)
        return cls(out)

    @property
    def rank(self):
        return int(round(sum(np.trace(p).real for p in self.projectors.values())))

    def ordered(self, t: Tom):
        z = np.zeros((t.dim, t.dim), dtype=complex)
        for k in self.projectors:
            if k not in t._index:
                raise KeyError(f"unknown site {k!r}")
        return [self.projectors.get(v, z) for v in t.vertices]


def as_subspace(h0):
    if isinstance(h0, (General, Admissible)):
        return h0
    a = np.asarray(h0, dtype=complex)
    if a.ndim == 1:
        return General.span(a / np.linalg.norm(a))
    if a.ndim == 2 and a.shape[0] == a.shape[1] and la.is_hermitian(a) and np.allclose(a @ a, a, atol=1e-10):
        return General.from_projector(a)
    return General(a)


@dataclass
class MonitorProjectors:
    P: np.ndarray
    Q: np.ndarray
    pp: np.ndarray
    qq: np.ndarray


def projectors(h0, context=None, tol: Tolerances = DEFAULT) -> MonitorProjectors:
    """Hilbert-space projectors and their superprojectors.

    For an admissible subspace ``context`` must be the Tom; ``pp``/``qq`` then
    act on the stacked block space and ``P``/``Q`` on H (x) S.
    """
    h0 = as_subspace(h0)
    if isinstance(h0, General):
        p = h0.projector
        q = np.eye(p.shape[0]) - p
        return MonitorProjectors(p, q, la.kron(p, p.conj()), la.kron(q, q.conj()))
    if not isinstance(context, Tom):
        raise TypeError("an admissible subspace needs the Tom as context")
    ps = h0.ordered(context)
    eye = np.eye(context.dim)
    qs = [eye - p for p in ps]
    pp = sla.block_diag(*[la.kron(p, p.conj()) for p in ps])
    qq = sla.block_diag(*[la.kron(q, q.conj()) for q in qs])
    return MonitorProjectors(tm.from_site_blocks(ps), tm.from_site_blocks(qs), pp, qq)


# --------------------------------------------------------------------------
# working spaces


@dataclass
class _Space:
    phi: np.ndarray
    pp: np.ndarray
    qq: np.ndarray
    t: np.ndarray
    encode: Callable
    decode: Callable
    leak: Callable
    rank_h0: int
    dim_enclosure: int

    @property
    def size(self):
        return self.phi.shape[0]


def _as_operator(rho, dim):
    r = np.asarray(rho, dtype=complex)
    if r.ndim == 1:
        r = np.outer(r, r.conj())
    if r.shape != (dim, dim):
        raise DimensionMismatch(f"state of shape {r.shape}, expected {(dim, dim)}")
    return r


def _kraus_space(phi, h0: General, restrict: bool, tol: Tolerances) -> _Space:
    p_full = h0.projector
    d = p_full.shape[0]
    if isinstance(phi, KrausMap):
        if phi.dim != d:
            raise DimensionMismatch(f"channel dim {phi.dim} vs subspace dim {d}")
        v = ch.relevant_subspace(phi, h0.isometry, tol) if restrict else np.eye(d, dtype=complex)
        kraus = [la.dagger(v) @ b @ v for b in phi.kraus]
        mat = sum((np.kron(b, b.conj()) for b in kraus), np.zeros((v.shape[1] ** 2,) * 2, complex))
    else:
        mat = ch._matrix_of(phi)[0]
        if mat.shape != (d * d, d * d):
            raise DimensionMismatch("superoperator does not match the subspace dimension")
        v = np.eye(d, dtype=complex)
    m = v.shape[1]
    p = la.dagger(v) @ p_full @ v
    q = np.eye(m) - p
    vh = la.dagger(v)
    q_full = np.eye(d) - p_full

    def encode(rho):
        r = _as_operator(rho, d)
        return la.vec(vh @ r @ v)

    def decode(x):
        return v @ la.unvec(x, m) @ vh

    def leak(rho):
        r = _as_operator(rho, d)
        return la.trace_norm(q_full @ r @ q_full)

    return _Space(mat, la.kron(p, p.conj()), la.kron(q, q.conj()), la.vec(np.eye(m, dtype=complex)),
                  encode, decode, leak, h0.rank, m)


def _site_enclosure(t: Tom, ps, tol):
    bases = [la.orthonormal_basis(p, tol.rank_cutoff) for p in ps]
    while True:
        grown = False
        for (i, j), phi in t.blocks.items():
            a, b = t.index(i), t.index(j)
            if bases[b].shape[1] == 0:
                continue
            imgs = [bk @ bases[b] for bk in phi.kraus]
            new = la.orthonormal_basis(np.hstack([bases[a]] + imgs), tol.rank_cutoff)
            if new.shape[1] > bases[a].shape[1]:
                bases[a] = new
                grown = True
        if not grown:
            return bases


def _blocks_of(rho, t: Tom):
    if isinstance(rho, TomDensity):
        return rho.ordered(t)
    if isinstance(rho, (list, tuple)):
        if len(rho) != t.n:
            raise DimensionMismatch("need one block per vertex")
        return [np.asarray(b, dtype=complex) for b in rho]
    r = _as_operator(rho, t.n * t.dim)
    return tm.site_blocks(r, t.n, t.dim)


def _block_space(t: Tom, h0: Admissible, restrict: bool, tol: Tolerances) -> _Space:
    ps = h0.ordered(t)
    d = t.dim
    if restrict:
        bases = _site_enclosure(t, ps, tol)
    else:
        bases = [np.eye(d, dtype=complex) for _ in ps]
    dims = [b.shape[1] for b in bases]
    offs = np.concatenate([[0], np.cumsum([m * m for m in dims])]).astype(int)
    size = int(offs[-1])
    mat = np.zeros((size, size), dtype=complex)
    for (i, j), phi in t.blocks.items():
        a, b = t.index(i), t.index(j)
        if dims[a] == 0 or dims[b] == 0:
            continue
        blk = np.zeros((dims[a] ** 2, dims[b] ** 2), dtype=complex)
        for bk in phi.kraus:
            r = la.dagger(bases[a]) @ bk @ bases[b]
            blk += np.kron(r, r.conj())
        mat[offs[a]:offs[a + 1], offs[b]:offs[b + 1]] = blk
    pp = np.zeros((size, size), dtype=complex)
    qq = np.zeros((size, size), dtype=complex)
    tv = np.zeros(size, dtype=complex)
    for k, (p, v) in enumerate(zip(ps, bases)):
        m = dims[k]
        if m == 0:
            continue
        pr = la.dagger(v) @ p @ v
        qr = np.eye(m) - pr
        sl = slice(offs[k], offs[k + 1])
        pp[sl, sl] = np.kron(pr, pr.conj())
        qq[sl, sl] = np.kron(qr, qr.conj())
        tv[sl] = la.vec(np.eye(m))
    eye = np.eye(d)

    def encode(rho):
        blocks = _blocks_of(rho, t)
        return np.concatenate([la.vec(la.dagger(v) @ b @ v) for b, v in zip(blocks, bases)])

    def decode(x):
        out = []
        for k, v in enumerate(bases):
            m = dims[k]
            out.append(v @ la.unvec(x[offs[k]:offs[k + 1]], m) @ la.dagger(v) if m else np.zeros((d, d), complex))
        return tm.from_site_blocks(out)

    def leak(rho):
        blocks = _blocks_of(rho, t)
        return sum(la.trace_norm((eye - p) @ b @ (eye - p)) for b, p in zip(blocks, ps))

    return _Space(mat, pp, qq, tv, encode, decode, leak, h0.rank, sum(dims))


def _space(system, h0, restrict=True, tol: Tolerances = DEFAULT) -> _Space:
    h0 = as_subspace(h0)
    if isinstance(system, Tom):
        if isinstance(h0, Admissible):
            return _block_space(system, h0, restrict, tol)
        return _kraus_space(tm.embed_cptp(system), h0, restrict, tol)
    if isinstance(h0, Admissible):
        raise TypeError("admissible subspaces need a Tom")
    return _kraus_space(system, h0, restrict, tol)


# --------------------------------------------------------------------------
# Schur functions


def _select(mask_diag):
    d = np.real(np.diag(mask_diag))
    if np.all((np.abs(d) < 1e-14) | (np.abs(d - 1) < 1e-14)) and np.allclose(mask_diag, np.diag(np.diag(mask_diag))):
        return np.flatnonzero(d > 0.5)
    return None


class SchurFn:
    """Schur function of a system for a return subspace.

    ``f(z) = (I-qq) phi (I - z qq phi)^-1 (I-qq)`` and ``F(z) = pp f(z) pp``.
    Values are cached per ``z``.
    """

    def __init__(self, system, h0, tol: Tolerances = DEFAULT, restrict=False):
        self.tol = tol
        self.space = _space(system, h0, restrict=restrict, tol=tol)
        s = self.space
        self._a = s.qq @ s.phi
        self._eye = np.eye(s.size, dtype=complex)
        self._cache: Dict[complex, np.ndarray] = {}

    @property
    def size(self):
        return self.space.size

    def resolvent(self, z):
        z = complex(z)
        if z not in self._cache:
            m = self._eye - z * self._a
            if abs(z) >= 1 - 1e-15 and la.min_singular(m) < self.tol.resolvent_singular:
                raise ResolventSingular(f"I - z qq phi is numerically singular at z={z}")
            try:
                self._cache[z] = la.solve(m, self._eye, self.tol)
            except SingularMatrix as exc:
                raise ResolventSingular(str(exc)) from exc
        return self._cache[z]

    def f(self, z, compressed=False):
        s = self.space
        c = self._eye - s.qq
        val = c @ s.phi @ self.resolvent(z) @ c
        return self._compress(val, c) if compressed else val

    def F(self, z, compressed=False):
        s = self.space
        val = s.pp @ s.phi @ self.resolvent(z) @ s.pp
        return self._compress(val, s.pp) if compressed else val

    def dF(self, z, compressed=False):
        s = self.space
        r = self.resolvent(z)
        val = s.pp @ s.phi @ r @ self._a @ r @ s.pp
        return self._compress(val, s.pp) if compressed else val

    @staticmethod
    def _compress(val, proj):
        idx = _select(proj)
        if idx is None:
            return val
        return val[np.ix_(idx, idx)]


def schur_eval(f: SchurFn, z, compressed=False) -> np.ndarray:
    return f.f(z, compressed)


def reduced_schur_eval(f: SchurFn, z, compressed=False) -> np.ndarray:
    return f.F(z, compressed)


def first_return_coeff(f: SchurFn, n: int) -> np.ndarray:
    """``A_n = pp phi (qq phi)^(n-1) pp``."""
    if n < 1:
        raise ValueError("n >= 1")
    s = f.space
    m = s.pp @ s.phi @ np.linalg.matrix_power(f._a, n - 1) @ s.pp
    return m


def _series(space: _Space, v, n_terms):
    a = space.qq @ space.phi
    w = v.copy()
    pis, surv = [], [float(np.real(space.t @ w))]
    for _ in range(n_terms):
        pis.append(float(np.real(space.t @ (space.pp @ (space.phi @ w)))))
        w = a @ w
        surv.append(float(np.real(space.t @ w)))
    return np.array(pis), np.array(surv)


def survival(system, h0, rho, n: int, tol: Tolerances = DEFAULT) -> float:
    """``s_n = Tr((qq phi)^n rho)``."""
    sp = _space(system, h0, restrict=False, tol=tol)
    return float(_series(sp, sp.encode(rho), n)[1][n])


def first_return_series(system, h0, rho, n_terms: int, tol: Tolerances = DEFAULT):
    """First-return probabilities ``pi_1..pi_N`` and survivals ``s_0..s_N``."""
    sp = _space(system, h0, restrict=True, tol=tol)
    return _series(sp, sp.encode(rho), n_terms)


# --------------------------------------------------------------------------
# limits at z = 1


def _aitken_limit(seq):
    """Repeated Aitken acceleration; returns the estimate with the smallest
    successive difference over all acceleration levels."""
    a = np.asarray(seq, dtype=float)
    best, err = a[-1], abs(a[-1] - a[-2]) if a.size > 1 else INF
    level = a
    while level.size >= 3:
        d1 = level[2:] - level[1:-1]
        d2 = level[2:] - 2 * level[1:-1] + level[:-2]
        safe = np.abs(d2) > 1e-300
        nxt = np.where(safe, level[2:] - np.divide(d1 * d1, d2, out=np.zeros_like(d1), where=safe), level[2:])
        if nxt.size >= 2:
            diffs = np.abs(np.diff(nxt))
            k = int(np.argmin(diffs))
            if diffs[k] < err:
                best, err = nxt[k + 1], diffs[k]
        level = nxt
    diffs = np.abs(np.diff(a))
    if diffs.size:
        k = int(np.argmin(diffs))
        if diffs[k] < err:
            best, err = a[k + 1], diffs[k]
    return float(best), float(err)


@dataclass
class _Limit:
    pi: float
    tau: float
    vector: np.ndarray  # F(1) v
    method: str
    min_singular: float
    extrapolation_error: float = 0.0


def _direct(space, v, tol, need_tau=True):
    eye = np.eye(space.size, dtype=complex)
    a = space.qq @ space.phi
    m = eye - a
    smin = la.min_singular(m)
    if smin >= tol.resolvent_singular:
        rv = la.solve(m, v, tol)
        out = space.pp @ (space.phi @ rv)
        pi = float(np.real(space.t @ out))
        tau = float(np.real(space.t @ rv)) if pi >= 1 - tol.recurrence_deficit else INF
        return _Limit(pi, tau, out, "direct-solve", smin)
    return _Limit(np.nan, np.nan, None, "singular", smin)


def _spectral(space, v, tol, smin):
    """Exact limit when 1 is a (semisimple) eigenvalue of qq phi.

    ``qq phi`` is trace non-increasing, hence power bounded, so the resolvent
    splits as ``E/(1-x) + S(x)`` with ``E`` the spectral projector at 1 and the
    regular part ``S(1) = (I - A + E)^-1 (I - E)``.
    """
    n = space.size
    a = space.qq @ space.phi
    m = np.eye(n) - a
    u, s, vh = np.linalg.svd(m)
    scale = max(1.0, s[0])
    k = int(np.sum(s < tol.resolvent_singular * scale))
    if k == 0:
        return None
    right = la.dagger(vh)[:, n - k:]
    left = u[:, n - k:]
    g = la.dagger(left) @ right
    if la.min_singular(g) < 1e-8:
        return None  # eigenvalue 1 not semisimple to working precision
    e = right @ np.linalg.solve(g, la.dagger(left))
    if np.max(np.abs(a @ right - right)) > 1e-8 or np.max(np.abs(e @ e - e)) > 1e-8:
        return None
    try:
        reg = la.solve(m + e, np.eye(n) - e, tol)
    except SingularMatrix:
        return None
    pole = space.pp @ (space.phi @ (e @ v))
    if np.max(np.abs(pole), initial=0.0) > 1e-7:
        return None
    sv = reg @ v
    out = space.pp @ (space.phi @ sv)
    pi = float(np.real(space.t @ out))
    if pi < 1 - tol.recurrence_deficit:
        tau = INF
    else:
        tau = float(np.real(space.t @ sv))
    return _Limit(pi, tau, out, "spectral-limit", smin)


def _extrapolated(space, v, tol, smin):
    n = space.size
    a = space.qq @ space.phi
    eye = np.eye(n, dtype=complex)
    pis, ders, vecs = [], [], []
    for k in range(tol.extrapolation_kmin, tol.extrapolation_kmax + 1):
        x = 1.0 - 2.0 ** (-k)
        lu = sla.lu_factor(eye - x * a, check_finite=False)
        w = sla.lu_solve(lu, v, check_finite=False)
        out = space.pp @ (space.phi @ w)
        w2 = sla.lu_solve(lu, a @ w, check_finite=False)
        pis.append(float(np.real(space.t @ out)))
        ders.append(float(np.real(space.t @ (space.pp @ (space.phi @ w2)))))
        vecs.append(out)
    pi, err = _aitken_limit(pis)
    pi = min(pi, 1.0) if pi < 1 + 1e-6 else pi
    if pi < 1 - tol.recurrence_deficit or max(abs(d) for d in ders) > tol.tau_divergence:
        tau = INF
    else:
        dval, _ = _aitken_limit(ders)
        tau = 1.0 + dval if dval < tol.tau_divergence else INF
    vec = np.array([_aitken_limit(np.real(c))[0] + 1j * _aitken_limit(np.imag(c))[0]
                    for c in np.array(vecs).T])
    return _Limit(pi, tau, vec, "extrapolated", smin, err)


def _limit(space, v, tol, method="auto"):
    if method in ("auto", "solve"):
        lim = _direct(space, v, tol)
        if lim.method == "direct-solve":
            return lim
        smin = lim.min_singular
        if method == "auto":
            sp = _spectral(space, v, tol, smin)
            if sp is not None:
                return sp
        return _extrapolated(space, v, tol, smin)
    if method == "extrapolate":
        smin = la.min_singular(np.eye(space.size) - space.qq @ space.phi)
        return _extrapolated(space, v, tol, smin)
    raise ValueError(f"unknown method {method!r}")


# --------------------------------------------------------------------------
# reports


@dataclass
class RecurrenceReport:
    pi: float
    tau: float
    recurrent: bool
    positive_recurrent: bool
    first_return: List[float]
    survival: List[float]
    method: str
    min_singular: float
    enclosure_dim: int = 0
    extrapolation_error: float = 0.0
    notes: List[str] = field(default_factory=list)

    def as_dict(self):
        return {
            "pi": self.pi,
            "tau": self.tau,
            "recurrent": self.recurrent,
            "positive_recurrent": self.positive_recurrent,
            "first_return": list(map(float, self.first_return)),
            "survival": list(map(float, self.survival)),
            "method": self.method,
            "min_singular": self.min_singular,
            "enclosure_dim": self.enclosure_dim,
            "extrapolation_error": self.extrapolation_error,
            "notes": list(self.notes),
        }


def _prepare(system, h0, rho, tol):
    sp = _space(system, h0, restrict=True, tol=tol)
    leak = sp.leak(rho)
    if leak > tol.subspace_leak:
        raise StateOutsideSubspace(f"state has weight {leak:.3e} outside the return subspace")
    v = sp.encode(rho)
    tr = float(np.real(sp.t @ v))
    if abs(tr - 1) > 1e-8:
        raise ValueError(f"state trace {tr:.12g} is not one")
    return sp, v


def recurrence_report(system, h0, rho, n_terms: int = 20, method="auto",
                      tol: Tolerances = DEFAULT) -> RecurrenceReport:
    """Return probability, expected return time, classification and series."""
    sp, v = _prepare(system, h0, rho, tol)
    lim = _limit(sp, v, tol, method)
    pis, surv = _series(sp, v, n_terms)
    recurrent = lim.pi >= 1 - tol.recurrence_deficit
    return RecurrenceReport(
        pi=lim.pi, tau=lim.tau, recurrent=recurrent, positive_recurrent=recurrent and np.isfinite(lim.tau),
        first_return=list(pis), survival=list(surv), method=lim.method, min_singular=lim.min_singular,
        enclosure_dim=sp.dim_enclosure, extrapolation_error=lim.extrapolation_error,
    )


def return_probability(system, h0, rho, method="auto", tol: Tolerances = DEFAULT) -> float:
    sp, v = _prepare(system, h0, rho, tol)
    return _limit(sp, v, tol, method).pi


def expected_return_time(system, h0, rho, method="auto", tol: Tolerances = DEFAULT) -> float:
    sp, v = _prepare(system, h0, rho, tol)
    return _limit(sp, v, tol, method).tau


def landing_probability(system, h0, rho, psi, method="auto", tol: Tolerances = DEFAULT) -> float:
    """``<psi| F(1)(rho) |psi>``."""
    sp, v = _prepare(system, h0, rho, tol)
    lim = _limit(sp, v, tol, method)
    op = sp.decode(lim.vector)
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    return float(np.real(np.vdot(psi, op @ psi)))


def _h0_state(system, h0):
    """The normalized projector ``P / dim H0`` in the format ``system`` expects."""
    h0 = as_subspace(h0)
    if isinstance(h0, Admissible):
        return TomDensity({k: p / h0.rank for k, p in h0.projectors.items()})
    return h0.projector / h0.rank


def averaged_return_time(system, h0, method="auto", tol: Tolerances = DEFAULT) -> float:
    """Mean return time averaged uniformly over pure states of ``h0``."""
    return expected_return_time(system, h0, _h0_state(system, h0), method, tol)


@dataclass
class UnitalCheck:
    enclosure_dim: int
    subspace_dim: int
    predicted: float
    averaged: float

    @property
    def residual(self):
        return abs(self.predicted - self.averaged)


def unital_quantization_check(system, h0, tol: Tolerances = DEFAULT) -> UnitalCheck:
    sp = _space(system, h0, restrict=True, tol=tol)
    if np.max(np.abs(sp.phi @ sp.t - sp.t)) > tol.tp:
        raise NotUnitalOnEnclosure("the restriction to the minimal enclosure is not unital")
    k = sp.rank_h0
    avg = averaged_return_time(system, h0, tol=tol)
    return UnitalCheck(sp.dim_enclosure, k, sp.dim_enclosure / k, avg)


def minimal_enclosure_dim(system, h0, tol: Tolerances = DEFAULT) -> int:
    return _space(system, h0, restrict=True, tol=tol).dim_enclosure


# --------------------------------------------------------------------------
# Kac formulas


def kac_ideal(chi, psi) -> float:
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    psi = psi / np.linalg.norm(psi)
    w = float(np.real(np.vdot(psi, np.asarray(chi) @ psi)))
    if w <= 1e-12:
        raise ValueError("<psi|chi psi> vanishes")
    return 1.0 / w


@dataclass
class KacResult:
    ideal: float
    correction: float
    tau: float
    phi_psi: np.ndarray


def kac_correction(phi, chi, psi, tol: Tolerances = DEFAULT) -> KacResult:
    """Split ``tau(psi -> psi)`` into the ideal Kac value and a correction factor."""
    chi = la.as_matrix(chi)
    mat, d = ch._matrix_of(phi)
    if la.trace_norm(la.unvec(mat @ la.vec(chi), d) - chi) > 1e-8:
        raise NotInvariant("chi is not invariant under the channel")
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    psi = psi / np.linalg.norm(psi)
    if psi.size != d:
        raise DimensionMismatch("psi does not match the channel dimension")
    rho = np.outer(psi, psi.conj())
    q = np.eye(d) - rho
    ideal = kac_ideal(chi, psi)
    varphi = q @ chi @ rho + rho @ chi @ q
    a = la.kron(q, q.conj()) @ mat
    try:
        x = la.solve(np.eye(d * d) - a, la.vec(varphi), tol)
    except SingularMatrix as exc:
        raise ResolventSingular(str(exc)) from exc
    corr = 1.0 - float(np.real(np.trace(la.unvec(x, d))))
    return KacResult(ideal, corr, ideal * corr, varphi)


@dataclass
class KacSite:
    tau_kac: float
    tau_direct: float


def kac_site(t: Tom, site, tol: Tolerances = DEFAULT) -> KacSite:
    if not tm.is_irreducible(t, tol):
        raise NotIrreducible("Kac's formula for sites needs an irreducible TOM")
    chi = tm.stationary(t, tol)
    block = chi.blocks[site]
    w = float(np.real(np.trace(block)))
    h0 = Admissible.sites(t, [site])
    direct = expected_return_time(t, h0, TomDensity({site: block / w}), tol=tol)
    return KacSite(1.0 / w, direct)


# --------------------------------------------------------------------------
# diagnostics


@dataclass
class PolyaSeries:
    partial_sums: np.ndarray
    diverging: bool


def polya_series(system, h0, rho, n: int, threshold: float = 10.0, tol: Tolerances = DEFAULT) -> PolyaSeries:
    """Partial sums of ``Tr(pp phi^k pp rho)``, ``k = 1..n`` (no monitoring)."""
    sp = _space(system, h0, restrict=False, tol=tol)
    w = sp.pp @ sp.encode(rho)
    sums = np.empty(n)
    acc = 0.0
    for k in range(n):
        w = sp.phi @ w
        acc += float(np.real(sp.t @ (sp.pp @ w)))
        sums[k] = acc
    inc = np.diff(sums[-max(2, n // 4):]) if n > 1 else np.array([sums[0]])
    diverging = bool(sums[-1] > threshold and np.all(inc > 1e-12))
    return PolyaSeries(sums, diverging)
