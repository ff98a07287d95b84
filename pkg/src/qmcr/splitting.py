"""Overlapping decompositions and factorizations of TOMs.

A partition ``V = V- | V0 | V+`` splits a TOM into a left TOM on ``V- + V0``
and a right TOM on ``V0 + V+`` that overlap on ``V0``.

* decomposition:  E = (E_L (+) 0) + (0 (+) E_R) - (0 (+) E_0 (+) 0)
* factorization:  E = (E_L (+) I) (I (+) E_R)

For return to the overlap ``V0`` the Schur functions then satisfy
``f = f_L + f_R - E_0`` and ``f = f_L f_R`` respectively.
"""

import itertools
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from . import channels as ch
from . import densela as la
from . import recurrence as rc
from . import tom as tm
from .channels import KrausMap
from .config import DEFAULT, Tolerances
from .errors import InvalidPartition, LeftNotRecurrent, StateOutsideOverlap
from .tom import Tom, TomDensity


@dataclass(frozen=True)
class Partition:
    minus: FrozenSet
    zero: FrozenSet
    plus: FrozenSet

    def __post_init__(self):
        for name in ("minus", "zero", "plus"):
            object.__setattr__(self, name, frozenset(getattr(self, name)))
        if not self.zero:
            raise InvalidPartition("the overlap V0 must be nonempty")
        if (self.minus & self.zero) or (self.minus & self.plus) or (self.zero & self.plus):
            raise InvalidPartition("partition parts overlap")

    def check_cover(self, t: Tom):
        if self.minus | self.zero | self.plus != set(t.vertices):
            raise InvalidPartition("partition does not cover the vertex set")

    def left_vertices(self, t: Tom):
        keep = self.minus | self.zero
        return [v for v in t.vertices if v in keep]

    def right_vertices(self, t: Tom):
        keep = self.zero | self.plus
        return [v for v in t.vertices if v in keep]

    def zero_vertices(self, t: Tom):
        return [v for v in t.vertices if v in self.zero]

    def swapped(self):
        return Partition(self.plus, self.zero, self.minus)

    def key(self):
        a = tuple(sorted(map(repr, self.minus)))
        b = tuple(sorted(map(repr, self.plus)))
        return (tuple(sorted(map(repr, self.zero))), min(a, b), max(a, b))


def _crosses(t: Tom, src, dst):
    return any(t.has_block(i, j) for i in dst for j in src)


def satisfies_decomposition(t: Tom, part: Partition) -> bool:
    return not _crosses(t, part.minus, part.plus) and not _crosses(t, part.plus, part.minus)


def satisfies_factorization(t: Tom, part: Partition) -> bool:
    """No transitions from V- straight into V+."""
    return not _crosses(t, part.minus, part.plus)


def _components(t: Tom, verts):
    verts = list(verts)
    seen, comps = set(), []
    for v in verts:
        if v in seen:
            continue
        stack, comp = [v], []
        seen.add(v)
        while stack:
            a = stack.pop()
            comp.append(a)
            for b in verts:
                if b not in seen and (t.has_block(a, b) or t.has_block(b, a)):
                    seen.add(b)
                    stack.append(b)
        comps.append(frozenset(comp))
    return comps


def detect_decompositions(t: Tom, candidates: Optional[Sequence[Partition]] = None,
                          max_overlap: Optional[int] = None, max_vertices: int = 20) -> List[Partition]:
    """All partitions (up to swapping the sides) whose zero pattern allows a
    decomposition.  Larger vertex sets require explicit ``candidates``."""
    if candidates is not None:
        out = []
        for c in candidates:
            c.check_cover(t)
            if c.minus and c.plus and satisfies_decomposition(t, c):
                out.append(c)
        return out
    if t.n > max_vertices:
        raise ValueError(f"exhaustive search limited to {max_vertices} vertices; pass candidates")
    verts = list(t.vertices)
    limit = t.n - 2 if max_overlap is None else min(max_overlap, t.n - 2)
    found = {}
    for size in range(1, limit + 1):
        for zero in itertools.combinations(verts, size):
            rest = [v for v in verts if v not in zero]
            comps = _components(t, rest)
            if len(comps) < 2:
                continue
            # first component is pinned to V- so each unordered split appears once
            for mask in range(2 ** (len(comps) - 1)):
                minus = set(comps[0])
                plus = set()
                for k, c in enumerate(comps[1:]):
                    (minus if mask >> k & 1 else plus).update(c)
                if not plus:
                    continue
                p = Partition(minus, zero, plus)
                found.setdefault(p.key(), p)
    return list(found.values())


def _sum_maps(maps: Sequence[KrausMap], d) -> KrausMap:
    ops = []
    for m in maps:
        ops.extend(m.kraus)
    return KrausMap(ops, d)


def equal_split(t: Tom, part: Partition, column, side_targets) -> Dict:
    """Default policy: the leaked mass of ``column`` is shared equally over V0."""
    d = t.dim
    total = _sum_maps([t.block(i, column) for i in side_targets if t.has_block(i, column)], d)
    zero = part.zero_vertices(t)
    share = total.scaled(1.0 / len(zero))
    return {j: share for j in zero}


@dataclass
class OverlapDecomposition:
    partition: Partition
    left: Tom
    right: Tom
    overlap: Tom

    def reconstruction_residual(self, t: Tom) -> float:
        return reconstruction_residual(t, self)


def build_decomposition(t: Tom, part: Partition, policy: Callable = equal_split,
                        tol: Tolerances = DEFAULT) -> OverlapDecomposition:
    part.check_cover(t)
    if not satisfies_decomposition(t, part):
        raise InvalidPartition("blocks connect V- and V+ directly")
    d = t.dim
    lv, rv, zv = part.left_vertices(t), part.right_vertices(t), part.zero_vertices(t)
    plus_t = [v for v in t.vertices if v in part.plus]
    minus_t = [v for v in t.vertices if v in part.minus]
    left, right, over = {}, {}, {}
    for (i, j), phi in t.blocks.items():
        if i in part.zero and j in part.zero:
            continue
        if i in lv and j in lv:
            left[(i, j)] = phi
        if i in rv and j in rv:
            right[(i, j)] = phi
    for k in zv:
        to_plus = policy(t, part, k, plus_t)
        to_minus = policy(t, part, k, minus_t)
        for j in zv:
            base = t.block(j, k) or KrausMap([], d)
            a = to_plus.get(j, KrausMap([], d))
            b = to_minus.get(j, KrausMap([], d))
            left[(j, k)] = base + a
            right[(j, k)] = base + b
            over[(j, k)] = base + a + b
    return OverlapDecomposition(part, Tom(lv, d, left), Tom(rv, d, right), Tom(zv, d, over))


def _embed_matrix(small: Tom, big: Tom) -> np.ndarray:
    d2 = big.dim ** 2
    out = np.zeros((big.n * d2, big.n * d2), dtype=complex)
    for (i, j), phi in small.blocks.items():
        a, b = big.index(i), big.index(j)
        out[a * d2:(a + 1) * d2, b * d2:(b + 1) * d2] = phi.matrix
    return out


def _identity_on(big: Tom, verts) -> np.ndarray:
    d2 = big.dim ** 2
    out = np.zeros((big.n * d2, big.n * d2), dtype=complex)
    for v in verts:
        a = big.index(v)
        out[a * d2:(a + 1) * d2, a * d2:(a + 1) * d2] = np.eye(d2)
    return out


def reconstruction_residual(t: Tom, split) -> float:
    if isinstance(split, OverlapDecomposition):
        m = _embed_matrix(split.left, t) + _embed_matrix(split.right, t) - _embed_matrix(split.overlap, t)
    else:
        m = factor_product(t, split.left, split.right, split.partition)
    return float(np.max(np.abs(m - t.matrix), initial=0.0))


def factor_product(t: Tom, left: Tom, right: Tom, part: Partition) -> np.ndarray:
    lft = _embed_matrix(left, t) + _identity_on(t, [v for v in t.vertices if v in part.plus])
    rgt = _embed_matrix(right, t) + _identity_on(t, [v for v in t.vertices if v in part.minus])
    return lft @ rgt


# --------------------------------------------------------------------------
# rank-one factorization of CP vectors


@dataclass
class CpVector:
    """Column of CP maps on a common dimension."""

    maps: List[KrausMap]

    @property
    def dim(self):
        return self.maps[0].dim

    def total(self) -> KrausMap:
        return _sum_maps(self.maps, self.dim)

    @property
    def is_cptp(self):
        return ch.is_trace_preserving(self.total())

    @property
    def is_zero(self):
        return all(m.is_zero for m in self.maps)

    def stacked(self) -> np.ndarray:
        return np.vstack([m.matrix for m in self.maps])


@dataclass
class Rank1Factorization:
    unit: CpVector  # the common CPTP vector U
    coefficients: List[Optional[KrausMap]]  # Phi_k, None for a zero column
    mismatch: float


def _normalize_column(col: CpVector, tol: Tolerances):
    d = col.dim
    s = ch.kraus_sum(col.total())
    x = la.psd_sqrt(s)
    xp = np.linalg.pinv(x, rcond=tol.rank_cutoff, hermitian=True)
    kern = np.eye(d) - x @ xp
    kern = la.hermitize(kern)
    has_kernel = np.trace(kern).real > 0.5
    lam = 1.0 / len(col.maps)
    maps = []
    for m in col.maps:
        ops = [b @ xp for b in m.kraus]
        if has_kernel:
            ops.append(np.sqrt(lam) * kern)
        maps.append(KrausMap(ops, d))
    return CpVector(maps), x


def _unitary_from_superop(w, d, tol):
    """Unitary W with kron(W, conj W) = w, or None."""
    j = ch.choi(w)
    ev, vecs = np.linalg.eigh(la.hermitize(j))
    if ev[-1] <= 0 or np.sum(ev > 1e-8 * ev[-1]) != 1:
        return None
    u = np.sqrt(ev[-1]) * vecs[:, -1].reshape(d, d)
    if np.max(np.abs(u @ la.dagger(u) - np.eye(d))) > 1e-7:
        return None
    return u


def factor_rank1(columns: Sequence[CpVector], tol: Tolerances = DEFAULT) -> Optional[Rank1Factorization]:
    """Common CPTP vector ``U`` with ``V_k = U o Phi_k`` for every column, if one exists.

    Each column is normalized with ``X = sqrt(sum B^* B)`` (Hermitian PSD) and
    ``A = B X^+``; columns are then compared after removing a possible unitary
    gauge ``X -> W X``.
    """
    live = [(k, c) for k, c in enumerate(columns) if not c.is_zero]
    coeffs: List[Optional[KrausMap]] = [None] * len(columns)
    if not live:
        return None
    d = columns[live[0][0]].dim
    ref, x0 = _normalize_column(live[0][1], tol)
    coeffs[live[0][0]] = KrausMap([x0], d)
    m0 = ref.stacked()
    pinv0 = np.linalg.pinv(m0)
    worst = 0.0
    for k, col in live[1:]:
        u, x = _normalize_column(col, tol)
        mk = u.stacked()
        diff = np.linalg.norm(mk - m0)
        if diff <= tol.rank1_match:
            coeffs[k] = KrausMap([x], d)
            worst = max(worst, diff)
            continue
        w = pinv0 @ mk
        if np.linalg.norm(m0 @ w - mk) > tol.rank1_match:
            return None
        wu = _unitary_from_superop(w, d, tol)
        if wu is None:
            return None
        coeffs[k] = KrausMap([wu @ x], d)
        # check the factorization of the original column directly
        chk = np.vstack([m.matrix for m in ref.maps]) @ coeffs[k].matrix
        diff = np.linalg.norm(chk - col.stacked())
        if diff > tol.rank1_match * max(1.0, np.linalg.norm(col.stacked())):
            return None
        worst = max(worst, diff)
    return Rank1Factorization(ref, coeffs, worst)


@dataclass
class OverlapFactorization:
    partition: Partition
    left: Tom
    right: Tom
    unit: Optional[CpVector] = None
    notes: List[str] = field(default_factory=list)

    def reconstruction_residual(self, t: Tom) -> float:
        return reconstruction_residual(t, self)


def detect_factorization(t: Tom, part: Partition, tol: Tolerances = DEFAULT) -> Optional[OverlapFactorization]:
    """Rank-one overlap factorization (``|V0| = 1``); None when none exists."""
    part.check_cover(t)
    if not satisfies_factorization(t, part):
        return None
    if len(part.zero) != 1:
        return None
    d = t.dim
    (o,) = tuple(part.zero)
    lv, rv = part.left_vertices(t), part.right_vertices(t)
    zero_map = KrausMap([], d)
    cols = [CpVector([t.block(i, k) or zero_map for i in lv]) for k in rv]
    fac = factor_rank1(cols, tol)
    if fac is None:
        return None
    left = {(i, j): t.block(i, j) for i in lv for j in lv if j != o and t.has_block(i, j)}
    for i, u in zip(lv, fac.unit.maps):
        left[(i, o)] = u
    right = {(i, k): t.block(i, k) for i in rv for k in rv if i != o and t.has_block(i, k)}
    for k, phi in zip(rv, fac.coefficients):
        if phi is not None:
            right[(o, k)] = phi
    out = OverlapFactorization(part, Tom(lv, d, left), Tom(rv, d, right), fac.unit)
    res = out.reconstruction_residual(t)
    if res > 1e-8:
        return None
    out.notes.append("rank decision for |V0| > 1 is not attempted")
    return out


def verify_factorization(t: Tom, part: Partition, left: Tom, right: Tom) -> float:
    """Residual of a user-supplied factorization (any overlap size)."""
    return float(np.max(np.abs(factor_product(t, left, right, part) - t.matrix)))


# --------------------------------------------------------------------------
# splitting rules


def _overlap_state(t: Tom, part: Partition, rho, tol):
    blocks = rc._blocks_of(rho, t)
    out = {}
    for v, b in zip(t.vertices, blocks):
        w = la.trace_norm(b)
        if v not in part.zero:
            if w > tol.subspace_leak:
                raise StateOutsideOverlap(f"state has weight {w:.3e} on vertex {v!r} outside the overlap")
            continue
        out[v] = b
    return TomDensity(out)


def _pt(t: Tom, zero, rho, tol):
    rep = rc.recurrence_report(t, rc.Admissible.sites(t, zero), rho, n_terms=0, tol=tol)
    return rep.pi, rep.tau


@dataclass
class SplitMetrics:
    pi: float
    tau: float
    pi_left: float
    pi_right: float
    tau_left: float
    tau_right: float
    pi_residual: float
    tau_residual: float
    tol: float = 1e-7

    @property
    def consistent(self):
        return self.pi_residual <= self.tol and self.tau_residual <= self.tol


def split_metrics_decomposition(t: Tom, dec: OverlapDecomposition, rho, tol: Tolerances = DEFAULT) -> SplitMetrics:
    zero = dec.partition.zero_vertices(t)
    r = _overlap_state(t, dec.partition, rho, tol)
    pi, tau = _pt(t, zero, r, tol)
    pl, tl = _pt(dec.left, zero, r, tol)
    pr, tr = _pt(dec.right, zero, r, tol)
    pres = abs(pi - (pl + pr - 1))
    if np.isfinite(tau) and np.isfinite(tl) and np.isfinite(tr):
        tres = abs(tau - (tl + tr - 1)) / max(1.0, abs(tau))
    elif not np.isfinite(tau) and not (np.isfinite(tl) and np.isfinite(tr)):
        tres = 0.0
    else:
        tres = float("inf")
    return SplitMetrics(pi, tau, pl, pr, tl, tr, pres, tres, tol.rule_check)


@dataclass
class FactorMetrics:
    pi: float
    tau: float
    pi_left: float
    pi_right: float
    tau_left: float
    tau_right: float
    sigma: TomDensity
    pi_residual: float
    tau_residual: float
    tol: float = 1e-7

    @property
    def consistent(self):
        return self.pi_residual <= self.tol and self.tau_residual <= self.tol


def schur_on_overlap(t: Tom, zero, z) -> np.ndarray:
    """Compressed ``f(z)`` on the stacked blocks of the overlap sites."""
    f = rc.SchurFn(t, rc.Admissible.sites(t, zero))
    return f.f(z, compressed=True)


def split_metrics_factorization(t: Tom, fac: OverlapFactorization, rho, tol: Tolerances = DEFAULT) -> FactorMetrics:
    part = fac.partition
    zero = part.zero_vertices(t)
    r = _overlap_state(t, part, rho, tol)
    pi, tau = _pt(t, zero, r, tol)
    pr, tr = _pt(fac.right, zero, r, tol)
    # sigma = f_R(1)(rho), read back on the overlap sites
    sp = rc._space(fac.right, rc.Admissible.sites(fac.right, zero), restrict=False, tol=tol)
    lim = rc._limit(sp, sp.encode(r), tol)
    full = sp.decode(lim.vector)
    blocks = tm.site_blocks(full, fac.right.n, t.dim)
    sigma = {v: blocks[fac.right.index(v)] for v in zero}
    trs = sum(np.trace(b).real for b in sigma.values())
    sig_hat = TomDensity({v: b / trs for v, b in sigma.items()})
    pl, tl = _pt(fac.left, zero, sig_hat, tol)
    pres = abs(pi - pl * pr)
    if np.isfinite(tau) and np.isfinite(tl) and np.isfinite(tr):
        tres = abs(tau - (tl + tr - 1)) / max(1.0, abs(tau))
    elif not np.isfinite(tau):
        tres = 0.0
    else:
        tres = float("inf")
    return FactorMetrics(pi, tau, pl, pr, tl, tr, TomDensity(sigma), pres, tres, tol.rule_check)


def fr_identity_residual(t: Tom, split, z) -> float:
    """Max-norm residual of ``f = f_L + f_R - E_0`` or ``f = f_L f_R`` at ``z``."""
    zero = split.partition.zero_vertices(t)
    f = schur_on_overlap(t, zero, z)
    fl = schur_on_overlap(split.left, zero, z)
    fr = schur_on_overlap(split.right, zero, z)
    if isinstance(split, OverlapDecomposition):
        return float(np.max(np.abs(f - (fl + fr - split.overlap.matrix))))
    return float(np.max(np.abs(f - fl @ fr)))


def _perturbed_tom(t: Tom, split, new_left: Tom, tol) -> Tom:
    part = split.partition
    if isinstance(split, OverlapDecomposition):
        m = _embed_matrix(new_left, t) + _embed_matrix(split.right, t) - _embed_matrix(split.overlap, t)
    else:
        m = factor_product(t, new_left, split.right, part)
    d2 = t.dim ** 2
    mats = {}
    for i in t.vertices:
        for j in t.vertices:
            a, b = t.index(i), t.index(j)
            blk = m[a * d2:(a + 1) * d2, b * d2:(b + 1) * d2]
            if np.max(np.abs(blk)) > 1e-14:
                if not ch.is_completely_positive(blk, tol):
                    raise InvalidPartition(f"perturbed block {i!r}<-{j!r} is not CP")
                mats[(i, j)] = blk
    return tm.from_superops(t.vertices, t.dim, mats, tol)


@dataclass
class PerturbationCheck:
    pi_original: float
    pi_perturbed: float
    perturbed: Tom

    @property
    def invariant(self):
        return abs(self.pi_original - self.pi_perturbed) <= 1e-7


def perturbation_invariance_check(t: Tom, split, perturbed_left: Tom, rho,
                                  tol: Tolerances = DEFAULT) -> PerturbationCheck:
    """Replace the left TOM and compare the return probability to the overlap.

    ``perturbed_left`` is either a left TOM on ``V- + V0`` or a full TOM on
    the same vertex set (taken as the perturbed system directly)."""
    part = split.partition
    zero = part.zero_vertices(t)
    r = _overlap_state(t, part, rho, tol)
    if tuple(perturbed_left.vertices) == tuple(t.vertices):
        new_t = perturbed_left
        new_split = build_decomposition(new_t, part, tol=tol) if isinstance(split, OverlapDecomposition) \
            else detect_factorization(new_t, part, tol)
        new_left = new_split.left
    else:
        new_left = perturbed_left
        new_t = _perturbed_tom(t, split, new_left, tol)
    d = t.dim
    avg = TomDensity({v: np.eye(d) / (d * len(zero)) for v in zero})
    for lt in (split.left, new_left):
        p, _ = _pt(lt, zero, avg, tol)
        if p < 1 - tol.recurrence_deficit:
            raise LeftNotRecurrent(f"overlap not recurrent for a left TOM (pi={p:.9g})")
    p0, _ = _pt(t, zero, r, tol)
    p1, _ = _pt(new_t, zero, r, tol)
    return PerturbationCheck(p0, p1, new_t)
