"""Transition operator matrices (TOMs) on finite vertex sets.

A TOM is a grid of CP maps ``E[i, j]`` (from vertex j to vertex i) whose
column sums are trace preserving.  Two linear representations are used:

* the block superoperator on the stacked space ``(vec(rho_1), ..., vec(rho_n))``
  of dimension ``n*d*d``;
* the CPTP embedding on ``H (x) S`` with Kraus operators ``B (x) |i><j|``.  The
  basis index of ``|a> (x) |i>`` is ``a*n + i``.
"""

from dataclasses import dataclass, field
from typing import Dict, Hashable, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import channels as ch
from . import densela as la
from .channels import KrausMap
from .config import DEFAULT, Tolerances
from .errors import DimensionMismatch

Label = Hashable


class Tom:
    """Grid of CP blocks indexed by (target, source) vertex labels.

    Blocks that are absent, or whose Kraus operators are all exactly zero,
    are structural zeros.
    """

    def __init__(self, vertices: Sequence[Label], dim: int, blocks: Mapping[Tuple[Label, Label], KrausMap]):
        self.vertices = tuple(vertices)
        if len(set(self.vertices)) != len(self.vertices):
            raise ValueError("duplicate vertex labels")
        self.dim = int(dim)
        self._index = {v: k for k, v in enumerate(self.vertices)}
        clean = {}
        for (i, j), phi in blocks.items():
            if i not in self._index or j not in self._index:
                raise KeyError(f"block ({i!r} <- {j!r}) refers to an unknown vertex")
            if phi is None:
                continue
            if phi.dim != self.dim:
                raise DimensionMismatch(f"block ({i!r} <- {j!r}) has dim {phi.dim}, expected {self.dim}")
            if phi.is_zero:
                continue
            clean[(i, j)] = phi
        self.blocks: Dict[Tuple[Label, Label], KrausMap] = clean
        self._matrix = None

    def __repr__(self):
        return f"Tom(vertices={list(self.vertices)}, dim={self.dim}, nblocks={len(self.blocks)})"

    @property
    def n(self):
        return len(self.vertices)

    def index(self, label):
        return self._index[label]

    def block(self, i, j) -> Optional[KrausMap]:
        return self.blocks.get((i, j))

    def has_block(self, i, j) -> bool:
        return (i, j) in self.blocks

    def column(self, j) -> List[Tuple[Label, KrausMap]]:
        return [(i, self.blocks[(i, j)]) for i in self.vertices if (i, j) in self.blocks]

    def column_sum(self, j) -> KrausMap:
        ops = []
        for _, phi in self.column(j):
            ops.extend(phi.kraus)
        return KrausMap(ops, self.dim)

    @property
    def matrix(self) -> np.ndarray:
        """Block superoperator, block (i, j) = sum_k kron(B, conj(B))."""
        if self._matrix is None:
            d2 = self.dim * self.dim
            m = np.zeros((self.n * d2, self.n * d2), dtype=complex)
            for (i, j), phi in self.blocks.items():
                a, b = self._index[i], self._index[j]
                m[a * d2:(a + 1) * d2, b * d2:(b + 1) * d2] = phi.matrix
            m.setflags(write=False)
            self._matrix = m
        return self._matrix

    def restricted(self, labels: Iterable[Label]) -> "Tom":
        """Sub-grid on ``labels``; blocks leaving the subset are dropped."""
        labels = list(labels)
        keep = set(labels)
        blocks = {k: v for k, v in self.blocks.items() if k[0] in keep and k[1] in keep}
        return Tom(labels, self.dim, blocks)

    def with_blocks(self, updates: Mapping[Tuple[Label, Label], Optional[KrausMap]]) -> "Tom":
        blocks = dict(self.blocks)
        for k, v in updates.items():
            if v is None:
                blocks.pop(k, None)
            else:
                blocks[k] = v
        return Tom(self.vertices, self.dim, blocks)


@dataclass
class TomValidation:
    column_residuals: Dict[Label, float]
    block_cp: Dict[Tuple[Label, Label], bool]
    tol: float
    failures: List[str] = field(default_factory=list)

    @property
    def trace_preserving(self):
        return all(r <= self.tol for r in self.column_residuals.values())

    @property
    def trace_nonincreasing(self):
        return not any("exceeds" in f for f in self.failures)

    @property
    def completely_positive(self):
        return all(self.block_cp.values())

    @property
    def valid(self):
        return self.trace_preserving and self.completely_positive


def validate(t: Tom, tol: Tolerances = DEFAULT) -> TomValidation:
    """Per-column TP residuals (max-norm of sum B^*B - I) and per-block CP verdicts."""
    res, cp, failures = {}, {}, []
    eye = np.eye(t.dim)
    for j in t.vertices:
        s = ch.kraus_sum(t.column_sum(j))
        r = float(np.max(np.abs(s - eye)))
        res[j] = r
        if r > tol.tp:
            failures.append(f"column {j!r}: trace-preservation residual {r:.3e}")
            top = np.linalg.eigvalsh(la.hermitize(s)).max()
            if top > 1 + tol.tp:
                failures.append(f"column {j!r}: sum of B^*B exceeds identity (max eigenvalue {top:.6g})")
    for key, phi in t.blocks.items():
        ok = ch.is_completely_positive(phi, tol)
        cp[key] = ok
        if not ok:
            failures.append(f"block {key[0]!r}<-{key[1]!r}: not completely positive")
    return TomValidation(res, cp, tol.tp, failures)


def block_superop(t: Tom) -> np.ndarray:
    return np.array(t.matrix)


def _unit(n, i, j):
    e = np.zeros((n, n))
    e[i, j] = 1.0
    return e


def embed_cptp(t: Tom) -> KrausMap:
    """Kraus operators ``kron(B, |i><j|)`` on H (x) S."""
    n = t.n
    ops = []
    for (i, j), phi in t.blocks.items():
        e = _unit(n, t.index(i), t.index(j))
        ops.extend(np.kron(b, e) for b in phi.kraus)
    return KrausMap(ops, n * t.dim)


def site_blocks(rho, n: int, d: int) -> List[np.ndarray]:
    """Diagonal site blocks rho_i of an operator on H (x) S."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (n * d, n * d):
        raise DimensionMismatch(f"operator of shape {rho.shape}, expected {(n * d, n * d)}")
    return [rho[i::n, i::n].copy() for i in range(n)]


def from_site_blocks(blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Block-diagonal operator on H (x) S from per-site matrices."""
    n = len(blocks)
    d = np.asarray(blocks[0]).shape[0]
    out = np.zeros((n * d, n * d), dtype=complex)
    for i, b in enumerate(blocks):
        out[i::n, i::n] = b
    return out


def block_diagonal_part(rho, n: int, d: int) -> np.ndarray:
    return from_site_blocks(site_blocks(rho, n, d))


def stack(blocks: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([la.vec(np.asarray(b, dtype=complex)) for b in blocks])


def unstack(v, n: int, d: int) -> List[np.ndarray]:
    v = np.asarray(v)
    return [la.unvec(v[i * d * d:(i + 1) * d * d], d, d) for i in range(n)]


@dataclass
class TomDensity:
    """Per-vertex positive matrices with total trace one.  Missing vertices are zero."""

    blocks: Dict[Label, np.ndarray]

    def ordered(self, t: Tom) -> List[np.ndarray]:
        z = np.zeros((t.dim, t.dim), dtype=complex)
        return [np.asarray(self.blocks.get(v, z), dtype=complex) for v in t.vertices]

    def stacked(self, t: Tom) -> np.ndarray:
        return stack(self.ordered(t))

    def full(self, t: Tom) -> np.ndarray:
        return from_site_blocks(self.ordered(t))

    def is_valid(self, tol: Tolerances = DEFAULT) -> bool:
        total = sum(np.trace(b).real for b in self.blocks.values())
        if abs(total - 1) > tol.density_trace:
            return False
        for b in self.blocks.values():
            if not la.is_hermitian(b, tol.hermitian):
                return False
            if np.linalg.eigvalsh(la.hermitize(b)).min() < -1e-9:
                return False
        return True


def stationary(t: Tom, tol: Tolerances = DEFAULT) -> TomDensity:
    """The invariant TOM density, assuming it is unique."""
    states = ch.invariant_states(embed_cptp(t), tol)
    if len(states) != 1:
        raise ValueError(f"invariant state is not unique ({len(states)} found)")
    blocks = site_blocks(states[0], t.n, t.dim)
    return TomDensity(dict(zip(t.vertices, blocks)))


def is_irreducible(t: Tom, tol: Tolerances = DEFAULT) -> bool:
    return ch.is_irreducible(embed_cptp(t), tol)


@dataclass
class OqwSpec:
    """Open quantum walk: one effect matrix per edge, keyed (target, source)."""

    vertices: Sequence[Label]
    effects: Mapping[Tuple[Label, Label], np.ndarray]


def from_oqw(spec: OqwSpec, tol: Tolerances = DEFAULT) -> Tom:
    effects = {k: np.asarray(v, dtype=complex) for k, v in spec.effects.items()}
    if not effects:
        raise ValueError("OQW without edges")
    d = next(iter(effects.values())).shape[0]
    for j in spec.vertices:
        s = sum((la.dagger(b) @ b for (i, jj), b in effects.items() if jj == j), np.zeros((d, d), complex))
        r = np.max(np.abs(s - np.eye(d)))
        if r > tol.tp:
            raise ValueError(f"OQW column condition violated at vertex {j!r} (residual {r:.3e})")
    return Tom(spec.vertices, d, {k: KrausMap([b]) for k, b in effects.items()})


def from_stochastic(p, vertices: Sequence[Label] = None, tol: Tolerances = DEFAULT) -> Tom:
    """Classical chain with column-stochastic matrix ``p`` (p[i, j] = prob j -> i)."""
    p = np.asarray(p, dtype=float)
    n = p.shape[0]
    if p.shape != (n, n) or np.any(p < 0):
        raise ValueError("need a square nonnegative matrix")
    if np.max(np.abs(p.sum(axis=0) - 1)) > tol.tp:
        raise ValueError("columns must sum to one")
    vertices = list(range(n)) if vertices is None else list(vertices)
    blocks = {
        (vertices[i], vertices[j]): KrausMap([[[np.sqrt(p[i, j])]]])
        for i in range(n) for j in range(n) if p[i, j] > 0
    }
    return Tom(vertices, 1, blocks)


def from_superops(vertices: Sequence[Label], dim: int, mats: Mapping[Tuple[Label, Label], np.ndarray],
                  tol: Tolerances = DEFAULT) -> Tom:
    """Build a TOM from CP superoperator blocks (Kraus forms recovered via Choi)."""
    blocks = {}
    for k, m in mats.items():
        if np.max(np.abs(m), initial=0.0) == 0:
            continue
        blocks[k] = ch.kraus_from_superop(m, tol)
    return Tom(vertices, dim, blocks)
