"""Random instances for property tests and sweeps.

Every generator takes a ``numpy.random.Generator`` so that tests control the
stream.  Channels come from random isometries, unitaries are Haar distributed
(QR of a Ginibre matrix with phase correction).
"""

from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from . import channels as ch
from . import densela as la
from .channels import KrausMap
from .tom import Tom, TomDensity


def ginibre(rng: np.random.Generator, m: int, n: int) -> np.ndarray:
    return (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))) / np.sqrt(2)


def haar_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(ginibre(rng, d, d))
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_isometry(rng: np.random.Generator, m: int, n: int) -> np.ndarray:
    """``m x n`` matrix with orthonormal columns (m >= n)."""
    q, r = np.linalg.qr(ginibre(rng, m, n))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def _split_isometry(v: np.ndarray, d: int):
    return [v[k * d:(k + 1) * d] for k in range(v.shape[0] // d)]


def random_channel(rng: np.random.Generator, d: int, n_kraus: int = 2) -> KrausMap:
    """CPTP map with ``n_kraus`` operators cut out of a random isometry."""
    return KrausMap(_split_isometry(random_isometry(rng, n_kraus * d, d), d), d)


def random_cp_vector(rng: np.random.Generator, d: int, n_parts: int, n_kraus: int = 1):
    """``n_parts`` CP maps whose sum is trace preserving."""
    ops = _split_isometry(random_isometry(rng, n_parts * n_kraus * d, d), d)
    return [KrausMap(ops[k * n_kraus:(k + 1) * n_kraus], d) for k in range(n_parts)]


def random_invertible_channel(rng: np.random.Generator, d: int, n_kraus: int = 2, weight: float = 0.6,
                              min_sv: float = 1e-3) -> KrausMap:
    """Mixture of a Haar unitary conjugation (weight ``weight``) and a random
    channel; rejected until the superoperator is well conditioned."""
    for _ in range(100):
        u = haar_unitary(rng, d)
        rest = random_channel(rng, d, n_kraus)
        phi = KrausMap([np.sqrt(weight) * u] + [np.sqrt(1 - weight) * b for b in rest.kraus], d)
        if la.min_singular(phi.matrix) >= min_sv:
            return phi
    raise RuntimeError("could not draw an invertible channel")


def random_invertible_pair(rng: np.random.Generator, d: int, min_sv: float = 1e-3):
    """``(phi_zero, phi_minus)`` with ``phi_zero + phi_minus`` TP and ``phi_minus`` invertible."""
    for _ in range(100):
        u = haar_unitary(rng, d)
        a = random_isometry(rng, 2 * d, d)[:d]
        # phi_minus keeps a unitary component, so it stays invertible
        w = rng.uniform(0.3, 0.7)
        phi_minus = KrausMap([np.sqrt(w) * u, np.sqrt(1 - w) * np.sqrt(0.5) * a], d)
        rest = np.eye(d) - ch.kraus_sum(phi_minus)
        zero_op = la.psd_sqrt(la.hermitize(rest))
        phi_zero = KrausMap([zero_op], d)
        if la.min_singular(phi_minus.matrix) >= min_sv:
            return phi_zero, phi_minus
    raise RuntimeError("could not draw an invertible pair")


def random_unital_channel(rng: np.random.Generator, d: int, n_unitaries: int = 3) -> KrausMap:
    """Random mixture of unitary conjugations (unital and trace preserving)."""
    w = rng.dirichlet(np.ones(n_unitaries))
    return KrausMap([np.sqrt(p) * haar_unitary(rng, d) for p in w], d)


def random_density(rng: np.random.Generator, d: int, rank: Optional[int] = None) -> np.ndarray:
    rank = d if rank is None else rank
    g = ginibre(rng, d, rank)
    rho = g @ la.dagger(g)
    return rho / np.trace(rho).real


def random_pure(rng: np.random.Generator, d: int) -> np.ndarray:
    v = ginibre(rng, d, 1)[:, 0]
    return v / np.linalg.norm(v)


def random_subspace(rng: np.random.Generator, d: int, k: int) -> np.ndarray:
    """Isometry ``d x k`` spanning a random ``k``-dimensional subspace."""
    return random_isometry(rng, d, k)


def random_tom(rng: np.random.Generator, n: int, d: int, pattern: Optional[np.ndarray] = None,
               n_kraus: int = 1, vertices: Optional[Sequence] = None) -> Tom:
    """Random TOM whose allowed blocks are ``pattern[i, j]`` (all by default).

    Each column is one random isometry cut into per-target Kraus operators,
    so columns are exactly trace preserving.  A column whose only allowed
    target is itself gives an absorbing vertex.
    """
    pattern = np.ones((n, n), dtype=bool) if pattern is None else np.asarray(pattern, dtype=bool)
    labels = list(range(n)) if vertices is None else list(vertices)
    blocks = {}
    for j in range(n):
        targets = [i for i in range(n) if pattern[i, j]]
        if not targets:
            raise ValueError(f"column {j} has no allowed target")
        parts = random_cp_vector(rng, d, len(targets), n_kraus)
        for i, phi in zip(targets, parts):
            blocks[(labels[i], labels[j])] = phi
    return Tom(labels, d, blocks)


def overlap_pattern(n_minus: int, n_zero: int, n_plus: int) -> Tuple[np.ndarray, Tuple[list, list, list]]:
    """Zero pattern forbidding direct moves between the two sides."""
    n = n_minus + n_zero + n_plus
    minus = list(range(n_minus))
    zero = list(range(n_minus, n_minus + n_zero))
    plus = list(range(n_minus + n_zero, n))
    pat = np.ones((n, n), dtype=bool)
    for i in minus:
        for j in plus:
            pat[i, j] = pat[j, i] = False
    return pat, (minus, zero, plus)


def random_overlapping_tom(rng: np.random.Generator, n_minus: int, n_zero: int, n_plus: int, d: int,
                           n_kraus: int = 1):
    """Random TOM admitting an overlapping decomposition; returns ``(tom, (minus, zero, plus))``."""
    pat, parts = overlap_pattern(n_minus, n_zero, n_plus)
    return random_tom(rng, pat.shape[0], d, pat, n_kraus), parts


def random_tom_density(rng: np.random.Generator, t: Tom, sites: Optional[Iterable] = None) -> TomDensity:
    sites = list(t.vertices if sites is None else sites)
    w = rng.dirichlet(np.ones(len(sites)))
    return TomDensity({s: p * random_density(rng, t.dim) for s, p in zip(sites, w)})


def random_site_projectors(rng: np.random.Generator, t: Tom, max_sites: Optional[int] = None) -> Dict:
    """Random admissible subspace: random nonzero ranges on a random set of sites."""
    n = t.n if max_sites is None else min(max_sites, t.n)
    k = int(rng.integers(1, n + 1))
    chosen = rng.choice(t.n, size=k, replace=False)
    out = {}
    for c in sorted(chosen):
        r = int(rng.integers(1, t.dim + 1))
        v = random_isometry(rng, t.dim, r)
        out[t.vertices[c]] = v @ la.dagger(v)
    return out
