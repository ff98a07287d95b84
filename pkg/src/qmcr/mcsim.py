"""Monte Carlo first-return statistics from pure-state trajectories.

Each step applies the channel by sampling one Kraus operator with its Born
weight, then measures the return projector.  A P outcome ends the
trajectory; a Q outcome collapses the state and the walk continues.

Systems are handled in a site-local form: a state is ``(site, psi)`` and
every site (column) carries its list of ``(target, B)`` moves.  A plain
channel is the one-site case.  All shots advance together as arrays.

Uniform variates are a stateless hash of ``(seed, trajectory, step, slot)``
(splitmix64 finalizer), so any split of the shots over workers reproduces
the serial result bit for bit.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Sequence, Union

import numpy as np

from . import densela as la
from .channels import KrausMap
from .errors import StateOutsideSubspace
from .tom import Tom, TomDensity

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

SLOT_KRAUS, SLOT_MEASURE, SLOT_SITE, SLOT_EIG = 0, 1, 2, 3


def _mix(x: np.ndarray) -> np.ndarray:
    x = x + _GOLDEN
    x = (x ^ (x >> np.uint64(30))) * _M1
    x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


def uniforms(seed: int, traj: np.ndarray, step: int, slot: int) -> np.ndarray:
    """Uniform doubles in [0, 1), one per trajectory index."""
    with np.errstate(over="ignore"):
        key = _mix(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
        x = _mix(key ^ _mix(np.asarray(traj, dtype=np.uint64)))
        x = _mix(x ^ np.uint64((step * 4 + slot) & 0xFFFFFFFFFFFFFFFF))
    return (x >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


@dataclass(frozen=True)
class TrajectoryConfig:
    shots: int
    max_steps: int
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.shots < 1 or self.max_steps < 1:
            raise ValueError("shots and max_steps must be positive")


@dataclass
class McEstimate:
    shots: int
    returned: int
    censored: int
    absorbed: int
    histogram: np.ndarray  # histogram[n] = fraction returning first at step n
    tau_sum: float
    tau_sq_sum: float

    @property
    def pi(self):
        return self.returned / self.shots

    @property
    def pi_se(self):
        p = self.pi
        return float(np.sqrt(max(p * (1 - p), 0.0) / self.shots))

    @property
    def pi_bracket(self):
        """Return probability if no censored trajectory returns / if all do."""
        return self.pi, (self.returned + self.censored) / self.shots

    @property
    def censored_fraction(self):
        return self.censored / self.shots

    @property
    def tau(self):
        """Mean return time conditional on returning within the step budget."""
        return self.tau_sum / self.returned if self.returned else float("nan")

    @property
    def tau_se(self):
        n = self.returned
        if n < 2:
            return float("nan")
        var = (self.tau_sq_sum - self.tau_sum ** 2 / n) / (n - 1)
        return float(np.sqrt(max(var, 0.0) / n))

    def as_dict(self):
        return {
            "shots": self.shots, "pi": self.pi, "pi_se": self.pi_se, "pi_bracket": list(self.pi_bracket),
            "tau": self.tau, "tau_se": self.tau_se, "censored_fraction": self.censored_fraction,
            "absorbed_fraction": self.absorbed / self.shots,
            "histogram": [float(x) for x in self.histogram],
        }


def _merge(parts: Sequence[McEstimate]) -> McEstimate:
    shots = sum(p.shots for p in parts)
    hist = sum(p.histogram * p.shots for p in parts) / shots
    return McEstimate(shots, sum(p.returned for p in parts), sum(p.censored for p in parts),
                      sum(p.absorbed for p in parts), hist,
                      sum(p.tau_sum for p in parts), sum(p.tau_sq_sum for p in parts))


class _SiteSystem:
    """Padded per-site move tables: ``ops[s, k]`` with target ``tgt[s, k]``."""

    def __init__(self, d: int, moves: Sequence[Sequence], projectors: Sequence[np.ndarray]):
        self.d = d
        self.n = len(moves)
        kmax = max(1, max(len(m) for m in moves))
        self.ops = np.zeros((self.n, kmax, d, d), dtype=complex)
        self.tgt = np.zeros((self.n, kmax), dtype=np.int64)
        for s, mv in enumerate(moves):
            for k, (t, b) in enumerate(mv):
                self.ops[s, k] = b
                self.tgt[s, k] = t
        self.proj = np.asarray(projectors, dtype=complex)


def _from_channel(phi: KrausMap, p: np.ndarray) -> _SiteSystem:
    return _SiteSystem(phi.dim, [[(0, b) for b in phi.kraus]], [p])


def _from_tom(t: Tom, projectors: Mapping) -> _SiteSystem:
    moves = []
    for j in t.vertices:
        moves.append([(t.index(i), b) for i, phi in t.column(j) for b in phi.kraus])
    z = np.zeros((t.dim, t.dim), dtype=complex)
    return _SiteSystem(t.dim, moves, [np.asarray(projectors.get(v, z), dtype=complex) for v in t.vertices])


def _pick(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise inverse-CDF draw; rows whose mass is below ``u`` get -1."""
    idx = (cum < u[:, None]).sum(axis=1)
    idx[idx >= cum.shape[1]] = -1
    return idx


def _run(sys: _SiteSystem, sites0, psi0, traj, seed: int, max_steps: int) -> McEstimate:
    shots = len(traj)
    site = sites0.copy()
    psi = psi0.copy()
    active = np.arange(shots)
    times = np.zeros(shots, dtype=np.int64)  # >0 return step, 0 censored, -1 absorbed
    for step in range(1, max_steps + 1):
        if active.size == 0:
            break
        s = site[active]
        cand = np.einsum("skab,sb->ska", sys.ops[s], psi[active])
        w = np.einsum("ska,ska->sk", cand, cand.conj()).real
        k = _pick(np.cumsum(w, axis=1), uniforms(seed, traj[active], step, SLOT_KRAUS))
        lost = k < 0
        if lost.any():
            times[active[lost]] = -1
        keep = ~lost
        act, k = active[keep], k[keep]
        rows = np.nonzero(keep)[0]
        new = cand[rows, k]
        new /= np.linalg.norm(new, axis=1)[:, None]
        ns = sys.tgt[s[keep], k]
        pv = np.einsum("sab,sb->sa", sys.proj[ns], new)
        p_ret = np.einsum("sa,sa->s", pv, pv.conj()).real
        hit = uniforms(seed, traj[act], step, SLOT_MEASURE) < p_ret
        times[act[hit]] = step
        stay = ~hit
        qv = new[stay] - pv[stay]
        qv /= np.linalg.norm(qv, axis=1)[:, None]
        act = act[stay]
        site[act] = ns[stay]
        psi[act] = qv
        active = act
    returned = times > 0
    hist = np.bincount(times[returned], minlength=max_steps + 1).astype(float) / shots
    tr = times[returned].astype(float)
    return McEstimate(shots, int(returned.sum()), int((times == 0).sum()), int((times < 0).sum()), hist,
                      float(tr.sum()), float((tr * tr).sum()))


def _initial(seed, traj, site_weights: Sequence[float], states: Sequence[np.ndarray], d: int):
    """Draw a site by its trace weight, then an eigenvector of that site's block."""
    cw = np.cumsum(site_weights)
    u = uniforms(seed, traj, 0, SLOT_SITE) * cw[-1]
    site = np.minimum((cw[None, :] < u[:, None]).sum(axis=1), len(cw) - 1)
    psi = np.zeros((len(traj), d), dtype=complex)
    ue = uniforms(seed, traj, 0, SLOT_EIG)
    for s, rho in enumerate(states):
        sel = site == s
        if not sel.any():
            continue
        vals, vecs = np.linalg.eigh(la.hermitize(rho))
        vals = np.clip(vals, 0, None)
        c = np.cumsum(vals) / vals.sum()
        k = np.minimum((c[None, :] < ue[sel][:, None]).sum(axis=1), len(c) - 1)
        psi[sel] = vecs[:, k].T
    return site, psi


def _check_support(states, projectors, tol=1e-9):
    for rho, p in zip(states, projectors):
        if rho is None:
            continue
        q = np.eye(p.shape[0]) - p
        if la.trace_norm(q @ rho @ q) > tol:
            raise StateOutsideSubspace("initial state is not supported in the return subspace")


def estimate(system: Union[KrausMap, Tom], projector, rho, config: TrajectoryConfig) -> McEstimate:
    """Aggregate ``config.shots`` trajectories.

    For a channel, ``projector`` is a matrix and ``rho`` a density matrix.  For
    a TOM, ``projector`` maps sites to internal projectors and ``rho`` is a
    :class:`TomDensity` (or a site -> matrix mapping).
    """
    if isinstance(system, Tom):
        projs = dict(projector)
        blocks = rho.blocks if isinstance(rho, TomDensity) else dict(rho)
        sys = _from_tom(system, projs)
        z = np.zeros((system.dim, system.dim), dtype=complex)
        states = [np.asarray(blocks.get(v, z), dtype=complex) for v in system.vertices]
        weights = [max(np.trace(r).real, 0.0) for r in states]
    else:
        p = np.asarray(projector, dtype=complex)
        sys = _from_channel(system, p)
        states = [np.asarray(rho, dtype=complex)]
        weights = [1.0]
    _check_support(states, sys.proj)
    n = config.shots
    workers = max(1, int(config.workers))
    bounds = np.linspace(0, n, workers + 1).astype(int)

    def chunk(a, b):
        traj = np.arange(a, b, dtype=np.uint64)
        s0, p0 = _initial(config.seed, traj, weights, states, sys.d)
        return _run(sys, s0, p0, traj, config.seed, config.max_steps)

    spans = [(bounds[i], bounds[i + 1]) for i in range(workers) if bounds[i + 1] > bounds[i]]
    if len(spans) == 1:
        return chunk(*spans[0])
    with ThreadPoolExecutor(max_workers=len(spans)) as ex:
        parts = list(ex.map(lambda ab: chunk(*ab), spans))
    return _merge(parts)


def sample_first_return(phi: KrausMap, projector, psi0, seed: int, trajectory: int = 0,
                        max_steps: int = 10_000) -> Optional[int]:
    """Return time of one trajectory, or ``None`` if censored (or absorbed)."""
    p = np.asarray(projector, dtype=complex)
    psi0 = np.asarray(psi0, dtype=complex).reshape(-1)
    psi0 = psi0 / np.linalg.norm(psi0)
    if np.linalg.norm(psi0 - p @ psi0) > 1e-9:
        raise StateOutsideSubspace("psi0 is not in the range of the projector")
    sys = _from_channel(phi, p)
    est = _run(sys, np.zeros(1, dtype=np.int64), psi0[None, :], np.array([trajectory], dtype=np.uint64),
               seed, max_steps)
    if est.returned:
        return int(np.nonzero(est.histogram)[0][0])
    return None
