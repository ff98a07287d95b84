"""Nearest-neighbour TOMs on the half-line and on the line.

A chain model is a finite set of explicit boundary blocks plus a homogeneous
bulk rule ``offset -> CP map`` with ``offset = target - source`` in
``{-1, 0, +1}``.  The Schur function of a site splits over the two rays
leaving it::

    f_s(z) = E_ss + sum_rays z E(s <- k1) (I - z r_k1(z))^-1 E(k1 <- s)
    r_k(z) = E_kk + z E(k <- k') (I - z r_k'(z))^-1 E(k' <- k)

where ``k'`` is the next site further out on the ray.  Truncation to a
finite window drops every block that leaves it (absorbing boundary), so the
window's return statistics are lower bounds that increase with the window.
Homogeneous tails of length ``2**m + 1`` are eliminated by cyclic reduction
in ``m`` steps, so very long windows are cheap.  Derivatives in ``z`` are
propagated alongside values (forward mode).
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import channels as ch
from . import densela as la
from . import recurrence as rc
from .channels import KrausMap
from .config import DEFAULT, Tolerances
from .errors import BranchCut, HypothesisViolated, SingularIterate, SingularMatrix
from .tom import Tom, TomDensity

INF = float("inf")


# --------------------------------------------------------------------------
# models


@dataclass
class ChainModel:
    """Nearest-neighbour chain on ``{0, 1, ...}`` (half-line) or on the integers (line)."""

    kind: str
    dim: int
    boundary: Dict[Tuple[int, int], Optional[KrausMap]]
    bulk: Dict[int, Optional[KrausMap]]

    def __post_init__(self):
        if self.kind not in ("halfline", "line"):
            raise ValueError("kind must be 'halfline' or 'line'")
        for (i, j) in self.boundary:
            if abs(i - j) > 1:
                raise ValueError(f"boundary block {i}<-{j} is not nearest-neighbour")
            if self.kind == "halfline" and (i < 0 or j < 0):
                raise ValueError("half-line sites are nonnegative")
        for o in self.bulk:
            if o not in (-1, 0, 1):
                raise ValueError("bulk offsets must be -1, 0 or +1")

    def exists(self, i):
        return self.kind == "line" or i >= 0

    def block(self, i, j) -> Optional[KrausMap]:
        if abs(i - j) > 1 or not (self.exists(i) and self.exists(j)):
            return None
        if (i, j) in self.boundary:
            return self.boundary[(i, j)]
        return self.bulk.get(i - j)

    def superop(self, i, j) -> Optional[np.ndarray]:
        b = self.block(i, j)
        if b is None or b.is_zero:
            return None
        return np.asarray(b.matrix)

    @property
    def right_tail_start(self):
        return max([max(i, j) for i, j in self.boundary] + [0]) + 1

    @property
    def left_tail_start(self):
        return min([min(i, j) for i, j in self.boundary] + [0]) - 1

    def window(self, lo: int, hi: int) -> Tom:
        """Explicit TOM on sites ``lo..hi``; blocks leaving the window are dropped."""
        sites = list(range(lo, hi + 1))
        blocks = {}
        for j in sites:
            for i in (j - 1, j, j + 1):
                if lo <= i <= hi:
                    b = self.block(i, j)
                    if b is not None and not b.is_zero:
                        blocks[(i, j)] = b
        return Tom(sites, self.dim, blocks)

    def default_window(self, n: int) -> Tuple[int, int]:
        return (0, n) if self.kind == "halfline" else (-n - 1, n)

    def column_residuals(self, lo: int, hi: int) -> Dict[int, float]:
        """TP residual of every full column in ``lo..hi`` (infinite model)."""
        out = {}
        for j in range(lo, hi + 1):
            if not self.exists(j):
                continue
            ops = []
            for i in (j - 1, j, j + 1):
                b = self.block(i, j)
                if b is not None:
                    ops.extend(b.kraus)
            s = ch.kraus_sum(KrausMap(ops, self.dim)) if ops else np.zeros((self.dim, self.dim))
            out[j] = float(np.max(np.abs(s - np.eye(self.dim))))
        return out

    def invertibility(self, lo: int, hi: int, tol: Tolerances = DEFAULT) -> Dict[Tuple[int, int], bool]:
        out = {}
        for j in range(lo, hi + 1):
            for i in (j - 1, j + 1):
                if self.exists(i) and self.exists(j):
                    m = self.superop(i, j)
                    out[(i, j)] = m is not None and la.min_singular(m) >= tol.invertible
        return out


class HalfLineModel(ChainModel):
    def __init__(self, dim, boundary, bulk):
        super().__init__("halfline", dim, boundary, bulk)


class LineModel(ChainModel):
    def __init__(self, dim, boundary, bulk):
        super().__init__("line", dim, boundary, bulk)


def validate_model(model: ChainModel, n: int = 8, tol: Tolerances = DEFAULT) -> List[str]:
    """Column TP and invertible off-diagonal blocks on the central window."""
    lo, hi = model.default_window(n)
    out = [f"column {j}: trace-preservation residual {r:.3e}"
           for j, r in model.column_residuals(lo, hi).items() if r > tol.tp]
    out += [f"block {i}<-{j} is not invertible" for (i, j), ok in model.invertibility(lo, hi, tol).items() if not ok]
    return out


@dataclass
class HomogeneousParams:
    lam: float
    phi: KrausMap
    phi_plus: KrausMap
    phi_zero: KrausMap
    phi_minus: KrausMap

    def __post_init__(self):
        if not 0 < self.lam < 1:
            raise ValueError("lambda must lie in (0, 1)")

    def validate(self, tol: Tolerances = DEFAULT) -> List[str]:
        problems = []
        if not ch.is_trace_preserving(self.phi, tol):
            problems.append("phi is not trace preserving")
        if not ch.is_trace_preserving(self.phi_plus, tol):
            problems.append("phi_plus is not trace preserving")
        if not ch.is_trace_preserving(self.phi_zero + self.phi_minus, tol):
            problems.append("phi_zero + phi_minus is not trace preserving")
        for name in ("phi", "phi_plus", "phi_minus"):
            if la.min_singular(getattr(self, name).matrix) < tol.invertible:
                problems.append(f"{name} is not invertible")
        return problems

    @property
    def dim(self):
        return self.phi.dim

    @property
    def psi(self):
        """``4 lam (1 - lam) Phi^2``."""
        m = self.phi.matrix
        return 4 * self.lam * (1 - self.lam) * (m @ m)

    def with_lam(self, lam):
        return HomogeneousParams(lam, self.phi, self.phi_plus, self.phi_zero, self.phi_minus)


def _bulk(p: HomogeneousParams):
    return {-1: p.phi.scaled(p.lam), 0: None, 1: p.phi.scaled(1 - p.lam)}


def halfline_model(p: HomogeneousParams) -> ChainModel:
    lam = p.lam
    boundary = {(0, 0): p.phi_zero, (0, 1): p.phi_plus.scaled(lam), (1, 0): p.phi_minus, (1, 1): None}
    return HalfLineModel(p.dim, boundary, _bulk(p))


def line_model(p: HomogeneousParams) -> ChainModel:
    lam = p.lam
    boundary = {
        (-1, 0): p.phi_minus.scaled(lam),
        (0, 0): p.phi_zero,
        (1, 0): p.phi_minus.scaled(1 - lam),
        (0, -1): p.phi_plus.scaled(1 - lam),
        (0, 1): p.phi_plus.scaled(lam),
        (-1, -1): None,
        (1, 1): None,
    }
    return LineModel(p.dim, boundary, _bulk(p))


# --------------------------------------------------------------------------
# forward-mode jets (value, derivative)


class _Jet:
    __slots__ = ("v", "d")
    __array_ufunc__ = None  # make ndarray @ _Jet defer to __rmatmul__

    def __init__(self, v, d):
        self.v, self.d = v, d

    def __add__(self, o):
        o = _lift(o)
        return _Jet(self.v + o.v, self.d + o.d)

    def __sub__(self, o):
        o = _lift(o)
        return _Jet(self.v - o.v, self.d - o.d)

    def __matmul__(self, o):
        o = _lift(o)
        return _Jet(self.v @ o.v, self.d @ o.v + self.v @ o.d)

    def __rmatmul__(self, o):
        return _lift(o) @ self

    def scale(self, s: "_Jet"):
        """Multiply by a scalar jet."""
        return _Jet(s.v * self.v, s.d * self.v + s.v * self.d)

    def inv(self):
        try:
            vi = la.inv(self.v)
        except SingularMatrix as exc:
            raise SingularIterate(str(exc)) from exc
        return _Jet(vi, -vi @ self.d @ vi)


def _lift(x):
    if isinstance(x, _Jet):
        return x
    x = np.asarray(x)
    return _Jet(x, np.zeros_like(x))


def _zjet(z, derivative=True):
    return _Jet(complex(z), 1.0 + 0j if derivative else 0j)


# --------------------------------------------------------------------------
# ray recursion


def _zero(n):
    return np.zeros((n, n), dtype=complex)


def _tail_r(s, a, b, m: int, z: _Jet):
    """``r`` at the first site of a homogeneous ray of ``2**m + 1`` sites
    (diagonal ``s``, outward coupling ``a = E(k <- k')``, return ``b = E(k' <- k)``)."""
    n = s.shape[0]
    eye = np.eye(n, dtype=complex)
    s_j = _lift(s)
    d0 = _lift(eye) - s_j.scale(z)
    db, de = d0, d0
    at, bt = _lift(a), _lift(b)
    cs = _lift(_zero(n))
    z2 = _Jet(z.v * z.v, 2 * z.v * z.d)
    for _ in range(m):
        dbi = db.inv()
        t1 = at @ dbi @ bt
        t2 = bt @ dbi @ at
        cs = cs + t1.scale(z)
        db = db - (t1 + t2).scale(z2)
        de = de - t2.scale(z2)
        at = (at @ dbi @ at).scale(z)
        bt = (bt @ dbi @ bt).scale(z)
    return s_j + cs + (at @ de.inv() @ bt).scale(z)


def _ray_r(model: ChainModel, first: int, step: int, last: int, z: _Jet):
    """``r`` at site ``first`` for the ray ``first, first+step, ..., last``."""
    n = model.dim ** 2
    zero = _zero(n)

    def get(i, j):
        m = model.superop(i, j)
        return zero if m is None else m

    if step > 0:
        tail0 = model.right_tail_start
        homogeneous = model.kind in ("halfline", "line")
    else:
        tail0 = model.left_tail_start
        homogeneous = model.kind == "line"
    count = (last - first) // step + 1
    # the last 2**m + 1 homogeneous sites are reduced in m steps, the rest explicitly
    r = None
    tail_len = 0
    if homogeneous:
        tail_len = max(0, min(count, (last - tail0) // step + 1))
    explicit = count
    if tail_len >= 1:
        m = int(np.floor(np.log2(tail_len - 1))) if tail_len > 1 else -1
        k0 = last - step * (2 ** m if m >= 0 else 0)
        s, a, b = get(k0, k0), get(k0, k0 + step), get(k0 + step, k0)
        r = _tail_r(s, a, b, m, z) if m >= 0 else _lift(s)
        explicit = (k0 - first) // step
    prefix = range(first, first + step * explicit, step)
    eye = np.eye(n, dtype=complex)
    for k in reversed(prefix):
        s = _lift(get(k, k))
        if r is None:
            r = s
            continue
        out, back = get(k, k + step), get(k + step, k)
        g = (_lift(eye) - r.scale(z)).inv()
        r = s + (out @ g @ back).scale(z)
    return r


def _site_schur(model: ChainModel, site: int, lo: int, hi: int, z: _Jet) -> _Jet:
    n = model.dim ** 2
    eye = np.eye(n, dtype=complex)
    f = _lift(model.superop(site, site) if model.superop(site, site) is not None else _zero(n))
    for step, end in ((1, hi), (-1, lo)):
        k1 = site + step
        if (end - k1) * step < 0 or not model.exists(k1):
            continue
        out, back = model.superop(site, k1), model.superop(k1, site)
        if out is None or back is None:
            continue
        r = _ray_r(model, k1, step, end, z)
        g = (_lift(eye) - r.scale(z)).inv()
        f = f + (out @ g @ back).scale(z)
    return f


def _window_for(model: ChainModel, site: int, m: int):
    """Window whose homogeneous tails have ``2**m + 1`` sites on each open side."""
    hi = model.right_tail_start + 2 ** m
    if model.kind == "halfline":
        lo = 0
    else:
        lo = model.left_tail_start - 2 ** m
    return lo, max(hi, site + 1)


def truncated_site_schur(model: ChainModel, site: int, m: int, z=1.0):
    """Value and z-derivative of the site Schur function on the window of level ``m``."""
    lo, hi = _window_for(model, site, m)
    j = _site_schur(model, site, lo, hi, _zjet(z))
    return j.v, j.d, (lo, hi)


# --------------------------------------------------------------------------
# iterates and closed forms


def iterate_schur(f, e_ii, e_down, e_up, z, tol: Tolerances = DEFAULT):
    """``f_{i+1} = z^-1 I - E(i+1 <- i) (f_i - E(i <- i))^-1 E(i <- i+1)``."""
    f = np.asarray(f)
    n = f.shape[0]
    e_ii = _zero(n) if e_ii is None else np.asarray(e_ii)
    try:
        mid = la.inv(f - e_ii, tol)
    except SingularMatrix as exc:
        raise SingularIterate(str(exc)) from exc
    return np.eye(n) / z - np.asarray(e_down) @ mid @ np.asarray(e_up)


def assemble_f0(f1, e00, e01, e10, z, tol: Tolerances = DEFAULT):
    """``f = E00 + z E01 (I - z f1)^-1 E10``."""
    f1 = np.asarray(f1)
    n = f1.shape[0]
    e00 = _zero(n) if e00 is None else np.asarray(e00)
    if e01 is None or e10 is None:
        return e00.copy()
    try:
        g = la.inv(np.eye(n) - z * f1, tol)
    except SingularMatrix as exc:
        raise SingularIterate(str(exc)) from exc
    return e00 + z * np.asarray(e01) @ g @ np.asarray(e10)


def closed_form_f1(p: HomogeneousParams, z, tol: Tolerances = DEFAULT) -> np.ndarray:
    """``f1(z) = (I - sqrt(I - 4 lam (1-lam) z^2 Phi^2)) / (2z)`` on the principal branch."""
    z = complex(z)
    n = p.dim ** 2
    if z == 0:
        return _zero(n)
    m = np.eye(n) - z * z * p.psi
    root = la.principal_sqrt(m, tol)
    return (np.eye(n) - root) / (2 * z)


def fixed_point_f1(p: HomogeneousParams, z, iterations: int = 200) -> np.ndarray:
    """Iterate ``f1 <- lam (1-lam) z Phi (I - z f1)^-1 Phi`` from zero."""
    phi = p.phi.matrix
    n = phi.shape[0]
    c = p.lam * (1 - p.lam) * z
    f = _zero(n)
    for _ in range(iterations):
        f = c * phi @ np.linalg.solve(np.eye(n) - z * f, phi)
    return f


def _minus_part(p: HomogeneousParams, z, tol):
    pinv = la.inv(p.phi.matrix, tol)
    return p.phi_plus.matrix @ pinv @ closed_form_f1(p, z, tol) @ pinv @ p.phi_minus.matrix


def closed_form_f_halfline(p: HomogeneousParams, z, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Schur function of site 0 on the half-line."""
    return p.phi_zero.matrix + _minus_part(p, z, tol) / (1 - p.lam)


def closed_form_f_line(p: HomogeneousParams, z, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Schur function of site 0 on the line, ``Phi0 + 2 f^-``."""
    return p.phi_zero.matrix + 2 * _minus_part(p, z, tol)


def scalar_f1_trace(lam, z):
    """``Tr f1(z) rho`` for any density: ``(1 - sqrt(1 - 4 lam (1-lam) z^2)) / (2z)``."""
    z = complex(z)
    if z == 0:
        return 0.0
    return (1 - np.sqrt(1 - 4 * lam * (1 - lam) * z * z)) / (2 * z)


@dataclass
class ChainReport:
    pi: float
    tau: float
    recurrent: bool
    positive_recurrent: bool
    method: str
    trace: List[Tuple[int, float, float]] = field(default_factory=list)
    converged: bool = True
    pi_richardson: Optional[float] = None
    notes: List[str] = field(default_factory=list)

    def as_dict(self):
        return {
            "pi": self.pi, "tau": self.tau, "recurrent": self.recurrent,
            "positive_recurrent": self.positive_recurrent, "method": self.method,
            "trace": [list(t) for t in self.trace], "converged": self.converged,
            "pi_richardson": self.pi_richardson, "notes": list(self.notes),
        }


def _tr(m, rho):
    return float(np.real(np.trace(la.unvec(np.asarray(m) @ la.vec(np.asarray(rho, dtype=complex)), rho.shape[0]))))


def _closed_report(pi, tau, method="closed-form", deficit=1e-12):
    rec = pi >= 1 - deficit
    return ChainReport(pi, tau, rec, rec and np.isfinite(tau), method)


def halfline_site_metrics(p: HomogeneousParams, site: int, rho) -> ChainReport:
    """Closed-form return probability and mean return time at site 0 or 1."""
    lam = p.lam
    rho = np.asarray(rho, dtype=complex)
    if site == 0:
        t = _tr(p.phi_minus.matrix, rho)
        pi = 1 - (1 - 2 * lam) / (1 - lam) * t if lam < 0.5 else 1.0
        tau = 1 + t / (2 * lam - 1) if lam > 0.5 else INF
    elif site == 1:
        pi = min(2 * lam, 1.0)
        if lam > 0.5:
            n = p.dim ** 2
            g = la.inv(np.eye(n) - p.phi_zero.matrix)
            tau = lam * (1 / (2 * lam - 1) + _tr(g @ p.phi_plus.matrix, rho))
        else:
            tau = INF
    else:
        raise ValueError("closed forms are available for sites 0 and 1")
    return _closed_report(pi, tau)


def line_site0_metrics(p: HomogeneousParams, rho) -> ChainReport:
    t = _tr(p.phi_minus.matrix, np.asarray(rho, dtype=complex))
    pi = 1 - abs(1 - 2 * p.lam) * t
    return _closed_report(pi, INF)


# --------------------------------------------------------------------------
# folding


def _lift_kraus(b, a_idx, b_idx):
    e = np.zeros((2, 2))
    e[a_idx, b_idx] = 1.0
    return np.kron(e, b)


def fold_to_halfline(model: ChainModel) -> ChainModel:
    """Pair sites ``-i-1`` (component 0) and ``i`` (component 1) of a line model."""
    if model.kind != "line":
        raise ValueError("only line models can be folded")
    d = model.dim

    def src(i, comp):
        return -i - 1 if comp == 0 else i

    def folded_block(i, j):
        ops = []
        for a in (0, 1):
            for b in (0, 1):
                blk = model.block(src(i, a), src(j, b))
                if blk is not None:
                    ops.extend(_lift_kraus(k, a, b) for k in blk.kraus)
        return KrausMap(ops, 2 * d)

    reach = max(model.right_tail_start, -model.left_tail_start)
    boundary = {}
    for j in range(0, reach + 1):
        for i in (j - 1, j, j + 1):
            if 0 <= i <= reach:
                boundary[(i, j)] = folded_block(i, j)
    bulk = {}
    for o in (-1, 0, 1):
        neg, pos = model.bulk.get(-o), model.bulk.get(o)
        ops = []
        if neg is not None:
            ops.extend(_lift_kraus(k, 0, 0) for k in neg.kraus)
        if pos is not None:
            ops.extend(_lift_kraus(k, 1, 1) for k in pos.kraus)
        bulk[o] = KrausMap(ops, 2 * d) if ops else None
    return HalfLineModel(2 * d, boundary, bulk)


def embed_second(rho) -> np.ndarray:
    """A state of the original site ``i`` as a state of folded site ``i``."""
    rho = np.asarray(rho, dtype=complex)
    e = np.zeros((2, 2))
    e[1, 1] = 1.0
    return np.kron(e, rho)


def _partial_monitor(g: _Jet, pp, qq, z: _Jet) -> _Jet:
    n = pp.shape[0]
    inner = (_lift(np.eye(n)) - (_lift(qq) @ g).scale(z)).inv()
    return _lift(pp) @ g @ inner @ _lift(pp)


# --------------------------------------------------------------------------
# truncation


def _eval_rays(model, site, m, rho_vec, t, monitor=None):
    lo, hi = _window_for(model, site, m)
    z = _zjet(1.0)
    g = _site_schur(model, site, lo, hi, z)
    if monitor is not None:
        g = _partial_monitor(g, monitor[0], monitor[1], z)
    pi = float(np.real(t @ (g.v @ rho_vec)))
    dpi = float(np.real(t @ (g.d @ rho_vec)))
    return hi, pi, pi + dpi


def _eval_dense(model, site, m, rho_vec, t, monitor=None):
    lo, hi = _window_for(model, site, m)
    w = model.window(lo, hi)
    if monitor is None:
        h0 = rc.Admissible.sites(w, [site])
    else:
        h0 = rc.Admissible({site: monitor[2]})
    f = rc.SchurFn(w, h0)
    v = np.zeros(f.size, dtype=complex)
    k = w.index(site)
    n2 = model.dim ** 2
    v[k * n2:(k + 1) * n2] = rho_vec
    tv = f.space.t
    pi = float(np.real(tv @ (f.F(1.0) @ v)))
    dpi = float(np.real(tv @ (f.dF(1.0) @ v)))
    return hi, pi, pi + dpi


def truncate_numeric(model: ChainModel, n: int, site: int, rho, n_max: Optional[int] = None,
                     tol: Tolerances = DEFAULT, method: str = "rays", subspace=None,
                     critical_nmax: int = 2 ** 26) -> ChainReport:
    """Return statistics of ``site`` from windows of doubling size.

    ``rho`` lives on the internal space of ``site``.  ``subspace``, an
    optional projector on that internal space, monitors only part of the site
    (used for folded models).  The reported ``tau`` is the window's
    ``sum n pi_n``; it is declared infinite when the windows keep increasing
    it without settling, or when the limiting ``pi`` falls short of one.

    Windows grow from ``n`` by doubling up to ``n_max``.  Once ``tau`` is seen
    to diverge the deficit of ``pi`` decays only like ``1/N``; the limit is
    then raised to ``critical_nmax``, which costs a few extra reduction steps
    per doubling.
    """
    if n < site + 2:
        raise ValueError("the starting window must reach at least two sites past the monitored one")
    n_max = tol.truncation_nmax if n_max is None else n_max
    rho = np.asarray(rho, dtype=complex)
    d = model.dim
    rho_vec = la.vec(rho)
    t = la.vec(np.eye(d, dtype=complex))
    monitor = None
    if subspace is not None:
        p = np.asarray(subspace, dtype=complex)
        q = np.eye(d) - p
        monitor = (la.kron(p, p.conj()), la.kron(q, q.conj()), p)
    evaluate = _eval_rays if method == "rays" else _eval_dense
    trace: List[Tuple[int, float, float]] = []
    base = model.right_tail_start
    m = max(0, int(np.ceil(np.log2(max(1, n - base)))))
    converged = False
    tau_growing = False
    while True:
        trace.append(evaluate(model, site, m, rho_vec, t, monitor))
        if len(trace) >= 3:
            inc = [trace[k][2] - trace[k - 1][2] for k in (-2, -1)]
            # tau increments that do not shrink geometrically signal divergence
            tau_growing = inc[0] > 0 and inc[1] > 0.25 * inc[0]
            if tau_growing:
                n_max = max(n_max, critical_nmax)
        if len(trace) >= 2:
            dpi = abs(trace[-1][1] - trace[-2][1])
            dtau = abs(trace[-1][2] - trace[-2][2])
            if tau_growing:
                # critical case: pi creeps up like 1/N, so refine further
                if dpi < 0.1 * tol.truncation_tol:
                    converged = True
                    break
            elif dpi < tol.truncation_tol and dtau < tol.truncation_tol * max(1.0, abs(trace[-1][2])):
                converged = True
                break
        if base + 2 ** m >= n_max:
            break
        m += 1
    pi = trace[-1][1]
    rich = None
    if len(trace) >= 2:
        rich = 2 * trace[-1][1] - trace[-2][1]
    notes = []
    recurrent = pi >= 1 - tol.recurrence_deficit
    if not converged:
        notes.append("window doubling stopped at the size limit before convergence")
    if (tau_growing or not converged) and rich is not None and rich >= 1 - tol.recurrence_deficit:
        recurrent = True
    if tau_growing or not recurrent:
        tau = INF
    else:
        tau = trace[-1][2]
    if not converged and recurrent and not tau_growing:
        # tau still moving at the size limit: cannot certify finiteness
        if len(trace) >= 2 and abs(trace[-1][2] - trace[-2][2]) > tol.truncation_tol * max(1.0, tau):
            tau = INF
            notes.append("mean return time still growing at the size limit")
    return ChainReport(min(pi, 1.0), tau, recurrent, recurrent and np.isfinite(tau),
                       f"truncation-{method}", trace, converged, rich, notes)


def folded_site_metrics(model: ChainModel, n: int, site: int, rho, **kw) -> ChainReport:
    """Line-model statistics of ``site`` (>= 0) computed on the folded half-line."""
    if site < 0:
        raise ValueError("fold around a nonnegative site")
    folded = fold_to_halfline(model)
    d = model.dim
    p = np.kron(np.diag([0.0, 1.0]), np.eye(d))
    return truncate_numeric(folded, n, site, embed_second(rho), subspace=p, **kw)


def symmetric_unital_invariance(model_a: ChainModel, model_b: ChainModel, site: int, rho, n: int = 64,
                                tol: Tolerances = DEFAULT) -> Tuple[bool, float, float]:
    """Compare the return probability to ``site`` for two symmetric unital
    half-line models that differ only in columns ``0..site-1``.

    The comparison is made on a common absorbing window, where the left part
    is unchanged in the argument, so equality is exact up to rounding.
    """
    lo, hi = 0, site + n
    for mdl in (model_a, model_b):
        if mdl.kind != "halfline":
            raise HypothesisViolated("half-line models are required")
        for j in range(lo, hi):
            for i in (j - 1, j + 1):
                if i < 0:
                    continue
                x, y = mdl.superop(i, j), mdl.superop(j, i)
                if (x is None) != (y is None) or (x is not None and np.max(np.abs(x - y)) > tol.tp):
                    raise HypothesisViolated(f"blocks {i}<-{j} and {j}<-{i} differ")
        for i in range(lo, hi):
            ops = []
            for j in (i - 1, i, i + 1):
                b = mdl.block(i, j)
                if b is not None:
                    ops.extend(b.kraus)
            s = ch.kraus_sum(KrausMap(ops, mdl.dim), adjoint=True)
            if np.max(np.abs(s - np.eye(mdl.dim))) > tol.tp:
                raise HypothesisViolated(f"row {i} is not unital")
    for j in range(site, hi + 1):
        for i in (j - 1, j, j + 1):
            x, y = model_a.superop(i, j), model_b.superop(i, j)
            if (x is None) != (y is None) or (x is not None and np.max(np.abs(x - y)) > tol.tp):
                raise HypothesisViolated(f"models differ in column {j} >= {site}")
    wa = model_a.window(lo, hi)
    wb = model_b.window(lo, hi)
    rho_d = TomDensity({site: np.asarray(rho, complex)})
    h_a = rc.Admissible.sites(wa, [site])
    h_b = rc.Admissible.sites(wb, [site])
    pi_a = rc.return_probability(wa, h_a, rho_d, tol=tol)
    pi_b = rc.return_probability(wb, h_b, rho_d, tol=tol)
    return abs(pi_a - pi_b) <= 1e-6, pi_a, pi_b


def window_decomposition(model: ChainModel, site: int, n: int):
    """Window TOM and its overlap decomposition at ``site`` (V0 = {site}).

    On the half-line the sides are ``{0..site-1}`` and ``{site+1..}``; on the
    line ``{..-1}`` and ``{1..}`` around site 0.
    """
    from .splitting import Partition, build_decomposition

    lo, hi = model.default_window(n)
    hi = max(hi, site + 1)
    w = model.window(lo, hi)
    minus = [v for v in w.vertices if v < site]
    plus = [v for v in w.vertices if v > site]
    if not minus or not plus:
        raise ValueError("the overlap site must have neighbours on both sides")
    part = Partition(minus, [site], plus)
    return w, build_decomposition(w, part)
