"""Command-line front end.

    qmcr validate MODEL
    qmcr recur    MODEL [--subspace S] [--state R] [--method auto|solve|extrapolate|mc]
    qmcr schur    MODEL [--subspace S] --z RE,IM
    qmcr split    MODEL (--detect | --verify SPLIT.json)
    qmcr kac      MODEL --state PSI
    qmcr sweep    MODEL --param NAME=START:STOP:STEP [--site I]

MODEL is a path or the name of a bundled model.  ``--param NAME=VALUE``
binds model parameters.  Exit codes: 0 success, 2 invalid input or model,
3 numerical non-convergence.
"""

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from . import __version__
from . import channels as ch
from . import chains1d as c1
from . import densela as la
from . import mcsim
from . import modelfile as mf
from . import recurrence as rc
from . import splitting as sp
from . import tom as tm
from .chains1d import ChainModel
from .config import DEFAULT
from .errors import ModelFileError, NoConvergence, QmcrError, ResolventSingular

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


class NumericFailure(Exception):
    """Raised inside a command to request exit code 3 with a report."""

    def __init__(self, message, results=None):
        super().__init__(message)
        self.results = results or {}


# --------------------------------------------------------------------------
# reports


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, frozenset):
        return sorted(_plain(v) for v in x)
    return x


@dataclass
class Report:
    command: List[str]
    version: str
    inputs_digest: str
    results: Dict[str, Any]
    diagnostics: List[str] = field(default_factory=list)
    timestamp: Optional[str] = None

    def to_json(self) -> str:
        doc = {"command": self.command, "version": self.version, "inputs_digest": self.inputs_digest,
               "results": _plain(self.results), "diagnostics": list(self.diagnostics)}
        if self.timestamp is not None:
            doc["timestamp"] = self.timestamp
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Report":
        d = json.loads(text)
        return cls(d["command"], d["version"], d["inputs_digest"], d["results"], d.get("diagnostics", []),
                   d.get("timestamp"))


def _digest(path: Path, args: Dict[str, Any]) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    h.update(json.dumps(_plain(args), sort_keys=True).encode())
    return h.hexdigest()


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("QMCR_THREADS", "1")))
    except ValueError:
        return 1


# --------------------------------------------------------------------------
# argument helpers


def _bindings(items) -> Dict[str, float]:
    out = {}
    for it in items or []:
        name, _, val = it.partition("=")
        if not _ or ":" in val:
            continue
        try:
            out[name.strip()] = float(val)
        except ValueError:
            raise ModelFileError(f"cannot read parameter value {val!r}", key=name) from None
    return out


def _sweep_spec(items):
    for it in items or []:
        name, _, val = it.partition("=")
        if ":" in val:
            try:
                a, b, s = (float(x) for x in val.split(":"))
            except ValueError:
                raise ModelFileError(f"sweep range must be START:STOP:STEP, got {val!r}", key=name) from None
            if s <= 0:
                raise ModelFileError("sweep step must be positive", key=name)
            n = int(np.floor((b - a) / s + 1e-9)) + 1
            return name.strip(), [round(a + k * s, 12) for k in range(n)]
    raise ModelFileError("sweep needs --param NAME=START:STOP:STEP")


def _z(text: str) -> complex:
    parts = text.split(",")
    try:
        if len(parts) == 1:
            return complex(float(parts[0]), 0.0)
        return complex(float(parts[0]), float(parts[1]))
    except ValueError:
        raise ModelFileError(f"--z expects RE,IM, got {text!r}") from None


def _default_subspace(model: mf.Model):
    if isinstance(model.system, ChainModel):
        return "site:0"
    return f"site:{model.system.vertices[0]}"


def _finite_state(model: mf.Model, h0, state: Optional[str]):
    if state is not None:
        return model.state(state)
    st = rc._h0_state(model.system, h0)
    return st


def _chain_site(model: mf.Model, subspace: Optional[str], state: Optional[str]):
    sub = subspace or _default_subspace(model)
    if not sub.startswith("site:") or "," in sub:
        raise ModelFileError("chain models monitor one whole site: use --subspace site:<i>")
    site = int(sub[5:])
    if state is None:
        rho = np.eye(model.dim, dtype=complex) / model.dim
    else:
        s, rho = model.state(state)
        if s != site:
            raise ModelFileError(f"state lives on site {s}, not on the monitored site {site}")
    return site, rho


# --------------------------------------------------------------------------
# commands


def cmd_validate(model: mf.Model, args) -> Dict[str, Any]:
    sysm = model.system
    if isinstance(sysm, ChainModel):
        problems = c1.validate_model(sysm, n=8)
        lo, hi = sysm.default_window(8)
        res = {"topology": model.topology, "column_residuals": sysm.column_residuals(lo, hi),
               "problems": problems, "valid": not problems}
        return res
    v = tm.validate(sysm)
    out = {"topology": "finite", "vertices": list(sysm.vertices), "column_residuals": v.column_residuals,
           "completely_positive": v.completely_positive, "trace_preserving": v.trace_preserving,
           "problems": v.failures, "valid": v.valid}
    if v.valid:
        out["irreducible"] = tm.is_irreducible(sysm)
        eye = np.eye(sysm.dim)
        rows = {}
        for i in sysm.vertices:
            ops = [b for j in sysm.vertices if sysm.has_block(i, j) for b in sysm.block(i, j).kraus]
            s = ch.kraus_sum(ch.KrausMap(ops, sysm.dim), adjoint=True) if ops else 0 * eye
            rows[i] = float(np.max(np.abs(s - eye)))
        out["unital_residuals"] = rows
        out["unital"] = all(r <= DEFAULT.tp for r in rows.values())
    return out


def _recur_mc(model, h0, rho, args):
    cfg = mcsim.TrajectoryConfig(args.shots, args.max_steps, args.seed, workers=_threads())
    if isinstance(model.system, ChainModel):
        site, r = rho
        w = model.system.window(*_mc_window(model.system, site, args.max_steps))
        est = mcsim.estimate(w, {site: np.eye(model.dim)}, tm.TomDensity({site: r}), cfg)
    else:
        if not isinstance(h0, rc.Admissible):
            est = mcsim.estimate(tm.embed_cptp(model.system), h0.projector, rho, cfg)
        else:
            est = mcsim.estimate(model.system, h0.projectors, rho, cfg)
    return est.as_dict()


def _mc_window(chain: ChainModel, site, steps):
    lo, _ = chain.default_window(0)
    if chain.kind == "line":
        lo = site - steps - 1
    return lo, site + steps + 1


def cmd_recur(model: mf.Model, args) -> Dict[str, Any]:
    if isinstance(model.system, ChainModel):
        site, rho = _chain_site(model, args.subspace, args.state)
        if args.method == "mc":
            return {"site": site, "mc": _recur_mc(model, None, (site, rho), args)}
        rep = c1.truncate_numeric(model.system, max(args.window, site + 2), site, rho)
        out = {"site": site, **rep.as_dict()}
        if not rep.converged:
            raise NumericFailure("window doubling did not converge", out)
        return out
    h0 = model.subspace(args.subspace or _default_subspace(model))
    if isinstance(h0, rc.General) and args.state is None:
        rho = h0.projector / h0.rank
    else:
        rho = _finite_state(model, h0, args.state)
    if isinstance(h0, rc.General):
        system = tm.embed_cptp(model.system)
        if isinstance(rho, tm.TomDensity):
            rho = rho.full(model.system)
    else:
        system = model.system
    if args.method == "mc":
        return {"mc": _recur_mc(model, h0, rho, args)}
    rep = rc.recurrence_report(system, h0, rho, n_terms=args.terms, method=args.method)
    return rep.as_dict()


def cmd_schur(model: mf.Model, args) -> Dict[str, Any]:
    z = _z(args.z)
    if abs(z) > 1 + 1e-12:
        raise ModelFileError("--z must lie in the closed unit disc")
    if isinstance(model.system, ChainModel):
        site, _ = _chain_site(model, args.subspace, None)
        m = max(0, int(np.ceil(np.log2(max(1, args.window)))))
        val, der, win = c1.truncated_site_schur(model.system, site, m, z)
        return {"site": site, "window": list(win), "z": z, "F": val, "dF": der}
    h0 = model.subspace(args.subspace or _default_subspace(model))
    system = tm.embed_cptp(model.system) if isinstance(h0, rc.General) else model.system
    f = rc.SchurFn(system, h0)
    return {"z": z, "F": f.F(z, compressed=True), "dF": f.dF(z, compressed=True)}


def _partition_dict(p: sp.Partition):
    return {"minus": sorted(p.minus, key=str), "zero": sorted(p.zero, key=str), "plus": sorted(p.plus, key=str)}


def _uniform_overlap(t, part):
    zero = part.zero_vertices(t)
    return tm.TomDensity({v: np.eye(t.dim) / (t.dim * len(zero)) for v in zero})


def _split_entry(t, part, kind, z=0.5):
    entry = {"partition": _partition_dict(part), "kind": kind}
    if kind == "decomposition":
        split = sp.build_decomposition(t, part)
    else:
        split = sp.detect_factorization(t, part)
        if split is None:
            entry["factorizable"] = False
            return entry
        entry["factorizable"] = True
    entry["reconstruction_residual"] = sp.reconstruction_residual(t, split)
    entry["schur_identity_residual"] = sp.fr_identity_residual(t, split, z)
    rho = _uniform_overlap(t, part)
    try:
        if kind == "decomposition":
            m = sp.split_metrics_decomposition(t, split, rho)
        else:
            m = sp.split_metrics_factorization(t, split, rho)
        entry["metrics"] = {"pi": m.pi, "tau": m.tau, "pi_left": m.pi_left, "pi_right": m.pi_right,
                            "tau_left": m.tau_left, "tau_right": m.tau_right,
                            "pi_residual": m.pi_residual, "tau_residual": m.tau_residual,
                            "consistent": m.consistent}
    except QmcrError as exc:
        entry["metrics_error"] = str(exc)
    return entry


def _factorization_candidates(t: tm.Tom, limit: int = 10):
    if t.n > limit:
        return []
    out = {}
    verts = list(t.vertices)
    for v in verts:
        rest = [u for u in verts if u != v]
        for mask in range(1, 2 ** len(rest) - 1):
            minus = {u for k, u in enumerate(rest) if mask >> k & 1}
            plus = set(rest) - minus
            p = sp.Partition(minus, {v}, plus)
            if sp.satisfies_factorization(t, p) and not sp.satisfies_decomposition(t, p):
                out[(tuple(sorted(map(str, minus))), str(v))] = p
    return list(out.values())


def cmd_split(model: mf.Model, args) -> Dict[str, Any]:
    t = model.system
    if isinstance(t, ChainModel):
        site = 1 if t.kind == "halfline" else 0
        w, dec = c1.window_decomposition(t, site, args.window)
        return {"window": [w.vertices[0], w.vertices[-1]], "splits": [_split_entry(w, dec.partition, "decomposition")]}
    if args.verify:
        try:
            spec = json.loads(Path(args.verify).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ModelFileError(f"cannot read split file: {exc}", path=args.verify) from None
        lab = model.label
        try:
            part = sp.Partition({lab(x) for x in spec["minus"]}, {lab(x) for x in spec["zero"]},
                                {lab(x) for x in spec["plus"]})
        except KeyError as exc:
            raise ModelFileError(f"missing key {exc}", path=args.verify) from None
        part.check_cover(t)
        kind = spec.get("kind", "decomposition")
        if kind == "decomposition" and not sp.satisfies_decomposition(t, part):
            raise ModelFileError("the partition connects the two sides directly", path=args.verify)
        if kind == "factorization" and not sp.satisfies_factorization(t, part):
            raise ModelFileError("the partition has moves from V- into V+", path=args.verify)
        return {"splits": [_split_entry(t, part, kind)]}
    found = [_split_entry(t, p, "decomposition") for p in sp.detect_decompositions(t)]
    found += [_split_entry(t, p, "factorization") for p in _factorization_candidates(t)]
    return {"splits": found}


def cmd_kac(model: mf.Model, args) -> Dict[str, Any]:
    t = model.system
    if isinstance(t, ChainModel):
        raise ModelFileError("kac needs a finite model")
    site, psi = model.pure_state(args.state)
    phi = tm.embed_cptp(t)
    states = ch.invariant_states(phi)
    if len(states) != 1:
        raise NumericFailure(f"invariant state is not unique ({len(states)} found)")
    chi = states[0]
    big = np.zeros(t.n * t.dim, dtype=complex)
    big[np.arange(t.dim) * t.n + t.index(site)] = psi
    res = rc.kac_correction(phi, chi, big)
    direct = rc.expected_return_time(phi, big, np.outer(big, big.conj()))
    return {"site": site, "ideal": res.ideal, "correction": res.correction, "tau": res.tau,
            "tau_direct": direct, "product_residual": abs(res.tau - direct)}


def _sweep_point(path, bindings, name, value, site, state, window):
    b = dict(bindings)
    b[name] = value
    model = mf.load(path, b)
    if isinstance(model.system, ChainModel):
        s, rho = _chain_site(model, f"site:{site}", state)
        rep = c1.truncate_numeric(model.system, max(window, s + 2), s, rho)
        return value, rep.pi, rep.tau, rep.converged
    h0 = model.subspace(f"site:{site}")
    rho = _finite_state(model, h0, state)
    rep = rc.recurrence_report(model.system, h0, rho, n_terms=0)
    return value, rep.pi, rep.tau, True


def cmd_sweep(model: mf.Model, args) -> str:
    name, values = _sweep_spec(args.param)
    if name not in model.parameters:
        raise ModelFileError(f"unknown parameter {name!r}", path=model.path, key="parameters")
    site = args.site if args.site is not None else (0 if isinstance(model.system, ChainModel) else model.system.vertices[0])
    fixed = _bindings(args.param)
    with ThreadPoolExecutor(max_workers=_threads()) as ex:
        rows = list(ex.map(lambda v: _sweep_point(model.path, fixed, name, v, site, args.state, args.window),
                           values))
    rows.sort(key=lambda r: r[0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([name, "pi", "tau", "converged"])
    for v, pi, tau, ok in rows:
        w.writerow([format(v, ".17g"), format(pi, ".17g"), format(tau, ".17g"), int(ok)])
    if not all(r[3] for r in rows):
        raise NumericFailure("some sweep points did not converge", {"csv": buf.getvalue()})
    return buf.getvalue()


COMMANDS = {"validate": cmd_validate, "recur": cmd_recur, "schur": cmd_schur, "split": cmd_split,
            "kac": cmd_kac, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qmcr", description="Monitored recurrence for quantum Markov chains.")
    ap.add_argument("--version", action="version", version=f"qmcr {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("model", help="model file or bundled model name")
        p.add_argument("--param", action="append", default=[], metavar="NAME=VALUE")
        p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp field")
        p.add_argument("--output", "-o", help="write the report here instead of stdout")
        p.add_argument("--window", type=int, default=16, help="starting window for chain models")
        return p

    common(sub.add_parser("validate", help="TP/CP/irreducibility/unitality summary"))
    p = common(sub.add_parser("recur", help="return probability, mean return time and series"))
    p.add_argument("--subspace")
    p.add_argument("--state")
    p.add_argument("--method", choices=["auto", "solve", "extrapolate", "mc"], default="auto")
    p.add_argument("--terms", type=int, default=10)
    p.add_argument("--shots", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=1000)
    p = common(sub.add_parser("schur", help="reduced Schur function at z"))
    p.add_argument("--subspace")
    p.add_argument("--z", required=True, metavar="RE,IM")
    p = common(sub.add_parser("split", help="overlapping decompositions and factorizations"))
    g = p.add_mutually_exclusive_group()
    g.add_argument("--detect", action="store_true", default=True)
    g.add_argument("--verify", metavar="SPLIT.json")
    p = common(sub.add_parser("kac", help="Kac ideal value and correction"))
    p.add_argument("--state", required=True)
    p = common(sub.add_parser("sweep", help="CSV of (parameter, pi, tau)"))
    p.add_argument("--site", type=int)
    p.add_argument("--state")
    return ap


def _emit(text: str, args):
    if getattr(args, "output", None):
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    args = ap.parse_args(argv)
    diagnostics: List[str] = []
    code = EXIT_OK
    try:
        path = mf.resolve_path(args.model)
        model = mf.load(path, _bindings(args.param))
        digest = _digest(path, {k: v for k, v in vars(args).items() if k not in ("output", "no_timestamp")})
        try:
            results = COMMANDS[args.command](model, args)
        except NumericFailure as exc:
            results = exc.results
            diagnostics.append(str(exc))
            code = EXIT_NUMERIC
        except (NoConvergence, ResolventSingular) as exc:
            results = {}
            diagnostics.append(f"{type(exc).__name__}: {exc}")
            code = EXIT_NUMERIC
    except (ModelFileError, ValueError, KeyError) as exc:
        sys.stderr.write(f"qmcr: error: {exc}\n")
        return EXIT_INVALID
    except QmcrError as exc:
        sys.stderr.write(f"qmcr: error: {type(exc).__name__}: {exc}\n")
        return EXIT_INVALID
    if args.command == "sweep" and isinstance(results, str):
        _emit(results, args)
        return code
    if args.command == "validate" and not results.get("valid", True):
        code = EXIT_INVALID
        diagnostics.extend(results.get("problems", []))
    stamp = None if args.no_timestamp else datetime.now(timezone.utc).isoformat(timespec="seconds")
    rep = Report(["qmcr"] + argv, __version__, digest, results, diagnostics, stamp)
    _emit(rep.to_json(), args)
    return code


if __name__ == "__main__":
    sys.exit(main())
