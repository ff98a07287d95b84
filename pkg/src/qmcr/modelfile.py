"""JSON model files: parsing, parameter binding and located errors.

See ``docs/model-format.md`` for the format.  Structural checks run against
the bundled JSON schema; semantic checks (shapes, labels, weights) raise
:class:`ModelFileError` carrying the file, the key and the list index of the
offending entry.
"""

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

import jsonschema
import numpy as np

from . import densela as la
from .chains1d import ChainModel, HalfLineModel, LineModel
from .channels import KrausMap
from .errors import ModelFileError
from .recurrence import Admissible, General
from .tom import Tom, TomDensity

_SCHEMA = None


def schema() -> dict:
    global _SCHEMA
    if _SCHEMA is None:
        text = resources.files("qmcr").joinpath("schema/model.schema.json").read_text()
        _SCHEMA = json.loads(text)
    return _SCHEMA


def bundled_models() -> Dict[str, Path]:
    root = resources.files("qmcr").joinpath("models")
    return {p.name[:-5]: Path(str(p)) for p in root.iterdir() if p.name.endswith(".json")}


def resolve_path(name: Union[str, Path]) -> Path:
    """A file path, or the stem of a bundled model (``two_site``)."""
    p = Path(name)
    if p.exists():
        return p
    models = bundled_models()
    if str(name) in models:
        return models[str(name)]
    raise ModelFileError("no such model file or bundled model", path=str(name))


# --------------------------------------------------------------------------
# scalar and matrix literals


def _complex(x, where):
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return complex(x)
    if isinstance(x, list) and len(x) == 2 and all(isinstance(v, (int, float)) for v in x):
        return complex(x[0], x[1])
    raise ModelFileError("expected a number or an [re, im] pair", **where)


def _vector(v, d, where) -> np.ndarray:
    out = np.array([_complex(x, where) for x in v], dtype=complex)
    if out.shape != (d,):
        raise ModelFileError(f"vector of length {out.size}, expected {d}", **where)
    return out


def _matrix(m, d, where) -> np.ndarray:
    rows = [[_complex(x, where) for x in row] for row in m]
    if len(rows) != d or any(len(r) != d for r in rows):
        raise ModelFileError(f"matrix is not {d}x{d}", **where)
    return np.array(rows, dtype=complex)


def _weight(w: Mapping[str, float], params: Mapping[str, float], where) -> float:
    total = 0.0
    for name, coef in w.items():
        if name == "const":
            total += coef
        elif name in params:
            total += coef * params[name]
        else:
            raise ModelFileError(f"weight refers to unknown parameter {name!r}", **where)
    if total < -1e-12:
        raise ModelFileError(f"weight evaluates to {total:.6g} < 0", **where)
    return max(total, 0.0)


def _kraus_list(entries, d, params, path, key) -> KrausMap:
    ops = []
    for idx, e in enumerate(entries):
        where = {"path": path, "key": key, "index": idx}
        if isinstance(e, dict):
            m = _matrix(e["matrix"], d, where)
            s = math.sqrt(_weight(e.get("weight", {"const": 1.0}), params, where))
            ops.append(s * m)
        else:
            ops.append(_matrix(e, d, where))
    return KrausMap(ops, d)


def _split_key(key: str, path):
    try:
        a, b = key.split("<-")
    except ValueError:
        raise ModelFileError("block keys look like 'i<-j'", path=path, key=key) from None
    return a.strip(), b.strip()


# --------------------------------------------------------------------------
# parsed model


@dataclass
class Model:
    path: str
    doc: dict
    parameters: Dict[str, float]
    system: Union[Tom, ChainModel]
    notes: List[str] = field(default_factory=list)

    @property
    def topology(self):
        return self.doc["topology"]

    @property
    def dim(self):
        return int(self.doc["internal_dim"])

    @property
    def name(self):
        return self.doc.get("name", Path(self.path).stem)

    def label(self, text):
        """Map a label as written in the file to a vertex label."""
        if isinstance(self.system, Tom):
            for v in self.system.vertices:
                if str(v) == str(text):
                    return v
            raise ModelFileError(f"unknown vertex {text!r}", path=self.path)
        try:
            return int(text)
        except ValueError:
            raise ModelFileError(f"chain sites are integers, got {text!r}", path=self.path) from None

    # states ----------------------------------------------------------------

    def state(self, name: str):
        """Named state, or ``site:<label>`` for the normalized identity on that site.

        Returns a :class:`TomDensity` for finite models and ``(site, rho)`` for chains.
        """
        d = self.dim
        if name.startswith("site:"):
            lab = self.label(name[5:])
            blocks = {lab: np.eye(d, dtype=complex) / d}
        else:
            spec = self.doc.get("states", {}).get(name)
            if spec is None:
                raise ModelFileError(f"unknown state {name!r}", path=self.path, key="states")
            blocks = self._state_blocks(spec, f"states/{name}")
        if isinstance(self.system, ChainModel):
            if len(blocks) != 1:
                raise ModelFileError("chain states live on a single site", path=self.path, key=name)
            (site, rho), = blocks.items()
            return site, rho
        return TomDensity(blocks)

    def _state_blocks(self, spec, key):
        d = self.dim
        where = {"path": self.path, "key": key}

        def one(s, w=1.0):
            if "vector" in s:
                v = _vector(s["vector"], d, where)
                v = v / np.linalg.norm(v)
                return w * np.outer(v, v.conj())
            return w * _matrix(s["density"], d, where)

        if "sites" in spec:
            blocks = {self.label(k): one(s, s.get("weight", 1.0)) for k, s in spec["sites"].items()}
        elif "site" in spec:
            blocks = {self.label(spec["site"]): one(spec)}
        else:
            if not isinstance(self.system, Tom) or self.system.n != 1:
                raise ModelFileError("state needs 'site' or 'sites'", **where)
            blocks = {self.system.vertices[0]: one(spec)}
        total = sum(np.trace(b).real for b in blocks.values())
        if total <= 0:
            raise ModelFileError("state has zero trace", **where)
        return {k: b / total for k, b in blocks.items()}

    def pure_state(self, name: str):
        """``(site, psi)`` for a named pure state."""
        spec = self.doc.get("states", {}).get(name)
        if spec is None or "vector" not in spec:
            raise ModelFileError(f"{name!r} is not a named pure state", path=self.path, key="states")
        where = {"path": self.path, "key": f"states/{name}"}
        v = _vector(spec["vector"], self.dim, where)
        site = self.label(spec["site"]) if "site" in spec else self.system.vertices[0]
        return site, v / np.linalg.norm(v)

    # subspaces -------------------------------------------------------------

    def subspace(self, name: str):
        """Named subspace, or ``site:<a>,<b>`` for whole sites."""
        d = self.dim
        if name.startswith("site:"):
            labels = [self.label(x) for x in name[5:].split(",") if x]
            return Admissible({lab: np.eye(d, dtype=complex) for lab in labels})
        spec = self.doc.get("subspaces", {}).get(name)
        if spec is None:
            raise ModelFileError(f"unknown subspace {name!r}", path=self.path, key="subspaces")
        key = f"subspaces/{name}"
        where = {"path": self.path, "key": key}
        if "vectors" in spec:
            if not isinstance(self.system, Tom):
                raise ModelFileError("general subspaces need a finite model", **where)
            n = self.system.n * d
            vecs = [_vector(v, n, where) for v in spec["vectors"]]
            return General(la.orthonormal_basis(np.stack(vecs, axis=1)))
        out = {}
        for k, s in spec["sites"].items():
            lab = self.label(k)
            if s == "full":
                out[lab] = np.eye(d, dtype=complex)
            elif "vectors" in s:
                vecs = np.stack([_vector(v, d, where) for v in s["vectors"]], axis=1)
                b = la.orthonormal_basis(vecs)
                out[lab] = b @ la.dagger(b)
            else:
                out[lab] = _matrix(s["projector"], d, where)
        return Admissible(out)


def _location(err: jsonschema.ValidationError):
    parts = list(err.absolute_path)
    idx = next((p for p in reversed(parts) if isinstance(p, int)), None)
    key = "/".join(str(p) for p in parts if not isinstance(p, int)) or None
    return key, idx


def read_document(path: Union[str, Path]) -> dict:
    path = str(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ModelFileError("file not found", path=path) from None
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"invalid JSON: {exc.msg}", path=path, index=f"line {exc.lineno}") from None
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        e = errors[0]
        key, idx = _location(e)
        raise ModelFileError(e.message, path=path, key=key, index=idx)
    return doc


def build(doc: dict, path: str = "<memory>", bindings: Optional[Mapping[str, float]] = None) -> Model:
    params = dict(doc.get("parameters", {}))
    for k, v in (bindings or {}).items():
        if k not in params:
            raise ModelFileError(f"unknown parameter {k!r}", path=path, key="parameters")
        params[k] = float(v)
    d = int(doc["internal_dim"])
    topo = doc["topology"]
    if topo == "finite":
        if "vertices" not in doc or "blocks" not in doc:
            raise ModelFileError("finite models need 'vertices' and 'blocks'", path=path)
        verts = doc["vertices"]
        lookup = {str(v): v for v in verts}
        if len(lookup) != len(verts):
            raise ModelFileError("duplicate vertex labels", path=path, key="vertices")
        blocks = {}
        for key, entries in doc["blocks"].items():
            a, b = _split_key(key, path)
            if a not in lookup or b not in lookup:
                raise ModelFileError("block refers to an unknown vertex", path=path, key=f"blocks/{key}")
            blocks[(lookup[a], lookup[b])] = _kraus_list(entries, d, params, path, f"blocks/{key}")
        system = Tom(verts, d, blocks)
    else:
        if "boundary" not in doc or "repeat" not in doc:
            raise ModelFileError("chain models need 'boundary' and 'repeat'", path=path)
        boundary = {}
        for key, entries in doc["boundary"].items():
            a, b = _split_key(key, path)
            try:
                ij = (int(a), int(b))
            except ValueError:
                raise ModelFileError("chain sites are integers", path=path, key=f"boundary/{key}") from None
            boundary[ij] = _kraus_list(entries, d, params, path, f"boundary/{key}") if entries else None
        bulk = {}
        for key, entries in doc["repeat"].items():
            bulk[int(key)] = _kraus_list(entries, d, params, path, f"repeat/{key}") if entries else None
        cls = HalfLineModel if topo == "halfline" else LineModel
        try:
            system = cls(d, boundary, bulk)
        except ValueError as exc:
            raise ModelFileError(str(exc), path=path, key="boundary") from None
    return Model(path, doc, params, system)


def load(path: Union[str, Path], bindings: Optional[Mapping[str, float]] = None) -> Model:
    p = resolve_path(path)
    return build(read_document(p), str(p), bindings)


# --------------------------------------------------------------------------
# writing


def complex_literal(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def matrix_literal(m) -> list:
    m = np.asarray(m, dtype=complex)
    return [[complex_literal(x) for x in row] for row in m]


def tom_document(t: Tom, name: str = "") -> dict:
    """Serialize a TOM without parameters (Kraus operators written out)."""
    doc: Dict[str, Any] = {"schema_version": 1, "name": name, "internal_dim": t.dim, "topology": "finite",
                           "vertices": list(t.vertices), "blocks": {}}
    for (i, j), phi in t.blocks.items():
        doc["blocks"][f"{i}<-{j}"] = [matrix_literal(b) for b in phi.kraus]
    return doc
