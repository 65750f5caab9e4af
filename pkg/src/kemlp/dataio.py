"""File formats: CSV sensor logs, JSON documents and flat ``key=value`` reports.

Sensor log::

    id,dist,y,s_main,<model_id>...
    0,benign,1,1,1,0

JSON documents (graph spec, weights, world config) are validated against
fixed schemas; unknown fields are rejected and errors name the field path.
Floats are written with ``repr`` so every value round-trips exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from pathlib import Path
from typing import Optional, Union

import jsonschema
import numpy as np

from .errors import HeaderMismatchError, InvalidArgumentError, ParseError, SchemaError
from .graph import DISTS, AuxModel, Dist, GraphSpec, Kind, SensorData, Weights
from .simulator import WorldConfig
from .theory import BoundReport, RateProfile

PathLike = Union[str, Path]
FIXED_COLUMNS = ("id", "dist", "y", "s_main")
_INT = re.compile(r"-?[0-9]+\Z")
_ID_PATTERN = r"^[A-Za-z0-9_.\-]+$"

# ---------------------------------------------------------------------------
# sensor logs


def write_sensor_log(path: PathLike, spec: GraphSpec, data: SensorData) -> None:
    data.validate(spec)
    for mid in spec.model_ids:
        if not re.match(_ID_PATTERN, mid):
            raise InvalidArgumentError(f"model id {mid!r} cannot be used as a column name")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIXED_COLUMNS + spec.model_ids)
    labels = [d.label for d in DISTS]
    for i in range(len(data)):
        w.writerow([i, labels[data.dist[i]], int(data.y[i]), int(data.s_main[i]),
                    *(int(b) for b in data.aux[i])])
    Path(path).write_bytes(buf.getvalue().encode("ascii"))


def _int_cell(text: str, name: str, line: int, path: str) -> int:
    if not _INT.match(text):
        raise ParseError(f"column {name!r}: expected an integer, got {text!r}", line, path)
    return int(text)


def read_sensor_log(path: PathLike, spec: Optional[GraphSpec] = None) -> tuple[tuple[str, ...], SensorData]:
    """Parse a sensor log; returns ``(model_ids, data)``.

    With ``spec`` the header must list exactly the spec's model ids in order
    and every row is validated against it.
    """
    p = str(path)
    try:
        text = Path(path).read_bytes().decode("ascii")
    except UnicodeDecodeError as e:
        raise ParseError(f"non-ASCII byte at offset {e.start}", None, p) from None
    if "\r" in text:
        raise ParseError("CR line endings are not accepted", None, p)
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("missing header", 1, p)
    header = lines[0].split(",")
    if tuple(header[:4]) != FIXED_COLUMNS:
        raise ParseError(f"header must start with {','.join(FIXED_COLUMNS)}", 1, p)
    ids = tuple(header[4:])
    if len(set(ids)) != len(ids) or any(not re.match(_ID_PATTERN, m) for m in ids):
        raise ParseError("duplicate or malformed model id in header", 1, p)
    if spec is not None and ids != spec.model_ids:
        raise HeaderMismatchError(f"{p}: header models {list(ids)} do not match spec {list(spec.model_ids)}")
    K = len(ids)
    n = len(lines) - 1
    y = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.int8)
    s_main = np.empty(n, dtype=np.int64)
    aux = np.empty((n, K), dtype=np.int8)
    tags = {d.label: int(d) for d in DISTS}
    for r, line in enumerate(lines[1:]):
        ln = r + 2
        cells = line.split(",")
        if len(cells) != 4 + K:
            raise ParseError(f"expected {4 + K} fields, got {len(cells)}", ln, p)
        _int_cell(cells[0], "id", ln, p)
        if cells[1] not in tags:
            raise ParseError(f"unknown dist tag {cells[1]!r}", ln, p)
        dist[r] = tags[cells[1]]
        y[r] = _int_cell(cells[2], "y", ln, p)
        s_main[r] = _int_cell(cells[3], "s_main", ln, p)
        for k in range(K):
            v = _int_cell(cells[4 + k], ids[k], ln, p)
            if v not in (0, 1):
                raise ParseError(f"column {ids[k]!r}: expected 0 or 1, got {v}", ln, p)
            aux[r, k] = v
        if spec is not None:
            C = spec.num_classes
            if not (0 <= y[r] < C and 0 <= s_main[r] < C):
                raise ParseError(f"class index outside [0, {C})", ln, p)
        elif y[r] < 0 or s_main[r] < 0:
            raise ParseError("negative class index", ln, p)
    return ids, SensorData(y, dist, s_main, aux)


# ---------------------------------------------------------------------------
# JSON documents

_NUM = {"type": "number"}
_RATE = {"type": "number", "minimum": 0, "maximum": 1}
_PER_DIST = {
    "type": "object",
    "properties": {"benign": _RATE, "adversarial": _RATE},
    "required": ["benign", "adversarial"],
    "additionalProperties": False,
}

SPEC_SCHEMA = {
    "type": "object",
    "properties": {
        "num_classes": {"type": "integer", "minimum": 2},
        "aux_models": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "id": {"type": "string", "pattern": _ID_PATTERN},
                    "kind": {"enum": [k.value for k in Kind]},
                    "target": {"type": "integer", "minimum": 0},
                },
                "required": ["id", "kind", "target"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["num_classes", "aux_models"],
    "additionalProperties": False,
}

WEIGHTS_SCHEMA = {
    "type": "object",
    "properties": {
        "w_main": _NUM,
        "w_aux": {"type": "array", "items": _NUM},
        "bias": {"type": "array", "items": _NUM, "minItems": 2},
    },
    "required": ["w_main", "w_aux", "bias"],
    "additionalProperties": False,
}

WORLD_SCHEMA = {
    "type": "object",
    "properties": {
        "spec": SPEC_SCHEMA,
        "seed": {"type": "integer", "minimum": 0},
        "pi_adv": _RATE,
        "class_prior": {"type": "array", "items": _RATE, "minItems": 2},
        "main_alpha": _PER_DIST,
        "rates": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "properties": {"alpha": _PER_DIST, "eps": _PER_DIST},
                "required": ["alpha", "eps"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["spec", "pi_adv", "class_prior", "main_alpha", "rates"],
    "additionalProperties": False,
}


def _validate(doc, schema, path: str) -> None:
    err = jsonschema.exceptions.best_match(jsonschema.Draft7Validator(schema).iter_errors(doc))
    if err is not None:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        msg = err.message
        if err.validator == "additionalProperties":
            msg = f"unknown field: {msg}"
        raise SchemaError(f"{path}: {msg}", where)


def _load(path: PathLike):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except UnicodeDecodeError as e:
        raise ParseError(f"invalid UTF-8 at offset {e.start}", None, str(path)) from None
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, e.lineno, str(path)) from None


def _dump(path: PathLike, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def spec_to_doc(spec: GraphSpec) -> dict:
    return {
        "num_classes": spec.num_classes,
        "aux_models": [{"id": m.model_id, "kind": m.kind.value, "target": m.target} for m in spec.aux_models],
    }


def spec_from_doc(doc, path: str = "<spec>") -> GraphSpec:
    _validate(doc, SPEC_SCHEMA, path)
    try:
        return GraphSpec(doc["num_classes"], tuple(
            AuxModel(m["id"], Kind(m["kind"]), m["target"]) for m in doc["aux_models"]))
    except InvalidArgumentError as e:
        raise SchemaError(f"{path}: {e}", "aux_models") from None


def read_spec(path: PathLike) -> GraphSpec:
    return spec_from_doc(_load(path), str(path))


def write_spec(path: PathLike, spec: GraphSpec) -> None:
    _dump(path, spec_to_doc(spec))


def weights_to_doc(weights: Weights) -> dict:
    return {"w_main": weights.w_main, "w_aux": list(weights.w_aux), "bias": list(weights.bias)}


def weights_from_doc(doc, spec: Optional[GraphSpec] = None, path: str = "<weights>") -> Weights:
    _validate(doc, WEIGHTS_SCHEMA, path)
    values = [doc["w_main"], *doc["w_aux"], *doc["bias"]]
    if not all(math.isfinite(v) for v in values):
        raise SchemaError(f"{path}: weights must be finite", "")
    w = Weights(doc["w_main"], tuple(doc["w_aux"]), tuple(doc["bias"]))
    if spec is not None:
        try:
            w.check(spec)
        except InvalidArgumentError as e:
            raise SchemaError(f"{path}: {e}", "w_aux") from None
    return w


def read_weights(path: PathLike, spec: Optional[GraphSpec] = None) -> Weights:
    return weights_from_doc(_load(path), spec, str(path))


def write_weights(path: PathLike, weights: Weights) -> None:
    _dump(path, weights_to_doc(weights))


def _per_dist(pair) -> dict:
    return {d.label: float(pair[int(d)]) for d in DISTS}


def world_to_doc(world: WorldConfig) -> dict:
    p = world.profile
    return {
        "spec": spec_to_doc(world.spec),
        "seed": world.seed,
        "pi_adv": p.pi_adv,
        "class_prior": list(p.class_prior),
        "main_alpha": _per_dist(p.main_alpha),
        "rates": {mid: {"alpha": _per_dist(p.aux_alpha[k]), "eps": _per_dist(p.aux_eps[k])}
                  for k, mid in enumerate(world.spec.model_ids)},
    }


def world_from_doc(doc, path: str = "<world>") -> WorldConfig:
    _validate(doc, WORLD_SCHEMA, path)
    spec = spec_from_doc(doc["spec"], path)
    rates = doc["rates"]
    missing = [m for m in spec.model_ids if m not in rates]
    extra = [m for m in rates if m not in spec.model_ids]
    if missing:
        raise SchemaError(f"{path}: no rates for model {missing[0]!r}", f"rates/{missing[0]}")
    if extra:
        raise SchemaError(f"{path}: unknown field: rates for undeclared model {extra[0]!r}", f"rates/{extra[0]}")
    pair = lambda d: (d["benign"], d["adversarial"])
    try:
        profile = RateProfile(
            doc["pi_adv"], tuple(doc["class_prior"]), pair(doc["main_alpha"]),
            tuple(pair(rates[m]["alpha"]) for m in spec.model_ids),
            tuple(pair(rates[m]["eps"]) for m in spec.model_ids),
        )
        return WorldConfig(spec, profile, doc.get("seed", 0))
    except InvalidArgumentError as e:
        raise SchemaError(f"{path}: {e}", "class_prior") from None


def read_world(path: PathLike) -> WorldConfig:
    return world_from_doc(_load(path), str(path))


def write_world(path: PathLike, world: WorldConfig) -> None:
    _dump(path, world_to_doc(world))


# ---------------------------------------------------------------------------
# flat reports

INVALID = "invalid"


def format_value(v) -> str:
    if v is None:
        return INVALID
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


def parse_value(text: str):
    if text == INVALID:
        return None
    if text in ("true", "false"):
        return text == "true"
    if _INT.match(text):
        return int(text)
    try:
        return float(text)
    except ValueError:
        return text


def report_text(items) -> str:
    return "".join(f"{k}={format_value(v)}\n" for k, v in items)


def write_report(path: PathLike, report: Union[BoundReport, list]) -> None:
    items = report.to_flat() if isinstance(report, BoundReport) else report
    Path(path).write_text(report_text(items), encoding="utf-8")


def parse_report(text: str, path: str = "<report>") -> dict:
    out: dict = {}
    for ln, line in enumerate(text.split("\n"), start=1):
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key:
            raise ParseError("expected key=value", ln, path)
        if key in out:
            raise ParseError(f"duplicate key {key!r}", ln, path)
        out[key] = parse_value(value)
    return out


def read_report(path: PathLike) -> dict:
    return parse_report(Path(path).read_text(encoding="utf-8"), str(path))


def read_bound_report(path: PathLike) -> BoundReport:
    return BoundReport.from_flat(read_report(path))


# ---------------------------------------------------------------------------
# rate estimation


def _freq(mask_cond: np.ndarray, event: np.ndarray) -> Optional[float]:
    n = int(mask_cond.sum())
    if n == 0:
        return None
    return float(event[mask_cond].sum()) / n


def _fill(pair, name: str, flags: list) -> tuple[float, float]:
    """Missing cells borrow the other distribution's estimate, else 0.5."""
    out = []
    for i, d in enumerate(DISTS):
        v = pair[i]
        if v is None:
            flags.append(f"{name}.{d.label}")
            other = pair[1 - i]
            v = other if other is not None else 0.5
        out.append(v)
    return tuple(out)


def estimate_rates(spec: GraphSpec, data: SensorData) -> RateProfile:
    """Empirical rate profile; cells without conditioning rows are listed in ``unestimable``."""
    data.validate(spec)
    n = len(data)
    if n == 0:
        raise InvalidArgumentError("cannot estimate rates from an empty log")
    C = spec.num_classes
    flags: list[str] = []
    prior = np.bincount(data.y, minlength=C) / n
    pi_adv = float((data.dist == int(Dist.ADVERSARIAL)).mean())
    in_d = [data.dist == int(d) for d in DISTS]
    main_hit = (data.s_main == data.y).astype(np.int64)
    main = _fill([_freq(m, main_hit) for m in in_d], "main.alpha", flags)
    alphas, epss = [], []
    for k, m in enumerate(spec.aux_models):
        col = data.aux[:, k].astype(np.int64)
        hit = data.y == m.target
        if m.kind is Kind.PERMISSIVE:
            a = [_freq(dm & hit, col) for dm in in_d]
            e = [_freq(dm & ~hit, col) for dm in in_d]
        else:
            a = [_freq(dm & ~hit, 1 - col) for dm in in_d]
            e = [_freq(dm & hit, 1 - col) for dm in in_d]
        alphas.append(_fill(a, f"{m.model_id}.alpha", flags))
        epss.append(_fill(e, f"{m.model_id}.eps", flags))
    return RateProfile(pi_adv, tuple(float(p) for p in prior), main, tuple(alphas), tuple(epss), tuple(flags))
