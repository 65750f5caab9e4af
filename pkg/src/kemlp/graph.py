"""Factor graph over a main classifier and rule-based auxiliary sensors.

A graph has one output variable ``o`` over ``num_classes`` labels, one factor
tying ``o`` to the main model's prediction, and one factor per auxiliary
model.  Permissive models encode ``s_k => (o == target)``; preventative
models encode ``(o == target) => s_k``.

Scores drop the per-class constant offsets of the raw factor values, which
leaves every posterior and argmax unchanged:

    score(c) = bias[c] + w_main * [s_main == c]
               + sum_{permissive k, target c} w_k * s_k
               - sum_{preventative k, target c} w_k * (1 - s_k)

All batch paths accumulate contributions in the fixed model order, so the
scalar helpers, the batch helpers and the exact enumerator in
:mod:`kemlp.simulator` agree bit for bit (ties included).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterable, Iterator, Sequence, Union

import numpy as np

from .errors import InvalidArgumentError, NumericalOverflowError, UnsupportedShapeError

MAIN = "main"


class Kind(str, Enum):
    PERMISSIVE = "permissive"
    PREVENTATIVE = "preventative"


class Dist(IntEnum):
    BENIGN = 0
    ADVERSARIAL = 1

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "Dist":
        for d in cls:
            if d.label == text:
                return d
        raise InvalidArgumentError(f"unknown distribution tag {text!r}")


DISTS = (Dist.BENIGN, Dist.ADVERSARIAL)


@dataclass(frozen=True)
class AuxModel:
    model_id: str
    kind: Kind
    target: int


@dataclass(frozen=True)
class GraphSpec:
    """Class set plus the ordered list of auxiliary models.

    The order of ``aux_models`` is the canonical index used by
    :class:`Weights`, :class:`Example` and every rate profile.
    """

    num_classes: int
    aux_models: tuple[AuxModel, ...] = ()
    has_main: bool = True

    def __post_init__(self) -> None:
        models = tuple(
            m if isinstance(m, AuxModel) else AuxModel(m[0], Kind(m[1]), int(m[2]))
            for m in self.aux_models
        )
        object.__setattr__(self, "aux_models", models)
        if not isinstance(self.num_classes, (int, np.integer)) or self.num_classes < 2:
            raise InvalidArgumentError(f"num_classes must be an integer >= 2, got {self.num_classes!r}")
        if not self.has_main:
            raise InvalidArgumentError("graphs without a main model are not supported")
        seen = set()
        for m in models:
            if m.model_id in seen:
                raise InvalidArgumentError(f"duplicate model id {m.model_id!r}")
            seen.add(m.model_id)
            if not 0 <= m.target < self.num_classes:
                raise InvalidArgumentError(
                    f"model {m.model_id!r}: target {m.target} outside [0, {self.num_classes})"
                )
            if m.model_id in ("id", "dist", "y", "s_main") or not m.model_id:
                raise InvalidArgumentError(f"reserved or empty model id {m.model_id!r}")

    @property
    def num_aux(self) -> int:
        return len(self.aux_models)

    @property
    def model_ids(self) -> tuple[str, ...]:
        return tuple(m.model_id for m in self.aux_models)

    @property
    def num_params(self) -> int:
        return 1 + self.num_aux + self.num_classes

    @property
    def targets(self) -> np.ndarray:
        return np.array([m.target for m in self.aux_models], dtype=np.int64)

    @property
    def permissive_mask(self) -> np.ndarray:
        return np.array([m.kind is Kind.PERMISSIVE for m in self.aux_models], dtype=bool)

    def index_of(self, model_id: str) -> int:
        for k, m in enumerate(self.aux_models):
            if m.model_id == model_id:
                return k
        raise InvalidArgumentError(f"unknown model id {model_id!r}")

    @classmethod
    def binary(cls, n_permissive: int, n_preventative: int) -> "GraphSpec":
        """Binary graph where every rule guards class 1 (the textbook setting)."""
        models = [AuxModel(f"perm{i}", Kind.PERMISSIVE, 1) for i in range(n_permissive)]
        models += [AuxModel(f"prev{j}", Kind.PREVENTATIVE, 1) for j in range(n_preventative)]
        return cls(2, tuple(models))

    @classmethod
    def per_class(cls, num_classes: int, permissive: int = 1, preventative: int = 1) -> "GraphSpec":
        models = []
        for c in range(num_classes):
            models += [AuxModel(f"perm_c{c}_{i}", Kind.PERMISSIVE, c) for i in range(permissive)]
            models += [AuxModel(f"prev_c{c}_{j}", Kind.PREVENTATIVE, c) for j in range(preventative)]
        return cls(num_classes, tuple(models))


@dataclass(frozen=True)
class Example:
    """One observation: label, distribution tag, main prediction, aux bits."""

    y: int
    dist: Dist
    s_main: int
    aux: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "dist", Dist(self.dist))
        object.__setattr__(self, "aux", tuple(int(b) for b in self.aux))

    def validate(self, spec: GraphSpec) -> None:
        C = spec.num_classes
        if len(self.aux) != spec.num_aux:
            raise InvalidArgumentError(f"expected {spec.num_aux} aux outputs, got {len(self.aux)}")
        if not (0 <= self.y < C and 0 <= self.s_main < C):
            raise InvalidArgumentError(f"class index outside [0, {C}) in {self!r}")
        if any(b not in (0, 1) for b in self.aux):
            raise InvalidArgumentError(f"aux outputs must be bits, got {self.aux!r}")


@dataclass(frozen=True)
class Weights:
    w_main: float
    w_aux: tuple[float, ...]
    bias: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "w_main", float(self.w_main))
        object.__setattr__(self, "w_aux", tuple(float(w) for w in self.w_aux))
        object.__setattr__(self, "bias", tuple(float(b) for b in self.bias))
        values = (self.w_main, *self.w_aux, *self.bias)
        if not all(math.isfinite(v) for v in values):
            raise InvalidArgumentError("weights must be finite")

    @property
    def b(self) -> float:
        """Binary bias ``b_1 - b_0``."""
        if len(self.bias) != 2:
            raise UnsupportedShapeError("scalar bias b is only defined for binary graphs")
        return self.bias[1] - self.bias[0]

    @classmethod
    def zeros(cls, spec: GraphSpec) -> "Weights":
        return cls(0.0, (0.0,) * spec.num_aux, (0.0,) * spec.num_classes)

    @classmethod
    def binary(cls, b: float, w_main: float, w_aux: Sequence[float]) -> "Weights":
        return cls(w_main, tuple(w_aux), (0.0, b))

    def check(self, spec: GraphSpec) -> None:
        if len(self.w_aux) != spec.num_aux or len(self.bias) != spec.num_classes:
            raise InvalidArgumentError(
                f"weights shape ({len(self.w_aux)} aux, {len(self.bias)} bias) does not match "
                f"graph ({spec.num_aux} aux, {spec.num_classes} classes)"
            )

    def to_vector(self) -> np.ndarray:
        """Flat parameter vector ``[w_main, *w_aux, *bias]``."""
        return np.array([self.w_main, *self.w_aux, *self.bias], dtype=np.float64)

    @classmethod
    def from_vector(cls, spec: GraphSpec, theta: np.ndarray) -> "Weights":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (spec.num_params,):
            raise InvalidArgumentError(f"expected {spec.num_params} parameters, got {theta.shape}")
        K = spec.num_aux
        return cls(theta[0], tuple(theta[1:1 + K]), tuple(theta[1 + K:]))

    def scaled(self, factor: float) -> "Weights":
        return Weights(self.w_main * factor, tuple(w * factor for w in self.w_aux),
                       tuple(b * factor for b in self.bias))


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SensorData:
    """Columnar batch of examples.

    ``aux`` has shape ``(N, K)`` with one column per auxiliary model in
    graph order.  Arrays are read-only; use the ``with_*`` helpers to derive
    modified copies.
    """

    y: np.ndarray
    dist: np.ndarray
    s_main: np.ndarray
    aux: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        y = np.array(self.y, dtype=np.int64).reshape(-1)
        n = y.shape[0]
        dist = np.array(self.dist, dtype=np.int8).reshape(-1)
        s_main = np.array(self.s_main, dtype=np.int64).reshape(-1)
        aux = self.aux
        aux = np.zeros((n, 0), dtype=np.int8) if aux is None else np.array(aux, dtype=np.int8)
        if aux.ndim == 1 and n == 0:
            aux = aux.reshape(0, 0)
        if aux.ndim != 2 or aux.shape[0] != n or dist.shape[0] != n or s_main.shape[0] != n:
            raise InvalidArgumentError("ragged sensor data columns")
        for name, arr in (("y", y), ("dist", dist), ("s_main", s_main), ("aux", aux)):
            object.__setattr__(self, name, _readonly(arr))

    def __len__(self) -> int:
        return int(self.y.shape[0])

    @property
    def num_aux(self) -> int:
        return int(self.aux.shape[1])

    def __getitem__(self, i: int) -> Example:
        return Example(int(self.y[i]), Dist(int(self.dist[i])), int(self.s_main[i]),
                       tuple(int(b) for b in self.aux[i]))

    def __iter__(self) -> Iterator[Example]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SensorData):
            return NotImplemented
        return (np.array_equal(self.y, other.y) and np.array_equal(self.dist, other.dist)
                and np.array_equal(self.s_main, other.s_main) and np.array_equal(self.aux, other.aux))

    __hash__ = None

    @classmethod
    def from_examples(cls, examples: Iterable[Example], num_aux: int | None = None) -> "SensorData":
        rows = list(examples)
        if num_aux is None:
            num_aux = len(rows[0].aux) if rows else 0
        aux = np.array([r.aux for r in rows], dtype=np.int8).reshape(len(rows), num_aux)
        return cls(
            np.array([r.y for r in rows], dtype=np.int64),
            np.array([int(r.dist) for r in rows], dtype=np.int8),
            np.array([r.s_main for r in rows], dtype=np.int64),
            aux,
        )

    def validate(self, spec: GraphSpec) -> "SensorData":
        C = spec.num_classes
        if self.num_aux != spec.num_aux:
            raise InvalidArgumentError(f"expected {spec.num_aux} aux columns, got {self.num_aux}")
        if len(self):
            if self.y.min() < 0 or self.y.max() >= C or self.s_main.min() < 0 or self.s_main.max() >= C:
                raise InvalidArgumentError(f"class index outside [0, {C})")
            if not np.isin(self.dist, (0, 1)).all():
                raise InvalidArgumentError("dist must be 0 (benign) or 1 (adversarial)")
            if self.num_aux and not np.isin(self.aux, (0, 1)).all():
                raise InvalidArgumentError("aux outputs must be bits")
        return self

    def with_main(self, s_main: np.ndarray) -> "SensorData":
        return SensorData(self.y, self.dist, s_main, self.aux)

    def take(self, index) -> "SensorData":
        return SensorData(self.y[index], self.dist[index], self.s_main[index], self.aux[index])

    @classmethod
    def concat(cls, parts: Sequence["SensorData"]) -> "SensorData":
        return cls(np.concatenate([p.y for p in parts]), np.concatenate([p.dist for p in parts]),
                   np.concatenate([p.s_main for p in parts]), np.concatenate([p.aux for p in parts]))


DataLike = Union[SensorData, Sequence[Example]]


def as_data(spec: GraphSpec, data: DataLike) -> SensorData:
    """Coerce a list of examples (or SensorData) into validated SensorData."""
    if not isinstance(data, SensorData):
        data = SensorData.from_examples(data, spec.num_aux)
    return data.validate(spec)


# ---------------------------------------------------------------------------
# factors and scores


def factor_value(spec: GraphSpec, model: Union[int, str], o: int, reading: Example) -> int:
    """Raw 0/1 factor value for the main model (``model="main"``) or aux model ``model``."""
    if not 0 <= o < spec.num_classes:
        raise InvalidArgumentError(f"class {o} outside [0, {spec.num_classes})")
    reading.validate(spec)
    if model == MAIN:
        return int(o == reading.s_main)
    if not isinstance(model, (int, np.integer)) or not 0 <= model < spec.num_aux:
        raise InvalidArgumentError(f"model index {model!r} out of range")
    m = spec.aux_models[model]
    s = reading.aux[model]
    if m.kind is Kind.PERMISSIVE:
        return int(s == 0 or o == m.target)
    return int(o != m.target or s == 1)


def score_matrix(spec: GraphSpec, weights: Weights, data: SensorData) -> np.ndarray:
    """Per-class scores, shape ``(N, num_classes)``."""
    weights.check(spec)
    n = len(data)
    scores = np.empty((n, spec.num_classes), dtype=np.float64)
    scores[:] = np.asarray(weights.bias, dtype=np.float64)
    scores[np.arange(n), data.s_main] += weights.w_main
    for k, m in enumerate(spec.aux_models):
        col = data.aux[:, k]
        w = weights.w_aux[k]
        if m.kind is Kind.PERMISSIVE:
            scores[:, m.target] += w * col
        else:
            scores[:, m.target] -= w * (1 - col)
    if not np.isfinite(scores).all():
        raise NumericalOverflowError("non-finite class score")
    return scores


def margins(spec: GraphSpec, weights: Weights, data: SensorData) -> np.ndarray:
    """Binary log-odds margin ``score(1) - score(0)`` per row."""
    if spec.num_classes != 2:
        raise UnsupportedShapeError("margin is only defined for binary graphs; use class scores")
    s = score_matrix(spec, weights, data)
    return s[:, 1] - s[:, 0]


def sigmoid(x):
    """Branch-stable logistic function (scalar or array)."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


def posterior_matrix(spec: GraphSpec, weights: Weights, data: SensorData) -> np.ndarray:
    if spec.num_classes == 2:
        m = margins(spec, weights, data)
        return np.stack([sigmoid(-m), sigmoid(m)], axis=1).reshape(len(data), 2)
    s = score_matrix(spec, weights, data)
    s = s - s.max(axis=1, keepdims=True)
    e = np.exp(s)
    p = e / e.sum(axis=1, keepdims=True)
    if not np.isfinite(p).all():
        raise NumericalOverflowError("non-finite posterior")
    return p


def predict(spec: GraphSpec, weights: Weights, data: SensorData) -> np.ndarray:
    """Argmax class per row; exact ties go to ``s_main`` if tied, else the lowest index."""
    s = score_matrix(spec, weights, data)
    n = len(data)
    tied = s == s.max(axis=1, keepdims=True)
    main_tied = tied[np.arange(n), data.s_main]
    return np.where(main_tied, data.s_main, tied.argmax(axis=1))


def _one(spec: GraphSpec, reading: Example) -> SensorData:
    reading.validate(spec)
    return SensorData.from_examples([reading], spec.num_aux)


def class_scores(spec: GraphSpec, weights: Weights, reading: Example) -> np.ndarray:
    return score_matrix(spec, weights, _one(spec, reading))[0]


def delta(spec: GraphSpec, weights: Weights, reading: Example, y_tilde: int) -> float:
    """Signed log-odds margin of class ``y_tilde`` against the other class."""
    if y_tilde not in (0, 1):
        raise InvalidArgumentError(f"y_tilde must be 0 or 1, got {y_tilde!r}")
    m = float(margins(spec, weights, _one(spec, reading))[0])
    return m if y_tilde == 1 else -m


def posterior(spec: GraphSpec, weights: Weights, reading: Example) -> np.ndarray:
    return posterior_matrix(spec, weights, _one(spec, reading))[0]


def infer(spec: GraphSpec, weights: Weights, reading: Example) -> int:
    return int(predict(spec, weights, _one(spec, reading))[0])
