"""Synthetic sensor worlds, the exact accuracy oracle and Monte Carlo estimates.

Given ``(y, D)`` every sensor errs independently, with rates taken from a
:class:`~kemlp.theory.RateProfile`.  A wrong main reading is the complement in
the binary case and a uniformly chosen other label otherwise.

Two exact routes are available:

``lattice``
    walks all ``2**K`` aux patterns in fixed-size chunks and calls
    :func:`kemlp.graph.predict` on them, once per main reading.
``factorized``
    uses the fact that class scores depend on disjoint groups of aux models
    (those targeting the class), which are independent given ``(y, D)``.  Each
    group is enumerated on its own, so cost grows with the largest group
    rather than with ``K``.  Scores are accumulated in the same order as
    ``predict`` so ties resolve identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EnumerationTooLargeError, InvalidArgumentError
from .graph import DISTS, Dist, GraphSpec, Kind, SensorData, Weights, predict
from .theory import RateProfile, weighted_accuracy

ENUM_BUDGET = 24
CHUNK_BITS = 16
RNG_BLOCK = 8192


@dataclass(frozen=True)
class WorldConfig:
    spec: GraphSpec
    profile: RateProfile
    seed: int = 0

    def __post_init__(self) -> None:
        self.profile.check(self.spec)
        if self.seed < 0:
            raise InvalidArgumentError("seed must be non-negative")


def fire_probabilities(world: WorldConfig, y: int, d: Dist) -> np.ndarray:
    """``P[s_k = 1 | y, D]`` for every aux model."""
    p = world.profile
    d = int(d)
    out = np.empty(world.spec.num_aux)
    for k, m in enumerate(world.spec.aux_models):
        a, e = p.aux_alpha[k][d], p.aux_eps[k][d]
        if m.kind is Kind.PERMISSIVE:
            out[k] = a if y == m.target else e
        else:
            out[k] = 1.0 - (e if y == m.target else a)
    return out


def main_distribution(world: WorldConfig, y: int, d: Dist) -> np.ndarray:
    """``P[s_main = c | y, D]`` over classes."""
    C = world.spec.num_classes
    a = world.profile.main_alpha[int(d)]
    out = np.full(C, (1.0 - a) / (C - 1))
    out[y] = a
    return out


# ---------------------------------------------------------------------------
# sampling


def _sample_block(world: WorldConfig, block: int, m: int) -> SensorData:
    spec, p = world.spec, world.profile
    C, K = spec.num_classes, spec.num_aux
    rng = np.random.default_rng([world.seed, block])
    # draw a full block and truncate so row i never depends on n
    u_z = rng.random(RNG_BLOCK)[:m]
    u_y = rng.random(RNG_BLOCK)[:m]
    u_main = rng.random(RNG_BLOCK)[:m]
    shift = rng.integers(1, C, size=RNG_BLOCK)[:m]
    u_aux = rng.random((RNG_BLOCK, K))[:m]

    dist = (u_z < p.pi_adv).astype(np.int8)
    cdf = np.cumsum(p.class_prior)
    cdf[-1] = 1.0
    y = np.minimum(np.searchsorted(cdf, u_y, side="right"), C - 1).astype(np.int64)
    main_alpha = np.asarray(p.main_alpha)[dist]
    s_main = np.where(u_main < main_alpha, y, (y + shift) % C)

    alpha = np.asarray(p.aux_alpha, dtype=float).reshape(K, 2)
    eps = np.asarray(p.aux_eps, dtype=float).reshape(K, 2)
    aux = np.empty((m, K), dtype=np.int8)
    for k, mod in enumerate(spec.aux_models):
        hit = y == mod.target
        a_k, e_k = alpha[k][dist], eps[k][dist]
        if mod.kind is Kind.PERMISSIVE:
            aux[:, k] = u_aux[:, k] < np.where(hit, a_k, e_k)
        else:
            aux[:, k] = ~(u_aux[:, k] < np.where(hit, e_k, a_k))
    return SensorData(y, dist, s_main, aux)


def sample_dataset(world: WorldConfig, n: int) -> SensorData:
    """Draw ``n`` rows.  Row ``i`` depends only on the seed and ``i``, never on ``n``."""
    if n < 0:
        raise InvalidArgumentError("n must be >= 0")
    parts = []
    for block, start in enumerate(range(0, n, RNG_BLOCK)):
        parts.append(_sample_block(world, block, min(RNG_BLOCK, n - start)))
    if not parts:
        K = world.spec.num_aux
        return SensorData(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros((0, K)))
    return SensorData.concat(parts)


# ---------------------------------------------------------------------------
# exact enumeration


def _patterns(start: int, stop: int, K: int) -> np.ndarray:
    idx = np.arange(start, stop, dtype=np.int64)
    return ((idx[:, None] >> np.arange(K)) & 1).astype(np.int8)


def _pattern_probs(bits: np.ndarray, p: np.ndarray) -> np.ndarray:
    out = np.ones(bits.shape[0])
    for k in range(bits.shape[1]):
        out *= np.where(bits[:, k] == 1, p[k], 1.0 - p[k])
    return out


def _cells(world):
    return [(d, y) for d in DISTS for y in range(world.spec.num_classes)]


def _lattice(world: WorldConfig, weights: Weights) -> np.ndarray:
    """Accuracy per ``(D, y)`` cell, shape ``(2, C)``."""
    spec = world.spec
    K, C = spec.num_aux, spec.num_classes
    if K > ENUM_BUDGET:
        raise EnumerationTooLargeError(
            f"{K} aux models exceed the enumeration budget of {ENUM_BUDGET}; use monte_carlo_accuracy")
    cells = _cells(world)
    fire = {c: fire_probabilities(world, c[1], c[0]) for c in cells}
    mains = {c: main_distribution(world, c[1], c[0]) for c in cells}
    acc = np.zeros((2, C))
    total = 1 << K
    step = 1 << min(K, CHUNK_BITS)
    for start in range(0, total, step):
        bits = _patterns(start, min(total, start + step), K)
        m = bits.shape[0]
        preds = []
        for s in range(C):
            batch = SensorData(np.zeros(m, dtype=np.int64), np.zeros(m, dtype=np.int8),
                               np.full(m, s, dtype=np.int64), bits)
            preds.append(predict(spec, weights, batch))
        for d, y in cells:
            probs = _pattern_probs(bits, fire[(d, y)])
            for s in range(C):
                ps = mains[(d, y)][s]
                if ps == 0.0:
                    continue
                acc[int(d), y] += ps * probs[preds[s] == y].sum()
    return acc


def _group_scores(spec: GraphSpec, weights: Weights, c: int, main_hit: bool, members, bits):
    """Class-``c`` score for each pattern of its aux group, summed in ``score_matrix`` order."""
    s = np.full(bits.shape[0], weights.bias[c], dtype=np.float64)
    if main_hit:
        s += weights.w_main
    for col, k in enumerate(members):
        w = weights.w_aux[k]
        b = bits[:, col]
        if spec.aux_models[k].kind is Kind.PERMISSIVE:
            s += w * b
        else:
            s -= w * (1 - b)
    return s


def _factorized(world: WorldConfig, weights: Weights) -> np.ndarray:
    spec = world.spec
    C = spec.num_classes
    groups = [[k for k, m in enumerate(spec.aux_models) if m.target == c] for c in range(C)]
    largest = max(len(g) for g in groups)
    if largest > ENUM_BUDGET:
        raise EnumerationTooLargeError(
            f"a class has {largest} rules, over the enumeration budget of {ENUM_BUDGET}")
    bits = [_patterns(0, 1 << len(g), len(g)) for g in groups]
    scores = {(c, h): _group_scores(spec, weights, c, h, groups[c], bits[c])
              for c in range(C) for h in (False, True)}
    acc = np.zeros((2, C))
    for d, y in _cells(world):
        fire = fire_probabilities(world, y, d)
        probs = [_pattern_probs(bits[c], fire[groups[c]]) for c in range(C)]
        mains = main_distribution(world, y, d)
        for s in range(C):
            if mains[s] == 0.0:
                continue
            v = scores[(y, s == y)]
            win = np.ones_like(v)
            for c in range(C):
                if c == y:
                    continue
                sc = scores[(c, s == c)]
                # ties go to the main reading if it is tied, else to the lowest index
                strict = c == s or (c < y and s != y)
                order = np.argsort(sc, kind="stable")
                sorted_sc = sc[order]
                cum = np.concatenate([[0.0], np.cumsum(probs[c][order])])
                side = "left" if strict else "right"
                win *= cum[np.searchsorted(sorted_sc, v, side=side)]
            acc[int(d), y] += mains[s] * float((probs[y] * win).sum())
    return acc


def cell_accuracy(world: WorldConfig, weights: Weights, method: str = "auto") -> np.ndarray:
    """Exact ``P[infer = y | y, D]`` per cell, shape ``(2, num_classes)``."""
    weights.check(world.spec)
    if method == "auto":
        K, C = world.spec.num_aux, world.spec.num_classes
        method = "lattice" if K <= 16 or (C == 2 and K <= ENUM_BUDGET) else "factorized"
    if method == "lattice":
        return _lattice(world, weights)
    if method == "factorized":
        return _factorized(world, weights)
    raise InvalidArgumentError(f"unknown enumeration method {method!r}")


def cell_masses(world: WorldConfig) -> np.ndarray:
    """Total enumerated probability per ``(D, y)`` cell; each entry should be 1."""
    K, C = world.spec.num_aux, world.spec.num_classes
    if K > ENUM_BUDGET:
        raise EnumerationTooLargeError(f"{K} aux models exceed the enumeration budget")
    out = np.zeros((2, C))
    total = 1 << K
    step = 1 << min(K, CHUNK_BITS)
    for start in range(0, total, step):
        bits = _patterns(start, min(total, start + step), K)
        for d, y in _cells(world):
            out[int(d), y] += _pattern_probs(bits, fire_probabilities(world, y, d)).sum() \
                * main_distribution(world, y, d).sum()
    return out


def _dist_accuracy(world: WorldConfig, acc: np.ndarray) -> np.ndarray:
    prior = np.asarray(world.profile.class_prior)
    return np.array([float((prior * acc[int(d)]).sum()) for d in DISTS])


def exact_weighted_accuracy(world: WorldConfig, weights: Weights, method: str = "auto") -> float:
    """Exact probability that inference recovers ``y``, mixed over D and the class prior."""
    clean, robust = _dist_accuracy(world, cell_accuracy(world, weights, method))
    return weighted_accuracy(min(1.0, clean), min(1.0, robust), world.profile.pi_adv)


def monte_carlo_accuracy(world: WorldConfig, weights: Weights, n: int) -> tuple[float, float]:
    """``(estimate, stderr)`` from ``n`` rows sampled with the world seed."""
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    data = sample_dataset(world, n)
    hits = predict(world.spec, weights, data) == data.y
    p = float(hits.mean())
    return p, math.sqrt(p * (1.0 - p) / n)


@dataclass(frozen=True)
class AccuracySplit:
    clean: float
    robust: float
    weighted: float


def clean_robust_split(world: WorldConfig, weights: Weights, n: Optional[int] = None) -> AccuracySplit:
    """Per-distribution accuracy and the pi-weighted combination.

    ``n=None`` uses exact enumeration; otherwise ``n`` sampled rows.  A
    distribution with no sampled rows reports NaN.
    """
    pi = world.profile.pi_adv
    if n is None:
        clean, robust = (min(1.0, a) for a in _dist_accuracy(world, cell_accuracy(world, weights)))
    else:
        data = sample_dataset(world, n)
        hits = predict(world.spec, weights, data) == data.y
        clean, robust = (float(hits[data.dist == int(d)].mean()) if (data.dist == int(d)).any()
                         else float("nan") for d in DISTS)
    if pi == 0.0:
        weighted = clean
    elif pi == 1.0:
        weighted = robust
    else:
        weighted = weighted_accuracy(clean, robust, pi)
    return AccuracySplit(clean, robust, weighted)
