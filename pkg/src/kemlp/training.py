"""Maximum-likelihood weight learning for the factor graph.

The objective is the conditional negative log-likelihood of the observed
labels.  It is convex in the parameters, so plain mini-batch gradient descent
from zero is enough.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InvalidArgumentError, NumericalOverflowError, TrainingDivergedError
from .graph import DataLike, GraphSpec, Kind, SensorData, Weights, as_data, score_matrix

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    iterations: int = 4000
    batch_size: int = 50
    adversarial_ratio: float = 0.0
    seed: int = 0
    grad_tolerance: Optional[float] = 1e-8

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise InvalidArgumentError("batch_size must be >= 1")
        if self.iterations < 0:
            raise InvalidArgumentError("iterations must be >= 0")
        if not 0.0 <= self.adversarial_ratio <= 1.0:
            raise InvalidArgumentError("adversarial_ratio must lie in [0, 1]")


def _log_probs(spec: GraphSpec, weights: Weights, data: SensorData) -> np.ndarray:
    s = score_matrix(spec, weights, data)
    if spec.num_classes == 2:
        m = s[:, 1] - s[:, 0]
        # log sigma(m) = -softplus(-m)
        return np.stack([-np.logaddexp(0.0, m), -np.logaddexp(0.0, -m)], axis=1)
    s = s - s.max(axis=1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=1, keepdims=True))


def _nll(spec, weights, data):
    lp = _log_probs(spec, weights, data)
    return float(-lp[np.arange(len(data)), data.y].sum())


def _grad(spec: GraphSpec, weights: Weights, data: SensorData) -> np.ndarray:
    """Summed gradient over rows, in ``Weights.to_vector`` order."""
    n = len(data)
    rows = np.arange(n)
    resid = np.exp(_log_probs(spec, weights, data))
    resid[rows, data.y] -= 1.0
    g_main = resid[rows, data.s_main].sum()
    K = spec.num_aux
    g_aux = np.empty(K)
    for k, m in enumerate(spec.aux_models):
        col = data.aux[:, k]
        r = resid[:, m.target]
        if m.kind is Kind.PERMISSIVE:
            g_aux[k] = (col * r).sum()
        else:
            g_aux[k] = -((1 - col) * r).sum()
    g_bias = resid.sum(axis=0)
    return np.concatenate([[g_main], g_aux, g_bias])


def negative_log_likelihood(spec: GraphSpec, weights: Weights, data: DataLike) -> float:
    """Summed NLL ``-sum_n log P[o = y_n | s_n, w]``."""
    data = as_data(spec, data)
    if len(data) == 0:
        raise InvalidArgumentError("empty dataset")
    return _nll(spec, weights, data)


def nll_gradient(spec: GraphSpec, weights: Weights, data: DataLike) -> np.ndarray:
    data = as_data(spec, data)
    if len(data) == 0:
        raise InvalidArgumentError("empty dataset")
    weights.check(spec)
    return _grad(spec, weights, data)


def augment_adversarial(spec: GraphSpec, data: DataLike, beta: float, seed: int) -> SensorData:
    """Corrupt the main reading of ``floor(beta * N)`` rows chosen without replacement.

    Binary graphs flip the reading; with more classes the replacement is drawn
    uniformly from the other labels.  Row order and all other fields are kept.
    """
    if not 0.0 <= beta <= 1.0:
        raise InvalidArgumentError("beta must lie in [0, 1]")
    data = as_data(spec, data)
    n = len(data)
    k = math.floor(round(beta * n, 9))
    if k == 0:
        return data
    rng = np.random.default_rng([seed, 0xAD5])
    rows = np.sort(rng.choice(n, size=k, replace=False))
    s_main = data.s_main.copy()
    C = spec.num_classes
    if C == 2:
        s_main[rows] = 1 - s_main[rows]
    else:
        s_main[rows] = (s_main[rows] + rng.integers(1, C, size=k)) % C
    return data.with_main(s_main)


def train_weights(
    spec: GraphSpec,
    data: DataLike,
    cfg: TrainConfig = TrainConfig(),
    trace: Optional[Callable[[int, np.ndarray], None]] = None,
) -> Weights:
    """Fit weights by mini-batch gradient descent on the mean batch NLL.

    Batches are drawn from a seeded permutation that is refreshed every
    epoch.  ``trace(iteration, theta)`` is called after each update.
    """
    data = as_data(spec, data)
    if len(data) == 0:
        raise InvalidArgumentError("empty dataset")
    data = augment_adversarial(spec, data, cfg.adversarial_ratio, cfg.seed)
    n = len(data)
    rng = np.random.default_rng([cfg.seed, 0xBA7C])
    theta = np.zeros(spec.num_params)
    order = rng.permutation(n)
    pos = 0
    for it in range(cfg.iterations):
        if pos >= n:
            order = rng.permutation(n)
            pos = 0
        idx = order[pos:pos + cfg.batch_size]
        pos += cfg.batch_size
        batch = data.take(idx)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                g = _grad(spec, Weights.from_vector(spec, theta), batch) / len(idx)
                theta = theta - cfg.learning_rate * g
        except (NumericalOverflowError, InvalidArgumentError):
            raise TrainingDivergedError(it) from None
        if not np.isfinite(theta).all():
            raise TrainingDivergedError(it)
        if trace is not None:
            trace(it, theta)
        if cfg.grad_tolerance is not None and float(np.linalg.norm(g)) < cfg.grad_tolerance:
            log.debug("gradient norm below tolerance at iteration %d", it)
            break
    weights = Weights.from_vector(spec, theta)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            final = _nll(spec, weights, data)
    except NumericalOverflowError:
        final = math.inf
    if not math.isfinite(final):
        raise TrainingDivergedError(cfg.iterations, "final NLL is not finite")
    return weights
