"""Closed-form robustness quantities: rate envelopes, weight intervals, margin
expectations and the accuracy lower bounds built on them.

Binary-only quantities work on two canonical blocks.  The ``I`` block holds
rules whose event is evidence for class 1 (permissive with target 1, or
preventative with target 0); the ``J`` block holds rules whose event is
evidence for class 0 (preventative with target 1, or permissive with target
0).  Truth and false rates keep their per-kind meaning, so a rule's rates are
used unchanged whichever block it lands in.

Every rate is clamped to ``[CLAMP, 1 - CLAMP]`` before it enters a logarithm.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError, UnsupportedShapeError
from .graph import DISTS, Dist, GraphSpec, Kind, Weights

CLAMP = 1e-6

BLOCK_I = "I"
BLOCK_J = "J"


class VacuousBoundWarning(UserWarning):
    """A bound was requested outside its regime and degenerates to zero."""


def clamp(x):
    return np.clip(x, CLAMP, 1.0 - CLAMP)


def _unit(name: str, x: float) -> float:
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise InvalidArgumentError(f"{name} must lie in [0, 1], got {x!r}")
    return x


@dataclass(frozen=True)
class RateProfile:
    """Per-model truth and false rates on the benign and adversarial distributions.

    ``aux_alpha[k]`` and ``aux_eps[k]`` are ``(benign, adversarial)`` pairs in
    graph order.  For a permissive rule ``alpha = P[s=1 | y=target]`` and
    ``eps = P[s=1 | y!=target]``; for a preventative rule
    ``alpha = P[s=0 | y!=target]`` and ``eps = P[s=0 | y=target]``.
    ``unestimable`` names cells an estimator could not fill (their values are
    placeholders).
    """

    pi_adv: float
    class_prior: tuple[float, ...]
    main_alpha: tuple[float, float]
    aux_alpha: tuple[tuple[float, float], ...] = ()
    aux_eps: tuple[tuple[float, float], ...] = ()
    unestimable: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "pi_adv", _unit("pi_adv", self.pi_adv))
        prior = tuple(_unit("class_prior", p) for p in self.class_prior)
        if len(prior) < 2 or abs(sum(prior) - 1.0) > 1e-9:
            raise InvalidArgumentError("class_prior must have >= 2 entries summing to 1")
        object.__setattr__(self, "class_prior", prior)

        def pair(name, v):
            v = tuple(v)
            if len(v) != 2:
                raise InvalidArgumentError(f"{name} needs (benign, adversarial) values")
            return tuple(_unit(name, x) for x in v)

        object.__setattr__(self, "main_alpha", pair("main_alpha", self.main_alpha))
        object.__setattr__(self, "aux_alpha", tuple(pair("alpha", a) for a in self.aux_alpha))
        object.__setattr__(self, "aux_eps", tuple(pair("eps", e) for e in self.aux_eps))
        if len(self.aux_alpha) != len(self.aux_eps):
            raise InvalidArgumentError("aux_alpha and aux_eps lengths differ")
        object.__setattr__(self, "unestimable", tuple(self.unestimable))

    @property
    def num_aux(self) -> int:
        return len(self.aux_alpha)

    @property
    def num_classes(self) -> int:
        return len(self.class_prior)

    def pi(self, d: Dist) -> float:
        return self.pi_adv if Dist(d) is Dist.ADVERSARIAL else 1.0 - self.pi_adv

    @property
    def r_y(self) -> float:
        """Binary prior log-odds ``log(P[y=1] / P[y=0])``."""
        p0, p1 = clamp(np.array(self.class_prior[:2]))
        return float(math.log(p1 / p0))

    def check(self, spec: GraphSpec) -> "RateProfile":
        if self.num_aux != spec.num_aux or self.num_classes != spec.num_classes:
            raise InvalidArgumentError(
                f"profile has {self.num_aux} aux models / {self.num_classes} classes, "
                f"graph has {spec.num_aux} / {spec.num_classes}"
            )
        return self

    @classmethod
    def homogeneous(cls, spec: GraphSpec, alpha: float, eps: float,
                    main_alpha: Sequence[float] = (1.0, 0.0), pi_adv: float = 0.5,
                    class_prior: Optional[Sequence[float]] = None) -> "RateProfile":
        """Every aux model at ``(alpha, eps)`` on both distributions."""
        C = spec.num_classes
        prior = tuple(class_prior) if class_prior is not None else (1.0 / C,) * C
        K = spec.num_aux
        return cls(pi_adv, prior, tuple(main_alpha), ((alpha, alpha),) * K, ((eps, eps),) * K)


@dataclass(frozen=True)
class RateEnvelope:
    """Clamped min/max of each rate over the two distributions."""

    main_lo: float
    main_hi: float
    lo_alpha: tuple[float, ...]
    hi_alpha: tuple[float, ...]
    lo_eps: tuple[float, ...]
    hi_eps: tuple[float, ...]


def envelopes(profile: RateProfile) -> RateEnvelope:
    m = clamp(np.array(profile.main_alpha))
    a = clamp(np.array(profile.aux_alpha, dtype=float).reshape(-1, 2))
    e = clamp(np.array(profile.aux_eps, dtype=float).reshape(-1, 2))
    tup = lambda x: tuple(float(v) for v in x)
    return RateEnvelope(float(m.min()), float(m.max()), tup(a.min(axis=1)), tup(a.max(axis=1)),
                        tup(e.min(axis=1)), tup(e.max(axis=1)))


@dataclass(frozen=True)
class WeightBounds:
    main: tuple[float, float]
    aux: tuple[tuple[float, float], ...]

    @property
    def aux_lower(self) -> tuple[float, ...]:
        return tuple(lo for lo, _ in self.aux)


def weight_bounds(env: RateEnvelope) -> WeightBounds:
    """Intervals that contain the optimal weight of every model.

    Aux interval ``[log lo_a(1-hi_e)/((1-lo_a) hi_e), log hi_a(1-lo_e)/((1-hi_a) lo_e)]``;
    main interval ``[logit(lo_a), logit(hi_a)]``.
    """
    logit = lambda p: math.log(p / (1.0 - p))
    main = (logit(env.main_lo), logit(env.main_hi))
    aux = []
    for la, ha, le, he in zip(env.lo_alpha, env.hi_alpha, env.lo_eps, env.hi_eps):
        lo = math.log(la * (1 - he) / ((1 - la) * he))
        hi = math.log(ha * (1 - le) / ((1 - ha) * le))
        aux.append((lo, hi))
    return WeightBounds(main, tuple(aux))


# ---------------------------------------------------------------------------
# binary block structure


def _require_binary(spec: GraphSpec) -> None:
    if spec.num_classes != 2:
        raise UnsupportedShapeError("this quantity is defined for binary graphs only")


def block_of(spec: GraphSpec, k: int) -> str:
    m = spec.aux_models[k]
    evidence_for_one = (m.kind is Kind.PERMISSIVE) == (m.target == 1)
    return BLOCK_I if evidence_for_one else BLOCK_J


def blocks(spec: GraphSpec) -> tuple[list[int], list[int]]:
    _require_binary(spec)
    I = [k for k in range(spec.num_aux) if block_of(spec, k) == BLOCK_I]
    J = [k for k in range(spec.num_aux) if block_of(spec, k) == BLOCK_J]
    return I, J


def mu_main(profile: RateProfile, d: Dist, env: Optional[RateEnvelope] = None) -> float:
    env = env or envelopes(profile)
    a = float(clamp(profile.main_alpha[int(d)]))
    lo, hi = env.main_lo, env.main_hi
    return a * math.log(lo / (1 - lo)) + (1 - a) * math.log((1 - hi) / hi)


def mu_block(spec: GraphSpec, profile: RateProfile, d: Dist, side: str,
             env: Optional[RateEnvelope] = None) -> float:
    """Expected aux contribution to the margin of the block's own class."""
    profile.check(spec)
    env = env or envelopes(profile)
    I, J = blocks(spec)
    if side == BLOCK_J:
        I, J = J, I
    elif side != BLOCK_I:
        raise InvalidArgumentError(f"side must be 'I' or 'J', got {side!r}")
    d = int(d)
    total = 0.0
    for i in I:
        a = float(clamp(profile.aux_alpha[i][d]))
        total += (a * math.log(env.lo_alpha[i] / env.hi_eps[i])
                  + (1 - a) * math.log((1 - env.hi_alpha[i]) / (1 - env.lo_eps[i])))
    for j in J:
        e = float(clamp(profile.aux_eps[j][d]))
        total -= (e * math.log(env.hi_alpha[j] / env.lo_eps[j])
                  + (1 - e) * math.log((1 - env.lo_alpha[j]) / (1 - env.hi_eps[j])))
    return total


def expected_margin(spec: GraphSpec, profile: RateProfile, y: int, d: Dist,
                    env: Optional[RateEnvelope] = None) -> float:
    if y not in (0, 1):
        raise InvalidArgumentError(f"y must be 0 or 1, got {y!r}")
    env = env or envelopes(profile)
    side = BLOCK_I if y == 1 else BLOCK_J
    return (mu_main(profile, d, env) + mu_block(spec, profile, d, side, env)
            + (2 * y - 1) * profile.r_y)


def variance_bound(env: RateEnvelope) -> float:
    v2 = 4.0 * math.log(env.main_hi / (1 - env.main_lo)) ** 2
    for la, ha, le, he in zip(env.lo_alpha, env.hi_alpha, env.lo_eps, env.hi_eps):
        v2 += math.log(ha * (1 - le) / (le * (1 - ha))) ** 2
    return v2


@dataclass(frozen=True)
class BoundValue:
    """A bound together with its precondition status; ``value`` is None when invalid."""

    value: Optional[float]
    valid: bool
    reason: str = ""


def _invalid(reason: str) -> BoundValue:
    return BoundValue(None, False, reason)


def convergence_bound(spec: GraphSpec, profile: RateProfile) -> BoundValue:
    """``1 - sum_D pi_D sum_y P[y] exp(-2 mu_{y,D}^2 / v^2)``, gated on its preconditions."""
    profile.check(spec)
    if spec.num_classes != 2:
        return _invalid("binary graphs only")
    env = envelopes(profile)
    v2 = variance_bound(env)
    if not v2 > 0:
        return _invalid("degenerate v2")
    for d in DISTS:
        for side in (BLOCK_I, BLOCK_J):
            if not mu_block(spec, profile, d, side, env) > 0:
                return _invalid(f"mu_{side} <= 0 on {d.label}")
    acc = 0.0
    for d in DISTS:
        for y in (0, 1):
            mu = expected_margin(spec, profile, y, d, env)
            if not mu > 0:
                return _invalid(f"mu_y{y} <= 0 on {d.label}")
            acc += profile.pi(d) * profile.class_prior[y] * math.exp(-2.0 * mu * mu / v2)
    return BoundValue(float(min(1.0, max(0.0, 1.0 - acc))), True)


def homogeneous_bound(n: int, alpha: float, eps: float) -> float:
    """``1 - exp(-2 n (alpha - eps)^2)`` for ``n`` rules per block; 0 when ``alpha <= eps``."""
    if n < 0:
        raise InvalidArgumentError("n must be >= 0")
    if not alpha > eps:
        warnings.warn("alpha <= eps: bound is vacuous", VacuousBoundWarning, stacklevel=2)
        return 0.0
    return 1.0 - math.exp(-2.0 * n * (alpha - eps) ** 2)


def optimal_weights_homogeneous(spec: GraphSpec, alpha: float, eps: float) -> Weights:
    """Every aux weight ``log(alpha/eps)``; main weight and biases zero."""
    if not (0 < alpha < 1 and 0 < eps < 1):
        raise InvalidArgumentError("alpha and eps must lie in (0, 1)")
    w = math.log(alpha / eps)
    return Weights(0.0, (w,) * spec.num_aux, (0.0,) * spec.num_classes)


def bayes_optimal_weights(spec: GraphSpec, profile: RateProfile) -> Weights:
    """Exact Bayes-optimal binary weights when aux rates do not depend on D.

    The main sensor enters through its pi-mixed truth rate, which is exact
    because the aux readings carry no information about D.
    """
    profile.check(spec)
    _require_binary(spec)
    for k in range(spec.num_aux):
        if profile.aux_alpha[k][0] != profile.aux_alpha[k][1] or profile.aux_eps[k][0] != profile.aux_eps[k][1]:
            raise UnsupportedShapeError("aux rates vary with the distribution; no log-linear optimum")
    abar = float(clamp(sum(profile.pi(d) * profile.main_alpha[int(d)] for d in DISTS)))
    w_main = math.log(abar / (1 - abar))
    b = profile.r_y
    w_aux = []
    for k in range(spec.num_aux):
        a = float(clamp(profile.aux_alpha[k][0]))
        e = float(clamp(profile.aux_eps[k][0]))
        w_aux.append(math.log(a * (1 - e) / (e * (1 - a))))
        if block_of(spec, k) == BLOCK_I:
            b += math.log((1 - a) / (1 - e))
        else:
            b += math.log((1 - e) / (1 - a))
    return Weights.binary(b, w_main, w_aux)


# ---------------------------------------------------------------------------
# combined truth rate


def _block_size(spec: GraphSpec) -> int:
    I, J = blocks(spec)
    if len(I) != len(J):
        raise UnsupportedShapeError(f"blocks must have equal size, got |I|={len(I)} |J|={len(J)}")
    return len(I)


def gamma_combined_truth_rate(spec: GraphSpec, profile: RateProfile, d: Dist) -> float:
    profile.check(spec)
    n = _block_size(spec)
    I, J = blocks(spec)
    d = int(d)
    base = profile.main_alpha[d] - 0.5
    alpha = lambda ks: sum(profile.aux_alpha[k][d] for k in ks)
    eps = lambda ks: sum(profile.aux_eps[k][d] for k in ks)
    return min(base + alpha(I) - eps(J), base + alpha(J) - eps(I)) / (n + 1)


def main_weighted_accuracy(profile: RateProfile) -> float:
    return sum(profile.pi(d) * profile.main_alpha[int(d)] for d in DISTS)


@dataclass(frozen=True)
class SufficientCondition:
    gamma: tuple[float, float]
    threshold: Optional[float]
    holds_per_dist: tuple[bool, bool]
    satisfiable: bool

    @property
    def holds(self) -> bool:
        return self.satisfiable and all(self.holds_per_dist)


def sufficient_condition(spec: GraphSpec, profile: RateProfile) -> SufficientCondition:
    """Compare each ``gamma_D`` with ``sqrt(4/(n+1) log(1/(1-alpha_main)))``."""
    n = _block_size(spec)
    gamma = tuple(gamma_combined_truth_rate(spec, profile, d) for d in DISTS)
    a = main_weighted_accuracy(profile)
    if a >= 1.0:
        return SufficientCondition(gamma, None, (False, False), False)
    thr = math.sqrt(4.0 / (n + 1) * math.log(1.0 / (1.0 - a)))
    return SufficientCondition(gamma, thr, tuple(g > thr for g in gamma), True)


def proposition_bound(spec: GraphSpec, profile: RateProfile) -> BoundValue:
    """``1 - sum_D pi_D exp(-(n+1) gamma_D^2 / (2 (gamma_D + 1)))`` over D with ``pi_D > 0``."""
    n = _block_size(spec)
    acc = 0.0
    for d in DISTS:
        p = profile.pi(d)
        if p == 0:
            continue
        g = gamma_combined_truth_rate(spec, profile, d)
        if not g > 0:
            return _invalid(f"gamma <= 0 on {d.label}")
        acc += p * math.exp(-(n + 1) * g * g / (2.0 * (g + 1.0)))
    return BoundValue(float(min(1.0, max(0.0, 1.0 - acc))), True)


def weighted_accuracy(clean_acc: float, robust_acc: float, pi_adv: float) -> float:
    clean_acc = _unit("clean_acc", clean_acc)
    robust_acc = _unit("robust_acc", robust_acc)
    pi_adv = _unit("pi_adv", pi_adv)
    if pi_adv == 0.0:
        return clean_acc
    if pi_adv == 1.0:
        return robust_acc
    return pi_adv * robust_acc + (1.0 - pi_adv) * clean_acc


def homogeneous_params(spec: GraphSpec, profile: RateProfile) -> Optional[tuple[int, float, float]]:
    """``(n, alpha, eps)`` if every aux rule shares one rate pair and blocks are equal, else None."""
    if spec.num_classes != 2 or spec.num_aux == 0:
        return None
    I, J = blocks(spec)
    if len(I) != len(J):
        return None
    pairs = {(a, e) for a, e in zip(profile.aux_alpha, profile.aux_eps)}
    if len(pairs) != 1:
        return None
    (a, e), = pairs
    if a[0] != a[1] or e[0] != e[1]:
        return None
    return len(I), a[0], e[0]


# ---------------------------------------------------------------------------
# report


def _dist_pair(fn):
    return tuple(fn(d) for d in DISTS)


@dataclass(frozen=True)
class BoundReport:
    """Every derived theory quantity for one (graph, profile) pair.

    Optional fields are None when the quantity is undefined for the shape or
    its precondition fails; the matching ``*_valid`` flag says which.
    """

    main_weighted_acc: float
    weight_main: tuple[float, float]
    weight_aux: tuple[tuple[float, float], ...]
    mu_main: Optional[tuple[float, float]] = None
    mu_I: Optional[tuple[float, float]] = None
    mu_J: Optional[tuple[float, float]] = None
    mu_y: Optional[tuple[tuple[float, float], tuple[float, float]]] = None  # [y][D]
    lemma1_valid: bool = False
    v2: Optional[float] = None
    thm1_bound: Optional[float] = None
    thm1_valid: bool = False
    cor1_bound: Optional[float] = None
    cor1_valid: bool = False
    gamma: Optional[tuple[float, float]] = None
    thm2_threshold: Optional[float] = None
    thm2_holds_per_dist: tuple[bool, bool] = (False, False)
    thm2_holds: bool = False
    thm2_satisfiable: bool = False
    prop_bound: Optional[float] = None
    prop_valid: bool = False
    model_ids: tuple[str, ...] = field(default=())

    def to_flat(self) -> list[tuple[str, object]]:
        """Ordered ``(key, value)`` pairs; None values mean ``invalid``."""
        out: list[tuple[str, object]] = []
        put = lambda k, v: out.append((k, v))
        labels = [d.label for d in DISTS]

        def per_dist(prefix, pair):
            for i, lab in enumerate(labels):
                put(f"{prefix}.{lab}", None if pair is None else pair[i])

        per_dist("lemma1.mu_main", self.mu_main)
        per_dist("lemma1.mu_I", self.mu_I)
        per_dist("lemma1.mu_J", self.mu_J)
        for y in (0, 1):
            per_dist(f"lemma1.mu.y{y}", None if self.mu_y is None else self.mu_y[y])
        put("lemma1.valid", self.lemma1_valid)
        put("thm1.v2", self.v2)
        put("thm1.bound", self.thm1_bound)
        put("thm1.valid", self.thm1_valid)
        put("cor1.bound", self.cor1_bound)
        put("cor1.valid", self.cor1_valid)
        per_dist("thm2.gamma", self.gamma)
        put("thm2.threshold", self.thm2_threshold)
        for i, lab in enumerate(labels):
            put(f"thm2.holds.{lab}", self.thm2_holds_per_dist[i])
        put("thm2.holds", self.thm2_holds)
        put("thm2.satisfiable", self.thm2_satisfiable)
        put("prop.bound", self.prop_bound)
        put("prop.valid", self.prop_valid)
        put("main.weighted_acc", self.main_weighted_acc)
        put("weights.main.lo", self.weight_main[0])
        put("weights.main.hi", self.weight_main[1])
        for mid, (lo, hi) in zip(self.model_ids, self.weight_aux):
            put(f"weights.{mid}.lo", lo)
            put(f"weights.{mid}.hi", hi)
        return out

    @classmethod
    def from_flat(cls, items: dict[str, object]) -> "BoundReport":
        labels = [d.label for d in DISTS]
        get = items.get

        def pair(prefix):
            v = tuple(get(f"{prefix}.{lab}") for lab in labels)
            return None if any(x is None for x in v) else tuple(float(x) for x in v)

        opt = lambda k: None if get(k) is None else float(get(k))
        mu_y = tuple(pair(f"lemma1.mu.y{y}") for y in (0, 1))
        ids = []
        for k in items:
            if k.startswith("weights.") and k.endswith(".lo") and k != "weights.main.lo":
                ids.append(k[len("weights."):-len(".lo")])
        return cls(
            main_weighted_acc=float(get("main.weighted_acc")),
            weight_main=(float(get("weights.main.lo")), float(get("weights.main.hi"))),
            weight_aux=tuple((float(get(f"weights.{m}.lo")), float(get(f"weights.{m}.hi"))) for m in ids),
            mu_main=pair("lemma1.mu_main"),
            mu_I=pair("lemma1.mu_I"),
            mu_J=pair("lemma1.mu_J"),
            mu_y=None if any(p is None for p in mu_y) else mu_y,
            lemma1_valid=bool(get("lemma1.valid")),
            v2=opt("thm1.v2"),
            thm1_bound=opt("thm1.bound"),
            thm1_valid=bool(get("thm1.valid")),
            cor1_bound=opt("cor1.bound"),
            cor1_valid=bool(get("cor1.valid")),
            gamma=pair("thm2.gamma"),
            thm2_threshold=opt("thm2.threshold"),
            thm2_holds_per_dist=tuple(bool(get(f"thm2.holds.{lab}")) for lab in labels),
            thm2_holds=bool(get("thm2.holds")),
            thm2_satisfiable=bool(get("thm2.satisfiable")),
            prop_bound=opt("prop.bound"),
            prop_valid=bool(get("prop.valid")),
            model_ids=tuple(ids),
        )


def bound_report(spec: GraphSpec, profile: RateProfile) -> BoundReport:
    profile.check(spec)
    env = envelopes(profile)
    wb = weight_bounds(env)
    base = dict(main_weighted_acc=main_weighted_accuracy(profile), weight_main=wb.main,
                weight_aux=wb.aux, model_ids=spec.model_ids)
    if spec.num_classes != 2:
        return BoundReport(**base)

    mu_I = _dist_pair(lambda d: mu_block(spec, profile, d, BLOCK_I, env))
    mu_J = _dist_pair(lambda d: mu_block(spec, profile, d, BLOCK_J, env))
    mu_y = tuple(_dist_pair(lambda d: expected_margin(spec, profile, y, d, env)) for y in (0, 1))
    thm1 = convergence_bound(spec, profile)
    base.update(
        mu_main=_dist_pair(lambda d: mu_main(profile, d, env)), mu_I=mu_I, mu_J=mu_J, mu_y=mu_y,
        lemma1_valid=all(m > 0 for m in mu_I + mu_J),
        v2=variance_bound(env), thm1_bound=thm1.value, thm1_valid=thm1.valid,
    )
    hom = homogeneous_params(spec, profile)
    if hom is not None:
        n, a, e = hom
        if a > e:
            base.update(cor1_bound=homogeneous_bound(n, a, e), cor1_valid=True)
    I, J = blocks(spec)
    if len(I) == len(J):
        sc = sufficient_condition(spec, profile)
        prop = proposition_bound(spec, profile)
        base.update(gamma=sc.gamma, thm2_threshold=sc.threshold, thm2_holds_per_dist=sc.holds_per_dist,
                    thm2_holds=sc.holds, thm2_satisfiable=sc.satisfiable,
                    prop_bound=prop.value, prop_valid=prop.valid)
    return BoundReport(**base)
