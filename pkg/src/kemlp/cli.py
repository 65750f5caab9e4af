"""Command-line front end.

Exit codes: 0 success, 1 usage or config error, 2 verification failure,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from typing import Optional, Sequence

from . import dataio
from .errors import (EnumerationTooLargeError, HeaderMismatchError, InvalidArgumentError,
                     NumericalOverflowError, ParseError, SchemaError, TrainingDivergedError,
                     UnsupportedShapeError)
from .graph import DISTS, predict
from .simulator import WorldConfig, exact_weighted_accuracy, monte_carlo_accuracy, sample_dataset
from .theory import bayes_optimal_weights, bound_report, weighted_accuracy
from .training import TrainConfig, negative_log_likelihood, train_weights

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2
EXIT_NUMERIC = 3

DEFAULT_CLI_BETA = 0.5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2 by default; 2 means verification failure here
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _load_data(args):
    spec = dataio.read_spec(args.spec)
    _, data = dataio.read_sensor_log(args.data, spec)
    return spec, data


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    world = dataio.read_world(args.world)
    if args.seed is not None:
        world = WorldConfig(world.spec, world.profile, args.seed)
    if args.n < 0:
        raise UsageError("--n must be >= 0")
    data = sample_dataset(world, args.n)
    dataio.write_sensor_log(args.out, world.spec, data)
    return EXIT_OK


def cmd_train(args) -> int:
    spec, data = _load_data(args)
    if len(data) == 0:
        raise UsageError(f"{args.data}: no rows to train on")
    cfg = TrainConfig(learning_rate=args.lr, iterations=args.iters, batch_size=args.batch,
                      adversarial_ratio=args.beta, seed=args.seed)
    weights = train_weights(spec, data, cfg)
    dataio.write_weights(args.out, weights)
    nll = negative_log_likelihood(spec, weights, data)
    sys.stderr.write(dataio.report_text([
        ("train.rows", len(data)), ("train.beta", cfg.adversarial_ratio),
        ("train.final_nll", nll), ("train.mean_nll", nll / len(data)),
    ]))
    return EXIT_OK


def cmd_infer(args) -> int:
    spec, data = _load_data(args)
    weights = dataio.read_weights(args.weights, spec)
    pred = predict(spec, weights, data)
    lines = ["id,prediction\n"] + [f"{i},{int(p)}\n" for i, p in enumerate(pred)]
    _emit("".join(lines), args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    spec, data = _load_data(args)
    weights = dataio.read_weights(args.weights, spec)
    if len(data) == 0:
        raise UsageError(f"{args.data}: no rows to evaluate")
    hits = predict(spec, weights, data) == data.y
    accs = []
    items = []
    for d in DISTS:
        mask = data.dist == int(d)
        acc = float(hits[mask].mean()) if mask.any() else None
        accs.append(acc)
        items += [(f"eval.{d.label}.rows", int(mask.sum())), (f"eval.{d.label}.acc", acc)]
    pi = args.pi if args.pi is not None else float((data.dist == 1).mean())
    if not 0.0 <= pi <= 1.0:
        raise UsageError("--pi must lie in [0, 1]")
    clean, robust = accs
    if pi == 0.0:
        weighted = clean
    elif pi == 1.0:
        weighted = robust
    elif clean is None or robust is None:
        weighted = None
    else:
        weighted = weighted_accuracy(clean, robust, pi)
    items += [("eval.clean", clean), ("eval.robust", robust), ("eval.pi", pi), ("eval.weighted", weighted),
              ("eval.overall", float(hits.mean()))]
    _emit(dataio.report_text(items), args.out)
    return EXIT_OK


def cmd_bounds(args) -> int:
    if (args.world is None) == (args.data is None):
        raise UsageError("bounds: give exactly one of --world or --data")
    extra = []
    if args.world is not None:
        world = dataio.read_world(args.world)
        spec, profile = world.spec, world.profile
    else:
        if args.spec is None:
            raise UsageError("bounds: --data requires --spec")
        spec, data = _load_data(args)
        profile = dataio.estimate_rates(spec, data)
        extra.append(("rates.unestimable", ";".join(profile.unestimable) or "none"))
    report = bound_report(spec, profile)
    _emit(dataio.report_text(report.to_flat() + extra), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    world = dataio.read_world(args.world)
    spec, profile = world.spec, world.profile
    if args.weights == "optimal":
        try:
            weights = bayes_optimal_weights(spec, profile)
        except UnsupportedShapeError as e:
            raise UsageError(f"verify: {e}; use --weights learned") from None
    else:
        train_world = WorldConfig(spec, profile, args.seed)
        data = sample_dataset(train_world, args.train_n)
        weights = train_weights(spec, data, TrainConfig(seed=args.seed))
    report = bound_report(spec, profile)
    rows: list[tuple[str, object]] = []
    violations = []

    try:
        exact = exact_weighted_accuracy(world, weights)
    except EnumerationTooLargeError:
        exact = None
    rows.append(("verify.exact", exact))
    if args.mc > 0:
        mc, se = monte_carlo_accuracy(WorldConfig(spec, profile, args.seed), weights, args.mc)
        rows += [("verify.mc", mc), ("verify.mc_stderr", se)]
        if exact is not None:
            z = abs(mc - exact) / se if se > 0 else (0.0 if mc == exact else math.inf)
            rows.append(("verify.mc_z", z))
    reference = exact
    if reference is None:
        if args.mc <= 0:
            raise UsageError("verify: world is too large to enumerate; pass --mc N")
        reference = mc

    checks = [("thm1", report.thm1_bound, report.thm1_valid),
              ("cor1", report.cor1_bound, report.cor1_valid),
              ("prop", report.prop_bound, report.prop_valid)]
    for name, bound, valid in checks:
        if not valid or bound is None:
            rows.append((f"verify.{name}", None))
            continue
        bound = bound + args.bound_offset
        ok = reference >= bound
        rows += [(f"verify.{name}", bound), (f"verify.{name}.ok", ok)]
        if not ok:
            violations.append(name)
    a_main = report.main_weighted_acc
    rows.append(("verify.main.weighted_acc", a_main))
    if report.thm2_holds:
        ok = reference > a_main + args.bound_offset
        rows.append(("verify.thm2.ok", ok))
        if not ok:
            violations.append("thm2")
    rows.append(("verify.status", "fail" if violations else "pass"))
    sys.stdout.write(dataio.report_text(rows))
    if violations:
        sys.stderr.write(f"bound violation: {', '.join(violations)}\n")
        return EXIT_VERIFY
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kemlp", description="Knowledge-enhanced joint inference toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="sample a sensor log from a world config")
    s.add_argument("--world", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=None, help="override the world seed")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="learn weights from a sensor log")
    t.add_argument("--data", required=True)
    t.add_argument("--spec", required=True)
    t.add_argument("--beta", type=float, default=DEFAULT_CLI_BETA)
    t.add_argument("--lr", type=float, default=TrainConfig.learning_rate)
    t.add_argument("--iters", type=int, default=TrainConfig.iterations)
    t.add_argument("--batch", type=int, default=TrainConfig.batch_size)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="predict a label for every log row")
    i.add_argument("--data", required=True)
    i.add_argument("--spec", required=True)
    i.add_argument("--weights", required=True)
    i.add_argument("--out")
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="clean, robust and weighted accuracy on a log")
    e.add_argument("--data", required=True)
    e.add_argument("--spec", required=True)
    e.add_argument("--weights", required=True)
    e.add_argument("--pi", type=float, default=None, help="adversarial weight (default: fraction in the log)")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bounds", help="emit the bound report for a world or an estimated log")
    b.add_argument("--world")
    b.add_argument("--data")
    b.add_argument("--spec")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bounds)

    v = sub.add_parser("verify", help="compare exact, Monte Carlo and bound values")
    v.add_argument("--world", required=True)
    v.add_argument("--weights", choices=("learned", "optimal"), default="optimal")
    v.add_argument("--mc", type=int, default=100000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--train-n", type=int, default=100000)
    v.add_argument("--bound-offset", type=float, default=0.0, help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        sys.stderr.write(f"{e}\n")
        return EXIT_USAGE
    except (SchemaError, ParseError, HeaderMismatchError, InvalidArgumentError,
            UnsupportedShapeError, EnumerationTooLargeError, OSError) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_USAGE
    except (NumericalOverflowError, TrainingDivergedError, FloatingPointError) as e:
        sys.stderr.write(f"numerical failure: {e}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
