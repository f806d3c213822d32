"""Command-line front end: ``solve``, ``gossip``, ``privacy`` and ``bench``.

Exit codes: 0 on success, 2 on invalid input or configuration, 3 on a
numerical failure.  Set ``SKETCHGOSSIP_THREADS`` to run trials on several
threads; results do not depend on it.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .errors import ConfigError, InvalidInputError, SketchGossipError
from .harness import ExperimentConfig, bench, emit_plot_script, parse_config_text, run_experiment

# flag dest -> config key
COMMON = {"seed": "seed", "trials": "trials", "iters": "iters", "target": "target",
          "record_every": "record_every", "metrics": "metrics", "out": "out"}
SOLVE = {"system": "system", "sketch": "sketch.variant", "tau": "sketch.tau",
         "probabilities": "sketch.probabilities", "omega": "solver.omega",
         "variant": "solver.variant", "beta": "momentum.beta", "gamma": "momentum.gamma",
         "acc_option": "acc.option", "acc_lambda": "acc.lambda", "acc_nu": "acc.nu",
         "inexact": "inexact.variant", "inner": "inexact.inner", "r": "inexact.r",
         "q": "inexact.q", "sigma": "inexact.sigma"}
GOSSIP = {"graph": "graph", "protocol": "gossip.protocol", "omega": "gossip.omega",
          "beta": "gossip.beta", "tau": "gossip.tau", "acc_option": "acc.option",
          "nu": "acc.nu", "acc_lambda": "acc.lambda", "weights": "gossip.weights"}
PRIVACY = {"graph": "graph", "oracle": "privacy.oracle", "schedule": "privacy.schedule",
           "lam": "privacy.lambda", "a": "privacy.a", "R": "privacy.R",
           "epsilon": "privacy.epsilon", "sigma": "privacy.sigma", "phi": "privacy.phi"}


def _common(p):
    p.add_argument("--config", help="key = value file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    p.add_argument("--seed")
    p.add_argument("--trials")
    p.add_argument("--iters", "--max-iters", dest="iters")
    p.add_argument("--target")
    p.add_argument("--record-every", dest="record_every")
    p.add_argument("--metrics", help="comma-separated metric names")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--plot", help="also write a gnuplot script here")


def build_parser():
    parser = argparse.ArgumentParser(prog="sketchgossip", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="sketch-and-project solvers on a linear system")
    _common(s)
    s.add_argument("--system", help="gaussian:MxN, spd:N, sparse:MxN:G or file:A[,b]")
    s.add_argument("--sketch", help="coordinate, block or gaussian")
    s.add_argument("--tau")
    s.add_argument("--probabilities")
    s.add_argument("--omega")
    s.add_argument("--variant")
    s.add_argument("--beta")
    s.add_argument("--gamma")
    s.add_argument("--acc-option", dest="acc_option")
    s.add_argument("--acc-lambda", dest="acc_lambda")
    s.add_argument("--acc-nu", dest="acc_nu")
    s.add_argument("--inexact")
    s.add_argument("--inner")
    s.add_argument("--r")
    s.add_argument("--q")
    s.add_argument("--sigma")

    g = sub.add_parser("gossip", help="randomized gossip on a simulated network")
    _common(g)
    g.add_argument("--graph")
    g.add_argument("--protocol")
    g.add_argument("--omega")
    g.add_argument("--beta")
    g.add_argument("--tau")
    g.add_argument("--acc-option", dest="acc_option")
    g.add_argument("--acc-lambda", dest="acc_lambda")
    g.add_argument("--nu")
    g.add_argument("--weights", help="uniform, degree or file:<path>")

    pr = sub.add_parser("privacy", help="privacy-preserving gossip oracles")
    _common(pr)
    pr.add_argument("--graph")
    pr.add_argument("--oracle")
    pr.add_argument("--schedule")
    pr.add_argument("--lambda", dest="lam")
    pr.add_argument("--a")
    pr.add_argument("--R")
    pr.add_argument("--epsilon")
    pr.add_argument("--sigma")
    pr.add_argument("--phi", help="const:<v> or gamma:<g> (gamma:auto = min(alpha/2, d_min))")

    b = sub.add_parser("bench", help="throughput of the core loops")
    b.add_argument("--what", default="all", choices=("all", "solve", "gossip", "privacy"))
    b.add_argument("--iters", type=int, default=20000)
    b.add_argument("--seed", type=int, default=0)
    return parser


def config_from_args(args):
    values = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                values.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError("config", f"cannot read {args.config}: {exc}") from exc
    values["mode"] = args.command
    table = dict(COMMON)
    table.update({"solve": SOLVE, "gossip": GOSSIP, "privacy": PRIVACY}[args.command])
    for dest, key in table.items():
        val = getattr(args, dest, None)
        if val is not None:
            values[key] = val
    for item in args.set:
        if "=" not in item:
            raise ConfigError("--set", f"expected KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    return ExperimentConfig(values)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "bench":
            print("name,iterations,seconds,iterations_per_second")
            for name, iters, secs in bench(args.what, args.iters, args.seed):
                print(f"{name},{iters},{secs:.6f},{iters / secs:.1f}")
            return 0
        config = config_from_args(args)
        trace, _ = run_experiment(config)
        text = trace.to_csv()
        if config["out"]:
            with open(config["out"], "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        if args.plot:
            emit_plot_script(trace, path=args.plot)
        return 0
    except (InvalidInputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SketchGossipError, FloatingPointError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
