"""Experiment configuration, problem generators, trial orchestration and plot scripts.

Configurations are flat ``key = value`` text with dotted keys
(``sketch.tau = 5``); command-line flags override individual keys.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import gossip, graphs, privacy
from .errors import ConfigError, InvalidInputError, SketchGossipError
from .inexact import InexactnessSpec
from .io import load_edge_list, load_matrix, load_vector
from .sketches import Coordinate, GaussianVector, UniformBlock
from .solver import SolverConfig, Stopping, run, run_batch
from .streams import trial_rng
from .system import LinearSystem
from .trace import Trace

THREADS_ENV = "SKETCHGOSSIP_THREADS"
GENERATOR_STREAM = 1000


# ---------------------------------------------------------------- generators


def gaussian_system(m, n, seed=0):
    """A and z with i.i.d. standard normal entries, b = A z."""
    rng = trial_rng(seed, 0, GENERATOR_STREAM)
    A = rng.standard_normal((m, n))
    return LinearSystem(A, A @ rng.standard_normal(n))


def spd_system(n, rows=None, seed=0):
    """A = P^T P with Gaussian P (``rows`` x ``n``, default 2n), b = A z."""
    rng = trial_rng(seed, 0, GENERATOR_STREAM)
    P = rng.standard_normal((rows or 2 * n, n))
    A = P.T @ P
    return LinearSystem(A, A @ rng.standard_normal(n))


def sparse_system(m, n, g, seed=0):
    """Gaussian A with all but ``g`` random entries per row zeroed, b = A z."""
    if not 1 <= g <= n:
        raise InvalidInputError("need 1 <= g <= n nonzeros per row")
    rng = trial_rng(seed, 0, GENERATOR_STREAM)
    A = rng.standard_normal((m, n))
    mask = np.zeros((m, n), dtype=bool)
    for r in range(m):
        mask[r, rng.choice(n, g, replace=False)] = True
    A[~mask] = 0.0
    return LinearSystem(A, A @ rng.standard_normal(n))


def _dims(text, count):
    parts = text.lower().split("x")
    if len(parts) != count:
        raise ValueError(text)
    return [int(p) for p in parts]


def parse_system_spec(spec, seed=0):
    """``gaussian:MxN``, ``spd:N`` or ``spd:N:ROWS``, ``sparse:MxN:G`` or ``file:A[,b]``.

    A file system without ``b`` gets b = A z with a seeded Gaussian z.
    """
    kind, _, arg = spec.partition(":")
    try:
        if kind == "gaussian":
            return gaussian_system(*_dims(arg, 2), seed=seed)
        if kind == "spd":
            parts = arg.split(":")
            return spd_system(int(parts[0]), int(parts[1]) if len(parts) > 1 else None, seed)
        if kind == "sparse":
            dims, g = arg.split(":")
            return sparse_system(*_dims(dims, 2), int(g), seed=seed)
    except ValueError as exc:
        raise ConfigError("system", f"bad generator spec {spec!r}") from exc
    if kind == "file":
        paths = arg.split(",")
        A = load_matrix(paths[0])
        if len(paths) > 1:
            b = load_vector(paths[1])
        else:
            b = A @ trial_rng(seed, 0, GENERATOR_STREAM).standard_normal(A.shape[1])
        return LinearSystem(A, b)
    raise ConfigError("system", f"unknown system kind {kind!r}")


# ---------------------------------------------------------------- config


def _float(v):
    return float(v)


def _int(v):
    return int(v)


def _opt_float(v):
    return None if v in (None, "", "none") else float(v)


def _str(v):
    return str(v)


def _list(v):
    return tuple(t.strip() for t in str(v).split(",") if t.strip())


# key -> (parser, default)
SCHEMA = {
    "mode": (_str, "solve"),
    "seed": (_int, 0),
    "trials": (_int, 10),
    "iters": (_int, 1000),
    "target": (_opt_float, None),
    "record_every": (_int, 1),
    "metrics": (_list, ("rel_error",)),
    "out": (_str, ""),
    "system": (_str, "gaussian:300x200"),
    "sketch.variant": (_str, "coordinate"),
    "sketch.tau": (_int, 1),
    "sketch.probabilities": (_str, "row-norms"),
    "solver.variant": (_str, "basic"),
    "solver.omega": (_float, 1.0),
    "momentum.beta": (_float, 0.0),
    "momentum.gamma": (_float, 0.0),
    "acc.option": (_int, 2),
    "acc.lambda": (_opt_float, None),
    "acc.nu": (_opt_float, None),
    "inexact.variant": (_str, "structured"),
    "inexact.q": (_float, 0.0),
    "inexact.sigma": (_str, "0"),
    "inexact.inner": (_str, "cg"),
    "inexact.r": (_int, 1),
    "graph": (_str, "cycle:10"),
    "gossip.protocol": (_str, "pairwise"),
    "gossip.omega": (_float, 1.0),
    "gossip.beta": (_float, 0.0),
    "gossip.tau": (_int, 1),
    "gossip.weights": (_str, "uniform"),
    "privacy.oracle": (_str, "binary"),
    "privacy.schedule": (_str, "constant"),
    "privacy.lambda": (_float, 0.01),
    "privacy.a": (_float, 1.0),
    "privacy.R": (_opt_float, None),
    "privacy.epsilon": (_float, 0.02),
    "privacy.sigma": (_float, 1.0),
    "privacy.phi": (_str, "gamma:auto"),
}

CHOICES = {
    "mode": ("solve", "gossip", "privacy"),
    "sketch.variant": ("coordinate", "block", "gaussian"),
    "solver.variant": ("basic", "momentum", "stochastic-momentum", "accelerated", "inexact", "dual"),
    "acc.option": (1, 2),
    "inexact.variant": ("bounded", "norm", "function", "structured"),
    "inexact.inner": ("cg", "sp"),
    "gossip.protocol": ("pairwise", "laplacian", "block", "momentum", "acc", "dual-rnm"),
    "privacy.oracle": ("binary", "gap", "noise"),
    "privacy.schedule": ("constant", "inv_t", "inv_sqrt_t", "optimal", "adaptive"),
}


def parse_config_text(text):
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


class ExperimentConfig:
    """Validated experiment settings.

    Build with :meth:`from_text`, :meth:`from_file` or keyword overrides;
    values are parsed and checked on construction, so an invalid setting
    raises :class:`ConfigError` naming the key before any run starts.
    """

    def __init__(self, values=None, **overrides):
        raw = {k: d for k, (_, d) in SCHEMA.items()}
        merged = dict(values or {})
        merged.update({k.replace("__", "."): v for k, v in overrides.items()})
        for key, value in merged.items():
            if key not in SCHEMA:
                raise ConfigError(key, "unknown configuration key")
            parser = SCHEMA[key][0]
            try:
                raw[key] = parser(value) if isinstance(value, str) or parser is not _list else tuple(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(key, f"cannot parse {value!r}") from exc
        self.values = raw
        self.validate()

    @classmethod
    def from_text(cls, text, **overrides):
        return cls(parse_config_text(text), **overrides)

    @classmethod
    def from_file(cls, path, **overrides):
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from exc
        return cls.from_text(text, **overrides)

    def with_overrides(self, mapping):
        vals = dict(self.values)
        vals.update(mapping)
        return ExperimentConfig(vals)

    def __getitem__(self, key):
        return self.values[key]

    def to_text(self):
        lines = []
        for k, v in self.values.items():
            if isinstance(v, tuple):
                v = ",".join(v)
            lines.append(f"{k} = {'' if v is None else v}")
        return "\n".join(lines) + "\n"

    def validate(self):
        v = self.values
        for key, allowed in CHOICES.items():
            if v[key] not in allowed:
                raise ConfigError(key, f"must be one of {', '.join(map(str, allowed))}")
        for key in ("trials", "record_every", "sketch.tau", "gossip.tau"):
            if v[key] < 1:
                raise ConfigError(key, "must be at least 1")
        for key in ("iters", "inexact.r"):
            if v[key] < 0:
                raise ConfigError(key, "must be nonnegative")
        if v["target"] is not None and v["target"] <= 0:
            raise ConfigError("target", "must be positive")
        for key in ("solver.omega", "gossip.omega"):
            if not v[key] > 0:
                raise ConfigError(key, "must be positive")
        if v["momentum.beta"] < 0 or v["gossip.beta"] < 0:
            raise ConfigError("momentum.beta", "must be nonnegative")
        if v["privacy.epsilon"] <= 0:
            raise ConfigError("privacy.epsilon", "must be positive")
        if v["privacy.lambda"] <= 0 or v["privacy.a"] <= 0:
            raise ConfigError("privacy.lambda", "stepsizes must be positive")
        if v["privacy.sigma"] < 0:
            raise ConfigError("privacy.sigma", "must be nonnegative")
        phi = v["privacy.phi"]
        kind, _, arg = phi.partition(":")
        if kind not in ("const", "gamma") or (arg != "auto" and not _is_float(arg)):
            raise ConfigError("privacy.phi", "expected const:<v>, gamma:<g> or gamma:auto")
        if kind == "const" and not 0 <= float(arg) < 1:
            raise ConfigError("privacy.phi", "decay must lie in [0, 1)")
        if v["sketch.probabilities"] not in ("uniform", "row-norms"):
            try:
                p = [float(t) for t in v["sketch.probabilities"].strip("[]").split(",")]
            except ValueError as exc:
                raise ConfigError("sketch.probabilities", "expected uniform, row-norms or a list") from exc
            if any(x < 0 for x in p) or not np.isclose(sum(p), 1.0):
                raise ConfigError("sketch.probabilities", "must be nonnegative and sum to 1")
        sigma = v["inexact.sigma"]
        if not (_is_float(sigma) or (sigma.startswith("geometric:")
                                     and len(sigma.split(":")[1].split(",")) == 2)):
            raise ConfigError("inexact.sigma", "expected a number or geometric:a,ratio")
        known = {"rel_error", "f", "mass", "consensus_error", "dual_gap", "L", "delta"}
        for m in v["metrics"]:
            if m not in known:
                raise ConfigError("metrics", f"unknown metric {m!r}")


def _is_float(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


# ---------------------------------------------------------------- builders


def build_sketch(config, system):
    v = config.values
    kind = v["sketch.variant"]
    if kind == "block":
        return UniformBlock(v["sketch.tau"])
    if kind == "gaussian":
        return GaussianVector()
    p = v["sketch.probabilities"]
    if p == "uniform":
        return Coordinate.uniform(system.m)
    if p == "row-norms":
        return Coordinate.convenient(system)
    probs = np.array([float(t) for t in p.strip("[]").split(",")])
    if probs.size != system.m:
        raise ConfigError("sketch.probabilities", f"need {system.m} entries")
    return Coordinate(probs)


def build_inexact(config):
    v = config.values
    kind = v["inexact.variant"]
    if kind == "structured":
        return InexactnessSpec.structured(v["inexact.inner"], v["inexact.r"])
    if kind == "bounded":
        s = v["inexact.sigma"]
        if s.startswith("geometric:"):
            a, ratio = (float(t) for t in s.split(":")[1].split(","))
            return InexactnessSpec.bounded(("geometric", a, ratio))
        return InexactnessSpec.bounded(float(s))
    if kind == "norm":
        return InexactnessSpec.norm_proportional(v["inexact.q"])
    return InexactnessSpec.function_proportional(v["inexact.q"], v["solver.omega"])


def build_solver_config(config):
    v = config.values
    variant = v["solver.variant"]
    return SolverConfig(
        variant=variant, omega=v["solver.omega"], beta=v["momentum.beta"],
        gamma=v["momentum.gamma"], acc_option=v["acc.option"], acc_lambda=v["acc.lambda"],
        acc_nu=v["acc.nu"], inexact=build_inexact(config) if variant == "inexact" else None)


def build_network(config):
    spec = config["graph"]
    if spec.startswith("file:"):
        return load_edge_list(spec[5:])
    try:
        return graphs.parse_graph_spec(spec, seed=trial_rng(config["seed"], 0, GENERATOR_STREAM))
    except InvalidInputError as exc:
        raise ConfigError("graph", str(exc)) from exc


def build_weights(config, net):
    w = config["gossip.weights"]
    if w == "uniform":
        return None
    if w == "degree":
        return net.degrees.astype(float)
    if w.startswith("file:"):
        return load_vector(w[5:])
    raise ConfigError("gossip.weights", "expected uniform, degree or file:<path>")


def build_protocol(config, net):
    v = config.values
    kind = v["gossip.protocol"]
    w = build_weights(config, net)
    wt = () if w is None else tuple(w)
    if kind == "pairwise":
        return gossip.Pairwise(v["gossip.omega"]) if w is None else \
            gossip.WeightedPairwise(v["gossip.omega"], wt)
    if kind == "laplacian":
        return gossip.LaplacianNode(v["gossip.omega"], wt)
    if kind == "block":
        return gossip.Block(v["gossip.tau"], v["gossip.omega"], v["gossip.beta"])
    if kind == "momentum":
        return gossip.PairwiseMomentum(v["gossip.omega"], v["gossip.beta"])
    if kind == "acc":
        value = v["acc.nu"] if v["acc.option"] == 2 else v["acc.lambda"]
        return gossip.AccGossip(v["acc.option"], value)
    return gossip.DualRNM(v["gossip.tau"])


def build_schedule(config, net, c):
    v = config.values
    kind = v["privacy.schedule"]
    if kind == "constant":
        return privacy.StepsizeSchedule.constant(v["privacy.lambda"])
    if kind == "inv_t":
        return privacy.StepsizeSchedule.inv_t()
    if kind == "inv_sqrt_t":
        return privacy.StepsizeSchedule.inv_sqrt_t(v["privacy.a"])
    if kind == "optimal":
        # R defaults to the exact initial dual gap (not available to real nodes)
        R = v["privacy.R"] if v["privacy.R"] is not None else 0.5 * privacy.consensus_error(c)
        return privacy.StepsizeSchedule.optimal(R, v["iters"])
    return privacy.StepsizeSchedule.adaptive()


def build_phi(config, net):
    kind, _, arg = config["privacy.phi"].partition(":")
    if kind == "const":
        return np.full(net.n, float(arg))
    gamma = min(graphs.algebraic_connectivity(net) / 2.0, float(net.degrees.min())) \
        if arg == "auto" else float(arg)
    return privacy.phi_threshold(net, gamma)[0]


# ---------------------------------------------------------------- running


def _threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError as exc:
        raise ConfigError(THREADS_ENV, "must be an integer") from exc


def _initial_values(config, net, trial):
    return trial_rng(config["seed"], trial, 7).standard_normal(net.n)


def _trial_runner(config):
    v = config.values
    mode = v["mode"]
    metrics = v["metrics"]
    if mode == "solve":
        system = parse_system_spec(v["system"], v["seed"])
        dist = build_sketch(config, system)
        scfg = build_solver_config(config)
        stop = Stopping(v["iters"], v["target"])
        return lambda t: run(system, dist, scfg, stopping=stop, seed=v["seed"], trial=t,
                             metrics=metrics, record_every=v["record_every"])
    net = build_network(config)
    if mode == "gossip":
        proto = build_protocol(config, net)
        return lambda t: gossip.simulate(net, proto, _initial_values(config, net, t), v["iters"],
                                         v["target"], v["seed"], t, metrics, v["record_every"])
    oracle = v["privacy.oracle"]
    phi = build_phi(config, net) if oracle == "noise" else None
    pm = tuple(m if m != "rel_error" else "consensus_error" for m in metrics)

    def one(t):
        c = _initial_values(config, net, t)
        sched = build_schedule(config, net, c) if oracle == "binary" else None
        return privacy.simulate_privacy(net, oracle, c, v["iters"], v["seed"], t, schedule=sched,
                                        eps=v["privacy.epsilon"], sigma=v["privacy.sigma"],
                                        phi=phi, record_every=v["record_every"], metrics=pm)
    return one


def run_experiment(config):
    """Run every trial and return ``(trace, summary)``.

    ``summary`` maps each metric to ``(iterations, mean over trials)``.  Trials
    use independent streams keyed by (seed, trial), so the result does not
    depend on the thread count or on execution order.
    """
    if not isinstance(config, ExperimentConfig):
        config = ExperimentConfig(config)
    v = config.values
    if (v["mode"] == "solve" and v["sketch.variant"] == "coordinate"
            and v["solver.variant"] in ("basic", "momentum") and v["metrics"] == ("rel_error",)):
        # vectorised over trials; same per-trial row streams as the scalar loop
        system = parse_system_spec(v["system"], v["seed"])
        beta = v["momentum.beta"] if v["solver.variant"] == "momentum" else 0.0
        trace = run_batch(system, build_sketch(config, system), None, v["trials"], v["iters"],
                          v["seed"], v["solver.omega"], beta, v["record_every"], v["target"])
        return trace, {m: trace.mean_series(m) for m in trace.metrics()}
    runner = _trial_runner(config)
    trials = range(config["trials"])
    threads = _threads()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(runner, trials))
    else:
        parts = [runner(t) for t in trials]
    trace = Trace()
    for p in parts:
        trace.extend(p)
    summary = {m: trace.mean_series(m) for m in trace.metrics()}
    return trace, summary


def iterations_to(trace, metric, target):
    """Per-trial first recorded iteration with ``metric <= target`` (inf if none)."""
    out = []
    for t in trace.trials():
        ks, vals = trace.series(metric, t)
        hit = np.nonzero(vals <= target)[0]
        out.append(float(ks[hit[0]]) if hit.size else float("inf"))
    return np.array(out)


# ---------------------------------------------------------------- plot scripts


def _fmt(x):
    return repr(float(x))


def emit_plot_script(trace, style="mean", title="", ylabel="relative error", path=None):
    """Gnuplot script with a log-scale y axis and inline data blocks.

    ``trace`` is a :class:`Trace` (one curve per metric) or a mapping
    ``label -> Trace`` (one curve per label and metric, e.g. a sweep over
    beta).  ``style`` is ``mean`` (mean over trials) or ``trials`` (every
    trial).  Non-positive values are dropped since the axis is logarithmic.
    """
    if style not in ("mean", "trials"):
        raise InvalidInputError("style must be 'mean' or 'trials'")
    groups = trace.items() if isinstance(trace, dict) else [("", trace)]
    curves = []
    for label, tr in groups:
        multi = len(tr.metrics()) > 1 or not label
        for metric in tr.metrics():
            name = f"{label} {metric}".strip() if multi else label
            if style == "mean":
                curves.append((name, *tr.mean_series(metric)))
            else:
                for t in tr.trials():
                    curves.append((f"{name} trial {t}", *tr.series(metric, t)))
    lines = [
        "# gnuplot script",
        "set logscale y",
        'set format y "10^{%L}"',
        'set xlabel "iteration"',
        f'set ylabel "{ylabel}"',
        "set key top right",
    ]
    if title:
        lines.append(f'set title "{title}"')
    for idx, (_, ks, vals) in enumerate(curves):
        lines.append(f"$data{idx} << EOD")
        for k, val in zip(ks, vals):
            if val > 0:
                lines.append(f"{int(k)} {_fmt(val)}")
        lines.append("EOD")
    if curves:
        parts = [f'$data{i} using 1:2 with lines title "{name}"'
                 for i, (name, _, _) in enumerate(curves)]
        lines.append("plot " + ", \\\n     ".join(parts))
    else:
        lines.append("$data0 << EOD")
        lines.append("EOD")
        lines.append("plot 1/0 notitle")
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


# ---------------------------------------------------------------- benchmarks


def bench(kind="all", iters=20000, seed=0):
    """Wall-clock throughput of the core loops; returns ``[(name, iters, seconds)]``."""
    import time

    cases = []
    if kind in ("all", "solve"):
        system = gaussian_system(300, 200, seed)
        dist = Coordinate.convenient(system)
        cases.append(("rk-300x200", lambda: run(system, dist, stopping=Stopping(iters),
                                                  record_every=iters)))
    if kind in ("all", "gossip"):
        net = graphs.cycle(100)
        c = trial_rng(seed, 0, 7).standard_normal(100)
        cases.append(("pairwise-cycle100", lambda: gossip.simulate(
            net, gossip.Pairwise(), c, iters, record_every=iters)))
    if kind in ("all", "privacy"):
        net = graphs.cycle(10)
        c = trial_rng(seed, 0, 7).standard_normal(10)
        cases.append(("binary-adaptive-cycle10", lambda: privacy.simulate_privacy(
            net, "binary", c, iters, schedule=privacy.StepsizeSchedule.adaptive(),
            record_every=iters)))
    if not cases:
        raise SketchGossipError(f"unknown benchmark {kind!r}")
    out = []
    for name, fn in cases:
        t0 = time.perf_counter()
        fn()
        out.append((name, iters, time.perf_counter() - t0))
    return out
