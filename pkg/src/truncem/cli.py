"""Command-line front end.

Every output is a CSV preceded by ``#`` header lines recording the package
version, the resolved configuration (``key = value``, re-readable with
``--config``), the truncation policy and its clamp level, and the seed.
Exit status: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys

import numpy as np

from . import __version__
from .analysis import (
    ConvergenceConfig,
    convergence_study,
    exit_probability,
    gap_moment,
    loglog_slope,
    summary_stats,
)
from .config import (
    DEFAULTS,
    EXAMPLE_5_3,
    MODEL_KEYS,
    POLICY_KEYS,
    ConfigError,
    RunConfig,
    choice,
    integer,
    number,
    number_list,
    read_config_file,
    real,
)
from .model import AssumptionViolation, InitialSegment, constant_initial
from .pricing import bond_price, lookback_put
from .solver import ImplicitStepFailure, PathDivergence, SolverGrid, simulate
from .truncation import PolicyViolation, clamp_bound

COMMANDS = (
    "simulate", "stats", "converge", "gap", "exit-prob", "price-bond", "price-lookback",
    "example-5-3",
)

COMMAND_DEFAULTS = {
    "simulate": {"scheme": "tem", "delta": "1e-2", "paths": "1"},
    "stats": {"scheme": "both", "pool": "terminal", "delta": "1e-2"},
    "converge": {"deltas": "1e-2,1e-3,1e-4", "mode": "tem-bem"},
    "gap": {"deltas": "1/64,1/128,1/256", "refine_factor": "2", "p": "2"},
    "exit-prob": {"scheme": "tem", "delta": "1e-2", "k_levels": "5,10,20,50"},
    "price-bond": {"delta": "1e-2"},
    "price-lookback": {"delta": "1e-2", "K": "1.5"},
    "example-5-3": {"delta": "1e-2", "paths": "10000", "pool": "terminal"},
}

HIST_BINS = 50


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file (an earlier output works too)")
    common.add_argument("--out", help="output CSV (default: stdout)")
    common.add_argument("--plot-data", dest="plot_data", help="write (x, y) pairs here")
    common.add_argument("--workers", type=int, default=1)
    for key in MODEL_KEYS + POLICY_KEYS + ("initial_file", "delta", "T", "paths", "seed"):
        common.add_argument(_flag(key), dest=key, default=None)

    parser = argparse.ArgumentParser(prog="truncem", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"truncem {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    extra = {
        "simulate": ("scheme",),
        "stats": ("scheme", "pool"),
        "converge": ("deltas", "mode", "ref_delta"),
        "gap": ("deltas", "refine_factor", "p"),
        "exit-prob": ("scheme", "k_levels"),
        "price-bond": (),
        "price-lookback": ("K",),
        "example-5-3": ("pool",),
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        for key in extra[name]:
            sp.add_argument(_flag(key), dest=key, default=None)
    return parser


def resolve(args) -> dict:
    """Defaults < command defaults < config file < flags (example-5-3 pins its model)."""
    raw = dict(DEFAULTS)
    raw.update(COMMAND_DEFAULTS[args.command])
    if args.config:
        try:
            raw.update(read_config_file(args.config))
        except OSError as exc:
            raise ConfigError("config", str(exc)) from None
    given = {k: v for k, v in vars(args).items() if k in _ALL and v is not None}
    if args.command == "example-5-3":
        clash = sorted(
            k for k in given
            if (k in EXAMPLE_5_3 and given[k] != EXAMPLE_5_3[k]) or k == "initial_file"
        )
        if clash:
            raise ConfigError(clash[0], "example-5-3 fixes the model and truncation policy")
        raw.update(EXAMPLE_5_3)
        raw.pop("initial_file", None)
    raw.update(given)
    if raw.get("seed") is None:
        raise ConfigError("seed", "a seed is required (no implicit randomness)")
    return raw


_ALL = set(MODEL_KEYS + POLICY_KEYS) | {
    "initial_file", "delta", "T", "paths", "seed", "scheme", "pool", "deltas", "ref_delta", "mode",
    "refine_factor", "p", "k_levels", "K",
}


def _grid(cfg: RunConfig, delta) -> SolverGrid:
    try:
        return SolverGrid.build(number(cfg.raw, "tau"), number(cfg.raw, "T"), delta)
    except ValueError as exc:
        raise ConfigError("delta", str(exc)) from None


def _kappa(cfg: RunConfig, delta: float) -> float:
    try:
        return clamp_bound(cfg.policy, delta)
    except PolicyViolation as exc:
        raise ConfigError("delta", str(exc)) from None


def load_initial(path: str, tau: float, M: int) -> InitialSegment:
    """Initial segment from a file of M+1 values on the grid -tau..0.

    Blank and ``#`` lines are skipped; a two-column ``t,x`` file uses the
    second column.  The Hoelder constant is the largest grid slope (ell = 1).
    """
    try:
        with open(path, encoding="utf-8") as fh:
            rows = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
        vals = [float(r.split(",")[-1]) for r in rows if not r.split(",")[-1].strip().isalpha()]
    except (OSError, ValueError) as exc:
        raise ConfigError("initial_file", str(exc)) from None
    if len(vals) != M + 1:
        raise ConfigError("initial_file", f"expected {M + 1} values on the delta grid, got {len(vals)}")
    slope = float(np.max(np.abs(np.diff(vals)))) * M / tau if M else 0.0
    try:
        return InitialSegment(tuple(vals), slope, 1.0, tau).require_positive()
    except AssumptionViolation as exc:
        raise ConfigError("initial_file", str(exc)) from None


def _initial(cfg: RunConfig, grid: SolverGrid):
    if cfg.raw.get("initial_file"):
        return load_initial(cfg.raw["initial_file"], cfg.model.tau, grid.M)
    return constant_initial(cfg.xi0, cfg.model.tau, grid.M)


def _single_delta_only(cfg: RunConfig, command: str):
    if cfg.raw.get("initial_file"):
        raise ConfigError("initial_file", f"{command} runs several step sizes; use xi0")


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class Report:
    def __init__(self, command: str, cfg: RunConfig):
        self.lines = [f"truncem {__version__}", f"command: {command}"] + cfg.echo()
        self.lines.append(f"policy: {cfg.policy.provenance}")
        self.rows = []
        self.header = None

    def note(self, text: str):
        self.lines.append(text)

    def render(self) -> str:
        buf = io.StringIO()
        for line in self.lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()


def _ensemble(cfg, scheme, delta, workers, note=None):
    grid = _grid(cfg, delta)
    policy = None
    if scheme == "tem":
        kappa = _kappa(cfg, grid.delta)
        policy = cfg.policy
        if note:
            note(f"kappa(delta={cfg.raw.get('delta', delta)}): {kappa!r}")
    paths = integer(cfg.raw, "paths", 1)
    seed = integer(cfg.raw, "seed")
    init = _initial(cfg, grid)
    ens = simulate(cfg.model, init, grid, scheme, paths, seed, policy, workers)
    if note:
        note(f"seed: {seed}; path_ids: 0..{paths - 1}")
    return ens


def cmd_simulate(cfg, rep, args):
    scheme = choice(cfg.raw, "scheme", ("tem", "bem"))
    ens = _ensemble(cfg, scheme, cfg.raw["delta"], args.workers, rep.note)
    g = ens.grid
    ks = np.arange(-g.M, g.N + 1)
    ts = ks * g.delta
    single = len(ens) == 1
    rep.header = ["k", "t", "x"] if single else ["path_id", "k", "t", "x"]
    for i in range(len(ens)):
        full = ens.path(i).states
        for k, t, x in zip(ks, ts, full):
            row = [int(k), float(t), float(x)]
            rep.rows.append(row if single else [int(ens.path_ids[i])] + row)
    rep.note(f"clamp_events: {int(ens.clamp_events.sum())}; negative_events: {int(ens.negative_events.sum())}")


def _stats_rows(cfg, rep, args, schemes):
    pool = choice(cfg.raw, "pool", ("terminal", "time"))
    rep.note(f"population: {pool}; moments: population sd, Pearson (non-excess) kurtosis")
    if "bem" in schemes:
        rep.note("bem: drift-implicit, diffusion-explicit; negative diffusion arguments clipped to 0")
    rep.header = ["method", "min", "mean", "sd", "kurt", "skew", "max"]
    plot = []
    for scheme in schemes:
        ens = _ensemble(cfg, scheme, cfg.raw["delta"], args.workers, rep.note if scheme == schemes[0] else None)
        sample = ens.terminal if pool == "terminal" else ens.states
        s = summary_stats(sample)
        rep.rows.append([scheme.upper(), s.min, s.mean, s.sd, s.kurt, s.skew, s.max])
        counts, edges = np.histogram(sample, bins=HIST_BINS)
        plot += [(scheme.upper(), 0.5 * (a + b), int(c)) for a, b, c in zip(edges[:-1], edges[1:], counts)]
    return plot


def cmd_stats(cfg, rep, args):
    scheme = choice(cfg.raw, "scheme", ("tem", "bem", "both"))
    schemes = ["tem", "bem"] if scheme == "both" else [scheme]
    return [("method", "x", "y")] + _stats_rows(cfg, rep, args, schemes)


def cmd_example(cfg, rep, args):
    return [("method", "x", "y")] + _stats_rows(cfg, rep, args, ["tem", "bem"])


def cmd_converge(cfg, rep, args):
    _single_delta_only(cfg, "converge")
    mode = choice(cfg.raw, "mode", ("tem-bem", "tem-ref"))
    deltas = number_list(cfg.raw, "deltas")
    ref = number(cfg.raw, "ref_delta") if mode == "tem-ref" else None
    finest = ref if ref is not None else min(deltas)
    if any((d / finest).denominator != 1 for d in deltas):
        raise ConfigError("deltas", "step sizes must be nested: each must be an integer multiple of the finest")
    for d in deltas + ([ref] if ref is not None else []):
        _grid(cfg, d)
        _kappa(cfg, float(d))
    study = ConvergenceConfig(
        cfg.model, cfg.policy, cfg.xi0, real(cfg.raw, "T"), tuple(float(d) for d in deltas),
        integer(cfg.raw, "paths", 1), integer(cfg.raw, "seed"), mode,
        None if ref is None else float(ref), args.workers,
    )
    try:
        res = convergence_study(study)
    except ValueError as exc:
        raise ConfigError("deltas", str(exc)) from None
    rep.note(f"mode: {mode}; seed: {study.seed}; path_ids: 0..{study.n_paths - 1}")
    rep.note(f"loglog slope of median sup-error: {_fmt(res.slope)} (stderr {_fmt(res.slope_stderr)})")
    rep.header = ["delta", "median", "mean", "p90", "n"]
    for r in res.rows:
        rep.rows.append([r.delta, r.error_median, r.error_mean, r.error_p90, r.n_paths])
    return [("x", "y")] + [(r.delta, r.error_median) for r in res.rows]


def cmd_gap(cfg, rep, args):
    _single_delta_only(cfg, "gap")
    deltas = number_list(cfg.raw, "deltas")
    R = integer(cfg.raw, "refine_factor", 2)
    p_exp = real(cfg.raw, "p")
    paths, seed = integer(cfg.raw, "paths", 1), integer(cfg.raw, "seed")
    rep.header = ["delta", "gap_moment"]
    for d in deltas:
        g = _grid(cfg, d)
        rep.note(f"kappa(delta={d}): {_kappa(cfg, g.delta)!r}")
        m = gap_moment(cfg.model, cfg.policy, cfg.xi0, g.delta, R, p_exp, paths, seed, g.T, args.workers)
        rep.rows.append([g.delta, m])
    if len(rep.rows) >= 2:
        slope, se = loglog_slope([r[0] for r in rep.rows], [r[1] for r in rep.rows])
        rep.note(f"loglog slope: {_fmt(slope)} (stderr {_fmt(se)})")
    return [("x", "y")] + [tuple(r) for r in rep.rows]


def cmd_exit(cfg, rep, args):
    scheme = choice(cfg.raw, "scheme", ("tem", "bem"))
    ens = _ensemble(cfg, scheme, cfg.raw["delta"], args.workers, rep.note)
    rep.header = ["k_level", "probability"]
    for k in number_list(cfg.raw, "k_levels"):
        if not k > 1:
            raise ConfigError("k_levels", "every level must be > 1")
        rep.rows.append([float(k), exit_probability(ens, float(k))])
    return [("x", "y")] + [tuple(r) for r in rep.rows]


def _price_row(rep, est, cfg):
    rep.header = ["estimate", "stderr", "ci_lo", "ci_hi", "n", "delta", "seed"]
    rep.rows.append([est.mean, est.stderr, est.ci95_lo, est.ci95_hi, est.n, cfg.raw["delta"], cfg.raw["seed"]])


def cmd_bond(cfg, rep, args):
    ens = _ensemble(cfg, "tem", cfg.raw["delta"], args.workers, rep.note)
    rep.note("integral: exact integral of the step process, delta * sum_{k<N} X_k")
    _price_row(rep, bond_price(ens, ens.grid.T), cfg)


def cmd_lookback(cfg, rep, args):
    K = real(cfg.raw, "K")
    if not K > 0:
        raise ConfigError("K", "strike must be > 0")
    ens = _ensemble(cfg, "tem", cfg.raw["delta"], args.workers, rep.note)
    rep.note("payoff: (K - min_{0<=k<=N} X_k)^+, undiscounted")
    _price_row(rep, lookback_put(ens, K), cfg)


HANDLERS = {
    "simulate": cmd_simulate,
    "stats": cmd_stats,
    "converge": cmd_converge,
    "gap": cmd_gap,
    "exit-prob": cmd_exit,
    "price-bond": cmd_bond,
    "price-lookback": cmd_lookback,
    "example-5-3": cmd_example,
}


def _write(path, text: str):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.workers < 1:
            raise ConfigError("workers", "must be >= 1")
        cfg = RunConfig.from_raw(resolve(args))
        integer(cfg.raw, "seed")
        integer(cfg.raw, "paths", 1)
        rep = Report(args.command, cfg)
        plot = HANDLERS[args.command](cfg, rep, args)
    except ConfigError as exc:
        print(f"truncem: config error: {exc}", file=sys.stderr)
        return 1
    except (ImplicitStepFailure, PathDivergence, ArithmeticError) as exc:
        print(f"truncem: numerical failure: {exc}", file=sys.stderr)
        return 2
    _write(args.out, rep.render())
    if args.plot_data and plot:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(plot[0])
        for row in plot[1:]:
            w.writerow([_fmt(v) for v in row])
        _write(args.plot_data, buf.getvalue())
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
