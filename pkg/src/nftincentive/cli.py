"""``nftinc`` command line: simulations, sweeps and the analysis checks.

Configuration files are flat TOML (``key = value`` lines, ``#`` comments).
Every key must be an :class:`~nftincentive.harness.ExperimentConfig` field;
``--config default`` uses the built-in defaults.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import analysis, harness
from .errors import ConfigError
from .harness import ExperimentConfig

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

OUT_ROOT_ENV = "NFTINC_OUT_ROOT"
EXIT_OK, EXIT_INVALID, EXIT_FAILURE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; route it to the validation code instead
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def load_config(source: str) -> ExperimentConfig:
    if source == "default":
        return ExperimentConfig()
    path = Path(source)
    if not path.is_file():
        raise ConfigError("config", f"no such file: {source}")
    try:
        with path.open("rb") as fp:
            data = tomllib.load(fp)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"{source}: {exc}") from None
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(nested[0], "tables are not allowed; the file must be flat")
    return ExperimentConfig.from_mapping(data)


def _default_out(command: str) -> str:
    return str(Path(os.environ.get(OUT_ROOT_ENV, "runs")) / command)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nftinc", description=__doc__.splitlines()[0],
                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text,
                           formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.add_argument("--config", required=True, help="flat TOML config file, or 'default'")
        p.add_argument("--out", default=_default_out(name), help=f"output directory (root taken from ${OUT_ROOT_ENV})")
        p.add_argument("--seed", type=int, default=None, help="run this single seed instead of the configured list")
        return p

    p = add("simulate", "run one configuration over its seeds and write the reward CSV")
    p.add_argument("--epochs", type=int, default=None, help="override the configured epoch count")
    p.add_argument("--jobs", type=int, default=1, help="parallel seed runs")

    p = add("sweep", "run a configuration for each value of one parameter")
    p.add_argument("--axis", required=True, help="configuration field to vary")
    p.add_argument("--values", required=True, help="comma-separated values for the axis")
    p.add_argument("--epochs", type=int, default=None, help="override the configured epoch count")
    p.add_argument("--jobs", type=int, default=1, help="parallel (value, seed) runs")

    p = add("verify-finality", "check that accounting stops at expiry on random lifecycles")
    p.add_argument("--lifecycles", type=int, default=100, help="randomized NFTs to run to settlement")
    p.add_argument("--pairs", type=int, default=100, help="random (sigma, d) pairs for the partial-sum identity")

    p = add("nonconvexity", "search the (sigma, q) grid for a point with an indefinite payoff Hessian")
    p.add_argument("--resolution", type=int, default=101, help="grid points per axis")

    p = add("exploitability", "run fictitious play on the discretized pricing game")
    p.add_argument("--players", type=int, default=2, help="number of players")
    p.add_argument("--iterations", type=int, default=1000, help="fictitious-play iterations")
    return parser


def _prepare(args) -> tuple[ExperimentConfig, Path]:
    config = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seeds"] = (args.seed,)
    if getattr(args, "epochs", None) is not None:
        changes["epochs"] = args.epochs
    if getattr(args, "jobs", 1) < 1:
        raise ConfigError("jobs", "must be >= 1")
    config = config.replace(**changes) if changes else config
    return config, Path(args.out)


def _outdir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, payload):
    with path.open("w") as fp:
        analysis.write_report(fp, payload)


def cmd_simulate(args) -> int:
    config, out = _prepare(args)
    series = harness.run(config, run_id="simulate", jobs=args.jobs)
    _outdir(out)
    with (out / "rewards.csv").open("w", newline="") as fp:
        series.write_csv(fp)
    with (out / "config.json").open("w") as fp:
        harness.write_config_echo(fp, config)
    s = harness.summarize(series)
    print(f"simulate: seeds={len(config.seeds)} epochs={config.epochs} final-window median={s['median']:.4f} "
          f"iqr={s['iqr']:.4f} unsettled={int(series.unsettled.sum())} -> {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config, out = _prepare(args)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("values", "need at least one value")
    result = harness.sweep(config, args.axis, values, jobs=args.jobs)
    _outdir(out)
    for i, series in enumerate(result.series):
        with (out / f"{args.axis}_{i}.csv").open("w", newline="") as fp:
            series.write_csv(fp)
    with (out / "config.json").open("w") as fp:
        harness.write_config_echo(fp, config, {"sweep_axis": args.axis, "sweep_values": values})
    _write_json(out / "summary.json", result.summary)
    for s in result.summary:
        print(f"sweep {args.axis}={s['axis_value']}: final-window median={s['median']:.4f} iqr={s['iqr']:.4f}")
    return EXIT_OK


def cmd_verify_finality(args) -> int:
    config, out = _prepare(args)
    seed = config.seeds[0] if args.seed is None else args.seed
    report = analysis.verify_finality(config.market_params(), seed=seed, n_lifecycles=args.lifecycles,
                                      n_pairs=args.pairs)
    _outdir(out)
    _write_json(out / "finality.json", {
        "passed": report.passed, "lifecycles": report.lifecycles, "pairs": report.pairs,
        "max_overrun": report.max_overrun, "max_sum_error": report.max_sum_error,
        "counterexamples": report.counterexamples,
    })
    print(f"verify-finality: {'pass' if report.passed else 'FAIL'} lifecycles={report.lifecycles} "
          f"pairs={report.pairs} max_sum_error={report.max_sum_error:.2e}")
    if not report.passed:
        c = report.counterexamples[0]
        print(f"  counterexample sigma={c['sigma']!r} d={c['d']}: {c['reason']}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_nonconvexity(args) -> int:
    config, out = _prepare(args)
    if args.resolution < 3:
        raise ConfigError("resolution", "must be >= 3")
    params = config.market_params()
    sg, qg = analysis.default_grids(params, args.resolution)
    surface = analysis.default_surface(params)
    witness = analysis.nonconvexity_witness(surface, sg, qg)
    fixed = {k: getattr(surface, k) for k in ("epsilon", "lam", "pi_r", "p0_total", "d", "referrals_per_round")}
    _write_json(_outdir(out) / "nonconvexity.json", {**witness.to_dict(), "fixed_inputs": fixed})
    if witness.found:
        print(f"nonconvexity: witness at sigma={witness.point[0]:.4f} q={witness.point[1]:.4f} "
              f"det={witness.determinant:.4g} ({witness.n_negative} negative points)")
    else:
        print("nonconvexity: no witness on the grid")
    return EXIT_OK


def cmd_exploitability(args) -> int:
    config, out = _prepare(args)
    if args.players < 1 or args.iterations < 1:
        raise ConfigError("players" if args.players < 1 else "iterations", "must be >= 1")
    params = config.market_params()
    grid = analysis.pricing_grid(params)
    game = analysis.pricing_game(params, [grid] * args.players)
    fp = analysis.fictitious_play(game, args.iterations)
    _outdir(out)
    _write_json(out / "exploitability.json", {
        "players": args.players, "grid_size": len(grid), "iterations": args.iterations,
        "exploitability": fp.exploitability,
        "profile": [p.tolist() for p in fp.profile],
        "actions": [a.__dict__ for a in grid],
    })
    print(f"exploitability: players={args.players} grid={len(grid)} iterations={args.iterations} "
          f"final={fp.exploitability[-1]:.6g}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "verify-finality": cmd_verify_finality,
    "nonconvexity": cmd_nonconvexity,
    "exploitability": cmd_exploitability,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except (ConfigError, ValueError) as exc:
        print(f"nftinc: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"nftinc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
