"""Command line front end: ``qnlab {run,sweep,distance,simulate,list}``.

Exit codes: 0 when every verdict passes, 1 when a verdict fails or a run
stage errors, 2 for usage and configuration errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .dynamics import simulate
from .experiments import (
    CATALOG,
    SWEEPABLE,
    ConfigError,
    ExperimentConfig,
    ExperimentError,
    run_experiment,
    sweep,
    write_sweep,
)
from .phase_space import GriddedDistribution, ParticleEnsemble, PhaseGrid, maxwellian, sample_particles
from .transport import CostSpec, exact_discrete_ot

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON experiment configuration")
    p.add_argument("--seed", type=int, help="random seed (overrides the config)")
    p.add_argument("--out", default=None, help="output directory (default: runs)")
    p.add_argument("--quiet", action="store_true", help="print nothing on success")
    return p


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(prog="qnlab", description="Quasineutral Vlasov-Poisson laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run one experiment")
    run.add_argument("experiment", nargs="?", help="experiment id (or give --config)")

    sw = sub.add_parser("sweep", parents=[common], help="repeat an experiment over parameter values")
    sw.add_argument("experiment", nargs="?", help="experiment id (or give --config)")
    sw.add_argument("--param", required=True, choices=sorted(SWEEPABLE))
    sw.add_argument("--values", required=True, help="comma separated values")

    dist = sub.add_parser("distance", parents=[common], help="exact transport distance between two files")
    dist.add_argument("first")
    dist.add_argument("second")
    dist.add_argument("--cost", default="standard", choices=["standard", "free_adapted", "kinetic"])
    dist.add_argument("--p", type=float, default=2.0)
    dist.add_argument("--t", type=float, default=0.0, help="shear time of the free_adapted cost")
    dist.add_argument("--epsilon", type=float, default=1.0, help="epsilon of the kinetic cost")
    dist.add_argument("--n", type=int, default=1000, help="samples drawn from gridded distributions")

    sim = sub.add_parser("simulate", parents=[common], help="advance a phase-space distribution")
    src = sim.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="distribution text file")
    src.add_argument("--init", choices=["landau", "cold", "two_stream"], help="built-in initial data")
    sim.add_argument("--model", default="vp", choices=["vp", "vpme"])
    sim.add_argument("--epsilon", type=float, required=True)
    sim.add_argument("--dt", type=float, required=True)
    sim.add_argument("--steps", type=int, required=True)
    sim.add_argument("--snapshot-every", type=int, default=0)
    sim.add_argument("--nx", type=int, default=64)
    sim.add_argument("--nv", type=int, default=64)
    sim.add_argument("--v-max", type=float, default=6.0)
    sim.add_argument("--amplitude", type=float, default=0.05)

    lst = sub.add_parser("list", parents=[common], help="list the experiments")
    lst.set_defaults(quiet=False)
    return parser


def _load_config(args):
    if args.config:
        cfg = ExperimentConfig.load(args.config, seed=args.seed)
        if args.experiment and args.experiment != cfg.experiment_id:
            raise ConfigError(f"experiment {args.experiment!r} does not match config {cfg.experiment_id!r}")
    else:
        if not args.experiment:
            raise UsageError("give an experiment id or --config")
        if args.seed is None:
            raise ConfigError("a seed is required (--seed or in the config)")
        cfg = ExperimentConfig.from_dict(dict(experiment_id=args.experiment, seed=args.seed))
    if args.out:
        cfg = dataclasses.replace(cfg, output_dir=args.out)
    return cfg


def _print_verdicts(verdicts, out):
    for v in verdicts:
        status = "PASS" if v.passed else "FAIL"
        print(f"  {status}  {v.name:<40} measured={v.measured!r}  tolerance {v.tolerance}", file=out)


def _cmd_run(args):
    cfg = _load_config(args)
    report = run_experiment(cfg)
    out = report.write(Path(cfg.output_dir) / cfg.experiment_id)
    (out / "config.json").write_text(cfg.to_json())
    if not args.quiet or not report.passed:
        print(f"{cfg.experiment_id}: {'PASS' if report.passed else 'FAIL'} -> {out}")
        _print_verdicts(report.verdicts, sys.stdout)
    return EXIT_OK if report.passed else EXIT_FAIL


def _parse_values(text, parameter):
    try:
        if parameter in ("k", "n_particles"):
            return [int(v) for v in text.split(",") if v.strip()]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as err:
        raise UsageError(f"bad --values: {err}") from err


def _cmd_sweep(args):
    cfg = _load_config(args)
    values = _parse_values(args.values, args.param)
    result = sweep(cfg, args.param, values)
    out = write_sweep(result, Path(cfg.output_dir) / cfg.experiment_id / f"sweep_{args.param}")
    (out / "config.json").write_text(cfg.to_json())
    if not args.quiet or not result.passed:
        print(f"{cfg.experiment_id} sweep over {args.param}: {'PASS' if result.passed else 'FAIL'} -> {out}")
        for value, rep in zip(values, result):
            print(f" {args.param}={value!r}")
            _print_verdicts(rep.verdicts, sys.stdout)
        if result.verdicts:
            print(" trend")
            _print_verdicts(result.verdicts, sys.stdout)
    return EXIT_OK if result.passed else EXIT_FAIL


def _read_measure(path, n, seed):
    text = Path(path).read_text()
    first = text.split("\n", 1)[0]
    if first.startswith("x_0"):
        return ParticleEnsemble.from_csv(text)
    return sample_particles(GriddedDistribution.from_text(text), n, seed)


def _cmd_distance(args):
    seed = 0 if args.seed is None else args.seed
    a = _read_measure(args.first, args.n, seed)
    b = _read_measure(args.second, args.n, seed)
    if args.cost == "standard":
        cost = CostSpec.standard(args.p)
    elif args.cost == "free_adapted":
        cost = CostSpec.free_adapted(args.t, args.p)
    else:
        cost = CostSpec.kinetic(args.epsilon)
    coupling, total = exact_discrete_ot(a, b, cost)
    value = total if args.cost == "kinetic" else total ** (1.0 / cost.p)
    print(repr(float(value)))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "coupling.csv").write_text(coupling.to_csv())
    return EXIT_OK


def _initial(args):
    if args.input:
        return GriddedDistribution.from_text(Path(args.input).read_text())
    grid = PhaseGrid(args.nx, args.nv, args.v_max)
    x = grid.x
    if args.init == "landau":
        return maxwellian(1 + args.amplitude * np.cos(2 * np.pi * x), 0.0, 1.0, grid)
    if args.init == "cold":
        return maxwellian(np.ones(grid.nx), args.amplitude * np.sin(2 * np.pi * x), 0.0025, grid)
    rho = 1 + args.amplitude * np.cos(2 * np.pi * x)
    left = maxwellian(0.5 * rho, -2.0, 0.25, grid).values
    right = maxwellian(0.5 * rho, 2.0, 0.25, grid).values
    return GriddedDistribution(grid, left + right)


def _cmd_simulate(args):
    f0 = _initial(args)
    result = simulate(f0, args.epsilon, args.dt, args.steps, model=args.model, snapshot_every=args.snapshot_every)
    out = Path(args.out or "runs/simulate")
    out.mkdir(parents=True, exist_ok=True)
    (out / "diagnostics.csv").write_text(result.diagnostics_csv())
    for k, (t, snap) in enumerate(result.snapshots):
        (out / f"snapshot_{k:04d}.txt").write_text(snap.to_text())
    (out / "final.txt").write_text(result.final.to_text())
    if not args.quiet:
        last = result.diagnostics[-1]
        print(f"simulated {args.steps} steps to t={last['t']!r}; mass={last['mass']!r} -> {out}")
    return EXIT_OK


def _cmd_list(args):
    for eid, anchor in CATALOG.items():
        print(f"{eid:<24} {anchor}")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "distance": _cmd_distance, "simulate": _cmd_simulate, "list": _cmd_list}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError) as err:
        print(f"qnlab {args.command}: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ExperimentError as err:
        print(f"qnlab {args.command}: {err}", file=sys.stderr)
        return EXIT_FAIL
    except (OSError, ValueError) as err:
        print(f"qnlab {args.command}: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_USAGE
    except RuntimeError as err:
        print(f"qnlab {args.command}: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
