"""Command-line entry point: ``pgnniv <command> ...``.

Exit codes: 0 success, 1 failed acceptance checks (reproduce), 2 usage or
configuration error, 3 training divergence, 4 missing artifact.

Outputs go under ``--out`` or, by default, ``$PGNNIV_OUTPUT`` (falling back
to ``./pgnniv-output``).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint
from . import datasets as dsets
from . import hydraulics as hyd
from .errors import ConfigurationError, ParseError, PGNNIVError, SchemaError
from .experiments import configs as cfg
from .experiments import runner
from .experiments.checks import run_checks
from .training import export_state_relation

EXIT_OK, EXIT_CHECKS, EXIT_USAGE, EXIT_DIVERGED, EXIT_MISSING = 0, 1, 2, 3, 4
OUTPUT_ENV = "PGNNIV_OUTPUT"


class MissingArtifact(Exception):
    pass


def output_root(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUTPUT_ENV) or "pgnniv-output")


def _range(text: str) -> tuple[float, float]:
    lo, sep, hi = text.partition(":")
    try:
        if not sep:
            raise ValueError
        return float(lo), float(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}") from None


# -- generate ------------------------------------------------------------------------------

def cmd_generate(args) -> int:
    q_range = (args.q_min, args.q_max)
    if args.generator == "prediction":
        ds = dsets.generate_prediction_dataset(args.M, q_range, hyd.TABLE1, args.seed, args.targets)
    elif args.generator == "geometry":
        ds = dsets.generate_geometry_dataset(args.M, q_range, (args.l_min, args.l_max),
                                             hyd.UNIFORM_PIPE, args.seed)
    else:
        ds = dsets.generate_characterization_dataset(args.M, q_range, (args.kappa_min, args.kappa_max),
                                                     hyd.UNIFORM_PIPE, args.seed)
    if args.noise:
        ds = dsets.add_noise(ds, args.noise, args.seed + runner.NOISE_SEED)
    if args.bias:
        ds = dsets.add_bias(ds, args.bias)
    path = Path(args.file) if args.file else (
        output_root(args.out) / "data" / f"{args.generator}_M{args.M}_s{args.seed}.txt")
    dsets.save(ds, path)
    print(path)
    return EXIT_OK


# -- train ---------------------------------------------------------------------------------

def _config(args) -> cfg.ExperimentConfig:
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise MissingArtifact(f"config file {path} not found")
        return cfg.from_ini(path.read_text())
    return cfg.get_config(args.experiment)


def _run_dir(root: Path, config: cfg.ExperimentConfig, variant: str, point: str, seed: int) -> Path:
    return root / "runs" / config.id / f"{variant}__{point}__s{seed}"


def cmd_train(args) -> int:
    config = _config(args)
    if args.iterations:
        config = replace(config, hyper=replace(config.hyper, iterations=args.iterations))
    variant = args.variant or config.variants[0].name
    point = args.point or config.sweep[0].label
    dataset = None
    if args.data:
        if not Path(args.data).exists():
            raise MissingArtifact(f"dataset {args.data} not found")
        dataset = dsets.load(args.data)
    record = runner.run_job(config, variant, point, args.seed, dataset)
    run_dir = _run_dir(output_root(args.out), config, variant, point, args.seed)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "trace.csv").write_text(record.trace.to_csv())
    (run_dir / "checkpoint.txt").write_text(record.checkpoint)
    meta = {"experiment": config.id, "variant": variant, "point": point, "seed": args.seed,
            "diverged_at": record.diverged_at, "metrics": record.metrics,
            "config": config.to_dict()}
    (run_dir / "run.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    if record.diverged_at is not None:
        print(f"diverged at iteration {record.diverged_at}; partial trace in {run_dir}",
              file=sys.stderr)
        return EXIT_DIVERGED
    print(run_dir)
    return EXIT_OK


# -- eval ----------------------------------------------------------------------------------

def cmd_eval(args) -> int:
    config = _config(args)
    variant = args.variant or config.variants[0].name
    point = args.point or config.sweep[0].label
    root = output_root(args.out)
    run_dir = _run_dir(root, config, variant, point, args.seed)
    ck = Path(args.checkpoint) if args.checkpoint else run_dir / "checkpoint.txt"
    if not ck.exists():
        raise MissingArtifact(f"checkpoint {ck} not found; run 'pgnniv train' first")
    net = checkpoint.load(ck)
    plan = dict(config.eval.options)
    if args.extrapolate:
        if config.eval.kind in ("model", "prediction", "bias"):
            plan["test_range"] = list(args.extrapolate)
            plan.pop("extrapolation_range", None)
        else:
            raise ConfigurationError(f"--extrapolate applies to flow-only inputs, not {config.eval.kind!r}")
    config = replace(config, eval=cfg.EvalPlan(config.eval.kind, plan))
    data = runner.prepare_data(config, config.point(point), args.seed)
    metrics = runner.evaluate(config, net, data, args.seed)
    out_dir = ck.parent
    tag = "eval" if not args.extrapolate else f"eval_{args.extrapolate[0]:g}_{args.extrapolate[1]:g}"
    (out_dir / f"{tag}.json").write_text(json.dumps(metrics, indent=1, sort_keys=True) + "\n")
    if args.probe_state_relation:
        table = _state_relation(net, config, data, plan)
        path = out_dir / "state_relation.csv"
        path.write_text(table.to_csv())
        print(path)
    print(json.dumps(metrics, sort_keys=True))
    return EXIT_OK


def _state_relation(net, config, data, plan):
    """(input, PIL, output) rows: a flow sweep for one-input nets, training inputs otherwise."""
    if net.spec.input_size == 1:
        lo, hi = plan.get("test_range", (1.0, 5.0))
        probes = np.linspace(lo, hi, 50).reshape(-1, 1)
        names = ["q"]
    else:
        probes = data.train.inputs[:50]
        names = data.train.input_names
    return export_state_relation(net, probes, names)


# -- reproduce -----------------------------------------------------------------------------

def cmd_reproduce(args) -> int:
    ids = list(cfg.REGISTRY) if args.all or not args.ids else [i.upper() for i in args.ids]
    for i in ids:
        cfg.get_config(i)
    root = output_root(args.out) / "reports"
    failed = []
    for eid in ids:
        config = cfg.get_config(eid)
        if args.seeds:
            config = config.with_seeds(range(args.seeds))
        try:
            report = runner.run_experiment(config, jobs=args.jobs, outdir=root / eid)
            results = run_checks(report)
        except Exception as exc:  # isolate one experiment's failure from the rest
            print(f"FAIL  {eid}: {type(exc).__name__}: {exc}")
            failed.append(eid)
            continue
        for r in results:
            print(r.line())
            if not r.passed:
                failed.append(eid)
        if not results:
            print(f"INFO  {eid}: report written to {root / eid} (no acceptance check)")
    print(f"summary: {len(ids)} experiments, {len(set(failed))} with failures"
          + (f" ({', '.join(dict.fromkeys(failed))})" if failed else ""))
    return EXIT_CHECKS if failed else EXIT_OK


def cmd_rebuild(args) -> int:
    path = Path(args.report)
    if not (path / "manifest.json").exists():
        raise MissingArtifact(f"no manifest.json in {path}")
    runner.rebuild_tables(path)
    print(path / "tables")
    return EXIT_OK


def cmd_golden(args) -> int:
    print(hyd.write_golden(args.file))
    return EXIT_OK


# -- parser --------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pgnniv", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def with_out(sp):
        sp.add_argument("--out", help=f"output root (default ${OUTPUT_ENV} or ./pgnniv-output)")
        return sp

    g = with_out(sub.add_parser("generate", help="write a synthetic dataset"))
    g.add_argument("generator", choices=("prediction", "geometry", "characterization"))
    g.add_argument("--M", type=int, required=True, help="number of records")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--q-min", type=float, default=1.0)
    g.add_argument("--q-max", type=float, default=5.0)
    g.add_argument("--l-min", type=float, default=0.0)
    g.add_argument("--l-max", type=float, default=10.0)
    g.add_argument("--kappa-min", type=float, default=80.0)
    g.add_argument("--kappa-max", type=float, default=140.0)
    g.add_argument("--targets", choices=("total", "segments"), default="total")
    g.add_argument("--noise", type=float, default=0.0, help="Gaussian sigma on measured columns")
    g.add_argument("--bias", type=float, default=0.0, help="offset on measured columns")
    g.add_argument("--file", help="explicit output file")
    g.set_defaults(func=cmd_generate)

    def with_run(sp):
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--experiment", help="built-in experiment id (E1..E7, E6B)")
        src.add_argument("--config", help="config file (see README)")
        sp.add_argument("--variant")
        sp.add_argument("--point", help="sweep point label (default: first)")
        sp.add_argument("--seed", type=int, default=0)
        return with_out(sp)

    t = with_run(sub.add_parser("train", help="train one variant and seed"))
    t.add_argument("--iterations", type=int, help="override N")
    t.add_argument("--data", help="train on this dataset file instead of generating one")
    t.set_defaults(func=cmd_train)

    e = with_run(sub.add_parser("eval", help="evaluate a trained checkpoint"))
    e.add_argument("--checkpoint", help="explicit checkpoint file")
    e.add_argument("--extrapolate", type=_range, metavar="LO:HI", help="evaluate on q in [LO, HI]")
    e.add_argument("--probe-state-relation", action="store_true",
                   help="also export (input, internal layer, output) rows")
    e.set_defaults(func=cmd_eval)

    r = with_out(sub.add_parser("reproduce", help="run experiments and acceptance checks"))
    r.add_argument("ids", nargs="*", help="experiment ids (default: all)")
    r.add_argument("--all", action="store_true")
    r.add_argument("--seeds", type=int, help="use seeds 0..K-1")
    r.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    r.set_defaults(func=cmd_reproduce)

    b = sub.add_parser("rebuild", help="recompute tables and curves of a report directory")
    b.add_argument("report")
    b.set_defaults(func=cmd_rebuild)

    gd = sub.add_parser("golden", help="rewrite the hydraulics golden-value file")
    gd.add_argument("file")
    gd.set_defaults(func=cmd_golden)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MissingArtifact as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ParseError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ConfigurationError, PGNNIVError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
