"""Run an experiment across variants x sweep points x seeds and persist the report.

Report directory layout (all paths relative to the report root)::

    manifest.json            config echo, seeds, sha256 of every artifact
    traces/<run>.csv         iteration,MSE,PEN,OF,violation
    runs/<run>.json          evaluation metrics of the trained net
    checkpoints/<run>.txt    trained parameters
    tables/*.csv             aggregates, rebuilt from traces + runs
    curves/*.csv             seed-mean RMSE / PEN per variant, plot-ready

``<run>`` is ``<variant>__<point>__s<seed>``.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .. import checkpoint
from .. import datasets as dsets
from .. import hydraulics as hyd
from ..constraints import flow_conservation, nonnegative_parameter, output_sum, pressure_drop_definition
from ..errors import ConfigurationError, ContractError, DivergenceError
from ..network import (Network, NetworkSpec, build_network, center_relu_biases,
                       darcy_weisbach_reference, hazen_williams_reference, register_constraint)
from ..training import TrainConfig, TrainingTrace, extract_parameters, predict, train
from . import configs as cfg
from .metrics import compare_runs, moving_average, relative_error_stats, rmse_curve, l2_error

DATA_SEED = 1000
NOISE_SEED = 2000
TEST_SEED = 5000


@dataclass
class RunRecord:
    experiment: str
    variant: str
    point: str
    seed: int
    trace: TrainingTrace
    metrics: dict
    grid: str
    diverged_at: int | None = None
    checkpoint: str = ""

    @property
    def key(self) -> str:
        return f"{self.variant}__{self.point}__s{self.seed}"


@dataclass
class Report:
    config: cfg.ExperimentConfig
    runs: list[RunRecord] = field(default_factory=list)

    def select(self, variant: str, point: str | None = None) -> list[RunRecord]:
        point = point or self.config.sweep[0].label
        return [r for r in self.runs if r.variant == variant and r.point == point]

    def compare(self, a: str, b: str, point: str | None = None):
        return compare_runs(self.select(a, point), self.select(b, point),
                            at=min(self.config.checkpoint_iteration, self.config.hyper.iterations),
                            window=self.config.window)


# -- data ----------------------------------------------------------------------------

@dataclass
class PreparedData:
    train: dsets.Dataset
    scaling: dsets.Scaling | None
    pipe: hyd.PipeParams


def _generate(data: cfg.DataSpec, M: int, seed: int) -> dsets.Dataset:
    o = data.options
    pipe = cfg.pipe_for(data)
    if data.generator == "prediction":
        return dsets.generate_prediction_dataset(M, tuple(o.get("q_range", (1.0, 5.0))), pipe, seed,
                                                 targets=o.get("targets", "total"))
    if data.generator == "geometry":
        return dsets.generate_geometry_dataset(M, tuple(o.get("q_range", (1.0, 5.0))),
                                               tuple(o.get("length_range", (0.0, 10.0))), pipe, seed)
    if data.generator == "characterization":
        return dsets.generate_characterization_dataset(
            M, tuple(o.get("q_range", (1.0, 5.0))), tuple(o.get("kappa_range", (80.0, 140.0))),
            pipe, seed)
    raise ConfigurationError(f"unknown generator {data.generator!r}")


def _input_bounds(data: cfg.DataSpec) -> dsets.Scaling:
    q = tuple(data.options.get("q_range", (1.0, 5.0)))
    bounds = {"q": q}
    if data.generator == "geometry":
        lengths = tuple(data.options.get("length_range", (0.0, 10.0)))
        bounds.update(l1=lengths, l2=lengths)
    return dsets.Scaling(bounds)


def prepare_data(config: cfg.ExperimentConfig, point: cfg.SweepPoint, seed: int,
                 dataset: dsets.Dataset | None = None) -> PreparedData:
    """Generate (or take ``dataset`` as-is), perturb, then scale per the config."""
    data = config.data
    if dataset is None:
        ds = _generate(data, point.M or data.M, DATA_SEED + seed)
        noise = data.noise if point.noise is None else point.noise
        if noise > 0:
            ds = dsets.add_noise(ds, noise, NOISE_SEED + seed)
        if data.bias:
            ds = dsets.add_bias(ds, data.bias)
    else:
        ds = dataset
    scaling = None
    if data.normalize == "inputs":
        ds, scaling = dsets.normalize_minmax(ds, _input_bounds(data))
    elif data.normalize == "all":
        ds, scaling = dsets.normalize_minmax(ds)
    elif data.normalize is not None:
        raise ConfigurationError(f"unknown normalize mode {data.normalize!r}")
    return PreparedData(ds, scaling, cfg.pipe_for(data))


# -- network ----------------------------------------------------------------------------

def _constraint(c: cfg.ConstraintSpec, scaling: dsets.Scaling | None, index: int):
    o = dict(c.options)
    cid = o.pop("id", f"{c.kind}{index}")
    if c.kind == "flow":
        return flow_conservation(o["layer"], o["areas"], neurons=o.get("neurons"),
                                 q_column=o.get("q_column", 0), penalty_weight=c.penalty_weight, id=cid)
    if c.kind == "pressure":
        names = o.get("unscale")
        affines = [scaling.affine(n) for n in names] if names and scaling else None
        return pressure_drop_definition(o["layer"], tuple(o.get("neurons", (2, 3))),
                                        tuple(o.get("pressure_columns", (1, 2, 3))), affines,
                                        penalty_weight=c.penalty_weight, id=cid)
    if c.kind == "output_sum":
        return output_sum(o.get("total_column", "dp"), penalty_weight=c.penalty_weight, id=cid)
    return nonnegative_parameter(o["name"], penalty_weight=c.penalty_weight, id=cid)


def build_variant(variant: cfg.Variant, seed: int, data: PreparedData) -> Network:
    net = build_network(variant.network, seed)
    if variant.init == "centered":
        center_relu_biases(net, data.train.inputs)
    elif variant.init != "default":
        raise ConfigurationError(f"unknown init {variant.init!r}")
    for i, c in enumerate(variant.constraints):
        register_constraint(net, _constraint(c, data.scaling, i))
    return net


# -- evaluation ----------------------------------------------------------------------------

def _grid(config: cfg.ExperimentConfig) -> str:
    return json.dumps({"kind": config.eval.kind, **config.eval.options}, sort_keys=True)


def _q_grid(lo_hi, size) -> np.ndarray:
    return np.linspace(lo_hi[0], lo_hi[1], int(size))


def _mean_abs_rel(pred, true) -> float:
    return float(np.mean(np.abs((pred - true) / true)))


def _total_drop_with_origin(q, pipe) -> np.ndarray:
    """Oracle total drop, extended by its limit 0 at ``q = 0``."""
    q = np.asarray(q, dtype=float)
    out = np.zeros_like(q)
    pos = q > 0
    out[pos] = hyd.total_pressure_drop(q[pos], pipe)
    return out


def _eval_prediction(net, opts, data: PreparedData) -> dict:
    pipe = data.pipe
    q = _q_grid(opts["test_range"], opts["test_size"])
    out, pils = predict(net, q.reshape(-1, 1))
    truth = hyd.total_pressure_drop(q, pipe)
    flow_rel = np.abs(pils[1] * np.asarray(pipe.areas) - q[:, None]) / q[:, None]

    def predictor(x):
        return predict(net, np.asarray(x).reshape(-1, 1))[0][:, 0]

    return {"test_rmse": float(np.sqrt(np.mean((out[:, 0] - truth) ** 2))),
            "l2_error": l2_error(predictor, lambda x: _total_drop_with_origin(x, pipe),
                                 tuple(opts.get("l2_interval", (0.0, 10.0)))),
            "pil_flow_rel_max": float(flow_rel.max()),
            "pil_flow_rel_mean": float(flow_rel.mean())}


def _eval_bias(net, opts, data: PreparedData) -> dict:
    q = _q_grid(opts["test_range"], opts["test_size"])
    out, _ = predict(net, q.reshape(-1, 1))
    drops = hyd.segment_pressure_drops(q, data.pipe)
    seg = np.column_stack([drops.dp1, drops.dpe, drops.dp2])
    return {"sum_signed_error": float(np.mean(out.sum(axis=1) - drops.total)),
            "segment_rmse": float(np.sqrt(np.mean((out - seg) ** 2)))}


def _eval_geometry(net, opts, data: PreparedData) -> dict:
    grid = dsets.geometry_grid(int(opts["grid"]), params=data.pipe)
    x = grid.inputs if data.scaling is None else data.scaling.normalize(grid.inputs, grid.input_names)
    out, pils = predict(net, x)
    stats = relative_error_stats(out[:, 0], grid.targets[:, 0])
    q_scaled = x[:, :1]
    return {"rel_err": stats, "pil_flow_abs_max": float(np.abs(pils[1] - q_scaled).max())}


def _range_metrics(net, q, pipe, names) -> dict:
    out, pils = predict(net, q.reshape(-1, 1))
    drops = hyd.segment_pressure_drops(q, pipe)
    vel = hyd.velocities(q, pipe)
    m = {f"v{i}_rel": _mean_abs_rel(pils[1][:, i], vel[:, i]) for i in range(3)}
    for j, name in enumerate(names):
        m[f"{name}_rel_max"] = float(np.max(np.abs((out[:, j] - drops[j]) / drops[j])))
    m["rmse"] = float(np.sqrt(np.mean((out - np.column_stack(drops)) ** 2)))
    return m


def _eval_model(net, opts, data: PreparedData) -> dict:
    pipe = data.pipe
    names = ("dp1", "dpe", "dp2")
    metrics = {"test": _range_metrics(net, _q_grid(opts["test_range"], opts["test_size"]), pipe, names)}
    if "extrapolation_range" in opts:
        q = _q_grid(opts["extrapolation_range"], opts["test_size"])
        metrics["extrapolation"] = _range_metrics(net, q, pipe, names)
    spec = net.spec
    if spec.is_model_based:
        ref = hazen_williams_reference(pipe) if spec.model_layer_kind == "hazen_williams" \
            else darcy_weisbach_reference(pipe)
        lam = extract_parameters(net)
        metrics["lambda"] = lam
        metrics["lambda_rel"] = {k: abs(lam[k] - r) / abs(r) if r else abs(lam[k])
                                 for k, r in zip(spec.trainable_physical_params, ref)}
    return metrics


def _eval_characterization(net, opts, data: PreparedData, seed: int, config) -> dict:
    raw = _generate(config.data, int(opts["test_size"]), TEST_SEED + seed)
    test, _ = dsets.normalize_minmax(raw, data.scaling)
    out, _ = predict(net, test.inputs)
    names = test.target_names
    pred = data.scaling.denormalize(out, names)
    true = raw.targets
    rel = np.abs(pred - true) / true
    lo, hi = opts.get("interior", (90.0, 130.0))
    inside = (true > lo) & (true < hi)
    return {"interior_mean_abs_rel": float(rel[inside].mean()),
            "mean_abs_rel": float(rel.mean()),
            "interior_count": int(inside.sum()),
            "rel_err": relative_error_stats(pred, true)}


def evaluate(config: cfg.ExperimentConfig, net: Network, data: PreparedData, seed: int) -> dict:
    kind, opts = config.eval.kind, config.eval.options
    if kind == "prediction":
        return _eval_prediction(net, opts, data)
    if kind == "bias":
        return _eval_bias(net, opts, data)
    if kind == "geometry":
        return _eval_geometry(net, opts, data)
    if kind == "model":
        return _eval_model(net, opts, data)
    if kind == "characterization":
        return _eval_characterization(net, opts, data, seed, config)
    raise ConfigurationError(f"unknown evaluation kind {kind!r}")


# -- jobs ------------------------------------------------------------------------------

def run_job(config: cfg.ExperimentConfig, variant: str, point: str, seed: int,
            dataset: dsets.Dataset | None = None) -> RunRecord:
    """Train one (variant, sweep point, seed) and evaluate it. Divergence is recorded."""
    v = config.variant(variant)
    p = config.point(point)
    data = prepare_data(config, p, seed, dataset)
    net = build_variant(v, seed, data)
    h = config.hyper
    hyper = TrainConfig(h.iterations, p.batch_size or h.batch_size, h.learning_rate, seed=seed)
    diverged = None
    try:
        trace = train(net, data.train, hyper)
        metrics = evaluate(config, net, data, seed)
    except DivergenceError as exc:
        trace, diverged, metrics = exc.trace, exc.iteration, {}
    return RunRecord(config.id, variant, point, seed, trace, metrics, _grid(config), diverged,
                     checkpoint.dumps(net))


def _job(args):
    return run_job(*args)


def run_experiment(config: cfg.ExperimentConfig, jobs: int = 1, outdir: str | Path | None = None,
                   variants: Sequence[str] | None = None) -> Report:
    """Train every (variant, sweep point, seed) and optionally write the report.

    ``jobs > 1`` fans the runs out over worker processes; results are
    collected in a fixed order so the report does not depend on ``jobs``.
    """
    names = list(variants) if variants else [v.name for v in config.variants]
    for n in names:
        config.variant(n)
    tasks = [(config, v, p.label, s) for p in config.sweep for v in names for s in config.seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_job, tasks))
    else:
        runs = [_job(t) for t in tasks]
    report = Report(config, runs)
    if outdir is not None:
        write_report(report, outdir)
    return report


# -- persistence ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _write_csv(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return
    cols = list(rows[0])
    for r in rows[1:]:
        cols.extend(k for k in r if k not in cols)
    lines = [",".join(cols)] + [",".join(_fmt(r.get(c, "")) for c in cols) for r in rows]
    path.write_text("\n".join(lines) + "\n")


def flatten(d: Mapping, prefix: str = "") -> dict:
    out = {}
    for k, v in sorted(d.items()):
        key = f"{prefix}{k}"
        if isinstance(v, Mapping):
            out.update(flatten(v, key + "."))
        elif isinstance(v, (int, float)) and not isinstance(v, bool):
            out[key] = v
    return out


def build_tables(report: Report) -> dict[str, list[dict]]:
    """Aggregate tables; every entry comes from stored traces and run metrics."""
    config = report.config
    at = min(config.checkpoint_iteration, config.hyper.iterations)
    per_seed, summary, comparison = [], [], []
    for r in report.runs:
        row = {"variant": r.variant, "point": r.point, "seed": r.seed,
               "diverged_at": "" if r.diverged_at is None else r.diverged_at}
        if r.diverged_at is None:
            smooth = moving_average(rmse_curve(r.trace), config.window)
            row.update({"rmse_smoothed_at": float(smooth[at - 1]),
                        "rmse_smoothed_final": float(smooth[-1])})
            row.update(flatten(r.metrics))
        per_seed.append(row)
    groups: dict[tuple[str, str], list[dict]] = {}
    for row in per_seed:
        groups.setdefault((row["variant"], row["point"]), []).append(row)
    for (variant, point), rows in groups.items():
        ok = [r for r in rows if r["diverged_at"] == ""]
        agg = {"variant": variant, "point": point, "seeds": len(rows), "diverged": len(rows) - len(ok)}
        keys = [k for k in (ok[0] if ok else {}) if k not in ("variant", "point", "seed", "diverged_at")]
        for k in keys:
            agg[k] = float(np.mean([r[k] for r in ok if k in r]))
        summary.append(agg)
    for a, b in config.pairs:
        for p in config.sweep:
            ra, rb = report.select(a, p.label), report.select(b, p.label)
            if not ra or not rb:
                continue
            c = compare_runs(ra, rb, at=at, window=config.window)
            comparison.append({"a": a, "b": b, "point": p.label, "at": c.at,
                               "ordering_fraction": c.ordering_fraction, "auc_ratio": c.auc_ratio,
                               "seed_wins": c.seed_wins, "seeds_compared": c.seeds_compared,
                               "excluded_seeds": " ".join(map(str, c.excluded_seeds))})
    return {"per_seed": per_seed, "summary": summary, "comparison": comparison}


def build_curves(report: Report) -> dict[str, list[dict]]:
    curves = {}
    for v in dict.fromkeys(r.variant for r in report.runs):
        for p in report.config.sweep:
            runs = [r for r in report.select(v, p.label) if r.diverged_at is None]
            if not runs:
                continue
            rmse = np.mean([rmse_curve(r.trace) for r in runs], axis=0)
            pen = np.mean([np.asarray(r.trace.pen) for r in runs], axis=0)
            smooth = moving_average(rmse, report.config.window)
            curves[f"{v}__{p.label}"] = [
                {"iteration": i + 1, "rmse": float(a), "rmse_smoothed": float(s), "pen": float(c)}
                for i, (a, s, c) in enumerate(zip(rmse, smooth, pen))]
    return curves


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_report(report: Report, outdir: str | Path) -> Path:
    root = Path(outdir)
    for sub in ("traces", "runs", "checkpoints"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for r in report.runs:
        (root / "traces" / f"{r.key}.csv").write_text(r.trace.to_csv())
        meta = {"experiment": r.experiment, "variant": r.variant, "point": r.point, "seed": r.seed,
                "grid": r.grid, "diverged_at": r.diverged_at, "metrics": r.metrics}
        (root / "runs" / f"{r.key}.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
        (root / "checkpoints" / f"{r.key}.txt").write_text(r.checkpoint)
    _write_derived(report, root)
    return root


def _write_derived(report: Report, root: Path) -> None:
    for name, rows in build_tables(report).items():
        _write_csv(root / "tables" / f"{name}.csv", rows)
    for name, rows in build_curves(report).items():
        _write_csv(root / "curves" / f"{name}.csv", rows)
    artifacts = sorted(p for p in root.rglob("*") if p.is_file() and p.name != "manifest.json")
    manifest = {"experiment": report.config.id, "seeds": list(report.config.seeds),
                "config": report.config.to_dict(),
                "runs": [r.key for r in report.runs],
                "artifacts": {str(p.relative_to(root)): _sha256(p) for p in artifacts}}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def load_report(outdir: str | Path) -> Report:
    root = Path(outdir)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest in {root}")
    manifest = json.loads(manifest_path.read_text())
    config = config_from_dict(manifest["config"])
    runs = []
    for key in manifest["runs"]:
        meta = json.loads((root / "runs" / f"{key}.json").read_text())
        trace = TrainingTrace.from_csv((root / "traces" / f"{key}.csv").read_text())
        ck = root / "checkpoints" / f"{key}.txt"
        runs.append(RunRecord(meta["experiment"], meta["variant"], meta["point"], meta["seed"], trace,
                              meta["metrics"], meta["grid"], meta["diverged_at"],
                              ck.read_text() if ck.exists() else ""))
    return Report(config, runs)


def rebuild_tables(outdir: str | Path) -> Report:
    """Recompute tables, curves and the manifest from stored traces and runs."""
    report = load_report(outdir)
    _write_derived(report, Path(outdir))
    return report


def config_from_dict(d: Mapping) -> cfg.ExperimentConfig:
    variants = tuple(
        cfg.Variant(v["name"], NetworkSpec.from_dict(v["network"]),
                    tuple(cfg.ConstraintSpec(**c) for c in v["constraints"]), v.get("init", "default"))
        for v in d["variants"])
    return cfg.ExperimentConfig(
        id=d["id"], description=d["description"], variants=variants,
        data=cfg.DataSpec(**d["data"]), hyper=cfg.Hyper(**d["hyper"]),
        eval=cfg.EvalPlan(**d["eval"]), seeds=tuple(d["seeds"]),
        sweep=tuple(cfg.SweepPoint(**p) for p in d["sweep"]), window=d["window"],
        checkpoint_iteration=d["checkpoint_iteration"],
        pairs=tuple(tuple(p) for p in d["pairs"]))
