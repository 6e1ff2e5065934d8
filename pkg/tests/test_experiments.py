from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from pgnniv import datasets as ds
from pgnniv.errors import ConfigurationError
from pgnniv.experiments import checks, configs as cfg, runner
from pgnniv.network import build_network


def tiny(eid, iterations=30, seeds=2, **kw):
    config = cfg.get_config(eid).with_seeds(range(seeds))
    return replace(config, hyper=replace(config.hyper, iterations=iterations), **kw)


@pytest.fixture(scope="module")
def e1_report(tmp_path_factory):
    out = tmp_path_factory.mktemp("rep") / "E1"
    config = replace(tiny("E1", iterations=40), window=5, checkpoint_iteration=20)
    return runner.run_experiment(config, outdir=out), out


def test_registry_ids():
    assert set(cfg.REGISTRY) == {"E1", "E2", "E3", "E4", "E5", "E6", "E6B", "E7"}
    with pytest.raises(ConfigurationError, match="unknown experiment"):
        cfg.get_config("E9")
    assert cfg.get_config("e6b").id == "E6B"


@pytest.mark.parametrize("eid", sorted(cfg.REGISTRY))
def test_config_dict_round_trip(eid):
    config = cfg.get_config(eid)
    assert runner.config_from_dict(config.to_dict()).to_dict() == config.to_dict()


def test_unconstrained_twin_zeroes_every_penalty():
    for config in (cfg.get_config(e) for e in cfg.REGISTRY):
        for v in config.variants:
            if "unconstrained" in v.name:
                assert v.constraints and all(c.penalty_weight == 0 for c in v.constraints)


def test_twin_trace_equals_network_without_constraints():
    config = tiny("E1", iterations=50, seeds=1)
    twin = runner.run_job(config, "unconstrained", "base", 0)
    bare = replace(config, variants=(cfg.Variant("bare", config.variant("unconstrained").network, ()),))
    plain = runner.run_job(bare, "bare", "base", 0)
    # The twin still monitors its (unweighted) violation; everything trained on is identical.
    assert (twin.trace.mse, twin.trace.pen, twin.trace.of) == (plain.trace.mse, plain.trace.pen,
                                                               plain.trace.of)
    assert twin.checkpoint.split("\n", 2)[2] == plain.checkpoint.split("\n", 2)[2]


def test_prepare_data_is_seeded_and_scaled():
    config = cfg.get_config("E2")
    a = runner.prepare_data(config, config.point("base"), 3)
    b = runner.prepare_data(config, config.point("base"), 3)
    assert a.train.equals(b.train)
    x = a.train.inputs
    assert x.min() >= 0 and x.max() <= 1
    assert a.scaling.bounds["l1"] == (0.0, 10.0)
    own = ds.generate_geometry_dataset(20, seed=0)
    c = runner.prepare_data(config, config.point("base"), 0, dataset=own)
    assert len(c.train) == 20


def test_centered_init_is_applied():
    config = cfg.get_config("E2")
    data = runner.prepare_data(config, config.point("base"), 0)
    v = config.variant("constrained")
    net = runner.build_variant(v, 0, data)
    plain = build_network(v.network, 0)
    assert not np.array_equal(net.params["b1"].value, plain.params["b1"].value)
    assert [c.id for c in net.constraints] == ["flow0"]


def test_report_files_and_rebuild(e1_report):
    report, out = e1_report
    assert len(report.runs) == 6
    for sub in ("traces", "runs", "checkpoints", "tables", "curves"):
        assert (out / sub).is_dir()
    tables = {p.name: p.read_bytes() for p in (out / "tables").iterdir()}
    curves = {p.name: p.read_bytes() for p in (out / "curves").iterdir()}
    manifest = (out / "manifest.json").read_bytes()
    for p in (out / "tables").iterdir():
        p.unlink()
    (out / "manifest.json").unlink()
    (out / "manifest.json").write_bytes(manifest)
    runner.rebuild_tables(out)
    assert {p.name: p.read_bytes() for p in (out / "tables").iterdir()} == tables
    assert {p.name: p.read_bytes() for p in (out / "curves").iterdir()} == curves
    assert (out / "manifest.json").read_bytes() == manifest


def test_loaded_report_matches_memory(e1_report):
    report, out = e1_report
    back = runner.load_report(out)
    assert [r.key for r in back.runs] == [r.key for r in report.runs]
    assert all(a.trace.of == b.trace.of for a, b in zip(back.runs, report.runs))
    assert runner.build_tables(back) == runner.build_tables(report)


def test_comparison_table_is_from_traces(e1_report):
    report, _ = e1_report
    row = runner.build_tables(report)["comparison"][0]
    c = report.compare("constrained", "unconstrained")
    assert (row["seed_wins"], row["seeds_compared"], row["at"]) == (c.seed_wins, c.seeds_compared, 20)


def test_parallel_and_serial_reports_agree():
    config = tiny("E1", iterations=20, seeds=2)
    serial = runner.run_experiment(config, jobs=1, variants=["constrained"])
    parallel = runner.run_experiment(config, jobs=2, variants=["constrained"])
    assert [r.trace.to_csv() for r in serial.runs] == [r.trace.to_csv() for r in parallel.runs]


def test_divergence_is_recorded_not_raised():
    config = tiny("E1", iterations=300, seeds=1)
    config = replace(config, hyper=replace(config.hyper, learning_rate=5.0))
    rec = runner.run_job(config, "unconstrained", "base", 0)
    assert rec.diverged_at is not None and rec.metrics == {}
    assert len(rec.trace) == rec.diverged_at


@pytest.mark.parametrize("eid, variant", [("E3", "MB_HW"), ("E4", "constrained"),
                                          ("E6B", "constrained"), ("E2", "constrained")])
def test_every_evaluator_runs(eid, variant):
    config = tiny(eid, iterations=5, seeds=1)
    if eid == "E2":
        config = replace(config, eval=cfg.EvalPlan("geometry", {"grid": 4}))
    rec = runner.run_job(config, variant, config.sweep[0].label, 0)
    assert rec.diverged_at is None and rec.metrics


def test_checks_report_failures_with_numbers(e1_report):
    report, _ = e1_report
    results = checks.run_checks(report)
    assert [r.name for r in results] == ["convergence acceleration (E1)", "PIL physical meaning (E1)"]
    conv = results[0]
    assert not conv.passed  # two seeds are fewer than required
    assert "/2 seeds" in conv.detail and conv.line().startswith("FAIL")


def test_from_ini_overrides():
    text = """
    [experiment]
    base = E1
    id = wide
    seeds = 0 1 2

    [network]
    layers = 3:linear 30:relu 1:linear
    pil = 1

    [constraints]
    flow = 0.5

    [train]
    iterations = 200
    learning_rate = 0.002
    """
    config = cfg.from_ini("\n".join(l.strip() for l in text.splitlines()))
    assert config.id == "wide" and config.seeds == (0, 1, 2)
    assert config.hyper.iterations == 200 and config.hyper.learning_rate == 0.002
    names = [v.name for v in config.variants]
    assert names == ["constrained", "unconstrained"]
    con = config.variant("constrained")
    assert [l.size for l in con.network.layers] == [3, 30, 1]
    assert con.constraints[0].kind == "flow" and con.constraints[0].penalty_weight == 0.5
    rec = runner.run_job(replace(config, hyper=replace(config.hyper, iterations=10)),
                         "constrained", "base", 0)
    assert len(rec.trace) == 10


@pytest.mark.parametrize("text", [
    "[experiment]\nbase = E42\n",
    "[train]\niterations = many\n",
    "[network]\nlayers = 3:sigmoid\n",
    "not a config",
])
def test_from_ini_errors(text):
    with pytest.raises(ConfigurationError):
        cfg.from_ini(text)
