"""Acceptance suite: one test per criterion, full experiment settings.

Each test records a PASS/FAIL line (printed in the terminal summary) and
asserts on it. Experiments are trained once per session; expect roughly
half an hour on one core. Skip with ``-m "not acceptance"``.
"""

from dataclasses import replace

import numpy as np
import pytest

from pgnniv import autodiff as ad
from pgnniv import constraints as cons
from pgnniv import datasets as ds
from pgnniv import hydraulics as hyd
from pgnniv.datasets import Batch
from pgnniv.experiments import checks, configs as cfg, runner
from pgnniv.experiments.checks import CheckResult
from pgnniv.network import LayerSpec, NetworkSpec, build_network, register_constraint
from pgnniv.training import loss, objective

pytestmark = pytest.mark.acceptance

GRADIENT_RTOL = 1e-5
IDENTITY_RTOL = 1e-12
ROUGHNESS_RTOL = 1e-9


@pytest.fixture(scope="session")
def outdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="session")
def reports(outdir):
    cache = {}

    def get(eid):
        if eid not in cache:
            config = cfg.get_config(eid)
            if eid == "E6":
                config = replace(config, sweep=tuple(p for p in config.sweep
                                                     if p.label in ("sigma0", "sigma1")))
            cache[eid] = runner.run_experiment(config, outdir=outdir / eid)
        return cache[eid]
    return get


def settle(record, result: CheckResult):
    record(result)
    assert result.passed, result.line()


# -- gradient correctness ----------------------------------------------------------------------

STEP = np.finfo(float).eps ** (1 / 3)  # balances truncation and round-off of central differences


def _central(f, x):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        h = STEP * max(1.0, abs(x[idx]))
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (xp[idx] - xm[idx])
    return g


def _rel(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)))


OPS = {
    "matmul": (lambda a, b: a @ b, [(3, 4), (4, 2)]),
    "add": (lambda a, b: a + b, [(4, 3), (1, 3)]),
    "sub": (lambda a, b: a - b, [(4, 3), (4, 1)]),
    "mul": (lambda a, b: a * b, [(3, 3), (3, 3)]),
    "neg": (lambda a: -a, [(2, 3)]),
    "scale": (lambda a: ad.scale(a, 1.7), [(2, 3)]),
    "pow_scalar": (lambda a: ad.pow_scalar(ad.square(a) + 0.5, 1.852), [(3, 2)]),
    "signed_pow": (lambda a: ad.signed_pow(a, 1.852), [(3, 2)]),
    "square": (ad.square, [(3, 3)]),
    "relu": (ad.relu, [(4, 3)]),
    "sum": (lambda a: ad.scale(ad.sum_(ad.square(a)), 0.5), [(3, 3)]),
    "mean": (lambda a: ad.mean(ad.square(a)), [(3, 3)]),
    "columns": (lambda a: ad.columns(a, [1, 0]) * ad.columns(a, 2), [(3, 3)]),
    "concat": (lambda a, b: ad.square(ad.concat([a, b])), [(2, 2), (2, 1)]),
}


def _op_error(build, shapes, rng):
    values = [np.where(np.abs(v) < 0.05, 0.3, v) for v in (rng.normal(size=s) for s in shapes)]

    def value(vals):
        tape = ad.Tape()
        nodes = [tape.param(ad.Param(f"x{i}", v)) for i, v in enumerate(vals)]
        return tape, ad.sum_(build(*nodes))

    tape, out = value(values)
    grads = ad.backward(tape, out)
    worst = 0.0
    for i, v in enumerate(values):
        def f(x, i=i):
            vals = list(values)
            vals[i] = x
            return float(value(vals)[1].value[0, 0])
        worst = max(worst, _rel(grads[f"x{i}"], _central(f, v)))
    return worst


def _objective_error(net, batch):
    obj = objective(net, batch)
    grads = ad.backward(obj.tape, obj.of, params=net.params.values())
    worst = 0.0
    for pid, param in net.params.items():
        base = param.value.copy()

        def f(x):
            param.value = x
            try:
                return loss(net, batch).of
            finally:
                param.value = base
        worst = max(worst, _rel(grads[pid], _central(f, base)))
    return worst


def _random_nets(rng):
    phys = ("lambda1", "lambda2", "lambda3")
    seg = ds.generate_prediction_dataset(6, seed=int(rng.integers(1000)), targets="segments")
    mlp = NetworkSpec(1, (LayerSpec(3), LayerSpec(5, "relu"), LayerSpec(4, "relu"), LayerSpec(3)),
                      pil_markers={1})
    net = build_network(mlp, int(rng.integers(1000)))
    register_constraint(net, cons.flow_conservation(1, hyd.TABLE1.areas, penalty_weight=0.7))
    register_constraint(net, cons.output_sum("dp", 0.3))
    yield "mlp", net, seg.batch()

    hw = NetworkSpec(1, (LayerSpec(3), LayerSpec(3, "model_layer")), pil_markers={1},
                     model_layer_kind="hazen_williams", trainable_physical_params=phys,
                     pipe=hyd.TABLE1)
    for kind in ("hazen_williams", "darcy_weisbach"):
        net = build_network(replace(hw, model_layer_kind=kind), int(rng.integers(1000)))
        net.params["W1"].value = np.abs(net.params["W1"].value) + 0.1
        register_constraint(net, cons.flow_conservation(1, hyd.TABLE1.areas, penalty_weight=2.0))
        register_constraint(net, cons.nonnegative_parameter("lambda1", 1.0))
        net.set_physical_values({"lambda1": -0.2})
        yield kind, net, seg.batch()

    geo = NetworkSpec(3, (LayerSpec(3, "relu"), LayerSpec(6, "relu"), LayerSpec(2, "relu"),
                          LayerSpec(1, "model_layer")), pil_markers={1, 3},
                      model_layer_kind="geometry_integrator")
    net = build_network(geo, int(rng.integers(1000)))
    for i in (1, 2, 3):
        net.params[f"b{i}"].value = net.params[f"b{i}"].value + 0.1
    register_constraint(net, cons.flow_conservation(1, (1, 1, 1), penalty_weight=1.0))
    g = ds.generate_geometry_dataset(6, seed=int(rng.integers(1000)))
    yield "geometry", net, g.batch()

    char = NetworkSpec(4, (LayerSpec(4), LayerSpec(6, "relu"), LayerSpec(2)), pil_markers={1})
    net = build_network(char, int(rng.integers(1000)))
    register_constraint(net, cons.flow_conservation(1, (1, 1), neurons=(0, 1), penalty_weight=0.5))
    register_constraint(net, cons.pressure_drop_definition(1, penalty_weight=0.5))
    c = ds.generate_characterization_dataset(6, seed=int(rng.integers(1000)))
    yield "characterization", net, Batch(c.inputs, c.targets / 100.0, {})


def test_gradient_correctness(record_criterion):
    rng = np.random.default_rng(2024)
    errors = {name: _op_error(build, shapes, rng) for name, (build, shapes) in OPS.items()}
    for trial in range(3):
        for name, net, batch in _random_nets(rng):
            key = f"OF[{name}]"
            errors[key] = max(errors.get(key, 0.0), _objective_error(net, batch))
    worst = max(errors, key=errors.get)
    settle(record_criterion, CheckResult(
        "gradient correctness", errors[worst] < GRADIENT_RTOL,
        f"{len(OPS)} ops and 5 objective families x 3 random nets; worst relative error "
        f"{errors[worst]:.2g} ({worst}), need < {GRADIENT_RTOL:g}"))


# -- oracle identities ------------------------------------------------------------------------

def test_oracle_identities(record_criterion):
    q = np.random.default_rng(7).uniform(0.1, 10.0, size=100)
    parts = hyd.segment_pressure_drops(q).total
    identity = float(np.max(np.abs(hyd.total_pressure_drop(q) - parts) / np.abs(parts)))
    pipe = hyd.UNIFORM_PIPE
    d = hyd.segment_pressure_drops(q, pipe)
    k1, k2 = hyd.roughness_from_observation(q, d.dp1 + d.dp2, d.dp2, np.zeros_like(q), pipe)
    rough = float(max(np.max(np.abs(k1 / 140.0 - 1)), np.max(np.abs(k2 / 100.0 - 1))))
    settle(record_criterion, CheckResult(
        "oracle identities", identity < IDENTITY_RTOL and rough < ROUGHNESS_RTOL,
        f"reduced law vs segment sum max rel. diff {identity:.2g} (need < {IDENTITY_RTOL:g}); "
        f"roughness round trip max rel. error {rough:.2g} (need < {ROUGHNESS_RTOL:g})"))


# -- experiments ------------------------------------------------------------------------------

def test_convergence_acceleration(reports, record_criterion):
    settle(record_criterion, checks.convergence(reports("E1")))


def test_pil_physical_meaning(reports, record_criterion):
    settle(record_criterion, checks.pil_meaning(reports("E1")))


def test_geometry(reports, record_criterion):
    settle(record_criterion, checks.geometry(reports("E2")))


def test_model_based_identification(reports, record_criterion):
    settle(record_criterion, checks.identification(reports("E3")))


def test_noise_filtering(reports, record_criterion):
    settle(record_criterion, checks.noise(reports("E6")))


def test_bias_correction(reports, record_criterion):
    settle(record_criterion, checks.bias(reports("E6B")))


def test_extrapolation(reports, record_criterion):
    # The extrapolation metrics are computed on the trained E3 nets.
    settle(record_criterion, checks.extrapolation(reports("E3")))


def test_characterization(reports, record_criterion):
    settle(record_criterion, checks.characterization(reports("E4")))


def test_determinism(reports, outdir, record_criterion):
    first = reports("E1")
    config = first.config.with_seeds([0, 1])
    runner.run_experiment(config, outdir=outdir / "E1_rerun")
    names = sorted(p.name for p in (outdir / "E1_rerun" / "traces").iterdir())
    same = [n for n in names
            if (outdir / "E1" / "traces" / n).read_bytes() == (outdir / "E1_rerun" / "traces" / n).read_bytes()]
    settle(record_criterion, CheckResult(
        "determinism", bool(names) and len(same) == len(names),
        f"{len(same)}/{len(names)} rerun trace files byte-identical (E1, seeds 0 and 1)"))
