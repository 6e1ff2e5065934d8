"""Declarative experiment definitions E1-E7.

A config is plain frozen data (picklable, JSON-echoable); networks,
constraints and datasets are built from it inside each job.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Mapping

from ..errors import ConfigurationError
from ..hydraulics import TABLE1, UNIFORM_PIPE, PipeParams
from ..network import LayerSpec, NetworkSpec, validate_spec

SEEDS = tuple(range(10))
DLBOX = (20, 40, 80, 40, 20)
PHYS = ("lambda1", "lambda2", "lambda3")


@dataclass(frozen=True)
class ConstraintSpec:
    """One constraint to register. ``kind`` is flow, pressure, output_sum or nonneg."""

    kind: str
    penalty_weight: float
    options: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("flow", "pressure", "output_sum", "nonneg"):
            raise ConfigurationError(f"unknown constraint kind {self.kind!r}")
        object.__setattr__(self, "options", dict(self.options))


@dataclass(frozen=True)
class Variant:
    name: str
    network: NetworkSpec
    constraints: tuple[ConstraintSpec, ...] = ()
    # "default": Glorot weights, zero biases; "centered": ReLU biases re-centred on the data
    init: str = "default"

    def unconstrained(self, name: str | None = None) -> "Variant":
        """Same network, same constraints, every penalty weight zeroed."""
        zeroed = tuple(replace(c, penalty_weight=0.0) for c in self.constraints)
        return replace(self, name=name or f"{self.name}_unconstrained", constraints=zeroed)


@dataclass(frozen=True)
class DataSpec:
    """Training data. ``generator`` is prediction, geometry or characterization.

    ``normalize``: None, "inputs" (fixed bounds from the generator ranges)
    or "all" (training-set min/max for every column).
    """

    generator: str
    M: int
    options: Mapping = field(default_factory=dict)
    noise: float = 0.0
    bias: float = 0.0
    normalize: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "options", dict(self.options))


@dataclass(frozen=True)
class Hyper:
    iterations: int
    batch_size: int
    learning_rate: float


@dataclass(frozen=True)
class SweepPoint:
    """A labelled change to the data (and optionally the batch size)."""

    label: str
    M: int | None = None
    batch_size: int | None = None
    noise: float | None = None


@dataclass(frozen=True)
class EvalPlan:
    """``kind`` picks the evaluator: prediction, geometry, model, characterization, bias."""

    kind: str
    options: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "options", dict(self.options))


@dataclass(frozen=True)
class ExperimentConfig:
    id: str
    description: str
    variants: tuple[Variant, ...]
    data: DataSpec
    hyper: Hyper
    eval: EvalPlan
    seeds: tuple[int, ...] = SEEDS
    sweep: tuple[SweepPoint, ...] = (SweepPoint("base"),)
    window: int = 500
    checkpoint_iteration: int = 600
    # (a, b): variant a is the constrained one, b its unconstrained twin
    pairs: tuple[tuple[str, str], ...] = ()

    def variant(self, name: str) -> Variant:
        for v in self.variants:
            if v.name == name:
                return v
        raise ConfigurationError(f"{self.id} has no variant {name!r}; "
                                 f"choose from {[v.name for v in self.variants]}")

    def point(self, label: str) -> SweepPoint:
        for p in self.sweep:
            if p.label == label:
                return p
        raise ConfigurationError(f"{self.id} has no sweep point {label!r}")

    def with_seeds(self, seeds) -> "ExperimentConfig":
        return replace(self, seeds=tuple(int(s) for s in seeds))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variants"] = [{"name": v.name, "network": v.network.to_dict(),
                          "constraints": [asdict(c) for c in v.constraints], "init": v.init}
                         for v in self.variants]
        return d


def _with_twin(v: Variant) -> tuple[Variant, Variant]:
    return v, v.unconstrained()


# -- E1 and its derivatives ----------------------------------------------------------

def _prediction_net() -> NetworkSpec:
    return NetworkSpec(1, (LayerSpec(3), LayerSpec(15), LayerSpec(15, "relu"), LayerSpec(1)),
                       pil_markers={1})


def _flow(p: float, areas=TABLE1.areas, **opts) -> ConstraintSpec:
    return ConstraintSpec("flow", p, {"layer": 1, "areas": list(areas), **opts})


def e1() -> ExperimentConfig:
    net = _prediction_net()
    con = Variant("constrained", net, (_flow(0.01),))
    stiff = Variant("constrained_stiff", net, (_flow(10.0),))
    return ExperimentConfig(
        "E1", "Prediction q -> dp, constrained vs unconstrained twin",
        variants=(con, con.unconstrained("unconstrained"), stiff),
        data=DataSpec("prediction", 200, {"q_range": [1.0, 5.0]}),
        hyper=Hyper(3000, 4, 1e-3),
        eval=EvalPlan("prediction", {"test_range": [1.0, 5.0], "test_size": 1000,
                                     "l2_interval": [0.0, 10.0]}),
        pairs=(("constrained", "unconstrained"),))


def e5() -> ExperimentConfig:
    base = e1()
    return replace(base, id="E5", description="Data need: M = 2, 10, 50 with n = M",
                   variants=base.variants[:2],
                   sweep=tuple(SweepPoint(f"M{m}", M=m, batch_size=m) for m in (2, 10, 50)))


def e6() -> ExperimentConfig:
    base = e1()
    return replace(base, id="E6", description="Noise sweep on q and dp",
                   variants=base.variants[:2], hyper=Hyper(5000, 4, 1e-3),
                   sweep=tuple(SweepPoint(f"sigma{s:g}", noise=s) for s in (0.0, 0.01, 0.1, 1.0)))


def e6b() -> ExperimentConfig:
    net = NetworkSpec(1, (LayerSpec(3), LayerSpec(15, "relu"), LayerSpec(15, "relu"), LayerSpec(3)),
                      pil_markers={1})
    con = Variant("constrained", net,
                  (_flow(0.01), ConstraintSpec("output_sum", 1.0, {"total_column": "dp"})))
    return ExperimentConfig(
        "E6B", "Bias -0.2 Pa plus noise 0.1 Pa with an output-sum constraint",
        variants=_with_twin(con),
        data=DataSpec("prediction", 200, {"q_range": [1.0, 5.0], "targets": "segments"},
                      noise=0.1, bias=-0.2),
        hyper=Hyper(5000, 4, 1e-3),
        eval=EvalPlan("bias", {"test_range": [1.0, 5.0], "test_size": 1000}),
        pairs=(("constrained", "constrained_unconstrained"),))


# -- E2 geometry ---------------------------------------------------------------------

def e2(hidden: int = 30) -> ExperimentConfig:
    bounds = {"q": [1.0, 5.0], "l1": [0.0, 10.0], "l2": [0.0, 10.0]}
    net = NetworkSpec(3, (LayerSpec(3, "relu"), LayerSpec(hidden, "relu"), LayerSpec(2, "relu"),
                          LayerSpec(1, "model_layer")),
                      pil_markers={1, 3}, model_layer_kind="geometry_integrator",
                      length_affine=((10.0, 0.0), (10.0, 0.0)))
    # Inputs are min-max scaled; with unit areas the scaled velocity equals the scaled flow.
    con = Variant("constrained", net, (_flow(1.0, areas=(1.0, 1.0, 1.0)),), init="centered")
    return ExperimentConfig(
        "E2", "Geometry-dependent net (q, l1, l2) -> dp with a length integrator",
        variants=_with_twin(con),
        data=DataSpec("geometry", 1000, {"q_range": bounds["q"], "length_range": bounds["l1"]},
                      normalize="inputs"),
        hyper=Hyper(40000, 100, 3e-3),
        eval=EvalPlan("geometry", {"grid": 20}),
        pairs=(("constrained", "constrained_unconstrained"),))


# -- E3 / E7 model-free and model-based ---------------------------------------------------

def _model_variants(p: float = 10.0) -> tuple[Variant, ...]:
    mf = NetworkSpec(1, (LayerSpec(3), LayerSpec(15, "relu"), LayerSpec(15, "relu"), LayerSpec(3)),
                     pil_markers={1})
    out = []
    for name, spec in (
            ("MF", mf),
            ("MB_HW", NetworkSpec(1, (LayerSpec(3), LayerSpec(3, "model_layer")), pil_markers={1},
                                  model_layer_kind="hazen_williams", trainable_physical_params=PHYS,
                                  pipe=TABLE1)),
            ("MB_DW", NetworkSpec(1, (LayerSpec(3), LayerSpec(3, "model_layer")), pil_markers={1},
                                  model_layer_kind="darcy_weisbach", trainable_physical_params=PHYS,
                                  pipe=TABLE1))):
        out.extend(_with_twin(Variant(name, spec, (_flow(p),))))
    return tuple(out)


def e3() -> ExperimentConfig:
    return ExperimentConfig(
        "E3", "Model-free vs model-based (Hazen-Williams, Darcy-Weisbach) segment nets",
        variants=_model_variants(),
        data=DataSpec("prediction", 200, {"q_range": [1.0, 5.0], "targets": "segments"}),
        hyper=Hyper(10000, 4, 1e-3),
        eval=EvalPlan("model", {"test_range": [1.0, 5.0], "test_size": 1000,
                                "extrapolation_range": [5.0, 10.0]}),
        seeds=tuple(range(5)),
        pairs=(("MF", "MF_unconstrained"), ("MB_HW", "MB_HW_unconstrained"),
               ("MB_DW", "MB_DW_unconstrained")))


def e7() -> ExperimentConfig:
    base = e3()
    keep = ("MF", "MF_unconstrained", "MB_HW", "MB_HW_unconstrained")
    return replace(base, id="E7", description="Extrapolation of the E3 nets to q in [5, 10]",
                   variants=tuple(v for v in base.variants if v.name in keep),
                   pairs=base.pairs[:2])


# -- E4 characterization ----------------------------------------------------------------

def e4() -> ExperimentConfig:
    net = NetworkSpec(4, (LayerSpec(4),) + tuple(LayerSpec(s, "relu") for s in DLBOX)
                      + (LayerSpec(2),), pil_markers={1})
    # State layer (v1, v2, dp1, dp2). Velocities in scaled units (unit areas);
    # pressure drops in Pa, compared against un-scaled taps.
    con = Variant("constrained", net,
                  (ConstraintSpec("flow", 1e-3, {"layer": 1, "areas": [1.0, 1.0], "neurons": [0, 1]}),
                   ConstraintSpec("pressure", 1e-3, {"layer": 1, "neurons": [2, 3],
                                                     "pressure_columns": [1, 2, 3],
                                                     "unscale": ["p0", "p1", "p2"]})),
                  init="centered")
    return ExperimentConfig(
        "E4", "Characterization (q, p0, p1, p2) -> (kappa1, kappa2)",
        variants=_with_twin(con),
        data=DataSpec("characterization", 1000, {"q_range": [1.0, 5.0], "kappa_range": [80.0, 140.0]},
                      normalize="all"),
        hyper=Hyper(5000, 300, 1e-2),
        eval=EvalPlan("characterization", {"test_size": 100, "interior": [90.0, 130.0]}),
        seeds=tuple(range(3)),
        pairs=(("constrained", "constrained_unconstrained"),))


REGISTRY = {"E1": e1, "E2": e2, "E3": e3, "E4": e4, "E5": e5, "E6": e6, "E6B": e6b, "E7": e7}


def get_config(experiment_id: str) -> ExperimentConfig:
    try:
        return REGISTRY[experiment_id.upper()]()
    except KeyError:
        raise ConfigurationError(f"unknown experiment {experiment_id!r}; "
                                 f"known: {', '.join(REGISTRY)}") from None


def pipe_for(data: DataSpec) -> PipeParams:
    """Pipe used by a generator unless the options override it."""
    if "params" in data.options:
        return PipeParams(**data.options["params"])
    return TABLE1 if data.generator == "prediction" else UNIFORM_PIPE


# -- user config files ------------------------------------------------------------------

def from_ini(text: str) -> ExperimentConfig:
    """Build a config from flat ``key = value`` text with sections.

    ``[experiment] base`` names a built-in experiment to start from; the
    other sections override parts of it. A ``[network]`` section replaces
    the variants with one constrained net plus its unconstrained twin, using
    the penalties listed under ``[constraints]``. Example::

        [experiment]
        base = E1
        id = wide
        seeds = 0 1 2

        [network]
        layers = 3:linear 30:relu 1:linear
        pil = 1

        [constraints]
        flow = 0.01

        [train]
        iterations = 2000
    """
    import configparser

    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"bad config file: {exc}") from None
    sec = {name: dict(parser[name]) for name in parser.sections()}
    exp = sec.get("experiment", {})
    config = get_config(exp.get("base", "E1"))
    if "id" in exp:
        config = replace(config, id=exp["id"])
    if "seeds" in exp:
        config = config.with_seeds(int(s) for s in exp["seeds"].split())
    try:
        if "data" in sec:
            config = replace(config, data=_data_from(sec["data"], config.data))
        if "train" in sec:
            t = sec["train"]
            h = config.hyper
            config = replace(config, hyper=Hyper(int(t.get("iterations", h.iterations)),
                                                 int(t.get("batch_size", h.batch_size)),
                                                 float(t.get("learning_rate", h.learning_rate))))
        if "network" in sec:
            spec = _network_from(sec["network"], config.data)
            cons = tuple(_constraint_from(k, float(v), spec, config.data)
                         for k, v in sec.get("constraints", {}).items())
            con = Variant("constrained", spec, cons, sec["network"].get("init", "default"))
            config = replace(config, variants=(con, con.unconstrained("unconstrained")),
                             pairs=(("constrained", "unconstrained"),))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigurationError(f"bad config value: {exc}") from None
    return config


def _data_from(d: Mapping, base: DataSpec) -> DataSpec:
    opts = dict(base.options)
    if "q_min" in d or "q_max" in d:
        lo, hi = opts.get("q_range", [1.0, 5.0])
        opts["q_range"] = [float(d.get("q_min", lo)), float(d.get("q_max", hi))]
    if "kappa_min" in d or "kappa_max" in d:
        lo, hi = opts.get("kappa_range", [80.0, 140.0])
        opts["kappa_range"] = [float(d.get("kappa_min", lo)), float(d.get("kappa_max", hi))]
    if "targets" in d:
        opts["targets"] = d["targets"]
    return DataSpec(d.get("generator", base.generator), int(d.get("m", base.M)), opts,
                    float(d.get("noise", base.noise)), float(d.get("bias", base.bias)),
                    d.get("normalize", base.normalize) or None)


def _network_from(d: Mapping, data: DataSpec) -> NetworkSpec:
    layers = []
    for tok in d["layers"].split():
        size, _, act = tok.partition(":")
        layers.append(LayerSpec(int(size), act or "linear"))
    kind = d.get("model_layer_kind") or None
    pipe = {"table1": TABLE1, "uniform": UNIFORM_PIPE}[d.get("pipe", "table1")]
    model_based = kind in ("hazen_williams", "darcy_weisbach")
    spec = NetworkSpec(int(d.get("input_size", 1)), tuple(layers),
                       pil_markers={int(x) for x in d.get("pil", "").split()},
                       model_layer_kind=kind,
                       trainable_physical_params=PHYS if model_based else (),
                       pipe=pipe if model_based else None)
    validate_spec(spec)
    return spec


def _constraint_from(kind: str, weight: float, spec: NetworkSpec, data: DataSpec) -> ConstraintSpec:
    pipe = spec.pipe or pipe_for(data)
    if kind == "flow":
        return _flow(weight, areas=pipe.areas)
    if kind == "output_sum":
        return ConstraintSpec("output_sum", weight, {"total_column": "dp"})
    if kind.startswith("nonneg_"):
        return ConstraintSpec("nonneg", weight, {"name": kind[len("nonneg_"):]})
    raise ConfigurationError(f"unknown constraint {kind!r} in config file")
