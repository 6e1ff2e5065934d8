"""Declarative dense networks with predefined internal layers (PILs).

Layer ``0`` is the input; layers ``1..L`` follow ``spec.layers``. A dense layer
computes ``phi(y_prev @ W + b)``. A ``model_layer`` replaces the dense map with
a fixed physical formula that may carry trainable physical parameters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError, ContractError, ShapeError
from .hydraulics import PipeParams, hydraulic_diameter

ACTIVATIONS = ("linear", "relu", "model_layer")
MODEL_KINDS = ("hazen_williams", "darcy_weisbach", "geometry_integrator")
PHYSICAL_PARAM_NAMES = ("lambda1", "lambda2", "lambda3")


@dataclass(frozen=True)
class LayerSpec:
    size: int
    activation: str = "linear"


@dataclass(frozen=True)
class NetworkSpec:
    """Topology of a network.

    ``physical_scale`` multiplies each trainable physical parameter: the
    stored (trained) value is ``lambda / scale``, which keeps the gradient
    of tiny physical coefficients on the same footing as the weights.
    """

    input_size: int
    layers: tuple[LayerSpec, ...]
    pil_markers: frozenset[int] = frozenset()
    model_layer_kind: str | None = None
    trainable_physical_params: tuple[str, ...] = ()
    pipe: PipeParams | None = None
    physical_scale: tuple[float, ...] | None = None
    physical_init: tuple[float, ...] | None = None
    length_columns: tuple[int, int] = (1, 2)
    # (span, min) per length column when the inputs arrive min-max normalized
    length_affine: tuple[tuple[float, float], tuple[float, float]] | None = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(
            l if isinstance(l, LayerSpec) else LayerSpec(*l) for l in self.layers))
        object.__setattr__(self, "pil_markers", frozenset(self.pil_markers))
        object.__setattr__(self, "trainable_physical_params", tuple(self.trainable_physical_params))
        for name in ("physical_scale", "physical_init"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, tuple(float(v) for v in val))
        object.__setattr__(self, "length_columns", tuple(self.length_columns))
        if self.length_affine is not None:
            object.__setattr__(self, "length_affine", tuple(
                (float(a), float(b)) for a, b in self.length_affine))

    @property
    def depth(self) -> int:
        return len(self.layers)

    def sizes(self) -> list[int]:
        return [self.input_size] + [l.size for l in self.layers]

    @property
    def is_model_based(self) -> bool:
        return bool(self.trainable_physical_params)

    def to_dict(self) -> dict:
        return {
            "input_size": self.input_size,
            "layers": [[l.size, l.activation] for l in self.layers],
            "pil_markers": sorted(self.pil_markers),
            "model_layer_kind": self.model_layer_kind,
            "trainable_physical_params": list(self.trainable_physical_params),
            "pipe": self.pipe.to_dict() if self.pipe else None,
            "physical_scale": list(self.physical_scale) if self.physical_scale else None,
            "physical_init": list(self.physical_init) if self.physical_init else None,
            "length_columns": list(self.length_columns),
            "length_affine": [list(a) for a in self.length_affine] if self.length_affine else None,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "NetworkSpec":
        d = dict(d)
        d["layers"] = tuple(LayerSpec(int(s), a) for s, a in d["layers"])
        if d.get("pipe") is not None:
            d["pipe"] = PipeParams(**d["pipe"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def validate_spec(spec: NetworkSpec) -> None:
    if spec.input_size < 1:
        raise ConfigurationError(f"input_size must be positive, got {spec.input_size}")
    if not spec.layers:
        raise ConfigurationError("network needs at least one layer")
    model_layers = []
    for i, layer in enumerate(spec.layers, start=1):
        if layer.activation not in ACTIVATIONS:
            raise ConfigurationError(f"layer {i}: unknown activation {layer.activation!r}")
        if layer.size < 1:
            raise ConfigurationError(f"layer {i}: size must be positive, got {layer.size}")
        if layer.activation == "model_layer":
            model_layers.append(i)
    bad = sorted(m for m in spec.pil_markers if not 0 <= m <= spec.depth)
    if bad:
        raise ConfigurationError(f"PIL markers {bad} outside layer range 0..{spec.depth}")
    if bool(model_layers) != (spec.model_layer_kind is not None):
        raise ConfigurationError("model_layer_kind must be set iff the spec has a model layer")
    if len(model_layers) > 1:
        raise ConfigurationError(f"at most one model layer is supported, found layers {model_layers}")
    if not model_layers:
        if spec.trainable_physical_params:
            raise ConfigurationError("trainable physical params need a model layer")
        return
    kind = spec.model_layer_kind
    if kind not in MODEL_KINDS:
        raise ConfigurationError(f"unknown model_layer_kind {kind!r}")
    i = model_layers[0]
    prev = spec.sizes()[i - 1]
    size = spec.layers[i - 1].size
    if kind in ("hazen_williams", "darcy_weisbach"):
        if prev != 3 or size != 3:
            raise ConfigurationError(
                f"layer {i}: {kind} maps 3 velocities to 3 drops, got {prev} -> {size}")
        if spec.pipe is None:
            raise ConfigurationError(f"layer {i}: {kind} needs pipe parameters")
        names = spec.trainable_physical_params
        if names and (len(names) != 3 or len(set(names)) != 3):
            raise ConfigurationError(f"{kind} takes three physical parameters, got {names}")
        for field_name in ("physical_scale", "physical_init"):
            val = getattr(spec, field_name)
            if val is not None and len(val) != len(names):
                raise ConfigurationError(f"{field_name} needs {len(names)} entries, got {len(val)}")
    else:
        if prev != 2 or size != 1:
            raise ConfigurationError(
                f"layer {i}: geometry_integrator maps 2 slopes to 1 drop, got {prev} -> {size}")
        if spec.trainable_physical_params:
            raise ConfigurationError("geometry_integrator has no physical parameters")
        if max(spec.length_columns) >= spec.input_size or min(spec.length_columns) < 0:
            raise ConfigurationError(f"length_columns {spec.length_columns} outside the input")
        if spec.length_affine is not None and len(spec.length_affine) != 2:
            raise ConfigurationError("length_affine needs one (span, min) pair per length column")


def hazen_williams_reference(pipe: PipeParams) -> tuple[float, float, float]:
    """True physical parameters of the Hazen-Williams layer for ``pipe``:
    ``(xi, lambda*phi1**beta/kappa1**alpha, lambda*phi2**beta/kappa2**alpha)``."""
    return (
        pipe.xi,
        pipe.hw_lambda * hydraulic_diameter(pipe.sigma1) ** pipe.hw_beta / pipe.kappa1 ** pipe.hw_alpha,
        pipe.hw_lambda * hydraulic_diameter(pipe.sigma2) ** pipe.hw_beta / pipe.kappa2 ** pipe.hw_alpha,
    )


def darcy_weisbach_reference(pipe: PipeParams) -> tuple[float, float, float]:
    """``(xi, nu/phi1, nu/phi2)`` of the laminar Darcy-Weisbach layer."""
    return (pipe.xi, pipe.nu / hydraulic_diameter(pipe.sigma1),
            pipe.nu / hydraulic_diameter(pipe.sigma2))


def default_physical_scale(kind: str, pipe: PipeParams) -> tuple[float, float, float]:
    """Scales that give each segment drop unit sensitivity at ``v = 1 m/s``.

    With these, ``d(dp_i)/d(theta_i)`` is ``v_i**alpha`` (Hazen-Williams) or
    ``v_i`` (laminar), whatever the size of the physical coefficient.
    """
    if kind == "hazen_williams":
        return (1.0,
                1.0 / (pipe.gamma * pipe.delta1 * pipe.sigma1 ** pipe.hw_alpha),
                1.0 / (pipe.gamma * pipe.delta2 * pipe.sigma2 ** pipe.hw_alpha))
    return (1.0,
            hydraulic_diameter(pipe.sigma1) / (32.0 * pipe.rho * pipe.delta1),
            hydraulic_diameter(pipe.sigma2) / (32.0 * pipe.rho * pipe.delta2))


class Network:
    """Parameters plus registered constraints for one :class:`NetworkSpec`."""

    def __init__(self, spec: NetworkSpec, params: dict[str, ad.Param]):
        self.spec = spec
        self.params = params
        self.constraints: list = []

    @property
    def weight_params(self) -> list[ad.Param]:
        return [p for k, p in self.params.items() if not k.startswith("phys.")]

    @property
    def physical_params(self) -> list[ad.Param]:
        return [p for k, p in self.params.items() if k.startswith("phys.")]

    @property
    def physical_scale(self) -> tuple[float, ...]:
        if not self.spec.is_model_based:
            return ()
        return self.spec.physical_scale or default_physical_scale(
            self.spec.model_layer_kind, self.spec.pipe)

    def physical_values(self) -> dict[str, float]:
        scale = self.physical_scale
        return {name: float(self.params[f"phys.{name}"].value[0, 0]) * s
                for name, s in zip(self.spec.trainable_physical_params, scale)}

    def set_physical_values(self, values: Mapping[str, float]) -> None:
        for name, s in zip(self.spec.trainable_physical_params, self.physical_scale):
            if name in values:
                self.params[f"phys.{name}"].value = [[values[name] / s]]

    def forward(self, tape: ad.Tape, x) -> list[ad.Node]:
        """All layer values ``[y0, y1, ..., yL]`` as tape nodes."""
        x0 = x if isinstance(x, ad.Node) else tape.const(x)
        if x0.shape[1] != self.spec.input_size:
            raise ShapeError(f"network expects {self.spec.input_size} input columns, "
                             f"got shape {x0.shape}")
        ys = [x0]
        for i, layer in enumerate(self.spec.layers, start=1):
            prev = ys[-1]
            if layer.activation == "model_layer":
                ys.append(self._model_layer(tape, prev, x0))
                continue
            z = prev @ tape.param(self.params[f"W{i}"]) + tape.param(self.params[f"b{i}"])
            ys.append(ad.relu(z) if layer.activation == "relu" else z)
        return ys

    def physical_node(self, tape: ad.Tape, name: str) -> ad.Node:
        """Physical parameter (in physical units) as a 1x1 node."""
        idx = self.spec.trainable_physical_params.index(name)
        return ad.scale(tape.param(self.params[f"phys.{name}"]), self.physical_scale[idx])

    def _model_layer(self, tape: ad.Tape, v: ad.Node, x: ad.Node) -> ad.Node:
        kind = self.spec.model_layer_kind
        if kind == "geometry_integrator":
            c1, c2 = self.spec.length_columns
            l1, l2 = ad.columns(x, c1), ad.columns(x, c2)
            if self.spec.length_affine is not None:
                (s1, m1), (s2, m2) = self.spec.length_affine
                l1, l2 = ad.add(ad.scale(l1, s1), m1), ad.add(ad.scale(l2, s2), m2)
            return ad.columns(v, 0) * l1 + ad.columns(v, 1) * l2

        pipe = self.spec.pipe
        names = self.spec.trainable_physical_params
        if names:
            lam1, lam2, lam3 = (self.physical_node(tape, n) for n in names)
        else:
            ref = hazen_williams_reference(pipe) if kind == "hazen_williams" \
                else darcy_weisbach_reference(pipe)
            lam1, lam2, lam3 = (tape.const(r) for r in ref)
        v1, v2 = ad.columns(v, 1), ad.columns(v, 2)
        diff = v2 - v1
        # Bernoulli recovery plus Borda-Carnot loss, written in velocities.
        dpe = ad.scale(ad.square(v2) - ad.square(v1) + lam1 * ad.square(diff), 0.5 * pipe.rho)
        if kind == "hazen_williams":
            k1 = pipe.gamma * pipe.delta1
            k2 = pipe.gamma * pipe.delta2
            dp1 = lam2 * ad.scale(ad.signed_pow(ad.scale(v1, pipe.sigma1), pipe.hw_alpha), k1)
            dp2 = lam3 * ad.scale(ad.signed_pow(ad.scale(v2, pipe.sigma2), pipe.hw_alpha), k2)
        else:
            # Laminar friction f_D = 64 nu / (v phi) makes the drop linear in v.
            k1 = 32.0 * pipe.rho * pipe.delta1 / hydraulic_diameter(pipe.sigma1)
            k2 = 32.0 * pipe.rho * pipe.delta2 / hydraulic_diameter(pipe.sigma2)
            dp1 = lam2 * ad.scale(v1, k1)
            dp2 = lam3 * ad.scale(v2, k2)
        return ad.concat([dp1, dpe, dp2])


def build_network(spec: NetworkSpec, seed: int = 0) -> Network:
    """Allocate and initialize all parameters of ``spec``.

    Weights are Glorot-uniform, biases zero. Trainable physical parameters
    start at ``physical_init`` when given, otherwise at ``scale * U(0, 1]``.
    """
    validate_spec(spec)
    rng = np.random.default_rng(seed)
    params: dict[str, ad.Param] = {}
    sizes = spec.sizes()
    for i, layer in enumerate(spec.layers, start=1):
        if layer.activation == "model_layer":
            continue
        params[f"W{i}"] = ad.Param(f"W{i}", ad.glorot_uniform(rng, sizes[i - 1], sizes[i]))
        params[f"b{i}"] = ad.Param(f"b{i}", np.zeros((1, sizes[i])))
    net = Network(spec, params)
    if spec.is_model_based:
        scale = net.physical_scale
        if spec.physical_init is not None:
            init = [v / s for v, s in zip(spec.physical_init, scale)]
        else:
            init = 1.0 - rng.uniform(0.0, 1.0, size=len(scale))  # (0, 1]
        for name, v in zip(spec.trainable_physical_params, init):
            params[f"phys.{name}"] = ad.Param(f"phys.{name}", [[v]])
    return net


def center_relu_biases(network: Network, inputs) -> Network:
    """Data-dependent start: shift each ReLU layer's biases so every unit is
    active on half of ``inputs``.

    Layers are processed front to back, each seeing the already re-centred
    upstream layers. Guards against units that are dead from the first step,
    which a narrow ReLU layer (two units) hits for some seeds.
    """
    x = np.asarray(inputs, dtype=np.float64)
    for i, layer in enumerate(network.spec.layers, start=1):
        if layer.activation == "model_layer":
            break
        z = x @ network.params[f"W{i}"].value
        if layer.activation == "relu":
            network.params[f"b{i}"].value = -np.median(z, axis=0, keepdims=True)
        x = network.forward(ad.Tape(), np.asarray(inputs, dtype=np.float64))[i].value
    return network


# -- constraints ------------------------------------------------------------------

class ConstraintContext:
    """What a residual function may read: layer nodes, batch columns, physical params."""

    def __init__(self, tape: ad.Tape, network: Network, layers: Sequence[ad.Node],
                 aux: Mapping[str, np.ndarray]):
        self.tape = tape
        self.network = network
        self.layers = layers
        self._aux = aux
        self._aux_nodes: dict[str, ad.Node] = {}

    @property
    def input(self) -> ad.Node:
        return self.layers[0]

    @property
    def output(self) -> ad.Node:
        return self.layers[-1]

    def layer(self, i: int) -> ad.Node:
        return self.layers[i]

    def column(self, name: str) -> ad.Node:
        node = self._aux_nodes.get(name)
        if node is None:
            if name not in self._aux:
                raise ContractError(f"constraint needs batch column {name!r}, have {sorted(self._aux)}")
            node = self.tape.const(self._aux[name])
            self._aux_nodes[name] = node
        return node

    def param(self, name: str) -> ad.Node:
        return self.network.physical_node(self.tape, name)


@dataclass
class Constraint:
    """A residual ``R(ctx)`` of shape ``(rows, k)`` with penalty weight ``p``.

    Equality constraints contribute ``p * ||R||^2``, inequality constraints
    (``R <= 0``) contribute ``p * ||relu(R)||^2``; both are averaged over rows.
    """

    id: str
    residual: Callable[[ConstraintContext], ad.Node]
    layers: tuple[int, ...] = ()
    kind: str = "equality"
    penalty_weight: float = 1.0
    aux_columns: tuple[str, ...] = ()
    params: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("equality", "inequality"):
            raise ConfigurationError(f"constraint {self.id!r}: unknown kind {self.kind!r}")
        if not self.penalty_weight >= 0 or not math.isfinite(self.penalty_weight):
            raise ConfigurationError(
                f"constraint {self.id!r}: penalty weight must be finite and >= 0")
        self.layers = tuple(self.layers)

    def term(self, ctx: ConstraintContext) -> ad.Node:
        """Unweighted ``mean_rows ||R||^2`` (after relu for inequalities)."""
        r = self.residual(ctx)
        if self.kind == "inequality":
            r = ad.relu(r)
        return ad.scale(ad.sum_(ad.square(r)), 1.0 / r.shape[0])


def register_constraint(network: Network, constraint: Constraint) -> Network:
    depth = network.spec.depth
    bad = [i for i in constraint.layers if not 0 <= i <= depth]
    if bad:
        raise ConfigurationError(
            f"constraint {constraint.id!r} references unknown layers {bad} (network has 0..{depth})")
    known = set(network.spec.trainable_physical_params)
    missing = [p for p in constraint.params if p not in known]
    if missing:
        raise ConfigurationError(
            f"constraint {constraint.id!r} references unknown physical params {missing}")
    if any(c.id == constraint.id for c in network.constraints):
        raise ConfigurationError(f"constraint id {constraint.id!r} already registered")
    network.constraints.append(constraint)
    return network
