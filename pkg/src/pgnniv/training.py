"""Penalty objective, gradient-descent training and post-training readouts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from . import autodiff as ad
from .datasets import Batch, Dataset
from .errors import ContractError, DivergenceError
from .network import ConstraintContext, Network

DIVERGENCE_BOUND = 1e12


class Objective(NamedTuple):
    tape: ad.Tape
    mse: ad.Node
    pen: ad.Node | None
    of: ad.Node
    layers: list[ad.Node]
    violation: float


class Losses(NamedTuple):
    mse: float
    pen: float
    of: float


def _weights(network: Network, overrides: Mapping[str, float] | float | None) -> list[float]:
    if overrides is None:
        return [c.penalty_weight for c in network.constraints]
    if isinstance(overrides, (int, float)):
        return [float(overrides)] * len(network.constraints)
    return [float(overrides.get(c.id, c.penalty_weight)) for c in network.constraints]


def objective(network: Network, batch: Batch,
              penalty_weights: Mapping[str, float] | float | None = None) -> Objective:
    """Build ``OF = MSE + PEN`` on a fresh tape.

    ``MSE = (1/N) sum_i ||y_i - Y(x_i)||^2`` and each constraint adds
    ``p_j * (1/N) sum_i ||R_j(x_i)||^2``. Constraints with ``p_j = 0`` are
    evaluated for monitoring (``violation``) but kept out of the graph.
    """
    inputs, targets, aux = batch
    n = inputs.shape[0]
    if n == 0:
        raise ContractError("empty batch")
    if targets.shape[0] != n:
        raise ContractError(f"batch has {n} inputs but {targets.shape[0]} targets")
    tape = ad.Tape()
    layers = network.forward(tape, inputs)
    out = layers[-1]
    if out.shape != targets.shape:
        raise ContractError(f"network output shape {out.shape} != target shape {targets.shape}")
    mse = ad.scale(ad.sum_(ad.square(ad.sub(out, targets))), 1.0 / n)

    ctx = ConstraintContext(tape, network, layers, aux)
    pen = None
    violation = 0.0
    for c, p in zip(network.constraints, _weights(network, penalty_weights)):
        term = c.term(ctx)
        violation += float(term.value[0, 0])
        if p == 0.0:
            continue
        weighted = ad.scale(term, p)
        pen = weighted if pen is None else ad.add(pen, weighted)
    of = mse if pen is None else ad.add(mse, pen)
    return Objective(tape, mse, pen, of, layers, violation)


def loss(network: Network, batch: Batch,
         penalty_weights: Mapping[str, float] | float | None = None) -> Losses:
    obj = objective(network, batch, penalty_weights)
    pen = 0.0 if obj.pen is None else float(obj.pen.value[0, 0])
    return Losses(float(obj.mse.value[0, 0]), pen, float(obj.of.value[0, 0]))


@dataclass(frozen=True)
class TrainConfig:
    iterations: int
    batch_size: int
    learning_rate: float
    penalty_weights: Mapping[str, float] | float | None = None
    seed: int = 0
    divergence_bound: float = DIVERGENCE_BOUND

    def __post_init__(self):
        if self.iterations < 1 or self.batch_size < 1 or not self.learning_rate > 0:
            raise ContractError(
                "iterations, batch_size and learning_rate must be positive, got "
                f"{self.iterations}, {self.batch_size}, {self.learning_rate}")


@dataclass
class TrainingTrace:
    """Per-iteration ``(MSE, PEN, OF)`` plus the unweighted constraint violation."""

    iteration: list[int] = field(default_factory=list)
    mse: list[float] = field(default_factory=list)
    pen: list[float] = field(default_factory=list)
    of: list[float] = field(default_factory=list)
    violation: list[float] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    diverged_at: int | None = None

    def __len__(self) -> int:
        return len(self.iteration)

    def append(self, it: int, mse: float, pen: float, of: float, violation: float) -> None:
        self.iteration.append(it)
        self.mse.append(mse)
        self.pen.append(pen)
        self.of.append(of)
        self.violation.append(violation)

    def to_csv(self) -> str:
        lines = ["iteration,MSE,PEN,OF,violation"]
        lines += [f"{i},{m:.17g},{p:.17g},{o:.17g},{v:.17g}"
                  for i, m, p, o, v in zip(self.iteration, self.mse, self.pen, self.of,
                                           self.violation)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "TrainingTrace":
        trace = cls()
        for line in text.strip().splitlines()[1:]:
            i, m, p, o, v = line.split(",")
            trace.append(int(i), float(m), float(p), float(o), float(v))
        return trace


def train(network: Network, dataset: Dataset | Batch, hyper: TrainConfig) -> TrainingTrace:
    """Minibatch gradient descent on ``OF``.

    Each iteration samples ``batch_size`` records uniformly with replacement
    from a generator seeded by ``hyper.seed``. Raises :class:`DivergenceError`
    when OF turns non-finite or exceeds ``hyper.divergence_bound``; the
    partial trace is attached as ``exc.trace``.
    """
    full = dataset.batch() if isinstance(dataset, Dataset) else dataset
    m = full.inputs.shape[0]
    if m == 0:
        raise ContractError("cannot train on an empty dataset")
    rng = np.random.default_rng(hyper.seed)
    params = list(network.params.values())
    trace = TrainingTrace()
    for it in range(1, hyper.iterations + 1):
        idx = rng.integers(0, m, size=hyper.batch_size)
        batch = Batch(full.inputs[idx], full.targets[idx], {k: v[idx] for k, v in full.aux.items()})
        obj = objective(network, batch, hyper.penalty_weights)
        of = float(obj.of.value[0, 0])
        mse = float(obj.mse.value[0, 0])
        pen = 0.0 if obj.pen is None else float(obj.pen.value[0, 0])
        trace.append(it, mse, pen, of, obj.violation)
        if not math.isfinite(of) or of > hyper.divergence_bound:
            trace.diverged_at = it
            err = DivergenceError(it, of)
            err.trace = trace
            raise err
        grads = ad.backward(obj.tape, obj.of, params=params)
        ad.sgd_step(params, grads, hyper.learning_rate)
    return trace


def predict(network: Network, inputs) -> tuple[np.ndarray, dict[int, np.ndarray]]:
    """Forward pass returning the output layer and every PIL layer value."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, network.spec.input_size)
    if x.ndim != 2 or x.shape[1] != network.spec.input_size:
        raise ContractError(f"expected inputs with {network.spec.input_size} columns, got {x.shape}")
    layers = network.forward(ad.Tape(), x)
    pils = {i: layers[i].value.copy() for i in sorted(network.spec.pil_markers)}
    return layers[-1].value.copy(), pils


def extract_parameters(network: Network) -> dict[str, float]:
    if not network.spec.is_model_based:
        raise ContractError("network has no trainable physical parameters")
    return network.physical_values()


@dataclass(frozen=True)
class StateTable:
    columns: tuple[str, ...]
    rows: np.ndarray

    def __len__(self) -> int:
        return self.rows.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        lines += [",".join(f"{v:.17g}" for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"


def export_state_relation(network: Network, probe_inputs,
                          input_names: Sequence[str] | None = None,
                          output_names: Sequence[str] | None = None) -> StateTable:
    """Tabulate ``(input, PIL values, output)`` at each probe point."""
    spec = network.spec
    input_names = list(input_names or [f"x{j}" for j in range(spec.input_size)])
    out_size = spec.layers[-1].size
    output_names = list(output_names or [f"y{j}" for j in range(out_size)])
    pil_names = [f"pil{i}_{j}" for i in sorted(spec.pil_markers)
                 for j in range(spec.sizes()[i])]
    columns = tuple(input_names + pil_names + output_names)
    probes = np.asarray(probe_inputs, dtype=np.float64).reshape(-1, spec.input_size)
    if probes.shape[0] == 0:
        return StateTable(columns, np.empty((0, len(columns))))
    out, pils = predict(network, probes)
    blocks = [probes] + [pils[i] for i in sorted(pils)] + [out]
    return StateTable(columns, np.hstack(blocks))
