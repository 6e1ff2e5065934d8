"""Ready-made physical constraints for the pipe problems."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autodiff as ad
from .network import Constraint, ConstraintContext


def _affine(node: ad.Node, span_offset: tuple[float, float] | None) -> ad.Node:
    if span_offset is None:
        return node
    span, offset = span_offset
    return ad.add(ad.scale(node, span), offset)


def flow_conservation(layer: int, areas: Sequence[float], neurons: Sequence[int] | None = None,
                      q_column: int = 0, q_affine: tuple[float, float] | None = None,
                      penalty_weight: float = 0.01, id: str = "flow") -> Constraint:
    """Mass conservation ``v_i * S_i - q = 0`` on the velocity neurons of ``layer``.

    ``q_affine = (span, min)`` undoes a min-max scaling of the flow input.
    """
    areas_row = np.asarray(areas, dtype=float).reshape(1, -1)
    idx = list(range(areas_row.shape[1])) if neurons is None else list(neurons)

    def residual(ctx: ConstraintContext) -> ad.Node:
        v = ad.columns(ctx.layer(layer), idx)
        q = _affine(ad.columns(ctx.input, q_column), q_affine)
        return ad.sub(ad.mul(v, areas_row), q)

    return Constraint(id, residual, layers=(0, layer), penalty_weight=penalty_weight)


def pressure_drop_definition(layer: int, neurons: Sequence[int] = (2, 3),
                             pressure_columns: Sequence[int] = (1, 2, 3),
                             affines: Sequence[tuple[float, float] | None] | None = None,
                             penalty_weight: float = 0.001, id: str = "pressure") -> Constraint:
    """Segment drops ``dp_i - (p_{i-1} - p_i) = 0`` for consecutive pressure taps."""
    affines = list(affines) if affines is not None else [None] * len(pressure_columns)

    def residual(ctx: ConstraintContext) -> ad.Node:
        p = [_affine(ad.columns(ctx.input, c), a) for c, a in zip(pressure_columns, affines)]
        drops = ad.concat([p[k] - p[k + 1] for k in range(len(p) - 1)])
        return ad.columns(ctx.layer(layer), list(neurons)) - drops

    return Constraint(id, residual, layers=(0, layer), penalty_weight=penalty_weight)


def output_sum(total_column: str = "dp", penalty_weight: float = 0.01,
               id: str = "output_sum") -> Constraint:
    """The output neurons must add up to the separately measured total."""

    def residual(ctx: ConstraintContext) -> ad.Node:
        out = ctx.output
        ones = np.ones((out.shape[1], 1))
        return ad.sub(ad.matmul(out, ctx.tape.const(ones)), ctx.column(total_column))

    return Constraint(id, residual, layers=(), penalty_weight=penalty_weight,
                      aux_columns=(total_column,))


def nonnegative_parameter(name: str, penalty_weight: float = 1.0,
                          id: str | None = None) -> Constraint:
    """Inequality ``-lambda <= 0`` enforced with a relu penalty."""

    def residual(ctx: ConstraintContext) -> ad.Node:
        return ad.neg(ctx.param(name))

    return Constraint(id or f"nonneg_{name}", residual, kind="inequality",
                      penalty_weight=penalty_weight, params=(name,))
