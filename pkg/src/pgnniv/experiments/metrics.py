"""Scoring helpers: loss curves, smoothing, E_L2, relative-error statistics
and seed-wise comparison of two variants."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import simpson

from ..errors import ContractError
from ..training import TrainingTrace

L2_NODES = 1001


def rmse_curve(trace: TrainingTrace) -> np.ndarray:
    return np.sqrt(np.asarray(trace.mse, dtype=float))


def pen_curve(trace: TrainingTrace) -> np.ndarray:
    return np.asarray(trace.pen, dtype=float)


def moving_average(series, window: int) -> np.ndarray:
    """Centered moving average; near the ends the window is cut off.

    Entry ``i`` averages ``series[i - window//2 : i + (window-1)//2 + 1]``
    clipped to the valid range, so ``[0,1,2,3,4]`` with ``window=3`` gives
    ``[0.5, 1, 2, 3, 3.5]``.
    """
    if window < 1:
        raise ContractError(f"window must be >= 1, got {window}")
    x = np.asarray(series, dtype=float)
    n = x.size
    if n == 0:
        return x.copy()
    # Direct window sums (not a cumulative-sum difference) keep window=1 exact.
    ahead = (window - 1) // 2
    sums = np.convolve(x, np.ones(window))[ahead:ahead + n]
    i = np.arange(n)
    lo = np.maximum(0, i - window // 2)
    hi = np.minimum(n, i + ahead + 1)
    return sums / (hi - lo)


def l2_error(predictor: Callable[[np.ndarray], np.ndarray],
             oracle: Callable[[np.ndarray], np.ndarray],
             q_interval: tuple[float, float] = (0.0, 10.0), nodes: int = L2_NODES) -> float:
    """``sqrt(integral (predictor - oracle)^2 dq)`` by composite Simpson."""
    if nodes < 3 or nodes % 2 == 0:
        raise ContractError(f"Simpson quadrature needs an odd node count >= 3, got {nodes}")
    q = np.linspace(q_interval[0], q_interval[1], nodes)
    diff = np.ravel(predictor(q)) - np.ravel(oracle(q))
    return float(np.sqrt(simpson(diff * diff, x=q)))


STAT_KEYS = ("min", "Q1", "Q2", "Q3", "max", "mean", "stderr")


def relative_error_stats(predictions, truths) -> dict:
    """Summary of ``(pred - true) / true``; zero truths are skipped and counted."""
    pred = np.ravel(np.asarray(predictions, dtype=float))
    true = np.ravel(np.asarray(truths, dtype=float))
    if pred.shape != true.shape:
        raise ContractError(f"{pred.size} predictions vs {true.size} truths")
    keep = true != 0
    err = (pred[keep] - true[keep]) / true[keep]
    out = {"count": int(err.size), "exclusions": int((~keep).sum())}
    if err.size == 0:
        out.update({k: float("nan") for k in STAT_KEYS})
        return out
    q1, q2, q3 = np.percentile(err, [25, 50, 75])  # linear interpolation (type 7)
    stderr = float(np.std(err, ddof=1) / np.sqrt(err.size)) if err.size > 1 else 0.0
    out.update({"min": float(err.min()), "Q1": float(q1), "Q2": float(q2), "Q3": float(q3),
                "max": float(err.max()), "mean": float(err.mean()), "stderr": stderr})
    return out


@dataclass(frozen=True)
class Comparison:
    """How variant ``a`` fares against ``b`` on smoothed RMSE.

    ``ordering_fraction`` is the share of iterations where the seed-mean
    curve of ``a`` is below that of ``b`` (ties count one half);
    ``auc_ratio`` is area(a) / area(b); ``seed_wins`` counts seeds where
    ``a`` is lower at iteration ``at``.
    """

    ordering_fraction: float
    auc_ratio: float
    seed_wins: int
    seeds_compared: int
    excluded_seeds: tuple[int, ...]
    at: int

    @property
    def win_fraction(self) -> float:
        return self.seed_wins / self.seeds_compared if self.seeds_compared else float("nan")


def compare_runs(runs_a: Sequence, runs_b: Sequence, at: int | None = None,
                 window: int = 500) -> Comparison:
    """Compare two lists of run records (objects with ``seed``, ``trace``,
    ``diverged_at`` and ``grid``) paired by seed.

    Seeds where either side diverged are excluded and listed.
    """
    by_a = {r.seed: r for r in runs_a}
    by_b = {r.seed: r for r in runs_b}
    grids = {r.grid for r in list(runs_a) + list(runs_b)}
    if len(grids) > 1:
        raise ContractError(f"runs were evaluated on different grids: {sorted(grids)}")
    seeds = sorted(set(by_a) & set(by_b))
    excluded = tuple(s for s in seeds
                     if by_a[s].diverged_at is not None or by_b[s].diverged_at is not None)
    seeds = [s for s in seeds if s not in excluded]
    if not seeds:
        return Comparison(float("nan"), float("nan"), 0, 0, excluded, at or 0)
    curves_a = [moving_average(rmse_curve(by_a[s].trace), window) for s in seeds]
    curves_b = [moving_average(rmse_curve(by_b[s].trace), window) for s in seeds]
    lengths = {len(c) for c in curves_a + curves_b}
    if len(lengths) != 1:
        raise ContractError(f"trace lengths differ: {sorted(lengths)}")
    n = lengths.pop()
    at = n if at is None else at
    if not 1 <= at <= n:
        raise ContractError(f"iteration {at} outside 1..{n}")
    mean_a = np.mean(curves_a, axis=0)
    mean_b = np.mean(curves_b, axis=0)
    ordering = float(np.mean(np.where(mean_a < mean_b, 1.0, np.where(mean_a == mean_b, 0.5, 0.0))))
    area_b = float(np.sum(mean_b))
    auc = float(np.sum(mean_a)) / area_b if area_b > 0 else float("nan")
    wins = sum(ca[at - 1] < cb[at - 1] for ca, cb in zip(curves_a, curves_b))
    return Comparison(ordering, auc, int(wins), len(seeds), excluded, at)
