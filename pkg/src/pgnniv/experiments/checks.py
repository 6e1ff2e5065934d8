"""Pass/fail checks over experiment reports.

Each check returns a :class:`CheckResult` with the measured numbers in
``detail`` so a failing line says by how much it failed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .runner import Report

CONVERGENCE_ITERATION = 600
CONVERGENCE_WIN_FRACTION = 0.7
PIL_FLOW_TOL = 0.05
GEOMETRY_MEAN_TOL = 5e-2
GEOMETRY_MAX_TOL = 1.0
LAMBDA_TOL = 1e-2
DW_MIN_ERROR = 1e-1
NOISE_RATIO_BOUNDS = (0.5, 2.0)
EXTRAPOLATION_TOL = 1e-2
CHARACTERIZATION_TOL = 0.10


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def _ok(runs):
    return [r for r in runs if r.diverged_at is None]


def _majority(k: int, n: int) -> bool:
    return n > 0 and 2 * k > n


def convergence(report: Report) -> CheckResult:
    c = report.compare("constrained", "unconstrained")
    passed = (c.seeds_compared >= 10 and c.at == CONVERGENCE_ITERATION
              and c.win_fraction >= CONVERGENCE_WIN_FRACTION)
    return CheckResult("convergence acceleration (E1)", passed,
                       f"constrained lower smoothed RMSE at iteration {c.at} in "
                       f"{c.seed_wins}/{c.seeds_compared} seeds (need >= 70%, >= 10 seeds); "
                       f"excluded {list(c.excluded_seeds)}")


def pil_meaning(report: Report, variant: str = "constrained_stiff") -> CheckResult:
    runs = _ok(report.select(variant))
    worst = [r.metrics["pil_flow_rel_max"] for r in runs]
    passed = bool(runs) and max(worst) < PIL_FLOW_TOL
    return CheckResult("PIL physical meaning (E1)", passed,
                       f"max |v*S - q|/q over test range per seed: "
                       f"{', '.join(f'{w:.3g}' for w in worst)} (need < {PIL_FLOW_TOL})")


def geometry(report: Report) -> CheckResult:
    con = {r.seed: r for r in _ok(report.select("constrained"))}
    unc = {r.seed: r for r in _ok(report.select("constrained_unconstrained"))}
    seeds = sorted(set(con) & set(unc))
    good = []
    for s in seeds:
        c, u = con[s].metrics["rel_err"], unc[s].metrics["rel_err"]
        cmax = max(abs(c["min"]), abs(c["max"]))
        umax = max(abs(u["min"]), abs(u["max"]))
        if abs(c["mean"]) < GEOMETRY_MEAN_TOL and cmax < GEOMETRY_MAX_TOL and umax > cmax:
            good.append(s)
    med_mean = float(np.median([con[s].metrics["rel_err"]["mean"] for s in seeds])) if seeds else np.nan
    return CheckResult("geometry relative error (E2)", _majority(len(good), len(seeds)),
                       f"{len(good)}/{len(seeds)} seeds with |mean| < {GEOMETRY_MEAN_TOL}, "
                       f"max |err| < {GEOMETRY_MAX_TOL} and unconstrained max larger "
                       f"(seeds {good}); median constrained mean {med_mean:.3g}")


def identification(report: Report) -> CheckResult:
    hw = _ok(report.select("MB_HW"))
    dw = _ok(report.select("MB_DW"))
    hw_worst = [max(r.metrics["lambda_rel"].values()) for r in hw]
    dw_worst = [max(r.metrics["lambda_rel"].values()) for r in dw]
    passed = (bool(hw) and bool(dw) and max(hw_worst) < LAMBDA_TOL
              and min(dw_worst) > DW_MIN_ERROR)
    return CheckResult("model-based identification (E3)", passed,
                       f"MB_HW worst lambda rel. error per seed "
                       f"{', '.join(f'{w:.2g}' for w in hw_worst)} (need < {LAMBDA_TOL}); "
                       f"MB_DW worst {', '.join(f'{w:.2g}' for w in dw_worst)} (need > {DW_MIN_ERROR})")


def _final(runs, window):
    from .metrics import moving_average, rmse_curve
    return {r.seed: float(moving_average(rmse_curve(r.trace), window)[-1]) for r in _ok(runs)}


def noise(report: Report) -> CheckResult:
    w = report.config.window
    con1, unc1 = (_final(report.select(v, "sigma1"), w) for v in ("constrained", "unconstrained"))
    seeds = sorted(set(con1) & set(unc1))
    wins = sum(con1[s] < unc1[s] for s in seeds)
    con0, unc0 = (_final(report.select(v, "sigma0"), w) for v in ("constrained", "unconstrained"))
    ratio = float(np.mean(list(con0.values())) / np.mean(list(unc0.values()))) if con0 and unc0 else np.nan
    lo, hi = NOISE_RATIO_BOUNDS
    passed = len(seeds) >= 10 and _majority(wins, len(seeds)) and lo <= ratio <= hi
    return CheckResult("noise filtering (E6)", passed,
                       f"sigma=1: constrained final smoothed RMSE lower in {wins}/{len(seeds)} seeds "
                       f"(need majority of >= 10); sigma=0 RMSE ratio {ratio:.3g} (need in [{lo}, {hi}])")


def bias(report: Report) -> CheckResult:
    con = {r.seed: r.metrics["sum_signed_error"] for r in _ok(report.select("constrained"))}
    unc = {r.seed: r.metrics["sum_signed_error"]
           for r in _ok(report.select("constrained_unconstrained"))}
    seeds = sorted(set(con) & set(unc))
    wins = sum(abs(con[s]) < abs(unc[s]) for s in seeds)
    return CheckResult("bias correction (E6B)", _majority(wins, len(seeds)),
                       f"|mean signed error of dp1+dpe+dp2| smaller with the output-sum constraint in "
                       f"{wins}/{len(seeds)} seeds; mean {np.mean(list(con.values())):.3g} vs "
                       f"{np.mean(list(unc.values())):.3g}")


def extrapolation(report: Report) -> CheckResult:
    def v_err(variant):
        return {r.seed: (r.metrics["extrapolation"]["v1_rel"] + r.metrics["extrapolation"]["v2_rel"]) / 2
                for r in _ok(report.select(variant))}

    con, unc = v_err("MF"), v_err("MF_unconstrained")
    seeds = sorted(set(con) & set(unc))
    wins = sum(con[s] < unc[s] for s in seeds)
    hw = _ok(report.select("MB_HW"))
    keys = ("dp1_rel_max", "dpe_rel_max", "dp2_rel_max")
    hw_worst = [max(r.metrics["extrapolation"][k] for k in keys) for r in hw]
    passed = _majority(wins, len(seeds)) and bool(hw) and max(hw_worst) < EXTRAPOLATION_TOL
    return CheckResult("extrapolation to q in [5, 10] (E7)", passed,
                       f"MF constrained mean |err| on v1, v2 lower in {wins}/{len(seeds)} seeds "
                       f"({np.mean(list(con.values())):.3g} vs {np.mean(list(unc.values())):.3g}); "
                       f"MB_HW worst output |err| per seed {', '.join(f'{w:.2g}' for w in hw_worst)} "
                       f"(need < {EXTRAPOLATION_TOL})")


def characterization(report: Report) -> CheckResult:
    runs = _ok(report.select("constrained"))
    errs = [r.metrics["interior_mean_abs_rel"] for r in runs]
    passed = bool(runs) and max(errs) < CHARACTERIZATION_TOL
    return CheckResult("characterization accuracy (E4)", passed,
                       f"mean |err| of kappa in (90, 130) per seed "
                       f"{', '.join(f'{e:.3g}' for e in errs)} (need < {CHARACTERIZATION_TOL})")


CHECKS = {
    "E1": (convergence, pil_meaning),
    "E2": (geometry,),
    "E3": (identification, extrapolation),
    "E4": (characterization,),
    "E6": (noise,),
    "E6B": (bias,),
    "E7": (extrapolation,),
}


def run_checks(report: Report) -> list[CheckResult]:
    return [check(report) for check in CHECKS.get(report.config.id, ())]
