"""Closed-form head-loss model of a two-segment pipe with a sudden expansion.

Distributed losses follow Hazen-Williams, the expansion follows Borda-Carnot.
All functions accept scalars or numpy arrays for the flow ``q`` and are pure.
Units are SI; pressures in Pa.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import DomainError

HW_LAMBDA = 10.67
HW_ALPHA = 1.8520
HW_BETA = -4.8704


@dataclass(frozen=True)
class PipeParams:
    sigma1: float = 1.0
    sigma2: float = 2.0
    kappa1: float = 140.0
    kappa2: float = 140.0
    delta1: float = 10.0
    delta2: float = 10.0
    rho: float = 1.0
    g: float = 9.81
    xi: float = 1.0
    hw_lambda: float = HW_LAMBDA
    hw_alpha: float = HW_ALPHA
    hw_beta: float = HW_BETA
    nu: float = 1.0e-6

    def __post_init__(self):
        for name in ("sigma1", "sigma2", "delta1", "delta2", "kappa1", "kappa2", "g"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)}")
        if self.xi < 0:
            raise DomainError(f"xi must be non-negative, got {self.xi}")

    @property
    def gamma(self) -> float:
        """Specific weight rho*g."""
        return self.rho * self.g

    @property
    def areas(self) -> tuple[float, float, float]:
        """Cross sections at the three velocity stations; the inlet shares segment 1."""
        return (self.sigma1, self.sigma1, self.sigma2)

    def with_(self, **changes) -> "PipeParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


# Fixed-geometry prediction problem.
TABLE1 = PipeParams()
# Variable-geometry and characterization problems: equal sections, no expansion loss.
UNIFORM_PIPE = PipeParams(sigma1=1.0, sigma2=1.0, kappa1=140.0, kappa2=100.0, xi=0.0)


class SegmentDrops(NamedTuple):
    dp1: np.ndarray | float
    dpe: np.ndarray | float
    dp2: np.ndarray | float

    @property
    def total(self):
        return self.dp1 + self.dpe + self.dp2


def _positive(name: str, x) -> None:
    if np.any(np.asarray(x) <= 0):
        raise DomainError(f"{name} must be strictly positive")


def hydraulic_diameter(sigma):
    _positive("cross-section area", sigma)
    if np.ndim(sigma) == 0:
        return math.sqrt(4.0 * sigma / math.pi)
    return np.sqrt(4.0 * np.asarray(sigma, dtype=float) / math.pi)


def hazen_williams_slope(q, kappa, phi, hw_lambda=HW_LAMBDA, hw_alpha=HW_ALPHA,
                         hw_beta=HW_BETA):
    """Head loss per unit length, ``lambda * (q/kappa)**alpha * phi**beta``."""
    _positive("flow q", q)
    _positive("kappa", kappa)
    _positive("hydraulic diameter", phi)
    return hw_lambda * (np.asarray(q, dtype=float) / kappa) ** hw_alpha * phi ** hw_beta


def darcy_weisbach_slope(v, f_d, phi, g):
    if np.any(np.asarray(v) < 0):
        raise DomainError("velocity must be non-negative")
    _positive("hydraulic diameter", phi)
    return f_d * np.asarray(v, dtype=float) ** 2 / (2.0 * g * phi)


def laminar_friction_factor(v, phi, nu):
    """Darcy factor ``64 nu / (v phi)`` of laminar flow."""
    _positive("velocity", v)
    return 64.0 * nu / (np.asarray(v, dtype=float) * phi)


def borda_carnot_head_loss(v1, sigma1, sigma2, xi, g):
    if not sigma2 >= sigma1 > 0:
        raise DomainError(f"expansion requires sigma2 >= sigma1 > 0, got {sigma1}, {sigma2}")
    if np.any(np.asarray(v1) < 0):
        raise DomainError("velocity must be non-negative")
    return xi / (2.0 * g) * (1.0 - sigma1 / sigma2) ** 2 * np.asarray(v1, dtype=float) ** 2


def expansion_bracket(params: PipeParams) -> float:
    """``(1/S2^2 - 1/S1^2) + xi (1/S1 - 1/S2)^2``: Bernoulli recovery plus eddy loss."""
    s1, s2 = params.sigma1, params.sigma2
    return (1.0 / s2**2 - 1.0 / s1**2) + params.xi * (1.0 / s1 - 1.0 / s2) ** 2


def segment_pressure_drops(q, params: PipeParams = TABLE1) -> SegmentDrops:
    _positive("flow q", q)
    q = np.asarray(q, dtype=float) if np.ndim(q) else float(q)
    gamma = params.gamma
    phi1 = hydraulic_diameter(params.sigma1)
    phi2 = hydraulic_diameter(params.sigma2)
    dp1 = gamma * hazen_williams_slope(q, params.kappa1, phi1, params.hw_lambda,
                                       params.hw_alpha, params.hw_beta) * params.delta1
    dp2 = gamma * hazen_williams_slope(q, params.kappa2, phi2, params.hw_lambda,
                                       params.hw_alpha, params.hw_beta) * params.delta2
    dpe = 0.5 * params.rho * q**2 * expansion_bracket(params)
    return SegmentDrops(dp1, dpe, dp2)


def lambda_coefficients(params: PipeParams = TABLE1) -> tuple[float, float, float]:
    """Coefficients of the reduced law ``dp = l1 q**2 + l2 q**l3``.

    ``l2`` uses ``phi**beta = (4/pi)**(beta/2) * sigma**(beta/2)`` so that the
    reduced law reproduces the per-segment drops exactly.
    """
    l1 = 0.5 * params.rho * expansion_bracket(params)
    half_beta = params.hw_beta / 2.0
    geom = sum(
        sigma**half_beta * kappa ** (-params.hw_alpha) * delta
        for sigma, kappa, delta in (
            (params.sigma1, params.kappa1, params.delta1),
            (params.sigma2, params.kappa2, params.delta2),
        )
    )
    l2 = params.hw_lambda * params.gamma * (4.0 / math.pi) ** half_beta * geom
    return l1, l2, params.hw_alpha


def total_pressure_drop(q, params: PipeParams = TABLE1):
    _positive("flow q", q)
    l1, l2, l3 = lambda_coefficients(params)
    q = np.asarray(q, dtype=float) if np.ndim(q) else float(q)
    return l1 * q**2 + l2 * q**l3


def velocities(q, params: PipeParams = TABLE1) -> np.ndarray:
    """Mass conservation ``v_i = q / S_i`` at the three stations, one column each."""
    q = np.asarray(q, dtype=float).reshape(-1, 1)
    return q / np.asarray(params.areas).reshape(1, 3)


def roughness_from_observation(q, p0, p1, p2, params: PipeParams = UNIFORM_PIPE):
    """Invert the Hazen-Williams drops for the two roughness coefficients.

    ``kappa_i = (gamma*lambda*phi_i**beta*delta_i)**(1/alpha) * q * (p_{i-1}-p_i)**(-1/alpha)``
    """
    _positive("flow q", q)
    drops = (np.asarray(p0, dtype=float) - p1, np.asarray(p1, dtype=float) - p2)
    for i, d in enumerate(drops, start=1):
        if np.any(d <= 0):
            raise DomainError(f"pressure drop on segment {i} must be positive")
    inv_alpha = 1.0 / params.hw_alpha
    out = []
    for d, sigma, delta in zip(drops, (params.sigma1, params.sigma2), (params.delta1, params.delta2)):
        coef = (params.gamma * params.hw_lambda * hydraulic_diameter(sigma) ** params.hw_beta
                * delta) ** inv_alpha
        k = coef * np.asarray(q, dtype=float) * d ** (-inv_alpha)
        out.append(float(k) if np.ndim(k) == 0 else k)
    return tuple(out)


# -- golden values -----------------------------------------------------------

def golden_records() -> list[tuple[str, str, float]]:
    """(function, inputs, value) triples pinned in the golden file."""
    table1 = TABLE1
    phi_unit = hydraulic_diameter(1.0)
    recs = [
        ("hydraulic_diameter", "sigma=1", hydraulic_diameter(1.0)),
        ("hydraulic_diameter", "sigma=2", hydraulic_diameter(2.0)),
        ("hazen_williams_slope", "q=1 kappa=140 sigma=1", float(hazen_williams_slope(1.0, 140.0, phi_unit))),
        ("darcy_weisbach_slope", "v=2 f_d=0.02 phi=1 g=9.81", float(darcy_weisbach_slope(2.0, 0.02, 1.0, 9.81))),
        ("borda_carnot_head_loss", "v1=2 sigma1=1 sigma2=2 xi=1 g=9.81",
         float(borda_carnot_head_loss(2.0, 1.0, 2.0, 1.0, 9.81))),
    ]
    drops = segment_pressure_drops(2.0, table1)
    for name, val in zip(("dp1", "dpe", "dp2"), drops):
        recs.append((f"segment_pressure_drops.{name}", "table1 q=2", float(val)))
    for name, val in zip(("lambda1", "lambda2", "lambda3"), lambda_coefficients(table1)):
        recs.append((f"lambda_coefficients.{name}", "table1", float(val)))
    recs.append(("total_pressure_drop", "table1 q=2", float(total_pressure_drop(2.0, table1))))
    return recs


def write_golden(path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# function | inputs | expected (15 significant digits)"]
    lines += [f"{fn} | {inputs} | {value:.15g}" for fn, inputs, value in golden_records()]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_golden(path: str | Path) -> list[tuple[str, str, float]]:
    out = []
    for line in Path(path).read_text().splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        fn, inputs, value = (part.strip() for part in line.split("|"))
        out.append((fn, inputs, float(value)))
    return out
