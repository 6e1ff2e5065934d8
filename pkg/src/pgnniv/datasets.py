"""Synthetic data sets drawn from the hydraulics oracle, plus perturbation,
min-max scaling and a plain-text file format.

A :class:`Dataset` is an immutable table. Each column has a role:

* ``input``  -- fed to the network,
* ``target`` -- compared with the network output in the MSE,
* ``aux``    -- carried along for constraints or evaluation (e.g. the measured
  total drop, or the true internal velocities).

Only columns flagged ``measured`` receive noise or bias.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from . import hydraulics as hyd
from .errors import ConfigurationError, ContractError, ParseError, SchemaError

FORMAT_TAG = "pgnniv-dataset v1"
ROLES = ("input", "target", "aux")


@dataclass(frozen=True)
class Column:
    name: str
    unit: str
    role: str
    measured: bool = True

    def __post_init__(self):
        if self.role not in ROLES:
            raise SchemaError(f"column {self.name!r}: unknown role {self.role!r}")


class Batch(NamedTuple):
    inputs: np.ndarray
    targets: np.ndarray
    aux: Mapping[str, np.ndarray]


@dataclass(frozen=True, eq=False)
class Dataset:
    schema: tuple[Column, ...]
    data: np.ndarray
    provenance: Mapping = field(default_factory=dict)

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64).reshape(-1, len(self.schema))
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "schema", tuple(self.schema))
        names = [c.name for c in self.schema]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate column names in {names}")

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.schema]

    def _index(self, role: str) -> list[int]:
        return [i for i, c in enumerate(self.schema) if c.role == role]

    @property
    def input_names(self) -> list[str]:
        return [self.schema[i].name for i in self._index("input")]

    @property
    def target_names(self) -> list[str]:
        return [self.schema[i].name for i in self._index("target")]

    @property
    def inputs(self) -> np.ndarray:
        return self.data[:, self._index("input")]

    @property
    def targets(self) -> np.ndarray:
        return self.data[:, self._index("target")]

    @property
    def records(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return list(zip(self.inputs, self.targets))

    def column(self, name: str) -> np.ndarray:
        try:
            i = self.names.index(name)
        except ValueError:
            raise SchemaError(f"no column named {name!r}; have {self.names}") from None
        return self.data[:, i]

    def batch(self, idx=None) -> Batch:
        rows = self.data if idx is None else self.data[idx]
        aux = {self.schema[i].name: rows[:, i:i + 1] for i in self._index("aux")}
        return Batch(rows[:, self._index("input")], rows[:, self._index("target")], aux)

    def replace_data(self, data: np.ndarray, **provenance_update) -> "Dataset":
        prov = dict(self.provenance)
        prov.update(provenance_update)
        return Dataset(self.schema, data, prov)

    def equals(self, other: "Dataset") -> bool:
        return (self.schema == other.schema and self.data.shape == other.data.shape
                and bool(np.array_equal(self.data, other.data)))


def _check_range(name: str, rng: Sequence[float], positive: bool = False) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in rng)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{name} must be a (low, high) pair, got {rng!r}") from None
    if not hi > lo:
        raise ConfigurationError(f"{name} must satisfy low < high, got {rng!r}")
    if positive and lo <= 0:
        raise ConfigurationError(f"{name} must be strictly positive, got {rng!r}")
    return lo, hi


def _check_size(M) -> int:
    if int(M) != M or M < 1:
        raise ConfigurationError(f"dataset size M must be a positive integer, got {M!r}")
    return int(M)


def generate_prediction_dataset(M: int, q_range=(1.0, 5.0), params: hyd.PipeParams = hyd.TABLE1,
                                seed: int = 0, targets: str = "total") -> Dataset:
    """Flow ``q`` drawn uniformly; targets are the total drop or the three segment drops.

    ``targets="segments"`` also carries the measured total drop ``dp`` and the
    true station velocities ``v0, v1, v2`` as aux columns.
    """
    M = _check_size(M)
    lo, hi = _check_range("q_range", q_range, positive=True)
    if targets not in ("total", "segments"):
        raise ConfigurationError(f"targets must be 'total' or 'segments', got {targets!r}")
    rng = np.random.default_rng(seed)
    q = rng.uniform(lo, hi, size=M)
    vel = hyd.velocities(q, params)
    prov = {"generator": "prediction", "M": M, "q_range": [lo, hi], "params": params.to_dict(),
            "seed": seed, "targets": targets}
    vel_cols = [Column(f"v{i}", "m/s", "aux", measured=False) for i in range(3)]
    if targets == "total":
        schema = [Column("q", "m3/s", "input"), Column("dp", "Pa", "target"), *vel_cols]
        data = np.column_stack([q, hyd.total_pressure_drop(q, params), vel])
    else:
        drops = hyd.segment_pressure_drops(q, params)
        schema = [Column("q", "m3/s", "input"), Column("dp1", "Pa", "target"),
                  Column("dpe", "Pa", "target"), Column("dp2", "Pa", "target"),
                  Column("dp", "Pa", "aux"), *vel_cols]
        data = np.column_stack([q, drops.dp1, drops.dpe, drops.dp2,
                                hyd.total_pressure_drop(q, params), vel])
    return Dataset(tuple(schema), data, prov)


def _geometry_table(q, l1, l2, params: hyd.PipeParams) -> np.ndarray:
    gamma = params.gamma
    w1 = gamma * hyd.hazen_williams_slope(q, params.kappa1, hyd.hydraulic_diameter(params.sigma1),
                                          params.hw_lambda, params.hw_alpha, params.hw_beta)
    w2 = gamma * hyd.hazen_williams_slope(q, params.kappa2, hyd.hydraulic_diameter(params.sigma2),
                                          params.hw_lambda, params.hw_alpha, params.hw_beta)
    dpe = 0.5 * params.rho * q**2 * hyd.expansion_bracket(params)
    dp = w1 * l1 + dpe + w2 * l2
    return np.column_stack([q, l1, l2, dp, w1, w2])


GEOMETRY_SCHEMA = (
    Column("q", "m3/s", "input"), Column("l1", "m", "input"), Column("l2", "m", "input"),
    Column("dp", "Pa", "target"),
    Column("w1", "Pa/m", "aux", measured=False), Column("w2", "Pa/m", "aux", measured=False),
)


def generate_geometry_dataset(M: int, q_range=(1.0, 5.0), length_range=(0.0, 10.0),
                              params: hyd.PipeParams = hyd.UNIFORM_PIPE, seed: int = 0) -> Dataset:
    """Records ``(q, l1, l2) -> dp`` with the segment lengths as inputs.

    ``params.delta1/delta2`` are ignored; the lengths come from the record.
    A record with ``l1 = l2 = 0`` (and no expansion loss) has ``dp = 0``.
    """
    M = _check_size(M)
    qlo, qhi = _check_range("q_range", q_range, positive=True)
    llo, lhi = _check_range("length_range", length_range)
    if llo < 0:
        raise ConfigurationError(f"lengths must be non-negative, got {length_range!r}")
    rng = np.random.default_rng(seed)
    q = rng.uniform(qlo, qhi, size=M)
    l1 = rng.uniform(llo, lhi, size=M)
    l2 = rng.uniform(llo, lhi, size=M)
    prov = {"generator": "geometry", "M": M, "q_range": [qlo, qhi], "length_range": [llo, lhi],
            "params": params.to_dict(), "seed": seed}
    return Dataset(GEOMETRY_SCHEMA, _geometry_table(q, l1, l2, params), prov)


def geometry_grid(n: int = 100, q_range=(1.0, 5.0), length_range=(0.0, 10.0),
                  params: hyd.PipeParams = hyd.UNIFORM_PIPE) -> Dataset:
    """Full ``n x n x n`` tensor grid over ``(q, l1, l2)``, endpoints included."""
    qs = np.linspace(*_check_range("q_range", q_range, positive=True), n)
    ls = np.linspace(*_check_range("length_range", length_range), n)
    Q, L1, L2 = (a.ravel() for a in np.meshgrid(qs, ls, ls, indexing="ij"))
    prov = {"generator": "geometry_grid", "n": n, "q_range": list(q_range),
            "length_range": list(length_range), "params": params.to_dict()}
    return Dataset(GEOMETRY_SCHEMA, _geometry_table(Q, L1, L2, params), prov)


CHARACTERIZATION_SCHEMA = (
    Column("q", "m3/s", "input"), Column("p0", "Pa", "input"), Column("p1", "Pa", "input"),
    Column("p2", "Pa", "input"),
    Column("kappa1", "1", "target", measured=False), Column("kappa2", "1", "target", measured=False),
)


def generate_characterization_dataset(M: int, q_range=(1.0, 5.0), kappa_range=(80.0, 140.0),
                                      params: hyd.PipeParams = hyd.UNIFORM_PIPE, seed: int = 0,
                                      outlet_range=(0.0, 1.0)) -> Dataset:
    """Records ``(q, p0, p1, p2) -> (kappa1, kappa2)`` with per-record roughness.

    The outlet pressure ``p2`` is drawn from ``outlet_range``; upstream
    pressures follow from the segment drops.
    """
    M = _check_size(M)
    qlo, qhi = _check_range("q_range", q_range, positive=True)
    klo, khi = _check_range("kappa_range", kappa_range, positive=True)
    olo, ohi = _check_range("outlet_range", outlet_range)
    rng = np.random.default_rng(seed)
    q = rng.uniform(qlo, qhi, size=M)
    k1 = rng.uniform(klo, khi, size=M)
    k2 = rng.uniform(klo, khi, size=M)
    p2 = rng.uniform(olo, ohi, size=M)
    phi1, phi2 = hyd.hydraulic_diameter(params.sigma1), hyd.hydraulic_diameter(params.sigma2)
    gamma = params.gamma
    dp1 = gamma * hyd.hazen_williams_slope(q, k1, phi1, params.hw_lambda, params.hw_alpha,
                                           params.hw_beta) * params.delta1
    dp2 = gamma * hyd.hazen_williams_slope(q, k2, phi2, params.hw_lambda, params.hw_alpha,
                                           params.hw_beta) * params.delta2
    p1 = p2 + dp2
    p0 = p1 + dp1
    prov = {"generator": "characterization", "M": M, "q_range": [qlo, qhi],
            "kappa_range": [klo, khi], "outlet_range": [olo, ohi], "params": params.to_dict(),
            "seed": seed}
    return Dataset(CHARACTERIZATION_SCHEMA, np.column_stack([q, p0, p1, p2, k1, k2]), prov)


# -- perturbations -------------------------------------------------------------

def _measured(dataset: Dataset) -> list[int]:
    return [i for i, c in enumerate(dataset.schema) if c.measured]


def add_noise(dataset: Dataset, sigma: float, seed: int = 0) -> Dataset:
    """Independent ``N(0, sigma)`` perturbation of every measured column."""
    if sigma < 0:
        raise ContractError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return dataset.replace_data(dataset.data.copy(),
                                    perturbations=[*dataset.provenance.get("perturbations", []),
                                                   {"noise": 0.0, "seed": seed}])
    cols = _measured(dataset)
    rng = np.random.default_rng(seed)
    data = dataset.data.copy()
    data[:, cols] += rng.normal(0.0, sigma, size=(len(dataset), len(cols)))
    return dataset.replace_data(data, perturbations=[*dataset.provenance.get("perturbations", []),
                                                     {"noise": float(sigma), "seed": seed}])


def add_bias(dataset: Dataset, b: float) -> Dataset:
    """Add the constant ``b`` to every measured column."""
    cols = _measured(dataset)
    data = dataset.data.copy()
    data[:, cols] += b
    return dataset.replace_data(data, perturbations=[*dataset.provenance.get("perturbations", []),
                                                     {"bias": float(b)}])


GENERATORS = {
    "prediction": generate_prediction_dataset,
    "geometry": generate_geometry_dataset,
    "characterization": generate_characterization_dataset,
}


def regenerate(provenance: Mapping) -> Dataset:
    """Rebuild a data set from its provenance block."""
    prov = dict(provenance)
    gen = prov.pop("generator")
    params = hyd.PipeParams(**prov.pop("params"))
    perturbations = prov.pop("perturbations", [])
    if gen == "geometry_grid":
        ds = geometry_grid(prov["n"], prov["q_range"], prov["length_range"], params)
    elif gen in GENERATORS:
        ds = GENERATORS[gen](params=params, **prov)
    else:
        raise ConfigurationError(f"unknown generator {gen!r}")
    for step in perturbations:
        if "noise" in step:
            ds = add_noise(ds, step["noise"], step["seed"])
        else:
            ds = add_bias(ds, step["bias"])
    return ds


# -- min-max scaling -------------------------------------------------------------

@dataclass(frozen=True)
class Scaling:
    """Per-column ``(min, max)`` used by :func:`normalize_minmax`."""

    bounds: Mapping[str, tuple[float, float]]

    def normalize(self, values: np.ndarray, names: Sequence[str]) -> np.ndarray:
        lo, span = self._arrays(names)
        return (np.asarray(values, dtype=float) - lo) / span

    def denormalize(self, values: np.ndarray, names: Sequence[str]) -> np.ndarray:
        lo, span = self._arrays(names)
        return np.asarray(values, dtype=float) * span + lo

    def affine(self, name: str) -> tuple[float, float]:
        """``(span, min)`` such that ``physical = span * normalized + min``."""
        lo, hi = self.bounds[name]
        return hi - lo, lo

    def _arrays(self, names):
        lo = np.array([self.bounds[n][0] for n in names])
        hi = np.array([self.bounds[n][1] for n in names])
        return lo, hi - lo

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in self.bounds.items()}


def normalize_minmax(dataset: Dataset, scaling: Scaling | None = None,
                     columns: Sequence[str] | None = None) -> tuple[Dataset, Scaling]:
    """Map columns to ``[0, 1]`` via ``(x - min) / (max - min)``.

    ``columns`` restricts the scaling (default: every column). Pass an
    existing ``scaling`` to apply training-set bounds to another set; its
    columns are then the ones transformed.
    """
    if scaling is None:
        names = list(dataset.names) if columns is None else list(columns)
        bounds = {}
        for name in names:
            col = dataset.column(name)
            lo, hi = float(col.min()), float(col.max())
            if not hi > lo:
                raise ContractError(f"column {name!r} is constant; min-max scale is degenerate")
            bounds[name] = (lo, hi)
        scaling = Scaling(bounds)
    return dataset.replace_data(_apply(dataset, scaling, scaling.normalize), normalized=True), scaling


def denormalize(dataset: Dataset, scaling: Scaling) -> Dataset:
    return dataset.replace_data(_apply(dataset, scaling, scaling.denormalize), normalized=False)


def _apply(dataset: Dataset, scaling: Scaling, fn) -> np.ndarray:
    names = [n for n in dataset.names if n in scaling.bounds]
    idx = [dataset.names.index(n) for n in names]
    data = np.array(dataset.data, dtype=float)
    data[:, idx] = fn(data[:, idx], names)
    return data


# -- persistence ---------------------------------------------------------------

def _column_header(c: Column) -> str:
    return f"{c.name}[{c.unit}]"


def dumps(dataset: Dataset) -> str:
    buf = io.StringIO()
    buf.write(f"# {FORMAT_TAG}\n")
    buf.write(f"# provenance: {json.dumps(dataset.provenance, sort_keys=True)}\n")
    buf.write("# roles: " + ",".join(c.role for c in dataset.schema) + "\n")
    buf.write("# measured: " + ",".join("1" if c.measured else "0" for c in dataset.schema) + "\n")
    buf.write(",".join(_column_header(c) for c in dataset.schema) + "\n")
    for row in dataset.data:
        buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
    return buf.getvalue()


def save(dataset: Dataset, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(dataset))
    return path


def _parse_header_cell(cell: str, lineno: int) -> tuple[str, str]:
    cell = cell.strip()
    if not cell.endswith("]") or "[" not in cell:
        raise ParseError(f"column header {cell!r} must look like name[unit]", lineno)
    name, unit = cell[:-1].split("[", 1)
    return name, unit


def loads(text: str, require: Iterable[str] = ()) -> Dataset:
    lines = text.splitlines()
    meta: dict[str, str] = {}
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        body = lines[i][1:].strip()
        if i == 0:
            if body != FORMAT_TAG:
                raise ParseError(f"expected format tag {FORMAT_TAG!r}, got {body!r}", 1)
        elif ":" in body:
            key, value = body.split(":", 1)
            meta[key.strip()] = value.strip()
        i += 1
    if i == 0:
        raise ParseError(f"missing format tag {FORMAT_TAG!r}", 1)
    for key in ("provenance", "roles", "measured"):
        if key not in meta:
            raise ParseError(f"missing '# {key}:' header line", i)
    if i >= len(lines):
        raise ParseError("missing column header row", i + 1)
    try:
        provenance = json.loads(meta["provenance"])
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad provenance block: {exc}", 2) from None
    roles = meta["roles"].split(",")
    measured = meta["measured"].split(",")
    header = [_parse_header_cell(c, i + 1) for c in lines[i].split(",")]
    if len(roles) != len(header) or len(measured) != len(header):
        raise ParseError(f"header declares {len(header)} columns but roles/measured list "
                         f"{len(roles)}/{len(measured)}", i + 1)
    schema = tuple(Column(n, u, r, m == "1") for (n, u), r, m in zip(header, roles, measured))
    names = [c.name for c in schema]
    for req in require:
        if req not in names:
            raise SchemaError(f"missing required column {req!r}")
    rows = []
    for lineno, line in enumerate(lines[i + 1:], start=i + 2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != len(schema):
            raise ParseError(f"expected {len(schema)} fields, got {len(fields)}", lineno)
        try:
            rows.append([float(f) for f in fields])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    data = np.array(rows, dtype=np.float64).reshape(-1, len(schema))
    return Dataset(schema, data, provenance)


def load(path: str | Path, require: Iterable[str] = ()) -> Dataset:
    return loads(Path(path).read_text(), require)
