"""Input space definition, min-max scaling and Latin hypercube sampling.

All sampling uses ``numpy.random.Generator`` with the PCG64 bit generator,
seeded explicitly. Nothing here touches global RNG state.
"""
from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataFormatError, DegenerateScaleError, DomainError, EmptyDesignError, ValidationError

N_INPUTS = 12
N_OUTPUTS = 6
INPUT_NAMES = tuple(f"x{i}" for i in range(1, N_INPUTS + 1))
OUTPUT_NAMES = tuple(f"y{j}" for j in range(1, N_OUTPUTS + 1))


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator for an explicit integer seed (or seed sequence)."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    kind: str  # "continuous" or "integer"
    low: float
    high: float
    unit: str = ""
    description: str = ""

    def __post_init__(self):
        if self.kind not in ("continuous", "integer"):
            raise ValidationError(f"{self.name}: unknown kind {self.kind!r}")
        if not (np.isfinite(self.low) and np.isfinite(self.high)) or not self.low < self.high:
            raise ValidationError(f"{self.name}: need low < high, got [{self.low}, {self.high}]")
        if self.kind == "integer" and (int(self.low) != self.low or int(self.high) != self.high):
            raise ValidationError(f"{self.name}: integer bounds must be integral")

    @property
    def is_integer(self) -> bool:
        return self.kind == "integer"


@dataclass(frozen=True)
class ParameterSpace:
    params: tuple

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        if len(self.params) != N_INPUTS:
            raise ValidationError(f"expected {N_INPUTS} parameters, got {len(self.params)}")
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValidationError("parameter names must be unique")

    def __len__(self):
        return len(self.params)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    @property
    def low(self) -> np.ndarray:
        return np.array([p.low for p in self.params], dtype=float)

    @property
    def high(self) -> np.ndarray:
        return np.array([p.high for p in self.params], dtype=float)

    @property
    def integer_mask(self) -> np.ndarray:
        return np.array([p.is_integer for p in self.params])

    def normalize(self, X) -> np.ndarray:
        """Map physical values to [0, 1] using the box bounds."""
        return (np.asarray(X, dtype=float) - self.low) / (self.high - self.low)

    def to_dict(self) -> dict:
        return {"params": [dataclasses.asdict(p) for p in self.params]}

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterSpace":
        try:
            entries = d["params"]
            params = [
                ParameterSpec(
                    name=e["name"], kind=e["kind"], low=float(e["low"]), high=float(e["high"]),
                    unit=e.get("unit", ""), description=e.get("description", ""),
                )
                for e in entries
            ]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed parameter space: {exc}") from exc
        return cls(tuple(params))

    @classmethod
    def from_json(cls, path) -> "ParameterSpace":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_json(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def default_space() -> ParameterSpace:
    """The twelve floating-zone inputs with their published ranges."""
    text = resources.files("fzmoo.data").joinpath("parameter_space.json").read_text(encoding="utf-8")
    return ParameterSpace.from_dict(json.loads(text))


@dataclass(frozen=True)
class DesignMatrix:
    rows: np.ndarray
    seed: int | None = None

    def __len__(self):
        return self.rows.shape[0]


def _unit_to_values(spec: ParameterSpec, u: np.ndarray) -> np.ndarray:
    if spec.is_integer:
        n_levels = int(spec.high - spec.low) + 1
        return np.minimum(np.floor(u * n_levels) + spec.low, spec.high)
    return spec.low + u * (spec.high - spec.low)


def lhs_unit(n_dims: int, s: int, rng: np.random.Generator, midpoint: bool = False) -> np.ndarray:
    """Latin hypercube on the unit cube: one point per stratum in every column."""
    out = np.empty((s, n_dims))
    for j in range(n_dims):
        perm = rng.permutation(s)
        offset = 0.5 if midpoint else rng.random(s)
        out[:, j] = (perm + offset) / s
    return out


def lhs_sample(space: ParameterSpace, s: int, seed: int, midpoint: bool = False) -> DesignMatrix:
    """Draw ``s`` Latin hypercube samples from ``space`` in physical units.

    Each column is split into ``s`` equal strata of the unit interval and
    every stratum receives exactly one point; rows are paired by an
    independent random permutation per column. Integer parameters are
    stratified on the unit interval too and then mapped to equal-width
    level bins (``floor(u * n_levels) + low``). With ``midpoint=True`` the
    in-stratum jitter is replaced by the stratum centre.
    """
    if not isinstance(space, ParameterSpace):
        raise ValidationError("space must be a ParameterSpace")
    if s < 1:
        raise EmptyDesignError(f"need at least one sample, got s={s}")
    rng = make_rng(seed)
    u = lhs_unit(len(space), s, rng, midpoint=midpoint)
    rows = np.column_stack([_unit_to_values(p, u[:, j]) for j, p in enumerate(space.params)])
    return DesignMatrix(rows=rows, seed=seed)


def check_point(space: ParameterSpace, x) -> list[str]:
    """Return a list of problems with ``x`` (empty when the point is valid)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (len(space),):
        raise ValidationError(f"expected a vector of {len(space)} entries, got shape {x.shape}")
    problems = []
    for p, v in zip(space.params, x):
        if not np.isfinite(v) or v < p.low or v > p.high:
            problems.append(f"{p.name}={v:g} outside [{p.low:g}, {p.high:g}] {p.unit}".rstrip())
        elif p.is_integer and v != np.floor(v):
            problems.append(f"{p.name}={v:g} is not an integer")
    return problems


def validate_point(space: ParameterSpace, x) -> bool:
    return not check_point(space, x)


def require_point(space: ParameterSpace, x):
    problems = check_point(space, x)
    if problems:
        raise DomainError("; ".join(problems))


def in_box(space: ParameterSpace, X) -> np.ndarray:
    """Vectorised validity check for a matrix of points."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != len(space):
        raise ValidationError(f"expected {len(space)} columns, got {X.shape[1]}")
    ok = np.all((X >= space.low) & (X <= space.high) & np.isfinite(X), axis=1)
    integral = np.all(~space.integer_mask | (X == np.floor(X)), axis=1)
    return ok & integral


# --- scaling ---------------------------------------------------------------

@dataclass
class Scaler:
    x_min: np.ndarray
    x_max: np.ndarray
    y_min: np.ndarray
    y_max: np.ndarray

    def __post_init__(self):
        for name in ("x_min", "x_max", "y_min", "y_max"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(self.x_max <= self.x_min) or np.any(self.y_max <= self.y_min):
            raise DegenerateScaleError("scaler needs max > min in every column")

    def transform_x(self, X):
        return (np.asarray(X, dtype=float) - self.x_min) / (self.x_max - self.x_min)

    def inverse_x(self, Z):
        return np.asarray(Z, dtype=float) * (self.x_max - self.x_min) + self.x_min

    def transform_y(self, Y):
        return (np.asarray(Y, dtype=float) - self.y_min) / (self.y_max - self.y_min)

    def inverse_y(self, Z):
        return np.asarray(Z, dtype=float) * (self.y_max - self.y_min) + self.y_min

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("x_min", "x_max", "y_min", "y_max")}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(**{k: np.array(d[k], dtype=float) for k in ("x_min", "x_max", "y_min", "y_max")})

    def __eq__(self, other):
        if not isinstance(other, Scaler):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in ("x_min", "x_max", "y_min", "y_max"))


def _column_range(A: np.ndarray, label: str):
    lo, hi = A.min(axis=0), A.max(axis=0)
    flat = np.flatnonzero(hi <= lo)
    if flat.size:
        raise DegenerateScaleError(f"constant {label} column(s): {[f'{label}{i + 1}' for i in flat]}")
    return lo, hi


def fit_scaler(X, Y) -> Scaler:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    x_lo, x_hi = _column_range(X, "x")
    y_lo, y_hi = _column_range(Y, "y")
    return Scaler(x_lo, x_hi, y_lo, y_hi)


def scale_fit_transform(data):
    """Fit a per-column min-max scaler on ``data`` and return ``(scaled, scaler)``.

    ``data`` is any dataclass with ``X`` and ``Y`` array fields (see
    :class:`fzmoo.oracle.Dataset`).
    """
    scaler = fit_scaler(data.X, data.Y)
    scaled = dataclasses.replace(data, X=scaler.transform_x(data.X), Y=scaler.transform_y(data.Y))
    return scaled, scaler


# --- design CSV --------------------------------------------------------------

def write_design_csv(design: DesignMatrix | np.ndarray, path):
    rows = design.rows if isinstance(design, DesignMatrix) else np.asarray(design)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INPUT_NAMES)
        for r in rows:
            w.writerow([fmt_float(v) for v in r])


def read_design_csv(path) -> DesignMatrix:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != INPUT_NAMES:
            raise DataFormatError(f"header must be {','.join(INPUT_NAMES)}", path, 1)
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != N_INPUTS:
                raise DataFormatError(f"expected {N_INPUTS} fields, got {len(rec)}", path, lineno)
            rows.append(parse_floats(rec, path, lineno))
    return DesignMatrix(rows=np.array(rows, dtype=float).reshape(-1, N_INPUTS))


def fmt_float(v) -> str:
    """Shortest string that round-trips the float exactly."""
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def parse_floats(fields: Sequence[str], path, lineno) -> list[float]:
    out = []
    for f in fields:
        try:
            v = float(f)
        except ValueError:
            raise DataFormatError(f"non-numeric cell {f!r}", path, lineno) from None
        if not np.isfinite(v):
            raise DataFormatError(f"non-finite cell {f!r}", path, lineno)
        out.append(v)
    return out


def load_space(path=None) -> ParameterSpace:
    return default_space() if path is None else ParameterSpace.from_json(Path(path))
