"""Analytic stand-in for the finite-element process model.

The proxy maps the twelve floating-zone inputs to the same six outputs the
FEM reports, with closed-form expressions whose ranges and monotone trends
resemble the published results. It also flags a "melt-core freezing" region
as nonphysical. ``ingest_csv`` accepts externally computed data in the same
schema so real simulator output can replace the proxy.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, DomainError
from .param_space import (
    INPUT_NAMES, N_INPUTS, N_OUTPUTS, OUTPUT_NAMES, ParameterSpace, check_point, default_space,
    fmt_float, in_box, lhs_sample, parse_floats,
)

FREEZE_THRESHOLD = 0.72
DATASET_HEADER = INPUT_NAMES + OUTPUT_NAMES + ("feasible",)


@dataclass(frozen=True)
class OracleOutputs:
    y1: float  # radial thermal gradient at the TPL, K/cm
    y2: float  # interface deflection, mm
    y3: float  # exceed stress, MPa
    y4: float  # inductor voltage, V
    y5: float  # EM inhomogeneity, W/cm2
    y6: float  # Voronkov ratio, cm2/(min K)
    feasible: bool
    gz_internal: float  # axial gradient, K/cm

    @property
    def y(self) -> np.ndarray:
        return np.array([self.y1, self.y2, self.y3, self.y4, self.y5, self.y6])


@dataclass
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    feasible: np.ndarray = None
    provenance: str = "builtin-oracle"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(-1, N_INPUTS)
        self.Y = np.asarray(self.Y, dtype=float).reshape(-1, N_OUTPUTS)
        if self.feasible is None:
            self.feasible = np.ones(len(self.X), dtype=bool)
        self.feasible = np.asarray(self.feasible, dtype=bool).reshape(-1)
        if not (len(self.X) == len(self.Y) == len(self.feasible)):
            raise DataFormatError("X, Y and feasible must have the same number of rows")

    def __len__(self):
        return len(self.X)

    def training_view(self) -> "Dataset":
        """Rows flagged feasible only; nonphysical samples never reach training."""
        m = self.feasible
        return Dataset(self.X[m], self.Y[m], self.feasible[m], self.provenance, dict(self.meta))

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.Y[idx], self.feasible[idx], self.provenance, dict(self.meta))


def _unit_inputs(X: np.ndarray, space: ParameterSpace) -> np.ndarray:
    return space.normalize(X)


def evaluate_batch(X, space: ParameterSpace | None = None, check: bool = True):
    """Vectorised oracle. Returns ``(Y, feasible, gz)`` for an ``(n, 12)`` matrix."""
    space = space or default_space()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if check:
        bad = ~in_box(space, X)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise DomainError(f"row {i}: " + "; ".join(check_point(space, X[i])))
    u = _unit_inputs(X, space)
    u1, u2, u3, u4, u5, u6, u7, u8, u9, u10, u11, u12 = u.T

    gz = 95.0 - 35.0 * u1 + 12.0 * u12 - 8.0 * u10
    y1 = 16.0 + 14.0 * (1.0 - u1) * (0.4 + 0.6 * u12) + 5.0 * u9 * u11 - 4.0 * u10 + 3.0 * u2
    y2 = 8.0 + 40.0 * u1 * u2 + 14.0 * u2**2 + 6.0 * u1 - 3.0 * u11
    y3 = 20.0 + 58.0 * u1**2 + 24.0 * u2 + 12.0 * u1 * u2 - 6.0 * u12
    y4 = 640.0 + 300.0 * u8 - 270.0 * u6 + 170.0 * u1 + 60.0 * u5 - 45.0 * u7 + 55.0 * u1 * u8
    y5 = 0.18 + 3.6 * u6**2 * (1.0 - 0.55 * u3) * (1.0 - 0.45 * u4) + 0.25 * u2 * u6
    # crystallization rate at the axis equals the pulling rate; mm/min -> cm/min
    y6 = (X[:, 1] / 10.0) / gz

    feasible = u12 * (1.0 - u6) <= FREEZE_THRESHOLD
    Y = np.column_stack([y1, y2, y3, y4, y5, y6])
    return Y, feasible, gz


def evaluate(x, space: ParameterSpace | None = None) -> OracleOutputs:
    space = space or default_space()
    x = np.asarray(x, dtype=float)
    problems = check_point(space, x)
    if problems:
        raise DomainError("; ".join(problems))
    Y, feas, gz = evaluate_batch(x[None, :], space, check=False)
    y = Y[0]
    return OracleOutputs(*map(float, y), feasible=bool(feas[0]), gz_internal=float(gz[0]))


def generate_dataset(space: ParameterSpace | None, s: int, seed: int, midpoint: bool = False) -> Dataset:
    """Sample an LHS design and run the oracle on every row.

    Infeasible rows stay in the dataset (so files keep the full design);
    use :meth:`Dataset.training_view` to drop them.
    """
    space = space or default_space()
    design = lhs_sample(space, s, seed, midpoint=midpoint)
    Y, feasible, _ = evaluate_batch(design.rows, space)
    return Dataset(design.rows, Y, feasible, "builtin-oracle", {"seed": seed})


def write_csv(data: Dataset, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DATASET_HEADER)
        for x, y, f in zip(data.X, data.Y, data.feasible):
            w.writerow([fmt_float(v) for v in x] + [fmt_float(v) for v in y] + [int(f)])


def ingest_csv(path) -> Dataset:
    """Read a dataset file with header ``x1..x12,y1..y6[,feasible]``.

    A missing ``feasible`` column means every row is feasible. Malformed rows
    raise :class:`DataFormatError` naming the line.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError("empty file", path, 1)
        header = tuple(h.strip() for h in header)
        if header == DATASET_HEADER:
            has_flag = True
        elif header == DATASET_HEADER[:-1]:
            has_flag = False
        else:
            raise DataFormatError(f"header must be {','.join(DATASET_HEADER)} (feasible optional)", path, 1)
        width = len(header)
        X, Y, F = [], [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != width:
                raise DataFormatError(f"expected {width} fields, got {len(rec)}", path, lineno)
            vals = parse_floats(rec[: N_INPUTS + N_OUTPUTS], path, lineno)
            X.append(vals[:N_INPUTS])
            Y.append(vals[N_INPUTS:])
            if has_flag:
                flag = rec[-1].strip()
                if flag not in ("0", "1"):
                    raise DataFormatError(f"feasible must be 0 or 1, got {flag!r}", path, lineno)
                F.append(flag == "1")
            else:
                F.append(True)
    return Dataset(np.array(X).reshape(-1, N_INPUTS), np.array(Y).reshape(-1, N_OUTPUTS),
                   np.array(F, dtype=bool), "ingested", {"path": str(path)})
