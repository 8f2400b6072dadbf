"""The eight optimisation objectives, their bounds and the Voronkov penalty.

Every objective value is stored in minimisation orientation: quantities to
maximise are negated, quantities to minimise are kept, and the Voronkov
ratio enters as its distance to the critical window.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import ValidationError
from .param_space import INPUT_NAMES, N_INPUTS, OUTPUT_NAMES

GAMMA_CRIT_LB = 1.3e-3  # cm^2 / (min K)
GAMMA_CRIT_UB = 2.2e-3


def voronkov_penalty(gamma, lower: float = GAMMA_CRIT_LB, upper: float = GAMMA_CRIT_UB):
    """Distance of ``gamma`` to ``[lower, upper]``; zero inside. Units are dropped."""
    g = np.asarray(gamma, dtype=float)
    pen = np.where(g < lower, lower - g, np.where(g > upper, g - upper, 0.0))
    return float(pen) if pen.ndim == 0 else pen


@dataclass(frozen=True)
class Constraint:
    op: str  # ">=" or "<="
    bound: float
    unit: str = ""

    def __post_init__(self):
        if self.op not in (">=", "<="):
            raise ValidationError(f"unsupported constraint operator {self.op!r}")


@dataclass(frozen=True)
class ObjectiveSpec:
    id: str
    source: str  # "x1".."x12" or "y1".."y6"
    direction: str  # maximize | minimize | interval
    constraint: Constraint | None = None
    penalty: tuple | None = None  # (lower, upper) for interval objectives
    quantity: str = ""

    def __post_init__(self):
        if self.direction not in ("maximize", "minimize", "interval"):
            raise ValidationError(f"{self.id}: unknown direction {self.direction!r}")
        if self.source not in INPUT_NAMES + OUTPUT_NAMES:
            raise ValidationError(f"{self.id}: unknown source {self.source!r}")
        if self.direction == "interval" and self.penalty is None:
            raise ValidationError(f"{self.id}: interval objective needs penalty bounds")

    @property
    def from_input(self) -> bool:
        return self.source.startswith("x")

    @property
    def column(self) -> int:
        return int(self.source[1:]) - 1


def constraint_violation(spec, value):
    """Normalised amount by which ``value`` breaks ``spec``'s bound (0 when satisfied).

    Violations are divided by ``|bound|`` so bounds in different units can be
    summed; a zero bound falls back to the raw shortfall.
    """
    c = spec.constraint if isinstance(spec, ObjectiveSpec) else spec
    if c is None:
        raise ValidationError("objective has no constraint")
    v = np.asarray(value, dtype=float)
    gap = (c.bound - v) if c.op == ">=" else (v - c.bound)
    scale = abs(c.bound) if c.bound != 0 else 1.0
    out = np.maximum(0.0, gap / scale)
    return float(out) if out.ndim == 0 else out


def table_objectives() -> tuple:
    """The shipped objective table."""
    text = resources.files("fzmoo.data").joinpath("objectives.json").read_text(encoding="utf-8")
    return objectives_from_dict(json.loads(text))


def objectives_from_dict(d: dict) -> tuple:
    out = []
    try:
        for e in d["objectives"]:
            c = e.get("constraint")
            p = e.get("penalty")
            out.append(ObjectiveSpec(
                id=e["id"], source=e["source"], direction=e["direction"],
                constraint=None if c is None else Constraint(c["op"], float(c["bound"]), c.get("unit", "")),
                penalty=None if p is None else (float(p["lower"]), float(p["upper"])),
                quantity=e.get("quantity", ""),
            ))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed objective table: {exc}") from exc
    return tuple(out)


def load_objectives(path=None) -> tuple:
    if path is None:
        return table_objectives()
    with open(path, encoding="utf-8") as fh:
        return objectives_from_dict(json.load(fh))


@dataclass(frozen=True)
class ObjectiveVector:
    values: np.ndarray
    total_violation: float

    @property
    def feasible(self) -> bool:
        return self.total_violation == 0.0


def raw_quantities(X, Y, specs) -> np.ndarray:
    """The quantity each objective refers to, in its physical orientation."""
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    return np.column_stack([(X if s.from_input else Y)[:, s.column] for s in specs])


def objective_matrix(X, Y, specs=None):
    """Vectorised objectives: ``(F, violation)`` for ``n`` inputs and their ``n`` outputs."""
    specs = specs or table_objectives()
    raw = raw_quantities(X, Y, specs)
    F = np.empty_like(raw)
    cv = np.zeros(raw.shape[0])
    for j, s in enumerate(specs):
        if s.direction == "maximize":
            F[:, j] = -raw[:, j]
        elif s.direction == "minimize":
            F[:, j] = raw[:, j]
        else:
            F[:, j] = voronkov_penalty(raw[:, j], *s.penalty)
        if s.constraint is not None:
            cv += constraint_violation(s, raw[:, j])
    return F, cv


def to_raw(F, specs=None) -> np.ndarray:
    """Undo the minimisation orientation for display (maximised columns un-negated)."""
    specs = specs or table_objectives()
    F = np.array(F, dtype=float, copy=True)
    for j, s in enumerate(specs):
        if s.direction == "maximize":
            F[..., j] = -F[..., j]
    return F


def evaluate_objectives(x, predictor, specs=None) -> ObjectiveVector:
    """Objective vector for one design point; ``predictor`` maps inputs to the six outputs."""
    x = np.asarray(x, dtype=float)
    if x.shape != (N_INPUTS,):
        raise ValidationError(f"expected a {N_INPUTS}-vector, got shape {x.shape}")
    y = np.asarray(predictor(x[None, :]), dtype=float).reshape(-1)
    F, cv = objective_matrix(x[None, :], y[None, :], specs)
    return ObjectiveVector(F[0], float(cv[0]))


def population_evaluator(predictor, specs=None):
    """Wrap a batch predictor into ``X -> (F, violation)`` for the GA."""
    specs = specs or table_objectives()

    def evaluate(X):
        Y = np.asarray(predictor(X), dtype=float)
        return objective_matrix(X, Y, specs)

    return evaluate
