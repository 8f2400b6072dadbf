"""Pareto extraction, trade-off exports and the surrogate-vs-oracle validation loop."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FzMooError, ValidationError
from .nsga import Population, crowding_distance, fast_nondominated_sort
from .objectives import table_objectives, to_raw
from .param_space import INPUT_NAMES, OUTPUT_NAMES, fmt_float

HIST_BINS = 32
TOP_K = 5
DISCREPANCY_EPS = 1e-12


def _dedupe_rows(X) -> np.ndarray:
    """Indices of the first occurrence of every distinct row, in original order."""
    X = np.asarray(X)
    _, first = np.unique(X, axis=0, return_index=True)
    return np.sort(first)


def extract_pareto(F, cv=None, X=None) -> np.ndarray:
    """Indices of the non-dominated subset under constrained dominance.

    With ``X`` given, exact duplicate genomes are collapsed to their first
    occurrence before filtering.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if len(F) == 0:
        raise ValidationError("no solutions")
    cv = np.zeros(len(F)) if cv is None else np.asarray(cv, dtype=float)
    keep = _dedupe_rows(X) if X is not None else np.arange(len(F))
    front = fast_nondominated_sort(F[keep], cv[keep])[0]
    return keep[np.sort(front)]


def pareto_population(pop: Population) -> Population:
    idx = extract_pareto(pop.F, pop.cv, pop.X)
    return _take(pop, idx)


def _take(pop: Population, idx) -> Population:
    idx = np.asarray(idx, dtype=int)
    crowd = crowding_distance(pop.F[idx]) if len(idx) else np.zeros(0)
    return Population(pop.genes[idx], pop.X[idx], pop.F[idx], pop.cv[idx], np.zeros(len(idx), dtype=int),
                      crowd, None if pop.niche is None else pop.niche[idx], pop.algo, pop.gen)


def top_k_per_objective(F, cv, k: int = TOP_K) -> dict:
    """For each objective, the ``k`` front-1 feasible solutions with the best value.

    Stored values are in minimisation orientation, so "best" is smallest; ties
    go to the lower index.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    cv = np.asarray(cv, dtype=float)
    front = fast_nondominated_sort(F, cv)[0]
    pool = np.sort(front[cv[front] == 0])
    out = {}
    for j in range(F.shape[1]):
        order = np.argsort(F[pool, j], kind="stable")
        out[f"O{j + 1}"] = pool[order[:k]]
    return out


def highlight_union(top: dict) -> np.ndarray:
    return np.unique(np.concatenate(list(top.values()))) if top else np.zeros(0, dtype=int)


@dataclass
class ParetoReport:
    solutions: Population
    highlights: dict
    paths: dict = field(default_factory=dict)

    @property
    def highlighted(self) -> np.ndarray:
        return highlight_union(self.highlights)


def build_pareto_report(pop: Population, k: int = TOP_K) -> ParetoReport:
    front = pareto_population(pop)
    return ParetoReport(front, top_k_per_objective(front.F, front.cv, k))


# --- exports -----------------------------------------------------------------

def _objective_names(o):
    return [f"O{j}" for j in range(1, o + 1)]


def write_pareto_csv(reports: dict, path, predictor=None):
    """One row per front-1 solution of each algorithm, with highlight flags."""
    rows = []
    o = None
    for algo, rep in reports.items():
        sol = rep.solutions
        o = sol.F.shape[1]
        Y = None if predictor is None else np.asarray(predictor(sol.X))
        tags = {i: [] for i in range(len(sol))}
        for name, idx in rep.highlights.items():
            for i in idx:
                tags[int(i)].append(name)
        for i in range(len(sol)):
            row = [algo, i] + [fmt_float(v) for v in sol.X[i]]
            if Y is not None:
                row += [fmt_float(v) for v in Y[i]]
            row += [fmt_float(v) for v in sol.F[i]] + [fmt_float(sol.cv[i]), fmt_float(sol.crowding[i]),
                                                       int(bool(tags[i])), ";".join(tags[i])]
            rows.append(row)
    header = ["algo", "idx"] + list(INPUT_NAMES)
    if predictor is not None:
        header += [f"{n}_pred" for n in OUTPUT_NAMES]
    header += _objective_names(o or 8) + ["violation", "crowding", "highlight", "highlight_objectives"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def parallel_coordinates_table(pop: Population, specs=None):
    """Columns and rows for a parallel-coordinates plot; objectives in their raw direction."""
    specs = specs or table_objectives()
    raw = to_raw(pop.F, specs)
    columns = list(INPUT_NAMES) + [s.id for s in specs]
    return columns, np.hstack([pop.X, raw])


def export_parallel_coordinates(solutions, path, specs=None) -> Path:
    """Write a parallel-coordinates table to ``path`` and axis ranges to a ``.meta.json`` sidecar.

    ``solutions`` is a :class:`Population` or a mapping of label to
    population; rows are tagged with the label. Rendering is left to
    external plotting tools. Returns the sidecar path.
    """
    specs = specs or table_objectives()
    path = Path(path)
    groups = solutions if isinstance(solutions, dict) else {solutions.algo: solutions}
    columns = None
    blocks = []
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for algo, pop in groups.items():
            columns, table = parallel_coordinates_table(pop, specs)
            if not blocks:
                w.writerow(["algo", "idx"] + columns)
            blocks.append(table)
            for i, r in enumerate(table):
                w.writerow([algo, i] + [fmt_float(v) for v in r])
    table = np.vstack(blocks)
    directions = {p: "input" for p in INPUT_NAMES}
    directions.update({s.id: s.direction for s in specs})
    meta = {
        "columns": columns,
        "n_rows": int(len(table)),
        "axes": {c: {"min": float(table[:, j].min()) if len(table) else None,
                     "max": float(table[:, j].max()) if len(table) else None,
                     "direction": directions[c]}
                 for j, c in enumerate(columns)},
    }
    meta_path = path.with_suffix(".meta.json")
    write_json(meta, meta_path)
    return meta_path


def _column_summary(values, edges):
    q1, med, q3 = np.quantile(values, [0.25, 0.5, 0.75])
    counts, _ = np.histogram(values, bins=edges)
    return {"min": float(values.min()), "q1": float(q1), "median": float(med), "q3": float(q3),
            "max": float(values.max()), "hist": {"edges": edges.tolist(), "counts": counts.tolist()}}


def summarize_distributions(dataset, solution_sets: dict, bins: int = HIST_BINS) -> dict:
    """Five-number summaries and shared-bin histograms per input/output column.

    ``dataset`` has ``X``/``Y``; ``solution_sets`` maps a label (e.g. the
    algorithm) to an ``(X, Y)`` pair. Histogram edges for a column are common
    to all groups so the distributions can be overlaid.
    """
    groups = {"dataset": (np.asarray(dataset.X), np.asarray(dataset.Y))}
    for name, (X, Y) in solution_sets.items():
        groups[name] = (np.asarray(X), np.asarray(Y))
    for name, (X, Y) in groups.items():
        if len(X) == 0:
            raise ValidationError(f"group {name!r} is empty")
    out = {name: {} for name in groups}
    names = list(INPUT_NAMES) + list(OUTPUT_NAMES)
    for c, col in enumerate(names):
        src = 0 if c < len(INPUT_NAMES) else 1
        j = c if src == 0 else c - len(INPUT_NAMES)
        lo = min(float(g[src][:, j].min()) for g in groups.values())
        hi = max(float(g[src][:, j].max()) for g in groups.values())
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, bins + 1)
        for name, g in groups.items():
            out[name][col] = _column_summary(g[src][:, j], edges)
    return out


# --- validation --------------------------------------------------------------

@dataclass
class ValidationRecord:
    case: int
    x: np.ndarray
    y_pred: np.ndarray
    y_true: np.ndarray | None
    discrepancy: np.ndarray | None
    feasible: bool | None
    error: str = ""

    @property
    def mean_discrepancy(self) -> float:
        return float(np.mean(self.discrepancy)) if self.discrepancy is not None else float("nan")


def relative_discrepancy(y_pred, y_true, eps: float = DISCREPANCY_EPS):
    y_pred = np.asarray(y_pred, dtype=float)
    y_true = np.asarray(y_true, dtype=float)
    return np.abs(y_pred - y_true) / np.maximum(np.abs(y_true), eps)


def select_candidates(pop: Population, n: int) -> np.ndarray:
    """Best solution per objective (first-seen order, deduplicated), then the
    most isolated remaining solutions by crowding distance, until ``n``.

    Picks come from the feasible Pareto set when it has at least ``n``
    members, otherwise from the whole population.
    """
    if n > len(pop):
        raise ValidationError(f"asked for {n} candidates from {len(pop)} solutions")
    front = extract_pareto(pop.F, pop.cv, pop.X)
    pool = front[pop.cv[front] == 0]
    if len(pool) < n:
        pool = np.arange(len(pop))
    chosen = []
    for j in range(pop.F.shape[1]):
        i = int(pool[np.argsort(pop.F[pool, j], kind="stable")[0]])
        if i not in chosen:
            chosen.append(i)
    if len(chosen) < n:
        crowd = crowding_distance(pop.F[pool])
        for i in pool[np.argsort(-crowd, kind="stable")]:
            if len(chosen) >= n:
                break
            if int(i) not in chosen:
                chosen.append(int(i))
    return np.array(chosen[:n], dtype=int)


def validate_candidates(pop: Population, predictor, oracle, n: int = 6):
    """Re-evaluate ``n`` selected solutions with ``oracle`` and compare to ``predictor``.

    ``predictor(X) -> Y`` is the surrogate in physical units; ``oracle(x)``
    returns an object with ``.y`` and ``.feasible`` for one point. Oracle
    failures are recorded on the case rather than raised. Returns
    ``(records, summary)``.
    """
    idx = select_candidates(pop, n)
    X = pop.X[idx]
    Y_pred = np.atleast_2d(np.asarray(predictor(X), dtype=float))
    records = []
    for case, (x, yp) in enumerate(zip(X, Y_pred)):
        try:
            out = oracle(x)
            y = np.asarray(out.y, dtype=float)
            records.append(ValidationRecord(case, x, yp, y, relative_discrepancy(yp, y), bool(out.feasible)))
        except (FzMooError, ValueError, ArithmeticError) as exc:
            records.append(ValidationRecord(case, x, yp, None, None, None, str(exc)))
    return records, summarize_validation(records, idx)


def summarize_validation(records, source_idx=None) -> dict:
    ok = [r for r in records if r.discrepancy is not None]
    per_output = (np.mean([r.discrepancy for r in ok], axis=0) if ok else np.full(len(OUTPUT_NAMES), np.nan))
    per_case = [r.mean_discrepancy for r in ok]
    return {
        "n_cases": len(records),
        "n_failed": len(records) - len(ok),
        "n_infeasible": sum(1 for r in ok if not r.feasible),
        "source_index": None if source_idx is None else [int(i) for i in source_idx],
        "per_output_mean": {name: float(v) for name, v in zip(OUTPUT_NAMES, per_output)},
        "per_case_mean": [float(v) for v in per_case],
        "mean": float(np.mean(per_case)) if per_case else float("nan"),
        "max": float(np.max([r.discrepancy.max() for r in ok])) if ok else float("nan"),
    }


def validation_header() -> list[str]:
    cols = ["case"] + list(INPUT_NAMES)
    for y in OUTPUT_NAMES:
        cols += [f"{y}_pred", f"{y}_true", f"{y}_disc_pct"]
    return cols + ["feasible", "error"]


def write_validation_csv(records, path):
    """Rows mirror the published validation table: inputs, predicted, recomputed, % discrepancy."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(validation_header())
        for r in records:
            row = [r.case] + [fmt_float(v) for v in r.x]
            for j in range(len(OUTPUT_NAMES)):
                if r.y_true is None:
                    row += [fmt_float(r.y_pred[j]), "", ""]
                else:
                    row += [fmt_float(r.y_pred[j]), fmt_float(r.y_true[j]), fmt_float(100.0 * r.discrepancy[j])]
            row += ["" if r.feasible is None else int(r.feasible), r.error]
            w.writerow(row)


def read_validation_csv(path) -> list:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            x = np.array([float(row[n]) for n in INPUT_NAMES])
            yp = np.array([float(row[f"{n}_pred"]) for n in OUTPUT_NAMES])
            if row["y1_true"] == "":
                out.append(ValidationRecord(int(row["case"]), x, yp, None, None, None, row["error"]))
                continue
            yt = np.array([float(row[f"{n}_true"]) for n in OUTPUT_NAMES])
            disc = np.array([float(row[f"{n}_disc_pct"]) for n in OUTPUT_NAMES]) / 100.0
            out.append(ValidationRecord(int(row["case"]), x, yp, yt, disc, row["feasible"] == "1", row["error"]))
    return out


def write_json(obj, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=False)
        fh.write("\n")
