"""NSGA-II and NSGA-III with constrained dominance.

Objective matrices ``F`` are ``(n, o)`` in minimisation orientation and
``cv`` holds each individual's total constraint violation (0 = feasible).
"""
from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, ValidationError
from .param_space import INPUT_NAMES, ParameterSpace, default_space, fmt_float, lhs_sample, make_rng

MAX_REFERENCE_POINTS = 5_000_000
LARGE_REFERENCE_SET = 10_000


# --- dominance and sorting ---------------------------------------------------

def _unpack(ind):
    if hasattr(ind, "objectives"):
        ind = ind.objectives
    if hasattr(ind, "values"):
        return np.asarray(ind.values, dtype=float), float(ind.total_violation)
    values, violation = ind
    return np.asarray(values, dtype=float), float(violation)


def dominates(a, b) -> bool:
    """Constrained dominance of ``a`` over ``b``.

    Accepts individuals, objective vectors or ``(values, violation)`` pairs.
    Feasible beats infeasible; two infeasible solutions compare by total
    violation; two feasible ones by Pareto dominance.
    """
    fa, ca = _unpack(a)
    fb, cb = _unpack(b)
    if fa.shape != fb.shape:
        raise ValidationError(f"objective arity mismatch: {fa.shape} vs {fb.shape}")
    if ca == 0 and cb == 0:
        return bool(np.all(fa <= fb) and np.any(fa < fb))
    if ca == 0:
        return True
    if cb == 0:
        return False
    return ca < cb


def dominance_matrix(F, cv=None) -> np.ndarray:
    """``D[i, j]`` is True when individual ``i`` dominates ``j``."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    n = len(F)
    cv = np.zeros(n) if cv is None else np.asarray(cv, dtype=float)
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    feas = cv == 0
    D = le & lt & feas[:, None] & feas[None, :]
    D |= feas[:, None] & ~feas[None, :]
    D |= ~feas[:, None] & ~feas[None, :] & (cv[:, None] < cv[None, :])
    return D


def fast_nondominated_sort(F, cv=None) -> list[np.ndarray]:
    """Partition indices into successive non-dominated fronts (front 0 first)."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if len(F) == 0:
        raise ValidationError("population is empty")
    D = dominance_matrix(F, cv)
    n_dominators = D.sum(axis=0)
    remaining = np.ones(len(F), dtype=bool)
    fronts = []
    while remaining.any():
        front = np.flatnonzero(remaining & (n_dominators == 0))
        fronts.append(front)
        remaining[front] = False
        n_dominators = n_dominators - D[front].sum(axis=0)
    return fronts


def front_ranks(fronts, n) -> np.ndarray:
    rank = np.empty(n, dtype=int)
    for r, f in enumerate(fronts):
        rank[f] = r
    return rank


def crowding_distance(F) -> np.ndarray:
    """Crowding distance of every member of one front.

    Per objective the front is sorted; the two boundary members get infinite
    distance and interior members add the normalised gap between their
    neighbours. Objectives with zero range over the front add nothing.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    n, o = F.shape
    if n <= 2:
        return np.full(n, np.inf)
    dist = np.zeros(n)
    for j in range(o):
        order = np.argsort(F[:, j], kind="stable")
        col = F[order, j]
        span = col[-1] - col[0]
        if span <= 0:
            continue
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        dist[order[1:-1]] += (col[2:] - col[:-2]) / span
    return dist


# --- reference points --------------------------------------------------------

@dataclass(frozen=True)
class ReferencePointSet:
    points: np.ndarray
    n_objectives: int
    granularity: int

    def __len__(self):
        return len(self.points)


def reference_point_count(o: int, g: int) -> int:
    return math.comb(o + g - 1, g)


def das_dennis(o: int, g: int) -> ReferencePointSet:
    """All points of the simplex lattice with spacing ``1/g`` in ``o`` dimensions."""
    if o < 2 or g < 1:
        raise ValidationError(f"need o >= 2 and g >= 1, got o={o}, g={g}")
    count = reference_point_count(o, g)
    if count > MAX_REFERENCE_POINTS:
        raise ValidationError(f"{count} reference points exceed the limit of {MAX_REFERENCE_POINTS}")
    # stars and bars: choose o-1 bar positions among g+o-1 slots
    bars = np.fromiter(itertools.chain.from_iterable(itertools.combinations(range(g + o - 1), o - 1)),
                       dtype=np.int64, count=count * (o - 1)).reshape(count, o - 1)
    edges = np.hstack([np.full((count, 1), -1), bars, np.full((count, 1), g + o - 1)])
    parts = np.diff(edges, axis=1) - 1
    return ReferencePointSet(parts / g, o, g)


def associate(Fn, refpoints, chunk: int = 4096):
    """Nearest reference direction (by perpendicular distance) for each normalised row."""
    Fn = np.atleast_2d(Fn)
    W = np.asarray(refpoints.points if isinstance(refpoints, ReferencePointSet) else refpoints, dtype=float)
    if len(W) == 0:
        raise ValidationError("reference set is empty")
    sq = np.sum(Fn * Fn, axis=1)
    best = np.full(len(Fn), np.inf)
    best_idx = np.zeros(len(Fn), dtype=int)
    for start in range(0, len(W), chunk):
        Wc = W[start:start + chunk]
        proj = Fn @ Wc.T
        d2 = sq[:, None] - proj**2 / np.sum(Wc * Wc, axis=1)[None, :]
        j = np.argmin(d2, axis=1)
        d = d2[np.arange(len(Fn)), j]
        better = d < best
        best[better] = d[better]
        best_idx[better] = j[better] + start
    return best_idx, np.sqrt(np.maximum(best, 0.0))


def normalize_objectives(F, eps: float = 1e-12):
    ideal = F.min(axis=0)
    scale = np.maximum(F.max(axis=0) - ideal, eps)
    return (F - ideal) / scale


def niche_select(F, selected, candidates, refpoints, k: int, rng: np.random.Generator):
    """Choose ``k`` of ``candidates`` by reference-point niching.

    ``selected`` are indices already admitted; ``candidates`` is the front
    being split. Objectives are shifted by the ideal point and divided by
    their range over ``selected`` and ``candidates`` together. Each pick goes
    to the least-populated niche that still has a candidate (ties drawn from
    ``rng``) and takes its candidate closest to the reference line (ties by
    index). Returns the chosen indices in pick order.
    """
    selected = np.asarray(selected, dtype=int)
    candidates = np.asarray(candidates, dtype=int)
    if k > len(candidates):
        raise ValidationError("k exceeds the number of candidates")
    if k == len(candidates):
        return candidates.copy()
    merged = np.concatenate([selected, candidates])
    Fn = normalize_objectives(np.asarray(F, dtype=float)[merged])
    niche, dist = associate(Fn, refpoints)
    n_refs = len(refpoints)
    counts = np.bincount(niche[: len(selected)], minlength=n_refs)
    pool = {}
    for pos in range(len(selected), len(merged)):
        pool.setdefault(int(niche[pos]), []).append((dist[pos], int(merged[pos])))
    for members in pool.values():
        members.sort()
        members.reverse()  # pop() yields the closest
    chosen = []
    while len(chosen) < k:
        open_niches = np.array(sorted(pool))
        c = counts[open_niches]
        ties = open_niches[c == c.min()]
        j = int(ties[0] if len(ties) == 1 else rng.choice(ties))
        _, idx = pool[j].pop()
        chosen.append(idx)
        counts[j] += 1
        if not pool[j]:
            del pool[j]
    return np.array(chosen, dtype=int)


# --- variation ---------------------------------------------------------------

def sbx_crossover(p1, p2, eta_c: float, low, high, rng: np.random.Generator, clip: bool = True):
    """Simulated binary crossover, gene by gene, followed by clipping to the box.

    Before clipping the two children average to the parents in every gene.
    Works on single genomes or on stacks of parent pairs.
    """
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    u = rng.random(p1.shape)
    beta = np.where(u <= 0.5, (2.0 * u) ** (1.0 / (eta_c + 1.0)),
                    (1.0 / (2.0 * (1.0 - u))) ** (1.0 / (eta_c + 1.0)))
    c1 = 0.5 * ((1.0 + beta) * p1 + (1.0 - beta) * p2)
    c2 = 0.5 * ((1.0 - beta) * p1 + (1.0 + beta) * p2)
    if clip:
        c1 = np.clip(c1, low, high)
        c2 = np.clip(c2, low, high)
    return c1, c2


def polynomial_mutation(x, eta_m: float, p_m: float, low, high, rng: np.random.Generator):
    """Bounded polynomial mutation; each gene mutates with probability ``p_m``."""
    x = np.array(x, dtype=float, copy=True)
    low = np.broadcast_to(np.asarray(low, dtype=float), x.shape)
    high = np.broadcast_to(np.asarray(high, dtype=float), x.shape)
    hit = rng.random(x.shape) < p_m
    u = rng.random(x.shape)
    if not hit.any():
        return x
    span = high - low
    d1 = (x - low) / span
    d2 = (high - x) / span
    power = 1.0 / (eta_m + 1.0)
    lower_branch = u < 0.5
    val_lo = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta_m + 1.0)
    val_hi = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta_m + 1.0)
    with np.errstate(invalid="ignore"):
        dq = np.where(lower_branch, val_lo**power - 1.0, 1.0 - val_hi**power)
    x = np.where(hit, np.clip(x + dq * span, low, high), x)
    return x


# --- configuration and run ---------------------------------------------------

@dataclass
class GaConfig:
    population: int = 500
    generations: int = 250
    crossover_prob: float = 0.7
    mutation_prob: float = 0.05
    eta_c: float = 15.0
    eta_m: float = 20.0
    algorithm: str = "nsga2"
    granularity: int = 12
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.crossover_prob <= 1 and 0 <= self.mutation_prob <= 1):
            raise ValidationError("probabilities must lie in [0, 1]")
        if self.population < 2 or self.population % 2:
            raise ValidationError("population must be an even number >= 2")
        if self.generations < 0:
            raise ValidationError("generations must be non-negative")
        if self.algorithm not in ("nsga2", "nsga3"):
            raise ValidationError(f"unknown algorithm {self.algorithm!r}")
        if self.granularity < 1:
            raise ValidationError("granularity must be >= 1")


@dataclass
class Population:
    genes: np.ndarray
    X: np.ndarray  # decoded design points
    F: np.ndarray
    cv: np.ndarray
    rank: np.ndarray
    crowding: np.ndarray
    niche: np.ndarray | None = None
    algo: str = ""
    gen: int = 0

    def __len__(self):
        return len(self.X)

    @property
    def feasible(self) -> np.ndarray:
        return self.cv == 0


@dataclass
class RunResult:
    population: Population
    stats: list = field(default_factory=list)  # one dict per generation


class GeneCodec:
    """Maps GA genes to design points. Integer parameters are continuous genes
    on ``[low, high + 1 - 1e-3]`` and are decoded by flooring."""

    def __init__(self, space: ParameterSpace):
        self.space = space
        self.int_mask = space.integer_mask
        self.low = space.low
        self.high = np.where(self.int_mask, space.high + 1.0 - 1e-3, space.high)

    def decode(self, genes):
        X = np.array(genes, dtype=float, copy=True)
        X[..., self.int_mask] = np.floor(X[..., self.int_mask])
        return np.clip(X, self.space.low, self.space.high)


def _safe_evaluate(evaluator, X):
    F, cv = evaluator(X)
    F = np.array(F, dtype=float, copy=True)
    cv = np.array(cv, dtype=float, copy=True)
    bad = ~(np.all(np.isfinite(F), axis=1) & np.isfinite(cv))
    if bad.any():
        warnings.warn(f"{int(bad.sum())} individual(s) with non-finite objectives marked worst-infeasible",
                      RuntimeWarning, stacklevel=3)
        F[bad] = 0.0
        cv[bad] = np.inf
    cv = np.maximum(cv, 0.0)
    return F, cv


def _rank_and_crowd(F, cv):
    fronts = fast_nondominated_sort(F, cv)
    rank = front_ranks(fronts, len(F))
    crowd = np.zeros(len(F))
    for f in fronts:
        crowd[f] = crowding_distance(F[f])
    return fronts, rank, crowd


def _tournament(rank, crowd, n, rng, use_crowding):
    a = rng.integers(0, len(rank), size=n)
    b = rng.integers(0, len(rank), size=n)
    pick_b = rank[b] < rank[a]
    if use_crowding:
        pick_b |= (rank[b] == rank[a]) & (crowd[b] > crowd[a])
    return np.where(pick_b, b, a)


def _variation(parents, cfg: GaConfig, low, high, rng):
    n = len(parents)
    p1, p2 = parents[0::2], parents[1::2]
    c1, c2 = sbx_crossover(p1, p2, cfg.eta_c, low, high, rng)
    cross = (rng.random(len(p1)) < cfg.crossover_prob)[:, None]
    c1 = np.where(cross, c1, p1)
    c2 = np.where(cross, c2, p2)
    children = np.empty_like(parents)
    children[0::2], children[1::2] = c1, c2
    children = polynomial_mutation(children, cfg.eta_m, cfg.mutation_prob, low, high, rng)
    return children[:n]


def _environmental_selection(F, cv, N, cfg, refs, rng):
    fronts = fast_nondominated_sort(F, cv)
    chosen = []
    for f in fronts:
        if len(chosen) + len(f) <= N:
            chosen.extend(f.tolist())
            if len(chosen) == N:
                break
            continue
        need = N - len(chosen)
        if cfg.algorithm == "nsga2":
            d = crowding_distance(F[f])
            order = np.argsort(-d, kind="stable")
            chosen.extend(f[order[:need]].tolist())
        else:
            chosen.extend(niche_select(F, np.array(chosen, dtype=int), f, refs, need, rng).tolist())
        break
    return np.array(chosen, dtype=int)


def _generation_stats(gen, F, cv, rank) -> dict:
    feas = cv == 0
    best = np.where(feas[:, None], F, np.inf).min(axis=0) if feas.any() else np.full(F.shape[1], np.nan)
    row = {"gen": gen, "n_feasible": int(feas.sum()), "front1_size": int(np.sum(rank == 0))}
    for j, v in enumerate(best):
        row[f"best_O{j + 1}"] = float(v)
    return row


def run(config: GaConfig, evaluator, space: ParameterSpace | None = None,
        reference_points: ReferencePointSet | None = None, n_objectives: int = 8) -> RunResult:
    """Evolve a population under ``evaluator`` (``X -> (F, violation)``).

    The initial population is a Latin hypercube sample. Each generation
    creates offspring by binary tournament, SBX (applied per pair with
    ``crossover_prob``) and per-gene polynomial mutation, then keeps the best
    ``population`` of parents plus offspring: whole fronts first, the split
    front by crowding distance (NSGA-II) or reference-point niching
    (NSGA-III).
    """
    cfg = config
    space = space or default_space()
    codec = GeneCodec(space)
    rng = make_rng(cfg.seed)
    refs = None
    if cfg.algorithm == "nsga3":
        refs = reference_points or das_dennis(n_objectives, cfg.granularity)
        if len(refs) > LARGE_REFERENCE_SET:
            warnings.warn(f"NSGA-III with {len(refs)} reference points will be slow", RuntimeWarning, stacklevel=2)

    N = cfg.population
    genes = lhs_sample(space, N, cfg.seed).rows
    F, cv = _safe_evaluate(evaluator, codec.decode(genes))
    _, rank, crowd = _rank_and_crowd(F, cv)
    stats = [_generation_stats(0, F, cv, rank)]

    for gen in range(1, cfg.generations + 1):
        parents = genes[_tournament(rank, crowd, N, rng, cfg.algorithm == "nsga2")]
        kids = _variation(parents, cfg, codec.low, codec.high, rng)
        Fk, cvk = _safe_evaluate(evaluator, codec.decode(kids))
        all_genes = np.vstack([genes, kids])
        all_F = np.vstack([F, Fk])
        all_cv = np.concatenate([cv, cvk])
        keep = _environmental_selection(all_F, all_cv, N, cfg, refs, rng)
        genes, F, cv = all_genes[keep], all_F[keep], all_cv[keep]
        _, rank, crowd = _rank_and_crowd(F, cv)
        stats.append(_generation_stats(gen, F, cv, rank))

    niche = None
    if refs is not None:
        niche, _ = associate(normalize_objectives(F), refs)
    pop = Population(genes, codec.decode(genes), F, cv, rank, crowd, niche, cfg.algorithm, cfg.generations)
    return RunResult(pop, stats)


# --- files -------------------------------------------------------------------

def solutions_header(n_objectives: int = 8) -> list[str]:
    return (["algo", "gen", "idx"] + list(INPUT_NAMES) + [f"O{j}" for j in range(1, n_objectives + 1)]
            + ["violation", "rank", "crowding"])


def write_solutions_csv(pop: Population, path):
    o = pop.F.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(solutions_header(o))
        for i in range(len(pop)):
            w.writerow([pop.algo, pop.gen, i] + [fmt_float(v) for v in pop.X[i]]
                       + [fmt_float(v) for v in pop.F[i]]
                       + [fmt_float(pop.cv[i]), int(pop.rank[i]) + 1, fmt_float(pop.crowding[i])])


def read_solutions_csv(path) -> Population:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["algo", "gen", "idx"] or header[3:15] != list(INPUT_NAMES):
            raise DataFormatError("not a solutions file", path, 1)
        o = len(header) - 18
        if header != solutions_header(o):
            raise DataFormatError("unexpected solutions header", path, 1)
        rows = [r for r in reader if r]
    if not rows:
        raise DataFormatError("no solutions", path, 2)
    try:
        X = np.array([[float(v) for v in r[3:15]] for r in rows])
        F = np.array([[float(v) for v in r[15:15 + o]] for r in rows])
        cv = np.array([float(r[15 + o]) for r in rows])
        rank = np.array([int(r[16 + o]) - 1 for r in rows])
        crowd = np.array([float(r[17 + o]) for r in rows])
    except (ValueError, IndexError) as exc:
        raise DataFormatError(f"malformed solutions row: {exc}", path) from exc
    return Population(X.copy(), X, F, cv, rank, crowd, None, rows[0][0], int(rows[0][1]))


def write_stats_csv(stats: list, path, algo: str = ""):
    if not stats:
        raise ValidationError("no statistics to write")
    keys = list(stats[0])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algo"] + keys)
        for row in stats:
            w.writerow([algo] + [fmt_float(row[k]) if isinstance(row[k], float) else row[k] for k in keys])
