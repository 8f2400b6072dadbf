"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
Criteria 7-10 use the artifacts of a full desk-profile pipeline run, which
takes several minutes; criterion 10 runs the pipeline a second time.
"""
import json
import math
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from fzmoo.cli import EXIT_OK, main
from fzmoo.ensemble import EnsembleModel, r_squared, train_ensemble, train_test_split
from fzmoo.neural import Architecture, TrainConfig, gradients, init_network, mse_loss
from fzmoo.nsga import GaConfig, das_dennis, fast_nondominated_sort, read_solutions_csv, run
from fzmoo.objectives import population_evaluator, table_objectives, voronkov_penalty
from fzmoo.oracle import evaluate, evaluate_batch, generate_dataset
from fzmoo.param_space import default_space, fit_scaler, lhs_sample, make_rng
from fzmoo.report import build_pareto_report, validate_candidates

from conftest import record_criterion

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    work = tmp_path_factory.mktemp("desk_a")
    t0 = time.perf_counter()
    assert main(["pipeline", "--workdir", str(work), "--profile", "desk"]) == EXIT_OK
    return work, time.perf_counter() - t0


# 1 -------------------------------------------------------------------------

def test_criterion_01_reference_point_count():
    t0 = time.perf_counter()
    n_fine = len(das_dennis(8, 12))
    mismatches = []
    for o in range(2, 9):
        for g in range(1, 13):
            pts = das_dennis(o, g).points
            lattice = np.rint(pts * g).astype(int)
            distinct = len({tuple(r) for r in lattice})
            ok = (len(pts) == math.comb(o + g - 1, o - 1) == distinct
                  and np.all(lattice.sum(axis=1) == g) and np.all(lattice >= 0))
            if not ok:
                mismatches.append((o, g))
    elapsed = time.perf_counter() - t0
    passed = n_fine == 50388 and not mismatches and elapsed < 10
    record_criterion(1, passed, f"das_dennis(8,12)={n_fine}, closed-form mismatches={mismatches}, {elapsed:.1f}s")
    assert passed


# 2 -------------------------------------------------------------------------

def _brute_force_strata(F, cv):
    """Pairwise O(n^2) dominance table, then peel off undominated sets."""
    n = len(F)
    feasible = cv == 0
    dom = np.zeros((n, n), dtype=bool)
    for i in range(n):  # row i against every j
        pareto = np.all(F[i] <= F, axis=1) & np.any(F[i] < F, axis=1)
        if feasible[i]:
            dom[i] = np.where(feasible, pareto, True)
        else:
            dom[i] = ~feasible & (cv[i] < cv)
    remaining = np.ones(n, dtype=bool)
    fronts = []
    while remaining.any():
        front = [j for j in range(n) if remaining[j] and not dom[remaining, j].any()]
        fronts.append(front)
        remaining[front] = False
    return fronts


def test_criterion_02_sorting_oracle():
    t0 = time.perf_counter()
    rng = make_rng(2)
    failures = 0
    for trial in range(100):
        # coarse integer objectives create ties and deep fronts; a third of each population is infeasible
        F = rng.integers(0, 6, size=(200, 8)).astype(float)
        cv = np.where(rng.random(200) < 1 / 3, rng.integers(1, 5, 200) / 4, 0.0)
        fast = [sorted(f.tolist()) for f in fast_nondominated_sort(F, cv)]
        failures += fast != _brute_force_strata(F, cv)
    elapsed = time.perf_counter() - t0
    passed = failures == 0 and elapsed < 30
    record_criterion(2, passed, f"{100 - failures}/100 populations identical, {elapsed:.1f}s")
    assert passed


# 3 -------------------------------------------------------------------------

def _loss_and_mask(net, X, Y):
    A, masks = X, []
    for W, b in zip(net.weights[:-1], net.biases[:-1]):
        Z = A @ W.T + b
        masks.append(Z > 0)
        A = np.maximum(Z, 0.0)
    out = A @ net.weights[-1].T + net.biases[-1]
    return mse_loss(out, Y).total, np.concatenate([m.ravel() for m in masks])


def _finite_difference(net, X, Y, h=1e-5):
    """Central differences, plus a flag for parameters whose +-h step flips a rectifier."""
    _, base_mask = _loss_and_mask(net, X, Y)
    grads, valid = [], []
    for P in net.weights + net.biases:
        G = np.empty_like(P)
        ok = np.ones(P.shape, dtype=bool)
        for idx in np.ndindex(P.shape):
            old = P[idx]
            P[idx] = old + h
            up, m_up = _loss_and_mask(net, X, Y)
            P[idx] = old - h
            down, m_down = _loss_and_mask(net, X, Y)
            P[idx] = old
            G[idx] = (up - down) / (2 * h)
            ok[idx] = np.array_equal(m_up, base_mask) and np.array_equal(m_down, base_mask)
        grads.append(G)
        valid.append(ok)
    return grads, valid


def test_criterion_03_gradient_correctness():
    rng = make_rng(3)
    worst, checked, skipped = 0.0, 0, 0
    for _ in range(20):
        depth = int(rng.integers(1, 11))
        arch = Architecture(tuple(int(w) for w in rng.integers(2, 65, size=depth)))
        net = init_network(arch, rng)
        for b in net.biases:
            b += rng.normal(scale=0.1, size=b.shape)
        X, Y = rng.random((8, 12)), rng.random((8, 6))
        gW, gb = gradients(net, X, Y)
        numeric, valid = _finite_difference(net, X, Y)
        a = np.concatenate([g.ravel() for g in gW + gb])
        n = np.concatenate([g.ravel() for g in numeric])
        ok = np.concatenate([v.ravel() for v in valid])
        # the difference quotient carries ~1e-11 absolute round-off at h=1e-5, hence the 1e-6 floor
        rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-6)
        worst = max(worst, float(rel[ok].max()))
        checked += int(ok.sum())
        skipped += int((~ok).sum())
    passed = worst < 1e-4
    record_criterion(3, passed, f"max relative error {worst:.2e} over 20 architectures "
                                f"({checked} parameters, {skipped} skipped at rectifier kinks)")
    assert passed


# 4 -------------------------------------------------------------------------

def test_criterion_04_surrogate_quality():
    t0 = time.perf_counter()
    data = generate_dataset(default_space(), 2500, 42)
    feasible = int(data.feasible.sum())
    train_data = data.training_view()
    tr, te = train_test_split(len(train_data), 0.1, 42)
    scaler = fit_scaler(train_data.X[tr], train_data.Y[tr])
    Xtr, Ytr = scaler.transform_x(train_data.X[tr]), scaler.transform_y(train_data.Y[tr])
    Xte, Yte = scaler.transform_x(train_data.X[te]), scaler.transform_y(train_data.Y[te])
    model = train_ensemble(Architecture((32, 32, 32)), Xtr, Ytr, M=10, base_seed=42,
                           config=TrainConfig(seed=42), scaler=scaler)
    pred, _ = model.predict(Xte)
    mse = mse_loss(pred, Yte).per_output
    r2 = r_squared(pred, Yte)
    elapsed = time.perf_counter() - t0
    passed = (abs(feasible - 2390) <= 60 and np.all(mse <= 2e-3) and np.all(r2 >= 0.95) and elapsed < 600)
    record_criterion(4, passed, f"feasible={feasible}, max MSE {mse.max():.2e}, min R2 {r2.min():.4f}, "
                                f"{elapsed:.0f}s")
    assert passed


# 5 -------------------------------------------------------------------------

def test_criterion_05_voronkov_penalty():
    inside = [voronkov_penalty(g) for g in np.linspace(1.3e-3, 2.2e-3, 101)]
    errs = [abs(voronkov_penalty(1.0e-3) - 3.0e-4), abs(voronkov_penalty(3.0e-3) - 8.0e-4), max(inside)]
    passed = max(errs) <= 1e-15
    record_criterion(5, passed, f"max deviation {max(errs):.1e}")
    assert passed


# 6 -------------------------------------------------------------------------

def test_criterion_06_infeasibility_rate():
    fractions = [1.0 - generate_dataset(default_space(), 2500, seed).feasible.mean() for seed in range(20)]
    passed = all(0.03 <= f <= 0.06 for f in fractions)
    record_criterion(6, passed, f"infeasible fraction {min(fractions):.2%}..{max(fractions):.2%} over 20 seeds")
    assert passed


# 7 -------------------------------------------------------------------------

def test_criterion_07_optimization_sanity(desk_run):
    work, _ = desk_run
    model = EnsembleModel.load(work / "model.json")
    specs = table_objectives()
    evaluator = population_evaluator(model, specs)
    t0 = time.perf_counter()
    result = run(GaConfig(population=100, generations=50, algorithm="nsga2", granularity=3, seed=42), evaluator)
    elapsed = time.perf_counter() - t0
    pop = result.population
    same_as_pipeline = np.array_equal(pop.F, read_solutions_csv(work / "solutions_nsga2.csv").F)

    frac_feasible = float(pop.feasible.mean())
    one_front = len(fast_nondominated_sort(pop.F, pop.cv)) == 1

    X_base = lhs_sample(default_space(), 5000, 7).rows
    F_base, cv_base = evaluator(X_base)
    base_best = F_base[cv_base == 0].min(axis=0)
    ga_best = pop.F[pop.feasible].min(axis=0)
    wins = int(np.sum(ga_best < base_best))

    passed = frac_feasible >= 0.95 and one_front and wins >= 6 and elapsed < 300
    record_criterion(7, passed, f"(a) feasible {frac_feasible:.0%}, (b) single front {one_front}, "
                                f"(c) beats 5000-pt LHS on {wins}/8 objectives, {elapsed:.1f}s")
    assert same_as_pipeline
    assert frac_feasible >= 0.95, "7a"
    assert one_front, "7b"
    assert wins >= 6, f"7c: GA best strictly better on {wins}/8 (GA {ga_best}, LHS {base_best})"
    assert elapsed < 300


# 8 -------------------------------------------------------------------------

def test_criterion_08_known_trend(desk_run):
    work, _ = desk_run
    pop = read_solutions_csv(work / "solutions_nsga2.csv")
    report = build_pareto_report(pop)
    front = report.solutions
    union = report.highlighted
    rho = spearmanr(front.X[union, 0], front.X[union, 1])[0]
    med_x1, med_x2 = np.median(pop.X[:, 0]), np.median(pop.X[:, 1])
    low_stress = union[front.F[union, 4] < 30.0]
    below = bool(np.all((front.X[low_stress, 0] < med_x1) & (front.X[low_stress, 1] < med_x2)))
    passed = rho < 0 and below
    record_criterion(8, passed, f"Spearman(x1, x2) = {rho:.3f} over {len(union)} highlighted solutions, "
                                f"{len(low_stress)} with O5 < 30 MPa all below median: {below}")
    assert passed


# 9 -------------------------------------------------------------------------

def test_criterion_09_validation_loop(desk_run):
    work, _ = desk_run
    summary = json.loads((work / "validation_summary.json").read_text())
    per_output = summary["per_output_mean"]
    pop = read_solutions_csv(work / "solutions_nsga2.csv")
    space = default_space()
    _, self_check = validate_candidates(pop, lambda X: evaluate_batch(X, space)[0],
                                        lambda x: evaluate(x, space), n=6)
    passed = (summary["n_cases"] == 6 and summary["n_failed"] == 0 and all(v <= 0.05 for v in per_output.values())
              and self_check["max"] == 0.0)
    shown = ", ".join(f"{k} {100 * v:.2f}%" for k, v in per_output.items())
    record_criterion(9, passed, f"mean discrepancy per output: {shown}; self-consistency max {self_check['max']}")
    assert passed


# 10 ------------------------------------------------------------------------

def test_criterion_10_determinism(desk_run, tmp_path_factory):
    first, first_time = desk_run
    second = tmp_path_factory.mktemp("desk_b")
    t0 = time.perf_counter()
    assert main(["pipeline", "--workdir", str(second), "--profile", "desk"]) == EXIT_OK
    second_time = time.perf_counter() - t0
    files = sorted(p.relative_to(first) for p in first.rglob("*") if p.suffix in (".csv", ".json"))
    others = sorted(p.relative_to(second) for p in second.rglob("*") if p.suffix in (".csv", ".json"))
    differing = [str(p) for p in files if (first / p).read_bytes() != (second / p).read_bytes()]
    passed = files == others and not differing and len(files) >= 18
    record_criterion(10, passed, f"{len(files)} artifacts, {len(differing)} differ {differing}; "
                                 f"runs took {first_time:.0f}s and {second_time:.0f}s")
    assert passed
