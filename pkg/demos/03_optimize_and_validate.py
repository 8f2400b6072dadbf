"""Optimise the eight objectives on the surrogate, then re-check a few designs with the oracle."""
import numpy as np

from fzmoo.ensemble import train_ensemble
from fzmoo.neural import Architecture, TrainConfig
from fzmoo.nsga import GaConfig, run
from fzmoo.objectives import population_evaluator, table_objectives, to_raw
from fzmoo.oracle import evaluate, generate_dataset
from fzmoo.param_space import fit_scaler
from fzmoo.report import build_pareto_report, validate_candidates

data = generate_dataset(None, 1500, seed=1).training_view()
scaler = fit_scaler(data.X, data.Y)
model = train_ensemble(Architecture((64, 64, 64, 64)), scaler.transform_x(data.X), scaler.transform_y(data.Y),
                       M=5, base_seed=1, config=TrainConfig(seed=1), scaler=scaler)

specs = table_objectives()
for algo in ("nsga2", "nsga3"):
    res = run(GaConfig(population=100, generations=50, algorithm=algo, granularity=3, seed=1),
              population_evaluator(model, specs))
    rep = build_pareto_report(res.population)
    best = to_raw(rep.solutions.F[rep.solutions.feasible], specs)
    print(f"{algo}: {res.stats[-1]['n_feasible']} feasible, {len(rep.solutions)} on the first front")
    print("   best per objective:", np.array2string(np.r_[best[:, :3].max(0), best[:, 3:].min(0)], precision=4))

# %% Recompute six chosen designs with the oracle
records, summary = validate_candidates(res.population, model, evaluate, n=6)
for r in records:
    print(f"case {r.case}: mean discrepancy {100 * r.mean_discrepancy:.2f}%")
print(f"average over all cases: {100 * summary['mean']:.2f}%")
