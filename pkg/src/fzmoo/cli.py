"""Command-line driver for the sample -> simulate -> hpo -> train -> optimize -> validate -> report chain.

Every stage reads and writes plain CSV/JSON files in a work directory, so
stages can be rerun individually. ``--profile`` picks desk-scale or
full-scale defaults, ``--config`` overlays a JSON file and explicit flags
win over both.

Exit codes: 0 ok, 2 usage/config error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from .ensemble import (
    ArchitectureBounds, EnsembleModel, r_squared, read_hpo_csv, search_architectures, train_ensemble,
    train_test_split, write_best_per_depth_csv, write_hpo_csv,
)
from .errors import (
    DataFormatError, DegenerateScaleError, DomainError, EmptyDesignError, FzMooError, NumericError, ValidationError,
)
from .neural import Architecture, TrainConfig, mse_loss
from .nsga import GaConfig, read_solutions_csv, reference_point_count, run, write_solutions_csv, write_stats_csv
from .objectives import load_objectives, population_evaluator
from .oracle import Dataset, evaluate, evaluate_batch, ingest_csv, write_csv
from .param_space import OUTPUT_NAMES, fit_scaler, lhs_sample, load_space, read_design_csv, write_design_csv
from .report import (
    build_pareto_report, export_parallel_coordinates, read_validation_csv, summarize_distributions,
    validate_candidates, write_json, write_pareto_csv, write_validation_csv,
)

log = logging.getLogger("fzmoo")

CONFIG_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

PROFILES = {
    "desk": {
        "seed": 42,
        "space": None,
        "objectives": None,
        "sample": {"n": 1000, "midpoint": False},
        "hpo": {"trials": 100, "method": "tpe", "folds": 10,
                "min_layers": 1, "max_layers": 10, "min_neurons": 2, "max_neurons": 64},
        "train": {"members": 10, "epochs": 100, "batch_size": 32, "learning_rate": 1e-3,
                  "test_fraction": 0.1, "arch": None},
        "optimize": {"algorithms": ["nsga2", "nsga3"], "population": 100, "generations": 50,
                     "crossover_prob": 0.7, "mutation_prob": 0.05, "eta_c": 15.0, "eta_m": 20.0,
                     "granularity": 3},
        "validate": {"n": 6, "algorithm": "nsga2"},
    },
}
PROFILES["paper"] = copy.deepcopy(PROFILES["desk"])
PROFILES["paper"]["sample"]["n"] = 2500
PROFILES["paper"]["hpo"]["trials"] = 1000
PROFILES["paper"]["optimize"].update(population=500, generations=250, granularity=12)

FILES = {
    "design": "design.csv",
    "dataset": "dataset.csv",
    "hpo": "hpo.csv",
    "hpo_best": "hpo_best_per_depth.csv",
    "model": "model.json",
    "metrics": "train_metrics.json",
    "validation": "validation.csv",
    "validation_summary": "validation_summary.json",
    "report": "report",
    "config": "config.json",
}


def solutions_file(algo):
    return f"solutions_{algo}.csv"


def stats_file(algo):
    return f"stats_{algo}.csv"


# --- configuration -----------------------------------------------------------

def _merge(base: dict, over: dict, where="config") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if key not in base:
            raise ValidationError(f"unknown {where} key {key!r}")
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _merge(base[key], val, f"{where}.{key}")
        else:
            out[key] = val
    return out


def resolve_config(profile: str = "desk", path=None, overrides: dict | None = None) -> dict:
    if profile not in PROFILES:
        raise ValidationError(f"unknown profile {profile!r}")
    cfg = copy.deepcopy(PROFILES[profile])
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            user = json.load(fh)
        version = user.pop("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ValidationError(f"config version {version} is not supported (expected {CONFIG_VERSION})")
        base_profile = user.pop("profile", profile)
        cfg = _merge(copy.deepcopy(PROFILES[base_profile]), user)
    if overrides:
        cfg = _merge(cfg, overrides)
    cfg["version"] = CONFIG_VERSION
    return cfg


def _overrides(args, mapping: dict) -> dict:
    """Turn set flags into a nested override dict using ``mapping[flag] = (section, key)``."""
    out: dict = {}
    for flag, target in mapping.items():
        val = getattr(args, flag, None)
        if val is None:
            continue
        if target[0] is None:
            out[target[1]] = val
        else:
            out.setdefault(target[0], {})[target[1]] = val
    return out


def _need(path: Path, stage: str) -> Path:
    if not path.exists():
        raise DataFormatError(f"{stage}: required file is missing", path)
    return path


# --- stages ------------------------------------------------------------------

def stage_sample(cfg, work: Path):
    space = load_space(cfg["space"])
    design = lhs_sample(space, cfg["sample"]["n"], cfg["seed"], midpoint=cfg["sample"]["midpoint"])
    write_design_csv(design, work / FILES["design"])
    log.info("sample: %d rows -> %s", len(design), work / FILES["design"])


def stage_simulate(cfg, work: Path, ingest=None):
    if ingest is not None:
        data = ingest_csv(ingest)
        log.info("simulate: ingested %d rows from %s", len(data), ingest)
    else:
        space = load_space(cfg["space"])
        design = read_design_csv(_need(work / FILES["design"], "simulate"))
        Y, feas, _ = evaluate_batch(design.rows, space)
        data = Dataset(design.rows, Y, feas)
        log.info("simulate: %d rows, %d infeasible (%.2f%%)", len(data), int((~feas).sum()),
                 100.0 * (~feas).mean())
    write_csv(data, work / FILES["dataset"])


def _train_split(cfg, work: Path):
    data = ingest_csv(_need(work / FILES["dataset"], "train")).training_view()
    tr, te = train_test_split(len(data), cfg["train"]["test_fraction"], cfg["seed"])
    scaler = fit_scaler(data.X[tr], data.Y[tr])
    return data, tr, te, scaler


def _train_config(cfg, seed=None) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(epochs=t["epochs"], batch_size=t["batch_size"], learning_rate=t["learning_rate"],
                       seed=cfg["seed"] if seed is None else seed)


def stage_hpo(cfg, work: Path, threads: int = 1):
    data, tr, _, scaler = _train_split(cfg, work)
    h = cfg["hpo"]
    bounds = ArchitectureBounds(h["min_layers"], h["max_layers"], h["min_neurons"], h["max_neurons"])
    X, Y = scaler.transform_x(data.X[tr]), scaler.transform_y(data.Y[tr])

    def progress(t):
        log.debug("hpo trial %d: %s loss %.4e", t.index, t.architecture, t.mean_loss)

    result = search_architectures(X, Y, bounds, budget=h["trials"], method=h["method"], k=h["folds"],
                                  seed=cfg["seed"], config=_train_config(cfg), threads=threads,
                                  progress=progress)
    write_hpo_csv(result, work / FILES["hpo"])
    write_best_per_depth_csv(result, work / FILES["hpo_best"], bounds.max_layers)
    log.info("hpo: best %s (cv loss %.4e) of %d trials", result.best.architecture, result.best.mean_loss,
             len(result.trials))


def _pick_architecture(cfg, work: Path) -> Architecture:
    if cfg["train"]["arch"]:
        return Architecture(tuple(cfg["train"]["arch"]))
    hpo = work / FILES["hpo"]
    if hpo.exists():
        return read_hpo_csv(hpo).best.architecture
    log.info("train: no hpo.csv and no --arch; using 32x32x32")
    return Architecture((32, 32, 32))


def stage_train(cfg, work: Path):
    data, tr, te, scaler = _train_split(cfg, work)
    arch = _pick_architecture(cfg, work)
    Xtr, Ytr = scaler.transform_x(data.X[tr]), scaler.transform_y(data.Y[tr])
    model = train_ensemble(arch, Xtr, Ytr, cfg["train"]["members"], cfg["seed"], _train_config(cfg), scaler)
    model.save(work / FILES["model"])
    Yte = scaler.transform_y(data.Y[te])
    pred, _ = model.predict(scaler.transform_x(data.X[te]))
    loss = mse_loss(pred, Yte)
    r2 = r_squared(pred, Yte)
    metrics = {
        "architecture": list(arch.neurons),
        "members": len(model),
        "n_train": int(len(tr)),
        "n_test": int(len(te)),
        "test_mse": dict(zip(OUTPUT_NAMES, map(float, loss.per_output))),
        "test_r2": dict(zip(OUTPUT_NAMES, map(float, r2))),
    }
    write_json(metrics, work / FILES["metrics"])
    log.info("train: %s x%d, test MSE max %.2e, R2 min %.4f", arch, len(model),
             loss.per_output.max(), np.nanmin(r2))


def _ga_config(cfg, algo) -> GaConfig:
    o = cfg["optimize"]
    return GaConfig(population=o["population"], generations=o["generations"], crossover_prob=o["crossover_prob"],
                    mutation_prob=o["mutation_prob"], eta_c=o["eta_c"], eta_m=o["eta_m"], algorithm=algo,
                    granularity=o["granularity"], seed=cfg["seed"])


def stage_optimize(cfg, work: Path):
    space = load_space(cfg["space"])
    specs = load_objectives(cfg["objectives"])
    model = EnsembleModel.load(_need(work / FILES["model"], "optimize"))
    evaluator = population_evaluator(model, specs)
    for algo in cfg["optimize"]["algorithms"]:
        ga = _ga_config(cfg, algo)
        if algo == "nsga3":
            n_refs = reference_point_count(len(specs), ga.granularity)
            msg = f"NSGA-III with g={ga.granularity} uses {n_refs} reference points"
            if n_refs > 10_000:
                log.warning("%s; expect a long run", msg)
            else:
                log.info(msg)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            result = run(ga, evaluator, space, n_objectives=len(specs))
        write_solutions_csv(result.population, work / solutions_file(algo))
        write_stats_csv(result.stats, work / stats_file(algo), algo)
        last = result.stats[-1]
        log.info("optimize %s: %d/%d feasible, front-1 size %d", algo, last["n_feasible"],
                 len(result.population), last["front1_size"])


def stage_validate(cfg, work: Path):
    space = load_space(cfg["space"])
    algo = cfg["validate"]["algorithm"]
    model = EnsembleModel.load(_need(work / FILES["model"], "validate"))
    pop = read_solutions_csv(_need(work / solutions_file(algo), "validate"))
    records, summary = validate_candidates(pop, model, lambda x: evaluate(x, space), cfg["validate"]["n"])
    summary["algorithm"] = algo
    write_validation_csv(records, work / FILES["validation"])
    write_json(summary, work / FILES["validation_summary"])
    log.info("validate: mean discrepancy %.2f%% over %d cases, %d infeasible on recomputation",
             100 * summary["mean"], summary["n_cases"], summary["n_infeasible"])


def stage_report(cfg, work: Path):
    out = work / FILES["report"]
    out.mkdir(parents=True, exist_ok=True)
    specs = load_objectives(cfg["objectives"])
    data = ingest_csv(_need(work / FILES["dataset"], "report"))
    model = EnsembleModel.load(_need(work / FILES["model"], "report"))
    reports, solution_sets, stats_rows = {}, {}, []
    for algo in cfg["optimize"]["algorithms"]:
        path = work / solutions_file(algo)
        if not path.exists():
            log.warning("report: %s missing, skipping %s", path, algo)
            continue
        pop = read_solutions_csv(path)
        reports[algo] = build_pareto_report(pop)
        front = reports[algo].solutions
        solution_sets[algo] = (front.X, model(front.X))
        stats_path = work / stats_file(algo)
        if stats_path.exists():
            lines = stats_path.read_text(encoding="utf-8").splitlines()
            stats_rows.append(lines if not stats_rows else lines[1:])
    if not reports:
        raise DataFormatError("report: no solutions files found", work)
    write_pareto_csv(reports, out / "pareto.csv", predictor=model)
    export_parallel_coordinates({a: r.solutions for a, r in reports.items()}, out / "parallel_coords.csv", specs)
    write_json(summarize_distributions(data, solution_sets), out / "violin.json")
    if (work / FILES["validation"]).exists():
        write_validation_csv(read_validation_csv(work / FILES["validation"]), out / "validation.csv")
    with open(out / "stats.csv", "w", encoding="utf-8", newline="\n") as fh:
        for block in stats_rows:
            fh.write("\n".join(block) + "\n")
    log.info("report: written to %s", out)


STAGES = ("sample", "simulate", "hpo", "train", "optimize", "validate", "report")


def run_pipeline(cfg, work: Path, threads: int = 1):
    work.mkdir(parents=True, exist_ok=True)
    write_json(cfg, work / FILES["config"])
    stage_sample(cfg, work)
    stage_simulate(cfg, work)
    stage_hpo(cfg, work, threads)
    stage_train(cfg, work)
    stage_optimize(cfg, work)
    stage_validate(cfg, work)
    stage_report(cfg, work)


# --- argument parsing --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fzmoo", description=__doc__.splitlines()[0],
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for independent HPO trials")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(sp):
        sp.add_argument("--workdir", type=Path, default=Path("."), help="directory holding stage files")
        sp.add_argument("--profile", choices=sorted(PROFILES), default="desk", help="default parameter set")
        sp.add_argument("--config", type=Path, help="JSON config overlay")
        sp.add_argument("--seed", type=int, help="master seed for every random choice")
        sp.add_argument("--space", help="parameter-space JSON (default: shipped table)")
        return sp

    sp = common(sub.add_parser("sample", help="Latin hypercube design -> design.csv"))
    sp.add_argument("--n", type=int, help="number of samples")
    sp.add_argument("--midpoint", action="store_const", const=True, help="stratum centres instead of jitter")

    sp = common(sub.add_parser("simulate", help="run the oracle on design.csv -> dataset.csv"))
    sp.add_argument("--ingest", type=Path, help="copy an external x1..x12,y1..y6[,feasible] CSV instead")

    sp = common(sub.add_parser("hpo", help="architecture search -> hpo.csv, hpo_best_per_depth.csv"))
    sp.add_argument("--trials", type=int, help="number of architectures to evaluate")
    sp.add_argument("--method", choices=["tpe", "random"], help="search strategy")
    sp.add_argument("--folds", type=int, help="cross-validation folds")
    sp.add_argument("--epochs", type=int, help="training epochs per fold")

    sp = common(sub.add_parser("train", help="train the deep ensemble -> model.json, train_metrics.json"))
    sp.add_argument("--arch", help="comma-separated hidden widths, e.g. 32,32,32 (default: best from hpo.csv)")
    sp.add_argument("--members", type=int, help="ensemble size M")
    sp.add_argument("--epochs", type=int, help="training epochs")

    sp = common(sub.add_parser("optimize", help="NSGA-II/III on the surrogate -> solutions_*.csv, stats_*.csv"))
    sp.add_argument("--objectives", help="objective-table JSON (default: shipped table)")
    sp.add_argument("--algo", choices=["nsga2", "nsga3", "both"], help="algorithm(s) to run")
    sp.add_argument("--pop", type=int, help="population size (even)")
    sp.add_argument("--gens", type=int, help="generations")
    sp.add_argument("--g", type=int, help="NSGA-III reference-point granularity")

    sp = common(sub.add_parser("validate", help="recompute selected solutions with the oracle -> validation.csv"))
    sp.add_argument("--algo", choices=["nsga2", "nsga3"], help="which solutions file to validate")
    sp.add_argument("--n", type=int, help="number of candidates")

    sp = common(sub.add_parser("report", help="Pareto, parallel-coordinate and distribution exports -> report/"))
    sp.add_argument("--objectives", help="objective-table JSON (default: shipped table)")

    sp = common(sub.add_parser("pipeline", help="run every stage in order"))
    sp.add_argument("--objectives", help="objective-table JSON (default: shipped table)")
    return p


FLAG_MAP = {
    "seed": (None, "seed"),
    "space": (None, "space"),
    "objectives": (None, "objectives"),
}


def _command_overrides(args) -> dict:
    over = _overrides(args, FLAG_MAP)
    cmd = args.command
    if cmd == "sample":
        over.update(_overrides(args, {"n": ("sample", "n"), "midpoint": ("sample", "midpoint")}))
    elif cmd == "hpo":
        over = _merge_dicts(over, _overrides(args, {"trials": ("hpo", "trials"), "method": ("hpo", "method"),
                                                   "folds": ("hpo", "folds"), "epochs": ("train", "epochs")}))
    elif cmd == "train":
        over = _merge_dicts(over, _overrides(args, {"members": ("train", "members"), "epochs": ("train", "epochs")}))
        if args.arch:
            try:
                widths = [int(w) for w in args.arch.split(",")]
            except ValueError:
                raise ValidationError(f"--arch must be comma-separated integers, got {args.arch!r}") from None
            over.setdefault("train", {})["arch"] = widths
    elif cmd == "optimize":
        over = _merge_dicts(over, _overrides(args, {"pop": ("optimize", "population"),
                                                   "gens": ("optimize", "generations"),
                                                   "g": ("optimize", "granularity")}))
        if args.algo:
            algos = ["nsga2", "nsga3"] if args.algo == "both" else [args.algo]
            over.setdefault("optimize", {})["algorithms"] = algos
    elif cmd == "validate":
        over = _merge_dicts(over, _overrides(args, {"algo": ("validate", "algorithm"), "n": ("validate", "n")}))
    return over


def _merge_dicts(a: dict, b: dict) -> dict:
    out = copy.deepcopy(a)
    for k, v in b.items():
        if isinstance(v, dict):
            out.setdefault(k, {}).update(v)
        else:
            out[k] = v
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose + 1, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args.profile, args.config, _command_overrides(args))
    except (FzMooError, OSError, ValueError) as exc:
        log.error("config error: %s", exc)
        return EXIT_USAGE
    work = args.workdir
    try:
        work.mkdir(parents=True, exist_ok=True)
        if args.command == "pipeline":
            run_pipeline(cfg, work, args.threads)
        elif args.command == "simulate":
            stage_simulate(cfg, work, args.ingest)
        elif args.command == "hpo":
            stage_hpo(cfg, work, args.threads)
        else:
            globals()[f"stage_{args.command}"](cfg, work)
    except NumericError as exc:
        log.error("%s: numeric failure: %s", args.command, exc)
        return EXIT_NUMERIC
    except (DataFormatError, DomainError, DegenerateScaleError, EmptyDesignError,
            OSError, json.JSONDecodeError) as exc:
        log.error("%s: data error: %s", args.command, exc)
        return EXIT_DATA
    except FzMooError as exc:
        log.error("%s: %s", args.command, exc)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
