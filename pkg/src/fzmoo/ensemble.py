"""Deep ensembles, k-fold cross-validation and architecture search."""
from __future__ import annotations

import csv
import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .neural import MODEL_FORMAT_VERSION, Architecture, Network, TrainConfig, forward, mse_loss, train_many
from .param_space import Scaler, make_rng


@dataclass
class EnsembleModel:
    members: list
    scaler: Scaler | None = None

    def __post_init__(self):
        if not self.members:
            raise ValidationError("an ensemble needs at least one member")
        arch = self.members[0].architecture
        if any(m.architecture != arch for m in self.members):
            raise ValidationError("all ensemble members must share one architecture")

    @property
    def architecture(self) -> Architecture:
        return self.members[0].architecture

    def __len__(self):
        return len(self.members)

    def predict(self, X_scaled):
        """Mean of member outputs and the per-output sample std across members."""
        outs = np.stack([forward(m, X_scaled) for m in self.members])
        mean = outs.mean(axis=0)
        spread = outs.std(axis=0, ddof=1) if len(self.members) > 1 else np.zeros_like(mean)
        return mean, spread

    def predict_physical(self, X):
        """Physical-unit outputs for physical-unit inputs, via the stored scaler."""
        if self.scaler is None:
            raise ValidationError("ensemble has no scaler; use predict() on scaled inputs")
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.scaler.x_min.shape[0]:
            raise ValidationError("input width does not match the ensemble's scaler")
        mean, _ = self.predict(self.scaler.transform_x(X))
        return self.scaler.inverse_y(mean)

    __call__ = predict_physical

    def to_dict(self) -> dict:
        return {
            "version": MODEL_FORMAT_VERSION,
            "kind": "ensemble",
            "architecture": self.architecture.to_dict(),
            "scaler": None if self.scaler is None else self.scaler.to_dict(),
            "members": [{"layers": m.layers_dict()} for m in self.members],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleModel":
        if d.get("version") != MODEL_FORMAT_VERSION:
            raise ValidationError(f"unsupported model file version {d.get('version')!r}")
        members = [Network.from_layers(m["layers"]) for m in d["members"]]
        model = cls(members, None if d.get("scaler") is None else Scaler.from_dict(d["scaler"]))
        if model.architecture != Architecture.from_dict(d["architecture"]):
            raise ValidationError("member shapes disagree with the declared architecture")
        return model

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "EnsembleModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def train_ensemble(arch: Architecture, X, Y, M: int = 10, base_seed: int = 0,
                   config: TrainConfig | None = None, scaler: Scaler | None = None) -> EnsembleModel:
    """Train ``M`` members on the same data; member ``m`` uses seed ``base_seed + m``."""
    if M < 1:
        raise ValidationError("M must be at least 1")
    config = config or TrainConfig()
    results = train_many(arch, X, Y, [base_seed + m for m in range(M)], config)
    return EnsembleModel([r.net for r in results], scaler)


def r_squared(pred, target) -> np.ndarray:
    """Per-output coefficient of determination ``1 - SS_res / SS_tot``.

    Columns with a constant target have no defined R^2 and come back as NaN.
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValidationError(f"shape mismatch {pred.shape} vs {target.shape}")
    if pred.ndim == 1:
        pred, target = pred[:, None], target[:, None]
    if len(target) < 2:
        raise ValidationError("R^2 needs at least two samples")
    ss_res = np.sum((pred - target) ** 2, axis=0)
    ss_tot = np.sum((target - target.mean(axis=0)) ** 2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = 1.0 - ss_res / ss_tot
    return np.where(ss_tot > 0, r2, np.nan)


def train_test_split(n: int, test_fraction: float = 0.1, seed: int = 0):
    """Seeded shuffle split into ``(train_idx, test_idx)``."""
    perm = make_rng(seed).permutation(n)
    n_test = int(round(test_fraction * n))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def kfold_split(n: int, k: int = 10, seed: int = 0) -> list[np.ndarray]:
    """Shuffle ``range(n)`` and cut it into ``k`` folds whose sizes differ by at most one."""
    if k < 1 or k > n:
        raise ValidationError(f"cannot split {n} samples into {k} folds")
    perm = make_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


@dataclass
class CVResult:
    mean: float
    fold_losses: list


def cv_loss(arch: Architecture, X, Y, k: int = 10, config: TrainConfig | None = None) -> CVResult:
    """Train ``k`` networks, each holding out one fold, and average the held-out total MSE.

    Fold assignment and per-fold seeds derive from ``config.seed``.
    """
    config = config or TrainConfig()
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    folds = kfold_split(len(X), k, config.seed)
    everything = np.arange(len(X))
    train_sets = [np.setdiff1d(everything, f, assume_unique=True) for f in folds]
    if k == 1:
        train_sets = [everything]
    seeds = [config.seed * 1000 + f + 1 for f in range(k)]
    results = train_many(arch, X, Y, seeds, config, index_sets=train_sets)
    losses = [mse_loss(forward(r.net, X[f]), Y[f]).total for r, f in zip(results, folds)]
    return CVResult(float(np.mean(losses)), [float(v) for v in losses])


# --- architecture search -----------------------------------------------------

@dataclass(frozen=True)
class ArchitectureBounds:
    min_layers: int = 1
    max_layers: int = 10
    min_neurons: int = 2
    max_neurons: int = 64

    def __post_init__(self):
        if not (1 <= self.min_layers <= self.max_layers and 1 <= self.min_neurons <= self.max_neurons):
            raise ValidationError(f"empty architecture bounds: {self}")

    def contains(self, arch: Architecture) -> bool:
        return (self.min_layers <= arch.hidden_layers <= self.max_layers
                and all(self.min_neurons <= n <= self.max_neurons for n in arch.neurons))

    def random(self, rng: np.random.Generator) -> Architecture:
        depth = int(rng.integers(self.min_layers, self.max_layers + 1))
        widths = rng.integers(self.min_neurons, self.max_neurons + 1, size=depth)
        return Architecture(tuple(int(w) for w in widths))


@dataclass
class HpoTrial:
    index: int
    architecture: Architecture
    mean_loss: float
    fold_losses: list


TPE_GAMMA = 0.25
TPE_CANDIDATES = 24
TPE_STARTUP = 10
TPE_SMOOTHING = 1.0


def _histogram(values, lo, hi, smoothing):
    counts = np.full(hi - lo + 1, smoothing, dtype=float)
    for v in values:
        counts[v - lo] += 1.0
    return counts / counts.sum()


class _ParzenModel:
    """Independent smoothed histograms over depth and over the width at each position."""

    def __init__(self, archs, bounds: ArchitectureBounds, smoothing=TPE_SMOOTHING):
        b = bounds
        self.bounds = b
        self.depth = _histogram([a.hidden_layers for a in archs], b.min_layers, b.max_layers, smoothing)
        self.width = [
            _histogram([a.neurons[p] for a in archs if a.hidden_layers > p], b.min_neurons, b.max_neurons, smoothing)
            for p in range(b.max_layers)
        ]

    def sample(self, rng) -> Architecture:
        b = self.bounds
        depth = b.min_layers + int(rng.choice(len(self.depth), p=self.depth))
        widths = [b.min_neurons + int(rng.choice(len(self.width[p]), p=self.width[p])) for p in range(depth)]
        return Architecture(tuple(widths))

    def log_pdf(self, arch: Architecture) -> float:
        b = self.bounds
        lp = math.log(self.depth[arch.hidden_layers - b.min_layers])
        for p, w in enumerate(arch.neurons):
            lp += math.log(self.width[p][w - b.min_neurons])
        return lp


def tpe_suggest(history, bounds: ArchitectureBounds, seed) -> Architecture:
    """Propose the next architecture with a univariate tree-structured Parzen estimator.

    Fewer than ten finished trials: uniform draw within ``bounds``. Otherwise
    trials are split at the 25% loss quantile into good and bad sets, each
    modelled by Laplace-smoothed histograms; 24 candidates are drawn from the
    good model and the one with the largest good/bad likelihood ratio wins
    (first candidate on ties). If every loss ties, the bad set is taken equal
    to the good set.
    """
    rng = make_rng(seed)
    if len(history) < TPE_STARTUP:
        return bounds.random(rng)
    losses = np.array([t.mean_loss for t in history])
    cut = np.quantile(losses, TPE_GAMMA)
    good = [t.architecture for t in history if t.mean_loss <= cut]
    bad = [t.architecture for t in history if t.mean_loss > cut] or good
    l_model = _ParzenModel(good, bounds)
    g_model = _ParzenModel(bad, bounds)
    best, best_score = None, -math.inf
    for _ in range(TPE_CANDIDATES):
        cand = l_model.sample(rng)
        score = l_model.log_pdf(cand) - g_model.log_pdf(cand)
        if score > best_score:
            best, best_score = cand, score
    return best


@dataclass
class SearchResult:
    trials: list  # ascending by mean loss, ties by trial index

    @property
    def best(self) -> HpoTrial:
        return self.trials[0]

    def best_per_depth(self) -> list:
        seen = {}
        for t in self.trials:
            seen.setdefault(t.architecture.hidden_layers, t)
        return sorted(seen.values(), key=lambda t: (t.mean_loss, t.index))


def _trial_seed(seed, index) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def search_architectures(X, Y, bounds: ArchitectureBounds | None = None, budget: int = 1000,
                         method: str = "tpe", k: int = 10, seed: int = 0,
                         config: TrainConfig | None = None, threads: int = 1, progress=None) -> SearchResult:
    """Evaluate ``budget`` architectures by k-fold CV loss and rank them.

    ``method="random"`` draws uniformly within ``bounds``; ``"tpe"`` uses
    :func:`tpe_suggest` on the trials finished so far. Random trials are
    independent and may run on ``threads`` workers; the ranking does not
    depend on the schedule.
    """
    bounds = bounds or ArchitectureBounds()
    config = config or TrainConfig()
    if budget < 1:
        raise ValidationError("budget must be at least 1")
    if method not in ("random", "tpe"):
        raise ValidationError(f"unknown search method {method!r}")

    trials: list[HpoTrial] = []
    lock = threading.Lock()

    def run(index, arch):
        cfg = TrainConfig(**{**config.__dict__, "seed": seed})  # same folds for every trial
        res = cv_loss(arch, X, Y, k, cfg)
        trial = HpoTrial(index, arch, res.mean, res.fold_losses)
        with lock:
            trials.append(trial)
            if progress:
                progress(trial)
        return trial

    if method == "random":
        archs = [bounds.random(make_rng(_trial_seed(seed, i))) for i in range(budget)]
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(run, range(budget), archs))
        else:
            for i, a in enumerate(archs):
                run(i, a)
    else:
        for i in range(budget):
            done = sorted(trials, key=lambda t: t.index)
            run(i, tpe_suggest(done, bounds, _trial_seed(seed, i)))

    trials.sort(key=lambda t: (t.mean_loss, t.index))
    return SearchResult(trials)


def write_hpo_csv(result: SearchResult, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "mean_loss", "fold_losses", "depth", "widths"])
        for t in result.trials:
            w.writerow([t.index, repr(t.mean_loss), json.dumps(t.fold_losses),
                        t.architecture.hidden_layers, json.dumps(list(t.architecture.neurons))])


def read_hpo_csv(path) -> SearchResult:
    trials = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            trials.append(HpoTrial(int(row["trial"]), Architecture(tuple(json.loads(row["widths"]))),
                                   float(row["mean_loss"]), json.loads(row["fold_losses"])))
    trials.sort(key=lambda t: (t.mean_loss, t.index))
    return SearchResult(trials)


def write_best_per_depth_csv(result: SearchResult, path, max_layers: int = 10):
    """Columns: MSE, hidden layers, then neurons in layers 1..max_layers (blank past the depth)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mse", "hidden_layers"] + [f"layer{i}" for i in range(1, max_layers + 1)])
        for t in result.best_per_depth():
            widths = list(t.architecture.neurons)
            w.writerow([repr(t.mean_loss), len(widths)] + widths + [""] * (max_layers - len(widths)))
