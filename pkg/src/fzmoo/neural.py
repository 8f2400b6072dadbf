"""Feed-forward regression networks in plain numpy.

Hidden layers use the rectifier max(0, z), the output layer is linear.
Weights are stored as ``(fan_out, fan_in)`` so a layer computes
``a = phi(W @ a_prev + b)``.

Training runs several networks of one architecture side by side: the
parameters are stacked along a leading axis and every matmul is batched.
Ensemble members and cross-validation folds are trained this way, which
costs about as much as training a single network when the layers are small.
Each stacked network keeps its own seed, initialisation, shuffling and Adam
state, so the result for network ``p`` does not depend on its neighbours.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ValidationError
from .param_space import N_INPUTS, N_OUTPUTS, make_rng

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Architecture:
    neurons: tuple
    input_dim: int = N_INPUTS
    output_dim: int = N_OUTPUTS

    def __post_init__(self):
        object.__setattr__(self, "neurons", tuple(int(n) for n in self.neurons))
        if not self.neurons:
            raise ValidationError("need at least one hidden layer")
        if any(n < 1 for n in self.neurons) or self.input_dim < 1 or self.output_dim < 1:
            raise ValidationError(f"layer widths must be positive: {self.neurons}")

    @property
    def hidden_layers(self) -> int:
        return len(self.neurons)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim, *self.neurons, self.output_dim]

    def __str__(self):
        return "x".join(map(str, self.neurons))

    def to_dict(self) -> dict:
        return {"neurons": list(self.neurons), "input_dim": self.input_dim, "output_dim": self.output_dim}

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        return cls(tuple(d["neurons"]), d.get("input_dim", N_INPUTS), d.get("output_dim", N_OUTPUTS))


@dataclass
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    seed: int = 0
    init: str = "glorot"  # or "zeros"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be positive")
        if not (self.learning_rate > 0 and 0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ValidationError("invalid Adam hyperparameters")
        if self.init not in ("glorot", "zeros"):
            raise ValidationError(f"unknown init {self.init!r}")


@dataclass
class Network:
    weights: list
    biases: list

    def __post_init__(self):
        self.weights = [np.asarray(W, dtype=float) for W in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        if len(self.weights) != len(self.biases) or len(self.weights) < 2:
            raise ValidationError("need matching weight/bias lists with at least one hidden layer")
        prev = self.weights[0].shape[1]
        for W, b in zip(self.weights, self.biases):
            if W.ndim != 2 or W.shape[1] != prev or b.shape != (W.shape[0],):
                raise ValidationError("layer shapes do not chain")
            prev = W.shape[0]

    @property
    def architecture(self) -> Architecture:
        return Architecture(tuple(W.shape[0] for W in self.weights[:-1]),
                            self.weights[0].shape[1], self.weights[-1].shape[0])

    def copy(self) -> "Network":
        return Network([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def layers_dict(self) -> list:
        return [{"W": W.tolist(), "b": b.tolist()} for W, b in zip(self.weights, self.biases)]

    @classmethod
    def from_layers(cls, layers) -> "Network":
        return cls([np.array(l["W"], dtype=float) for l in layers], [np.array(l["b"], dtype=float) for l in layers])

    def __call__(self, X):
        return forward(self, X)


def init_network(arch: Architecture, rng: np.random.Generator, scheme: str = "glorot") -> Network:
    sizes = arch.layer_sizes
    Ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        if scheme == "zeros":
            W = np.zeros((fan_out, fan_in))
        else:
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            W = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        Ws.append(W)
        bs.append(np.zeros(fan_out))
    return Network(Ws, bs)


# --- stacked kernels ---------------------------------------------------------
# Ws[l]: (P, out, in), bs[l]: (P, out), activations: (P, B, features)

def _forward_stack(Ws, bs, A):
    pre = []
    n_layers = len(Ws)
    for l, (W, b) in enumerate(zip(Ws, bs)):
        Z = np.matmul(A, W.transpose(0, 2, 1))
        Z += b[:, None, :]
        pre.append(A)
        A = Z if l == n_layers - 1 else np.maximum(Z, 0.0)
    return A, pre


def _backward_stack(Ws, inputs, dZ, out=None):
    """Gradients given dLoss/d(output). ``inputs[l]`` is the input to layer ``l``.

    ``out=(gW, gb)`` supplies preallocated arrays to write into.
    """
    n_layers = len(Ws)
    if out is None:
        gW = [np.empty(W.shape) for W in Ws]
        gb = [np.empty(W.shape[:2]) for W in Ws]
    else:
        gW, gb = out
    for l in range(n_layers - 1, -1, -1):
        A_prev = inputs[l]
        np.matmul(dZ.transpose(0, 2, 1), A_prev, out=gW[l])
        np.sum(dZ, axis=1, out=gb[l])
        if l > 0:
            dZ = np.matmul(dZ, Ws[l])
            # rectifier subgradient at exactly 0 is 0; A_prev > 0 iff pre-activation > 0
            dZ *= A_prev > 0.0
    return gW, gb


def _as_batch(X, dim):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != dim:
        raise ValidationError(f"expected {dim} input features, got {X.shape[1]}")
    return X, single


def forward(net: Network, X) -> np.ndarray:
    """Network output for one input vector or a matrix of row vectors."""
    X, single = _as_batch(X, net.weights[0].shape[1])
    A = X
    last = len(net.weights) - 1
    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        Z = A @ W.T + b
        A = Z if l == last else np.maximum(Z, 0.0)
    return A[0] if single else A


@dataclass(frozen=True)
class Loss:
    per_output: np.ndarray
    total: float


def mse_loss(pred, target) -> Loss:
    """Per-output mean squared error and their sum over outputs."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValidationError(f"shape mismatch {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise ValidationError("empty input")
    if pred.ndim == 1:
        pred, target = pred[:, None], target[:, None]
    per = np.mean((pred - target) ** 2, axis=0)
    return Loss(per, float(per.sum()))


def gradients(net: Network, X, Y):
    """Exact gradients of the total MSE w.r.t. every weight matrix and bias vector.

    Returns ``(grad_W, grad_b)`` as lists aligned with ``net.weights``/``net.biases``.
    """
    X, _ = _as_batch(X, net.weights[0].shape[1])
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if len(X) == 0:
        raise ValidationError("empty batch")
    if Y.shape != (len(X), net.weights[-1].shape[0]):
        raise ValidationError(f"target shape {Y.shape} does not match output")
    Ws = [W[None] for W in net.weights]
    bs = [b[None] for b in net.biases]
    out, inputs = _forward_stack(Ws, bs, X[None])
    dZ = 2.0 * (out - Y[None]) / len(X)
    gW, gb = _backward_stack(Ws, inputs, dZ)
    return [g[0] for g in gW], [g[0] for g in gb]


# --- Adam --------------------------------------------------------------------

@dataclass
class AdamState:
    m_W: list
    m_b: list
    v_W: list
    v_b: list
    t: int = 0

    @classmethod
    def zeros_like(cls, net: Network) -> "AdamState":
        z = lambda arrs: [np.zeros_like(a) for a in arrs]  # noqa: E731
        return cls(z(net.weights), z(net.biases), z(net.weights), z(net.biases), 0)


def _adam_update(p, g, m, v, lr, b1, b2, eps, bc1, bc2):
    # folded form: lr*sqrt(bc2)/bc1 * m / (sqrt(v) + eps*sqrt(bc2)) equals the bias-corrected step
    m *= b1
    m += (1.0 - b1) * g
    tmp = np.multiply(g, g)
    tmp *= 1.0 - b2
    v *= b2
    v += tmp
    root_bc2 = np.sqrt(bc2)
    np.sqrt(v, out=tmp)
    tmp += eps * root_bc2
    np.divide(m, tmp, out=tmp)
    tmp *= lr * root_bc2 / bc1
    p -= tmp


def adam_step(net: Network, grads, state: AdamState, config: TrainConfig):
    """One bias-corrected Adam update. Returns new ``(net, state)``; inputs are not modified."""
    gW, gb = grads
    if len(gW) != len(net.weights) or len(gb) != len(net.biases):
        raise ValidationError("gradient list does not match network")
    new = net.copy()
    t = state.t + 1
    st = AdamState([m.copy() for m in state.m_W], [m.copy() for m in state.m_b],
                   [v.copy() for v in state.v_W], [v.copy() for v in state.v_b], t)
    bc1 = 1.0 - config.beta1**t
    bc2 = 1.0 - config.beta2**t
    for params, grads_, ms, vs in ((new.weights, gW, st.m_W, st.v_W), (new.biases, gb, st.m_b, st.v_b)):
        for p, g, m, v in zip(params, grads_, ms, vs):
            g = np.asarray(g, dtype=float)
            if g.shape != p.shape:
                raise ValidationError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            _adam_update(p, g, m, v, config.learning_rate, config.beta1, config.beta2, config.eps, bc1, bc2)
    return new, st


# --- training ----------------------------------------------------------------

@dataclass
class TrainResult:
    net: Network
    history: np.ndarray = field(repr=False)


# overflow is detected after each epoch and raised as NumericError
@np.errstate(over="ignore", invalid="ignore")
def train_many(arch: Architecture, X, Y, seeds, config: TrainConfig, index_sets=None) -> list[TrainResult]:
    """Train one network per seed, all with ``arch``, in a single stacked loop.

    ``index_sets[p]`` selects the rows of ``X``/``Y`` network ``p`` trains on
    (default: all rows). Network ``p`` is initialised and shuffled from
    ``seeds[p]`` alone.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim != 2 or Y.ndim != 2 or len(X) != len(Y):
        raise ValidationError("X and Y must be 2-D with matching rows")
    if X.shape[1] != arch.input_dim or Y.shape[1] != arch.output_dim:
        raise ValidationError(f"data shape {X.shape}/{Y.shape} does not fit architecture {arch}")
    seeds = list(seeds)
    P = len(seeds)
    if P == 0:
        return []
    if index_sets is None:
        index_sets = [np.arange(len(X))] * P
    index_sets = [np.asarray(ix, dtype=np.intp) for ix in index_sets]
    if len(index_sets) != P:
        raise ValidationError("need one index set per seed")
    sizes = np.array([len(ix) for ix in index_sets])
    if np.any(sizes == 0):
        raise ValidationError("training data is empty")
    if np.any(sizes == 1):
        warnings.warn("training on a single sample; using full-batch updates", RuntimeWarning, stacklevel=2)

    cfg = config
    B = cfg.batch_size
    rngs = [make_rng(s) for s in seeds]
    nets = [init_network(arch, rng, cfg.init) for rng in rngs]
    # all stacked parameters live in one flat buffer so Adam is a single vector update
    shapes = [(P,) + W.shape for W in nets[0].weights] + [(P,) + b.shape for b in nets[0].biases]
    offsets = np.cumsum([0] + [math.prod(sh) for sh in shapes])
    theta = np.empty(offsets[-1])
    gflat = np.empty_like(theta)
    views = lambda buf: [buf[a:b].reshape(sh) for a, b, sh in zip(offsets[:-1], offsets[1:], shapes)]  # noqa: E731
    params, grads = views(theta), views(gflat)
    n_w = len(nets[0].weights)
    for p, n in enumerate(nets):
        for dst, src in zip(params, n.weights + n.biases):
            dst[p] = src
    Ws, bs = params[:n_w], params[n_w:]
    gWs, gbs = grads[:n_w], grads[n_w:]
    owner = np.concatenate([np.repeat(np.arange(P), math.prod(sh[1:])) for sh in shapes])
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    t = np.zeros(P)

    n_batches = -(-sizes // B)
    max_nb = int(n_batches.max())
    # per-batch row counts and per-row weights, fixed across epochs
    counts = np.zeros((P, max_nb))
    for p in range(P):
        full, rem = divmod(int(sizes[p]), B)
        counts[p, :full] = B
        if rem:
            counts[p, full] = rem
    row_w = np.zeros((P, max_nb, B))
    for p in range(P):
        for k in range(int(n_batches[p])):
            c = int(counts[p, k])
            row_w[p, k, :c] = 1.0 / c
    all_active = bool(np.all(n_batches == max_nb))

    history = np.zeros((P, cfg.epochs))
    batch_idx = np.zeros((P, max_nb * B), dtype=np.intp)
    for epoch in range(cfg.epochs):
        batch_idx[:] = 0
        for p in range(P):
            ix = index_sets[p]
            batch_idx[p, : sizes[p]] = ix[rngs[p].permutation(sizes[p])]
        bidx = batch_idx.reshape(P, max_nb, B)
        epoch_loss = np.zeros(P)
        for k in range(max_nb):
            sel = bidx[:, k]
            w = row_w[:, k][:, :, None]
            out, inputs = _forward_stack(Ws, bs, X[sel])
            r = out - Y[sel]
            epoch_loss += (w * r * r).sum(axis=(1, 2)) * counts[:, k]
            _backward_stack(Ws, inputs, 2.0 * w * r, out=(gWs, gbs))
            if all_active:
                t += 1
                _adam_flat(theta, gflat, m, v, t[0], cfg)
            else:
                # networks with fewer batches sit out the tail steps of an epoch
                active = k < n_batches
                t[active] += 1
                _adam_flat(theta, gflat, m, v, t, cfg, owner, None if active.all() else active[owner])
        history[:, epoch] = epoch_loss / sizes
        if not np.isfinite(theta).all():
            raise NumericError(f"non-finite parameters after epoch {epoch + 1}")

    results = []
    for p in range(P):
        net = Network([W[p].copy() for W in params[:n_w]], [b[p].copy() for b in params[n_w:]])
        results.append(TrainResult(net, history[p].copy()))
    return results


def _adam_flat(theta, g, m, v, t, cfg, owner=None, active=None):
    """In-place Adam on the flat buffers.

    ``t`` is a scalar step count, or per-network counts mapped to elements by
    ``owner``. Elements with ``active`` False keep their parameters and moments.
    """
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    if owner is not None:
        bc1, bc2 = bc1[owner], bc2[owner]
    if active is None:
        _adam_update(theta, g, m, v, cfg.learning_rate, b1, b2, cfg.eps, bc1, bc2)
        return
    p2, m2, v2 = theta.copy(), m.copy(), v.copy()
    _adam_update(p2, g, m2, v2, cfg.learning_rate, b1, b2, cfg.eps, bc1, bc2)
    np.copyto(theta, p2, where=active)
    np.copyto(m, m2, where=active)
    np.copyto(v, v2, where=active)


def train(arch: Architecture, X, Y, config: TrainConfig) -> tuple[Network, np.ndarray]:
    """Mini-batch Adam on the total MSE for ``config.epochs`` passes.

    Returns the trained network and the per-epoch mean training loss.
    """
    res = train_many(arch, X, Y, [config.seed], config)[0]
    return res.net, res.history


# --- model files -------------------------------------------------------------

def network_to_dict(net: Network, scaler=None) -> dict:
    return {
        "version": MODEL_FORMAT_VERSION,
        "architecture": net.architecture.to_dict(),
        "scaler": None if scaler is None else scaler.to_dict(),
        "layers": net.layers_dict(),
    }


def save_network(net: Network, path, scaler=None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(network_to_dict(net, scaler), fh)
        fh.write("\n")


def load_network(path):
    """Read a model file; returns ``(network, scaler_or_None)``."""
    from .param_space import Scaler

    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    if d.get("version") != MODEL_FORMAT_VERSION:
        raise ValidationError(f"unsupported model file version {d.get('version')!r}")
    net = Network.from_layers(d["layers"])
    if net.architecture != Architecture.from_dict(d["architecture"]):
        raise ValidationError("layer shapes disagree with the declared architecture")
    scaler = None if d.get("scaler") is None else Scaler.from_dict(d["scaler"])
    return net, scaler
