"""Fully connected regression network mapping normalized TDoA vectors to (x, y).

Plain numpy: ReLU hidden layers with inverted dropout, a linear two-unit
output, mean-squared-error loss, Adam, and early stopping on a validation
split. Weights are float64 throughout so gradients can be checked against
central finite differences.
"""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .fingerprint import Normalizer
from .geometry import Point2D

MAGIC = b"PSFIMDL\x00"
FORMAT_VERSION = 1
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class NumericalError(ArithmeticError):
    """Training diverged (non-finite loss)."""


@dataclass(frozen=True)
class ModelConfig:
    input_size: int
    hidden_layers: int = 4
    hidden_width: int = 300
    dropout_rate: float = 0.10
    learning_rate: float = 0.001
    patience: int = 50
    max_epochs: int = 500
    batch_size: int = 64
    validation_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.input_size < 1 or self.hidden_width < 1 or self.hidden_layers < 0:
            raise ValueError("input_size and hidden_width must be >= 1, hidden_layers >= 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.patience < 1 or self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("patience, max_epochs and batch_size must be >= 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_size] + [self.hidden_width] * self.hidden_layers + [2]


@dataclass
class TrainedModel:
    config: ModelConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    history: list[dict] = field(default_factory=list)

    @property
    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def parameters(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> TrainedModel:
        return TrainedModel(self.config, [w.copy() for w in self.weights],
                            [b.copy() for b in self.biases], list(self.history))


def init_model(config: ModelConfig) -> TrainedModel:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases."""
    rng = np.random.default_rng(config.seed)
    sizes = config.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, fan_out))
    return TrainedModel(config, weights, biases)


def _forward(model: TrainedModel, x: np.ndarray, rng: np.random.Generator | None):
    """Returns output and the cache for backprop. ``rng`` enables dropout."""
    rate = model.config.dropout_rate
    last = len(model.weights) - 1
    acts, masks = [x], []
    h = x
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        if l == last:
            return z, (acts, masks)
        h = np.maximum(z, 0.0)
        if rng is not None and rate > 0:
            m = (rng.random(h.shape) >= rate) / (1.0 - rate)
            h = h * m
        else:
            m = None
        masks.append(m)
        acts.append(h)
    raise AssertionError("unreachable")


def _backward(model: TrainedModel, cache, d_out: np.ndarray):
    acts, masks = cache
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.weights)
    d = d_out
    for l in range(len(model.weights) - 1, -1, -1):
        grads_w[l] = acts[l].T @ d
        grads_b[l] = d.sum(axis=0)
        if l == 0:
            break
        d = d @ model.weights[l].T
        m = masks[l - 1]
        if m is not None:
            d = d * m
        # acts[l] > 0 exactly where the ReLU was active and the unit was kept.
        d = d * (acts[l] > 0)
    return grads_w, grads_b


def _mse(pred: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean((pred - y) ** 2))


def _loss_and_grads(model: TrainedModel, x, y, rng=None):
    pred, cache = _forward(model, x, rng)
    diff = pred - y
    loss = float(np.mean(diff ** 2))
    gw, gb = _backward(model, cache, 2.0 * diff / diff.size)
    return loss, gw, gb


def _check_width(model: TrainedModel, x: np.ndarray):
    if x.shape[-1] != model.config.input_size:
        raise ValueError(f"feature length {x.shape[-1]} does not match model input {model.config.input_size}")


def predict(model: TrainedModel, x: np.ndarray) -> np.ndarray:
    """Inference-mode outputs for a (m, n) matrix of normalized features."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _check_width(model, x)
    return _forward(model, x, None)[0]


def forward(model: TrainedModel, features, mode: str = "infer", seed=None) -> Point2D:
    values = np.asarray(getattr(features, "values", features), dtype=float)
    _check_width(model, values)
    if mode == "infer":
        out = _forward(model, values[None, :], None)[0][0]
    elif mode == "train":
        out = _forward(model, values[None, :], np.random.default_rng(seed))[0][0]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return Point2D(float(out[0]), float(out[1]))


class EarlyStopping:
    """Tracks the best validation loss; ``step`` returns True when training should stop."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = -1
        self.wait = 0

    def step(self, epoch: int, val_loss: float) -> bool:
        if val_loss < self.best:
            self.best, self.best_epoch, self.wait = val_loss, epoch, 0
            return False
        self.wait += 1
        return self.wait >= self.patience


def train(
    model: TrainedModel,
    x: np.ndarray,
    y: np.ndarray,
    config: ModelConfig | None = None,
    x_val: np.ndarray | None = None,
    y_val: np.ndarray | None = None,
) -> TrainedModel:
    """Adam on MSE with early stopping; returns the best-validation weights.

    Without an explicit validation set, ``validation_fraction`` of ``x`` is
    held out.
    """
    cfg = config or model.config
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) == 0:
        raise ValueError("no training data")
    _check_width(model, x)
    rng = np.random.default_rng(cfg.seed + 1)
    if x_val is None:
        if len(x) < 2:
            raise ValueError("need at least two records to hold out a validation split")
        order = rng.permutation(len(x))
        n_val = min(max(1, int(round(cfg.validation_fraction * len(x)))), len(x) - 1)
        x_val, y_val = x[order[:n_val]], y[order[:n_val]]
        x, y = x[order[n_val:]], y[order[n_val:]]
    x_val = np.asarray(x_val, dtype=float)
    y_val = np.asarray(y_val, dtype=float)

    model = model.copy()
    model.history = []
    params = model.parameters()
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    step = 0
    stopper = EarlyStopping(cfg.patience)
    best = model.copy()
    lr = cfg.learning_rate

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(x))
        total = 0.0
        for s in range(0, len(x), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            loss, gw, gb = _loss_and_grads(model, x[idx], y[idx], rng)
            total += loss * len(idx)
            step += 1
            grads = [g for pair in zip(gw, gb) for g in pair]
            corr1 = 1.0 - ADAM_BETA1 ** step
            corr2 = 1.0 - ADAM_BETA2 ** step
            for p, g, a, v in zip(params, grads, m1, m2):
                a *= ADAM_BETA1
                a += (1.0 - ADAM_BETA1) * g
                v *= ADAM_BETA2
                v += (1.0 - ADAM_BETA2) * g * g
                p -= lr * (a / corr1) / (np.sqrt(v / corr2) + ADAM_EPS)
        train_loss = total / len(x)
        val_loss = _mse(predict(model, x_val), y_val)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise NumericalError(f"non-finite loss at epoch {epoch}")
        model.history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        improved = val_loss < stopper.best
        stop = stopper.step(epoch, val_loss)
        if improved:
            best = model.copy()
        if stop:
            break

    best.history = model.history
    best.config = cfg
    return best


def gradient_check(model: TrainedModel, x, y, epsilon: float = 1e-5, n_params: int = 100, seed: int = 0) -> float:
    """Max relative error between backprop and central differences on sampled parameters."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    probe = model.copy()
    probe.config = replace(model.config, dropout_rate=0.0)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    _, gw, gb = _loss_and_grads(probe, x, y)
    params = probe.parameters()
    grads = [g for pair in zip(gw, gb) for g in pair]
    sizes = np.array([p.size for p in params])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(n_params, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    for flat in picks:
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        p, g = params[k].reshape(-1), grads[k].reshape(-1)
        j = flat - offsets[k]
        orig = p[j]
        p[j] = orig + epsilon
        up = _mse(_forward(probe, x, None)[0], y)
        p[j] = orig - epsilon
        down = _mse(_forward(probe, x, None)[0], y)
        p[j] = orig
        numeric = (up - down) / (2 * epsilon)
        analytic = g[j]
        denom = abs(numeric) + abs(analytic)
        if denom == 0.0:
            continue
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst


# ---- persistence -----------------------------------------------------------------

_HEADER = struct.Struct("<8sIII")
_HYPER = struct.Struct("<ddIIIdQ")


def save_model(path, model: TrainedModel, normalizer: Normalizer) -> None:
    cfg = model.config
    sizes = cfg.layer_sizes
    if len(normalizer) != cfg.input_size:
        raise ValueError("normalizer width does not match model input")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, FORMAT_VERSION, cfg.input_size, len(sizes)))
        f.write(struct.pack(f"<{len(sizes)}I", *sizes))
        f.write(_HYPER.pack(cfg.dropout_rate, cfg.learning_rate, cfg.patience, cfg.max_epochs,
                            cfg.batch_size, cfg.validation_fraction, cfg.seed))
        f.write(normalizer.mins.astype("<f8").tobytes())
        f.write(normalizer.maxs.astype("<f8").tobytes())
        for w, b in zip(model.weights, model.biases):
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def read_header(path) -> dict:
    with open(path, "rb") as f:
        return _read_header(f)


def _read_header(f) -> dict:
    raw = f.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise ValueError("truncated model file")
    magic, version, n, n_sizes = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise ValueError("not a model file (bad magic)")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version}")
    sizes = list(struct.unpack(f"<{n_sizes}I", f.read(4 * n_sizes)))
    dropout, lr, patience, max_epochs, batch, val_frac, seed = _HYPER.unpack(f.read(_HYPER.size))
    return {
        "version": version, "input_size": n, "layer_sizes": sizes, "dropout_rate": dropout,
        "learning_rate": lr, "patience": patience, "max_epochs": max_epochs,
        "batch_size": batch, "validation_fraction": val_frac, "seed": seed,
    }


def load_model(path) -> tuple[TrainedModel, Normalizer]:
    with open(path, "rb") as f:
        h = _read_header(f)
        n = h["input_size"]
        sizes = h["layer_sizes"]
        widths = set(sizes[1:-1])
        if sizes[0] != n or sizes[-1] != 2 or len(widths) > 1:
            raise ValueError(f"unsupported layer sizes {sizes}")
        cfg = ModelConfig(
            input_size=n, hidden_layers=len(sizes) - 2, hidden_width=widths.pop() if widths else 300,
            dropout_rate=h["dropout_rate"], learning_rate=h["learning_rate"], patience=h["patience"],
            max_epochs=h["max_epochs"], batch_size=h["batch_size"],
            validation_fraction=h["validation_fraction"], seed=h["seed"],
        )

        def floats(count):
            buf = f.read(8 * count)
            if len(buf) != 8 * count:
                raise ValueError("truncated model file")
            return np.frombuffer(buf, dtype="<f8").astype(float)

        nz = Normalizer(floats(n), floats(n))
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(floats(fan_in * fan_out).reshape(fan_in, fan_out))
            biases.append(floats(fan_out))
        if f.read(1):
            raise ValueError("trailing bytes in model file")
    return TrainedModel(cfg, weights, biases), nz


def config_dict(cfg: ModelConfig) -> dict:
    return asdict(cfg)
