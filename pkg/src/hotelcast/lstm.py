"""Single-layer LSTM with a scalar dense head, trained by BPTT and Adam.

Everything is float64 numpy. Gate parameters are stacked in the fixed order
input, forget, output, candidate (``GATES``); for hidden size H the stacked
input weights ``W`` have shape (4, H), recurrent weights ``U`` (4, H, H) and
biases ``b`` (4, H). Gate k's pre-activation for a scalar input x is
``W[k] * x + U[k] @ h + b[k]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import KpiError
from .series import WindowedSamples

GATES = ("input", "forget", "output", "candidate")
ARRAY_NAMES = ("W", "U", "b", "w_out", "b_out")
FILE_MAGIC = "hotelcast-lstm"
FILE_VERSION = 1


def sigmoid(x):
    # tanh form avoids exp overflow for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class LstmWeights:
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray  # shape (1,)

    @property
    def hidden_size(self) -> int:
        return self.w_out.shape[0]

    def arrays(self) -> list[np.ndarray]:
        return [self.W, self.U, self.b, self.w_out, self.b_out]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        k = GATES.index(name)
        return self.W[k], self.U[k], self.b[k]

    def map(self, fn) -> "LstmWeights":
        return LstmWeights(*(fn(a) for a in self.arrays()))

    def zeros_like(self) -> "LstmWeights":
        return self.map(np.zeros_like)

    def copy(self) -> "LstmWeights":
        return self.map(np.copy)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def shapes(cls, hidden_size: int) -> list[tuple[int, ...]]:
        H = hidden_size
        return [(4, H), (4, H, H), (4, H), (H,), (1,)]

    @classmethod
    def from_vector(cls, vec: np.ndarray, hidden_size: int) -> "LstmWeights":
        out, pos = [], 0
        for shape in cls.shapes(hidden_size):
            size = int(np.prod(shape))
            out.append(np.array(vec[pos : pos + size], dtype=float).reshape(shape))
            pos += size
        if pos != len(vec):
            raise ValueError(f"vector length {len(vec)} does not match hidden size {hidden_size}")
        return cls(*out)

    @classmethod
    def zeros(cls, hidden_size: int) -> "LstmWeights":
        return cls(*(np.zeros(s) for s in cls.shapes(hidden_size)))

    def equal(self, other: "LstmWeights") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


@dataclass(frozen=True)
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden_size: int) -> "LstmState":
        return cls(np.zeros(hidden_size), np.zeros(hidden_size))


@dataclass(frozen=True)
class TrainingConfig:
    lookback: int = 12
    hidden_size: int = 16
    epochs: int = 800
    learning_rate: float = 0.005
    seed: int = 0
    patience: int = 50
    val_fraction: float = 0.1
    gradient_clip: float = 5.0
    warmup_epochs: int = 100  # early stopping and best-weight selection start here

    def __post_init__(self):
        for name in ("lookback", "hidden_size", "epochs"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.patience < 0 or self.seed < 0 or self.warmup_epochs < 0:
            raise ValueError("patience, seed and warmup_epochs must be non-negative")
        if not self.learning_rate > 0 or not self.gradient_clip > 0:
            raise ValueError("learning_rate and gradient_clip must be positive")
        if not 0.0 <= self.val_fraction < 0.5:
            raise ValueError("val_fraction must lie in [0, 0.5)")


def init_weights(config: TrainingConfig, seed: int | None = None) -> LstmWeights:
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights; forget bias 1, other biases 0."""
    H = config.hidden_size
    rng = np.random.default_rng(config.seed if seed is None else seed)
    bound = 1.0 / math.sqrt(H)
    W = rng.uniform(-bound, bound, size=(4, H))
    U = rng.uniform(-bound, bound, size=(4, H, H))
    w_out = rng.uniform(-bound, bound, size=H)
    b = np.zeros((4, H))
    b[GATES.index("forget")] = 1.0
    return LstmWeights(W, U, b, w_out, np.zeros(1))


# --------------------------------------------------------------------------
# forward


def cell_forward(x: float, state: LstmState, w: LstmWeights) -> LstmState:
    H = w.hidden_size
    z = w.W.reshape(4 * H) * x + w.U.reshape(4 * H, H) @ state.h + w.b.reshape(4 * H)
    i = sigmoid(z[:H])
    f = sigmoid(z[H : 2 * H])
    o = sigmoid(z[2 * H : 3 * H])
    g = np.tanh(z[3 * H :])
    c = f * state.c + i * g
    h = o * np.tanh(c)
    if not (np.all(np.isfinite(c)) and np.all(np.isfinite(h))):
        raise KpiError("NUMERIC_OVERFLOW", "non-finite LSTM state")
    return LstmState(h, c)


@dataclass
class ForwardCache:
    X: np.ndarray
    h: list[np.ndarray] = field(default_factory=list)  # h[0] is the zero state
    c: list[np.ndarray] = field(default_factory=list)
    gates: list[tuple[np.ndarray, ...]] = field(default_factory=list)  # (i, f, o, g, tanh c)


def forward(X: np.ndarray, w: LstmWeights) -> tuple[np.ndarray, ForwardCache]:
    """Run a batch of windows ``X`` (n, L) and return predictions (n,) plus the cache."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    n, L = X.shape
    H = w.hidden_size
    Wf = w.W.reshape(4 * H)
    Uf = w.U.reshape(4 * H, H)
    bf = w.b.reshape(4 * H)
    h = np.zeros((n, H))
    c = np.zeros((n, H))
    cache = ForwardCache(X, [h], [c])
    for t in range(L):
        z = X[:, t, None] * Wf + h @ Uf.T + bf
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H : 2 * H])
        o = sigmoid(z[:, 2 * H : 3 * H])
        g = np.tanh(z[:, 3 * H :])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        cache.h.append(h)
        cache.c.append(c)
        cache.gates.append((i, f, o, g, tc))
    pred = h @ w.w_out + w.b_out[0]
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(c))):
        raise KpiError("NUMERIC_OVERFLOW", "non-finite LSTM forward pass")
    return pred, cache


def sequence_forward(window, w: LstmWeights) -> tuple[float, ForwardCache]:
    pred, cache = forward(np.asarray(window, dtype=float)[None, :], w)
    return float(pred[0]), cache


def predict(X: np.ndarray, w: LstmWeights) -> np.ndarray:
    return forward(X, w)[0]


# --------------------------------------------------------------------------
# backward


def backward(batch: WindowedSamples, w: LstmWeights) -> tuple[float, LstmWeights]:
    """Mean squared error over the batch and its exact BPTT gradient."""
    n = len(batch)
    if n == 0:
        raise KpiError("INSUFFICIENT_DATA", "empty batch")
    H = w.hidden_size
    pred, cache = forward(batch.inputs, w)
    err = pred - batch.targets
    loss = float(np.mean(err**2))

    dpred = 2.0 * err / n
    h_last = cache.h[-1]
    g_wout = h_last.T @ dpred
    g_bout = np.array([dpred.sum()])

    Uf = w.U.reshape(4 * H, H)
    gW = np.zeros(4 * H)
    gU = np.zeros((4 * H, H))
    gb = np.zeros(4 * H)
    dh = np.outer(dpred, w.w_out)
    dc = np.zeros((n, H))
    for t in range(cache.X.shape[1] - 1, -1, -1):
        i, f, o, g, tc = cache.gates[t]
        c_prev = cache.c[t]
        h_prev = cache.h[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc**2)
        dz = np.concatenate(
            [
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                do * o * (1.0 - o),
                dc * i * (1.0 - g**2),
            ],
            axis=1,
        )
        dc = dc * f
        gW += dz.T @ cache.X[:, t]
        gU += dz.T @ h_prev
        gb += dz.sum(axis=0)
        dh = dz @ Uf

    grads = LstmWeights(gW.reshape(4, H), gU.reshape(4, H, H), gb.reshape(4, H), g_wout, g_bout)
    if not np.all(np.isfinite(grads.to_vector())):
        raise KpiError("NUMERIC_OVERFLOW", "non-finite gradient")
    return loss, grads


def batch_mse(batch: WindowedSamples, w: LstmWeights) -> float:
    return float(np.mean((predict(batch.inputs, w) - batch.targets) ** 2))


# --------------------------------------------------------------------------
# optimizer


@dataclass(frozen=True)
class AdamState:
    m: LstmWeights
    v: LstmWeights
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_weights(cls, w: LstmWeights, **kw) -> "AdamState":
        return cls(w.zeros_like(), w.zeros_like(), **kw)


def clip_by_global_norm(grads: LstmWeights, max_norm: float) -> LstmWeights:
    norm = float(np.sqrt(sum(float(np.sum(a * a)) for a in grads.arrays())))
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return grads.map(lambda a: a * scale)


def adam_step(
    w: LstmWeights,
    grads: LstmWeights,
    opt: AdamState,
    lr: float,
    gradient_clip: float = math.inf,
) -> tuple[LstmWeights, AdamState]:
    """One bias-corrected Adam update; returns new weights and optimizer state."""
    grads = clip_by_global_norm(grads, gradient_clip)
    t = opt.t + 1
    b1, b2 = opt.beta1, opt.beta2
    m_new, v_new, w_new = [], [], []
    for p, g, m, v in zip(w.arrays(), grads.arrays(), opt.m.arrays(), opt.v.arrays()):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        w_new.append(p - lr * m_hat / (np.sqrt(v_hat) + opt.eps))
        m_new.append(m)
        v_new.append(v)
    return LstmWeights(*w_new), replace(opt, m=LstmWeights(*m_new), v=LstmWeights(*v_new), t=t)


# --------------------------------------------------------------------------
# training


@dataclass
class LstmModel:
    weights: LstmWeights
    config: TrainingConfig

    @property
    def lookback(self) -> int:
        return self.config.lookback

    def predict(self, X) -> np.ndarray:
        return predict(X, self.weights)

    def predict_next(self, window) -> float:
        window = np.asarray(window, dtype=float)
        if window.shape != (self.lookback,):
            raise KpiError("INSUFFICIENT_HISTORY", f"window must have {self.lookback} values")
        return sequence_forward(window, self.weights)[0]


@dataclass
class TrainingHistory:
    train_mse: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)
    best_epoch: int = -1

    @property
    def best_val_mse(self) -> float:
        return self.val_mse[self.best_epoch]

    def __len__(self) -> int:
        return len(self.train_mse)


def split_validation(samples: WindowedSamples, val_fraction: float) -> tuple[WindowedSamples, WindowedSamples | None]:
    """Reserve the chronological tail of the samples for early stopping."""
    n = len(samples)
    n_val = 0
    if val_fraction > 0 and n >= 2:
        n_val = max(1, math.floor(n * val_fraction))
    n_train = n - n_val
    if n_train < 1:
        raise KpiError("INSUFFICIENT_DATA", f"{n} samples leave no training data")
    if n_val == 0:
        return samples, None
    return samples.head(n_train), samples.tail_from(n_train)


def train(samples: WindowedSamples, config: TrainingConfig) -> tuple[LstmModel, TrainingHistory]:
    """Full-batch Adam training with early stopping on a chronological holdout.

    Entry ``e`` of the history describes the weights after ``e`` updates.
    From ``warmup_epochs`` on, the best validation MSE is tracked; training
    stops once it has failed to improve for more than ``patience``
    consecutive epochs, and the best weights are returned. With ``val_fraction == 0`` the training MSE plays
    the role of the validation MSE.
    """
    if len(samples) == 0:
        raise KpiError("INSUFFICIENT_DATA", "no training samples")
    if samples.lookback != config.lookback:
        raise ValueError(f"samples use lookback {samples.lookback}, config says {config.lookback}")
    fit_set, val_set = split_validation(samples, config.val_fraction)

    w = init_weights(config)
    opt = AdamState.for_weights(w)
    history = TrainingHistory()
    best_w, best_val, stale = w, math.inf, 0
    for epoch in range(config.epochs):
        loss, grads = backward(fit_set, w)
        val = loss if val_set is None else batch_mse(val_set, w)
        history.train_mse.append(loss)
        history.val_mse.append(val)
        # the last epoch always counts so a long warmup still yields a model
        if epoch >= config.warmup_epochs or epoch == config.epochs - 1:
            if val < best_val:
                best_val, best_w, stale = val, w, 0
                history.best_epoch = epoch
            else:
                stale += 1
                if stale > config.patience:
                    break
        w, opt = adam_step(w, grads, opt, config.learning_rate, config.gradient_clip)
    return LstmModel(best_w.copy(), config), history


# --------------------------------------------------------------------------
# persistence
#
# Layout (one token group per line):
#   hotelcast-lstm <version>
#   lookback <L>
#   hidden_size <H>
#   then for each of W (4*H), U (4*H*H), b (4*H), w_out (H), b_out (1):
#   <name> <count>
#   <count lines, one shortest round-trip decimal per line, C order>


def save_model(model: LstmModel, path) -> None:
    w = model.weights
    lines = [
        f"{FILE_MAGIC} {FILE_VERSION}",
        f"lookback {model.lookback}",
        f"hidden_size {w.hidden_size}",
    ]
    for name, arr in zip(ARRAY_NAMES, w.arrays()):
        flat = arr.ravel()
        lines.append(f"{name} {flat.size}")
        lines.extend(repr(float(v)) for v in flat)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path, config: TrainingConfig | None = None) -> LstmModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    magic, version = lines[0].split()
    if magic != FILE_MAGIC or int(version) != FILE_VERSION:
        raise ValueError(f"{path}: not a version {FILE_VERSION} model file")
    lookback = int(lines[1].split()[1])
    H = int(lines[2].split()[1])
    pos, arrays = 3, []
    for name, shape in zip(ARRAY_NAMES, LstmWeights.shapes(H)):
        tag, count = lines[pos].split()
        if tag != name or int(count) != int(np.prod(shape)):
            raise ValueError(f"{path}: expected {name} block at line {pos + 1}")
        vals = [float(v) for v in lines[pos + 1 : pos + 1 + int(count)]]
        arrays.append(np.array(vals, dtype=float).reshape(shape))
        pos += 1 + int(count)
    config = config or TrainingConfig()
    config = replace(config, lookback=lookback, hidden_size=H)
    return LstmModel(LstmWeights(*arrays), config)


# --------------------------------------------------------------------------
# gradient verification


def numeric_gradient(batch: WindowedSamples, w: LstmWeights, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of the batch MSE for every parameter."""
    H = w.hidden_size
    base = w.to_vector()
    out = np.empty_like(base)
    for k in range(base.size):
        plus = base.copy()
        plus[k] += eps
        minus = base.copy()
        minus[k] -= eps
        f_plus = batch_mse(batch, LstmWeights.from_vector(plus, H))
        f_minus = batch_mse(batch, LstmWeights.from_vector(minus, H))
        out[k] = (f_plus - f_minus) / (2.0 * eps)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-7) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def random_problem(rng: np.random.Generator, max_hidden: int = 4, max_lookback: int = 6, max_samples: int = 8):
    H = int(rng.integers(1, max_hidden + 1))
    L = int(rng.integers(1, max_lookback + 1))
    n = int(rng.integers(1, max_samples + 1))
    shapes = LstmWeights.shapes(H)
    w = LstmWeights(*(rng.uniform(-1.0, 1.0, size=s) for s in shapes))
    batch = WindowedSamples(L, rng.normal(size=(n, L)), rng.normal(size=n))
    return batch, w


def gradient_check(n_models: int = 20, seed: int = 0, eps: float = 1e-5, corrupt: bool = False) -> float:
    """Max relative error between BPTT and finite differences over random models.

    ``corrupt`` perturbs one analytic entry per model; it exists so the
    check itself can be shown to fail.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_models):
        batch, w = random_problem(rng)
        _, grads = backward(batch, w)
        analytic = grads.to_vector()
        if corrupt:
            analytic[0] += 1e-2 * (1.0 + abs(analytic[0]))
        numeric = numeric_gradient(batch, w, eps)
        worst = max(worst, float(relative_error(analytic, numeric).max()))
    return worst
