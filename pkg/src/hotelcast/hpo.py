"""Hyperparameter search: exhaustive grid and GP expected-improvement search."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import norm

from .errors import KpiError

log = logging.getLogger(__name__)

PARAM_NAMES = ("lookback", "hidden_size", "learning_rate", "epochs")


@dataclass(frozen=True)
class SearchSpace:
    lookback: tuple[int, ...] = (6, 12)
    hidden_size: tuple[int, ...] = (8, 16, 32)
    learning_rate: tuple[float, float] = (1e-3, 2e-2)
    epochs: tuple[int, ...] = (800,)
    # explicit grid values for the learning rate; None means lr_points log-spaced values
    lr_grid: Optional[tuple[float, ...]] = (1e-3, 5e-3, 2e-2)
    lr_points: int = 3

    def __post_init__(self):
        for name in ("lookback", "hidden_size", "epochs"):
            vals = tuple(sorted(int(v) for v in getattr(self, name)))
            if not vals or vals[0] < 1:
                raise ValueError(f"{name} must be a non-empty set of positive integers")
            object.__setattr__(self, name, vals)
        lo, hi = (float(v) for v in self.learning_rate)
        if not 0 < lo <= hi:
            raise ValueError(f"learning_rate interval must be positive and ordered, got {self.learning_rate}")
        object.__setattr__(self, "learning_rate", (lo, hi))
        if self.lr_grid is not None:
            grid = tuple(float(v) for v in self.lr_grid)
            if not grid or any(not lo <= v <= hi for v in grid):
                raise ValueError("lr_grid values must lie inside the learning_rate interval")
            object.__setattr__(self, "lr_grid", grid)
        elif self.lr_points < 1:
            raise ValueError("lr_points must be >= 1")

    def lr_values(self) -> tuple[float, ...]:
        if self.lr_grid is not None:
            return self.lr_grid
        lo, hi = self.learning_rate
        if self.lr_points == 1 or lo == hi:
            return (lo,)
        return tuple(float(v) for v in np.logspace(math.log10(lo), math.log10(hi), self.lr_points))

    def grid(self) -> list[dict]:
        """All grid points in lexicographic (lookback, hidden_size, learning_rate, epochs) order."""
        combos = itertools.product(self.lookback, self.hidden_size, self.lr_values(), self.epochs)
        return [dict(zip(PARAM_NAMES, c)) for c in combos]

    def contains(self, params: dict) -> bool:
        lo, hi = self.learning_rate
        return (
            params["lookback"] in self.lookback
            and params["hidden_size"] in self.hidden_size
            and params["epochs"] in self.epochs
            and lo <= params["learning_rate"] <= hi
        )

    # -- unit hypercube embedding ------------------------------------------

    def _int_sets(self):
        return (self.lookback, self.hidden_size, None, self.epochs)

    def to_unit(self, params: dict) -> np.ndarray:
        out = []
        for name, values in zip(PARAM_NAMES, self._int_sets()):
            if values is None:
                lo, hi = (math.log10(v) for v in self.learning_rate)
                v = math.log10(params[name])
            else:
                lo, hi, v = values[0], values[-1], params[name]
            out.append(0.0 if hi == lo else (v - lo) / (hi - lo))
        return np.array(out)

    def from_unit(self, u: np.ndarray) -> dict:
        """Inverse embedding; integer coordinates snap to the nearest member of their set."""
        params = {}
        for k, (name, values) in enumerate(zip(PARAM_NAMES, self._int_sets())):
            if values is None:
                lo, hi = (math.log10(v) for v in self.learning_rate)
                params[name] = float(10 ** (lo + float(u[k]) * (hi - lo)))
            else:
                target = values[0] + float(u[k]) * (values[-1] - values[0])
                params[name] = min(values, key=lambda v: (abs(v - target), v))
        return params

    def sample(self, rng: np.random.Generator) -> dict:
        """Integers uniformly from their sets, learning rate log-uniform."""
        lo, hi = (math.log10(v) for v in self.learning_rate)
        return {
            "lookback": int(rng.choice(self.lookback)),
            "hidden_size": int(rng.choice(self.hidden_size)),
            "learning_rate": float(10 ** rng.uniform(lo, hi)),
            "epochs": int(rng.choice(self.epochs)),
        }


@dataclass(frozen=True)
class Trial:
    index: int
    params: dict
    score: Optional[float]  # validation MAPE; None when the objective failed
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.score is not None


Objective = Callable[[dict], float]


def _evaluate(index: int, params: dict, objective: Objective) -> Trial:
    try:
        score = float(objective(params))
        if not math.isfinite(score) or score < 0:
            raise KpiError("INVALID_SCORE", f"objective returned {score}")
        return Trial(index, params, score)
    except Exception as e:  # noqa: BLE001 - any objective failure marks the trial
        log.warning("trial %d failed: %s", index, e)
        return Trial(index, params, None, f"{type(e).__name__}: {e}")


def best_trial(trials: Sequence[Trial]) -> Trial:
    ok = [t for t in trials if t.ok]
    if not ok:
        raise KpiError("NO_VALID_TRIAL", f"all {len(trials)} trials failed")
    return min(ok, key=lambda t: (t.score, t.index))


def grid_search(space: SearchSpace, objective: Objective, map_fn=map) -> tuple[Trial, list[Trial]]:
    """Evaluate every grid point once; ``map_fn`` may be an executor's ``map`` (order is kept)."""
    points = space.grid()
    trials = list(map_fn(lambda ip: _evaluate(ip[0], ip[1], objective), enumerate(points)))
    return best_trial(trials), trials


# --------------------------------------------------------------------------
# Gaussian-process surrogate


@dataclass
class GpSurrogate:
    """GP regression with a constant prior mean (the mean observed score) and an RBF kernel."""

    X: np.ndarray
    y: np.ndarray
    signal_var: float
    length_scale: float = 0.2
    noise_var: float = 0.0
    jitter: float = 0.0
    _chol: np.ndarray = field(init=False, repr=False)
    _alpha: np.ndarray = field(init=False, repr=False)

    @classmethod
    def fit(cls, X, y, length_scale: float = 0.2, noise_ratio: float = 1e-4,
            signal_var: float | None = None, noise_var: float | None = None) -> "GpSurrogate":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        if len(y) < 1:
            raise KpiError("SURROGATE_EMPTY", "GP needs at least one observation")
        if signal_var is None:
            signal_var = float(np.var(y, ddof=1)) if len(y) > 1 else 0.0
            if not signal_var > 0:
                signal_var = 1.0
        if noise_var is None:
            noise_var = noise_ratio * signal_var
        gp = cls(X, y, signal_var, length_scale, noise_var)
        gp._factor()
        return gp

    @property
    def prior_mean(self) -> float:
        return float(np.mean(self.y))

    def kernel(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        d2 = np.sum((A[:, None, :] - B[None, :, :]) ** 2, axis=-1)
        return self.signal_var * np.exp(-d2 / (2.0 * self.length_scale**2))

    def gram(self) -> np.ndarray:
        n = len(self.y)
        return self.kernel(self.X, self.X) + (self.noise_var + self.jitter) * np.eye(n)

    def _factor(self) -> None:
        jitters = [0.0] + [10.0**p for p in range(-12, -5)]  # up to 1e-6
        for j in jitters:
            self.jitter = j
            try:
                self._chol = np.linalg.cholesky(self.gram())
                break
            except np.linalg.LinAlgError:
                continue
        else:
            raise KpiError("SURROGATE_SINGULAR", "kernel matrix not positive definite even with jitter 1e-6")
        z = np.linalg.solve(self._chol, self.y - self.prior_mean)
        self._alpha = np.linalg.solve(self._chol.T, z)

    def posterior(self, Xq) -> tuple[np.ndarray, np.ndarray]:
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        k = self.kernel(self.X, Xq)  # (n, m)
        mean = self.prior_mean + k.T @ self._alpha
        v = np.linalg.solve(self._chol, k)
        var = self.signal_var - np.sum(v * v, axis=0)
        return mean, np.maximum(var, 0.0)


def gp_posterior(surrogate: GpSurrogate, x) -> tuple[float, float]:
    mean, var = surrogate.posterior(np.asarray(x, dtype=float)[None, :])
    return float(mean[0]), float(var[0])


def expected_improvement(mean, variance, best_score):
    """EI for minimisation; reduces to max(best - mean, 0) where the variance is zero."""
    mean = np.asarray(mean, dtype=float)
    sigma = np.sqrt(np.maximum(np.asarray(variance, dtype=float), 0.0))
    gain = best_score - mean
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        z = np.where(sigma > 0, gain / np.where(sigma > 0, sigma, 1.0), 0.0)
        ei = gain * norm.cdf(z) + sigma * norm.pdf(z)
    ei = np.where(sigma > 0, ei, np.maximum(gain, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


N_INIT = 5
POOL_SIZE = 256


def bayesian_search(
    space: SearchSpace,
    budget: int,
    seed: int,
    objective: Objective,
    length_scale: float = 0.2,
) -> tuple[Trial, list[Trial]]:
    """GP-EI search: ``min(5, budget)`` seeded random trials, then EI argmax over a fixed candidate pool.

    Candidates already evaluated are skipped; the search ends early if the
    pool runs out.
    """
    if budget < N_INIT:
        raise ValueError(f"budget must be >= {N_INIT}")
    rng = np.random.default_rng(seed)
    trials: list[Trial] = []
    for i in range(N_INIT):
        trials.append(_evaluate(i, space.sample(rng), objective))

    pool = [space.sample(rng) for _ in range(POOL_SIZE)]
    pool_unit = np.array([space.to_unit(p) for p in pool])
    used = [False] * POOL_SIZE
    seen = {_key(t.params) for t in trials}
    for j, p in enumerate(pool):
        used[j] = _key(p) in seen

    while len(trials) < budget and not all(used):
        ok = [t for t in trials if t.ok]
        free = [j for j in range(POOL_SIZE) if not used[j]]
        if ok:
            gp = GpSurrogate.fit([space.to_unit(t.params) for t in ok], [t.score for t in ok], length_scale)
            mean, var = gp.posterior(pool_unit[free])
            ei = expected_improvement(mean, var, min(t.score for t in ok))
            pick = free[int(np.argmax(ei))]
        else:
            pick = free[0]
        used[pick] = True
        trials.append(_evaluate(len(trials), pool[pick], objective))
    return best_trial(trials), trials


def _key(params: dict) -> tuple:
    return tuple(params[n] for n in PARAM_NAMES)
