"""Local training, verification and aggregation for the federated cycle.

The per-sample objective is log(1 + exp(y * w.x)) with labels in {-1, +1};
its minimizers push y * w.x negative, so prediction is -sign(w.x) with the
tie at w.x = 0 resolved to -1.  Local training runs a variance-reduced
stochastic pass anchored at the last global snapshot, and the global step
mixes enterprise updates weighted by their sample counts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import Dataset
from .domain import LocalUpdateTx, Sample, SystemParams

__all__ = [
    "GlobalModel",
    "VerifyResult",
    "sigmoid",
    "logistic_loss",
    "sample_gradient",
    "average_gradient",
    "mean_loss",
    "pooled_mean_loss",
    "global_full_gradient",
    "svrg_local_cycle",
    "aggregate_global",
    "classify",
    "accuracy",
    "verify_update",
    "has_converged",
]


@dataclass(frozen=True)
class GlobalModel:
    """Global weights after `cycle` rounds, with the shared anchor gradient.

    full_gradient is None only for the cycle-0 bootstrap model, where each
    enterprise anchors on a gradient of its own data instead.
    """

    weights: np.ndarray
    full_gradient: Optional[np.ndarray]
    cycle: int = 0

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=np.float64)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if not np.isfinite(w).all():
            raise ValueError("weights must be finite")
        if self.full_gradient is not None:
            g = np.array(self.full_gradient, dtype=np.float64)
            g.setflags(write=False)
            object.__setattr__(self, "full_gradient", g)
            if g.shape != w.shape:
                raise ValueError("full_gradient dimension mismatch")
            if not np.isfinite(g).all():
                raise ValueError("full_gradient must be finite")
        if self.cycle < 0:
            raise ValueError("cycle must be >= 0")

    @classmethod
    def initial(cls, dim: int) -> "GlobalModel":
        return cls(np.zeros(dim), None, 0)


def sigmoid(z):
    """Numerically safe logistic function, scalar or array."""
    z = np.asarray(z, dtype=np.float64)
    t = np.exp(-np.abs(z))
    out = np.where(z >= 0, 1.0 / (1.0 + t), t / (1.0 + t))
    return float(out) if out.ndim == 0 else out


def _check_dims(w: np.ndarray, x: np.ndarray) -> None:
    if w.shape != x.shape:
        raise ValueError("weight and feature dimensions differ")


def logistic_loss(w: np.ndarray, sample: Sample) -> float:
    """log(1 + exp(y * w.x)), computed without overflow for any margin."""
    _check_dims(np.asarray(w), sample.x)
    z = sample.y * float(np.dot(w, sample.x))
    return float(np.logaddexp(0.0, z))


def sample_gradient(w: np.ndarray, sample: Sample) -> np.ndarray:
    """Gradient of the per-sample loss: y * x * sigmoid(y * w.x)."""
    _check_dims(np.asarray(w), sample.x)
    z = sample.y * float(np.dot(w, sample.x))
    return sample.y * sample.x * sigmoid(z)


def _margins(w: np.ndarray, ds: Dataset) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (ds.dim,):
        raise ValueError("weight and feature dimensions differ")
    return ds.y * (ds.x @ w)


def average_gradient(w: np.ndarray, ds: Dataset) -> np.ndarray:
    """Mean per-sample gradient over a whole dataset."""
    s = sigmoid(_margins(w, ds))
    return (ds.x * (ds.y * s)[:, None]).mean(axis=0)


def mean_loss(w: np.ndarray, ds: Dataset) -> float:
    return float(np.logaddexp(0.0, _margins(w, ds)).mean())


def pooled_mean_loss(w: np.ndarray, datasets: Sequence[Dataset]) -> float:
    """Sample-weighted mean loss across all enterprises."""
    total = sum(len(d) for d in datasets)
    return sum(mean_loss(w, d) * len(d) for d in datasets) / total


def global_full_gradient(txs: Sequence[LocalUpdateTx]) -> np.ndarray:
    """Combine shared gradients, each weighted by its sample count."""
    if not txs:
        raise ValueError("need at least one tx")
    dims = {tx.shared_gradient.shape for tx in txs}
    if len(dims) != 1:
        raise ValueError("tx gradient dimensions differ")
    total = sum(tx.n_samples for tx in txs)
    out = np.zeros(txs[0].shared_gradient.shape)
    for tx in txs:
        out += (tx.n_samples / total) * tx.shared_gradient
    return out


def svrg_local_cycle(
    model: GlobalModel,
    ds: Dataset,
    p: SystemParams,
    rng: np.random.Generator,
    created_at: float = 0.0,
) -> LocalUpdateTx:
    """One local training pass producing this enterprise's transaction.

    Starting from the global weights, take p.t_max corrected stochastic
    steps of size beta/N_i: each draws a uniform sample k and moves along
    grad_k(w) - grad_k(w_anchor) + anchor_gradient.  The anchor gradient
    is the model's shared full gradient, or a gradient of this dataset at
    the anchor weights during the cycle-0 bootstrap.  The transaction
    carries the final weights and this dataset's mean gradient at them.
    """
    n_i = len(ds)
    anchor_w = np.asarray(model.weights, dtype=np.float64)
    if anchor_w.shape != (ds.dim,):
        raise ValueError("model and dataset dimensions differ")
    if model.full_gradient is not None:
        anchor_grad = np.asarray(model.full_gradient, dtype=np.float64)
    else:
        anchor_grad = average_gradient(anchor_w, ds)

    signed_x = ds.x * ds.y[:, None]                      # rows are y_k * x_k
    anchor_terms = signed_x * sigmoid(_margins(anchor_w, ds))[:, None]
    step = p.beta / n_i

    w = anchor_w.copy()
    for _ in range(p.t_max):
        k = int(rng.integers(n_i))
        g_now = signed_x[k] * sigmoid(float(signed_x[k] @ w))
        w -= step * (g_now - anchor_terms[k] + anchor_grad)
    if not np.isfinite(w).all():
        raise ValueError("local update diverged; reduce beta")

    shared = average_gradient(w, ds)
    return LocalUpdateTx.create(ds.owner, w, shared, n_i, created_at)


def aggregate_global(w_prev: np.ndarray, txs: Sequence[LocalUpdateTx]) -> np.ndarray:
    """Global step: w_prev plus the sample-weighted mean of (w_i - w_prev)."""
    if not txs:
        raise ValueError("need at least one tx")
    w_prev = np.asarray(w_prev, dtype=np.float64)
    for tx in txs:
        if tx.weights.shape != w_prev.shape:
            raise ValueError("tx weight dimensions differ")
    total = sum(tx.n_samples for tx in txs)
    out = w_prev.copy()
    for tx in txs:
        out += (tx.n_samples / total) * (tx.weights - w_prev)
    return out


def classify(w: np.ndarray, x: np.ndarray) -> int:
    """Predicted label -sign(w.x); the boundary w.x = 0 yields -1."""
    w = np.asarray(w)
    x = np.asarray(x)
    _check_dims(w, x)
    return -1 if float(np.dot(w, x)) >= 0 else 1


def accuracy(w: np.ndarray, ds: Dataset) -> float:
    """Fraction of ds classified correctly by w."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (ds.dim,):
        raise ValueError("weight and feature dimensions differ")
    preds = np.where(ds.x @ w >= 0, -1, 1)
    return float((preds == ds.y).mean())


@dataclass(frozen=True)
class VerifyResult:
    accepted: bool
    accuracy: float


def verify_update(tx: LocalUpdateTx, test: Dataset, e0: float) -> VerifyResult:
    """Accept iff the digest recomputes and test accuracy reaches e0 (inclusive)."""
    if not 0 <= e0 <= 1:
        raise ValueError("e0 must be within [0, 1]")
    acc = accuracy(tx.weights, test)
    return VerifyResult(tx.digest_ok() and acc >= e0, acc)


def has_converged(w: np.ndarray, w_prev: np.ndarray, epsilon: float) -> bool:
    """Stop when the Euclidean move ||w - w_prev|| is at most epsilon."""
    w = np.asarray(w)
    w_prev = np.asarray(w_prev)
    _check_dims(w, w_prev)
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return float(np.linalg.norm(w - w_prev)) <= epsilon
