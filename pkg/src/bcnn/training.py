"""Adam training loop and evaluation."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .model import Architecture, ModelParams, batch_backward, init_params, pauli_tensor, predict_proba
from .states import Dataset, StateFamily

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.99
    epsilon: float = 1e-8
    batch_size: int = 10
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


# (family, operator count) -> (lr, beta1, beta2, batch size, epochs)
ADAM_TABLE: dict[tuple[StateFamily, int], tuple[float, float, float, int, int]] = {
    **{(StateFamily.WERNER, m): (0.001, 0.9, 0.99, 10, 10) for m in range(1, 16)},
    **{(StateFamily.G1_WERNER, m): (0.001, 0.35, 0.99, 10, 10) for m in range(1, 16)},
    (StateFamily.G2_WERNER, 1): (0.001, 0.5, 0.9, 10, 10),
    (StateFamily.G2_WERNER, 2): (0.001, 0.9, 0.99, 200, 30),
    **{(StateFamily.G2_WERNER, m): (0.001, 0.375, 0.99, 10, 10) for m in range(3, 16)},
    (StateFamily.GENERAL, 8): (0.0003, 0.325, 0.825, 400, 20),
    (StateFamily.GENERAL, 9): (0.0003, 0.325, 0.85, 400, 20),
    (StateFamily.GENERAL, 10): (0.0003, 0.325, 0.87, 400, 20),
    (StateFamily.GENERAL, 11): (0.0003, 0.325, 0.9, 400, 20),
    (StateFamily.GENERAL, 12): (0.0003, 0.325, 0.95, 400, 20),
    (StateFamily.GENERAL, 13): (0.0003, 0.325, 0.925, 400, 20),
    (StateFamily.GENERAL, 14): (0.0003, 0.325, 0.925, 400, 20),
    (StateFamily.GENERAL, 15): (0.0003, 0.325, 0.975, 400, 20),
}


def adam_config(family: StateFamily | str, operators: int, seed: int = 0) -> TrainConfig:
    """Adam settings for a family and operator count.

    Operator counts missing from the table use the nearest listed row.
    """
    family = StateFamily.parse(family) if isinstance(family, str) else family
    rows = sorted(m for f, m in ADAM_TABLE if f is family)
    m = min(rows, key=lambda r: (abs(r - operators), r))
    lr, b1, b2, bs, ep = ADAM_TABLE[(family, m)]
    return TrainConfig(lr=lr, beta1=b1, beta2=b2, batch_size=bs, epochs=ep, seed=seed)


def operator_count(arch: Architecture) -> int:
    """Number of trainable observables a path layout measures (identity-identity excluded)."""
    per_path = arch.n1 * arch.n2 - (1 if arch.fix_identity else 0)
    return arch.m * per_path


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, arrays) -> "AdamState":
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState, cfg: TrainConfig,
              frozen: list[np.ndarray | None] | None = None) -> None:
    """One bias-corrected Adam update, in place. ``frozen`` holds optional
    boolean masks of entries that must not move."""
    state.t += 1
    t = state.t
    c1 = 1.0 - cfg.beta1 ** t
    c2 = 1.0 - cfg.beta2 ** t
    for k, (p, g) in enumerate(zip(params, grads)):
        m, v = state.m[k], state.v[k]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        step = cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.epsilon)
        if frozen is not None and frozen[k] is not None:
            step[frozen[k]] = 0.0
        p -= step


@dataclass
class TrainHistory:
    loss: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)


def train(dataset: Dataset, arch: Architecture, cfg: TrainConfig,
          init: ModelParams | None = None) -> tuple[ModelParams, TrainHistory]:
    """Minibatch Adam on the mean cross entropy.

    All randomness comes from ``cfg.seed``: parameter initialization first,
    then one permutation of the training set per epoch. The last partial
    batch of an epoch is kept.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    params = init.copy() if init is not None else init_params(arch, rng, dataset.family.value)
    T = pauli_tensor(dataset.matrices)
    y = dataset.labels.astype(float)
    arrays = params.arrays()
    state = AdamState.zeros_like(arrays)
    frozen = [params.fixed_mask1[..., None] & np.ones(4, bool), params.fixed_mask2[..., None] & np.ones(4, bool)]
    frozen += [None] * (len(arrays) - 2)
    history = TrainHistory()
    n = len(dataset)
    for epoch in range(cfg.epochs):
        start = time.perf_counter()
        order = rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            g = batch_backward(T[idx], y[idx], params)
            total_loss += g.loss * len(idx)
            correct += int(np.sum((g.prob > 0.5) == (y[idx] > 0.5)))
            adam_step(arrays, g.arrays(), state, cfg, frozen)
        history.loss.append(total_loss / n)
        history.accuracy.append(correct / n)
        history.seconds.append(time.perf_counter() - start)
        log.info("epoch %d/%d loss %.5f acc %.4f (%.1fs)", epoch + 1, cfg.epochs,
                 history.loss[-1], history.accuracy[-1], history.seconds[-1])
    return params, history


@dataclass(frozen=True)
class ErrorRecord:
    index: int
    p: float | None
    theta: float | None
    phi: float | None
    lambda_min: float
    label: int
    probability: float


def predict(params: ModelParams, dataset: Dataset, chunk: int = 4096) -> np.ndarray:
    T = pauli_tensor(dataset.matrices)
    return np.concatenate([predict_proba(T[i:i + chunk], params) for i in range(0, len(T), chunk)]) \
        if len(T) else np.zeros(0)


def evaluate(params: ModelParams, dataset: Dataset) -> tuple[float, list[ErrorRecord]]:
    """Accuracy with threshold 0.5, plus every misclassified record."""
    prob = predict(params, dataset)
    pred = prob > 0.5
    truth = dataset.labels.astype(bool)
    wrong = np.flatnonzero(pred != truth)
    errors = []
    for i in wrong:
        rec = dataset[int(i)]
        errors.append(ErrorRecord(int(i), rec.p, rec.theta, rec.phi, rec.lambda_min,
                                  int(dataset.labels[i]), float(prob[i])))
    acc = 1.0 - len(wrong) / len(dataset) if len(dataset) else float("nan")
    return acc, errors


def with_seed(cfg: TrainConfig, seed: int) -> TrainConfig:
    return replace(cfg, seed=seed)
