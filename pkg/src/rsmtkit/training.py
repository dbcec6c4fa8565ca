"""Focal loss, Adam, dataset splitting and the training loop."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import LabeledNet
from .errors import ShapeError, TooFewNets
from .evaluation import confusion_counts, net_accuracy
from .gat import (
    Gradients,
    LayerGradients,
    ModelParams,
    init_params,
    model_backward,
    model_forward,
    named_arrays,
)
from .nets import HananGrid, build_hanan_grid, disjoint_batch

PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class LossConfig:
    """Binary focal loss settings; reduction is always a plain sum."""

    alpha: float = 0.8
    gamma: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha {self.alpha} outside (0, 1)")
        if self.gamma < 0.0:
            raise ValueError(f"gamma {self.gamma} must be >= 0")


def bfl_loss(
    probs: np.ndarray, labels: np.ndarray, cfg: LossConfig = LossConfig()
) -> tuple[float, np.ndarray]:
    """Summed binary focal loss and its exact gradient w.r.t. each probability.

    Steiner nodes (label 1) contribute -alpha * (1-p)^gamma * log(p); the
    majority class contributes -(1-alpha) * p^gamma * log(1-p), so rare
    positives are up-weighted and confident easy answers fade out.
    Probabilities are clamped to [1e-7, 1 - 1e-7] before the logs; the
    gradient is zero where the clamp is active.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if probs.shape != labels.shape:
        raise ShapeError(f"probs {probs.shape} vs labels {labels.shape}")
    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    a, g = cfg.alpha, cfg.gamma
    pos = -a * (1.0 - p) ** g * np.log(p)
    neg = -(1.0 - a) * p**g * np.log(1.0 - p)
    loss = float(np.sum(np.where(labels == 1.0, pos, neg)))
    dpos = a * g * (1.0 - p) ** (g - 1.0) * np.log(p) - a * (1.0 - p) ** g / p
    dneg = (1.0 - a) * (p**g / (1.0 - p) - g * p ** (g - 1.0) * np.log(1.0 - p))
    active = (probs > PROB_CLAMP) & (probs < 1.0 - PROB_CLAMP)
    grad = np.where(labels == 1.0, dpos, dneg) * active
    return loss, grad


def l2_penalty(params: ModelParams, lam: float) -> tuple[float, Gradients]:
    """lam * sum of squares over kernels, biases and attention vectors."""
    if lam < 0.0:
        raise ValueError(f"l2 lambda {lam} must be >= 0")
    loss = 0.0
    grads = {}
    for name, arr in named_arrays(params):
        loss += lam * float(np.sum(arr * arr))
        grads[name] = 2.0 * lam * arr
    return loss, _gradients_from_dict(grads)


def _gradients_from_dict(arrays: dict[str, np.ndarray]) -> Gradients:
    def layer(prefix: str) -> LayerGradients:
        return LayerGradients(
            kernel=arrays[f"{prefix}.kernel"],
            attention_src=arrays[f"{prefix}.attention_src"],
            attention_dst=arrays[f"{prefix}.attention_dst"],
            bias=arrays[f"{prefix}.bias"],
        )

    return Gradients(layer1=layer("layer1"), layer2=layer("layer2"))


def add_gradients(a: Gradients, b: Gradients) -> Gradients:
    b_map = dict(named_arrays(b))
    return _gradients_from_dict({name: arr + b_map[name] for name, arr in named_arrays(a)})


@dataclass
class AdamState:
    """First/second moment accumulators keyed like named_arrays output."""

    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def init_adam_state(params: ModelParams) -> AdamState:
    return AdamState(
        step=0,
        m={name: np.zeros_like(arr) for name, arr in named_arrays(params)},
        v={name: np.zeros_like(arr) for name, arr in named_arrays(params)},
    )


def adam_step(
    state: AdamState, params: ModelParams, grads: Gradients, learning_rate: float
) -> tuple[AdamState, ModelParams]:
    """One bias-corrected Adam update; inputs are left untouched."""
    grad_map = dict(named_arrays(grads))
    for name, arr in named_arrays(params):
        if grad_map[name].shape != arr.shape:
            raise ShapeError(f"gradient {name} shape {grad_map[name].shape} != {arr.shape}")
    t = state.step + 1
    new_params = params.copy()
    new_m, new_v = {}, {}
    param_map = dict(named_arrays(new_params))
    for name, g in grad_map.items():
        m = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        param_map[name] -= learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
        new_m[name], new_v[name] = m, v
    new_state = AdamState(
        step=t, m=new_m, v=new_v, beta1=state.beta1, beta2=state.beta2, epsilon=state.epsilon
    )
    return new_state, new_params


def split_dataset(
    data: Sequence[LabeledNet], seed: int
) -> tuple[list[LabeledNet], list[LabeledNet], list[LabeledNet]]:
    """Deterministic 80/10/10 train/validation/test partition."""
    n = len(data)
    if n < 10:
        raise TooFewNets(f"need at least 10 nets to split, got {n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(n)
    n_train = int(n * 0.8)
    n_val = int(n * 0.1)
    train = [data[i] for i in order[:n_train]]
    val = [data[i] for i in order[n_train : n_train + n_val]]
    test = [data[i] for i in order[n_train + n_val :]]
    return train, val, test


@dataclass(frozen=True)
class TrainConfig:
    seed: int
    learning_rate: float = 0.01
    patience: int = 5
    max_epochs: int = 200
    batch_size: int = 256
    l2_lambda: float = 5e-4
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.learning_rate <= 0 or self.max_epochs <= 0 or self.batch_size <= 0:
            raise ValueError("learning_rate, max_epochs and batch_size must be positive")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be >= 0")
        if not 0 < self.patience <= self.max_epochs:
            raise ValueError("patience must be in [1, max_epochs]")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(tuple(parts)).generate_state(1, np.uint64)[0])


@dataclass
class _PreparedNet:
    grid: HananGrid
    labels: np.ndarray


def _prepare(data: Sequence[LabeledNet]) -> list[_PreparedNet]:
    prepared = []
    for item in data:
        grid = build_hanan_grid(item.net)
        labels = np.asarray(item.labels, dtype=np.float64)
        if labels.shape != (grid.n_nodes,):
            raise ShapeError(
                f"net {item.net.id!r}: {labels.shape[0]} labels for {grid.n_nodes} nodes"
            )
        prepared.append(_PreparedNet(grid=grid, labels=labels))
    return prepared


def _dataset_loss_and_accuracy(
    params: ModelParams,
    prepared: list[_PreparedNet],
    cfg: TrainConfig,
) -> tuple[float, float]:
    """Inference-mode focal loss plus mean label accuracy (no routing)."""
    total = 0.0
    accs = []
    for start in range(0, len(prepared), cfg.batch_size):
        chunk = prepared[start : start + cfg.batch_size]
        batch = disjoint_batch([p.grid for p in chunk])
        labels = np.concatenate([p.labels for p in chunk])
        probs, _ = model_forward(params, batch)
        loss, _ = bfl_loss(probs, labels, cfg.loss)
        total += loss
        for k, p in enumerate(chunk):
            sl = batch.member_slice(k)
            node_probs = probs[sl]
            selected = [
                i for i in p.grid.candidate_indices() if node_probs[i] > 0.5
            ]
            accs.append(net_accuracy(confusion_counts(selected, p.labels)))
    return total, float(np.mean(accs))


def train(cfg: TrainConfig, data: Sequence[LabeledNet]) -> tuple[ModelParams, list[EpochStats]]:
    """Train a fresh model with early stopping on validation loss.

    The data is split 80/10/10 with cfg.seed (the 10% test slice is left
    untouched for callers). Each epoch shuffles the training nets, walks
    them in batches of cfg.batch_size, and applies one Adam step per batch
    on summed focal loss plus the L2 penalty. Training stops after
    cfg.patience epochs without a validation-loss improvement and the
    best-validation parameters are returned.
    """
    if not data:
        raise TooFewNets("train requires a non-empty dataset")
    train_set, val_set, _ = split_dataset(data, cfg.seed)
    train_prepared = _prepare(train_set)
    val_prepared = _prepare(val_set)

    params = init_params(cfg.seed)
    state = init_adam_state(params)
    history: list[EpochStats] = []
    best_params = params.copy()
    best_val = np.inf
    stale_epochs = 0

    for epoch in range(1, cfg.max_epochs + 1):
        shuffle_rng = np.random.Generator(np.random.PCG64(_derived_seed(cfg.seed, epoch)))
        order = shuffle_rng.permutation(len(train_prepared))
        epoch_loss = 0.0
        for bi, start in enumerate(range(0, len(order), cfg.batch_size)):
            chunk = [train_prepared[i] for i in order[start : start + cfg.batch_size]]
            batch = disjoint_batch([p.grid for p in chunk])
            labels = np.concatenate([p.labels for p in chunk])
            probs, cache = model_forward(
                params, batch, train_seed=_derived_seed(cfg.seed, epoch, bi)
            )
            data_loss, dprob = bfl_loss(probs, labels, cfg.loss)
            grads = model_backward(params, cache, dprob)
            reg_loss, reg_grads = l2_penalty(params, cfg.l2_lambda)
            state, params = adam_step(
                state, params, add_gradients(grads, reg_grads), cfg.learning_rate
            )
            epoch_loss += data_loss + reg_loss

        val_loss, val_acc = _dataset_loss_and_accuracy(params, val_prepared, cfg)
        history.append(
            EpochStats(epoch=epoch, train_loss=epoch_loss, val_loss=val_loss, val_accuracy=val_acc)
        )
        if val_loss < best_val:
            best_val = val_loss
            best_params = params.copy()
            stale_epochs = 0
        else:
            stale_epochs += 1
            if stale_epochs >= cfg.patience:
                break
    return best_params, history
