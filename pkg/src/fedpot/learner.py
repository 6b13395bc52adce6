"""Multilayer perceptron with ReLU hidden layers and softmax output, trained by SGD.

Parameters travel as one flat float64 vector. Each layer contributes its
weight matrix (fan_in x fan_out, row-major) followed by its bias vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from fedpot.dataset import LabeledDataset

BITS_PER_VALUE = 32


@dataclass(frozen=True)
class MlpArchitecture:
    input_dim: int
    hidden_sizes: tuple[int, ...]
    num_classes: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.input_dim < 1 or self.num_classes < 1 or any(h < 1 for h in self.hidden_sizes):
            raise ValueError("all layer sizes must be >= 1")

    @classmethod
    def default_for(cls, input_dim: int, num_classes: int) -> "MlpArchitecture":
        if input_dim == 115:
            hidden = (115, 62, 32)
        else:
            hidden = (input_dim, math.ceil(input_dim / 2), math.ceil(input_dim / 4))
        return cls(input_dim, hidden, num_classes)

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_sizes, self.num_classes)

    @property
    def shapes(self) -> tuple[tuple[int, int], ...]:
        sizes = self.layer_sizes
        return tuple((sizes[i], sizes[i + 1]) for i in range(len(sizes) - 1))

    @property
    def num_params(self) -> int:
        return sum((fan_in + 1) * fan_out for fan_in, fan_out in self.shapes)

    @property
    def model_size_bits(self) -> int:
        return self.num_params * BITS_PER_VALUE


class LayoutError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ParameterVector:
    values: np.ndarray
    shapes: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        expected = sum((a + 1) * b for a, b in self.shapes)
        if vals.shape[0] != expected:
            raise LayoutError(f"vector has {vals.shape[0]} values, layout needs {expected}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "shapes", tuple(tuple(s) for s in self.shapes))

    def __len__(self) -> int:
        return int(self.values.shape[0])

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return _unflatten(self.values, self.shapes)

    def same_layout(self, other: "ParameterVector") -> bool:
        return self.shapes == other.shapes

    def replace(self, values: np.ndarray) -> "ParameterVector":
        return ParameterVector(values, self.shapes)


def _unflatten(values: np.ndarray, shapes) -> list[tuple[np.ndarray, np.ndarray]]:
    out = []
    pos = 0
    for fan_in, fan_out in shapes:
        w = values[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        out.append((w, values[pos : pos + fan_out]))
        pos += fan_out
    return out


def flatten(layers: Iterable[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    return np.concatenate([np.concatenate([w.reshape(-1), b.reshape(-1)]) for w, b in layers])


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 0.01
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")


@dataclass(frozen=True)
class EvalMetrics:
    """Multi-class accuracy plus attack-vs-benign rates.

    A rate with an empty denominator is NaN and its name is listed in
    ``undefined``.
    """

    accuracy: float
    tprate: float
    tnr: float
    f1: float
    loss: float
    undefined: tuple[str, ...] = field(default=())

    def as_dict(self) -> dict:
        def clean(v: float):
            return None if math.isnan(v) else float(v)

        return {
            "accuracy": clean(self.accuracy),
            "tprate": clean(self.tprate),
            "tnr": clean(self.tnr),
            "f1": clean(self.f1),
            "loss": clean(self.loss),
            "undefined": list(self.undefined),
        }


def init_params(arch: MlpArchitecture, seed: int) -> ParameterVector:
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in arch.shapes:
        bound = 1.0 / math.sqrt(fan_in)
        layers.append((rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return ParameterVector(flatten(layers), arch.shapes)


def _check_input(params: ParameterVector, ds: LabeledDataset) -> None:
    if len(ds) == 0:
        raise ValueError("dataset is empty")
    if ds.dimension != params.shapes[0][0]:
        raise ValueError(f"dataset has d={ds.dimension}, network expects {params.shapes[0][0]}")
    if ds.num_classes > params.shapes[-1][1]:
        raise ValueError("dataset has more classes than the output layer")


def forward(params: ParameterVector, x: np.ndarray) -> np.ndarray:
    """Class probabilities for the rows of ``x``."""
    return _softmax(_logits(params.layers(), x)[-1])


def _logits(layers, x: np.ndarray) -> list[np.ndarray]:
    """Activations per layer; the last entry holds the raw output scores."""
    acts = [x]
    h = x
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        h = z if i == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def loss_and_grad(params: ParameterVector, x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient as a flat vector."""
    return _loss_and_grad(params.layers(), x, y)


def _loss_and_grad(layers, x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    acts = _logits(layers, x)
    logp = _log_softmax(acts[-1])
    n = x.shape[0]
    loss = -float(np.mean(logp[np.arange(n), y]))
    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads: list[tuple[np.ndarray, np.ndarray]] = []
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        a_in = acts[i]
        grads.append((a_in.T @ delta, delta.sum(axis=0)))
        if i > 0:
            delta = (delta @ w.T) * (acts[i] > 0)
    grads.reverse()
    return loss, flatten(grads)


def dataset_loss(params: ParameterVector, ds: LabeledDataset) -> float:
    logp = _log_softmax(_logits(params.layers(), ds.features)[-1])
    return -float(np.mean(logp[np.arange(len(ds)), ds.labels]))


def local_train(
    params: ParameterVector, ds: LabeledDataset, cfg: TrainingConfig
) -> tuple[ParameterVector, int]:
    """Mini-batch SGD on cross-entropy; returns new parameters and the step count."""
    _check_input(params, ds)
    rng = np.random.default_rng(cfg.seed)
    theta = params.values.copy()
    layers = _unflatten(theta, params.shapes)  # views into theta
    x, y = ds.features, ds.labels
    n = len(ds)
    steps = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            _, grad = _loss_and_grad(layers, x[batch], y[batch])
            theta -= cfg.learning_rate * grad
            steps += 1
    return params.replace(theta), steps


def predict(params: ParameterVector, x: np.ndarray) -> np.ndarray:
    return np.argmax(_logits(params.layers(), x)[-1], axis=1)


def accuracy(params: ParameterVector, ds: LabeledDataset) -> float:
    _check_input(params, ds)
    return float(np.mean(predict(params, ds.features) == ds.labels))


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else math.nan


def binary_metrics(tp: int, fp: int, fn: int, tn: int) -> tuple[float, float, float, tuple[str, ...]]:
    """(TPRate, TNR, F1, undefined-names) from a binary confusion matrix."""
    undefined = []
    tpr = _ratio(tp, tp + fn)
    tnr = _ratio(tn, tn + fp)
    if math.isnan(tpr):
        undefined.append("tprate")
    if math.isnan(tnr):
        undefined.append("tnr")
    if tp + fn == 0:
        f1 = math.nan
        undefined.append("f1")
    else:
        f1 = 2.0 * tp / (2.0 * tp + fp + fn)
    return tpr, tnr, f1, tuple(undefined)


def evaluate(
    params: ParameterVector, ds: LabeledDataset, positive_labels: Sequence[int] | set[int]
) -> EvalMetrics:
    _check_input(params, ds)
    pred = predict(params, ds.features)
    positive = np.asarray(sorted(set(int(p) for p in positive_labels)), dtype=np.int64)
    true_pos = np.isin(ds.labels, positive)
    pred_pos = np.isin(pred, positive)
    tp = int(np.sum(true_pos & pred_pos))
    fp = int(np.sum(~true_pos & pred_pos))
    fn = int(np.sum(true_pos & ~pred_pos))
    tn = int(np.sum(~true_pos & ~pred_pos))
    tpr, tnr, f1, undefined = binary_metrics(tp, fp, fn, tn)
    return EvalMetrics(
        accuracy=float(np.mean(pred == ds.labels)),
        tprate=tpr,
        tnr=tnr,
        f1=f1,
        loss=dataset_loss(params, ds),
        undefined=undefined,
    )


def param_distance(a: ParameterVector, b: ParameterVector) -> float:
    if not a.same_layout(b):
        raise LayoutError("parameter vectors have different layouts")
    return float(np.linalg.norm(a.values - b.values))
