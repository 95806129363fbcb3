"""Small dense softmax classifier with from-scratch gradients, plus the
synthetic datasets and the masked-training loop used to probe resilience.

Everything runs in float64 so gradient checks are tight and identical
seeds give bitwise-identical weights. A prune mask pins individual weights
to zero for the whole life of a run: zeroed when attached, excluded from
gradient updates, and re-pinned after every optimizer step.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .mapping import LayerShape
from .seeding import subseed

SCHEMA_VERSION = 1

DATASET_KINDS = ("blobs", "spirals")


@dataclass(frozen=True)
class SyntheticDataset:
    """One split (train or test) of a generated dataset."""

    x: np.ndarray  # (n, n_features) float64
    y: np.ndarray  # (n,) int64 labels in [0, n_classes)
    n_classes: int
    seed: int
    split: str


@dataclass(frozen=True)
class DatasetPair:
    """Train and test splits produced together by make_dataset."""

    train: SyntheticDataset
    test: SyntheticDataset

    @property
    def n_features(self) -> int:
        return int(self.train.x.shape[1])

    @property
    def n_classes(self) -> int:
        return self.train.n_classes


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    batch_size: int = 32
    max_epochs: int = 20
    seed: int = 0
    # Stop at the end of the first epoch whose test accuracy reaches this
    # value; None trains the full budget.
    stop_accuracy: float | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 0:
            raise ValueError(f"max_epochs must be >= 0, got {self.max_epochs}")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture only: hidden layer widths. In/out dims come from the data."""

    hidden: tuple[int, ...] = (32, 32)

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if any(h < 1 for h in self.hidden):
            raise ValueError(f"hidden widths must be >= 1, got {self.hidden}")


class TinyModel:
    """Stack of dense layers; hidden layers rectify, the last feeds softmax.

    `masks` is optional bookkeeping: once attached, every masked weight is
    exactly zero and stays zero through any further training.
    """

    def __init__(self, weights, biases, masks=None):
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias vector per weight matrix")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {k}: weight {w.shape} / bias {b.shape} mismatch")
            if k and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ValueError(
                    f"layer {k}: in_dim {w.shape[1]} != previous out_dim "
                    f"{self.weights[k - 1].shape[0]}"
                )
        self.masks = None
        if masks is not None:
            self.attach_masks(masks)

    @property
    def dims(self) -> list[int]:
        """Layer widths, input first: [in, hidden..., out]."""
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def shapes(self) -> list[LayerShape]:
        return [LayerShape(in_dim=w.shape[1], out_dim=w.shape[0]) for w in self.weights]

    def copy(self) -> "TinyModel":
        out = TinyModel([w.copy() for w in self.weights], [b.copy() for b in self.biases])
        if self.masks is not None:
            out.masks = [m.copy() for m in self.masks]
        return out

    def attach_masks(self, masks) -> None:
        """Attach per-layer keep-masks and pin the masked weights to zero."""
        masks = [np.asarray(m, dtype=bool) for m in masks]
        if len(masks) != len(self.weights):
            raise ValueError(f"got {len(masks)} masks for {len(self.weights)} layers")
        for k, (w, m) in enumerate(zip(self.weights, masks)):
            if m.shape != w.shape:
                raise ValueError(f"layer {k}: mask {m.shape} != weights {w.shape}")
        self.masks = masks
        for w, m in zip(self.weights, self.masks):
            w *= m

    def logits(self, x) -> np.ndarray:
        a = np.asarray(x, dtype=np.float64)
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            a = np.maximum(z, 0.0) if k < last else z
        return a

    def forward(self, x) -> np.ndarray:
        """Class scores for a batch; each row is softmax-normalized."""
        return _softmax(self.logits(x))

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)


def init_model(dims, seed: int) -> TinyModel:
    """He-style init, bitwise deterministic for a fixed seed. Biases start at 0."""
    dims = [int(d) for d in dims]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ValueError(f"need at least [in, out] dims >= 1, got {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for in_dim, out_dim in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, math.sqrt(2.0 / in_dim), size=(out_dim, in_dim)))
        biases.append(np.zeros(out_dim))
    return TinyModel(weights, biases)


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_gradients(model: TinyModel, x, y, masks=None):
    """Mean cross-entropy over the batch, and its gradients per layer.

    Masked weights contribute nothing: they read as zero in the forward
    pass and their gradient entries are dropped. Returns
    (loss, [dW per layer], [db per layer]).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    ws = model.weights if masks is None else [w * m for w, m in zip(model.weights, masks)]
    last = len(ws) - 1

    acts = [x]
    pres = []
    a = x
    for k, (w, b) in enumerate(zip(ws, model.biases)):
        z = a @ w.T + b
        pres.append(z)
        a = np.maximum(z, 0.0) if k < last else z
        acts.append(a)

    logits = pres[-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
    n = x.shape[0]
    loss = float(np.mean(lse - logits[np.arange(n), y]))

    probs = _softmax(logits)
    dz = probs
    dz[np.arange(n), y] -= 1.0
    dz /= n

    grads_w = [None] * len(ws)
    grads_b = [None] * len(ws)
    for k in range(last, -1, -1):
        grads_w[k] = dz.T @ acts[k]
        grads_b[k] = dz.sum(axis=0)
        if masks is not None:
            grads_w[k] = grads_w[k] * masks[k]
        if k:
            dz = (dz @ ws[k]) * (pres[k - 1] > 0.0)
    return loss, grads_w, grads_b


def _accuracy(model: TinyModel, ds: SyntheticDataset) -> float:
    return float(np.mean(model.predict(ds.x) == ds.y))


def _train(model: TinyModel, masks, data: DatasetPair, config: TrainConfig):
    """Shared SGD loop. Returns (trained copy, per-epoch test accuracy)."""
    out = model.copy()
    if masks is not None:
        out.attach_masks(masks)
    rng = np.random.default_rng(config.seed)
    x, y = data.train.x, data.train.y
    history: list[float] = []
    for _epoch in range(config.max_epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(x), config.batch_size):
            idx = order[start : start + config.batch_size]
            _, gw, gb = loss_and_gradients(out, x[idx], y[idx], out.masks)
            for k in range(len(out.weights)):
                out.weights[k] -= config.learning_rate * gw[k]
                out.biases[k] -= config.learning_rate * gb[k]
            if out.masks is not None:
                # Gradients are already masked; re-pin anyway so the zero
                # invariant survives any numeric drift.
                for k, m in enumerate(out.masks):
                    out.weights[k] *= m
        acc = _accuracy(out, data.test)
        history.append(acc)
        if config.stop_accuracy is not None and acc >= config.stop_accuracy:
            break
    return out, history


def pretrain(spec: ModelSpec, data: DatasetPair, config: TrainConfig):
    """Train the fault-free baseline from scratch.

    Returns (model, test accuracy). Zero epochs returns the freshly
    initialized model unchanged. Init and shuffling draw from separate
    child streams of config.seed, so they never alias.
    """
    dims = [data.n_features, *spec.hidden, data.n_classes]
    model = init_model(dims, subseed(config.seed, 0))
    model, _ = _train(model, None, data, replace(config, seed=subseed(config.seed, 1)))
    return model, _accuracy(model, data.test)


def train_masked(model: TinyModel, masks, data: DatasetPair, config: TrainConfig):
    """Retrain a copy of `model` with the given per-layer masks pinned.

    Returns (trained model, per-epoch test accuracy trajectory). The
    trajectory has length <= config.max_epochs; it is shorter when
    config.stop_accuracy is reached early. An all-true mask reproduces
    unmasked training bit for bit under the same seed.
    """
    return _train(model, masks, data, config)


def evaluate(model: TinyModel, masks, data: DatasetPair) -> float:
    """Test-split accuracy with `masks` zeroing weights during inference.

    Non-destructive: the model is not modified. masks=None evaluates as-is.
    """
    if masks is None:
        return _accuracy(model, data.test)
    masked = model.copy()
    masked.attach_masks(masks)
    return _accuracy(masked, data.test)


def _blobs(rng, per_class, n_features, n_classes, noise):
    centers = rng.normal(0.0, 1.0, size=(n_classes, n_features))
    out = []
    for k in range(n_classes):
        pts = centers[k] + noise * rng.normal(0.0, 1.0, size=(per_class, n_features))
        out.append(pts)
    return out


def _spirals(rng, per_class, n_features, n_classes, noise):
    if n_features < 2:
        raise ValueError("spirals need at least 2 features")
    out = []
    t = np.linspace(0.0, 1.0, per_class)
    for k in range(n_classes):
        angle = 2.0 * np.pi * (1.5 * t + k / n_classes)
        radius = 0.2 + 1.8 * t
        pts = np.zeros((per_class, n_features))
        pts[:, 0] = radius * np.cos(angle)
        pts[:, 1] = radius * np.sin(angle)
        pts += noise * rng.normal(0.0, 1.0, size=(per_class, n_features))
        out.append(pts)
    return out


def make_dataset(
    kind: str,
    n_samples: int,
    n_features: int,
    n_classes: int,
    noise: float,
    seed: int,
) -> DatasetPair:
    """Deterministic, class-balanced synthetic data with a fixed 80/20 split.

    Both splits stay exactly balanced: each class contributes the same
    number of rows to train and to test. n_samples must divide evenly
    across classes.
    """
    if kind not in DATASET_KINDS:
        raise ValueError(f"unknown dataset kind {kind!r}, expected one of {DATASET_KINDS}")
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    if n_features < 1:
        raise ValueError(f"need at least 1 feature, got {n_features}")
    if noise < 0:
        raise ValueError(f"noise must be >= 0, got {noise}")
    if n_samples < n_classes or n_samples % n_classes != 0:
        raise ValueError(
            f"n_samples={n_samples} must split evenly across {n_classes} classes"
        )
    per_class = n_samples // n_classes
    n_test = max(1, round(0.2 * per_class))
    if n_test >= per_class:
        raise ValueError(f"{per_class} samples per class is too few for an 80/20 split")

    rng = np.random.default_rng(seed)
    make = _blobs if kind == "blobs" else _spirals
    class_points = make(rng, per_class, n_features, n_classes, noise)

    train_x, train_y, test_x, test_y = [], [], [], []
    for k, pts in enumerate(class_points):
        order = rng.permutation(per_class)
        test_x.append(pts[order[:n_test]])
        train_x.append(pts[order[n_test:]])
        test_y.append(np.full(n_test, k, dtype=np.int64))
        train_y.append(np.full(per_class - n_test, k, dtype=np.int64))

    def _mix(xs, ys, split):
        x = np.concatenate(xs)
        y = np.concatenate(ys)
        order = rng.permutation(len(x))
        return SyntheticDataset(
            x=x[order], y=y[order], n_classes=n_classes, seed=seed, split=split
        )

    train = _mix(train_x, train_y, "train")
    test = _mix(test_x, test_y, "test")
    return DatasetPair(train=train, test=test)


def save_model(model: TinyModel, path) -> None:
    """Checkpoint to JSON: layer dims plus row-major weight/bias arrays."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "dims": model.dims,
        "layers": [
            {"w": w.tolist(), "b": b.tolist()}
            for w, b in zip(model.weights, model.biases)
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")


def load_model(path) -> TinyModel:
    """Read a checkpoint back; float64 values round-trip exactly."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValueError(f"checkpoint {path}: invalid JSON ({e})") from e
    if not isinstance(doc, dict) or "layers" not in doc or "dims" not in doc:
        raise ValueError(f"checkpoint {path}: expected an object with 'dims' and 'layers'")
    layers = doc["layers"]
    dims = doc["dims"]
    if not isinstance(layers, list) or not layers:
        raise ValueError(f"checkpoint {path}: 'layers' must be a non-empty array")
    try:
        model = TinyModel(
            [np.asarray(l["w"], dtype=np.float64) for l in layers],
            [np.asarray(l["b"], dtype=np.float64) for l in layers],
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ValueError(f"checkpoint {path}: malformed layers ({e})") from e
    if model.dims != list(dims):
        raise ValueError(
            f"checkpoint {path}: declared dims {dims} do not match layer shapes {model.dims}"
        )
    return model
