"""Frame-level MLP classifiers and signer adaptation.

One network per classifier head (FS-letter plus optional linguistic-feature
heads), all consuming the same input: per-frame descriptors concatenated
over an odd window centered at the current frame, with edge replication.

Adaptation modes:
  * lin_up    -- learn an affine map on each static frame (shared across
                 window positions) jointly with the final softmax layer;
                 everything else frozen.
  * lin_lon   -- same input map, but the original output activation is
                 dropped and a fresh softmax layer is stacked on top; only
                 the input map and the new layer train.
  * fine_tune -- all weights train, warm-started from the base network.
"""

from __future__ import annotations

import copy
import struct
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import DataFormatError, FrameSequence

MODEL_MAGIC = b"SGNN"
MODEL_VERSION = 1

ADAPT_METHODS = ("lin_up", "lin_lon", "fine_tune")


def window_frames(frames: np.ndarray, window: int) -> np.ndarray:
    """Concatenate frames over a centered window with edge replication."""
    if window % 2 != 1:
        raise ValueError("window width must be odd")
    frames = np.asarray(frames, dtype=np.float64)
    T = frames.shape[0]
    half = window // 2
    idx = np.clip(np.arange(T)[:, None] + np.arange(-half, half + 1), 0, T - 1)
    return frames[idx].reshape(T, -1)


@dataclass(frozen=True)
class PosteriorStream:
    """Per-frame class posteriors from one classifier head."""

    head: str
    probs: np.ndarray  # (T, V)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 2:
            raise ValueError("posteriors must be T x V")
        if np.any(probs < 0):
            raise ValueError("negative posterior")
        sums = probs.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-6):
            raise ValueError("posterior rows must sum to 1")
        object.__setattr__(self, "probs", probs)

    @property
    def num_frames(self) -> int:
        return self.probs.shape[0]

    @property
    def num_classes(self) -> int:
        return self.probs.shape[1]


@dataclass
class TrainConfig:
    hidden: tuple[int, ...] = (256, 256)
    window: int = 21
    minibatch: int = 100
    epochs: int = 30
    learning_rate: float = 0.01
    momentum: float = 0.95
    weight_decay: float = 1e-5
    dropout: float = 0.5
    halving_threshold: float = 0.001  # min held-out accuracy gain, absolute
    holdout_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning rate must be in (0, 1]")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")


@dataclass
class AdaptConfig:
    method: str = "fine_tune"
    epochs: int = 20
    learning_rate: float = 0.02
    momentum: float = 0.9
    minibatch: int = 100
    dropout: float = 0.0
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.method not in ADAPT_METHODS:
            raise ValueError(f"unknown adaptation method {self.method!r}")


@dataclass
class Mlp:
    """Feed-forward net: ReLU hidden layers, softmax output.

    `weights[i]` has shape (out, in).  `input_affine`, when present, is a
    (D x D, D) pair applied to every static frame block of the windowed
    input before the first layer.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    window: int
    static_dim: int
    input_affine: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        expect = self.window * self.static_dim
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape[1] != expect:
                raise ValueError(f"layer {i}: input dim {W.shape[1]} != "
                                 f"{expect}")
            if b.shape != (W.shape[0],):
                raise ValueError(f"layer {i}: bias shape mismatch")
            expect = W.shape[0]
        for p in self.parameters():
            if not np.all(np.isfinite(p)):
                raise ValueError("non-finite parameter")

    @property
    def input_dim(self) -> int:
        return self.window * self.static_dim

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[0]

    def parameters(self) -> list[np.ndarray]:
        params = []
        if self.input_affine is not None:
            params.extend(self.input_affine)
        for W, b in zip(self.weights, self.biases):
            params.append(W)
            params.append(b)
        return params

    def clone(self) -> "Mlp":
        affine = None
        if self.input_affine is not None:
            affine = (self.input_affine[0].copy(), self.input_affine[1].copy())
        return Mlp([W.copy() for W in self.weights],
                   [b.copy() for b in self.biases],
                   self.window, self.static_dim, affine)

    def _transform_input(self, X: np.ndarray) -> np.ndarray:
        if self.input_affine is None:
            return X
        A, b = self.input_affine
        blocks = X.reshape(X.shape[0], self.window, self.static_dim)
        return (blocks @ A.T + b).reshape(X.shape[0], -1)

    def logits(self, X: np.ndarray) -> np.ndarray:
        h = self._transform_input(np.asarray(X, dtype=np.float64))
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ W.T + b, 0.0)
        return h @ self.weights[-1].T + self.biases[-1]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _softmax(self.logits(X))


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def init_mlp(static_dim: int, window: int, hidden: Sequence[int],
             num_classes: int, seed: int) -> Mlp:
    """Seeded uniform init scaled by fan-in."""
    rng = np.random.default_rng(seed)
    sizes = [window * static_dim, *hidden, num_classes]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        a = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-a, a, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases, window, static_dim)


def loss_and_grad(model: Mlp, X: np.ndarray, labels: np.ndarray,
                  weight_decay: float = 0.0, dropout: float = 0.0,
                  rng: np.random.Generator | None = None):
    """Cross-entropy (+ L2 on weight matrices) and its gradient.

    Returns (loss, grads) with grads aligned to model.parameters().
    Dropout (inverted) applies to hidden activations when rate > 0.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    B = X.shape[0]
    has_affine = model.input_affine is not None

    h = model._transform_input(X)
    acts = [h]  # inputs to each layer
    masks = []
    for W, b in zip(model.weights[:-1], model.biases[:-1]):
        h = np.maximum(h @ W.T + b, 0.0)
        if dropout > 0.0:
            mask = (rng.random(h.shape) >= dropout) / (1.0 - dropout)
            h = h * mask
            masks.append(mask)
        acts.append(h)
    z = h @ model.weights[-1].T + model.biases[-1]

    zmax = z.max(axis=1, keepdims=True)
    logsum = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    loss = float(np.mean(logsum - z[np.arange(B), labels]))
    if weight_decay:
        loss += 0.5 * weight_decay * sum(float(np.sum(W * W))
                                         for W in model.weights)

    delta = _softmax(z)
    delta[np.arange(B), labels] -= 1.0
    delta /= B

    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    for i in range(len(model.weights) - 1, -1, -1):
        grads_w[i] = delta.T @ acts[i]
        if weight_decay:
            grads_w[i] += weight_decay * model.weights[i]
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ model.weights[i]
            if dropout > 0.0:
                delta = delta * masks[i - 1]
            delta = delta * (acts[i] > 0)

    grads = []
    if has_affine:
        # delta holds dL/d(first-layer pre-activation); push through W0
        # and fold the shared affine gradient over window positions
        dt = (delta @ model.weights[0]).reshape(
            B, model.window, model.static_dim)
        blocks = X.reshape(B, model.window, model.static_dim)
        gA = np.einsum("bwo,bwi->oi", dt, blocks)
        gb = dt.sum(axis=(0, 1))
        grads.extend([gA, gb])
    for gw, gb in zip(grads_w, grads_b):
        grads.append(gw)
        grads.append(gb)

    if not np.isfinite(loss):
        raise RuntimeError(
            f"training diverged: loss={loss}, batch={B}, "
            f"logit range [{z.min():.3g}, {z.max():.3g}]")
    return loss, grads


def accuracy(model: Mlp, X: np.ndarray, labels: np.ndarray) -> float:
    pred = np.argmax(model.logits(X), axis=1)
    return float(np.mean(pred == labels))


def _run_sgd(model: Mlp, X, labels, *, epochs, minibatch, learning_rate,
             momentum, weight_decay, dropout, seed, select_X, select_y,
             trainable=None, halving_threshold=0.001) -> Mlp:
    """SGD with momentum; returns the snapshot with best selection accuracy.

    `trainable` is a boolean list aligned to model.parameters(); frozen
    parameters keep their exact initial bits.  The learning rate halves
    whenever selection accuracy fails to improve by `halving_threshold`.
    """
    rng = np.random.default_rng(seed)
    params = model.parameters()
    if trainable is None:
        trainable = [True] * len(params)
    velocity = [np.zeros_like(p) for p in params]

    best = model.clone()
    best_acc = accuracy(model, select_X, select_y)
    lr = learning_rate
    last_acc = best_acc
    N = X.shape[0]
    for _ in range(epochs):
        order = rng.permutation(N)
        for start in range(0, N, minibatch):
            batch = order[start:start + minibatch]
            _, grads = loss_and_grad(model, X[batch], labels[batch],
                                     weight_decay, dropout, rng)
            params = model.parameters()
            for p, v, g, t in zip(params, velocity, grads, trainable):
                if not t:
                    continue
                v *= momentum
                v -= lr * g
                p += v
        acc = accuracy(model, select_X, select_y)
        if acc > best_acc:
            best_acc = acc
            best = model.clone()
        if acc < last_acc + halving_threshold:
            lr *= 0.5
        last_acc = acc
    return best


def train_mlp(X: np.ndarray, labels: np.ndarray, num_classes: int,
              cfg: TrainConfig, static_dim: int,
              holdout: tuple[np.ndarray, np.ndarray] | None = None) -> Mlp:
    """Train a classifier head on windowed frames.

    Returns the epoch snapshot with the best held-out accuracy.  Without an
    explicit holdout set, cfg.holdout_fraction of the data is split off
    deterministically.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if X.shape[0] == 0:
        raise ValueError("empty training set")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError("label out of range")
    if holdout is None:
        rng = np.random.default_rng(cfg.seed + 0x5EED)
        order = rng.permutation(X.shape[0])
        n_hold = max(1, int(round(cfg.holdout_fraction * X.shape[0])))
        hold_idx, train_idx = order[:n_hold], order[n_hold:]
        X, labels, hold_X, hold_y = (X[train_idx], labels[train_idx],
                                     X[hold_idx], labels[hold_idx])
    else:
        hold_X, hold_y = holdout

    model = init_mlp(static_dim, cfg.window, cfg.hidden, num_classes,
                     cfg.seed)
    return _run_sgd(
        model, X, labels, epochs=cfg.epochs, minibatch=cfg.minibatch,
        learning_rate=cfg.learning_rate, momentum=cfg.momentum,
        weight_decay=cfg.weight_decay, dropout=cfg.dropout, seed=cfg.seed + 1,
        select_X=hold_X, select_y=hold_y,
        halving_threshold=cfg.halving_threshold)


def adapt(base: Mlp, X: np.ndarray, labels: np.ndarray,
          cfg: AdaptConfig) -> Mlp:
    """Adapt a trained network to new data; see module docstring.

    Epoch selection maximizes accuracy on the adaptation data itself.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if X.shape[0] == 0:
        raise ValueError("empty adaptation set")

    model = base.clone()
    D = model.static_dim
    if model.input_affine is None and cfg.method in ("lin_up", "lin_lon"):
        model.input_affine = (np.eye(D), np.zeros(D))
    n_layers = len(model.weights)
    if cfg.method == "lin_up":
        trainable = [True, True]  # affine
        for i in range(n_layers):
            trainable += [i == n_layers - 1] * 2
    elif cfg.method == "lin_lon":
        V = model.num_classes
        model.weights.append(np.eye(V))
        model.biases.append(np.zeros(V))
        trainable = [True, True] + [False] * (2 * n_layers) + [True, True]
    else:  # fine_tune
        trainable = None

    return _run_sgd(
        model, X, labels, epochs=cfg.epochs, minibatch=cfg.minibatch,
        learning_rate=cfg.learning_rate, momentum=cfg.momentum,
        weight_decay=cfg.weight_decay, dropout=cfg.dropout, seed=cfg.seed + 2,
        select_X=X, select_y=labels, trainable=trainable)


def trainable_parameter_count(model: Mlp, method: str) -> int:
    D = model.static_dim
    if method == "lin_up":
        W, b = model.weights[-1], model.biases[-1]
        return D * (D + 1) + W.size + b.size
    if method == "lin_lon":
        V = model.num_classes
        return D * (D + 1) + V * (V + 1)
    return sum(p.size for p in model.parameters())


def posteriors(model: Mlp, seq: FrameSequence, head: str = "letter"
               ) -> PosteriorStream:
    """Per-frame softmax outputs; deterministic (no dropout at inference)."""
    if seq.dim != model.static_dim:
        raise ValueError(f"descriptor dim {seq.dim} != model dim "
                         f"{model.static_dim}")
    X = window_frames(seq.frames, model.window)
    return PosteriorStream(head, model.predict_proba(X))


def frame_error(model: Mlp, seq: FrameSequence, labels: Sequence[int]
                ) -> float:
    """Fraction of frames whose argmax posterior mismatches the label.

    Ties break toward the smaller class index (argmax convention).
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != seq.num_frames:
        raise ValueError("labels do not match frame count")
    X = window_frames(seq.frames, model.window)
    pred = np.argmax(model.predict_proba(X), axis=1)
    return float(np.mean(pred != labels))


# ---------------------------------------------------------------------------
# Multi-head container and model file
# ---------------------------------------------------------------------------

@dataclass
class HeadSet:
    """Classifier heads sharing one windowed input."""

    heads: dict[str, Mlp]

    def __post_init__(self):
        dims = {(m.window, m.static_dim) for m in self.heads.values()}
        if len(dims) > 1:
            raise ValueError("heads disagree on input spec")

    @property
    def window(self) -> int:
        return next(iter(self.heads.values())).window

    @property
    def static_dim(self) -> int:
        return next(iter(self.heads.values())).static_dim

    def posterior_streams(self, seq: FrameSequence) -> dict[str, PosteriorStream]:
        X = window_frames(seq.frames, self.window)
        return {name: PosteriorStream(name, m.predict_proba(X))
                for name, m in self.heads.items()}

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(struct.pack("<4sII", MODEL_MAGIC, MODEL_VERSION,
                                len(self.heads)))
            for name in sorted(self.heads):
                m = self.heads[name]
                enc = name.encode("utf-8")
                f.write(struct.pack("<H", len(enc)))
                f.write(enc)
                f.write(struct.pack("<IIB", m.window, m.static_dim,
                                    1 if m.input_affine is not None else 0))
                if m.input_affine is not None:
                    A, b = m.input_affine
                    f.write(A.astype("<f4").tobytes())
                    f.write(b.astype("<f4").tobytes())
                f.write(struct.pack("<I", len(m.weights)))
                for W, b in zip(m.weights, m.biases):
                    f.write(struct.pack("<II", *W.shape))
                    f.write(W.astype("<f4").tobytes())
                    f.write(b.astype("<f4").tobytes())

    @classmethod
    def load(cls, path) -> "HeadSet":
        raw = open(path, "rb").read()
        off = 0

        def take(fmt):
            nonlocal off
            vals = struct.unpack_from(fmt, raw, off)
            off += struct.calcsize(fmt)
            return vals

        def take_floats(n):
            nonlocal off
            arr = np.frombuffer(raw, dtype="<f4", count=n, offset=off)
            off += 4 * n
            return arr.astype(np.float64)

        magic, version, n_heads = take("<4sII")
        if magic != MODEL_MAGIC:
            raise DataFormatError("not a classifier model file")
        if version != MODEL_VERSION:
            raise DataFormatError(f"unsupported model version {version}")
        heads: dict[str, Mlp] = {}
        for _ in range(n_heads):
            (name_len,) = take("<H")
            name = raw[off:off + name_len].decode("utf-8")
            off += name_len
            window, static_dim, has_affine = take("<IIB")
            affine = None
            if has_affine:
                A = take_floats(static_dim * static_dim).reshape(
                    static_dim, static_dim)
                b = take_floats(static_dim)
                affine = (A, b)
            (n_layers,) = take("<I")
            weights, biases = [], []
            for _ in range(n_layers):
                rows, cols = take("<II")
                weights.append(take_floats(rows * cols).reshape(rows, cols))
                biases.append(take_floats(rows))
            heads[name] = Mlp(weights, biases, window, static_dim, affine)
        return cls(heads)
