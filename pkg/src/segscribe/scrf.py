"""Segmental (semi-Markov) CRF: exact inference, training, and decoding.

The model is a conditional log-linear distribution over labeled
segmentations of a frame sequence, with features from segfeat.  Inference
runs on a (T, L, V) edge-score tensor plus a (V+1, V) transition matrix
(last row = path start); chart recursions use the compiled kernels with a
numpy fallback.

When `bos`/`eos` are set, the label space is constrained: <s> may only
label the first segment, </s> only the last, every complete path starts
with <s>, ends with </s>, and carries at least one letter in between.
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .core import (DataFormatError, LabeledSegmentation, Lattice, LatticeEdge)
from .mlp import Mlp, TrainConfig, train_mlp
from .segfeat import (FeatureRegistry, SegmentContext, SequenceScorer,
                      peak_indicator, smoothed_derivative, third_sizes)

MODEL_MAGIC = b"SGSC"
MODEL_VERSION = 1

NEG_INF = -np.inf


@dataclass
class ScrfInputs:
    """Per-sequence observations consumed by the SCRF."""

    streams: dict[str, np.ndarray]
    motion: np.ndarray | None = None
    baseline: np.ndarray | None = None  # baseline 1-best frame labels (int)

    @property
    def num_frames(self) -> int:
        return next(iter(self.streams.values())).shape[0]


@dataclass
class ScrfModel:
    registry: FeatureRegistry
    weights: np.ndarray
    max_len: int = 40
    bos: int | None = None
    eos: int | None = None
    lm_table: np.ndarray | None = None  # (V+1, V), row V = path start

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (self.registry.dim,):
            raise ValueError(
                f"weight vector has dim {self.weights.shape}, registry "
                f"needs {self.registry.dim}")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("non-finite weights")
        if self.max_len < 1:
            raise ValueError("max segment length must be >= 1")

    @property
    def labels(self) -> tuple[str, ...]:
        return self.registry.labels

    def label_index(self, label: str) -> int:
        return self.registry.labels.index(label)

    def clone(self) -> "ScrfModel":
        return replace(self, weights=self.weights.copy())

    # -- persistence -------------------------------------------------------

    def save(self, path) -> None:
        reg_text = self.registry.to_text().encode("utf-8")
        with open(path, "wb") as f:
            f.write(struct.pack("<4sI", MODEL_MAGIC, MODEL_VERSION))
            f.write(struct.pack("<I", len(reg_text)))
            f.write(reg_text)
            f.write(struct.pack("<Iii", self.max_len,
                                -1 if self.bos is None else self.bos,
                                -1 if self.eos is None else self.eos))
            has_lm = self.lm_table is not None
            f.write(struct.pack("<B", 1 if has_lm else 0))
            if has_lm:
                f.write(self.lm_table.astype("<f8").tobytes())
            f.write(struct.pack("<Q", self.weights.size))
            f.write(self.weights.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "ScrfModel":
        raw = open(path, "rb").read()
        off = 0

        def take(fmt):
            nonlocal off
            vals = struct.unpack_from(fmt, raw, off)
            off += struct.calcsize(fmt)
            return vals

        magic, version = take("<4sI")
        if magic != MODEL_MAGIC:
            raise DataFormatError("not a segmental model file")
        if version != MODEL_VERSION:
            raise DataFormatError(f"unsupported model version {version}")
        (reg_len,) = take("<I")
        registry = FeatureRegistry.from_text(
            raw[off:off + reg_len].decode("utf-8"))
        off += reg_len
        max_len, bos, eos = take("<Iii")
        (has_lm,) = take("<B")
        lm_table = None
        V = len(registry.labels)
        if has_lm:
            lm_table = np.frombuffer(raw, dtype="<f8", count=(V + 1) * V,
                                     offset=off).reshape(V + 1, V).copy()
            off += 8 * (V + 1) * V
        (dim,) = take("<Q")
        weights = np.frombuffer(raw, dtype="<f8", count=dim,
                                offset=off).copy()
        return cls(registry, weights, max_len,
                   None if bos < 0 else bos, None if eos < 0 else eos,
                   lm_table)


# ---------------------------------------------------------------------------
# Score tensors and charts
# ---------------------------------------------------------------------------

def _scorer(model: ScrfModel, inputs: ScrfInputs) -> SequenceScorer:
    return SequenceScorer(model.registry, inputs.streams, model.max_len,
                          motion=inputs.motion, lm_table=model.lm_table,
                          baseline=inputs.baseline)


def _score_tensors(model: ScrfModel, inputs: ScrfInputs,
                   scorer: SequenceScorer | None = None):
    """Constrained (unary, pair) tensors ready for the kernels."""
    if scorer is None:
        scorer = _scorer(model, inputs)
    unary = scorer.unary(model.weights)
    T, L, V = unary.shape
    pair = scorer.pair(model.weights)
    pair = np.zeros((V + 1, V)) if pair is None else pair.copy()
    if model.bos is not None:
        unary[1:, :, model.bos] = NEG_INF
        keep = model.bos
        for v in range(V):
            if v != keep:
                unary[0, :, v] = NEG_INF
    if model.eos is not None:
        ends = np.arange(T)[:, None] + np.arange(1, L + 1)[None, :]
        at_end = ends == T
        view = unary[:, :, model.eos]
        view[~at_end] = NEG_INF
        for v in range(V):
            if v != model.eos:
                unary[:, :, v][at_end] = NEG_INF
    if model.bos is not None and model.eos is not None:
        pair[model.bos, model.eos] = NEG_INF  # require at least one letter
    return (np.ascontiguousarray(unary), np.ascontiguousarray(pair), scorer)


@dataclass
class SemiMarkovChart:
    """Forward/backward tables plus edge marginals."""

    unary: np.ndarray        # (T, L, V) constrained scores
    pair: np.ndarray         # (V+1, V)
    forward: np.ndarray      # (T+1, V)
    start_scores: np.ndarray  # (T, V) aggregated predecessor mass
    backward: np.ndarray     # (T+1, V)
    end_scores: np.ndarray   # (T, V) aggregated segment+suffix mass
    logz_forward: float
    logz_backward: float

    @property
    def logz(self) -> float:
        return self.logz_forward

    def edge_marginals(self) -> np.ndarray:
        """(T, L, V) posterior mass of each edge; zeros where invalid."""
        T, L, V = self.unary.shape
        ends = np.minimum(np.arange(T)[:, None] + np.arange(1, L + 1), T)
        bw_at = self.backward[ends]  # (T, L, V)
        with np.errstate(over="ignore"):
            mu = np.exp(self.start_scores[:, None, :] + self.unary + bw_at
                        - self.logz)
        return mu

    def pair_marginals(self) -> np.ndarray:
        """(V+1, V) posterior mass of label transitions (row V = start)."""
        T, L, V = self.unary.shape
        mu = np.zeros((V + 1, V))
        if T > 1:
            fw = self.forward[1:T]          # (T-1, V')
            end = self.end_scores[1:T]      # (T-1, V)
            mu[:V] = np.exp(
                _logsumexp3(fw[:, :, None] + self.pair[None, :V, :]
                            + end[:, None, :]) - self.logz)
        mu[V] = np.exp(self.pair[V] + self.end_scores[0] - self.logz)
        return mu

    def check(self, tol: float = 1e-8) -> None:
        if abs(self.logz_forward - self.logz_backward) > tol * max(
                1.0, abs(self.logz_forward)):
            raise AssertionError(
                f"forward/backward disagree: {self.logz_forward} vs "
                f"{self.logz_backward}")


def _logsumexp3(a: np.ndarray) -> np.ndarray:
    """logsumexp over axis 0 of a 3-d array with -inf handling."""
    m = np.max(a, axis=0)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - safe), axis=0)) + safe
    return np.where(np.isfinite(m), out, NEG_INF)


def make_chart(model: ScrfModel, inputs: ScrfInputs) -> SemiMarkovChart:
    unary, pair, _ = _score_tensors(model, inputs)
    fw, start, logz_f = _kernels.forward_log(unary, pair)
    bw, end, logz_b = _kernels.backward_log(unary, pair)
    return SemiMarkovChart(unary, pair, fw, start, bw, end,
                           float(logz_f), float(logz_b))


# ---------------------------------------------------------------------------
# Scores, partition, gradient
# ---------------------------------------------------------------------------

def _as_indices(model: ScrfModel, ls: LabeledSegmentation) -> np.ndarray:
    return np.array([model.label_index(lab) for lab in ls.labels],
                    dtype=np.int64)


def path_score(model: ScrfModel, inputs: ScrfInputs,
               ls: LabeledSegmentation) -> float:
    """Sum of edge scores along one labeled segmentation."""
    if ls.num_frames != inputs.num_frames:
        raise ValueError("segmentation does not span the sequence")
    for lab, q, qn in ls.segments():
        if qn - q > model.max_len:
            raise ValueError(
                f"segment [{q},{qn}) longer than max length {model.max_len}")
    unary, pair, _ = _score_tensors(model, inputs)
    V = unary.shape[2]
    idx = _as_indices(model, ls)
    total = 0.0
    prev = V  # path-start row
    for v, (lab, q, qn) in zip(idx, ls.segments()):
        total += pair[prev, v] + unary[q, qn - q - 1, v]
        prev = v
    return float(total)


def log_partition(model: ScrfModel, inputs: ScrfInputs) -> float:
    unary, pair, _ = _score_tensors(model, inputs)
    _, _, logz = _kernels.forward_log(unary, pair)
    return float(logz)


def _gold_marginals(unary, pair, gold_idx):
    """Constrained-path forward/backward; returns (logz_gold, mu, mu_pair).

    Marginalizes over segmentations for the fixed gold label sequence.
    """
    T, L, V = unary.shape
    k = len(gold_idx)
    nfw = np.full((k + 1, T + 1), NEG_INF)
    nfw[0, 0] = 0.0
    for i in range(1, k + 1):
        v = gold_idx[i - 1]
        prow = V if i == 1 else gold_idx[i - 2]
        base = pair[prow, v]
        col = unary[:, :, v]
        for t in range(i, T + 1):
            lmax = min(L, t)
            qs = np.arange(t - lmax, t)
            vals = nfw[i - 1, qs] + col[qs, t - qs - 1] + base
            m = vals.max()
            if m > NEG_INF:
                nfw[i, t] = m + np.log(np.sum(np.exp(vals - m)))
    logz_gold = float(nfw[k, T])
    if logz_gold == NEG_INF:
        raise ValueError("gold segmentation has no admissible path "
                         "(check max segment length and constraints)")
    nbw = np.full((k + 1, T + 1), NEG_INF)
    nbw[k, T] = 0.0
    for i in range(k - 1, -1, -1):
        v = gold_idx[i]
        prow = V if i == 0 else gold_idx[i - 1]
        base = pair[prow, v]
        col = unary[:, :, v]
        for t in range(i, T):
            lmax = min(L, T - t)
            ls = np.arange(1, lmax + 1)
            vals = base + col[t, ls - 1] + nbw[i + 1, t + ls]
            m = vals.max()
            if m > NEG_INF:
                nbw[i, t] = m + np.log(np.sum(np.exp(vals - m)))
    mu = np.zeros((T, L, V))
    mu_pair = np.zeros((V + 1, V))
    ends = np.minimum(np.arange(T)[:, None] + np.arange(1, L + 1), T)
    for i in range(1, k + 1):
        v = gold_idx[i - 1]
        prow = V if i == 1 else gold_idx[i - 2]
        base = pair[prow, v]
        with np.errstate(over="ignore"):
            nu = np.exp(nfw[i - 1, :T, None] + unary[:, :, v] + base
                        + nbw[i, ends] - logz_gold)
        mu[:, :, v] += nu
        mu_pair[prow, v] += float(nu.sum())
    return logz_gold, mu, mu_pair


def nll_and_gradient(model: ScrfModel,
                     batch: Iterable[tuple[ScrfInputs, LabeledSegmentation]],
                     l2: float = 0.0):
    """Negative conditional log-likelihood of the gold label sequences.

    The numerator marginalizes over segmentations of the gold labels; gold
    boundaries are not used.  Returns (loss, gradient); the gradient is
    model-expected minus gold-expected features plus the L2 term.  L1 is
    handled by the proximal step in training, not here.
    """
    loss = 0.0
    grad = np.zeros(model.registry.dim)
    for inputs, gold in batch:
        for lab, q, qn in gold.segments():
            if qn - q > model.max_len:
                raise ValueError(
                    f"gold segment [{q},{qn}) exceeds max length "
                    f"{model.max_len}")
        unary, pair, scorer = _score_tensors(model, inputs)
        fw, start, logz = _kernels.forward_log(unary, pair)
        bw, end, logz_b = _kernels.backward_log(unary, pair)
        chart = SemiMarkovChart(unary, pair, fw, start, bw, end,
                                float(logz), float(logz_b))
        gold_idx = _as_indices(model, gold)
        logz_gold, mu_g, mu_pair_g = _gold_marginals(unary, pair, gold_idx)
        loss += float(logz) - logz_gold
        scorer.accumulate(chart.edge_marginals(), chart.pair_marginals(),
                          grad, +1.0)
        scorer.accumulate(mu_g, mu_pair_g, grad, -1.0)
    if l2:
        loss += 0.5 * l2 * float(np.dot(model.weights, model.weights))
        grad += l2 * model.weights
    if not np.isfinite(loss):
        raise RuntimeError(f"SCRF loss diverged: {loss}")
    return loss, grad


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------

def decode(model: ScrfModel, inputs: ScrfInputs) -> LabeledSegmentation:
    """Joint argmax over labeled segmentations (semi-Markov Viterbi)."""
    unary, pair, _ = _score_tensors(model, inputs)
    _, labels, bounds = _kernels.viterbi(unary, pair)
    names = tuple(model.labels[v] for v in labels)
    return LabeledSegmentation(names, tuple(int(b) for b in bounds))


def decode_with_score(model: ScrfModel, inputs: ScrfInputs):
    unary, pair, _ = _score_tensors(model, inputs)
    score, labels, bounds = _kernels.viterbi(unary, pair)
    names = tuple(model.labels[v] for v in labels)
    return LabeledSegmentation(names, tuple(int(b) for b in bounds)), score


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class ScrfTrainConfig:
    epochs: int = 10
    step: float = 0.5
    l2: float = 1e-4
    l1: float = 0.0
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def train_scrf(model: ScrfModel,
               data: Sequence[tuple[ScrfInputs, LabeledSegmentation]],
               cfg: ScrfTrainConfig,
               dev: Sequence[tuple[ScrfInputs, Sequence[str]]] | None = None,
               ) -> ScrfModel:
    """SGD over sequences with an L1 proximal step.

    With a dev set (inputs, reference letters), the epoch snapshot with the
    lowest dev letter error rate is returned; otherwise the final weights.
    Zero epochs return the initial model unchanged.
    """
    from .core import letter_error_rate

    model = model.clone()
    if cfg.epochs == 0:
        return model
    rng = np.random.default_rng(cfg.seed)
    best = model.clone()
    best_ler = np.inf
    for _ in range(cfg.epochs):
        order = rng.permutation(len(data)) if cfg.shuffle \
            else np.arange(len(data))
        for i in order:
            _, grad = nll_and_gradient(model, [data[i]], l2=cfg.l2)
            model.weights -= cfg.step * grad
            if cfg.l1:
                shrink = cfg.step * cfg.l1
                model.weights = np.sign(model.weights) * np.maximum(
                    np.abs(model.weights) - shrink, 0.0)
        if dev is not None:
            edits = total = 0
            for inputs, ref in dev:
                hyp = decode(model, inputs).strip_boundary_symbols()
                stats = letter_error_rate(hyp, ref)
                edits += stats.distance
                total += stats.ref_length
            ler = edits / max(total, 1)
            if ler < best_ler:
                best_ler = ler
                best = model.clone()
    return best if dev is not None else model


# ---------------------------------------------------------------------------
# Lattice rescoring
# ---------------------------------------------------------------------------

def _edge_context(model: ScrfModel, inputs: ScrfInputs, prev: int | None,
                  label: int, start: int, end: int) -> SegmentContext:
    return SegmentContext(prev, label, start, end, inputs.streams,
                          motion=inputs.motion, lm_table=model.lm_table,
                          baseline=inputs.baseline)


def _lattice_pass(model: ScrfModel, lattice: Lattice, inputs: ScrfInputs,
                  summed: bool):
    """Best-path (or log-sum) DP over lattice edges with label context."""
    V = len(model.labels)
    by_start: dict[int, list[LatticeEdge]] = {}
    for e in sorted(lattice.edges, key=lambda e: (e.start, e.end, e.label)):
        by_start.setdefault(e.start, []).append(e)
    # state: (node, last label index) -> score / backpointer
    score: dict[tuple[int, int], float] = {}
    back: dict[tuple[int, int], tuple] = {}
    T = lattice.num_frames
    for node in lattice.nodes:
        if node == 0:
            sources: list[tuple[float, int | None, tuple | None]] = \
                [(0.0, None, None)]
        else:
            sources = [(score[key], key[1], key)
                       for key in score if key[0] == node]
        if not sources:
            continue
        for e in by_start.get(node, ()):
            y = model.label_index(e.label)
            for src_score, prev, src_key in sources:
                ctx = _edge_context(model, inputs, prev, y, e.start, e.end)
                s = src_score + model.registry.edge_score(model.weights, ctx)
                key = (e.end, y)
                if key not in score:
                    score[key] = s
                    back[key] = (src_key, e)
                elif summed:
                    score[key] = np.logaddexp(score[key], s)
                elif s > score[key]:
                    score[key] = s
                    back[key] = (src_key, e)
    finals = [key for key in score if key[0] == T]
    if not finals:
        raise ValueError("lattice has no complete path")
    if summed:
        vals = np.array([score[k] for k in finals])
        m = vals.max()
        return float(m + np.log(np.sum(np.exp(vals - m))))
    best_key = min(finals, key=lambda k: (-score[k], k[1]))
    edges = []
    key = best_key
    while key is not None:
        src_key, e = back[key]
        edges.append(e)
        key = src_key
    edges.reverse()
    labels = tuple(e.label for e in edges)
    bounds = (edges[0].start, *(e.end for e in edges))
    return LabeledSegmentation(labels, bounds), float(score[best_key])


def rescore(model: ScrfModel, lattice: Lattice, inputs: ScrfInputs
            ) -> LabeledSegmentation:
    """Best lattice path under the model; features recomputed per edge."""
    seg, _ = _lattice_pass(model, lattice, inputs, summed=False)
    return seg


def lattice_log_partition(model: ScrfModel, lattice: Lattice,
                          inputs: ScrfInputs) -> float:
    """log-sum of path scores restricted to the lattice."""
    return _lattice_pass(model, lattice, inputs, summed=True)


# ---------------------------------------------------------------------------
# N-best and segmental cascades
# ---------------------------------------------------------------------------

def nbest_paths(model: ScrfModel, inputs: ScrfInputs, n: int):
    """Exact n best labeled segmentations, best first.

    A* over (time, label) states with a max-completion heuristic from a
    backward Viterbi sweep, so complete paths pop in score order.
    Returns [(score, labels, boundaries), ...]; fewer if the space is
    smaller.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    unary, pair, _ = _score_tensors(model, inputs)
    T, L, V = unary.shape
    # backward max table: h[t, v] = best completion from t given prev v
    h = np.full((T + 1, V), NEG_INF)
    h[T] = 0.0
    for t in range(T - 1, -1, -1):
        lmax = min(L, T - t)
        ls = np.arange(1, lmax + 1)
        seg_best = np.max(unary[t, ls - 1, :] + h[t + ls], axis=0)
        h[t] = np.max(pair[:V] + seg_best[None, :], axis=1)
    h0 = pair[V] + np.max(
        unary[0, :min(L, T)] + h[np.arange(1, min(L, T) + 1)], axis=0) \
        if T else None

    counter = 0
    heap: list = []

    def push(priority, g, t, v, path):
        nonlocal counter
        if priority == NEG_INF:
            return
        heapq.heappush(heap, (-priority, counter, g, t, v, path))
        counter += 1

    for l in range(1, min(L, T) + 1):
        for v in range(V):
            g = pair[V, v] + unary[0, l - 1, v]
            push(g + h[l, v], g, l, v, ((0, l, v),))
    out = []
    while heap and len(out) < n:
        _, _, g, t, v, path = heapq.heappop(heap)
        if t == T:
            labels = np.array([p[2] for p in path], dtype=np.int32)
            bounds = np.array([0, *(p[1] for p in path)], dtype=np.int32)
            out.append((float(g), labels, bounds))
            continue
        for l in range(1, min(L, T - t) + 1):
            for v2 in range(V):
                g2 = g + pair[v, v2] + unary[t, l - 1, v2]
                push(g2 + h[t + l, v2], g2, t + l, v2,
                     path + ((t, t + l, v2),))
    return out


def nbest_lattice(model: ScrfModel, inputs: ScrfInputs, n: int) -> Lattice:
    """Merge the n best paths into a lattice; edge scores are the unary
    part of the path scores (transition terms are context dependent and
    stay out of stored edges)."""
    paths = nbest_paths(model, inputs, n)
    unary, _, _ = _score_tensors(model, inputs)
    edges: dict[tuple[int, int, str], float] = {}
    for _, labels, bounds in paths:
        for v, q, qn in zip(labels, bounds, bounds[1:]):
            key = (int(q), int(qn), model.labels[v])
            edges.setdefault(key, float(unary[q, qn - q - 1, v]))
    _, labels, bounds = paths[0]
    best = LabeledSegmentation(tuple(model.labels[v] for v in labels),
                               tuple(int(b) for b in bounds))
    lattice_edges = tuple(LatticeEdge(q, qn, lab, sc)
                          for (q, qn, lab), sc in sorted(edges.items()))
    return Lattice(inputs.num_frames, lattice_edges, best)


@dataclass
class SegmentalDnn:
    """Letter classifier over whole hypothesized segments.

    Input: the concatenation of three per-third mean descriptor vectors
    (empty thirds of very short segments fall back to the whole segment).
    """

    net: Mlp
    classes: tuple[str, ...]

    @property
    def descriptor_dim(self) -> int:
        return self.net.static_dim // 3

    def segment_input(self, frames: np.ndarray, start: int, end: int
                      ) -> np.ndarray:
        parts = []
        pos = start
        for size in third_sizes(end - start):
            if size == 0:
                parts.append(frames[start:end].mean(axis=0))
            else:
                parts.append(frames[pos:pos + size].mean(axis=0))
                pos += size
        return np.concatenate(parts)

    def log_posteriors(self, frames: np.ndarray, start: int, end: int
                       ) -> np.ndarray:
        x = self.segment_input(frames, start, end)[None, :]
        z = self.net.logits(x)[0]
        z = z - z.max()
        return z - np.log(np.exp(z).sum())


def train_segmental_dnn(data, classes: Sequence[str], cfg: TrainConfig,
                        descriptor_dim: int) -> SegmentalDnn:
    """Fit the segment classifier on gold segments.

    `data` is an iterable of (frames, LabeledSegmentation); every gold
    segment becomes one training example.
    """
    classes = tuple(classes)
    index = {c: i for i, c in enumerate(classes)}
    helper = SegmentalDnn(
        Mlp([np.zeros((1, 3 * descriptor_dim))], [np.zeros(1)], 1,
            3 * descriptor_dim), classes)
    X, y = [], []
    for frames, gold in data:
        for lab, q, qn in gold.segments():
            X.append(helper.segment_input(frames, q, qn))
            y.append(index[lab])
    X = np.vstack(X)
    y = np.array(y, dtype=np.int64)
    net = train_mlp(X, y, len(classes), cfg, static_dim=3 * descriptor_dim)
    return SegmentalDnn(net, classes)


def cascade_decode(first: ScrfModel, second_weights: Sequence[float],
                   segdnn: SegmentalDnn, frames: np.ndarray,
                   inputs: ScrfInputs, n: int = 50) -> LabeledSegmentation:
    """Two-pass decoding: first-pass n-best, then rescoring.

    Second-pass edge score = w0 * first-pass edge score
                           + w1 * segment-classifier log-posterior
                           + w2 * peak indicator
                           + w3 * bigram log-probability.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    w0, w1, w2, w3 = (float(w) for w in second_weights)
    paths = nbest_paths(first, inputs, n)
    unary, pair, _ = _score_tensors(first, inputs)
    motion = inputs.motion
    if motion is None and (w2 != 0.0):
        motion = smoothed_derivative(frames)
    lm_table = first.lm_table
    T, _, V = unary.shape

    best_path = None
    best_score = NEG_INF
    for _, labels, bounds in paths:
        total = 0.0
        prev = V
        for v, q, qn in zip(labels, bounds, bounds[1:]):
            total += w0 * (pair[prev, v] + unary[q, qn - q - 1, v])
            if w1:
                total += w1 * float(
                    segdnn.log_posteriors(frames, q, qn)[
                        segdnn.classes.index(first.labels[v])])
            if w2:
                total += w2 * peak_indicator(motion, q, qn)
            if w3 and lm_table is not None:
                total += w3 * float(lm_table[prev, v])
            prev = v
        if total > best_score:
            best_score = total
            best_path = (labels, bounds)
    labels, bounds = best_path
    return LabeledSegmentation(tuple(first.labels[v] for v in labels),
                               tuple(int(b) for b in bounds))
