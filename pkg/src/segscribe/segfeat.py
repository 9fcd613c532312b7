"""Segment feature functions for segmental CRFs.

Templates (all lexicalized by the current label except ``lm``):

  mean / max            posterior aggregates over the segment's frames
  div_s / div_m         the same, over three near-equal thirds
  peak                  1 iff the motion profile has exactly one interior
                        local-minimum run within the segment
  lm                    bigram log-probability of (prev label, label)
  baseline_consistency  +1 iff the span covers exactly one baseline label
                        and it matches, else -1
  samples               posteriors sampled at 16%/50%/84% of the segment
  l_boundary/r_boundary posteriors at offsets -1/0/+1 around each boundary
  duration              indicator of segment length (1..30 plus overflow)
  bias                  constant 1

A segment (q, q') covers frames q..q'-1.  Every template has two
implementations: a per-edge reference path (`edge_features`) and a
vectorized whole-chart path (`SequenceScorer`), checked against each other
in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

TEMPLATES = ("mean", "max", "div_s", "div_m", "peak", "lm",
             "baseline_consistency", "samples", "l_boundary", "r_boundary",
             "duration", "bias")

#: templates used by lattice-rescoring models
RESCORING_TEMPLATES = ("mean", "max", "div_s", "div_m", "peak", "lm",
                       "baseline_consistency")
#: templates used by first-pass models
FIRSTPASS_TEMPLATES = ("mean", "samples", "l_boundary", "r_boundary",
                       "duration", "bias")

SAMPLE_POINTS = (0.16, 0.50, 0.84)
BOUNDARY_OFFSETS = (-1, 0, 1)


# ---------------------------------------------------------------------------
# Motion profile and peak indicator
# ---------------------------------------------------------------------------

def smoothed_derivative(frames: np.ndarray) -> np.ndarray:
    """Per-frame motion magnitude, 5-frame average smoothed.

    Frame-to-frame descriptor difference norms (last value replicated to
    keep length T), then a centered 5-frame moving average with edge
    replication.  Nonnegative, length T.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape[0] < 2:
        raise ValueError("need at least 2 frames")
    d = np.linalg.norm(np.diff(frames, axis=0), axis=1)
    d = np.append(d, d[-1])
    padded = np.concatenate([d[:1], d[:1], d, d[-1:], d[-1:]])
    return np.convolve(padded, np.ones(5), mode="valid") / 5.0


def _runs(values: np.ndarray) -> list[tuple[float, int, int]]:
    """Collapse to maximal constant runs: (value, start, end)."""
    runs = []
    start = 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] != values[start]:
            runs.append((float(values[start]), start, i))
            start = i
    return runs


def peak_indicator(profile: np.ndarray, start: int, end: int) -> int:
    """1 iff profile[start:end] has exactly one interior local-minimum run.

    A maximal constant run counts as a minimum when it is strictly lower
    than both neighboring runs; runs touching the span edges never count.
    """
    if not start < end:
        raise ValueError("empty span")
    runs = _runs(np.asarray(profile[start:end], dtype=np.float64))
    count = 0
    for j in range(1, len(runs) - 1):
        if runs[j - 1][0] > runs[j][0] < runs[j + 1][0]:
            count += 1
    return int(count == 1)


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

def third_sizes(length: int) -> tuple[int, int, int]:
    """Split a segment length into three parts, remainder to later thirds."""
    base, rem = divmod(length, 3)
    return (base, base + (rem > 1), base + (rem > 0))


def sample_index(length: int, point: float) -> int:
    """Offset of a sample at fractional position `point`, kept in-segment."""
    return min(int(np.floor(length * point + 0.5)), length - 1)


def duration_bin(length: int, duration_max: int) -> int:
    return length - 1 if length <= duration_max else duration_max


@dataclass(frozen=True)
class FeatureRegistry:
    """Maps enabled templates to a contiguous coordinate space.

    `labels` is the lexicalization label set; `heads` maps posterior-stream
    ids to their class counts (insertion order is the layout order).
    """

    labels: tuple[str, ...]
    heads: Mapping[str, int]
    templates: tuple[str, ...]
    duration_max: int = 30
    _offsets: dict = field(init=False, repr=False, compare=False)
    _dim: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "heads", dict(self.heads))
        object.__setattr__(self, "templates", tuple(self.templates))
        for t in self.templates:
            if t not in TEMPLATES:
                raise ValueError(f"unknown template {t!r}")
        if len(set(self.templates)) != len(self.templates):
            raise ValueError("duplicate templates")
        V, H = len(self.labels), self.total_head_dim
        sizes = {
            "mean": V * H, "max": V * H, "div_s": 3 * V * H,
            "div_m": 3 * V * H, "peak": V, "lm": 1,
            "baseline_consistency": V, "samples": len(SAMPLE_POINTS) * V * H,
            "l_boundary": len(BOUNDARY_OFFSETS) * V * H,
            "r_boundary": len(BOUNDARY_OFFSETS) * V * H,
            "duration": V * (self.duration_max + 1), "bias": V,
        }
        offsets, pos = {}, 0
        for t in self.templates:
            offsets[t] = pos
            pos += sizes[t]
        object.__setattr__(self, "_offsets", offsets)
        object.__setattr__(self, "_dim", pos)

    @property
    def total_head_dim(self) -> int:
        return sum(self.heads.values())

    @property
    def dim(self) -> int:
        return self._dim

    def offset(self, template: str) -> int:
        return self._offsets[template]

    def head_offset(self, head: str) -> int:
        pos = 0
        for name, size in self.heads.items():
            if name == head:
                return pos
            pos += size
        raise KeyError(head)

    # -- coordinate helpers ----------------------------------------------

    def _agg_coord(self, template: str, part: int, label: int, hpos: int
                   ) -> int:
        V, H = len(self.labels), self.total_head_dim
        return self._offsets[template] + (part * V + label) * H + hpos

    def edge_features(self, ctx: "SegmentContext") -> dict[int, float]:
        """Sparse feature vector of one edge (reference implementation)."""
        out: dict[int, float] = {}
        q, qp, y = ctx.start, ctx.end, ctx.label
        length = qp - q
        V, H = len(self.labels), self.total_head_dim
        for template in self.templates:
            if template in ("mean", "max"):
                agg = np.mean if template == "mean" else np.max
                for head, g in ctx.streams.items():
                    base = self._agg_coord(template, 0, y,
                                           self.head_offset(head))
                    vals = agg(g[q:qp], axis=0)
                    for h, val in enumerate(vals):
                        out[base + h] = float(val)
            elif template in ("div_s", "div_m"):
                agg = np.mean if template == "div_s" else np.max
                sizes = third_sizes(length)
                pos = q
                for part, size in enumerate(sizes):
                    a, b = (pos, pos + size) if size else (q, qp)
                    pos += size
                    for head, g in ctx.streams.items():
                        base = self._agg_coord(template, part, y,
                                               self.head_offset(head))
                        vals = agg(g[a:b], axis=0)
                        for h, val in enumerate(vals):
                            out[base + h] = float(val)
            elif template == "peak":
                out[self._offsets["peak"] + y] = float(
                    peak_indicator(ctx.motion, q, qp))
            elif template == "lm":
                prev = len(self.labels) if ctx.prev_label is None \
                    else ctx.prev_label
                out[self._offsets["lm"]] = float(ctx.lm_table[prev, y])
            elif template == "baseline_consistency":
                span = ctx.baseline[q:qp]
                ok = np.all(span == span[0]) and int(span[0]) == y
                out[self._offsets["baseline_consistency"] + y] = \
                    1.0 if ok else -1.0
            elif template == "samples":
                T = ctx.num_frames
                for part, point in enumerate(SAMPLE_POINTS):
                    i = q + sample_index(length, point)
                    for head, g in ctx.streams.items():
                        base = self._agg_coord("samples", part, y,
                                               self.head_offset(head))
                        for h, val in enumerate(g[i]):
                            out[base + h] = float(val)
            elif template in ("l_boundary", "r_boundary"):
                T = ctx.num_frames
                anchor = q if template == "l_boundary" else qp
                for part, k in enumerate(BOUNDARY_OFFSETS):
                    i = min(max(anchor + k, 0), T - 1)
                    for head, g in ctx.streams.items():
                        base = self._agg_coord(template, part, y,
                                               self.head_offset(head))
                        for h, val in enumerate(g[i]):
                            out[base + h] = float(val)
            elif template == "duration":
                coord = (self._offsets["duration"]
                         + y * (self.duration_max + 1)
                         + duration_bin(length, self.duration_max))
                out[coord] = 1.0
            elif template == "bias":
                out[self._offsets["bias"] + y] = 1.0
        return out

    def edge_score(self, weights: np.ndarray, ctx: "SegmentContext") -> float:
        return float(sum(weights[i] * v
                         for i, v in self.edge_features(ctx).items()))

    # -- serialization -----------------------------------------------------

    def to_text(self) -> str:
        lines = ["labels " + " ".join(self.labels)]
        for head, size in self.heads.items():
            lines.append(f"head {head} {size}")
        for t in self.templates:
            if t == "duration":
                lines.append(f"template duration max={self.duration_max}")
            else:
                lines.append(f"template {t}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FeatureRegistry":
        labels: tuple[str, ...] = ()
        heads: dict[str, int] = {}
        templates: list[str] = []
        duration_max = 30
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            kind, *rest = line.split()
            if kind == "labels":
                labels = tuple(rest)
            elif kind == "head":
                heads[rest[0]] = int(rest[1])
            elif kind == "template":
                templates.append(rest[0])
                for opt in rest[1:]:
                    key, _, val = opt.partition("=")
                    if rest[0] == "duration" and key == "max":
                        duration_max = int(val)
                    else:
                        raise ValueError(f"unknown option {opt!r}")
            else:
                raise ValueError(f"bad registry line {line!r}")
        return cls(labels, heads, tuple(templates), duration_max)


@dataclass
class SegmentContext:
    """Everything an edge's features can inspect."""

    prev_label: int | None
    label: int
    start: int
    end: int
    streams: Mapping[str, np.ndarray]
    motion: np.ndarray | None = None
    lm_table: np.ndarray | None = None
    baseline: np.ndarray | None = None

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError("need 0 <= start < end")

    @property
    def num_frames(self) -> int:
        return next(iter(self.streams.values())).shape[0]


# ---------------------------------------------------------------------------
# Vectorized whole-chart machinery
# ---------------------------------------------------------------------------

class SequenceScorer:
    """Precomputed per-sequence feature blocks for chart inference.

    Builds, for every admissible (start q, length l) pair, the aggregates
    each enabled template needs, so that the (T, L, V) edge-score tensor
    and feature expectations reduce to tensor contractions.
    """

    def __init__(self, registry: FeatureRegistry,
                 streams: Mapping[str, np.ndarray], max_len: int,
                 motion: np.ndarray | None = None,
                 lm_table: np.ndarray | None = None,
                 baseline: np.ndarray | None = None):
        self.registry = registry
        self.streams = streams
        self.lm_table = lm_table
        enabled_ = set(registry.templates)
        if "peak" in enabled_ and motion is None:
            raise ValueError("peak template needs a motion profile")
        if "lm" in enabled_ and lm_table is None:
            raise ValueError("lm template needs an lm table")
        if "baseline_consistency" in enabled_ and baseline is None:
            raise ValueError("baseline_consistency needs baseline labels")
        gcat = np.concatenate([np.asarray(streams[h], dtype=np.float64)
                               for h in registry.heads], axis=1)
        self.gcat = gcat
        T = gcat.shape[0]
        self.T = T
        self.L = min(max_len, T)
        T, L, H = self.T, self.L, gcat.shape[1]
        enabled = set(registry.templates)

        if enabled & {"mean", "div_s"}:
            cums = np.vstack([np.zeros((1, H)), np.cumsum(gcat, axis=0)])
            mean = np.zeros((T, L, H))
            for l in range(1, L + 1):
                mean[:T - l + 1, l - 1] = (cums[l:] - cums[:T - l + 1]) / l
            self.mean_block = mean
        if enabled & {"max", "div_m"}:
            mx = np.zeros((T, L, H))
            mx[:, 0] = gcat
            for l in range(2, L + 1):
                mx[:T - l + 1, l - 1] = np.maximum(mx[:T - l + 1, l - 2],
                                                   gcat[l - 1:])
            self.max_block = mx
        for name, agg in (("div_s", "mean_block"), ("div_m", "max_block")):
            if name not in enabled:
                continue
            src = getattr(self, agg)
            div = np.zeros((3, T, L, H))
            for l in range(1, L + 1):
                n = T - l + 1
                pos = 0
                for part, size in enumerate(third_sizes(l)):
                    if size == 0:
                        div[part, :n, l - 1] = src[:n, l - 1]
                    else:
                        div[part, :n, l - 1] = src[pos:pos + n, size - 1]
                    pos += size
            setattr(self, name + "_block", div)
        if "samples" in enabled:
            spl = np.zeros((len(SAMPLE_POINTS), T, L, H))
            for l in range(1, L + 1):
                n = T - l + 1
                for part, point in enumerate(SAMPLE_POINTS):
                    i = sample_index(l, point)
                    spl[part, :n, l - 1] = gcat[i:i + n]
            self.samples_block = spl
        if "l_boundary" in enabled:
            lb = np.zeros((len(BOUNDARY_OFFSETS), T, H))
            for part, k in enumerate(BOUNDARY_OFFSETS):
                lb[part] = gcat[np.clip(np.arange(T) + k, 0, T - 1)]
            self.l_boundary_block = lb
        if "r_boundary" in enabled:
            rb = np.zeros((len(BOUNDARY_OFFSETS), T, L, H))
            for l in range(1, L + 1):
                n = T - l + 1
                for part, k in enumerate(BOUNDARY_OFFSETS):
                    idx = np.clip(np.arange(n) + l + k, 0, T - 1)
                    rb[part, :n, l - 1] = gcat[idx]
            self.r_boundary_block = rb
        if "peak" in enabled:
            runs = _runs(np.asarray(motion, dtype=np.float64))
            m = len(runs)
            run_of = np.empty(T, dtype=np.int64)
            ismin = np.zeros(m, dtype=np.int64)
            for j, (_, a, b) in enumerate(runs):
                run_of[a:b] = j
                if 0 < j < m - 1 and runs[j - 1][0] > runs[j][0] < runs[j + 1][0]:
                    ismin[j] = 1
            prefix = np.concatenate([[0], np.cumsum(ismin)])
            peak = np.zeros((T, L))
            for l in range(1, L + 1):
                n = T - l + 1
                first = run_of[:n]
                last = run_of[l - 1:l - 1 + n]
                cnt = prefix[last] - prefix[np.minimum(first + 1, m)]
                peak[:n, l - 1] = cnt == 1
            self.peak_block = peak
        if "baseline_consistency" in enabled:
            base_labels = np.asarray(baseline, dtype=np.int64)
            changes = np.concatenate(
                [[0], np.cumsum(base_labels[1:] != base_labels[:-1])])
            V = len(registry.labels)
            blk = np.full((T, L, V), -1.0)
            for l in range(1, L + 1):
                n = T - l + 1
                single = changes[l - 1:l - 1 + n] == changes[:n]
                qs = np.nonzero(single)[0]
                blk[qs, l - 1, base_labels[qs]] = 1.0
            self.baseline_block = blk

    def _w(self, weights: np.ndarray, template: str, shape) -> np.ndarray:
        off = self.registry.offset(template)
        size = int(np.prod(shape))
        return weights[off:off + size].reshape(shape)

    def unary(self, weights: np.ndarray) -> np.ndarray:
        """(T, L, V) edge-score tensor; invalid (q, l) entries are -inf."""
        reg = self.registry
        T, L = self.T, self.L
        V, H = len(reg.labels), reg.total_head_dim
        out = np.zeros((T, L, V))
        for template in reg.templates:
            if template in ("mean", "max"):
                block = getattr(self, template + "_block")
                out += np.tensordot(block, self._w(weights, template, (V, H)),
                                    axes=([2], [1]))
            elif template in ("div_s", "div_m", "samples", "r_boundary"):
                block = getattr(self, template + "_block")
                w = self._w(weights, template, (block.shape[0], V, H))
                for part in range(block.shape[0]):
                    out += np.tensordot(block[part], w[part],
                                        axes=([2], [1]))
            elif template == "l_boundary":
                block = self.l_boundary_block
                w = self._w(weights, template, (block.shape[0], V, H))
                for part in range(block.shape[0]):
                    out += np.tensordot(block[part], w[part],
                                        axes=([1], [1]))[:, None, :]
            elif template == "peak":
                out += (self.peak_block[:, :, None]
                        * self._w(weights, template, (V,)))
            elif template == "baseline_consistency":
                out += self.baseline_block * self._w(weights, template, (V,))
            elif template == "duration":
                w = self._w(weights, template, (V, reg.duration_max + 1))
                bins = [duration_bin(l, reg.duration_max)
                        for l in range(1, L + 1)]
                out += w[:, bins].T[None, :, :]
            elif template == "bias":
                out += self._w(weights, template, (V,))[None, None, :]
            # lm is pairwise; see pair()
        for l in range(1, L + 1):
            out[T - l + 1:, l - 1, :] = -np.inf
        return out

    def pair(self, weights: np.ndarray) -> np.ndarray | None:
        """(V+1, V) transition scores, or None when no pairwise template."""
        if "lm" not in self.registry.templates:
            return None
        return weights[self.registry.offset("lm")] * self.lm_table

    def accumulate(self, mu_unary: np.ndarray, mu_pair: np.ndarray | None,
                   out: np.ndarray, scale: float = 1.0) -> None:
        """out += scale * expected features under the edge marginals."""
        reg = self.registry
        V, H = len(reg.labels), reg.total_head_dim
        L = self.L
        for template in reg.templates:
            off = reg.offset(template)
            if template in ("mean", "max"):
                block = getattr(self, template + "_block")
                e = np.tensordot(mu_unary, block, axes=([0, 1], [0, 1]))
                out[off:off + V * H] += scale * e.ravel()
            elif template in ("div_s", "div_m", "samples", "r_boundary"):
                block = getattr(self, template + "_block")
                P = block.shape[0]
                for part in range(P):
                    e = np.tensordot(mu_unary, block[part],
                                     axes=([0, 1], [0, 1]))
                    s = off + part * V * H
                    out[s:s + V * H] += scale * e.ravel()
            elif template == "l_boundary":
                mu_q = mu_unary.sum(axis=1)  # (T, V)
                for part in range(self.l_boundary_block.shape[0]):
                    e = np.tensordot(mu_q, self.l_boundary_block[part],
                                     axes=([0], [0]))
                    s = off + part * V * H
                    out[s:s + V * H] += scale * e.ravel()
            elif template == "peak":
                out[off:off + V] += scale * np.einsum(
                    "qlv,ql->v", mu_unary, self.peak_block)
            elif template == "baseline_consistency":
                out[off:off + V] += scale * np.einsum(
                    "qlv,qlv->v", mu_unary, self.baseline_block)
            elif template == "lm":
                if mu_pair is not None:
                    out[off] += scale * float(np.sum(mu_pair * self.lm_table))
            elif template == "duration":
                s = mu_unary.sum(axis=0)  # (L, V)
                bins = np.array([duration_bin(l, reg.duration_max)
                                 for l in range(1, L + 1)])
                e = np.zeros((V, reg.duration_max + 1))
                np.add.at(e, (slice(None), bins), s.T)
                out[off:off + e.size] += scale * e.ravel()
            elif template == "bias":
                out[off:off + V] += scale * mu_unary.sum(axis=(0, 1))
