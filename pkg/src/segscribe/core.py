"""Shared sequence types, the peak-to-boundary rule, and error scoring.

Throughout the package a segment with boundaries ``(q, q')`` covers frames
``q .. q'-1``; boundaries are frame indices in ``[0, T]``.  That convention
is applied uniformly by every module that aggregates over segments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .alphabet import BOS, EOS


class SegscribeError(Exception):
    """Base class for package errors."""


class DataFormatError(SegscribeError):
    """Malformed external file or record."""


def _frozen_array(a, dtype=np.float64, ndim=None) -> np.ndarray:
    arr = np.asarray(a, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"expected {ndim}-d array, got {arr.ndim}-d")
    if arr.flags.writeable:
        arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FrameSequence:
    """A T x D matrix of per-frame visual descriptors."""

    frames: np.ndarray
    frame_rate: float = 60.0
    source_id: str = ""

    def __post_init__(self):
        frames = _frozen_array(self.frames, ndim=2)
        if frames.shape[0] < 1:
            raise ValueError("frame sequence is empty")
        if not np.all(np.isfinite(frames)):
            raise ValueError("frames contain non-finite values")
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class PeakAnnotation:
    """A word with one annotated peak frame per letter.

    `peaks` holds (frame, letter) pairs with strictly increasing frames.
    `flags` carries per-peak markers: '+' non-canonical handshape,
    '*' peak present but not detected by annotators, 'D' digraph (the
    letter field then holds both constituents, e.g. "GH").
    """

    word: str
    peaks: tuple[tuple[int, str], ...]
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        peaks = tuple((int(f), str(l).upper()) for f, l in self.peaks)
        word = self.word.upper()
        flags = tuple(self.flags) if self.flags else ("",) * len(peaks)
        if len(flags) != len(peaks):
            raise ValueError("flags and peaks differ in length")
        frames = [f for f, _ in peaks]
        if any(f < 0 for f in frames):
            raise ValueError("peak frame is negative")
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError("peak frames are not strictly increasing")
        for fl in flags:
            if any(c not in "+*D" for c in fl):
                raise ValueError(f"unknown peak flag in {fl!r}")
        if "?" not in word and not any("?" in l for _, l in peaks):
            if sum(len(l) for _, l in peaks) != len(word):
                raise ValueError(
                    f"peak letters do not cover the word {word!r}")
        object.__setattr__(self, "word", word)
        object.__setattr__(self, "peaks", peaks)
        object.__setattr__(self, "flags", flags)

    @property
    def letters(self) -> tuple[str, ...]:
        """Peak labels in order (a digraph stays one label)."""
        return tuple(l for _, l in self.peaks)

    @property
    def has_digraph(self) -> bool:
        return any("D" in fl for fl in self.flags) or any(
            len(l) > 1 for _, l in self.peaks)

    @property
    def has_unknown(self) -> bool:
        return any(l == "?" for _, l in self.peaks)


@dataclass(frozen=True)
class LabeledSegmentation:
    """A label sequence with time boundaries.

    len(boundaries) == len(labels) + 1; boundaries[0] == 0 and
    boundaries[-1] == T; segment i covers frames
    boundaries[i] .. boundaries[i+1]-1.
    """

    labels: tuple[str, ...]
    boundaries: tuple[int, ...]

    def __post_init__(self):
        labels = tuple(self.labels)
        bounds = tuple(int(b) for b in self.boundaries)
        if len(bounds) != len(labels) + 1:
            raise ValueError("need len(labels)+1 boundaries")
        if not labels:
            raise ValueError("empty segmentation")
        if bounds[0] != 0:
            raise ValueError("first boundary must be 0")
        if any(b <= a for a, b in zip(bounds, bounds[1:])):
            raise ValueError("boundaries are not strictly increasing")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "boundaries", bounds)

    @property
    def num_frames(self) -> int:
        return self.boundaries[-1]

    def segments(self) -> Iterator[tuple[str, int, int]]:
        for i, lab in enumerate(self.labels):
            yield lab, self.boundaries[i], self.boundaries[i + 1]

    def frame_labels(self) -> list[str]:
        out = []
        for lab, q, qn in self.segments():
            out.extend([lab] * (qn - q))
        return out

    def strip_boundary_symbols(self) -> tuple[str, ...]:
        return tuple(l for l in self.labels if l not in (BOS, EOS))


@dataclass(frozen=True)
class LatticeEdge:
    start: int
    end: int
    label: str
    score: float


@dataclass(frozen=True)
class Lattice:
    """A DAG of scored labeled segments over [0, T].

    Edge time points are the nodes.  `best` marks the designated 1-best
    path; its edges must all be present in the lattice.
    """

    num_frames: int
    edges: tuple[LatticeEdge, ...]
    best: LabeledSegmentation | None = None

    def __post_init__(self):
        edges = tuple(self.edges)
        object.__setattr__(self, "edges", edges)
        T = self.num_frames
        for e in edges:
            if not (0 <= e.start < e.end <= T):
                raise ValueError(f"edge ({e.start},{e.end}) out of [0,{T}]")
        if not self._has_complete_path():
            raise ValueError("lattice has no complete path from 0 to T")
        if self.best is not None:
            have = {(e.start, e.end, e.label) for e in edges}
            for lab, q, qn in self.best.segments():
                if (q, qn, lab) not in have:
                    raise ValueError("1-best path is not in the lattice")

    def _has_complete_path(self) -> bool:
        T = self.num_frames
        reach = {0}
        for e in sorted(self.edges, key=lambda e: (e.start, e.end)):
            if e.start in reach:
                reach.add(e.end)
        return T in reach

    @property
    def nodes(self) -> tuple[int, ...]:
        pts = {0, self.num_frames}
        for e in self.edges:
            pts.add(e.start)
            pts.add(e.end)
        return tuple(sorted(pts))

    def outgoing(self, node: int) -> list[LatticeEdge]:
        return [e for e in self.edges if e.start == node]


# ---------------------------------------------------------------------------
# Peak annotations -> segmentations
# ---------------------------------------------------------------------------

def peaks_to_segmentation(ann: PeakAnnotation, num_frames: int
                          ) -> LabeledSegmentation:
    """Convert peak annotations to a full labeled segmentation.

    The boundary between consecutive letters is the midpoint of their peak
    frames, rounded up so a boundary never lands on the earlier peak.  The
    recording edges get the same treatment: the <s> segment ends at the
    midpoint of (0, first peak) and the </s> segment starts at the midpoint
    of (last peak, T-1).
    """
    if not ann.peaks:
        raise ValueError("no peaks")
    frames = [f for f, _ in ann.peaks]
    if frames[-1] >= num_frames:
        raise ValueError(
            f"peak out of range: frame {frames[-1]} >= T={num_frames}")
    if frames[0] == 0 or frames[-1] == num_frames - 1:
        # no room for a non-empty <s>/<\s> segment
        raise ValueError("peak out of range: peaks must leave room for "
                         "the boundary segments")

    def mid(a: int, b: int) -> int:
        return -((a + b) // -2)  # ceil((a+b)/2)

    bounds = [0, mid(0, frames[0])]
    bounds.extend(mid(a, b) for a, b in zip(frames, frames[1:]))
    bounds.append(mid(frames[-1], num_frames - 1))
    bounds.append(num_frames)
    labels = (BOS, *ann.letters, EOS)
    return LabeledSegmentation(labels, tuple(bounds))


# ---------------------------------------------------------------------------
# Letter error rate
# ---------------------------------------------------------------------------

class EditStats(NamedTuple):
    rate: float
    substitutions: int
    insertions: int
    deletions: int
    distance: int
    ref_length: int


def _strip_boundaries(seq: Iterable[str]) -> list[str]:
    return [s for s in seq if s not in (BOS, EOS)]


def letter_error_rate(hyp: Sequence[str], ref: Sequence[str]) -> EditStats:
    """Levenshtein distance between label sequences over reference length.

    <s>/</s> tokens are stripped before comparison.  Also returns the
    substitution/insertion/deletion breakdown of one minimal alignment
    (ties resolved sub > del > ins).
    """
    h = _strip_boundaries(hyp)
    r = _strip_boundaries(ref)
    if not r:
        raise ValueError("empty reference")
    n, m = len(h), len(r)
    # dist[i][j]: edits to turn r[:j] into h[:i]
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dist[i][0] = i
    for j in range(1, m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        hi = h[i - 1]
        row, prev = dist[i], dist[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (hi != r[j - 1])
            dele = row[j - 1] + 1
            ins = prev[j] + 1
            row[j] = min(sub, dele, ins)
    subs = dels = inss = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + (
                h[i - 1] != r[j - 1]):
            subs += h[i - 1] != r[j - 1]
            i, j = i - 1, j - 1
        elif j > 0 and dist[i][j] == dist[i][j - 1] + 1:
            dels += 1
            j -= 1
        else:
            inss += 1
            i -= 1
    d = dist[n][m]
    return EditStats(d / m, subs, inss, dels, d, m)


def label_histogram(annotations: Iterable[PeakAnnotation]
                    ) -> dict[str, tuple[float, int]]:
    """Per-label (frequency, count) over all peaks, ordered by count."""
    counts: dict[str, int] = {}
    for ann in annotations:
        for _, letter in ann.peaks:
            counts[letter] = counts.get(letter, 0) + 1
    total = sum(counts.values())
    items = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return {lab: (c / total, c) for lab, c in items}
