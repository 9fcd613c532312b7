"""External file formats.

Text formats are line oriented, tab separated, UTF-8 with '\\n' endings.
Floats in text files are written with repr-precision so files round-trip
bit-exactly.  The descriptor format is binary little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import (DataFormatError, FrameSequence, LabeledSegmentation,
                   Lattice, LatticeEdge, PeakAnnotation)

DESCRIPTOR_MAGIC = b"SGFD"


def fmt_float(x: float) -> str:
    return np.format_float_repr(float(x))


# ---------------------------------------------------------------------------
# Descriptor files: header {magic, T, D, frame_rate}, float32 rows, LE
# ---------------------------------------------------------------------------

def write_descriptors(path, seq: FrameSequence) -> None:
    T, D = seq.frames.shape
    data = np.ascontiguousarray(seq.frames, dtype="<f4")
    with open(path, "wb") as f:
        f.write(struct.pack("<4sIIf", DESCRIPTOR_MAGIC, T, D,
                            float(seq.frame_rate)))
        f.write(data.tobytes())


def read_descriptors(path, source_id: str = "") -> FrameSequence:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise DataFormatError(f"{path}: truncated descriptor file")
    magic, T, D, rate = struct.unpack_from("<4sIIf", raw)
    if magic != DESCRIPTOR_MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}")
    need = 16 + 4 * T * D
    if len(raw) != need:
        raise DataFormatError(
            f"{path}: expected {need} bytes for T={T} D={D}, got {len(raw)}")
    frames = np.frombuffer(raw, dtype="<f4", offset=16).reshape(T, D)
    return FrameSequence(frames.astype(np.float64), frame_rate=rate,
                         source_id=source_id or Path(path).stem)


# ---------------------------------------------------------------------------
# Annotation files: word <TAB> signer <TAB> T <TAB> frame:letter[,flags] ...
# ---------------------------------------------------------------------------

def format_annotation(ann: PeakAnnotation, signer: str, num_frames: int) -> str:
    peaks = []
    for (frame, letter), fl in zip(ann.peaks, ann.flags):
        item = f"{frame}:{letter}"
        if fl:
            item += f",{fl}"
        peaks.append(item)
    return f"{ann.word}\t{signer}\t{num_frames}\t{' '.join(peaks)}"


def parse_annotation(line: str, lineno: int = 0
                     ) -> tuple[PeakAnnotation, str, int]:
    fields = line.rstrip("\n").split("\t")
    if len(fields) != 4:
        raise DataFormatError(f"line {lineno}: expected 4 tab fields")
    word, signer, t_str, peak_str = fields
    try:
        num_frames = int(t_str)
    except ValueError:
        raise DataFormatError(f"line {lineno}: bad frame count {t_str!r}")
    peaks, flags = [], []
    for item in peak_str.split():
        head, _, fl = item.partition(",")
        frame_str, sep, letter = head.partition(":")
        if not sep:
            raise DataFormatError(f"line {lineno}: bad peak {item!r}")
        try:
            frame = int(frame_str)
        except ValueError:
            raise DataFormatError(f"line {lineno}: bad peak frame {item!r}")
        peaks.append((frame, letter))
        flags.append(fl)
    try:
        ann = PeakAnnotation(word, tuple(peaks), tuple(flags))
    except ValueError as exc:
        raise DataFormatError(f"line {lineno}: {exc}") from exc
    if peaks and peaks[-1][0] >= num_frames:
        raise DataFormatError(f"line {lineno}: peak beyond frame count")
    return ann, signer, num_frames


def write_annotations(path, records: Iterable[tuple[PeakAnnotation, str, int]]
                      ) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ann, signer, num_frames in records:
            f.write(format_annotation(ann, signer, num_frames) + "\n")


def read_annotations(path) -> list[tuple[PeakAnnotation, str, int]]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if line.strip():
                out.append(parse_annotation(line, lineno))
    return out


# ---------------------------------------------------------------------------
# Hypothesis/reference files: one space-separated label sequence per line
# ---------------------------------------------------------------------------

def write_sequences(path, seqs: Iterable[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for seq in seqs:
            f.write(" ".join(seq) + "\n")


def read_sequences(path) -> list[list[str]]:
    with open(path, encoding="utf-8") as f:
        return [line.split() for line in f]


# ---------------------------------------------------------------------------
# Frame label files: one integer per frame per line
# ---------------------------------------------------------------------------

def write_frame_labels(path, labels: Sequence[int]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for lab in labels:
            f.write(f"{int(lab)}\n")


def read_frame_labels(path) -> np.ndarray:
    with open(path, encoding="utf-8") as f:
        return np.array([int(line) for line in f if line.strip()],
                        dtype=np.int64)


# ---------------------------------------------------------------------------
# Fold manifests: word_id <TAB> fold <TAB> role
# ---------------------------------------------------------------------------

def write_manifest(path, entries: Iterable[tuple[str, int, str]]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for word_id, fold, role in entries:
            f.write(f"{word_id}\t{fold}\t{role}\n")


def read_manifest(path) -> list[tuple[str, int, str]]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 3:
                raise DataFormatError(f"line {lineno}: expected 3 fields")
            if fields[2] not in ("train", "dev", "test", "adapt"):
                raise DataFormatError(
                    f"line {lineno}: unknown role {fields[2]!r}")
            out.append((fields[0], int(fields[1]), fields[2]))
    return out


# ---------------------------------------------------------------------------
# Lattice files: '#nodes t0 t1 ...' header, then 'start end label score [*]'
# ---------------------------------------------------------------------------

def write_lattice(path, lattice: Lattice) -> None:
    best = set()
    if lattice.best is not None:
        best = {(q, qn, lab) for lab, q, qn in lattice.best.segments()}
    with open(path, "w", encoding="utf-8") as f:
        f.write("#nodes " + " ".join(str(t) for t in lattice.nodes) + "\n")
        for e in lattice.edges:
            star = " *" if (e.start, e.end, e.label) in best else ""
            f.write(f"{e.start} {e.end} {e.label} {fmt_float(e.score)}{star}\n")


def read_lattice(path) -> Lattice:
    with open(path, encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    if not lines or not lines[0].startswith("#nodes"):
        raise DataFormatError(f"{path}: missing #nodes header")
    nodes = [int(t) for t in lines[0].split()[1:]]
    if not nodes:
        raise DataFormatError(f"{path}: empty node list")
    edges, starred = [], []
    for lineno, line in enumerate(lines[1:], 2):
        fields = line.split()
        if len(fields) not in (4, 5):
            raise DataFormatError(f"line {lineno}: expected 4 or 5 fields")
        start, end, label = int(fields[0]), int(fields[1]), fields[2]
        score = float(fields[3])
        edges.append(LatticeEdge(start, end, label, score))
        if len(fields) == 5:
            if fields[4] != "*":
                raise DataFormatError(f"line {lineno}: bad marker")
            starred.append(edges[-1])
    best = None
    if starred:
        starred.sort(key=lambda e: e.start)
        labels = tuple(e.label for e in starred)
        bounds = (starred[0].start, *(e.end for e in starred))
        best = LabeledSegmentation(labels, bounds)
    return Lattice(max(nodes), tuple(edges), best)


# ---------------------------------------------------------------------------
# PGM / PPM (binary) image I/O
# ---------------------------------------------------------------------------

def write_image(path, image: np.ndarray) -> None:
    img = np.asarray(image)
    if img.dtype != np.uint8:
        raise DataFormatError("images must be uint8")
    if img.ndim == 2:
        header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n"
    elif img.ndim == 3 and img.shape[2] == 3:
        header = f"P6\n{img.shape[1]} {img.shape[0]}\n255\n"
    else:
        raise DataFormatError("images must be HxW or HxWx3")
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(np.ascontiguousarray(img).tobytes())


def read_image(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    try:
        magic, rest = raw.split(b"\n", 1)
    except ValueError:
        raise DataFormatError(f"{path}: not a PGM/PPM file")
    if magic not in (b"P5", b"P6"):
        raise DataFormatError(f"{path}: unsupported format {magic!r}")
    # header tokens may be separated by arbitrary whitespace/comments
    tokens, pos = [], 0
    while len(tokens) < 3:
        while pos < len(rest) and rest[pos:pos + 1].isspace():
            pos += 1
        if rest[pos:pos + 1] == b"#":
            pos = rest.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(rest) and not rest[pos:pos + 1].isspace():
            pos += 1
        tokens.append(rest[start:pos])
    pos += 1  # single whitespace after maxval
    width, height, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise DataFormatError(f"{path}: only 8-bit images supported")
    data = np.frombuffer(rest, dtype=np.uint8, offset=pos)
    if magic == b"P5":
        return data[:width * height].reshape(height, width).copy()
    return data[:width * height * 3].reshape(height, width, 3).copy()


# ---------------------------------------------------------------------------
# Flat key-value manifests (run results, reports)
# ---------------------------------------------------------------------------

def write_keyvalues(path, values: dict[str, object]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for key in sorted(values):
            val = values[key]
            if isinstance(val, float):
                val = fmt_float(val)
            f.write(f"{key} = {val}\n")


def read_keyvalues(path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise DataFormatError(f"line {lineno}: expected 'key = value'")
            out[key.strip()] = val.strip()
    return out
