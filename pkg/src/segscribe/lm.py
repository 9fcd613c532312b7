"""Bigram letter language model with Witten-Bell smoothing.

Words are padded with <s>/</s>, so the model covers p(letter|<s>),
p(letter|letter) and p(</s>|letter).  Smoothing interpolates the
maximum-likelihood bigram with an add-one unigram, which keeps every
conditional strictly positive.  Letters outside the vocabulary map to a
reserved UNK symbol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .alphabet import BOS, EOS, LETTERS
from .core import DataFormatError

UNK = "<unk>"


@dataclass
class BigramLm:
    # prediction targets: letters + </s> + UNK;  histories: <s> + letters + UNK
    targets: tuple[str, ...]
    histories: tuple[str, ...]
    logprob: dict[tuple[str, str], float]
    backoff_logprob: dict[str, float]  # smoothed unigram, used for c(h)=0
    _hist_set: frozenset = field(init=False, repr=False)
    _targ_set: frozenset = field(init=False, repr=False)

    def __post_init__(self):
        self._hist_set = frozenset(self.histories)
        self._targ_set = frozenset(self.targets)

    def _map_history(self, label: str) -> str:
        return label if label in self._hist_set else UNK

    def _map_target(self, label: str) -> str:
        return label if label in self._targ_set else UNK

    def logp(self, prev: str, nxt: str) -> float:
        """log p(nxt | prev); always finite."""
        h = self._map_history(prev.upper() if len(prev) == 1 else prev)
        w = self._map_target(nxt.upper() if len(nxt) == 1 else nxt)
        key = (h, w)
        if key in self.logprob:
            return self.logprob[key]
        return self.backoff_logprob[w]

    def sequence_logp(self, word: Sequence[str]) -> float:
        """log p of a word including the <s> start and the </s> event."""
        labels = [BOS, *[c.upper() for c in word], EOS]
        return sum(self.logp(a, b) for a, b in zip(labels, labels[1:]))

    def perplexity(self, words: Iterable[Sequence[str]]) -> float:
        """Per-event perplexity over words, </s> transitions included."""
        total, events = 0.0, 0
        for word in words:
            total += self.sequence_logp(word)
            events += len(word) + 1
        if events == 0:
            raise ValueError("no events")
        return math.exp(-total / events)

    # -- serialization ----------------------------------------------------

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("[bigrams]\n")
            for (h, w) in sorted(self.logprob):
                f.write(f"{h}\t{w}\t{self.logprob[(h, w)]!r}\n")
            f.write("[backoff]\n")
            for w in sorted(self.backoff_logprob):
                f.write(f"{w}\t{self.backoff_logprob[w]!r}\n")

    @classmethod
    def load(cls, path) -> "BigramLm":
        logprob: dict[tuple[str, str], float] = {}
        backoff: dict[str, float] = {}
        section = None
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                if line in ("[bigrams]", "[backoff]"):
                    section = line
                    continue
                fields = line.split("\t")
                if section == "[bigrams]" and len(fields) == 3:
                    logprob[(fields[0], fields[1])] = float(fields[2])
                elif section == "[backoff]" and len(fields) == 2:
                    backoff[fields[0]] = float(fields[1])
                else:
                    raise DataFormatError(f"line {lineno}: bad LM record")
        if not backoff:
            raise DataFormatError("LM file has no backoff section")
        targets = tuple(sorted(backoff))
        histories = tuple(sorted({h for h, _ in logprob} | {BOS, UNK}))
        return cls(targets, histories, logprob, backoff)


def fit_bigram(words: Iterable[Sequence[str]],
               letters: Sequence[str] = LETTERS) -> BigramLm:
    """Estimate a Witten-Bell smoothed bigram model from a word corpus."""
    words = list(words)
    if not words:
        raise ValueError("empty corpus")
    letters = tuple(letters)
    targets = letters + (EOS, UNK)
    histories = (BOS,) + letters + (UNK,)
    letter_set = set(letters)

    big: dict[tuple[str, str], int] = {}
    uni: dict[str, int] = {}
    total = 0
    for word in words:
        labels = [BOS]
        labels += [c if c in letter_set else UNK
                   for c in (ch.upper() for ch in word)]
        labels.append(EOS)
        for h, w in zip(labels, labels[1:]):
            big[(h, w)] = big.get((h, w), 0) + 1
            uni[w] = uni.get(w, 0) + 1
            total += 1

    # add-one unigram over the full target vocabulary
    denom = total + len(targets)
    backoff = {w: math.log((uni.get(w, 0) + 1) / denom) for w in targets}

    logprob: dict[tuple[str, str], float] = {}
    for h in histories:
        ch = sum(c for (hh, _), c in big.items() if hh == h)
        if ch == 0:
            continue  # unseen history: queries fall through to backoff
        types = sum(1 for (hh, _) in big if hh == h)
        lam = ch / (ch + types)  # Witten-Bell: telescope mass by seen types
        for w in targets:
            c = big.get((h, w), 0)
            p = lam * (c / ch) + (1.0 - lam) * math.exp(backoff[w])
            logprob[(h, w)] = math.log(p)
    return BigramLm(targets, histories, logprob, backoff)


def lm_score_table(lm: BigramLm, labels: Sequence[str], bos_index: int | None,
                   eos_index: int | None):
    """Dense (V+1, V) log-prob table over an alphabet's label indices.

    Row V is the path-start history.  Entries follow the convention used by
    the segment features: edges labeled <s> score 0 (the LM has no <s>
    target), edges out of <s> use the <s> history, and </s> columns hold
    p(</s> | prev).
    """
    import numpy as np
    V = len(labels)
    table = np.zeros((V + 1, V), dtype=np.float64)
    for j, lab in enumerate(labels):
        if bos_index is not None and j == bos_index:
            continue  # <s>-labeled edges contribute 0
        for i in range(V + 1):
            prev = BOS if i == V else labels[i]
            if bos_index is not None and i == bos_index:
                prev = BOS
            if eos_index is not None and j == eos_index:
                table[i, j] = lm.logp(prev, EOS)
            else:
                table[i, j] = lm.logp(prev, labels[j])
    return table
