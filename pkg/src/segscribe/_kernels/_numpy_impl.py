"""Pure-numpy semi-Markov chart recursions (fallback backend).

Shared conventions (both backends):
  * `unary[q, l-1, v]` scores the segment [q, q+l) with label v; entries are
    -inf for invalid or disallowed edges.
  * `pair[v', v]` scores the transition v' -> v; the extra last row is the
    path-start context.
  * Charts are log-domain float64.  `fw[t, v]` sums partial paths 0 -> t
    whose last label is v; `bw[t, v]` sums completions t -> T given the
    previous label v; `start[q, v]` is the aggregated context score for an
    edge starting at q with label v; `end[t, v]` aggregates segment+suffix
    mass for edges starting at t.
  * Viterbi ties break toward the earlier start boundary, then the smaller
    previous-label index, then the smaller final-label index.
"""

from __future__ import annotations

import numpy as np

NEG_INF = -np.inf


def _lse(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - safe), axis=axis))
    out += np.squeeze(safe, axis=axis)
    return np.where(np.isfinite(np.squeeze(m, axis=axis)), out, NEG_INF)


def forward_log(unary: np.ndarray, pair: np.ndarray):
    T, L, V = unary.shape
    fw = np.full((T + 1, V), NEG_INF)
    start = np.full((T, V), NEG_INF)
    start[0] = pair[V]
    for t in range(1, T + 1):
        lmax = min(L, t)
        qs = np.arange(t - lmax, t)
        tot = start[qs] + unary[qs, t - qs - 1, :]
        fw[t] = _lse(tot, axis=0)
        if t < T:
            start[t] = _lse(fw[t][:, None] + pair[:V], axis=0)
    logz = float(_lse(fw[T], axis=0)) if V > 1 else float(fw[T, 0])
    return fw, start, logz


def backward_log(unary: np.ndarray, pair: np.ndarray):
    T, L, V = unary.shape
    bw = np.full((T + 1, V), NEG_INF)
    end = np.full((T, V), NEG_INF)
    bw[T] = 0.0
    for t in range(T - 1, -1, -1):
        lmax = min(L, T - t)
        ls = np.arange(1, lmax + 1)
        tot = unary[t, ls - 1, :] + bw[t + ls]
        end[t] = _lse(tot, axis=0)
        bw[t] = _lse(pair[:V] + end[t][None, :], axis=1)
    logz = float(_lse(pair[V] + end[0], axis=0))
    return bw, end, logz


def viterbi(unary: np.ndarray, pair: np.ndarray):
    T, L, V = unary.shape
    vt = np.full((T + 1, V), NEG_INF)
    best_prev_score = np.full((T, V), NEG_INF)
    best_prev_label = np.full((T, V), -1, dtype=np.int32)
    back_q = np.zeros((T + 1, V), dtype=np.int32)
    best_prev_score[0] = pair[V]
    for t in range(1, T + 1):
        lmax = min(L, t)
        qs = np.arange(t - lmax, t)
        tot = best_prev_score[qs] + unary[qs, t - qs - 1, :]
        pick = np.argmax(tot, axis=0)  # first max = earliest boundary
        vt[t] = tot[pick, np.arange(V)]
        back_q[t] = qs[pick]
        if t < T:
            cand = vt[t][:, None] + pair[:V]
            best_prev_label[t] = np.argmax(cand, axis=0)  # smallest v' wins
            best_prev_score[t] = cand[best_prev_label[t], np.arange(V)]
    v = int(np.argmax(vt[T]))
    score = float(vt[T, v])
    if score == NEG_INF:
        raise ValueError("no valid labeled segmentation")
    bounds = [T]
    labels = []
    t = T
    while t > 0:
        labels.append(v)
        q = int(back_q[t, v])
        bounds.append(q)
        if q > 0:
            v = int(best_prev_label[q, v])
        t = q
    return (score, np.array(labels[::-1], dtype=np.int32),
            np.array(bounds[::-1], dtype=np.int32))
