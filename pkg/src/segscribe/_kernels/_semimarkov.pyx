# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled semi-Markov chart recursions.

Same contract as the numpy fallback (see _numpy_impl.py for the shared
conventions); these loops are the hot path of SCRF training and decoding.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, exp, log

cnp.import_array()


def forward_log(double[:, :, ::1] unary, double[:, ::1] pair):
    cdef Py_ssize_t T = unary.shape[0]
    cdef Py_ssize_t L = unary.shape[1]
    cdef Py_ssize_t V = unary.shape[2]
    fw_arr = np.full((T + 1, V), -np.inf)
    start_arr = np.full((T, V), -np.inf)
    cdef double[:, ::1] fw = fw_arr
    cdef double[:, ::1] start = start_arr
    cdef Py_ssize_t t, q, l, v, vp, lmax
    cdef double mx, s, x, logz

    for v in range(V):
        start[0, v] = pair[V, v]
    for t in range(1, T + 1):
        lmax = L if L < t else t
        for v in range(V):
            mx = -INFINITY
            for l in range(1, lmax + 1):
                q = t - l
                x = start[q, v] + unary[q, l - 1, v]
                if x > mx:
                    mx = x
            if mx > -INFINITY:
                s = 0.0
                for l in range(1, lmax + 1):
                    q = t - l
                    x = start[q, v] + unary[q, l - 1, v]
                    s += exp(x - mx)
                fw[t, v] = mx + log(s)
        if t < T:
            for v in range(V):
                mx = -INFINITY
                for vp in range(V):
                    x = fw[t, vp] + pair[vp, v]
                    if x > mx:
                        mx = x
                if mx > -INFINITY:
                    s = 0.0
                    for vp in range(V):
                        x = fw[t, vp] + pair[vp, v]
                        s += exp(x - mx)
                    start[t, v] = mx + log(s)
    mx = -INFINITY
    for v in range(V):
        if fw[T, v] > mx:
            mx = fw[T, v]
    if mx > -INFINITY:
        s = 0.0
        for v in range(V):
            s += exp(fw[T, v] - mx)
        logz = mx + log(s)
    else:
        logz = -INFINITY
    return fw_arr, start_arr, logz


def backward_log(double[:, :, ::1] unary, double[:, ::1] pair):
    cdef Py_ssize_t T = unary.shape[0]
    cdef Py_ssize_t L = unary.shape[1]
    cdef Py_ssize_t V = unary.shape[2]
    bw_arr = np.full((T + 1, V), -np.inf)
    end_arr = np.full((T, V), -np.inf)
    cdef double[:, ::1] bw = bw_arr
    cdef double[:, ::1] end = end_arr
    cdef Py_ssize_t t, l, v, vp, lmax
    cdef double mx, s, x, logz

    for v in range(V):
        bw[T, v] = 0.0
    for t in range(T - 1, -1, -1):
        lmax = L if L < (T - t) else (T - t)
        for v in range(V):
            mx = -INFINITY
            for l in range(1, lmax + 1):
                x = unary[t, l - 1, v] + bw[t + l, v]
                if x > mx:
                    mx = x
            if mx > -INFINITY:
                s = 0.0
                for l in range(1, lmax + 1):
                    x = unary[t, l - 1, v] + bw[t + l, v]
                    s += exp(x - mx)
                end[t, v] = mx + log(s)
        for vp in range(V):
            mx = -INFINITY
            for v in range(V):
                x = pair[vp, v] + end[t, v]
                if x > mx:
                    mx = x
            if mx > -INFINITY:
                s = 0.0
                for v in range(V):
                    s += exp(pair[vp, v] + end[t, v] - mx)
                bw[t, vp] = mx + log(s)
    mx = -INFINITY
    for v in range(V):
        x = pair[V, v] + end[0, v]
        if x > mx:
            mx = x
    if mx > -INFINITY:
        s = 0.0
        for v in range(V):
            s += exp(pair[V, v] + end[0, v] - mx)
        logz = mx + log(s)
    else:
        logz = -INFINITY
    return bw_arr, end_arr, logz


def viterbi(double[:, :, ::1] unary, double[:, ::1] pair):
    cdef Py_ssize_t T = unary.shape[0]
    cdef Py_ssize_t L = unary.shape[1]
    cdef Py_ssize_t V = unary.shape[2]
    vt_arr = np.full((T + 1, V), -np.inf)
    prev_score_arr = np.full((T, V), -np.inf)
    prev_label_arr = np.full((T, V), -1, dtype=np.int32)
    back_q_arr = np.zeros((T + 1, V), dtype=np.int32)
    cdef double[:, ::1] vt = vt_arr
    cdef double[:, ::1] prev_score = prev_score_arr
    cdef int[:, ::1] prev_label = prev_label_arr
    cdef int[:, ::1] back_q = back_q_arr
    cdef Py_ssize_t t, q, l, v, vp, lmax, bq, bv
    cdef double mx, x, score

    for v in range(V):
        prev_score[0, v] = pair[V, v]
    for t in range(1, T + 1):
        lmax = L if L < t else t
        for v in range(V):
            mx = -INFINITY
            bq = 0
            # earliest boundary first; strict improvement keeps it on ties
            for q in range(t - lmax, t):
                x = prev_score[q, v] + unary[q, t - q - 1, v]
                if x > mx:
                    mx = x
                    bq = q
            vt[t, v] = mx
            back_q[t, v] = <int>bq
        if t < T:
            for v in range(V):
                mx = -INFINITY
                bv = -1
                for vp in range(V):
                    x = vt[t, vp] + pair[vp, v]
                    if x > mx:
                        mx = x
                        bv = vp
                prev_score[t, v] = mx
                prev_label[t, v] = <int>bv
    mx = -INFINITY
    bv = 0
    for v in range(V):
        if vt[T, v] > mx:
            mx = vt[T, v]
            bv = v
    score = mx
    if score == -INFINITY:
        raise ValueError("no valid labeled segmentation")

    bounds = [T]
    labels = []
    t = T
    v = bv
    while t > 0:
        labels.append(v)
        q = back_q[t, v]
        bounds.append(q)
        if q > 0:
            v = prev_label[q, v]
        t = q
    return (score, np.array(labels[::-1], dtype=np.int32),
            np.array(bounds[::-1], dtype=np.int32))
