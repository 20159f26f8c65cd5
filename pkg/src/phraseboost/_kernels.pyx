# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: batched table scoring and the greedy CTC loop.

Must stay numerically interchangeable with the pure-NumPy backend:
float32 accumulation in backoff-chain order, double-precision shallow
fusion, ascending-index tie breaks.
"""

import numpy as np

cimport cython
from libc.math cimport INFINITY, nextafterf

cdef extern from *:
    """
    #include <stddef.h>
    /* branchless count of entries >= t; the compare-accumulate reduction
       auto-vectorizes under -O3 */
    static ptrdiff_t pb_count_ge(const float* x, ptrdiff_t n, float t) {
        ptrdiff_t c = 0;
        for (ptrdiff_t i = 0; i < n; i++) {
            c += (x[i] >= t);
        }
        return c;
    }
    """
    ptrdiff_t pb_count_ge(const float* x, ptrdiff_t n, float t) nogil


def score_batch(
    int[::1] arc_token,
    int[::1] arc_to,
    float[::1] arc_weight,
    int[::1] state_start,
    int[::1] state_end,
    int[::1] backoff_to,
    float[::1] backoff_weight,
    float[::1] root_scores,
    int[::1] root_next,
    int[::1] states,
):
    """Per-cell backoff-chain resolution over the B x V grid."""
    cdef Py_ssize_t B = states.shape[0]
    cdef Py_ssize_t V = root_scores.shape[0]
    scores_arr = np.empty((B, V), dtype=np.float32)
    next_arr = np.empty((B, V), dtype=np.int32)
    stamp_arr = np.full(V, -1, dtype=np.int64)
    cdef float[:, ::1] scores = scores_arr
    cdef int[:, ::1] nxt = next_arr
    cdef long long[::1] stamp = stamp_arr
    cdef Py_ssize_t b, v, j
    cdef int s
    cdef float acc

    with nogil:
        for b in range(B):
            acc = 0.0
            s = states[b]
            while s != 0:
                for j in range(state_start[s], state_end[s]):
                    v = arc_token[j]
                    if stamp[v] != b:
                        stamp[v] = b
                        scores[b, v] = acc + arc_weight[j]
                        nxt[b, v] = arc_to[j]
                acc = acc + backoff_weight[s]
                s = backoff_to[s]
            for v in range(V):
                if stamp[v] != b:
                    scores[b, v] = acc + root_scores[v]
                    nxt[b, v] = root_next[v]
    return scores_arr, next_arr


def ctc_greedy(
    float[:, ::1] logprobs,
    int blank,
    double lam,
    bint use_boost,
    int[::1] arc_token,
    int[::1] arc_to,
    float[::1] arc_weight,
    int[::1] state_start,
    int[::1] state_end,
    int[::1] backoff_to,
    float[::1] backoff_weight,
    float[::1] root_scores,
    int[::1] root_next,
):
    """Two-stage greedy CTC over the whole utterance.

    Stage 1 takes the unboosted per-frame argmax; blanks and repeats of
    the previous frame's raw symbol pass through untouched. Stage 2
    re-ranks the remaining tokens by logprob + lam * tree score, using
    the current state's backoff chain sparsely: explicit arcs on the
    chain override the dense root row shifted by the accumulated backoff.

    The re-rank scan prunes with a bound: no tree score exceeds
    max(best chain arc, backoff total + best root score), so any token
    whose logprob falls below the stage-1 argmax's combined score minus
    lam * that bound can never win or tie. A vectorized count of tokens
    above the (conservatively rounded-down) threshold short-circuits the
    common case where only the argmax itself survives; otherwise a
    scalar scan re-ranks the survivors. Pruning is strict, so
    tie-breaking is unaffected.

    Returns (tokens, am_score, boost_score, deltas, states) where deltas
    and states trace each emitted token's raw boost and post-advance
    tree state.
    """
    cdef Py_ssize_t T = logprobs.shape[0]
    cdef Py_ssize_t V = logprobs.shape[1]
    out_tokens_arr = np.empty(T, dtype=np.int32)
    out_deltas_arr = np.empty(T, dtype=np.float64)
    out_states_arr = np.empty(T, dtype=np.int32)
    stamp_arr = np.full(V, -1, dtype=np.int64)
    sval_arr = np.empty(V, dtype=np.float32)
    snxt_arr = np.empty(V, dtype=np.int32)
    cdef int[::1] out_tokens = out_tokens_arr
    cdef double[::1] out_deltas = out_deltas_arr
    cdef int[::1] out_states = out_states_arr
    cdef long long[::1] stamp = stamp_arr
    cdef float[::1] sval = sval_arr
    cdef int[::1] snxt = snxt_arr

    cdef double am = 0.0
    cdef double boost = 0.0
    cdef Py_ssize_t n_out = 0
    cdef int last = -1
    cdef int state = 0
    cdef Py_ssize_t t, v, j, vb, ve
    cdef int a, s, chosen, next_state
    cdef float acc, sv, sv_bound, max_root, thresh_f, lpv, bm
    cdef double best_raw, c, bc, bl, delta, ca, thresh

    max_root = -INFINITY
    for v in range(V):
        if root_scores[v] > max_root:
            max_root = root_scores[v]

    with nogil:
        for t in range(T):
            a = 0
            best_raw = logprobs[t, 0]
            for v in range(1, V):
                if logprobs[t, v] > best_raw:
                    best_raw = logprobs[t, v]
                    a = v
            if a == blank or a == last:
                am += logprobs[t, a]
                last = a
                continue
            if not use_boost:
                chosen = a
                delta = 0.0
                next_state = 0
            else:
                acc = 0.0
                sv_bound = -INFINITY
                s = state
                while s != 0:
                    for j in range(state_start[s], state_end[s]):
                        v = arc_token[j]
                        if stamp[v] != t:
                            stamp[v] = t
                            sv = acc + arc_weight[j]
                            sval[v] = sv
                            snxt[v] = arc_to[j]
                            if sv > sv_bound:
                                sv_bound = sv
                    acc = acc + backoff_weight[s]
                    s = backoff_to[s]
                if acc + max_root > sv_bound:
                    sv_bound = acc + max_root
                if stamp[a] == t:
                    sv = sval[a]
                else:
                    sv = acc + root_scores[a]
                ca = <double> logprobs[t, a] + lam * <double> sv
                thresh = ca - lam * <double> sv_bound
                thresh_f = nextafterf(<float> thresh, -INFINITY)
                if pb_count_ge(&logprobs[t, 0], V, thresh_f) == 1:
                    # the argmax is the only token above the bound
                    chosen = a
                else:
                    chosen = -1
                    bc = -INFINITY
                    bl = -INFINITY
                    for j in range(V):
                        lpv = logprobs[t, j]
                        if lpv < thresh_f:
                            continue
                        if j == blank or j == last:
                            continue
                        if stamp[j] == t:
                            sv = sval[j]
                        else:
                            sv = acc + root_scores[j]
                        c = <double> lpv + lam * <double> sv
                        if c > bc or (c == bc and <double> lpv > bl):
                            bc = c
                            bl = lpv
                            chosen = j
                if stamp[chosen] == t:
                    delta = <double> sval[chosen]
                    next_state = snxt[chosen]
                else:
                    delta = <double> (acc + root_scores[chosen])
                    next_state = root_next[chosen]
            out_tokens[n_out] = chosen
            out_deltas[n_out] = delta
            out_states[n_out] = next_state
            n_out += 1
            am += logprobs[t, chosen]
            boost += delta
            state = next_state
            last = chosen

    return (
        out_tokens_arr[:n_out].copy(),
        am,
        boost,
        out_deltas_arr[:n_out].copy(),
        out_states_arr[:n_out].copy(),
    )
