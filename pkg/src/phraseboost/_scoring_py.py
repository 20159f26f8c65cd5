"""Pure-NumPy scoring backend.

Vectorized over the full B x V grid: all cells of a query row share the
same start state, and cells that miss at a state all take the same
backoff, so each resolution round gathers the arc ranges of the rows'
current states in one ragged gather and scatters weights into the
not-yet-resolved cells. Rows finish when their backoff chain reaches the
root, where the dense root row (explicit root arcs, unknown-token score
elsewhere) fills the remaining cells.

The compiled backend in _kernels.pyx implements the identical contract;
both accumulate in float32 in chain order and agree bit-for-bit.
"""

from __future__ import annotations

import numpy as np


def ragged_arange(starts: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Concatenation of arange(s, s+c) for each (s, c) pair."""
    ends = np.cumsum(counts)
    total = int(ends[-1])
    shift = np.repeat(starts - (ends - counts), counts)
    return np.arange(total, dtype=np.int64) + shift


def score_batch(
    arc_token: np.ndarray,
    arc_to: np.ndarray,
    arc_weight: np.ndarray,
    state_start: np.ndarray,
    state_end: np.ndarray,
    backoff_to: np.ndarray,
    backoff_weight: np.ndarray,
    root_scores: np.ndarray,
    root_next: np.ndarray,
    states: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Resolve every (state, token) pair of the batch; returns (B,V) arrays."""
    B = states.shape[0]
    V = root_scores.shape[0]
    scores = np.zeros((B, V), dtype=np.float32)
    nxt = np.zeros((B, V), dtype=np.int32)
    resolved = np.zeros((B, V), dtype=bool)
    cur = states.astype(np.int32, copy=True)
    acc = np.zeros(B, dtype=np.float32)
    rows = np.arange(B)

    while rows.size:
        st = cur[rows]
        at_root = st == 0
        if at_root.any():
            rr = rows[at_root]
            open_ = ~resolved[rr]
            scores[rr] = np.where(open_, acc[rr][:, None] + root_scores[None, :], scores[rr])
            nxt[rr] = np.where(open_, root_next[None, :], nxt[rr])
        rows = rows[~at_root]
        if not rows.size:
            break
        st = cur[rows]
        counts = state_end[st] - state_start[st]
        nonempty = counts > 0
        if nonempty.any():
            r2 = rows[nonempty]
            idx = ragged_arange(state_start[st][nonempty], counts[nonempty])
            rep = np.repeat(r2, counts[nonempty])
            toks = arc_token[idx]
            sel = ~resolved[rep, toks]
            if sel.any():
                rs, ts, js = rep[sel], toks[sel], idx[sel]
                scores[rs, ts] = acc[rs] + arc_weight[js]
                nxt[rs, ts] = arc_to[js]
                resolved[rs, ts] = True
        acc[rows] = acc[rows] + backoff_weight[st]
        cur[rows] = backoff_to[st]

    return scores, nxt
