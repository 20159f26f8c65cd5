"""Flat arc-table compilation of the prefix tree, and batched scoring.

The tree becomes parallel arrays sorted by (from_state, token) with
per-state arc ranges, so a full-vocabulary score query is an index-range
gather instead of a walk over dict-based nodes. Backoff arcs compensate
partial boosts: a non-final state's backoff weight is the accumulated
score of its fail target minus its own, so abandoning a partial phrase
refunds exactly what was paid. Final states carry a zero-weight backoff,
which makes a completed phrase's reward permanent.

Root unknown-token self-loops are implicit: the query rule is "at the
root, a token without an explicit arc resolves to (unk_score, root)".
Observably identical to materializing V self-loop arcs, but the table
stays proportional to the tree.

Serialized format (little-endian throughout), magic "GPB1":

    header  struct "<4sIIIIf": magic, version=1, num_states, vocab_size,
            num_arcs, unk_score
    arrays  arc_from      int32[num_arcs]
            arc_token     int32[num_arcs]
            arc_to        int32[num_arcs]
            arc_weight    float32[num_arcs]
            state_start   int32[num_states]
            state_end     int32[num_states]
            backoff_to    int32[num_states]
            backoff_weight float32[num_states]
            is_final      uint8[num_states]
            final_score   float32[num_states]

Scores are float32 everywhere; both scoring backends accumulate in
float32 along the backoff chain and agree bit-for-bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _backend, _scoring_py
from .context import Vocabulary
from .errors import TableFormatError
from .tree import PrefixTree

MAGIC = b"GPB1"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIf")


@dataclass
class ArcTable:
    """Compiled boosting automaton; state 0 is the root."""

    num_states: int
    vocab_size: int
    arc_from: np.ndarray
    arc_token: np.ndarray
    arc_to: np.ndarray
    arc_weight: np.ndarray
    state_start: np.ndarray
    state_end: np.ndarray
    backoff_to: np.ndarray
    backoff_weight: np.ndarray
    is_final: np.ndarray
    final_score: np.ndarray
    unk_score: float = 0.0
    # dense root row: explicit root arcs over unk_score background
    root_scores: np.ndarray = field(init=False, repr=False)
    root_next: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        root_scores = np.full(self.vocab_size, np.float32(self.unk_score), dtype=np.float32)
        root_next = np.zeros(self.vocab_size, dtype=np.int32)
        lo, hi = int(self.state_start[0]), int(self.state_end[0])
        root_scores[self.arc_token[lo:hi]] = self.arc_weight[lo:hi]
        root_next[self.arc_token[lo:hi]] = self.arc_to[lo:hi]
        self.root_scores = root_scores
        self.root_next = root_next

    @property
    def num_arcs(self) -> int:
        return int(self.arc_from.shape[0])

    def validate(self) -> None:
        """Check every structural invariant; raises TableFormatError."""
        S, V, A = self.num_states, self.vocab_size, self.num_arcs
        if S < 1 or V < 1:
            raise TableFormatError(f"need at least 1 state and 1 token, got S={S} V={V}")
        for name in ("arc_from", "arc_token", "arc_to", "arc_weight"):
            if getattr(self, name).shape != (A,):
                raise TableFormatError(f"{name} length != num_arcs")
        for name in ("state_start", "state_end", "backoff_to", "backoff_weight", "is_final", "final_score"):
            if getattr(self, name).shape != (S,):
                raise TableFormatError(f"{name} length != num_states")
        if A:
            if not (0 <= self.arc_from.min() and self.arc_from.max() < S):
                raise TableFormatError("arc_from out of range")
            if not (0 <= self.arc_to.min() and self.arc_to.max() < S):
                raise TableFormatError("arc_to out of range")
            if not (0 <= self.arc_token.min() and self.arc_token.max() < V):
                raise TableFormatError("arc_token out of range")
            key = self.arc_from.astype(np.int64) * V + self.arc_token
            if not (np.diff(key) > 0).all():
                raise TableFormatError("arcs not strictly sorted by (from_state, token)")
        if not (0 <= self.backoff_to.min() and self.backoff_to.max() < S):
            raise TableFormatError("backoff_to out of range")
        for s in range(S):
            lo, hi = int(self.state_start[s]), int(self.state_end[s])
            if not 0 <= lo <= hi <= A:
                raise TableFormatError(f"state {s}: bad arc range [{lo}, {hi})")
            if hi > lo and not (self.arc_from[lo:hi] == s).all():
                raise TableFormatError(f"state {s}: arc range covers foreign arcs")
        if int(self.state_end.astype(np.int64).sum() - self.state_start.astype(np.int64).sum()) != A:
            raise TableFormatError("arc ranges do not cover the arc array")
        if int(self.backoff_to[0]) != 0 or float(self.backoff_weight[0]) != 0.0:
            raise TableFormatError("root backoff must be (0, 0)")
        if self.is_final.any() and not (self.backoff_weight[self.is_final] == 0.0).all():
            raise TableFormatError("final states must have zero backoff weight")
        nonfinal = ~self.is_final
        nonfinal[0] = False
        if nonfinal.any() and not (self.backoff_weight[nonfinal] <= 0.0).all():
            raise TableFormatError("non-final backoff weights must be <= 0")
        if not np.isfinite(self.arc_weight).all() or not np.isfinite(self.backoff_weight).all():
            raise TableFormatError("non-finite weight")


@dataclass(frozen=True)
class ScoreQueryResult:
    """Batched query output: (B, V) boosting scores and next states."""

    scores: np.ndarray
    next_states: np.ndarray


def compile_arc_table(tree: PrefixTree, unk_score: float = 0.0) -> ArcTable:
    """Flatten a fail-linked prefix tree into an ArcTable."""
    if not tree.has_fail_links:
        raise ValueError("tree has no fail links; run compute_fail_links first")
    S = tree.num_nodes
    V = tree.vocab_size

    frm, tok, to, wgt = [], [], [], []
    for nid in tree.bfs_order():
        for token, (child, score) in sorted(tree.nodes[nid].arcs.items()):
            frm.append(nid)
            tok.append(token)
            to.append(child)
            wgt.append(score)
    arc_from = np.asarray(frm, dtype=np.int32).reshape(-1)
    arc_token = np.asarray(tok, dtype=np.int32).reshape(-1)
    arc_to = np.asarray(to, dtype=np.int32).reshape(-1)
    arc_weight = np.asarray(wgt, dtype=np.float64).reshape(-1)
    order = np.lexsort((arc_token, arc_from))
    arc_from, arc_token = arc_from[order], arc_token[order]
    arc_to, arc_weight = arc_to[order], arc_weight[order].astype(np.float32)

    state_start = np.searchsorted(arc_from, np.arange(S), side="left").astype(np.int32)
    state_end = np.searchsorted(arc_from, np.arange(S), side="right").astype(np.int32)

    acc = np.array([n.acc_score for n in tree.nodes], dtype=np.float64)
    backoff_to = np.array([n.fail for n in tree.nodes], dtype=np.int32)
    is_final = np.array([n.is_final for n in tree.nodes], dtype=bool)
    backoff_weight = (acc[backoff_to] - acc).astype(np.float32)
    backoff_weight[is_final] = 0.0
    backoff_weight[0] = 0.0
    final_score = np.where(is_final, acc, 0.0).astype(np.float32)

    table = ArcTable(
        num_states=S,
        vocab_size=V,
        arc_from=arc_from,
        arc_token=arc_token,
        arc_to=arc_to,
        arc_weight=arc_weight,
        state_start=state_start,
        state_end=state_end,
        backoff_to=backoff_to,
        backoff_weight=backoff_weight,
        is_final=is_final,
        final_score=final_score,
        unk_score=float(unk_score),
    )
    table.validate()
    return table


def get_scores_batch(table: ArcTable, states) -> ScoreQueryResult:
    """Boosting scores and next states for every token, per input state.

    scores[b, v] resolves state states[b] on token v through the backoff
    chain; next_states[b, v] is the state reached. Runs on the compiled
    kernel when available, the vectorized NumPy path otherwise.
    """
    states = np.asarray(states, dtype=np.int32).reshape(-1)
    if states.size and (states.min() < 0 or states.max() >= table.num_states):
        raise IndexError(f"state id out of range [0, {table.num_states})")
    kern = _backend.kernels()
    fn = kern.score_batch if kern is not None else _scoring_py.score_batch
    scores, nxt = fn(
        table.arc_token,
        table.arc_to,
        table.arc_weight,
        table.state_start,
        table.state_end,
        table.backoff_to,
        table.backoff_weight,
        table.root_scores,
        table.root_next,
        states,
    )
    return ScoreQueryResult(scores=scores, next_states=nxt)


def naive_score(
    tree: PrefixTree, state: int, token: int, unk_score: float = 0.0
) -> tuple[float, int]:
    """Reference resolution of one (state, token) query on the tree itself.

    Test oracle for get_scores_batch: walks TreeNode structures directly,
    quantizing weights to float32 exactly as compilation does.
    """
    if not 0 <= state < tree.num_nodes:
        raise IndexError(f"state id {state} out of range")
    if not 0 <= token < tree.vocab_size:
        raise IndexError(f"token id {token} out of range")
    if not tree.has_fail_links:
        raise ValueError("tree has no fail links; run compute_fail_links first")
    f32 = np.float32
    acc = f32(0.0)
    cur = state
    while True:
        node = tree.nodes[cur]
        hit = node.arcs.get(token)
        if hit is not None:
            child, weight = hit
            return float(acc + f32(weight)), child
        if cur == 0:
            return float(acc + f32(unk_score)), 0
        if node.is_final:
            bw = f32(0.0)
        else:
            bw = f32(tree.nodes[node.fail].acc_score - node.acc_score)
        acc = f32(acc + bw)
        cur = node.fail


def save_table(table: ArcTable, path: str | Path) -> None:
    """Serialize to the GPB1 format documented in the module docstring."""
    table.validate()
    parts = [
        _HEADER.pack(MAGIC, VERSION, table.num_states, table.vocab_size, table.num_arcs, table.unk_score),
        table.arc_from.astype("<i4").tobytes(),
        table.arc_token.astype("<i4").tobytes(),
        table.arc_to.astype("<i4").tobytes(),
        table.arc_weight.astype("<f4").tobytes(),
        table.state_start.astype("<i4").tobytes(),
        table.state_end.astype("<i4").tobytes(),
        table.backoff_to.astype("<i4").tobytes(),
        table.backoff_weight.astype("<f4").tobytes(),
        table.is_final.astype("<u1").tobytes(),
        table.final_score.astype("<f4").tobytes(),
    ]
    Path(path).write_bytes(b"".join(parts))


def load_table(path: str | Path) -> ArcTable:
    """Read a GPB1 file; validates every invariant before returning."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise TableFormatError(f"{path}: truncated header")
    magic, version, S, V, A, unk = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise TableFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise TableFormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + A * 16 + S * 21
    if len(blob) != expected:
        raise TableFormatError(f"{path}: expected {expected} bytes, found {len(blob)}")

    off = _HEADER.size

    def take(dtype: str, count: int) -> np.ndarray:
        nonlocal off
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=off)
        off += arr.nbytes
        return arr.copy()

    table = ArcTable(
        num_states=S,
        vocab_size=V,
        arc_from=take("<i4", A),
        arc_token=take("<i4", A),
        arc_to=take("<i4", A),
        arc_weight=take("<f4", A),
        state_start=take("<i4", S),
        state_end=take("<i4", S),
        backoff_to=take("<i4", S),
        backoff_weight=take("<f4", S),
        is_final=take("<u1", S).astype(bool),
        final_score=take("<f4", S),
        unk_score=float(unk),
    )
    try:
        table.validate()
    except TableFormatError as exc:
        raise TableFormatError(f"{path}: corrupt table: {exc}") from None
    return table


def state_strings(table: ArcTable, vocab: Vocabulary | None = None) -> list[str]:
    """Token-path label of every state, via the tree arcs in the table."""
    labels = [""] * table.num_states
    parent_token: dict[int, tuple[int, int]] = {}
    for j in range(table.num_arcs):
        to = int(table.arc_to[j])
        if to != 0 and to not in parent_token:
            parent_token[to] = (int(table.arc_from[j]), int(table.arc_token[j]))
    for s in range(1, table.num_states):
        ids: list[int] = []
        cur = s
        while cur != 0:
            frm, tok = parent_token[cur]
            ids.append(tok)
            cur = frm
        ids.reverse()
        if vocab is not None:
            labels[s] = "".join(vocab.tokens[i] for i in ids)
        else:
            labels[s] = ",".join(str(i) for i in ids)
    return labels
