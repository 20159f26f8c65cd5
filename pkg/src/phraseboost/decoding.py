"""Shallow-fusion decoders: greedy/beam CTC, greedy/beam transducer, AED beam.

Every decoder ranks hypotheses by

    am_score + lam * boost_score

where boost_score accumulates raw arc-table scores (pre-lam) along the
hypothesis's tree walk. Blank and CTC-repeat symbols never touch the
tree. Greedy decoding uses two-stage selection: the unboosted argmax
decides blank/repeat handling; only genuine new symbols are re-ranked
with the boost added. With lam == 0, boosting disabled, or no table, the
tree is skipped entirely, so baseline runs are bit-identical regardless
of which switch disabled them.

The AED decoder counters end-of-sentence suppression: when the bump is
enabled, the eos expansion additionally receives the clamped best tree
score from the current state, plus the state's final score when a whole
phrase has just been completed. Both components are folded into
boost_score so the ranking identity above still holds.

Ties anywhere break deterministically: higher acoustic score first, then
the lexicographically lower token sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _backend
from .acoustic import FLAVOR_AED, FLAVOR_TRANSDUCER, EmissionMatrix, StepModel
from .context import Vocabulary, detokenize
from .table import ArcTable, get_scores_batch

NEG_INF = float("-inf")

DEFAULT_BEAM_CTC = 8
DEFAULT_BEAM_TRANSDUCER = 8
DEFAULT_BEAM_AED = 3


@dataclass(frozen=True)
class DecodeConfig:
    """Shallow-fusion and search parameters shared by all decoders."""

    lam: float = 1.0
    beam_size: int = 8
    max_symbols_per_frame: int = 5
    eos_bump_enabled: bool = True
    boost_enabled: bool = True

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.beam_size < 1:
            raise ValueError(f"beam_size must be >= 1, got {self.beam_size}")
        if self.max_symbols_per_frame < 1:
            raise ValueError(f"max_symbols_per_frame must be >= 1, got {self.max_symbols_per_frame}")


@dataclass(frozen=True)
class TraceStep:
    """One emitted token: raw boost delta and tree state after the move."""

    token: int
    boost: float
    state: int


@dataclass
class DecodeResult:
    tokens: list[int]
    text: str
    am_score: float
    boost_score: float
    trace: list[TraceStep] | None = None


@dataclass
class Hypothesis:
    """Decoding state carried per beam entry (transducer and AED beams)."""

    tokens: tuple[int, ...]
    am_score: float
    boost_score: float
    tree_state: int
    last_token: int | None = None
    ended: bool = False
    trace: tuple[TraceStep, ...] = ()


def _logaddexp(a: float, b: float) -> float:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    m = a if a > b else b
    return m + math.log1p(math.exp(-abs(a - b)))


def _boost_active(table: ArcTable | None, cfg: DecodeConfig) -> bool:
    return table is not None and cfg.boost_enabled and cfg.lam != 0.0


def _text(tokens, vocab: Vocabulary | None) -> str:
    return detokenize(tokens, vocab) if vocab is not None else ""


def _check_ctc_inputs(em: EmissionMatrix, table: ArcTable | None) -> None:
    if em.blank_id is None:
        raise ValueError("CTC decoding needs em.blank_id")
    if table is not None and em.vocab_size != table.vocab_size:
        raise ValueError(
            f"emission vocab size {em.vocab_size} != table vocab size {table.vocab_size}"
        )


def _check_step_inputs(step: StepModel, flavor: str, table: ArcTable | None) -> None:
    if step.flavor != flavor:
        raise ValueError(f"step model flavor {step.flavor!r} != {flavor!r}")
    if table is not None and step.vocab_size != table.vocab_size:
        raise ValueError(
            f"step model vocab size {step.vocab_size} != table vocab size {table.vocab_size}"
        )


def _rerank(
    row: np.ndarray,
    srow: np.ndarray,
    lam: float,
    exclude: tuple[int, ...],
) -> int:
    """Boosted argmax over tokens not in `exclude`.

    Ties break toward higher raw logprob, then lower token id, matching
    the compiled kernel's ascending strict-greater scan.
    """
    comb = row.astype(np.float64) + np.float64(lam) * srow.astype(np.float64)
    for v in exclude:
        if v >= 0:
            comb[v] = NEG_INF
    best = comb.max()
    cand = np.flatnonzero(comb == best)
    if cand.size > 1:
        raws = row[cand]
        cand = cand[raws == raws.max()]
    return int(cand[0])


# ---------------------------------------------------------------------------
# CTC


def ctc_greedy_boosted(
    em: EmissionMatrix,
    table: ArcTable | None = None,
    cfg: DecodeConfig | None = None,
    *,
    vocab: Vocabulary | None = None,
    want_trace: bool = False,
) -> DecodeResult:
    """Two-stage greedy CTC with standard collapse of the raw symbol path."""
    cfg = cfg or DecodeConfig()
    _check_ctc_inputs(em, table)
    use_boost = _boost_active(table, cfg)
    blank = em.blank_id

    kern = _backend.kernels()
    if kern is not None:
        dummy = np.zeros(0, dtype=np.int32)
        dummy_f = np.zeros(0, dtype=np.float32)
        one = np.zeros(1, dtype=np.int32)
        one_f = np.zeros(1, dtype=np.float32)
        t = table if use_boost else None
        toks, am, boost, deltas, states = kern.ctc_greedy(
            em.logprobs,
            blank,
            float(cfg.lam),
            use_boost,
            t.arc_token if t else dummy,
            t.arc_to if t else dummy,
            t.arc_weight if t else dummy_f,
            t.state_start if t else one,
            t.state_end if t else one,
            t.backoff_to if t else one,
            t.backoff_weight if t else one_f,
            t.root_scores if t else np.zeros(em.vocab_size, dtype=np.float32),
            t.root_next if t else np.zeros(em.vocab_size, dtype=np.int32),
        )
        tokens = [int(x) for x in toks]
        trace = (
            [TraceStep(int(v), float(d), int(s)) for v, d, s in zip(toks, deltas, states)]
            if want_trace
            else None
        )
        return DecodeResult(tokens, _text(tokens, vocab), float(am), float(boost), trace)

    lp = em.logprobs
    raw = np.argmax(lp, axis=1)
    tokens: list[int] = []
    trace: list[TraceStep] = []
    am = 0.0
    boost = 0.0
    last = -1
    state = 0
    for t_i in range(em.num_frames):
        a = int(raw[t_i])
        if a == blank or a == last:
            am += float(lp[t_i, a])
            last = a
            continue
        if use_boost:
            res = get_scores_batch(table, [state])
            srow, nrow = res.scores[0], res.next_states[0]
            chosen = _rerank(lp[t_i], srow, cfg.lam, (blank, last))
            delta = float(srow[chosen])
            next_state = int(nrow[chosen])
        else:
            chosen, delta, next_state = a, 0.0, 0
        tokens.append(chosen)
        if want_trace:
            trace.append(TraceStep(chosen, delta, next_state))
        am += float(lp[t_i, chosen])
        boost += delta
        state = next_state
        last = chosen
    return DecodeResult(tokens, _text(tokens, vocab), am, boost, trace if want_trace else None)


class _PrefixEntry:
    __slots__ = ("pb", "pnb", "state", "boost", "trace")

    def __init__(self, pb, pnb, state, boost, trace):
        self.pb = pb
        self.pnb = pnb
        self.state = state
        self.boost = boost
        self.trace = trace

    @property
    def am(self) -> float:
        return _logaddexp(self.pb, self.pnb)


def ctc_beam_boosted(
    em: EmissionMatrix,
    table: ArcTable | None = None,
    cfg: DecodeConfig | None = None,
    *,
    vocab: Vocabulary | None = None,
    want_trace: bool = False,
) -> tuple[DecodeResult, list[DecodeResult]]:
    """CTC prefix beam search merging hypotheses on collapsed labels.

    Each prefix tracks blank/non-blank ending mass; the tree state and
    accumulated boost are functions of the prefix alone, so merged
    alignments agree on them by construction. Pruning uses the combined
    score am + lam * boost.
    """
    cfg = cfg or DecodeConfig()
    _check_ctc_inputs(em, table)
    use_boost = _boost_active(table, cfg)
    blank = em.blank_id
    lp = em.logprobs
    V = em.vocab_size
    lam = cfg.lam

    entries: dict[tuple[int, ...], _PrefixEntry] = {
        (): _PrefixEntry(0.0, NEG_INF, 0, 0.0, ())
    }

    for t in range(em.num_frames):
        items = list(entries.items())
        if use_boost:
            res = get_scores_batch(table, [e.state for _, e in items])
        new: dict[tuple[int, ...], _PrefixEntry] = {}

        def carry(prefix, e):
            ne = new.get(prefix)
            if ne is None:
                ne = _PrefixEntry(NEG_INF, NEG_INF, e.state, e.boost, e.trace)
                new[prefix] = ne
            return ne

        for i, (prefix, e) in enumerate(items):
            tot = _logaddexp(e.pb, e.pnb)
            srow = res.scores[i] if use_boost else None
            nrow = res.next_states[i] if use_boost else None
            ne = carry(prefix, e)
            ne.pb = _logaddexp(ne.pb, tot + float(lp[t, blank]))
            last = prefix[-1] if prefix else -1
            for v in range(V):
                if v == blank:
                    continue
                lv = float(lp[t, v])
                if v == last:
                    ne.pnb = _logaddexp(ne.pnb, e.pnb + lv)
                    contrib = e.pb + lv
                else:
                    contrib = tot + lv
                if contrib == NEG_INF:
                    continue
                newp = prefix + (v,)
                ne2 = new.get(newp)
                if ne2 is None:
                    if use_boost:
                        delta = float(srow[v])
                        nstate = int(nrow[v])
                    else:
                        delta, nstate = 0.0, 0
                    ne2 = _PrefixEntry(
                        NEG_INF,
                        NEG_INF,
                        nstate,
                        e.boost + delta,
                        e.trace + (TraceStep(v, delta, nstate),) if want_trace else (),
                    )
                    new[newp] = ne2
                ne2.pnb = _logaddexp(ne2.pnb, contrib)

        ranked = sorted(
            new.items(),
            key=lambda kv: (-(kv[1].am + lam * kv[1].boost), -kv[1].am, kv[0]),
        )
        entries = dict(ranked[: cfg.beam_size])

    ranked = sorted(
        entries.items(),
        key=lambda kv: (-(kv[1].am + lam * kv[1].boost), -kv[1].am, kv[0]),
    )
    nbest = [
        DecodeResult(
            list(prefix),
            _text(prefix, vocab),
            e.am,
            e.boost,
            list(e.trace) if want_trace else None,
        )
        for prefix, e in ranked[: cfg.beam_size]
    ]
    return nbest[0], nbest


# ---------------------------------------------------------------------------
# Transducer


def transducer_greedy_boosted(
    step: StepModel,
    num_frames: int,
    blank_id: int,
    table: ArcTable | None = None,
    cfg: DecodeConfig | None = None,
    *,
    vocab: Vocabulary | None = None,
    want_trace: bool = False,
) -> DecodeResult:
    """Frame-synchronous greedy transducer with per-frame symbol cap."""
    cfg = cfg or DecodeConfig()
    _check_step_inputs(step, FLAVOR_TRANSDUCER, table)
    use_boost = _boost_active(table, cfg)

    tokens: list[int] = []
    trace: list[TraceStep] = []
    am = 0.0
    boost = 0.0
    state = 0
    last_tok: int | None = None
    for t in range(num_frames):
        for _ in range(cfg.max_symbols_per_frame):
            row = step.logprobs(last_tok, t)
            a = int(np.argmax(row))
            if a == blank_id:
                am += float(row[blank_id])
                break
            if use_boost:
                res = get_scores_batch(table, [state])
                srow, nrow = res.scores[0], res.next_states[0]
                chosen = _rerank(row, srow, cfg.lam, (blank_id,))
                delta = float(srow[chosen])
                next_state = int(nrow[chosen])
            else:
                chosen, delta, next_state = a, 0.0, 0
            tokens.append(chosen)
            if want_trace:
                trace.append(TraceStep(chosen, delta, next_state))
            am += float(row[chosen])
            boost += delta
            state = next_state
            last_tok = chosen
    return DecodeResult(tokens, _text(tokens, vocab), am, boost, trace if want_trace else None)


def _keep_better(pool: dict, key, cand: Hypothesis, lam: float) -> None:
    old = pool.get(key)
    if old is None:
        pool[key] = cand
        return
    cand_k = (cand.am_score + lam * cand.boost_score, cand.am_score)
    old_k = (old.am_score + lam * old.boost_score, old.am_score)
    if cand_k > old_k:
        pool[key] = cand


def _rank_key(lam: float):
    def key(h: Hypothesis):
        return (-(h.am_score + lam * h.boost_score), -h.am_score, h.tokens)

    return key


def _results(beam: list[Hypothesis], lam: float, beam_size: int, vocab, want_trace: bool):
    ranked = sorted(beam, key=_rank_key(lam))[:beam_size]
    return [
        DecodeResult(
            list(h.tokens),
            _text(h.tokens, vocab),
            h.am_score,
            h.boost_score,
            list(h.trace) if want_trace else None,
        )
        for h in ranked
    ]


def transducer_beam_boosted(
    step: StepModel,
    num_frames: int,
    blank_id: int,
    table: ArcTable | None = None,
    cfg: DecodeConfig | None = None,
    *,
    vocab: Vocabulary | None = None,
    want_trace: bool = False,
) -> tuple[DecodeResult, list[DecodeResult]]:
    """Frame-synchronous transducer beam search.

    Within a frame, hypotheses expand over blank (advance to the next
    frame, no boost) and non-blank tokens (boosted, up to the per-frame
    symbol cap, after which blank is forced). Hypotheses agreeing on
    (tokens, symbols-this-frame) merge keeping the better score; the
    beam is pruned per expansion wave and per frame by combined score.
    """
    cfg = cfg or DecodeConfig()
    _check_step_inputs(step, FLAVOR_TRANSDUCER, table)
    use_boost = _boost_active(table, cfg)
    lam = cfg.lam
    V = step.vocab_size
    cap = cfg.max_symbols_per_frame
    rank = _rank_key(lam)

    beam = [Hypothesis((), 0.0, 0.0, 0)]
    for t in range(num_frames):
        active: dict[tuple, Hypothesis] = {}
        for h in beam:
            _keep_better(active, (h.tokens, 0), h, lam)
        finished: dict[tuple, Hypothesis] = {}
        while active:
            waves = sorted(active.items(), key=lambda kv: rank(kv[1]))
            if use_boost:
                res = get_scores_batch(table, [h.tree_state for _, h in waves])
            nxt_active: dict[tuple, Hypothesis] = {}
            for i, ((toks, k), h) in enumerate(waves):
                row = step.logprobs(h.last_token, t)
                bh = replace(h, am_score=h.am_score + float(row[blank_id]))
                _keep_better(finished, bh.tokens, bh, lam)
                if k >= cap:
                    continue
                srow = res.scores[i] if use_boost else None
                nrow = res.next_states[i] if use_boost else None
                for v in range(V):
                    if v == blank_id:
                        continue
                    if use_boost:
                        delta = float(srow[v])
                        nstate = int(nrow[v])
                    else:
                        delta, nstate = 0.0, 0
                    cand = Hypothesis(
                        toks + (v,),
                        h.am_score + float(row[v]),
                        h.boost_score + delta,
                        nstate,
                        v,
                        trace=h.trace + (TraceStep(v, delta, nstate),) if want_trace else (),
                    )
                    _keep_better(nxt_active, (cand.tokens, k + 1), cand, lam)
            pruned = sorted(nxt_active.items(), key=lambda kv: rank(kv[1]))
            active = dict(pruned[: cfg.beam_size])
        beam = sorted(finished.values(), key=rank)[: cfg.beam_size]

    nbest = _results(beam, lam, cfg.beam_size, vocab, want_trace)
    return nbest[0], nbest


# ---------------------------------------------------------------------------
# Attention encoder-decoder


def aed_beam_boosted(
    step: StepModel,
    table: ArcTable | None = None,
    cfg: DecodeConfig | None = None,
    *,
    max_len: int,
    vocab: Vocabulary | None = None,
    want_trace: bool = False,
) -> tuple[DecodeResult, list[DecodeResult]]:
    """Label-synchronous beam search with the eos anti-suppression bump.

    Non-eos expansions are boosted as usual. The eos expansion scores
    the model's eos log-prob plus, when the bump is enabled, the clamped
    best tree score from the current state and the state's final score
    if a phrase was just completed (both folded into boost_score).
    Hypotheses that take eos stop expanding; hypotheses reaching max_len
    stop as-is.
    """
    cfg = cfg or DecodeConfig()
    _check_step_inputs(step, FLAVOR_AED, table)
    if step.eos_id is None:
        raise ValueError("AED decoding needs step.eos_id")
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    use_boost = _boost_active(table, cfg)
    lam = cfg.lam
    eos = step.eos_id
    V = step.vocab_size
    rank = _rank_key(lam)

    beam = [Hypothesis((), 0.0, 0.0, 0)]
    while True:
        active = [h for h in beam if not h.ended and len(h.tokens) < max_len]
        if not active:
            break
        cands = [h for h in beam if h.ended or len(h.tokens) >= max_len]
        if use_boost:
            res = get_scores_batch(table, [h.tree_state for h in active])
        for i, h in enumerate(active):
            row = step.logprobs(h.tokens, len(h.tokens))
            srow = res.scores[i] if use_boost else None
            nrow = res.next_states[i] if use_boost else None
            for v in range(V):
                lv = float(row[v])
                if v == eos:
                    bump = 0.0
                    if use_boost and cfg.eos_bump_enabled:
                        best = float(srow.max())
                        bump = best if best > 0.0 else 0.0
                        if bool(table.is_final[h.tree_state]):
                            bump += float(table.final_score[h.tree_state])
                    cands.append(
                        Hypothesis(
                            h.tokens,
                            h.am_score + lv,
                            h.boost_score + bump,
                            h.tree_state,
                            h.last_token,
                            ended=True,
                            trace=h.trace + (TraceStep(eos, bump, h.tree_state),)
                            if want_trace
                            else (),
                        )
                    )
                else:
                    if use_boost:
                        delta = float(srow[v])
                        nstate = int(nrow[v])
                    else:
                        delta, nstate = 0.0, 0
                    cands.append(
                        Hypothesis(
                            h.tokens + (v,),
                            h.am_score + lv,
                            h.boost_score + delta,
                            nstate,
                            v,
                            trace=h.trace + (TraceStep(v, delta, nstate),)
                            if want_trace
                            else (),
                        )
                    )
        beam = sorted(cands, key=rank)[: cfg.beam_size]

    nbest = _results(beam, lam, cfg.beam_size, vocab, want_trace)
    return nbest[0], nbest
