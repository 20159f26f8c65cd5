"""Keyphrase F-score, WER, and RTFx benchmarking.

Keyphrase matching is contiguous word-subsequence matching on
whitespace-split words, case-insensitive by default ("cat" does not
match "cats"). Per utterance and phrase, hits clip at the reference
count: TP += min(ref, hyp), FP += max(hyp - ref, 0), FN += max(ref -
hyp, 0), aggregated over the corpus. Precision, recall, and F-score are
percentages; F is the harmonic mean (0 when P + R == 0).

RTFx is total audio duration divided by decode wall time. bench() times
a callable after discarding warm-up runs and insists the output is
identical across runs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .context import ContextList
from .errors import BenchError


@dataclass
class PhraseHits:
    ref: int = 0
    hyp: int = 0
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass
class EvalReport:
    precision: float
    recall: float
    fscore: float
    wer: float
    per_phrase: dict[str, PhraseHits] = field(default_factory=dict)
    rtfx: float | None = None

    def to_dict(self) -> dict:
        out = {
            "precision": self.precision,
            "recall": self.recall,
            "fscore": self.fscore,
            "wer": self.wer,
            "per_phrase": {
                p: {"ref": h.ref, "hyp": h.hyp, "tp": h.tp, "fp": h.fp, "fn": h.fn}
                for p, h in self.per_phrase.items()
            },
        }
        if self.rtfx is not None:
            out["rtfx"] = self.rtfx
        return out


def edit_distance(ref: Sequence, hyp: Sequence) -> int:
    """Levenshtein distance with unit substitution/insertion/deletion costs."""
    if len(ref) < len(hyp):
        ref, hyp = hyp, ref
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, start=1):
        cur = [i]
        for j, h in enumerate(hyp, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h)))
        prev = cur
    return prev[-1]


def wer(ref: Sequence[str], hyp: Sequence[str]) -> float:
    """Word error rate in percent: edits / len(ref) * 100."""
    if not ref:
        raise ValueError("empty reference")
    return edit_distance(list(ref), list(hyp)) / len(ref) * 100.0


def corpus_wer(refs: Sequence[Sequence[str]], hyps: Sequence[Sequence[str]]) -> float:
    """Overall WER: total edits over total reference words, in percent."""
    if len(refs) != len(hyps):
        raise ValueError(f"got {len(refs)} references but {len(hyps)} hypotheses")
    total_words = sum(len(r) for r in refs)
    if total_words == 0:
        raise ValueError("empty reference corpus")
    total_edits = sum(edit_distance(list(r), list(h)) for r, h in zip(refs, hyps))
    return total_edits / total_words * 100.0


def count_occurrences(words: Sequence[str], phrase: Sequence[str]) -> int:
    """Occurrences of `phrase` as a contiguous word subsequence."""
    n, m = len(words), len(phrase)
    if m == 0 or m > n:
        return 0
    phrase = tuple(phrase)
    return sum(1 for i in range(n - m + 1) if tuple(words[i : i + m]) == phrase)


def _phrase_words(phrases, case_insensitive: bool) -> dict[str, tuple[str, ...]]:
    texts = phrases.texts if isinstance(phrases, ContextList) else list(phrases)
    out: dict[str, tuple[str, ...]] = {}
    for text in texts:
        key = text.lower() if case_insensitive else text
        words = tuple(key.split())
        if words and key not in out:
            out[key] = words
    return out


def keyphrase_hits(
    refs: Sequence[Sequence[str]],
    hyps: Sequence[Sequence[str]],
    phrases,
    case_insensitive: bool = True,
) -> dict[str, PhraseHits]:
    """Clipped per-phrase hit counts aggregated over aligned utterances."""
    if len(refs) != len(hyps):
        raise ValueError(f"got {len(refs)} references but {len(hyps)} hypotheses")
    table = _phrase_words(phrases, case_insensitive)
    hits = {p: PhraseHits() for p in table}
    for ref, hyp in zip(refs, hyps):
        if case_insensitive:
            ref = [w.lower() for w in ref]
            hyp = [w.lower() for w in hyp]
        for p, words in table.items():
            c_ref = count_occurrences(ref, words)
            c_hyp = count_occurrences(hyp, words)
            h = hits[p]
            h.ref += c_ref
            h.hyp += c_hyp
            h.tp += min(c_ref, c_hyp)
            h.fp += max(c_hyp - c_ref, 0)
            h.fn += max(c_ref - c_hyp, 0)
    return hits


def prf_from_hits(hits: dict[str, PhraseHits]) -> tuple[float, float, float]:
    tp = sum(h.tp for h in hits.values())
    fp = sum(h.fp for h in hits.values())
    fn = sum(h.fn for h in hits.values())
    precision = tp / (tp + fp) * 100.0 if tp + fp else 0.0
    recall = tp / (tp + fn) * 100.0 if tp + fn else 0.0
    fscore = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, fscore


def keyphrase_prf(
    refs: Sequence[Sequence[str]],
    hyps: Sequence[Sequence[str]],
    phrases,
    case_insensitive: bool = True,
) -> tuple[float, float, float]:
    """(precision %, recall %, F-score %) for the phrase list."""
    return prf_from_hits(keyphrase_hits(refs, hyps, phrases, case_insensitive))


def evaluate_corpus(
    ref_texts: Sequence[str],
    hyp_texts: Sequence[str],
    phrases=(),
    case_insensitive: bool = True,
    rtfx_value: float | None = None,
) -> EvalReport:
    """Full report (WER + keyphrase P/R/F) over aligned utterance texts."""
    refs = [t.split() for t in ref_texts]
    hyps = [t.split() for t in hyp_texts]
    hits = keyphrase_hits(refs, hyps, phrases, case_insensitive)
    precision, recall, fscore = prf_from_hits(hits)
    return EvalReport(
        precision=precision,
        recall=recall,
        fscore=fscore,
        wer=corpus_wer(refs, hyps),
        per_phrase=hits,
        rtfx=rtfx_value,
    )


def rtfx(total_audio_seconds: float, wall_seconds: float) -> float:
    """Inverse real-time factor; higher is faster."""
    if wall_seconds <= 0:
        raise ValueError(f"wall_seconds must be > 0, got {wall_seconds}")
    return total_audio_seconds / wall_seconds


def _outputs_equal(a, b) -> bool:
    eq = a == b
    if isinstance(eq, bool):
        return eq
    import numpy as np

    return bool(np.all(eq))


@dataclass
class BenchResult:
    times: list[float]
    mean_seconds: float
    rtfx: float | None
    output: object


def bench(
    fn: Callable[[], object],
    *,
    runs: int = 3,
    warmup: int = 1,
    audio_seconds: float | None = None,
) -> BenchResult:
    """Time `fn` after `warmup` discarded runs; asserts determinism.

    The decoder must return the same output on every run; a mismatch or
    an exception aborts with the timings collected so far attached.
    """
    if runs < 1:
        raise ValueError(f"runs must be >= 1, got {runs}")
    if warmup < 0:
        raise ValueError(f"warmup must be >= 0, got {warmup}")
    times: list[float] = []
    reference = None
    try:
        for _ in range(warmup):
            reference = fn()
        for i in range(runs):
            t0 = time.perf_counter()
            out = fn()
            times.append(time.perf_counter() - t0)
            if reference is None:
                reference = out
            elif not _outputs_equal(out, reference):
                raise BenchError(f"non-deterministic output on run {i + 1}", times=times)
    except BenchError:
        raise
    except Exception as exc:
        raise BenchError(f"decoder failed: {exc}", times=times) from exc
    mean = sum(times) / len(times)
    ratio = rtfx(audio_seconds, mean) if audio_seconds is not None else None
    return BenchResult(times=times, mean_seconds=mean, rtfx=ratio, output=reference)
