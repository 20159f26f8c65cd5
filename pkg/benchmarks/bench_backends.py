"""Compare the compiled kernels against the pure-NumPy fallback.

Times the two hot paths on a randomly generated phrase table:

  * get_scores_batch over a B x V grid (the per-step query all decoders
    make), and
  * boosted greedy CTC over a synthetic corpus (the fused decode loop).

Usage:
    python benchmarks/bench_backends.py [--phrases 2000] [--vocab-size 1024]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from phraseboost import _backend
from phraseboost.acoustic import synth_ctc_emissions
from phraseboost.context import ContextList, Phrase, Vocabulary
from phraseboost.decoding import DecodeConfig, ctc_greedy_boosted
from phraseboost.table import compile_arc_table, get_scores_batch
from phraseboost.tree import TreeParams, build_prefix_tree, compute_fail_links


def build_random_table(rng, n_phrases, vocab_size):
    phrases = set()
    while len(phrases) < n_phrases:
        length = sum(int(rng.integers(2, 7)) for _ in range(int(rng.integers(1, 4))))
        phrases.add(tuple(int(x) for x in rng.integers(1, vocab_size, size=length)))
    ctx = ContextList(
        phrases=[Phrase(" ".join(map(str, p)), p) for p in sorted(phrases)], min_chars=0
    )
    tree = compute_fail_links(build_prefix_tree(ctx, TreeParams(), vocab_size))
    return compile_arc_table(tree, unk_score=0.0)


def time_best_of(fn, repeats=5):
    fn()
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--phrases", type=int, default=2000)
    parser.add_argument("--vocab-size", type=int, default=1024)
    parser.add_argument("--batch", type=int, default=32)
    parser.add_argument("--calls", type=int, default=200)
    parser.add_argument("--utterances", type=int, default=4)
    parser.add_argument("--targets-per-utt", type=int, default=300)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if not _backend.HAVE_COMPILED:
        print("compiled extension not built; run `python setup.py build_ext --inplace` first")

    rng = np.random.default_rng(args.seed)
    table = build_random_table(rng, args.phrases, args.vocab_size)
    states = rng.integers(0, table.num_states, size=(args.calls, args.batch)).astype(np.int32)

    vocab = Vocabulary(tokens=tuple(f"t{i}" for i in range(args.vocab_size)), blank_id=0)
    ems = [
        synth_ctc_emissions(
            [int(x) for x in rng.integers(1, args.vocab_size, size=args.targets_per_utt)],
            vocab,
            margin=0.5,
            seed=int(rng.integers(2**31)),
            boost_positions=[],
            blanks_between=3,
        )
        for _ in range(args.utterances)
    ]
    frames = sum(em.num_frames for em in ems)
    print(
        f"table: {table.num_states} states, {table.num_arcs} arcs, V={table.vocab_size}; "
        f"corpus: {len(ems)} utts, {frames} frames"
    )

    backends = ["python"] + (["compiled"] if _backend.HAVE_COMPILED else [])
    cfg = DecodeConfig(lam=1.0)
    score_times = {}
    decode_times = {}
    reference = {}
    for name in backends:
        with _backend.forced_backend(name):
            score_times[name] = time_best_of(
                lambda: [get_scores_batch(table, states[i]) for i in range(args.calls)]
            )
            decode_times[name] = time_best_of(
                lambda: [ctc_greedy_boosted(em, table, cfg) for em in ems], repeats=3
            )
            reference[name] = [ctc_greedy_boosted(em, table, cfg).tokens for em in ems]

    if len(backends) == 2:
        assert reference["python"] == reference["compiled"], "backend outputs diverged"

    print(f"\n{'path':<28}{'python':>12}{'compiled':>12}{'speedup':>10}")
    for label, times, per in (
        (f"get_scores_batch (B={args.batch})", score_times, args.calls),
        ("boosted greedy CTC decode", decode_times, 1),
    ):
        py = times["python"] / per
        row = f"{label:<28}{py * 1e6:>10.1f}us"
        if "compiled" in times:
            cy = times["compiled"] / per
            row += f"{cy * 1e6:>10.1f}us{py / cy:>9.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
