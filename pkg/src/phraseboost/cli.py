"""Command-line surface: build-tree, decode, evaluate, bench.

Machine-readable JSON goes to stdout (or --out), human summaries to
stderr. Exit codes: 0 success, 2 on input/usage errors, 1 on internal
errors. All subcommands are deterministic for fixed inputs; --seed is
accepted for pipelines that script around this CLI.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .acoustic import (
    DEFAULT_FRAME_DURATION,
    EmissionStepModel,
    load_emissions,
    table_step_model,
)
from .context import (
    DEFAULT_MIN_CHARS,
    load_context_list,
    load_vocabulary,
    read_phrase_texts,
)
from .decoding import (
    DEFAULT_BEAM_AED,
    DEFAULT_BEAM_CTC,
    DEFAULT_BEAM_TRANSDUCER,
    DecodeConfig,
    aed_beam_boosted,
    ctc_beam_boosted,
    ctc_greedy_boosted,
    transducer_beam_boosted,
    transducer_greedy_boosted,
)
from .errors import PhraseBoostError
from .evaluation import bench, evaluate_corpus
from .table import compile_arc_table, load_table, save_table, state_strings
from .tree import TreeParams, build_prefix_tree, compute_fail_links

DECODE_MODES = ("ctc-greedy", "ctc-beam", "rnnt-greedy", "rnnt-beam", "aed-beam")


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _info(msg: str) -> None:
    print(msg, file=sys.stderr)


def _add_tree_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--c0", type=float, default=1.0, help="context score of depth-1 arcs (default 1.0)")
    p.add_argument("--beta", type=float, default=2.0, help="depth scaling parameter (default 2.0)")
    p.add_argument(
        "--weight-mode",
        choices=("depth_scaled", "uniform"),
        default="depth_scaled",
        help="arc weight distribution (default depth_scaled)",
    )
    p.add_argument(
        "--final-bonus",
        type=float,
        default=0.0,
        help="uniform mode: extra score on the arc entering each final node (default 0.0)",
    )
    p.add_argument("--unk-score", type=float, default=0.0, help="root unknown-token score (default 0.0)")


def _add_decode_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--table", help="compiled boost table (omit to decode without boosting)")
    p.add_argument(
        "--lambda", dest="lam", type=float, default=1.0, help="shallow fusion weight (default 1.0)"
    )
    p.add_argument(
        "--beam",
        type=int,
        default=None,
        help=f"beam size (default {DEFAULT_BEAM_CTC} for ctc/rnnt beam, {DEFAULT_BEAM_AED} for aed)",
    )
    p.add_argument(
        "--max-symbols",
        type=int,
        default=5,
        help="transducer: max symbols per frame (default 5)",
    )
    p.add_argument("--no-eos-bump", action="store_true", help="aed: disable the eos score bump")
    p.add_argument("--max-len", type=int, default=None, help="aed: maximum output length (required)")
    p.add_argument("--trace", action="store_true", help="emit per-token trace (token, boost, state)")
    p.add_argument(
        "--workers",
        type=int,
        default=0,
        help="parallel utterance decoding (default: number of cores)",
    )
    p.add_argument("--seed", type=int, default=0, help="seed for scripted pipelines (decoding is deterministic)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phraseboost",
        description="Phrase-boosting context biasing: build boost tables, decode, evaluate, benchmark.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build-tree", help="compile a context list into a boost table file")
    b.add_argument("--vocab", required=True, help="vocabulary file, one token per line")
    b.add_argument("--context", required=True, help="context list, one phrase per line")
    b.add_argument("--out", required=True, help="output table path (GPB1 format)")
    b.add_argument("--mode", choices=("char", "ids"), default="char", help="tokenization mode")
    b.add_argument(
        "--min-chars",
        type=int,
        default=DEFAULT_MIN_CHARS,
        help=f"drop phrases shorter than this many characters (default {DEFAULT_MIN_CHARS})",
    )
    _add_tree_flags(b)

    d = sub.add_parser("decode", help="decode emission files or step-model specs")
    d.add_argument("--mode", choices=DECODE_MODES, required=True)
    d.add_argument("--vocab", required=True)
    d.add_argument("--blank", default=None, help="blank symbol (required for ctc/rnnt modes)")
    d.add_argument("--eos", default=None, help="eos symbol (aed mode)")
    d.add_argument("--emissions", nargs="+", default=None, help="TBT1 emission files")
    d.add_argument("--manifest", default=None, help="JSON-lines manifest {id, emissions}")
    d.add_argument("--step-spec", default=None, help="step-model JSON spec (rnnt/aed)")
    d.add_argument("--frames", type=int, default=None, help="frame count when using --step-spec (rnnt)")
    d.add_argument(
        "--frame-duration",
        type=float,
        default=DEFAULT_FRAME_DURATION,
        help=f"seconds per frame (default {DEFAULT_FRAME_DURATION})",
    )
    d.add_argument("--out", default=None, help="output JSON-lines path (default stdout)")
    _add_decode_flags(d)

    e = sub.add_parser("evaluate", help="score hypotheses against references")
    e.add_argument("--refs", required=True, help="JSON-lines {id, text}")
    e.add_argument("--hyps", required=True, help="JSON-lines {id, text}")
    e.add_argument("--context", default=None, help="context list for keyphrase P/R/F")
    e.add_argument("--min-chars", type=int, default=DEFAULT_MIN_CHARS)
    e.add_argument("--case-sensitive", action="store_true", help="disable case-insensitive matching")
    e.add_argument("--out", default=None, help="report JSON path (default stdout)")

    n = sub.add_parser("bench", help="timing protocol: warm-up runs, then timed runs")
    n.add_argument("--mode", choices=DECODE_MODES, required=True)
    n.add_argument("--vocab", required=True)
    n.add_argument("--blank", default=None)
    n.add_argument("--eos", default=None)
    n.add_argument("--emissions", nargs="+", default=None)
    n.add_argument("--manifest", default=None)
    n.add_argument("--step-spec", default=None)
    n.add_argument("--frames", type=int, default=None)
    n.add_argument("--frame-duration", type=float, default=DEFAULT_FRAME_DURATION)
    n.add_argument("--runs", type=int, default=3, help="timed runs (default 3)")
    n.add_argument("--warmup", type=int, default=1, help="discarded warm-up runs (default 1)")
    n.add_argument("--out", default=None)
    _add_decode_flags(n)

    return parser


def _load_utterances(args, parser, blank_id):
    """Resolve --emissions/--manifest into [(id, EmissionMatrix)]."""
    utts = []
    if args.manifest:
        with open(args.manifest, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                if "id" not in row or "emissions" not in row:
                    raise PhraseBoostError(f"{args.manifest}:{lineno}: need id and emissions keys")
                em = load_emissions(
                    row["emissions"], blank_id=blank_id, frame_duration=args.frame_duration
                )
                utts.append((str(row["id"]), em))
    elif args.emissions:
        for path in args.emissions:
            em = load_emissions(path, blank_id=blank_id, frame_duration=args.frame_duration)
            utts.append((Path(path).stem, em))
    return utts


def _decode_one(mode, em, step, frames, blank_id, table, cfg, vocab, max_len, want_trace):
    if mode == "ctc-greedy":
        return ctc_greedy_boosted(em, table, cfg, vocab=vocab, want_trace=want_trace)
    if mode == "ctc-beam":
        best, _ = ctc_beam_boosted(em, table, cfg, vocab=vocab, want_trace=want_trace)
        return best
    if mode == "rnnt-greedy":
        return transducer_greedy_boosted(
            step, frames, blank_id, table, cfg, vocab=vocab, want_trace=want_trace
        )
    if mode == "rnnt-beam":
        best, _ = transducer_beam_boosted(
            step, frames, blank_id, table, cfg, vocab=vocab, want_trace=want_trace
        )
        return best
    best, _ = aed_beam_boosted(step, table, cfg, max_len=max_len, vocab=vocab, want_trace=want_trace)
    return best


def _run_decode_jobs(args, parser):
    """Shared by decode and bench: returns (jobs, decode_all, audio_seconds).

    jobs is [(id, callable)], decode_all runs them all honoring --workers.
    """
    if sum(bool(x) for x in (args.manifest, args.emissions, args.step_spec)) > 1:
        parser.error("--manifest, --emissions, and --step-spec are mutually exclusive")
    needs_blank = args.mode.startswith(("ctc", "rnnt"))
    if needs_blank and not args.blank:
        parser.error(f"--blank is required for mode {args.mode}")
    if args.mode == "aed-beam":
        if not args.eos:
            parser.error("--eos is required for mode aed-beam")
        if args.max_len is None:
            parser.error("--max-len is required for mode aed-beam")
        if not args.step_spec:
            parser.error("--step-spec is required for mode aed-beam")

    vocab = load_vocabulary(args.vocab, blank_symbol=args.blank, eos_symbol=args.eos)
    table = load_table(args.table) if args.table else None
    if args.beam is not None:
        beam = args.beam
    elif args.mode == "aed-beam":
        beam = DEFAULT_BEAM_AED
    elif args.mode.startswith("rnnt"):
        beam = DEFAULT_BEAM_TRANSDUCER
    else:
        beam = DEFAULT_BEAM_CTC
    cfg = DecodeConfig(
        lam=args.lam,
        beam_size=beam,
        max_symbols_per_frame=args.max_symbols,
        eos_bump_enabled=not args.no_eos_bump,
        boost_enabled=table is not None,
    )

    jobs = []
    audio_seconds = 0.0
    if args.mode == "aed-beam":
        step = table_step_model(args.step_spec)
        if step.eos_id != vocab.eos_id:
            raise PhraseBoostError(
                f"step-spec eos_id {step.eos_id} != vocabulary eos id {vocab.eos_id}"
            )
        uid = Path(args.step_spec).stem
        jobs.append(
            (uid, lambda: _decode_one(args.mode, None, step, None, None, table, cfg, vocab, args.max_len, args.trace))
        )
    elif args.step_spec:
        if args.frames is None:
            parser.error("--frames is required with --step-spec for rnnt modes")
        step = table_step_model(args.step_spec)
        uid = Path(args.step_spec).stem
        audio_seconds = args.frames * args.frame_duration
        jobs.append(
            (
                uid,
                lambda: _decode_one(
                    args.mode, None, step, args.frames, vocab.blank_id, table, cfg, vocab, None, args.trace
                ),
            )
        )
    else:
        utts = _load_utterances(args, parser, vocab.blank_id)
        if not utts:
            parser.error("no inputs: pass --emissions, --manifest, or --step-spec")
        for uid, em in utts:
            audio_seconds += em.duration_seconds
            if args.mode.startswith("rnnt"):
                step = EmissionStepModel(em)
                frames = em.num_frames
                jobs.append(
                    (
                        uid,
                        lambda step=step, frames=frames: _decode_one(
                            args.mode, None, step, frames, vocab.blank_id, table, cfg, vocab, None, args.trace
                        ),
                    )
                )
            else:
                jobs.append(
                    (
                        uid,
                        lambda em=em: _decode_one(
                            args.mode, em, None, None, None, table, cfg, vocab, None, args.trace
                        ),
                    )
                )

    workers = args.workers if args.workers > 0 else (os.cpu_count() or 1)
    state_labels = state_strings(table, vocab) if (table is not None and args.trace) else None

    def decode_all():
        if workers == 1 or len(jobs) == 1:
            return [fn() for _, fn in jobs]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(fn) for _, fn in jobs]
            return [f.result() for f in futures]

    return jobs, decode_all, audio_seconds, state_labels


def _result_row(uid, result, state_labels):
    row = {
        "id": uid,
        "text": result.text,
        "tokens": result.tokens,
        "am_score": result.am_score,
        "boost_score": result.boost_score,
    }
    if result.trace is not None:
        row["trace"] = [
            [s.token, s.boost, state_labels[s.state] if state_labels else str(s.state)]
            for s in result.trace
        ]
    return row


def _write_lines(lines, out_path):
    text = "".join(line + "\n" for line in lines)
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_build_tree(args, parser) -> int:
    vocab = load_vocabulary(args.vocab)
    ctx = load_context_list(args.context, vocab, mode=args.mode, min_chars=args.min_chars)
    texts, _ = read_phrase_texts(args.context)
    dropped = len(texts) - len(ctx)
    if dropped:
        _info(f"warning: dropped {dropped} phrase(s) (short or duplicate)")
    if not ctx.phrases:
        _info("warning: empty context list; the table will boost nothing")
    params = TreeParams(
        c0=args.c0,
        beta=args.beta,
        weight_mode=args.weight_mode,
        uniform_final_bonus=args.final_bonus,
    )
    tree = compute_fail_links(build_prefix_tree(ctx, params, vocab.size))
    table = compile_arc_table(tree, unk_score=args.unk_score)
    save_table(table, args.out)
    _info(
        f"wrote {args.out}: states={table.num_states} arcs={table.num_arcs}"
        f" finals={int(table.is_final.sum())} max_depth={tree.max_depth}"
    )
    return 0


def cmd_decode(args, parser) -> int:
    jobs, decode_all, _, state_labels = _run_decode_jobs(args, parser)
    results = decode_all()
    lines = [
        json.dumps(_result_row(uid, res, state_labels))
        for (uid, _), res in zip(jobs, results)
    ]
    _write_lines(lines, args.out)
    return 0


def _read_jsonl_texts(path):
    rows = {}
    order = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if "id" not in row or "text" not in row:
                raise PhraseBoostError(f"{path}:{lineno}: need id and text keys")
            uid = str(row["id"])
            if uid in rows:
                raise PhraseBoostError(f"{path}:{lineno}: duplicate id {uid!r}")
            rows[uid] = str(row["text"])
            order.append(uid)
    return rows, order


def cmd_evaluate(args, parser) -> int:
    refs, ref_order = _read_jsonl_texts(args.refs)
    hyps, _ = _read_jsonl_texts(args.hyps)
    if set(refs) != set(hyps):
        missing = sorted(set(refs) ^ set(hyps))[:5]
        raise PhraseBoostError(
            f"refs and hyps do not cover the same utterance ids (e.g. {missing})"
        )
    phrases: list[str] = []
    if args.context:
        texts, _ = read_phrase_texts(args.context)
        phrases = [t for t in texts if len(t) >= args.min_chars]
    report = evaluate_corpus(
        [refs[u] for u in ref_order],
        [hyps[u] for u in ref_order],
        phrases,
        case_insensitive=not args.case_sensitive,
    )
    _write_lines([json.dumps(report.to_dict())], args.out)
    _info(
        f"F-score (P/R): {report.fscore:.1f} ({report.precision:.0f}/{report.recall:.0f})"
        f"   WER: {report.wer:.2f}%   [utts={len(ref_order)}, phrases={len(report.per_phrase)}]"
    )
    shown = [p for p, h in report.per_phrase.items() if h.ref or h.hyp]
    if shown:
        _info(f"{'phrase':<24}{'ref':>5}{'hyp':>5}{'TP':>5}{'FP':>5}{'FN':>5}")
        for p in shown:
            h = report.per_phrase[p]
            _info(f"{p:<24}{h.ref:>5}{h.hyp:>5}{h.tp:>5}{h.fp:>5}{h.fn:>5}")
    return 0


def cmd_bench(args, parser) -> int:
    _, decode_all, audio_seconds, _ = _run_decode_jobs(args, parser)
    result = bench(
        decode_all,
        runs=args.runs,
        warmup=args.warmup,
        audio_seconds=audio_seconds if audio_seconds > 0 else None,
    )
    row = {
        "runs": args.runs,
        "warmup": args.warmup,
        "times": result.times,
        "mean_seconds": result.mean_seconds,
        "audio_seconds": audio_seconds,
        "rtfx": result.rtfx,
    }
    _write_lines([json.dumps(row)], args.out)
    if result.rtfx is not None:
        _info(f"RTFx: {result.rtfx:.1f} (mean {result.mean_seconds * 1000:.1f} ms over {args.runs} runs)")
    else:
        _info(f"mean {result.mean_seconds * 1000:.1f} ms over {args.runs} runs")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "build-tree": cmd_build_tree,
        "decode": cmd_decode,
        "evaluate": cmd_evaluate,
        "bench": cmd_bench,
    }
    try:
        return handlers[args.command](args, parser)
    except (PhraseBoostError, FileNotFoundError, IsADirectoryError, ValueError, json.JSONDecodeError) as exc:
        _err(str(exc))
        return 2
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
