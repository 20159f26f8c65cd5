"""Phrase-boosting context biasing for CTC, transducer, and AED decoding.

Pipeline: load a vocabulary and context list, build the weighted prefix
tree, compile it into a flat arc table, then decode with any of the
shallow-fusion decoders. The batched scorer and the greedy CTC loop run
on a compiled extension when available (see phraseboost._backend).
"""

from ._backend import backend_name, compiled_active
from .acoustic import (
    EmissionMatrix,
    EmissionStepModel,
    StepModel,
    TableStepModel,
    load_emissions,
    save_emissions,
    save_step_model,
    synth_ctc_emissions,
    table_step_model,
)
from .context import (
    ContextList,
    Phrase,
    Vocabulary,
    context_list_from_texts,
    detokenize,
    load_context_list,
    load_vocabulary,
    save_context_list,
    tokenize,
)
from .decoding import (
    DecodeConfig,
    DecodeResult,
    Hypothesis,
    TraceStep,
    aed_beam_boosted,
    ctc_beam_boosted,
    ctc_greedy_boosted,
    transducer_beam_boosted,
    transducer_greedy_boosted,
)
from .errors import (
    BenchError,
    EmissionFormatError,
    PhraseBoostError,
    StepModelError,
    TableFormatError,
    TokenizationError,
    VocabularyError,
)
from .evaluation import (
    BenchResult,
    EvalReport,
    bench,
    corpus_wer,
    evaluate_corpus,
    keyphrase_prf,
    rtfx,
    wer,
)
from .table import (
    ArcTable,
    ScoreQueryResult,
    compile_arc_table,
    get_scores_batch,
    load_table,
    naive_score,
    save_table,
    state_strings,
)
from .tree import PrefixTree, TreeNode, TreeParams, arc_score, build_prefix_tree, compute_fail_links

__version__ = "0.1.0"

__all__ = [
    "ArcTable",
    "BenchError",
    "BenchResult",
    "ContextList",
    "DecodeConfig",
    "DecodeResult",
    "EmissionFormatError",
    "EmissionMatrix",
    "EmissionStepModel",
    "EvalReport",
    "Hypothesis",
    "Phrase",
    "PhraseBoostError",
    "PrefixTree",
    "ScoreQueryResult",
    "StepModel",
    "StepModelError",
    "TableFormatError",
    "TableStepModel",
    "TokenizationError",
    "TraceStep",
    "TreeNode",
    "TreeParams",
    "Vocabulary",
    "VocabularyError",
    "aed_beam_boosted",
    "arc_score",
    "backend_name",
    "bench",
    "build_prefix_tree",
    "compile_arc_table",
    "compiled_active",
    "compute_fail_links",
    "context_list_from_texts",
    "corpus_wer",
    "ctc_beam_boosted",
    "ctc_greedy_boosted",
    "detokenize",
    "evaluate_corpus",
    "get_scores_batch",
    "keyphrase_prf",
    "load_context_list",
    "load_emissions",
    "load_table",
    "load_vocabulary",
    "naive_score",
    "rtfx",
    "save_context_list",
    "save_emissions",
    "save_step_model",
    "save_table",
    "state_strings",
    "synth_ctc_emissions",
    "table_step_model",
    "tokenize",
    "transducer_beam_boosted",
    "transducer_greedy_boosted",
    "wer",
]
