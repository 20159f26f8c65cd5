import numpy as np
import pytest

from phraseboost.context import ContextList, Phrase, Vocabulary, context_list_from_texts
from phraseboost.table import compile_arc_table
from phraseboost.tree import TreeParams, build_prefix_tree, compute_fail_links

LETTERS = "abcdefghijklmnopqrstuvwxyz"


@pytest.fixture
def letters_vocab() -> Vocabulary:
    # blank at id 0, then a-z, then space
    return Vocabulary(tokens=("<b>",) + tuple(LETTERS) + (" ",), blank_id=0)


@pytest.fixture
def fig_words() -> list[str]:
    return ["cat", "cats", "csv", "sit"]


@pytest.fixture
def fig_tree(letters_vocab, fig_words):
    ctx = context_list_from_texts(fig_words, letters_vocab)
    return compute_fail_links(build_prefix_tree(ctx, TreeParams(), letters_vocab.size))


@pytest.fixture
def fig_table(fig_tree):
    return compile_arc_table(fig_tree, unk_score=0.0)


def node_ids_by_string(tree, vocab):
    return {tree.node_string(n.id, vocab): n.id for n in tree.nodes}


def build_table_for(texts, vocab, params=None, unk=0.0, min_chars=0, mode="char"):
    ctx = context_list_from_texts(texts, vocab, mode=mode, min_chars=min_chars)
    tree = compute_fail_links(build_prefix_tree(ctx, params or TreeParams(), vocab.size))
    return tree, compile_arc_table(tree, unk_score=unk)


def random_phrase_set(rng, max_phrases=50, max_len=8, vocab_size=64):
    n = int(rng.integers(1, max_phrases + 1))
    phrases = set()
    for _ in range(n):
        length = int(rng.integers(1, max_len + 1))
        phrases.add(tuple(int(x) for x in rng.integers(0, vocab_size, size=length)))
    return sorted(phrases)


def random_tree(rng, max_phrases=50, max_len=8, max_vocab=64, params=None):
    vocab_size = int(rng.integers(4, max_vocab + 1))
    ids = random_phrase_set(rng, max_phrases, max_len, vocab_size)
    ctx = ContextList(
        phrases=[Phrase(text=" ".join(map(str, p)), token_ids=p) for p in ids],
        min_chars=0,
    )
    if params is None:
        params = TreeParams(
            c0=float(rng.uniform(0.1, 2.0)),
            beta=float(rng.uniform(0.0, 3.0)),
        )
    tree = build_prefix_tree(ctx, params, vocab_size)
    return compute_fail_links(tree), vocab_size


def brute_force_fail_links(tree):
    """Exhaustive longest-proper-suffix search, independent of the BFS build."""
    strings = {}
    for node in tree.nodes:
        ids = []
        cur = node
        while cur.parent >= 0:
            ids.append(cur.in_token)
            cur = tree.nodes[cur.parent]
        strings[node.id] = tuple(reversed(ids))
    by_string = {s: nid for nid, s in strings.items()}
    fails = {}
    for nid, s in strings.items():
        fail = 0
        for k in range(1, len(s)):
            hit = by_string.get(s[k:])
            if hit is not None:
                fail = hit
                break
        fails[nid] = fail
    return fails


def log_softmax(logits: np.ndarray) -> np.ndarray:
    x = np.asarray(logits, dtype=np.float64)
    m = x.max(axis=-1, keepdims=True)
    return x - (m + np.log(np.exp(x - m).sum(axis=-1, keepdims=True)))


def ref_ctc_greedy(lp, blank):
    """Plain argmax-collapse greedy, written independently of the decoder."""
    raw = lp.argmax(axis=1)
    out = []
    prev = -1
    am = 0.0
    for t in range(lp.shape[0]):
        s = int(raw[t])
        if s != blank and s != prev:
            out.append(s)
        prev = s
        am += float(lp[t, s])
    return out, am


def brute_force_ctc(lp, blank):
    """Exact posterior over collapsed label sequences by path enumeration."""
    import itertools
    import math

    T, V = lp.shape
    totals = {}
    neg_inf = float("-inf")
    for path in itertools.product(range(V), repeat=T):
        out = []
        prev = -1
        for s in path:
            if s != blank and s != prev:
                out.append(s)
            prev = s
        key = tuple(out)
        score = 0.0
        for t, s in enumerate(path):
            score += float(lp[t, s])
        old = totals.get(key, neg_inf)
        if old == neg_inf:
            totals[key] = score
        else:
            m = max(old, score)
            totals[key] = m + math.log(math.exp(old - m) + math.exp(score - m))
    best = max(totals.items(), key=lambda kv: (kv[1], [-x for x in kv[0]]))
    return best, totals


def random_emissions(rng, T, V, blank_id=0, scale=2.0):
    from phraseboost.acoustic import EmissionMatrix

    rows = log_softmax(rng.normal(0.0, scale, size=(T, V))).astype(np.float32)
    return EmissionMatrix(logprobs=rows, blank_id=blank_id)
