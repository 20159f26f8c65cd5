import pytest
from hypothesis import given
from hypothesis import strategies as st

from phraseboost.context import (
    ContextList,
    Vocabulary,
    context_list_from_texts,
    detokenize,
    load_context_list,
    load_vocabulary,
    save_context_list,
    tokenize,
)
from phraseboost.errors import TokenizationError, VocabularyError

from conftest import LETTERS


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


class TestLoadVocabulary:
    def test_basic_with_blank(self, tmp_path):
        p = tmp_path / "vocab.txt"
        write_lines(p, ["<b>", "a", "b", "c"])
        vocab = load_vocabulary(p, blank_symbol="<b>")
        assert vocab.size == 4
        assert vocab.blank_id == 0
        assert vocab.tokens == ("<b>", "a", "b", "c")

    def test_duplicate_token(self, tmp_path):
        p = tmp_path / "vocab.txt"
        write_lines(p, ["a", "a"])
        with pytest.raises(VocabularyError, match="duplicate"):
            load_vocabulary(p)

    def test_missing_special(self, tmp_path):
        p = tmp_path / "vocab.txt"
        write_lines(p, ["a", "b"])
        with pytest.raises(VocabularyError, match="blank"):
            load_vocabulary(p, blank_symbol="<b>")
        with pytest.raises(VocabularyError, match="eos"):
            load_vocabulary(p, eos_symbol="</s>")

    def test_empty_file(self, tmp_path):
        p = tmp_path / "vocab.txt"
        p.write_text("", encoding="utf-8")
        with pytest.raises(VocabularyError, match="empty"):
            load_vocabulary(p)

    def test_representative_size(self, tmp_path):
        p = tmp_path / "vocab.txt"
        write_lines(p, [f"tok{i}" for i in range(1024)])
        assert load_vocabulary(p).size == 1024

    def test_blank_eos_distinct(self):
        with pytest.raises(VocabularyError, match="distinct"):
            Vocabulary(tokens=("x", "y"), blank_id=0, eos_id=0)

    def test_eos_resolution(self, tmp_path):
        p = tmp_path / "vocab.txt"
        write_lines(p, ["<b>", "a", "</s>"])
        vocab = load_vocabulary(p, blank_symbol="<b>", eos_symbol="</s>")
        assert vocab.eos_id == 2


class TestTokenize:
    def test_char_mode(self, letters_vocab):
        ids = tokenize("cat", letters_vocab)
        assert ids == [letters_vocab.id_of(c) for c in "cat"]

    def test_ids_mode(self):
        vocab = Vocabulary(tokens=tuple(f"t{i}" for i in range(8)))
        assert tokenize("7 3 7", vocab, mode="ids") == [7, 3, 7]

    def test_unmappable_char(self, letters_vocab):
        with pytest.raises(TokenizationError, match="'T'"):
            tokenize("caT", letters_vocab)

    def test_ids_out_of_range(self):
        vocab = Vocabulary(tokens=("a", "b"))
        with pytest.raises(TokenizationError, match="out of range"):
            tokenize("5", vocab, mode="ids")

    def test_ids_not_an_int(self):
        vocab = Vocabulary(tokens=("a", "b"))
        with pytest.raises(TokenizationError, match="not an integer"):
            tokenize("x", vocab, mode="ids")

    def test_bad_mode(self, letters_vocab):
        with pytest.raises(ValueError, match="mode"):
            tokenize("cat", letters_vocab, mode="bpe")

    @given(st.text(alphabet=LETTERS + " ", max_size=24))
    def test_char_round_trip(self, text):
        vocab = Vocabulary(tokens=("<b>",) + tuple(LETTERS) + (" ",), blank_id=0)
        assert detokenize(tokenize(text, vocab), vocab) == text


class TestLoadContextList:
    def test_fig_words(self, tmp_path, letters_vocab):
        p = tmp_path / "ctx.txt"
        write_lines(p, ["cat", "cats", "csv", "sit"])
        ctx = load_context_list(p, letters_vocab)
        assert len(ctx) == 4
        assert ctx.texts == ["cat", "cats", "csv", "sit"]

    def test_min_chars_filter(self, tmp_path, letters_vocab):
        p = tmp_path / "ctx.txt"
        write_lines(p, ["ab", "abc"])
        ctx = load_context_list(p, letters_vocab, min_chars=3)
        assert ctx.texts == ["abc"]

    def test_dedup(self, tmp_path, letters_vocab):
        p = tmp_path / "ctx.txt"
        write_lines(p, ["cat", "cat"])
        assert len(load_context_list(p, letters_vocab)) == 1

    def test_comments_and_blank_lines(self, tmp_path, letters_vocab):
        p = tmp_path / "ctx.txt"
        write_lines(p, ["# header", "", "cat", "   ", "dog"])
        assert load_context_list(p, letters_vocab).texts == ["cat", "dog"]

    def test_error_reports_line_number(self, tmp_path, letters_vocab):
        p = tmp_path / "ctx.txt"
        write_lines(p, ["cat", "caT9"])
        with pytest.raises(TokenizationError, match="line 2"):
            load_context_list(p, letters_vocab)

    def test_empty_result_allowed(self, tmp_path, letters_vocab):
        p = tmp_path / "ctx.txt"
        write_lines(p, ["ab", "xy"])
        ctx = load_context_list(p, letters_vocab, min_chars=3)
        assert len(ctx) == 0

    def test_loaded_phrases_detokenize_exactly(self, tmp_path, letters_vocab):
        p = tmp_path / "ctx.txt"
        write_lines(p, ["cat", "hot dog", "lemur"])
        ctx = load_context_list(p, letters_vocab)
        for phrase in ctx.phrases:
            assert detokenize(phrase.token_ids, letters_vocab) == phrase.text

    def test_round_trip_idempotent(self, tmp_path, letters_vocab):
        p = tmp_path / "ctx.txt"
        write_lines(p, ["cat", "# note", "cats", "cat", "ab"])
        first = load_context_list(p, letters_vocab)
        q = tmp_path / "dump.txt"
        save_context_list(first, q)
        second = load_context_list(q, letters_vocab)
        assert second == first

    @given(min_lo=st.integers(0, 6), bump=st.integers(0, 6))
    def test_filter_monotone(self, min_lo, bump):
        vocab = Vocabulary(tokens=("<b>",) + tuple(LETTERS), blank_id=0)
        texts = ["a", "ab", "abc", "abcd", "abcde", "cat", "cats"]
        lo = context_list_from_texts(texts, vocab, min_chars=min_lo)
        hi = context_list_from_texts(texts, vocab, min_chars=min_lo + bump)
        assert len(hi) <= len(lo)

    def test_multiword_needs_space_token(self, letters_vocab):
        ctx = context_list_from_texts(["hot dog"], letters_vocab)
        assert len(ctx) == 1
        vocab_nospace = Vocabulary(tokens=("<b>",) + tuple(LETTERS), blank_id=0)
        with pytest.raises(TokenizationError):
            context_list_from_texts(["hot dog"], vocab_nospace)


def test_context_list_len_and_texts():
    ctx = ContextList(phrases=[], min_chars=3)
    assert len(ctx) == 0 and ctx.texts == []
