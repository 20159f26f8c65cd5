"""Vocabulary and context-list ingestion.

File formats:
    vocabulary file: UTF-8, one token per line, LF line endings; the token
    id is the 0-based line number.
    context-list file: UTF-8, one phrase per line; blank lines and lines
    starting with '#' are ignored.

Tokenization modes:
    "char"  every character of the phrase must itself be a vocabulary
            token (multi-word phrases therefore need the space character
            in the vocabulary);
    "ids"   the phrase is a whitespace-separated list of integer token ids.

No lowercasing or variant generation happens here: capitalization and
plural forms are supplied by the caller as extra phrases.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import TokenizationError, VocabularyError

DEFAULT_MIN_CHARS = 3

TOKENIZE_MODES = ("char", "ids")


@dataclass(frozen=True)
class Vocabulary:
    """Ordered token inventory; index equals token id."""

    tokens: tuple[str, ...]
    blank_id: int | None = None
    eos_id: int | None = None
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index: dict[str, int] = {}
        for i, tok in enumerate(self.tokens):
            if not tok:
                raise VocabularyError(f"empty token at id {i}")
            if tok in index:
                raise VocabularyError(f"duplicate token {tok!r} (ids {index[tok]} and {i})")
            index[tok] = i
        if not index:
            raise VocabularyError("vocabulary is empty")
        for name, special in (("blank_id", self.blank_id), ("eos_id", self.eos_id)):
            if special is not None and not 0 <= special < len(self.tokens):
                raise VocabularyError(f"{name}={special} out of range for size {len(self.tokens)}")
        if self.blank_id is not None and self.blank_id == self.eos_id:
            raise VocabularyError("blank_id and eos_id must be distinct")
        object.__setattr__(self, "_index", index)

    @property
    def size(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise VocabularyError(f"token {token!r} not in vocabulary") from None


@dataclass(frozen=True)
class Phrase:
    """A boosting phrase: original text plus its token ids."""

    text: str
    token_ids: tuple[int, ...]


@dataclass
class ContextList:
    """Filtered, deduplicated list of boosting phrases."""

    phrases: list[Phrase]
    min_chars: int = DEFAULT_MIN_CHARS

    @property
    def texts(self) -> list[str]:
        return [p.text for p in self.phrases]

    def __len__(self) -> int:
        return len(self.phrases)


def load_vocabulary(
    path: str | Path,
    blank_symbol: str | None = None,
    eos_symbol: str | None = None,
) -> Vocabulary:
    """Read a one-token-per-line vocabulary file.

    blank_symbol / eos_symbol, when given, must match a token exactly;
    the matching ids are recorded on the returned Vocabulary.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise VocabularyError(f"{path}: empty vocabulary file")
    tokens = tuple(lines)
    blank_id = eos_id = None
    if blank_symbol is not None:
        if blank_symbol not in lines:
            raise VocabularyError(f"{path}: blank symbol {blank_symbol!r} not found")
        blank_id = lines.index(blank_symbol)
    if eos_symbol is not None:
        if eos_symbol not in lines:
            raise VocabularyError(f"{path}: eos symbol {eos_symbol!r} not found")
        eos_id = lines.index(eos_symbol)
    return Vocabulary(tokens=tokens, blank_id=blank_id, eos_id=eos_id)


def tokenize(text: str, vocab: Vocabulary, mode: str = "char") -> list[int]:
    """Map text to token ids; see module docstring for the two modes."""
    if mode not in TOKENIZE_MODES:
        raise ValueError(f"unknown tokenize mode {mode!r}")
    if mode == "char":
        ids = []
        for pos, ch in enumerate(text):
            tid = vocab._index.get(ch)
            if tid is None:
                raise TokenizationError(f"character {ch!r} at position {pos} not in vocabulary")
            ids.append(tid)
        return ids
    ids = []
    for part in text.split():
        try:
            tid = int(part)
        except ValueError:
            raise TokenizationError(f"not an integer token id: {part!r}") from None
        if not 0 <= tid < vocab.size:
            raise TokenizationError(f"token id {tid} out of range for vocabulary size {vocab.size}")
        ids.append(tid)
    return ids


def detokenize(token_ids: Iterable[int], vocab: Vocabulary) -> str:
    """Inverse of char-mode tokenize: concatenate token strings."""
    return "".join(vocab.tokens[i] for i in token_ids)


def context_list_from_texts(
    texts: Sequence[str],
    vocab: Vocabulary,
    mode: str = "char",
    min_chars: int = DEFAULT_MIN_CHARS,
    lines: Sequence[int] | None = None,
) -> ContextList:
    """Tokenize, length-filter, and deduplicate phrase texts.

    `lines` optionally carries 1-based source line numbers for error
    reporting. Duplicate token sequences keep the first occurrence.
    """
    phrases: list[Phrase] = []
    seen: set[tuple[int, ...]] = set()
    for i, text in enumerate(texts):
        if len(text) < min_chars:
            continue
        try:
            ids = tuple(tokenize(text, vocab, mode))
        except TokenizationError as exc:
            line = lines[i] if lines is not None else None
            raise TokenizationError(f"phrase {text!r}: {exc}", line=line) from None
        if not ids or ids in seen:
            continue
        seen.add(ids)
        phrases.append(Phrase(text=text, token_ids=ids))
    return ContextList(phrases=phrases, min_chars=min_chars)


def read_phrase_texts(path: str | Path) -> tuple[list[str], list[int]]:
    """Raw phrase lines from a context-list file (no tokenization).

    Returns (texts, 1-based line numbers), skipping blanks and '#' comments.
    """
    texts: list[str] = []
    lines: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            texts.append(text)
            lines.append(lineno)
    return texts, lines


def load_context_list(
    path: str | Path,
    vocab: Vocabulary,
    mode: str = "char",
    min_chars: int = DEFAULT_MIN_CHARS,
) -> ContextList:
    """Load a context-list file; survivors keep file order."""
    texts, lines = read_phrase_texts(path)
    return context_list_from_texts(texts, vocab, mode=mode, min_chars=min_chars, lines=lines)


def save_context_list(ctx: ContextList, path: str | Path) -> None:
    """Write phrase texts one per line; load_context_list round-trips it."""
    with open(path, "w", encoding="utf-8") as fh:
        for phrase in ctx.phrases:
            fh.write(phrase.text + "\n")
