"""Subword tokenizers and word-level alignment matrices.

Two marker conventions are supported:

* ``bpe``: word-initial pieces carry a leading ``▁`` (the sentencepiece
  convention); continuation pieces are bare.
* ``wordpiece``: word-initial pieces are bare; continuations carry ``##``.

Both tokenize a word by greedy longest-match-first.  A word with no greedy
decomposition becomes the single unknown piece, which always stands for a
whole word.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, ParseError, ValidationError
from .ioutil import atomic_write_text

BPE = "bpe"
WORDPIECE = "wordpiece"
BPE_MARKER = "▁"
WORDPIECE_MARKER = "##"
DEFAULT_UNK = "<unk>"

POOL_FIRST = "first"
POOL_LAST = "last"
POOL_MEAN = "mean"


@dataclass(frozen=True)
class SubwordVocab:
    kind: str
    pieces: frozenset[str]
    unk: str = DEFAULT_UNK

    def __post_init__(self):
        if self.kind not in (BPE, WORDPIECE):
            raise ValidationError(f"unknown tokenizer kind {self.kind!r}")
        if self.unk not in self.pieces:
            raise ValidationError(f"unknown piece {self.unk!r} missing from vocabulary")
        for piece in self.pieces:
            if piece in ("", BPE_MARKER, WORDPIECE_MARKER):
                raise ValidationError(f"invalid empty piece {piece!r}")

    @classmethod
    def create(cls, kind: str, pieces, unk: str = DEFAULT_UNK) -> "SubwordVocab":
        """Build a vocab; the unknown piece is added if absent."""
        return cls(kind, frozenset(pieces) | {unk}, unk)

    def sorted_pieces(self) -> list[str]:
        return sorted(self.pieces)


@dataclass
class TokenizationResult:
    """Subword tokens plus, for each word, the index of its first subword."""

    tokens: list[str]
    first_index: list[int]
    matrix: np.ndarray = field(repr=False)

    @property
    def num_tokens(self) -> int:
        return len(self.tokens)

    @property
    def num_words(self) -> int:
        return len(self.first_index)


def first_index_matrix(first_index, num_tokens: int) -> np.ndarray:
    """Binary (num_tokens x num_words) matrix with a 1 at each word's first subword."""
    first_index = list(first_index)
    m = np.zeros((num_tokens, len(first_index)), dtype=np.float64)
    prev = -1
    for col, row in enumerate(first_index):
        if not 0 <= row < num_tokens:
            raise DimensionError(f"first_index[{col}]={row} out of range for {num_tokens} tokens")
        if row <= prev:
            raise DimensionError("first_index must be strictly increasing")
        prev = row
        m[row, col] = 1.0
    return m


def build_first_index_matrix(result: TokenizationResult) -> np.ndarray:
    return first_index_matrix(result.first_index, result.num_tokens)


def pooling_matrix(result: TokenizationResult, mode: str = POOL_FIRST) -> np.ndarray:
    """Token-to-word pooling matrix; first-index selection is the default."""
    n_tok, n_words = result.num_tokens, result.num_words
    if mode == POOL_FIRST:
        return first_index_matrix(result.first_index, n_tok)
    starts = list(result.first_index)
    ends = starts[1:] + [n_tok]
    m = np.zeros((n_tok, n_words), dtype=np.float64)
    for col, (lo, hi) in enumerate(zip(starts, ends)):
        if mode == POOL_LAST:
            m[hi - 1, col] = 1.0
        elif mode == POOL_MEAN:
            m[lo:hi, col] = 1.0 / (hi - lo)
        else:
            raise ValidationError(f"unknown pooling mode {mode!r}")
    return m


def _greedy_word(word: str, vocab: SubwordVocab) -> list[str] | None:
    """Greedy longest-match pieces for one word, or None if no cover exists."""
    if vocab.kind == BPE:
        initial_prefix, cont_prefix = BPE_MARKER, ""
    else:
        initial_prefix, cont_prefix = "", WORDPIECE_MARKER
    pieces = vocab.pieces
    out: list[str] = []
    pos = 0
    while pos < len(word):
        prefix = initial_prefix if pos == 0 else cont_prefix
        chosen = None
        for end in range(len(word), pos, -1):
            candidate = prefix + word[pos:end]
            if candidate in pieces:
                chosen = (candidate, end)
                break
        if chosen is None:
            return None
        out.append(chosen[0])
        pos = chosen[1]
    return out


def tokenize(words, vocab: SubwordVocab) -> TokenizationResult:
    """Greedy subword decomposition of a word sequence.

    Words with no decomposition map to the single unknown piece so that the
    first-index structure stays well-defined.
    """
    tokens: list[str] = []
    first_index: list[int] = []
    for word in words:
        if not isinstance(word, str) or not word:
            raise ValidationError(f"cannot tokenize empty or non-string word {word!r}")
        first_index.append(len(tokens))
        sub = _greedy_word(word, vocab)
        tokens.extend(sub if sub is not None else [vocab.unk])
    return TokenizationResult(tokens, first_index, first_index_matrix(first_index, len(tokens)))


def strip_marker(piece: str, kind: str) -> str:
    if kind == BPE:
        return piece[len(BPE_MARKER):] if piece.startswith(BPE_MARKER) else piece
    return piece[len(WORDPIECE_MARKER):] if piece.startswith(WORDPIECE_MARKER) else piece


def _starts_word(piece: str, vocab: SubwordVocab) -> bool:
    if piece == vocab.unk:
        return True
    if vocab.kind == BPE:
        return piece.startswith(BPE_MARKER)
    return not piece.startswith(WORDPIECE_MARKER)


def merge_tokens(tokens, vocab: SubwordVocab) -> tuple[list[str], list[int]]:
    """Rebuild words (and their first-subword indices) from a token sequence.

    The unknown piece always forms a standalone word.  A leading continuation
    piece opens a word anyway, so any token sequence merges cleanly.
    """
    words: list[str] = []
    first_index: list[int] = []
    for i, piece in enumerate(tokens):
        boundary = i == 0 or _starts_word(piece, vocab) or tokens[i - 1] == vocab.unk
        text = piece if piece == vocab.unk else strip_marker(piece, vocab.kind)
        if boundary:
            words.append(text)
            first_index.append(i)
        else:
            words[-1] += text
    return words, first_index


def detokenize(result: TokenizationResult, vocab: SubwordVocab) -> list[str]:
    """Inverse of tokenize for fully covered words (unknowns merge to the unk string)."""
    return merge_tokens(result.tokens, vocab)[0]


def project_to_words(m: np.ndarray, hidden: np.ndarray) -> np.ndarray:
    """M^T . H: select one hidden row per word (shape num_words x hidden_dim)."""
    m = np.asarray(m, dtype=np.float64)
    hidden = np.asarray(hidden, dtype=np.float64)
    if m.ndim != 2 or hidden.ndim != 2 or m.shape[0] != hidden.shape[0]:
        raise DimensionError(
            f"projection shape mismatch: matrix {m.shape} vs hidden {hidden.shape}"
        )
    return m.T @ hidden


def concat_hidden(ha: np.ndarray, hb: np.ndarray, ma: np.ndarray, mb: np.ndarray) -> np.ndarray:
    """Word-level concatenation of two hidden matrices via their alignment matrices."""
    ma = np.asarray(ma, dtype=np.float64)
    mb = np.asarray(mb, dtype=np.float64)
    if ma.shape[1] != mb.shape[1]:
        raise DimensionError(
            "the two tokenizations disagree on word count: "
            f"{ma.shape[1]} vs {mb.shape[1]}"
        )
    return np.concatenate([project_to_words(ma, ha), project_to_words(mb, hb)], axis=1)


# --- vocab file format: header "#kind: bpe|wordpiece", one piece per line ----

def load_vocab(path: str | Path) -> SubwordVocab:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("#kind:"):
        raise ParseError(f"{path}: missing '#kind: bpe|wordpiece' header line")
    kind = lines[0].split(":", 1)[1].strip()
    if kind not in (BPE, WORDPIECE):
        raise ParseError(f"{path}: unknown tokenizer kind {kind!r}")
    pieces = [line for line in lines[1:] if line]
    return SubwordVocab.create(kind, pieces)


def save_vocab(vocab: SubwordVocab, path: str | Path) -> None:
    body = "".join(p + "\n" for p in vocab.sorted_pieces())
    atomic_write_text(path, f"#kind: {vocab.kind}\n{body}")
