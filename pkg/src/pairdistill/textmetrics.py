"""Deterministic text metrics used by filters, quantization, and reports.

Everything here is a pure function of its inputs: tokenization, ROUGE-L,
extractive-fragment density, compression ratio, n-gram entropy, and MSTTR.
"""

from __future__ import annotations

import math
import string
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DegeneratePairError, InputError

_PUNCT = frozenset(string.punctuation)


@dataclass(frozen=True)
class TokenSeq:
    """A lowercased token sequence plus the text it came from."""

    tokens: tuple[str, ...]
    source_text: str

    def __len__(self) -> int:
        return len(self.tokens)

    def __bool__(self) -> bool:
        return bool(self.tokens)

    @property
    def text(self) -> str:
        """Tokens joined by single spaces (re-tokenizing this is a no-op)."""
        return " ".join(self.tokens)


@dataclass(frozen=True)
class FragmentDecomposition:
    """Greedy decomposition of y into maximal token runs shared with x."""

    fragments: tuple[tuple[int, int], ...]  # (start_in_y, length)
    y_len: int


def _split_chunk(chunk: str) -> list[str]:
    # A chunk with no word characters ("--", "...") stays whole.
    if all(c in _PUNCT for c in chunk):
        return [chunk]
    leading: list[str] = []
    while chunk and chunk[0] in _PUNCT:
        leading.append(chunk[0])
        chunk = chunk[1:]
    trailing: list[str] = []
    while chunk and chunk[-1] in _PUNCT:
        if chunk[-1] == "." and "." in chunk[:-1]:
            # internal-dot abbreviation ("u.s.") keeps its final dot
            break
        trailing.append(chunk[-1])
        chunk = chunk[:-1]
    out = leading
    if chunk:
        out.append(chunk)
    out.extend(reversed(trailing))
    return out


def tokenize(text: str) -> TokenSeq:
    """Lowercase, split on whitespace, and detach edge punctuation.

    Internal punctuation (hyphens, apostrophes, abbreviation dots) is kept
    inside the token, so "U.S." survives as a single token "u.s.".
    """
    tokens: list[str] = []
    for chunk in text.lower().split():
        tokens.extend(_split_chunk(chunk))
    return TokenSeq(tokens=tuple(tokens), source_text=text)


def from_tokens(tokens: Sequence[str]) -> TokenSeq:
    """Build a TokenSeq directly from already-tokenized, lowercased text."""
    toks = tuple(tokens)
    return TokenSeq(tokens=toks, source_text=" ".join(toks))


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for tok in a:
        cur = [0]
        for j in range(1, len(b) + 1):
            if tok == b[j - 1]:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(x: TokenSeq, y: TokenSeq) -> float:
    """LCS-based ROUGE-L F1 on [0, 1]."""
    if not x or not y:
        raise DegeneratePairError("rouge_l requires non-empty token sequences")
    lcs = _lcs_length(x.tokens, y.tokens)
    if lcs == 0:
        return 0.0
    precision = lcs / len(y)
    recall = lcs / len(x)
    return 2 * precision * recall / (precision + recall)


def extractive_fragments(x: TokenSeq, y: TokenSeq) -> FragmentDecomposition:
    """Greedy left-to-right decomposition of y into maximal runs shared with x.

    At each position of y the longest token run that occurs anywhere in x is
    taken; positions not starting a shared run are skipped.
    """
    xt, yt = x.tokens, y.tokens
    fragments: list[tuple[int, int]] = []
    i = 0
    while i < len(yt):
        best = 0
        for j in range(len(xt)):
            if yt[i] == xt[j]:
                k = 1
                while i + k < len(yt) and j + k < len(xt) and yt[i + k] == xt[j + k]:
                    k += 1
                if k > best:
                    best = k
        if best:
            fragments.append((i, best))
            i += best
        else:
            i += 1
    return FragmentDecomposition(fragments=tuple(fragments), y_len=len(yt))


def density(x: TokenSeq, y: TokenSeq) -> float:
    """Raw extractive-fragment density: (1/|y|) * sum of squared run lengths.

    Bounded by |y|, not by 1; see normalized_density for the [0, 1] version.
    """
    if not y:
        raise DegeneratePairError("density requires a non-empty y")
    decomposition = extractive_fragments(x, y)
    return sum(length * length for _, length in decomposition.fragments) / decomposition.y_len


def normalized_density(x: TokenSeq, y: TokenSeq) -> float:
    """Fragment density divided by |y|, so the score lives on [0, 1].

    Computed as sum(len^2) / |y|^2 in one expression, so it is bit-identical
    to the naive formula. Equals 1 exactly when y is a single contiguous run
    of x covering all of y; equals 0 when x and y share no tokens.
    """
    if not y:
        raise DegeneratePairError("normalized_density requires a non-empty y")
    decomposition = extractive_fragments(x, y)
    squared = sum(length * length for _, length in decomposition.fragments)
    return squared / (decomposition.y_len * decomposition.y_len)


def compression_ratio(x: TokenSeq, y: TokenSeq) -> float:
    """Token-length ratio |y| / |x|."""
    if not x:
        raise DegeneratePairError("compression_ratio requires a non-empty x")
    return len(y) / len(x)


def ngram_entropy(corpus: Iterable[TokenSeq], n: int) -> float:
    """Shannon entropy (bits) of the pooled n-gram distribution.

    N-grams never cross sequence boundaries.
    """
    if n < 1:
        raise InputError(f"n-gram order must be >= 1, got {n}")
    counts: Counter[tuple[str, ...]] = Counter()
    for seq in corpus:
        toks = seq.tokens
        for i in range(len(toks) - n + 1):
            counts[toks[i : i + n]] += 1
    total = sum(counts.values())
    if total == 0:
        raise InputError(f"corpus contains no {n}-grams")
    entropy = 0.0
    for count in counts.values():
        p = count / total
        entropy -= p * math.log2(p)
    return entropy


def msttr(corpus: Iterable[TokenSeq], segment_len: int = 100) -> float:
    """Mean segmented type-token ratio over consecutive full segments.

    Tokens are pooled in corpus order; the trailing partial segment is
    dropped, so the result depends on corpus order by design.
    """
    if segment_len < 1:
        raise InputError(f"segment_len must be >= 1, got {segment_len}")
    pooled: list[str] = []
    for seq in corpus:
        pooled.extend(seq.tokens)
    if len(pooled) < segment_len:
        raise InputError(
            f"pooled corpus has {len(pooled)} tokens, below segment length {segment_len}"
        )
    ratios = []
    for start in range(0, len(pooled) - segment_len + 1, segment_len):
        segment = pooled[start : start + segment_len]
        ratios.append(len(set(segment)) / segment_len)
    return sum(ratios) / len(ratios)
