"""Model contracts plus deterministic in-process test doubles.

The generator contract is distribution-level: a model hands back the full
next-token distribution for a prefix, and the decoding layer builds nucleus
sampling and constrained beam search on top of it. ToyLM is a closed-world
n-gram model so the whole pipeline runs without any model server; the
overlap scorer stands in for a neural NLI model the same way.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence, runtime_checkable

from .errors import DegeneratePairError, InputError
from .textmetrics import TokenSeq

DEFAULT_END_TOKEN = "."


@dataclass(frozen=True)
class TokenDistribution:
    """Next-token probabilities, sorted by descending prob then token."""

    entries: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        total = sum(p for _, p in self.entries)
        if self.entries and abs(total - 1.0) > 1e-6:
            raise InputError(f"distribution probabilities sum to {total}, not 1")
        ordered = sorted(self.entries, key=lambda e: (-e[1], e[0]))
        if list(self.entries) != ordered:
            raise InputError("distribution entries are not sorted by (-prob, token)")

    @classmethod
    def from_probs(cls, probs: dict[str, float]) -> "TokenDistribution":
        total = sum(probs.values())
        if total <= 0:
            raise InputError("cannot normalize an empty or zero-mass distribution")
        entries = tuple(
            sorted(((tok, p / total) for tok, p in probs.items()), key=lambda e: (-e[1], e[0]))
        )
        return cls(entries=entries)

    @classmethod
    def from_counts(cls, counts: Counter[str]) -> "TokenDistribution":
        return cls.from_probs({tok: float(c) for tok, c in counts.items()})

    def serialize(self) -> str:
        """Canonical textual form, used by determinism checks."""
        return "|".join(f"{tok}:{prob!r}" for tok, prob in self.entries)


@dataclass(frozen=True)
class EntailmentScore:
    value: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.value <= 1.0:
            raise InputError(f"entailment score {self.value} outside [0, 1]")


@runtime_checkable
class GeneratorModel(Protocol):
    """What the decoding layer needs from any generation backend."""

    end_token: str

    def next_token_distribution(self, prefix: Sequence[str]) -> TokenDistribution: ...


@runtime_checkable
class EntailmentScorer(Protocol):
    """Directional entailment probability P(premise => hypothesis)."""

    def score(self, premise: str, hypothesis: str) -> float: ...


class ToyLM:
    """Closed-vocabulary n-gram language model.

    Count tables are kept for every context length from 1 to order-1, so a
    short prefix falls back to the matching lower-order statistics. A prefix
    whose context was never seen yields a uniform distribution over the
    training vocabulary plus the end token; an empty prefix draws from the
    sentence-start distribution.
    """

    def __init__(
        self,
        order: int,
        table: dict[tuple[str, ...], TokenDistribution],
        start: TokenDistribution,
        vocab: tuple[str, ...],
        end_token: str = DEFAULT_END_TOKEN,
    ):
        self.order = order
        self.table = table
        self.start = start
        self.vocab = vocab
        self.end_token = end_token
        backoff_tokens = sorted(set(vocab) | {end_token})
        self._backoff = TokenDistribution.from_probs({t: 1.0 for t in backoff_tokens})

    def next_token_distribution(self, prefix: Sequence[str]) -> TokenDistribution:
        if not prefix:
            return self.start
        width = min(self.order - 1, len(prefix))
        context = tuple(prefix[-width:])
        hit = self.table.get(context)
        if hit is not None:
            return hit
        return self._backoff


def build_toy_lm(
    corpus: Iterable[TokenSeq], order: int = 3, end_token: str = DEFAULT_END_TOKEN
) -> ToyLM:
    """Maximum-likelihood n-gram tables with uniform backoff."""
    sequences = [seq.tokens for seq in corpus]
    if not sequences or all(not s for s in sequences):
        raise InputError("toy LM needs a non-empty corpus")
    if order < 2:
        raise InputError(f"order must be >= 2, got {order}")

    counts: dict[tuple[str, ...], Counter[str]] = defaultdict(Counter)
    start_counts: Counter[str] = Counter()
    vocab: set[str] = set()
    for tokens in sequences:
        if not tokens:
            continue
        vocab.update(tokens)
        start_counts[tokens[0]] += 1
        for width in range(1, order):
            for i in range(width, len(tokens)):
                counts[tokens[i - width : i]][tokens[i]] += 1

    table = {ctx: TokenDistribution.from_counts(c) for ctx, c in counts.items()}
    return ToyLM(
        order=order,
        table=table,
        start=TokenDistribution.from_counts(start_counts),
        vocab=tuple(sorted(vocab)),
        end_token=end_token,
    )


def overlap_entailment_score(premise: TokenSeq, hypothesis: TokenSeq) -> EntailmentScore:
    """Fraction of the hypothesis' unique tokens that appear in the premise."""
    if not hypothesis:
        raise DegeneratePairError("overlap entailment needs a non-empty hypothesis")
    hypo_types = set(hypothesis.tokens)
    prem_types = set(premise.tokens)
    return EntailmentScore(len(hypo_types & prem_types) / len(hypo_types))


class OverlapScorer:
    """EntailmentScorer backed by token overlap; the NLI test double."""

    def score(self, premise: str, hypothesis: str) -> float:
        from .textmetrics import tokenize

        return overlap_entailment_score(tokenize(premise), tokenize(hypothesis)).value


class IdentityTaskModel:
    """Task-model double that echoes its input, whatever the control code."""

    def infer(self, text: str, control_code: str) -> str:
        return text


class TruncateHalfTaskModel:
    """Task-model double that keeps the first half of the input tokens."""

    def infer(self, text: str, control_code: str) -> str:
        from .textmetrics import tokenize

        tokens = tokenize(text).tokens
        keep = max(1, len(tokens) // 2)
        return " ".join(tokens[:keep])
