"""Candidate pair production from shared left contexts.

Sequential generation samples x, extracts its keywords, and beam-searches
keyword-constrained y candidates; parallel generation samples a pool of k2
sentences and pairs every ordered combination. Both condition x and y on the
same sampled context, which is what keeps the pairs semantically coherent
without any human-written source text.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .decoding import (
    GenerationConfig,
    constrained_beam_search,
    extract_keywords,
    sample_sentences,
)
from .errors import InputError
from .lmcore import GeneratorModel
from .textmetrics import TokenSeq, from_tokens

logger = logging.getLogger(__name__)

DOMAINS = ("news", "reddit", "biomedical", "custom")

# Free-form generation for biomedical text; styled prefixes elsewhere.
DEFAULT_PREFIX_TEMPLATES = {
    "news": "London, (CNN) --",
    "reddit": "(r/AskReddit)",
    "biomedical": "",
    "custom": "",
}

SEQUENTIAL = "sequential"
PARALLEL = "parallel"
SELF_DISTILL = "self_distill"
PROVENANCES = (SEQUENTIAL, PARALLEL, SELF_DISTILL)

_SENTENCE_TERMINATORS = {".", "!", "?"}


@dataclass(frozen=True)
class DomainContext:
    """A sampled left context c from which both pair sides are generated."""

    id: str
    domain: str
    prefix_template: str
    text: TokenSeq

    def sentence_count(self) -> int:
        count = sum(1 for tok in self.text.tokens if tok in _SENTENCE_TERMINATORS)
        # an unterminated trailing clause still counts as a sentence
        if self.text.tokens and self.text.tokens[-1] not in _SENTENCE_TERMINATORS:
            count += 1
        return count


@dataclass
class PairScores:
    """Scores cached on a pair as the filter stack computes them."""

    entail_xy: float | None = None
    entail_yx: float | None = None
    rouge_l: float | None = None
    density_norm: float | None = None
    comp: float | None = None

    def as_dict(self) -> dict[str, float | None]:
        return {
            "entail_xy": self.entail_xy,
            "entail_yx": self.entail_yx,
            "rouge_l": self.rouge_l,
            "density_norm": self.density_norm,
            "comp": self.comp,
        }


@dataclass
class CandidatePair:
    context_id: str
    domain: str
    provenance: str
    x: TokenSeq
    y: TokenSeq
    scores: PairScores = field(default_factory=PairScores)
    pair_id: str | None = None  # assigned by the pipeline before filtering

    def __post_init__(self) -> None:
        if self.provenance not in PROVENANCES:
            raise InputError(f"unknown provenance {self.provenance!r}")


@dataclass
class PoolCensus:
    """Per-provenance candidate counts plus failed-context bookkeeping."""

    sequential: int = 0
    parallel: int = 0
    self_distill: int = 0
    failed_contexts: int = 0

    def record(self, pair: CandidatePair) -> None:
        setattr(self, pair.provenance, getattr(self, pair.provenance) + 1)

    @property
    def total(self) -> int:
        return self.sequential + self.parallel + self.self_distill

    def merge(self, other: "PoolCensus") -> None:
        self.sequential += other.sequential
        self.parallel += other.parallel
        self.self_distill += other.self_distill
        self.failed_contexts += other.failed_contexts

    def as_dict(self) -> dict[str, int]:
        return {
            "sequential": self.sequential,
            "parallel": self.parallel,
            "self_distill": self.self_distill,
            "failed_contexts": self.failed_contexts,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "PoolCensus":
        return cls(**payload)


def sample_contexts(
    model: GeneratorModel,
    domain: str,
    n: int,
    config: GenerationConfig,
    prefix_template: str | None = None,
    start_index: int = 0,
) -> list[DomainContext]:
    """Sample n contexts of 1-5 sentences (range per config) for a domain."""
    if n < 1:
        raise InputError(f"context count must be >= 1, got {n}")
    if domain not in DOMAINS:
        raise InputError(f"unknown domain {domain!r}; expected one of {DOMAINS}")
    template = DEFAULT_PREFIX_TEMPLATES[domain] if prefix_template is None else prefix_template

    from .decoding import _stream_rng  # shared stream derivation
    from .textmetrics import tokenize

    template_tokens = tokenize(template).tokens
    contexts = []
    lo, hi = config.context_sentences
    for i in range(n):
        index = start_index + i
        rng = _stream_rng(config.seed, f"context-count:{domain}", template_tokens, index)
        wanted = rng.randint(lo, hi)
        collected: list[str] = []
        prefix = list(template_tokens)
        for s in range(wanted):
            sentence = sample_sentences(
                model,
                from_tokens(prefix),
                1,
                config,
                stream=f"context:{domain}:{index}:{s}",
            )[0]
            collected.extend(sentence.tokens)
            prefix.extend(sentence.tokens)
        contexts.append(
            DomainContext(
                id=f"{domain}-{index:06d}",
                domain=domain,
                prefix_template=template,
                text=from_tokens(collected),
            )
        )
    return contexts


def generate_sequential(
    model: GeneratorModel, context: DomainContext, config: GenerationConfig
) -> list[CandidatePair]:
    """Sample x from the context, then beam-search up to k1 keyword-bound y's."""
    x = sample_sentences(
        model, context.text, 1, config, stream=f"seq-x:{context.id}"
    )[0]
    if not x:
        return []
    keywords = extract_keywords(x, config.max_keywords)
    if not keywords:
        logger.info("context %s: x has no content keywords, skipping", context.id)
        return []
    candidates = constrained_beam_search(model, context.text, keywords, config)
    return [
        CandidatePair(
            context_id=context.id,
            domain=context.domain,
            provenance=SEQUENTIAL,
            x=x,
            y=y,
        )
        for y in candidates
        if y.tokens
    ]


def generate_parallel(
    model: GeneratorModel, context: DomainContext, config: GenerationConfig
) -> list[CandidatePair]:
    """Sample k2 sentences from the context and emit every ordered pair."""
    sentences = sample_sentences(
        model, context.text, config.k2, config, stream=f"para:{context.id}"
    )
    usable = [s for s in sentences if s.tokens]
    if len(usable) < 2:
        return []
    pairs = []
    for m, x in enumerate(usable):
        for n, y in enumerate(usable):
            if m == n:
                continue
            pairs.append(
                CandidatePair(
                    context_id=context.id,
                    domain=context.domain,
                    provenance=PARALLEL,
                    x=x,
                    y=y,
                )
            )
    return pairs


def pairs_for_context(
    model: GeneratorModel,
    context: DomainContext,
    config: GenerationConfig,
    modes: Sequence[str] = (SEQUENTIAL, PARALLEL),
) -> list[CandidatePair]:
    pairs: list[CandidatePair] = []
    if SEQUENTIAL in modes:
        pairs.extend(generate_sequential(model, context, config))
    if PARALLEL in modes:
        pairs.extend(generate_parallel(model, context, config))
    return pairs


def build_candidate_pool(
    contexts: Iterable[DomainContext],
    model: GeneratorModel,
    config: GenerationConfig,
    modes: Sequence[str] = (SEQUENTIAL, PARALLEL),
    census: PoolCensus | None = None,
) -> Iterator[CandidatePair]:
    """Stream the candidate union across contexts, grouped by context.

    A context that fails to generate is counted and logged, never fatal.
    """
    census = census if census is not None else PoolCensus()
    for context in contexts:
        try:
            pairs = pairs_for_context(model, context, config, modes)
        except Exception:
            census.failed_contexts += 1
            logger.exception("candidate generation failed for context %s", context.id)
            continue
        for pair in pairs:
            census.record(pair)
            yield pair
