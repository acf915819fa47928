"""Decoding algorithms over the generator contract.

Nucleus (top-p) truncation, seeded sentence sampling, keyword extraction,
and grouped-beam lexically constrained search. Sampling derives one RNG
stream per (seed, purpose, prefix, sample index) so parallel workers
reproduce serial output exactly.
"""

from __future__ import annotations

import hashlib
import math
import random
from collections import defaultdict
from dataclasses import dataclass, replace
from typing import Callable, Sequence

from .errors import InputError
from .lmcore import GeneratorModel, TokenDistribution
from .textmetrics import TokenSeq, from_tokens, tokenize

# Words dropped outright by the built-in keyword extractor.
STOPWORDS = frozenset(
    """a about above after again against all am an and any are as at be because
    been before being below between both but by can cannot could did do does
    doing down during each few for from further had has have having he her here
    hers herself him himself his how i if in into is it its itself just me more
    most my myself no nor not now of off on once only or other our ours
    ourselves out over own same she should so some such than that the their
    theirs them themselves then there these they this those through to too
    under until up very was we were what when where which while who whom why
    will with would you your yours yourself yourselves""".split()
)

# Frequent English words that score low as keywords without being dropped.
COMMON_WORDS = frozenset(
    """also always another anything around asked away back bad become began
    begin best better big call called came case come could daily day days
    different done early end enough europe even ever every everything fact
    fairly far feel felt few find first found four gave get give given go goes
    going gone good got great group had half hand happened hard head help high
    home however hundred idea important inside keep kept kind knew know known
    large last later least left less let life like likely line little long
    look looked made make man many may mean men might million mind moment
    money month months morning move much must name near need never new next
    night nothing number often old one open order others outside part people
    perhaps place point put quite rather real really right room said same saw
    say says second see seem seemed seen sense set several side since size
    small something sometimes soon state still story sure take taken tell term
    thing things think thought three time times today together told took
    toward turn turned two understand use used using want way week weeks well
    went whether whole why within without word words work world year years yet
    young""".split()
)
COMMON_WORD_WEIGHT = 0.25


@dataclass(frozen=True)
class GenerationConfig:
    """Decoding knobs shared by the whole pipeline."""

    k1: int = 10
    k2: int = 100
    top_p: float = 0.7
    beam_width: int = 16
    max_keywords: int = 5
    context_sentences: tuple[int, int] = (1, 5)
    max_tokens: int = 30
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.top_p <= 1.0:
            raise InputError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.k1 < 1 or self.k2 < 1:
            raise InputError("k1 and k2 must be >= 1")
        if self.max_keywords < 1:
            raise InputError("max_keywords must be >= 1")
        if self.beam_width < 1:
            raise InputError("beam_width must be >= 1")
        lo, hi = self.context_sentences
        if lo < 1 or hi < lo:
            raise InputError(f"bad context sentence range {self.context_sentences}")
        if self.max_tokens < 1:
            raise InputError("max_tokens must be >= 1")


@dataclass(frozen=True)
class ConstraintState:
    """Which keyword token-runs the hypothesis has emitted so far."""

    required: tuple[tuple[str, ...], ...]
    satisfied: tuple[bool, ...]

    @classmethod
    def for_keywords(cls, keyword_runs: Sequence[tuple[str, ...]]) -> "ConstraintState":
        runs = tuple(keyword_runs)
        return cls(required=runs, satisfied=(False,) * len(runs))

    def advance(self, tokens: tuple[str, ...]) -> "ConstraintState":
        """Re-evaluate after `tokens` gained one token at its end."""
        flags = list(self.satisfied)
        changed = False
        for i, run in enumerate(self.required):
            if not flags[i] and len(tokens) >= len(run) and tokens[-len(run) :] == run:
                flags[i] = True
                changed = True
        if not changed:
            return self
        return replace(self, satisfied=tuple(flags))

    @property
    def count(self) -> int:
        return sum(self.satisfied)

    @property
    def complete(self) -> bool:
        return all(self.satisfied)


def nucleus_truncate(dist: TokenDistribution, top_p: float) -> TokenDistribution:
    """Keep the smallest descending-prob prefix with cumulative mass >= top_p."""
    if not 0.0 < top_p <= 1.0:
        raise InputError(f"top_p must be in (0, 1], got {top_p}")
    kept: list[tuple[str, float]] = []
    cumulative = 0.0
    for token, prob in dist.entries:
        kept.append((token, prob))
        cumulative += prob
        if cumulative >= top_p:
            break
    total = sum(p for _, p in kept)
    return TokenDistribution(tuple((tok, p / total) for tok, p in kept))


def _stream_rng(seed: int, purpose: str, prefix: Sequence[str], index: int) -> random.Random:
    key = "\x1e".join((str(seed), purpose, "\x1f".join(prefix), str(index)))
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _draw(dist: TokenDistribution, rng: random.Random) -> str:
    u = rng.random()
    cumulative = 0.0
    for token, prob in dist.entries:
        cumulative += prob
        if u < cumulative:
            return token
    return dist.entries[-1][0]


def sample_sentences(
    model: GeneratorModel,
    prefix: TokenSeq,
    count: int,
    config: GenerationConfig,
    stream: str = "sample",
) -> list[TokenSeq]:
    """Sample `count` nucleus-truncated sentences continuing `prefix`.

    Each sentence ends at the model's end token or at max_tokens; the end
    token is kept in the output. Sentence j uses its own RNG stream, so the
    pool is independent of batching or worker layout.
    """
    if count < 1:
        raise InputError(f"sample count must be >= 1, got {count}")
    sentences = []
    for j in range(count):
        rng = _stream_rng(config.seed, stream, prefix.tokens, j)
        generated: list[str] = []
        context = list(prefix.tokens)
        for _ in range(config.max_tokens):
            dist = nucleus_truncate(model.next_token_distribution(context), config.top_p)
            token = _draw(dist, rng)
            generated.append(token)
            context.append(token)
            if token == model.end_token:
                break
        sentences.append(from_tokens(generated))
    return sentences


def extract_keywords(
    x: TokenSeq,
    max_keywords: int,
    extractor: Callable[[str, int], Sequence[str]] | None = None,
) -> list[str]:
    """Up to max_keywords content words of x, most salient first.

    The built-in scorer is term frequency with stopwords removed and very
    frequent English words downweighted; ties break by first occurrence.
    An injected extractor (e.g. a remote service) takes over when given.
    """
    if extractor is not None:
        return list(extractor(x.source_text, max_keywords))[:max_keywords]
    first_seen: dict[str, int] = {}
    counts: dict[str, int] = {}
    for position, token in enumerate(x.tokens):
        if token in STOPWORDS or not any(c.isalnum() for c in token):
            continue
        counts[token] = counts.get(token, 0) + 1
        first_seen.setdefault(token, position)
    scored = [
        (counts[tok] * (COMMON_WORD_WEIGHT if tok in COMMON_WORDS else 1.0), tok)
        for tok in counts
    ]
    scored.sort(key=lambda item: (-item[0], first_seen[item[1]]))
    return [tok for _, tok in scored[:max_keywords]]


@dataclass(frozen=True)
class _Hypothesis:
    tokens: tuple[str, ...]
    logprob_sum: float
    constraints: ConstraintState

    @property
    def score(self) -> float:
        # length-normalized log-probability
        return self.logprob_sum / max(len(self.tokens), 1)


def constrained_beam_search(
    model: GeneratorModel,
    prefix: TokenSeq,
    keywords: Sequence[str],
    config: GenerationConfig,
) -> list[TokenSeq]:
    """Grouped beam search forcing every keyword to appear verbatim.

    Hypotheses are bucketed by how many keyword runs they have satisfied and
    pruned to beam_width per bucket by length-normalized log-probability.
    Only finished hypotheses (end token emitted) satisfying every constraint
    are returned: the best k1, ties broken by token sequence. With no
    keywords this reduces to plain beam search over finished hypotheses.
    """
    runs = [tokenize(kw).tokens for kw in keywords if tokenize(kw).tokens]
    start = _Hypothesis(
        tokens=(), logprob_sum=0.0, constraints=ConstraintState.for_keywords(runs)
    )
    live = [start]
    finished: list[_Hypothesis] = []
    for _ in range(config.max_tokens):
        buckets: dict[int, list[_Hypothesis]] = defaultdict(list)
        for hyp in live:
            dist = model.next_token_distribution(prefix.tokens + hyp.tokens)
            for token, prob in dist.entries:
                if prob <= 0.0:
                    continue
                tokens = hyp.tokens + (token,)
                successor = _Hypothesis(
                    tokens=tokens,
                    logprob_sum=hyp.logprob_sum + math.log(prob),
                    constraints=hyp.constraints.advance(tokens),
                )
                if token == model.end_token:
                    if successor.constraints.complete:
                        finished.append(successor)
                else:
                    buckets[successor.constraints.count].append(successor)
        live = []
        for count in sorted(buckets):
            bucket = sorted(buckets[count], key=lambda h: (-h.score, h.tokens))
            live.extend(bucket[: config.beam_width])
        if not live:
            break
    finished.sort(key=lambda h: (-h.score, h.tokens))
    return [from_tokens(h.tokens) for h in finished[: config.k1]]
