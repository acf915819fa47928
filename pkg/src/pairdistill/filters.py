"""Post-generation filter stack, composed per task mode.

Summarization keeps pairs that are entailed one-way and strictly shorter;
paraphrase adds bidirectional entailment, a length band, and a surface-form
abstractiveness cap. The diversity filter then deduplicates each per-context
batch by connected components of the mutual-entailment graph, keeping the
pair with the strongest own entailment score in every component.

Boundary semantics follow the defining inequalities exactly: the entailment
threshold is inclusive (>=), the summarization length bound is strict (<),
the paraphrase band is inclusive below and strict above, the abstractiveness
cap is inclusive (<=), and duplicate edges require strictly exceeding the
threshold (>).
"""

from __future__ import annotations

import logging
from collections import Counter, deque
from dataclasses import dataclass
from itertools import groupby
from typing import Iterable, Iterator, Sequence

from .errors import InputError
from .lmcore import EntailmentScorer
from .pairgen import PROVENANCES, CandidatePair
from .textmetrics import normalized_density, rouge_l

logger = logging.getLogger(__name__)

SUMMARIZATION = "summarization"
PARAPHRASE = "paraphrase"
MODES = (SUMMARIZATION, PARAPHRASE)

FILTER_NAMES = ("length", "abstract", "entail", "diversity")


@dataclass(frozen=True)
class FilterConfig:
    mode: str = SUMMARIZATION
    tau_entail: float = 0.9
    tau_comp_ratio: float = 0.8
    tau_comp_lo: float = 0.8
    tau_comp_hi: float = 1.5
    tau_abstract: float = 0.6

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise InputError(f"unknown filter mode {self.mode!r}")
        for name in ("tau_entail", "tau_abstract"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InputError(f"{name} must be in [0, 1], got {value}")
        if self.tau_comp_ratio <= 0:
            raise InputError("tau_comp_ratio must be positive")
        if not self.tau_comp_lo < self.tau_comp_hi:
            raise InputError("paraphrase band needs tau_comp_lo < tau_comp_hi")


@dataclass
class FilterVerdict:
    """Per-filter outcomes; None marks a filter that was not applicable."""

    entail: bool | None = None
    length: bool | None = None
    abstract: bool | None = None
    diversity: bool | None = None
    quarantined: bool = False

    @property
    def passed(self) -> bool:
        if self.quarantined:
            return False
        applicable = [v for v in (self.entail, self.length, self.abstract, self.diversity)
                      if v is not None]
        return all(applicable)


class MemoizedScorer:
    """Caches (premise, hypothesis) scores; failures are never cached."""

    def __init__(self, scorer: EntailmentScorer):
        self._scorer = scorer
        self._memo: dict[tuple[str, str], float] = {}

    def score(self, premise: str, hypothesis: str) -> float:
        key = (premise, hypothesis)
        cached = self._memo.get(key)
        if cached is None:
            cached = self._scorer.score(premise, hypothesis)
            self._memo[key] = cached
        return cached


def _memoized(scorer: EntailmentScorer) -> MemoizedScorer:
    return scorer if isinstance(scorer, MemoizedScorer) else MemoizedScorer(scorer)


def length_filter(pair: CandidatePair, config: FilterConfig) -> bool:
    nx, ny = len(pair.x), len(pair.y)
    if nx == 0:
        raise InputError("length filter needs a non-empty x")
    pair.scores.comp = ny / nx
    if config.mode == SUMMARIZATION:
        return ny < nx * config.tau_comp_ratio
    return nx * config.tau_comp_lo <= ny < nx * config.tau_comp_hi


def abstractiveness_filter(pair: CandidatePair, config: FilterConfig) -> bool:
    if config.mode != PARAPHRASE:
        raise InputError("abstractiveness filter applies to paraphrase mode only")
    r = rouge_l(pair.x, pair.y)
    d = normalized_density(pair.x, pair.y)
    pair.scores.rouge_l = r
    pair.scores.density_norm = d
    return max(d, r) <= config.tau_abstract


def entailment_filter(
    pair: CandidatePair, scorer: EntailmentScorer, config: FilterConfig
) -> bool | None:
    """True/False verdict, or None when the scorer failed (quarantine)."""
    try:
        forward = scorer.score(pair.x.source_text, pair.y.source_text)
        pair.scores.entail_xy = forward
        if config.mode == PARAPHRASE:
            backward = scorer.score(pair.y.source_text, pair.x.source_text)
            pair.scores.entail_yx = backward
            return min(forward, backward) >= config.tau_entail
        return forward >= config.tau_entail
    except Exception:
        logger.exception("entailment scorer failed; quarantining pair")
        return None


def pair_verdict(
    pair: CandidatePair, scorer: EntailmentScorer, config: FilterConfig
) -> FilterVerdict:
    """All applicable per-pair indicators, evaluated without short-circuit.

    Diversity is a set-level filter and stays None here.
    """
    verdict = FilterVerdict()
    verdict.length = length_filter(pair, config)
    if config.mode == PARAPHRASE:
        verdict.abstract = abstractiveness_filter(pair, config)
    entail = entailment_filter(pair, scorer, config)
    if entail is None:
        verdict.quarantined = True
    else:
        verdict.entail = entail
    return verdict


def _own_entail_score(pair: CandidatePair, scorer: MemoizedScorer) -> float:
    if pair.scores.entail_xy is not None:
        return pair.scores.entail_xy
    try:
        value = scorer.score(pair.x.source_text, pair.y.source_text)
    except Exception:
        logger.exception("scorer failed on own-entailment probe; ranking pair last")
        return -1.0
    pair.scores.entail_xy = value
    return value


def diversity_filter(
    pairs: Sequence[CandidatePair], scorer: EntailmentScorer, config: FilterConfig
) -> list[CandidatePair]:
    """Keep one pair per connected component of the duplicate graph.

    Two pairs are duplicates when either their x sides or their y sides
    entail each other strictly above tau_entail, probed in both orders.
    Within a component the pair with the largest own P(x => y) survives,
    earliest input position breaking ties; output preserves input order.
    """
    pairs = list(pairs)
    if len(pairs) <= 1:
        return pairs
    if len({p.context_id for p in pairs}) > 1:
        raise InputError("diversity filter expects pairs sharing one context")
    memo = _memoized(scorer)
    n = len(pairs)

    def probe(premise: str, hypothesis: str) -> bool:
        try:
            return memo.score(premise, hypothesis) > config.tau_entail
        except Exception:
            logger.exception("scorer failed on duplicate probe; assuming no edge")
            return False

    adjacency: list[set[int]] = [set() for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if probe(pairs[i].x.source_text, pairs[j].x.source_text) or probe(
                pairs[i].y.source_text, pairs[j].y.source_text
            ):
                adjacency[i].add(j)
                adjacency[j].add(i)

    visited = [False] * n
    keep: set[int] = set()
    for root in range(n):
        if visited[root]:
            continue
        component = []
        queue = deque([root])
        visited[root] = True
        while queue:
            node = queue.popleft()
            component.append(node)
            for neighbor in adjacency[node]:
                if not visited[neighbor]:
                    visited[neighbor] = True
                    queue.append(neighbor)
        best = max(component, key=lambda idx: (_own_entail_score(pairs[idx], memo), -idx))
        keep.add(best)
    return [pair for idx, pair in enumerate(pairs) if idx in keep]


class FilterCensus:
    """Pass/fail counts per filter and provenance; conservation auditable."""

    def __init__(self) -> None:
        self.input: Counter[str] = Counter()
        self.passed: dict[str, Counter[str]] = {name: Counter() for name in FILTER_NAMES}
        self.failed: dict[str, Counter[str]] = {name: Counter() for name in FILTER_NAMES}
        self.quarantined: Counter[str] = Counter()
        self.survivors: Counter[str] = Counter()

    def conserved(self) -> bool:
        for provenance in PROVENANCES:
            lost = sum(self.failed[name][provenance] for name in FILTER_NAMES)
            total = self.survivors[provenance] + lost + self.quarantined[provenance]
            if total != self.input[provenance]:
                return False
        return True

    def merge(self, other: "FilterCensus") -> None:
        self.input.update(other.input)
        self.quarantined.update(other.quarantined)
        self.survivors.update(other.survivors)
        for name in FILTER_NAMES:
            self.passed[name].update(other.passed[name])
            self.failed[name].update(other.failed[name])

    def as_dict(self) -> dict:
        def counts(counter: Counter[str]) -> dict[str, int]:
            return {prov: counter[prov] for prov in PROVENANCES}

        return {
            "input": counts(self.input),
            "filters": {
                name: {"passed": counts(self.passed[name]), "failed": counts(self.failed[name])}
                for name in FILTER_NAMES
            },
            "quarantined": counts(self.quarantined),
            "survivors": counts(self.survivors),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "FilterCensus":
        census = cls()
        census.input.update(payload["input"])
        census.quarantined.update(payload["quarantined"])
        census.survivors.update(payload["survivors"])
        for name in FILTER_NAMES:
            census.passed[name].update(payload["filters"][name]["passed"])
            census.failed[name].update(payload["filters"][name]["failed"])
        return census


def apply_filters(
    pool: Iterable[CandidatePair],
    scorer: EntailmentScorer,
    config: FilterConfig,
    census: FilterCensus | None = None,
) -> Iterator[CandidatePair]:
    """Run the stack cheap-to-expensive over a context-grouped pool.

    Order: length, abstractiveness (paraphrase only), entailment, then the
    per-context diversity dedup over what remains. Scorer failures quarantine
    the affected pair instead of dropping it silently.
    """
    census = census if census is not None else FilterCensus()
    memo = _memoized(scorer)
    for _, group in groupby(pool, key=lambda p: p.context_id):
        batch: list[CandidatePair] = []
        for pair in group:
            census.input[pair.provenance] += 1
            if not length_filter(pair, config):
                census.failed["length"][pair.provenance] += 1
                continue
            census.passed["length"][pair.provenance] += 1
            if config.mode == PARAPHRASE:
                if not abstractiveness_filter(pair, config):
                    census.failed["abstract"][pair.provenance] += 1
                    continue
                census.passed["abstract"][pair.provenance] += 1
            entail = entailment_filter(pair, memo, config)
            if entail is None:
                census.quarantined[pair.provenance] += 1
                continue
            if not entail:
                census.failed["entail"][pair.provenance] += 1
                continue
            census.passed["entail"][pair.provenance] += 1
            batch.append(pair)
        kept = diversity_filter(batch, memo, config)
        kept_ids = {id(p) for p in kept}
        for pair in batch:
            if id(pair) in kept_ids:
                census.passed["diversity"][pair.provenance] += 1
                census.survivors[pair.provenance] += 1
            else:
                census.failed["diversity"][pair.provenance] += 1
        yield from kept
