"""Two-stage orchestration and run reporting.

Stage 0 samples contexts, overgenerates candidate pairs, runs the
summarization and paraphrase filter stacks independently over the same pool,
quantizes survivors, and streams records to JSONL with a checkpoint after
every context batch. The self-distillation stage feeds freshly sampled
sentences through a task model, one request per control group, and filters
each candidate with its group's task mode.

Everything a run emits (dataset, report, histogram CSV) is a pure function
of the seed, the config, and the backend set: fan-out over workers merges
results back in context order, so worker count never changes the bytes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from bisect import bisect_right
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .backends import BackendSet
from .config import EngineConfig, serialize_config
from .dataio import read_dataset, record_line
from .decoding import sample_sentences
from .errors import InputError, TransportError
from .filters import (
    PARAPHRASE,
    SUMMARIZATION,
    FilterCensus,
    MemoizedScorer,
    abstractiveness_filter,
    apply_filters,
    entailment_filter,
    length_filter,
)
from .pairgen import (
    PROVENANCES,
    SELF_DISTILL,
    CandidatePair,
    PairScores,
    PoolCensus,
    pairs_for_context,
    sample_contexts,
)
from .pairgen import DEFAULT_PREFIX_TEMPLATES
from .quantize import (
    SUMMARY_GROUPS,
    DatasetRecord,
    PairGroup,
    record_from_pair,
)
from .textmetrics import msttr, ngram_entropy, rouge_l, tokenize

logger = logging.getLogger(__name__)

GROUP_ORDER = (
    PairGroup.SHORT_ABSTRACTIVE,
    PairGroup.SHORT_EXTRACTIVE,
    PairGroup.LONG_ABSTRACTIVE,
    PairGroup.LONG_EXTRACTIVE,
    PairGroup.PARAPHRASE,
)

DEFAULT_ROUGE_EDGES = tuple(i / 10 for i in range(11))
DEFAULT_COMP_EDGES = tuple(i / 10 for i in range(16))


@dataclass
class RunManifest:
    """Run-level configuration snapshot plus all conservation counters."""

    stage: str
    backend: str
    seed: int
    domains: tuple[str, ...]
    contexts_requested: int
    workers: int
    batch_size: int
    generation: dict
    filters: dict
    endpoints: dict[str, str] = field(default_factory=dict)
    contexts_sampled: int = 0
    failed_contexts: int = 0
    failed_inputs: int = 0
    pool: PoolCensus = field(default_factory=PoolCensus)
    summ_census: FilterCensus = field(default_factory=FilterCensus)
    para_census: FilterCensus = field(default_factory=FilterCensus)
    groups: dict[str, int] = field(
        default_factory=lambda: {group.value: 0 for group in GROUP_ORDER}
    )
    records_emitted: int = 0

    def census_for(self, mode: str) -> FilterCensus:
        if mode == SUMMARIZATION:
            return self.summ_census
        if mode == PARAPHRASE:
            return self.para_census
        raise InputError(f"unknown mode {mode!r}")

    def conserved(self) -> bool:
        return self.summ_census.conserved() and self.para_census.conserved()

    def as_dict(self) -> dict:
        # workers and batch_size are execution details: they may never change
        # the output bytes, so they stay out of the serialized report (as do
        # wall-clock timestamps, which live in logs only)
        return {
            "stage": self.stage,
            "backend": self.backend,
            "seed": self.seed,
            "domains": list(self.domains),
            "contexts_requested": self.contexts_requested,
            "contexts_sampled": self.contexts_sampled,
            "failed_contexts": self.failed_contexts,
            "failed_inputs": self.failed_inputs,
            "generation": self.generation,
            "filters": self.filters,
            "endpoints": dict(sorted(self.endpoints.items())),
            "records_emitted": self.records_emitted,
            "groups": self.groups,
        }


def _generation_snapshot(config: EngineConfig) -> dict:
    gen = config.generation
    return {
        "k1": gen.k1,
        "k2": gen.k2,
        "top_p": gen.top_p,
        "beam_width": gen.beam_width,
        "max_keywords": gen.max_keywords,
        "context_sentences": list(gen.context_sentences),
        "max_tokens": gen.max_tokens,
        "seed": gen.seed,
    }


def _filter_snapshot(config: EngineConfig) -> dict:
    return {
        "summarization": {
            "tau_entail": config.summarization.tau_entail,
            "tau_comp_ratio": config.summarization.tau_comp_ratio,
        },
        "paraphrase": {
            "tau_entail": config.paraphrase.tau_entail,
            "tau_comp_lo": config.paraphrase.tau_comp_lo,
            "tau_comp_hi": config.paraphrase.tau_comp_hi,
            "tau_abstract": config.paraphrase.tau_abstract,
        },
    }


def new_manifest(
    stage: str, config: EngineConfig, backends: BackendSet, contexts: int
) -> RunManifest:
    return RunManifest(
        stage=stage,
        backend=backends.name,
        seed=config.generation.seed,
        domains=config.domains,
        contexts_requested=contexts,
        workers=config.workers,
        batch_size=config.batch_size,
        generation=_generation_snapshot(config),
        filters=_filter_snapshot(config),
        endpoints={role: ep.base_url for role, ep in config.endpoints.items()},
    )


def sample_efficiency(manifest: RunManifest, mode: str) -> dict[str, float]:
    """Filter survivors per context, reported per provenance plus overall."""
    if manifest.contexts_sampled <= 0:
        raise InputError("sample efficiency needs at least one sampled context")
    census = manifest.census_for(mode)
    out = {
        provenance: census.survivors[provenance] / manifest.contexts_sampled
        for provenance in PROVENANCES
    }
    out["overall"] = sum(census.survivors.values()) / manifest.contexts_sampled
    return out


@dataclass(frozen=True)
class StrategyHistogram:
    """2-D (compression ratio x ROUGE-L) strategy distribution."""

    rouge_edges: tuple[float, ...]
    comp_edges: tuple[float, ...]
    counts: tuple[tuple[int, ...], ...]  # rows: comp bins, cols: rouge bins

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def as_dict(self) -> dict:
        return {
            "rouge_edges": list(self.rouge_edges),
            "comp_edges": list(self.comp_edges),
            "counts": [list(row) for row in self.counts],
            "total": self.total,
        }

    def to_csv(self) -> str:
        header = ["comp\\rouge"] + [
            f"[{self.rouge_edges[i]:.2f},{self.rouge_edges[i + 1]:.2f})"
            for i in range(len(self.rouge_edges) - 1)
        ]
        lines = [",".join(header)]
        for r, row in enumerate(self.counts):
            label = f"[{self.comp_edges[r]:.2f},{self.comp_edges[r + 1]:.2f})"
            lines.append(",".join([label] + [str(c) for c in row]))
        return "\n".join(lines) + "\n"


def _bin_index(edges: Sequence[float], value: float) -> int:
    # half-open bins, last bin closed above
    idx = bisect_right(edges, value) - 1
    return min(max(idx, 0), len(edges) - 2)


def strategy_histogram(
    records: Sequence[DatasetRecord],
    rouge_edges: Sequence[float] = DEFAULT_ROUGE_EDGES,
    comp_edges: Sequence[float] = DEFAULT_COMP_EDGES,
) -> StrategyHistogram:
    if not records:
        raise InputError("strategy histogram needs a non-empty dataset")
    for edges in (rouge_edges, comp_edges):
        if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise InputError("histogram edges must be strictly increasing")
    grid = [[0] * (len(rouge_edges) - 1) for _ in range(len(comp_edges) - 1)]
    for record in records:
        rouge = rouge_l(tokenize(record.x), tokenize(record.y))
        grid[_bin_index(comp_edges, record.comp)][_bin_index(rouge_edges, rouge)] += 1
    return StrategyHistogram(
        rouge_edges=tuple(rouge_edges),
        comp_edges=tuple(comp_edges),
        counts=tuple(tuple(row) for row in grid),
    )


def lexical_diversity_report(
    records: Sequence[DatasetRecord], msttr_segment_len: int = 100
) -> dict:
    """1/2/3-gram entropy and MSTTR over x+y pooled and per side."""
    if not records:
        raise InputError("diversity report needs a non-empty dataset")
    xs, ys, pooled = [], [], []
    for record in records:
        xt, yt = tokenize(record.x), tokenize(record.y)
        xs.append(xt)
        ys.append(yt)
        pooled.extend((xt, yt))

    def metrics(corpus):
        out = {}
        for n in (1, 2, 3):
            try:
                out[f"h{n}"] = ngram_entropy(corpus, n)
            except InputError:
                out[f"h{n}"] = None
        try:
            out["msttr"] = msttr(corpus, msttr_segment_len)
            out["msttr_omitted"] = False
        except InputError:
            out["msttr"] = None
            out["msttr_omitted"] = True
        return out

    return {
        "msttr_segment_len": msttr_segment_len,
        "pooled": metrics(pooled),
        "x_side": metrics(xs),
        "y_side": metrics(ys),
    }


# ---------------------------------------------------------------------------
# stage 0


def _clone_for_stack(pair: CandidatePair) -> CandidatePair:
    return CandidatePair(
        context_id=pair.context_id,
        domain=pair.domain,
        provenance=pair.provenance,
        x=pair.x,
        y=pair.y,
        scores=PairScores(),
        pair_id=pair.pair_id,
    )


@dataclass
class _ContextResult:
    sampled: bool = False
    failed: bool = False
    pool: PoolCensus = field(default_factory=PoolCensus)
    summ_census: FilterCensus = field(default_factory=FilterCensus)
    para_census: FilterCensus = field(default_factory=FilterCensus)
    records: list[DatasetRecord] = field(default_factory=list)


def _provenance_tag(provenance: str) -> str:
    return {"sequential": "seq", "parallel": "par", "self_distill": "sd"}[provenance]


def _process_context(
    domain: str,
    domain_index: int,
    config: EngineConfig,
    backends: BackendSet,
    scorer: MemoizedScorer,
) -> _ContextResult:
    result = _ContextResult()
    try:
        model = backends.generator_for(domain)
        (context,) = sample_contexts(
            model, domain, 1, config.generation, start_index=domain_index
        )
        pairs = pairs_for_context(model, context, config.generation)
    except TransportError:
        # backend outage: abort the run; the last completed batch is
        # checkpointed, so the caller can resume
        raise
    except Exception:
        logger.exception("context %s-%06d failed", domain, domain_index)
        result.failed = True
        return result
    result.sampled = True
    serials: dict[str, int] = {}
    for pair in pairs:
        tag = _provenance_tag(pair.provenance)
        serial = serials.get(tag, 0)
        serials[tag] = serial + 1
        pair.pair_id = f"{context.id}-{tag}-{serial:04d}"
        result.pool.record(pair)

    for mode, census in (
        (SUMMARIZATION, result.summ_census),
        (PARAPHRASE, result.para_census),
    ):
        stack_config = (
            config.summarization if mode == SUMMARIZATION else config.paraphrase
        )
        clones = [_clone_for_stack(p) for p in pairs]
        survivors = apply_filters(clones, scorer, stack_config, census=census)
        for pair in survivors:
            record = record_from_pair(
                pair, pair.pair_id, context.text.source_text, stage="d0"
            )
            if record is None:
                # cannot happen for stack survivors; guard stays for audit
                logger.error("filter survivor %s fell outside all groups", pair.pair_id)
                continue
            result.records.append(record)
    return result


def _fingerprint(config: EngineConfig, backends: BackendSet, stage: str, contexts: int) -> str:
    payload = "\x1e".join(
        [serialize_config(config), backends.name, stage, str(contexts)]
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _checkpoint_path(out_path: Path) -> Path:
    return out_path.with_name(out_path.name + ".ckpt.json")


def _write_checkpoint(
    path: Path, fingerprint: str, next_batch: int, bytes_written: int, manifest: RunManifest
) -> None:
    payload = {
        "fingerprint": fingerprint,
        "next_batch": next_batch,
        "bytes_written": bytes_written,
        "contexts_sampled": manifest.contexts_sampled,
        "failed_contexts": manifest.failed_contexts,
        "records_emitted": manifest.records_emitted,
        "pool": manifest.pool.as_dict(),
        "summ_census": manifest.summ_census.as_dict(),
        "para_census": manifest.para_census.as_dict(),
        "groups": manifest.groups,
    }
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(payload), encoding="utf-8")
    os.replace(tmp, path)


def _restore_checkpoint(path: Path, fingerprint: str, manifest: RunManifest, out_path: Path) -> int:
    payload = json.loads(path.read_text(encoding="utf-8"))
    if payload["fingerprint"] != fingerprint:
        raise InputError(
            "checkpoint does not match this run's config; "
            "remove it or rerun without --resume"
        )
    size = out_path.stat().st_size if out_path.exists() else 0
    if size < payload["bytes_written"]:
        raise InputError("output file is shorter than the checkpoint records")
    if size > payload["bytes_written"]:
        # drop the partially written batch
        with out_path.open("rb+") as handle:
            handle.truncate(payload["bytes_written"])
    manifest.contexts_sampled = payload["contexts_sampled"]
    manifest.failed_contexts = payload["failed_contexts"]
    manifest.records_emitted = payload["records_emitted"]
    manifest.pool = PoolCensus.from_dict(payload["pool"])
    manifest.summ_census = FilterCensus.from_dict(payload["summ_census"])
    manifest.para_census = FilterCensus.from_dict(payload["para_census"])
    manifest.groups = payload["groups"]
    return payload["next_batch"]


def run_stage0(
    config: EngineConfig,
    backends: BackendSet,
    contexts: int,
    out_path: str | Path,
    resume: bool = False,
    max_batches: int | None = None,
) -> RunManifest:
    """Decoding-guided distillation: contexts -> pool -> filters -> D_0.

    Emits records to `out_path` batch by batch with a sidecar checkpoint;
    `resume=True` continues an interrupted run. `max_batches` stops early
    (checkpoint kept), which is how interruption is exercised in tests.
    """
    if contexts < 1:
        raise InputError("stage 0 needs at least one context")
    out_path = Path(out_path)
    manifest = new_manifest("d0", config, backends, contexts)
    fingerprint = _fingerprint(config, backends, "d0", contexts)
    ckpt_path = _checkpoint_path(out_path)

    domains = config.domains
    assignments: list[tuple[str, int]] = []
    per_domain: dict[str, int] = {}
    for i in range(contexts):
        domain = domains[i % len(domains)]
        assignments.append((domain, per_domain.get(domain, 0)))
        per_domain[domain] = per_domain.get(domain, 0) + 1

    batches = [
        assignments[i : i + config.batch_size]
        for i in range(0, len(assignments), config.batch_size)
    ]
    start_batch = 0
    if resume and ckpt_path.exists():
        start_batch = _restore_checkpoint(ckpt_path, fingerprint, manifest, out_path)
        logger.info("resuming %s at batch %d", out_path, start_batch)
    elif out_path.exists() and not resume:
        out_path.unlink()

    scorer = MemoizedScorer(backends.scorer)
    mode = "ab" if start_batch else "wb"
    stop_batch = len(batches) if max_batches is None else min(len(batches), start_batch + max_batches)
    with out_path.open(mode) as sink:
        bytes_written = sink.tell()
        for batch_index in range(start_batch, stop_batch):
            batch = batches[batch_index]
            if config.workers > 1:
                with ThreadPoolExecutor(max_workers=config.workers) as pool:
                    results = list(
                        pool.map(
                            lambda job: _process_context(
                                job[0], job[1], config, backends, scorer
                            ),
                            batch,
                        )
                    )
            else:
                results = [
                    _process_context(domain, index, config, backends, scorer)
                    for domain, index in batch
                ]
            for result in results:
                manifest.contexts_sampled += int(result.sampled)
                manifest.failed_contexts += int(result.failed)
                manifest.pool.merge(result.pool)
                manifest.summ_census.merge(result.summ_census)
                manifest.para_census.merge(result.para_census)
                for record in result.records:
                    sink.write(record_line(record).encode("utf-8"))
                    manifest.groups[record.group.value] += 1
                    manifest.records_emitted += 1
            sink.flush()
            bytes_written = sink.tell()
            _write_checkpoint(ckpt_path, fingerprint, batch_index + 1, bytes_written, manifest)
    if stop_batch == len(batches):
        finalize_run(manifest, out_path)
        ckpt_path.unlink(missing_ok=True)
    return manifest


# ---------------------------------------------------------------------------
# self-distillation


def run_self_distill(
    config: EngineConfig,
    backends: BackendSet,
    inputs: int,
    out_path: str | Path,
) -> RunManifest:
    """Sample inputs, request one y per control group, filter, emit D_1."""
    if inputs < 1:
        raise InputError("self-distillation needs at least one input sentence")
    if backends.task_model is None:
        raise InputError("self-distillation needs a task model backend")
    out_path = Path(out_path)
    manifest = new_manifest("d1", config, backends, inputs)
    scorer = MemoizedScorer(backends.scorer)
    task = backends.task_model

    with out_path.open("wb") as sink:
        for i in range(inputs):
            domain = config.domains[i % len(config.domains)]
            model = backends.generator_for(domain)
            template = tokenize(DEFAULT_PREFIX_TEMPLATES[domain])
            try:
                (x,) = sample_sentences(
                    model, template, 1, config.generation, stream=f"selfdistill:{domain}:{i}"
                )
            except Exception:
                logger.exception("input sampling failed for %s #%d", domain, i)
                manifest.failed_inputs += 1
                continue
            manifest.contexts_sampled += 1
            input_id = f"sd-{domain}-{i:06d}"
            candidates: list[tuple[PairGroup, CandidatePair]] = []
            try:
                for gi, group in enumerate(GROUP_ORDER):
                    y_text = task.infer(x.source_text, group.control_code)
                    y = tokenize(y_text)
                    if not y.tokens:
                        raise InputError(f"task model returned empty output for {group.value}")
                    candidates.append(
                        (
                            group,
                            CandidatePair(
                                context_id=input_id,
                                domain=domain,
                                provenance=SELF_DISTILL,
                                x=x,
                                y=y,
                                pair_id=f"{input_id}-g{gi}",
                            ),
                        )
                    )
            except Exception:
                logger.exception("task model failed for input %s; skipping it", input_id)
                manifest.failed_inputs += 1
                continue
            for group, pair in candidates:
                mode = SUMMARIZATION if group in SUMMARY_GROUPS else PARAPHRASE
                stack_config = (
                    config.summarization if mode == SUMMARIZATION else config.paraphrase
                )
                census = manifest.census_for(mode)
                census.input[SELF_DISTILL] += 1
                manifest.pool.record(pair)
                if not length_filter(pair, stack_config):
                    census.failed["length"][SELF_DISTILL] += 1
                    continue
                census.passed["length"][SELF_DISTILL] += 1
                if mode == PARAPHRASE:
                    if not abstractiveness_filter(pair, stack_config):
                        census.failed["abstract"][SELF_DISTILL] += 1
                        continue
                    census.passed["abstract"][SELF_DISTILL] += 1
                entail = entailment_filter(pair, scorer, stack_config)
                if entail is None:
                    census.quarantined[SELF_DISTILL] += 1
                    continue
                if not entail:
                    census.failed["entail"][SELF_DISTILL] += 1
                    continue
                census.passed["entail"][SELF_DISTILL] += 1
                census.survivors[SELF_DISTILL] += 1
                record = record_from_pair(pair, pair.pair_id, "", stage="d1")
                if record is None:
                    logger.error("d1 survivor %s fell outside all groups", pair.pair_id)
                    continue
                sink.write(record_line(record).encode("utf-8"))
                manifest.groups[record.group.value] += 1
                manifest.records_emitted += 1
    finalize_run(manifest, out_path)
    return manifest


# ---------------------------------------------------------------------------
# reports


def report_paths(out_path: str | Path) -> tuple[Path, Path]:
    out_path = Path(out_path)
    return (
        out_path.with_name(out_path.stem + ".report.json"),
        out_path.with_name(out_path.stem + ".hist.csv"),
    )


def build_report(manifest: RunManifest, records: Sequence[DatasetRecord]) -> dict:
    report = {
        "manifest": manifest.as_dict(),
        "pool": manifest.pool.as_dict(),
        "census": {
            "summarization": manifest.summ_census.as_dict(),
            "paraphrase": manifest.para_census.as_dict(),
        },
        "efficiency": {
            "summarization": sample_efficiency(manifest, SUMMARIZATION),
            "paraphrase": sample_efficiency(manifest, PARAPHRASE),
        }
        if manifest.contexts_sampled
        else None,
        "histogram": strategy_histogram(records).as_dict() if records else None,
        "diversity": lexical_diversity_report(records) if records else None,
    }
    return report


def finalize_run(manifest: RunManifest, out_path: Path) -> dict:
    records = list(read_dataset(out_path)) if out_path.exists() else []
    report = build_report(manifest, records)
    report_path, csv_path = report_paths(out_path)
    report_path.write_text(
        json.dumps(report, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    if records:
        csv_path.write_text(strategy_histogram(records).to_csv(), encoding="utf-8")
    return report
