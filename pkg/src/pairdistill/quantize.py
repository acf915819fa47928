"""Quantization of filtered pairs into five control groups.

A pair's compression ratio and surface-form similarity place it in one of
{short, long} x {abstractive, extractive} summary groups or the paraphrase
group; each group carries the instruction string prepended to x when the
training file is written.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import TextIO

from .errors import DegeneratePairError, InputError
from .pairgen import CandidatePair, PairScores
from .textmetrics import compression_ratio, normalized_density, rouge_l


class PairGroup(Enum):
    SHORT_ABSTRACTIVE = "short_abstractive"
    SHORT_EXTRACTIVE = "short_extractive"
    LONG_ABSTRACTIVE = "long_abstractive"
    LONG_EXTRACTIVE = "long_extractive"
    PARAPHRASE = "paraphrase"

    @property
    def control_code(self) -> str:
        return CONTROL_CODES[self]


CONTROL_CODES = {
    PairGroup.SHORT_ABSTRACTIVE: "Generate a short, abstractive summary of the given sentence:",
    PairGroup.SHORT_EXTRACTIVE: "Generate a short, extractive summary of the given sentence:",
    PairGroup.LONG_ABSTRACTIVE: "Generate a long, abstractive summary of the given sentence:",
    PairGroup.LONG_EXTRACTIVE: "Generate a long, extractive summary of the given sentence:",
    PairGroup.PARAPHRASE: "Generate a paraphrase of the given sentence:",
}

SUMMARY_GROUPS = (
    PairGroup.SHORT_ABSTRACTIVE,
    PairGroup.SHORT_EXTRACTIVE,
    PairGroup.LONG_ABSTRACTIVE,
    PairGroup.LONG_EXTRACTIVE,
)

STAGES = ("d0", "d1")

# Group boundaries on (comp, sim). Lower bounds inclusive, uppers strict;
# the paraphrase similarity cap is inclusive so that every pair passing the
# paraphrase filter stack (sim <= 0.6) stays groupable.
SHORT_LONG_SPLIT = 0.5
SUMMARY_COMP_MAX = 0.8
PARAPHRASE_COMP_MAX = 1.5
SIM_SPLIT = 0.6


def comp_sim(pair: CandidatePair) -> tuple[float, float]:
    """Compression ratio and surface-form similarity of a pair."""
    if not pair.x or not pair.y:
        raise DegeneratePairError("comp_sim needs non-empty x and y")
    comp = compression_ratio(pair.x, pair.y)
    sim = max(normalized_density(pair.x, pair.y), rouge_l(pair.x, pair.y))
    return comp, sim


def assign_group(comp: float, sim: float) -> PairGroup | None:
    """Map (comp, sim) to its control group, or None outside every region."""
    if comp < 0:
        raise InputError(f"compression ratio must be >= 0, got {comp}")
    if not 0.0 <= sim <= 1.0:
        raise InputError(f"similarity must be in [0, 1], got {sim}")
    if comp < SHORT_LONG_SPLIT:
        return PairGroup.SHORT_ABSTRACTIVE if sim < SIM_SPLIT else PairGroup.SHORT_EXTRACTIVE
    if comp < SUMMARY_COMP_MAX:
        return PairGroup.LONG_ABSTRACTIVE if sim < SIM_SPLIT else PairGroup.LONG_EXTRACTIVE
    if comp < PARAPHRASE_COMP_MAX and sim <= SIM_SPLIT:
        return PairGroup.PARAPHRASE
    return None


@dataclass
class DatasetRecord:
    """One serialized filtered pair; the unit of the JSONL corpus."""

    pair_id: str
    context: str
    x: str
    y: str
    group: PairGroup
    comp: float
    sim: float
    scores: PairScores
    stage: str
    domain: str
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.stage not in STAGES:
            raise InputError(f"unknown stage {self.stage!r}")

    def as_dict(self) -> dict:
        # field order is part of the file contract
        out = {
            "pair_id": self.pair_id,
            "context": self.context,
            "x": self.x,
            "y": self.y,
            "group": self.group.value,
            "comp": self.comp,
            "sim": self.sim,
            "scores": self.scores.as_dict(),
            "stage": self.stage,
            "domain": self.domain,
        }
        out.update(self.extra)
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "DatasetRecord":
        known = {
            "pair_id",
            "context",
            "x",
            "y",
            "group",
            "comp",
            "sim",
            "scores",
            "stage",
            "domain",
        }
        missing = known - payload.keys()
        if missing:
            raise InputError(f"record is missing fields: {sorted(missing)}")
        scores = payload["scores"] or {}
        return cls(
            pair_id=payload["pair_id"],
            context=payload["context"],
            x=payload["x"],
            y=payload["y"],
            group=PairGroup(payload["group"]),
            comp=payload["comp"],
            sim=payload["sim"],
            scores=PairScores(**scores),
            stage=payload["stage"],
            domain=payload["domain"],
            extra={k: v for k, v in payload.items() if k not in known},
        )


def record_from_pair(
    pair: CandidatePair, pair_id: str, context_text: str, stage: str
) -> DatasetRecord | None:
    """Quantize a filtered pair into a dataset record; None when ungroupable."""
    comp, sim = comp_sim(pair)
    group = assign_group(comp, sim)
    if group is None:
        return None
    return DatasetRecord(
        pair_id=pair_id,
        context=context_text,
        x=pair.x.source_text,
        y=pair.y.source_text,
        group=group,
        comp=comp,
        sim=sim,
        scores=pair.scores,
        stage=stage,
        domain=pair.domain,
    )


def format_training_record(record: DatasetRecord) -> tuple[str, str]:
    """Control-code training example: (instruction + x, y)."""
    if record.group is None:
        raise InputError("record has no group; quantize it first")
    return f"{record.group.control_code} {record.x}", record.y


def write_training_file(records, stream: TextIO) -> int:
    """One training example per line: {input, target, group, stage, domain}."""
    count = 0
    for record in records:
        model_input, target = format_training_record(record)
        line = {
            "input": model_input,
            "target": target,
            "group": record.group.value,
            "stage": record.stage,
            "domain": record.domain,
        }
        stream.write(json.dumps(line, ensure_ascii=False) + "\n")
        count += 1
    return count
