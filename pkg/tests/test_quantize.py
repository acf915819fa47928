"""Tests for control-group quantization and training-record formatting."""

import io
import json
import random

import pytest

from pairdistill.errors import DegeneratePairError, InputError
from pairdistill.pairgen import PARALLEL, CandidatePair, PairScores
from pairdistill.quantize import (
    DatasetRecord,
    PairGroup,
    assign_group,
    comp_sim,
    format_training_record,
    record_from_pair,
    write_training_file,
)
from pairdistill.textmetrics import from_tokens


def _pair(x_tokens, y_tokens):
    return CandidatePair(
        context_id="c0",
        domain="news",
        provenance=PARALLEL,
        x=from_tokens(list(x_tokens)),
        y=from_tokens(list(y_tokens)),
    )


def _record(group=PairGroup.LONG_ABSTRACTIVE, **overrides):
    fields = dict(
        pair_id="p0",
        context="ctx",
        x="the original sentence",
        y="the summary",
        group=group,
        comp=0.6,
        sim=0.3,
        scores=PairScores(),
        stage="d0",
        domain="news",
    )
    fields.update(overrides)
    return DatasetRecord(**fields)


class TestCompSim:
    def test_identity(self):
        assert comp_sim(_pair("a b".split(), "a b".split())) == (1.0, 1.0)

    def test_disjoint_half_length(self):
        comp, sim = comp_sim(_pair("a b c d".split(), "e f".split()))
        assert comp == 0.5
        assert sim == 0.0

    def test_rouge_dominated_fixture(self):
        comp, sim = comp_sim(
            _pair("the cat sat on the mat".split(), "the cat on mat".split())
        )
        assert comp == pytest.approx(4 / 6)
        assert sim == pytest.approx(0.8)  # max(0.375 density, 0.8 rouge)

    def test_empty_side_raises(self):
        with pytest.raises(DegeneratePairError):
            comp_sim(_pair("a".split(), []))


class TestAssignGroup:
    @pytest.mark.parametrize(
        "comp,sim,expected",
        [
            (0.49, 0.59, PairGroup.SHORT_ABSTRACTIVE),
            (0.49, 0.6, PairGroup.SHORT_EXTRACTIVE),
            (0.5, 0.6, PairGroup.LONG_EXTRACTIVE),
            (0.5, 0.59, PairGroup.LONG_ABSTRACTIVE),
            (0.79, 0.99, PairGroup.LONG_EXTRACTIVE),
            (0.8, 0.0, PairGroup.PARAPHRASE),
            (0.8, 0.6, PairGroup.PARAPHRASE),
            (1.49, 0.6, PairGroup.PARAPHRASE),
            (0.8, 0.61, None),
            (1.5, 0.0, None),
            (1.6, 0.1, None),
            (2.5, 0.9, None),
        ],
    )
    def test_boundaries(self, comp, sim, expected):
        assert assign_group(comp, sim) is expected if expected is None else assign_group(comp, sim) == expected

    def test_rejects_out_of_range_inputs(self):
        with pytest.raises(InputError):
            assign_group(-0.1, 0.5)
        with pytest.raises(InputError):
            assign_group(0.5, 1.5)

    def test_partition_over_post_filter_regions(self):
        rng = random.Random(77)
        summary_seen = set()
        for _ in range(20000):
            comp = rng.uniform(1e-9, 0.8 - 1e-12)
            sim = rng.uniform(0.0, 1.0)
            group = assign_group(comp, sim)
            assert group in (
                PairGroup.SHORT_ABSTRACTIVE,
                PairGroup.SHORT_EXTRACTIVE,
                PairGroup.LONG_ABSTRACTIVE,
                PairGroup.LONG_EXTRACTIVE,
            )
            summary_seen.add(group)
        assert len(summary_seen) == 4
        for _ in range(20000):
            comp = rng.uniform(0.8, 1.5 - 1e-12)
            sim = rng.uniform(0.0, 0.6)
            assert assign_group(comp, sim) is PairGroup.PARAPHRASE


class TestRecords:
    def test_record_from_pair_consistent(self):
        pair = _pair("a b c d e f".split(), "g h i".split())
        record = record_from_pair(pair, "id-1", "some context", "d0")
        assert record is not None
        assert record.group is PairGroup.LONG_ABSTRACTIVE  # comp 0.5 starts the long band
        assert record.comp == 0.5
        assert record.sim == 0.0

    def test_ungroupable_pair_returns_none(self):
        pair = _pair("a b".split(), "a b c d".split())  # comp = 2.0
        assert record_from_pair(pair, "id-2", "ctx", "d0") is None

    def test_bad_stage_rejected(self):
        with pytest.raises(InputError):
            _record(stage="d7")

    def test_round_trip_preserves_unknown_fields(self):
        record = _record()
        payload = record.as_dict()
        payload["experimental_note"] = "kept"
        back = DatasetRecord.from_dict(json.loads(json.dumps(payload)))
        assert back.extra == {"experimental_note": "kept"}
        assert back.as_dict()["experimental_note"] == "kept"
        assert list(back.as_dict())[:10] == list(record.as_dict())

    def test_field_order_is_contractual(self):
        assert list(_record().as_dict()) == [
            "pair_id", "context", "x", "y", "group",
            "comp", "sim", "scores", "stage", "domain",
        ]


class TestFormatTrainingRecord:
    def test_long_abstractive_prefix(self):
        model_input, target = format_training_record(_record())
        assert model_input.startswith("Generate a long, abstractive summary")
        assert target == "the summary"

    def test_paraphrase_target_verbatim(self):
        record = _record(group=PairGroup.PARAPHRASE, y="word for word")
        _, target = format_training_record(record)
        assert target == "word for word"

    def test_round_trip_recovers_x(self):
        for group in PairGroup:
            record = _record(group=group, x="exact original text here")
            model_input, _ = format_training_record(record)
            prefix = group.control_code + " "
            assert model_input.startswith(prefix)
            assert model_input[len(prefix):] == "exact original text here"

    def test_duplicate_x_across_groups_stays_distinguishable(self):
        shared_x = "one sentence reused in two groups"
        inputs = {
            format_training_record(_record(group=group, x=shared_x))[0]
            for group in PairGroup
        }
        assert len(inputs) == len(PairGroup)  # control codes keep them apart

    def test_training_file_shape(self):
        buffer = io.StringIO()
        count = write_training_file([_record(), _record(group=PairGroup.PARAPHRASE)], buffer)
        assert count == 2
        lines = buffer.getvalue().splitlines()
        assert len(lines) == 2
        first = json.loads(lines[0])
        assert list(first) == ["input", "target", "group", "stage", "domain"]
