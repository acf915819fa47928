"""Command-line entry points.

Exit codes: 0 success, 1 input error, 2 backend failure, 3 validation
failure. The toy backend runs the full pipeline in-process with the
deterministic doubles; the remote backend wires the HTTP clients from the
config file's endpoint sections.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .backends import TASK_STUBS, BackendSet, remote_backends, toy_backends
from .config import EngineConfig, load_config, with_overrides
from .dataio import read_dataset, write_dataset
from .decoding import GenerationConfig
from .errors import (
    DatasetValidationError,
    InputError,
    PairdistillError,
    ProtocolError,
    TransportError,
)
from .filters import (
    PARAPHRASE,
    SUMMARIZATION,
    FilterCensus,
    MemoizedScorer,
    apply_filters,
)
from .pairgen import (
    DOMAINS,
    PROVENANCES,
    CandidatePair,
    PairScores,
    pairs_for_context,
    sample_contexts,
)
from .pipeline import (
    GROUP_ORDER,
    lexical_diversity_report,
    report_paths,
    run_self_distill,
    run_stage0,
    strategy_histogram,
)
from .quantize import (
    SUMMARY_GROUPS,
    DatasetRecord,
    PairGroup,
    assign_group,
    comp_sim,
    record_from_pair,
    write_training_file,
)
from .textmetrics import from_tokens, normalized_density, rouge_l, tokenize

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_BACKEND = 2
EXIT_VALIDATION = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="engine config file (INI format)")
    parser.add_argument("--seed", type=int, help="override the generation seed")
    parser.add_argument(
        "--backend", choices=("toy", "remote"), default="toy", help="model backend"
    )
    parser.add_argument("--out", type=Path, help="output path")
    parser.add_argument("--domains", help="comma-separated domain list")
    parser.add_argument("--workers", type=int, help="parallel context workers")
    parser.add_argument("--batch-size", type=int, help="contexts per checkpoint batch")
    parser.add_argument("--k1", type=int, help="constrained candidates per x")
    parser.add_argument("--k2", type=int, help="parallel pool size per context")
    parser.add_argument("--top-p", type=float, help="nucleus threshold")
    parser.add_argument("--max-tokens", type=int, help="per-sentence token cap")
    parser.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairdistill",
        description="Distill sentence summarization/paraphrase datasets from language models.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", metavar="command")

    sub = commands.add_parser("gen-contexts", help="sample domain contexts to JSONL")
    _add_common(sub)
    sub.add_argument("--contexts", type=int, required=True)

    sub = commands.add_parser("gen-pairs", help="generate candidate pairs from contexts")
    _add_common(sub)
    sub.add_argument("--contexts-file", type=Path, required=True)
    sub.add_argument(
        "--modes", default="sequential,parallel", help="comma list of generation modes"
    )

    sub = commands.add_parser("filter", help="run one task's filter stack over a pool")
    _add_common(sub)
    sub.add_argument("--pool", type=Path, required=True)
    sub.add_argument("--mode", choices=(SUMMARIZATION, PARAPHRASE), required=True)

    sub = commands.add_parser("quantize", help="quantize filtered pairs / format training file")
    _add_common(sub)
    sub.add_argument("--pairs", type=Path, required=True, help="filtered pairs or records JSONL")
    sub.add_argument("--stage", choices=("d0", "d1"), default="d0")
    sub.add_argument("--train-out", type=Path, help="also emit a control-code training file")

    sub = commands.add_parser("distill", help="stage 0 end-to-end: contexts to D_0")
    _add_common(sub)
    sub.add_argument("--contexts", type=int, required=True)
    sub.add_argument("--resume", action="store_true", help="continue from a checkpoint")

    sub = commands.add_parser("self-distill", help="stage 1: task-model self-distillation")
    _add_common(sub)
    sub.add_argument("--inputs", type=int, required=True)
    sub.add_argument(
        "--task-stub", choices=TASK_STUBS, default="truncate-half",
        help="toy task model behavior",
    )

    sub = commands.add_parser("stats", help="histogram, lexical diversity, efficiency")
    _add_common(sub)
    sub.add_argument("dataset", type=Path)

    sub = commands.add_parser("validate", help="re-check filter predicates on a dataset")
    _add_common(sub)
    sub.add_argument("dataset", type=Path)

    return parser


def _engine_config(args: argparse.Namespace) -> EngineConfig:
    config = load_config(args.config) if args.config else EngineConfig()
    config = with_overrides(
        config,
        seed=args.seed,
        k1=args.k1,
        k2=args.k2,
        top_p=getattr(args, "top_p", None),
        max_tokens=getattr(args, "max_tokens", None),
    )
    from dataclasses import replace

    if args.domains:
        config = replace(config, domains=tuple(d.strip() for d in args.domains.split(",")))
    if args.workers:
        config = replace(config, workers=args.workers)
    if getattr(args, "batch_size", None):
        config = replace(config, batch_size=args.batch_size)
    return config


def _backends(args: argparse.Namespace, config: EngineConfig) -> BackendSet:
    if args.backend == "toy":
        return toy_backends(config.domains, task_stub=getattr(args, "task_stub", "truncate-half"))
    return remote_backends(config.domains, config.endpoints)


def _require_out(args: argparse.Namespace) -> Path:
    if not args.out:
        raise InputError("--out is required for this command")
    return args.out


def cmd_gen_contexts(args: argparse.Namespace) -> int:
    config = _engine_config(args)
    backends = _backends(args, config)
    out = _require_out(args)
    per_domain: dict[str, int] = {}
    with out.open("w", encoding="utf-8") as sink:
        for i in range(args.contexts):
            domain = config.domains[i % len(config.domains)]
            index = per_domain.get(domain, 0)
            per_domain[domain] = index + 1
            (ctx,) = sample_contexts(
                backends.generator_for(domain), domain, 1, config.generation, start_index=index
            )
            sink.write(
                json.dumps(
                    {
                        "id": ctx.id,
                        "domain": ctx.domain,
                        "prefix_template": ctx.prefix_template,
                        "text": ctx.text.source_text,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    print(f"wrote {args.contexts} contexts to {out}")
    return EXIT_OK


def _pair_to_json(pair: CandidatePair, context_text: str) -> dict:
    payload = {
        "pair_id": pair.pair_id,
        "context_id": pair.context_id,
        "domain": pair.domain,
        "provenance": pair.provenance,
        "x": pair.x.source_text,
        "y": pair.y.source_text,
        "context": context_text,
    }
    scores = pair.scores.as_dict()
    if any(v is not None for v in scores.values()):
        payload["scores"] = scores
    return payload


def _pair_from_json(payload: dict) -> tuple[CandidatePair, str]:
    scores = payload.get("scores") or {}
    pair = CandidatePair(
        context_id=payload["context_id"],
        domain=payload["domain"],
        provenance=payload["provenance"],
        x=tokenize(payload["x"]),
        y=tokenize(payload["y"]),
        scores=PairScores(**scores),
        pair_id=payload.get("pair_id"),
    )
    return pair, payload.get("context", "")


def cmd_gen_pairs(args: argparse.Namespace) -> int:
    config = _engine_config(args)
    backends = _backends(args, config)
    out = _require_out(args)
    modes = tuple(m.strip() for m in args.modes.split(",") if m.strip())
    from .pairgen import DomainContext

    count = 0
    with args.contexts_file.open("r", encoding="utf-8") as src, out.open(
        "w", encoding="utf-8"
    ) as sink:
        for lineno, line in enumerate(src, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
                ctx = DomainContext(
                    id=payload["id"],
                    domain=payload["domain"],
                    prefix_template=payload.get("prefix_template", ""),
                    text=tokenize(payload["text"]),
                )
            except (KeyError, json.JSONDecodeError) as exc:
                raise InputError(f"{args.contexts_file}: line {lineno}: {exc}") from exc
            pairs = pairs_for_context(backends.generator_for(ctx.domain), ctx, config.generation, modes)
            serials: dict[str, int] = {}
            for pair in pairs:
                tag = {"sequential": "seq", "parallel": "par"}[pair.provenance]
                serial = serials.get(tag, 0)
                serials[tag] = serial + 1
                pair.pair_id = f"{ctx.id}-{tag}-{serial:04d}"
                sink.write(json.dumps(_pair_to_json(pair, ctx.text.source_text), ensure_ascii=False) + "\n")
                count += 1
    print(f"wrote {count} candidate pairs to {out}")
    return EXIT_OK


def cmd_filter(args: argparse.Namespace) -> int:
    config = _engine_config(args)
    backends = _backends(args, config)
    out = _require_out(args)
    stack_config = config.summarization if args.mode == SUMMARIZATION else config.paraphrase
    pairs = []
    contexts: dict[str, str] = {}
    with args.pool.open("r", encoding="utf-8") as src:
        for lineno, line in enumerate(src, start=1):
            if not line.strip():
                continue
            try:
                pair, context_text = _pair_from_json(json.loads(line))
            except (KeyError, json.JSONDecodeError, TypeError) as exc:
                raise InputError(f"{args.pool}: line {lineno}: {exc}") from exc
            pairs.append(pair)
            contexts[pair.context_id] = context_text
    census = FilterCensus()
    scorer = MemoizedScorer(backends.scorer)
    with out.open("w", encoding="utf-8") as sink:
        for pair in apply_filters(pairs, scorer, stack_config, census=census):
            sink.write(
                json.dumps(_pair_to_json(pair, contexts[pair.context_id]), ensure_ascii=False)
                + "\n"
            )
    print(json.dumps({"mode": args.mode, "census": census.as_dict()}, indent=2))
    return EXIT_OK


def cmd_quantize(args: argparse.Namespace) -> int:
    out = args.out
    train_out = args.train_out
    if out is None and train_out is None:
        raise InputError("need --out (records) and/or --train-out (training file)")
    first = None
    with args.pairs.open("r", encoding="utf-8") as src:
        for line in src:
            if line.strip():
                first = json.loads(line)
                break
    records: list[DatasetRecord] = []
    dropped = 0
    if first is None:
        pass  # empty input: write empty outputs
    elif "group" in first:
        records = list(read_dataset(args.pairs))
    else:
        with args.pairs.open("r", encoding="utf-8") as src:
            for lineno, line in enumerate(src, start=1):
                if not line.strip():
                    continue
                pair, context_text = _pair_from_json(json.loads(line))
                record = record_from_pair(
                    pair, pair.pair_id or f"pair-{lineno:06d}", context_text, stage=args.stage
                )
                if record is None:
                    dropped += 1
                    continue
                records.append(record)
    if out is not None:
        write_dataset(records, out)
        print(f"wrote {len(records)} records to {out} ({dropped} outside all groups)")
    if train_out is not None:
        with train_out.open("w", encoding="utf-8") as sink:
            count = write_training_file(records, sink)
        print(f"wrote {count} training examples to {train_out}")
    return EXIT_OK


def cmd_distill(args: argparse.Namespace) -> int:
    config = _engine_config(args)
    backends = _backends(args, config)
    out = _require_out(args)
    manifest = run_stage0(config, backends, args.contexts, out, resume=args.resume)
    report_path, csv_path = report_paths(out)
    print(
        f"D_0: {manifest.records_emitted} records from {manifest.contexts_sampled} contexts "
        f"-> {out} (report: {report_path}, histogram: {csv_path})"
    )
    return EXIT_OK


def cmd_self_distill(args: argparse.Namespace) -> int:
    config = _engine_config(args)
    backends = _backends(args, config)
    out = _require_out(args)
    manifest = run_self_distill(config, backends, args.inputs, out)
    report_path, _ = report_paths(out)
    print(
        f"D_1: {manifest.records_emitted} records from {manifest.contexts_sampled} inputs "
        f"({manifest.failed_inputs} failed) -> {out} (report: {report_path})"
    )
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    records = list(read_dataset(args.dataset))
    if not records:
        raise InputError(f"{args.dataset} holds no records")
    stats = {
        "records": len(records),
        "groups": {
            group.value: sum(1 for r in records if r.group is group) for group in GROUP_ORDER
        },
        "histogram": strategy_histogram(records).as_dict(),
        "diversity": lexical_diversity_report(records),
    }
    sibling_report, _ = report_paths(args.dataset)
    if sibling_report.exists():
        report = json.loads(sibling_report.read_text(encoding="utf-8"))
        if report.get("efficiency"):
            stats["efficiency"] = report["efficiency"]
    payload = json.dumps(stats, indent=2, ensure_ascii=False)
    if args.out:
        args.out.write_text(payload + "\n", encoding="utf-8")
        print(f"wrote stats to {args.out}")
    else:
        print(payload)
    return EXIT_OK


def _validate_record(record: DatasetRecord, config: EngineConfig) -> None:
    x, y = tokenize(record.x), tokenize(record.y)
    if not x.tokens or not y.tokens:
        raise DatasetValidationError(f"{record.pair_id}: empty x or y")
    pair = CandidatePair(
        context_id="validate",
        domain=record.domain,
        provenance=PROVENANCES[0],
        x=x,
        y=y,
    )
    comp, sim = comp_sim(pair)
    if abs(comp - record.comp) > 1e-9 or abs(sim - record.sim) > 1e-9:
        raise DatasetValidationError(
            f"{record.pair_id}: stored (comp, sim) = ({record.comp}, {record.sim}) "
            f"but recomputed ({comp}, {sim})"
        )
    expected_group = assign_group(comp, sim)
    if expected_group is not record.group:
        raise DatasetValidationError(
            f"{record.pair_id}: group {record.group.value} but boundaries give "
            f"{expected_group.value if expected_group else 'none'}"
        )
    scores = record.scores
    if record.group in SUMMARY_GROUPS:
        fc = config.summarization
        if not len(y) < len(x) * fc.tau_comp_ratio:
            raise DatasetValidationError(f"{record.pair_id}: fails summarization length bound")
        if scores.entail_xy is None or scores.entail_xy < fc.tau_entail:
            raise DatasetValidationError(f"{record.pair_id}: entailment below threshold")
    else:
        fc = config.paraphrase
        if not len(x) * fc.tau_comp_lo <= len(y) < len(x) * fc.tau_comp_hi:
            raise DatasetValidationError(f"{record.pair_id}: outside paraphrase length band")
        if (
            scores.entail_xy is None
            or scores.entail_yx is None
            or min(scores.entail_xy, scores.entail_yx) < fc.tau_entail
        ):
            raise DatasetValidationError(f"{record.pair_id}: bidirectional entailment fails")
        if max(normalized_density(x, y), rouge_l(x, y)) > fc.tau_abstract:
            raise DatasetValidationError(f"{record.pair_id}: fails abstractiveness cap")


def cmd_validate(args: argparse.Namespace) -> int:
    config = _engine_config(args)
    checked = 0
    for record in read_dataset(args.dataset):
        _validate_record(record, config)
        checked += 1
    print(f"validate: {checked} records OK")
    return EXIT_OK


COMMANDS = {
    "gen-contexts": cmd_gen_contexts,
    "gen-pairs": cmd_gen_pairs,
    "filter": cmd_filter,
    "quantize": cmd_quantize,
    "distill": cmd_distill,
    "self-distill": cmd_self_distill,
    "stats": cmd_stats,
    "validate": cmd_validate,
}


def cli_dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; 0 for --help/--version
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT
    if not args.command:
        parser.print_usage()
        return EXIT_INPUT
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except DatasetValidationError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (TransportError, ProtocolError) as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (InputError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PairdistillError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
