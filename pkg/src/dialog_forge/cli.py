"""Command-line interface for the dialog-game data pipeline."""

from __future__ import annotations

import argparse
import json
import sys

from . import backends, benchmarks, corpus as corpus_mod, orchestrator
from .errors import DialogForgeError
from .prompts import EVALUATION_SAMPLING, PromptPayload, Role

STAGE_COMMANDS = {
    "generate": "generate",
    "filter": "filter",
    "dataset": "dataset",
    "eval-game": "eval_game",
    "eval-vqa": "eval_vqa",
    "eval-success": "eval_success",
}


def _add_stage_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="run config JSON file")
    parser.add_argument("--run-dir", help="run directory (default: config output_dir)")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument(
        "--stage-override",
        action="store_true",
        help="re-run the stage even if the ledger marks it done",
    )


def _load_config(args) -> orchestrator.RunConfig:
    config = orchestrator.load_config(args.config)
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    return config


def _cmd_stage(stage: str, args) -> int:
    config = _load_config(args)
    run_dir = args.run_dir or config.output_dir
    ledger = orchestrator.run_stage(
        config, stage, run_dir, force=args.stage_override
    )
    record = ledger.stage(stage)
    print(f"{stage}: {record.status} counts={json.dumps(record.counts)}")
    return 0 if record.status == "done" else 1


def _cmd_run_round(args) -> int:
    config = _load_config(args)
    report = orchestrator.run_round(config)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_synth_bench(args) -> int:
    scale = 0.1 if args.quick else 1.0
    report = benchmarks.run_bench(
        seed=args.seed if args.seed is not None else 2024,
        chance_games=max(200, int(10_000 * scale)),
        trend_games=max(200, int(5000 * scale)),
        grouping_games=max(200, int(5000 * scale)),
        completeness_games=max(100, int(1000 * scale)),
        mc_fixtures=10,
        mc_runs=max(2000, int(50_000 * scale)),
    )
    print(report.render())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"\nwrote {args.out}")
    return 0


def _cmd_embed(args) -> int:
    """Populate manifest embeddings through a wire-protocol endpoint.

    The endpoint answers an embedding instruction with a JSON number
    array in its text field.
    """
    with open(args.endpoint, "r", encoding="utf-8") as fh:
        endpoint = orchestrator.build_endpoint(json.load(fh))
    corpus = corpus_mod.load_manifest(args.manifest)
    records = []
    for record in corpus.records:
        if record.embedding is not None and not args.refresh:
            records.append(record)
            continue
        payload = PromptPayload(
            role=Role.DESCRIBER,
            text=(
                "Produce an embedding vector for the attached image. "
                "Respond with a JSON array of numbers only.\nAnswer:"
            ),
            images=(corpus.image_ref(record.image_id),),
            sampling=EVALUATION_SAMPLING,
        )
        vector = json.loads(backends.invoke(endpoint, payload))
        records.append(
            corpus_mod.ImageRecord.from_json(
                {**record.to_json(), "embedding": [float(x) for x in vector]}
            )
        )
    out = corpus_mod.Corpus(corpus.corpus_id, records, corpus.provenance)
    corpus_mod.save_manifest(out, args.out)
    print(f"wrote {args.out} ({len(records)} records)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dialog-forge",
        description=(
            "Self-play dialog-game pipeline: generate dialogs, filter them "
            "by permutation consistency, package SFT datasets, and evaluate."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for command in STAGE_COMMANDS:
        stage_parser = sub.add_parser(command, help=f"run the {command} stage")
        _add_stage_args(stage_parser)

    round_parser = sub.add_parser("run-round", help="run one self-improvement round")
    _add_stage_args(round_parser)

    bench = sub.add_parser(
        "synth-bench", help="run the synthetic-world benchmark suite"
    )
    bench.add_argument("--seed", type=int, default=None)
    bench.add_argument("--quick", action="store_true", help="reduced scale")
    bench.add_argument("--out", help="also write results as JSON")

    embed = sub.add_parser(
        "embed", help="augment a manifest with endpoint-provided embeddings"
    )
    embed.add_argument("--manifest", required=True)
    embed.add_argument("--out", required=True)
    embed.add_argument("--endpoint", required=True, help="endpoint descriptor JSON")
    embed.add_argument("--refresh", action="store_true", help="recompute existing")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in STAGE_COMMANDS:
            return _cmd_stage(STAGE_COMMANDS[args.command], args)
        if args.command == "run-round":
            return _cmd_run_round(args)
        if args.command == "synth-bench":
            return _cmd_synth_bench(args)
        if args.command == "embed":
            return _cmd_embed(args)
    except DialogForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
