"""Extraction of SFT examples from retained dialogs, plus the baseline
dataset constructions (description pairs, self-QA, answers-only mode).

A dialog with k turns yields k describer examples (one per QA pair) and
k+1 guesser examples (one per question decision, plus one for the final
guess). Records serialize to JSONL with referenced image content.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Sequence

from . import backends
from .engine import DialogRecord, Outcome
from .errors import BackendError, MissingLabel, NotRetained, ParseFailure, Unparseable
from .parsing import parse_question_only
from .prompts import (
    GENERATION_SAMPLING,
    Role,
    SamplingParams,
    render_prompt,
)
from .rng import stable_seed

if TYPE_CHECKING:
    from .corpus import Corpus

logger = logging.getLogger(__name__)

DESCRIBER = "describer"
GUESSER = "guesser"
SUMMARY = "summary"


@dataclass(frozen=True)
class TrainingExample:
    """One SFT datapoint: interleaved inputs mapped to a target text."""

    variant: str  # describer | guesser | summary
    inputs: tuple[dict, ...]  # {"text": ...} or {"image_ref": ...} parts
    target_text: str
    source_game_id: str = ""
    round_tag: int = 1
    position: int = 0  # order within the source dialog

    def __post_init__(self) -> None:
        if not self.target_text:
            raise ValueError("target_text must be non-empty")

    def content_key(self) -> str:
        """Dedup key: the full normalized example content, metadata excluded."""
        return json.dumps(
            {"variant": self.variant, "inputs": self.inputs, "target": self.target_text},
            sort_keys=True,
        )

    def to_json(self) -> dict:
        return {
            "inputs": [dict(part) for part in self.inputs],
            "target_text": self.target_text,
            "meta": {
                "variant": self.variant,
                "game_id": self.source_game_id,
                "round": self.round_tag,
                "position": self.position,
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrainingExample":
        meta = obj.get("meta", {})
        return cls(
            variant=meta.get("variant", DESCRIBER),
            inputs=tuple(obj["inputs"]),
            target_text=obj["target_text"],
            source_game_id=meta.get("game_id", ""),
            round_tag=meta.get("round", 1),
            position=meta.get("position", 0),
        )


def _image_part(corpus: "Corpus", image_id: str) -> dict:
    return {"image_ref": corpus.get(image_id).content_ref}


def extract_examples(
    dialog: DialogRecord,
    corpus: "Corpus",
    *,
    round_tag: int = 1,
    emit_summaries: bool = False,
) -> list[TrainingExample]:
    """Training examples from one retained dialog, in dialog order.

    Only dialogs that survived the consistency filter should reach this
    point; a non-Success outcome is rejected outright. Summarisation steps
    are not emitted unless ``emit_summaries`` is set.
    """
    if dialog.outcome is not Outcome.SUCCESS:
        raise NotRetained(
            f"dialog {dialog.spec.game_id} has outcome {dialog.outcome.value}"
        )
    if dialog.final_action is None:
        raise NotRetained(f"dialog {dialog.spec.game_id} has no final guess")
    spec = dialog.spec
    game_images = tuple(_image_part(corpus, i) for i in spec.image_ids)
    target_image = _image_part(corpus, spec.target_id)
    examples: list[TrainingExample] = []
    position = 0

    def add(variant: str, inputs: Sequence[dict], target_text: str) -> None:
        nonlocal position
        examples.append(
            TrainingExample(
                variant=variant,
                inputs=tuple(inputs),
                target_text=target_text,
                source_game_id=spec.game_id,
                round_tag=round_tag,
                position=position,
            )
        )
        position += 1

    summary = ""
    for turn in dialog.turns:
        add(GUESSER, (*game_images, {"text": summary}), turn.question)
        add(DESCRIBER, (target_image, {"text": turn.question}), turn.answer)
        if emit_summaries:
            add(
                SUMMARY,
                (
                    {"text": summary},
                    {"text": turn.question},
                    {"text": turn.answer},
                ),
                turn.summary_after,
            )
        summary = turn.summary_after
    add(GUESSER, (*game_images, {"text": summary}), dialog.final_action.render())
    return examples


@dataclass
class DatasetManifest:
    counts: dict = field(default_factory=dict)
    source_run_id: str = ""
    mode: str = "full"
    round_tag: int = 1
    content_hash: str = ""

    def to_json(self) -> dict:
        return {
            "counts": dict(self.counts),
            "source_run_id": self.source_run_id,
            "mode": self.mode,
            "round_tag": self.round_tag,
            "content_hash": self.content_hash,
        }


def _write_examples(examples: Sequence[TrainingExample], path) -> str:
    digest = hashlib.sha256()
    with open(path, "w", encoding="utf-8") as fh:
        for example in examples:
            line = json.dumps(example.to_json(), sort_keys=True) + "\n"
            fh.write(line)
            digest.update(line.encode("utf-8"))
    return digest.hexdigest()


def read_examples(path) -> list[TrainingExample]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(TrainingExample.from_json(json.loads(line)))
    return out


def dedup_examples(
    examples: Iterable[TrainingExample],
) -> tuple[list[TrainingExample], int]:
    """Drop exact-duplicate example content, keeping first occurrences."""
    seen: set[str] = set()
    kept: list[TrainingExample] = []
    dropped = 0
    for example in examples:
        key = example.content_key()
        if key in seen:
            dropped += 1
            continue
        seen.add(key)
        kept.append(example)
    return kept, dropped


def build_sft_dataset(
    dialogs: Iterable[DialogRecord],
    corpus: "Corpus",
    out_path,
    *,
    mode: str = "full",
    round_tag: int = 1,
    source_run_id: str = "",
    emit_summaries: bool = False,
) -> DatasetManifest:
    """Materialize the SFT dataset file for a retained dialog set.

    ``full`` keeps both example types; ``answers_only`` keeps describer
    examples alone. Output order is deterministic: stable sort by game_id
    then position, duplicates collapsed.
    """
    if mode not in ("full", "answers_only"):
        raise ValueError(f"unknown dataset mode {mode!r}")
    examples: list[TrainingExample] = []
    for dialog in dialogs:
        examples.extend(
            extract_examples(
                dialog, corpus, round_tag=round_tag, emit_summaries=emit_summaries
            )
        )
    if mode == "answers_only":
        examples = [e for e in examples if e.variant == DESCRIBER]
    examples.sort(key=lambda e: (e.source_game_id, e.position))
    kept, dropped = dedup_examples(examples)
    content_hash = _write_examples(kept, out_path)
    counts = {
        "describer": sum(1 for e in kept if e.variant == DESCRIBER),
        "guesser": sum(1 for e in kept if e.variant == GUESSER),
        "summary": sum(1 for e in kept if e.variant == SUMMARY),
        "total": len(kept),
        "duplicates_dropped": dropped,
    }
    return DatasetManifest(
        counts=counts,
        source_run_id=source_run_id,
        mode=mode,
        round_tag=round_tag,
        content_hash=content_hash,
    )


def build_self_qa_dataset(
    corpus: "Corpus",
    question_agent: backends.AgentBackend,
    answer_agent: backends.AgentBackend,
    per_image: int,
    out_path,
    *,
    sampling: SamplingParams = GENERATION_SAMPLING,
    seed: int = 0,
    round_tag: int = 1,
    source_run_id: str = "",
) -> DatasetManifest:
    """Question/answer self-generation over a corpus, one example per pair.

    For every image, the question agent is asked for a question and the
    answer agent answers it; unparseable questions are skipped and
    counted, and per-item backend failures never abort the batch.
    """
    import dataclasses

    examples: list[TrainingExample] = []
    skipped_unparseable = 0
    failed_items = 0
    position = 0
    for record in corpus.records:
        ref = corpus.image_ref(record.image_id)
        for j in range(per_image):
            q_sampling = dataclasses.replace(
                sampling, seed=stable_seed(seed, "selfqa-q", record.image_id, j)
            )
            a_sampling = dataclasses.replace(
                sampling, seed=stable_seed(seed, "selfqa-a", record.image_id, j)
            )
            try:
                raw_question = backends.invoke(
                    question_agent,
                    render_prompt(Role.SELFQA_QUESTION, {}, (ref,), sampling=q_sampling),
                )
            except BackendError as exc:
                failed_items += 1
                logger.warning("self-QA question failed for %s: %s", record.image_id, exc)
                continue
            try:
                question = parse_question_only(raw_question)
            except (Unparseable, ParseFailure):
                skipped_unparseable += 1
                logger.info(
                    "self-QA question unparseable for %s: %r", record.image_id, raw_question
                )
                continue
            try:
                answer = backends.invoke(
                    answer_agent,
                    render_prompt(
                        Role.SELFQA_ANSWER,
                        {"question": question},
                        (ref,),
                        sampling=a_sampling,
                    ),
                ).strip()
            except BackendError as exc:
                failed_items += 1
                logger.warning("self-QA answer failed for %s: %s", record.image_id, exc)
                continue
            examples.append(
                TrainingExample(
                    variant=DESCRIBER,
                    inputs=({"image_ref": record.content_ref}, {"text": question}),
                    target_text=answer,
                    source_game_id=f"selfqa:{record.image_id}:{j}",
                    round_tag=round_tag,
                    position=position,
                )
            )
            position += 1
    kept, dropped = dedup_examples(examples)
    content_hash = _write_examples(kept, out_path)
    return DatasetManifest(
        counts={
            "describer": len(kept),
            "guesser": 0,
            "summary": 0,
            "total": len(kept),
            "duplicates_dropped": dropped,
            "skipped_unparseable": skipped_unparseable,
            "failed_items": failed_items,
        },
        source_run_id=source_run_id,
        mode="self_qa",
        round_tag=round_tag,
        content_hash=content_hash,
    )


def build_description_sft(
    corpus: "Corpus",
    out_path,
    *,
    round_tag: int = 1,
    source_run_id: str = "",
) -> DatasetManifest:
    """One (image -> task description) pair per corpus record."""
    examples = []
    for position, record in enumerate(corpus.records):
        if record.task_label is None:
            raise MissingLabel(f"record {record.image_id} has no task_label")
        examples.append(
            TrainingExample(
                variant=DESCRIBER,
                inputs=({"image_ref": record.content_ref},),
                target_text=record.task_label,
                source_game_id=f"description:{record.image_id}",
                round_tag=round_tag,
                position=position,
            )
        )
    kept, dropped = dedup_examples(examples)
    content_hash = _write_examples(kept, out_path)
    return DatasetManifest(
        counts={
            "describer": len(kept),
            "guesser": 0,
            "summary": 0,
            "total": len(kept),
            "duplicates_dropped": dropped,
        },
        source_run_id=source_run_id,
        mode="description",
        round_tag=round_tag,
        content_hash=content_hash,
    )


def inline_images(examples: Iterable[TrainingExample], corpus: "Corpus", resolver) -> list[TrainingExample]:
    """Replace image_ref parts with inline base64 parts via ``resolver``,
    for fine-tune APIs that require embedded content.

    ``resolver(content_ref) -> (b64, media_type)``.
    """
    import dataclasses

    out = []
    for example in examples:
        parts = []
        for part in example.inputs:
            if "image_ref" in part:
                b64, media_type = resolver(part["image_ref"])
                parts.append({"b64": b64, "media_type": media_type})
            else:
                parts.append(part)
        out.append(dataclasses.replace(example, inputs=tuple(parts)))
    return out
