"""Metrics: game success rate, yes/no and counting VQA accuracy, and
robotics success detection, with normalization of free-text answers.

Yes/no normalization is a rule cascade over an editable cue lexicon; a
judge-agent hook can replace the rules where a model-based equivalence
call is preferred.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import TYPE_CHECKING, Iterable, Sequence

from . import backends
from .errors import BackendError
from .filtering import ValidationReport
from .prompts import (
    EVALUATION_SAMPLING,
    PromptPayload,
    Role,
    SamplingParams,
    render_prompt,
)
from .rng import stable_seed

if TYPE_CHECKING:
    from .corpus import Corpus

logger = logging.getLogger(__name__)

YES = "Yes"
NO = "No"
OTHER = "Other"

YES_NO = "yes_no"
COUNTING = "counting"
SUCCESS_DETECTION = "success_detection"


@dataclass(frozen=True)
class GameSuccessStats:
    games_total: int
    games_succeeded: int

    @property
    def rate(self) -> float:
        return self.games_succeeded / self.games_total if self.games_total else 0.0

    def to_json(self) -> dict:
        return {
            "games_total": self.games_total,
            "games_succeeded": self.games_succeeded,
            "rate": self.rate,
        }


def game_success_rate(reports: Sequence[ValidationReport]) -> GameSuccessStats:
    """A game succeeds when it passed all N tested permutations."""
    return GameSuccessStats(
        games_total=len(reports),
        games_succeeded=sum(1 for r in reports if r.passed),
    )


@dataclass(frozen=True)
class VqaItem:
    image_id: str
    question: str
    gold_answers: tuple[str, ...]
    question_type: str  # yes_no | counting | success_detection

    def __post_init__(self) -> None:
        if not self.gold_answers:
            raise ValueError("gold_answers must be non-empty")

    def to_json(self) -> dict:
        return {
            "image_id": self.image_id,
            "question": self.question,
            "gold_answers": list(self.gold_answers),
            "type": self.question_type,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "VqaItem":
        return cls(
            image_id=obj["image_id"],
            question=obj["question"],
            gold_answers=tuple(obj["gold_answers"]),
            question_type=obj["type"],
        )


def read_vqa_items(path) -> list[VqaItem]:
    items = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                items.append(VqaItem.from_json(json.loads(line)))
    return items


# --- answer normalization ---

def _default_lexicon() -> dict:
    with resources.files("dialog_forge").joinpath("data/yes_no_lexicon.json").open(
        "r", encoding="utf-8"
    ) as fh:
        return json.load(fh)


_LEXICON_CACHE: dict | None = None


def load_lexicon(path=None) -> dict:
    global _LEXICON_CACHE
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    if _LEXICON_CACHE is None:
        _LEXICON_CACHE = _default_lexicon()
    return _LEXICON_CACHE


def normalize_yes_no(text: str, lexicon: dict | None = None) -> str:
    """Classify free text as Yes, No, or Other.

    Cascade: a leading yes/no token decides; otherwise negation cues are
    scanned before affirmative cues; no cue means Other.
    """
    lexicon = lexicon or load_lexicon()
    lowered = text.strip().lower()
    if not lowered:
        return OTHER
    first = re.split(r"[\s.,!?:;]+", lowered, maxsplit=1)[0]
    if first == "yes":
        return YES
    if first == "no":
        return NO
    padded = f" {lowered} "
    for cue in lexicon.get("negation_cues", ()):
        if cue in padded:
            return NO
    for cue in lexicon.get("affirmative_cues", ()):
        if cue in padded:
            return YES
    return OTHER


_NUMBER_WORDS = {
    "zero": 0, "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
    "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10, "eleven": 11,
    "twelve": 12, "thirteen": 13, "fourteen": 14, "fifteen": 15,
    "sixteen": 16, "seventeen": 17, "eighteen": 18, "nineteen": 19,
    "twenty": 20, "none": 0, "no": 0,
}

_NUMERIC_TOKEN_RE = re.compile(
    r"\b(\d+|" + "|".join(_NUMBER_WORDS) + r")\b", re.IGNORECASE
)


def normalize_count(text: str) -> int | None:
    """First numeric mention (digits or number words) as an integer."""
    match = _NUMERIC_TOKEN_RE.search(text.strip().lower())
    if not match:
        return None
    token = match.group(1)
    if token.isdigit():
        return int(token)
    return _NUMBER_WORDS[token]


# --- model-backed scoring ---

@dataclass(frozen=True)
class ItemResult:
    item: VqaItem
    prediction: str | None  # raw model text; None when unscored
    normalized: str
    correct: bool
    error: str | None = None

    def to_json(self) -> dict:
        return {
            "image_id": self.item.image_id,
            "question": self.item.question,
            "type": self.item.question_type,
            "prediction": self.prediction,
            "normalized": self.normalized,
            "correct": self.correct,
            "error": self.error,
        }


@dataclass
class AccuracyReport:
    per_type: dict = field(default_factory=dict)
    items: list[ItemResult] = field(default_factory=list)
    confusion: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "per_type": {k: dict(v) for k, v in self.per_type.items()},
            "confusion": dict(self.confusion),
            "items": [i.to_json() for i in self.items],
        }


def _judge_equivalent(
    judge: backends.AgentBackend, prediction: str, gold: str, seed: int
) -> bool:
    # Text-only payload; no template carries a zero-image QA form.
    payload = PromptPayload(
        role=Role.DESCRIBER,
        text=(
            "Do these two answers mean the same thing? "
            f'Answer A: "{prediction}". Answer B: "{gold}". '
            "Reply only yes or no.\nAnswer:"
        ),
        images=(),
        sampling=dataclasses.replace(EVALUATION_SAMPLING, seed=seed),
    )
    return normalize_yes_no(backends.invoke(judge, payload)) == YES


def _score_yes_no(
    prediction: str,
    golds: Sequence[str],
    *,
    judge: backends.AgentBackend | None,
    seed: int,
    lexicon: dict | None,
) -> tuple[str, bool]:
    normalized = normalize_yes_no(prediction, lexicon)
    if judge is None:
        gold_classes = {normalize_yes_no(g, lexicon) for g in golds}
        return normalized, normalized != OTHER and normalized in gold_classes
    for k, gold in enumerate(golds):
        if _judge_equivalent(judge, prediction, gold, stable_seed(seed, "judge", k)):
            return normalized, True
    return normalized, False


def _score_counting(prediction: str, golds: Sequence[str]) -> tuple[str, bool]:
    predicted = normalize_count(prediction)
    gold_values = {normalize_count(g) for g in golds} - {None}
    return (
        str(predicted) if predicted is not None else OTHER,
        predicted is not None and predicted in gold_values,
    )


def score_vqa(
    items: Sequence[VqaItem],
    agent: backends.AgentBackend,
    corpus: "Corpus",
    *,
    sampling: SamplingParams = EVALUATION_SAMPLING,
    seed: int = 0,
    lexicon: dict | None = None,
    judge: backends.AgentBackend | None = None,
) -> AccuracyReport:
    """Ask every question at temperature 0 and score by type.

    Yes/no items count correct when the normalized prediction matches any
    normalized gold (or the judge agent accepts it); counting items need
    an exact integer match. Backend failures leave items unscored and
    reported, never correct; unparseable answers count as incorrect.
    """
    report = AccuracyReport()
    tallies: dict[str, dict] = {}
    for index, item in enumerate(items):
        tally = tallies.setdefault(
            item.question_type,
            {"total": 0, "correct": 0, "unscored": 0},
        )
        tally["total"] += 1
        item_sampling = dataclasses.replace(
            sampling, seed=stable_seed(seed, "vqa", item.image_id, index)
        )
        role = (
            Role.SUCCESS_DETECTION
            if item.question_type == SUCCESS_DETECTION
            else Role.DESCRIBER
        )
        bindings = {"question": item.question}
        if role is Role.SUCCESS_DETECTION:
            bindings["task"] = ""
        try:
            prediction = backends.invoke(
                agent,
                render_prompt(
                    role,
                    bindings,
                    (corpus.image_ref(item.image_id),),
                    sampling=item_sampling,
                ),
            )
        except BackendError as exc:
            tally["unscored"] += 1
            report.items.append(
                ItemResult(item, None, OTHER, correct=False, error=str(exc))
            )
            continue
        if item.question_type == COUNTING:
            normalized, correct = _score_counting(prediction, item.gold_answers)
        else:
            normalized, correct = _score_yes_no(
                prediction,
                item.gold_answers,
                judge=judge,
                seed=stable_seed(seed, item.image_id, index),
                lexicon=lexicon,
            )
        tally["correct"] += int(correct)
        report.items.append(ItemResult(item, prediction, normalized, correct))
    for question_type, tally in tallies.items():
        accuracy = tally["correct"] / tally["total"] if tally["total"] else None
        report.per_type[question_type] = {**tally, "accuracy": accuracy}
    return report


@dataclass(frozen=True)
class Episode:
    """Success-detection case: one final frame plus a completion question."""

    final_frame_id: str
    task_label: str
    completion_question: str
    gold: str  # "yes" | "no"

    def to_json(self) -> dict:
        return {
            "final_frame_id": self.final_frame_id,
            "task_label": self.task_label,
            "completion_question": self.completion_question,
            "gold": self.gold,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Episode":
        return cls(
            final_frame_id=obj["final_frame_id"],
            task_label=obj["task_label"],
            completion_question=obj["completion_question"],
            gold=obj["gold"],
        )


def read_episodes(path) -> list[Episode]:
    episodes = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                episodes.append(Episode.from_json(json.loads(line)))
    return episodes


def success_detection_eval(
    episodes: Sequence[Episode],
    agent: backends.AgentBackend,
    corpus: "Corpus",
    *,
    sampling: SamplingParams = EVALUATION_SAMPLING,
    seed: int = 0,
    lexicon: dict | None = None,
) -> AccuracyReport:
    """Zero-shot completion judgment on final episode frames.

    The agent sees the frame, the task description, and the hand-written
    completion question; answers normalize through the yes/no cascade and
    Other-class answers count as incorrect.
    """
    report = AccuracyReport()
    tally = {"total": 0, "correct": 0, "unscored": 0}
    confusion: dict[str, int] = {}
    for index, episode in enumerate(episodes):
        tally["total"] += 1
        gold_class = YES if episode.gold.strip().lower() == "yes" else NO
        item = VqaItem(
            image_id=episode.final_frame_id,
            question=episode.completion_question,
            gold_answers=(episode.gold,),
            question_type=SUCCESS_DETECTION,
        )
        try:
            prediction = backends.invoke(
                agent,
                render_prompt(
                    Role.SUCCESS_DETECTION,
                    {
                        "task": episode.task_label,
                        "question": episode.completion_question,
                    },
                    (corpus.image_ref(episode.final_frame_id),),
                    sampling=dataclasses.replace(
                        sampling,
                        seed=stable_seed(seed, "success", episode.final_frame_id, index),
                    ),
                ),
            )
        except BackendError as exc:
            tally["unscored"] += 1
            confusion[f"{gold_class}/unscored"] = (
                confusion.get(f"{gold_class}/unscored", 0) + 1
            )
            report.items.append(
                ItemResult(item, None, OTHER, correct=False, error=str(exc))
            )
            continue
        normalized = normalize_yes_no(prediction, lexicon)
        correct = normalized == gold_class
        tally["correct"] += int(correct)
        confusion[f"{gold_class}/{normalized}"] = (
            confusion.get(f"{gold_class}/{normalized}", 0) + 1
        )
        report.items.append(ItemResult(item, prediction, normalized, correct))
    accuracy = tally["correct"] / tally["total"] if tally["total"] else None
    report.per_type[SUCCESS_DETECTION] = {**tally, "accuracy": accuracy}
    report.confusion = confusion
    return report


def render_table(title: str, headers: Sequence[str], rows: Sequence[Sequence]) -> str:
    """Plain text table in the shape the result tables use."""
    cells = [[str(c) for c in row] for row in rows]
    widths = [
        max(len(headers[i]), *(len(r[i]) for r in cells)) if cells else len(headers[i])
        for i in range(len(headers))
    ]
    lines = [title]
    lines.append(" | ".join(h.ljust(widths[i]) for i, h in enumerate(headers)))
    lines.append("-+-".join("-" * w for w in widths))
    for row in cells:
        lines.append(" | ".join(row[i].ljust(widths[i]) for i in range(len(row))))
    return "\n".join(lines)


def format_percent(value: float | None, digits: int = 1) -> str:
    if value is None:
        return "n/a"
    return f"{100.0 * value:.{digits}f}%"
