"""Runs one dialog game to completion and replays guesses for validation.

A game alternates guesser decisions (question or guess), describer
answers about the target image, and guesser summarisation; the running
summary is the only dialog memory the guesser carries. After the turn
budget is spent, one final forced-guess invocation is made.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Iterator

from . import backends
from .errors import (
    BackendError,
    EmptyResponse,
    NotSuccessful,
    ParseFailure,
    ReplayFailed,
)
from .parsing import Guess, Question, parse_guesser_output
from .prompts import (
    EVALUATION_SAMPLING,
    GENERATION_SAMPLING,
    ImageRef,
    Role,
    SamplingParams,
    render_prompt,
)
from .rng import stable_seed

if TYPE_CHECKING:
    from .corpus import Corpus


class Outcome(str, Enum):
    SUCCESS = "Success"
    FAILURE = "Failure"
    ABORTED = "Aborted"


class AbortReason(str, Enum):
    TURN_BUDGET_EXHAUSTED = "TurnBudgetExhausted"
    PARSE_FAILURE = "ParseFailure"
    BACKEND_FAILURE = "BackendFailure"


@dataclass(frozen=True)
class GameSpec:
    """One configured game: which images, which is the target, budget."""

    game_id: str
    image_ids: tuple[str, ...]
    target_index: int  # 1-based
    max_turns: int = 3
    corpus_id: str = ""
    seed: int = 0
    task_label: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "image_ids", tuple(self.image_ids))
        if len(self.image_ids) < 1:
            raise ValueError("a game needs at least one image")
        if len(set(self.image_ids)) != len(self.image_ids):
            raise ValueError(f"image_ids must be distinct: {self.image_ids}")
        if not (1 <= self.target_index <= len(self.image_ids)):
            raise ValueError(
                f"target_index {self.target_index} outside [1, {len(self.image_ids)}]"
            )
        if self.max_turns < 1:
            raise ValueError("max_turns must be >= 1")

    @property
    def n(self) -> int:
        return len(self.image_ids)

    @property
    def target_id(self) -> str:
        return self.image_ids[self.target_index - 1]

    def to_json(self) -> dict:
        obj = {
            "game_id": self.game_id,
            "corpus_id": self.corpus_id,
            "image_ids": list(self.image_ids),
            "target_index": self.target_index,
            "max_turns": self.max_turns,
            "seed": self.seed,
        }
        if self.task_label is not None:
            obj["task_label"] = self.task_label
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "GameSpec":
        return cls(
            game_id=obj["game_id"],
            image_ids=tuple(obj["image_ids"]),
            target_index=obj["target_index"],
            max_turns=obj.get("max_turns", 3),
            corpus_id=obj.get("corpus_id", ""),
            seed=obj.get("seed", 0),
            task_label=obj.get("task_label"),
        )


@dataclass(frozen=True)
class Turn:
    question: str
    answer: str
    summary_after: str
    raw_guesser_output: str = ""
    raw_describer_output: str = ""


@dataclass(frozen=True)
class DialogRecord:
    spec: GameSpec
    turns: tuple[Turn, ...]
    final_action: Guess | None
    outcome: Outcome
    aborted_reason: AbortReason | None = None
    endpoints: dict = field(default_factory=dict)
    created_at: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "turns", tuple(self.turns))

    @property
    def final_summary(self) -> str:
        """Summary state at guess time (empty for immediate guesses)."""
        return self.turns[-1].summary_after if self.turns else ""

    def to_json(self) -> dict:
        obj = {
            "game_id": self.spec.game_id,
            "corpus_id": self.spec.corpus_id,
            "image_ids": list(self.spec.image_ids),
            "target_index": self.spec.target_index,
            "max_turns": self.spec.max_turns,
            "turns": [
                {
                    "q": t.question,
                    "a": t.answer,
                    "summary_after": t.summary_after,
                    "raw_guesser_output": t.raw_guesser_output,
                    "raw_describer_output": t.raw_describer_output,
                }
                for t in self.turns
            ],
            "final_guess": self.final_action.index if self.final_action else None,
            "outcome": self.outcome.value,
            "seed": self.spec.seed,
            "endpoints": dict(self.endpoints),
            "created_at": self.created_at,
        }
        if self.spec.task_label is not None:
            obj["task_label"] = self.spec.task_label
        if self.aborted_reason is not None:
            obj["aborted_reason"] = self.aborted_reason.value
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "DialogRecord":
        spec = GameSpec.from_json(obj)
        final = obj.get("final_guess")
        return cls(
            spec=spec,
            turns=tuple(
                Turn(
                    question=t["q"],
                    answer=t["a"],
                    summary_after=t["summary_after"],
                    raw_guesser_output=t.get("raw_guesser_output", ""),
                    raw_describer_output=t.get("raw_describer_output", ""),
                )
                for t in obj.get("turns", [])
            ),
            final_action=Guess(final) if final is not None else None,
            outcome=Outcome(obj["outcome"]),
            aborted_reason=(
                AbortReason(obj["aborted_reason"]) if obj.get("aborted_reason") else None
            ),
            endpoints=obj.get("endpoints", {}),
            created_at=obj.get("created_at", ""),
        )


@dataclass(frozen=True)
class ReplayResult:
    """Outcome of one replayed guess over a permuted image order."""

    position: int  # 1-based position in the permuted order
    image_id: str  # the image that position refers to


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _with_seed(sampling: SamplingParams, seed: int) -> SamplingParams:
    return replace(sampling, seed=seed)


class _Abort(Exception):
    def __init__(self, reason: AbortReason):
        self.reason = reason


def _guesser_bindings(spec: GameSpec, summary: str) -> dict:
    bindings = {"image_description": summary}
    if spec.task_label is not None and spec.n == 2:
        bindings["task"] = spec.task_label
    return bindings


def _decide(
    spec: GameSpec,
    refs: tuple[ImageRef, ...],
    summary: str,
    guesser: backends.AgentBackend,
    *,
    turn_tag: object,
    forced: bool,
    sampling: SamplingParams,
    parse_retries: int,
) -> tuple[Question | Guess, str]:
    """One guesser decision with the parse-retry policy applied.

    Unparseable or blank output is re-rolled with an identical prompt (a
    fresh sampling seed) up to ``parse_retries`` times. A guess made while
    the summary is still empty violates the prompt contract, so it is
    re-rolled the same way; if the backend insists, the last guess is
    accepted — it is a well-formed decision, and quality control belongs
    to the consistency filter downstream.
    """
    bindings = _guesser_bindings(spec, summary)
    failure: ParseFailure | None = None
    for attempt in range(1 + parse_retries):
        payload = render_prompt(
            Role.GUESSER_TURN,
            bindings,
            refs,
            sampling=_with_seed(
                sampling, stable_seed(spec.seed, "guesser", turn_tag, attempt)
            ),
            forced_guess=forced,
        )
        try:
            raw = backends.invoke(guesser, payload)
        except EmptyResponse as exc:
            failure = ParseFailure(str(exc))
            continue
        except BackendError as exc:
            raise _Abort(AbortReason.BACKEND_FAILURE) from exc
        try:
            action = parse_guesser_output(raw, spec.n)
        except ParseFailure as exc:
            failure = exc
            continue
        if (
            isinstance(action, Guess)
            and not forced
            and not summary
            and attempt < parse_retries
        ):
            continue
        return action, raw
    raise _Abort(AbortReason.PARSE_FAILURE) from failure


def _qa_invoke(
    endpoint: backends.AgentBackend,
    payload_role: Role,
    bindings: dict,
    refs: tuple[ImageRef, ...],
    *,
    seed_parts: tuple,
    sampling: SamplingParams,
    parse_retries: int,
) -> str:
    for attempt in range(1 + parse_retries):
        payload = render_prompt(
            payload_role,
            bindings,
            refs,
            sampling=_with_seed(sampling, stable_seed(*seed_parts, attempt)),
        )
        try:
            return backends.invoke(endpoint, payload)
        except EmptyResponse:
            continue
        except BackendError as exc:
            raise _Abort(AbortReason.BACKEND_FAILURE) from exc
    raise _Abort(AbortReason.PARSE_FAILURE)


def run_game(
    spec: GameSpec,
    describer: backends.AgentBackend,
    guesser: backends.AgentBackend,
    corpus: "Corpus",
    *,
    sampling: SamplingParams = GENERATION_SAMPLING,
    parse_retries: int = 2,
    created_at: str | None = None,
) -> DialogRecord:
    """Play one game to completion and return its full record.

    The describer only ever sees the target image; the guesser sees all N
    images in spec order plus the running summary. Backend failures after
    the retry budget become Aborted(BackendFailure); a budget spent
    without a guess triggers one forced-guess invocation, and a question
    even then becomes Aborted(TurnBudgetExhausted).
    """
    refs = tuple(corpus.image_ref(image_id) for image_id in spec.image_ids)
    target_ref = refs[spec.target_index - 1]
    endpoints = {"describer": describer.label, "guesser": guesser.label}
    stamp = created_at if created_at is not None else _now()

    def finish(
        turns: list[Turn],
        final: Guess | None,
        outcome: Outcome,
        reason: AbortReason | None = None,
    ) -> DialogRecord:
        return DialogRecord(
            spec=spec,
            turns=tuple(turns),
            final_action=final,
            outcome=outcome,
            aborted_reason=reason,
            endpoints=endpoints,
            created_at=stamp,
        )

    def settle(turns: list[Turn], guess: Guess) -> DialogRecord:
        outcome = (
            Outcome.SUCCESS if guess.index == spec.target_index else Outcome.FAILURE
        )
        return finish(turns, guess, outcome)

    summary = ""
    turns: list[Turn] = []
    try:
        for turn_no in range(spec.max_turns):
            action, raw_guess = _decide(
                spec,
                refs,
                summary,
                guesser,
                turn_tag=turn_no,
                forced=False,
                sampling=sampling,
                parse_retries=parse_retries,
            )
            if isinstance(action, Guess):
                return settle(turns, action)
            question = action.text
            raw_answer = _qa_invoke(
                describer,
                Role.DESCRIBER,
                {"question": question},
                (target_ref,),
                seed_parts=(spec.seed, "describer", turn_no),
                sampling=sampling,
                parse_retries=parse_retries,
            )
            answer = raw_answer.strip()
            raw_summary = _qa_invoke(
                guesser,
                Role.GUESSER_SUMMARY,
                {"description": summary, "question": question, "answer": answer},
                (),
                seed_parts=(spec.seed, "summary", turn_no),
                sampling=sampling,
                parse_retries=parse_retries,
            )
            summary = raw_summary.strip()
            turns.append(
                Turn(
                    question=question,
                    answer=answer,
                    summary_after=summary,
                    raw_guesser_output=raw_guess,
                    raw_describer_output=raw_answer,
                )
            )
        action, _raw = _decide(
            spec,
            refs,
            summary,
            guesser,
            turn_tag="forced",
            forced=True,
            sampling=sampling,
            parse_retries=parse_retries,
        )
    except _Abort as abort:
        return finish(turns, None, Outcome.ABORTED, abort.reason)
    if isinstance(action, Guess):
        return settle(turns, action)
    return finish(turns, None, Outcome.ABORTED, AbortReason.TURN_BUDGET_EXHAUSTED)


def replay_guess(
    dialog: DialogRecord,
    image_order: tuple[str, ...],
    guesser: backends.AgentBackend,
    corpus: "Corpus",
    *,
    parse_retries: int = 2,
) -> ReplayResult:
    """Re-query only the final selection over a permuted image order.

    The transcript is fixed: the guesser sees the dialog's final pre-guess
    summary and the permuted images, with a forced-guess instruction at
    temperature 0. Returns the guessed position and the image id it maps
    to. Raises NotSuccessful for non-Success dialogs and ReplayFailed when
    no guess can be obtained within the retry budget.
    """
    if dialog.outcome is not Outcome.SUCCESS:
        raise NotSuccessful(f"dialog {dialog.spec.game_id} is {dialog.outcome.value}")
    if sorted(image_order) != sorted(dialog.spec.image_ids):
        raise ValueError(
            f"image_order {image_order} is not a permutation of {dialog.spec.image_ids}"
        )
    spec = dialog.spec
    refs = tuple(corpus.image_ref(image_id) for image_id in image_order)
    bindings = _guesser_bindings(spec, dialog.final_summary)
    order_tag = ",".join(image_order)
    failure: Exception | None = None
    for attempt in range(1 + parse_retries):
        payload = render_prompt(
            Role.GUESSER_TURN,
            bindings,
            refs,
            sampling=_with_seed(
                EVALUATION_SAMPLING,
                stable_seed(spec.seed, "replay", order_tag, attempt),
            ),
            forced_guess=True,
        )
        try:
            raw = backends.invoke(guesser, payload)
        except BackendError as exc:
            raise ReplayFailed(f"backend failed during replay: {exc}") from exc
        try:
            action = parse_guesser_output(raw, spec.n)
        except ParseFailure as exc:
            failure = exc
            continue
        if isinstance(action, Guess):
            return ReplayResult(
                position=action.index, image_id=image_order[action.index - 1]
            )
        failure = ParseFailure(f"replay produced a question: {raw!r}")
    raise ReplayFailed(f"no guess after {1 + parse_retries} attempts: {failure}")


def write_dialogs(dialogs: Iterable[DialogRecord], path) -> int:
    import json

    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for dialog in dialogs:
            fh.write(json.dumps(dialog.to_json(), sort_keys=True) + "\n")
            count += 1
    return count


def read_dialogs(path) -> Iterator[DialogRecord]:
    import json

    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield DialogRecord.from_json(json.loads(line))
