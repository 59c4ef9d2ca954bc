"""Permutation validation: keep a successful dialog only if the guesser
re-identifies the target with the target placed at every position.

Testing all N! orders is deliberately avoided; the target visits each of
the N positions while the distractor order stays fixed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Iterator

from .backends import AgentBackend
from .engine import DialogRecord, GameSpec, Outcome, replay_guess
from .errors import NotSuccessful, ReplayFailed

if TYPE_CHECKING:
    from .corpus import Corpus

SKIPPED = "skipped"


@dataclass(frozen=True)
class ValidationReport:
    """Per-dialog permutation-consistency result."""

    game_id: str
    orderings_tested: tuple[tuple[str, ...], ...]
    guessed_id_per_ordering: tuple[str, ...]  # image id, or the skip marker
    passed: bool
    failure_positions: tuple[int, ...] = ()  # 1-based target positions that missed
    reason: str | None = None

    def to_json(self) -> dict:
        obj = {
            "game_id": self.game_id,
            "orderings": [list(o) for o in self.orderings_tested],
            "guesses": list(self.guessed_id_per_ordering),
            "passed": self.passed,
            "failure_positions": list(self.failure_positions),
        }
        if self.reason is not None:
            obj["reason"] = self.reason
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "ValidationReport":
        return cls(
            game_id=obj["game_id"],
            orderings_tested=tuple(tuple(o) for o in obj.get("orderings", [])),
            guessed_id_per_ordering=tuple(obj.get("guesses", [])),
            passed=obj["passed"],
            failure_positions=tuple(obj.get("failure_positions", [])),
            reason=obj.get("reason"),
        )


def permutations_for(spec: GameSpec) -> list[tuple[str, ...]]:
    """N orderings: in the k-th, the target sits at position k and the
    distractors keep their original relative order."""
    target = spec.target_id
    distractors = [i for i in spec.image_ids if i != target]
    orderings = []
    for k in range(spec.n):
        ordering = list(distractors)
        ordering.insert(k, target)
        orderings.append(tuple(ordering))
    return orderings


def validate_dialog(
    dialog: DialogRecord,
    guesser: AgentBackend,
    corpus: "Corpus",
    *,
    parse_retries: int = 2,
    short_circuit: bool = True,
) -> ValidationReport:
    """Replay the final guess at every target position.

    Short-circuits to failed on the first miss (remaining orderings are
    recorded with a skip marker). Replay failures yield passed=false with
    a reason rather than raising.
    """
    if dialog.outcome is not Outcome.SUCCESS:
        raise NotSuccessful(f"dialog {dialog.spec.game_id} is {dialog.outcome.value}")
    target = dialog.spec.target_id
    orderings = permutations_for(dialog.spec)
    guesses: list[str] = []
    failures: list[int] = []
    reason = None
    stopped = False
    for k, ordering in enumerate(orderings, start=1):
        if stopped:
            guesses.append(SKIPPED)
            continue
        try:
            result = replay_guess(
                dialog, ordering, guesser, corpus, parse_retries=parse_retries
            )
        except ReplayFailed as exc:
            guesses.append(SKIPPED)
            failures.append(k)
            reason = f"replay failed at position {k}: {exc}"
            stopped = True
            continue
        guesses.append(result.image_id)
        if result.image_id != target:
            failures.append(k)
            if short_circuit:
                stopped = True
    return ValidationReport(
        game_id=dialog.spec.game_id,
        orderings_tested=tuple(orderings),
        guessed_id_per_ordering=tuple(guesses),
        passed=not failures,
        failure_positions=tuple(failures),
        reason=reason,
    )


@dataclass
class FilterResult:
    retained: list[DialogRecord] = field(default_factory=list)
    reports: list[ValidationReport] = field(default_factory=list)

    @property
    def retention_rate(self) -> float:
        """Retained fraction among Success dialogs (the filter's input set)."""
        successes = sum(1 for r in self.reports if r.reason != "NotSuccessful")
        return len(self.retained) / successes if successes else 0.0


def iter_filter(
    dialogs: Iterable[DialogRecord],
    guesser: AgentBackend,
    corpus: "Corpus",
    *,
    parse_retries: int = 2,
) -> Iterator[tuple[DialogRecord, ValidationReport]]:
    """Validate a dialog stream; every input yields exactly one report.

    Failure/Aborted dialogs are reported (passed=false, zero replays),
    never silently dropped, so success-rate denominators stay auditable.
    """
    for dialog in dialogs:
        if dialog.outcome is not Outcome.SUCCESS:
            yield dialog, ValidationReport(
                game_id=dialog.spec.game_id,
                orderings_tested=tuple(permutations_for(dialog.spec)),
                guessed_id_per_ordering=tuple(SKIPPED for _ in range(dialog.spec.n)),
                passed=False,
                reason="NotSuccessful",
            )
            continue
        yield dialog, validate_dialog(
            dialog, guesser, corpus, parse_retries=parse_retries
        )


def filter_corpus(
    dialogs: Iterable[DialogRecord],
    guesser: AgentBackend,
    corpus: "Corpus",
    *,
    parse_retries: int = 2,
) -> FilterResult:
    """Retain exactly the Success dialogs whose validation passed."""
    result = FilterResult()
    for dialog, report in iter_filter(
        dialogs, guesser, corpus, parse_retries=parse_retries
    ):
        result.reports.append(report)
        if report.passed:
            result.retained.append(dialog)
    return result


def write_reports(reports: Iterable[ValidationReport], path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for report in reports:
            fh.write(json.dumps(report.to_json(), sort_keys=True) + "\n")
            count += 1
    return count


def read_reports(path) -> list[ValidationReport]:
    reports = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                reports.append(ValidationReport.from_json(json.loads(line)))
    return reports
