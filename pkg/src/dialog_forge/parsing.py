"""Strict parsing of guesser output into actions, and of Q/A pair text.

Markers are matched case-insensitively at line start after trimming;
everything stricter than that (e.g. rejecting lucky guesses) belongs to
the consistency filter, not the parser.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import IndexOutOfRange, Unparseable

_MARKER_RE = re.compile(r"^(question|answer)\s*:\s*(.*)$", re.IGNORECASE)
_GUESS_BODY_RE = re.compile(
    r"^i\s+know\s+the\s+answer\s*,\s*it\s+is\s+image\s+(\d+)\s*[.!]?\s*$",
    re.IGNORECASE,
)
_QA_PAIR_RE = re.compile(
    r"question\s*:\s*(.*?)\s*answer\s*:\s*(.*)$",
    re.IGNORECASE | re.DOTALL,
)


@dataclass(frozen=True)
class Question:
    text: str

    def render(self) -> str:
        return f"Question: {self.text}"


@dataclass(frozen=True)
class Guess:
    index: int  # 1-based

    def render(self) -> str:
        return f"Answer: I know the answer, it is image {self.index}."


GuesserAction = Question | Guess


def parse_guesser_output(raw: str, n_images: int) -> GuesserAction:
    """Parse raw guesser text into a Question or a Guess.

    Only the first line carrying a Question:/Answer: marker is considered.
    An Answer line must match the guess sentence with an integer index;
    the trailing period is optional. Raises Unparseable when no marker
    line decides, IndexOutOfRange when the index falls outside
    [1, n_images].
    """
    if n_images < 1:
        raise ValueError("n_images must be >= 1")
    for line in raw.splitlines():
        match = _MARKER_RE.match(line.strip())
        if not match:
            continue
        marker, rest = match.group(1).lower(), match.group(2)
        if marker == "question":
            text = rest.strip()
            if not text:
                raise Unparseable(f"empty question text in {line!r}")
            return Question(text)
        body = _GUESS_BODY_RE.match(rest.strip())
        if not body:
            raise Unparseable(f"answer line does not match guess format: {line!r}")
        index = int(body.group(1))
        if not (1 <= index <= n_images):
            raise IndexOutOfRange(f"guess index {index} outside [1, {n_images}]")
        return Guess(index)
    raise Unparseable(f"no question/answer marker found in {raw!r}")


def parse_qa_pair(raw: str) -> tuple[str, str]:
    """Split ``Question: ... Answer: ...`` text into (question, answer).

    Used for question/answer transcripts that carry both markers in one
    block, e.g. self-QA logs. Raises Unparseable when either marker is
    missing or the question is empty.
    """
    match = _QA_PAIR_RE.search(raw)
    if not match:
        raise Unparseable(f"no question/answer pair found in {raw!r}")
    question, answer = match.group(1).strip(), match.group(2).strip()
    if not question:
        raise Unparseable(f"empty question in {raw!r}")
    return question, answer


def parse_question_only(raw: str) -> str:
    """Extract the text of the first ``Question:`` line.

    Raises Unparseable when no marker line exists, the first marker is an
    answer, or the question text is empty.
    """
    for line in raw.splitlines():
        match = _MARKER_RE.match(line.strip())
        if not match:
            continue
        if match.group(1).lower() != "question":
            raise Unparseable(f"expected a question, got an answer in {raw!r}")
        text = match.group(2).strip()
        if not text:
            raise Unparseable(f"empty question text in {raw!r}")
        return text
    raise Unparseable(f"no question marker found in {raw!r}")
