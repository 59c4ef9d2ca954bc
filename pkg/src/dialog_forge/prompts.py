"""Prompt templates for the dialog-game agents, and rendering into payloads.

Templates carry ``{placeholder}`` tokens. Text placeholders are substituted
verbatim from caller bindings; image placeholders become positional
``<image k>`` markers whose content travels out-of-band in the payload's
ordered image list.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, Sequence

from .errors import MissingBinding, SlotMismatch


class Role(str, Enum):
    DESCRIBER = "Describer"
    GUESSER_TURN = "GuesserTurn"
    GUESSER_SUMMARY = "GuesserSummary"
    SELFQA_QUESTION = "SelfQA-Question"
    SELFQA_ANSWER = "SelfQA-Answer"
    SUCCESS_DETECTION = "SuccessDetection"


@dataclass(frozen=True)
class SamplingParams:
    """Nucleus sampling configuration sent with every invocation.

    Defaults are the generation profile (top_p 0.8); evaluation paths use
    ``EVALUATION_SAMPLING`` (temperature 0). ``seed`` pins stochastic
    backends for replayable runs; backends without seed support ignore it.
    """

    top_p: float = 0.8
    temperature: float = 1.0
    seed: int | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.top_p <= 1.0):
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.temperature < 0.0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")

    def to_wire(self) -> dict:
        wire: dict = {"top_p": self.top_p, "temperature": self.temperature}
        if self.seed is not None:
            wire["seed"] = self.seed
        return wire

    @classmethod
    def from_wire(cls, obj: Mapping) -> "SamplingParams":
        return cls(
            top_p=float(obj["top_p"]),
            temperature=float(obj["temperature"]),
            seed=obj.get("seed"),
        )


GENERATION_SAMPLING = SamplingParams(top_p=0.8, temperature=1.0)
EVALUATION_SAMPLING = SamplingParams(top_p=0.8, temperature=0.0)


@dataclass(frozen=True)
class ImageRef:
    """Reference to one image: an opaque URI, or inline base64 content."""

    uri: str | None = None
    b64: str | None = None
    media_type: str | None = None

    def __post_init__(self) -> None:
        if (self.uri is None) == (self.b64 is None):
            raise ValueError("exactly one of uri or b64 must be set")
        if self.b64 is not None and not self.media_type:
            raise ValueError("b64 content requires media_type")

    def to_wire(self) -> dict:
        if self.uri is not None:
            return {"uri": self.uri}
        return {"b64": self.b64, "media_type": self.media_type}

    @classmethod
    def from_wire(cls, obj: Mapping) -> "ImageRef":
        if "uri" in obj:
            return cls(uri=obj["uri"])
        return cls(b64=obj["b64"], media_type=obj["media_type"])


@dataclass(frozen=True)
class PromptPayload:
    """A fully substituted prompt plus its ordered image attachments."""

    role: Role
    text: str
    images: tuple[ImageRef, ...] = ()
    sampling: SamplingParams = field(default_factory=SamplingParams)

    def with_sampling(self, sampling: SamplingParams) -> "PromptPayload":
        return replace(self, sampling=sampling)

    def to_wire(self) -> dict:
        return {
            "role": self.role.value,
            "text": self.text,
            "images": [ref.to_wire() for ref in self.images],
            "sampling": self.sampling.to_wire(),
        }

    @classmethod
    def from_wire(cls, obj: Mapping) -> "PromptPayload":
        return cls(
            role=Role(obj["role"]),
            text=obj["text"],
            images=tuple(ImageRef.from_wire(i) for i in obj["images"]),
            sampling=SamplingParams.from_wire(obj["sampling"]),
        )


DESCRIBER_TEMPLATE = """\
You are given an image and your task is to answer a given question about it. Be precise and accurate. Only answer the question, do not say anything else about the image.
Image: {image}
Question: {question}
Answer:"""

SUMMARY_TEMPLATE = """\
You are given a short description of a scene and one question and answer about it.
Your task is to summarise the content of the scene in a short sentence or paragraph. Only provide a summary, do no output anything else.
Always include all the details 1) from the description, 2) from question-answer pair into your summary.
Description: {description}
Question: {question}
Answer: {answer}
Your summary: """

SELFQA_QUESTION_TEMPLATE = """\
You are given an image and your task is to ask a question about the content of this image.
Try to ask objective, factual questions that cover the content of the image, but not the deductions about the scene or any impressions about the image.
NEVER ask questions about the background of the robotic scene (e.g., people in the background, scooters or chairs).
Follow the format:
Question: put your question here.
So, now given the image, ask a question.
Image: {image}
Question:"""

SELFQA_ANSWER_TEMPLATE = """\
You are given an image and your task is to answer a given question about it. Be precise and accurate. Only answer the question, do not say anything else about the image.
If possible, ONLY answer with *yes* or *no*.
Image: {image}
Question: {question}
Answer:"""

SUCCESS_DETECTION_TEMPLATE = """\
You are given an image from a scene where robot is trying to {task}. Your task is to answer a given question about whether the task was completed. Be precise and accurate. Only answer the question, do not say anything else about the image.
If possible, ONLY answer with *yes* or *no*.
Image: {image}
Question: {question}
Answer:"""

ROBOTICS_GUESSER_TEMPLATE = """\
You are given two images (Image 1, Image 2) from a scene where robot is trying to {task} and image description.
This image description refers to only a single image, however, the image description might be incomplete.
You task is the following:
1) If the image description can only refer to a single image from the set of images (Image 1, Image 2) you should provide the answer in the format:
Answer: I know the answer, it is image X.
where X is the index of an image (1,2).
Only provide an response in this format when you are absolutely certain to which image the image description refers.
Never provide an answer in this format when the image description is empty.
2) If no image description is provided or the image description can refer to more than one image, your task is to ask additional question to narrow down the space of possible images from the set (Image 1, Image 2).
Try to ask objective, factual questions that cover the content of the image.
Choose a question that would help you to maximise the information about the content of the image.
NEVER ask questions about the background of the robotic scene (e.g., people in the background, scooters or chairs).
NEVER ask questions about the facts that are already known from the image description.
Follow the format:
Question: put your question here

So, now given the image descriptions and 2 images, decide if you are going to make a guess (in that case produce an Answer) or ask a question (in that case produce a Question).
Image description: {image_description}
Image 1: {image1} Image 2: {image2}"""

# The published guesser instructions hard-code four image slots; the clause
# lists below regenerate the same text for any N (byte-identical at N=4).
_GUESSER_BODY = """\
You are given several images {names} and image description.
This image description refers to only a single image, however, the image description might be incomplete.
You task is the following:
1) If the image description can only refer to a single image from the set of images ({names}) you should provide the answer in the format:
Answer: I know the answer, it is image X.
where X is the index of an image ({indices}).
Only provide a response in this format when you are absolutely certain to which image the image description refers to.
Never provide an answer in this format when the image description is empty.
2) If no image description is provided or the image description can refer to more than one image, your task is to ask additional question to narrow down the space of possible images from the set ({names}).
Ask any question that would help you to narrow the space of possible images.
Choose a question that would help you to maximise the information about the content of the target image.
Try to ask objective, factual questions that cover the content of the image, but not the deductions about the scene or any impressions about the image.
Follow the format:
Question: put your question here.
So, now given the image descriptions and {count} images, decide if you are going to make a guess (in that case produce an Answer) or ask a question (in that case produce a Question).
Image description: {{image_description}}
{slots}"""

FORCED_GUESS_SUFFIX = """\


You have no questions left. You must now make a guess. Respond only in the format:
Answer: I know the answer, it is image X."""

GUESS_SENTENCE_FMT = "Answer: I know the answer, it is image {index}."
QUESTION_LINE_FMT = "Question: {text}"


def guesser_template(n_images: int) -> str:
    """Guesser-turn template with ``n_images`` image slots."""
    if n_images < 1:
        raise ValueError("n_images must be >= 1")
    names = ", ".join(f"Image {i}" for i in range(1, n_images + 1))
    indices = ", ".join(str(i) for i in range(1, n_images + 1))
    slots = " ".join(f"Image {i}: {{image{i}}}" for i in range(1, n_images + 1))
    return _GUESSER_BODY.format(
        names=names, indices=indices, count=n_images, slots=slots
    )


def render_guess_sentence(index: int) -> str:
    return GUESS_SENTENCE_FMT.format(index=index)


def render_question_line(text: str) -> str:
    return QUESTION_LINE_FMT.format(text=text)


_PLACEHOLDER_RE = re.compile(r"\{([a-z_][a-z_0-9]*)\}")
_IMAGE_SLOT_RE = re.compile(r"^image([0-9]*)$")


def image_marker(slot: int) -> str:
    """Positional marker substituted for image placeholders (1-based)."""
    return f"<image {slot}>"


def _select_template(
    role: Role, bindings: Mapping[str, str], n_images: int
) -> str:
    if role is Role.DESCRIBER:
        return DESCRIBER_TEMPLATE
    if role is Role.GUESSER_SUMMARY:
        return SUMMARY_TEMPLATE
    if role is Role.SELFQA_QUESTION:
        return SELFQA_QUESTION_TEMPLATE
    if role is Role.SELFQA_ANSWER:
        return SELFQA_ANSWER_TEMPLATE
    if role is Role.SUCCESS_DETECTION:
        return SUCCESS_DETECTION_TEMPLATE
    if role is Role.GUESSER_TURN:
        if "task" in bindings:
            return ROBOTICS_GUESSER_TEMPLATE
        return guesser_template(max(n_images, 1))
    raise ValueError(f"unknown role: {role!r}")


def template_image_slots(template: str) -> int:
    """Number of image placeholders in a template."""
    return sum(
        1
        for m in _PLACEHOLDER_RE.finditer(template)
        if _IMAGE_SLOT_RE.match(m.group(1))
    )


def render_prompt(
    role: Role,
    bindings: Mapping[str, str],
    images: Sequence[ImageRef],
    *,
    sampling: SamplingParams | None = None,
    forced_guess: bool = False,
) -> PromptPayload:
    """Substitute a role's template and package it with its images.

    Raises MissingBinding when a text placeholder is unbound and
    SlotMismatch when the image count differs from the template's slots.
    Substitution is a single pass, so binding values containing brace
    tokens are never re-expanded.
    """
    template = _select_template(role, bindings, len(images))
    slots = template_image_slots(template)
    if slots != len(images):
        raise SlotMismatch(
            f"{role.value} template has {slots} image slots, got {len(images)} images"
        )

    next_slot = iter(range(1, slots + 1))

    def _substitute(match: re.Match) -> str:
        name = match.group(1)
        slot_match = _IMAGE_SLOT_RE.match(name)
        if slot_match:
            return image_marker(int(slot_match.group(1) or next(next_slot)))
        if name not in bindings:
            raise MissingBinding(f"no binding for placeholder {{{name}}}")
        return str(bindings[name])

    text = _PLACEHOLDER_RE.sub(_substitute, template)
    if forced_guess:
        if role is not Role.GUESSER_TURN:
            raise ValueError("forced_guess applies only to guesser turns")
        text += FORCED_GUESS_SUFFIX
    return PromptPayload(
        role=role,
        text=text,
        images=tuple(images),
        sampling=sampling if sampling is not None else GENERATION_SAMPLING,
    )
