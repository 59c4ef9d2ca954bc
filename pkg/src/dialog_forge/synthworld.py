"""Fully observable attribute-image world with rule-based oracle agents.

Images are attribute tuples (background color, object color, shape,
count) instead of pixels, so game mechanics, filter statistics, and
difficulty trends can be verified exactly: a closed question grammar
makes information gain computable and the full outcome tree enumerable.
"""

from __future__ import annotations

import itertools
import json
import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import Corpus, ImageRecord
from .engine import GameSpec
from .errors import (
    DomainExhausted,
    TreeTooLarge,
    UnrecognizedQuestion,
)
from .parsing import Guess, Question
from .prompts import FORCED_GUESS_SUFFIX, PromptPayload, Role
from .rng import SplitMix64, stable_seed

ATTRIBUTE_ORDER = ("background_color", "object_color", "shape", "count")

VALUE_QUESTIONS = {
    "count": "How many objects can you see?",
    "shape": "What shape are the objects?",
    "background_color": "What color is the background?",
    "object_color": "What color are the objects?",
}


@dataclass(frozen=True)
class DomainSpec:
    """Finite value domains for each image attribute."""

    background_color: tuple[str, ...] = ("orange", "blue", "white", "green")
    object_color: tuple[str, ...] = ("white", "blue", "green", "orange")
    shape: tuple[str, ...] = ("square", "circle", "triangle")
    count: tuple[int, ...] = tuple(range(1, 13))

    def __post_init__(self) -> None:
        for attr in ATTRIBUTE_ORDER:
            if not getattr(self, attr):
                raise ValueError(f"domain {attr} must be non-empty")

    def values(self, attr: str) -> tuple:
        return getattr(self, attr)

    @property
    def size(self) -> int:
        return math.prod(len(self.values(a)) for a in ATTRIBUTE_ORDER)

    def to_json(self) -> dict:
        return {attr: list(self.values(attr)) for attr in ATTRIBUTE_ORDER}

    @classmethod
    def from_json(cls, obj: dict) -> "DomainSpec":
        kwargs = {attr: tuple(obj[attr]) for attr in ATTRIBUTE_ORDER if attr in obj}
        return cls(**kwargs)


DEFAULT_DOMAINS = DomainSpec()


def canonical_value(value) -> str:
    """Single string form for attribute values across all encodings."""
    return str(value).lower()


def one_hot_embedding(attributes: dict, domains: DomainSpec) -> tuple[float, ...]:
    """Concatenated one-hot encoding; cosine similarity then counts
    matching attributes, which makes similarity grouping checkable."""
    out: list[float] = []
    for attr in ATTRIBUTE_ORDER:
        values = domains.values(attr)
        hot = values.index(attributes[attr])
        out.extend(1.0 if i == hot else 0.0 for i in range(len(values)))
    return tuple(out)


def gen_world(
    seed: int,
    n_images: int,
    domains: DomainSpec = DEFAULT_DOMAINS,
    *,
    distinct: bool = False,
    corpus_id: str | None = None,
) -> Corpus:
    """Generate a corpus of attribute images, deterministically under seed.

    With ``distinct`` set, attribute tuples are sampled without
    replacement; requesting more than the domain product raises
    DomainExhausted.
    """
    if n_images < 1:
        raise ValueError("n_images must be >= 1")
    if distinct and n_images > domains.size:
        raise DomainExhausted(
            f"{n_images} distinct tuples requested from a {domains.size}-tuple domain"
        )
    rng = SplitMix64(stable_seed("world", seed))
    tuples: list[tuple] = []
    if distinct:
        pool = list(itertools.product(*(domains.values(a) for a in ATTRIBUTE_ORDER)))
        for i in range(n_images):  # partial Fisher-Yates
            j = i + rng.randrange(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
            tuples.append(pool[i])
    else:
        for _ in range(n_images):
            tuples.append(
                tuple(rng.choice(domains.values(a)) for a in ATTRIBUTE_ORDER)
            )
    name = corpus_id or f"synthworld-{seed}"
    width = max(4, len(str(n_images - 1)))
    records = []
    for i, values in enumerate(tuples):
        attributes = dict(zip(ATTRIBUTE_ORDER, values))
        image_id = f"img-{i:0{width}d}"
        records.append(
            ImageRecord(
                image_id=image_id,
                content_ref=f"synth://{name}/{image_id}",
                embedding=one_hot_embedding(attributes, domains),
                attributes=attributes,
            )
        )
    return Corpus(name, records, provenance=f"gen_world(seed={seed})")


# --- question grammar ---

_BINARY_OBJECTS_RE = re.compile(r"^are\s+the\s+objects\s+([a-z0-9 ]+?)\??$")
_BINARY_BACKGROUND_RE = re.compile(r"^is\s+the\s+background\s+([a-z0-9 ]+?)\??$")


def _normalize_question(question: str) -> str:
    return re.sub(r"\s+", " ", question.strip().lower()).rstrip("?.! ")


def parse_grammar_question(
    question: str, domains: DomainSpec = DEFAULT_DOMAINS
) -> tuple[str, str, str | None]:
    """Classify a grammar question as ("value", attr, None) or
    ("binary", attr, value). Raises UnrecognizedQuestion otherwise."""
    norm = _normalize_question(question)
    for attr, text in VALUE_QUESTIONS.items():
        if norm == _normalize_question(text):
            return ("value", attr, None)
    match = _BINARY_OBJECTS_RE.match(norm)
    if match:
        word = match.group(1).strip()
        for attr in ("shape", "object_color"):
            for value in domains.values(attr):
                valstr = canonical_value(value)
                if word in (valstr, valstr + "s", valstr + "es"):
                    return ("binary", attr, valstr)
    match = _BINARY_BACKGROUND_RE.match(norm)
    if match:
        word = match.group(1).strip()
        for value in domains.values("background_color"):
            if word == canonical_value(value):
                return ("binary", "background_color", canonical_value(value))
    raise UnrecognizedQuestion(f"question outside grammar: {question!r}")


def oracle_describe(
    image: ImageRecord,
    question: str,
    *,
    noise: float = 0.0,
    rng: SplitMix64 | None = None,
    domains: DomainSpec = DEFAULT_DOMAINS,
) -> str:
    """Answer a grammar question about one image.

    Truthful with probability 1 - noise; otherwise a uniformly random
    wrong answer of the same answer type.
    """
    if not (0.0 <= noise <= 1.0):
        raise ValueError("noise must be in [0, 1]")
    kind, attr, value = parse_grammar_question(question, domains)
    attrs = image.attributes or {}
    truth = attrs[attr]
    if rng is None:
        rng = SplitMix64(stable_seed("describe", image.image_id, question))
    lie = noise > 0.0 and rng.random() < noise
    if kind == "value":
        if not lie:
            return canonical_value(truth)
        wrong = [v for v in domains.values(attr) if v != truth]
        if not wrong:
            return canonical_value(truth)
        return canonical_value(rng.choice(wrong))
    honest = "yes" if canonical_value(truth) == value else "no"
    if not lie:
        return honest
    return "no" if honest == "yes" else "yes"


# --- summary constraint codec ---

@dataclass(frozen=True, order=True)
class Constraint:
    attr: str
    op: str  # "=" or "!="
    value: str

    def render(self) -> str:
        return f"{self.attr}{self.op}{self.value}"


def satisfies(attributes: dict, constraint: Constraint) -> bool:
    actual = canonical_value(attributes[constraint.attr])
    if constraint.op == "=":
        return actual == constraint.value
    return actual != constraint.value


_CONSTRAINT_RE = re.compile(r"^([a-z_]+)(!?=)(.+)$")


def encode_constraints(constraints: Iterable[Constraint]) -> str:
    """Canonical summary text: sorted, deduplicated, '; '-joined."""
    return "; ".join(c.render() for c in sorted(set(constraints)))


def decode_constraints(text: str) -> frozenset[Constraint]:
    text = text.strip()
    if not text:
        return frozenset()
    out = set()
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        match = _CONSTRAINT_RE.match(part)
        if not match or match.group(1) not in ATTRIBUTE_ORDER:
            raise UnrecognizedQuestion(f"unrecognized summary fragment: {part!r}")
        out.add(Constraint(match.group(1), match.group(2), match.group(3).strip()))
    return frozenset(out)


def fold_qa(
    constraints: frozenset[Constraint],
    question: str,
    answer: str,
    domains: DomainSpec = DEFAULT_DOMAINS,
) -> frozenset[Constraint]:
    """Fold one question/answer pair into the constraint state."""
    kind, attr, value = parse_grammar_question(question, domains)
    answer_norm = canonical_value(answer.strip().rstrip("."))
    if kind == "value":
        return constraints | {Constraint(attr, "=", answer_norm)}
    if answer_norm not in ("yes", "no"):
        raise UnrecognizedQuestion(f"binary answer must be yes/no, got {answer!r}")
    op = "=" if answer_norm == "yes" else "!="
    return constraints | {Constraint(attr, op, value)}


# --- guesser policies ---

class GuesserStrategy:
    INFO_GAIN = "info_gain"
    UNIFORM_RANDOM = "uniform_random"
    FIRST_DIFFERENCE = "first_difference"

    ALL = (INFO_GAIN, UNIFORM_RANDOM, FIRST_DIFFERENCE)


@dataclass(frozen=True)
class OraclePolicy:
    """Noise knob for the describer plus the guesser's strategy."""

    describer_noise: float = 0.0
    guesser_strategy: str = GuesserStrategy.INFO_GAIN

    def __post_init__(self) -> None:
        if not (0.0 <= self.describer_noise <= 1.0):
            raise ValueError("describer_noise must be in [0, 1]")
        if self.guesser_strategy not in GuesserStrategy.ALL:
            raise ValueError(f"unknown strategy {self.guesser_strategy!r}")


def candidate_positions(
    images: Sequence[ImageRecord], constraints: Iterable[Constraint]
) -> list[int]:
    """0-based positions of images consistent with every constraint."""
    constraints = list(constraints)
    return [
        i
        for i, image in enumerate(images)
        if all(satisfies(image.attributes or {}, c) for c in constraints)
    ]


def _entropy(values: Sequence) -> float:
    counts: dict = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    total = len(values)
    return -sum((c / total) * math.log2(c / total) for c in counts.values())


@dataclass(frozen=True)
class Decision:
    """Deterministic policy output; random resolution is the caller's.

    kind is "ask" (attr set), "guess_one" (single 0-based position), or
    "guess_uniform" (uniform draw over positions).
    """

    kind: str
    attr: str | None = None
    positions: tuple[int, ...] = ()


def policy_decision(
    images: Sequence[ImageRecord],
    constraints: frozenset[Constraint],
    strategy: str,
    *,
    forced: bool = False,
) -> Decision:
    """The deterministic core shared by live oracle play, fast simulation,
    and exact outcome-tree enumeration; all three must branch identically."""
    all_positions = tuple(range(len(images)))
    if strategy == GuesserStrategy.UNIFORM_RANDOM:
        return Decision("guess_uniform", positions=all_positions)
    candidates = candidate_positions(images, constraints)
    if not candidates:
        # Contradictory state (noisy answers): nothing matches, fall back
        # to a blind uniform guess.
        return Decision("guess_uniform", positions=all_positions)
    if len(candidates) == 1:
        return Decision("guess_one", positions=(candidates[0],))
    if forced:
        return Decision("guess_uniform", positions=tuple(candidates))
    rows = [images[i].attributes or {} for i in candidates]
    if strategy == GuesserStrategy.INFO_GAIN:
        best_attr, best_gain = None, 0.0
        for attr in sorted(ATTRIBUTE_ORDER):
            gain = _entropy([canonical_value(r[attr]) for r in rows])
            if gain > best_gain + 1e-12:
                best_attr, best_gain = attr, gain
        if best_attr is None:
            return Decision("guess_uniform", positions=tuple(candidates))
        return Decision("ask", attr=best_attr)
    if strategy == GuesserStrategy.FIRST_DIFFERENCE:
        for attr in ATTRIBUTE_ORDER:
            values = {canonical_value(r[attr]) for r in rows}
            if len(values) > 1:
                return Decision("ask", attr=attr)
        return Decision("guess_uniform", positions=tuple(candidates))
    raise ValueError(f"unknown strategy {strategy!r}")


def oracle_guess_step(
    images: Sequence[ImageRecord],
    constraints: frozenset[Constraint],
    *,
    strategy: str = GuesserStrategy.INFO_GAIN,
    rng: SplitMix64 | None = None,
    forced: bool = False,
) -> Question | Guess:
    """One guesser move: a grammar question or a 1-based guess."""
    decision = policy_decision(images, constraints, strategy, forced=forced)
    if decision.kind == "ask":
        return Question(VALUE_QUESTIONS[decision.attr])
    if decision.kind == "guess_one":
        return Guess(decision.positions[0] + 1)
    if rng is None:
        rng = SplitMix64(stable_seed("guess", *(i.image_id for i in images)))
    return Guess(decision.positions[rng.randrange(len(decision.positions))] + 1)


# --- exact enumeration and fast simulation ---

def expected_success(
    spec: GameSpec,
    corpus: Corpus,
    policy: OraclePolicy,
    *,
    domains: DomainSpec = DEFAULT_DOMAINS,
    node_cap: int = 1_000_000,
) -> float:
    """Exact success probability by enumerating the outcome tree.

    Question choices are deterministic given the constraint state; answer
    noise branches are weighted by the describer noise. Raises
    TreeTooLarge past ``node_cap`` visited nodes.
    """
    images = [corpus.get(i) for i in spec.image_ids]
    target_pos = spec.target_index - 1
    target_attrs = images[target_pos].attributes or {}
    eps = policy.describer_noise
    nodes = 0

    def recurse(constraints: frozenset[Constraint], turns_left: int) -> float:
        nonlocal nodes
        nodes += 1
        if nodes > node_cap:
            raise TreeTooLarge(f"enumeration exceeded {node_cap} nodes")
        decision = policy_decision(
            images, constraints, policy.guesser_strategy, forced=turns_left == 0
        )
        if decision.kind == "guess_one":
            return 1.0 if decision.positions[0] == target_pos else 0.0
        if decision.kind == "guess_uniform":
            hit = 1.0 if target_pos in decision.positions else 0.0
            return hit / len(decision.positions)
        attr = decision.attr
        truth = canonical_value(target_attrs[attr])
        prob = (1.0 - eps) * recurse(
            constraints | {Constraint(attr, "=", truth)}, turns_left - 1
        )
        if eps > 0.0:
            wrong = [
                canonical_value(v)
                for v in domains.values(attr)
                if canonical_value(v) != truth
            ]
            if wrong:
                share = eps / len(wrong)
                for w in wrong:
                    prob += share * recurse(
                        constraints | {Constraint(attr, "=", w)}, turns_left - 1
                    )
            else:
                prob += eps * recurse(
                    constraints | {Constraint(attr, "=", truth)}, turns_left - 1
                )
        return prob

    return recurse(frozenset(), spec.max_turns)


def simulate_success(
    spec: GameSpec,
    corpus: Corpus,
    policy: OraclePolicy,
    rng: SplitMix64,
    *,
    domains: DomainSpec = DEFAULT_DOMAINS,
) -> bool:
    """One sampled playout of the same process expected_success enumerates,
    without prompts or transcripts; used for Monte Carlo cross-checks."""
    images = [corpus.get(i) for i in spec.image_ids]
    target_pos = spec.target_index - 1
    target_attrs = images[target_pos].attributes or {}
    eps = policy.describer_noise
    constraints: frozenset[Constraint] = frozenset()
    for turns_left in range(spec.max_turns, -1, -1):
        decision = policy_decision(
            images, constraints, policy.guesser_strategy, forced=turns_left == 0
        )
        if decision.kind == "guess_one":
            return decision.positions[0] == target_pos
        if decision.kind == "guess_uniform":
            return decision.positions[rng.randrange(len(decision.positions))] == target_pos
        attr = decision.attr
        truth = canonical_value(target_attrs[attr])
        answer = truth
        if eps > 0.0 and rng.random() < eps:
            wrong = [
                canonical_value(v)
                for v in domains.values(attr)
                if canonical_value(v) != truth
            ]
            if wrong:
                answer = wrong[rng.randrange(len(wrong))]
        constraints = constraints | {Constraint(attr, "=", answer)}
    raise AssertionError("unreachable: forced decision always guesses")


# --- oracle agents behind the backend interface ---

_QUESTION_LINE_RE = re.compile(r"^Question: (.*)$", re.MULTILINE)
_DESCRIPTION_LINE_RE = re.compile(r"^Image description: (.*)$", re.MULTILINE)
_SUMMARY_FIELDS_RE = re.compile(
    r"^Description: (?P<description>.*)\nQuestion: (?P<question>.*)\n"
    r"Answer: (?P<answer>.*)\nYour summary: $",
    re.MULTILINE,
)


class _WorldView:
    """Resolves wire image references back to world records."""

    def __init__(self, world: Corpus):
        self.world = world
        self._by_ref = {r.content_ref: r for r in world.records}

    def resolve(self, ref) -> ImageRecord:
        if ref.uri is None:
            raise UnrecognizedQuestion("oracle backends require uri image refs")
        record = self._by_ref.get(ref.uri)
        if record is not None:
            return record
        tail = ref.uri.rsplit("/", 1)[-1]
        return self.world.get(tail)


def _payload_rng(payload: PromptPayload, *parts) -> SplitMix64:
    if payload.sampling.seed is not None:
        return SplitMix64(payload.sampling.seed)
    return SplitMix64(stable_seed(payload.text, *parts))


class OracleDescriber:
    """Describer-side oracle: answers grammar questions about one image.

    Also serves the question-asking and answering sides of self-QA and
    completion-question answering, all against the attribute world.
    """

    def __init__(
        self,
        world: Corpus,
        *,
        noise: float = 0.0,
        domains: DomainSpec = DEFAULT_DOMAINS,
    ):
        if not (0.0 <= noise <= 1.0):
            raise ValueError("noise must be in [0, 1]")
        self.noise = noise
        self.domains = domains
        self._view = _WorldView(world)
        self.label = f"oracle-describer:{world.corpus_id}:eps={noise}"

    def invoke_payload(self, payload: PromptPayload) -> str:
        if payload.role is Role.SELFQA_QUESTION:
            image = self._view.resolve(payload.images[0])
            rng = _payload_rng(payload, image.image_id)
            attr = sorted(ATTRIBUTE_ORDER)[rng.randrange(len(ATTRIBUTE_ORDER))]
            return f"Question: {VALUE_QUESTIONS[attr]}"
        if payload.role not in (
            Role.DESCRIBER,
            Role.SELFQA_ANSWER,
            Role.SUCCESS_DETECTION,
        ):
            raise UnrecognizedQuestion(
                f"oracle describer cannot serve role {payload.role.value}"
            )
        matches = _QUESTION_LINE_RE.findall(payload.text)
        if not matches:
            raise UnrecognizedQuestion("payload carries no question line")
        image = self._view.resolve(payload.images[0])
        rng = _payload_rng(payload, image.image_id)
        return oracle_describe(
            image, matches[-1], noise=self.noise, rng=rng, domains=self.domains
        )


class OracleGuesser:
    """Guesser-side oracle: strategy moves plus canonical summarisation.

    Summaries are constraint strings (e.g. ``count=9; shape!=circle``)
    so that dialog state round-trips losslessly through transcripts.
    """

    def __init__(
        self,
        world: Corpus,
        *,
        strategy: str = GuesserStrategy.INFO_GAIN,
        domains: DomainSpec = DEFAULT_DOMAINS,
    ):
        if strategy not in GuesserStrategy.ALL:
            raise ValueError(f"unknown strategy {strategy!r}")
        self.strategy = strategy
        self.domains = domains
        self._view = _WorldView(world)
        self.label = f"oracle-guesser:{world.corpus_id}:{strategy}"

    def invoke_payload(self, payload: PromptPayload) -> str:
        if payload.role is Role.GUESSER_SUMMARY:
            match = _SUMMARY_FIELDS_RE.search(payload.text)
            if not match:
                raise UnrecognizedQuestion("summary payload fields not found")
            constraints = decode_constraints(match.group("description"))
            folded = fold_qa(
                constraints,
                match.group("question"),
                match.group("answer"),
                self.domains,
            )
            return encode_constraints(folded)
        if payload.role is not Role.GUESSER_TURN:
            raise UnrecognizedQuestion(
                f"oracle guesser cannot serve role {payload.role.value}"
            )
        match = _DESCRIPTION_LINE_RE.search(payload.text)
        if match is None:
            raise UnrecognizedQuestion("guesser payload has no description line")
        constraints = decode_constraints(match.group(1))
        images = [self._view.resolve(ref) for ref in payload.images]
        forced = payload.text.endswith(FORCED_GUESS_SUFFIX)
        rng = _payload_rng(payload, len(images))
        action = oracle_guess_step(
            images,
            constraints,
            strategy=self.strategy,
            rng=rng,
            forced=forced,
        )
        return action.render()


class OracleAgent:
    """One endpoint playing every role against a world, the way a single
    model serves all prompts; dispatches on the payload role."""

    def __init__(
        self,
        world: Corpus,
        *,
        noise: float = 0.0,
        strategy: str = GuesserStrategy.INFO_GAIN,
        domains: DomainSpec = DEFAULT_DOMAINS,
    ):
        self._describer = OracleDescriber(world, noise=noise, domains=domains)
        self._guesser = OracleGuesser(world, strategy=strategy, domains=domains)
        self.label = f"oracle:{world.corpus_id}:eps={noise}:{strategy}"

    def invoke_payload(self, payload: PromptPayload) -> str:
        if payload.role in (Role.GUESSER_TURN, Role.GUESSER_SUMMARY):
            return self._guesser.invoke_payload(payload)
        return self._describer.invoke_payload(payload)


# --- world spec files ---

def save_world_spec(
    path,
    *,
    seed: int,
    n_images: int,
    domains: DomainSpec = DEFAULT_DOMAINS,
    distinct: bool = False,
) -> None:
    obj = {
        "domains": domains.to_json(),
        "n_images": n_images,
        "distinct": distinct,
        "seed": seed,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_world_spec(path) -> Corpus:
    """Materialize the corpus a world spec file describes."""
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    domains = DomainSpec.from_json(obj.get("domains", {}))
    return gen_world(
        obj["seed"],
        obj["n_images"],
        domains,
        distinct=obj.get("distinct", False),
    )
