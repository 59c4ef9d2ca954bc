import json

import pytest
from hypothesis import given, strategies as st

from dialog_forge.backends import CallableEndpoint, ScriptedEndpoint
from dialog_forge.evaluation import (
    NO,
    OTHER,
    YES,
    Episode,
    VqaItem,
    game_success_rate,
    normalize_count,
    normalize_yes_no,
    read_episodes,
    read_vqa_items,
    render_table,
    score_vqa,
    success_detection_eval,
)
from dialog_forge.filtering import ValidationReport

from conftest import make_attribute_corpus


def _report(game_id, passed):
    return ValidationReport(
        game_id=game_id,
        orderings_tested=(),
        guessed_id_per_ordering=(),
        passed=passed,
    )


def test_game_success_rate_exact():
    reports = [_report(f"g{i}", i < 184) for i in range(1000)]
    stats = game_success_rate(reports)
    assert stats.games_total == 1000
    assert stats.games_succeeded == 184
    assert stats.rate == pytest.approx(0.184)
    assert f"{stats.rate:.1%}" == "18.4%"


def test_game_success_rate_zero_cases():
    assert game_success_rate([]).rate == 0.0
    assert game_success_rate([_report("g", False)]).rate == 0.0


def test_normalize_yes_no_examples():
    assert normalize_yes_no("There is no cat") == NO
    assert normalize_yes_no("Yes.") == YES
    assert normalize_yes_no("maybe") == OTHER
    assert normalize_yes_no("No, I don't think so") == NO
    assert normalize_yes_no("There is a cat on the mat") == YES
    assert normalize_yes_no("it is open") == YES
    assert normalize_yes_no("The drawer isn't open") == NO
    assert normalize_yes_no("") == OTHER


@given(st.text(max_size=40))
def test_leading_no_always_normalizes_to_no(text):
    assert normalize_yes_no("no " + text) == NO


@given(st.text(max_size=40))
def test_leading_yes_always_normalizes_to_yes(text):
    assert normalize_yes_no("yes " + text) == YES


def test_normalize_yes_no_negation_scans_before_affirmative():
    # carries both "there is a" and "there is no" shapes
    assert normalize_yes_no("I'd say there is no cat, though there is a mat") == NO


def test_custom_lexicon():
    lexicon = {"negation_cues": ["nein"], "affirmative_cues": ["ja"]}
    assert normalize_yes_no("nein, danke", lexicon) == NO
    assert normalize_yes_no("ja klar", lexicon) == YES
    assert normalize_yes_no("there is no cat", lexicon) == OTHER


def test_normalize_count_examples():
    assert normalize_count("one") == 1
    assert normalize_count("none") == 0
    assert normalize_count("I see 12 apples") == 12
    assert normalize_count("Nineteen birds") == 19
    assert normalize_count("no apples at all") == 0
    assert normalize_count("about three or four") == 3  # first mention wins
    assert normalize_count("several") is None
    assert normalize_count("") is None


# --- hand-scored VQA fixture (frozen before implementation): ten items,
# seven answers correct by manual normalization.

VQA_ITEMS = [
    VqaItem("img-0000", "Is there a cat?", ("yes",), "yes_no"),
    VqaItem("img-0000", "Is there a cat?", ("no",), "yes_no"),
    VqaItem("img-0001", "Is there a dog?", ("no",), "yes_no"),
    VqaItem("img-0001", "Is the door open?", ("yes",), "yes_no"),
    VqaItem("img-0002", "Is the light on?", ("yes", "yeah"), "yes_no"),
    VqaItem("img-0002", "Is there snow?", ("no",), "yes_no"),
    VqaItem("img-0003", "How many mugs?", ("3", "three"), "counting"),
    VqaItem("img-0003", "How many cars?", ("0", "none"), "counting"),
    VqaItem("img-0000", "How many apples?", ("12",), "counting"),
    VqaItem("img-0001", "How many birds?", ("5",), "counting"),
]

SCRIPT = [
    "Yes.",               # Yes  == yes        -> correct
    "There is no cat",    # No   == no         -> correct
    "maybe",              # Other              -> incorrect
    "no, it's shut",      # No   != yes        -> incorrect
    "It is on",           # Yes  == yes        -> correct
    "No.",                # No   == no         -> correct
    "three",              # 3    in {3}        -> correct
    "none",               # 0    in {0}        -> correct
    "I see 12 apples",    # 12   in {12}       -> correct
    "several",            # None               -> incorrect
]
HAND_SCORED = [True, True, False, False, True, True, True, True, True, False]


@pytest.fixture
def vqa_corpus():
    return make_attribute_corpus(
        [
            ("orange", "white", "square", 9),
            ("orange", "white", "circle", 4),
            ("orange", "blue", "circle", 4),
            ("orange", "blue", "square", 6),
        ]
    )


def test_score_vqa_hand_scored_fixture(vqa_corpus):
    report = score_vqa(VQA_ITEMS, ScriptedEndpoint(SCRIPT), vqa_corpus)
    assert [r.correct for r in report.items] == HAND_SCORED
    total_correct = sum(HAND_SCORED)
    overall = sum(s["correct"] for s in report.per_type.values())
    assert overall == total_correct == 7
    assert report.per_type["yes_no"]["accuracy"] == pytest.approx(4 / 6)
    assert report.per_type["counting"]["accuracy"] == pytest.approx(3 / 4)
    assert (
        sum(s["total"] for s in report.per_type.values())
        == len(VQA_ITEMS)
    )


def test_score_vqa_empty_items(vqa_corpus):
    report = score_vqa([], ScriptedEndpoint([]), vqa_corpus)
    assert report.per_type == {}
    assert report.items == []


def test_score_vqa_all_other_is_zero(vqa_corpus):
    items = [VqaItem("img-0000", "Is it?", ("yes",), "yes_no")] * 5
    report = score_vqa(items, CallableEndpoint(lambda p: "hmm, unclear"), vqa_corpus)
    assert report.per_type["yes_no"]["accuracy"] == 0.0


def test_score_vqa_backend_failures_unscored_never_correct(vqa_corpus):
    items = [VqaItem("img-0000", "Is it?", ("yes",), "yes_no")] * 3
    report = score_vqa(items, ScriptedEndpoint(["yes"]), vqa_corpus)
    stats = report.per_type["yes_no"]
    assert stats["total"] == 3
    assert stats["correct"] == 1
    assert stats["unscored"] == 2
    assert stats["accuracy"] == pytest.approx(1 / 3)
    assert stats["correct"] + stats["unscored"] + sum(
        1 for r in report.items if not r.correct and r.error is None
    ) == stats["total"]


def test_score_vqa_order_invariant_accuracy(vqa_corpus):
    forward = score_vqa(VQA_ITEMS, ScriptedEndpoint(SCRIPT), vqa_corpus)
    backward = score_vqa(
        list(reversed(VQA_ITEMS)), ScriptedEndpoint(list(reversed(SCRIPT))), vqa_corpus
    )
    assert {t: s["accuracy"] for t, s in forward.per_type.items()} == {
        t: s["accuracy"] for t, s in backward.per_type.items()
    }


def test_score_vqa_deterministic_reports(vqa_corpus):
    a = score_vqa(VQA_ITEMS, ScriptedEndpoint(SCRIPT), vqa_corpus)
    b = score_vqa(VQA_ITEMS, ScriptedEndpoint(SCRIPT), vqa_corpus)
    assert json.dumps(a.to_json(), sort_keys=True) == json.dumps(
        b.to_json(), sort_keys=True
    )


def test_score_vqa_judge_agent_mode(vqa_corpus):
    items = [VqaItem("img-0000", "Is there fog?", ("affirmative",), "yes_no")]
    # The rule cascade cannot match "affirmative", but a judge can.
    rules = score_vqa(items, ScriptedEndpoint(["affirmative"]), vqa_corpus)
    assert rules.per_type["yes_no"]["correct"] == 0
    judged = score_vqa(
        items,
        ScriptedEndpoint(["affirmative"]),
        vqa_corpus,
        judge=CallableEndpoint(lambda p: "yes"),
    )
    assert judged.per_type["yes_no"]["correct"] == 1


# --- success detection ---

def _episodes(n=200):
    out = []
    for i in range(n):
        gold = "yes" if i % 2 == 0 else "no"
        out.append(
            Episode(
                final_frame_id=f"img-{i % 4:04d}",
                task_label="open the drawer",
                completion_question="Is the drawer open?",
                gold=gold,
            )
        )
    return out


def test_success_detection_113_of_200(vqa_corpus):
    episodes = _episodes(200)
    script = [
        episode.gold if i < 113 else ("no" if episode.gold == "yes" else "yes")
        for i, episode in enumerate(episodes)
    ]
    report = success_detection_eval(episodes, ScriptedEndpoint(script), vqa_corpus)
    stats = report.per_type["success_detection"]
    assert stats["correct"] == 113
    assert stats["total"] == 200
    assert stats["accuracy"] == pytest.approx(0.565)
    assert f"{stats['accuracy']:.1%}" == "56.5%"
    assert sum(report.confusion.values()) == 200


def test_success_detection_constant_yes_on_all_yes(vqa_corpus):
    episodes = [e for e in _episodes(40) if e.gold == "yes"]
    report = success_detection_eval(
        episodes, CallableEndpoint(lambda p: "yes"), vqa_corpus
    )
    assert report.per_type["success_detection"]["accuracy"] == 1.0


def test_success_detection_other_answers_all_wrong(vqa_corpus):
    episodes = _episodes(20)
    report = success_detection_eval(
        episodes, CallableEndpoint(lambda p: "hard to say"), vqa_corpus
    )
    stats = report.per_type["success_detection"]
    assert stats["accuracy"] == 0.0
    assert report.confusion.get("Yes/Other", 0) + report.confusion.get(
        "No/Other", 0
    ) == 20


def test_success_detection_prompt_carries_task_and_question(vqa_corpus):
    seen = []

    def capture(payload):
        seen.append(payload.text)
        return "yes"

    success_detection_eval(
        _episodes(2), CallableEndpoint(capture), vqa_corpus
    )
    assert "robot is trying to open the drawer" in seen[0]
    assert "Question: Is the drawer open?" in seen[0]


def test_items_and_episodes_files_round_trip(tmp_path):
    items_path = tmp_path / "items.jsonl"
    with open(items_path, "w", encoding="utf-8") as fh:
        for item in VQA_ITEMS:
            fh.write(json.dumps(item.to_json()) + "\n")
    assert read_vqa_items(items_path) == VQA_ITEMS

    episodes = _episodes(6)
    episodes_path = tmp_path / "episodes.jsonl"
    with open(episodes_path, "w", encoding="utf-8") as fh:
        for episode in episodes:
            fh.write(json.dumps(episode.to_json()) + "\n")
    assert read_episodes(episodes_path) == episodes


def test_render_table_shape():
    text = render_table("Results", ["model", "accuracy"], [["base", "73.0%"]])
    lines = text.splitlines()
    assert lines[0] == "Results"
    assert "model" in lines[1] and "accuracy" in lines[1]
    assert "base" in lines[3]
