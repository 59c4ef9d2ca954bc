import json

import pytest

from dialog_forge.backends import RecordingEndpoint, ScriptedEndpoint
from dialog_forge.engine import (
    AbortReason,
    DialogRecord,
    GameSpec,
    Outcome,
    read_dialogs,
    replay_guess,
    run_game,
    write_dialogs,
)
from dialog_forge.errors import CorpusMiss, NotSuccessful
from dialog_forge.parsing import Guess
from dialog_forge.prompts import Role
from dialog_forge.synthworld import (
    GuesserStrategy,
    OracleDescriber,
    OracleGuesser,
    gen_world,
)

from conftest import make_attribute_corpus, make_spec


def oracle_pair(corpus, *, noise=0.0, strategy=GuesserStrategy.INFO_GAIN):
    return OracleDescriber(corpus, noise=noise), OracleGuesser(corpus, strategy=strategy)


def guess_line(index):
    return f"Answer: I know the answer, it is image {index}."


def test_two_image_shape_game_succeeds_in_one_turn(shape_pair_corpus):
    # Enumerating the oracle policy tree by hand: both images agree on
    # every attribute except shape, so the only positive-gain question is
    # the shape query; its truthful answer isolates the target, and the
    # second decision is the guess.
    spec = make_spec(shape_pair_corpus, ("img-0000", "img-0001"), target_index=2)
    describer, guesser = oracle_pair(shape_pair_corpus)
    dialog = run_game(spec, describer, guesser, shape_pair_corpus)
    assert dialog.outcome is Outcome.SUCCESS
    assert len(dialog.turns) == 1
    assert dialog.turns[0].question == "What shape are the objects?"
    assert dialog.turns[0].answer == "circle"
    assert dialog.final_action == Guess(2)


def test_wrong_guess_is_failure(fig_style_corpus):
    spec = make_spec(fig_style_corpus, tuple(f"img-{i:04d}" for i in range(4)), 1)
    describer = OracleDescriber(fig_style_corpus)
    guesser = ScriptedEndpoint([guess_line(3)] * 3)
    dialog = run_game(spec, describer, guesser, fig_style_corpus)
    assert dialog.outcome is Outcome.FAILURE
    assert dialog.final_action == Guess(3)


def test_budget_exhaustion_aborts_when_forced_attempt_asks(fig_style_corpus):
    spec = make_spec(fig_style_corpus, tuple(f"img-{i:04d}" for i in range(4)), 1, max_turns=2)
    describer = OracleDescriber(fig_style_corpus)
    # Two question turns (question + summary each), then the forced
    # invocation still asks a question.
    guesser = ScriptedEndpoint(
        [
            "Question: How many objects can you see?",
            "count=9",
            "Question: What shape are the objects?",
            "count=9; shape=square",
            "Question: What color is the background?",
        ]
    )
    dialog = run_game(spec, describer, guesser, fig_style_corpus)
    assert dialog.outcome is Outcome.ABORTED
    assert dialog.aborted_reason is AbortReason.TURN_BUDGET_EXHAUSTED
    assert len(dialog.turns) == 2
    assert dialog.final_action is None


def test_turn_count_never_exceeds_budget(fig_style_corpus):
    describer, guesser = oracle_pair(fig_style_corpus, noise=0.3)
    for budget in (1, 2, 3, 5):
        for seed in range(12):
            spec = make_spec(
                fig_style_corpus,
                tuple(f"img-{i:04d}" for i in range(4)),
                1 + seed % 4,
                max_turns=budget,
                seed=seed,
                game_id=f"budget-{budget}-{seed}",
            )
            dialog = run_game(spec, describer, guesser, fig_style_corpus)
            assert len(dialog.turns) <= budget


def test_describer_sees_only_the_target(fig_style_corpus):
    spec = make_spec(fig_style_corpus, tuple(f"img-{i:04d}" for i in range(4)), 3)
    describer = RecordingEndpoint(OracleDescriber(fig_style_corpus))
    guesser = RecordingEndpoint(OracleGuesser(fig_style_corpus))
    dialog = run_game(spec, describer, guesser, fig_style_corpus)
    assert dialog.outcome is Outcome.SUCCESS
    target_ref = fig_style_corpus.image_ref(spec.target_id)
    describer_payloads = [p for p in describer.payloads if p.role is Role.DESCRIBER]
    assert describer_payloads
    for payload in describer_payloads:
        assert payload.images == (target_ref,)


def test_guesser_sees_all_images_in_spec_order_and_no_target_hint(fig_style_corpus):
    ids = tuple(f"img-{i:04d}" for i in range(4))
    describer = OracleDescriber(fig_style_corpus)
    expected = tuple(fig_style_corpus.image_ref(i) for i in ids)
    # The first guesser payload must be byte-identical whichever image is
    # the target: nothing in it may reveal the target index.
    first_payload_texts = set()
    for target_index in range(1, 5):
        spec = make_spec(fig_style_corpus, ids, target_index, game_id=f"t{target_index}")
        guesser = RecordingEndpoint(OracleGuesser(fig_style_corpus))
        run_game(spec, describer, guesser, fig_style_corpus)
        turn_payloads = [p for p in guesser.payloads if p.role is Role.GUESSER_TURN]
        assert turn_payloads
        for payload in turn_payloads:
            assert payload.images == expected
        first_payload_texts.add(turn_payloads[0].text)
    assert len(first_payload_texts) == 1


def test_success_iff_final_guess_matches_target(fig_style_corpus):
    ids = tuple(f"img-{i:04d}" for i in range(4))
    describer = OracleDescriber(fig_style_corpus)
    for target_index in range(1, 5):
        for guessed in range(1, 5):
            spec = make_spec(
                fig_style_corpus, ids, target_index, game_id=f"g{target_index}{guessed}"
            )
            guesser = ScriptedEndpoint([guess_line(guessed)] * 3)
            dialog = run_game(spec, describer, guesser, fig_style_corpus)
            expected = Outcome.SUCCESS if guessed == target_index else Outcome.FAILURE
            assert dialog.outcome is expected
            assert dialog.final_action == Guess(guessed)


def test_empty_summary_guess_consumes_retries_then_accepted(fig_style_corpus):
    # The prompt forbids guessing on an empty description, so the engine
    # re-rolls twice; a persistent guess is then accepted as the decision.
    spec = make_spec(fig_style_corpus, tuple(f"img-{i:04d}" for i in range(4)), 2)
    describer = OracleDescriber(fig_style_corpus)
    guesser = ScriptedEndpoint([guess_line(2), guess_line(2), guess_line(2)])
    dialog = run_game(spec, describer, guesser, fig_style_corpus)
    assert dialog.outcome is Outcome.SUCCESS
    assert len(dialog.turns) == 0
    assert guesser.remaining() == 0  # all three rolls consumed


def test_unparseable_after_retries_aborts(fig_style_corpus):
    spec = make_spec(fig_style_corpus, tuple(f"img-{i:04d}" for i in range(4)), 1)
    describer = OracleDescriber(fig_style_corpus)
    guesser = ScriptedEndpoint(["mumble", "mumble", "mumble"])
    dialog = run_game(spec, describer, guesser, fig_style_corpus)
    assert dialog.outcome is Outcome.ABORTED
    assert dialog.aborted_reason is AbortReason.PARSE_FAILURE


def test_backend_failure_aborts(fig_style_corpus):
    spec = make_spec(fig_style_corpus, tuple(f"img-{i:04d}" for i in range(4)), 1)
    describer = OracleDescriber(fig_style_corpus)
    guesser = ScriptedEndpoint([])  # exhausted immediately
    dialog = run_game(spec, describer, guesser, fig_style_corpus)
    assert dialog.outcome is Outcome.ABORTED
    assert dialog.aborted_reason is AbortReason.BACKEND_FAILURE


def test_unknown_image_id_raises_corpus_miss(fig_style_corpus):
    spec = make_spec(fig_style_corpus, ("img-0000", "img-9999"), 1)
    describer, guesser = oracle_pair(fig_style_corpus)
    with pytest.raises(CorpusMiss):
        run_game(spec, describer, guesser, fig_style_corpus)


def test_robotics_spec_uses_task_template(fig_style_corpus):
    spec = GameSpec(
        game_id="robo",
        image_ids=("img-0000", "img-0001"),
        target_index=1,
        corpus_id=fig_style_corpus.corpus_id,
        seed=5,
        task_label="stack the blocks",
    )
    describer = OracleDescriber(fig_style_corpus)
    guesser = RecordingEndpoint(OracleGuesser(fig_style_corpus))
    run_game(spec, describer, guesser, fig_style_corpus)
    first = [p for p in guesser.payloads if p.role is Role.GUESSER_TURN][0]
    assert "robot is trying to stack the blocks" in first.text


def test_spec_validation():
    with pytest.raises(ValueError):
        GameSpec(game_id="g", image_ids=("a", "a"), target_index=1)
    with pytest.raises(ValueError):
        GameSpec(game_id="g", image_ids=("a", "b"), target_index=3)
    with pytest.raises(ValueError):
        GameSpec(game_id="g", image_ids=(), target_index=1)


# --- replay ---

def _successful_dialog(corpus, target_index=2):
    spec = make_spec(corpus, tuple(f"img-{i:04d}" for i in range(4)), target_index)
    describer, guesser = oracle_pair(corpus)
    dialog = run_game(spec, describer, guesser, corpus)
    assert dialog.outcome is Outcome.SUCCESS
    return dialog, guesser


def test_replay_identity_permutation_returns_target(fig_style_corpus):
    dialog, guesser = _successful_dialog(fig_style_corpus)
    result = replay_guess(dialog, dialog.spec.image_ids, guesser, fig_style_corpus)
    assert result.position == dialog.spec.target_index
    assert result.image_id == dialog.spec.target_id


def test_replay_moved_target_found_at_new_position(fig_style_corpus):
    # Oracle-consistency check: the stored summary uniquely identifies the
    # target, so the oracle picks it wherever it sits.
    dialog, guesser = _successful_dialog(fig_style_corpus, target_index=2)
    others = [i for i in dialog.spec.image_ids if i != dialog.spec.target_id]
    order = tuple(others[:3]) + (dialog.spec.target_id,)
    result = replay_guess(dialog, order, guesser, fig_style_corpus)
    assert result.position == 4
    assert result.image_id == dialog.spec.target_id


def test_replay_requires_success(fig_style_corpus):
    spec = make_spec(fig_style_corpus, tuple(f"img-{i:04d}" for i in range(4)), 1)
    describer = OracleDescriber(fig_style_corpus)
    guesser = ScriptedEndpoint([guess_line(2)] * 3)
    dialog = run_game(spec, describer, guesser, fig_style_corpus)
    assert dialog.outcome is Outcome.FAILURE
    with pytest.raises(NotSuccessful):
        replay_guess(dialog, dialog.spec.image_ids, guesser, fig_style_corpus)


def test_replay_rejects_non_permutation(fig_style_corpus):
    dialog, guesser = _successful_dialog(fig_style_corpus)
    with pytest.raises(ValueError):
        replay_guess(
            dialog, ("img-0000",) * 4, guesser, fig_style_corpus
        )


def test_dialog_jsonl_round_trip(tmp_path, fig_style_corpus):
    dialog, _ = _successful_dialog(fig_style_corpus)
    path = tmp_path / "dialogs.jsonl"
    write_dialogs([dialog], path)
    loaded = list(read_dialogs(path))
    assert len(loaded) == 1
    assert loaded[0] == dialog
    # unknown keys are ignored for forward compatibility
    obj = dialog.to_json()
    obj["future_field"] = {"x": 1}
    assert DialogRecord.from_json(obj) == dialog


def test_noisy_games_mix_outcomes():
    world = gen_world(31, 48, distinct=True)
    describer, guesser = oracle_pair(world, noise=0.35)
    outcomes = set()
    from dialog_forge.corpus import group_random

    for spec in group_random(world, 4, 120, seed=8):
        outcomes.add(run_game(spec, describer, guesser, world).outcome)
    assert Outcome.SUCCESS in outcomes
    assert Outcome.FAILURE in outcomes
