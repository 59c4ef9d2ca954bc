import json
import os
import stat
import sys
import textwrap

import pytest

from dialog_forge.backends import RecordingTransport, RemoteEndpoint
from dialog_forge.engine import read_dialogs
from dialog_forge.errors import ConfigDrift, DependencyUnmet, HookFailed
from dialog_forge.filtering import read_reports
from dialog_forge.orchestrator import (
    RunConfig,
    RunLedger,
    build_endpoint,
    load_config,
    next_round_config,
    run_round,
    run_stage,
    verify_run,
)
from dialog_forge.synthworld import save_world_spec


@pytest.fixture
def world_path(tmp_path):
    path = tmp_path / "world.json"
    save_world_spec(path, seed=51, n_images=48, distinct=True)
    return str(path)


def make_config(tmp_path, world_path, *, games=40, noise=0.15, seed=77, **overrides):
    base = {
        "corpus": {"world": world_path},
        "grouping": {"strategy": "random", "n": 4, "games": games, "seed": seed},
        "agents": {
            "describer": {
                "backend": "oracle", "world": world_path, "role": "describer",
                "noise": noise,
            },
            "guesser": {"backend": "oracle", "world": world_path, "role": "guesser"},
        },
        "max_turns": 3,
        "concurrency": 4,
        "output_dir": str(tmp_path / "runs"),
        "seed": seed,
        "run_timestamp": "2026-02-01T00:00:00+00:00",
    }
    base.update(overrides)
    return RunConfig.from_json(base)


def test_dependency_order_enforced(tmp_path, world_path):
    config = make_config(tmp_path, world_path)
    with pytest.raises(DependencyUnmet):
        run_stage(config, "filter", tmp_path / "run")
    with pytest.raises(DependencyUnmet):
        run_stage(config, "dataset", tmp_path / "run2")


def test_full_synthetic_round_counts_consistent(tmp_path, world_path):
    # Ledger counts, validation reports, and dataset arithmetic must agree
    # across modules on one fixture run.
    config = make_config(tmp_path, world_path, games=60)
    run_dir = tmp_path / "run"
    for stage in ("generate", "filter", "dataset", "eval_game"):
        ledger = run_stage(config, stage, run_dir)
    generate = ledger.stage("generate")
    flt = ledger.stage("filter")
    dataset = ledger.stage("dataset")
    eval_game = ledger.stage("eval_game")
    assert generate.counts["games"] == 60
    assert flt.counts["validated"] == 60
    assert eval_game.counts["succeeded"] == flt.counts["retained"]
    reports = read_reports(run_dir / "reports.jsonl")
    assert sum(1 for r in reports if r.passed) == flt.counts["retained"]
    dialogs = {d.spec.game_id: d for d in read_dialogs(run_dir / "dialogs.jsonl")}
    retained = [dialogs[r.game_id] for r in reports if r.passed]
    total_turns = sum(len(d.turns) for d in retained)
    with open(run_dir / "dataset.jsonl", encoding="utf-8") as fh:
        rows = [json.loads(line) for line in fh]
    assert dataset.counts["total"] == len(rows)
    assert (
        dataset.counts["describer"] + dataset.counts["guesser"]
        == dataset.counts["total"]
    )
    # before dedup: describer examples = sum k, guesser = sum (k+1)
    before_dedup = dataset.counts["total"] + dataset.counts["duplicates_dropped"]
    assert before_dedup == total_turns + (total_turns + len(retained))
    problems = verify_run(run_dir)
    assert problems == []


def test_generate_resume_after_interruption(tmp_path, world_path):
    config = make_config(tmp_path, world_path, games=30)
    full_dir = tmp_path / "full"
    run_stage(config, "generate", full_dir)
    full_bytes = (full_dir / "dialogs.jsonl").read_bytes()

    resumed_dir = tmp_path / "resumed"
    run_stage(config, "generate", resumed_dir)
    # simulate a crash: keep only the first 12 dialogs and reset status
    lines = (resumed_dir / "dialogs.jsonl").read_bytes().splitlines(keepends=True)
    (resumed_dir / "dialogs.jsonl").write_bytes(b"".join(lines[:12]))
    ledger = RunLedger(resumed_dir)
    ledger.stage("generate").status = "failed"
    ledger.save()
    run_stage(config, "generate", resumed_dir)
    assert (resumed_dir / "dialogs.jsonl").read_bytes() == full_bytes
    dialogs = list(read_dialogs(resumed_dir / "dialogs.jsonl"))
    assert len(dialogs) == 30
    assert len({d.spec.game_id for d in dialogs}) == 30


def test_rerunning_done_stage_is_noop(tmp_path, world_path):
    config = make_config(tmp_path, world_path, games=10)
    run_dir = tmp_path / "run"
    run_stage(config, "generate", run_dir)
    before = (run_dir / "dialogs.jsonl").read_bytes()
    mtime = os.path.getmtime(run_dir / "dialogs.jsonl")
    run_stage(config, "generate", run_dir)
    assert (run_dir / "dialogs.jsonl").read_bytes() == before
    assert os.path.getmtime(run_dir / "dialogs.jsonl") == mtime


def test_config_drift_detected(tmp_path, world_path):
    config = make_config(tmp_path, world_path, games=10)
    run_dir = tmp_path / "run"
    run_stage(config, "generate", run_dir)
    drifted = make_config(tmp_path, world_path, games=11)
    with pytest.raises(ConfigDrift):
        run_stage(drifted, "filter", run_dir)


def test_identical_configs_reproduce_identical_bytes(tmp_path, world_path):
    config = make_config(tmp_path, world_path, games=25)
    dirs = [tmp_path / "a", tmp_path / "b"]
    for run_dir in dirs:
        for stage in ("generate", "filter", "dataset"):
            run_stage(config, stage, run_dir)
    for name in ("dialogs.jsonl", "reports.jsonl", "dataset.jsonl"):
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()


def test_verify_run_detects_tampering(tmp_path, world_path):
    config = make_config(tmp_path, world_path, games=8)
    run_dir = tmp_path / "run"
    run_stage(config, "generate", run_dir)
    assert verify_run(run_dir) == []
    with open(run_dir / "dialogs.jsonl", "a", encoding="utf-8") as fh:
        fh.write("{}\n")
    problems = verify_run(run_dir)
    assert any("hash mismatch" in p for p in problems)
    (run_dir / "stray.txt").write_text("boo")
    assert any("unledgered" in p for p in verify_run(run_dir))


def _write_hook(tmp_path, world_path, *, exit_code=0, noise=0.0):
    script = tmp_path / "hook.py"
    script.write_text(
        textwrap.dedent(
            f"""
            import json, sys
            payload = json.load(sys.stdin)
            assert payload["dataset"] == sys.argv[1]
            if {exit_code}:
                sys.exit({exit_code})
            print(json.dumps({{"model_endpoint": {{
                "backend": "oracle",
                "world": {json.dumps(world_path)},
                "role": "agent",
                "noise": {noise},
            }}}}))
            """
        )
    )
    return [sys.executable, str(script)]


def test_run_round_without_hook_notes_it(tmp_path, world_path):
    config = make_config(tmp_path, world_path, games=15)
    report = run_round(config)
    assert report["note"].startswith("no fine-tune hook")
    assert "game_success" in report
    rounds_path = os.path.join(config.output_dir, "rounds_report.json")
    assert os.path.exists(rounds_path)


def test_run_round_hook_failure(tmp_path, world_path):
    config = make_config(
        tmp_path,
        world_path,
        games=12,
        finetune_hook=_write_hook(tmp_path, world_path, exit_code=3),
    )
    with pytest.raises(HookFailed):
        run_round(config)
    ledger = RunLedger(os.path.join(config.output_dir, "round_1"))
    assert ledger.stage("finetune_hook").status == "failed"
    # artifacts from earlier stages survive for inspection
    assert os.path.exists(os.path.join(config.output_dir, "round_1", "dialogs.jsonl"))


def test_two_round_improvement_with_hook(tmp_path, world_path):
    # Round 1 plays with a noisy describer; the hook hands back a clean
    # oracle endpoint, so round 2's game success must be higher.
    hook = _write_hook(tmp_path, world_path, noise=0.0)
    config = make_config(
        tmp_path, world_path, games=40, noise=0.45, finetune_hook=hook
    )
    report1 = run_round(config)
    config2 = next_round_config(config)
    assert config2.round == 2
    assert config2.agents["describer"]["role"] == "agent"
    report2 = run_round(config2)
    assert report2["game_success"]["rate"] > report1["game_success"]["rate"]
    with open(os.path.join(config.output_dir, "rounds_report.json"), encoding="utf-8") as fh:
        combined = json.load(fh)
    assert [row["round"] for row in combined["rounds"]] == [1, 2]


def test_bounded_concurrency_observed_by_transport(tmp_path, world_path, monkeypatch):
    # Remote guesser answered by a canned transport; in-flight requests
    # must never exceed the configured worker cap.
    transport = RecordingTransport(
        [(200, {"text": "Answer: I know the answer, it is image 1."})], delay=0.002
    )
    config = make_config(tmp_path, world_path, games=24, concurrency=3)
    endpoint = RemoteEndpoint("http://fake", transport=transport)

    import dialog_forge.orchestrator as orch

    original = orch.build_endpoint

    def patched(descriptor):
        if descriptor.get("role") == "guesser":
            return endpoint
        return original(descriptor)

    monkeypatch.setattr(orch, "build_endpoint", patched)
    run_stage(config, "generate", tmp_path / "run")
    assert transport.max_in_flight <= 3
    assert transport.requests


def test_eval_stages_with_fixture_files(tmp_path, world_path):
    from dialog_forge.synthworld import load_world_spec

    world = load_world_spec(world_path)
    items_path = tmp_path / "items.jsonl"
    first = world.records[0]
    with open(items_path, "w", encoding="utf-8") as fh:
        fh.write(
            json.dumps(
                {
                    "image_id": first.image_id,
                    "question": "How many objects can you see?",
                    "gold_answers": [str(first.attributes["count"])],
                    "type": "counting",
                }
            )
            + "\n"
        )
    episodes_path = tmp_path / "episodes.jsonl"
    with open(episodes_path, "w", encoding="utf-8") as fh:
        fh.write(
            json.dumps(
                {
                    "final_frame_id": first.image_id,
                    "task_label": f"show {first.attributes['count']} objects",
                    "completion_question": f"Are the objects {first.attributes['shape']}s?",
                    "gold": "yes",
                }
            )
            + "\n"
        )
    config = make_config(
        tmp_path,
        world_path,
        games=5,
        noise=0.0,
        evals={"vqa_items": str(items_path), "episodes": str(episodes_path)},
    )
    run_dir = tmp_path / "run"
    run_stage(config, "eval_vqa", run_dir)
    run_stage(config, "eval_success", run_dir)
    with open(run_dir / "evals" / "vqa.json", encoding="utf-8") as fh:
        vqa = json.load(fh)
    assert vqa["per_type"]["counting"]["accuracy"] == 1.0
    with open(run_dir / "evals" / "success_detection.json", encoding="utf-8") as fh:
        sd = json.load(fh)
    assert sd["per_type"]["success_detection"]["accuracy"] == 1.0


def test_load_config_and_endpoint_descriptors(tmp_path, world_path):
    config = make_config(tmp_path, world_path)
    path = tmp_path / "config.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_json(), fh)
    loaded = load_config(path)
    assert loaded.to_json() == config.to_json()
    scripted = build_endpoint({"backend": "scripted", "responses": ["a"]})
    assert scripted.invoke_payload(None) == "a"
    with pytest.raises(ValueError):
        build_endpoint({"backend": "mystery"})
