"""Pipeline orchestration: configure, generate, filter, build datasets,
hand off to an external fine-tune hook, and evaluate — per run directory.

Every stage is idempotent and resumable: artifacts are append-only,
hashed into a single-writer ledger, and a completed stage re-run with an
identical config snapshot is a no-op. Generation order is deterministic
(results flush in spec order), so identical seeds with scripted or
synthetic agents reproduce identical bytes.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import os
import subprocess
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable

from . import backends, corpus as corpus_mod, datasets, evaluation, filtering
from .engine import DialogRecord, run_game, read_dialogs
from .errors import ConfigDrift, DependencyUnmet, DialogForgeError, HookFailed
from .rng import stable_seed
from .synthworld import (
    GuesserStrategy,
    OracleAgent,
    OracleDescriber,
    OracleGuesser,
    load_world_spec,
)

STAGES = (
    "generate",
    "filter",
    "dataset",
    "eval_game",
    "eval_vqa",
    "eval_success",
    "finetune_hook",
)

DEPENDENCIES: dict[str, tuple[str, ...]] = {
    "generate": (),
    "filter": ("generate",),
    "dataset": ("filter",),
    "eval_game": ("filter",),
    "eval_vqa": (),
    "eval_success": (),
    "finetune_hook": ("dataset",),
}

# Recorded for the external fine-tune hook; the pipeline itself never
# consumes these.
DEFAULT_FINETUNE_PARAMS = {
    "batch_size": 16,
    "optimizer": "adam",
    "learning_rate": 5e-7,
    "epochs": 1,
}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def canonical_hash(obj) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()


@dataclass
class RunConfig:
    """Resolved configuration for one run (or one self-improvement round)."""

    corpus: dict = field(default_factory=dict)  # {"manifest": p} | {"world": p}
    grouping: dict = field(default_factory=dict)
    agents: dict = field(default_factory=dict)
    max_turns: int = 3
    filter: dict = field(default_factory=dict)
    dataset: dict = field(default_factory=dict)
    evals: dict = field(default_factory=dict)
    round: int = 1
    finetune_hook: list | None = None
    finetune_params: dict = field(default_factory=lambda: dict(DEFAULT_FINETUNE_PARAMS))
    concurrency: int = 4
    output_dir: str = "runs/run"
    seed: int = 0
    run_timestamp: str | None = None  # pin for byte-stable artifacts

    def __post_init__(self) -> None:
        if self.round < 1:
            raise ValueError("round must be >= 1")
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")

    def to_json(self) -> dict:
        return {
            "corpus": self.corpus,
            "grouping": self.grouping,
            "agents": self.agents,
            "max_turns": self.max_turns,
            "filter": self.filter,
            "dataset": self.dataset,
            "evals": self.evals,
            "round": self.round,
            "finetune_hook": self.finetune_hook,
            "finetune_params": self.finetune_params,
            "concurrency": self.concurrency,
            "output_dir": self.output_dir,
            "seed": self.seed,
            "run_timestamp": self.run_timestamp,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in obj.items() if k in known})

    def validate_paths(self) -> None:
        for key in ("manifest", "world"):
            path = self.corpus.get(key)
            if path and not os.path.exists(path):
                raise FileNotFoundError(f"corpus.{key} not found: {path}")
        for key in ("vqa_items", "episodes"):
            path = self.evals.get(key)
            if path and not os.path.exists(path):
                raise FileNotFoundError(f"evals.{key} not found: {path}")

    def snapshot_hash(self) -> str:
        return canonical_hash(self.to_json())


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return RunConfig.from_json(json.load(fh))


def build_endpoint(descriptor: dict) -> backends.AgentBackend:
    """Agent backend from a config descriptor.

    backends: remote {base_uri, auth_ref?, timeout?, max_retries?,
    rate_limit?}; oracle {world, role, noise?, strategy?}; scripted
    {responses | replay}.
    """
    kind = descriptor.get("backend")
    if kind == "remote":
        return backends.RemoteEndpoint(
            base_uri=descriptor["base_uri"],
            auth_ref=descriptor.get("auth_ref"),
            timeout=descriptor.get("timeout", 60.0),
            max_retries=descriptor.get("max_retries", 2),
            rate_limit=descriptor.get("rate_limit"),
        )
    if kind == "oracle":
        world = load_world(descriptor["world"])
        role = descriptor.get("role", "agent")
        if role == "describer":
            return OracleDescriber(world, noise=descriptor.get("noise", 0.0))
        if role == "guesser":
            return OracleGuesser(
                world, strategy=descriptor.get("strategy", GuesserStrategy.INFO_GAIN)
            )
        return OracleAgent(
            world,
            noise=descriptor.get("noise", 0.0),
            strategy=descriptor.get("strategy", GuesserStrategy.INFO_GAIN),
        )
    if kind == "scripted":
        responses = descriptor.get("responses")
        if responses is None:
            with open(descriptor["replay"], "r", encoding="utf-8") as fh:
                responses = json.load(fh)
        return backends.ScriptedEndpoint(responses, label=descriptor.get("label", "scripted"))
    raise ValueError(f"unknown backend kind {kind!r}")


def load_world(path) -> corpus_mod.Corpus:
    if str(path).endswith(".jsonl"):
        return corpus_mod.load_manifest(path)
    return load_world_spec(path)


def load_run_corpus(config: RunConfig) -> corpus_mod.Corpus:
    if "manifest" in config.corpus:
        return corpus_mod.load_manifest(config.corpus["manifest"])
    if "world" in config.corpus:
        return load_world(config.corpus["world"])
    raise ValueError("config.corpus needs a 'manifest' or 'world' path")


def compose_specs(config: RunConfig, corpus: corpus_mod.Corpus):
    grouping = config.grouping
    strategy = grouping.get("strategy", "random")
    seed = grouping.get("seed", config.seed)
    n = grouping.get("n", 4)
    games = grouping.get("games", 1000)
    if strategy == "random":
        return corpus_mod.group_random(corpus, n, games, seed, max_turns=config.max_turns)
    if strategy == "cluster":
        return corpus_mod.group_by_cluster(corpus, n, games, seed, max_turns=config.max_turns)
    if strategy == "similarity":
        return corpus_mod.group_by_similarity(corpus, n, games, seed, max_turns=config.max_turns)
    if strategy == "episode":
        return corpus_mod.group_episode_frames(
            corpus,
            games_per_task=grouping.get("games_per_task", 1000),
            seed=seed,
            frame_pairing=grouping.get("frame_pairing", "same_episode"),
            max_turns=config.max_turns,
        )
    raise ValueError(f"unknown grouping strategy {strategy!r}")


# --- ledger ---

@dataclass
class StageRecord:
    status: str = "pending"  # pending | running | done | failed
    started_at: str | None = None
    finished_at: str | None = None
    wall_clock_s: float | None = None
    artifacts: dict = field(default_factory=dict)  # relpath -> sha256
    counts: dict = field(default_factory=dict)
    config_hash: str | None = None

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "wall_clock_s": self.wall_clock_s,
            "artifacts": dict(self.artifacts),
            "counts": dict(self.counts),
            "config_hash": self.config_hash,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "StageRecord":
        return cls(
            status=obj.get("status", "pending"),
            started_at=obj.get("started_at"),
            finished_at=obj.get("finished_at"),
            wall_clock_s=obj.get("wall_clock_s"),
            artifacts=obj.get("artifacts", {}),
            counts=obj.get("counts", {}),
            config_hash=obj.get("config_hash"),
        )


class RunLedger:
    """Single-writer stage ledger, updated atomically via rename."""

    def __init__(self, run_dir):
        self.run_dir = str(run_dir)
        self.path = os.path.join(self.run_dir, "ledger.json")
        self.stages: dict[str, StageRecord] = {}
        self.config_snapshot: dict | None = None
        if os.path.exists(self.path):
            with open(self.path, "r", encoding="utf-8") as fh:
                obj = json.load(fh)
            self.stages = {
                name: StageRecord.from_json(rec)
                for name, rec in obj.get("stages", {}).items()
            }
            self.config_snapshot = obj.get("config_snapshot")

    def stage(self, name: str) -> StageRecord:
        return self.stages.setdefault(name, StageRecord())

    def save(self) -> None:
        obj = {
            "stages": {name: rec.to_json() for name, rec in self.stages.items()},
            "config_snapshot": self.config_snapshot,
        }
        tmp = self.path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, self.path)

    def artifact_paths(self) -> dict:
        out = {}
        for record in self.stages.values():
            out.update(record.artifacts)
        return out


def verify_run(run_dir) -> list[str]:
    """Hash-verify every ledger artifact and flag unledgered files.

    Returns a list of problems; empty means the run directory is fully
    reachable from the ledger and bit-intact.
    """
    ledger = RunLedger(run_dir)
    problems = []
    listed = ledger.artifact_paths()
    for rel, expected in listed.items():
        path = os.path.join(run_dir, rel)
        if not os.path.exists(path):
            problems.append(f"missing artifact: {rel}")
        elif sha256_file(path) != expected:
            problems.append(f"hash mismatch: {rel}")
    for root, _dirs, files in os.walk(run_dir):
        for name in files:
            rel = os.path.relpath(os.path.join(root, name), run_dir)
            # the ledger itself, config.json (pinned by the ledger's config
            # snapshot hash), and the round summary are run-level files
            if rel in ("ledger.json", "config.json", "round_report.json") or rel.endswith(".tmp"):
                continue
            if rel not in listed:
                problems.append(f"unledgered file: {rel}")
    return problems


# --- stage running ---

def _require_done(ledger: RunLedger, names: tuple[str, ...], stage: str) -> None:
    for name in names:
        if ledger.stage(name).status != "done":
            raise DependencyUnmet(f"stage {stage!r} requires {name!r} to be done")


def _relative(run_dir: str, *parts: str) -> str:
    return os.path.join(run_dir, *parts)


def _append_jsonl_ordered(
    path: str,
    total: int,
    done_keys: set,
    key_of: Callable[[int], str],
    produce: Callable[[int], dict],
    concurrency: int,
) -> int:
    """Compute missing items concurrently but append strictly in index
    order, so an interrupted file is always a clean, resumable prefix."""
    pending = [i for i in range(total) if key_of(i) not in done_keys]
    if not pending:
        return 0
    results: dict[int, dict] = {}
    written = 0
    with open(path, "a", encoding="utf-8") as fh:
        cursor = 0  # index into the full range; skip already-done leading keys
        with concurrent.futures.ThreadPoolExecutor(max_workers=concurrency) as pool:
            futures = {pool.submit(produce, i): i for i in pending}
            remaining = set(pending)
            for future in concurrent.futures.as_completed(futures):
                index = futures[future]
                results[index] = future.result()
                remaining.discard(index)
                while cursor < total:
                    if key_of(cursor) in done_keys:
                        cursor += 1
                        continue
                    if cursor in results:
                        fh.write(
                            json.dumps(results.pop(cursor), sort_keys=True) + "\n"
                        )
                        fh.flush()
                        written += 1
                        cursor += 1
                        continue
                    break
    return written


def _resolve_agents(config: RunConfig) -> tuple:
    describer = build_endpoint(config.agents["describer"])
    guesser = build_endpoint(config.agents["guesser"])
    return describer, guesser


def _stage_generate(config: RunConfig, run_dir: str, record: StageRecord) -> None:
    run_corpus = load_run_corpus(config)
    specs_path = _relative(run_dir, "specs.jsonl")
    if not os.path.exists(specs_path):
        corpus_mod.write_specs(compose_specs(config, run_corpus), specs_path)
    specs = corpus_mod.read_specs(specs_path)
    dialogs_path = _relative(run_dir, "dialogs.jsonl")
    done_ids = set()
    if os.path.exists(dialogs_path):
        done_ids = {d.spec.game_id for d in read_dialogs(dialogs_path)}
    describer, guesser = _resolve_agents(config)
    stamp = config.run_timestamp or _now()
    parse_retries = config.filter.get("parse_retries", 2)

    def produce(index: int) -> dict:
        dialog = run_game(
            specs[index],
            describer,
            guesser,
            run_corpus,
            parse_retries=parse_retries,
            created_at=stamp,
        )
        return dialog.to_json()

    _append_jsonl_ordered(
        dialogs_path,
        len(specs),
        done_ids,
        lambda i: specs[i].game_id,
        produce,
        config.concurrency,
    )
    dialogs = list(read_dialogs(dialogs_path))
    record.counts = {
        "specs": len(specs),
        "games": len(dialogs),
        "successes": sum(1 for d in dialogs if d.outcome.value == "Success"),
    }
    record.artifacts = {
        "specs.jsonl": sha256_file(specs_path),
        "dialogs.jsonl": sha256_file(dialogs_path),
    }


def _stage_filter(config: RunConfig, run_dir: str, record: StageRecord) -> None:
    run_corpus = load_run_corpus(config)
    _describer, guesser = _resolve_agents(config)
    dialogs = list(read_dialogs(_relative(run_dir, "dialogs.jsonl")))
    parse_retries = config.filter.get("parse_retries", 2)
    reports_path = _relative(run_dir, "reports.jsonl")

    def produce(index: int) -> dict:
        dialog = dialogs[index]
        if dialog.outcome.value != "Success":
            report = filtering.ValidationReport(
                game_id=dialog.spec.game_id,
                orderings_tested=tuple(filtering.permutations_for(dialog.spec)),
                guessed_id_per_ordering=tuple(
                    filtering.SKIPPED for _ in range(dialog.spec.n)
                ),
                passed=False,
                reason="NotSuccessful",
            )
        else:
            report = filtering.validate_dialog(
                dialog, guesser, run_corpus, parse_retries=parse_retries
            )
        return report.to_json()

    done_ids = set()
    if os.path.exists(reports_path):
        done_ids = {r.game_id for r in filtering.read_reports(reports_path)}
    _append_jsonl_ordered(
        reports_path,
        len(dialogs),
        done_ids,
        lambda i: dialogs[i].spec.game_id,
        produce,
        config.concurrency,
    )
    reports = filtering.read_reports(reports_path)
    record.counts = {
        "validated": len(reports),
        "retained": sum(1 for r in reports if r.passed),
    }
    record.artifacts = {"reports.jsonl": sha256_file(reports_path)}


def retained_dialogs(run_dir: str) -> list[DialogRecord]:
    passed = {
        r.game_id
        for r in filtering.read_reports(_relative(run_dir, "reports.jsonl"))
        if r.passed
    }
    return [
        d
        for d in read_dialogs(_relative(run_dir, "dialogs.jsonl"))
        if d.spec.game_id in passed
    ]


def _stage_dataset(config: RunConfig, run_dir: str, record: StageRecord) -> None:
    run_corpus = load_run_corpus(config)
    retained = retained_dialogs(run_dir)
    dataset_path = _relative(run_dir, "dataset.jsonl")
    manifest = datasets.build_sft_dataset(
        retained,
        run_corpus,
        dataset_path,
        mode=config.dataset.get("mode", "full"),
        round_tag=config.round,
        source_run_id=os.path.basename(os.path.normpath(run_dir)),
        emit_summaries=config.dataset.get("emit_summaries", False),
    )
    manifest_path = _relative(run_dir, "dataset_manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    record.counts = dict(manifest.counts)
    record.artifacts = {
        "dataset.jsonl": sha256_file(dataset_path),
        "dataset_manifest.json": sha256_file(manifest_path),
    }


def _eval_agent(config: RunConfig, run_dir: str) -> backends.AgentBackend:
    """Model under evaluation: the fine-tune hook's endpoint when this run
    produced one, else the configured eval agent, else the describer."""
    endpoint_path = _relative(run_dir, "finetune_endpoint.json")
    if os.path.exists(endpoint_path):
        with open(endpoint_path, encoding="utf-8") as fh:
            return build_endpoint(json.load(fh)["model_endpoint"])
    descriptor = config.agents.get("eval") or config.agents["describer"]
    return build_endpoint(descriptor)


def _write_eval(run_dir: str, name: str, obj: dict, record: StageRecord) -> None:
    os.makedirs(_relative(run_dir, "evals"), exist_ok=True)
    rel = os.path.join("evals", name)
    path = _relative(run_dir, rel)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    record.artifacts[rel] = sha256_file(path)


def _stage_eval_game(config: RunConfig, run_dir: str, record: StageRecord) -> None:
    reports = filtering.read_reports(_relative(run_dir, "reports.jsonl"))
    stats = evaluation.game_success_rate(reports)
    record.counts = {"games": stats.games_total, "succeeded": stats.games_succeeded}
    _write_eval(run_dir, "game_success.json", stats.to_json(), record)


def _stage_eval_vqa(config: RunConfig, run_dir: str, record: StageRecord) -> None:
    items_path = config.evals.get("vqa_items")
    if not items_path:
        raise DialogForgeError("config.evals.vqa_items is not set")
    run_corpus = load_run_corpus(config)
    items = evaluation.read_vqa_items(items_path)
    report = evaluation.score_vqa(
        items, _eval_agent(config, run_dir), run_corpus, seed=config.seed
    )
    record.counts = {
        t: stats.get("correct", 0) for t, stats in report.per_type.items()
    }
    _write_eval(run_dir, "vqa.json", report.to_json(), record)


def _stage_eval_success(config: RunConfig, run_dir: str, record: StageRecord) -> None:
    episodes_path = config.evals.get("episodes")
    if not episodes_path:
        raise DialogForgeError("config.evals.episodes is not set")
    run_corpus = load_run_corpus(config)
    episodes = evaluation.read_episodes(episodes_path)
    report = evaluation.success_detection_eval(
        episodes, _eval_agent(config, run_dir), run_corpus, seed=config.seed
    )
    record.counts = dict(report.per_type.get(evaluation.SUCCESS_DETECTION, {}))
    _write_eval(run_dir, "success_detection.json", report.to_json(), record)


def run_finetune_hook(config: RunConfig, run_dir: str) -> dict:
    """Invoke the external fine-tune command and return its endpoint.

    Contract: argv = hook + [dataset path]; stdin = config JSON; stdout =
    JSON {"model_endpoint": {...}}. Non-zero exit or malformed output
    raises HookFailed.
    """
    if not config.finetune_hook:
        raise HookFailed("no finetune_hook configured")
    dataset_path = _relative(run_dir, "dataset.jsonl")
    hook_input = json.dumps(
        {
            "dataset": os.path.abspath(dataset_path),
            "round": config.round,
            "finetune_params": config.finetune_params,
        }
    )
    argv = list(config.finetune_hook) + [os.path.abspath(dataset_path)]
    try:
        proc = subprocess.run(
            argv,
            input=hook_input.encode("utf-8"),
            capture_output=True,
            timeout=config.dataset.get("hook_timeout", 3600),
        )
    except (OSError, subprocess.TimeoutExpired) as exc:
        raise HookFailed(f"hook {argv[0]!r} did not run: {exc}") from exc
    if proc.returncode != 0:
        raise HookFailed(
            f"hook exited {proc.returncode}: {proc.stderr.decode('utf-8', 'replace')[:500]}"
        )
    try:
        result = json.loads(proc.stdout.decode("utf-8"))
        endpoint = result["model_endpoint"]
    except (ValueError, KeyError) as exc:
        raise HookFailed(f"hook stdout is not JSON with model_endpoint: {exc}") from exc
    return endpoint


def _stage_finetune_hook(config: RunConfig, run_dir: str, record: StageRecord) -> None:
    endpoint = run_finetune_hook(config, run_dir)
    rel = "finetune_endpoint.json"
    path = _relative(run_dir, rel)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"model_endpoint": endpoint}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    record.artifacts[rel] = sha256_file(path)
    record.counts = {"hook": 1}


_STAGE_FNS = {
    "generate": _stage_generate,
    "filter": _stage_filter,
    "dataset": _stage_dataset,
    "eval_game": _stage_eval_game,
    "eval_vqa": _stage_eval_vqa,
    "eval_success": _stage_eval_success,
    "finetune_hook": _stage_finetune_hook,
}


def run_stage(
    config: RunConfig, stage: str, run_dir, *, force: bool = False
) -> RunLedger:
    """Run one pipeline stage in a run directory, idempotently.

    Raises DependencyUnmet when prerequisite stages are not done and
    ConfigDrift when resuming with a different config snapshot.
    """
    if stage not in _STAGE_FNS:
        raise ValueError(f"unknown stage {stage!r}; expected one of {STAGES}")
    run_dir = str(run_dir)
    os.makedirs(run_dir, exist_ok=True)
    config_path = _relative(run_dir, "config.json")
    if not os.path.exists(config_path):
        with open(config_path, "w", encoding="utf-8") as fh:
            json.dump(config.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    config.validate_paths()
    ledger = RunLedger(run_dir)
    snapshot = config.snapshot_hash()
    if ledger.config_snapshot is None:
        ledger.config_snapshot = {"hash": snapshot, "config": config.to_json()}
    elif ledger.config_snapshot.get("hash") != snapshot:
        raise ConfigDrift(
            f"run {run_dir} was created with a different config snapshot"
        )
    _require_done(ledger, DEPENDENCIES[stage], stage)
    record = ledger.stage(stage)
    if record.status == "done" and record.config_hash == snapshot and not force:
        return ledger
    if force:
        ledger.stages[stage] = record = StageRecord()
    record.status = "running"
    record.started_at = _now()
    record.config_hash = snapshot
    ledger.save()
    started = time.monotonic()
    try:
        _STAGE_FNS[stage](config, run_dir, record)
    except Exception:
        record.status = "failed"
        record.finished_at = _now()
        record.wall_clock_s = time.monotonic() - started
        ledger.save()
        raise
    record.wall_clock_s = time.monotonic() - started
    record.finished_at = _now()
    record.status = "done"
    ledger.save()
    return ledger


def round_dir(config: RunConfig) -> str:
    return os.path.join(config.output_dir, f"round_{config.round}")


def run_round(config: RunConfig) -> dict:
    """One full self-improvement round; returns the round report.

    Runs generate, filter, dataset, and eval_game; invokes the fine-tune
    hook when configured and evaluates the returned model endpoint on the
    configured suites. The report compares game success and eval metrics
    against any earlier rounds found under the same output directory.
    """
    this_round = round_dir(config)
    for stage in ("generate", "filter", "dataset", "eval_game"):
        ledger = run_stage(config, stage, this_round)
    report: dict = {
        "round": config.round,
        "run_dir": this_round,
        "game_success": json.load(
            open(_relative(this_round, "evals/game_success.json"), encoding="utf-8")
        ),
        "dataset_counts": ledger.stage("dataset").counts,
        "evals": {},
    }
    if config.finetune_hook:
        try:
            run_stage(config, "finetune_hook", this_round)
        except HookFailed as exc:
            report["finetune"] = {"status": "failed", "error": str(exc)}
            report["note"] = "fine-tune hook failed; model evals skipped"
            _finish_round_report(config, report)
            raise
        with open(
            _relative(this_round, "finetune_endpoint.json"), encoding="utf-8"
        ) as fh:
            endpoint = json.load(fh)["model_endpoint"]
        report["finetune"] = {"status": "done", "model_endpoint": endpoint}
    else:
        report["note"] = "no fine-tune hook configured; evaluating configured agents"
    if config.evals.get("vqa_items"):
        run_stage(config, "eval_vqa", this_round)
        report["evals"]["vqa"] = json.load(
            open(_relative(this_round, "evals/vqa.json"), encoding="utf-8")
        )["per_type"]
    if config.evals.get("episodes"):
        run_stage(config, "eval_success", this_round)
        report["evals"]["success_detection"] = json.load(
            open(_relative(this_round, "evals/success_detection.json"), encoding="utf-8")
        )["per_type"]
    _finish_round_report(config, report)
    return report


def _finish_round_report(config: RunConfig, report: dict) -> None:
    this_round = round_dir(config)
    with open(_relative(this_round, "round_report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    rows = []
    for k in sorted(
        int(name.split("_", 1)[1])
        for name in os.listdir(config.output_dir)
        if name.startswith("round_")
        and os.path.exists(os.path.join(config.output_dir, name, "round_report.json"))
    ):
        with open(
            os.path.join(config.output_dir, f"round_{k}", "round_report.json"),
            encoding="utf-8",
        ) as fh:
            rows.append(json.load(fh))
    comparison = {
        "rounds": [
            {
                "round": row["round"],
                "game_success_rate": row["game_success"]["rate"],
                "evals": row.get("evals", {}),
                "note": row.get("note"),
            }
            for row in rows
        ]
    }
    with open(
        os.path.join(config.output_dir, "rounds_report.json"), "w", encoding="utf-8"
    ) as fh:
        json.dump(comparison, fh, indent=2, sort_keys=True)
        fh.write("\n")


def next_round_config(config: RunConfig) -> RunConfig:
    """Config for the following round: fresh sampling seed, and the hook's
    model endpoint (when present) promoted to both playing roles."""
    obj = config.to_json()
    obj["round"] = config.round + 1
    endpoint_path = _relative(round_dir(config), "finetune_endpoint.json")
    if os.path.exists(endpoint_path):
        with open(endpoint_path, encoding="utf-8") as fh:
            endpoint = json.load(fh)["model_endpoint"]
        obj["agents"] = {**config.agents, "describer": endpoint, "guesser": endpoint}
    grouping = dict(obj.get("grouping", {}))
    grouping["seed"] = stable_seed(config.seed, "round", config.round + 1)
    obj["grouping"] = grouping
    return RunConfig.from_json(obj)
