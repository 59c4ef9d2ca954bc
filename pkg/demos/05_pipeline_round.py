"""Run one full pipeline round (generate -> filter -> dataset -> eval)
through the orchestrator, the same path the CLI drives:

    dialog-forge run-round --config config.json
"""

import json
import tempfile
from pathlib import Path

from dialog_forge.orchestrator import RunConfig, run_round, verify_run, round_dir
from dialog_forge.synthworld import save_world_spec

base = Path(tempfile.mkdtemp())
world_path = base / "world.json"
save_world_spec(world_path, seed=29, n_images=64, distinct=True)

config = RunConfig.from_json(
    {
        "corpus": {"world": str(world_path)},
        "grouping": {"strategy": "random", "n": 4, "games": 100, "seed": 1},
        "agents": {
            "describer": {
                "backend": "oracle", "world": str(world_path),
                "role": "describer", "noise": 0.15,
            },
            "guesser": {
                "backend": "oracle", "world": str(world_path), "role": "guesser",
            },
        },
        "concurrency": 4,
        "output_dir": str(base / "runs"),
        "seed": 1,
    }
)

report = run_round(config)
print(json.dumps(report, indent=2, sort_keys=True)[:800], "...")

problems = verify_run(round_dir(config))
print(f"\nartifact verification: {'clean' if not problems else problems}")
print(f"round directory: {round_dir(config)}")
for name in ("specs.jsonl", "dialogs.jsonl", "reports.jsonl", "dataset.jsonl", "ledger.json"):
    print(f"  {name}: {(Path(round_dir(config)) / name).stat().st_size} bytes")
