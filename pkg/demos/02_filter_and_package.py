"""Generate a batch of noisy games, filter them by permutation
consistency, and package the survivors as an SFT dataset."""

import json
import tempfile
from pathlib import Path

from dialog_forge import (
    OracleDescriber,
    OracleGuesser,
    build_sft_dataset,
    filter_corpus,
    gen_world,
    group_random,
    run_game,
)
from dialog_forge.engine import Outcome

world = gen_world(seed=19, n_images=96, distinct=True)
describer = OracleDescriber(world, noise=0.2)  # answers wrongly 20% of the time
guesser = OracleGuesser(world)

specs = group_random(world, n=4, games=300, seed=5)
dialogs = [run_game(spec, describer, guesser, world) for spec in specs]
successes = sum(1 for d in dialogs if d.outcome is Outcome.SUCCESS)
print(f"raw: {successes}/{len(dialogs)} successful ({successes / len(dialogs):.1%})")

result = filter_corpus(dialogs, guesser, world)
print(
    f"filter: {len(result.retained)} retained "
    f"({result.retention_rate:.1%} of successes pass all 4 target positions)"
)

out = Path(tempfile.mkdtemp()) / "dataset.jsonl"
manifest = build_sft_dataset(result.retained, world, out)
print(f"dataset: {json.dumps(manifest.counts)}")
print(f"wrote {out}")

with open(out, encoding="utf-8") as fh:
    first = json.loads(fh.readline())
print("\nfirst record:")
print(json.dumps(first, indent=2)[:400], "...")
