"""Play a single dialog game on a synthetic attribute world and print the
transcript: questions, answers, the running summary, and the outcome."""

from dialog_forge import (
    GuesserStrategy,
    OracleDescriber,
    OracleGuesser,
    gen_world,
    group_random,
    run_game,
)

world = gen_world(seed=7, n_images=64, distinct=True)
print(f"world: {len(world)} images, e.g. {world.records[0].attributes}")

spec = group_random(world, n=4, games=1, seed=11)[0]
print(f"\ngame {spec.game_id}: target is position {spec.target_index}")
for pos, image_id in enumerate(spec.image_ids, start=1):
    marker = " <- target" if pos == spec.target_index else ""
    print(f"  image {pos}: {world.get(image_id).attributes}{marker}")

describer = OracleDescriber(world, noise=0.0)
guesser = OracleGuesser(world, strategy=GuesserStrategy.INFO_GAIN)
dialog = run_game(spec, describer, guesser, world)

print("\ntranscript:")
for turn in dialog.turns:
    print(f"  Q: {turn.question}")
    print(f"  A: {turn.answer}")
    print(f"  summary -> {turn.summary_after}")
print(f"\nfinal guess: image {dialog.final_action.index}")
print(f"outcome: {dialog.outcome.value}")
