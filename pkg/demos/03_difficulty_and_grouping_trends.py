"""Reproduce the qualitative difficulty trends on the synthetic world:
success falls as games grow from 2 to 8 images, and similarity-grouped
games are harder than randomly grouped ones. Reduced scale for speed;
`dialog-forge synth-bench` runs the full version."""

from dialog_forge.benchmarks import difficulty_trend, grouping_trend
from dialog_forge.evaluation import render_table, format_percent

points = difficulty_trend(games_per_n=1000, seed=2024)
print(
    render_table(
        "Impact of varying the number of images per game (noise 0.1, budget 3)",
        ["N", "game success"],
        [[p.n, format_percent(p.success.rate)] for p in points],
    )
)

result = grouping_trend(games=1000, seed=2024)
print()
print(
    render_table(
        "Impact of image grouping strategy (N=4, noise 0.1)",
        ["grouping", "game success"],
        [
            ["Similar images", format_percent(result.similar.rate)],
            ["Random images", format_percent(result.random.rate)],
        ],
    )
)
print("\nharder games -> fewer but more informative training dialogs")
