"""Synthetic-world benchmark runs: chance statistics, difficulty and
grouping trends, oracle completeness, and exact-vs-simulated agreement.

These runners back both the ``synth-bench`` command and the acceptance
suite; every run is deterministic under its seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .corpus import Corpus, group_by_similarity, group_random
from .engine import GameSpec, Outcome, run_game
from .evaluation import format_percent, render_table
from .filtering import filter_corpus
from .rng import SplitMix64, stable_seed
from .synthworld import (
    DEFAULT_DOMAINS,
    DomainSpec,
    GuesserStrategy,
    OracleDescriber,
    OracleGuesser,
    OraclePolicy,
    expected_success,
    gen_world,
    simulate_success,
)


def binomial_sigma(p: float, n: int) -> float:
    p = min(max(p, 0.0), 1.0)
    return math.sqrt(p * (1.0 - p) / n) if n else 0.0


@dataclass(frozen=True)
class RateEstimate:
    hits: int
    trials: int

    @property
    def rate(self) -> float:
        return self.hits / self.trials if self.trials else 0.0

    @property
    def sigma(self) -> float:
        return binomial_sigma(self.rate, self.trials)

    def interval(self, k: float = 3.0) -> tuple[float, float]:
        return self.rate - k * self.sigma, self.rate + k * self.sigma

    def to_json(self) -> dict:
        return {
            "hits": self.hits,
            "trials": self.trials,
            "rate": self.rate,
            "sigma": self.sigma,
        }


def intervals_disjoint(high: RateEstimate, low: RateEstimate, k: float = 3.0) -> bool:
    """True when ``high``'s k-sigma interval sits strictly above ``low``'s."""
    return high.interval(k)[0] > low.interval(k)[1]


def _play_all(
    specs: list[GameSpec],
    describer: OracleDescriber,
    guesser: OracleGuesser,
    world: Corpus,
) -> list:
    return [run_game(spec, describer, guesser, world) for spec in specs]


@dataclass
class ChanceRateResult:
    games: int
    n: int
    raw_success: RateEstimate = None
    retention: RateEstimate = None  # among Success dialogs

    def to_json(self) -> dict:
        return {
            "games": self.games,
            "n": self.n,
            "raw_success": self.raw_success.to_json(),
            "retention_among_successes": self.retention.to_json(),
            "analytic_raw": 1.0 / self.n,
            "analytic_retention": (1.0 / self.n) ** self.n,
        }


def chance_rate_benchmark(
    games: int = 10_000, n: int = 4, seed: int = 2024
) -> ChanceRateResult:
    """Uniform-random immediate guesser: raw success tends to 1/N and
    post-filter retention among successes to chance (1/N)^N."""
    world = gen_world(stable_seed(seed, "chance-world"), 64, distinct=True)
    specs = group_random(world, n, games, stable_seed(seed, "chance-specs"))
    describer = OracleDescriber(world)
    guesser = OracleGuesser(world, strategy=GuesserStrategy.UNIFORM_RANDOM)
    dialogs = _play_all(specs, describer, guesser, world)
    successes = [d for d in dialogs if d.outcome is Outcome.SUCCESS]
    result = filter_corpus(dialogs, guesser, world)
    return ChanceRateResult(
        games=games,
        n=n,
        raw_success=RateEstimate(len(successes), games),
        retention=RateEstimate(len(result.retained), len(successes)),
    )


@dataclass
class TrendPoint:
    n: int
    success: RateEstimate

    def to_json(self) -> dict:
        return {"n": self.n, "success": self.success.to_json()}


# Compact domain for the difficulty trend: with few attribute values,
# bigger games genuinely need more questions, so the size effect is not
# drowned out by a single high-entropy count query.
DIFFICULTY_DOMAINS = DomainSpec(
    background_color=("orange", "blue"),
    object_color=("white", "blue"),
    shape=("square", "circle", "triangle"),
    count=tuple(range(1, 7)),
)


def difficulty_trend(
    games_per_n: int = 5000,
    ns: tuple[int, ...] = (2, 4, 8),
    noise: float = 0.1,
    budget: int = 3,
    seed: int = 2024,
) -> list[TrendPoint]:
    """Raw success versus game size on distinct-tuple worlds with a noisy
    describer and the greedy information-gain guesser."""
    world = gen_world(
        stable_seed(seed, "difficulty-world"),
        DIFFICULTY_DOMAINS.size,
        DIFFICULTY_DOMAINS,
        distinct=True,
    )
    describer = OracleDescriber(world, noise=noise)
    guesser = OracleGuesser(world, strategy=GuesserStrategy.INFO_GAIN)
    points = []
    for n in ns:
        specs = group_random(
            world, n, games_per_n, stable_seed(seed, "difficulty", n), max_turns=budget
        )
        dialogs = _play_all(specs, describer, guesser, world)
        hits = sum(1 for d in dialogs if d.outcome is Outcome.SUCCESS)
        points.append(TrendPoint(n=n, success=RateEstimate(hits, games_per_n)))
    return points


@dataclass
class GroupingTrendResult:
    similar: RateEstimate
    random: RateEstimate
    n: int
    games: int

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "games": self.games,
            "similar": self.similar.to_json(),
            "random": self.random.to_json(),
        }


def grouping_trend(
    games: int = 5000,
    n: int = 4,
    noise: float = 0.1,
    budget: int = 3,
    seed: int = 2024,
) -> GroupingTrendResult:
    """Similarity-grouped games (nearest one-hot neighbours, so tuples one
    attribute apart) versus uniformly random groups at the same size."""
    domains = DEFAULT_DOMAINS
    world = gen_world(
        stable_seed(seed, "grouping-world"), domains.size, domains, distinct=True
    )
    describer = OracleDescriber(world, noise=noise)
    guesser = OracleGuesser(world, strategy=GuesserStrategy.INFO_GAIN)
    rates = {}
    for label, specs in (
        (
            "similar",
            group_by_similarity(
                world, n, games, stable_seed(seed, "grouping-sim"), max_turns=budget
            ),
        ),
        (
            "random",
            group_random(
                world, n, games, stable_seed(seed, "grouping-rand"), max_turns=budget
            ),
        ),
    ):
        dialogs = _play_all(specs, describer, guesser, world)
        hits = sum(1 for d in dialogs if d.outcome is Outcome.SUCCESS)
        rates[label] = RateEstimate(hits, games)
    return GroupingTrendResult(
        similar=rates["similar"], random=rates["random"], n=n, games=games
    )


@dataclass
class CompletenessResult:
    n: int
    games: int
    success: RateEstimate
    filter_pass: RateEstimate

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "games": self.games,
            "success": self.success.to_json(),
            "filter_pass": self.filter_pass.to_json(),
        }


def oracle_completeness(
    games: int = 1000,
    ns: tuple[int, ...] = (2, 4),
    budget: int = 3,
    seed: int = 2024,
) -> list[CompletenessResult]:
    """Noiseless distinct-tuple worlds: every game must succeed and every
    success must survive permutation validation."""
    world = gen_world(stable_seed(seed, "completeness-world"), 200, distinct=True)
    describer = OracleDescriber(world, noise=0.0)
    guesser = OracleGuesser(world, strategy=GuesserStrategy.INFO_GAIN)
    results = []
    for n in ns:
        specs = group_random(
            world, n, games, stable_seed(seed, "completeness", n), max_turns=budget
        )
        dialogs = _play_all(specs, describer, guesser, world)
        successes = [d for d in dialogs if d.outcome is Outcome.SUCCESS]
        filtered = filter_corpus(dialogs, guesser, world)
        results.append(
            CompletenessResult(
                n=n,
                games=games,
                success=RateEstimate(len(successes), games),
                filter_pass=RateEstimate(len(filtered.retained), len(successes)),
            )
        )
    return results


@dataclass
class ExactVsSimFixture:
    n: int
    noise: float
    budget: int
    strategy: str
    exact: float
    simulated: RateEstimate
    within_3_sigma: bool = False

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "noise": self.noise,
            "budget": self.budget,
            "strategy": self.strategy,
            "exact": self.exact,
            "simulated": self.simulated.to_json(),
            "within_3_sigma": self.within_3_sigma,
        }


def exact_vs_simulated(
    fixtures: int = 10,
    runs: int = 50_000,
    seed: int = 2024,
) -> list[ExactVsSimFixture]:
    """Outcome-tree enumeration against Monte Carlo playouts of the same
    stochastic process, on randomized game fixtures."""
    picker = SplitMix64(stable_seed(seed, "fixtures"))
    world = gen_world(stable_seed(seed, "exact-world"), 64, distinct=True)
    ids = [r.image_id for r in world.records]
    out = []
    for index in range(fixtures):
        n = picker.choice((2, 3, 4))
        noise = picker.choice((0.0, 0.05, 0.1, 0.2))
        budget = picker.choice((1, 2, 3))
        strategy = picker.choice(
            (GuesserStrategy.INFO_GAIN, GuesserStrategy.FIRST_DIFFERENCE,
             GuesserStrategy.UNIFORM_RANDOM)
        )
        chosen = []
        pool = list(ids)
        for _ in range(n):
            chosen.append(pool.pop(picker.randrange(len(pool))))
        spec = GameSpec(
            game_id=f"fixture-{index}",
            image_ids=tuple(chosen),
            target_index=picker.randrange(n) + 1,
            max_turns=budget,
            corpus_id=world.corpus_id,
            seed=stable_seed(seed, "fixture", index),
        )
        policy = OraclePolicy(describer_noise=noise, guesser_strategy=strategy)
        exact = expected_success(spec, world, policy)
        rng = SplitMix64(stable_seed(seed, "mc", index))
        hits = sum(
            1 for _ in range(runs) if simulate_success(spec, world, policy, rng)
        )
        simulated = RateEstimate(hits, runs)
        sigma = binomial_sigma(exact, runs)
        within = abs(simulated.rate - exact) <= 3.0 * sigma + 1e-12
        out.append(
            ExactVsSimFixture(
                n=n,
                noise=noise,
                budget=budget,
                strategy=strategy,
                exact=exact,
                simulated=simulated,
                within_3_sigma=within,
            )
        )
    return out


@dataclass
class BenchReport:
    chance: ChanceRateResult = None
    difficulty: list = field(default_factory=list)
    grouping: GroupingTrendResult = None
    completeness: list = field(default_factory=list)
    exact_vs_sim: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "chance": self.chance.to_json(),
            "difficulty": [p.to_json() for p in self.difficulty],
            "grouping": self.grouping.to_json(),
            "completeness": [c.to_json() for c in self.completeness],
            "exact_vs_sim": [f.to_json() for f in self.exact_vs_sim],
        }

    def render(self) -> str:
        blocks = []
        blocks.append(
            render_table(
                "Chance-rate check (uniform random guesser)",
                ["games", "N", "raw success", "retention | success", "analytic"],
                [[
                    self.chance.games,
                    self.chance.n,
                    format_percent(self.chance.raw_success.rate),
                    format_percent(self.chance.retention.rate, 2),
                    f"{format_percent(1 / self.chance.n)} / "
                    f"{format_percent((1 / self.chance.n) ** self.chance.n, 2)}",
                ]],
            )
        )
        blocks.append(
            render_table(
                "Impact of varying the number of images per game",
                ["N", "game success", "3-sigma interval"],
                [
                    [
                        p.n,
                        format_percent(p.success.rate),
                        "[{:.1f}%, {:.1f}%]".format(
                            100 * p.success.interval()[0], 100 * p.success.interval()[1]
                        ),
                    ]
                    for p in self.difficulty
                ],
            )
        )
        blocks.append(
            render_table(
                "Impact of image grouping strategy",
                ["grouping", "game success"],
                [
                    ["Similar images", format_percent(self.grouping.similar.rate)],
                    ["Random images", format_percent(self.grouping.random.rate)],
                ],
            )
        )
        blocks.append(
            render_table(
                "Oracle completeness (noiseless, distinct tuples)",
                ["N", "game success", "filter pass"],
                [
                    [
                        c.n,
                        format_percent(c.success.rate),
                        format_percent(c.filter_pass.rate),
                    ]
                    for c in self.completeness
                ],
            )
        )
        blocks.append(
            render_table(
                "Exact enumeration vs Monte Carlo",
                ["fixture", "N", "noise", "budget", "strategy", "exact", "simulated", "ok"],
                [
                    [
                        i,
                        f.n,
                        f.noise,
                        f.budget,
                        f.strategy,
                        f"{f.exact:.4f}",
                        f"{f.simulated.rate:.4f}",
                        "yes" if f.within_3_sigma else "NO",
                    ]
                    for i, f in enumerate(self.exact_vs_sim)
                ],
            )
        )
        return "\n\n".join(blocks)


def run_bench(
    seed: int = 2024,
    *,
    chance_games: int = 10_000,
    trend_games: int = 5000,
    grouping_games: int = 5000,
    completeness_games: int = 1000,
    mc_fixtures: int = 10,
    mc_runs: int = 50_000,
) -> BenchReport:
    return BenchReport(
        chance=chance_rate_benchmark(chance_games, seed=seed),
        difficulty=difficulty_trend(trend_games, seed=seed),
        grouping=grouping_trend(grouping_games, seed=seed),
        completeness=oracle_completeness(completeness_games, seed=seed),
        exact_vs_sim=exact_vs_simulated(mc_fixtures, mc_runs, seed=seed),
    )
