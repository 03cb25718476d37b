"""Random and evolution-based search for worst-case transformation tuples.

Both engines minimize the fitness of a tuple against a fixed model and
sample set, record every evaluation, and report the first-encountered tuple
achieving the minimum. The evolution engine runs fitness-proportional
selection on inverse fitness, single-point crossover, and per-slot mutation.
"""

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .oracle import fitness as default_fitness
from .transform_space import TransformTuple, sample_tuple

#: floor applied to fitness values before inverting them as selection weights
SELECTION_EPS = 1e-6


@dataclass
class SearchResult:
    """Outcome of one search run.

    history holds one (evaluation index, tuple, fitness) entry per fitness
    evaluation, in evaluation order; best_tuple is the first tuple that
    reached f_min.
    """

    best_tuple: TransformTuple
    f_min: float
    history: list
    evaluations_used: int

    def to_dict(self):
        return {
            "best_tuple": self.best_tuple.text(),
            "f_min": self.f_min,
            "evaluations_used": self.evaluations_used,
            "history": [[i, t.text(), f] for i, t, f in self.history],
        }


@dataclass
class EsConfig:
    """Evolution-search settings; the run costs population_size *
    (generations + 1) fitness evaluations."""

    population_size: int = 10
    generations: int = 99
    mutation_rate: float = 0.1
    seed: int = 0

    def validate(self):
        if self.population_size < 2 or self.population_size % 2 != 0:
            raise ConfigError(
                f"population size must be an even number >= 2, got {self.population_size}"
            )
        if self.generations < 0:
            raise ConfigError(f"generations must be >= 0, got {self.generations}")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ConfigError(
                f"mutation rate must be in [0, 1], got {self.mutation_rate}"
            )


def _evaluate_all(oracle, tuples, data, fitness_fn, workers):
    if workers > 1 and getattr(oracle, "concurrency_safe", False) and len(tuples) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda t: fitness_fn(oracle, t, data), tuples))
    return [fitness_fn(oracle, t, data) for t in tuples]


class _BestTracker:
    # joint (tuple, f_min) update; ties keep the first-encountered winner
    def __init__(self):
        self.tuple = None
        self.f_min = None

    def update(self, t, f):
        if self.f_min is None or f < self.f_min:
            self.tuple = t
            self.f_min = f


def random_search(oracle, data, tset, n, iterations, rng, workers=1, fitness_fn=None):
    """Evaluate `iterations` tuples drawn uniformly from the length-n space."""
    if iterations < 1:
        raise ConfigError(f"iterations must be >= 1, got {iterations}")
    fitness_fn = fitness_fn or default_fitness
    # all draws happen on one stream before dispatch, so the result does not
    # depend on the worker count
    tuples = [sample_tuple(tset, n, rng) for _ in range(iterations)]
    fits = _evaluate_all(oracle, tuples, data, fitness_fn, workers)
    best = _BestTracker()
    history = []
    for i, (t, f) in enumerate(zip(tuples, fits)):
        history.append((i, t, f))
        best.update(t, f)
    return SearchResult(best.tuple, best.f_min, history, iterations)


def select(population, fitnesses, count, rng):
    """Draw `count` members with replacement, probability proportional to 1/f.

    Fitness values are floored at SELECTION_EPS so perfectly vulnerable
    members (f = 0) get a huge but finite weight.
    """
    if count < 1:
        raise ConfigError(f"selection count must be >= 1, got {count}")
    f = np.asarray(fitnesses, dtype=np.float64)
    if f.shape != (len(population),):
        raise ConfigError("fitnesses must align one-to-one with the population")
    if np.any(f < 0):
        raise ConfigError("fitness values must be >= 0")
    weights = 1.0 / np.maximum(f, SELECTION_EPS)
    indices = rng.choice(len(population), size=int(count), replace=True, p=weights / weights.sum())
    return [population[i] for i in indices]


def crossover(pop1, pop2, rng):
    """Single-point crossover of aligned parent pairs.

    For each pair a cut point is drawn uniformly in [1, N]; the two children
    swap tails after the cut and are emitted adjacently (child1, child2 for
    each pair in order), so the output holds 2 * len(pop1) tuples.
    """
    if len(pop1) != len(pop2):
        raise ConfigError("crossover needs two populations of equal size")
    children = []
    for a, b in zip(pop1, pop2):
        if len(a) != len(b) or len(a) == 0:
            raise ConfigError("crossover parents must share a positive tuple length")
        cut = int(rng.integers(1, len(a) + 1))
        children.append(TransformTuple(a[:cut] + b[cut:]))
        children.append(TransformTuple(b[:cut] + a[cut:]))
    return children


def mutate(population, rate, tset, rng):
    """Resample each slot of each tuple with probability `rate`.

    Replacements are drawn uniformly from the whole atom set, so a mutated
    slot may end up unchanged by chance.
    """
    if not 0.0 <= rate <= 1.0:
        raise ConfigError(f"mutation rate must be in [0, 1], got {rate}")
    out = []
    for t in population:
        items = list(t)
        for i in range(len(items)):
            if rng.random() < rate:
                items[i] = tset.sample_atom(rng)
        out.append(TransformTuple(items))
    return out


def evolution_search(oracle, data, tset, n, config, workers=1, fitness_fn=None):
    """Genetic minimization of tuple fitness.

    Initializes population_size uniform tuples, then per generation selects
    two half-populations on inverse fitness, crosses them, mutates, and
    re-evaluates. The best (tuple, fitness) seen anywhere in the run is
    returned; the budget is exactly population_size * (generations + 1).
    """
    config.validate()
    fitness_fn = fitness_fn or default_fitness
    rng = np.random.default_rng(config.seed)
    pop_size = config.population_size
    population = [sample_tuple(tset, n, rng) for _ in range(pop_size)]
    fits = _evaluate_all(oracle, population, data, fitness_fn, workers)
    best = _BestTracker()
    history = []
    for t, f in zip(population, fits):
        history.append((len(history), t, f))
        best.update(t, f)
    for _generation in range(config.generations):
        half = pop_size // 2
        # draws for the whole generation come from the single stream before
        # any parallel evaluation
        parents1 = select(population, fits, half, rng)
        parents2 = select(population, fits, half, rng)
        population = crossover(parents1, parents2, rng)
        population = mutate(population, config.mutation_rate, tset, rng)
        fits = _evaluate_all(oracle, population, data, fitness_fn, workers)
        for t, f in zip(population, fits):
            history.append((len(history), t, f))
            best.update(t, f)
    return SearchResult(
        best.tuple, best.f_min, history, pop_size * (config.generations + 1)
    )


@dataclass
class DensityReport:
    """Empirical distribution of fitness values from a search history."""

    threshold: float  # nearest-rank q-quantile
    quantile: float
    bin_edges: np.ndarray  # 101 edges over [0, 1]
    counts: np.ndarray  # 100 bin counts

    def rows(self):
        return [
            (float(self.bin_edges[i]), float(self.bin_edges[i + 1]), int(self.counts[i]))
            for i in range(len(self.counts))
        ]


def density_report(history, q):
    """Histogram the fitness values and report the nearest-rank q-quantile.

    The threshold is the ceil(q*K)-th smallest of the K observed values,
    the probability-q flag on the fitness density plot.
    """
    if not 0.0 < q < 1.0:
        raise ConfigError(f"quantile must be in (0, 1), got {q}")
    values = np.array(
        [entry[2] if isinstance(entry, tuple) else float(entry) for entry in history],
        dtype=np.float64,
    )
    if values.size == 0:
        raise ConfigError("density report needs a non-empty history")
    rank = max(1, math.ceil(q * values.size))
    threshold = float(np.sort(values)[rank - 1])
    counts, edges = np.histogram(values, bins=100, range=(0.0, 1.0))
    return DensityReport(threshold, float(q), edges, counts)


def write_density_csv(report, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_low", "bin_high", "count"])
        for low, high, count in report.rows():
            writer.writerow([f"{low:.6f}", f"{high:.6f}", count])
