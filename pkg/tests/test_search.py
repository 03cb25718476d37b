import numpy as np
import pytest

from shiftsearch import (
    ConfigError,
    EsConfig,
    LabeledDataset,
    Oracle,
    crossover,
    density_report,
    evolution_search,
    mutate,
    random_search,
    select,
    write_density_csv,
)
from shiftsearch.transform_space import (
    TransformKind,
    TransformSet,
    TransformTuple,
    sample_tuple,
)


class AlwaysRight(Oracle):
    concurrency_safe = True

    def __init__(self, data):
        self.data = data

    def predict_batch(self, images):
        return self.data.labels[: images.shape[0]].copy()


class BrightnessHater(Oracle):
    """Predicts the true label unless the image mean dropped below a bar."""

    concurrency_safe = True

    def __init__(self, data, bar=60.0):
        self.data = data
        self.bar = bar

    def predict_batch(self, images):
        means = images.astype(np.float64).mean(axis=(1, 2, 3))
        preds = self.data.labels[: images.shape[0]].copy()
        preds[means < self.bar] = -1
        return preds


def flat_data(n=8, value=128, classes=3):
    images = np.full((n, 6, 6, 3), value, dtype=np.uint8)
    labels = (np.arange(n) % classes).astype(np.int64)
    return LabeledDataset(images, labels, classes)


def small_set():
    return TransformSet(
        [
            (TransformKind.BRIGHTNESS, np.linspace(0.2, 1.2, 4)),
            (TransformKind.SOLARIZE, np.linspace(0.0, 20.0, 3)),
        ]
    )


def single_atom_set():
    return TransformSet([(TransformKind.BRIGHTNESS, [0.8])])


def brute_force_min(oracle, data, tset, n):
    """Exhaustive enumeration over the whole tuple space."""
    from itertools import product

    from shiftsearch import fitness

    atoms = tset.atoms()
    best = None
    for combo in product(atoms, repeat=n):
        f = fitness(oracle, TransformTuple(combo), data)
        if best is None or f < best:
            best = f
    return best


class TestRandomSearch:
    def test_always_right_oracle_keeps_first_tuple(self):
        data = flat_data()
        rng = np.random.default_rng(0)
        result = random_search(AlwaysRight(data), data, small_set(), 2, 10, rng)
        assert result.f_min == 1.0
        assert result.best_tuple == result.history[0][1]
        assert result.evaluations_used == 10

    def test_single_iteration(self):
        data = flat_data()
        result = random_search(
            AlwaysRight(data), data, small_set(), 2, 1, np.random.default_rng(1)
        )
        assert len(result.history) == 1
        assert result.best_tuple == result.history[0][1]

    def test_single_atom_space_matches_brute_force(self):
        data = flat_data(value=100)
        tset = single_atom_set()
        oracle = BrightnessHater(data, bar=90.0)  # 0.8*100=80 < 90 kills it
        expected = brute_force_min(oracle, data, tset, 1)
        result = random_search(oracle, data, tset, 1, 5, np.random.default_rng(2))
        assert result.f_min == expected == 0.0

    def test_history_minimum_is_f_min(self):
        data = flat_data(value=200)
        oracle = BrightnessHater(data, bar=100.0)
        result = random_search(
            oracle, data, small_set(), 2, 40, np.random.default_rng(3)
        )
        fits = [f for _, _, f in result.history]
        assert result.f_min == min(fits)
        first_min = next(t for _, t, f in result.history if f == result.f_min)
        assert result.best_tuple == first_min

    def test_seeded_determinism(self):
        data = flat_data(value=200)
        oracle = BrightnessHater(data)
        runs = [
            random_search(oracle, data, small_set(), 3, 25, np.random.default_rng(7))
            for _ in range(2)
        ]
        assert runs[0].history == runs[1].history
        assert runs[0].best_tuple == runs[1].best_tuple

    def test_workers_do_not_change_result(self):
        data = flat_data(value=200)
        oracle = BrightnessHater(data)
        serial = random_search(
            oracle, data, small_set(), 2, 30, np.random.default_rng(5), workers=1
        )
        parallel = random_search(
            oracle, data, small_set(), 2, 30, np.random.default_rng(5), workers=4
        )
        assert serial.history == parallel.history

    def test_rejects_zero_iterations(self):
        data = flat_data()
        with pytest.raises(ConfigError):
            random_search(AlwaysRight(data), data, small_set(), 2, 0, np.random.default_rng(0))


class TestSelect:
    def test_inverse_fitness_frequencies(self):
        # weights (1/0.5, 1/0.25) = (2, 4) normalize to (1/3, 2/3)
        pop = ["a", "b"]
        rng = np.random.default_rng(11)
        picks = select(pop, [0.5, 0.25], 150_000, rng)
        freq_b = picks.count("b") / len(picks)
        sigma = np.sqrt((2 / 3) * (1 / 3) / len(picks))
        assert abs(freq_b - 2 / 3) <= 3 * sigma

    def test_equal_fitness_uniform(self):
        pop = ["a", "b", "c", "d"]
        rng = np.random.default_rng(12)
        picks = select(pop, [0.4] * 4, 100_000, rng)
        counts = np.array([picks.count(x) for x in pop])
        p = 0.25
        sigma = np.sqrt(len(picks) * p * (1 - p))
        assert np.abs(counts - len(picks) * p).max() <= 4 * sigma

    def test_zero_fitness_dominates(self):
        pop = ["zero", "half"]
        rng = np.random.default_rng(13)
        picks = select(pop, [0.0, 0.5], 10_000, rng)
        # weight ratio is (1/1e-6) : 2, so "zero" wins essentially always
        assert picks.count("zero") / len(picks) > 0.999

    def test_draws_with_replacement(self):
        picks = select(["only"], [0.3], 5, np.random.default_rng(0))
        assert picks == ["only"] * 5

    def test_negative_fitness_rejected(self):
        with pytest.raises(ConfigError):
            select(["a"], [-0.1], 1, np.random.default_rng(0))


def make_tuples(tset, specs):
    return [
        TransformTuple(tset.instance(kind, level) for kind, level in spec)
        for spec in specs
    ]


class TestCrossover:
    def test_cut_semantics(self):
        tset = small_set()
        a, b = make_tuples(
            tset,
            [
                [("brightness", 0), ("brightness", 1), ("brightness", 2)],
                [("solarize", 0), ("solarize", 1), ("solarize", 2)],
            ],
        )

        class FixedCut:
            def __init__(self, cut):
                self.cut = cut

            def integers(self, low, high=None):
                return self.cut

        children = crossover([a], [b], FixedCut(1))
        assert children[0] == TransformTuple((a[0], b[1], b[2]))
        assert children[1] == TransformTuple((b[0], a[1], a[2]))

    def test_cut_at_n_copies_parents(self):
        tset = small_set()
        a, b = make_tuples(
            tset,
            [
                [("brightness", 0), ("brightness", 1)],
                [("solarize", 0), ("solarize", 1)],
            ],
        )

        class FixedCut:
            def integers(self, low, high=None):
                return 2

        children = crossover([a], [b], FixedCut())
        assert children == [a, b]

    def test_identical_parents_identical_children(self):
        tset = small_set()
        (a,) = make_tuples(tset, [[("brightness", 0), ("solarize", 1)]])
        children = crossover([a], [a], np.random.default_rng(0))
        assert children == [a, a]

    def test_pairwise_adjacent_emission(self):
        tset = small_set()
        rng = np.random.default_rng(4)
        pop1 = [sample_tuple(tset, 3, rng) for _ in range(3)]
        pop2 = [sample_tuple(tset, 3, rng) for _ in range(3)]
        children = crossover(pop1, pop2, np.random.default_rng(9))
        assert len(children) == 6
        # child pairs share each parent pair's genes slotwise
        for p in range(3):
            c1, c2 = children[2 * p], children[2 * p + 1]
            for i in range(3):
                assert {c1[i], c2[i]} == {pop1[p][i], pop2[p][i]}

    def test_children_remain_valid_members(self):
        tset = small_set()
        rng = np.random.default_rng(14)
        pop1 = [sample_tuple(tset, 4, rng) for _ in range(10)]
        pop2 = [sample_tuple(tset, 4, rng) for _ in range(10)]
        for child in crossover(pop1, pop2, rng):
            assert len(child) == 4
            for inst in child:
                grid = tset.grid(inst.kind)
                assert 0 <= inst.level < len(grid)
                assert inst.magnitude == grid[inst.level]


class CountingRng:
    """Wraps a Generator and counts atom resample draws during mutation."""

    def __init__(self, rng):
        self.rng = rng
        self.integer_calls = 0

    def random(self):
        return self.rng.random()

    def integers(self, *args, **kwargs):
        self.integer_calls += 1
        return self.rng.integers(*args, **kwargs)


class TestMutate:
    def test_zero_rate_is_identity(self):
        tset = small_set()
        rng = np.random.default_rng(0)
        pop = [sample_tuple(tset, 3, rng) for _ in range(5)]
        assert mutate(pop, 0.0, tset, rng) == pop

    def test_full_rate_resamples_every_slot(self):
        # at rate 1 every slot is redrawn uniformly; the chance a slot keeps
        # its value is 1/total_atoms
        tset = small_set()  # 7 atoms
        rng = np.random.default_rng(21)
        pop = [sample_tuple(tset, 3, rng) for _ in range(4000)]
        counting = CountingRng(rng)
        mutated = mutate(pop, 1.0, tset, counting)
        slots = 3 * len(pop)
        assert counting.integer_calls == slots
        same = sum(
            orig[i] == new[i]
            for orig, new in zip(pop, mutated)
            for i in range(3)
        )
        p = 1.0 / tset.total_atoms
        sigma = np.sqrt(slots * p * (1 - p))
        assert abs(same - slots * p) <= 3 * sigma

    def test_event_rate_matches_eta(self):
        # resample events (not value changes) happen per slot with
        # probability eta; count them through an instrumented generator
        tset = small_set()
        rng = np.random.default_rng(17)
        eta = 0.1
        trials = 120_000
        pop = [sample_tuple(tset, 4, rng) for _ in range(trials // 4)]
        counting = CountingRng(rng)
        mutate(pop, eta, tset, counting)
        sigma = np.sqrt(trials * eta * (1 - eta))
        assert abs(counting.integer_calls - trials * eta) <= 3 * sigma

    def test_bad_rate_rejected(self):
        with pytest.raises(ConfigError):
            mutate([], 1.5, small_set(), np.random.default_rng(0))


class TestEvolutionSearch:
    def test_budget_is_population_times_generations_plus_one(self):
        data = flat_data(value=200)
        oracle = BrightnessHater(data)
        for pop_size, gens in [(10, 99), (4, 3), (2, 0)]:
            cfg = EsConfig(population_size=pop_size, generations=gens, seed=5)
            result = evolution_search(oracle, data, small_set(), 2, cfg)
            assert result.evaluations_used == pop_size * (gens + 1)
            assert len(result.history) == pop_size * (gens + 1)

    def test_thousand_evaluations_config(self):
        data = flat_data(n=4, value=200)
        oracle = AlwaysRight(data)
        cfg = EsConfig(population_size=10, generations=99, seed=0)
        result = evolution_search(oracle, data, single_atom_set(), 1, cfg)
        assert result.evaluations_used == 1000

    def test_single_atom_space(self):
        data = flat_data(value=100)
        tset = single_atom_set()
        oracle = BrightnessHater(data, bar=90.0)
        cfg = EsConfig(population_size=4, generations=2, seed=1)
        result = evolution_search(oracle, data, tset, 3, cfg)
        # the unique tuple is found at generation 0 already
        assert result.f_min == result.history[0][2]

    def test_seeded_determinism(self):
        data = flat_data(value=200)
        oracle = BrightnessHater(data)
        cfg = EsConfig(population_size=6, generations=8, seed=33)
        a = evolution_search(oracle, data, small_set(), 3, cfg)
        b = evolution_search(oracle, data, small_set(), 3, cfg)
        assert a.history == b.history and a.best_tuple == b.best_tuple

    def test_workers_do_not_change_result(self):
        data = flat_data(value=200)
        oracle = BrightnessHater(data)
        cfg = EsConfig(population_size=6, generations=6, seed=2)
        serial = evolution_search(oracle, data, small_set(), 2, cfg, workers=1)
        parallel = evolution_search(oracle, data, small_set(), 2, cfg, workers=4)
        assert serial.history == parallel.history

    def test_members_stay_valid_after_operators(self):
        data = flat_data(value=200)
        oracle = BrightnessHater(data)
        tset = small_set()
        cfg = EsConfig(population_size=6, generations=10, seed=8)
        result = evolution_search(oracle, data, tset, 3, cfg)
        for _, t, _ in result.history:
            assert len(t) == 3
            for inst in t:
                assert 0 <= inst.level < len(tset.grid(inst.kind))

    def test_odd_population_rejected(self):
        with pytest.raises(ConfigError):
            EsConfig(population_size=5).validate()
        with pytest.raises(ConfigError):
            EsConfig(population_size=0).validate()

    def test_prefix_minima_non_increasing(self):
        data = flat_data(value=200)
        oracle = BrightnessHater(data)
        cfg = EsConfig(population_size=4, generations=12, seed=3)
        result = evolution_search(oracle, data, small_set(), 2, cfg)
        best = np.inf
        minima = []
        for _, _, f in result.history:
            best = min(best, f)
            minima.append(best)
        assert all(a >= b for a, b in zip(minima, minima[1:]))
        assert minima[-1] == result.f_min


class TestDensityReport:
    def test_nearest_rank_tenth_smallest(self):
        rng = np.random.default_rng(0)
        values = rng.random(10_000)
        report = density_report(list(values), 0.001)
        assert report.threshold == np.sort(values)[9]

    def test_all_equal_history(self):
        report = density_report([0.42] * 50, 0.1)
        assert report.threshold == 0.42

    def test_counts_partition_history(self):
        rng = np.random.default_rng(1)
        values = list(rng.random(777)) + [0.0, 1.0]
        report = density_report(values, 0.5)
        assert report.counts.sum() == len(values)
        assert len(report.counts) == 100
        assert len(report.bin_edges) == 101

    def test_accepts_search_history_entries(self):
        history = [(0, None, 0.9), (1, None, 0.1), (2, None, 0.5)]
        report = density_report(history, 0.34)
        # nearest rank: ceil(0.34 * 3) = 2, so the 2nd smallest value
        assert report.threshold == 0.5

    def test_quantile_bounds(self):
        with pytest.raises(ConfigError):
            density_report([0.5], 0.0)
        with pytest.raises(ConfigError):
            density_report([0.5], 1.0)
        with pytest.raises(ConfigError):
            density_report([], 0.5)

    def test_csv_round_trip(self, tmp_path):
        import csv

        report = density_report([0.1, 0.2, 0.95], 0.5)
        path = tmp_path / "density.csv"
        write_density_csv(report, str(path))
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["bin_low", "bin_high", "count"]
        assert len(rows) == 101
        assert sum(int(r[2]) for r in rows[1:]) == 3
