"""Training procedures: plain risk minimization, randomized augmentation,
and the adaptive variants that grow the augmentation set with tuples the
current model is most vulnerable to.

The adaptive methods alternate between J update steps (augmenting with
tuples drawn uniformly from the current augmentation set) and a search
round against the live model on a fresh training subset, whose winning
tuple is appended to the set. After H such rounds, training continues on
the final set for the configured number of extra steps.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, TrainingError
from .mlp import Adam, MlpClassifier
from .oracle import BuiltinOracle, fitness, transform_images
from .search import EsConfig, evolution_search, random_search
from .transform_space import IDENTITY, apply_tuple, sample_tuple

METHODS = ("erm", "rda", "rsda", "esda")


class AugmentationSet:
    """Growing list of augmentation tuples; element 0 is always identity."""

    def __init__(self):
        self.tuples = [IDENTITY]
        self.rounds = [0]  # search round that produced each tuple; 0 = initial

    def __len__(self):
        return len(self.tuples)

    def append(self, t, search_round):
        self.tuples.append(t)
        self.rounds.append(int(search_round))

    def sample(self, rng):
        return self.tuples[int(rng.integers(len(self.tuples)))]

    def lines(self):
        return [t.text() for t in self.tuples]


@dataclass
class TrainConfig:
    """Settings for one training run.

    The adaptive methods (rsda, esda) run `rounds` blocks of
    `steps_per_round` updates, searching once per block, then `extra_steps`
    more updates. The non-adaptive methods (erm, rda) run only
    `extra_steps` updates and ignore `rounds`/`steps_per_round`.
    """

    method: str = "erm"
    rounds: int = 0
    steps_per_round: int = 0
    extra_steps: int = 0
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    hidden: tuple = (128,)
    rs_iterations: int = 100
    es_population: int = 10
    es_generations: int = 10
    mutation_rate: float = 0.1
    search_subset: int = 1000
    workers: int = 1
    seed: int = 0

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.method in ("erm", "rda"):
            if self.extra_steps < 1:
                raise ConfigError(f"{self.method} needs extra_steps >= 1")
        else:
            if self.rounds < 0:
                raise ConfigError("rounds must be >= 0")
            if self.rounds > 0 and self.steps_per_round < 1:
                raise ConfigError("steps_per_round must be >= 1 when rounds > 0")
            if self.total_updates < 1:
                raise ConfigError("training needs at least one update step")
        if self.search_subset < 1:
            raise ConfigError("search_subset must be >= 1")

    @property
    def total_updates(self):
        if self.method in ("erm", "rda"):
            return self.extra_steps
        return self.rounds * self.steps_per_round + self.extra_steps


class TrainOutput(NamedTuple):
    model: MlpClassifier
    augmentation_set: AugmentationSet
    log: list  # (step, loss, augmentation set size) rows


def train_step(model, images, labels, t, optimizer):
    """One update: transform the batch by t, backprop mean cross-entropy,
    apply the optimizer. Returns the batch loss."""
    if images.shape[0] == 0:
        raise ConfigError("train_step needs a non-empty batch")
    return _fit_batch(model, transform_images(t, images), labels, optimizer, t.text())


def _fit_batch(model, images, labels, optimizer, tuple_text):
    loss, grads = model.loss_and_grads(images, labels)
    if not math.isfinite(loss):
        raise TrainingError(
            f"non-finite loss {loss!r} on a batch of {images.shape[0]} "
            f"(tuples: {tuple_text}); training aborted"
        )
    optimizer.step(model.weights, grads)
    return loss


def _search_tuple(model, subset, tset, n, cfg, rng):
    oracle = BuiltinOracle(model)
    if cfg.method == "rsda":
        result = random_search(
            oracle, subset, tset, n, cfg.rs_iterations, rng, workers=cfg.workers
        )
    else:
        es_cfg = EsConfig(
            population_size=cfg.es_population,
            generations=cfg.es_generations,
            mutation_rate=cfg.mutation_rate,
            seed=int(rng.integers(2**63)),
        )
        result = evolution_search(oracle, subset, tset, n, es_cfg, workers=cfg.workers)
    return result.best_tuple, result.f_min


def train(data, cfg, tset, n):
    """Run one training procedure end to end.

    Returns the trained model, the final augmentation set (length rounds+1
    for the adaptive methods, 1 otherwise), and the per-step training log.
    """
    cfg.validate()
    if len(data) == 0:
        raise ConfigError("training needs a non-empty dataset")
    side = data.images.shape[1]
    if data.images.shape[2] != side:
        raise ConfigError("the builtin model expects square images")
    rng = np.random.default_rng(cfg.seed)
    model = MlpClassifier(side, data.num_classes, hidden=cfg.hidden, seed=cfg.seed)
    optimizer = Adam(
        model.weights, lr=cfg.learning_rate, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps
    )
    augmentation = AugmentationSet()
    log = []
    step = 0

    def draw_tuple():
        if cfg.method == "rda":
            return sample_tuple(tset, n, rng)
        return augmentation.sample(rng)

    def run_block(num_steps):
        # each sample of a batch draws its own tuple, matching the
        # per-datapoint sampling of the underlying sequential procedure
        nonlocal step
        for _ in range(num_steps):
            idx = rng.integers(len(data), size=cfg.batch_size)
            images = data.images[idx]
            transformed = np.empty_like(images)
            for i in range(cfg.batch_size):
                transformed[i] = apply_tuple(draw_tuple(), images[i])
            try:
                loss = _fit_batch(model, transformed, data.labels[idx], optimizer, "per-sample mix")
            except TrainingError as exc:
                raise TrainingError(f"step {step + 1}: {exc}") from exc
            step += 1
            log.append((step, loss, len(augmentation)))

    if cfg.method in ("rsda", "esda"):
        for search_round in range(1, cfg.rounds + 1):
            run_block(cfg.steps_per_round)
            subset_size = min(cfg.search_subset, len(data))
            subset = data.subset(rng.choice(len(data), size=subset_size, replace=False))
            found, _f_min = _search_tuple(model, subset, tset, n, cfg, rng)
            augmentation.append(found, search_round)
    run_block(cfg.extra_steps)
    return TrainOutput(model, augmentation, log)


@dataclass
class EvalBudget:
    """Search budgets for a robustness evaluation."""

    rs_iterations: int = 1000
    es_population: int = 10
    es_generations: int = 30
    es_restarts: int = 3
    mutation_rate: float = 0.1
    workers: int = 1
    seed: int = 0

    def validate(self):
        if self.rs_iterations < 1:
            raise ConfigError("rs_iterations must be >= 1")
        if self.es_restarts < 1:
            raise ConfigError("es_restarts must be >= 1")


@dataclass
class RobustnessReport:
    """Clean accuracy plus the worst fitness found by each search method."""

    clean_accuracy: float
    rs_f_min: float
    rs_best_tuple: str
    rs_evaluations: int
    es_restarts: list  # one {"seed", "f_min", "best_tuple"} dict per restart
    es_best_f_min: float
    es_best_tuple: str
    tuple_length: int
    budget: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "clean_accuracy": self.clean_accuracy,
            "rs": {
                "f_min": self.rs_f_min,
                "best_tuple": self.rs_best_tuple,
                "evaluations": self.rs_evaluations,
            },
            "es": {
                "restarts": self.es_restarts,
                "best_f_min": self.es_best_f_min,
                "best_tuple": self.es_best_tuple,
            },
            "tuple_length": self.tuple_length,
            "budget": self.budget,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            clean_accuracy=doc["clean_accuracy"],
            rs_f_min=doc["rs"]["f_min"],
            rs_best_tuple=doc["rs"]["best_tuple"],
            rs_evaluations=doc["rs"]["evaluations"],
            es_restarts=list(doc["es"]["restarts"]),
            es_best_f_min=doc["es"]["best_f_min"],
            es_best_tuple=doc["es"]["best_tuple"],
            tuple_length=doc["tuple_length"],
            budget=dict(doc["budget"]),
        )


def evaluate_robustness(oracle, data, tset, n, budget):
    """Clean accuracy, worst tuple from one random-search run, and the best
    of several evolution-search restarts, all under the given budget."""
    budget.validate()
    rng = np.random.default_rng(budget.seed)
    clean = fitness(oracle, IDENTITY, data)
    rs_result = random_search(
        oracle, data, tset, n, budget.rs_iterations, rng, workers=budget.workers
    )
    restarts = []
    best_f, best_tuple = None, None
    for _ in range(budget.es_restarts):
        seed = int(rng.integers(2**63))
        es_cfg = EsConfig(
            population_size=budget.es_population,
            generations=budget.es_generations,
            mutation_rate=budget.mutation_rate,
            seed=seed,
        )
        result = evolution_search(oracle, data, tset, n, es_cfg, workers=budget.workers)
        restarts.append(
            {"seed": seed, "f_min": result.f_min, "best_tuple": result.best_tuple.text()}
        )
        if best_f is None or result.f_min < best_f:
            best_f, best_tuple = result.f_min, result.best_tuple.text()
    return RobustnessReport(
        clean_accuracy=clean,
        rs_f_min=rs_result.f_min,
        rs_best_tuple=rs_result.best_tuple.text(),
        rs_evaluations=rs_result.evaluations_used,
        es_restarts=restarts,
        es_best_f_min=best_f,
        es_best_tuple=best_tuple,
        tuple_length=int(n),
        budget={
            "rs_iterations": budget.rs_iterations,
            "es_population": budget.es_population,
            "es_generations": budget.es_generations,
            "es_restarts": budget.es_restarts,
            "mutation_rate": budget.mutation_rate,
            "seed": budget.seed,
        },
    )
