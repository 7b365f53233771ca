"""Pairwise slow-fast population search over architecture vectors.

Each generation the population is shuffled into N/2 pairs.  Both members of
a pair inherit weights from the same store snapshot and are estimated once;
the member with the higher validation loss (the slow-learner) moves toward
the other by a pseudo-gradient

    delta = lam1 * (alpha_fast - alpha_slow) + lam2 * delta_prev

with lam1, lam2 drawn uniformly per pair, while the fast-learner is left
untouched.  Losses only ever decide who is fast; their magnitudes never
enter the update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import rng as rngmod
from .evaluators.base import EstimationRequest, Evaluator, check_result
from .search_space import Genotype, LengthMismatch, SearchSpaceScheme, decode, random_arch
from .weight_store import WeightSet, commit, inherit, init_weight_set


class SlowFastError(Exception):
    pass


class OddPopulation(SlowFastError):
    pass


class NonFiniteLoss(SlowFastError):
    pass


class EvaluationError(SlowFastError):
    def __init__(self, individual_id: int, message: str):
        super().__init__(f"estimation failed for individual {individual_id}: {message}")
        self.individual_id = individual_id


@dataclass(frozen=True)
class Individual:
    alpha: np.ndarray
    delta_prev: np.ndarray
    last_loss: Optional[float]
    id: int
    # generation of the most recent position update; momentum is only reused
    # while it is exactly one generation old
    last_update_generation: Optional[int] = None

    def __post_init__(self):
        if self.alpha.shape != self.delta_prev.shape:
            raise LengthMismatch(self.alpha.shape[0], self.delta_prev.shape[0])


def fresh_individual(alpha: np.ndarray, id: int) -> Individual:
    return Individual(alpha=alpha, delta_prev=np.zeros_like(alpha), last_loss=None, id=id)


@dataclass(frozen=True)
class Population:
    individuals: Tuple[Individual, ...]
    generation: int = 0

    def __post_init__(self):
        if len(self.individuals) % 2 != 0 or not self.individuals:
            raise OddPopulation(f"population size {len(self.individuals)} must be even")
        ids = [ind.id for ind in self.individuals]
        if len(set(ids)) != len(ids):
            raise SlowFastError("individual ids must be unique")

    def __len__(self) -> int:
        return len(self.individuals)

    def __iter__(self):
        return iter(self.individuals)


@dataclass(frozen=True)
class SlowFastConfig:
    population_size: int = 20
    generations: int = 50
    lam1_range: Tuple[float, float] = (0.0, 1.0)
    lam2_range: Tuple[float, float] = (0.0, 1.0)
    per_coordinate_lambdas: bool = True
    clamp_epsilon: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2 or self.population_size % 2 != 0:
            raise ValueError("population_size must be even and at least 2")
        if self.generations < 1:
            raise ValueError("generations must be at least 1")
        if not 0.0 < self.clamp_epsilon < 1.0:
            raise ValueError("clamp_epsilon must lie strictly between 0 and 1")
        for lo, hi in (self.lam1_range, self.lam2_range):
            if not (0.0 <= lo <= hi <= 1.0):
                raise ValueError("lambda ranges must satisfy 0 <= lo <= hi <= 1")


@dataclass(frozen=True)
class PairingPlan:
    pairs: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        seen = [i for pair in self.pairs for i in pair]
        if sorted(seen) != list(range(2 * len(self.pairs))):
            raise SlowFastError("pairs must cover every index exactly once")


@dataclass(frozen=True)
class IndividualRecord:
    individual_id: int
    loss: float
    is_fast: bool
    pair_index: int


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    records: Tuple[IndividualRecord, ...]
    min_loss: float
    mean_loss: float
    max_loss: float
    spread: float

    @classmethod
    def from_records(cls, generation: int, records: Sequence[IndividualRecord]) -> "GenerationStats":
        losses = [r.loss for r in records]
        lo, hi = min(losses), max(losses)
        return cls(
            generation=generation,
            records=tuple(records),
            min_loss=lo,
            mean_loss=sum(losses) / len(losses),
            max_loss=hi,
            spread=hi - lo,
        )


@dataclass(frozen=True)
class BestRecord:
    genotype: Genotype
    loss: float
    generation: int
    individual_id: int


@dataclass
class RunState:
    """Everything needed to continue a run exactly where it stopped."""

    generation: int  # last completed generation
    population: Population
    omega: WeightSet
    pair_rng_state: dict
    lambda_rng_state: dict
    best: Optional[BestRecord]


@dataclass(frozen=True)
class SearchResult:
    best_genotype: Genotype
    best_loss: float
    best_generation: int
    best_individual: int
    history: Tuple[GenerationStats, ...]
    population: Population
    omega: WeightSet


def pair(pop: Population, rng: np.random.Generator) -> PairingPlan:
    """Uniform random perfect matching: shuffle indices, take consecutive pairs."""
    n = len(pop)
    if n % 2 != 0:
        raise OddPopulation(f"population size {n} must be even")
    order = rng.permutation(n)
    pairs = tuple((int(order[2 * k]), int(order[2 * k + 1])) for k in range(n // 2))
    return PairingPlan(pairs)


def classify(loss_a: float, loss_b: float, id_a: int = 0, id_b: int = 1) -> Tuple[int, int]:
    """Return (fast, slow) positions within the pair; ties go to the lower id."""
    for loss in (loss_a, loss_b):
        if not math.isfinite(loss):
            raise NonFiniteLoss(f"cannot classify non-finite loss {loss!r}")
    if loss_a < loss_b:
        return 0, 1
    if loss_b < loss_a:
        return 1, 0
    return (0, 1) if id_a <= id_b else (1, 0)


def draw_lambdas(
    config: SlowFastConfig, rng: np.random.Generator, length: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Fresh lam1, lam2 for one pair: scalars by default, vectors if configured."""
    size = length if config.per_coordinate_lambdas else None
    lam1 = rng.uniform(config.lam1_range[0], config.lam1_range[1], size=size)
    lam2 = rng.uniform(config.lam2_range[0], config.lam2_range[1], size=size)
    return np.asarray(lam1), np.asarray(lam2)


def pseudo_gradient_delta(
    alpha_slow: np.ndarray,
    alpha_fast: np.ndarray,
    delta_prev: np.ndarray,
    lam1,
    lam2,
) -> np.ndarray:
    if alpha_slow.shape != alpha_fast.shape:
        raise LengthMismatch(alpha_slow.shape[0], alpha_fast.shape[0])
    return lam1 * (alpha_fast - alpha_slow) + lam2 * delta_prev


def pseudo_gradient(
    slow: Individual,
    fast: Individual,
    rng: np.random.Generator,
    config: SlowFastConfig,
    momentum: Optional[np.ndarray] = None,
) -> np.ndarray:
    if momentum is None:
        momentum = slow.delta_prev
    lam1, lam2 = draw_lambdas(config, rng, len(slow.alpha))
    return pseudo_gradient_delta(slow.alpha, fast.alpha, momentum, lam1, lam2)


def effective_momentum(individual: Individual, generation: int) -> np.ndarray:
    """The momentum term entering the update at `generation`.

    The buffer holds the individual's most recent move; it only counts while
    that move happened in the immediately preceding generation, otherwise the
    term is zero.
    """
    if individual.last_update_generation == generation - 1:
        return individual.delta_prev
    return np.zeros_like(individual.delta_prev)


def update_slow(
    slow: Individual,
    delta: np.ndarray,
    scheme: SearchSpaceScheme,
    clamp_epsilon: float,
    generation: Optional[int] = None,
) -> Individual:
    """Move the slow-learner by delta, clamping genes into [lo, hi - eps].

    The momentum buffer keeps the pre-clamp delta so boundary hits do not
    zero it out.
    """
    if not np.all(np.isfinite(delta)):
        raise NonFiniteLoss("pseudo-gradient delta is not finite")
    bounds = scheme.intervals()
    moved = slow.alpha + delta
    clamped = np.clip(moved, bounds[:, 0], bounds[:, 1] - clamp_epsilon)
    return replace(
        slow,
        alpha=clamped,
        delta_prev=np.array(delta, dtype=float, copy=True),
        last_update_generation=generation,
    )


def apply_pseudo_gradient(
    slow: Individual,
    fast: Individual,
    lam1,
    lam2,
    momentum: np.ndarray,
    scheme: SearchSpaceScheme,
    clamp_epsilon: float,
    generation: Optional[int] = None,
) -> Individual:
    """The combined move: blend toward the fast-learner, add momentum, clamp.

    Evaluated as (1-lam1)*slow + lam1*fast + lam2*momentum so a full step
    (lam1 = 1, no momentum) lands on the fast-learner's vector bitwise; the
    equivalent delta form would pick up rounding error.
    """
    moved = (1.0 - lam1) * slow.alpha + lam1 * fast.alpha + lam2 * momentum
    if not np.all(np.isfinite(moved)):
        raise NonFiniteLoss("pseudo-gradient move is not finite")
    delta = moved - slow.alpha
    bounds = scheme.intervals()
    clamped = np.clip(moved, bounds[:, 0], bounds[:, 1] - clamp_epsilon)
    return replace(
        slow, alpha=clamped, delta_prev=delta, last_update_generation=generation
    )


def step_generation(
    pop: Population,
    evaluator: Evaluator,
    omega: WeightSet,
    scheme: SearchSpaceScheme,
    config: SlowFastConfig,
    pair_rng: np.random.Generator,
    lambda_rng: np.random.Generator,
    generation: int,
) -> Tuple[Population, WeightSet, GenerationStats]:
    """Run one full generation: pair, estimate, commit weights, update slow-learners.

    Pairs are processed sequentially in plan order, so each pair inherits
    from a store that already contains every earlier pair's commit; within a
    pair both members read the same snapshot.
    """
    plan = pair(pop, pair_rng)
    individuals: List[Individual] = list(pop.individuals)
    records: List[IndividualRecord] = []

    for pair_index, (i, j) in enumerate(plan.pairs):
        members = (individuals[i], individuals[j])
        genotypes = tuple(decode(ind.alpha, scheme) for ind in members)
        inherited = tuple(inherit(omega, g) for g in genotypes)

        results = []
        for ind, genotype, weights in zip(members, genotypes, inherited):
            request = EstimationRequest(genotype=genotype, inherited=weights, epoch_index=generation)
            try:
                results.append(check_result(request, evaluator.estimate(request)))
            except Exception as exc:
                raise EvaluationError(ind.id, str(exc)) from exc

        fast_pos, slow_pos = classify(
            results[0].validation_loss,
            results[1].validation_loss,
            members[0].id,
            members[1].id,
        )
        omega = commit(omega, results[fast_pos].trained, results[slow_pos].trained)

        fast = replace(members[fast_pos], last_loss=results[fast_pos].validation_loss)
        slow = replace(members[slow_pos], last_loss=results[slow_pos].validation_loss)
        # an exact loss tie carries no ordering information, so nobody moves
        if results[fast_pos].validation_loss != results[slow_pos].validation_loss:
            momentum = effective_momentum(slow, generation)
            lam1, lam2 = draw_lambdas(config, lambda_rng, len(slow.alpha))
            slow = apply_pseudo_gradient(
                slow, fast, lam1, lam2, momentum, scheme, config.clamp_epsilon, generation
            )

        positions = (i, j)
        individuals[positions[fast_pos]] = fast
        individuals[positions[slow_pos]] = slow
        for pos in range(2):
            records.append(
                IndividualRecord(
                    individual_id=members[pos].id,
                    loss=results[pos].validation_loss,
                    is_fast=(pos == fast_pos),
                    pair_index=pair_index,
                )
            )

    new_pop = Population(individuals=tuple(individuals), generation=generation)
    return new_pop, omega, GenerationStats.from_records(generation, records)


def init_run_state(
    scheme: SearchSpaceScheme, config: SlowFastConfig, evaluator: Evaluator
) -> RunState:
    """Fresh generation-0 state: random population, freshly initialized store."""
    pop_rng = rngmod.named_rng(config.seed, "pop_init")
    omega_rng = rngmod.named_rng(config.seed, "omega_init")
    individuals = tuple(
        fresh_individual(random_arch(pop_rng, scheme), id=i)
        for i in range(config.population_size)
    )
    omega = init_weight_set(scheme, evaluator.shape_registry(scheme), omega_rng)
    return RunState(
        generation=0,
        population=Population(individuals=individuals, generation=0),
        omega=omega,
        pair_rng_state=rngmod.generator_state(rngmod.named_rng(config.seed, "pairing")),
        lambda_rng_state=rngmod.generator_state(rngmod.named_rng(config.seed, "lambdas")),
        best=None,
    )


def run(
    scheme: SearchSpaceScheme,
    config: SlowFastConfig,
    evaluator: Evaluator,
    callback: Optional[Callable[[GenerationStats, RunState], None]] = None,
    state: Optional[RunState] = None,
) -> SearchResult:
    """Execute generations state.generation+1 .. G and return the best found.

    `state` defaults to a fresh initialization; passing a restored state
    continues a previous run exactly.  `callback` fires after every
    generation with that generation's stats and the full mutable state.
    """
    if state is None:
        state = init_run_state(scheme, config, evaluator)
    pair_rng = rngmod.restore_generator(state.pair_rng_state)
    lambda_rng = rngmod.restore_generator(state.lambda_rng_state)

    population = state.population
    omega = state.omega
    best = state.best
    history: List[GenerationStats] = []

    for generation in range(state.generation + 1, config.generations + 1):
        previous = population
        population, omega, stats = step_generation(
            previous, evaluator, omega, scheme, config, pair_rng, lambda_rng, generation
        )
        by_id = {ind.id: ind for ind in previous.individuals}
        for record in stats.records:
            if best is None or record.loss < best.loss:
                best = BestRecord(
                    genotype=decode(by_id[record.individual_id].alpha, scheme),
                    loss=record.loss,
                    generation=generation,
                    individual_id=record.individual_id,
                )
        history.append(stats)
        if callback is not None:
            snapshot = RunState(
                generation=generation,
                population=population,
                omega=omega,
                pair_rng_state=rngmod.generator_state(pair_rng),
                lambda_rng_state=rngmod.generator_state(lambda_rng),
                best=best,
            )
            callback(stats, snapshot)

    assert best is not None
    return SearchResult(
        best_genotype=best.genotype,
        best_loss=best.loss,
        best_generation=best.generation,
        best_individual=best.individual_id,
        history=tuple(history),
        population=population,
        omega=omega,
    )
