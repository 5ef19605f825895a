import itertools
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import DEFAULT_RUNS
from .design import require_valid
from .errors import DesignConsistencyError, InputFormatError
from .rng import derive
from .workers import parallel_map

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SeqSimConfig:
    hyperopt_dataset: str
    measure_dataset: str
    runs: int = DEFAULT_RUNS
    seed: int = 0

    def __post_init__(self):
        if self.runs < 1:
            raise InputFormatError(f"runs must be positive, got {self.runs}")


@dataclass(frozen=True)
class SimulationRun:
    """One simulated optimization sequence.

    Treatments are tuples of level indices over the design-choice factors
    (every factor except the dataset factor), in design order.
    """

    start: tuple
    order: tuple
    final: tuple
    start_response: float
    hyperopt_response: float
    measured_response: float
    experiments: int


@dataclass(frozen=True)
class Summary:
    mean: float
    sd: float
    min: float
    max: float

    @classmethod
    def of(cls, values):
        values = np.asarray(values, dtype=float)
        sd = float(values.std(ddof=1)) if values.size > 1 else 0.0
        return cls(float(values.mean()), sd, float(values.min()), float(values.max()))


@dataclass(frozen=True)
class SimulationReport:
    config: Optional[SeqSimConfig]
    symbols: tuple
    runs: tuple
    summary: Summary


class SequentialOptimizer:
    """Simulates one-factor-at-a-time hyperparameter optimization on a full factorial."""

    def __init__(self, table, design_factors, spec):
        """Prepare response lookups for every dataset.

        Args:
            table: Complete OutcomeTable
            design_factors: Symbols of the factors to optimize (never the dataset factor)
            spec: ResponseSpec used to compare and measure treatments
        """
        require_valid(table)
        self.table = table
        self.spec = spec
        design = table.design
        self.symbols = tuple(s for s in design.symbols if s != table.dataset_factor)
        design_factors = tuple(design_factors)
        if not design_factors:
            raise InputFormatError("Need at least one factor to optimize")
        for symbol in design_factors:
            if symbol == table.dataset_factor:
                raise InputFormatError(f"The dataset factor {symbol!r} cannot be optimized")
            if symbol not in self.symbols:
                raise InputFormatError(f"Unknown factor symbol {symbol!r}")
        self.design_factors = design_factors
        self.levels = {s: design.factor(s).n_levels for s in self.symbols}
        self._cube = table.cube(spec)
        self._dataset_axis = design.axis(table.dataset_factor)

    def _responses(self, dataset):
        factor = self.table.design.factor(self.table.dataset_factor)
        return np.take(self._cube, factor.level_index(dataset), axis=self._dataset_axis)

    def _lookup(self, responses, treatment):
        try:
            return float(responses[treatment])
        except IndexError:
            raise DesignConsistencyError(f"Missing treatment {treatment}")

    def optimize(self, start, order, hyperopt_dataset, measure_dataset):
        """Run one optimization sequence.

        Args:
            start: Level indices of the starting treatment (design-choice factors)
            order: Symbols in the order they are optimized
            hyperopt_dataset: Dataset used to compare levels
            measure_dataset: Dataset the final treatment is measured on

        Returns:
            SimulationRun
        """
        hyperopt = self._responses(hyperopt_dataset)
        measure = self._responses(measure_dataset)
        current = list(start)
        experiments = 0
        for symbol in order:
            position = self.symbols.index(symbol)
            candidates = []
            for level in range(self.levels[symbol]):
                current[position] = level
                candidates.append(self._lookup(hyperopt, tuple(current)))
            experiments += len(candidates)
            # argmax picks the lowest level index among ties
            current[position] = int(np.argmax(candidates))
        final = tuple(current)
        return SimulationRun(
            start=tuple(start),
            order=tuple(order),
            final=final,
            start_response=self._lookup(hyperopt, tuple(start)),
            hyperopt_response=self._lookup(hyperopt, final),
            measured_response=self._lookup(measure, final),
            experiments=experiments,
        )

    def _random_run(self, config, run_index):
        rng = derive(config.seed, run_index)
        start = tuple(int(rng.integers(self.levels[s])) for s in self.symbols)
        order = tuple(self.design_factors[i] for i in rng.permutation(len(self.design_factors)))
        return self.optimize(start, order, config.hyperopt_dataset, config.measure_dataset)

    def simulate(self, config):
        """Run config.runs sequences with random starts and factor orders.

        Run i draws from the generator derived from (seed, i).

        Returns:
            SimulationReport
        """
        datasets = self.table.dataset_levels
        for dataset in (config.hyperopt_dataset, config.measure_dataset):
            if dataset not in datasets:
                raise InputFormatError(f"Unknown dataset level {dataset!r}")
        runs = parallel_map(lambda i: self._random_run(config, i), range(config.runs))
        summary = Summary.of([run.measured_response for run in runs])
        logger.info("Sequential simulation %s -> %s: %d runs, mean %.4f",
                    config.hyperopt_dataset, config.measure_dataset, config.runs, summary.mean)
        return SimulationReport(config, self.symbols, tuple(runs), summary)

    def exhaustive(self, hyperopt_dataset, measure_dataset):
        """Run every start treatment with every factor order.

        Returns:
            SimulationReport with config None
        """
        starts = itertools.product(*(range(self.levels[s]) for s in self.symbols))
        jobs = [(start, order) for start in starts
                for order in itertools.permutations(self.design_factors)]
        runs = parallel_map(lambda job: self.optimize(job[0], job[1], hyperopt_dataset, measure_dataset), jobs)
        summary = Summary.of([run.measured_response for run in runs])
        logger.info("Exhaustive sequential enumeration: %d runs", len(runs))
        return SimulationReport(None, self.symbols, tuple(runs), summary)


def sequential_simulate(table, design_factors, spec, config):
    """Simulate sequential single-factor optimization (see SequentialOptimizer)."""
    return SequentialOptimizer(table, design_factors, spec).simulate(config)


def sequential_grid(table, design_factors, spec, hyperopt_datasets, measure_dataset,
                    runs=DEFAULT_RUNS, seed=0):
    """One simulation per hyperopt dataset, all measured on the same dataset.

    Returns:
        dict hyperopt dataset -> SimulationReport
    """
    optimizer = SequentialOptimizer(table, design_factors, spec)
    return {dataset: optimizer.simulate(SeqSimConfig(dataset, measure_dataset, runs, seed))
            for dataset in hyperopt_datasets}
