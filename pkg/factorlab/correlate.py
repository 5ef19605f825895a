"""Spearman rank correlations, Fisher-z confidence bounds and correlograms."""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .config import DEFAULT_CI_LEVEL
from .design import dataset_response, require_valid
from .errors import DesignConsistencyError, InputFormatError, StatisticalModelError
from .workers import parallel_map

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CorrelationEstimate:
    rho: float
    ci_low: Optional[float]
    ci_high: Optional[float]
    n: int
    significant: bool

    def to_dict(self):
        return {'rho': self.rho, 'ci_low': self.ci_low, 'ci_high': self.ci_high,
                'n': self.n, 'significant': self.significant}


@dataclass(frozen=True)
class Correlogram:
    """Pairwise estimates over a list of datasets or metrics.

    matrix holds every ordered pair (i, j), diagonal included; scatter holds
    the paired values of every i < j for external plotting.
    """

    axis_labels: tuple
    matrix: dict
    scatter: dict = field(default_factory=dict)
    extremes: dict = field(default_factory=dict)

    def estimate(self, first, second):
        i, j = self.axis_labels.index(first), self.axis_labels.index(second)
        return self.matrix[(i, j)]

    def to_dict(self):
        labels = self.axis_labels
        return {
            'axis': list(labels),
            'extremes': {label: {'min': low, 'max': high} for label, (low, high) in self.extremes.items()},
            'pairs': [
                dict(first=labels[i], second=labels[j], **self.matrix[(i, j)].to_dict(),
                     x=list(self.scatter[(i, j)][0]), y=list(self.scatter[(i, j)][1]))
                for i, j in itertools.combinations(range(len(labels)), 2)
            ],
        }


def _check_series(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise InputFormatError(f"Series must be 1-D of equal length, got {x.shape} and {y.shape}")
    if x.size < 3:
        raise StatisticalModelError(f"Spearman correlation needs at least 3 pairs, got {x.size}")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise StatisticalModelError("Spearman correlation is undefined for a constant series")
    return x, y


def spearman(x, y):
    """Pearson correlation of the average-ranked values."""
    x, y = _check_series(x, y)
    rho, _ = stats.spearmanr(x, y)
    return float(min(1.0, max(-1.0, rho)))


def spearman_ci(rho, n, level=DEFAULT_CI_LEVEL):
    """Fisher z-transform confidence interval of a rank correlation.

    Returns:
        tuple: (low, high); the degenerate (rho, rho) when |rho| = 1
    """
    if n < 4:
        raise ValueError(f"A confidence interval needs n >= 4, got {n}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    if abs(rho) >= 1.0:
        return float(rho), float(rho)
    delta = stats.norm.ppf(1.0 - (1.0 - level) / 2.0) / math.sqrt(n - 3)
    z = math.atanh(rho)
    return math.tanh(z - delta), math.tanh(z + delta)


def estimate(x, y, level=DEFAULT_CI_LEVEL):
    """Spearman rho with its interval; significant iff the interval excludes 0."""
    rho = spearman(x, y)
    n = len(x)
    if n < 4:
        return CorrelationEstimate(rho, None, None, n, False)
    low, high = spearman_ci(rho, n, level)
    return CorrelationEstimate(rho, low, high, n, not low <= 0.0 <= high)


def _correlogram(labels, series, level):
    k = len(labels)
    n = len(series[0])
    pairs = list(itertools.combinations(range(k), 2))
    estimates = parallel_map(lambda ij: estimate(series[ij[0]], series[ij[1]], level), pairs)
    matrix = {}
    for i in range(k):
        matrix[(i, i)] = CorrelationEstimate(1.0, 1.0, 1.0, n, True)
    scatter = {}
    for (i, j), value in zip(pairs, estimates):
        matrix[(i, j)] = matrix[(j, i)] = value
        scatter[(i, j)] = (tuple(series[i]), tuple(series[j]))
    extremes = {label: (float(min(values)), float(max(values))) for label, values in zip(labels, series)}
    return Correlogram(tuple(labels), matrix, scatter, extremes)


def correlogram_by_dataset(table, spec, level=DEFAULT_CI_LEVEL):
    """Correlate responses of identical design choices across test datasets.

    Each dataset contributes the response of every treatment of the other
    factors, in design order, so position i pairs the same design choices.
    """
    datasets = table.dataset_levels
    if len(datasets) < 2:
        raise InputFormatError("Need at least two dataset levels to correlate")
    try:
        require_valid(table)
    except DesignConsistencyError as error:
        raise DesignConsistencyError(f"Incomplete pairing across datasets: {error}")
    series = [tuple(dataset_response(table, spec, d, raw=True).ravel().tolist())
              for d in datasets]
    logger.info("Correlating %d datasets over %d paired treatments", len(datasets), len(series[0]))
    return _correlogram(datasets, series, level)


def correlogram_by_metric(table, dataset, metric_names, level=DEFAULT_CI_LEVEL):
    """Correlate metrics over the treatments measured on one dataset."""
    design = table.design
    if dataset not in table.dataset_levels:
        raise InputFormatError(f"Unknown dataset level {dataset!r}")
    metric_names = list(metric_names)
    if len(metric_names) < 2:
        raise InputFormatError("Need at least two metrics to correlate")
    known = set(table.metric_names)
    unknown = [m for m in metric_names if m not in known]
    if unknown:
        raise InputFormatError(f"Unknown metric(s): {', '.join(unknown)}")
    dataset_index = design.factor(table.dataset_factor).level_index(dataset)
    dataset_axis = design.axis(table.dataset_factor)
    treatments = [t for t in design.treatments if t.indices[dataset_axis] == dataset_index]
    series = []
    for metric in metric_names:
        values = []
        for t in treatments:
            record = table.record(t)
            if metric not in record:
                raise InputFormatError(f"Metric {metric!r} missing for a treatment of dataset {dataset!r}")
            values.append(float(record[metric]))
        series.append(tuple(values))
    logger.info("Correlating %d metrics on %s over %d treatments", len(metric_names), dataset, len(treatments))
    return _correlogram(metric_names, series, level)
