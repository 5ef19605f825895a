"""Pooled ensembles of classifier predictions and their incremental curves."""

import enum
import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .config import DEFAULT_RANDOM_SAMPLES
from .design import parse_assignment, split_assignments
from .errors import InputFormatError
from .metrics import class_aucs, response
from .rng import derive
from .workers import parallel_map

logger = logging.getLogger(__name__)

# Pooled values this close to each other in distance from 0.5 count as tied
_EXTREMAL_TIE = 1e-12
_SUM_TOLERANCE = 1e-12


class Pooling(enum.Enum):
    AVERAGE = 'average'
    MAX = 'max'
    EXTREMAL = 'extremal'

    @classmethod
    def parse(cls, token):
        try:
            return cls(str(token).strip().lower())
        except ValueError:
            raise InputFormatError(f"Unknown pooling {token!r}; expected average, max or extremal")


@dataclass(frozen=True)
class ModelInfo:
    """A candidate model and, when known, the level labels of its treatment."""

    model_id: str
    levels: Mapping = field(default_factory=dict)

    @classmethod
    def from_id(cls, model_id):
        """Read the treatment annotation from ids written as "sym=level;..." keys."""
        if '=' not in model_id:
            return cls(model_id)
        try:
            return cls(model_id, parse_assignment(model_id))
        except InputFormatError:
            return cls(model_id)


@dataclass(frozen=True)
class DatasetPredictions:
    """Predictions of every model on one dataset.

    probs has shape (n_models, n_instances, n_classes), models in matrix order.
    """

    instance_ids: tuple
    labels: np.ndarray
    probs: np.ndarray


@dataclass(frozen=True)
class PredictionMatrix:
    models: tuple
    classes: tuple
    datasets: Mapping

    def __post_init__(self):
        ids = [m.model_id for m in self.models]
        if len(set(ids)) != len(ids):
            raise InputFormatError("Model ids must be distinct")
        for name, data in self.datasets.items():
            expected = (len(self.models), len(data.instance_ids), len(self.classes))
            if data.probs.shape != expected:
                raise InputFormatError(f"Dataset {name!r}: probabilities shaped {data.probs.shape}, expected {expected}")
            if np.any(data.probs < 0) or not np.allclose(data.probs.sum(axis=2), 1.0, rtol=0, atol=1e-9):
                raise InputFormatError(f"Dataset {name!r}: probability vectors must be non-negative and sum to 1")

    @property
    def model_ids(self):
        return tuple(m.model_id for m in self.models)

    def model_index(self, model_id):
        try:
            return self.model_ids.index(model_id)
        except ValueError:
            raise InputFormatError(f"Unknown model {model_id!r}")

    def dataset(self, name):
        try:
            return self.datasets[name]
        except KeyError:
            raise InputFormatError(f"Unknown dataset {name!r}")

    def class_index(self, name):
        try:
            return self.classes.index(name)
        except ValueError:
            raise InputFormatError(f"Unknown class {name!r}")


@dataclass(frozen=True)
class EnsembleSpec:
    model_ids: tuple
    pooling: Pooling = Pooling.AVERAGE

    def __post_init__(self):
        object.__setattr__(self, 'model_ids', tuple(self.model_ids))
        if not self.model_ids:
            raise InputFormatError("An ensemble needs at least one model")
        if len(set(self.model_ids)) != len(self.model_ids):
            raise InputFormatError("Ensemble model ids must be distinct")


@dataclass(frozen=True)
class CandidateFilter:
    """Drops every model whose treatment matches any symbol=level exclusion."""

    exclusions: tuple = ()

    @classmethod
    def parse(cls, expression):
        """Parse "h=svm;f=yes" (';' or ',' separated)."""
        if not expression:
            return cls()
        return cls(tuple(split_assignments(expression.replace(',', ';'))))

    def accepts(self, model):
        return not any(model.levels.get(symbol) == level for symbol, level in self.exclusions)

    def apply(self, matrix):
        kept = tuple(m.model_id for m in matrix.models if self.accepts(m))
        dropped = len(matrix.models) - len(kept)
        if dropped:
            logger.info("Candidate filter dropped %d of %d models", dropped, len(matrix.models))
        return kept


@dataclass(frozen=True)
class BestFirst:
    """Order models by single-model response on a selection dataset."""

    selection_dataset: str


@dataclass(frozen=True)
class RandomOrder:
    seed: int


@dataclass(frozen=True)
class CurvePoint:
    """Response of the first-size ensemble; added is the model that joined last."""

    size: int
    response: float
    class_aucs: tuple
    added: str = ''


def _pool_array(stack, pooling):
    """Pool (n_models, ..., n_classes) into (..., n_classes) and renormalize."""
    if pooling is Pooling.AVERAGE:
        pooled = stack.mean(axis=0)
    elif pooling is Pooling.MAX:
        pooled = stack.max(axis=0)
    elif pooling is Pooling.EXTREMAL:
        distance = np.abs(stack - 0.5)
        # First model among those (nearly) tied for the largest distance
        winners = distance >= distance.max(axis=0) - _EXTREMAL_TIE
        chosen = np.argmax(winners, axis=0)
        pooled = np.take_along_axis(stack, chosen[np.newaxis], axis=0)[0]
    else:
        raise InputFormatError(f"Unknown pooling {pooling!r}")
    totals = pooled.sum(axis=-1, keepdims=True)
    n_classes = stack.shape[-1]
    safe = np.where(totals > 0, totals, 1.0)
    normalized = np.where(totals > 0, pooled / safe, 1.0 / n_classes)
    # Vectors already summing to 1 are left untouched so equal inputs stay equal
    return np.where(np.abs(totals - 1.0) > _SUM_TOLERANCE, normalized, pooled)


def pool(vectors, strategy):
    """Pool probability vectors componentwise and renormalize to sum 1.

    Args:
        vectors: List of K-dimensional probability vectors
        strategy: Pooling (or its name)

    Returns:
        numpy.ndarray of shape (K,)
    """
    if isinstance(strategy, str):
        strategy = Pooling.parse(strategy)
    if len(vectors) == 0:
        raise InputFormatError("Cannot pool an empty list of vectors")
    try:
        stack = np.asarray([np.asarray(v, dtype=float) for v in vectors])
    except ValueError:
        raise InputFormatError("Pooled vectors must share one dimension")
    if stack.ndim != 2:
        raise InputFormatError("Pooled vectors must share one dimension")
    return _pool_array(stack, strategy)


def ensemble_predict(matrix, spec, dataset):
    """Pooled probability vectors of an ensemble on every instance of a dataset.

    Returns:
        numpy.ndarray of shape (n_instances, n_classes)
    """
    data = matrix.dataset(dataset)
    indices = [matrix.model_index(model_id) for model_id in spec.model_ids]
    return _pool_array(data.probs[indices], spec.pooling)


def prediction_response(probs, labels, matrix, spec):
    """Response of pooled predictions: mean one-vs-all AUC of the requested classes.

    Returns:
        tuple: (response, per-class AUCs)
    """
    indices = [matrix.class_index(name) for name in spec.metric_names]
    aucs = class_aucs(probs, labels, indices)
    return response(dict(zip(spec.metric_names, aucs)), spec), tuple(aucs)


def single_model_responses(matrix, dataset, spec, model_ids=None):
    """Response of every model alone on a dataset, keyed by model id."""
    data = matrix.dataset(dataset)
    model_ids = matrix.model_ids if model_ids is None else tuple(model_ids)

    def evaluate(model_id):
        value, _ = prediction_response(data.probs[matrix.model_index(model_id)], data.labels, matrix, spec)
        return value

    return dict(zip(model_ids, parallel_map(evaluate, model_ids)))


def rank_models(responses):
    """Model ids by descending response; ties keep model-id order."""
    return sorted(responses, key=lambda model_id: (-responses[model_id], model_id))


def prefix_curve(matrix, ordered_ids, pooling, measure_dataset, spec):
    """Response of the first-k ensemble for every k.

    Returns:
        list of CurvePoint, sizes 1..len(ordered_ids)
    """
    data = matrix.dataset(measure_dataset)
    indices = [matrix.model_index(model_id) for model_id in ordered_ids]

    def point(size):
        pooled = _pool_array(data.probs[indices[:size]], pooling)
        value, aucs = prediction_response(pooled, data.labels, matrix, spec)
        return CurvePoint(size, value, aucs, ordered_ids[size - 1])

    return parallel_map(point, range(1, len(indices) + 1))


def order_candidates(matrix, ordering, spec, candidates=None):
    """Apply a BestFirst or RandomOrder ordering to the candidate models."""
    candidates = matrix.model_ids if candidates is None else tuple(candidates)
    if not candidates:
        raise InputFormatError("No candidate models to build ensembles from")
    if isinstance(ordering, BestFirst):
        return rank_models(single_model_responses(matrix, ordering.selection_dataset, spec, candidates))
    if isinstance(ordering, RandomOrder):
        permutation = derive(ordering.seed, 0).permutation(len(candidates))
        return [candidates[i] for i in permutation]
    raise InputFormatError(f"Unknown ordering {ordering!r}")


def ensemble_curve(matrix, ordering, pooling, measure_dataset, spec, candidates=None):
    """Incremental ensembles over ordered candidates, measured on one dataset.

    Args:
        matrix: PredictionMatrix
        ordering: BestFirst(selection_dataset) or RandomOrder(seed)
        pooling: Pooling
        measure_dataset: Dataset the curve is measured on
        spec: ResponseSpec whose metric names are class names
        candidates: Model ids to consider (all models by default)

    Returns:
        list of CurvePoint
    """
    matrix.dataset(measure_dataset)
    ordered = order_candidates(matrix, ordering, spec, candidates)
    curve = prefix_curve(matrix, ordered, pooling, measure_dataset, spec)
    logger.info("Ensemble curve on %s: %d sizes, %s pooling", measure_dataset, len(curve), pooling.value)
    return curve


def random_ensemble_curves(matrix, pooling, measure_dataset, spec, seed,
                           samples=DEFAULT_RANDOM_SAMPLES, candidates=None):
    """Curves of several independently shuffled orderings.

    Sample i is shuffled with the generator derived from (seed, i).

    Returns:
        list of (ordered model ids, list of CurvePoint)
    """
    if samples < 1:
        raise InputFormatError(f"Need at least one shuffled ordering, got samples={samples}")
    candidates = matrix.model_ids if candidates is None else tuple(candidates)
    if not candidates:
        raise InputFormatError("No candidate models to build ensembles from")
    matrix.dataset(measure_dataset)
    results = []
    for sample in range(samples):
        permutation = derive(seed, sample).permutation(len(candidates))
        ordered = [candidates[i] for i in permutation]
        results.append((ordered, prefix_curve(matrix, ordered, pooling, measure_dataset, spec)))
    return results


def best_size(curve):
    """Curve point with the highest response; ties go to the smallest size."""
    best: Optional[CurvePoint] = None
    for point in curve:
        if best is None or point.response > best.response:
            best = point
    return best
