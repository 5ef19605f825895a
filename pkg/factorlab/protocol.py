"""Blind and privileged model-selection protocols over a prediction matrix.

The blind protocol never looks at the test split before committing to one
ensemble; the privileged protocol tunes directly on the test split and
hand-picks the best result per class.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

from .config import DEFAULT_TOP_K
from .design import dataset_response
from .ensemble import (EnsembleSpec, Pooling, best_size, ensemble_predict, prediction_response,
                       prefix_curve, rank_models, single_model_responses)
from .errors import InputFormatError
from .metrics import response

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClassBest:
    size: int
    auc: float


@dataclass(frozen=True)
class ProtocolReport:
    """Audit trail of one protocol simulation."""

    mode: str
    pooling: Pooling
    ranking: tuple
    curve: tuple
    curve_dataset: str
    test_dataset: str
    test_response: float
    test_class_aucs: tuple
    committed_size: Optional[int] = None
    class_best: dict = field(default_factory=dict)

    def to_dict(self):
        data = {
            'mode': self.mode,
            'pooling': self.pooling.value,
            'ranking': [{'model_id': model_id, 'response': value} for model_id, value in self.ranking],
            'curve_dataset': self.curve_dataset,
            'curve': [{'size': p.size, 'added': p.added, 'response': p.response,
                       'class_aucs': list(p.class_aucs)}
                      for p in self.curve],
            'test_dataset': self.test_dataset,
            'test_response': self.test_response,
            'test_class_aucs': list(self.test_class_aucs),
        }
        if self.committed_size is not None:
            data['committed_size'] = self.committed_size
        if self.class_best:
            data['class_best'] = {name: {'size': best.size, 'auc': best.auc}
                                  for name, best in self.class_best.items()}
        return data


def _top_k(matrix, ranking_dataset, spec, top_k, candidates, table=None, table_spec=None):
    """Rank candidates on one dataset and keep the best top_k.

    Returns:
        list of (model_id, response), best first
    """
    candidates = matrix.model_ids if candidates is None else tuple(candidates)
    if top_k < 1:
        raise InputFormatError(f"top_k must be positive, got {top_k}")
    if top_k > len(candidates):
        raise InputFormatError(f"top_k={top_k} exceeds the {len(candidates)} candidate models")
    if table is None:
        responses = single_model_responses(matrix, ranking_dataset, spec, candidates)
    else:
        responses = _table_responses(matrix, table, ranking_dataset, table_spec or spec, candidates)
    ordered = rank_models(responses)
    return [(model_id, responses[model_id]) for model_id in ordered[:top_k]]


def _table_responses(matrix, table, dataset, spec, candidates):
    """Single-model responses looked up by treatment in an outcome table."""
    design = table.design
    cube = dataset_response(table, spec, dataset)
    symbols = [s for s in design.symbols if s != table.dataset_factor]
    responses = {}
    for model_id in candidates:
        model = matrix.models[matrix.model_index(model_id)]
        missing = [s for s in symbols if s not in model.levels]
        if missing:
            raise InputFormatError(f"Model {model_id!r} carries no level for factor(s) {', '.join(missing)}")
        position = tuple(design.factor(s).level_index(model.levels[s]) for s in symbols)
        responses[model_id] = float(cube[position])
    return responses


def _measure(matrix, model_ids, pooling, dataset, spec):
    data = matrix.dataset(dataset)
    pooled = ensemble_predict(matrix, EnsembleSpec(tuple(model_ids), pooling), dataset)
    return prediction_response(pooled, data.labels, matrix, spec)


def blind_protocol(matrix, internal_split, validation_split, test_split, spec,
                   top_k=DEFAULT_TOP_K, pooling=Pooling.AVERAGE, candidates=None, table=None, table_spec=None):
    """Select an ensemble without looking at the test split, then test it once.

    Ranks candidates on internal_split, builds incremental ensembles of the
    top_k on validation_split, commits to the best size (smallest among ties)
    and measures that single ensemble on test_split.

    Args:
        matrix: PredictionMatrix
        internal_split, validation_split, test_split: Dataset ids
        spec: ResponseSpec whose metric names are class names
        top_k: Number of ranked models kept
        pooling: Pooling
        candidates: Model ids allowed in ensembles (all by default)
        table: Optional OutcomeTable to take the internal ranking from; model
            ids must then carry treatment annotations
        table_spec: ResponseSpec over the table's metrics (spec by default)

    Returns:
        ProtocolReport
    """
    if table is None:
        matrix.dataset(internal_split)
    elif internal_split not in table.dataset_levels:
        raise InputFormatError(f"Unknown dataset level {internal_split!r} in the outcome table")
    for dataset in (validation_split, test_split):
        matrix.dataset(dataset)
    ranking = _top_k(matrix, internal_split, spec, top_k, candidates, table, table_spec)
    ordered = [model_id for model_id, _ in ranking]
    curve = prefix_curve(matrix, ordered, pooling, validation_split, spec)
    committed = best_size(curve).size
    test_response, test_aucs = _measure(matrix, ordered[:committed], pooling, test_split, spec)
    logger.info("Blind protocol committed to %d models; test response %.4f", committed, test_response)
    return ProtocolReport('blind', pooling, tuple(ranking), tuple(curve), validation_split, test_split,
                          test_response, tuple(test_aucs), committed_size=committed)


def privileged_protocol(matrix, test_split, spec, top_k=DEFAULT_TOP_K, pooling=Pooling.AVERAGE,
                        candidates=None):
    """Tune on the test split itself and hand-pick the best size per class.

    The reported per-class AUCs may come from different ensemble sizes; the
    reported response is their mean.

    Returns:
        ProtocolReport
    """
    matrix.dataset(test_split)
    ranking = _top_k(matrix, test_split, spec, top_k, candidates)
    ordered = [model_id for model_id, _ in ranking]
    curve = prefix_curve(matrix, ordered, pooling, test_split, spec)
    class_best = {}
    for k, name in enumerate(spec.metric_names):
        best = None
        for point in curve:
            if best is None or point.class_aucs[k] > best.auc:
                best = ClassBest(point.size, point.class_aucs[k])
        class_best[name] = best
    aucs = tuple(class_best[name].auc for name in spec.metric_names)
    test_response = response(dict(zip(spec.metric_names, aucs)), spec)
    logger.info("Privileged protocol: test response %.4f", test_response)
    return ProtocolReport('privileged', pooling, tuple(ranking), tuple(curve), test_split, test_split,
                          test_response, aucs, class_best=class_best)
