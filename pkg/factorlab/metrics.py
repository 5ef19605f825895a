"""Classification metrics and the response transform the ANOVA consumes."""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .config import DEFAULT_EPSILON, DEFAULT_THRESHOLD
from .errors import InputFormatError, StatisticalModelError

TRANSFORMS = ('identity', 'logit')


@dataclass(frozen=True)
class ScoredInstances:
    """Real-valued scores (higher = more positive) with binary ground truth."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        labels = np.asarray(self.labels).astype(bool)
        if scores.ndim != 1 or scores.shape != labels.shape:
            raise ValueError(f"scores and labels must be 1-D of equal length, got {scores.shape} and {labels.shape}")
        object.__setattr__(self, 'scores', scores)
        object.__setattr__(self, 'labels', labels)

    @property
    def n_positive(self):
        return int(self.labels.sum())

    @property
    def n_negative(self):
        return int((~self.labels).sum())

    def require_both_classes(self):
        if self.n_positive == 0 or self.n_negative == 0:
            raise StatisticalModelError("Need at least one positive and one negative instance")


@dataclass(frozen=True)
class ResponseSpec:
    """Which metrics make up the response and how it is transformed.

    The response is the arithmetic mean of the named metrics, optionally
    passed through a clamped logit.
    """

    metric_names: tuple
    transform: str = 'identity'
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        object.__setattr__(self, 'metric_names', tuple(self.metric_names))
        if not self.metric_names:
            raise InputFormatError("A response needs at least one metric name")
        if self.transform not in TRANSFORMS:
            raise InputFormatError(f"Unknown transform {self.transform!r}; expected one of {', '.join(TRANSFORMS)}")
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError(f"epsilon must lie in (0, 0.5), got {self.epsilon}")

    def untransformed(self):
        return ResponseSpec(self.metric_names, 'identity', self.epsilon)


def _as_instances(s):
    return s if isinstance(s, ScoredInstances) else ScoredInstances(*s)


def roc_auc(s):
    """Area under the ROC curve as the Mann-Whitney statistic.

    Ties between a positive and a negative count one half.

    Args:
        s: ScoredInstances (or a (scores, labels) pair)

    Returns:
        float: AUC in [0, 1]
    """
    s = _as_instances(s)
    s.require_both_classes()
    ranks = stats.rankdata(s.scores)
    n_pos, n_neg = s.n_positive, s.n_negative
    u_statistic = ranks[s.labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_statistic / (n_pos * n_neg))


def average_precision(s):
    """Mean of the precision at the rank of every positive.

    Instances are visited by descending score; equal scores keep input order.
    """
    s = _as_instances(s)
    if s.n_positive == 0:
        raise StatisticalModelError("Average precision needs at least one positive instance")
    order = np.argsort(-s.scores, kind='stable')
    hits = s.labels[order]
    precision = np.cumsum(hits) / np.arange(1, hits.size + 1)
    return float(precision[hits].sum() / s.n_positive)


def sens_spec(s, threshold=DEFAULT_THRESHOLD):
    """Sensitivity and specificity, deciding positive iff score >= threshold.

    Returns:
        tuple: (sensitivity, specificity)
    """
    s = _as_instances(s)
    s.require_both_classes()
    predicted = s.scores >= threshold
    sensitivity = (predicted & s.labels).sum() / s.n_positive
    specificity = (~predicted & ~s.labels).sum() / s.n_negative
    return float(sensitivity), float(specificity)


def logit(p, epsilon=DEFAULT_EPSILON):
    """Log-odds of p after clamping it to [epsilon, 1 - epsilon]."""
    if not 0.0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    return float(special.logit(min(max(float(p), epsilon), 1.0 - epsilon)))


def response(record, spec, raw=False):
    """Mean of the requested metrics, then the response transform.

    Args:
        record: Mapping metric name -> value
        spec: ResponseSpec
        raw: Return the untransformed mean

    Returns:
        float
    """
    missing = [name for name in spec.metric_names if name not in record]
    if missing:
        raise InputFormatError(f"Missing metric(s): {', '.join(missing)}")
    # fsum keeps the mean independent of metric order
    mean = math.fsum(float(record[name]) for name in spec.metric_names) / len(spec.metric_names)
    if raw or spec.transform == 'identity':
        return mean
    return logit(mean, spec.epsilon)


def class_aucs(probs, labels, class_indices):
    """One-vs-all AUC for each requested class.

    Args:
        probs: (n_instances, n_classes) probability array
        labels: (n_instances,) true class indices
        class_indices: Classes to score

    Returns:
        list of float, one per requested class
    """
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels)
    return [roc_auc(ScoredInstances(probs[:, k], labels == k)) for k in class_indices]
