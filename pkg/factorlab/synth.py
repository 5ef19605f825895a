"""Synthetic outcome tables and prediction matrices with planted ground truth."""

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import special

from .anova import EffectTerm
from .design import OutcomeTable
from .ensemble import DatasetPredictions, ModelInfo, PredictionMatrix
from .errors import InputFormatError
from .rng import derive

logger = logging.getLogger(__name__)


def project_zero_margins(coefficients):
    """Project a coefficient table onto tables whose every margin sums to zero."""
    projected = np.asarray(coefficients, dtype=float)
    for axis in range(projected.ndim):
        projected = projected - projected.mean(axis=axis, keepdims=True)
    return projected


@dataclass(frozen=True)
class PlantedEffects:
    """Effects planted on the logit scale.

    terms maps an EffectTerm (or a symbol tuple) to a coefficient table
    shaped by its factors' level counts; tables are projected onto the
    zero-margin subspace when the outcomes are generated.
    """

    terms: Mapping = field(default_factory=dict)
    intercept: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        normalized = {}
        for term, table in self.terms.items():
            term = term if isinstance(term, EffectTerm) else EffectTerm(tuple(term))
            normalized[term] = project_zero_margins(table)
        object.__setattr__(self, 'terms', normalized)

    @classmethod
    def random(cls, design, terms, scale, intercept=0.0, noise_sigma=0.0, seed=0):
        """Plant Gaussian coefficient tables for the given terms.

        Args:
            design: Design the terms belong to
            terms: Symbol tuples, one per term
            scale: Coefficient sd, one value for all terms or one per term
        """
        terms = [tuple(symbols) for symbols in terms]
        scales = np.broadcast_to(np.asarray(scale, dtype=float), (len(terms),))
        planted = {}
        for index, (symbols, sd) in enumerate(zip(terms, scales)):
            shape = tuple(design.factor(s).n_levels for s in symbols)
            planted[EffectTerm(symbols)] = derive(seed, 1, index).normal(0.0, sd, size=shape)
        return cls(planted, intercept, noise_sigma, seed)


def planted_logits(design, effects):
    """Noise-free logit-scale response of every treatment, shaped by the design."""
    linear = np.full(design.shape, float(effects.intercept))
    for term, coefficients in effects.terms.items():
        for symbol in term.symbols:
            design.factor(symbol)
        if len(set(term.symbols)) != len(term.symbols):
            raise InputFormatError(f"Repeated symbol in planted term {term.label}")
        axes = [design.axis(s) for s in term.symbols]
        expected = tuple(design.shape[a] for a in axes)
        if coefficients.shape != expected:
            raise InputFormatError(f"Coefficients for {term.label} shaped {coefficients.shape}, expected {expected}")
        # Reorder the term's axes into design order before broadcasting
        order = np.argsort(axes)
        aligned = np.transpose(coefficients, order)
        shape = [1] * len(design.shape)
        for a in sorted(axes):
            shape[a] = design.shape[a]
        linear = linear + aligned.reshape(shape)
    return linear


def gen_outcomes(design, effects, dataset_factor, metric_names=('auc',)):
    """Outcome table whose logit response is intercept + planted effects + noise.

    Every metric of a treatment carries the same value, so the mean-then-logit
    response recovers the planted linear predictor exactly when sigma is 0.

    Returns:
        OutcomeTable
    """
    linear = planted_logits(design, effects)
    if effects.noise_sigma > 0:
        linear = linear + derive(effects.seed, 0).normal(0.0, effects.noise_sigma, size=linear.shape)
    values = special.expit(linear).ravel()
    records = [(t, {name: float(v) for name in metric_names}) for t, v in zip(design.treatments, values)]
    logger.info("Generated %d synthetic outcomes (%d planted terms, sigma=%g)",
                len(records), len(effects.terms), effects.noise_sigma)
    return OutcomeTable.from_records(design, dataset_factor, records)


@dataclass(frozen=True)
class SkillModel:
    """Per-model separation of the true-class score from the other classes.

    per_model maps model id to a separation (a float, or one value per class).
    skill_jitter adds a per-(model, dataset) Gaussian shift to the separation,
    so rankings differ between datasets.
    """

    per_model: Mapping
    n_instances: Mapping
    classes: tuple = ('melanoma', 'keratosis', 'nevus')
    class_prior: tuple = None
    skill_jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'classes', tuple(self.classes))
        if len(self.classes) < 2:
            raise InputFormatError("Need at least two classes")
        if not self.per_model:
            raise InputFormatError("Need at least one model")
        prior = self.class_prior
        if prior is None:
            prior = tuple(1.0 / len(self.classes) for _ in self.classes)
        prior = tuple(float(p) for p in prior)
        if len(prior) != len(self.classes) or any(p < 0 for p in prior) or abs(sum(prior) - 1.0) > 1e-9:
            raise InputFormatError("class_prior must give one non-negative weight per class, summing to 1")
        if sum(p > 0 for p in prior) < 2:
            raise InputFormatError("class_prior must give weight to at least two classes")
        object.__setattr__(self, 'class_prior', prior)
        for model_id, separation in self.per_model.items():
            if np.any(np.asarray(separation, dtype=float) < 0):
                raise InputFormatError(f"Separation of model {model_id!r} must be >= 0")


def gen_predictions(skill):
    """Prediction matrix drawn from the skill model.

    Each instance's true class is drawn from the prior; each model scores
    every class with a unit-variance Gaussian whose true-class mean is shifted
    by the model's separation, then turns the scores into probabilities with
    a softmax.

    Returns:
        PredictionMatrix
    """
    model_ids = tuple(skill.per_model)
    k = len(skill.classes)
    datasets = {}
    for d, (name, n) in enumerate(skill.n_instances.items()):
        rng = derive(skill.seed, d)
        labels = rng.choice(k, size=int(n), p=skill.class_prior)
        probs = np.empty((len(model_ids), int(n), k))
        for m, model_id in enumerate(model_ids):
            model_rng = derive(skill.seed, d, m + 1)
            separation = np.broadcast_to(np.asarray(skill.per_model[model_id], dtype=float), (k,))
            if skill.skill_jitter > 0:
                separation = np.maximum(0.0, separation + model_rng.normal(0.0, skill.skill_jitter))
            scores = model_rng.normal(size=(int(n), k))
            scores[np.arange(int(n)), labels] += separation[labels]
            probs[m] = special.softmax(scores, axis=1)
        instance_ids = tuple(f"{name}-{i:05d}" for i in range(int(n)))
        datasets[name] = DatasetPredictions(instance_ids, labels, probs)
    logger.info("Generated predictions for %d models on %d datasets", len(model_ids), len(datasets))
    return PredictionMatrix(tuple(ModelInfo.from_id(model_id) for model_id in model_ids), skill.classes, datasets)
