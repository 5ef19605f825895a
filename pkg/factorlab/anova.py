"""Balanced multi-way fixed-effects ANOVA over a full factorial outcome table.

Higher-order interactions beyond the configured order are pooled into the
residual; there is a single observation per treatment.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from .config import DEFAULT_ALPHA, DEFAULT_MAX_ORDER
from .design import require_valid
from .errors import StatisticalModelError
from .workers import parallel_map

logger = logging.getLogger(__name__)

RESIDUAL = 'Residuals'

# Residual sums of squares below this fraction of the total are rounding noise
_RESIDUAL_FLOOR = 1e-12


@dataclass(frozen=True)
class EffectTerm:
    """A main effect (one symbol) or an interaction (several)."""

    symbols: tuple

    @property
    def order(self):
        return len(self.symbols)

    @property
    def label(self):
        return ':'.join(self.symbols)

    def __str__(self):
        return self.label


@dataclass(frozen=True)
class TreatmentMean:
    levels: tuple
    mean: float

    @property
    def label(self):
        return '/'.join(self.levels)


@dataclass(frozen=True)
class BestWorst:
    best: TreatmentMean
    worst: TreatmentMean


@dataclass(frozen=True)
class AnovaRow:
    """One line of the ANOVA table. term is None for the residual row."""

    term: Optional[EffectTerm]
    df: int
    ss: float
    ms: float
    f: Optional[float]
    p: Optional[float]
    eta_abs: float
    eta_rel: Optional[float]

    @property
    def label(self):
        return RESIDUAL if self.term is None else self.term.label

    @property
    def is_residual(self):
        return self.term is None

    def significant(self, alpha=DEFAULT_ALPHA):
        return self.p is not None and self.p < alpha


@dataclass(frozen=True)
class AnovaTable:
    rows: tuple
    ss_total: float
    response_spec: object
    max_order: int
    dataset_factor: str
    best_worst: dict

    def row(self, label):
        for row in self.rows:
            if row.label == label:
                return row
        raise KeyError(label)

    @property
    def residual(self):
        return self.rows[-1]

    @property
    def term_rows(self):
        return self.rows[:-1]

    def summary(self, alpha=DEFAULT_ALPHA, min_relative=0.01):
        """Select the lines worth reporting.

        Every main effect is kept. Interactions are kept when significant and
        either their relative explanation reaches min_relative or they involve
        the dataset factor. The residual row comes last.

        Returns:
            list of AnovaRow
        """
        selected = []
        for row in self.term_rows:
            if row.term.order == 1:
                selected.append(row)
            elif row.significant(alpha):
                if row.eta_rel is None or row.eta_rel >= min_relative:
                    selected.append(row)
        selected.append(self.residual)
        return selected

    def to_records(self, alpha=DEFAULT_ALPHA, rows=None):
        """Flatten rows into dictionaries for CSV/JSON emission."""
        records = []
        for row in (self.rows if rows is None else rows):
            record = {
                'term': row.label,
                'df': row.df,
                'ss': row.ss,
                'f': row.f,
                'p': row.p,
                'eta_abs': row.eta_abs,
                'eta_rel': row.eta_rel,
                'significant': row.significant(alpha),
                'best_treatment': None,
                'best_mean': None,
                'worst_treatment': None,
                'worst_mean': None,
            }
            extremes = self.best_worst.get(row.label)
            if extremes is not None:
                record.update(best_treatment=extremes.best.label, best_mean=extremes.best.mean,
                              worst_treatment=extremes.worst.label, worst_mean=extremes.worst.mean)
            records.append(record)
        return records


def enumerate_terms(design, max_order):
    """All factor subsets of size 1..max_order, by order then symbol sequence.

    Args:
        design: Design
        max_order: Largest interaction order

    Returns:
        list of EffectTerm
    """
    if not 1 <= max_order <= len(design.factors):
        raise ValueError(f"max_order must lie in [1, {len(design.factors)}], got {max_order}")
    return [EffectTerm(combo)
            for order in range(1, max_order + 1)
            for combo in itertools.combinations(design.symbols, order)]


def _effect_array(cube, axes):
    """Effect of a term at every level combination of its factors.

    Averages the cube down to the term's margin, then removes the mean along
    each of the term's axes in turn; this equals the alternating sum of the
    marginal means over every subset of the term.
    """
    others = tuple(i for i in range(cube.ndim) if i not in axes)
    effect = cube.mean(axis=others, keepdims=True) if others else cube.copy()
    for axis in axes:
        effect = effect - effect.mean(axis=axis, keepdims=True)
    return effect


def _term_ss_from_cube(cube, design, term):
    df = math.prod(design.factor(s).n_levels - 1 for s in term.symbols)
    if np.ptp(cube) == 0:
        return 0.0, df
    axes = tuple(design.axis(s) for s in term.symbols)
    effect = _effect_array(cube, axes)
    cells_per_combination = cube.size // effect.size
    return float(cells_per_combination * np.sum(effect ** 2)), df


def term_ss(term, table, spec):
    """Sum of squares and degrees of freedom of one term.

    Args:
        term: EffectTerm
        table: Balanced, complete OutcomeTable
        spec: ResponseSpec

    Returns:
        tuple: (ss, df)
    """
    require_valid(table)
    for symbol in term.symbols:
        table.design.factor(symbol)
    return _term_ss_from_cube(table.cube(spec), table.design, term)


def f_pvalue(f, df1, df2):
    """Upper tail of the F(df1, df2) distribution at f.

    Uses the regularized incomplete beta identity
    P(F > f) = I(df2 / (df2 + df1 * f); df2 / 2, df1 / 2).
    """
    if df1 < 1 or df2 < 1:
        raise ValueError(f"Degrees of freedom must be >= 1, got ({df1}, {df2})")
    f = float(f)
    if not math.isfinite(f):
        raise ValueError(f"F statistic must be finite, got {f}")
    if f < 0:
        raise ValueError(f"F statistic must be non-negative, got {f}")
    if f == 0:
        return 1.0
    x = df2 / (df2 + df1 * f)
    return float(min(1.0, max(0.0, special.betainc(df2 / 2.0, df1 / 2.0, x))))


def _best_worst(raw_cube, design, term):
    axes = tuple(design.axis(s) for s in term.symbols)
    others = tuple(i for i in range(raw_cube.ndim) if i not in axes)
    means = raw_cube.mean(axis=others) if others else raw_cube
    factors = [design.factor(s) for s in term.symbols]

    def at(flat_index):
        position = np.unravel_index(flat_index, means.shape)
        return TreatmentMean(tuple(f.levels[i] for f, i in zip(factors, position)), float(means[position]))

    # argmax/argmin return the first extreme in lexicographic level order
    return BestWorst(at(int(np.argmax(means))), at(int(np.argmin(means))))


def run_anova(table, spec, max_order=DEFAULT_MAX_ORDER):
    """Full ANOVA table with F-tests and eta-squared effect sizes.

    Args:
        table: Balanced, complete OutcomeTable
        spec: ResponseSpec (usually mean AUC through a logit)
        max_order: Largest interaction order modelled; the rest is residual

    Returns:
        AnovaTable

    Raises:
        DesignConsistencyError: If the table is unbalanced or incomplete
        StatisticalModelError: If the model leaves no residual degrees of freedom
    """
    require_valid(table)
    design = table.design
    terms = enumerate_terms(design, max_order)
    cube = table.cube(spec)
    n = cube.size
    term_df_total = sum(math.prod(design.factor(s).n_levels - 1 for s in t.symbols) for t in terms)
    df_residual = n - 1 - term_df_total
    if df_residual < 1:
        raise StatisticalModelError(
            f"Model with interactions up to order {max_order} saturates the design "
            f"({n} cells, {term_df_total} term degrees of freedom)")

    # Exactly zero for a constant response
    ss_total = 0.0 if np.ptp(cube) == 0 else float(np.sum((cube - cube.mean()) ** 2))
    results = parallel_map(lambda t: _term_ss_from_cube(cube, design, t), terms)
    ss_terms = sum(ss for ss, _ in results)
    ss_residual = ss_total - ss_terms
    if ss_residual <= _RESIDUAL_FLOOR * ss_total:
        ss_residual = 0.0
    ms_residual = ss_residual / df_residual

    dataset = table.dataset_factor
    ss_design_choices = sum(ss for (ss, _), t in zip(results, terms) if dataset not in t.symbols)

    rows = []
    for term, (ss, df) in zip(terms, results):
        ms = ss / df
        if ms_residual > 0:
            f = ms / ms_residual
            p = f_pvalue(f, df, df_residual)
        else:
            f, p = None, None
        eta_abs = ss / ss_total if ss_total > 0 else 0.0
        if dataset in term.symbols or ss_design_choices <= 0:
            eta_rel = None
        else:
            eta_rel = ss / ss_design_choices
        rows.append(AnovaRow(term, df, ss, ms, f, p, eta_abs, eta_rel))
    rows.append(AnovaRow(None, df_residual, ss_residual, ms_residual, None, None,
                         ss_residual / ss_total if ss_total > 0 else 0.0, None))

    raw_cube = table.cube(spec, raw=True)
    best_worst = {t.label: _best_worst(raw_cube, design, t) for t in terms}
    logger.info("ANOVA over %d cells: %d terms, residual df %d", n, len(terms), df_residual)
    return AnovaTable(tuple(rows), ss_total, spec, max_order, dataset, best_worst)
