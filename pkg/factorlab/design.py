import itertools
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DesignConsistencyError, InputFormatError
from .metrics import response

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Factor:
    """A categorical design variable with ordered level labels."""

    symbol: str
    name: str
    levels: tuple

    def __post_init__(self):
        object.__setattr__(self, 'levels', tuple(str(level) for level in self.levels))
        if not self.symbol:
            raise InputFormatError("Factor symbol must be non-empty")
        if len(self.levels) < 2:
            raise InputFormatError(f"Factor {self.symbol!r} needs at least 2 levels, got {len(self.levels)}")
        if len(set(self.levels)) != len(self.levels):
            raise InputFormatError(f"Factor {self.symbol!r} has repeated level labels")

    @property
    def n_levels(self):
        return len(self.levels)

    def level_index(self, label):
        """Get the index of a level label.

        Raises:
            InputFormatError: If the label is not a level of this factor
        """
        try:
            return self.levels.index(label)
        except ValueError:
            raise InputFormatError(f"Unknown level {label!r} for factor {self.symbol!r}")


@dataclass(frozen=True)
class Treatment:
    """One cell of a factorial: a level index for each factor symbol."""

    symbols: tuple
    indices: tuple

    def __getitem__(self, symbol):
        try:
            return self.indices[self.symbols.index(symbol)]
        except ValueError:
            raise KeyError(symbol)

    def as_dict(self):
        return dict(zip(self.symbols, self.indices))

    def with_level(self, symbol, index):
        """Return a copy with one factor moved to another level."""
        position = self.symbols.index(symbol)
        indices = list(self.indices)
        indices[position] = index
        return Treatment(self.symbols, tuple(indices))

    def without(self, symbol):
        """Return the treatment restricted to every factor except symbol."""
        position = self.symbols.index(symbol)
        return Treatment(self.symbols[:position] + self.symbols[position + 1:],
                         self.indices[:position] + self.indices[position + 1:])

    def extended(self, symbols, assignment):
        """Return the treatment over symbols, taking missing levels from assignment."""
        own = self.as_dict()
        return Treatment(tuple(symbols), tuple(own[s] if s in own else assignment[s] for s in symbols))


@dataclass(frozen=True)
class Design:
    """Ordered factors and the treatments enumerated over them."""

    factors: tuple
    treatments: tuple

    @property
    def symbols(self):
        return tuple(f.symbol for f in self.factors)

    @property
    def shape(self):
        """Level counts in factor order."""
        return tuple(f.n_levels for f in self.factors)

    def factor(self, symbol):
        for f in self.factors:
            if f.symbol == symbol:
                return f
        raise InputFormatError(f"Unknown factor symbol {symbol!r}")

    def axis(self, symbol):
        """Get the position of a factor in design order."""
        self.factor(symbol)
        return self.symbols.index(symbol)

    def without(self, symbol):
        """Full factorial over every factor except symbol."""
        self.factor(symbol)
        return build_full_factorial([f for f in self.factors if f.symbol != symbol])

    def treatment(self, labels):
        """Build a treatment from a mapping symbol -> level label."""
        missing = [s for s in self.symbols if s not in labels]
        if missing:
            raise InputFormatError(f"Missing level for factor(s) {', '.join(missing)}")
        return Treatment(self.symbols, tuple(f.level_index(labels[f.symbol]) for f in self.factors))

    def labels(self, treatment):
        """Level labels of a treatment, in design order."""
        return tuple(f.levels[i] for f, i in zip(self.factors, treatment.indices))

    def contains(self, treatment):
        return (treatment.symbols == self.symbols and
                all(0 <= i < f.n_levels for f, i in zip(self.factors, treatment.indices)))


def build_full_factorial(factors):
    """Enumerate every level combination of the given factors.

    Treatments come out in lexicographic order of level indices with the
    last factor varying fastest.

    Args:
        factors: List of Factor

    Returns:
        Design with prod(levels) treatments
    """
    factors = tuple(factors)
    if not factors:
        raise InputFormatError("A design needs at least one factor")
    seen = set()
    for f in factors:
        if f.symbol in seen:
            raise InputFormatError(f"Duplicate factor symbol {f.symbol!r}")
        seen.add(f.symbol)
        if f.n_levels < 2:
            raise InputFormatError(f"Factor {f.symbol!r} needs at least 2 levels")

    symbols = tuple(f.symbol for f in factors)
    treatments = tuple(Treatment(symbols, combo)
                       for combo in itertools.product(*(range(f.n_levels) for f in factors)))
    logger.debug("Built full factorial over %s: %d treatments", ''.join(symbols), len(treatments))
    return Design(factors, treatments)


def encode_treatment(treatment, design):
    """Encode a treatment as "sym=level;sym=level;..." in design order.

    Raises:
        InputFormatError: If the treatment does not belong to the design
    """
    if not design.contains(treatment):
        unknown = [s for s in treatment.symbols if s not in design.symbols]
        if unknown:
            raise InputFormatError(f"Unknown factor symbol {unknown[0]!r}")
        raise InputFormatError(f"Treatment {treatment.as_dict()} is not valid for the design")
    return ';'.join(f"{f.symbol}={f.levels[i]}" for f, i in zip(design.factors, treatment.indices))


def split_assignments(key):
    """Split "sym=level;..." into (symbol, label) pairs; symbols may repeat.

    Raises:
        InputFormatError: If a part is malformed
    """
    pairs = []
    for part in key.split(';'):
        part = part.strip()
        if not part:
            continue
        symbol, sep, label = part.partition('=')
        if not sep or not symbol.strip():
            raise InputFormatError(f"Malformed treatment key part {part!r}")
        pairs.append((symbol.strip(), label.strip()))
    return pairs


def parse_assignment(key):
    """Split a "sym=level;..." key into an ordered mapping of labels.

    Raises:
        InputFormatError: If a part is malformed or a symbol repeats
    """
    labels = {}
    for symbol, label in split_assignments(key):
        if symbol in labels:
            raise InputFormatError(f"Repeated factor symbol {symbol!r} in treatment key")
        labels[symbol] = label
    return labels


def decode_treatment(key, design):
    """Decode a key produced by encode_treatment."""
    labels = parse_assignment(key)
    for symbol in labels:
        if symbol not in design.symbols:
            raise InputFormatError(f"Unknown factor symbol {symbol!r}")
    return design.treatment(labels)


@dataclass(frozen=True)
class OutcomeRow:
    treatment: Treatment
    metrics: Mapping


@dataclass
class ValidationReport:
    """Problems found in an outcome table; valid iff every list is empty."""

    missing: list = field(default_factory=list)
    duplicates: list = field(default_factory=list)
    out_of_range: list = field(default_factory=list)
    inconsistent_metrics: list = field(default_factory=list)
    foreign: list = field(default_factory=list)

    @property
    def valid(self):
        return not (self.missing or self.duplicates or self.out_of_range or
                    self.inconsistent_metrics or self.foreign)

    def messages(self):
        """Human-readable description of every problem."""
        lines = []
        lines += [f"missing treatment: {key}" for key in self.missing]
        lines += [f"duplicate treatment: {key}" for key in self.duplicates]
        lines += [f"value out of range: {key} {metric}={value!r}" for key, metric, value in self.out_of_range]
        lines += [f"inconsistent metric set: {key}" for key in self.inconsistent_metrics]
        lines += [f"treatment not in design: {key}" for key in self.foreign]
        return lines

    def raise_for_errors(self):
        """Raise the exception matching the first kind of problem found.

        Raises:
            DesignConsistencyError: Missing, duplicate or foreign treatments
            InputFormatError: Out-of-range values or inconsistent metric sets
        """
        if self.missing or self.duplicates or self.foreign:
            raise DesignConsistencyError("Unbalanced outcome table:\n  " + "\n  ".join(self.messages()))
        if not self.valid:
            raise InputFormatError("Invalid outcome values:\n  " + "\n  ".join(self.messages()))


@dataclass(frozen=True)
class OutcomeTable:
    """Measured metric values, one row per treatment of the design.

    The dataset factor is an ordinary design factor that marks which test
    dataset a row was measured on.
    """

    design: Design
    dataset_factor: str
    rows: tuple

    def __post_init__(self):
        self.design.factor(self.dataset_factor)

    @classmethod
    def from_records(cls, design, dataset_factor, records):
        """Build a table from a mapping (or pair list) treatment -> metrics."""
        items = records.items() if isinstance(records, Mapping) else records
        return cls(design, dataset_factor, tuple(OutcomeRow(t, dict(m)) for t, m in items))

    @property
    def metric_names(self):
        if not self.rows:
            return ()
        return tuple(self.rows[0].metrics)

    @property
    def dataset_levels(self):
        return self.design.factor(self.dataset_factor).levels

    def record(self, treatment):
        """Get the metrics measured for one treatment.

        Raises:
            DesignConsistencyError: If the treatment has no row
        """
        try:
            return self._index()[treatment]
        except KeyError:
            raise DesignConsistencyError(f"Missing treatment {encode_treatment(treatment, self.design)}")

    def _index(self):
        index = self.__dict__.get('_row_index')
        if index is None:
            index = {row.treatment: row.metrics for row in self.rows}
            object.__setattr__(self, '_row_index', index)
        return index

    def cube(self, spec, raw=False):
        """Response of every treatment as an array shaped by the level counts.

        Args:
            spec: ResponseSpec selecting and transforming metrics
            raw: Skip the transform (mean of the metrics only)

        Returns:
            numpy.ndarray with one axis per design factor, in design order

        Raises:
            DesignConsistencyError: If the table is incomplete
        """
        values = [response(self.record(t), spec, raw=raw) for t in self.design.treatments]
        return np.asarray(values, dtype=float).reshape(self.design.shape)


def validate_outcomes(table):
    """Check an outcome table against its design.

    Args:
        table: OutcomeTable

    Returns:
        ValidationReport
    """
    report = ValidationReport()
    design = table.design
    seen = set()
    reference = _common_metric_set(row for row in table.rows if design.contains(row.treatment))
    for row in table.rows:
        if not design.contains(row.treatment):
            report.foreign.append(str(row.treatment.as_dict()))
            continue
        key = encode_treatment(row.treatment, design)
        if row.treatment in seen:
            report.duplicates.append(key)
        seen.add(row.treatment)
        if frozenset(row.metrics) != reference:
            report.inconsistent_metrics.append(key)
        for metric, value in row.metrics.items():
            if not _in_unit_interval(value):
                report.out_of_range.append((key, metric, value))
    report.missing = [encode_treatment(t, design) for t in design.treatments if t not in seen]
    if report.valid:
        logger.debug("Outcome table valid: %d rows", len(table.rows))
    else:
        logger.info("Outcome table has %d problem(s)", len(report.messages()))
    return report


def _common_metric_set(rows):
    """Most frequent metric-name set; ties go to the set seen first."""
    counts = Counter(frozenset(row.metrics) for row in rows)
    return counts.most_common(1)[0][0] if counts else None


def _in_unit_interval(value):
    try:
        value = float(value)
    except (TypeError, ValueError):
        return False
    return math.isfinite(value) and 0.0 <= value <= 1.0


def require_valid(table):
    """Validate a table and raise if it is not usable."""
    validate_outcomes(table).raise_for_errors()
    return table


def dataset_response(table, spec, dataset_level, raw=False):
    """Response cube restricted to one dataset level.

    Returns:
        numpy.ndarray over the non-dataset factors, in design order
    """
    factor = table.design.factor(table.dataset_factor)
    index = factor.level_index(dataset_level)
    return np.take(table.cube(spec, raw=raw), index, axis=table.design.axis(table.dataset_factor))

