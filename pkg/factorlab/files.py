"""Design manifests, outcomes files and predictions files."""

import io
import json
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from .config import DEFAULT_EPSILON, RENORMALIZE_TOLERANCE, REJECT_TOLERANCE
from .design import Factor, OutcomeTable, build_full_factorial, parse_assignment
from .ensemble import DatasetPredictions, ModelInfo, PredictionMatrix
from .errors import DesignConsistencyError, InputFormatError
from .metrics import ResponseSpec

logger = logging.getLogger(__name__)

TREATMENT_COLUMN = 'treatment_id'
DATASET_COLUMN = 'dataset'
# Symbol given to the dataset factor when the design is inferred from a file
INFERRED_DATASET_SYMBOL = 'dataset'
PREDICTION_COLUMNS = ('model_id', 'dataset', 'instance_id', 'true_label')
PROBABILITY_PREFIX = 'p_'
_ROUNDING_DRIFT = 1e-12


@dataclass(frozen=True)
class Manifest:
    """A design plus the facts needed to analyse outcomes measured on it."""

    design: object
    dataset_factor: str
    metrics: tuple = ()
    response: Optional[ResponseSpec] = None
    name: str = ''


def manifest_from_dict(data):
    """Build a Manifest from its parsed JSON document.

    Raises:
        InputFormatError: If a field is missing, mistyped or inconsistent
    """
    if not isinstance(data, dict):
        raise InputFormatError("Manifest must be a JSON object")
    entries = data.get('factors')
    if not isinstance(entries, list) or not entries:
        raise InputFormatError("Manifest needs a non-empty 'factors' list")
    factors = []
    for entry in entries:
        if not isinstance(entry, dict) or 'symbol' not in entry or 'levels' not in entry:
            raise InputFormatError(f"Malformed factor entry {entry!r}")
        if not isinstance(entry['levels'], list):
            raise InputFormatError(f"Levels of factor {entry['symbol']!r} must be a list")
        factors.append(Factor(str(entry['symbol']), str(entry.get('name', entry['symbol'])), tuple(entry['levels'])))
    design = build_full_factorial(factors)

    dataset_factor = data.get('dataset_factor')
    if dataset_factor not in design.symbols:
        raise InputFormatError(f"dataset_factor {dataset_factor!r} is not a factor of the manifest")
    metrics = tuple(str(m) for m in data.get('metrics', ()))

    response = None
    if 'response' in data:
        section = data['response']
        if not isinstance(section, dict):
            raise InputFormatError("Manifest 'response' must be an object")
        names = tuple(section.get('metrics', metrics))
        unknown = [m for m in names if metrics and m not in metrics]
        if unknown:
            raise InputFormatError(f"Response metric(s) not declared in the manifest: {', '.join(unknown)}")
        try:
            response = ResponseSpec(names, section.get('transform', 'identity'),
                                    float(section.get('epsilon', DEFAULT_EPSILON)))
        except ValueError as error:
            raise InputFormatError(f"Invalid response section: {error}")
    return Manifest(design, dataset_factor, metrics, response, str(data.get('name', '')))


def load_manifest(path):
    """Read a JSON design manifest."""
    try:
        with open(path, encoding='utf-8') as handle:
            data = json.load(handle)
    except json.JSONDecodeError as error:
        raise InputFormatError(f"{path}: not valid JSON ({error})")
    except OSError as error:
        raise InputFormatError(f"{path}: {error.strerror}")
    manifest = manifest_from_dict(data)
    logger.debug("Loaded manifest %s: %d factors, %d treatments",
                 path, len(manifest.design.factors), len(manifest.design.treatments))
    return manifest


def read_table(path):
    """Read a CSV file as strings, skipping '#' header lines."""
    try:
        with open(path, encoding='utf-8') as handle:
            body = ''.join(line for line in handle if not line.startswith('#'))
    except OSError as error:
        raise InputFormatError(f"{path}: {error.strerror}")
    if not body.strip():
        raise InputFormatError(f"{path}: no CSV content")
    try:
        return pd.read_csv(io.StringIO(body), dtype=str, keep_default_na=False)
    except pd.errors.ParserError as error:
        raise InputFormatError(f"{path}: malformed CSV ({error})")


def _choice_key(design, dataset_factor, treatment):
    return ';'.join(f"{f.symbol}={f.levels[i]}"
                    for f, i in zip(design.factors, treatment.indices) if f.symbol != dataset_factor)


def skeleton_frame(manifest, metrics=None):
    """Outcomes-file rows for every treatment with empty metric cells."""
    design = manifest.design
    metrics = tuple(metrics or manifest.metrics or ('auc',))
    choice_factors = [f for f in design.factors if f.symbol != manifest.dataset_factor]
    dataset_axis = design.axis(manifest.dataset_factor)
    dataset_levels = design.factor(manifest.dataset_factor).levels
    records = []
    for t in design.treatments:
        record = {TREATMENT_COLUMN: _choice_key(design, manifest.dataset_factor, t)}
        record.update({f.symbol: f.levels[t[f.symbol]] for f in choice_factors})
        record[DATASET_COLUMN] = dataset_levels[t.indices[dataset_axis]]
        record.update({m: '' for m in metrics})
        records.append(record)
    columns = [TREATMENT_COLUMN] + [f.symbol for f in choice_factors] + [DATASET_COLUMN] + list(metrics)
    return pd.DataFrame(records, columns=columns)


def outcomes_frame(table):
    """Outcomes-file rows of a table, in row order."""
    design = table.design
    choice_factors = [f for f in design.factors if f.symbol != table.dataset_factor]
    dataset = design.factor(table.dataset_factor)
    metrics = list(table.metric_names)
    records = []
    for row in table.rows:
        t = row.treatment
        record = {TREATMENT_COLUMN: _choice_key(design, table.dataset_factor, t)}
        record.update({f.symbol: f.levels[t[f.symbol]] for f in choice_factors})
        record[DATASET_COLUMN] = dataset.levels[t[dataset.symbol]]
        record.update({m: float(row.metrics[m]) for m in metrics})
        records.append(record)
    columns = [TREATMENT_COLUMN] + [f.symbol for f in choice_factors] + [DATASET_COLUMN] + metrics
    return pd.DataFrame(records, columns=columns)


def _first_appearance(values):
    return tuple(pd.unique(pd.Series(values, dtype=object)))


def _infer_design(assignments, datasets):
    symbols = tuple(assignments[0])
    if INFERRED_DATASET_SYMBOL in symbols:
        raise InputFormatError(f"Factor symbol {INFERRED_DATASET_SYMBOL!r} is reserved for the dataset factor")
    for labels in assignments:
        if tuple(labels) != symbols:
            raise InputFormatError(f"Treatment keys disagree on factor symbols: {tuple(labels)} vs {symbols}")
    factors = [Factor(s, s, _first_appearance([labels[s] for labels in assignments])) for s in symbols]
    factors.append(Factor(INFERRED_DATASET_SYMBOL, 'Test dataset', _first_appearance(datasets)))
    return build_full_factorial(factors)


def load_outcomes(path, manifest=None):
    """Read an outcomes file into an OutcomeTable.

    Without a manifest the design is inferred from the treatment keys, each
    factor's levels in order of first appearance, and the dataset factor gets
    the symbol 'dataset'.

    Returns:
        OutcomeTable (not yet validated against its design)
    """
    frame = read_table(path)
    for column in (TREATMENT_COLUMN, DATASET_COLUMN):
        if column not in frame.columns:
            raise InputFormatError(f"{path}: missing column {column!r}")
    if frame.empty:
        raise InputFormatError(f"{path}: no outcome rows")

    assignments = [parse_assignment(key) for key in frame[TREATMENT_COLUMN]]
    datasets = list(frame[DATASET_COLUMN])
    if manifest is None:
        design = _infer_design(assignments, datasets)
        dataset_factor = INFERRED_DATASET_SYMBOL
    else:
        design, dataset_factor = manifest.design, manifest.dataset_factor
    choice_symbols = [s for s in design.symbols if s != dataset_factor]

    metric_columns = [c for c in frame.columns
                      if c not in (TREATMENT_COLUMN, DATASET_COLUMN) and c not in choice_symbols]
    if not metric_columns:
        raise InputFormatError(f"{path}: no metric columns")

    records = []
    for position, (labels, dataset) in enumerate(zip(assignments, datasets)):
        line = position + 2
        unknown = [s for s in labels if s not in choice_symbols]
        if unknown:
            raise InputFormatError(f"{path}:{line}: unknown factor symbol {unknown[0]!r}")
        for symbol in choice_symbols:
            if symbol in frame.columns and symbol in labels and frame.at[position, symbol] != labels[symbol]:
                raise InputFormatError(f"{path}:{line}: column {symbol!r} disagrees with treatment_id")
        try:
            treatment = design.treatment({**labels, dataset_factor: dataset})
        except InputFormatError as error:
            raise InputFormatError(f"{path}:{line}: {error}")
        metrics = {}
        for column in metric_columns:
            cell = frame.at[position, column].strip()
            try:
                metrics[column] = float(cell) if cell else math.nan
            except ValueError:
                raise InputFormatError(f"{path}:{line}: {column}={cell!r} is not a number")
        records.append((treatment, metrics))
    logger.info("Loaded %d outcome rows from %s (%d metrics)", len(records), path, len(metric_columns))
    return OutcomeTable.from_records(design, dataset_factor, records)


def predictions_frame(matrix):
    """Predictions-file rows, by dataset, then model, then instance."""
    frames = []
    for name, data in matrix.datasets.items():
        n = len(data.instance_ids)
        labels = np.asarray(matrix.classes, dtype=object)[np.asarray(data.labels, dtype=int)]
        for m, model in enumerate(matrix.models):
            frame = pd.DataFrame({
                'model_id': [model.model_id] * n,
                'dataset': [name] * n,
                'instance_id': list(data.instance_ids),
                'true_label': list(labels),
            })
            for k, class_name in enumerate(matrix.classes):
                frame[PROBABILITY_PREFIX + class_name] = data.probs[m, :, k]
            frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def _check_rows(probs, path):
    """Renormalize rows with small drift; reject negative or far-off rows."""
    if not np.all(np.isfinite(probs)) or np.any(probs < 0):
        raise InputFormatError(f"{path}: probabilities must be finite and non-negative")
    drift = np.abs(probs.sum(axis=1) - 1.0)
    if np.any(drift > REJECT_TOLERANCE):
        row = int(np.argmax(drift > REJECT_TOLERANCE))
        raise InputFormatError(f"{path}:{row + 2}: probabilities sum to {probs[row].sum():.6f}")
    noticeable = drift > RENORMALIZE_TOLERANCE
    if np.any(noticeable):
        logger.warning("%s: renormalized %d probability row(s) drifting from 1", path, int(noticeable.sum()))
    # Rounding-level drift is corrected silently
    drifting = drift > _ROUNDING_DRIFT
    if np.any(drifting):
        probs = probs.copy()
        probs[drifting] /= probs[drifting].sum(axis=1, keepdims=True)
    return probs


def load_predictions(path):
    """Read a predictions file into a PredictionMatrix.

    Models, datasets and instances keep their order of first appearance.
    """
    frame = read_table(path)
    missing = [c for c in PREDICTION_COLUMNS if c not in frame.columns]
    if missing:
        raise InputFormatError(f"{path}: missing column(s) {', '.join(missing)}")
    prob_columns = [c for c in frame.columns if c.startswith(PROBABILITY_PREFIX)]
    if len(prob_columns) < 2:
        raise InputFormatError(f"{path}: need at least two {PROBABILITY_PREFIX}<class> columns")
    classes = tuple(c[len(PROBABILITY_PREFIX):] for c in prob_columns)
    if frame.empty:
        raise InputFormatError(f"{path}: no prediction rows")
    try:
        probs = frame[prob_columns].astype(float).to_numpy()
    except ValueError:
        raise InputFormatError(f"{path}: probability cells must be numbers")
    probs = _check_rows(probs, path)

    unknown = sorted(set(frame['true_label']) - set(classes))
    if unknown:
        raise InputFormatError(f"{path}: unknown true_label(s) {', '.join(unknown)}")
    if frame.duplicated(['model_id', 'dataset', 'instance_id']).any():
        raise DesignConsistencyError(f"{path}: repeated (model_id, dataset, instance_id) rows")

    model_codes, model_ids = pd.factorize(frame['model_id'])
    datasets = {}
    for name in pd.unique(frame['dataset']):
        mask = (frame['dataset'] == name).to_numpy()
        sub = frame[mask]
        instance_codes, instance_ids = pd.factorize(sub['instance_id'])
        if (sub.groupby('instance_id', sort=False)['true_label'].nunique() > 1).any():
            raise InputFormatError(f"{path}: dataset {name!r} gives one instance several true labels")
        cube = np.full((len(model_ids), len(instance_ids), len(classes)), np.nan)
        cube[model_codes[mask], instance_codes] = probs[mask]
        if np.isnan(cube).any():
            raise DesignConsistencyError(f"{path}: dataset {name!r} lacks predictions of some model for some instance")
        first = sub.drop_duplicates('instance_id').set_index('instance_id')['true_label']
        labels = np.asarray([classes.index(first[i]) for i in instance_ids])
        datasets[str(name)] = DatasetPredictions(tuple(instance_ids), labels, cube)
    logger.info("Loaded predictions of %d models on %d datasets from %s", len(model_ids), len(datasets), path)
    return PredictionMatrix(tuple(ModelInfo.from_id(m) for m in model_ids), classes, datasets)
