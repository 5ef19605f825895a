import unittest
import sys
import os

# Add parent directory to path to import factorlab package
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import json
import math
import tempfile

import numpy as np

from factorlab.design import Factor, build_full_factorial, require_valid
from factorlab.errors import DesignConsistencyError, InputFormatError
from factorlab.files import (Manifest, load_manifest, load_outcomes, load_predictions, manifest_from_dict,
                             outcomes_frame, predictions_frame, skeleton_frame)
from factorlab.report_writer import ReportWriter, file_digest
from factorlab.synth import PlantedEffects, SkillModel, gen_outcomes, gen_predictions

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
MANIFESTS = os.path.join(ROOT, 'manifests')

PREDICTION_HEADER = "model_id,dataset,instance_id,true_label,p_mel,p_nev\n"


def small_manifest_dict():
    return {
        'name': 'small',
        'factors': [
            {'symbol': 'a', 'name': 'Architecture', 'levels': ['resnet', 'inception']},
            {'symbol': 'h', 'name': 'SVM layer', 'levels': ['no', 'yes']},
            {'symbol': 'j', 'name': 'Test dataset', 'levels': ['isic', 'edra', 'pad']},
        ],
        'dataset_factor': 'j',
        'metrics': ['auc_melanoma', 'auc_keratosis'],
        'response': {'metrics': ['auc_melanoma', 'auc_keratosis'], 'transform': 'logit'},
    }


class FileTestCase(unittest.TestCase):
    """Gives each test a scratch directory."""

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = self._tmp.name

    def tearDown(self):
        self._tmp.cleanup()

    def write(self, name, text):
        path = os.path.join(self.tmp, name)
        with open(path, 'w', encoding='utf-8') as handle:
            handle.write(text)
        return path


class TestManifest(FileTestCase):
    """Test design manifests."""

    def test_shipped_designs(self):
        for name, size in (('main_design.json', 2560), ('transfer_design.json', 1280)):
            manifest = load_manifest(os.path.join(MANIFESTS, name))
            with self.subTest(manifest=name):
                self.assertEqual(len(manifest.design.treatments), size)
                self.assertEqual(manifest.dataset_factor, 'j')
                self.assertEqual(manifest.response.transform, 'logit')
                self.assertEqual(len(skeleton_frame(manifest)), size)

    def test_parse(self):
        manifest = manifest_from_dict(small_manifest_dict())
        self.assertEqual(manifest.design.symbols, ('a', 'h', 'j'))
        self.assertEqual(manifest.metrics, ('auc_melanoma', 'auc_keratosis'))
        self.assertEqual(manifest.response.epsilon, 1e-6)
        self.assertEqual(manifest.name, 'small')

    def test_invalid_documents(self):
        cases = {
            'not an object': [],
            'no factors': {'factors': [], 'dataset_factor': 'j'},
            'no levels': {'factors': [{'symbol': 'a'}], 'dataset_factor': 'a'},
            'one level': {'factors': [{'symbol': 'a', 'levels': ['x']}], 'dataset_factor': 'a'},
        }
        broken = small_manifest_dict()
        broken['dataset_factor'] = 'k'
        cases['unknown dataset factor'] = broken
        broken = small_manifest_dict()
        broken['factors'].append({'symbol': 'a', 'levels': ['x', 'y']})
        cases['duplicate symbol'] = broken
        broken = small_manifest_dict()
        broken['response'] = {'metrics': ['ap']}
        cases['undeclared response metric'] = broken
        broken = small_manifest_dict()
        broken['response'] = {'transform': 'probit'}
        cases['unknown transform'] = broken
        for name, document in cases.items():
            with self.subTest(case=name):
                with self.assertRaises(InputFormatError):
                    manifest_from_dict(document)

    def test_duplicate_symbol_is_named(self):
        document = small_manifest_dict()
        document['factors'].append({'symbol': 'h', 'levels': ['x', 'y']})
        with self.assertRaisesRegex(InputFormatError, "'h'"):
            manifest_from_dict(document)

    def test_unreadable_files(self):
        with self.assertRaises(InputFormatError):
            load_manifest(self.write('bad.json', '{"factors": ['))
        with self.assertRaises(InputFormatError):
            load_manifest(os.path.join(self.tmp, 'absent.json'))


class TestOutcomesFile(FileTestCase):
    """Test reading and writing outcomes files."""

    def setUp(self):
        super().setUp()
        self.manifest = manifest_from_dict(small_manifest_dict())
        effects = PlantedEffects.random(self.manifest.design, [('a',), ('h', 'j')], 0.4, noise_sigma=0.1, seed=3)
        self.table = gen_outcomes(self.manifest.design, effects, 'j', self.manifest.metrics)

    def save(self, table, name='outcomes.csv'):
        path = os.path.join(self.tmp, name)
        ReportWriter('synth', seed=3).write_csv(outcomes_frame(table), path)
        return path

    def test_round_trip_with_manifest(self):
        loaded = load_outcomes(self.save(self.table), self.manifest)
        self.assertEqual(loaded.rows, self.table.rows)
        self.assertEqual(loaded.dataset_factor, 'j')

    def test_round_trip_inferred_design(self):
        loaded = load_outcomes(self.save(self.table))
        self.assertEqual(loaded.design.symbols, ('a', 'h', 'dataset'))
        self.assertEqual(loaded.dataset_factor, 'dataset')
        self.assertEqual(loaded.dataset_levels, ('isic', 'edra', 'pad'))
        self.assertEqual(loaded.design.factor('a').levels, ('resnet', 'inception'))
        require_valid(loaded)
        for original, row in zip(self.table.rows, loaded.rows):
            self.assertEqual(original.metrics, row.metrics)

    def test_columns(self):
        frame = outcomes_frame(self.table)
        self.assertEqual(list(frame.columns), ['treatment_id', 'a', 'h', 'dataset', 'auc_melanoma', 'auc_keratosis'])
        self.assertEqual(frame.loc[0, 'treatment_id'], 'a=resnet;h=no')

    def test_header_lines_are_skipped(self):
        path = self.save(self.table)
        with open(path, encoding='utf-8') as handle:
            self.assertTrue(handle.readline().startswith('# tool: factorlab'))
        self.assertEqual(len(load_outcomes(path, self.manifest).rows), 12)

    def test_missing_rows_fail_validation(self):
        frame = outcomes_frame(self.table).iloc[:-1]
        path = os.path.join(self.tmp, 'partial.csv')
        ReportWriter('synth').write_csv(frame, path)
        with self.assertRaises(DesignConsistencyError):
            require_valid(load_outcomes(path, self.manifest))

    def test_empty_metric_cell(self):
        path = self.write('empty.csv', "treatment_id,dataset,auc\na=x,d1,0.5\na=y,d1,\na=x,d2,0.4\na=y,d2,0.6\n")
        table = load_outcomes(path)
        self.assertTrue(math.isnan(table.rows[1].metrics['auc']))
        with self.assertRaises(InputFormatError):
            require_valid(table)

    def test_malformed_cells(self):
        cases = {
            'not a number': ("treatment_id,dataset,auc\na=x,d1,0.5\na=y,d1,high\na=x,d2,0.4\na=y,d2,0.6\n", ':3:'),
            'unknown symbol': ("treatment_id,dataset,auc\na=x;z=1,d1,0.5\n", ':2:'),
            'unknown level': ("treatment_id,dataset,auc\na=resnet;h=maybe,isic,0.5\n", ':2:'),
        }
        for name, (text, location) in cases.items():
            path = self.write('bad.csv', text)
            with self.subTest(case=name):
                with self.assertRaisesRegex(InputFormatError, location):
                    load_outcomes(path, self.manifest if name != 'not a number' else None)

    def test_missing_columns(self):
        with self.assertRaises(InputFormatError):
            load_outcomes(self.write('bad.csv', "treatment_id,auc\na=x,0.5\n"))
        with self.assertRaises(InputFormatError):
            load_outcomes(self.write('bad.csv', "treatment_id,dataset\na=x,d1\n"))

    def test_skeleton(self):
        frame = skeleton_frame(self.manifest)
        self.assertEqual(len(frame), 12)
        self.assertEqual(set(frame['auc_melanoma']), {''})
        frame = skeleton_frame(Manifest(self.manifest.design, 'j'), metrics=['ap'])
        self.assertIn('ap', frame.columns)


class TestPredictionsFile(FileTestCase):
    """Test reading and writing predictions files."""

    def test_round_trip(self):
        matrix = gen_predictions(SkillModel({'a=resnet;h=no': 1.0, 'a=resnet;h=yes': 1.5},
                                            {'val': 20, 'test': 30}, seed=8))
        path = os.path.join(self.tmp, 'predictions.csv')
        ReportWriter('synth', seed=8).write_csv(predictions_frame(matrix), path)
        loaded = load_predictions(path)
        self.assertEqual(loaded.model_ids, matrix.model_ids)
        self.assertEqual(loaded.classes, matrix.classes)
        self.assertEqual(dict(loaded.models[1].levels), {'a': 'resnet', 'h': 'yes'})
        for name in ('val', 'test'):
            with self.subTest(dataset=name):
                np.testing.assert_array_equal(loaded.dataset(name).labels, matrix.dataset(name).labels)
                np.testing.assert_allclose(loaded.dataset(name).probs, matrix.dataset(name).probs,
                                           rtol=0, atol=1e-15)

    def test_small_drift_is_renormalized(self):
        path = self.write('drift.csv', PREDICTION_HEADER +
                          "m0,d,i0,mel,0.6,0.4000005\n"
                          "m0,d,i1,nev,0.3,0.7\n")
        probs = load_predictions(path).dataset('d').probs
        self.assertAlmostEqual(float(probs[0, 0].sum()), 1.0, places=12)

    def test_noticeable_drift_warns(self):
        path = self.write('drift.csv', PREDICTION_HEADER +
                          "m0,d,i0,mel,0.6,0.4001\n"
                          "m0,d,i1,nev,0.3,0.7\n")
        with self.assertLogs('factorlab.files', level='WARNING'):
            probs = load_predictions(path).dataset('d').probs
        self.assertAlmostEqual(float(probs[0, 0].sum()), 1.0, places=12)

    def test_large_drift_is_rejected(self):
        path = self.write('drift.csv', PREDICTION_HEADER + "m0,d,i0,mel,0.6,0.5\n")
        with self.assertRaisesRegex(InputFormatError, ':2:'):
            load_predictions(path)

    def test_missing_prediction(self):
        path = self.write('missing.csv', PREDICTION_HEADER +
                          "m0,d,i0,mel,0.6,0.4\n"
                          "m0,d,i1,nev,0.3,0.7\n"
                          "m1,d,i0,mel,0.5,0.5\n")
        with self.assertRaises(DesignConsistencyError):
            load_predictions(path)

    def test_duplicate_rows(self):
        path = self.write('duplicate.csv', PREDICTION_HEADER +
                          "m0,d,i0,mel,0.6,0.4\n"
                          "m0,d,i0,mel,0.6,0.4\n")
        with self.assertRaises(DesignConsistencyError):
            load_predictions(path)

    def test_label_problems(self):
        unknown = self.write('unknown.csv', PREDICTION_HEADER + "m0,d,i0,bcc,0.6,0.4\n")
        with self.assertRaises(InputFormatError):
            load_predictions(unknown)
        conflicting = self.write('conflict.csv', PREDICTION_HEADER +
                                 "m0,d,i0,mel,0.6,0.4\n"
                                 "m1,d,i0,nev,0.6,0.4\n")
        with self.assertRaises(InputFormatError):
            load_predictions(conflicting)

    def test_needs_two_classes(self):
        path = self.write('one.csv', "model_id,dataset,instance_id,true_label,p_mel\nm0,d,i0,mel,1.0\n")
        with self.assertRaises(InputFormatError):
            load_predictions(path)


class TestReportWriter(FileTestCase):
    """Test audit headers and output documents."""

    def test_meta_records_inputs(self):
        path = self.write('input.json', json.dumps(small_manifest_dict()))
        writer = ReportWriter('design', inputs=[path], seed=4)
        self.assertEqual(writer.meta(), {'tool': 'factorlab', 'command': 'design', 'seed': 4,
                                         'inputs': {path: file_digest(path)}})
        self.assertIn(f"# input: {path} sha256={file_digest(path)}", writer.header_lines())
        self.assertEqual(len(file_digest(path)), 64)

    def test_json_document(self):
        document = json.loads(ReportWriter('anova').render_json({'rows': []}))
        self.assertEqual(document['meta']['command'], 'anova')
        self.assertNotIn('seed', document['meta'])
        self.assertEqual(document['rows'], [])

    def test_design_without_dataset_axis_columns(self):
        design = build_full_factorial([Factor('a', 'A', ('x', 'y')), Factor('j', 'J', ('d1', 'd2'))])
        frame = skeleton_frame(Manifest(design, 'j'))
        self.assertEqual(list(frame.columns), ['treatment_id', 'a', 'dataset', 'auc'])


if __name__ == '__main__':
    unittest.main()
