import unittest
import sys
import os

# Add parent directory to path to import factorlab package
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from factorlab.design import Factor, OutcomeTable, build_full_factorial
from factorlab.ensemble import EnsembleSpec, Pooling, ensemble_predict, prediction_response
from factorlab.errors import InputFormatError
from factorlab.metrics import ResponseSpec
from factorlab.protocol import blind_protocol, privileged_protocol
from factorlab.synth import SkillModel, gen_predictions

CLASSES = ('melanoma', 'keratosis', 'nevus')
SPEC = ResponseSpec(('melanoma', 'keratosis'))
SIZES = {'internal': 120, 'validation': 120, 'test': 240}


def matrix_for(seed, models=8, jitter=0.4):
    per_model = {f"m{i}": 0.2 + 0.15 * i for i in range(models)}
    return gen_predictions(SkillModel(per_model, SIZES, CLASSES, None, jitter, seed))


class TestBlindProtocol(unittest.TestCase):
    """Test selection without looking at the test split."""

    def setUp(self):
        self.matrix = matrix_for(1)

    def test_commits_to_best_validation_size(self):
        report = blind_protocol(self.matrix, 'internal', 'validation', 'test', SPEC, top_k=5)
        self.assertEqual(report.mode, 'blind')
        self.assertEqual(len(report.ranking), 5)
        self.assertEqual(len(report.curve), 5)
        best = max(point.response for point in report.curve)
        first_best = next(point.size for point in report.curve if point.response == best)
        self.assertEqual(report.committed_size, first_best)

    def test_test_response_is_committed_ensemble(self):
        report = blind_protocol(self.matrix, 'internal', 'validation', 'test', SPEC, top_k=4,
                                pooling=Pooling.MAX)
        members = [model_id for model_id, _ in report.ranking][:report.committed_size]
        pooled = ensemble_predict(self.matrix, EnsembleSpec(tuple(members), Pooling.MAX), 'test')
        expected, aucs = prediction_response(pooled, self.matrix.dataset('test').labels, self.matrix, SPEC)
        self.assertEqual(report.test_response, expected)
        self.assertEqual(report.test_class_aucs, aucs)

    def test_ranking_is_descending(self):
        report = blind_protocol(self.matrix, 'internal', 'validation', 'test', SPEC, top_k=8)
        values = [value for _, value in report.ranking]
        self.assertEqual(values, sorted(values, reverse=True))

    def test_top_k_bounds(self):
        with self.assertRaises(InputFormatError):
            blind_protocol(self.matrix, 'internal', 'validation', 'test', SPEC, top_k=9)
        with self.assertRaises(InputFormatError):
            blind_protocol(self.matrix, 'internal', 'validation', 'test', SPEC, top_k=0)
        with self.assertRaises(InputFormatError):
            blind_protocol(self.matrix, 'internal', 'validation', 'test', SPEC, top_k=3, candidates=['m0', 'm1'])

    def test_missing_split(self):
        with self.assertRaises(InputFormatError):
            blind_protocol(self.matrix, 'internal', 'holdout', 'test', SPEC, top_k=3)

    def test_report_document(self):
        document = blind_protocol(self.matrix, 'internal', 'validation', 'test', SPEC, top_k=3).to_dict()
        self.assertEqual(document['mode'], 'blind')
        self.assertEqual(document['pooling'], 'average')
        self.assertIn('committed_size', document)
        self.assertNotIn('class_best', document)
        self.assertEqual([point['size'] for point in document['curve']], [1, 2, 3])

    def test_ranking_from_outcome_table(self):
        design = build_full_factorial([Factor('a', 'Architecture', ('resnet', 'inception')),
                                       Factor('h', 'Head', ('svm', 'none')),
                                       Factor('j', 'Test dataset', ('internal', 'other'))])
        values = {('resnet', 'svm'): 0.6, ('resnet', 'none'): 0.9,
                  ('inception', 'svm'): 0.7, ('inception', 'none'): 0.8}
        rows = [(t, {'auc': values[design.labels(t)[:2]]}) for t in design.treatments]
        table = OutcomeTable.from_records(design, 'j', rows)
        ids = {f"a={a};h={h}": 1.0 for a, h in values}
        matrix = gen_predictions(SkillModel(ids, SIZES, CLASSES, None, 0.0, 2))
        report = blind_protocol(matrix, 'internal', 'validation', 'test', SPEC, top_k=2,
                                table=table, table_spec=ResponseSpec(('auc',)))
        self.assertEqual(report.ranking, (('a=resnet;h=none', 0.9), ('a=inception;h=none', 0.8)))
        with self.assertRaises(InputFormatError):
            blind_protocol(matrix, 'validation', 'validation', 'test', SPEC, top_k=2,
                           table=table, table_spec=ResponseSpec(('auc',)))


class TestPrivilegedProtocol(unittest.TestCase):
    """Test tuning on the test split."""

    def test_class_best_is_curve_maximum(self):
        matrix = matrix_for(3)
        report = privileged_protocol(matrix, 'test', SPEC, top_k=6)
        for k, name in enumerate(SPEC.metric_names):
            with self.subTest(name=name):
                self.assertEqual(report.class_best[name].auc, max(p.class_aucs[k] for p in report.curve))
        self.assertEqual(report.curve_dataset, 'test')
        self.assertIn('class_best', report.to_dict())

    def test_dominates_blind(self):
        """Tuning on the test split never reports less than committing blind."""
        strict = 0
        for seed in range(20):
            matrix = matrix_for(seed)
            blind = blind_protocol(matrix, 'test', 'validation', 'test', SPEC, top_k=6)
            privileged = privileged_protocol(matrix, 'test', SPEC, top_k=6)
            with self.subTest(seed=seed):
                self.assertGreaterEqual(privileged.test_response, blind.test_response)
                for k in range(len(SPEC.metric_names)):
                    self.assertGreaterEqual(privileged.test_class_aucs[k], blind.test_class_aucs[k])
            strict += privileged.test_response > blind.test_response
        self.assertGreaterEqual(strict, 1)

    def test_missing_test_split(self):
        with self.assertRaises(InputFormatError):
            privileged_protocol(matrix_for(0), 'edra', SPEC, top_k=2)


if __name__ == '__main__':
    unittest.main()
