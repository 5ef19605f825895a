import unittest
import sys
import os

# Add parent directory to path to import factorlab package
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np

from factorlab.design import (Factor, OutcomeTable, build_full_factorial, dataset_response,
                              decode_treatment, encode_treatment, parse_assignment, require_valid,
                              validate_outcomes)
from factorlab.errors import DesignConsistencyError, InputFormatError
from factorlab.metrics import ResponseSpec


def two_factor_design():
    return build_full_factorial([Factor('a', 'Model', ('resnet', 'inception')),
                                 Factor('b', 'Train', ('challenge', 'full'))])


def filled_table(design, dataset_factor, value=lambda t: 0.5):
    return OutcomeTable.from_records(design, dataset_factor,
                                     [(t, {'auc': value(t)}) for t in design.treatments])


class TestFactorialConstruction(unittest.TestCase):
    """Test full factorial enumeration."""

    def test_two_by_two_lexicographic(self):
        """Treatments come out with the last factor varying fastest."""
        design = two_factor_design()
        self.assertEqual([t.indices for t in design.treatments], [(0, 0), (0, 1), (1, 0), (1, 1)])
        self.assertEqual(design.shape, (2, 2))

    def test_main_design_cardinality(self):
        """Nine two-level factors plus a five-level one give 2560 treatments."""
        factors = [Factor(s, s, ('lo', 'hi')) for s in 'abcdefghi']
        factors.append(Factor('j', 'Test dataset', ('d1', 'd2', 'd3', 'd4', 'd5')))
        design = build_full_factorial(factors)
        self.assertEqual(len(design.treatments), 2560)
        self.assertEqual(len(set(design.treatments)), 2560)

    def test_transfer_shaped_cardinality(self):
        factors = [Factor(s, s, ('lo', 'hi')) for s in 'abcdegit']
        factors.append(Factor('j', 'Test dataset', ('d1', 'd2', 'd3', 'd4', 'd5')))
        self.assertEqual(len(build_full_factorial(factors).treatments), 1280)

    def test_single_factor(self):
        design = build_full_factorial([Factor('j', 'Test dataset', ('x', 'y'))])
        self.assertEqual(len(design.treatments), 2)

    def test_duplicate_symbol_rejected(self):
        with self.assertRaises(InputFormatError) as context:
            build_full_factorial([Factor('a', 'A', ('x', 'y')), Factor('a', 'B', ('u', 'v'))])
        self.assertIn("'a'", str(context.exception))

    def test_single_level_rejected(self):
        with self.assertRaises(InputFormatError):
            Factor('a', 'A', ('only',))

    def test_repeated_level_rejected(self):
        with self.assertRaises(InputFormatError):
            Factor('a', 'A', ('x', 'x'))

    def test_without_drops_factor(self):
        design = two_factor_design()
        sub = design.without('a')
        self.assertEqual(sub.symbols, ('b',))
        self.assertEqual(len(sub.treatments), 2)


class TestTreatmentKeys(unittest.TestCase):
    """Test treatment key encoding and decoding."""

    def setUp(self):
        self.design = two_factor_design()

    def test_encode(self):
        t = self.design.treatments[1]
        self.assertEqual(encode_treatment(t, self.design), 'a=resnet;b=full')

    def test_decode_inverts_encode(self):
        for t in self.design.treatments:
            with self.subTest(treatment=t.indices):
                self.assertEqual(decode_treatment(encode_treatment(t, self.design), self.design), t)

    def test_decode_is_order_independent(self):
        self.assertEqual(decode_treatment('b=full;a=inception', self.design).indices, (1, 1))

    def test_unknown_symbol(self):
        with self.assertRaises(InputFormatError):
            decode_treatment('a=resnet;z=full', self.design)

    def test_unknown_level(self):
        with self.assertRaises(InputFormatError):
            decode_treatment('a=vgg;b=full', self.design)

    def test_missing_symbol(self):
        with self.assertRaises(InputFormatError):
            decode_treatment('a=resnet', self.design)

    def test_repeated_symbol(self):
        with self.assertRaises(InputFormatError):
            parse_assignment('a=resnet;a=inception')

    def test_malformed_part(self):
        with self.assertRaises(InputFormatError):
            parse_assignment('a=resnet;b')

    def test_encode_foreign_symbol(self):
        other = build_full_factorial([Factor('z', 'Z', ('x', 'y'))])
        with self.assertRaises(InputFormatError):
            encode_treatment(other.treatments[0], self.design)


class TestOutcomeValidation(unittest.TestCase):
    """Test outcome-table validation."""

    def setUp(self):
        self.design = two_factor_design()

    def test_complete_table_valid(self):
        report = validate_outcomes(filled_table(self.design, 'b'))
        self.assertTrue(report.valid)
        self.assertEqual(report.messages(), [])

    def test_missing_treatment_reported(self):
        table = OutcomeTable.from_records(self.design, 'b',
                                          [(t, {'auc': 0.5}) for t in self.design.treatments[:3]])
        report = validate_outcomes(table)
        self.assertFalse(report.valid)
        self.assertEqual(report.missing, ['a=inception;b=full'])
        with self.assertRaises(DesignConsistencyError) as context:
            report.raise_for_errors()
        self.assertIn('a=inception;b=full', str(context.exception))

    def test_duplicate_reported(self):
        rows = [(t, {'auc': 0.5}) for t in self.design.treatments]
        rows.append((self.design.treatments[0], {'auc': 0.6}))
        report = validate_outcomes(OutcomeTable.from_records(self.design, 'b', rows))
        self.assertEqual(report.duplicates, ['a=resnet;b=challenge'])
        with self.assertRaises(DesignConsistencyError):
            report.raise_for_errors()

    def test_out_of_range_and_nan(self):
        values = {0: 1.2, 1: float('nan')}
        table = OutcomeTable.from_records(
            self.design, 'b', [(t, {'auc': values.get(k, 0.5)}) for k, t in enumerate(self.design.treatments)])
        report = validate_outcomes(table)
        self.assertEqual(len(report.out_of_range), 2)
        with self.assertRaises(InputFormatError):
            report.raise_for_errors()

    def test_inconsistent_metrics(self):
        rows = [(t, {'auc': 0.5}) for t in self.design.treatments]
        rows[2] = (rows[2][0], {'auc': 0.5, 'ap': 0.4})
        report = validate_outcomes(OutcomeTable.from_records(self.design, 'b', rows))
        self.assertEqual(report.inconsistent_metrics, ['a=inception;b=challenge'])

    def test_inconsistent_first_row_named(self):
        rows = [(t, {'auc': 0.5}) for t in self.design.treatments]
        rows[0] = (rows[0][0], {'auc': 0.5, 'ap': 0.4})
        report = validate_outcomes(OutcomeTable.from_records(self.design, 'b', rows))
        self.assertEqual(report.inconsistent_metrics, ['a=resnet;b=challenge'])
        with self.assertRaises(InputFormatError):
            report.raise_for_errors()

    def test_require_valid_returns_table(self):
        table = filled_table(self.design, 'b')
        self.assertIs(require_valid(table), table)

    def test_unknown_dataset_factor(self):
        with self.assertRaises(InputFormatError):
            filled_table(self.design, 'z')


class TestResponseCube(unittest.TestCase):
    """Test response arrays over the design."""

    def test_cube_shape_and_order(self):
        design = two_factor_design()
        values = {(0, 0): 0.1, (0, 1): 0.2, (1, 0): 0.3, (1, 1): 0.4}
        table = filled_table(design, 'b', lambda t: values[t.indices])
        cube = table.cube(ResponseSpec(('auc',)))
        np.testing.assert_allclose(cube, [[0.1, 0.2], [0.3, 0.4]])

    def test_dataset_response_slices_dataset_axis(self):
        design = two_factor_design()
        values = {(0, 0): 0.1, (0, 1): 0.2, (1, 0): 0.3, (1, 1): 0.4}
        table = filled_table(design, 'b', lambda t: values[t.indices])
        np.testing.assert_allclose(dataset_response(table, ResponseSpec(('auc',)), 'full'), [0.2, 0.4])

    def test_cube_raw_skips_logit(self):
        design = two_factor_design()
        table = filled_table(design, 'b', lambda t: 0.8)
        spec = ResponseSpec(('auc',), 'logit')
        np.testing.assert_allclose(table.cube(spec, raw=True), np.full((2, 2), 0.8))
        np.testing.assert_allclose(table.cube(spec), np.full((2, 2), np.log(4.0)))

    def test_record_missing(self):
        design = two_factor_design()
        table = OutcomeTable.from_records(design, 'b', [(design.treatments[0], {'auc': 0.5})])
        with self.assertRaises(DesignConsistencyError):
            table.record(design.treatments[3])


if __name__ == '__main__':
    unittest.main()
