# -*- coding: utf-8 -*-
import os
import shutil
import tempfile

import numpy as np
import pandas as pd

from .context import DualSelfDistillation, unittest
from DualSelfDistillation.errors import ContractViolation
from DualSelfDistillation.analysis import (dice_score, hd95, hausdorff_distance, boundary_voxels,
                                           evaluate_segmentation, metrics_frame, summarize)
from DualSelfDistillation.analysis.metrics import write_metrics_csv, write_summary_json
from DualSelfDistillation.analysis.oracles import hd95_oracle, boundary_oracle


def block(shape, start, size):
    mask = np.zeros(shape, dtype=bool)
    mask[tuple(slice(s, s + n) for s, n in zip(start, size))] = True
    return mask


class TestDice(unittest.TestCase):
    def test_identical(self):
        mask = block((4, 4, 4), (1, 1, 1), (2, 2, 2))
        self.assertEqual(dice_score(mask, mask), 1.)

    def test_disjoint(self):
        self.assertEqual(dice_score(block((4, 4, 4), (0, 0, 0), (1, 1, 1)), block((4, 4, 4), (3, 3, 3), (1, 1, 1))), 0.)

    def test_shifted_block(self):
        a = block((4, 4, 2), (0, 0, 0), (2, 2, 1))
        b = block((4, 4, 2), (1, 0, 0), (2, 2, 1))
        self.assertEqual(dice_score(a, b), 0.5)

    def test_both_empty(self):
        empty = np.zeros((3, 3, 3), dtype=bool)
        self.assertIsNone(dice_score(empty, empty))

    def test_shape_mismatch(self):
        with self.assertRaises(ContractViolation):
            dice_score(np.zeros((3, 3, 3)), np.zeros((3, 3, 2)))


class TestSurfaceDistance(unittest.TestCase):
    def test_identical(self):
        mask = block((6, 6, 6), (1, 1, 1), (3, 3, 3))
        self.assertEqual(hd95(mask, mask), 0.)

    def test_single_voxels(self):
        a = block((4, 1, 1), (0, 0, 0), (1, 1, 1))
        b = block((4, 1, 1), (3, 0, 0), (1, 1, 1))
        self.assertEqual(hd95(a, b), 3.)
        self.assertEqual(hd95(a, b, spacing=(2., 1., 1.)), 6.)

    def test_empty_mask(self):
        mask = block((4, 4, 4), (0, 0, 0), (2, 2, 2))
        self.assertIsNone(hd95(mask, np.zeros_like(mask)))
        self.assertIsNone(hd95(np.zeros_like(mask), np.zeros_like(mask)))

    def test_boundary(self):
        mask = block((5, 5, 5), (0, 0, 0), (3, 3, 3))
        boundary = boundary_voxels(mask)
        # the block touches the volume edge, only its centre voxel is interior
        self.assertEqual(int(boundary.sum()), 26)
        self.assertFalse(boundary[1, 1, 1])
        self.assertEqual(sorted(map(tuple, np.argwhere(boundary))), sorted(boundary_oracle(mask)))

    def test_oracle_agreement(self):
        rng = np.random.RandomState(0)
        for _ in range(20):
            a = rng.rand(8, 8, 8) < 0.2
            b = rng.rand(8, 8, 8) < 0.3
            spacing = (1., 1.5, 0.75)
            self.assertEqual(hd95(a, b, spacing), hd95_oracle(a, b, spacing))
            self.assertEqual(hd95(a, b, spacing, pooled=True), hd95_oracle(a, b, spacing, pooled=True))

    def test_properties(self):
        rng = np.random.RandomState(1)
        for _ in range(10):
            a = rng.rand(8, 8, 8) < 0.25
            b = rng.rand(8, 8, 8) < 0.25
            self.assertEqual(hd95(a, b), hd95(b, a))
            self.assertLessEqual(hd95(a, b), hausdorff_distance(a, b))
            self.assertGreaterEqual(hd95(a, b), 0.)

    def test_invalid_spacing(self):
        mask = block((4, 4, 4), (0, 0, 0), (2, 2, 2))
        with self.assertRaises(ContractViolation):
            hd95(mask, mask, spacing=(1., 0., 1.))


class TestReports(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.mkdtemp()
        self.truth = np.zeros((8, 8, 8), dtype=np.uint8)
        self.truth[2:6, 2:6, 2:6] = 1
        self.truth[3:5, 3:5, 3:5] = 2

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def test_truth_as_prediction(self):
        report = evaluate_segmentation(self.truth, self.truth, 3)
        self.assertEqual([c.class_id for c in report.per_class], [1, 2])
        self.assertEqual([c.dice for c in report.per_class], [1., 1.])
        self.assertEqual([c.hd95 for c in report.per_class], [0., 0.])
        self.assertEqual(report.mean_dice, 1.)

    def test_missing_class(self):
        prediction = np.where(self.truth == 2, 1, self.truth)
        report = evaluate_segmentation(prediction, self.truth, 4, foreground_only=False)
        self.assertEqual(len(report.per_class), 4)
        by_class = {c.class_id: c for c in report.per_class}
        self.assertEqual(by_class[2].dice, 0.)
        self.assertIsNone(by_class[2].hd95)
        self.assertIsNone(by_class[3].dice)
        self.assertEqual(report.to_dict()["foreground_only"], False)

    def test_frame_and_summary(self):
        prediction = np.where(self.truth == 2, 1, self.truth)
        reports = {"a": evaluate_segmentation(self.truth, self.truth, 3),
                   "b": evaluate_segmentation(prediction, self.truth, 3)}
        frame = metrics_frame(reports)
        self.assertEqual(len(frame), 2*2)
        self.assertEqual(list(frame.columns), ["sample_id", "class_id", "dice", "hd95"])
        summary = summarize(frame)
        self.assertEqual(summary["num_samples"], 2)
        self.assertEqual(summary["per_class"]["2"]["dice"]["mean"], 0.5)
        self.assertEqual(summary["per_class"]["2"]["dice"]["std"], 0.5)
        self.assertEqual(summary["per_class"]["2"]["hd95"]["count"], 1)

        csv_path = os.path.join(self.tmp, "metrics.csv")
        write_metrics_csv(frame, csv_path)
        self.assertEqual(len(pd.read_csv(csv_path)), 4)
        write_summary_json(summary, os.path.join(self.tmp, "summary.json"))
        self.assertTrue(os.path.exists(os.path.join(self.tmp, "summary.json")))


if __name__ == '__main__':
    unittest.main()
