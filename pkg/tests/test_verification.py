# -*- coding: utf-8 -*-
import contextlib
import io
import json

from .context import DualSelfDistillation, unittest
from DualSelfDistillation.analysis import verification
from DualSelfDistillation.analysis.verification import CheckResult, run_all
from DualSelfDistillation.cli import main


class TestChecks(unittest.TestCase):
    def assertCheck(self, check, **kwargs):
        passed, detail = check(**kwargs)
        self.assertTrue(passed, detail)

    def test_loss_oracles(self):
        self.assertCheck(verification.check_loss_oracles, num_instances=20)

    def test_gradients(self):
        self.assertCheck(verification.check_gradients)

    def test_loss_reduction(self):
        self.assertCheck(verification.check_loss_reduction)

    def test_temperature(self):
        self.assertCheck(verification.check_temperature)

    def test_hd95(self):
        self.assertCheck(verification.check_hd95, num_pairs=30)

    def test_stage_distributions(self):
        self.assertCheck(verification.check_stage_distributions)

    def test_inference_purity(self):
        self.assertCheck(verification.check_inference_purity)

    def test_mutated_smoothing_is_caught(self):
        passed, _ = verification.check_loss_oracles(num_instances=10, impl_smooth_eps=0.1)
        self.assertFalse(passed)
        # the reduction identity holds for any smoothing
        self.assertCheck(verification.check_loss_reduction, impl_smooth_eps=0.1)


class TestRunAll(unittest.TestCase):
    def test_quick_run_passes(self):
        results = run_all(quick=True)
        self.assertEqual([r.name for r in results],
                         ["loss_oracles", "gradients", "loss_reduction", "trajectory_reduction", "temperature",
                          "hd95_oracle", "stage_distributions", "inference_purity"])
        for result in results:
            self.assertTrue(result.passed, result)

    def test_cli_reports_mutation(self):
        stdout = io.StringIO()
        with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(io.StringIO()):
            code = main(["verify", "--json", "--quick", "--dice-eps-override", "0.1"])
        self.assertEqual(code, 1)
        results = {r["name"]: r["passed"] for r in json.loads(stdout.getvalue())}
        self.assertFalse(results["loss_oracles"])
        self.assertTrue(results["loss_reduction"])
        self.assertTrue(results["hd95_oracle"])

    def test_failing_check_is_reported(self):
        def broken():
            raise RuntimeError("boom")
        with self.assertLogs("DualSelfDistillation.analysis.verification", level="ERROR"):
            result = verification._timed("broken", broken)
        self.assertFalse(result.passed)
        self.assertEqual(result.to_dict()["detail"], "RuntimeError: boom")
        self.assertEqual(CheckResult("x", 1).to_dict(), {"name": "x", "passed": True, "detail": "", "seconds": 0.})


if __name__ == '__main__':
    unittest.main()
