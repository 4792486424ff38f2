# -*- coding: utf-8 -*-
import contextlib
import io
import json
import os
import shutil
import tempfile

import pandas as pd

from .context import DualSelfDistillation, unittest
from DualSelfDistillation.cli import main, EXIT_OK, EXIT_USAGE, EXIT_IO
from DualSelfDistillation.config import TrainConfig, ArchConfig
from DualSelfDistillation.simulation import DatasetManifest


def run(*argv):
    """(exit code, stdout, stderr) of one command line invocation."""
    stdout = io.StringIO()
    stderr = io.StringIO()
    with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
        code = main(list(argv))
    return code, stdout.getvalue(), stderr.getvalue()


class CliTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def path(self, *names):
        return os.path.join(self.tmp, *names)

    def assertJsonError(self, stderr, error):
        message = json.loads(stderr.strip().splitlines()[-1])
        self.assertEqual(message["error"], error)
        self.assertIn("message", message)


class TestGenData(CliTestCase):
    def test_default_split(self):
        code, stdout, _ = run("gen-data", "--output-dir", self.path("data"), "--num", "20", "--shape", "32",
                              "--classes", "4", "--seed", "7")
        self.assertEqual(code, EXIT_OK)
        manifest = DatasetManifest.load(stdout.strip())
        self.assertEqual(manifest.counts(), {"train": 12, "val": 4, "test": 4})
        self.assertEqual(len(os.listdir(self.path("data", "volumes"))), 40)

    def test_preset(self):
        code, stdout, _ = run("gen-data", "--output-dir", self.path("data"), "--preset", "sanity", "--seed", "3")
        self.assertEqual(code, EXIT_OK)
        manifest = DatasetManifest.load(stdout.strip())
        self.assertEqual(manifest.counts(), {"train": 12, "val": 4, "test": 4})
        self.assertEqual(manifest.num_classes, 2)

    def test_rerun_identical(self):
        for name in ("a", "b"):
            code, _, _ = run("gen-data", "--output-dir", self.path(name), "--num", "3", "--shape", "16",
                             "--classes", "3", "--seed", "7", "--colored-noise", "0.05", "--shading", "0.1")
            self.assertEqual(code, EXIT_OK)
        for name in sorted(os.listdir(self.path("a", "volumes"))):
            with open(self.path("a", "volumes", name), "rb") as a, open(self.path("b", "volumes", name), "rb") as b:
                self.assertEqual(a.read(), b.read(), name)

    def test_single_class_rejected(self):
        code, _, stderr = run("gen-data", "--output-dir", self.path("data"), "--classes", "1")
        self.assertEqual(code, EXIT_USAGE)
        self.assertJsonError(stderr, "ContractViolation")

    def test_existing_dataset(self):
        argv = ("gen-data", "--output-dir", self.path("data"), "--num", "3", "--shape", "8")
        self.assertEqual(run(*argv)[0], EXIT_OK)
        code, _, stderr = run(*argv)
        self.assertEqual(code, EXIT_IO)
        self.assertJsonError(stderr, "FileExistsError")
        self.assertEqual(run(*(argv + ("--overwrite",)))[0], EXIT_OK)


class TestUsage(CliTestCase):
    def test_unknown_command(self):
        code, _, stderr = run("fly")
        self.assertEqual(code, EXIT_USAGE)
        self.assertJsonError(stderr, "UsageError")

    def test_bad_flag_value(self):
        code, _, stderr = run("ablate", "--manifest", "m.json", "--modes", "DS,XYZ")
        self.assertEqual(code, EXIT_USAGE)
        self.assertJsonError(stderr, "UsageError")

    def test_missing_manifest(self):
        code, _, stderr = run("train")
        self.assertEqual(code, EXIT_USAGE)
        self.assertJsonError(stderr, "ConfigError")

    def test_missing_config_file(self):
        code, _, stderr = run("train", "--config", self.path("nowhere.json"))
        self.assertEqual(code, EXIT_IO)
        self.assertJsonError(stderr, "FileNotFoundError")

    def test_invalid_config(self):
        path = self.path("config.json")
        with open(path, "w") as open_file:
            open_file.write('{\n  "epochs": 3,\n  "dsd": {"tau": -1}\n}\n')
        code, _, stderr = run("train", "--config", path, "--manifest", "m.json")
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn("dsd.tau", json.loads(stderr.strip().splitlines()[-1])["message"])
        with open(path, "w") as open_file:
            open_file.write('{\n  "epochs": 3,\n  "seed": }\n')
        code, _, stderr = run("train", "--config", path, "--manifest", "m.json")
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn("line 3", json.loads(stderr.strip().splitlines()[-1])["message"])


class TestWorkflow(CliTestCase):
    def setUp(self):
        super(TestWorkflow, self).setUp()
        code, stdout, _ = run("gen-data", "--output-dir", self.path("data"), "--num", "5", "--shape", "16",
                              "--classes", "3", "--split", "3,1,1")
        self.assertEqual(code, EXIT_OK)
        self.manifest = stdout.strip()
        self.config = self.path("train.json")
        TrainConfig(arch=ArchConfig(num_stages=2, num_classes=3, base_channels=4), epochs=1,
                    num_workers=0).save(self.config)

    def test_train_and_eval(self):
        run_dir = self.path("run")
        with self.assertLogs("DualSelfDistillation.training.trainer", level="INFO") as logs:
            code, stdout, _ = run("train", "--config", self.config, "--manifest", self.manifest,
                                  "--output-dir", run_dir, "--ablation-mode", "DSD")
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(stdout.strip(), run_dir)
        epoch_line = [line for line in logs.output if "epoch 1/1" in line][0]
        for term in ("main", "deep_supervision", "encoder_distillation", "decoder_distillation"):
            self.assertIn(term, epoch_line)

        code, _, _ = run("eval", "--checkpoint", os.path.join(run_dir, "ckpt_best.pt"))
        self.assertEqual(code, EXIT_OK)
        with open(os.path.join(run_dir, "report.json")) as open_file:
            report = json.load(open_file)
        self.assertEqual(report["split"], "test")
        self.assertEqual(len(report["samples"]), 1)

        code, _, stderr = run("eval", "--checkpoint", os.path.join(run_dir, "ckpt_best.pt"))
        self.assertEqual(code, EXIT_IO)
        self.assertJsonError(stderr, "FileExistsError")

    def test_ablate(self):
        output_dir = self.path("ablation")
        code, stdout, _ = run("ablate", "--config", self.config, "--manifest", self.manifest,
                              "--output-dir", output_dir, "--modes", "DS,DSD", "--seeds", "0,1")
        self.assertEqual(code, EXIT_OK)
        table = pd.read_csv(os.path.join(output_dir, "ablation.csv"))
        self.assertEqual(list(table["mode"]), ["DS", "DSD"])
        self.assertIn("DSD", stdout)


if __name__ == '__main__':
    unittest.main()
