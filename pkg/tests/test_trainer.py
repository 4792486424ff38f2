# -*- coding: utf-8 -*-
import json
import os
import shutil
import tempfile

import numpy as np
import pandas as pd
import torch

from .context import DualSelfDistillation, unittest, RUN_SLOW
from DualSelfDistillation.config import TrainConfig, ArchConfig, OptimizerConfig
from DualSelfDistillation.errors import NonFiniteLossError, ContractViolation
from DualSelfDistillation.losses import TERM_NAMES, dice_ce_loss
from DualSelfDistillation.network import build_backbone, soften
from DualSelfDistillation.presets import SanityPhantom, SANITY_SPLIT
from DualSelfDistillation.simulation import PhantomSpec, generate_dataset, generate_phantom, DatasetManifest, one_hot
from DualSelfDistillation.training import Trainer, train, load_checkpoint, VolumeDataset, make_loader
from DualSelfDistillation.analysis.verification import check_trajectory_reduction


def small_config(manifest_path, output_dir, **changes):
    settings = dict(arch=ArchConfig(num_stages=2, in_channels=1, num_classes=3, base_channels=4),
                    epochs=2, batch_size=2, seed=0, manifest_path=manifest_path, output_dir=output_dir,
                    precision="float64", num_workers=0)
    settings.update(changes)
    return TrainConfig(**settings)


class TrainerTestCase(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.data_dir = tempfile.mkdtemp()
        spec = PhantomSpec(shape=(8, 8, 8), num_classes=3, noise_sigma=0.2, seed=1)
        cls.manifest_path = generate_dataset(cls.data_dir, spec, 6, ratios=(4, 1, 1))

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.data_dir)

    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def run_dir(self, name):
        return os.path.join(self.tmp, name)


class TestTrain(TrainerTestCase):
    def test_run_directory(self):
        run_dir = train(small_config(self.manifest_path, self.run_dir("run")))
        for name in ("config.json", "log.csv", "steps.csv", "ckpt_last.pt", "ckpt_best.pt", "curves.png"):
            self.assertTrue(os.path.exists(os.path.join(run_dir, name)), name)
        log = pd.read_csv(os.path.join(run_dir, "log.csv"))
        self.assertEqual(list(log["epoch"]), [1, 2])
        steps = pd.read_csv(os.path.join(run_dir, "steps.csv"))
        self.assertEqual(len(steps), 4)
        for _, row in steps.iterrows():
            self.assertLess(abs(row["total"] - sum(row[name] for name in TERM_NAMES)), 1e-9)
        self.assertFalse(os.path.exists(os.path.join(run_dir, "nan_dump.json")))

    def test_epoch_log_lists_terms(self):
        with self.assertLogs("DualSelfDistillation.training.trainer", level="INFO") as logs:
            train(small_config(self.manifest_path, self.run_dir("run"), epochs=1))
        epoch_lines = [line for line in logs.output if "epoch 1/1" in line]
        self.assertEqual(len(epoch_lines), 1)
        for name in TERM_NAMES + ("val_dice",):
            self.assertIn(name, epoch_lines[0])

    def test_refuses_existing_run(self):
        cfg = small_config(self.manifest_path, self.run_dir("run"), epochs=1)
        train(cfg)
        with self.assertRaises(FileExistsError):
            train(cfg)
        train(cfg, overwrite=True)

    def test_rerun_is_bitwise_identical(self):
        first = train(small_config(self.manifest_path, self.run_dir("a")))
        second = train(small_config(self.manifest_path, self.run_dir("b")))
        for name in ("log.csv", "steps.csv"):
            with open(os.path.join(first, name)) as a, open(os.path.join(second, name)) as b:
                self.assertEqual(a.read(), b.read(), name)

    def test_resume(self):
        full = train(small_config(self.manifest_path, self.run_dir("full"), epochs=3))
        partial_cfg = small_config(self.manifest_path, self.run_dir("partial"), epochs=2)
        partial = train(partial_cfg)
        train(partial_cfg.replace(epochs=3), resume_from=os.path.join(partial, "ckpt_last.pt"))
        resumed_log = pd.read_csv(os.path.join(partial, "log.csv"))
        self.assertEqual(list(resumed_log["epoch"]), [1, 2, 3])
        full_steps = pd.read_csv(os.path.join(full, "steps.csv"))
        resumed_steps = pd.read_csv(os.path.join(partial, "steps.csv"))
        full_steps = full_steps[full_steps["epoch"] == 3].reset_index(drop=True)
        resumed_steps = resumed_steps[resumed_steps["epoch"] == 3].reset_index(drop=True)
        self.assertEqual(len(full_steps), 2)
        self.assertEqual(list(full_steps["step"]), list(resumed_steps["step"]))
        for name in ("total",) + TERM_NAMES:
            for step in range(len(full_steps)):
                self.assertLess(abs(full_steps[name][step] - resumed_steps[name][step]), 1e-6, (name, step))
        self.assertEqual(load_checkpoint(os.path.join(partial, "ckpt_last.pt")).epoch, 3)

    def test_checkpoint_contents(self):
        cfg = small_config(self.manifest_path, self.run_dir("run"), ablation_mode="SDE")
        run_dir = train(cfg)
        checkpoint = load_checkpoint(os.path.join(run_dir, "ckpt_last.pt"))
        self.assertEqual(checkpoint.epoch, 2)
        self.assertEqual(checkpoint.config.to_dict(), cfg.to_dict())
        self.assertIn("encoder", checkpoint.data["heads"])
        with open(os.path.join(run_dir, "config.json")) as open_file:
            self.assertEqual(json.load(open_file)["ablation_mode"], "SDE")

    def test_class_count_mismatch(self):
        cfg = small_config(self.manifest_path, self.run_dir("run"),
                           arch=ArchConfig(num_stages=2, num_classes=2, base_channels=4))
        with self.assertRaises(ContractViolation):
            train(cfg)


class TestTrainer(TrainerTestCase):
    def batch(self):
        manifest = DatasetManifest.load(self.manifest_path)
        dataset = VolumeDataset.from_manifest(manifest, "train", dtype=torch.float64)
        image, label, _ = next(iter(make_loader(dataset, batch_size=2)))
        return image, label

    def test_nan_dump(self):
        trainer = Trainer(small_config(self.manifest_path, self.tmp), run_dir=self.tmp)
        with torch.no_grad():
            trainer.network.backbone.head.weight.fill_(float("nan"))
        image, label = self.batch()
        with self.assertRaises(NonFiniteLossError) as context:
            trainer.train_step(image, label, epoch=1, step=0, sample_ids=[0, 1])
        self.assertEqual(context.exception.dump_path, os.path.join(self.tmp, "nan_dump.json"))
        with open(context.exception.dump_path) as open_file:
            dump = json.load(open_file)
        self.assertEqual(dump["samples"], [0, 1])
        self.assertEqual(dump["step"], 0)

    def test_float32_decomposition(self):
        trainer = Trainer(small_config(self.manifest_path, self.tmp, precision="float32"))
        values = trainer.train_step(*self.batch())
        self.assertLess(abs(values["total"] - sum(values[name] for name in TERM_NAMES)), 1e-6*abs(values["total"]))

    def test_baseline_uses_main_term_only(self):
        trainer = Trainer(small_config(self.manifest_path, self.tmp, ablation_mode="baseline"))
        values = trainer.train_step(*self.batch())
        self.assertEqual(values["total"], values["main"])
        for name in TERM_NAMES[1:]:
            self.assertEqual(values[name], 0.)
        for parameter in trainer.network.backbone.parameters():
            self.assertIsNotNone(parameter.grad)

    def test_baseline_heads_leave_backbone_gradients_untouched(self):
        cfg = small_config(self.manifest_path, self.tmp, ablation_mode="baseline")
        image, label = self.batch()
        trainer = Trainer(cfg)
        trainer.train_step(image, label)

        backbone = build_backbone(cfg.arch, seed=cfg.seed).to(torch.float64)
        backbone.train()
        truth = one_hot(label, cfg.arch.num_classes).to(torch.float64)
        dsd = trainer.dsd
        dice_ce_loss(soften(backbone(image), 1.), truth, dsd.dice_smooth_eps, dsd.prob_clamp_floor).backward()
        trained = dict(trainer.network.backbone.named_parameters())
        for name, parameter in backbone.named_parameters():
            self.assertTrue(torch.equal(trained[name].grad, parameter.grad), name)

    def test_encoder_teacher_trains_under_encoder_distillation(self):
        trainer = Trainer(small_config(self.manifest_path, self.tmp, ablation_mode="SDE"))
        teacher = trainer.network.encoder_heads[-1]
        before = [p.detach().clone() for p in teacher.parameters()]
        image, label = self.batch()
        for step in range(3):
            trainer.train_step(image, label, epoch=1, step=step)
        for parameter in teacher.parameters():
            self.assertIsNotNone(parameter.grad)
        self.assertTrue(any(not torch.equal(a, p.detach()) for a, p in zip(before, teacher.parameters())))

    def test_frozen_encoder_teacher_warns(self):
        cfg = small_config(self.manifest_path, self.tmp, ablation_mode="custom")
        with self.assertLogs("DualSelfDistillation.training.trainer", level="WARNING") as logs:
            trainer = Trainer(cfg)
        self.assertIn("detach_encoder_teacher", logs.output[0])
        trainer.train_step(*self.batch())
        self.assertTrue(all(p.grad is None for p in trainer.network.encoder_heads[-1].parameters()))

    def test_mode_presets(self):
        for mode, coefficients in (("DS", (1., 0., 0.)), ("SDD", (1., 0., 1.)), ("DSD", (1., 1., 1.))):
            dsd = Trainer(small_config(self.manifest_path, self.tmp, ablation_mode=mode)).dsd
            self.assertEqual((dsd.eta, dsd.alpha1, dsd.alpha2), coefficients)

    def test_optimizers(self):
        for name, cls in (("adam", torch.optim.Adam), ("adamw", torch.optim.AdamW), ("sgd", torch.optim.SGD)):
            cfg = small_config(self.manifest_path, self.tmp, optimizer=OptimizerConfig(name=name))
            self.assertIsInstance(Trainer(cfg).optimizer, cls)

    def test_zeroed_distillation_follows_deep_supervision(self):
        passed, detail = check_trajectory_reduction(num_steps=4)
        self.assertTrue(passed, detail)


class TestData(unittest.TestCase):
    def setUp(self):
        spec = PhantomSpec(shape=(8, 8, 8), num_classes=3, noise_sigma=0.)
        self.pairs = [generate_phantom(spec.with_seed(i)) for i in range(6)]

    def test_flips_keep_image_and_label_aligned(self):
        dataset = VolumeDataset(self.pairs, augment_flips=True, seed=3, dtype=torch.float64)
        means = torch.tensor(np.linspace(0., 1., 3))
        for epoch in range(3):
            dataset.set_epoch(epoch)
            for index in range(len(dataset)):
                image, label, _ = dataset[index]
                self.assertTrue(torch.equal(image[0], means[label].to(image.dtype)))

    def test_flips_are_reproducible(self):
        first = VolumeDataset(self.pairs, augment_flips=True, seed=3)
        second = VolumeDataset(self.pairs, augment_flips=True, seed=3)
        first.set_epoch(4)
        second.set_epoch(4)
        self.assertEqual([first.flips(i) for i in range(6)], [second.flips(i) for i in range(6)])
        self.assertEqual(VolumeDataset(self.pairs).flips(0), ())

    def test_loader_order(self):
        dataset = VolumeDataset(self.pairs)
        orders = []
        for _ in range(2):
            loader = make_loader(dataset, batch_size=2, shuffle=True, seed=5, epoch=2)
            orders.append([int(i) for _, _, index in loader for i in index])
        self.assertEqual(orders[0], orders[1])
        self.assertEqual(sorted(orders[0]), list(range(6)))


@unittest.skipUnless(RUN_SLOW, "set DSDSEG_RUN_SLOW=1 to run the training sanity check")
class TestSanityRun(unittest.TestCase):
    def test_baseline_separates_bright_ellipsoid(self):
        tmp = tempfile.mkdtemp()
        try:
            manifest_path = generate_dataset(tmp, SanityPhantom(seed=0), sum(SANITY_SPLIT), ratios=SANITY_SPLIT)
            cfg = TrainConfig(arch=ArchConfig(num_stages=3, num_classes=2, base_channels=8),
                              ablation_mode="baseline", epochs=50, batch_size=2, seed=0,
                              manifest_path=manifest_path, output_dir=os.path.join(tmp, "run"))
            run_dir = train(cfg)
            log = pd.read_csv(os.path.join(run_dir, "log.csv"))
            self.assertGreater(log["val_dice"].max(), 0.9)
        finally:
            shutil.rmtree(tmp)


if __name__ == '__main__':
    unittest.main()
