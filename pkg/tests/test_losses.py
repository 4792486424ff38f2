# -*- coding: utf-8 -*-
import math

import numpy as np
import torch

from .context import DualSelfDistillation, unittest
from DualSelfDistillation.config import DsdConfig
from DualSelfDistillation.errors import ContractViolation
from DualSelfDistillation.losses import dice_ce_loss, deep_supervision_loss, soft_kl_loss, dsd_loss
from DualSelfDistillation.network import StageDistribution
from DualSelfDistillation.analysis.oracles import dice_ce_oracle, kl_oracle
from DualSelfDistillation.analysis.verification import random_distribution, random_labels


def column(*values):
    """(K, 1, 1, 1) double tensor of one voxel."""
    return torch.tensor(values, dtype=torch.float64).reshape(-1, 1, 1, 1)


class TestDiceCrossEntropy(unittest.TestCase):
    def test_perfect_prediction(self):
        truth = torch.zeros((2, 2, 1, 1), dtype=torch.float64)
        truth[0, 0] = 1.
        truth[1, 1] = 1.
        self.assertEqual(dice_ce_loss(truth.clone(), truth, smooth_eps=0.).item(), 0.)

    def test_single_voxel(self):
        value = dice_ce_loss(column(0.5, 0.5), column(1., 0.), smooth_eps=0.).item()
        self.assertAlmostEqual(value, 0.6 + math.log(2.), places=6)
        self.assertAlmostEqual(value, 1.293147, places=6)

    def test_oracle(self):
        rng = np.random.RandomState(3)
        for _ in range(5):
            pred = random_distribution(rng, (3, 4, 4, 4))
            truth = random_labels(rng, 3, (4, 4, 4))
            value = dice_ce_loss(pred, truth).item()
            self.assertLess(abs(value - dice_ce_oracle(pred.numpy(), truth.numpy())), 1e-6)

    def test_batched_mean_of_dice(self):
        rng = np.random.RandomState(4)
        preds = [random_distribution(rng, (2, 3, 3, 3)) for _ in range(2)]
        truths = [random_labels(rng, 2, (3, 3, 3)) for _ in range(2)]
        batched = dice_ce_loss(torch.stack(preds), torch.stack(truths)).item()
        single = np.mean([dice_ce_loss(p, t).item() for p, t in zip(preds, truths)])
        self.assertAlmostEqual(batched, single, places=12)

    def test_contracts(self):
        truth = column(1., 0.)
        with self.assertRaises(ContractViolation):
            dice_ce_loss(column(0.5, 0.5, 0.), truth)
        with self.assertRaises(ContractViolation):
            dice_ce_loss(column(0.7, 0.7), truth)
        with self.assertRaises(ContractViolation):
            dice_ce_loss(column(0.5, 0.5), truth, smooth_eps=-1.)
        with self.assertRaises(ContractViolation):
            dice_ce_loss(torch.ones(2, 2), torch.ones(2, 2))

    def test_clamped_log_stays_finite(self):
        value = dice_ce_loss(column(0., 1.), column(1., 0.))
        self.assertTrue(torch.isfinite(value))
        self.assertAlmostEqual(value.item() - 1., -math.log(1e-7), delta=1e-3)


class TestSoftKL(unittest.TestCase):
    def test_identity(self):
        dist = column(0.3, 0.7)
        self.assertEqual(soft_kl_loss(dist, dist.clone()).item(), 0.)

    def test_single_voxel(self):
        value = soft_kl_loss(column(0.5, 0.5), column(0.25, 0.75)).item()
        self.assertAlmostEqual(value, 0.25*math.log(0.5) + 0.75*math.log(1.5), places=9)
        self.assertAlmostEqual(value, 0.130812, places=6)

    def test_oracle(self):
        rng = np.random.RandomState(5)
        student = random_distribution(rng, (4, 3, 3, 3))
        teacher = random_distribution(rng, (4, 3, 3, 3))
        self.assertLess(abs(soft_kl_loss(student, teacher).item() - kl_oracle(student.numpy(), teacher.numpy())), 1e-6)

    def test_teacher_receives_no_gradient(self):
        student_logits = torch.zeros((2, 1, 1, 1), dtype=torch.float64, requires_grad=True)
        teacher_logits = torch.tensor([1., -1.], dtype=torch.float64).reshape(2, 1, 1, 1).requires_grad_(True)
        loss = soft_kl_loss(torch.softmax(student_logits, 0), torch.softmax(teacher_logits, 0))
        loss.backward()
        self.assertIsNone(teacher_logits.grad)
        self.assertGreater(student_logits.grad.abs().sum().item(), 0.)

    def test_teacher_gradient_when_not_detached(self):
        student_logits = torch.zeros((2, 1, 1, 1), dtype=torch.float64, requires_grad=True)
        teacher_logits = torch.tensor([1., -1.], dtype=torch.float64).reshape(2, 1, 1, 1).requires_grad_(True)
        loss = soft_kl_loss(torch.softmax(student_logits, 0), torch.softmax(teacher_logits, 0),
                            detach_teacher=False)
        loss.backward()
        self.assertGreater(teacher_logits.grad.abs().sum().item(), 0.)


class TestDeepSupervision(unittest.TestCase):
    def setUp(self):
        rng = np.random.RandomState(6)
        self.main = random_distribution(rng, (3, 4, 4, 4))
        self.truth = random_labels(rng, 3, (4, 4, 4))
        self.decoders = [random_distribution(rng, (3, 4, 4, 4)) for _ in range(3)]

    def test_identical_terms(self):
        value = deep_supervision_loss(self.main, [self.main, self.main], self.truth, eta=1.).item()
        self.assertAlmostEqual(value, 3*dice_ce_loss(self.main, self.truth).item(), places=12)

    def test_zero_eta(self):
        value = deep_supervision_loss(self.main, self.decoders, self.truth, eta=0.)
        self.assertTrue(torch.equal(value, dice_ce_loss(self.main, self.truth)))

    def test_recomposition(self):
        value = deep_supervision_loss(self.main, self.decoders, self.truth, eta=0.7).item()
        expected = dice_ce_loss(self.main, self.truth).item() \
            + 0.7*sum(dice_ce_loss(d, self.truth).item() for d in self.decoders)
        self.assertLess(abs(value - expected), 1e-9)

    def test_empty_list_needs_zero_eta(self):
        with self.assertRaises(ContractViolation):
            deep_supervision_loss(self.main, [], self.truth, eta=1.)
        self.assertTrue(torch.equal(deep_supervision_loss(self.main, [], self.truth, eta=0.),
                                    dice_ce_loss(self.main, self.truth)))

    def test_shape_mismatch(self):
        with self.assertRaises(ContractViolation):
            deep_supervision_loss(self.main, [self.main[:, :2]], self.truth)


class TestDualSelfDistillation(unittest.TestCase):
    def setUp(self):
        rng = np.random.RandomState(7)
        shape = (3, 4, 4, 4)
        self.truth = random_labels(rng, 3, (4, 4, 4))
        self.main = random_distribution(rng, shape)
        self.encoder = [random_distribution(rng, shape) for _ in range(2)]
        self.decoder = [random_distribution(rng, shape) for _ in range(2)]

    def test_reduces_to_deep_supervision(self):
        cfg = DsdConfig(eta=1., alpha1=0., alpha2=0.)
        total, _ = dsd_loss(self.main, self.encoder, self.decoder, self.truth, cfg)
        self.assertTrue(torch.equal(total, deep_supervision_loss(self.main, self.decoder, self.truth, eta=1.)))

    def test_reduces_to_dice_ce(self):
        cfg = DsdConfig(eta=0., alpha1=0., alpha2=0.)
        total, breakdown = dsd_loss(self.main, self.encoder, self.decoder, self.truth, cfg)
        self.assertTrue(torch.equal(total, dice_ce_loss(self.main, self.truth)))
        self.assertEqual(breakdown.as_floats()["deep_supervision"], 0.)

    def test_recomposition(self):
        total, breakdown = dsd_loss(self.main, self.encoder, self.decoder, self.truth, DsdConfig())
        expected = dice_ce_loss(self.main, self.truth).item() \
            + sum(dice_ce_loss(d, self.truth).item() for d in self.decoder) \
            + soft_kl_loss(self.encoder[0], self.encoder[1]).item() \
            + soft_kl_loss(self.decoder[1], self.decoder[0]).item()
        self.assertLess(abs(total.item() - expected), 1e-9)
        values = breakdown.as_floats()
        self.assertLess(abs(values["total"] - sum(values[name] for name in
                                                  ("main", "deep_supervision", "encoder_distillation",
                                                   "decoder_distillation"))), 1e-12)
        self.assertTrue(breakdown.is_finite())

    def test_temperature_scaling(self):
        plain = dsd_loss(self.main, self.encoder, self.decoder, self.truth, DsdConfig(tau=3.))[1]
        scaled = dsd_loss(self.main, self.encoder, self.decoder, self.truth,
                          DsdConfig(tau=3., kl_temperature_scaling=True))[1]
        self.assertAlmostEqual(scaled.encoder_distillation.item(), 9*plain.encoder_distillation.item(), places=10)
        self.assertAlmostEqual(scaled.main.item(), plain.main.item(), places=14)

    def test_stage_distributions_split_hard_and_soft(self):
        encoder = [StageDistribution(h, s, None, i + 1, "encoder")
                   for i, (h, s) in enumerate(zip(self.decoder, self.encoder))]
        decoder = [StageDistribution(h, s, None, i + 1, "decoder")
                   for i, (h, s) in enumerate(zip(self.encoder, self.decoder))]
        _, breakdown = dsd_loss(self.main, encoder, decoder, self.truth, DsdConfig())
        supervised = sum(dice_ce_loss(d, self.truth).item() for d in self.encoder)
        self.assertAlmostEqual(breakdown.deep_supervision.item(), supervised, places=10)
        self.assertAlmostEqual(breakdown.decoder_distillation.item(),
                               soft_kl_loss(self.decoder[1], self.decoder[0]).item(), places=10)

    def test_autograd_gradcheck(self):
        rng = np.random.RandomState(3)
        truth = random_labels(rng, 3, (2, 2, 2))
        logits = [torch.from_numpy(rng.normal(size=(3, 2, 2, 2))).requires_grad_(True) for _ in range(3)]

        def two_stage(main, encoder, decoder):
            pairs = [(encoder, "encoder"), (decoder, "decoder")]
            dists = {side: [StageDistribution(torch.softmax(l*s, dim=0), torch.softmax(l*s/3., dim=0), l, i + 1,
                                              side)
                            for i, s in enumerate((1., 0.5))] for l, side in pairs}
            return dsd_loss(torch.softmax(main, dim=0), dists["encoder"], dists["decoder"], truth,
                            DsdConfig(detach_teacher=False))[0]

        self.assertTrue(torch.autograd.gradcheck(two_stage, tuple(logits)))

    def stage_gradients(self, cfg):
        """Gradients of dsd_loss w.r.t. the logits of E_Z and D_1."""
        rng = np.random.RandomState(8)
        logits = {side: [torch.from_numpy(rng.normal(size=(3, 4, 4, 4))).requires_grad_(True) for _ in range(2)]
                  for side in ("encoder", "decoder")}
        dists = {side: [StageDistribution(torch.softmax(l, dim=0), torch.softmax(l/3., dim=0), l, i + 1, side)
                        for i, l in enumerate(stage_logits)]
                 for side, stage_logits in logits.items()}
        total, _ = dsd_loss(self.main, dists["encoder"], dists["decoder"], self.truth, cfg)
        total.backward()
        return logits["encoder"][-1].grad, logits["decoder"][0].grad

    def test_detached_teachers(self):
        encoder_grad, decoder_grad = self.stage_gradients(DsdConfig(detach_teacher=True))
        # E_Z only enters through the encoder KL term
        self.assertTrue(encoder_grad is None or encoder_grad.abs().max().item() == 0.)
        supervised_only = self.stage_gradients(DsdConfig(alpha2=0.))[1]
        self.assertLess((decoder_grad - supervised_only).abs().max().item(), 1e-12)

        encoder_grad, decoder_grad = self.stage_gradients(DsdConfig(detach_teacher=False))
        self.assertGreater(encoder_grad.abs().max().item(), 0.)
        self.assertGreater((decoder_grad - supervised_only).abs().max().item(), 1e-9)

    def test_attached_encoder_teacher_only(self):
        encoder_grad, decoder_grad = self.stage_gradients(DsdConfig(detach_encoder_teacher=False))
        self.assertGreater(encoder_grad.abs().max().item(), 0.)
        supervised_only = self.stage_gradients(DsdConfig(alpha2=0.))[1]
        self.assertLess((decoder_grad - supervised_only).abs().max().item(), 1e-12)

    def test_stage_count_mismatch(self):
        with self.assertRaises(ContractViolation):
            dsd_loss(self.main, self.encoder, self.decoder[:1], self.truth)
        with self.assertRaises(ContractViolation):
            dsd_loss(self.main, [], [], self.truth)


if __name__ == '__main__':
    unittest.main()
