# -*- coding: utf-8 -*-
"""Self checks of the losses, heads, metrics and network wiring.

Every check compares the package against an independent reference (loop
oracles, finite differences, brute force distances) or against an exact
identity, and returns a CheckResult. `run_all` is what `verify` on the
command line executes.
"""
import logging
import time

import numpy as np
import torch

from ..config import DsdConfig, ArchConfig, TrainConfig
from ..losses import dice_ce_loss, soft_kl_loss, deep_supervision_loss, dsd_loss
from ..losses.dice_ce import DEFAULT_SMOOTH_EPS
from ..network import BottleneckHead, StageDistribution, build_network, soften
from ..simulation import one_hot
from .gradients import gradient_check
from .metrics import hd95
from .oracles import dice_ce_oracle, kl_oracle, deep_supervision_oracle, dsd_oracle, hd95_oracle

logger = logging.getLogger(__name__)

ORACLE_TOL = 1e-6
GRADIENT_TOL = 1e-4
REDUCTION_TOL = 1e-12
NORMALIZATION_TOL = 1e-5


class CheckResult(object):
    def __init__(self, name, passed, detail="", seconds=0.):
        self.name = name
        self.passed = bool(passed)
        self.detail = detail
        self.seconds = seconds

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "detail": self.detail, "seconds": self.seconds}

    def __repr__(self):
        return "CheckResult(%s, %s, %s)" % (self.name, "pass" if self.passed else "FAIL", self.detail)


def _timed(name, fn, *args, **kwargs):
    start = time.time()
    try:
        passed, detail = fn(*args, **kwargs)
    except Exception as err:
        passed, detail = False, "%s: %s" % (type(err).__name__, err)
    result = CheckResult(name, passed, detail, time.time() - start)
    if result.passed:
        logger.info("check %s passed (%.1fs): %s", name, result.seconds, detail)
    else:
        logger.error("check %s FAILED: %s", name, detail)
    return result


def random_distribution(rng, shape, scale=2.):
    """Normalized double tensor of `shape` (class axis first) from random logits."""
    logits = torch.from_numpy(rng.normal(scale=scale, size=shape))
    return torch.softmax(logits, dim=0)


def random_labels(rng, num_classes, spatial):
    return one_hot(torch.from_numpy(rng.randint(0, num_classes, size=spatial)), num_classes).double()


def check_loss_oracles(num_instances=100, seed=0, impl_smooth_eps=None):
    """Losses against loop oracles on random instances with K <= 4 and at most 4^3 voxels.

    `impl_smooth_eps` replaces the Dice smoothing of the implementation only,
    the oracle always uses the default.
    """
    rng = np.random.RandomState(seed)
    eps = DEFAULT_SMOOTH_EPS
    impl_eps = eps if impl_smooth_eps is None else impl_smooth_eps
    worst = 0.
    for _ in range(num_instances):
        num_classes = rng.randint(2, 5)
        spatial = tuple(rng.randint(1, 5, size=3))
        shape = (num_classes,) + spatial
        truth = random_labels(rng, num_classes, spatial)
        main = random_distribution(rng, shape)
        num_stages = rng.randint(2, 4)
        encoder_soft = [random_distribution(rng, shape) for _ in range(num_stages)]
        decoder_hard = [random_distribution(rng, shape) for _ in range(num_stages)]
        decoder_soft = [random_distribution(rng, shape) for _ in range(num_stages)]
        eta, alpha1, alpha2 = rng.uniform(0, 2, size=3)

        pairs = [(dice_ce_loss(main, truth, impl_eps).item(), dice_ce_oracle(main.numpy(), truth.numpy(), eps)),
                 (soft_kl_loss(encoder_soft[0], encoder_soft[1]).item(),
                  kl_oracle(encoder_soft[0].numpy(), encoder_soft[1].numpy())),
                 (deep_supervision_loss(main, decoder_hard, truth, eta, impl_eps).item(),
                  deep_supervision_oracle(main.numpy(), [d.numpy() for d in decoder_hard], truth.numpy(), eta, eps))]
        cfg = DsdConfig(eta=eta, alpha1=alpha1, alpha2=alpha2, dice_smooth_eps=impl_eps)
        encoder = [StageDistribution(s, s, None, i + 1, "encoder") for i, s in enumerate(encoder_soft)]
        decoder = [StageDistribution(h, s, None, i + 1, "decoder")
                   for i, (h, s) in enumerate(zip(decoder_hard, decoder_soft))]
        total, _ = dsd_loss(main, encoder, decoder, truth, cfg)
        pairs.append((total.item(), dsd_oracle(main.numpy(), [s.numpy() for s in encoder_soft],
                                               [h.numpy() for h in decoder_hard], [s.numpy() for s in decoder_soft],
                                               truth.numpy(), eta, alpha1, alpha2, eps)))
        for value, reference in pairs:
            worst = max(worst, abs(value - reference))
    return worst <= ORACLE_TOL, "max abs deviation %.3g over %d instances" % (worst, num_instances)


def check_gradients(seed=0, spatial=(2, 2, 2), num_classes=3):
    """Autograd against central finite differences for all losses and a bottleneck head."""
    rng = np.random.RandomState(seed)
    shape = (num_classes,) + spatial
    truth = random_labels(rng, num_classes, spatial)

    def leaf():
        return torch.from_numpy(rng.normal(size=shape)).requires_grad_(True)

    main, student, teacher = leaf(), leaf(), leaf()
    decoders = [leaf() for _ in range(3)]
    encoders = [leaf() for _ in range(3)]
    tau = 3.
    cfg = DsdConfig(tau=tau, detach_teacher=False)

    def dsd():
        encoder = [StageDistribution(soften(e, 1.), soften(e, tau), e, i + 1, "encoder") for i, e in enumerate(encoders)]
        decoder = [StageDistribution(soften(d, 1.), soften(d, tau), d, i + 1, "decoder") for i, d in enumerate(decoders)]
        return dsd_loss(soften(main, 1.), encoder, decoder, truth, cfg)[0]

    errors = {"dice_ce": gradient_check(lambda: dice_ce_loss(soften(main, 1.), truth), [main]),
              "soft_kl": gradient_check(lambda: soft_kl_loss(soften(student, tau), soften(teacher, tau),
                                                             detach_teacher=False), [student, teacher]),
              "deep_supervision": gradient_check(lambda: deep_supervision_loss(
                  soften(main, 1.), [soften(d, 1.) for d in decoders], truth), [main] + decoders),
              "dsd": gradient_check(dsd, [main] + encoders + decoders)}

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        head = BottleneckHead(4, num_classes, scale_factor=2, stage_id=2, side="decoder").double()
    # perturb the replicate initialisation so the check sees a generic deconvolution
    with torch.no_grad():
        head.upsample.weight.add_(torch.from_numpy(rng.normal(scale=0.1, size=tuple(head.upsample.weight.shape))))
    feature = torch.from_numpy(rng.normal(size=(1, 4) + tuple(s//2 for s in spatial))).requires_grad_(True)
    weights = torch.from_numpy(rng.normal(size=(1,) + shape))

    def head_loss():
        dist = head(feature, tau=tau)
        return (weights*dist.soft).sum() + (weights*dist.hard).pow(2).sum()

    errors["bottleneck_head"] = gradient_check(head_loss, [feature] + list(head.parameters()))
    worst = max(errors.values())
    detail = ", ".join("%s %.2g" % item for item in errors.items())
    return worst < GRADIENT_TOL, "max relative error: " + detail


def check_loss_reduction(seed=0, num_instances=20, impl_smooth_eps=None):
    """With alpha1 = alpha2 = 0 the full loss equals the deep supervision loss."""
    rng = np.random.RandomState(seed)
    eps = DEFAULT_SMOOTH_EPS if impl_smooth_eps is None else impl_smooth_eps
    worst = 0.
    for _ in range(num_instances):
        num_classes = rng.randint(2, 5)
        spatial = tuple(rng.randint(1, 5, size=3))
        shape = (num_classes,) + spatial
        truth = random_labels(rng, num_classes, spatial)
        main = random_distribution(rng, shape)
        num_stages = rng.randint(2, 4)
        hard = [random_distribution(rng, shape) for _ in range(num_stages)]
        soft = [random_distribution(rng, shape) for _ in range(num_stages)]
        eta = float(rng.uniform(0, 2))
        cfg = DsdConfig(eta=eta, alpha1=0., alpha2=0., dice_smooth_eps=eps)
        encoder = [StageDistribution(h, s, None, i + 1, "encoder") for i, (h, s) in enumerate(zip(hard, soft))]
        decoder = [StageDistribution(h, s, None, i + 1, "decoder") for i, (h, s) in enumerate(zip(hard, soft))]
        total, _ = dsd_loss(main, encoder, decoder, truth, cfg)
        reference = deep_supervision_loss(main, hard, truth, eta, eps)
        worst = max(worst, abs(total.item() - reference.item()))
    return worst <= REDUCTION_TOL, "max abs deviation %.3g over %d instances" % (worst, num_instances)


def _trajectory(cfg, images, labels, num_steps):
    from ..training.trainer import Trainer
    trainer = Trainer(cfg)
    losses = []
    for step in range(num_steps):
        i = step % len(images)
        losses.append(trainer.train_step(images[i:i + 1], labels[i:i + 1])["total"])
    return losses


def check_trajectory_reduction(seed=0, num_steps=10, shape=(8, 8, 8)):
    """DS training and DSD training with zeroed distillation follow the same loss trajectory."""
    from ..simulation import PhantomSpec, generate_phantom
    pairs = [generate_phantom(PhantomSpec(shape=shape, num_classes=3, noise_sigma=0.2, seed=seed + i))
             for i in range(2)]
    images = torch.from_numpy(np.stack([p.image for p in pairs])).double()
    labels = torch.from_numpy(np.stack([p.label for p in pairs]).astype(np.int64))
    arch = ArchConfig(num_stages=2, num_classes=3, base_channels=4)
    deep_supervision = TrainConfig(arch=arch, ablation_mode="DS", seed=seed, precision="float64")
    zeroed = TrainConfig(arch=arch, ablation_mode="custom", seed=seed, precision="float64",
                         dsd=DsdConfig(eta=1., alpha1=0., alpha2=0.))
    first = _trajectory(deep_supervision, images, labels, num_steps)
    second = _trajectory(zeroed, images, labels, num_steps)
    worst = max(abs(a - b) for a, b in zip(first, second))
    return worst <= REDUCTION_TOL, "max step deviation %.3g over %d steps" % (worst, num_steps)


def check_temperature(seed=0):
    """tau = 1 is the plain softmax, argmax is tau invariant, huge tau is uniform, larger tau flattens."""
    rng = np.random.RandomState(seed)
    logits = torch.from_numpy(rng.normal(scale=3., size=(4, 5, 5, 5)))
    plain = torch.softmax(logits, dim=0)
    if not torch.equal(soften(logits, 1.), plain):
        return False, "soften(l, 1) differs from softmax"
    argmax = plain.argmax(dim=0)
    previous_max = None
    for tau in (1., 2., 3., 10.):
        soft = soften(logits, tau)
        if not torch.equal(soft.argmax(dim=0), argmax):
            return False, "argmax changes at tau=%g" % tau
        current_max = soft.max(dim=0).values
        if previous_max is not None and (current_max > previous_max + 1e-15).any():
            return False, "max probability grows at tau=%g" % tau
        previous_max = current_max
    uniform_dev = (soften(logits, 1e6) - 0.25).abs().max().item()
    return uniform_dev < 1e-4, "deviation from uniform at tau=1e6: %.3g" % uniform_dev


def random_mask(rng, shape=(8, 8, 8)):
    return rng.rand(*shape) < rng.uniform(0.02, 0.5)


def check_hd95(num_pairs=200, seed=0, shape=(8, 8, 8)):
    """Accelerated HD95 against the all-pairs oracle, and exact spacing scaling."""
    rng = np.random.RandomState(seed)
    for n in range(num_pairs):
        a = random_mask(rng, shape)
        b = random_mask(rng, shape)
        spacing = tuple(rng.choice([0.5, 0.75, 1., 1.25, 2.], size=3))
        value = hd95(a, b, spacing)
        reference = hd95_oracle(a, b, spacing)
        if value != reference:
            return False, "pair %d: hd95 %r, oracle %r" % (n, value, reference)
        doubled = hd95(a, b, tuple(2*s for s in spacing))
        if value is not None and doubled != 2*value:
            return False, "pair %d: doubling the spacing gives %r instead of %r" % (n, doubled, 2*value)
    return True, "%d random pairs of shape %s agree exactly" % (num_pairs, shape)


def check_stage_distributions(seed=0, spatial=(16, 16, 16), num_classes=3):
    """All 2Z head outputs of a Z=3 network are output shaped and normalized."""
    network = build_network(ArchConfig(num_stages=3, num_classes=num_classes), seed=seed)
    image = torch.from_numpy(np.random.RandomState(seed).normal(size=(1,) + spatial)).float()
    with torch.no_grad():
        output = network(image, tau=3.)
    worst = 0.
    for dist in output.encoder_dists + output.decoder_dists:
        for field in (dist.hard, dist.soft):
            if tuple(field.shape) != (1, num_classes) + spatial:
                return False, "%s %d has shape %s" % (dist.side, dist.stage_id, tuple(field.shape))
            worst = max(worst, (field.sum(dim=1) - 1).abs().max().item())
    count = len(output.encoder_dists) + len(output.decoder_dists)
    return worst <= NORMALIZATION_TOL, "%d distributions, max |sum - 1| = %.3g" % (count, worst)


def check_inference_purity(seed=0, spatial=(16, 16, 16)):
    """Inference runs no head and reproduces the training-time main logits bitwise."""
    network = build_network(ArchConfig(num_stages=3), seed=seed)
    network.eval()
    image = torch.from_numpy(np.random.RandomState(seed).normal(size=(1,) + spatial)).float()
    with torch.no_grad():
        training_logits = network(image, tau=3.).main_logits
        network.reset_head_calls()
        inference_logits = network.infer(image)
    calls = network.head_calls()
    identical = torch.equal(training_logits, inference_logits)
    return calls == 0 and identical, "head calls during inference: %d, logits identical: %s" % (calls, identical)


def run_all(impl_smooth_eps=None, quick=False):
    """Runs every check; `quick` shrinks the random instance counts.

    Returns:
    * list of CheckResult
    """
    scale = 10 if quick else 1
    return [_timed("loss_oracles", check_loss_oracles, num_instances=100//scale, impl_smooth_eps=impl_smooth_eps),
            _timed("gradients", check_gradients),
            _timed("loss_reduction", check_loss_reduction, impl_smooth_eps=impl_smooth_eps),
            _timed("trajectory_reduction", check_trajectory_reduction),
            _timed("temperature", check_temperature),
            _timed("hd95_oracle", check_hd95, num_pairs=200//scale),
            _timed("stage_distributions", check_stage_distributions),
            _timed("inference_purity", check_inference_purity),
            ]
