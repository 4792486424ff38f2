# -*- coding: utf-8 -*-
r"""Self-distillation terms and the combined dual self-distillation loss.

The distillation term of one student/teacher pair is the voxel averaged
Kullback-Leibler divergence with the teacher outside the log ratio

    KL = 1/N sum_p sum_k T_pk log(T_pk / S_pk)

On the encoder side the deepest encoder E_Z teaches E_1 ... E_(Z-1), on the
decoder side the deepest decoder D_1 teaches D_2 ... D_Z. The full loss is

    L = L_DCE(Y) + eta sum_i L_DCE(D_i) + alpha1 sum_i KL(E_i, E_Z) + alpha2 sum_i KL(D_i, D_1)
"""
import torch

from ..config import DsdConfig
from ..errors import ContractViolation
from .checks import as_batch, check_same_shape, check_normalized
from .dice_ce import DEFAULT_CLAMP_FLOOR, deep_supervision_terms, combine_deep_supervision

TERM_NAMES = ("main", "deep_supervision", "encoder_distillation", "decoder_distillation")


def soft_kl_loss(student, teacher, prob_clamp_floor=DEFAULT_CLAMP_FLOOR, detach_teacher=True):
    """Voxel averaged KL(teacher || student) of two normalized distributions.

    Both inputs are expected to be temperature-softened already.

    Parameters:
    * student: tensor (K,H,W,D) or (B,K,H,W,D)
    * teacher: tensor of the same shape
    * prob_clamp_floor: float > 0, clamp of both distributions inside the logs
    * detach_teacher: bool, no gradient flows into `teacher` if True

    Returns:
    * scalar tensor >= 0
    """
    student = as_batch(student, "student")
    teacher = as_batch(teacher, "teacher")
    check_same_shape(student, teacher, "student", "teacher")
    check_normalized(student, "student")
    check_normalized(teacher, "teacher")
    if detach_teacher:
        teacher = teacher.detach()
    log_ratio = (torch.log(teacher.clamp(min=prob_clamp_floor, max=1.))
                 - torch.log(student.clamp(min=prob_clamp_floor, max=1.)))
    return (teacher * log_ratio).sum(dim=1).mean()


def _hard(dist):
    return getattr(dist, "hard", dist)


def _soft(dist):
    return getattr(dist, "soft", dist)


class LossBreakdown(object):
    """Total loss and its four weighted contributions (all scalar tensors).

    The raw, unweighted sums are kept in `raw` for diagnostics.
    """
    def __init__(self, total, main, deep_supervision, encoder_distillation, decoder_distillation, raw=None):
        self.total = total
        self.main = main
        self.deep_supervision = deep_supervision
        self.encoder_distillation = encoder_distillation
        self.decoder_distillation = decoder_distillation
        self.raw = raw or {}

    def terms(self):
        return {name: getattr(self, name) for name in TERM_NAMES}

    def as_floats(self):
        """Plain float values of the total and of the four terms."""
        values = {name: float(term.detach().item()) for name, term in self.terms().items()}
        values["total"] = float(self.total.detach().item())
        return values

    def is_finite(self):
        return all(bool(torch.isfinite(t.detach()).all()) for t in list(self.terms().values()) + [self.total])


def distillation_sums(encoder_soft, decoder_soft, prob_clamp_floor=DEFAULT_CLAMP_FLOOR, detach_teacher=True,
                      detach_encoder_teacher=None):
    """Unweighted encoder and decoder distillation sums.

    Parameters:
    * encoder_soft: list of distributions ordered shallow to deep, the last one is the teacher
    * decoder_soft: list of distributions ordered deep to shallow, the first one is the teacher
    * detach_teacher: bool, stop gradients into both teachers
    * detach_encoder_teacher: bool or None, overrides detach_teacher for the encoder teacher
    """
    if detach_encoder_teacher is None:
        detach_encoder_teacher = detach_teacher
    encoder_teacher = encoder_soft[-1]
    decoder_teacher = decoder_soft[0]
    encoder_sum = None
    for student in encoder_soft[:-1]:
        term = soft_kl_loss(student, encoder_teacher, prob_clamp_floor, detach_encoder_teacher)
        encoder_sum = term if encoder_sum is None else encoder_sum + term
    decoder_sum = None
    for student in decoder_soft[1:]:
        term = soft_kl_loss(student, decoder_teacher, prob_clamp_floor, detach_teacher)
        decoder_sum = term if decoder_sum is None else decoder_sum + term
    return encoder_sum, decoder_sum


def dsd_loss(main_pred, encoder_dists, decoder_dists, truth, cfg=None):
    """Dual self-distillation loss.

    Parameters:
    * main_pred: probability volume Y of the network output
    * encoder_dists: list of Z encoder distributions, E_1 (shallowest) ... E_Z (deepest)
    * decoder_dists: list of Z decoder distributions, D_1 (deepest, full resolution) ... D_Z
    * truth: one-hot labels
    * cfg: DsdConfig

    The distributions are either StageDistribution objects (their `hard` field
    feeds the deep supervision sum, their `soft` field the distillation terms)
    or plain probability tensors used for both.

    Returns:
    * (total, LossBreakdown)
    """
    cfg = cfg if cfg is not None else DsdConfig()
    encoder_dists = list(encoder_dists)
    decoder_dists = list(decoder_dists)
    num_stages = len(encoder_dists)
    if num_stages == 0:
        raise ContractViolation("dsd_loss needs at least one encoder and one decoder distribution")
    if len(decoder_dists) != num_stages:
        raise ContractViolation("got %d encoder but %d decoder distributions, both must equal Z"
                                % (num_stages, len(decoder_dists)))
    main_batch = as_batch(main_pred, "main_pred")
    for side, dists in (("encoder", encoder_dists), ("decoder", decoder_dists)):
        for i, dist in enumerate(dists):
            for field in (_hard(dist), _soft(dist)):
                check_same_shape(as_batch(field, "%s_dists[%d]" % (side, i)), main_batch,
                                 "%s_dists[%d]" % (side, i), "main_pred")

    supervised = [_soft(d) if cfg.supervise_softened else _hard(d) for d in decoder_dists]
    main_term, auxiliary = deep_supervision_terms(main_pred, supervised, truth,
                                                  cfg.dice_smooth_eps, cfg.prob_clamp_floor)
    encoder_sum, decoder_sum = distillation_sums([_soft(d) for d in encoder_dists],
                                                 [_soft(d) for d in decoder_dists],
                                                 cfg.prob_clamp_floor, cfg.detach_teacher,
                                                 cfg.encoder_teacher_detached)
    zero = torch.zeros((), dtype=main_term.dtype, device=main_term.device)
    encoder_sum = zero if encoder_sum is None else encoder_sum
    decoder_sum = zero if decoder_sum is None else decoder_sum
    scale = cfg.tau**2 if cfg.kl_temperature_scaling else 1.

    total = combine_deep_supervision(main_term, auxiliary, cfg.eta)
    deep_supervision = cfg.eta * auxiliary if cfg.eta != 0 else zero
    encoder_distillation = zero
    decoder_distillation = zero
    if cfg.alpha1 != 0:
        encoder_distillation = (cfg.alpha1 * scale) * encoder_sum
        total = total + encoder_distillation
    if cfg.alpha2 != 0:
        decoder_distillation = (cfg.alpha2 * scale) * decoder_sum
        total = total + decoder_distillation

    raw = {"deep_supervision_sum": auxiliary.detach(),
           "encoder_kl_sum": encoder_sum.detach(),
           "decoder_kl_sum": decoder_sum.detach()}
    breakdown = LossBreakdown(total, main_term, deep_supervision, encoder_distillation, decoder_distillation, raw)
    return total, breakdown
