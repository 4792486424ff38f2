# -*- coding: utf-8 -*-
r"""Dice cross-entropy loss and the deep supervision sum built from it.

    L_DCE(Y) = 1 - 1/K sum_k (2 sum_p G_pk Y_pk + eps) / (sum_p G_pk^2 + sum_p Y_pk^2 + eps)
               - 1/N sum_p sum_k G_pk log(max(Y_pk, floor))

With eps = 0 the Dice part equals 1 - 2/K sum_k sum_p G Y / (sum_p G^2 + sum_p Y^2).
For batched input the Dice part is computed per sample and averaged over the
batch while the cross-entropy part is averaged over all voxels of the batch.
"""
import torch

from ..errors import ContractViolation
from .checks import as_batch, check_same_shape, check_normalized

DEFAULT_SMOOTH_EPS = 1e-5
DEFAULT_CLAMP_FLOOR = 1e-7


def dice_term(pred, truth, smooth_eps=DEFAULT_SMOOTH_EPS):
    """Dice part of L_DCE for batched, already validated tensors."""
    spatial = tuple(range(2, pred.dim()))
    overlap = (truth * pred).sum(dim=spatial)
    denominator = (truth * truth).sum(dim=spatial) + (pred * pred).sum(dim=spatial)
    fraction = (2 * overlap + smooth_eps) / (denominator + smooth_eps)
    return 1 - fraction.mean(dim=1).mean()


def cross_entropy_term(pred, truth, prob_clamp_floor=DEFAULT_CLAMP_FLOOR):
    """Cross-entropy part of L_DCE for batched, already validated tensors."""
    log_pred = torch.log(pred.clamp(min=prob_clamp_floor, max=1.))
    return -(truth * log_pred).sum(dim=1).mean()


def dice_ce_loss(pred, truth, smooth_eps=DEFAULT_SMOOTH_EPS, prob_clamp_floor=DEFAULT_CLAMP_FLOOR):
    """Dice cross-entropy loss of a probability volume against one-hot labels.

    Parameters:
    * pred: tensor (K,H,W,D) or (B,K,H,W,D), per-voxel class probabilities
    * truth: tensor of the same shape, one-hot ground truth
    * smooth_eps: float >= 0, added to numerator and denominator of every class fraction
    * prob_clamp_floor: float > 0, probabilities are clamped to [floor, 1] inside the log

    Returns:
    * scalar tensor
    """
    if smooth_eps < 0:
        raise ContractViolation("smooth_eps must be >= 0, got %r" % smooth_eps)
    pred = as_batch(pred, "pred")
    truth = as_batch(truth, "truth")
    check_same_shape(pred, truth)
    check_normalized(pred, "pred")
    truth = truth.to(pred.dtype)
    return dice_term(pred, truth, smooth_eps) + cross_entropy_term(pred, truth, prob_clamp_floor)


def deep_supervision_terms(main_pred, decoder_preds, truth, smooth_eps=DEFAULT_SMOOTH_EPS,
                           prob_clamp_floor=DEFAULT_CLAMP_FLOOR):
    """Returns (L_DCE(main), sum_i L_DCE(D_i)); the sum is None for an empty list."""
    main_shape = tuple(as_batch(main_pred, "main_pred").shape)
    for i, decoder_pred in enumerate(decoder_preds):
        if tuple(as_batch(decoder_pred, "decoder_preds[%d]" % i).shape) != main_shape:
            raise ContractViolation("decoder_preds[%d] has shape %s, expected %s"
                                    % (i, tuple(decoder_pred.shape), main_shape))
    main_term = dice_ce_loss(main_pred, truth, smooth_eps, prob_clamp_floor)
    auxiliary = None
    for decoder_pred in decoder_preds:
        term = dice_ce_loss(decoder_pred, truth, smooth_eps, prob_clamp_floor)
        auxiliary = term if auxiliary is None else auxiliary + term
    return main_term, auxiliary


def combine_deep_supervision(main_term, auxiliary, eta):
    """L_DCE(Y) + eta * sum_i L_DCE(D_i); a zero eta leaves the main term untouched."""
    if eta == 0:
        return main_term
    return main_term + eta * auxiliary


def deep_supervision_loss(main_pred, decoder_preds, truth, eta=1., smooth_eps=DEFAULT_SMOOTH_EPS,
                          prob_clamp_floor=DEFAULT_CLAMP_FLOOR):
    """Main Dice-CE plus `eta` times the Dice-CE of every decoder distribution.

    Parameters:
    * main_pred: probability volume of the network output
    * decoder_preds: list of probability volumes D_1 ... D_Z, shaped like main_pred
    * truth: one-hot labels
    * eta: float >= 0; an empty list is only allowed with eta == 0

    Returns:
    * scalar tensor
    """
    if eta < 0:
        raise ContractViolation("eta must be >= 0, got %r" % eta)
    decoder_preds = list(decoder_preds)
    if not decoder_preds and eta != 0:
        raise ContractViolation("deep supervision with eta=%g needs at least one decoder distribution" % eta)
    main_term, auxiliary = deep_supervision_terms(main_pred, decoder_preds, truth, smooth_eps, prob_clamp_floor)
    return combine_deep_supervision(main_term, auxiliary, eta)
