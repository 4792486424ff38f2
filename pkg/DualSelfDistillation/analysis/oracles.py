# -*- coding: utf-8 -*-
"""Reference implementations written as plain loops over voxels and classes.

They work on numpy arrays of shape (K, H, W, D) and follow the loss formulas
term by term, so they can be checked against the vectorized torch code.
They are slow and meant for small volumes only.
"""
import math
import itertools

import numpy as np

from .metrics import scaled_distance

NEIGHBOUR_OFFSETS = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))


def _voxels(shape):
    return itertools.product(*[range(n) for n in shape])


def _clamped_log(value, floor):
    return math.log(min(max(value, floor), 1.))


def dice_ce_oracle(pred, truth, smooth_eps=1e-5, prob_clamp_floor=1e-7):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    num_classes = pred.shape[0]
    spatial = pred.shape[1:]
    num_voxels = int(np.prod(spatial))
    fractions = 0.
    for k in range(num_classes):
        overlap = 0.
        truth_sq = 0.
        pred_sq = 0.
        for p in _voxels(spatial):
            overlap += truth[(k,) + p]*pred[(k,) + p]
            truth_sq += truth[(k,) + p]**2
            pred_sq += pred[(k,) + p]**2
        fractions += (2*overlap + smooth_eps)/(truth_sq + pred_sq + smooth_eps)
    dice = 1 - fractions/num_classes
    cross_entropy = 0.
    for p in _voxels(spatial):
        for k in range(num_classes):
            cross_entropy -= truth[(k,) + p]*_clamped_log(pred[(k,) + p], prob_clamp_floor)
    return dice + cross_entropy/num_voxels


def kl_oracle(student, teacher, prob_clamp_floor=1e-7):
    student = np.asarray(student, dtype=np.float64)
    teacher = np.asarray(teacher, dtype=np.float64)
    spatial = student.shape[1:]
    total = 0.
    for p in _voxels(spatial):
        for k in range(student.shape[0]):
            t = teacher[(k,) + p]
            total += t*(_clamped_log(t, prob_clamp_floor) - _clamped_log(student[(k,) + p], prob_clamp_floor))
    return total/int(np.prod(spatial))


def deep_supervision_oracle(main_pred, decoder_preds, truth, eta=1., smooth_eps=1e-5, prob_clamp_floor=1e-7):
    total = dice_ce_oracle(main_pred, truth, smooth_eps, prob_clamp_floor)
    for decoder_pred in decoder_preds:
        total += eta*dice_ce_oracle(decoder_pred, truth, smooth_eps, prob_clamp_floor)
    return total


def dsd_oracle(main_pred, encoder_soft, decoder_hard, decoder_soft, truth, eta=1., alpha1=1., alpha2=1.,
               smooth_eps=1e-5, prob_clamp_floor=1e-7, tau_scale=1.):
    """Loop version of the dual self-distillation loss.

    Parameters:
    * encoder_soft: softened encoder distributions E_1 ... E_Z, E_Z teaches
    * decoder_hard: tau=1 decoder distributions D_1 ... D_Z for the deep supervision sum
    * decoder_soft: softened decoder distributions D_1 ... D_Z, D_1 teaches
    * tau_scale: factor of the distillation terms (tau^2 or 1)
    """
    total = deep_supervision_oracle(main_pred, decoder_hard, truth, eta, smooth_eps, prob_clamp_floor)
    for student in encoder_soft[:-1]:
        total += alpha1*tau_scale*kl_oracle(student, encoder_soft[-1], prob_clamp_floor)
    for student in decoder_soft[1:]:
        total += alpha2*tau_scale*kl_oracle(student, decoder_soft[0], prob_clamp_floor)
    return total


def boundary_oracle(mask):
    """List of boundary voxel coordinates, found by looking at the 6 neighbours of every voxel."""
    mask = np.asarray(mask).astype(bool)
    boundary = []
    for p in _voxels(mask.shape):
        if not mask[p]:
            continue
        for offset in NEIGHBOUR_OFFSETS:
            q = tuple(a + b for a, b in zip(p, offset))
            if any(c < 0 or c >= n for c, n in zip(q, mask.shape)) or not mask[q]:
                boundary.append(p)
                break
    return boundary


def hd95_oracle(pred_mask, truth_mask, spacing=(1., 1., 1.), pooled=False, percentile=95.):
    """All-pairs HD95, None if either mask is empty."""
    spacing = np.asarray(spacing, dtype=np.float64)
    pred_surface = np.array(boundary_oracle(pred_mask), dtype=np.int64).reshape(-1, 3)
    truth_surface = np.array(boundary_oracle(truth_mask), dtype=np.int64).reshape(-1, 3)
    if len(pred_surface) == 0 or len(truth_surface) == 0:
        return None

    def directed(source, target):
        distances = np.empty(len(source))
        for i, point in enumerate(source):
            # one row of the full distance matrix
            distances[i] = scaled_distance(point, target, spacing).min()
        return distances

    forward = directed(pred_surface, truth_surface)
    backward = directed(truth_surface, pred_surface)
    if pooled:
        return float(np.percentile(np.concatenate([forward, backward]), percentile))
    return float(max(np.percentile(forward, percentile), np.percentile(backward, percentile)))
