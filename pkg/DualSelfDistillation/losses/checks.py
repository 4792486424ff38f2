# -*- coding: utf-8 -*-
"""Shape and normalization contracts shared by the loss functions."""
import torch

from ..errors import ContractViolation

NORMALIZATION_TOL = 1e-5


def as_batch(volume, name="volume"):
    """Returns a (B, K, H, W, D) view of a (K, H, W, D) or (B, K, H, W, D) tensor."""
    if not torch.is_tensor(volume):
        raise ContractViolation("%s must be a tensor, got %s" % (name, type(volume).__name__))
    if volume.dim() == 4:
        return volume.unsqueeze(0)
    if volume.dim() == 5:
        return volume
    raise ContractViolation("%s must have shape (K,H,W,D) or (B,K,H,W,D), got %s"
                            % (name, tuple(volume.shape)))


def check_same_shape(a, b, name_a="pred", name_b="truth"):
    if tuple(a.shape) != tuple(b.shape):
        raise ContractViolation("shape mismatch: %s %s vs %s %s"
                                % (name_a, tuple(a.shape), name_b, tuple(b.shape)))


def check_normalized(prob, name="pred", tol=NORMALIZATION_TOL):
    """Raises ContractViolation unless every voxel's channel sum is 1 within `tol`.

    `prob` is batched, channels on axis 1.
    """
    with torch.no_grad():
        if prob.shape[1] < 2:
            raise ContractViolation("%s needs at least 2 class channels, got %d" % (name, prob.shape[1]))
        if not torch.isfinite(prob).all():
            raise ContractViolation("%s contains non-finite values" % name)
        if (prob < -tol).any() or (prob > 1 + tol).any():
            raise ContractViolation("%s has probabilities outside [0, 1]" % name)
        deviation = (prob.sum(dim=1) - 1).abs().max().item()
        if deviation > tol:
            raise ContractViolation("%s is not normalized per voxel (max |sum - 1| = %.3g)" % (name, deviation))
