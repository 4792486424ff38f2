# -*- coding: utf-8 -*-
"""Bottleneck heads turning a stage feature map into an output shaped distribution.

A head has three layers:
    1. a kernel-size-1 convolution mapping the K' stage channels to K classes,
    2. an upsampling layer to the output resolution (transposed convolution with
       kernel = stride = scale factor, or parameter free trilinear interpolation),
    3. a temperature softmax.
The softmax is evaluated twice on the same logits, at tau=1 for deep
supervision and at the distillation temperature for the KL terms.
"""
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ContractViolation

ENCODER = "encoder"
DECODER = "decoder"


class FeatureMap(object):
    """A stage output of a backbone.

    Parameters:
    * data: tensor (K', H', W', D') or (B, K', H', W', D')
    * stage_id: int, 1-based stage index
    * side: "encoder" or "decoder"
    """
    def __init__(self, data, stage_id, side):
        if side not in (ENCODER, DECODER):
            raise ContractViolation("side must be 'encoder' or 'decoder', got %r" % (side,))
        if data.dim() not in (4, 5) or min(data.shape) < 1:
            raise ContractViolation("feature map must have shape (K',H',W',D') or (B,K',H',W',D'), got %s"
                                    % (tuple(data.shape),))
        self.data = data
        self.stage_id = int(stage_id)
        self.side = side

    @property
    def channels(self):
        return self.data.shape[-4]

    @property
    def spatial_shape(self):
        return tuple(self.data.shape[-3:])

    def detach(self):
        return FeatureMap(self.data.detach(), self.stage_id, self.side)


class StageDistribution(object):
    """Output of a bottleneck head.

    Parameters:
    * hard: probability tensor at tau = 1
    * soft: probability tensor at the distillation temperature
    * logits: the shared logits both were computed from
    * stage_id: int
    * side: "encoder" or "decoder"
    """
    def __init__(self, hard, soft, logits, stage_id, side):
        self.hard = hard
        self.soft = soft
        self.logits = logits
        self.stage_id = stage_id
        self.side = side

    @property
    def shape(self):
        return tuple(self.hard.shape)


def soften(logits, tau, dim=None):
    """Temperature softmax exp(L/tau) / sum_j exp(L_j/tau) over the class axis.

    Parameters:
    * logits: tensor (K,H,W,D) or (B,K,H,W,D)
    * tau: float > 0
    * dim: class axis, defaults to 0 for unbatched and 1 for batched input
    """
    if not tau > 0:
        raise ContractViolation("temperature must be > 0, got %r" % (tau,))
    if dim is None:
        dim = 0 if logits.dim() == 4 else 1
    if tau != 1:
        logits = logits / tau
    # torch.softmax subtracts the per-voxel maximum before exponentiating
    return torch.softmax(logits, dim=dim)


def scale_factor_between(source_shape, target_shape):
    """Integer per-axis factor mapping `source_shape` onto `target_shape`."""
    source_shape = tuple(int(s) for s in source_shape)
    target_shape = tuple(int(s) for s in target_shape)
    if len(source_shape) != 3 or len(target_shape) != 3:
        raise ContractViolation("expected 3 spatial axes, got %s -> %s" % (source_shape, target_shape))
    if any(t % s != 0 or t < s for s, t in zip(source_shape, target_shape)):
        raise ContractViolation("target shape %s is not an integer multiple of %s" % (target_shape, source_shape))
    return tuple(t // s for s, t in zip(source_shape, target_shape))


class BottleneckHead(nn.Module):
    """Channel projection, upsampling and temperature softmax for one stage.

    Parameters:
    * in_channels: int, channels K' of the stage feature map
    * num_classes: int, number of output classes K
    * scale_factor: int or 3-tuple of ints, output resolution / stage resolution
    * upsample_mode: "deconv" (learned transposed convolution) or "trilinear"
    * stage_id, side: bookkeeping copied into the produced StageDistribution
    """
    def __init__(self, in_channels, num_classes, scale_factor=1, upsample_mode="deconv", stage_id=1, side=ENCODER):
        super(BottleneckHead, self).__init__()
        if isinstance(scale_factor, int):
            scale_factor = (scale_factor,)*3
        scale_factor = tuple(int(s) for s in scale_factor)
        if len(scale_factor) != 3 or min(scale_factor) < 1:
            raise ContractViolation("scale factor must be 3 positive integers, got %s" % (scale_factor,))
        if upsample_mode not in ("deconv", "trilinear"):
            raise ContractViolation("unknown upsample mode %r" % (upsample_mode,))
        self.in_channels = in_channels
        self.num_classes = num_classes
        self.scale_factor = scale_factor
        self.upsample_mode = upsample_mode
        self.stage_id = stage_id
        self.side = side
        self.calls = 0

        self.project = nn.Conv3d(in_channels, num_classes, kernel_size=1)
        self.upsample = None
        if upsample_mode == "deconv":
            self.upsample = nn.ConvTranspose3d(num_classes, num_classes, kernel_size=scale_factor,
                                               stride=scale_factor, bias=False)
        self.reset_parameters()

    def reset_parameters(self):
        nn.init.normal_(self.project.weight, mean=0., std=1e-2)
        nn.init.zeros_(self.project.bias)
        if self.upsample is not None:
            # every input voxel is copied into its scale block, i.e. replicate upsampling
            with torch.no_grad():
                self.upsample.weight.zero_()
                for c in range(self.num_classes):
                    self.upsample.weight[c, c] = 1.

    def project_channels(self, features):
        """Kernel-size-1 convolution from K' to K channels (batched tensor in, batched out)."""
        if features.shape[1] != self.in_channels:
            raise ContractViolation("head expects %d channels, got %d" % (self.in_channels, features.shape[1]))
        return self.project(features)

    def upsample_to_output(self, projected, target_shape=None):
        """Upsamples projected features (B, K, H', W', D') to logits (B, K, H, W, D)."""
        source_shape = tuple(projected.shape[2:])
        if target_shape is None:
            target_shape = tuple(s*f for s, f in zip(source_shape, self.scale_factor))
        scale = scale_factor_between(source_shape, target_shape)
        if self.upsample_mode == "deconv":
            if scale != self.scale_factor:
                raise ContractViolation("head was built for scale %s but %s -> %s needs %s"
                                        % (self.scale_factor, source_shape, tuple(target_shape), scale))
            return self.upsample(projected)
        if scale == (1, 1, 1):
            return projected
        return F.interpolate(projected, size=tuple(target_shape), mode="trilinear", align_corners=False)

    def forward(self, feature, tau=1., target_shape=None):
        """Runs the three layers on a FeatureMap (or a bare tensor).

        Returns:
        * StageDistribution with tensors shaped like the input batch layout
        """
        self.calls += 1
        data = feature.data if isinstance(feature, FeatureMap) else feature
        unbatched = data.dim() == 4
        if unbatched:
            data = data.unsqueeze(0)
        logits = self.upsample_to_output(self.project_channels(data), target_shape)
        hard = soften(logits, 1.)
        soft = hard if tau == 1 else soften(logits, tau)
        if unbatched:
            logits, hard, soft = logits[0], hard[0], soft[0]
        return StageDistribution(hard, soft, logits, self.stage_id, self.side)


def bottleneck_forward(head, feature, target_shape=None, tau=1.):
    """project_channels -> upsample_to_output -> soften, see BottleneckHead.forward."""
    return head(feature, tau=tau, target_shape=target_shape)
