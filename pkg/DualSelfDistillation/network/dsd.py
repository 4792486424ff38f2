# -*- coding: utf-8 -*-
"""A tap backbone with 2Z bottleneck heads attached for dual self-distillation.

The heads exist during training only. `infer` runs the bare backbone and
never touches a head.
"""
import logging

import torch
import torch.nn as nn

from ..config import ArchConfig
from .backbone import build_backbone, validate_tapset
from .bottleneck import BottleneckHead, soften, ENCODER, DECODER

logger = logging.getLogger(__name__)


class DsdOutput(object):
    """Training-time outputs of DualSelfDistillationNetwork.

    Parameters:
    * main_logits: tensor (B, K, H, W, D)
    * main_pred: softmax of main_logits at tau = 1
    * encoder_dists: list of StageDistribution, E_1 ... E_Z
    * decoder_dists: list of StageDistribution, D_1 ... D_Z
    """
    def __init__(self, main_logits, main_pred, encoder_dists, decoder_dists):
        self.main_logits = main_logits
        self.main_pred = main_pred
        self.encoder_dists = encoder_dists
        self.decoder_dists = decoder_dists


class DualSelfDistillationNetwork(nn.Module):
    """Backbone plus one bottleneck head per encoder and per decoder stage.

    Parameters:
    * backbone: TapBackbone
    * upsample_mode: "deconv" or "trilinear", upsampling inside the heads
    * head_seed: int, seed of the private RNG the heads are initialised from
    """
    def __init__(self, backbone, upsample_mode="deconv", head_seed=1):
        super(DualSelfDistillationNetwork, self).__init__()
        self.backbone = backbone
        self.upsample_mode = upsample_mode
        num_stages = backbone.num_stages
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(head_seed)
            self.encoder_heads = nn.ModuleList(
                [BottleneckHead(backbone.encoder_channels[i], backbone.num_classes, 2**i, upsample_mode, i + 1, ENCODER)
                 for i in range(num_stages)])
            self.decoder_heads = nn.ModuleList(
                [BottleneckHead(backbone.decoder_channels[i], backbone.num_classes, 2**i, upsample_mode, i + 1, DECODER)
                 for i in range(num_stages)])

    @property
    def num_stages(self):
        return self.backbone.num_stages

    @property
    def heads(self):
        return list(self.encoder_heads) + list(self.decoder_heads)

    def head_calls(self):
        """Total number of head evaluations since construction (or the last reset)."""
        return sum(head.calls for head in self.heads)

    def reset_head_calls(self):
        for head in self.heads:
            head.calls = 0

    def head_parameters(self):
        return [p for head in self.heads for p in head.parameters()]

    def forward(self, image, tau=1., detach_taps=False):
        """Training forward pass.

        Parameters:
        * image: tensor (C,H,W,D) or (B,C,H,W,D)
        * tau: float > 0, temperature of the soft head distributions
        * detach_taps: bool, heads see the stage outputs without gradient
                       (the heads then cannot influence the backbone)

        Returns:
        * DsdOutput
        """
        if image.dim() == 4:
            image = image.unsqueeze(0)
        taps = self.backbone.forward_with_taps(image)
        validate_tapset(taps, image.shape[2:], self.backbone.num_classes)
        target_shape = tuple(image.shape[2:])
        encoder_dists = []
        for head, tap in zip(self.encoder_heads, taps.encoder_taps):
            encoder_dists.append(head(tap.detach() if detach_taps else tap, tau=tau, target_shape=target_shape))
        decoder_dists = []
        for head, tap in zip(self.decoder_heads, taps.decoder_taps):
            decoder_dists.append(head(tap.detach() if detach_taps else tap, tau=tau, target_shape=target_shape))
        return DsdOutput(taps.main_logits, soften(taps.main_logits, 1.), encoder_dists, decoder_dists)

    def infer(self, image):
        """Inference path: backbone main logits, no taps, no heads."""
        return self.backbone(image)


def build_network(arch=None, seed=0):
    """Seeded backbone and heads; the backbone parameters do not depend on the heads."""
    arch = arch if arch is not None else ArchConfig()
    backbone = build_backbone(arch, seed=seed)
    network = DualSelfDistillationNetwork(backbone, upsample_mode=arch.upsample_mode, head_seed=seed + 1)
    logger.info("attached %d bottleneck heads (%s upsampling), %d head parameters",
                len(network.heads), arch.upsample_mode, sum(p.numel() for p in network.head_parameters()))
    return network
