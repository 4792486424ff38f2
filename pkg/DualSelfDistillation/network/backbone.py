# -*- coding: utf-8 -*-
"""A small 3D U-shaped network exposing its stage outputs ("taps").

Stage layout for Z stages (resolution of stage i is input / 2^(i-1)):

    encoder 1 --------------------------------------------> decoder 1 -> main logits
       encoder 2 ----------------------------------> decoder 2
          ...                                    ...
             encoder Z ------------------> decoder Z

Encoder i > 1 starts with a stride-2 convolution. Decoder Z works on the
encoder Z output alone, decoder i < Z concatenates the upsampled decoder i+1
output with the encoder i output. Every tap is the final post-activation
feature map of its stage.

Any U-shaped network can take part in dual self-distillation by subclassing
`TapBackbone` and returning a `TapSet` with the same ordering and
divisibility guarantees, see `validate_tapset`.
"""
import logging

import torch
import torch.nn as nn

from ..config import ArchConfig
from ..errors import ContractViolation
from .bottleneck import FeatureMap, ENCODER, DECODER

logger = logging.getLogger(__name__)


class TapSet(object):
    """Stage outputs of one forward pass.

    Parameters:
    * encoder_taps: list of Z FeatureMaps, index 0 = encoder 1 (shallowest, full
                    resolution) ... index Z-1 = encoder Z (deepest)
    * decoder_taps: list of Z FeatureMaps, index 0 = decoder 1 (top of the expanding
                    path, full resolution, the teacher) ... index Z-1 = decoder Z (coarsest)
    * main_logits: tensor (B, K, H, W, D)
    """
    def __init__(self, encoder_taps, decoder_taps, main_logits):
        self.encoder_taps = list(encoder_taps)
        self.decoder_taps = list(decoder_taps)
        self.main_logits = main_logits

    @property
    def num_stages(self):
        return len(self.encoder_taps)


class TapBackbone(nn.Module):
    """Interface every backbone has to implement to receive bottleneck heads.

    Subclasses set `num_stages`, `num_classes`, `encoder_channels` and
    `decoder_channels` (lists ordered like the taps) and implement
    `forward_with_taps(image) -> TapSet`. `forward(image)` must return the
    main logits only and must not depend on whether taps are collected.
    """
    num_stages = None
    num_classes = None
    encoder_channels = None
    decoder_channels = None

    def forward_with_taps(self, image):
        raise NotImplementedError

    def forward(self, image):
        return self.forward_with_taps(image).main_logits

    def num_parameters(self):
        return sum(p.numel() for p in self.parameters())


def validate_tapset(tapset, input_shape, num_classes=None):
    """Checks the ordering and divisibility guarantees of a TapSet.

    Parameters:
    * tapset: TapSet
    * input_shape: spatial shape (H, W, D) of the image fed to the backbone
    * num_classes: int, expected channels of the main logits

    Returns:
    * list of per-stage upsampling factors (encoder factors, decoder factors)
    """
    input_shape = tuple(int(s) for s in input_shape)
    num_stages = len(tapset.encoder_taps)
    if num_stages < 2 or len(tapset.decoder_taps) != num_stages:
        raise ContractViolation("a TapSet needs Z >= 2 encoder taps and as many decoder taps, got %d and %d"
                                % (num_stages, len(tapset.decoder_taps)))
    if tuple(tapset.main_logits.shape[2:]) != input_shape:
        raise ContractViolation("main logits have spatial shape %s, expected %s"
                                % (tuple(tapset.main_logits.shape[2:]), input_shape))
    if num_classes is not None and tapset.main_logits.shape[1] != num_classes:
        raise ContractViolation("main logits have %d channels, expected %d" % (tapset.main_logits.shape[1], num_classes))
    factors = {ENCODER: [], DECODER: []}
    for side, taps in ((ENCODER, tapset.encoder_taps), (DECODER, tapset.decoder_taps)):
        for i, tap in enumerate(taps):
            expected = tuple(s // 2**i for s in input_shape)
            if tap.side != side or tap.stage_id != i + 1:
                raise ContractViolation("%s tap %d is labelled %s %d" % (side, i + 1, tap.side, tap.stage_id))
            if tap.spatial_shape != expected:
                raise ContractViolation("%s tap %d has spatial shape %s, expected %s"
                                        % (side, i + 1, tap.spatial_shape, expected))
            factors[side].append(tuple(s // t for s, t in zip(input_shape, expected)))
    return factors[ENCODER], factors[DECODER]


def _norm(kind, channels):
    if kind == "instance":
        return nn.InstanceNorm3d(channels, affine=True)
    return nn.BatchNorm3d(channels)


def _activation(kind):
    if kind == "leaky-relu":
        return nn.LeakyReLU(negative_slope=0.01)
    return nn.ReLU()


class ConvBlock(nn.Sequential):
    """Two conv-norm-activation layers; the first one optionally with stride 2."""
    def __init__(self, in_channels, out_channels, norm_kind="instance", activation="relu", stride=1):
        super(ConvBlock, self).__init__(
            nn.Conv3d(in_channels, out_channels, kernel_size=3, stride=stride, padding=1),
            _norm(norm_kind, out_channels),
            _activation(activation),
            nn.Conv3d(out_channels, out_channels, kernel_size=3, padding=1),
            _norm(norm_kind, out_channels),
            _activation(activation),
        )


class UNet3D(TapBackbone):
    """Canonical 3D U-Net with Z stages, see module docstring.

    Parameters:
    * arch: ArchConfig
    """
    def __init__(self, arch=None):
        super(UNet3D, self).__init__()
        self.arch = arch if arch is not None else ArchConfig()
        widths = self.arch.encoder_channels
        self.num_stages = self.arch.num_stages
        self.num_classes = self.arch.num_classes
        self.encoder_channels = list(widths)
        self.decoder_channels = list(widths)

        self.encoders = nn.ModuleList()
        in_channels = self.arch.in_channels
        for i, width in enumerate(widths):
            self.encoders.append(ConvBlock(in_channels, width, self.arch.norm_kind, self.arch.activation,
                                           stride=1 if i == 0 else 2))
            in_channels = width

        # decoders[i] is decoder i+1; ups[i] brings decoder i+2 up to the resolution of decoder i+1
        self.decoders = nn.ModuleList()
        self.ups = nn.ModuleList()
        for i, width in enumerate(widths):
            if i == self.num_stages - 1:
                self.decoders.append(ConvBlock(width, width, self.arch.norm_kind, self.arch.activation))
            else:
                self.ups.append(nn.ConvTranspose3d(widths[i + 1], width, kernel_size=2, stride=2))
                # upsampled decoder output and encoder skip are concatenated
                self.decoders.append(ConvBlock(2*width, width, self.arch.norm_kind, self.arch.activation))
        self.head = nn.Conv3d(widths[0], self.num_classes, kernel_size=1)

    def _check_input(self, image):
        if image.dim() == 4:
            image = image.unsqueeze(0)
        if image.dim() != 5:
            raise ContractViolation("image must have shape (C,H,W,D) or (B,C,H,W,D), got %s" % (tuple(image.shape),))
        if image.shape[1] != self.arch.in_channels:
            raise ContractViolation("image has %d channels, backbone expects %d" % (image.shape[1], self.arch.in_channels))
        self.arch.check_spatial_shape(image.shape[2:])
        return image

    def _run(self, image, collect):
        image = self._check_input(image)
        encoder_outputs = []
        x = image
        for encoder in self.encoders:
            x = encoder(x)
            encoder_outputs.append(x)

        decoder_outputs = [None]*self.num_stages
        x = self.decoders[-1](encoder_outputs[-1])
        decoder_outputs[-1] = x
        for i in reversed(range(self.num_stages - 1)):
            x = self.decoders[i](torch.cat([self.ups[i](x), encoder_outputs[i]], dim=1))
            decoder_outputs[i] = x
        logits = self.head(decoder_outputs[0])
        if not collect:
            return logits
        encoder_taps = [FeatureMap(f, i + 1, ENCODER) for i, f in enumerate(encoder_outputs)]
        decoder_taps = [FeatureMap(f, i + 1, DECODER) for i, f in enumerate(decoder_outputs)]
        return TapSet(encoder_taps, decoder_taps, logits)

    def forward_with_taps(self, image):
        return self._run(image, collect=True)

    def forward(self, image):
        """Inference path: main logits only."""
        return self._run(image, collect=False)


def build_backbone(arch=None, seed=0):
    """Builds a UNet3D with parameters drawn from a private RNG seeded with `seed`."""
    arch = arch if arch is not None else ArchConfig()
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        backbone = UNet3D(arch)
    logger.info("built UNet3D with %d stages, widths %s, %d parameters",
                arch.num_stages, arch.encoder_channels, backbone.num_parameters())
    return backbone


def forward_with_taps(backbone, image, inference=False):
    """TapSet of `backbone` on `image`, or only the main logits if `inference`."""
    if inference:
        return backbone(image)
    return backbone.forward_with_taps(image)
