# -*- coding: utf-8 -*-
from .bottleneck import FeatureMap, StageDistribution, BottleneckHead, soften, bottleneck_forward
from .backbone import TapSet, TapBackbone, UNet3D, build_backbone, forward_with_taps, validate_tapset
from .dsd import DualSelfDistillationNetwork, DsdOutput, build_network
