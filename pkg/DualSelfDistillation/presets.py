# -*- coding: utf-8 -*-
"""Ready-made loss settings and phantom families.

Loss presets follow the ablation grid: deep supervision alone (DS), with
encoder-side (SDE) or decoder-side (SDD) self-distillation, and both (DSD).
Presets with encoder-side distillation let gradients reach the deepest encoder
head E_Z, the only teacher that deep supervision does not train.
"""
from .config import DsdConfig, ArchConfig, TrainConfig, ABLATION_COEFFICIENTS
from .errors import ConfigError
from .simulation.phantom import PhantomSpec


class Baseline(DsdConfig):
    def __init__(self, tau=3.):
        super(Baseline, self).__init__(*ABLATION_COEFFICIENTS["baseline"], tau=tau)


class DeepSupervision(DsdConfig):
    def __init__(self, tau=3.):
        super(DeepSupervision, self).__init__(*ABLATION_COEFFICIENTS["DS"], tau=tau)


class EncoderSelfDistillation(DsdConfig):
    def __init__(self, tau=3.):
        super(EncoderSelfDistillation, self).__init__(*ABLATION_COEFFICIENTS["SDE"], tau=tau,
                                                      detach_encoder_teacher=False)


class DecoderSelfDistillation(DsdConfig):
    def __init__(self, tau=3.):
        super(DecoderSelfDistillation, self).__init__(*ABLATION_COEFFICIENTS["SDD"], tau=tau)


class DualSelfDistillation(DsdConfig):
    def __init__(self, tau=3.):
        super(DualSelfDistillation, self).__init__(*ABLATION_COEFFICIENTS["DSD"], tau=tau,
                                                   detach_encoder_teacher=False)


LOSS_PRESETS = {"baseline": Baseline,
                "DS": DeepSupervision,
                "SDE": EncoderSelfDistillation,
                "SDD": DecoderSelfDistillation,
                "DSD": DualSelfDistillation,
                }


def loss_preset(mode, tau=3.):
    """DsdConfig of an ablation mode name."""
    if mode not in LOSS_PRESETS:
        raise ConfigError("unknown preset %r, expected one of %s" % (mode, ", ".join(LOSS_PRESETS)),
                          field="ablation_mode")
    return LOSS_PRESETS[mode](tau=tau)


class SanityPhantom(PhantomSpec):
    """One bright ellipsoid on a dark background, K = 2, 32^3, nearly separable by intensity."""
    def __init__(self, seed=0):
        super(SanityPhantom, self).__init__(shape=(32, 32, 32),
                                            num_classes=2,
                                            num_structures=1,
                                            intensity_means=(0., 1.),
                                            noise_sigma=0.1,
                                            seed=seed)


class AcceptancePhantom(PhantomSpec):
    """Four nested classes at 32^3 with enough noise that single voxels are ambiguous."""
    def __init__(self, seed=0):
        super(AcceptancePhantom, self).__init__(shape=(32, 32, 32),
                                                num_classes=4,
                                                num_structures=1,
                                                intensity_means=(0., 0.35, 0.65, 1.),
                                                noise_sigma=0.25,
                                                seed=seed)


# train/val/test sample counts of the two phantom sets
SANITY_SPLIT = (12, 4, 4)
ACCEPTANCE_SPLIT = (20, 6, 6)


def sanity_phantom(seed=0):
    return SanityPhantom(seed)


def acceptance_phantom(seed=0):
    return AcceptancePhantom(seed)


def acceptance_config(manifest_path, output_dir="runs", epochs=30, ablation_mode="DSD", seed=0):
    """TrainConfig of the desk-scale ablation on the acceptance phantom set."""
    return TrainConfig(dsd=DsdConfig(),
                       arch=ArchConfig(num_stages=3, in_channels=1, num_classes=4, base_channels=8),
                       ablation_mode=ablation_mode,
                       epochs=epochs,
                       batch_size=2,
                       seed=seed,
                       manifest_path=manifest_path,
                       output_dir=output_dir)
