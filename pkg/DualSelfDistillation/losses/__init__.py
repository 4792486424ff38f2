# -*- coding: utf-8 -*-
from .dice_ce import dice_ce_loss, deep_supervision_loss
from .distillation import soft_kl_loss, dsd_loss, LossBreakdown, TERM_NAMES
