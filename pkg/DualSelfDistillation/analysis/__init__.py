# -*- coding: utf-8 -*-
from .metrics import (dice_score, hd95, hausdorff_distance, boundary_voxels, evaluate_segmentation,
                      MetricsReport, ClassMetrics, metrics_frame, summarize)
from .gradients import gradient_check, finite_difference_gradient, max_relative_error
