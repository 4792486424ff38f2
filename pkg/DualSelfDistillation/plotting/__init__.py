# -*- coding: utf-8 -*-
from .curves import plot_training_curves
from .ablation import plot_ablation
from .slices import plot_slice_comparison
