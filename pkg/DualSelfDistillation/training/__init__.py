# -*- coding: utf-8 -*-
from .data import VolumeDataset, make_loader
from .checkpoint import save_checkpoint, load_checkpoint, Checkpoint
from .trainer import Trainer, train, predict
from .evaluation import evaluate, evaluate_predictions, EvaluationResult, load_network
from .ablation import ablate, summarize_runs, directional_check
