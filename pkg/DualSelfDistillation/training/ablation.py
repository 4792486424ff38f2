# -*- coding: utf-8 -*-
"""Paired comparison of ablation modes over several seeds.

Every (mode, seed) run shares all settings except the loss coefficients, so
differences between rows are attributable to the loss terms alone.
"""
import logging
import os

import numpy as np
import pandas as pd

from ..config import ABLATION_MODES
from ..errors import ContractViolation
from ..plotting import plot_ablation
from .trainer import train
from .evaluation import evaluate

logger = logging.getLogger(__name__)

METRICS = ("val_dice", "val_hd95", "test_dice", "test_hd95")


def summarize_runs(runs, modes):
    """Table with one row per mode in `modes` order: mean and std of every metric plus win counts.

    A seed's win goes to the mode with the highest test Dice; tied modes all win.
    """
    rows = []
    for mode in modes:
        group = runs[runs["mode"] == mode]
        row = {"mode": mode, "runs": int(len(group))}
        for metric in METRICS:
            values = pd.to_numeric(group[metric], errors="coerce").dropna()
            row[metric + "_mean"] = float(values.mean()) if len(values) else np.nan
            row[metric + "_std"] = float(values.std(ddof=0)) if len(values) else np.nan
        rows.append(row)
    table = pd.DataFrame(rows)
    wins = dict.fromkeys(modes, 0)
    for _, seed_runs in runs.groupby("seed", sort=True):
        scores = pd.to_numeric(seed_runs["test_dice"], errors="coerce")
        if scores.isna().all():
            continue
        best = scores.max()
        for mode in seed_runs.loc[scores == best, "mode"]:
            wins[mode] += 1
    table["wins"] = [wins[mode] for mode in modes]
    return table


def directional_check(table, floor=0.70, tolerance=0.005, reference="DS", candidate="DSD"):
    """Every mode reaches `floor` mean test Dice and `candidate` stays within `tolerance` below `reference`.

    Parameters:
    * table: DataFrame of summarize_runs
    * floor: minimum mean test Dice of every mode
    * tolerance: allowed shortfall of candidate against reference

    Returns:
    * (passed, detail)
    """
    scores = dict(zip(table["mode"], pd.to_numeric(table["test_dice_mean"], errors="coerce")))
    for mode in (reference, candidate):
        if mode not in scores:
            raise ContractViolation("the ablation table has no %s row" % mode)
    low = [mode for mode, score in scores.items() if not score >= floor]
    if low:
        return False, "test Dice below %.2f for %s" % (floor, ", ".join(low))
    gap = scores[candidate] - scores[reference]
    if gap < -tolerance:
        return False, "%s trails %s by %.4f test Dice" % (candidate, reference, -gap)
    return True, "%s - %s = %+.4f test Dice, every mode >= %.2f" % (candidate, reference, gap, floor)


def ablate(base_cfg, modes, seeds, output_dir, overwrite=False):
    """Trains and evaluates every (mode, seed) pair.

    Parameters:
    * base_cfg: TrainConfig, shared settings
    * modes: list of ablation modes, at least 2, table rows keep this order
    * seeds: list of ints
    * output_dir: directory receiving one run directory per pair, runs.csv, ablation.csv and ablation.png

    Returns:
    * pandas DataFrame, see summarize_runs
    """
    modes = list(modes)
    seeds = [int(s) for s in seeds]
    if len(modes) < 2:
        raise ContractViolation("an ablation needs at least 2 modes, got %s" % modes)
    unknown = [m for m in modes if m not in ABLATION_MODES]
    if unknown or len(set(modes)) != len(modes):
        raise ContractViolation("invalid or repeated ablation modes %s" % modes)
    if not seeds:
        raise ContractViolation("an ablation needs at least one seed")
    table_path = os.path.join(output_dir, "ablation.csv")
    if os.path.exists(table_path) and not overwrite:
        raise FileExistsError("%s exists, use overwrite to replace it" % table_path)
    os.makedirs(output_dir, exist_ok=True)

    records = []
    for mode in modes:
        for seed in seeds:
            run_dir = os.path.join(output_dir, "%s_seed%d" % (mode, seed))
            cfg = base_cfg.replace(ablation_mode=mode, seed=seed, output_dir=run_dir)
            logger.info("ablation run %s seed %d", mode, seed)
            train(cfg, overwrite=overwrite)
            best = os.path.join(run_dir, "ckpt_best.pt")
            val = evaluate(best, cfg.manifest_path, "val", output_dir=os.path.join(run_dir, "val"))
            test = evaluate(best, cfg.manifest_path, "test", output_dir=run_dir)
            records.append({"mode": mode, "seed": seed,
                            "val_dice": val.mean_dice, "val_hd95": val.mean_hd95,
                            "test_dice": test.mean_dice, "test_hd95": test.mean_hd95})
    runs = pd.DataFrame(records, columns=["mode", "seed"] + list(METRICS))
    table = summarize_runs(runs, modes)
    runs.to_csv(os.path.join(output_dir, "runs.csv"), index=False, float_format="%.10g")
    table.to_csv(table_path, index=False, float_format="%.10g")
    plot_ablation(table, savepath=os.path.join(output_dir, "ablation.png"), close_on_exit=True)
    logger.info("ablation table:\n%s", table.to_string(index=False))
    if "DS" in modes and "DSD" in modes:
        passed, detail = directional_check(table)
        if passed:
            logger.info("directional check passed: %s", detail)
        else:
            logger.warning("directional check failed: %s", detail)
    return table
