# -*- coding: utf-8 -*-
import matplotlib.pyplot as plt
import pandas as pd

from ..losses import TERM_NAMES


def plot_training_curves(log, title=None, savepath=None, close_on_exit=False):
    """Loss terms and validation Dice per epoch.

    Parameters:
    * log: path of a log.csv or the DataFrame read from it
    """
    if not isinstance(log, pd.DataFrame):
        log = pd.read_csv(log)

    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6, 6))
    if title is not None:
        fig.suptitle(title)
    ax1.plot(log["epoch"], log["total"], color="k", label="total")
    for name in TERM_NAMES:
        values = pd.to_numeric(log[name], errors="coerce")
        if (values.fillna(0) != 0).any():
            ax1.plot(log["epoch"], values, label=name.replace("_", " "))
    ax1.set_ylabel("loss")
    ax1.set_yscale("log")
    ax1.legend(fontsize="small")

    val_dice = pd.to_numeric(log["val_dice"], errors="coerce")
    ax2.plot(log["epoch"], val_dice, marker="o", ms=3)
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("validation Dice")
    ax2.set_ylim(0, 1)
    plt.tight_layout()

    if savepath is not None:
        fig.savefig(savepath, dpi=200)
    if close_on_exit:
        plt.close(fig)
    return fig
