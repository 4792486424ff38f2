# -*- coding: utf-8 -*-
import matplotlib.pyplot as plt
import numpy as np


def plot_ablation(table, metrics=("val_dice", "test_dice"), title=None, savepath=None, close_on_exit=False):
    """Grouped bars with std error bars of an ablation table, one group per mode."""
    modes = list(table["mode"])
    x = np.arange(len(modes))
    width = 0.8/len(metrics)

    fig, ax = plt.subplots()
    for i, metric in enumerate(metrics):
        ax.bar(x + (i - (len(metrics) - 1)/2.)*width, table[metric + "_mean"], width,
               yerr=table[metric + "_std"], capsize=3, label=metric.replace("_", " "))
    ax.set_xticks(x)
    ax.set_xticklabels(modes)
    ax.set_ylabel("mean foreground Dice")
    ax.set_ylim(0, 1)
    ax.legend()
    if title is not None:
        ax.set_title(title)
    plt.tight_layout()

    if savepath is not None:
        fig.savefig(savepath, dpi=200)
    if close_on_exit:
        plt.close(fig)
    return fig
