# -*- coding: utf-8 -*-
import matplotlib.pyplot as plt
import numpy as np


def plot_slice_comparison(image, truth, prediction, axis=2, index=None, num_classes=None, cmap="tab10",
                          savepath=None, close_on_exit=False):
    """Image, ground truth and prediction of one slice side by side.

    Parameters:
    * image: array (C,H,W,D) or (H,W,D), the first channel is shown
    * truth, prediction: integer label volumes (H,W,D)
    * axis: int, spatial axis the slice is taken along
    * index: slice index, defaults to the slice with the most foreground in `truth`
    """
    image = np.asarray(image)
    if image.ndim == 4:
        image = image[0]
    truth = np.asarray(truth)
    prediction = np.asarray(prediction)
    if index is None:
        other = tuple(a for a in range(3) if a != axis)
        index = int(np.argmax((truth > 0).sum(axis=other)))
    if num_classes is None:
        num_classes = int(max(truth.max(), prediction.max())) + 1

    fig, axes = plt.subplots(1, 3, figsize=(9, 3.2))
    panels = ((image, "image", "gray", None),
              (truth, "ground truth", cmap, num_classes - 1),
              (prediction, "prediction", cmap, num_classes - 1))
    for ax, (volume, name, colors, vmax) in zip(axes, panels):
        ax.imshow(np.take(volume, index, axis=axis).T, origin="lower", cmap=colors, vmin=0 if vmax else None,
                  vmax=vmax, interpolation="nearest")
        ax.set_title(name)
        ax.set_xticks([])
        ax.set_yticks([])
    plt.tight_layout()

    if savepath is not None:
        fig.savefig(savepath, dpi=200)
    if close_on_exit:
        plt.close(fig)
    return fig
