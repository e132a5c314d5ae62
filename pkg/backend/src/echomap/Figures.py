"""
Shared matplotlib setup for every SVG the pipeline writes. Output bytes depend only on
the plotted data: the SVG id salt is fixed and the date metadata is dropped.
"""
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

PARAMS = {"svg.hashsalt": "echomap",
          "svg.fonttype": "path",
          "font.family": "DejaVu Sans",
          "font.size": 9,
          "axes.titlesize": 10,
          "axes.labelsize": 9,
          "legend.fontsize": 8,
          "xtick.labelsize": 8,
          "ytick.labelsize": 8,
          "figure.dpi": 100}


def new_figure(width_in: float = 8.0, height_in: float = 3.5):
    plt.rcParams.update(PARAMS)
    fig, ax = plt.subplots(figsize=(width_in, height_in))
    return fig, ax


def save_figure(fig, path: str):
    """
    Saves a figure as SVG and closes it.
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
