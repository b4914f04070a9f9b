"""Standalone SVG plots of spectra and convergence traces."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import io  # noqa: E402

plt.rcParams["svg.hashsalt"] = "difflab"


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_spectrum(csv_path, svg_path=None):
    """Stem plot of |value| against |lambda|."""
    lam, vals, R, kind = io.read_spectrum(csv_path)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    if lam.shape[0]:
        x = lam[:, 0] if lam.shape[1] == 1 else np.linalg.norm(lam, axis=1)
        ax.stem(x, np.abs(vals), basefmt=" ")
        ax.set_title(f"{kind}, R = {R:g}")
    ax.set_xlabel("frequency" if lam.shape[1] == 1 else "|frequency|")
    ax.set_ylabel("modulus")
    return _save(fig, svg_path or Path(csv_path).with_suffix(".svg"))


def plot_trace(csv_path, svg_path=None, logx=None):
    n, v = io.read_trace(csv_path)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    if n.size:
        ax.plot(n, v, marker="o")
        if logx if logx is not None else (n.min() > 0 and n.max() / n.min() > 50):
            ax.set_xscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("value")
    ax.set_title(Path(csv_path).stem)
    return _save(fig, svg_path or Path(csv_path).with_suffix(".svg"))


def plot_deviation(radii, deviations, svg_path):
    """Convergence polyline of |M_R - target| over R."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(radii, deviations, marker="o")
    ax.set_xlabel("R")
    ax.set_ylabel("deviation")
    return _save(fig, svg_path)


def plot_outputs(outputs, out_dir):
    made = []
    for analysis, paths in outputs.items():
        for p in paths:
            p = Path(p)
            if p.suffix != ".csv":
                continue
            if analysis == "spectrum":
                made.append(plot_spectrum(p))
            elif analysis in ("slln", "escape", "density", "hellinger"):
                made.append(plot_trace(p))
    return made
