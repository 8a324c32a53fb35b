"""Figure rendering for the experiment commands.

Each command writes its delimited data first; these helpers render PNG
companions next to it.  Rendering is best effort and never part of the
numerical contract, so commands accept a --no-figures switch.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .experiments import read_table

__all__ = ["sparse_demo_figures", "rate_figure", "tv_figures"]


def sparse_demo_figures(out_dir: str, p_tags) -> None:
    grid, u_true = read_table(os.path.join(out_dir, "u_true.table"))
    _, f_clean = read_table(os.path.join(out_dir, "f_true.table"))

    fig, axes = plt.subplots(1, 2, figsize=(9, 3))
    axes[0].plot(grid, u_true, lw=0.8)
    axes[0].set_title("true coefficients")
    _, f_noisy = read_table(os.path.join(out_dir, "f.table"))
    axes[1].plot(grid, f_clean, lw=0.8, label="clean data")
    axes[1].plot(grid, f_noisy, ".", ms=1.5, label="noisy data")
    axes[1].set_title("data")
    axes[1].legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "fig_data.png"), dpi=150)
    plt.close(fig)

    for tag in p_tags:
        _, u_rec = read_table(os.path.join(out_dir, f"u_p{tag}.table"))
        _, ku = read_table(os.path.join(out_dir, f"Ku_p{tag}.table"))
        fig, axes = plt.subplots(1, 2, figsize=(9, 3))
        axes[0].plot(grid, u_true, lw=0.8, color="tab:red", label="true")
        axes[0].plot(grid, u_rec, lw=0.8, color="tab:blue", label=f"recovered (p={tag})")
        axes[0].legend(frameon=False, fontsize=8)
        axes[1].plot(grid, f_clean, lw=0.8, color="tab:red", label="clean data")
        axes[1].plot(grid, ku, lw=0.8, color="tab:blue", label="image of recovery")
        axes[1].legend(frameon=False, fontsize=8)
        fig.tight_layout()
        fig.savefig(os.path.join(out_dir, f"fig_p{tag}.png"), dpi=150)
        plt.close(fig)


def rate_figure(out_dir: str, ns, gaps, envelope: float, p: float) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.loglog(ns, gaps, lw=0.8, label="objective gap")
    ax.loglog(ns, envelope * np.asarray(ns) ** (1.0 - p), "--", lw=0.8,
              label=f"envelope C n^({1.0 - p:g})")
    ax.set_xlabel("iteration")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "rate.png"), dpi=150)
    plt.close(fig)


def tv_figures(out_dir: str, u_true, noisy, restored) -> None:
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.4))
    for ax, (title, img) in zip(
        axes, [("true", u_true), ("data", noisy), ("restored", restored)]
    ):
        im = ax.imshow(np.asarray(img), cmap="gray", interpolation="nearest")
        ax.set_title(title)
        ax.axis("off")
        fig.colorbar(im, ax=ax, shrink=0.75)
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "fig_slices.png"), dpi=150)
    plt.close(fig)
