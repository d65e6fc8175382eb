"""Static SVG figures: nominal curve with a +/-2 sigma band."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps SVG output reproducible
_SVG_META = {"Date": None}
plt.rcParams["svg.hashsalt"] = "mtrluq"


def band_plot(path, f, nominal, std, ylabel, title=None, k=2.0):
    fig, ax = plt.subplots(figsize=(6, 3.6))
    fg = np.asarray(f) / 1e9
    ax.fill_between(fg, nominal - k * std, nominal + k * std, alpha=0.3, lw=0, label=f"±{k:g}σ")
    ax.plot(fg, nominal, lw=1.2, label="nominal")
    ax.set_xlabel("frequency (GHz)")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def ratio_plot(path, f, ratios, band=(0.85, 1.15)):
    fig, ax = plt.subplots(figsize=(6, 3.6))
    fg = np.asarray(f) / 1e9
    for name, r in ratios.items():
        ax.plot(fg, r, lw=1.0, label=name)
    for b in band:
        ax.axhline(b, color="k", lw=0.8, ls="--")
    ax.set_xlabel("frequency (GHz)")
    ax.set_ylabel("LU std / MC std")
    ax.set_ylim(0.5, 1.5)
    ax.grid(alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def overlay_plot(path, f, lu_std, mc_std, quantity):
    fig, ax = plt.subplots(figsize=(6, 3.6))
    fg = np.asarray(f) / 1e9
    ax.semilogy(fg, lu_std, lw=1.2, label="LU")
    ax.semilogy(fg, mc_std, ".", ms=3, label="MC")
    ax.set_xlabel("frequency (GHz)")
    ax.set_ylabel(f"std of {quantity}")
    ax.grid(alpha=0.3, which="both")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
