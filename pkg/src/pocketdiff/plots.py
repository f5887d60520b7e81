"""Figure rendering for the report-producing CLI paths.

Every CSV report gets a PNG rendered next to it: annealing curves for
the schedule command, and the distance histogram overlay plus per-class
bond divergences for the eval command.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def save_schedule_plot(header: list[str], rows: list[list[float]], path) -> None:
    epochs = [row[0] for row in rows]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for col, name in enumerate(header[1:], start=1):
        ax.plot(epochs, [row[col] for row in rows], label=name)
    ax.set_xlabel("pseudo-epoch")
    ax.set_ylabel("p(keep true noisy state)")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_eval_plot(gen_distances: np.ndarray, ref_distances: np.ndarray,
                   edges: np.ndarray, bond_rows: list[dict], path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.5))

    ax1.hist(ref_distances, bins=edges, density=True, alpha=0.5,
             color="gray", label="reference")
    ax1.hist(gen_distances, bins=edges, density=True, alpha=0.5,
             color="tab:blue", label="generated")
    ax1.set_xlabel("all-atom pairwise distance (Å)")
    ax1.set_ylabel("density")
    ax1.legend()

    if bond_rows:
        names = [row["class"] for row in bond_rows]
        values = [row["jsd"] for row in bond_rows]
        colors = ["tab:red" if row["flag"] else "tab:blue" for row in bond_rows]
        ax2.bar(range(len(names)), values, color=colors)
        ax2.set_xticks(range(len(names)))
        ax2.set_xticklabels(names, rotation=45, ha="right")
        ax2.set_ylabel("JSD (base 2)")
        ax2.set_ylim(0, 1.05)
    ax2.set_title("bond-length divergence by class")

    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
