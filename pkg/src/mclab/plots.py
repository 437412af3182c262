"""Optional SVG renderings of the experiment CSVs (needs matplotlib)."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


def _read(path: Path) -> dict[str, list[str]]:
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    return {k: [r[k] for r in rows] for k in rows[0]} if rows else {}


def render(experiment: str, out: Path, files: list[Path]) -> list[Path]:
    """Draw one SVG per experiment from the CSVs just written; returns the new files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "mclab"
    fig, ax = plt.subplots(figsize=(6, 4))
    csvs = [Path(f) for f in files if str(f).endswith(".csv")]
    for f in csvs:
        d = _read(f)
        if not d:
            continue
        if experiment == "eigplot":
            ax.scatter(np.float64(d["re"]), np.float64(d["im"]), s=6)
            t = np.linspace(0, 2 * np.pi, 400)
            ax.plot(np.cos(t), np.sin(t), lw=0.5, color="grey")
            ax.set_aspect("equal")
        elif experiment == "fig3_squeezing":
            j = np.float64(d["j"])
            for col in ("theta_svd", "theta_arnoldi", "kappa", "rho_pow_j"):
                ax.semilogy(j, np.float64(d[col]), label=col)
        elif experiment == "fig2_gram_eigs":
            kinds, Ns = np.array(d["kind"]), np.array(d["N"])
            for k, n in sorted(set(zip(kinds, Ns))):
                sel = (kinds == k) & (Ns == n)
                ax.semilogy(np.float64(np.array(d["index"])[sel]), np.float64(np.array(d["eigenvalue"])[sel]) + 1e-300, label=f"{k} N={n}")
            ax.axhline(2.0**-52, ls="--", color="k", lw=0.7)
        elif experiment == "fig1_inflation" and "mean_total" in d:
            ax.plot(np.float64(d["T"]), np.float64(d["mean_total"]) / np.float64(d["N"]), marker="o")
        elif "mc" in d or "mc_mean" in d:
            y = d.get("mc_mean", d.get("mc"))
            ax.plot(np.float64(d["tau"]), np.float64(y), label=f.stem)
        elif experiment == "custom":
            taus = [t for t in d["tau"] if t != "total"]
            for col in d:
                if col != "tau":
                    ax.plot(np.float64(taus), np.float64(d[col][: len(taus)]), label=col)
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=6)
    path = out / f"{experiment}.svg"
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return [path]
