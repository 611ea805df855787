"""Density grids and matplotlib figures of posterior marginals."""

from __future__ import annotations

import numpy as np

from .analysis import AnalysisResult


def density_grid(result: AnalysisResult, target: str, n: int = 201):
    """Evaluation points and density values covering 99.8% of the mass."""
    dist = result.target(target)
    if target == "tau":
        x = np.linspace(0.0, float(dist.quantile(0.999)), n)
    else:
        x = np.linspace(float(dist.quantile(0.001)), float(dist.quantile(0.999)), n)
    return x, np.asarray(dist.pdf(x), dtype=float)


def render_densities(result: AnalysisResult, path) -> None:
    """Two-panel figure: heterogeneity posterior and effect/predictive posteriors."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax_t, ax_m) = plt.subplots(1, 2, figsize=(9, 3.6))
    x, d = density_grid(result, "tau")
    ax_t.plot(x, d, color="black")
    hp = result.heterogeneity_prior
    if hp.proper:
        ax_t.plot(x, hp.pdf(x), color="grey", linestyle="--", label="prior")
    ax_t.set_xlabel("heterogeneity tau")
    ax_t.set_ylabel("density")
    ax_t.set_xlim(0, x[-1])
    ax_t.set_ylim(bottom=0)
    if hp.proper:
        ax_t.legend(frameon=False)

    x, d = density_grid(result, "predictive")
    ax_m.plot(x, d, color="grey", label="prediction")
    xm, dm = density_grid(result, "mu")
    ax_m.plot(xm, dm, color="black", label="effect mu")
    ax_m.set_xlabel("effect")
    ax_m.set_ylim(bottom=0)
    ax_m.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None} if str(path).endswith(".png") else None)
    plt.close(fig)
