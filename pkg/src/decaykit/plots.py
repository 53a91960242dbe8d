"""Rendered figures accompanying the delimited outputs.

All functions draw on the Agg backend and write a PNG next to the data
files; nothing here feeds back into the analysis.
"""

from __future__ import annotations

from typing import Optional, Sequence

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .combine import Estimate, WeightedEstimate  # noqa: E402
from .fitter import FitResult, model_values, select_fit_bins  # noqa: E402
from .models import params_vector  # noqa: E402
from .spectral import DecayCurve, TailExponent  # noqa: E402
from .synth import Histogram  # noqa: E402

_DPI = 150


def _finish(fig, path: str) -> None:
    fig.savefig(path, dpi=_DPI, format="png")
    plt.close(fig)


def save_histogram_figure(hist: Histogram, path: str) -> None:
    """Counts per bin on a log scale over the full window."""
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.semilogy(hist.t_centers(), np.maximum(hist.counts, 0.5), lw=0.5, color="C0")
    ax.set_xlabel("t [ns]")
    ax.set_ylabel("counts per bin")
    if hist.channel_label:
        ax.set_title(hist.channel_label)
    _finish(fig, path)


def save_fit_figure(hist: Histogram, result: FitResult, path: str) -> None:
    """Data with the fitted curve on a log scale, residuals below."""
    t, y = select_fit_bins(hist, result.fit_range)
    m = model_values(result.model.kind, params_vector(result.model),
                     result.t0, t)
    resid = (y - m) / np.sqrt(m)
    fig, (ax, axr) = plt.subplots(
        2, 1, sharex=True, figsize=(7.0, 5.5),
        gridspec_kw={"height_ratios": [3, 1], "hspace": 0.08})
    ax.semilogy(t, np.maximum(y, 0.5), lw=0.5, color="0.4", label="data")
    ax.semilogy(t, m, lw=1.2, color="C3",
                label=f"{result.mode} fit, reduced chi2 = {result.reduced_chi2:.4f}")
    ax.set_ylabel("counts per bin")
    title = result.channel_label or "histogram"
    ax.set_title(title)
    ax.legend(frameon=False)
    axr.axhline(0.0, color="0.6", lw=0.8)
    axr.plot(t, resid, lw=0.4, color="C0")
    axr.set_xlabel("t [ns]")
    axr.set_ylabel("(y - m) / sqrt(m)")
    _finish(fig, path)


def save_theory_figure(survival: DecayCurve, intensity: DecayCurve,
                       tail: Optional[TailExponent], path: str) -> None:
    """Log-log survival probability and intensity on a shared time axis."""
    fig, (ax_p, ax_i) = plt.subplots(2, 1, sharex=True, figsize=(6.5, 6.0))
    ax_p.loglog(survival.times, np.maximum(survival.values, 1e-300), color="C0")
    ax_p.set_ylabel("P(t)")
    ax_i.loglog(intensity.times, np.maximum(intensity.values, 1e-300), color="C1")
    ax_i.set_ylabel("I(t)")
    ax_i.set_xlabel("t [ns]")
    if tail is not None:
        ax_i.set_title(f"late-time exponent {tail.slope:.3f} "
                       f"+/- {tail.stderr:.3f}", fontsize=10)
    _finish(fig, path)


def save_combine_figure(parameter: str, estimates: Sequence[Estimate],
                        combined: WeightedEstimate, path: str) -> None:
    """Per-input error bars against the combined band."""
    x = np.arange(len(estimates))
    v = [e.value for e in estimates]
    s = [e.sigma for e in estimates]
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    ax.axhspan(combined.value - combined.sigma, combined.value + combined.sigma,
               color="C1", alpha=0.25, lw=0)
    ax.axhline(combined.value, color="C1",
               label=f"combined {combined.value:.5g} +/- {combined.sigma:.2g}")
    ax.errorbar(x, v, yerr=s, fmt="o", color="C0", capsize=3)
    ax.set_xticks(x)
    ax.set_xticklabels([e.label or str(i) for i, e in enumerate(estimates)])
    ax.set_ylabel(parameter)
    ax.legend(frameon=False)
    _finish(fig, path)


def save_roundtrip_figure(estimates: np.ndarray, reduced_chi2: np.ndarray,
                          true_value: float, parameter: str, path: str) -> None:
    """Replicate-study spread of the estimate and of reduced chi-square."""
    fig, (ax_v, ax_c) = plt.subplots(1, 2, figsize=(9.0, 4.0))
    ax_v.hist(estimates, bins=20, color="C0", alpha=0.8)
    ax_v.axvline(true_value, color="C3", label="truth")
    ax_v.set_xlabel(parameter)
    ax_v.set_ylabel("replicates")
    ax_v.legend(frameon=False)
    ax_c.hist(reduced_chi2, bins=20, color="C2", alpha=0.8)
    ax_c.axvspan(0.9, 1.1, color="0.85", lw=0)
    ax_c.set_xlabel("reduced chi2")
    _finish(fig, path)
