"""Inverse-variance combination of independent parameter estimates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import SchemaError


@dataclass(frozen=True)
class Estimate:
    """One measurement: central value and standard error."""

    value: float
    sigma: float
    label: str = ""

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError("estimate value must be finite")
        if not (self.sigma > 0.0 and np.isfinite(self.sigma)):
            raise ValueError("estimate sigma must be positive and finite")


@dataclass(frozen=True)
class WeightedEstimate:
    value: float
    sigma: float
    n_inputs: int
    chi2_consistency: float


def inverse_variance_mean(estimates: Sequence[Estimate], *,
                          scale_errors: bool = False) -> WeightedEstimate:
    """Weighted mean with weights 1/sigma^2.

    chi2_consistency is sum w_i (v_i - mean)^2 with n-1 degrees of
    freedom.  With scale_errors the combined sigma is inflated by
    sqrt(chi2/(n-1)) when that exceeds one, the usual scale-factor
    treatment of mutually inconsistent inputs; default is off so the
    plain weighted error is reported.
    """
    if not estimates:
        raise ValueError("need at least one estimate")
    v = np.array([e.value for e in estimates])
    w = np.array([1.0 / (e.sigma * e.sigma) for e in estimates])
    wsum = float(w.sum())
    mean = float(np.dot(w, v) / wsum)
    sigma = float(1.0 / np.sqrt(wsum))
    chi2 = float(np.dot(w, (v - mean) ** 2))
    if scale_errors and len(estimates) >= 2:
        factor = chi2 / (len(estimates) - 1)
        if factor > 1.0:
            sigma *= float(np.sqrt(factor))
    return WeightedEstimate(value=mean, sigma=sigma, n_inputs=len(estimates),
                            chi2_consistency=chi2)


def pairwise_pulls(estimates: Sequence[Estimate]) -> list[Tuple[int, int, float]]:
    """All (i, j, |v_i - v_j| / sqrt(sigma_i^2 + sigma_j^2)) for i < j."""
    if len(estimates) < 2:
        raise ValueError("need at least two estimates for pulls")
    out = []
    for i in range(len(estimates)):
        for j in range(i + 1, len(estimates)):
            denom = np.hypot(estimates[i].sigma, estimates[j].sigma)
            pull = abs(estimates[i].value - estimates[j].value) / denom
            out.append((i, j, float(pull)))
    return out


def max_pairwise_pull(estimates: Sequence[Estimate]) -> Tuple[float, Tuple[int, int]]:
    """Largest pairwise pull and its index pair; (0, (0, 0)) for one input."""
    if len(estimates) < 2:
        return 0.0, (0, 0)
    i, j, worst = max(pairwise_pulls(estimates), key=lambda rec: rec[2])
    return worst, (i, j)


def check_consistency(estimates: Sequence[Estimate], *,
                      threshold: float = 3.0) -> Tuple[bool, list[Tuple[int, int, float]]]:
    """Flag (every pairwise pull at or below the threshold) plus the pulls."""
    pulls = pairwise_pulls(estimates)
    return all(p <= threshold for _, _, p in pulls), pulls


def estimates_from_reports(reports: Sequence[dict], parameter: str) -> list[Estimate]:
    """Pull one parameter with its standard error out of fit reports.

    All reports must come from the same model kind; mixing lifetimes of
    different models is a user error worth stopping on.
    """
    if not reports:
        raise ValueError("need at least one fit report")
    kinds = {r.get("model") for r in reports}
    if len(kinds) != 1:
        raise SchemaError(f"fit reports mix model kinds: {sorted(map(str, kinds))}")
    out = []
    for r in reports:
        try:
            value = float(r["parameters"][parameter])
            sigma = float(r["standard_errors"][parameter])
        except (KeyError, TypeError) as exc:
            raise SchemaError(
                f"fit report lacks parameter {parameter!r} with an error") from exc
        out.append(Estimate(value=value, sigma=sigma,
                            label=str(r.get("channel_label", ""))))
    return out


def combination_report(parameter: str, estimates: Sequence[Estimate],
                       combined: WeightedEstimate, *,
                       threshold: Optional[float] = None) -> dict:
    """JSON-ready record of a combination."""
    rec = {
        "parameter": parameter,
        "inputs": [{"label": e.label, "value": e.value, "sigma": e.sigma}
                   for e in estimates],
        "value": combined.value,
        "sigma": combined.sigma,
        "n_inputs": combined.n_inputs,
        "chi2_consistency": combined.chi2_consistency,
    }
    if threshold is not None:
        worst, pair = max_pairwise_pull(estimates)
        rec["max_pairwise_pull"] = worst
        rec["consistent"] = worst <= threshold
        rec["pull_threshold"] = threshold
    return rec
