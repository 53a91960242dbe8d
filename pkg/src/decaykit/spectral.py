"""Survival probabilities and decay intensities from spectral densities.

Conventions (natural units, hbar = 1): time in nanoseconds, energy in
inverse nanoseconds.  A state prepared at t = 0 with energy density
rho(E) has survival amplitude

    A(t) = int rho(E) exp(-i E t) dE,        P(t) = |A(t)|^2,

the integral running over the support of rho.  The emitted intensity of
an ensemble of n0 emitters is I(t) = -n0 * dP/dt.

Three densities are supported: a full-line Breit-Wigner (Cauchy) line
shape, which gives exact exponential decay; the same line shape cut off
below a threshold energy, which develops a late-time power-law tail; and
the thresholded shape with an additional Gaussian high-energy cutoff,
which has finite energy moments and therefore a quadratic (Zeno) onset
P(t) ~ 1 - (t/tau_Z)^2 with tau_Z = 1/sigma_E.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass
from typing import Optional, TextIO, Tuple, Union

import numpy as np
from scipy.integrate import quad

from .errors import SchemaError
from .oscquad import exp_decay_halfline, fourier_integral

ArrayLike = Union[float, np.ndarray]

# Width of the Filon core around the peak, in units of the line width.
# Beyond the core the tails are carried by contour-rotated half-line
# integrals, which are exact for the rational line shapes.
_CORE_HALF_WIDTH = 32.0
# The Gaussian-cutoff density is integrated on a finite window instead;
# at 9 cutoff scales past the peak the integrand is below 1e-35.
_CUTOFF_REACH = 9.0


class DistributionKind(enum.Enum):
    BREIT_WIGNER = "BreitWigner"
    TRUNCATED_BREIT_WIGNER = "TruncatedBreitWigner"
    TRUNCATED_BREIT_WIGNER_GAUSS_CUTOFF = "TruncatedBreitWignerGaussCutoff"


class CurveKind(enum.Enum):
    SURVIVAL = "Survival"
    INTENSITY = "Intensity"


@dataclass(frozen=True)
class EnergyDistribution:
    """Parameterized energy density rho(E).

    peak_energy and width are the Breit-Wigner location and FWHM (both in
    1/ns).  threshold is the lower support edge for the truncated kinds;
    cutoff_scale is the Gaussian cutoff length for the cutoff kind.  norm
    is the multiplicative normalization constant; it is 1.0 at
    construction and set by normalize().
    """

    kind: DistributionKind
    peak_energy: float
    width: float
    threshold: Optional[float] = None
    cutoff_scale: Optional[float] = None
    norm: float = 1.0
    normalized: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.peak_energy) and math.isfinite(self.width)):
            raise ValueError("peak_energy and width must be finite")
        if self.width <= 0.0:
            raise ValueError("width must be positive")
        if self.kind is DistributionKind.BREIT_WIGNER:
            if self.threshold is not None or self.cutoff_scale is not None:
                raise ValueError("full-line BreitWigner takes no threshold or cutoff")
        else:
            if self.threshold is None or not math.isfinite(self.threshold):
                raise ValueError(f"{self.kind.value} requires a finite threshold")
            if self.threshold >= self.peak_energy:
                raise ValueError("threshold must lie below the peak energy")
            if self.kind is DistributionKind.TRUNCATED_BREIT_WIGNER:
                if self.cutoff_scale is not None:
                    raise ValueError("TruncatedBreitWigner takes no cutoff_scale")
            else:
                if self.cutoff_scale is None or self.cutoff_scale <= 0.0:
                    raise ValueError("cutoff kind requires cutoff_scale > 0")
        if not (math.isfinite(self.norm) and self.norm > 0.0):
            raise ValueError("norm must be positive and finite")


@dataclass(frozen=True)
class SpectralSummary:
    """Energy moments of a distribution; None marks a divergent moment.

    zeno_time = 1/energy_stddev whenever the standard deviation is
    finite, otherwise None (undefined).
    """

    mean_energy: Optional[float]
    energy_stddev: Optional[float]
    zeno_time: Optional[float]


@dataclass
class DecayCurve:
    """A sampled decay curve: survival probability or emission intensity."""

    times: np.ndarray
    values: np.ndarray
    kind: CurveKind
    n0: float = 1.0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.ndim != 1 or self.times.shape != self.values.shape:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if self.times.size and np.any(np.diff(self.times) <= 0.0):
            raise ValueError("times must be strictly increasing")
        if self.kind is CurveKind.SURVIVAL:
            if np.any(self.values < -1e-9) or np.any(self.values > 1.0 + 1e-5):
                raise ValueError("survival values must lie in [0, 1]")
            if self.times.size and self.times[0] == 0.0:
                if abs(self.values[0] - 1.0) > 1e-8:
                    raise ValueError("survival at t = 0 must equal 1")


def _bw_line(E: np.ndarray, peak: float, width: float):
    return (width / (2.0 * math.pi)) / ((E - peak) ** 2 + 0.25 * width * width)


def _raw_density(dist: EnergyDistribution, E: np.ndarray) -> np.ndarray:
    """Density with norm = 1 (the normalization integrand)."""
    rho = _bw_line(E, dist.peak_energy, dist.width)
    if dist.kind is not DistributionKind.BREIT_WIGNER:
        if dist.kind is DistributionKind.TRUNCATED_BREIT_WIGNER_GAUSS_CUTOFF:
            u = (E - dist.peak_energy) / dist.cutoff_scale
            rho = rho * np.exp(-u * u)
        rho = np.where(E >= dist.threshold, rho, 0.0)
    return rho


def _analytic_density(dist: EnergyDistribution, z: np.ndarray) -> np.ndarray:
    """Analytic continuation of the rational part of rho, norm included.

    Only valid for the Breit-Wigner kinds, whose continuation off the real
    axis is the same rational function (the threshold is a support edge,
    not a feature of the analytic formula).
    """
    w = dist.width
    return dist.norm * (w / (2.0 * math.pi)) / ((z - dist.peak_energy) ** 2 + 0.25 * w * w)


def rho_eval(dist: EnergyDistribution, E: ArrayLike) -> ArrayLike:
    """Evaluate rho(E); E may be a scalar or ndarray of finite energies."""
    arr = np.asarray(E, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("rho_eval requires finite energies")
    out = dist.norm * _raw_density(dist, arr)
    return float(out) if np.isscalar(E) or arr.ndim == 0 else out


def _support(dist: EnergyDistribution) -> Tuple[float, float]:
    lo = -np.inf if dist.kind is DistributionKind.BREIT_WIGNER else dist.threshold
    return lo, np.inf


def normalize(dist: EnergyDistribution) -> EnergyDistribution:
    """Return a copy with norm fixed so that int rho = 1.

    The base integral is always computed with norm = 1, which makes the
    operation exactly idempotent.
    """
    lo, hi = _support(dist)
    f = lambda E: _raw_density(dist, np.asarray(E))
    # split at the peak: quad handles each monotonic wing well
    total = 0.0
    for a, b in ((lo, dist.peak_energy), (dist.peak_energy, hi)):
        part, _ = quad(f, a, b, epsabs=1e-13, epsrel=1e-12, limit=400)
        total += part
    return dataclasses.replace(dist, norm=1.0 / total, normalized=True)


def _require_normalized(dist: EnergyDistribution):
    if not dist.normalized:
        raise ValueError("distribution must be normalized first (call normalize)")


def survival_amplitude(
    dist: EnergyDistribution, t: ArrayLike, rel_tol: float = 1e-9
) -> Union[complex, np.ndarray]:
    """A(t) = int rho(E) exp(-i E t) dE for t >= 0 (scalar or array).

    The real-axis core around the resonance is integrated with adaptive
    Filon panels; for the Breit-Wigner kinds the infinite tails are
    rotated onto contours parallel to the negative imaginary axis, where
    exp(-i E t) decays and the remainder is a smooth Laplace-type
    integral.  The Gaussian-cutoff kind is integrated on a finite window
    that already contains all of its mass.
    """
    _require_normalized(dist)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0.0) or not np.all(np.isfinite(ts)):
        raise ValueError("survival_amplitude requires finite t >= 0")

    M, w = dist.peak_energy, dist.width
    scale = 0.5 * w
    if dist.kind is DistributionKind.BREIT_WIGNER:
        lo, hi = M - _CORE_HALF_WIDTH * w, M + _CORE_HALF_WIDTH * w
        tails = ("lower", "upper")
    elif dist.kind is DistributionKind.TRUNCATED_BREIT_WIGNER:
        lo, hi = dist.threshold, M + _CORE_HALF_WIDTH * w
        tails = ("upper",)
    else:
        lam = dist.cutoff_scale
        lo, hi = dist.threshold, M + _CUTOFF_REACH * lam + 4.0 * w
        tails = ()
        scale = 0.5 * min(w, lam)

    f = lambda E: dist.norm * _raw_density(dist, E)
    total = fourier_integral(
        f, lo, hi, ts, peak=M, scale=scale, rel_tol=rel_tol, abs_floor=1e-14
    )
    if "upper" in tails:
        g = lambda s: _analytic_density(dist, hi - 1j * s)
        total = total - 1j * np.exp(-1j * hi * ts) * exp_decay_halfline(g, ts)
    if "lower" in tails:
        g = lambda s: _analytic_density(dist, lo - 1j * s)
        total = total + 1j * np.exp(-1j * lo * ts) * exp_decay_halfline(g, ts)

    if np.isscalar(t) or np.asarray(t).ndim == 0:
        return complex(total[0])
    return total


def survival_probability(
    dist: EnergyDistribution, t: ArrayLike, rel_tol: float = 1e-9
) -> ArrayLike:
    """P(t) = |A(t)|^2."""
    amp = survival_amplitude(dist, t, rel_tol=rel_tol)
    p = np.abs(amp) ** 2
    return float(p) if np.isscalar(t) or np.asarray(t).ndim == 0 else p


def _fd_step(t: float) -> float:
    return max(1e-4 * t, 1e-6)


def intensity(
    dist: EnergyDistribution,
    t: ArrayLike,
    n0: float = 1.0,
    rel_tol: float = 1e-10,
) -> ArrayLike:
    """I(t) = -n0 * dP/dt by Richardson-extrapolated central differences.

    Central steps are h = max(1e-4 t, 1e-6 ns) and h/2.  At t = 0 a
    one-sided second-order stencil on a step tied to the curvature scale
    (the Zeno time when it is finite) is used instead, so that the exact
    P'(0) = 0 of finite-moment densities is recovered without noise
    amplification.
    """
    _require_normalized(dist)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0.0) or not np.all(np.isfinite(ts)):
        raise ValueError("intensity requires finite t >= 0")

    pos = ts > 0.0
    out = np.empty(ts.shape, dtype=float)

    if np.any(pos):
        tp = ts[pos]
        h = np.maximum(1e-4 * tp, 1e-6)
        if np.any(tp + h == tp):
            raise ValueError("derivative step underflow")
        pts = np.concatenate([tp - h, tp + h, tp - 0.5 * h, tp + 0.5 * h])
        P = survival_probability(dist, pts, rel_tol=rel_tol)
        m = tp.size
        d1 = (P[m:2 * m] - P[:m]) / (2.0 * h)
        d2 = (P[3 * m:4 * m] - P[2 * m:3 * m]) / h
        out[pos] = -n0 * (4.0 * d2 - d1) / 3.0

    if np.any(~pos):
        summ = spectral_summary(dist)
        curvature_scale = summ.zeno_time if summ.zeno_time else 1.0 / dist.width
        h0 = 1e-3 * curvature_scale
        P = survival_probability(
            dist, np.array([0.0, 0.5 * h0, h0, 1.5 * h0, 2.0 * h0]), rel_tol=rel_tol
        )
        dh = (-3.0 * P[0] + 4.0 * P[2] - P[4]) / (2.0 * h0)
        dh2 = (-3.0 * P[0] + 4.0 * P[1] - P[2]) / h0
        out[~pos] = -n0 * (4.0 * dh2 - dh) / 3.0

    if np.isscalar(t) or np.asarray(t).ndim == 0:
        return float(out[0])
    return out


def _tail_slope(gfun, E_ref: float, n: int = 16) -> Optional[float]:
    """Asymptotic log-log slope of |g| on a geometric grid.

    Only the outermost octaves enter the fit: closer in, the rational
    densities have not yet reached their power-law behaviour and the
    averaged slope would be biased steep.  Returns None if g underflows
    to zero (a super-polynomially decaying, trivially integrable tail).
    """
    E = E_ref * 2.0 ** np.arange(n)
    g = np.abs(gfun(E))
    ok = g > 1e-280
    if np.count_nonzero(ok) < 4:
        return None
    x, y = np.log(E[ok]), np.log(g[ok])
    x, y = x[-3:], y[-3:]
    return float(np.polyfit(x, y, 1)[0])


def _moment_converges(dist: EnergyDistribution, k: int) -> bool:
    """Tail-slope test: int E^k rho converges iff |E^k rho| decays faster
    than 1/E^(1+eps) on every unbounded tail of the support."""
    eps = 0.05
    E_ref = abs(dist.peak_energy) + 20.0 * dist.width + 1.0
    slopes = []
    slopes.append(_tail_slope(lambda E: E**k * _raw_density(dist, E), E_ref))
    if dist.kind is DistributionKind.BREIT_WIGNER:
        slopes.append(_tail_slope(lambda E: np.abs(E) ** k * _raw_density(dist, -E), E_ref))
    for s in slopes:
        if s is not None and s >= -(1.0 + eps):
            return False
    return True


def spectral_summary(dist: EnergyDistribution) -> SpectralSummary:
    """First and second energy moments, with divergences flagged as None.

    The full-line Breit-Wigner mean is reported divergent: the symmetric
    principal value is excluded by policy, matching the absence of a
    defined first moment for a Cauchy density.
    """
    _require_normalized(dist)
    if not _moment_converges(dist, 1):
        return SpectralSummary(None, None, None)
    lo, hi = _support(dist)
    mom = []
    for k in (1, 2):
        total = 0.0
        for a, b in ((lo, dist.peak_energy), (dist.peak_energy, hi)):
            part, _ = quad(
                lambda E: E**k * dist.norm * float(_raw_density(dist, np.asarray(E))),
                a, b, epsabs=1e-13, epsrel=1e-12, limit=400,
            )
            total += part
        mom.append(total)
    mean = mom[0]
    if not _moment_converges(dist, 2):
        return SpectralSummary(mean, None, None)
    var = mom[1] - mean * mean
    sigma = math.sqrt(max(var, 0.0))
    return SpectralSummary(mean, sigma, 1.0 / sigma if sigma > 0.0 else None)


@dataclass(frozen=True)
class TailExponent:
    slope: float
    stderr: float
    n_samples: int


def tail_exponent(curve: DecayCurve, window: Tuple[float, float]) -> TailExponent:
    """Least-squares slope of log(value) against log(t) inside the window.

    Requires at least 8 strictly positive samples in the window; the
    standard error of the slope doubles as a scale-freeness diagnostic
    (a pure power law fits with negligible stderr, an exponential does
    not).
    """
    t_lo, t_hi = window
    if not t_hi > t_lo:
        raise ValueError("empty tail window")
    sel = (curve.times >= t_lo) & (curve.times <= t_hi)
    t = curve.times[sel]
    v = curve.values[sel]
    if t.size < 8:
        raise ValueError(f"need at least 8 samples in the window, found {t.size}")
    if np.any(t <= 0.0) or np.any(v <= 0.0):
        raise ValueError("tail_exponent requires positive times and values")
    x, y = np.log(t), np.log(v)
    slope, icept = np.polyfit(x, y, 1)
    resid = y - (slope * x + icept)
    dof = t.size - 2
    sxx = np.sum((x - x.mean()) ** 2)
    stderr = math.sqrt(float(np.sum(resid**2)) / dof / sxx) if dof > 0 else math.inf
    return TailExponent(float(slope), stderr, int(t.size))


def survival_curve(
    dist: EnergyDistribution, times: np.ndarray, rel_tol: float = 1e-9
) -> DecayCurve:
    values = survival_probability(dist, np.asarray(times, dtype=float), rel_tol=rel_tol)
    return DecayCurve(np.asarray(times, dtype=float), np.minimum(values, 1.0), CurveKind.SURVIVAL)


def intensity_curve(
    dist: EnergyDistribution, times: np.ndarray, n0: float = 1.0, rel_tol: float = 1e-10
) -> DecayCurve:
    values = intensity(dist, np.asarray(times, dtype=float), n0=n0, rel_tol=rel_tol)
    return DecayCurve(np.asarray(times, dtype=float), values, CurveKind.INTENSITY, n0=n0)


# --- two-column text export -------------------------------------------------

def _dist_header_items(dist: EnergyDistribution):
    items = [("dist_kind", dist.kind.value),
             ("peak_energy_invns", repr(dist.peak_energy)),
             ("width_invns", repr(dist.width))]
    if dist.threshold is not None:
        items.append(("threshold_invns", repr(dist.threshold)))
    if dist.cutoff_scale is not None:
        items.append(("cutoff_scale_invns", repr(dist.cutoff_scale)))
    items.append(("norm", repr(dist.norm)))
    return items


def write_curve(curve: DecayCurve, fh: TextIO, dist: Optional[EnergyDistribution] = None,
                extra_headers: Optional[dict] = None):
    """Two-column text: '# key: value' headers, then t <TAB> value rows."""
    fh.write(f"# curve: {curve.kind.value}\n")
    fh.write(f"# n0: {curve.n0!r}\n")
    if dist is not None:
        for key, val in _dist_header_items(dist):
            fh.write(f"# {key}: {val}\n")
    if extra_headers:
        for key, val in extra_headers.items():
            fh.write(f"# {key}: {val}\n")
    fh.write("# columns: t_ns value\n")
    for t, v in zip(curve.times, curve.values):
        # plain-float repr round-trips the exact bits and stays parseable
        fh.write(f"{float(t)!r}\t{float(v)!r}\n")


def read_curve(fh: TextIO) -> Tuple[DecayCurve, dict]:
    """Inverse of write_curve; returns the curve and its header dict."""
    meta = {}
    times, values = [], []
    for line in fh:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if ":" in line:
                key, val = line[1:].split(":", 1)
                meta[key.strip()] = val.strip()
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise SchemaError(f"malformed curve row: {line!r}")
        times.append(float(parts[0]))
        values.append(float(parts[1]))
    if "curve" not in meta:
        raise SchemaError("curve file is missing the '# curve:' header")
    try:
        kind = CurveKind(meta["curve"])
    except ValueError as exc:
        raise SchemaError(f"unknown curve kind {meta['curve']!r}") from exc
    n0 = float(meta.get("n0", "1.0"))
    return DecayCurve(np.array(times), np.array(values), kind, n0=n0), meta
