"""Synthetic photon-count histograms.

A histogram covers one repetition window split into uniform bins; counts
are expected photons per bin (the model convention) or Poisson draws of
them.  Expected counts are exact bin averages of the model curve, so a
fitted amplitude reads directly as counts in the peak bin.  Bin edges
are i * bin_width; the time origin t0 of the decay must land at or after
the first model bin edge.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaError
from .models import DecayModel, ModelKind, params_items
from .spectral import EnergyDistribution, survival_probability

_FWHM_TO_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 output step; used to derive replicate seeds."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def replicate_seed(base_seed: int, index: int) -> int:
    """Deterministic per-replicate seed; index 0 already differs from base."""
    if index < 0:
        raise ValueError("replicate index must be non-negative")
    return (base_seed & _MASK64) ^ splitmix64(index)


@dataclass(frozen=True)
class AcquisitionConfig:
    """Timing setup of one measurement channel."""

    window_ns: float = 100.0
    bin_width_ns: float = 0.008
    rep_rate_hz: float = 1.0e7
    irf_fwhm_ns: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.window_ns <= 0.0 or self.bin_width_ns <= 0.0:
            raise ValueError("window and bin width must be positive")
        ratio = self.window_ns / self.bin_width_ns
        if abs(ratio - round(ratio)) > 1e-6:
            raise ValueError("window must be an integer number of bins")
        if self.rep_rate_hz <= 0.0:
            raise ValueError("repetition rate must be positive")
        period_ns = 1.0e9 / self.rep_rate_hz
        if self.window_ns > period_ns * (1.0 + 1e-9):
            raise ValueError("window exceeds the repetition period")
        if self.irf_fwhm_ns is not None and self.irf_fwhm_ns <= 0.0:
            raise ValueError("IRF FWHM must be positive")

    @property
    def n_bins(self) -> int:
        return int(round(self.window_ns / self.bin_width_ns))

    def edges(self) -> np.ndarray:
        return np.arange(self.n_bins + 1) * self.bin_width_ns

    @property
    def period_ns(self) -> float:
        return 1.0e9 / self.rep_rate_hz


@dataclass
class Histogram:
    """Counts per bin over one window.  Counts are non-negative reals:
    integers after sampling, fractional for noise-free expectations."""

    counts: np.ndarray
    bin_width_ns: float
    window_ns: float
    channel_label: str = ""
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        self.bin_width_ns = float(self.bin_width_ns)
        self.window_ns = float(self.window_ns)
        if self.counts.ndim != 1 or self.counts.size == 0:
            raise ValueError("counts must be a non-empty 1-D array")
        if not np.all(np.isfinite(self.counts)) or np.any(self.counts < 0.0):
            raise ValueError("counts must be finite and non-negative")
        if abs(self.window_ns - self.counts.size * self.bin_width_ns) > 1e-6:
            raise ValueError("window, bin width and count length disagree")

    @property
    def n_bins(self) -> int:
        return self.counts.size

    def t_left(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.bin_width_ns

    def t_centers(self) -> np.ndarray:
        return (np.arange(self.n_bins) + 0.5) * self.bin_width_ns

    def bin_edges(self) -> np.ndarray:
        return np.arange(self.n_bins + 1) * self.bin_width_ns

    @property
    def t_peak(self) -> float:
        """Center of the first maximal bin."""
        i = int(np.argmax(self.counts))
        return (i + 0.5) * self.bin_width_ns

    def __eq__(self, other):
        if not isinstance(other, Histogram):
            return NotImplemented
        return (np.array_equal(self.counts, other.counts)
                and self.bin_width_ns == other.bin_width_ns
                and self.window_ns == other.window_ns
                and self.channel_label == other.channel_label
                and self.seed == other.seed
                and self.meta == other.meta)


def bin_averages(model: DecayModel, edges: np.ndarray) -> np.ndarray:
    """Exact bin averages of the model over consecutive [edges[i], edges[i+1])."""
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2:
        raise ValueError("need at least two bin edges")
    if np.any(np.diff(edges) <= 0.0):
        raise ValueError("bin edges must be strictly increasing")
    p = model.params
    lo, hi = edges[:-1] - p.t0, edges[1:] - p.t0
    width = hi - lo
    if model.kind is ModelKind.TWO_EXP:
        if lo[0] < -1e-12:
            raise ValueError("TwoExp bins must start at or after t0")
        lo = np.maximum(lo, 0.0)
        out = np.full(lo.size, p.b)
        for C, tau in ((p.C1, p.tau1), (p.C2, p.tau2)):
            out += C * tau * (np.exp(-lo / tau) - np.exp(-hi / tau)) / width
        return out
    if lo[0] <= 0.0:
        raise ValueError("NonExp bins must start after t0 (power law singular at t0)")
    out = np.full(lo.size, p.b)
    out += p.C * p.tau * (np.exp(-lo / p.tau) - np.exp(-hi / p.tau)) / width
    om = 1.0 - p.beta
    if abs(om) < 1e-12:
        out += p.Cp * np.log(hi / lo) / width
    else:
        # lo**om * expm1(om log(hi/lo)) / om stays stable as beta -> 1
        out += p.Cp * lo ** om * np.expm1(om * np.log(hi / lo)) / (om * width)
    return out


def expected_counts(model: DecayModel, config: AcquisitionConfig,
                    t_range: tuple[float, float] | None = None) -> np.ndarray:
    """Expected counts for every config bin lying fully inside t_range.

    The model value carries counts-per-bin units, so the expectation is the
    width-normalized integral (exact bin average), not the raw integral.
    With no range the whole window from the first bin edge at or after t0
    is used.
    """
    edges = config.edges()
    if t_range is None:
        i0 = int(np.searchsorted(edges, model.params.t0 - 1e-12))
        if i0 >= config.n_bins:
            raise ValueError("t0 lies beyond the acquisition window")
        return bin_averages(model, edges[i0:])
    lo, hi = float(t_range[0]), float(t_range[1])
    if not lo < hi:
        raise ValueError("range must satisfy t_lo < t_hi")
    keep = (edges[:-1] >= lo - 1e-9) & (edges[1:] <= hi + 1e-9)
    if not keep.any():
        raise ValueError("range contains no complete bins inside the window")
    first = int(np.argmax(keep))
    last = first + int(keep[first:].sum())
    return bin_averages(model, edges[first:last + 1])


def sample_poisson(expected: np.ndarray, seed: int) -> np.ndarray:
    """Poisson draw per bin; fixed seed gives identical output everywhere."""
    expected = np.asarray(expected, dtype=float)
    if np.any(expected < 0.0) or not np.all(np.isfinite(expected)):
        raise ValueError("expected counts must be finite and non-negative")
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.poisson(expected).astype(float)


def irf_kernel(fwhm_ns: float, bin_width_ns: float) -> np.ndarray:
    """Unit-sum Gaussian kernel sampled at bin centers, clipped at 6 sigma."""
    if fwhm_ns <= 0.0:
        raise ValueError("IRF FWHM must be positive")
    if fwhm_ns < bin_width_ns:
        warnings.warn("IRF FWHM below one bin width; response is under-resolved",
                      RuntimeWarning, stacklevel=2)
    sigma = fwhm_ns / _FWHM_TO_SIGMA
    half = max(1, int(math.ceil(6.0 * sigma / bin_width_ns)))
    x = np.arange(-half, half + 1) * bin_width_ns
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def convolve_irf(expected: np.ndarray, fwhm_ns: float, bin_width_ns: float) -> np.ndarray:
    """Circular convolution with the instrument response; conserves counts.

    The wrap matches the periodic excitation: photons delayed past the
    window reappear at its start.
    """
    from scipy.ndimage import convolve1d

    expected = np.asarray(expected, dtype=float)
    kernel = irf_kernel(fwhm_ns, bin_width_ns)
    if kernel.size > expected.size:
        raise ValueError("IRF kernel wider than the histogram window")
    out = convolve1d(expected, kernel, mode="wrap")
    total_in, total_out = expected.sum(), out.sum()
    if abs(total_out - total_in) > 1e-9 * max(total_in, 1.0):
        raise AssertionError("IRF convolution failed to conserve counts")
    return out


def expected_histogram(model: DecayModel, config: AcquisitionConfig, *,
                       channel_label: str = "",
                       rise_sigma_ns: float = 0.051) -> Histogram:
    """Noise-free full-window expectation: Gaussian rising edge before t0,
    exact model bin averages from the first bin edge at or after t0."""
    p = model.params
    edges = config.edges()
    dt = config.bin_width_ns
    i0 = int(np.searchsorted(edges, p.t0 - 1e-12))
    if i0 >= config.n_bins:
        raise ValueError("t0 lies beyond the acquisition window")
    counts = np.zeros(config.n_bins)
    counts[i0:] = bin_averages(model, edges[i0:])
    if i0 > 0:
        if rise_sigma_ns <= 0.0:
            raise ValueError("rise sigma must be positive")
        # Before t0: background floor plus the Gaussian rising edge of the
        # signal, so a zero-amplitude model stays exactly flat.
        centers = (np.arange(i0) + 0.5) * dt
        signal = counts[i0] - p.b
        rise = np.exp(-0.5 * ((centers - edges[i0]) / rise_sigma_ns) ** 2)
        counts[:i0] = p.b + signal * rise
    if config.irf_fwhm_ns is not None:
        counts = convolve_irf(counts, config.irf_fwhm_ns, dt)
    meta = {"model": model.kind.value}
    for key, value in params_items(model):
        meta[key] = repr(value)
    meta["rise_sigma_ns"] = repr(rise_sigma_ns)
    if config.irf_fwhm_ns is not None:
        meta["irf_fwhm_ns"] = repr(config.irf_fwhm_ns)
    return Histogram(counts, dt, config.window_ns, channel_label=channel_label,
                     meta=meta)


def simulate_histogram(model: DecayModel, config: AcquisitionConfig,
                       seed: int | None = None, *,
                       channel_label: str = "",
                       rise_sigma_ns: float = 0.051) -> Histogram:
    """Poisson realization of expected_histogram.  The seed argument wins
    over config.seed; one of the two must be set."""
    if seed is None:
        seed = config.seed
    if seed is None:
        raise ValueError("no seed: pass one or set it on the AcquisitionConfig")
    clean = expected_histogram(model, config, channel_label=channel_label,
                               rise_sigma_ns=rise_sigma_ns)
    counts = sample_poisson(clean.counts, seed)
    return Histogram(counts, clean.bin_width_ns, clean.window_ns,
                     channel_label=channel_label, seed=seed, meta=clean.meta)


def from_spectral(dist: EnergyDistribution, config: AcquisitionConfig,
                  n0: float, *, t0_ns: float = 0.0,
                  channel_label: str = "",
                  seed: int | None = None) -> Histogram:
    """Decays per bin from a first-principles survival curve:
    n0 * (P(left - t0) - P(right - t0)), exact for each bin, Poisson-sampled
    when a seed is given.

    Bins before t0 are empty; t0 must coincide with a bin edge.  n0 = 0 is
    allowed and yields an all-zero histogram.
    """
    if n0 < 0.0:
        raise ValueError("n0 must be non-negative")
    edges = config.edges()
    i0 = int(np.searchsorted(edges, t0_ns - 1e-12))
    if i0 >= config.n_bins or abs(edges[i0] - t0_ns) > 1e-9:
        raise ValueError("t0 must coincide with a bin edge inside the window")
    counts = np.zeros(config.n_bins)
    if n0 > 0.0:
        p_edges = survival_probability(dist, edges[i0:] - edges[i0])
        counts[i0:] = np.maximum(n0 * -np.diff(p_edges), 0.0)
    if seed is None:
        seed = config.seed
    if seed is not None:
        counts = sample_poisson(counts, seed)
    meta = {"source": "spectral", "distribution": dist.kind.value,
            "n0": repr(n0), "t0_ns": repr(edges[i0])}
    return Histogram(counts, config.bin_width_ns, config.window_ns,
                     channel_label=channel_label, seed=seed, meta=meta)


# --- delimited file format ---------------------------------------------------

def _format_count(value: float) -> str:
    if value == int(value) and abs(value) < 2 ** 53:
        return str(int(value))
    return repr(float(value))  # plain float, so the repr is parseable


def write_histogram(hist: Histogram, fh) -> None:
    """Tab-separated t_left_ns / count rows under '# key: value' headers."""
    fh.write(f"# channel_label: {hist.channel_label}\n")
    fh.write(f"# bin_width_ns: {hist.bin_width_ns!r}\n")
    fh.write(f"# window_ns: {hist.window_ns!r}\n")
    fh.write(f"# t_peak_ns: {hist.t_peak!r}\n")
    if hist.seed is not None:
        fh.write(f"# seed: {hist.seed}\n")
    for key, value in hist.meta.items():
        fh.write(f"# {key}: {value}\n")
    fh.write("# columns: t_left_ns\tcount\n")
    for i, c in enumerate(hist.counts):
        fh.write(f"{i * hist.bin_width_ns!r}\t{_format_count(c)}\n")


def read_histogram(fh) -> Histogram:
    """Inverse of write_histogram; meta values stay strings."""
    headers: dict[str, str] = {}
    counts = []
    for lineno, raw in enumerate(fh, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if ":" not in body:
                raise SchemaError(f"line {lineno}: malformed header {line!r}")
            key, val = body.split(":", 1)
            headers[key.strip()] = val.strip()
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise SchemaError(f"line {lineno}: expected two tab-separated columns")
        try:
            t_left, count = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise SchemaError(f"line {lineno}: non-numeric data") from exc
        if count < 0.0:
            raise SchemaError(f"line {lineno}: negative count")
        counts.append((t_left, count))
    for key in ("bin_width_ns", "window_ns"):
        if key not in headers:
            raise SchemaError(f"missing required header {key!r}")
    try:
        bin_width = float(headers.pop("bin_width_ns"))
        window = float(headers.pop("window_ns"))
    except ValueError as exc:
        raise SchemaError("non-numeric bin_width_ns or window_ns header") from exc
    label = headers.pop("channel_label", "")
    seed_text = headers.pop("seed", None)
    try:
        seed = int(seed_text) if seed_text is not None else None
    except ValueError as exc:
        raise SchemaError("non-integer seed header") from exc
    headers.pop("t_peak_ns", None)
    headers.pop("columns", None)
    if not counts:
        raise SchemaError("histogram file has no data rows")
    n = len(counts)
    if abs(window - n * bin_width) > 1e-6:
        raise SchemaError("row count disagrees with window / bin width")
    for i, (t_left, _) in enumerate(counts):
        if abs(t_left - i * bin_width) > 1e-9:
            raise SchemaError(f"data row {i} has t_left {t_left}, expected {i * bin_width}")
    return Histogram(np.array([c for _, c in counts]), bin_width, window,
                     channel_label=label, seed=seed, meta=headers)
