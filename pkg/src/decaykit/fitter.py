"""Poisson-weighted least squares for decay histograms.

The objective is Pearson's chi-square with the model in the denominator,

    chi2 = sum_i (y_i - m_i)^2 / m_i,

evaluated at bin centers over a fit range given by bin edges.  Descent
uses the exact gradient of that objective (including the denominator
term) with a Gauss-Newton curvature model and Levenberg-Marquardt
damping.  Strictly positive parameters are optimized in log coordinates;
the background of the power-law model stays linear since it can fit
negative.  Reported covariance is the inverse weighted normal matrix in
natural parameter units at the final point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import (DegenerateDataError, EvaluationError, RankDeficiencyError)
from .models import (DecayModel, ModelKind, NonExpParams, TwoExpParams,
                     eval_vector, gradient_vector, params_vector, PARAM_ORDER)
from .synth import Histogram

FIT_MODES = ("twoexp", "singleexp", "nonexp", "background")

# Free-parameter indices into the frozen 5-vector, per mode.
_FREE_IDX = {
    "twoexp": (0, 1, 2, 3, 4),
    "singleexp": (0, 1, 4),
    "nonexp": (0, 1, 2, 3, 4),
    "background": (4,),
}

# Internal coordinate per frozen slot: True -> log, False -> linear.
_LOG_COORD = {
    ModelKind.TWO_EXP: (True, True, True, True, True),
    ModelKind.NON_EXP: (True, True, True, True, False),
}

# Lifetime of the frozen second component in single-exponential mode;
# large enough that canonical tau ordering never swaps it forward.
_SINGLEEXP_TAU2 = 1.0e9


@dataclass(frozen=True)
class FitOptions:
    """Fit window (bin-edge times) and Levenberg-Marquardt controls.

    Convergence declares on any of: scaled-gradient inf-norm below
    gradient_tolerance * max(1, chi2); an accepted step below
    step_tolerance; or the predicted decrease of the quadratic model
    falling below the float resolution of chi2 itself (at chi2 ~ 1e4 the
    gradient's own evaluation noise sits above the first criterion, so
    the resolution limit is the honest stopping rule there).
    """

    fit_range: Tuple[float, float] = (3.200, 96.968)
    max_iterations: int = 200
    gradient_tolerance: float = 1.0e-10
    step_tolerance: float = 1.0e-12
    damping_init: float = 1.0e-3

    def __post_init__(self):
        lo, hi = self.fit_range
        if not (lo < hi):
            raise ValueError("fit range must satisfy lo < hi")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if min(self.gradient_tolerance, self.step_tolerance,
               self.damping_init) <= 0.0:
            raise ValueError("tolerances and damping must be positive")


@dataclass
class FitResult:
    model: DecayModel
    param_names: Tuple[str, ...]
    covariance: np.ndarray
    standard_errors: np.ndarray
    chi2: float
    reduced_chi2: float
    n_points: int
    n_free: int
    converged: bool
    iterations: int
    fit_range: Tuple[float, float]
    t0: float
    mode: str
    channel_label: str = ""


def select_fit_bins(hist: Histogram, fit_range: Tuple[float, float]):
    """Centers and counts of bins lying entirely inside [lo, hi]."""
    lo, hi = fit_range
    lefts = hist.t_left()
    mask = (lefts >= lo - 1e-9) & (lefts + hist.bin_width_ns <= hi + 1e-9)
    if not np.any(mask):
        # A window that misses the data is a request problem, not a
        # property of the data itself.
        raise ValueError("fit range contains no complete bins")
    return lefts[mask] + 0.5 * hist.bin_width_ns, hist.counts[mask]


def chi_squared(model: DecayModel, hist: Histogram,
                fit_range: Tuple[float, float]) -> float:
    """Pearson chi-square over complete bins inside the range, evaluated at
    bin centers with the model itself as the Poisson variance."""
    t, y = select_fit_bins(hist, fit_range)
    return _chi_squared_arrays(y, model, t)


def _chi_squared_arrays(counts: np.ndarray, model: DecayModel,
                        t_centers: np.ndarray) -> float:
    t_centers = np.atleast_1d(np.asarray(t_centers, dtype=float))
    m = np.atleast_1d(model_values(model.kind, params_vector(model),
                                   model.params.t0, t_centers))
    bad = np.nonzero(~(m > 0.0))[0]
    if bad.size:
        raise EvaluationError(
            f"model is non-positive at t = {t_centers[bad[0]]:.6g} ns; "
            "Poisson weights are undefined there")
    r = np.asarray(counts, dtype=float) - m
    return float(np.sum(r * r / m))


def reduced_chi_squared(chi2: float, n_points: int, n_free: int) -> float:
    dof = n_points - n_free
    if dof <= 0:
        raise DegenerateDataError("no degrees of freedom left")
    return chi2 / dof


def model_values(kind: ModelKind, vec, t0: float, t) -> np.ndarray:
    return eval_vector(kind, vec, t0, t)


def _chi2_parts(y, m):
    # Returns chi2 and d(chi2)/dm per bin; m must be positive.
    r = y - m
    w = 1.0 / m
    chi2 = float(np.sum(r * r * w))
    dchi_dm = -2.0 * r * w - r * r * w * w
    return chi2, dchi_dm


def parameter_covariance(model: DecayModel, t_centers: np.ndarray,
                         free_names: Sequence[str]) -> np.ndarray:
    """Inverse of J^T diag(1/m) J over the free parameters, natural units.

    Raises RankDeficiencyError naming the flat direction when the normal
    matrix is numerically singular.
    """
    order = PARAM_ORDER[model.kind]
    idx = [order.index(name) for name in free_names]
    vec = params_vector(model)
    t0 = model.params.t0
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        m = model_values(model.kind, vec, t0, t_centers)
        if np.any(m <= 0.0):
            raise EvaluationError("model is non-positive inside the fit range")
        J = gradient_vector(model.kind, vec, t0, t_centers)[:, idx]
        A = J.T @ (J / m[:, None])
    d = np.diag(A)
    flat = np.nonzero(~(d > 0.0))[0]
    if flat.size:
        name = free_names[int(flat[0])]
        raise RankDeficiencyError(
            f"normal matrix has no curvature in {name}", null_direction=name)
    # Rank test on the correlation-scaled matrix: the raw normal matrix
    # mixes parameter units spanning many orders of magnitude.
    s = 1.0 / np.sqrt(d)
    As = A * np.outer(s, s)
    evals, evecs = np.linalg.eigh(As)
    if evals[0] <= 1e-12 * evals[-1]:
        v = evecs[:, 0]
        terms = [f"{v[j]:+.3f}*{free_names[j]}" for j in range(len(idx))
                 if abs(v[j]) > 0.3]
        raise RankDeficiencyError(
            "normal matrix is singular; flat direction " + " ".join(terms),
            null_direction=" ".join(terms))
    cov = np.outer(s, s) * ((evecs / evals) @ evecs.T)
    return 0.5 * (cov + cov.T)


def _resolve_t0(hist: Histogram, t0: Optional[float], mode: str) -> float:
    if t0 is not None:
        return float(t0)
    if "t0_ns" in hist.meta:
        return float(hist.meta["t0_ns"])
    if mode == "background":
        return 0.0  # constant model; the histogram peak is noise
    return hist.t_peak


def _regress_log(t, z):
    # Least-squares line through (t, log z); callers guarantee z > 0.
    slope, intercept = np.polyfit(t, np.log(z), 1)
    return slope, intercept


def initial_guess(hist: Histogram, mode: str, *, t0: Optional[float] = None,
                  fit_range: Tuple[float, float] = FitOptions().fit_range) -> DecayModel:
    """Data-driven starting point.

    Background from the last 5% of fit bins; lifetimes from log-linear
    regressions restricted to bins that stand significantly above that
    background, since at typical dynamic range the literal tail of the
    window is pure background.
    """
    if mode not in FIT_MODES:
        raise ValueError(f"unknown fit mode {mode!r}")
    t0 = _resolve_t0(hist, t0, mode)
    t, y = select_fit_bins(hist, fit_range)
    if float(y.sum()) == 0.0:
        raise DegenerateDataError("histogram is empty inside the fit range")
    span = t[-1] - t[0]

    n_tail = max(1, int(0.05 * y.size))
    b0 = float(y[-n_tail:].mean())
    if mode == "background":
        b0 = float(y.mean())
        return _build_model("background", np.array([0.0, 1.0, 0.0, 1.0, max(b0, 1e-9)]), t0)

    z = y - b0
    zmax = float(z.max())
    thresh = max(5.0 * np.sqrt(max(b0, 1.0)), 1e-6 * max(zmax, 1.0))
    usable = np.nonzero(z > thresh)[0]

    kind = ModelKind.NON_EXP if mode == "nonexp" else ModelKind.TWO_EXP
    b_floor = 1e-9 * (1.0 + float(y.max()))
    if kind is ModelKind.TWO_EXP:
        b0 = max(b0, b_floor)

    if usable.size < 10:
        # Flat or near-flat data: the mean is the whole story, amplitudes
        # start at the counting-noise scale (anything below it is invisible).
        b0 = max(float(y.mean()), b_floor)
        amp = float(np.sqrt(b0 + 1.0))
        if mode == "nonexp":
            vec = np.array([amp, span / 10.0, amp, 1.5, b0])
        elif mode == "singleexp":
            vec = np.array([amp, span / 10.0, 0.0, _SINGLEEXP_TAU2, b0])
        else:
            vec = np.array([amp, span / 50.0, amp / 10.0, span / 5.0, b0])
        return _build_model(mode, vec, t0)

    tu, zu = t[usable], z[usable]
    third = max(2, usable.size // 3)

    def tail_fit(ts, zs):
        slope, intercept = _regress_log(ts, zs)
        if slope >= 0.0:
            return span / 5.0, float(zs[-1])
        tau = -1.0 / slope
        amp = float(np.exp(intercept + slope * t0))
        return tau, amp

    tau2, c2 = tail_fit(tu[-third:], zu[-third:])

    if mode == "singleexp":
        tau, c = tail_fit(tu, zu)
        vec = np.array([c, tau, 0.0, _SINGLEEXP_TAU2, b0])
        return _build_model(mode, vec, t0)

    if mode == "nonexp":
        # Exponential part from the early usable bins, power law anchored
        # mid-tail with a generic exponent.
        tau, c = tail_fit(tu[:third], zu[:third])
        beta0 = 1.5
        t_ref = tu[min(usable.size - 1, 2 * third)]
        z_ref = max(float(zu[min(usable.size - 1, 2 * third)]), thresh)
        cp = 0.5 * z_ref * (t_ref - t0) ** beta0
        vec = np.array([max(c, thresh), max(tau, 1e-3), max(cp, thresh), beta0, b0])
        return _build_model(mode, vec, t0)

    # twoexp: strip the slow component, refit the fast one early.
    resid = zu[:third] - c2 * np.exp(-(tu[:third] - t0) / tau2)
    good = resid > 0.0
    if np.count_nonzero(good) >= 2:
        tau1, c1 = tail_fit(tu[:third][good], resid[good])
    else:
        tau1, c1 = tau2 / 3.0, zmax
    if not (0.0 < tau1 < tau2):
        tau1 = tau2 / 3.0
        c1 = max(zmax - c2, 0.1 * zmax)
    vec = np.array([max(c1, thresh), tau1, max(c2, thresh), tau2, b0])
    return _build_model(mode, vec, t0)


def _build_model(mode: str, vec: np.ndarray, t0: float) -> DecayModel:
    vals = [float(v) for v in vec]  # plain floats so reprs stay parseable
    if mode == "nonexp":
        return DecayModel(ModelKind.NON_EXP, NonExpParams(*vals, t0))
    return DecayModel(ModelKind.TWO_EXP, TwoExpParams(*vals, t0))


def _to_internal(vec, log_mask, free_idx):
    z = []
    for j in free_idx:
        z.append(np.log(vec[j]) if log_mask[j] else vec[j])
    return np.array(z)


def _from_internal(z, template, log_mask, free_idx):
    vec = template.copy()
    for k, j in enumerate(free_idx):
        vec[j] = np.exp(z[k]) if log_mask[j] else z[k]
    return vec


def fit(hist: Histogram, mode: str = "twoexp", *,
        options: FitOptions = FitOptions(),
        t0: Optional[float] = None,
        initial: Optional[DecayModel] = None,
        channel_label: Optional[str] = None) -> FitResult:
    """Levenberg-Marquardt fit of one histogram.

    Non-convergence is reported through FitResult.converged, not raised;
    singular covariance at the optimum raises RankDeficiencyError.
    """
    if mode not in FIT_MODES:
        raise ValueError(f"unknown fit mode {mode!r}")
    t0 = _resolve_t0(hist, t0, mode)
    t, y = select_fit_bins(hist, options.fit_range)
    kind = ModelKind.NON_EXP if mode == "nonexp" else ModelKind.TWO_EXP
    if (kind is ModelKind.TWO_EXP and t[0] < t0) or \
       (kind is ModelKind.NON_EXP and t[0] <= t0):
        raise ValueError("fit range starts before the model time origin t0")

    start = initial if initial is not None else initial_guess(
        hist, mode, t0=t0, fit_range=options.fit_range)
    if start.kind is not kind:
        raise ValueError(f"initial model kind {start.kind.value} does not match mode {mode!r}")
    if abs(start.params.t0 - t0) > 1e-12:
        raise ValueError("initial model carries a different t0")

    free_idx = _FREE_IDX[mode]
    log_mask = _LOG_COORD[kind]
    n_free = len(free_idx)
    if y.size <= n_free:
        raise DegenerateDataError("fewer fit bins than free parameters")

    template = params_vector(start)
    if mode == "singleexp":
        template[2], template[3] = 0.0, _SINGLEEXP_TAU2
    for j in free_idx:
        if log_mask[j] and template[j] <= 0.0:
            raise ValueError("log-coordinate parameter must start positive")

    z = _to_internal(template, log_mask, free_idx)
    vec = _from_internal(z, template, log_mask, free_idx)
    m = model_values(kind, vec, t0, t)
    if np.any(m <= 0.0):
        raise EvaluationError("initial model is non-positive inside the fit range")
    chi2, dchi_dm = _chi2_parts(y, m)

    lam = options.damping_init
    converged = False
    iterations = 0
    # Trial steps may push parameters to extremes where exp underflows;
    # non-finite trials are rejected below, so silence the IEEE chatter.
    _quiet = dict(over="ignore", under="ignore", invalid="ignore")
    while iterations < options.max_iterations:
        iterations += 1
        with np.errstate(**_quiet):
            J = gradient_vector(kind, vec, t0, t)[:, list(free_idx)]
        J = np.where(np.isfinite(J), J, 0.0)
        scale = np.array([vec[j] if log_mask[j] else 1.0 for j in free_idx])
        Ji = J * scale
        g = Ji.T @ dchi_dm
        gnorm = float(np.max(np.abs(g)))
        if gnorm < options.gradient_tolerance * max(1.0, chi2):
            converged = True
            break
        H = 2.0 * (Ji.T @ (Ji / m[:, None]))
        d = np.diag(H).copy()
        d = np.maximum(d, 1e-12 * max(float(d.max()), 1e-300))
        # Remaining decrease along the near-undamped step; once it drops
        # below the float resolution of chi2 the optimum is reached even
        # though the strict-descent gate can no longer certify progress.
        try:
            probe = np.linalg.solve(H + 1e-14 * np.diag(d), -g)
            predicted = float(-(g @ probe) - 0.5 * probe @ (H @ probe))
        except np.linalg.LinAlgError:
            predicted = np.inf
        if 0.0 <= predicted <= 8.0 * np.finfo(float).eps * max(1.0, chi2):
            converged = True
            break
        accepted = False
        while lam < 1e12:
            try:
                step = np.linalg.solve(H + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            z_try = z + step
            vec_try = _from_internal(z_try, template, log_mask, free_idx)
            with np.errstate(**_quiet):
                m_try = model_values(kind, vec_try, t0, t)
            if np.all(np.isfinite(m_try)) and np.all(m_try > 0.0):
                chi2_try, dchi_try = _chi2_parts(y, m_try)
                if chi2_try < chi2:
                    z, vec, m = z_try, vec_try, m_try
                    chi2, dchi_dm = chi2_try, dchi_try
                    lam = max(lam * 0.3, 1e-14)
                    accepted = True
                    if float(np.max(np.abs(step))) < options.step_tolerance:
                        converged = True
                    break
            lam *= 10.0
        if not accepted:
            break
        if converged:
            break

    final = _build_model(mode, vec, t0)
    free_names = tuple(PARAM_ORDER[kind][j] for j in free_idx)
    cov = parameter_covariance(final, t, free_names)

    # Lifetime canonicalization may have swapped the components; mirror
    # the swap in the covariance ordering.
    if mode == "twoexp" and not np.array_equal(params_vector(final), vec):
        perm = [2, 3, 0, 1, 4]
        cov = cov[np.ix_(perm, perm)]

    se = np.sqrt(np.diag(cov))
    rchi2 = reduced_chi_squared(chi2, y.size, n_free)
    label = channel_label if channel_label is not None else hist.channel_label
    return FitResult(model=final, param_names=free_names, covariance=cov,
                     standard_errors=se, chi2=chi2, reduced_chi2=rchi2,
                     n_points=int(y.size), n_free=n_free, converged=converged,
                     iterations=iterations, fit_range=options.fit_range,
                     t0=t0, mode=mode, channel_label=label)


def report_dict(result: FitResult) -> dict:
    """JSON-ready fit report; insertion order is the file order."""
    p = result.model.params
    params = {name: float(getattr(p, name)) for name in result.param_names}
    return {
        "model": result.model.kind.value,
        "mode": result.mode,
        "channel_label": result.channel_label,
        "t0_ns": result.t0,
        "fit_range_ns": list(result.fit_range),
        "parameter_order": list(result.param_names),
        "parameters": params,
        "standard_errors": {name: float(se) for name, se
                            in zip(result.param_names, result.standard_errors)},
        "covariance": [[float(v) for v in row] for row in result.covariance],
        "chi2": result.chi2,
        "reduced_chi2": result.reduced_chi2,
        "n_points": result.n_points,
        "n_free_parameters": result.n_free,
        "converged": result.converged,
        "iterations": result.iterations,
    }


def result_from_report(data: dict) -> FitResult:
    """Rebuild a FitResult from a report dict (file round-trip)."""
    from .errors import SchemaError

    try:
        kind = ModelKind(data["model"])
        mode = data["mode"]
        t0 = float(data["t0_ns"])
        names = tuple(data["parameter_order"])
        params = data["parameters"]
        vec5 = np.zeros(5)
        order = PARAM_ORDER[kind]
        if mode == "singleexp":
            vec5[3] = _SINGLEEXP_TAU2
        for name in names:
            vec5[order.index(name)] = float(params[name])
        model = _build_model(mode, vec5, t0)
        cov = np.array(data["covariance"], dtype=float)
        se = np.array([float(data["standard_errors"][n]) for n in names])
        return FitResult(
            model=model, param_names=names, covariance=cov,
            standard_errors=se, chi2=float(data["chi2"]),
            reduced_chi2=float(data["reduced_chi2"]),
            n_points=int(data["n_points"]), n_free=int(data["n_free_parameters"]),
            converged=bool(data["converged"]), iterations=int(data["iterations"]),
            fit_range=tuple(float(v) for v in data["fit_range_ns"]),
            t0=t0, mode=mode, channel_label=data.get("channel_label", ""))
    except (KeyError, ValueError, TypeError) as exc:
        raise SchemaError(f"malformed fit report: {exc}") from exc
