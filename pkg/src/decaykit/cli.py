"""Command line interface.

Subcommands
    simulate   synthetic histograms from a preset or a parameter file
    fit        chi-square fit of one histogram file
    combine    inverse-variance combination of fitted parameters
    theory     first-principles survival and intensity curves
    roundtrip  simulate-then-fit replicate study
    rerun      repeat a recorded run from its manifest

Every command writes a JSON manifest alongside its outputs; re-running
that manifest reproduces all outputs byte for byte.  A PNG figure is
rendered next to each delimited output.  Files are written atomically
(temp file, then rename).  A config file given with --config holds
'key: value' lines mirroring the long flag names; explicit flags win.
The DECAYKIT_OUTDIR environment variable sets the default --outdir.

Exit codes: 0 success, 2 usage error, 3 I/O error, 4 schema error,
5 numeric failure.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import plots
from .combine import (combination_report, estimates_from_reports,
                      inverse_variance_mean)
from .errors import (DegenerateDataError, EvaluationError, QuadratureError,
                     RankDeficiencyError, SchemaError)
from .fitter import (FitOptions, fit, model_values, report_dict,
                     select_fit_bins)
from .models import ModelKind, params_vector, parse_params
from .presets import get_preset, preset_model, preset_names
from .spectral import (DistributionKind, EnergyDistribution, normalize,
                       intensity_curve, survival_curve, tail_exponent,
                       write_curve)
from .synth import (AcquisitionConfig, expected_histogram, read_histogram,
                    replicate_seed, sample_poisson, simulate_histogram,
                    write_histogram, Histogram)

USAGE_EXIT, IO_EXIT, SCHEMA_EXIT, NUMERIC_EXIT = 2, 3, 4, 5

_DIST_KINDS = {
    "bw": DistributionKind.BREIT_WIGNER,
    "tbw": DistributionKind.TRUNCATED_BREIT_WIGNER,
    "tbw-gauss": DistributionKind.TRUNCATED_BREIT_WIGNER_GAUSS_CUTOFF,
}


# --- atomic output helpers ---------------------------------------------------

def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _atomic_figure(render, path: str) -> None:
    tmp = path + ".tmp"
    render(tmp)
    os.replace(tmp, path)


def _ensure_outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _write_manifest(command: str, opts: dict, inputs: list, outputs: list,
                    outdir: str, prefix: str) -> str:
    manifest = {
        "command": command,
        "options": opts,
        "inputs": list(inputs),
        "outputs": list(outputs),
        "seed": opts.get("seed", opts.get("base_seed")),
    }
    path = os.path.join(outdir, f"{prefix}_manifest.json")
    _atomic_write(path, json.dumps(manifest, indent=2) + "\n")
    return path


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not valid JSON: {exc}") from exc


# --- simulate ----------------------------------------------------------------

def run_simulate(opts: dict) -> list:
    outdir = _ensure_outdir(opts["outdir"])
    prefix = opts.get("prefix") or "sim"
    presets = opts.get("preset") or []
    if bool(presets) == bool(opts.get("params")):
        raise ValueError("simulate needs exactly one of --preset or --params")

    channels = []
    if opts.get("params"):
        with open(opts["params"]) as fh:
            model = parse_params(fh.read())
        channels.append((opts.get("label") or "sim", model))
    else:
        if opts.get("label") and len(presets) > 1:
            raise ValueError("--label applies to single-channel runs only")
        for name in presets:
            entry = get_preset(name)
            if "model" not in entry:
                raise ValueError(f"preset {name!r} does not define a model")
            label = opts.get("label") or entry.get("channel_label", name)
            channels.append((label, preset_model(name)))
    if len({label for label, _ in channels}) != len(channels):
        raise ValueError("channel labels collide; use distinct presets")
    if opts.get("model"):
        want = ModelKind.NON_EXP if opts["model"] == "nonexp" else ModelKind.TWO_EXP
        for label, model in channels:
            if model.kind is not want:
                raise ValueError(
                    f"--model {opts['model']} conflicts with {model.kind.value} parameters")

    config = AcquisitionConfig(
        window_ns=opts["window"], bin_width_ns=opts["bin_width"],
        rep_rate_hz=opts["rep_rate_mhz"] * 1e6,
        irf_fwhm_ns=opts.get("irf_fwhm"))
    base_seed = opts["seed"]
    outputs = []
    for idx, (label, model) in enumerate(channels):
        seed = base_seed if len(channels) == 1 else replicate_seed(base_seed, idx)
        hist = simulate_histogram(model, config, seed, channel_label=label,
                                  rise_sigma_ns=opts["rise_sigma"])
        buf = io.StringIO()
        write_histogram(hist, buf)
        data_name = f"{prefix}_{label}_hist.tsv"
        _atomic_write(os.path.join(outdir, data_name), buf.getvalue())
        fig_name = f"{prefix}_{label}_hist.png"
        _atomic_figure(lambda p, h=hist: plots.save_histogram_figure(h, p),
                       os.path.join(outdir, fig_name))
        outputs += [data_name, fig_name]
        print(f"wrote {os.path.join(outdir, data_name)} "
              f"({int(hist.counts.sum())} counts, seed {seed})")
    manifest = _write_manifest("simulate", opts, [], outputs, outdir, prefix)
    print(f"wrote {manifest}")
    return outputs


# --- fit ----------------------------------------------------------------------

def _fit_window_from_presets(opts: dict):
    fit_range = opts.get("range")
    t0 = opts.get("t0")
    for name in opts.get("preset") or []:
        entry = get_preset(name)
        if fit_range is None and "fit_range_ns" in entry:
            fit_range = list(entry["fit_range_ns"])
        if t0 is None and "t0_ns" in entry:
            t0 = entry["t0_ns"]
    return fit_range, t0


def run_fit(opts: dict) -> list:
    outdir = _ensure_outdir(opts["outdir"])
    with open(opts["histogram"]) as fh:
        hist = read_histogram(fh)
    fit_range, t0 = _fit_window_from_presets(opts)
    defaults = FitOptions()
    options = FitOptions(
        fit_range=tuple(fit_range) if fit_range else defaults.fit_range,
        max_iterations=opts.get("max_iterations") or defaults.max_iterations,
        gradient_tolerance=opts.get("gradient_tolerance") or defaults.gradient_tolerance,
        step_tolerance=opts.get("step_tolerance") or defaults.step_tolerance,
        damping_init=opts.get("damping") or defaults.damping_init)
    mode = opts["model"]
    result = fit(hist, mode, options=options, t0=t0,
                 channel_label=opts.get("label"))

    stem = os.path.splitext(os.path.basename(opts["histogram"]))[0]
    if stem.endswith("_hist"):
        stem = stem[:-5]
    prefix = opts.get("prefix") or f"{stem}_{mode}"

    report_name = f"{prefix}_fit.json"
    _atomic_write(os.path.join(outdir, report_name),
                  json.dumps(report_dict(result), indent=2) + "\n")

    t, y = select_fit_bins(hist, options.fit_range)
    m = model_values(result.model.kind, params_vector(result.model), result.t0, t)
    resid = (y - m) / np.sqrt(m)
    head = (f"# channel_label: {result.channel_label}\n"
            f"# model: {result.model.kind.value}\n# mode: {mode}\n")
    model_name = f"{prefix}_model.tsv"
    _atomic_write(os.path.join(outdir, model_name),
                  head + "# columns: t_ns\tmodel_count\n" +
                  "".join(f"{float(ti)!r}\t{float(mi)!r}\n" for ti, mi in zip(t, m)))
    resid_name = f"{prefix}_residuals.tsv"
    _atomic_write(os.path.join(outdir, resid_name),
                  head + "# columns: t_ns\tresidual\n" +
                  "".join(f"{float(ti)!r}\t{float(ri)!r}\n" for ti, ri in zip(t, resid)))
    fig_name = f"{prefix}_fit.png"
    _atomic_figure(lambda p: plots.save_fit_figure(hist, result, p),
                   os.path.join(outdir, fig_name))

    outputs = [report_name, model_name, resid_name, fig_name]
    manifest = _write_manifest("fit", opts, [opts["histogram"]], outputs,
                               outdir, prefix)
    pieces = ", ".join(f"{n} = {v:.6g} +/- {s:.2g}" for n, v, s in
                       zip(result.param_names,
                           (getattr(result.model.params, n) for n in result.param_names),
                           result.standard_errors))
    print(f"{mode} fit: {pieces}")
    print(f"reduced chi2 = {result.reduced_chi2:.4f} over {result.n_points} bins; "
          f"converged = {result.converged} ({result.iterations} iterations)")
    print(f"wrote {os.path.join(outdir, report_name)}")
    print(f"wrote {manifest}")
    return outputs


# --- combine -------------------------------------------------------------------

def run_combine(opts: dict) -> list:
    outdir = _ensure_outdir(opts["outdir"])
    parameter = opts["parameter"]
    reports = [_load_json(p) for p in opts["reports"]]
    estimates = estimates_from_reports(reports, parameter)
    combined = inverse_variance_mean(estimates, scale_errors=opts["scale_errors"])
    record = combination_report(parameter, estimates, combined,
                                threshold=opts.get("pull_threshold"))
    prefix = opts.get("prefix") or f"combine_{parameter}"
    out_name = f"{prefix}.json"
    _atomic_write(os.path.join(outdir, out_name),
                  json.dumps(record, indent=2) + "\n")
    fig_name = f"{prefix}.png"
    _atomic_figure(lambda p: plots.save_combine_figure(parameter, estimates,
                                                       combined, p),
                   os.path.join(outdir, fig_name))
    outputs = [out_name, fig_name]
    manifest = _write_manifest("combine", opts, list(opts["reports"]),
                               outputs, outdir, prefix)
    print(f"{parameter} = {combined.value:.6g} +/- {combined.sigma:.4g} "
          f"({combined.n_inputs} inputs, consistency chi2 = "
          f"{combined.chi2_consistency:.3g})")
    print(f"wrote {os.path.join(outdir, out_name)}")
    print(f"wrote {manifest}")
    return outputs


# --- theory --------------------------------------------------------------------

def _build_distribution(opts: dict) -> EnergyDistribution:
    kind = _DIST_KINDS[opts["dist"]]
    threshold = opts.get("threshold")
    cutoff = opts.get("cutoff")
    if kind is DistributionKind.BREIT_WIGNER:
        if threshold is not None or cutoff is not None:
            raise ValueError("--threshold/--cutoff do not apply to --dist bw")
    else:
        if threshold is None:
            raise ValueError(f"--dist {opts['dist']} requires --threshold")
        if kind is DistributionKind.TRUNCATED_BREIT_WIGNER and cutoff is not None:
            raise ValueError("--cutoff applies to --dist tbw-gauss only")
        if kind is DistributionKind.TRUNCATED_BREIT_WIGNER_GAUSS_CUTOFF and cutoff is None:
            raise ValueError("--dist tbw-gauss requires --cutoff")
    return normalize(EnergyDistribution(
        kind, peak_energy=opts["peak_energy"], width=opts["gamma"],
        threshold=threshold, cutoff_scale=cutoff))


def run_theory(opts: dict) -> list:
    outdir = _ensure_outdir(opts["outdir"])
    dist = _build_distribution(opts)
    width = opts["gamma"]
    # The plain resonance has no power-law tail; follow it for a few
    # mean lifetimes only, where the intensity is still representable.
    t_hi_default = 20.0 / width if opts["dist"] == "bw" else 2000.0 / width
    t_lo = opts.get("t_min") or 0.01 / width
    t_hi = opts.get("t_max") or t_hi_default
    points = opts["points"]
    if points < 1:
        raise ValueError("need at least one grid point")
    if t_lo <= 0.0 or (points > 1 and t_lo >= t_hi):
        raise ValueError("need 0 < t-min < t-max")
    times = np.geomspace(t_lo, t_hi, points)

    pc = survival_curve(dist, times)
    ic = intensity_curve(dist, times, n0=opts["n0"])

    window = tuple(opts["tail_window"]) if opts.get("tail_window") else (t_hi / 10.0, t_hi)
    tail = None
    scale_free = None  # None means the split-window check had too few samples
    try:
        tail = tail_exponent(ic, window)
    except ValueError:
        pass
    if tail is not None:
        try:
            mid = math.sqrt(window[0] * window[1])
            s1 = tail_exponent(ic, (window[0], mid)).slope
            s2 = tail_exponent(ic, (mid, window[1])).slope
            scale_free = abs(s1 - s2) <= 0.3
        except ValueError:
            pass

    prefix = opts.get("prefix") or opts["dist"]
    extra = {}
    if tail is not None:
        extra = {"tail_window_ns": f"{float(window[0])!r} {float(window[1])!r}",
                 "tail_exponent": repr(float(tail.slope)),
                 "tail_exponent_stderr": repr(float(tail.stderr))}
        if scale_free is not None:
            extra["scale_free"] = "true" if scale_free else "false"
    surv_name, inten_name = f"{prefix}_survival.tsv", f"{prefix}_intensity.tsv"
    for name, curve, hdr in ((surv_name, pc, None), (inten_name, ic, extra)):
        buf = io.StringIO()
        write_curve(curve, buf, dist, extra_headers=hdr)
        _atomic_write(os.path.join(outdir, name), buf.getvalue())
    fig_name = f"{prefix}_theory.png"
    _atomic_figure(lambda p: plots.save_theory_figure(pc, ic, tail, p),
                   os.path.join(outdir, fig_name))

    outputs = [surv_name, inten_name, fig_name]
    manifest = _write_manifest("theory", opts, [], outputs, outdir, prefix)
    if tail is not None:
        if scale_free is None:
            verdict = "scale-free check skipped: too few samples per half-window"
        else:
            verdict = "scale-free" if scale_free else "not scale-free"
        print(f"late-time intensity exponent {tail.slope:.4f} +/- {tail.stderr:.4f} "
              f"on [{window[0]:.4g}, {window[1]:.4g}] ns ({verdict})")
    else:
        print("late-time exponent unavailable (too few usable samples)")
    print(f"wrote {os.path.join(outdir, inten_name)}")
    print(f"wrote {manifest}")
    return outputs


# --- roundtrip -------------------------------------------------------------------

def run_roundtrip(opts: dict) -> list:
    outdir = _ensure_outdir(opts["outdir"])
    preset = opts["preset"]
    entry = get_preset(preset)
    if "model" not in entry:
        raise ValueError(f"preset {preset!r} does not define a model")
    model = preset_model(preset)
    label = entry.get("channel_label", preset)
    tau1_true = model.params.tau1

    defaults = FitOptions()
    fit_range = tuple(opts["range"]) if opts.get("range") else defaults.fit_range
    options = FitOptions(fit_range=fit_range)
    config = AcquisitionConfig()
    clean = expected_histogram(model, config, channel_label=label)
    base_seed = opts["base_seed"]
    n = opts["replicates"]
    if n < 1:
        raise ValueError("need at least one replicate")

    def one(i: int):
        seed = replicate_seed(base_seed, i)
        hist = Histogram(sample_poisson(clean.counts, seed), clean.bin_width_ns,
                         clean.window_ns, channel_label=label, seed=seed,
                         meta=clean.meta)
        r = fit(hist, "twoexp", options=options)
        j = r.param_names.index("tau1")
        return (i, seed, r.model.params.tau1, float(r.standard_errors[j]),
                r.reduced_chi2, r.converged, r.iterations)

    workers = opts.get("workers") or 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, range(n)))
    else:
        rows = [one(i) for i in range(n)]

    prefix = opts.get("prefix") or f"roundtrip_{preset}"
    table_name = f"{prefix}.tsv"
    lines = [f"# preset: {preset}", f"# base_seed: {base_seed}",
             f"# tau1_true_ns: {tau1_true!r}",
             "# columns: replicate\tseed\ttau1_ns\tse_tau1_ns\treduced_chi2\tconverged\titerations"]
    for i, seed, tau1, se, rchi2, conv, iters in rows:
        lines.append(f"{i}\t{seed}\t{tau1!r}\t{se!r}\t{rchi2!r}\t{int(conv)}\t{iters}")
    _atomic_write(os.path.join(outdir, table_name), "\n".join(lines) + "\n")

    tau_hat = np.array([r[2] for r in rows])
    se_hat = np.array([r[3] for r in rows])
    rchi2 = np.array([r[4] for r in rows])
    summary = {
        "preset": preset,
        "parameter": "tau1",
        "true_value": tau1_true,
        "base_seed": base_seed,
        "n_replicates": n,
        "median_estimate": float(np.median(tau_hat)),
        "median_abs_error": float(np.median(np.abs(tau_hat - tau1_true))),
        "mean_reported_se": float(se_hat.mean()),
        "scatter_stddev": float(tau_hat.std(ddof=1)) if n > 1 else 0.0,
        "coverage_1sigma": float(np.mean(np.abs(tau_hat - tau1_true) <= se_hat)),
        "n_reduced_chi2_in_0p9_1p1": int(np.sum((rchi2 >= 0.9) & (rchi2 <= 1.1))),
        "n_converged": int(sum(r[5] for r in rows)),
    }
    summary_name = f"{prefix}.json"
    _atomic_write(os.path.join(outdir, summary_name),
                  json.dumps(summary, indent=2) + "\n")
    fig_name = f"{prefix}.png"
    _atomic_figure(lambda p: plots.save_roundtrip_figure(tau_hat, rchi2,
                                                         tau1_true, "tau1 [ns]", p),
                   os.path.join(outdir, fig_name))
    outputs = [table_name, summary_name, fig_name]
    manifest = _write_manifest("roundtrip", opts, [], outputs, outdir, prefix)
    print(f"median tau1 = {summary['median_estimate']:.5f} ns "
          f"(truth {tau1_true}), median |error| = {summary['median_abs_error']:.2e}, "
          f"{summary['n_reduced_chi2_in_0p9_1p1']}/{n} with reduced chi2 in [0.9, 1.1]")
    print(f"wrote {os.path.join(outdir, summary_name)}")
    print(f"wrote {manifest}")
    return outputs


# --- rerun ----------------------------------------------------------------------

_RUNNERS = {
    "simulate": run_simulate,
    "fit": run_fit,
    "combine": run_combine,
    "theory": run_theory,
    "roundtrip": run_roundtrip,
}


def run_rerun(manifest_path: str) -> list:
    data = _load_json(manifest_path)
    try:
        command = data["command"]
        opts = data["options"]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"manifest lacks required field: {exc}") from exc
    if command not in _RUNNERS:
        raise SchemaError(f"manifest names unknown command {command!r}")
    return _RUNNERS[command](opts)


# --- argument parsing -------------------------------------------------------------

def _config_tokens(path: str) -> list:
    """Expand a 'key: value' config file into CLI tokens."""
    tokens = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if ":" not in line:
                raise SchemaError(f"{path}:{lineno}: expected 'key: value'")
            key, val = (s.strip() for s in line.split(":", 1))
            flag = "--" + key.replace("_", "-")
            if val.lower() == "true":
                tokens.append(flag)
            elif val.lower() == "false" or val == "":
                continue
            else:
                tokens.append(flag)
                tokens.extend(val.split())
    return tokens


def _outdir_default() -> str:
    return os.environ.get("DECAYKIT_OUTDIR", ".")


def _add_common(sp):
    sp.add_argument("--outdir", default=_outdir_default(),
                    help="output directory (default: $DECAYKIT_OUTDIR or .)")
    sp.add_argument("--prefix", default=None, help="output file name prefix")
    sp.add_argument("--config", default=None,
                    help="key: value file mirroring the long flags")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="decaykit",
        description="Simulate, fit and analyze photon-count decay histograms.")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="generate synthetic histograms")
    ps.add_argument("--model", choices=("twoexp", "nonexp"), default=None,
                    help="cross-check against the preset/parameter file kind")
    ps.add_argument("--preset", action="append",
                    help=f"named parameter set ({', '.join(preset_names())}); "
                         "repeat for one file per channel")
    ps.add_argument("--params", default=None, help="model parameter file")
    ps.add_argument("--seed", type=int, required=True)
    ps.add_argument("--window", type=float, default=100.0, help="window length [ns]")
    ps.add_argument("--bin-width", type=float, default=0.008, help="bin width [ns]")
    ps.add_argument("--rep-rate-mhz", type=float, default=10.0,
                    help="repetition rate [MHz], informational")
    ps.add_argument("--irf-fwhm", type=float, default=None,
                    help="Gaussian IRF FWHM [ns] (reference instrument: 0.120)")
    ps.add_argument("--rise-sigma", type=float, default=0.051,
                    help="Gaussian rising-edge sigma before t0 [ns]")
    ps.add_argument("--label", default=None, help="channel label override")
    _add_common(ps)

    pf = sub.add_parser("fit", help="fit a histogram file")
    pf.add_argument("histogram", help="histogram file to fit")
    pf.add_argument("--model", choices=("twoexp", "singleexp", "nonexp", "background"),
                    default="twoexp")
    pf.add_argument("--range", type=float, nargs=2, metavar=("LO", "HI"),
                    default=None, help="fit window bin-edge times [ns]")
    pf.add_argument("--t0", type=float, default=None,
                    help="time origin [ns]; default: histogram header, then peak bin")
    pf.add_argument("--preset", action="append",
                    help="apply t0/range from a named preset")
    pf.add_argument("--max-iterations", type=int, default=None)
    pf.add_argument("--gradient-tolerance", type=float, default=None)
    pf.add_argument("--step-tolerance", type=float, default=None)
    pf.add_argument("--damping", type=float, default=None)
    pf.add_argument("--label", default=None, help="channel label override")
    _add_common(pf)

    pc = sub.add_parser("combine", help="combine a parameter across fit reports")
    pc.add_argument("reports", nargs="+", help="fit report JSON files")
    pc.add_argument("--parameter", required=True, help="parameter name, e.g. tau1")
    pc.add_argument("--scale-errors", action="store_true",
                    help="inflate sigma by sqrt(chi2/(n-1)) when inputs disagree")
    pc.add_argument("--pull-threshold", type=float, default=None,
                    help="record pairwise-pull consistency at this threshold")
    _add_common(pc)

    pt = sub.add_parser("theory", help="survival and intensity from a spectral density")
    pt.add_argument("--dist", choices=sorted(_DIST_KINDS), required=True)
    pt.add_argument("--peak-energy", type=float, default=1.0,
                    help="resonance peak position [1/ns]")
    pt.add_argument("--gamma", type=float, required=True, help="resonance width [1/ns]")
    pt.add_argument("--threshold", type=float, default=None,
                    help="lowest admissible energy [1/ns] (tbw, tbw-gauss)")
    pt.add_argument("--cutoff", type=float, default=None,
                    help="Gaussian cutoff scale [1/ns] (tbw-gauss)")
    pt.add_argument("--n0", type=float, default=1.0, help="initial population")
    pt.add_argument("--t-min", type=float, default=None, help="grid start [ns]")
    pt.add_argument("--t-max", type=float, default=None, help="grid end [ns]")
    pt.add_argument("--points", type=int, default=121, help="log-spaced grid size")
    pt.add_argument("--tail-window", type=float, nargs=2, metavar=("LO", "HI"),
                    default=None, help="window for the tail-exponent fit [ns]")
    _add_common(pt)

    pr = sub.add_parser("roundtrip", help="simulate-then-fit replicate study")
    pr.add_argument("--preset", default="table2-ch1")
    pr.add_argument("--replicates", type=int, default=100)
    pr.add_argument("--base-seed", type=int, required=True)
    pr.add_argument("--workers", type=int, default=1)
    pr.add_argument("--range", type=float, nargs=2, metavar=("LO", "HI"), default=None)
    _add_common(pr)

    pm = sub.add_parser("rerun", help="repeat a recorded run from its manifest")
    pm.add_argument("manifest", help="manifest JSON written by a previous run")

    return p


def _config_path(argv: list):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _parse(argv: list) -> argparse.Namespace:
    # Config tokens go right after the subcommand so explicit flags win.
    path = _config_path(argv)
    if path is not None:
        return build_parser().parse_args(argv[:1] + _config_tokens(path) + argv[1:])
    return build_parser().parse_args(argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parse(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "rerun":
            run_rerun(args.manifest)
        else:
            opts = {k: v for k, v in vars(args).items() if k != "command"}
            _RUNNERS[args.command](opts)
        return 0
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return SCHEMA_EXIT
    except (QuadratureError, RankDeficiencyError, EvaluationError,
            DegenerateDataError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return NUMERIC_EXIT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return IO_EXIT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT


if __name__ == "__main__":
    sys.exit(main())
