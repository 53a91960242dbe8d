"""Phenomenological decay-curve models and their gradients.

Model values are expected counts per bin, evaluated at bin-center times;
the zero-time offset t0 is the position of the histogram peak and is not
a fit parameter.  Two shapes are provided:

    two-exponential:   C1 exp(-(t-t0)/tau1) + C2 exp(-(t-t0)/tau2) + b
    non-exponential:   C exp(-(t-t0)/tau) + Cp (t-t0)^(-beta) + b

Gradients are analytic, with a frozen parameter order used everywhere
(fit vectors, covariance rows, reports):

    TwoExp: (C1, tau1, C2, tau2, b)        NonExp: (C, tau, Cp, beta, b)
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .errors import SchemaError


class ModelKind(enum.Enum):
    TWO_EXP = "TwoExp"
    NON_EXP = "NonExp"


@dataclass(frozen=True)
class TwoExpParams:
    """Two-exponential parameters; canonicalized so that tau1 <= tau2."""

    C1: float
    tau1: float
    C2: float
    tau2: float
    b: float
    t0: float

    def __post_init__(self):
        if self.tau1 <= 0.0 or self.tau2 <= 0.0:
            raise ValueError("lifetimes must be positive")
        if self.C1 < 0.0 or self.C2 < 0.0 or self.b < 0.0:
            raise ValueError("amplitudes and background must be non-negative")
        if self.tau1 > self.tau2:
            for name, value in (("C1", self.C2), ("tau1", self.tau2),
                                ("C2", self.C1), ("tau2", self.tau1)):
                object.__setattr__(self, name, value)


@dataclass(frozen=True)
class NonExpParams:
    """Exponential-plus-power-law parameters; defined for t > t0 only."""

    C: float
    tau: float
    Cp: float
    beta: float
    b: float
    t0: float

    def __post_init__(self):
        if self.tau <= 0.0:
            raise ValueError("tau must be positive")
        if self.beta <= 0.0:
            raise ValueError("beta must be positive")


Params = Union[TwoExpParams, NonExpParams]

PARAM_ORDER = {
    ModelKind.TWO_EXP: ("C1", "tau1", "C2", "tau2", "b"),
    ModelKind.NON_EXP: ("C", "tau", "Cp", "beta", "b"),
}


@dataclass(frozen=True)
class DecayModel:
    kind: ModelKind
    params: Params

    def __post_init__(self):
        want = TwoExpParams if self.kind is ModelKind.TWO_EXP else NonExpParams
        if not isinstance(self.params, want):
            raise ValueError(f"{self.kind.value} model requires {want.__name__}")


def two_exp(C1, tau1, C2, tau2, b, t0) -> DecayModel:
    return DecayModel(ModelKind.TWO_EXP, TwoExpParams(C1, tau1, C2, tau2, b, t0))


def non_exp(C, tau, Cp, beta, b, t0) -> DecayModel:
    return DecayModel(ModelKind.NON_EXP, NonExpParams(C, tau, Cp, beta, b, t0))


def eval_vector(kind: ModelKind, vec, t0: float, t) -> np.ndarray:
    """Evaluate from a frozen-order parameter vector (used by the fitter,
    which must handle trial vectors without lifetime canonicalization)."""
    arr = np.asarray(t, dtype=float)
    dt = arr - t0
    if kind is ModelKind.TWO_EXP:
        if np.any(dt < 0.0):
            raise ValueError("TwoExp model requires t >= t0")
        C1, tau1, C2, tau2, b = vec
        out = C1 * np.exp(-dt / tau1) + C2 * np.exp(-dt / tau2) + b
    else:
        if np.any(dt <= 0.0):
            raise ValueError("NonExp model requires t > t0 (power law singular at t0)")
        C, tau, Cp, beta, b = vec
        out = C * np.exp(-dt / tau) + Cp * dt ** (-beta) + b
    return float(out) if arr.ndim == 0 else out


def gradient_vector(kind: ModelKind, vec, t0: float, t) -> np.ndarray:
    """Analytic gradient in the frozen parameter order, shape (len(t), 5)."""
    arr = np.atleast_1d(np.asarray(t, dtype=float))
    dt = arr - t0
    g = np.empty((arr.size, 5))
    if kind is ModelKind.TWO_EXP:
        if np.any(dt < 0.0):
            raise ValueError("TwoExp model requires t >= t0")
        C1, tau1, C2, tau2, _ = vec
        e1 = np.exp(-dt / tau1)
        e2 = np.exp(-dt / tau2)
        g[:, 0] = e1
        g[:, 1] = C1 * e1 * dt / (tau1 * tau1)
        g[:, 2] = e2
        g[:, 3] = C2 * e2 * dt / (tau2 * tau2)
        g[:, 4] = 1.0
    else:
        if np.any(dt <= 0.0):
            raise ValueError("NonExp model requires t > t0 (power law singular at t0)")
        C, tau, Cp, beta, _ = vec
        e = np.exp(-dt / tau)
        pw = dt ** (-beta)
        g[:, 0] = e
        g[:, 1] = C * e * dt / (tau * tau)
        g[:, 2] = pw
        g[:, 3] = -Cp * pw * np.log(dt)
        g[:, 4] = 1.0
    return g


def model_eval(model: DecayModel, t) -> np.ndarray:
    """Evaluate the model at times t (scalar or array)."""
    return eval_vector(model.kind, params_vector(model), model.params.t0, t)


def model_gradient(model: DecayModel, t) -> np.ndarray:
    """Analytic gradient in the frozen parameter order, shape (len(t), 5).

    t0 is fixed by construction and carries no gradient column.
    """
    return gradient_vector(model.kind, params_vector(model), model.params.t0, t)


# --- flat key-value serialization -------------------------------------------

_KEY_MAP = {
    ModelKind.TWO_EXP: (("C1", "C1"), ("tau1_ns", "tau1"), ("C2", "C2"),
                        ("tau2_ns", "tau2"), ("b", "b"), ("t0_ns", "t0")),
    ModelKind.NON_EXP: (("C", "C"), ("tau_ns", "tau"), ("Cp", "Cp"),
                        ("beta", "beta"), ("b", "b"), ("t0_ns", "t0")),
}


def params_items(model: DecayModel) -> list[Tuple[str, float]]:
    """(file key, value) pairs in serialization order, t0 included."""
    return [(key, getattr(model.params, attr)) for key, attr in _KEY_MAP[model.kind]]


def format_params(model: DecayModel) -> str:
    """Flat key-value block, one 'key: value' per line."""
    lines = [f"model: {model.kind.value}"]
    for key, value in params_items(model):
        lines.append(f"{key}: {value!r}")
    return "\n".join(lines) + "\n"


def parse_params(text: str) -> DecayModel:
    """Inverse of format_params."""
    fields = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise SchemaError(f"malformed parameter line: {line!r}")
        key, val = line.split(":", 1)
        fields[key.strip()] = val.strip()
    if "model" not in fields:
        raise SchemaError("parameter block is missing the 'model' key")
    try:
        kind = ModelKind(fields["model"])
    except ValueError as exc:
        raise SchemaError(f"unknown model kind {fields['model']!r}") from exc
    kwargs = {}
    for key, attr in _KEY_MAP[kind]:
        if key not in fields:
            raise SchemaError(f"parameter block is missing {key!r}")
        try:
            kwargs[attr] = float(fields[key])
        except ValueError as exc:
            raise SchemaError(f"non-numeric value for {key!r}") from exc
    cls = TwoExpParams if kind is ModelKind.TWO_EXP else NonExpParams
    return DecayModel(kind, cls(**kwargs))


def params_vector(model: DecayModel) -> np.ndarray:
    """Free parameters as a vector in the frozen order."""
    p = model.params
    return np.array([getattr(p, name) for name in PARAM_ORDER[model.kind]])


def with_params_vector(model: DecayModel, vec: np.ndarray) -> DecayModel:
    """Rebuild a model from a frozen-order vector, keeping t0."""
    names = PARAM_ORDER[model.kind]
    kwargs = dict(zip(names, (float(v) for v in vec)))
    kwargs["t0"] = model.params.t0
    cls = TwoExpParams if model.kind is ModelKind.TWO_EXP else NonExpParams
    return DecayModel(model.kind, cls(**kwargs))


def total_expected_rate(model: DecayModel, t_lo: float, t_hi: float) -> float:
    """Exact integral of the model over [t_lo, t_hi] (TwoExp only)."""
    if model.kind is not ModelKind.TWO_EXP:
        raise ValueError("closed-form integral only available for TwoExp")
    p = model.params
    x0, x1 = t_lo - p.t0, t_hi - p.t0
    if x0 < 0.0:
        raise ValueError("integration range must start at or after t0")
    val = p.b * (x1 - x0)
    for C, tau in ((p.C1, p.tau1), (p.C2, p.tau2)):
        val += C * tau * (math.exp(-x0 / tau) - math.exp(-x1 / tau))
    return val
