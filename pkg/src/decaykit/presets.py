"""Named constant sets so reference runs are one-liners.

Channel presets carry the two-exponential parameters of the two detector
channels of the reference measurement; the t0 preset is the shared
intensity-maximum position, and the range preset the shared fit window.
"""

from __future__ import annotations

from .models import DecayModel, parse_params

T0_REFERENCE_NS = 2.24
FIT_RANGE_REFERENCE_NS = (3.200, 96.968)

PRESETS: dict[str, dict] = {
    "table1-t0": {"t0_ns": T0_REFERENCE_NS},
    "fit-range-paper": {"fit_range_ns": FIT_RANGE_REFERENCE_NS},
    "table2-ch1": {
        "model": "TwoExp", "C1": 278967.0, "tau1_ns": 1.7333,
        "C2": 6371.3, "tau2_ns": 5.9459, "b": 21.99,
        "t0_ns": T0_REFERENCE_NS, "channel_label": "ch1",
    },
    "table2-ch2": {
        "model": "TwoExp", "C1": 150898.0, "tau1_ns": 1.7326,
        "C2": 8983.5, "tau2_ns": 5.9493, "b": 42.07,
        "t0_ns": T0_REFERENCE_NS, "channel_label": "ch2",
    },
}

IRF_FWHM_REFERENCE_NS = 0.120


def preset_names() -> list[str]:
    return sorted(PRESETS)


def get_preset(name: str) -> dict:
    try:
        return dict(PRESETS[name])
    except KeyError:
        raise ValueError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        ) from None


def preset_model(name: str) -> DecayModel:
    """Decay model embedded in a channel preset."""
    entry = get_preset(name)
    if "model" not in entry:
        raise ValueError(f"preset {name!r} does not define a model")
    lines = [f"model: {entry['model']}"]
    for key in ("C1", "tau1_ns", "C2", "tau2_ns", "b", "t0_ns"):
        lines.append(f"{key}: {entry[key]!r}")
    return parse_params("\n".join(lines))
