"""Device description files.

A device file is YAML with linear frequencies in GHz::

    q1_freq_GHz: 4.3796
    q1_anharm_GHz: -0.2393
    q2_freq_GHz: 4.61368
    q2_anharm_GHz: -0.24278
    lambda: 1.0
    target_zz_kHz: 90      # or J_GHz, never both
    levels: 3
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import yaml

from .errors import ConfigError
from .hilbert import FockSpace
from .model import FIT_J_TOL, DeviceParams, TransmonParams, fit_J, ghz, khz

REQUIRED = ("q1_freq_GHz", "q1_anharm_GHz", "q2_freq_GHz", "q2_anharm_GHz")
OPTIONAL = ("lambda", "J_GHz", "target_zz_kHz", "levels")


@dataclass(frozen=True)
class LoadedDevice:
    device: DeviceParams
    provenance: dict


def _number(doc: dict, key: str) -> float:
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{key} must be a finite number, got {value!r}")
    return float(value)


def device_from_mapping(doc: dict, levels: int | None = None) -> LoadedDevice:
    """Validate a parsed device mapping and resolve J (fitting it to the ZZ target if needed)."""
    if not isinstance(doc, dict):
        raise ConfigError("device file must contain a mapping")
    unknown = set(doc) - set(REQUIRED) - set(OPTIONAL)
    if unknown:
        raise ConfigError(f"unknown device keys: {', '.join(sorted(unknown))}")
    missing = [k for k in REQUIRED if k not in doc]
    if missing:
        raise ConfigError(f"missing device keys: {', '.join(missing)}")
    has_J, has_zz = "J_GHz" in doc, "target_zz_kHz" in doc
    if has_J == has_zz:
        raise ConfigError("specify exactly one of J_GHz and target_zz_kHz")

    d = levels if levels is not None else doc.get("levels", 3)
    if isinstance(d, bool) or not isinstance(d, int):
        raise ConfigError(f"levels must be an integer, got {d!r}")
    lam = _number(doc, "lambda") if "lambda" in doc else 1.0
    try:
        q1 = TransmonParams(ghz(_number(doc, "q1_freq_GHz")), ghz(_number(doc, "q1_anharm_GHz")))
        q2 = TransmonParams(ghz(_number(doc, "q2_freq_GHz")), ghz(_number(doc, "q2_anharm_GHz")))
        space = FockSpace(d)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    dev = DeviceParams(q1, q2, 0.0, lam, space)

    if has_J:
        J = ghz(_number(doc, "J_GHz"))
        prov = {"J": {"source": "device file", "value_rad_s": J}}
    else:
        target = khz(_number(doc, "target_zz_kHz"))
        J = fit_J(dev, target)
        prov = {
            "J": {
                "source": "fit_J",
                "value_rad_s": J,
                "target_zz_rad_s": target,
                "tolerance_rad_s": FIT_J_TOL,
            }
        }
    return LoadedDevice(dev.with_J(J), prov)


def load_device(path: str | Path, levels: int | None = None) -> LoadedDevice:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read device file {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path} is not valid YAML: {exc}") from exc
    return device_from_mapping(doc, levels)
