"""Job configuration: JSON schema and translation into library objects.

Dimensional keys carry their unit as a suffix: ``_MHz`` for (cyclic)
frequencies, converted to rad/us by 2 pi, and ``_us`` for times.  Every
conversion applied is recorded so it can be listed in the manifest.
"""

from __future__ import annotations

import math
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError
from .pulses import CombProfile, Pulse, make_comb, make_sin, make_square, make_truncated_sinc
from .spectra import Gaussian, Lorentzian, Rectangle, SpectralDensity, Tabulated, make_nv_triplet

TWO_PI = 2 * math.pi

_pos = {"type": "number", "exclusiveMinimum": 0}
_num = {"type": "number"}
_count = {"type": "integer", "minimum": 1}

_component = {
    "type": "object",
    "required": ["type", "center_MHz", "weight"],
    "additionalProperties": False,
    "properties": {
        "type": {"enum": ["lorentzian", "rectangle", "gaussian"]},
        "center_MHz": _num,
        "halfwidth_MHz": _pos,
        "fwhm_MHz": _pos,
        "sigma_MHz": _pos,
        "weight": {"type": "number", "minimum": 0},
    },
}

_spectrum = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "preset": {"enum": ["flat", "nv"]},
        "components": {"type": "array", "items": _component, "minItems": 1},
        "file": {"type": "string"},
        "omega0_MHz": _num,
        "windows_MHz": {"type": "array", "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}},
        "density_per_MHz": _pos,
        "linewidth_MHz": _pos,
        "splitting_MHz": {"type": "number", "minimum": 0},
        "total_spins": _pos,
        "width_convention": {"enum": ["hwhm", "fwhm"]},
    },
}

_comb = {
    "type": "object",
    "required": ["m", "tau_s_us"],
    "additionalProperties": False,
    "properties": {
        "m": _count,
        "tau_s_us": _pos,
        "xi": {"enum": ["uniform", "rectangle", "delta"]},
        "width_cells": _count,
        "cells_per_segment": _count,
    },
}

_pulse = {
    "type": "object",
    "required": ["family"],
    "additionalProperties": False,
    "properties": {
        "family": {"enum": ["sin", "square", "sinc", "comb", "file"]},
        "T_us": _pos,
        "n_cells": {"type": "integer", "minimum": 2},
        "zero_crossings": _count,
        "comb": _comb,
        "file": {"type": "string"},
    },
}

_grid = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "tau_max_us": _pos,
        "tau_points": {"type": "integer", "minimum": 2},
        "detuning_points": {"type": "integer", "minimum": 3},
        "detuning_span_MHz": _pos,
    },
}

_transfer = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "tau_tr_us": _pos,
        "coupling_MHz": _pos,
        "periods": _pos,
        "steps_per_period": {"type": "integer", "minimum": 4},
        "oracle_spins": _count,
    },
}

_optimize = {
    "type": "object",
    "required": ["objective", "T_us", "tau_us"],
    "additionalProperties": False,
    "properties": {
        "objective": {"enum": ["fidelity_at", "window", "integrated"]},
        "T_us": _pos,
        "tau_us": _pos,
        "method": {"enum": ["approximate", "exact"]},
        "n_target": _pos,
        "parameterization": {"enum": ["nodes", "comb"]},
        "n_nodes": {"type": "integer", "minimum": 3},
        "n_cells": {"type": "integer", "minimum": 4},
        "comb": _comb,
        "initial": _pulse,
        "detuning_points": {"type": "integer", "minimum": 3},
        "max_outer": _count,
        "max_inner": _count,
    },
}

_scenario = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "linewidth_MHz": _pos,
        "splitting_MHz": {"type": "number", "minimum": 0},
        "total_spins": _pos,
        "collective_coupling_MHz": _pos,
        "kappa_inv_us": _pos,
        "T_us": _pos,
        "reduction": _pos,
        "threshold": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "width_convention": {"enum": ["hwhm", "fwhm"]},
        "n_cells": {"type": "integer", "minimum": 2},
        "detuning_points": {"type": "integer", "minimum": 3},
        "tau_s_us": _pos,
    },
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "command": {"enum": ["fidelity", "select", "transfer", "optimize", "scenario", "figure"]},
        "spectrum": _spectrum,
        "pulse": _pulse,
        "method": {"enum": ["exact", "approximate"]},
        "grid": _grid,
        "transfer": _transfer,
        "optimize": _optimize,
        "scenario": _scenario,
        "figure": {"type": "integer", "enum": [2, 3, 4, 5]},
        "units": {"type": "object", "properties": {"frequency": {"const": "MHz"}, "time": {"const": "us"}}},
    },
}


def validate(cfg):
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None


class Units:
    """Collects the unit conversions applied while reading a config."""

    def __init__(self):
        self.applied = {}

    def mhz(self, block, key, value):
        self.applied[f"{block}.{key}"] = "MHz -> rad/us (x 2 pi)"
        return TWO_PI * value

    def us(self, block, key, value):
        self.applied[f"{block}.{key}"] = "us (unchanged)"
        return float(value)


def _resolve(base, name):
    path = Path(name)
    if not path.is_absolute() and base is not None:
        path = Path(base) / path
    if not path.exists():
        raise ConfigError(f"referenced file does not exist: {path}")
    return path


def build_spectrum(block, units: Units, base=None) -> SpectralDensity:
    block = block or {"preset": "flat"}
    chosen = [k for k in ("preset", "components", "file") if k in block]
    if len(chosen) != 1:
        raise ConfigError("spectrum needs exactly one of 'preset', 'components', 'file'")
    omega0 = units.mhz("spectrum", "omega0_MHz", block["omega0_MHz"]) if "omega0_MHz" in block else 0.0
    kind = chosen[0]
    if kind == "preset" and block["preset"] == "flat":
        n0 = block.get("density_per_MHz", TWO_PI) / TWO_PI
        units.applied["spectrum.density_per_MHz"] = "spins/MHz -> spins/(rad/us) (/ 2 pi)"
        s = SpectralDensity((Rectangle(omega0, 1e12, n0),), omega0=omega0, meta={"flat": True})
    elif kind == "preset":
        for key in ("linewidth_MHz", "splitting_MHz", "total_spins"):
            if key not in block:
                raise ConfigError(f"nv preset needs '{key}'")
        s = make_nv_triplet(omega0, units.mhz("spectrum", "linewidth_MHz", block["linewidth_MHz"]),
                            units.mhz("spectrum", "splitting_MHz", block["splitting_MHz"]),
                            block["total_spins"], block.get("width_convention", "fwhm"))
    elif kind == "components":
        comps = []
        for i, c in enumerate(block["components"]):
            tag = f"spectrum.components[{i}]"
            centre = units.mhz(tag, "center_MHz", c["center_MHz"])
            if c["type"] == "gaussian":
                if "sigma_MHz" not in c:
                    raise ConfigError(f"{tag}: gaussian needs sigma_MHz")
                comps.append(Gaussian(centre, units.mhz(tag, "sigma_MHz", c["sigma_MHz"]), c["weight"]))
                continue
            if ("halfwidth_MHz" in c) == ("fwhm_MHz" in c):
                raise ConfigError(f"{tag}: give exactly one of halfwidth_MHz, fwhm_MHz")
            hw = (units.mhz(tag, "halfwidth_MHz", c["halfwidth_MHz"]) if "halfwidth_MHz" in c
                  else units.mhz(tag, "fwhm_MHz", c["fwhm_MHz"]) / 2)
            if c["type"] == "lorentzian":
                comps.append(Lorentzian(centre, hw, c["weight"]))
            else:
                comps.append(Rectangle(centre, hw, c["weight"] / (2 * hw)))
        s = SpectralDensity(tuple(comps), omega0=omega0)
    else:
        data = np.loadtxt(_resolve(base, block["file"]), delimiter=",", skiprows=1, ndmin=2)
        units.applied["spectrum.file"] = "omega_rad_per_us column read as rad/us"
        s = SpectralDensity((Tabulated(data[:, 0], data[:, 1]),), omega0=omega0)
    if "windows_MHz" in block:
        wins = tuple((units.mhz("spectrum", "windows_MHz", a), TWO_PI * b) for a, b in block["windows_MHz"])
        s = SpectralDensity(s.components, s.omega0, wins, s.meta)
    return s


def build_pulse(block, units: Units, base=None) -> Pulse:
    fam = block["family"]
    n = block.get("n_cells", 4096)
    if fam == "file":
        if "file" not in block:
            raise ConfigError("pulse family 'file' needs 'file'")
        units.applied["pulse.file"] = "t_us, omega_rad_per_us columns read as us, rad/us"
        return Pulse.from_csv(_resolve(base, block["file"]))
    if fam == "comb":
        if "comb" not in block:
            raise ConfigError("comb pulse needs a 'comb' block")
        return make_comb(build_comb_profile(block["comb"], units))
    if "T_us" not in block:
        raise ConfigError(f"pulse family '{fam}' needs T_us")
    T = units.us("pulse", "T_us", block["T_us"])
    if fam == "sin":
        return make_sin(T, n)
    if fam == "square":
        return make_square(T, n)
    return make_truncated_sinc(T, block.get("zero_crossings", 3), n)


def build_comb_profile(block, units: Units) -> CombProfile:
    tau_s = units.us("comb", "tau_s_us", block["tau_s_us"])
    cells = block.get("cells_per_segment", 45)
    kind = block.get("xi", "uniform")
    m = block["m"]
    if kind == "uniform":
        return CombProfile.uniform(tau_s, m, cells)
    if kind == "delta":
        return CombProfile.delta(tau_s, m, cells)
    return CombProfile.rectangle(tau_s, m, block.get("width_cells", max(1, cells // 5)), cells)
