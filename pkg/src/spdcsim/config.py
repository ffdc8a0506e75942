"""
Experiment configuration: strict JSON schema, validation with field-level
diagnostics, and canonical serialization.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

from jsonschema import Draft202012Validator

from .dispersion import CrystalSpec, FiberSpec, SellmeierSet
from .epmf import METHODS, PumpSpec
from .errors import ConfigError, SpdcError
from .montecarlo import POLARIZERS
from .phasematching import EMISSION_PLANES, SourceGeometry
from .spectrometer import DetectorSpec

BUNDLED_CONFIGS = ("paper.json",)

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_UNIT = {"type": "number", "minimum": 0, "maximum": 1}


def _obj(props, optional=()):
    return {
        "type": "object",
        "properties": props,
        "required": sorted(k for k in props if k not in optional),
        "additionalProperties": False,
    }


_SELLMEIER = _obj({k: _NUM for k in ("A", "B", "C", "D", "lambda_min", "lambda_max")})

_FIBER = _obj({
    "length": _NONNEG,
    "core_radius": _POS,
    "numerical_aperture": _POS,
    "cladding": _SELLMEIER,
})

_DETECTOR = _obj({
    "label": {"type": "string"},
    "jitter_fwhm": _NONNEG,
    "efficiency": _UNIT,
    "dark_count_rate": _NONNEG,
    "gated": {"type": "boolean"},
    "gate_width": {"type": ["number", "null"]},
    "gate_delay": {"type": ["number", "null"]},
}, optional=("gate_width", "gate_delay"))

SCHEMA = _obj({
    "crystal": _obj({
        "cut_angle": _NUM,
        "length": _POS,
        "tilt": _NUM,
        "sellmeier_o": _SELLMEIER,
        "sellmeier_e": _SELLMEIER,
    }),
    "geometry": _obj({
        "pump_waist": _POS,
        "collection_waist": _POS,
        "external_emission_angle": _NUM,
        "emission_plane": {"enum": list(EMISSION_PLANES)},
    }),
    "pump": _obj({
        "kind": {"enum": ["cw", "pulsed"]},
        "center_wavelength": _POS,
        "bandwidth_fwhm": {"type": ["number", "null"]},
    }, optional=("bandwidth_fwhm",)),
    "fibers": {"type": "array", "items": _FIBER, "minItems": 2, "maxItems": 2},
    "detectors": {"type": "array", "items": _DETECTOR, "minItems": 2, "maxItems": 2},
    "tagger_resolution": _POS,
    "acquisition": _obj({
        "pair_rate": _POS,
        "duration": _NONNEG,
        "coupling_efficiency": _UNIT,
        "asymmetry": _UNIT,
        "polarizer": {"enum": list(POLARIZERS)},
        "chunk_duration": _POS,
        "workers": {"type": "integer", "minimum": 1},
    }),
    "grid": _obj({
        "center": _POS,
        "half_width": _POS,
        "size": {"type": "array", "items": {"type": "integer", "minimum": 8}, "minItems": 2, "maxItems": 2},
        "method": {"enum": list(METHODS)},
    }),
    "analysis": _obj({
        "tuning_range": {"type": "array", "prefixItems": [_NUM, _NUM, {"type": "integer", "minimum": 1}],
                         "minItems": 3, "maxItems": 3},
        "cw_pumps": {"type": "array", "items": _POS, "minItems": 1},
        "bandwidth_range": {"type": "array", "items": _POS, "minItems": 2, "maxItems": 2},
        "bin_width": _POS,
        "window": {"type": ["array", "null"], "items": _NUM, "minItems": 2, "maxItems": 2},
        "calibration_order": {"enum": [1, 2]},
        "calibration_wavelengths": {"type": "array", "items": _POS, "minItems": 2},
    }),
    "seed": {"type": "integer", "minimum": 0},
    "outputs": _obj({"directory": {"type": "string", "minLength": 1}}),
})


@dataclass
class ExperimentConfig:
    crystal: CrystalSpec
    geometry: SourceGeometry
    pump: PumpSpec
    fibers: tuple
    detectors: tuple
    tagger_resolution: float
    seed: int
    acquisition: dict
    grid: dict
    analysis: dict
    outputs: dict
    raw: dict = field(repr=False, default_factory=dict)

    def to_dict(self):
        return copy.deepcopy(self.raw)

    def dumps(self):
        return dumps(self.raw)

    def sha256(self):
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()


def dumps(data):
    """Canonical JSON: sorted keys, two-space indent, UTF-8, trailing newline."""
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def _path(parts):
    return ".".join(str(p) for p in parts) or "<root>"


def _build(errors, path, factory, **kwargs):
    try:
        return factory(**kwargs)
    except (SpdcError, ValueError, TypeError) as exc:
        errors.append((path, str(exc)))
        return None


def _sellmeier(errors, path, d):
    return _build(errors, path, SellmeierSet, **d)


def from_dict(data):
    """Validate ``data`` and build an ExperimentConfig; raises ConfigError listing every problem."""
    validator = Draft202012Validator(SCHEMA)
    errors = [(_path(e.absolute_path), e.message) for e in sorted(validator.iter_errors(data), key=str)]
    if errors:
        raise ConfigError(errors)

    c, g, p = data["crystal"], data["geometry"], data["pump"]
    so = _sellmeier(errors, "crystal.sellmeier_o", c["sellmeier_o"])
    se = _sellmeier(errors, "crystal.sellmeier_e", c["sellmeier_e"])
    crystal = None
    if so and se:
        crystal = _build(errors, "crystal", CrystalSpec, cut_angle=c["cut_angle"], length=c["length"],
                         sellmeier_o=so, sellmeier_e=se, tilt=c["tilt"])
        if crystal is not None:
            try:
                crystal.pump_axis_angle(p["center_wavelength"])
            except SpdcError as exc:
                errors.append(("crystal.tilt", str(exc)))
    geometry = _build(errors, "geometry", SourceGeometry, pump_wavelength=p["center_wavelength"], **g)
    pump = _build(errors, "pump", PumpSpec, kind=p["kind"], center_wavelength=p["center_wavelength"],
                  bandwidth_fwhm=p.get("bandwidth_fwhm"))

    fibers = []
    for i, f in enumerate(data["fibers"]):
        clad = _sellmeier(errors, f"fibers.{i}.cladding", f["cladding"])
        if clad:
            fibers.append(_build(errors, f"fibers.{i}", FiberSpec, length=f["length"], core_radius=f["core_radius"],
                                 numerical_aperture=f["numerical_aperture"], cladding=clad))
    detectors = [_build(errors, f"detectors.{i}", DetectorSpec, **d) for i, d in enumerate(data["detectors"])]
    if all(detectors):
        if detectors[0].gated:
            errors.append(("detectors.0.gated", "the trigger detector must be free-running"))
        if not detectors[1].gated:
            errors.append(("detectors.1.gated", "the second detector must be gated"))

    a = data["analysis"]
    lo, hi, _ = a["tuning_range"]
    if not hi > lo:
        errors.append(("analysis.tuning_range", "upper angle must exceed lower angle"))
    blo, bhi = a["bandwidth_range"]
    if not bhi > blo:
        errors.append(("analysis.bandwidth_range", "upper bandwidth must exceed lower bandwidth"))
    if a["window"] is not None and not a["window"][1] > a["window"][0]:
        errors.append(("analysis.window", "empty window"))
    if len(set(a["calibration_wavelengths"])) != len(a["calibration_wavelengths"]):
        errors.append(("analysis.calibration_wavelengths", "duplicate wavelengths"))
    if len(a["calibration_wavelengths"]) < a["calibration_order"] + 1:
        errors.append(("analysis.calibration_wavelengths", "too few references for the calibration order"))
    res = data["tagger_resolution"]
    if abs(round(a["bin_width"] / res) * res - a["bin_width"]) > 1e-9 * res:
        errors.append(("analysis.bin_width", "must be a multiple of tagger_resolution"))

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        crystal=crystal, geometry=geometry, pump=pump, fibers=tuple(fibers), detectors=tuple(detectors),
        tagger_resolution=float(res), seed=int(data["seed"]), acquisition=dict(data["acquisition"]),
        grid=dict(data["grid"]), analysis=copy.deepcopy(a), outputs=dict(data["outputs"]),
        raw=copy.deepcopy(data),
    )


def loads(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("<root>", f"invalid JSON: {exc}")]) from exc
    return from_dict(data)


def bundled_text(name):
    return resources.files("spdcsim").joinpath("data").joinpath(name).read_text(encoding="utf-8")


def load(path):
    """Load a config file; bundled names such as ``paper.json`` resolve to the shipped copy
    when no such file exists on disk."""
    import os

    if not os.path.exists(path) and os.path.basename(path) == path and path in BUNDLED_CONFIGS:
        return loads(bundled_text(path))
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
