#!/usr/bin/env python3
"""
Run delay scans of the integrated PDC / PBS / BS circuit and write one CSV per series.

    python simulate.py --experiment fig4 --out results
    python simulate.py --config my-run.env --set geometry.phi1=pi/8 --set grid.n_points=256

Configuration is flat key=value text with dotted sections (geometry.x_um=3810).
Every run also writes a `manifest` that can be fed back through --config.
"""
import argparse
import csv
import io
import json
import logging
import math
import os
import re
import sys
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Literal, Optional, Tuple

import numpy as np
from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError, field_validator, model_validator

from circuit import CircuitGeometry
from detection import CSV_HEADER, ScanResult, scan_component, scan_delay
from errors import ConfigError, InvalidArgumentError, SimulationError
from oracle import (delay_compensation, dip_half_width, dip_positions, fringe_period, schmidt_number_general,
                    schmidt_number_spatial)
from spectral import (DEFAULT_N_H, DEFAULT_N_V, DispersionModel, FrequencyGrid, PumpSpec, build_grid, build_jsa,
                      main_lobe_half_width, pump_from_wavelength, schmidt_decompose)

__version__ = "1.0.0"

logger = logging.getLogger(__name__)

PRESETS_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "experiment-presets.json")
EXPERIMENTS = ("fig3a", "fig3b", "fig4", "fig5", "fig6a", "fig6b", "custom")
SECTIONS = ("geometry", "dispersion", "pump", "grid", "scan", "output")
COMPONENTS = ("psi1", "psi2")
DEFAULT_OUT_DIR = "output"
MANIFEST_NAME = "manifest"

_ANGLE = re.compile(r"^\s*([+-]?(?:\d+(?:\.\d*)?|\.\d+)?)\s*\*?\s*pi\s*(?:/\s*(\d+(?:\.\d*)?))?\s*$")
_ASSIGNMENT = re.compile(r"^\s*(?:export\s+)?[^=#\s]+\s*=")


def parse_angle(value):
    """Accepts plain numbers as well as multiples of pi such as 'pi/2', '-pi/4' or '3*pi/8'."""
    if not isinstance(value, str):
        return value
    match = _ANGLE.match(value)
    if not match:
        return value
    coefficient, divisor = match.groups()
    if coefficient in ("", "+"):
        factor = 1.0
    elif coefficient == "-":
        factor = -1.0
    else:
        factor = float(coefficient)
    divisor = float(divisor) if divisor else 1.0
    if divisor == 0:
        raise ValueError("angle divisor must be non-zero")
    return factor * math.pi / divisor


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)


class GeometrySettings(_Section):
    L_PDC_cm: float = 1.035
    x_um: float = 3810.0
    y_um: float = 5810.0
    l_um: float = 10000.0
    L_PC1_um: float = 7620.0
    phi1: float = 0.0
    phi2: float = math.pi / 2

    @field_validator("phi1", "phi2", mode="before")
    @classmethod
    def _angle(cls, value):
        return parse_angle(value)

    @field_validator("L_PDC_cm")
    @classmethod
    def _positive(cls, value):
        if value <= 0:
            raise ValueError("PDC section length must be positive")
        return value

    @field_validator("x_um", "y_um", "l_um", "L_PC1_um")
    @classmethod
    def _non_negative(cls, value):
        if value < 0:
            raise ValueError("length must be non-negative")
        return value

    @model_validator(mode="after")
    def _converter_fits(self):
        if self.x_um < 0.5 * self.L_PC1_um or self.y_um < 0.5 * self.L_PC1_um:
            raise ValueError("x_um and y_um are measured to the PC1 centre and must each be >= L_PC1_um/2")
        return self


class DispersionSettings(_Section):
    n_H: float = DEFAULT_N_H
    n_V: float = DEFAULT_N_V

    @field_validator("n_H", "n_V")
    @classmethod
    def _index(cls, value):
        if value <= 1.0:
            raise ValueError("refractive index must exceed 1")
        return value


class PumpSettings(_Section):
    wavelength_nm: float = Field(775.0, gt=0)
    # Gaussian standard deviation of the pump amplitude in rad/s; 0 is the narrowband limit
    bandwidth: float = Field(0.0, ge=0)
    monochromatic: bool = True


class GridSettings(_Section):
    n_points: int = Field(512, ge=2)
    half_span_lobes: float = Field(3.0, gt=0)
    # rad/s; replaces half_span_lobes when set
    half_span: Optional[float] = Field(None, gt=0)


class ScanSettings(_Section):
    start_um: Optional[float] = None
    stop_um: Optional[float] = None
    step_um: float = Field(4.0, gt=0)
    fine_step_fraction: float = Field(0.125, gt=0, le=1)
    fine_window_um: float = Field(2.0, ge=0)
    # fine steps over every range where the fringes have contrast; off keeps them to fine_window_um
    resolve_fringes: bool = True
    components: Tuple[str, ...] = ()

    @field_validator("components", mode="before")
    @classmethod
    def _split(cls, value):
        if isinstance(value, str):
            return tuple(part.strip() for part in value.split(",") if part.strip())
        return value

    @field_validator("components")
    @classmethod
    def _known(cls, value):
        for part in value:
            if part not in COMPONENTS:
                raise ValueError(f"unknown component {part!r}, expected {' or '.join(COMPONENTS)}")
        if len(set(value)) != len(value):
            raise ValueError("components must not repeat")
        return value

    @model_validator(mode="after")
    def _range(self):
        if (self.start_um is None) != (self.stop_um is None):
            raise ValueError("start_um and stop_um must be given together")
        if self.start_um is not None and self.start_um >= self.stop_um:
            raise ValueError("start_um must be below stop_um")
        return self


class OutputSettings(_Section):
    dir: Optional[str] = None


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    experiment: Literal["fig3a", "fig3b", "fig4", "fig5", "fig6a", "fig6b", "custom"] = "custom"
    geometry: GeometrySettings = Field(default_factory=GeometrySettings)
    dispersion: DispersionSettings = Field(default_factory=DispersionSettings)
    pump: PumpSettings = Field(default_factory=PumpSettings)
    grid: GridSettings = Field(default_factory=GridSettings)
    scan: ScanSettings = Field(default_factory=ScanSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)

    _inferred: frozenset = PrivateAttr(default_factory=frozenset)
    _explicit: frozenset = PrivateAttr(default_factory=frozenset)

    @property
    def inferred_keys(self) -> frozenset:
        """Keys neither the preset nor the user set; their values are documented defaults."""
        return self._inferred

    def flat(self) -> dict:
        values = {"experiment": self.experiment}
        for section in SECTIONS:
            for name, value in getattr(self, section).model_dump().items():
                values[f"{section}.{name}"] = value
        return values


@lru_cache(maxsize=None)
def load_presets(path: str = PRESETS_PATH) -> dict:
    try:
        with open(path) as f:
            presets = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError("experiment", f"cannot load presets from {path}: {e}")
    for name, preset in presets.items():
        if name not in EXPERIMENTS or not preset.get("series"):
            raise ConfigError("experiment", f"preset {name!r} in {path} is not a known experiment with series")
    return presets


def _read_document(text: str) -> dict:
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if not _ASSIGNMENT.match(line):
            raise ConfigError(f"line {number}", f"expected key=value, got {stripped!r}")
    return dict(dotenv_values(stream=io.StringIO(text), interpolate=False))


def _same_value(a, b) -> bool:
    try:
        return math.isclose(float(parse_angle(str(a))), float(parse_angle(str(b))), rel_tol=1e-12)
    except ValueError:
        return str(a) == str(b)


def _validate(experiment: str, flat: dict) -> RunConfig:
    data = {"experiment": experiment}
    for key, value in flat.items():
        section, dot, name = key.partition(".")
        if not dot or not name or section not in SECTIONS:
            raise ConfigError(key, "unknown key")
        data.setdefault(section, {})[name] = value
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        error = exc.errors()[0]
        key = ".".join(str(part) for part in error["loc"])
        if error["type"] == "extra_forbidden":
            message = "unknown key"
        elif error["type"] == "value_error":
            message = str(error["ctx"]["error"])
        else:
            message = error["msg"]
        raise ConfigError(key, message) from exc


def parse_config(text: str, overrides=None, experiment: Optional[str] = None) -> RunConfig:
    """
    Preset settings first, then the document, then KEY=VALUE overrides; an
    explicit experiment argument beats the document's. Keys under `resolved.`
    are manifest annotations and are skipped.
    """
    document = _read_document(text)
    for item in overrides or ():
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(item, "expected key=value")
        document[key.strip()] = value.strip()
    if experiment is not None:
        document["experiment"] = experiment

    name = document.pop("experiment", None) or "custom"
    presets = load_presets()
    if name not in presets:
        raise ConfigError("experiment", f"unknown experiment {name!r}, expected one of {', '.join(EXPERIMENTS)}")
    preset = presets[name]

    explicit = {key: value for key, value in document.items() if not key.startswith("resolved.")}
    for key, value in explicit.items():
        if key in preset["settings"] and not _same_value(preset["settings"][key], value):
            logger.warning("%s: %s=%s overrides the preset value %s", name, key, value, preset["settings"][key])
    config = _validate(name, {**preset["settings"], **explicit})
    config._explicit = frozenset(explicit)

    stated = set(preset["settings"]) | set(explicit)
    for series_overrides in preset["series"].values():
        stated.update(series_overrides)
    config._inferred = frozenset(key for key in config.flat() if key != "experiment" and key not in stated)

    plan_series(config)
    return config


@dataclass(frozen=True)
class SeriesPlan:
    name: str
    settings: RunConfig
    geom: CircuitGeometry
    disp: DispersionModel
    pump: PumpSpec
    grid: FrequencyGrid


def _series_geometry(settings: GeometrySettings) -> CircuitGeometry:
    return CircuitGeometry(
        l_pdc=settings.L_PDC_cm * 1e-2,
        x=settings.x_um * 1e-6,
        y=settings.y_um * 1e-6,
        l=settings.l_um * 1e-6,
        delta_l=0.0,
        l_pc1=settings.L_PC1_um * 1e-6,
        phi1=settings.phi1,
        phi2=settings.phi2,
    )


def _series_grid(settings: GridSettings, disp: DispersionModel, pump: PumpSpec, l_pdc: float) -> FrequencyGrid:
    half_span = settings.half_span
    if half_span is None:
        lobe = main_lobe_half_width(disp, l_pdc)
        if not np.isfinite(lobe):
            raise ConfigError("grid.half_span", "must be set when n_H equals n_V")
        half_span = settings.half_span_lobes * lobe
    return build_grid(0.5 * pump.omega_p, half_span, settings.n_points)


def plan_series(config: RunConfig) -> list:
    """Resolve every series of the experiment: preset series keys win over the global settings."""
    preset = load_presets()[config.experiment]
    flat = config.flat()
    flat.pop("experiment")
    plans = []
    for name, overrides in preset["series"].items():
        for key in overrides:
            if key in config._explicit and not _same_value(overrides[key], flat[key]):
                logger.info("series %s: preset value for %s replaces the configured one", name, key)
        settings = _validate(config.experiment, {**flat, **overrides})
        try:
            disp = DispersionModel(settings.dispersion.n_H, settings.dispersion.n_V)
            pump = pump_from_wavelength(settings.pump.wavelength_nm * 1e-9, settings.pump.bandwidth,
                                        settings.pump.monochromatic)
            geom = _series_geometry(settings.geometry)
        except InvalidArgumentError as e:
            raise ConfigError(f"series {name}", str(e)) from e
        plans.append(SeriesPlan(name, settings, geom, disp, pump, _series_grid(settings.grid, disp, pump, geom.l_pdc)))
    return plans


# half-widths of the pulsed-pump fringe envelope, in units of v_V / bandwidth
FRINGE_ENVELOPE_WIDTHS = 4.0


def has_fringes(plan: SeriesPlan) -> bool:
    # the same-channel part, and with it the fringes, scales with sin(phi1) cos(phi1)
    return abs(math.sin(plan.geom.phi1) * math.cos(plan.geom.phi1)) > 1e-9


def fringe_window_um(plan: SeriesPlan, scan: ScanSettings) -> float:
    """Half-width around the compensation point in which the fringes keep their contrast."""
    if plan.pump.narrowband:
        return math.inf
    envelope = plan.disp.v_V / plan.pump.bandwidth * 1e6
    return max(scan.fine_window_um, FRINGE_ENVELOPE_WIDTHS * envelope)


def scan_axis(config: RunConfig, plans) -> np.ndarray:
    """
    Shared delta_l axis in micrometres.

    The coarse part is a lattice of step_um covering every dip with two
    half-widths to spare, or start_um + k * step_um for an explicit range.
    Wherever a series has fringes, the axis switches to one fine lattice of
    fringe_period * fine_step_fraction anchored at a compensation point: under
    a narrowband pump that is the whole range, under a pulsed pump the fringe
    envelope. Coarse points closer than half a fine step to a fine window are
    dropped.
    """
    scan = config.scan
    step = scan.step_um
    if scan.start_um is None:
        low = min(min(dip_positions(p.geom, p.disp)) - 2.0 * dip_half_width(p.geom, p.disp) for p in plans) * 1e6
        high = max(max(dip_positions(p.geom, p.disp)) + 2.0 * dip_half_width(p.geom, p.disp) for p in plans) * 1e6
        coarse = np.arange(math.floor(low / step), math.ceil(high / step) + 1) * step
        low, high = coarse[0], coarse[-1]
    else:
        low, high = scan.start_um, scan.stop_um
        coarse = low + np.arange(int(math.floor((high - low) / step + 1e-9)) + 1) * step

    fringing = [plan for plan in plans if has_fringes(plan)]
    if not fringing:
        return coarse

    fine_step = min(fringe_period(p.geom, p.disp, p.pump) for p in fringing) * 1e6 * scan.fine_step_fraction
    anchor = delay_compensation(fringing[0].geom, fringing[0].disp) * 1e6
    windows = []
    for plan in fringing:
        centre = delay_compensation(plan.geom, plan.disp) * 1e6
        half = fringe_window_um(plan, scan) if scan.resolve_fringes else scan.fine_window_um
        lo, hi = max(low, centre - half), min(high, centre + half)
        if half > 0 and lo <= hi:
            windows.append((lo, hi))
    if not scan.resolve_fringes:
        logger.warning("scan.resolve_fringes is off: steps of %g um alias fringes with a period of %.4g um",
                       step, fine_step / scan.fine_step_fraction)

    keep = np.ones(len(coarse), dtype=bool)
    indices = []
    for lo, hi in windows:
        index = np.arange(math.ceil((lo - anchor) / fine_step), math.floor((hi - anchor) / fine_step) + 1)
        if index.size == 0:
            continue
        keep &= (coarse < lo - 0.5 * fine_step) | (coarse > hi + 0.5 * fine_step)
        indices.append(index)
    fine = anchor + np.unique(np.concatenate(indices)) * fine_step if indices else np.empty(0)
    return np.sort(np.concatenate([coarse[keep], fine]))


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (tuple, list)):
        return ",".join(str(item) for item in value)
    return str(value)


def write_csv(path: str, result: ScanResult):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        writer.writerows(result.rows())


def write_manifest(path: str, manifest: dict):
    with open(path, "w") as f:
        f.write(f"# homsim {__version__} run manifest; re-run with --config {MANIFEST_NAME}\n")
        for key, value in manifest.items():
            f.write(f"{key}={format_value(value)}\n")


@dataclass
class RunReport:
    out_dir: str
    results: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)
    files: list = field(default_factory=list)


def _spatial_schmidt(plan: SeriesPlan, jsa) -> float:
    try:
        compensated = plan.geom.with_delta_l(delay_compensation(plan.geom, plan.disp))
    except InvalidArgumentError as e:
        logger.warning("series %s: no compensated delay available (%s)", plan.name, e)
        return float("nan")
    return schmidt_number_general(plan.geom.phi1, compensated, plan.disp, jsa)


def run(config: RunConfig, out_dir: Optional[str] = None) -> RunReport:
    plans = plan_series(config)
    axis_um = scan_axis(config, plans)
    delta_l = axis_um * 1e-6
    out_dir = out_dir or config.output.dir or os.getenv("HOMSIM_OUT_DIR") or DEFAULT_OUT_DIR
    os.makedirs(out_dir, exist_ok=True)
    report = RunReport(out_dir)

    manifest = {key: value for key, value in config.flat().items() if value is not None}
    manifest["resolved.version"] = __version__
    for key in sorted(config.inferred_keys):
        manifest[f"resolved.inferred.{key}"] = True
    manifest["resolved.scan.points"] = len(axis_um)
    manifest["resolved.scan.min_um"] = float(axis_um[0])
    manifest["resolved.scan.max_um"] = float(axis_um[-1])
    if not config.scan.resolve_fringes and any(has_fringes(plan) for plan in plans):
        manifest["resolved.scan.fringes_aliased"] = True

    logger.info("%s: %d series, %d scan points", config.experiment, len(plans), len(delta_l))
    for plan in plans:
        jsa = build_jsa(plan.grid, plan.grid, plan.pump, plan.disp, plan.geom.l_pdc)
        results = {"total": scan_delay(plan.geom, plan.disp, plan.pump, plan.grid, delta_l, jsa=jsa)}
        for part in config.scan.components:
            results[part] = scan_component(plan.geom, plan.disp, plan.pump, plan.grid, delta_l, part, jsa=jsa)
        results = {part: replace(result, delta_l_um=axis_um) for part, result in results.items()}
        report.results[plan.name] = results

        prefix = f"resolved.series.{plan.name}"
        names = []
        for part, result in results.items():
            suffix = "" if part == "total" else f"_{part}"
            filename = f"{config.experiment}_{plan.name}{suffix}.csv"
            write_csv(os.path.join(out_dir, filename), result)
            names.append(filename)
        report.files.extend(names)

        for key, value in plan.grid.descriptor().items():
            manifest[f"{prefix}.grid.{key}"] = value
        for key, value in plan.geom.descriptor().items():
            manifest[f"{prefix}.geometry.{key}"] = value
        dips = dip_positions(plan.geom, plan.disp)
        manifest[f"{prefix}.dip_phi1_0_um"] = dips[0] * 1e6
        manifest[f"{prefix}.dip_phi1_pi_2_um"] = dips[1] * 1e6
        manifest[f"{prefix}.compensation_um"] = delay_compensation(plan.geom, plan.disp) * 1e6
        manifest[f"{prefix}.fringe_period_um"] = fringe_period(plan.geom, plan.disp, plan.pump) * 1e6
        manifest[f"{prefix}.schmidt.frequency"] = schmidt_decompose(jsa).schmidt_number
        manifest[f"{prefix}.schmidt.spatial"] = schmidt_number_spatial(plan.geom.phi1)
        manifest[f"{prefix}.schmidt.spatial_general"] = _spatial_schmidt(plan, jsa)
        warnings = [*results["total"].metadata["jsa_warnings"]]
        for result in results.values():
            warnings.extend(result.metadata["warnings"])
        if warnings:
            manifest[f"{prefix}.warnings"] = " | ".join(warnings)
        manifest[f"{prefix}.files"] = names

    write_manifest(os.path.join(out_dir, MANIFEST_NAME), manifest)
    report.files.append(MANIFEST_NAME)
    report.manifest = manifest
    return report


def parse_args(argv=None):
    parser = argparse.ArgumentParser(prog="simulate",
                                     description="Coincidence scans of the integrated PDC interferometer")
    parser.add_argument(
        "--config",
        help="key=value configuration file; a previous run manifest works too"
    )
    parser.add_argument(
        "--experiment",
        choices=EXPERIMENTS,
        help="figure preset to run (default: the config file value, else custom)"
    )
    parser.add_argument(
        "--out",
        help="output directory (default: output.dir, then $HOMSIM_OUT_DIR, then ./output)"
    )
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        dest="overrides",
        metavar="KEY=VALUE",
        help="override one configuration key (can be specified multiple times)"
    )
    parser.add_argument(
        "--verbose",
        action="store_true",
        help="log every scan point"
    )
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    load_dotenv()

    try:
        text = ""
        if args.config:
            try:
                with open(args.config) as f:
                    text = f.read()
            except OSError as e:
                raise ConfigError("--config", f"cannot read {args.config}: {e.strerror}")
        config = parse_config(text, args.overrides, args.experiment)
    except ConfigError as e:
        print(f"Config error: {e}", file=sys.stderr)
        return 2

    try:
        report = run(config, args.out)
    except ConfigError as e:
        print(f"Config error: {e}", file=sys.stderr)
        return 2
    except (SimulationError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 3
    except MemoryError:
        print("Error: out of memory; lower grid.n_points or narrow the scan range", file=sys.stderr)
        return 3
    except Exception as e:
        logger.exception("unexpected failure")
        print(f"General error: {e}", file=sys.stderr)
        return 3

    print(f"\nWrote {len(report.files) - 1} series files and {MANIFEST_NAME} to {report.out_dir}")
    for name in report.results:
        prefix = f"resolved.series.{name}"
        print(f"  {name}: K_freq={report.manifest[f'{prefix}.schmidt.frequency']:.4g} "
              f"K_spatial={report.manifest[f'{prefix}.schmidt.spatial']:.4g}")
    if config.inferred_keys:
        print(f"  {len(config.inferred_keys)} parameters use inferred defaults (see {MANIFEST_NAME})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
