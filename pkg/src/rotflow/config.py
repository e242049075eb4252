"""Flat dotted-key configuration: parsing, defaults, canonical form.

The accepted schema is a fixed set of keys; unknown keys are rejected so a
typo cannot silently fall back to a default. The resolved configuration has
a canonical text form whose SHA-256 digest identifies a run.
"""

import hashlib
from dataclasses import dataclass

from .diagnostics import MonitorSettings
from .errors import ConfigError, InvalidParameterError
from .evolution import OUTER_BCS, SimConfig
from .initial_data import GridSpec, InitialDataSpec

__all__ = ["ResolvedConfig", "parse_config", "parse_pairs", "canonical_text"]

IC_KINDS = ("arctan_cylindrical", "sine_walpha_neck", "flat_perturbation")

# key -> value kind; every accepted key appears here
SCHEMA = {
    "dimension": "int",
    "grid.x_max": "float",
    "grid.points": "int",
    "grid.kind": "str",
    "ic.kind": "str",
    "ic.alpha": "float",
    "ic.eps_close": "float",
    "ic.smoothing_width": "float",
    "time.cfl": "float",
    "time.dt_max": "float",
    "time.t_max": "float",
    "time.stop_curvature": "float",
    "bc.outer": "str",
    "monitors.delta_omega": "float",
    "monitors.decay_eps": "float",
    "output.dir": "str",
    "output.record_every": "int",
    "output.snapshot_times": "floats",
}

DEFAULT_X_MAX = {"arctan_cylindrical": 12.0, "sine_walpha_neck": 10.0,
                 "flat_perturbation": 8.0}
DEFAULT_BC = {"arctan_cylindrical": "cylinder_exact",
              "sine_walpha_neck": "asymptotic_linear",
              "flat_perturbation": "asymptotic_linear"}


@dataclass(frozen=True)
class ResolvedConfig:
    """Fully resolved run configuration plus its canonical identity."""

    values: dict  # key -> resolved value, defaults applied
    text: str  # canonical "key = value" form
    config_hash: str  # sha256 of the canonical text
    sim: SimConfig
    ic: InitialDataSpec
    monitors: MonitorSettings

    @property
    def output_dir(self):
        return self.values["output.dir"]


def parse_pairs(text):
    """Raw 'key = value' lines to an ordered dict of strings.

    Blank lines and #-comments are skipped; unknown and duplicate keys are
    rejected.
    """
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.split("#", 1)[0].strip()
        if key not in SCHEMA:
            raise ConfigError(f"unknown key '{key}'")
        if key in pairs:
            raise ConfigError(f"duplicate key '{key}'")
        pairs[key] = value
    return pairs


def _convert(key, raw):
    kind = SCHEMA[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "floats":
            return tuple(float(v) for v in raw.split(",") if v.strip() != "")
        return raw
    except ValueError:
        raise ConfigError(f"'{key}': cannot parse {raw!r} as {kind}") from None


def _require(cond, message):
    if not cond:
        raise ConfigError(message)


def _format_value(key, value):
    kind = SCHEMA[key]
    if kind == "floats":
        return ",".join(repr(float(v)) for v in value)
    if kind == "float":
        return repr(float(value))
    return str(value)


def canonical_text(values):
    lines = [f"{k} = {_format_value(k, values[k])}" for k in sorted(values)]
    return "\n".join(lines) + "\n"


def parse_config(text):
    """Parse and fully resolve a configuration, returning a ResolvedConfig
    bundling the simulator, initial-data, and monitor settings."""
    pairs = parse_pairs(text)
    vals = {k: _convert(k, v) for k, v in pairs.items()}

    _require("dimension" in vals, "missing required key 'dimension'")
    _require("ic.kind" in vals, "missing required key 'ic.kind'")
    n = vals["dimension"]
    _require(n >= 2, f"'dimension': must be >= 2, got {n}")
    kind = vals["ic.kind"]
    if kind == "custom_profile":
        raise ConfigError(
            "'ic.kind': custom_profile cannot be built from a config file; "
            "pass a RadialProfile to the run API instead"
        )
    _require(kind in IC_KINDS, f"'ic.kind': must be one of {IC_KINDS}, got '{kind}'")

    if kind == "sine_walpha_neck":
        _require("ic.alpha" in vals, "missing required key 'ic.alpha' for sine_walpha_neck")
        _require(0.0 < vals["ic.alpha"] < 1.0,
                 f"'ic.alpha': alpha out of (0,1), got {vals['ic.alpha']}")
    else:
        _require("ic.alpha" not in vals,
                 "'ic.alpha': only applies to ic.kind = sine_walpha_neck")
        _require("ic.smoothing_width" not in vals,
                 "'ic.smoothing_width': only applies to ic.kind = sine_walpha_neck")
    if kind == "flat_perturbation":
        _require("ic.eps_close" in vals,
                 "missing required key 'ic.eps_close' for flat_perturbation")
        _require(vals["ic.eps_close"] >= 0.0,
                 f"'ic.eps_close': must be >= 0, got {vals['ic.eps_close']}")
    else:
        _require("ic.eps_close" not in vals,
                 "'ic.eps_close': only applies to ic.kind = flat_perturbation")

    vals.setdefault("grid.x_max", DEFAULT_X_MAX[kind])
    vals.setdefault("grid.points", 1024)
    vals.setdefault("grid.kind", "uniform")
    if kind == "sine_walpha_neck":
        vals.setdefault("ic.smoothing_width", 0.1)
    vals.setdefault("time.cfl", 0.8)
    vals.setdefault("time.dt_max", 1e-2)
    vals.setdefault("time.t_max", 10.0)
    vals.setdefault("time.stop_curvature", 1e8)
    vals.setdefault("bc.outer", DEFAULT_BC[kind])
    vals.setdefault("monitors.decay_eps", 2.0)
    vals.setdefault("output.dir", "out")
    vals.setdefault("output.record_every", 25)
    vals.setdefault("output.snapshot_times", ())

    for key in ("grid.x_max", "time.cfl", "time.dt_max", "time.t_max",
                "time.stop_curvature", "monitors.decay_eps"):
        _require(vals[key] > 0, f"'{key}': must be positive, got {vals[key]}")
    _require(vals["grid.points"] >= 64,
             f"'grid.points': must be >= 64, got {vals['grid.points']}")
    _require(vals["grid.kind"] in ("uniform", "graded"),
             f"'grid.kind': must be 'uniform' or 'graded', got '{vals['grid.kind']}'")
    _require(vals["bc.outer"] in OUTER_BCS,
             f"'bc.outer': must be one of {OUTER_BCS}, got '{vals['bc.outer']}'")
    _require(vals["output.record_every"] >= 1,
             f"'output.record_every': must be >= 1, got {vals['output.record_every']}")
    if "monitors.delta_omega" in vals:
        _require(vals["monitors.delta_omega"] > 0,
                 f"'monitors.delta_omega': must be positive, got {vals['monitors.delta_omega']}")
    _require(all(t > 0 for t in vals["output.snapshot_times"]),
             "'output.snapshot_times': times must be positive")
    vals["output.snapshot_times"] = tuple(sorted(vals["output.snapshot_times"]))

    try:
        grid = GridSpec(x_max=vals["grid.x_max"], m=vals["grid.points"],
                        kind=vals["grid.kind"])
        ic = InitialDataSpec(
            kind=kind, n=n, grid=grid,
            alpha=vals.get("ic.alpha"),
            eps_close=vals.get("ic.eps_close"),
            smoothing_width=vals.get("ic.smoothing_width", 0.1),
            decay_eps=vals["monitors.decay_eps"],
        )
        sim = SimConfig(
            n=n, cfl=vals["time.cfl"], dt_max=vals["time.dt_max"],
            t_max=vals["time.t_max"], stop_curvature=vals["time.stop_curvature"],
            outer_bc=vals["bc.outer"], record_every=vals["output.record_every"],
            snapshot_times=vals["output.snapshot_times"],
        )
    except InvalidParameterError as exc:
        raise ConfigError(str(exc)) from exc
    monitors = MonitorSettings(
        delta_omega=vals.get("monitors.delta_omega"),
        decay_eps=vals["monitors.decay_eps"],
    )
    text = canonical_text(vals)
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return ResolvedConfig(values=vals, text=text, config_hash=digest,
                          sim=sim, ic=ic, monitors=monitors)
