"""Serialization of runs: trace.csv, report.json, snapshot CSVs, manifest.

All floating-point values are written with 17 significant digits so equal
configurations reproduce byte-identical files; JSON never contains NaN or
infinities (they become null).
"""

import dataclasses
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .geometry import arc_length, compute_curvature

__all__ = ["RunManifest", "emit_outputs", "format_float", "sanitize_json",
           "dump_json", "write_trace", "write_snapshot"]

TRACE_COLUMNS = (
    "t", "phi_min", "phi_max", "x_star", "y_star", "min_A", "zero_count",
    "sup_rm", "sup_phi2_rm", "barrier_residual", "tip_is_max", "f_max", "psi_min",
)
SNAPSHOT_COLUMNS = ("x", "s", "phi", "xi", "K", "L", "R", "A")


@dataclass(frozen=True)
class RunManifest:
    """Identity and layout of one run's outputs."""

    config_hash: str
    tool_version: str
    deterministic: bool
    out_dir: str
    resolved_config: dict


def format_float(value):
    return "%.17g" % float(value)


def sanitize_json(obj):
    """Recursively convert to JSON-safe types; non-finite floats become null."""
    if obj is None or isinstance(obj, (bool, str, int)):
        return obj
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [sanitize_json(v) for v in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [sanitize_json(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): sanitize_json(v) for k, v in obj.items()}
    if dataclasses.is_dataclass(obj):
        return sanitize_json(dataclasses.asdict(obj))
    return str(obj)


def dump_json(payload, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(sanitize_json(payload), fh, indent=2, sort_keys=True,
                  allow_nan=False)
        fh.write("\n")


def _trace_row(rec):
    cells = []
    for col in TRACE_COLUMNS:
        if col == "zero_count":
            cells.append(str(rec.phi_s_zero_count))
        elif col == "tip_is_max":
            cells.append("1" if rec.tip_is_max else "0")
        else:
            cells.append(format_float(getattr(rec, col)))
    return ",".join(cells)


def write_trace(records, path):
    lines = [",".join(TRACE_COLUMNS)]
    lines.extend(_trace_row(rec) for rec in records)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_snapshot(profile, path):
    curv = compute_curvature(profile, refined=True)
    s = arc_length(profile)
    cols = (profile.x, s, profile.phi, profile.xi, curv.K, curv.L, curv.R, curv.A)
    lines = [",".join(SNAPSHOT_COLUMNS)]
    for row in zip(*cols):
        lines.append(",".join(format_float(v) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_outputs(trajectory, report, manifest):
    """Write trace.csv, report.json, snapshots/t_<index>.csv and manifest.json
    under the manifest's output directory; returns the manifest payload."""
    out = manifest.out_dir
    snap_dir = os.path.join(out, "snapshots")
    os.makedirs(snap_dir, exist_ok=True)

    write_trace(trajectory.records, os.path.join(out, "trace.csv"))
    dump_json(report, os.path.join(out, "report.json"))

    snapshot_index = []
    for idx, (t, profile) in enumerate(trajectory.snapshots):
        name = f"t_{idx}.csv"
        write_snapshot(profile, os.path.join(snap_dir, name))
        snapshot_index.append(
            {"index": idx, "t": float(t), "file": os.path.join("snapshots", name)}
        )

    payload = {
        "config_hash": manifest.config_hash,
        "tool_version": manifest.tool_version,
        "deterministic": manifest.deterministic,
        "stop_reason": trajectory.stop_reason,
        "resolved_config": manifest.resolved_config,
        "paths": {
            "trace": "trace.csv",
            "report": "report.json",
            "snapshots": snapshot_index,
            "manifest": "manifest.json",
        },
    }
    dump_json(payload, os.path.join(out, "manifest.json"))
    return payload
