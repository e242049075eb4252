"""Command-line interface: generate | simulate | classify | rescale | sweep.

Every documented config key is also accepted as a --key flag that overrides
the config file. Exit codes: 0 success, 2 config error, 3 numeric failure,
4 inconclusive classification.
"""

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import SCHEMA, parse_config, parse_pairs
from .diagnostics import (
    check_cylindrical_asymptotics,
    classify_singularity,
    critical_points,
)
from .errors import (
    BlowupOverrunError,
    CannotNormalizeError,
    ConfigError,
    InvalidParameterError,
    InvalidProfileError,
    NoEstimateError,
    NoNeckError,
    NotApplicableError,
    NumericFailureError,
    RunAbortedError,
    SingularProfileError,
    SingularStateError,
)
from .evolution import Trajectory, estimate_singular_time, run
from .geometry import RadialProfile
from .initial_data import pinching_report
from .output import RunManifest, dump_json, emit_outputs, write_snapshot
from .rescaling import bryant_profile, parabolic_rescale, profile_match
from ._version import __version__

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_INCONCLUSIVE = 4

_NUMERIC_ERRORS = (
    NumericFailureError, RunAbortedError, SingularStateError,
    BlowupOverrunError, SingularProfileError, InvalidProfileError,
    NoEstimateError, CannotNormalizeError, NotApplicableError, NoNeckError,
)


def _dest(key):
    return key.replace(".", "__")


def _add_config_arguments(parser):
    parser.add_argument("--config", metavar="FILE",
                        help="path to a 'key = value' config file")
    for key in SCHEMA:
        parser.add_argument("--" + key, dest=_dest(key), metavar="VALUE",
                            help=f"override config key {key}")


def _collect_pairs(args):
    pairs = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            pairs = parse_pairs(fh.read())
    for key in SCHEMA:
        value = getattr(args, _dest(key), None)
        if value is not None:
            pairs[key] = value
    return pairs


def _resolve(args):
    pairs = _collect_pairs(args)
    text = "".join(f"{k} = {v}\n" for k, v in pairs.items())
    return parse_config(text)


def _manifest_for(resolved):
    vals = dict(resolved.values)
    vals["output.snapshot_times"] = list(vals["output.snapshot_times"])
    return RunManifest(
        config_hash=resolved.config_hash,
        tool_version=__version__,
        deterministic=True,
        out_dir=resolved.output_dir,
        resolved_config=vals,
    )


def build_report(trajectory):
    """Assemble the full report: classification, asymptotics, model matches."""
    t_hat = trajectory.t_hat
    report = classify_singularity(trajectory, t_hat)
    if trajectory.estimate is not None:
        report.estimator = dataclasses.asdict(trajectory.estimate)
        report.t_hat_ci = trajectory.estimate.t_hat_ci
    if t_hat is not None:
        try:
            report.asymptotics_fit = check_cylindrical_asymptotics(
                trajectory.snapshots, t_hat)
        except NotApplicableError:
            report.asymptotics_fit = None
    report.profile_match = _model_matches(trajectory)
    return report


def _model_matches(trajectory):
    matches = {"cylinder": None, "bryant": None}
    if not trajectory.snapshots:
        return matches
    _, profile = trajectory.snapshots[-1]
    try:
        neck = next((p for p in critical_points(profile) if p.kind == "neck"), None)
        if neck is not None:
            rescaled = parabolic_rescale(profile, neck.x, "rm_at_point")
            matches["cylinder"] = profile_match(rescaled, "cylinder", (-2.0, 2.0))
    except (CannotNormalizeError, NotApplicableError, SingularProfileError):
        pass
    try:
        if profile.has_origin:
            rescaled = parabolic_rescale(profile, 0.0, "R_at_origin")
            model = bryant_profile(profile.n)
            matches["bryant"] = profile_match(rescaled, model, (0.0, 6.0))
    except (CannotNormalizeError, NotApplicableError, NumericFailureError,
            SingularProfileError, InvalidParameterError):
        pass
    return matches


def cmd_generate(args):
    resolved = _resolve(args)
    profile = resolved.ic.build()
    out = resolved.output_dir
    snap_dir = os.path.join(out, "snapshots")
    os.makedirs(snap_dir, exist_ok=True)
    path = os.path.join(snap_dir, "t_0.csv")
    write_snapshot(profile, path)
    manifest = _manifest_for(resolved)
    payload = {
        "config_hash": manifest.config_hash,
        "tool_version": manifest.tool_version,
        "deterministic": manifest.deterministic,
        "resolved_config": manifest.resolved_config,
        "paths": {"snapshots": [{"index": 0, "t": float(profile.t),
                                 "file": os.path.join("snapshots", "t_0.csv")}],
                  "manifest": "manifest.json"},
    }
    dump_json(payload, os.path.join(out, "manifest.json"))
    try:
        pinch = pinching_report(profile)
        print(f"wrote {path} (neck at x={pinch.x_star:.6g}, "
              f"criterion_met={pinch.criterion_met})")
    except NoNeckError:
        print(f"wrote {path} (no neck)")
    return EXIT_OK


def _simulate_resolved(resolved):
    """Run, write outputs, and return (exit_code, report)."""
    manifest = _manifest_for(resolved)
    try:
        trajectory = run(resolved.sim, resolved.ic, resolved.monitors)
    except RunAbortedError as exc:
        trajectory = exc.trajectory
        if trajectory is not None:
            report = build_report(trajectory)
            emit_outputs(trajectory, report, manifest)
        print(f"rotflow: {exc}", file=sys.stderr)
        return EXIT_NUMERIC, None
    report = build_report(trajectory)
    emit_outputs(trajectory, report, manifest)
    code = EXIT_INCONCLUSIVE if report.type_verdict == "inconclusive" else EXIT_OK
    return code, report


def cmd_simulate(args):
    resolved = _resolve(args)
    code, report = _simulate_resolved(resolved)
    if report is not None:
        t_hat = "none" if report.t_hat is None else f"{report.t_hat:.10g}"
        print(f"stop={report.stop_reason} verdict={report.type_verdict} "
              f"t_hat={t_hat} outputs={resolved.output_dir}")
    return code


def _load_run_dir(input_dir):
    with open(os.path.join(input_dir, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    n = int(manifest["resolved_config"]["dimension"])
    snapshots = []
    for entry in manifest["paths"]["snapshots"]:
        data = np.genfromtxt(os.path.join(input_dir, entry["file"]),
                             delimiter=",", names=True)
        profile = RadialProfile(
            n=n, x=np.atleast_1d(data["x"]), phi=np.atleast_1d(data["phi"]),
            xi=np.atleast_1d(data["xi"]), t=float(entry["t"]),
        )
        snapshots.append((float(entry["t"]), profile))
    return manifest, n, snapshots


def _records_from_trace(trace):
    class Row:
        __slots__ = ("t", "phi_min", "sup_rm")

        def __init__(self, t, phi_min, sup_rm):
            self.t = t
            self.phi_min = phi_min
            self.sup_rm = sup_rm

    return [Row(float(t), float(p), float(s))
            for t, p, s in zip(trace["t"], trace["phi_min"], trace["sup_rm"])]


def cmd_classify(args):
    manifest, n, snapshots = _load_run_dir(args.input)
    trace = np.genfromtxt(os.path.join(args.input, "trace.csv"),
                          delimiter=",", names=True)
    history_t = np.atleast_1d(trace["t"])
    history_sup = np.atleast_1d(trace["sup_rm"])
    stop_reason = manifest.get("stop_reason", "")
    try:
        estimate = estimate_singular_time((history_t, history_sup))
    except NoEstimateError:
        estimate = None
    trajectory = Trajectory(
        n=n, records=_records_from_trace(trace), snapshots=snapshots,
        history_t=history_t, history_sup_rm=history_sup,
        stop_reason=stop_reason, final_state=None, estimate=estimate,
        config=None, monitors=None,
    )
    report = build_report(trajectory)
    dump_json(report, os.path.join(args.input, "report.json"))
    t_hat = "none" if report.t_hat is None else f"{report.t_hat:.10g}"
    print(f"verdict={report.type_verdict} t_hat={t_hat} "
          f"exponent={report.blowup_exponent:.4g}")
    if report.type_verdict == "inconclusive":
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def cmd_rescale(args):
    _, _, snapshots = _load_run_dir(args.input)
    idx = args.snapshot_index if args.snapshot_index >= 0 else len(snapshots) + args.snapshot_index
    if not 0 <= idx < len(snapshots):
        raise ConfigError(f"snapshot index {args.snapshot_index} out of range "
                          f"(run has {len(snapshots)} snapshots)")
    t, profile = snapshots[idx]
    if args.normalization == "R_at_origin":
        point = 0.0
    elif args.point is not None:
        point = args.point
    else:
        neck = next((p for p in critical_points(profile) if p.kind == "neck"), None)
        if neck is None:
            raise NoNeckError("no neck in the snapshot; pass --point explicitly")
        point = neck.x
    rescaled = parabolic_rescale(profile, point, args.normalization)
    lo, hi = (float(v) for v in args.window.split(","))
    model = bryant_profile(profile.n) if args.model == "bryant" else "cylinder"
    residual = profile_match(rescaled, model, (lo, hi))
    out_path = args.out or os.path.join(args.input, f"rescaled_{idx}.csv")
    lines = ["s_hat,phi_hat"]
    lines.extend("%.17g,%.17g" % (a, b)
                 for a, b in zip(rescaled.s_hat, rescaled.phi_hat))
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(json.dumps({
        "snapshot_index": idx, "t": t, "lambda": rescaled.lam,
        "normalization": args.normalization, "model": args.model,
        "window": [lo, hi], "residual": residual, "rescaled_csv": out_path,
    }, sort_keys=True))
    return EXIT_OK


def _sweep_worker(text):
    resolved = parse_config(text)
    row = {
        "alpha": resolved.values.get("ic.alpha"),
        "out_dir": resolved.output_dir,
        "t_hat": None,
        "type_verdict": "aborted",
        "blowup_exponent": float("nan"),
        "stop_reason": "aborted",
        "exit_code": EXIT_NUMERIC,
    }
    try:
        code, report = _simulate_resolved(resolved)
    except _NUMERIC_ERRORS as exc:
        print(f"rotflow: sweep alpha={row['alpha']}: {exc}", file=sys.stderr)
        return row
    row["exit_code"] = code
    if report is not None:
        row.update(t_hat=report.t_hat, type_verdict=report.type_verdict,
                   blowup_exponent=report.blowup_exponent,
                   stop_reason=report.stop_reason)
    return row


def cmd_sweep(args):
    pairs = _collect_pairs(args)
    if pairs.get("ic.kind") != "sine_walpha_neck":
        raise ConfigError("sweep requires ic.kind = sine_walpha_neck")
    alphas = [float(v) for v in args.alpha_values.split(",") if v.strip()]
    if not alphas:
        raise ConfigError("--alpha-values must list at least one value")
    base_dir = pairs.get("output.dir", "out")
    texts = []
    for alpha in alphas:
        sub = dict(pairs)
        sub["ic.alpha"] = repr(alpha)
        sub["output.dir"] = os.path.join(base_dir, f"alpha_{alpha:g}")
        texts.append("".join(f"{k} = {v}\n" for k, v in sub.items()))
    # validate all configs up front so a typo fails before any run starts
    for text in texts:
        parse_config(text)
    if args.parallel > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            rows = list(pool.map(_sweep_worker, texts))
    else:
        rows = [_sweep_worker(text) for text in texts]
    os.makedirs(base_dir, exist_ok=True)
    summary = os.path.join(base_dir, "summary.csv")
    with open(summary, "w", encoding="utf-8") as fh:
        fh.write("alpha,t_hat,type_verdict,blowup_exponent,stop_reason,out_dir\n")
        for row in rows:
            t_hat = "" if row["t_hat"] is None else "%.17g" % row["t_hat"]
            fh.write("%.17g,%s,%s,%.17g,%s,%s\n" % (
                row["alpha"], t_hat, row["type_verdict"],
                row["blowup_exponent"], row["stop_reason"], row["out_dir"]))
    print(f"wrote {summary} ({len(rows)} runs)")
    if any(row["exit_code"] == EXIT_NUMERIC for row in rows):
        return EXIT_NUMERIC
    return EXIT_OK


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="rotflow",
        description="Rotationally symmetric Ricci flow: simulation, "
                    "classification, and model matching.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="write the initial profile only")
    _add_config_arguments(p_gen)
    p_gen.set_defaults(func=cmd_generate)

    p_sim = sub.add_parser("simulate", help="run the flow and write outputs")
    _add_config_arguments(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_cls = sub.add_parser("classify", help="re-run classification on stored outputs")
    p_cls.add_argument("--input", required=True, metavar="DIR",
                       help="output directory of a previous simulate")
    p_cls.set_defaults(func=cmd_classify)

    p_res = sub.add_parser("rescale", help="blow up a stored snapshot and match a model")
    p_res.add_argument("--input", required=True, metavar="DIR")
    p_res.add_argument("--snapshot-index", type=int, default=-1,
                       help="snapshot to rescale (default: last)")
    p_res.add_argument("--point", type=float, default=None,
                       help="x coordinate of the base point (default: first neck)")
    p_res.add_argument("--normalization", default="rm_at_point",
                       choices=["rm_at_point", "R_at_origin"])
    p_res.add_argument("--model", default="cylinder", choices=["cylinder", "bryant"])
    p_res.add_argument("--window", default="-2,2", metavar="LO,HI")
    p_res.add_argument("--out", default=None, metavar="FILE",
                       help="where to write the rescaled (s_hat, phi_hat) CSV")
    p_res.set_defaults(func=cmd_rescale)

    p_swp = sub.add_parser("sweep", help="run a grid of neck parameters")
    _add_config_arguments(p_swp)
    p_swp.add_argument("--alpha-values", required=True, metavar="A1,A2,...",
                       help="comma-separated ic.alpha values")
    p_swp.add_argument("--parallel", type=int, default=1, metavar="N",
                       help="run up to N simulations concurrently")
    p_swp.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"rotflow: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidParameterError as exc:
        print(f"rotflow: invalid parameter: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as exc:
        print(f"rotflow: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"rotflow: i/o error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
