"""Runtime monitors, neck tracking, zero counting, and singularity classification."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import NotApplicableError
from .geometry import arc_length, compute_curvature

__all__ = [
    "MonitorSettings",
    "CriticalPoint",
    "DiagnosticsRecord",
    "SingularityReport",
    "AsymptoticsFit",
    "critical_points",
    "phi_s_zero_count",
    "run_monitors",
    "finalize_records",
    "classify_singularity",
    "check_cylindrical_asymptotics",
]

NAN = float("nan")


@dataclass(frozen=True)
class MonitorSettings:
    """Tolerances and reference values consumed by run_monitors."""

    delta_omega: float = None  # threshold in the phi_ss*log(phi/delta) region; None -> auto
    decay_eps: float = 2.0  # epsilon in the far-field decay weight phi^(2+eps/2)
    barrier_radius: float = None  # cylinder-barrier radius r; None -> no barrier monitor
    ball_fraction: float = 0.25  # far-field monitor applies outside this fraction of s-range
    zero_band: float = 1e-7  # dead band (relative to max |phi_s|) for zero counting

    def resolve_delta(self, initial_profile):
        if self.delta_omega is not None:
            return self.delta_omega
        return 0.5 * min(1.0, float(initial_profile.phi.max()))


@dataclass(frozen=True)
class CriticalPoint:
    kind: str  # 'bump' or 'neck'
    x: float
    phi: float
    nondegenerate: bool
    index: int


@dataclass
class DiagnosticsRecord:
    """Monitor values at one time; one CSV row in trace output."""

    t: float
    phi_min: float  # first-neck radius (NaN when no neck)
    phi_max: float  # first-bump radius, or global max when no bump
    x_star: float
    y_star: float
    min_A: float
    phi_s_zero_count: int
    sup_rm: float
    sup_phi2_rm: float
    sup_phiflat_rm: float
    barrier_residual: float
    tip_is_max: bool
    f_max: float  # max (phi_s^2 - 1)/phi
    psi_min: float  # min phi*phi_ss*log(phi) over {phi < 1}
    inf_R: float
    omega_sup_abs_k: float  # max |K| over {phi_ss log(phi/delta) < 0}
    inf_R_times_Tmt: float = NAN  # filled once the singular-time estimate exists
    omega_K_bound: float = NAN  # likewise


@dataclass
class AsymptoticsFit:
    """Inner/outer cylindrical-asymptotics constants fitted across snapshots."""

    C_fit: float
    c_fit: float
    passed: bool
    C_values: list
    c_values: list
    snapshot_times: list


@dataclass
class SingularityReport:
    t_hat: float
    t_hat_ci: float
    blowup_exponent: float
    type_verdict: str  # type_I | type_II | immortal | inconclusive
    rate_band_ok: bool  # None when no neck/no estimate
    tmt_sup_growth: list  # (T-t)*sup|Rm| ratios across the last two decades
    decades: float
    stop_reason: str = ""
    asymptotics_fit: AsymptoticsFit = None
    profile_match: dict = None
    estimator: dict = None


def _transitions(profile, curv, band):
    """Indices (i, j) of consecutive live nodes where discrete phi_s flips sign."""
    phi_s = curv.phi_s
    scale = np.abs(phi_s).max()
    if scale == 0.0:
        return [], phi_s
    live = np.nonzero(np.abs(phi_s[1:-1]) > band * scale)[0] + 1
    if live.size < 2:
        return [], phi_s
    signs = np.sign(phi_s[live])
    flips = np.nonzero(signs[1:] != signs[:-1])[0]
    return [(int(live[k]), int(live[k + 1])) for k in flips], phi_s


def critical_points(profile, curv=None, band=1e-7, nd_band=1e-7):
    """Interior extrema of phi, classified as bumps (max) or necks (min).

    The origin never counts; plateaus resolve to the smallest x attaining
    the extremum; an extremum is nondegenerate when |phi_ss| there is above
    the dead band.
    """
    if curv is None:
        curv = compute_curvature(profile, refined=True)
    pairs, _ = _transitions(profile, curv, band)
    nd_scale = np.abs(curv.phi_ss).max()
    out = []
    for i, j in pairs:
        if curv.phi_s[i] > 0:
            kind = "bump"
            k = i + int(np.argmax(profile.phi[i:j + 1]))
        else:
            kind = "neck"
            k = i + int(np.argmin(profile.phi[i:j + 1]))
        nondeg = bool(abs(curv.phi_ss[k]) > nd_band * nd_scale)
        out.append(CriticalPoint(kind, float(profile.x[k]), float(profile.phi[k]), nondeg, k))
    return out


def phi_s_zero_count(profile, curv=None, band=1e-7):
    """Number of sign changes of phi_s on interior nodes (dead-banded)."""
    if curv is None:
        curv = compute_curvature(profile, refined=True)
    pairs, _ = _transitions(profile, curv, band)
    return len(pairs)


def _profile_of(state):
    return state.profile if hasattr(state, "profile") else state


def run_monitors(state, t_hat=None, settings=None, curv=None):
    """Evaluate every pointwise monitor on one state.

    Fields that need the singular time use t_hat when given, and can be
    filled later with finalize_records once an estimate exists.
    """
    profile = _profile_of(state)
    settings = settings or MonitorSettings()
    if curv is None:
        curv = compute_curvature(profile, refined=True)
    n = profile.n
    t = profile.t
    phi = profile.phi
    x = profile.x

    points = critical_points(profile, curv=curv, band=settings.zero_band)
    bump = next((p for p in points if p.kind == "bump"), None)
    neck = next((p for p in points if p.kind == "neck"), None)
    if bump is not None:
        phi_max, x_star = bump.phi, bump.x
    else:
        k = int(np.argmax(phi))
        phi_max, x_star = float(phi[k]), float(x[k])
    phi_min, y_star = (neck.phi, neck.x) if neck is not None else (NAN, NAN)

    sup_rm = float(curv.rm_norm.max())
    sup_phi2_rm = float((phi**2 * curv.rm_norm).max())

    s = arc_length(profile)
    far = s > settings.ball_fraction * s[-1]
    if far.any():
        sup_phiflat_rm = float(
            (phi[far] ** (2.0 + settings.decay_eps / 2.0) * curv.rm_norm[far]).max()
        )
    else:
        sup_phiflat_rm = NAN

    if settings.barrier_radius is not None:
        lawful = settings.barrier_radius**2 - 2.0 * (n - 1.0) * t
        barrier_residual = float(np.maximum(phi**2 - lawful, 0.0).max())
    else:
        barrier_residual = NAN

    interior = phi > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        f_vals = (curv.phi_s[interior] ** 2 - 1.0) / phi[interior]
    f_max = float(f_vals.max()) if f_vals.size else NAN

    small = interior & (phi < 1.0)
    if small.any():
        logs = np.log(phi[small])
        psi_min = float((phi[small] * curv.phi_ss[small] * logs).min())
    else:
        psi_min = NAN

    delta = settings.resolve_delta(profile)
    with np.errstate(divide="ignore", invalid="ignore"):
        omega = interior & (curv.phi_ss * np.log(phi / delta) < 0.0)
    omega_sup_abs_k = float(np.abs(curv.K[omega]).max()) if omega.any() else NAN

    rec = DiagnosticsRecord(
        t=float(t),
        phi_min=float(phi_min),
        phi_max=float(phi_max),
        x_star=float(x_star),
        y_star=float(y_star),
        min_A=float(curv.A.min()),
        phi_s_zero_count=int(phi_s_zero_count(profile, curv=curv, band=settings.zero_band)),
        sup_rm=sup_rm,
        sup_phi2_rm=sup_phi2_rm,
        sup_phiflat_rm=sup_phiflat_rm,
        barrier_residual=barrier_residual,
        tip_is_max=bool(int(np.argmax(curv.R)) == 0),
        f_max=f_max,
        psi_min=psi_min,
        inf_R=float(curv.R.min()),
        omega_sup_abs_k=omega_sup_abs_k,
    )
    if t_hat is not None:
        _fill_lazy(rec, t_hat)
    return rec


def _fill_lazy(rec, t_hat):
    tmt = t_hat - rec.t
    if tmt <= 0:
        rec.inf_R_times_Tmt = NAN
        rec.omega_K_bound = NAN
        return
    rec.inf_R_times_Tmt = rec.inf_R * tmt
    rec.omega_K_bound = rec.omega_sup_abs_k * tmt * abs(math.log(tmt))


def finalize_records(records, t_hat):
    """Fill the singular-time-dependent monitor fields in place."""
    if t_hat is None:
        return records
    for rec in records:
        _fill_lazy(rec, t_hat)
    return records


def _interp_decade_marks(history_t, log10_sup, marks):
    """Times at which the running max of log10 sup|Rm| crosses given marks."""
    run = np.maximum.accumulate(log10_sup)
    return [float(np.interp(mark, run, history_t)) for mark in marks]


def classify_singularity(trajectory, t_hat, exponent_band=(-1.1, -0.9),
                         drift_tol=0.10, growth_min=0.25):
    """Type-I/II verdict from the curvature history and a singular-time estimate.

    type_I: blow-up exponent within exponent_band and (T-t)*sup|Rm| drifting
    at most drift_tol per decade over the last two decades. type_II: that
    product grows at least growth_min per decade. Fewer than two decades of
    curvature growth is inconclusive; runs ended by the time horizon with
    settled curvature are immortal.
    """
    t = np.asarray(trajectory.history_t, dtype=float)
    sup = np.asarray(trajectory.history_sup_rm, dtype=float)
    n = trajectory.n
    report = SingularityReport(
        t_hat=t_hat, t_hat_ci=NAN, blowup_exponent=NAN,
        type_verdict="inconclusive", rate_band_ok=None,
        tmt_sup_growth=[], decades=NAN, stop_reason=trajectory.stop_reason,
    )
    if t.size == 0:
        return report

    sup_max = float(sup.max())
    report.decades = float(np.log10(sup_max / max(sup[0], 1e-300)))

    if t_hat is None:
        if trajectory.stop_reason == "t_max":
            t_half = t[0] + 0.5 * (t[-1] - t[0])
            k = int(np.searchsorted(t, t_half))
            k = min(k, t.size - 1)
            if sup[-1] <= 1.05 * max(sup[k], 1e-300):
                report.type_verdict = "immortal"
        return report

    if sup_max < 100.0 * max(sup[0], 1e-300):
        return report  # < 2 decades of growth: inconclusive

    window = (sup >= sup_max / 100.0) & (t < t_hat)
    if np.count_nonzero(window) >= 3:
        lx = np.log(t_hat - t[window])
        ly = np.log(sup[window])
        report.blowup_exponent = float(np.polyfit(lx, ly, 1)[0])

    top = np.log10(sup_max)
    marks = [top - 2.0, top - 1.0, top]
    times = _interp_decade_marks(t, np.log10(sup), marks)
    g = [max(t_hat - tc, 0.0) * 10.0**mk for tc, mk in zip(times, marks)]
    if min(g) > 0:
        growth = [g[1] / g[0], g[2] / g[1]]
        report.tmt_sup_growth = [float(v) for v in growth]
        drift_ok = all(abs(v - 1.0) <= drift_tol for v in growth)
        in_band = exponent_band[0] <= report.blowup_exponent <= exponent_band[1]
        if in_band and drift_ok:
            report.type_verdict = "type_I"
        elif all(v >= 1.0 + growth_min for v in growth):
            report.type_verdict = "type_II"

    # neck rate band over records in the trailing curvature decade
    recs = [
        r for r in trajectory.records
        if r.sup_rm >= sup_max / 10.0 and np.isfinite(r.phi_min) and r.t < t_hat
    ]
    if recs:
        ratios = np.array([r.phi_min**2 / (t_hat - r.t) for r in recs])
        report.rate_band_ok = bool(
            np.all((n - 1.0) <= ratios) and np.all(ratios <= 2.0 * (n - 1.0))
        )
    return report


def check_cylindrical_asymptotics(snapshots, t_hat, c_inner=0.2, decay_eps=0.5,
                                  min_points=4, zero_band=1e-7,
                                  degenerate_level=0.05):
    """Fit the inner/outer cylindrical-asymptotics constants across snapshots.

    For each snapshot with a resolved neck, sigma = (s - s_neck)/sqrt(T-t)
    and ratio = phi/sqrt(2(n-1)(T-t)). The inner constant is the smallest C
    with ratio <= 1 + C sigma^2/tau on |sigma| <= c_inner*sqrt(tau),
    tau = |log(T-t)|; the outer constant covers
    ratio <= c * (|sigma|/sqrt(tau)) * sqrt(log(|sigma|/tau)) on
    c_inner*sqrt(tau) <= |sigma| <= (T-t)^(-decay_eps/2).
    """
    usable = []
    for t, profile in snapshots:
        if t_hat is None or t >= t_hat:
            continue
        tmt = t_hat - t
        tau = abs(math.log(tmt))
        if tau <= 0:
            continue
        curv = compute_curvature(profile, refined=True)
        points = critical_points(profile, curv=curv, band=zero_band)
        neck = next((p for p in points if p.kind == "neck"), None)
        if neck is None:
            continue
        s = arc_length(profile)
        sigma = (s - s[neck.index]) / math.sqrt(tmt)
        ratio = profile.phi / math.sqrt(2.0 * (profile.n - 1.0) * tmt)

        inner = (np.abs(sigma) > 0) & (np.abs(sigma) <= c_inner * math.sqrt(tau))
        if np.count_nonzero(inner) < min_points:
            continue
        c_in = float(np.max((ratio[inner] - 1.0) * tau / sigma[inner] ** 2))
        c_in = max(0.0, c_in)

        outer = (np.abs(sigma) >= c_inner * math.sqrt(tau)) & (
            np.abs(sigma) <= tmt ** (-decay_eps / 2.0)
        ) & (np.abs(sigma) / tau > 1.05)
        if np.count_nonzero(outer) >= min_points:
            model = (np.abs(sigma[outer]) / math.sqrt(tau)) * np.sqrt(
                np.log(np.abs(sigma[outer]) / tau)
            )
            c_out = float(np.max(ratio[outer] / model))
        else:
            c_out = NAN
        usable.append((float(t), tmt, c_in, c_out))

    if len(usable) < 3:
        raise NotApplicableError(
            "cylindrical asymptotics needs >= 3 snapshots with a resolved neck"
        )
    tmts = [u[1] for u in usable]
    if max(tmts) < 10.0 * min(tmts):
        raise NotApplicableError("snapshots span less than a decade of T-t")

    C_values = [u[2] for u in usable]
    c_values = [u[3] for u in usable if np.isfinite(u[3])]
    c_max = max(C_values)
    if c_max <= degenerate_level:
        passed = True  # inner correction below resolution everywhere
    else:
        c_min = min(C_values)
        passed = c_min > 0 and c_max / c_min <= 2.0
    return AsymptoticsFit(
        C_fit=float(c_max),
        c_fit=float(max(c_values)) if c_values else NAN,
        passed=bool(passed),
        C_values=[float(v) for v in C_values],
        c_values=[float(u[3]) for u in usable],
        snapshot_times=[u[0] for u in usable],
    )
