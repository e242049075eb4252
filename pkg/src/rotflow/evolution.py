"""Time integration of the rotationally symmetric flow.

The state advances in curvature form: phi_t = -(K + (n-1) L) phi and
xi_t = -n K xi, stepped with midpoint RK2 and an adaptive parabolic time
step. Three outer boundary treatments are supported, and the grid can shed
nodes near a developing singularity where the local parabolic scale makes
the original spacing needlessly fine (the time step tracks the finest cell,
so coarsening where curvature is huge keeps long runs affordable).
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .diagnostics import MonitorSettings, finalize_records, run_monitors
from .errors import (
    BlowupOverrunError,
    InvalidParameterError,
    NoEstimateError,
    NumericFailureError,
    RunAbortedError,
    SingularProfileError,
    SingularStateError,
)
from .geometry import RadialProfile, compute_curvature

__all__ = [
    "OUTER_BCS",
    "SimConfig",
    "SimState",
    "Trajectory",
    "SingularTimeEstimate",
    "rhs",
    "step",
    "adaptive_dt",
    "run",
    "estimate_singular_time",
]

OUTER_BCS = ("dirichlet_fixed", "cylinder_exact", "asymptotic_linear")


@dataclass(frozen=True)
class SimConfig:
    """Everything the integrator needs besides the initial profile."""

    n: int
    cfl: float = 0.8
    dt_init: float = 1e-6  # cap on the very first step
    dt_max: float = 1e-2
    t_max: float = 10.0
    stop_curvature: float = 1e8
    outer_bc: str = "asymptotic_linear"
    record_every: int = 25
    snapshot_times: tuple = ()
    max_steps: int = 20_000_000
    decimate_every: int = 25  # 0 disables grid coarsening
    decimate_theta: float = 0.1
    decimate_rm_floor: float = 0.0
    decimate_min_points: int = 128

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise InvalidParameterError("n must be an integer >= 2")
        if self.outer_bc not in OUTER_BCS:
            raise InvalidParameterError(
                f"outer_bc must be one of {OUTER_BCS}, got {self.outer_bc!r}"
            )
        for name in ("cfl", "dt_init", "dt_max", "t_max", "stop_curvature"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        if self.record_every < 1:
            raise InvalidParameterError("record_every must be >= 1")


@dataclass(frozen=True)
class SimState:
    profile: RadialProfile
    step_count: int = 0

    @property
    def t(self):
        return self.profile.t


@dataclass(frozen=True)
class SingularTimeEstimate:
    t_hat: float
    t_hat_ci: float  # 95% half-width from the fit covariance
    residual: float  # RMS misfit over the range of 1/sup|Rm|
    n_samples: int
    window: tuple  # (t_first, t_last) of the fitted samples
    large_residual: bool


@dataclass
class Trajectory:
    """Everything a completed run produced."""

    n: int
    records: list
    snapshots: list  # [(t, RadialProfile)]
    history_t: np.ndarray
    history_sup_rm: np.ndarray
    stop_reason: str  # curvature | t_max | max_steps | aborted
    final_state: SimState
    estimate: SingularTimeEstimate
    config: SimConfig
    monitors: MonitorSettings

    @property
    def t_hat(self):
        return None if self.estimate is None else self.estimate.t_hat


def _check_bc(outer_bc):
    if outer_bc not in OUTER_BCS:
        raise InvalidParameterError(
            f"outer_bc must be one of {OUTER_BCS}, got {outer_bc!r}"
        )


def _rhs_arrays(profile, curv, outer_bc):
    n = profile.n
    dphi = -(curv.K + (n - 1.0) * curv.L) * profile.phi
    dxi = -n * curv.K * profile.xi
    if profile.has_origin:
        dphi[0] = 0.0
    if outer_bc == "dirichlet_fixed":
        dphi[-1] = 0.0
        dxi[-1] = 0.0
    return dphi, dxi


def rhs(profile, outer_bc="asymptotic_linear", curv=None):
    """Time derivatives (dphi/dt, dxi/dt) of the flow at one state."""
    _check_bc(outer_bc)
    if curv is None:
        curv = compute_curvature(profile)
    return _rhs_arrays(profile, curv, outer_bc)


def _project_outer(x, phi, xi, outer_bc, anchor_phi2, tau, n, t):
    if outer_bc == "cylinder_exact":
        val = anchor_phi2 - 2.0 * (n - 1.0) * tau
        if val <= 0.0:
            raise SingularStateError(
                f"outer cylinder radius vanished at t={t:.6g}"
            )
        phi[-1] = math.sqrt(val)
    elif outer_bc == "asymptotic_linear":
        phi[-1] = phi[-2] + 0.5 * (xi[-2] + xi[-1]) * (x[-1] - x[-2])


# The fixed-coordinate form of the flow carries a pure-gauge mode near the
# axis growing like exp((-nK + 2n(n-1) phi_s^2/phi^2) t): the geometry is
# untouched but the x -> s chart wrinkles, and once the wrinkle reaches grid
# scale the curvature evaluation is garbage.  The reset below re-grids the
# zone within a few tip-curvature lengths onto a rigid analytic chart: the
# zone nodes equidistribute the measure nu(s) = asinh(sqrt(rm0) s), whose
# density 1/p is the reciprocal of the parabolic scale of the model cap
# profile |Rm|(s) ~ rm0/(1 + rm0 s^2), so spacing tracks the local
# curvature length across the cap and a sharpening cap keeps a fixed number
# of cells instead of outgrowing a frozen grid, while pointwise curvature
# readings never move nodes (data-driven spacing lets grid-scale noise herd
# the grid).  nu inverts in closed form (sinh), and only the tip value rm0
# enters, which comes from the axis-fit evaluation and is smooth.  The
# nu-measure of the whole zone is asinh(GAUGE_ZONE) at any curvature, so a
# fixed node budget GAUGE_NODES serves every scale: as the zone shrinks
# past nodes, the filter pulls the budgeted number back in from just
# outside (never reaching farther than GAUGE_PULL zone-radii per call, so a
# disturbed grid is enrolled gradually), and node insertion elsewhere
# (see _insert_nodes) backfills the stretch the pull leaves behind.  Every
# in-zone node snaps fully to its target each call: the gauge rate diverges
# like 1/s^2 toward the axis, so any partial relaxation loses to
# exp(rate*dt) at the innermost nodes, and spacing control at the edge
# cannot be traded away either, since a single squeezed cell sets the
# global time step.  The zone is cut short at an interior curvature
# minimum so a neck developing off the axis keeps its own, collapse-driven
# refinement, and the edge node is then anchored where it stands instead
# of being pulled across the feature.
#
# The target arcs are realized exactly by giving the zone a constant xi and
# relabeling the in-zone x nodes (the trapezoid arc of a constant is exact
# on any spacing, and xi has no spatial derivative anywhere in the system,
# so a jump at the zone edge costs nothing).  The junction cell between the
# zone edge and the first outside node carries the leftover arc, which
# closes into a quadratic for the zone xi with exactly one positive root.
# The relabeling also heals the x-grid itself: after a node removal
# elsewhere leaves a double-width cell, one pass spreads it over the zone,
# so no standing truncation seam survives at a fixed location near the
# tip.  The zone's total arc length is preserved exactly, phi is resampled
# from its profile in arc length, and nothing outside the zone is modified
# at all.  Uniform data on a uniform chart pass through unchanged.
GAUGE_ZONE = 2.5  # zone radius in units of the tip curvature length
GAUGE_MIN_NODES = 6
GAUGE_DENSITY = 0.06  # nu-measure per zone cell (tip cells ~ 0.06 of scale)
GAUGE_NODES = int(math.ceil(math.asinh(GAUGE_ZONE) / GAUGE_DENSITY))
GAUGE_PULL = 1.6  # farthest node pulled into the zone per call, in zone radii


def _gauge_filter(profile, curv):
    if not profile.has_origin:
        return profile
    x, phi, xi = profile.x, profile.phi.copy(), profile.xi.copy()
    m = x.size
    h = np.diff(x)
    s = np.concatenate([[0.0], np.cumsum(0.5 * (xi[:-1] + xi[1:]) * h)])
    rm0 = abs(float(curv.rm_norm[0]))
    if not math.isfinite(rm0):
        return profile
    s_f = GAUGE_ZONE / math.sqrt(1.0 + rm0)
    sr = math.sqrt(rm0)
    j_in = int(np.searchsorted(s, s_f))
    if j_in >= GAUGE_NODES:
        # grid already at least as fine as the budget asks: keep its nodes,
        # anchoring the zone edge on the first node at or beyond s_f
        J = min(j_in, m - 4)
        E = float(s[J])
    else:
        J = min(GAUGE_NODES, int(np.searchsorted(s, GAUGE_PULL * s_f)), m - 4)
        E = s_f
        # absorb nodes sitting on the edge, so the junction cell left over
        # after the pull is a healthy fraction of the edge spacing
        while J + 1 <= m - 4:
            nu = math.asinh(sr * E)
            if nu > 1e-8:
                edge = E * (1.0 - math.sinh(nu * (J - 1.0) / J) / math.sinh(nu))
            else:
                edge = E / J
            if s[J + 1] >= E + 0.5 * edge:
                break
            J += 1
    if J < GAUGE_MIN_NODES:
        return profile
    rm_zone = np.abs(curv.rm_norm[: J + 1])
    if not np.isfinite(rm_zone).all():
        return profile
    # stop at an interior curvature minimum: beyond it sits another feature
    # (a neck) whose chart must be left to its own collapse-driven refinement
    k = int(np.argmin(rm_zone[GAUGE_MIN_NODES:])) + GAUGE_MIN_NODES
    if k < J:
        J = k
        E = float(s[J])

    sz = s[: J + 1]
    if E <= 0.0:
        return profile
    D = float(s[J + 1]) - E
    if D <= 0.0:
        return profile
    arg = sr * E
    frac = np.arange(J + 1, dtype=float) / J
    if arg > 1e-8:
        s_new = np.sinh(frac * math.asinh(arg)) / sr
    else:
        s_new = frac * E
    s_new[0] = 0.0
    s_new[J] = E
    if np.abs(s_new - sz).max() <= 1e-12 * E:
        return profile
    if np.diff(s_new).min() <= 0.0:
        return profile

    # Constant-xi chart realizing s_new exactly: nodes 1..J sit at
    # x = s_new/zbar, and the junction cell [x_J, x_{J+1}] (faces zbar and
    # the untouched xi_{J+1}) must carry the leftover arc D, which closes
    # into a quadratic for zbar with exactly one positive root.
    xi_o = float(xi[J + 1])
    x_o = float(x[J + 1])
    B = xi_o * x_o - E - 2.0 * D
    disc = B * B + 4.0 * x_o * xi_o * E
    zbar = (-B + math.sqrt(disc)) / (2.0 * x_o)
    if not math.isfinite(zbar) or zbar <= 0.0:
        return profile
    x_new = x.copy()
    x_new[1 : J + 1] = s_new[1:] / zbar
    if np.diff(x_new[: J + 2]).min() <= 0.0:
        return profile

    # resample phi from the geometric profile phi(s), odd across s=0
    k2 = min(J + 4, m)
    ss, pp = s[:k2], phi[:k2]
    spline = CubicSpline(
        np.concatenate([-ss[:0:-1], ss]), np.concatenate([-pp[:0:-1], pp])
    )
    phi_zone = spline(s_new[1:])
    if phi_zone.min() <= 0.0:
        return profile
    phi[1 : J + 1] = phi_zone
    xi[: J + 1] = zbar
    return RadialProfile(n=profile.n, x=x_new, phi=phi, xi=xi, t=profile.t)


def _validate_arrays(phi, xi, has_origin, t):
    if not (np.isfinite(phi).all() and np.isfinite(xi).all()):
        raise BlowupOverrunError(f"non-finite state at t={t:.6g}")
    body = phi[1:] if has_origin else phi
    if body.min() <= 0.0 or xi.min() <= 0.0:
        raise SingularStateError(f"phi or xi reached zero at t={t:.6g}")


def _step_profile(profile, dt, outer_bc, curv):
    """One midpoint-RK2 step; curv is the curvature at the incoming state."""
    x, n = profile.x, profile.n
    phi0, xi0 = profile.phi, profile.xi
    anchor = float(phi0[-1]) ** 2

    dphi, dxi = _rhs_arrays(profile, curv, outer_bc)
    phi_m = phi0 + (0.5 * dt) * dphi
    xi_m = xi0 + (0.5 * dt) * dxi
    _project_outer(x, phi_m, xi_m, outer_bc, anchor, 0.5 * dt, n, profile.t)
    _validate_arrays(phi_m, xi_m, profile.has_origin, profile.t + 0.5 * dt)
    mid = RadialProfile(n=n, x=x, phi=phi_m, xi=xi_m, t=profile.t + 0.5 * dt)

    dphi, dxi = _rhs_arrays(mid, compute_curvature(mid), outer_bc)
    phi1 = phi0 + dt * dphi
    xi1 = xi0 + dt * dxi
    _project_outer(x, phi1, xi1, outer_bc, anchor, dt, n, profile.t)
    _validate_arrays(phi1, xi1, profile.has_origin, profile.t + dt)
    return RadialProfile(n=n, x=x, phi=phi1, xi=xi1, t=profile.t + dt)


def step(state, dt, config, curv=None):
    """Advance one step of size dt, returning the new state."""
    if dt <= 0:
        raise InvalidParameterError("dt must be positive")
    if curv is None:
        curv = compute_curvature(state.profile)
    new_profile = _step_profile(state.profile, dt, config.outer_bc, curv)
    return SimState(profile=new_profile, step_count=state.step_count + 1)


def adaptive_dt(state, cfl, curv=None, dt_max=math.inf):
    """Parabolic step: cfl * min(min_cells (ds^2)/2, 0.1/(1 + sup|Rm|))."""
    profile = state.profile if hasattr(state, "profile") else state
    if curv is None:
        curv = compute_curvature(profile)
    ds = 0.5 * (profile.xi[1:] + profile.xi[:-1]) * np.diff(profile.x)
    grid_dt = 0.5 * float((ds * ds).min())
    curv_dt = 0.1 / (1.0 + float(curv.rm_norm.max()))
    return min(cfl * min(grid_dt, curv_dt), dt_max)


# A cell is shed only after its arc width has collapsed below this fraction
# of its width under the initial chart, so grids whose xi never shrinks
# (flat, cylinders) keep every node the user asked for.
DECIMATE_COLLAPSE = 0.5
DECIMATE_INNER_GUARD = 2  # innermost removable node index when an origin exists


def _decimate_grid(profile, curv, theta, rm_floor, min_points, xi_init):
    """Drop interior nodes where the chart has collapsed (local arc spacing
    under DECIMATE_COLLAPSE of the initial spacing) and the merged cell still
    resolves the local parabolic scale theta/sqrt(1+|Rm|).

    Merging two trapezoid cells shortens the cumulative arc of every node
    beyond the removal by delta = O(h^3 xi''), so the surviving phi values
    are shifted by -delta * phi_s to stay on the same radius curve; without
    this the stale pairing reads as a spurious curvature spike at the seam.

    Returns (slimmed profile, slimmed xi_init), or None when nothing
    qualifies."""
    m = profile.m
    if m <= min_points:
        return None
    x, phi, xi = profile.x, profile.phi, profile.xi
    rm = curv.rm_norm
    hx = np.diff(x)
    ds = 0.5 * (xi[1:] + xi[:-1]) * hx
    ds0 = 0.5 * (xi_init[1:] + xi_init[:-1]) * hx
    merged = ds[:-1] + ds[1:]  # width if node i = 1..m-2 is removed
    merged0 = ds0[:-1] + ds0[1:]
    rm_loc = np.maximum(np.maximum(rm[:-2], rm[1:-1]), rm[2:])
    ok = (
        (merged <= theta / np.sqrt(1.0 + rm_loc))
        & (merged <= DECIMATE_COLLAPSE * merged0)
        & (rm_loc >= rm_floor)
    )
    idx = np.nonzero(ok)[0] + 1
    idx = idx[idx <= m - 4]  # keep the outer three nodes
    if profile.has_origin:
        idx = idx[idx >= DECIMATE_INNER_GUARD]
    if idx.size == 0:
        return None
    keep = np.ones(m, dtype=bool)
    budget = m - min_points
    removed, last = 0, -2
    for i in idx:
        if removed >= budget:
            break
        if i - last < 2:  # never remove adjacent nodes in one sweep
            continue
        keep[i] = False
        last = int(i)
        removed += 1
    if removed == 0:
        return None
    gone = np.nonzero(~keep)[0]
    # arc shortening of each merged cell, accumulated over nodes beyond it
    delta = 0.5 * (
        xi[gone] * (hx[gone - 1] + hx[gone])
        - xi[gone - 1] * hx[gone]
        - xi[gone + 1] * hx[gone - 1]
    )
    shift = np.zeros(m)
    shift[gone + 1] = delta
    shift = np.cumsum(shift)
    phi_new = phi - shift * curv.phi_s
    if profile.has_origin:
        phi_new[0] = 0.0
    body = phi_new[1:] if profile.has_origin else phi_new
    if body[keep[1:] if profile.has_origin else keep].min() <= 0.0:
        return None
    slimmed = RadialProfile(
        n=profile.n, x=x[keep], phi=phi_new[keep], xi=xi[keep], t=profile.t
    )
    return slimmed, xi_init[keep]


# Insertion hysteresis: a split leaves two cells of ~0.07 local lengths,
# whose merged width 0.14 sits above the decimation threshold 0.1, so the
# passes never churn a cell between them.
SPLIT_THETA = 0.14  # split cells wider than this fraction of the local scale
SPLIT_BEND = 1e-3  # only where the slope actually turns across the cell


def _insert_nodes(profile, curv, xi_init, max_points):
    """Split cells that have outgrown the local parabolic scale.

    The dual of decimation: where a feature sharpens in place (a neck
    collapsing, the shoulder below an advancing tip), the curvature length
    shrinks at fixed position and the cells covering it must subdivide, or
    truncation error there grows without bound while the rest of the grid
    stays healthy.  A cell is split at its x-midpoint with the face value
    xi set to the mean of its endpoints, which preserves the cell's
    trapezoid arc exactly, so every other node keeps its arc position; phi
    comes from the arc-length profile, clamped into the cell's own range so
    a split can never manufacture a slope sign change.  Stretches where the
    slope is constant across the cell (flat data, the asymptotic cylinder)
    are never split, however coarse: nothing varies there for resolution
    to chase.

    Returns (grown profile, grown xi_init) or None when nothing qualifies.
    """
    m = profile.m
    if m >= max_points:
        return None
    x, phi, xi = profile.x, profile.phi, profile.xi
    hx = np.diff(x)
    d = 0.5 * (xi[:-1] + xi[1:]) * hx
    rm = curv.rm_norm
    rm_loc = np.maximum(rm[:-1], rm[1:])
    bend = np.abs(np.diff(curv.phi_s))
    need = (d > SPLIT_THETA / np.sqrt(1.0 + rm_loc)) & (bend > SPLIT_BEND)
    idx = np.nonzero(need)[0]
    if idx.size == 0:
        return None
    if m + idx.size > max_points:
        idx = idx[: max_points - m]
    s = np.concatenate([[0.0], np.cumsum(d)])
    if profile.has_origin:
        spline = CubicSpline(
            np.concatenate([-s[:0:-1], s]), np.concatenate([-phi[:0:-1], phi])
        )
    else:
        spline = CubicSpline(s, phi)
    x_mid = 0.5 * (x[idx] + x[idx + 1])
    xi_mid = 0.5 * (xi[idx] + xi[idx + 1])
    # arc position of the midpoint under the split faces (xi_i, xi_mid)
    s_mid = s[idx] + 0.125 * (3.0 * xi[idx] + xi[idx + 1]) * hx[idx]
    lo = np.minimum(phi[idx], phi[idx + 1])
    hi = np.maximum(phi[idx], phi[idx + 1])
    phi_mid = np.clip(spline(s_mid), lo, hi)
    grown = RadialProfile(
        n=profile.n,
        x=np.insert(x, idx + 1, x_mid),
        phi=np.insert(phi, idx + 1, phi_mid),
        xi=np.insert(xi, idx + 1, xi_mid),
        t=profile.t,
    )
    xi_init_mid = 0.5 * (xi_init[idx] + xi_init[idx + 1])
    return grown, np.insert(xi_init, idx + 1, xi_init_mid)


def _next_mark(sup):
    """Next half-decade of sup|Rm| at which to snapshot."""
    if sup <= 0:
        return -math.inf
    return 0.5 * math.floor(math.log10(sup) / 0.5) + 0.5


def estimate_singular_time(history):
    """Extrapolate the blow-up time from the 1/sup|Rm| trend.

    Fits a line to u = 1/sup|Rm| over the trailing stretch where
    sup|Rm| >= (final sup)/10, demanding at least 10 samples and monotone
    growth (any relative dip beyond 0.1% disqualifies the window).
    """
    if hasattr(history, "history_t"):
        t, sup = history.history_t, history.history_sup_rm
    else:
        t, sup = history
    t = np.asarray(t, dtype=float)
    sup = np.asarray(sup, dtype=float)
    if t.size < 10:
        raise NoEstimateError("need at least 10 history samples")
    s_fin = float(sup[-1])
    if not np.isfinite(s_fin) or s_fin <= 0:
        raise NoEstimateError("no curvature growth to extrapolate")
    below = np.nonzero(sup < s_fin / 10.0)[0]
    i0 = int(below[-1]) + 1 if below.size else 0
    tw, sw = t[i0:], sup[i0:]
    if tw.size < 10:
        raise NoEstimateError("fewer than 10 samples in the trailing curvature decade")
    if sw.size > 1 and float((np.diff(sw) / sw[:-1]).min()) < -1e-3:
        raise NoEstimateError("curvature history not monotone in the fit window")
    u = 1.0 / sw
    (b, a), cov = np.polyfit(tw, u, 1, cov=True)
    if b >= 0:
        raise NoEstimateError("reciprocal curvature is not decreasing")
    t_hat = -a / b
    if t_hat <= tw[-1]:
        raise NoEstimateError("extrapolated singular time does not lie beyond the data")
    rng = float(u.max() - u.min())
    if rng <= 0:
        raise NoEstimateError("degenerate curvature window")
    residual = float(np.sqrt(np.mean((u - (a + b * tw)) ** 2)) / rng)
    var_t = cov[1, 1] / b**2 + (a**2 / b**4) * cov[0, 0] - 2.0 * (a / b**3) * cov[0, 1]
    ci = 1.96 * math.sqrt(max(float(var_t), 0.0))
    return SingularTimeEstimate(
        t_hat=float(t_hat),
        t_hat_ci=float(ci),
        residual=residual,
        n_samples=int(tw.size),
        window=(float(tw[0]), float(tw[-1])),
        large_residual=bool(residual > 0.005),
    )


def run(config, ic, monitors=None):
    """Integrate from an initial profile until a stop condition fires.

    ic may be a RadialProfile or anything with a build() method producing
    one. Returns a Trajectory; if the state degenerates mid-run, raises
    RunAbortedError carrying the last good state and partial trajectory.
    """
    profile = ic if isinstance(ic, RadialProfile) else ic.build()
    if profile.n != config.n:
        raise InvalidParameterError(
            f"config dimension {config.n} does not match initial data {profile.n}"
        )
    base = monitors if monitors is not None else MonitorSettings()
    barrier = base.barrier_radius
    if barrier is None and config.outer_bc == "cylinder_exact":
        barrier = float(profile.phi.max())
    settings = replace(base, delta_omega=base.resolve_delta(profile),
                       barrier_radius=barrier)

    curv = compute_curvature(profile)
    sup = float(curv.rm_norm.max())
    state = SimState(profile=profile, step_count=0)
    xi_init = profile.xi.copy()
    max_points = max(4 * profile.m, 2048)
    records = [run_monitors(state, settings=settings)]
    history_t = [profile.t]
    history_sup = [sup]
    snapshots = [(profile.t, profile)]
    mark = _next_mark(sup)
    pending = sorted(tt for tt in (config.snapshot_times or ()) if tt > profile.t)
    eps_t = 1e-12 * max(1.0, abs(config.t_max))

    def build_trajectory(reason, estimate):
        return Trajectory(
            n=config.n, records=records, snapshots=snapshots,
            history_t=np.asarray(history_t), history_sup_rm=np.asarray(history_sup),
            stop_reason=reason, final_state=state, estimate=estimate,
            config=config, monitors=settings,
        )

    stop_reason = None
    first = True
    try:
        while True:
            t_now = state.profile.t
            if sup >= config.stop_curvature:
                stop_reason = "curvature"
                break
            if t_now >= config.t_max - eps_t:
                stop_reason = "t_max"
                break
            if state.step_count >= config.max_steps:
                stop_reason = "max_steps"
                break
            while pending and t_now >= pending[0] - eps_t:
                pending.pop(0)
            dt = adaptive_dt(state, config.cfl, curv=curv, dt_max=config.dt_max)
            if first:
                dt = min(dt, config.dt_init)
                first = False
            t_target = pending[0] if pending else config.t_max
            t_target = min(t_target, config.t_max)
            if t_now + dt > t_target:
                dt = t_target - t_now
            if dt <= 0:
                raise NumericFailureError("time step collapsed to zero")

            state = SimState(
                profile=_gauge_filter(
                    _step_profile(state.profile, dt, config.outer_bc, curv), curv
                ),
                step_count=state.step_count + 1,
            )
            curv = compute_curvature(state.profile)
            if (config.decimate_every
                    and state.step_count % config.decimate_every == 0):
                slim = _decimate_grid(
                    state.profile, curv, config.decimate_theta,
                    config.decimate_rm_floor, config.decimate_min_points,
                    xi_init,
                )
                if slim is not None:
                    slimmed, xi_init = slim
                    state = SimState(profile=slimmed, step_count=state.step_count)
                    curv = compute_curvature(slimmed)
                grown = _insert_nodes(state.profile, curv, xi_init, max_points)
                if grown is not None:
                    grown_profile, xi_init = grown
                    state = SimState(
                        profile=grown_profile, step_count=state.step_count
                    )
                    curv = compute_curvature(grown_profile)
            sup = float(curv.rm_norm.max())
            t_now = state.profile.t
            history_t.append(t_now)
            history_sup.append(sup)

            if pending and t_now >= pending[0] - eps_t:
                snapshots.append((t_now, state.profile))
                pending.pop(0)
            elif sup > 0 and math.log10(sup) >= mark:
                snapshots.append((t_now, state.profile))
                mark = _next_mark(sup)
            if state.step_count % config.record_every == 0:
                records.append(run_monitors(state, settings=settings))
    except (SingularStateError, BlowupOverrunError, SingularProfileError) as exc:
        raise RunAbortedError(
            f"run aborted at t={state.profile.t:.6g}: {exc}",
            state=state,
            trajectory=build_trajectory("aborted", None),
        ) from exc

    if records[-1].t != state.profile.t:
        records.append(run_monitors(state, settings=settings))
    if snapshots[-1][0] != state.profile.t:
        snapshots.append((state.profile.t, state.profile))

    try:
        estimate = estimate_singular_time((np.asarray(history_t), np.asarray(history_sup)))
    except NoEstimateError:
        estimate = None
    if estimate is not None:
        finalize_records(records, estimate.t_hat)
    return build_trajectory(stop_reason, estimate)
