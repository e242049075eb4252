"""Discretized rotationally symmetric metrics and pointwise geometry.

A metric g = xi^2 dx^2 + phi^2 ghat on R^(n+1) (ghat the round unit metric
on S^n) is represented by arrays on a radial grid. Everything geometric
reduces to the two sectional curvatures

    K = -phi_ss / phi          (planes containing the radial direction)
    L = (1 - phi_s^2) / phi^2  (planes tangent to the sphere fibers)

where d/ds = (1/xi) d/dx is the derivative in arc length s = int_0^x xi dx'.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import InvalidProfileError, SingularProfileError

__all__ = [
    "RadialProfile",
    "CurvatureField",
    "OriginRegularityReport",
    "arc_length",
    "s_derivative",
    "compute_curvature",
    "compute_A",
    "check_origin_regularity",
    "is_near_singular",
]

NEAR_SINGULAR_FRACTION = 1e-3


def _as_readonly(a):
    arr = np.array(a, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RadialProfile:
    """Metric state (phi, xi) on a radial grid x at one instant t.

    phi[0] == 0 marks a profile with a smooth origin (phi odd across x=0);
    phi[0] > 0 marks a profile without one, e.g. a cylinder slab, treated
    as even across x=0.
    """

    n: int
    x: np.ndarray
    phi: np.ndarray
    xi: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise InvalidProfileError("dimension parameter n must be an integer >= 2")
        x = _as_readonly(self.x)
        phi = _as_readonly(self.phi)
        xi = _as_readonly(self.xi)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "t", float(self.t))
        if x.ndim != 1 or phi.shape != x.shape or xi.shape != x.shape:
            raise InvalidProfileError("x, phi, xi must be 1-d arrays of equal length")
        if x.size < 2:
            raise InvalidProfileError("profile needs at least 2 grid nodes")
        if not (np.isfinite(x).all() and np.isfinite(phi).all() and np.isfinite(xi).all()):
            raise InvalidProfileError("profile arrays must be finite")
        if x[0] != 0.0:
            raise InvalidProfileError("radial grid must start at x = 0")
        if np.any(np.diff(x) <= 0):
            raise InvalidProfileError("radial grid must be strictly increasing")
        if np.any(xi <= 0):
            raise InvalidProfileError("coordinate weight xi must be positive")
        if np.any(phi < 0):
            raise InvalidProfileError("radius phi must be nonnegative")

    @property
    def m(self):
        return self.x.size

    @property
    def has_origin(self):
        return self.phi[0] == 0.0


@dataclass(frozen=True)
class CurvatureField:
    """Pointwise curvature data derived from one RadialProfile."""

    K: np.ndarray
    L: np.ndarray
    ric_rad: np.ndarray
    ric_sph: np.ndarray
    R: np.ndarray
    rm_norm: np.ndarray  # max(|K|, |L|) pointwise
    A: np.ndarray  # phi^2 (L - K) = phi phi_ss + 1 - phi_s^2
    phi_s: np.ndarray
    phi_ss: np.ndarray


@dataclass(frozen=True)
class OriginRegularityReport:
    ok: bool
    phi_s_residual: float  # |phi_s(0) - 1|
    phi_ss_residual: float  # |phi_ss(0)|
    tol: float


def arc_length(profile):
    """Arc length s(x) = int_0^x xi dx' by the trapezoid rule."""
    return cumulative_trapezoid(profile.xi, profile.x, initial=0.0)


# All spatial derivatives are taken directly in arc length: the cell arcs
# d_i = 0.5 (xi_i + xi_{i+1}) (x_{i+1} - x_i) define the metric spacing, and
# xi itself never enters a stencil pointwise (the system has no spatial
# derivative of xi).  This keeps the stencils exact second order however
# lumpy the x-grid becomes under coarsening: only the smoothness of the
# data as a function of arc length matters.


def _cell_arcs(x, xi):
    return 0.5 * (xi[:-1] + xi[1:]) * np.diff(x)


def _d_ds_core(d, f, parity):
    """Second-order d(f)/ds from cell arc widths d (len m-1).

    parity ('odd' or 'even') supplies the mirror ghost value across the
    first node; the outer node uses a one-sided three-point stencil.
    """
    out = np.empty_like(f)
    hm = d[:-1]
    hp = d[1:]
    out[1:-1] = (
        f[:-2] * (-hp / (hm * (hm + hp)))
        + f[1:-1] * ((hp - hm) / (hm * hp))
        + f[2:] * (hm / (hp * (hm + hp)))
    )
    # mirror ghost at arc -d[0]: equal spacing, so the centered weights collapse
    out[0] = f[1] / d[0] if parity == "odd" else 0.0
    h1, h2 = d[-2], d[-1]
    out[-1] = (
        f[-3] * h2 / (h1 * (h1 + h2))
        - f[-2] * (h1 + h2) / (h1 * h2)
        + f[-1] * (h1 + 2.0 * h2) / (h2 * (h1 + h2))
    )
    return out


def s_derivative(profile, values, parity):
    """d(values)/ds with the given parity at x=0."""
    if parity not in ("odd", "even"):
        raise InvalidProfileError("parity must be 'odd' or 'even'")
    if profile.m < 3:
        raise InvalidProfileError("derivatives need at least 3 grid nodes")
    d = _cell_arcs(profile.x, profile.xi)
    return _d_ds_core(d, np.asarray(values, dtype=float), parity)


def _phi_derivatives(x, phi, xi, odd):
    """(phi_s, phi_ss) with phi_ss in compact flux form d/ds(d(phi)/ds)."""
    parity = "odd" if odd else "even"
    d = _cell_arcs(x, xi)
    phi_s = _d_ds_core(d, phi, parity)

    w = np.diff(phi) / d  # face gradients d(phi)/ds

    phi_ss = np.empty_like(phi)
    phi_ss[1:-1] = (w[1:] - w[:-1]) / (0.5 * (d[1:] + d[:-1]))
    # ghost face across x=0 (phi odd or even, equal-arc mirror cell)
    w_ghost = (phi[0] + phi[1]) / d[0] if odd else -w[0]
    phi_ss[0] = (w[0] - w_ghost) / d[0]
    # outer node: one-sided derivative of phi_s
    h1, h2 = d[-2], d[-1]
    phi_ss[-1] = (
        phi_s[-3] * h2 / (h1 * (h1 + h2))
        - phi_s[-2] * (h1 + h2) / (h1 * h2)
        + phi_s[-1] * (h1 + 2.0 * h2) / (h2 * (h1 + h2))
    )
    return phi_s, phi_ss


def _check_computable(profile):
    if profile.m < 3:
        raise InvalidProfileError("curvature needs at least 3 grid nodes")
    bad = np.nonzero(profile.phi[1:] <= 0.0)[0]
    if bad.size:
        raise SingularProfileError(
            "phi vanishes at interior node %d (x=%.6g)"
            % (bad[0] + 1, profile.x[bad[0] + 1])
        )


# Raw stencils lose all relative accuracy in 1 - phi_s^2 close to the axis:
# the quantity and the stencil error are both O(s^2) there, so L carries an
# O(1/j^2) relative error at node j no matter how small h is, which feeds a
# spurious reaction into the flow.  The first nodes therefore take K, L, A
# from a least-squares fit of the odd Taylor shape of a smooth radius,
# phi = s + a3 s^3 + a5 s^5, where 1 - phi_s^2 cancels algebraically.
AXIS_FIT_NODES = 6  # interior nodes entering the fit
AXIS_FIT_APPLY = 5  # nodes 0..AXIS_FIT_APPLY-1 evaluated from the fit

# Monitors read curvature through a refined pass that re-evaluates the nodes
# where the three-point stencil is weakest: the stretch just past the axis
# fit (its 1/(3 j^2) relative ledge in L is enough to park the curvature
# maximum off the axis) and nodes flanking a cell-width jump left by grid
# coarsening (the suddenly doubled cell costs one order of accuracy there).
# The refined values never enter the time step: higher-order stencils feed
# back through the explicit update with a tighter stability bound, and a
# hard switch between stencil families mid-grid plants a standing seam in
# the reaction, both observed as slowly growing kinks.  Readouts have no
# such feedback loop.
AXIS_REFINE_END = 21  # refined nodes AXIS_FIT_APPLY..END-1 near the axis
SEAM_JUMP = 0.25  # relative cell-width jump that marks a coarsening seam


def _quartic_at(s, phi, idx):
    """(phi_s, phi_ss) at the given interior nodes from five-point quartic
    interpolation in arc length (fourth/third-order on any node spacing)."""
    col = idx[:, None] + np.arange(-2, 3)
    d = s[col] - s[idx[:, None]]
    rho = np.abs(d).max(axis=1, keepdims=True)
    u = d / rho
    V = u[:, :, None] ** np.arange(5)
    c = np.linalg.solve(V, phi[col][:, :, None])[:, :, 0]
    return c[:, 1] / rho[:, 0], 2.0 * c[:, 2] / rho[:, 0] ** 2


def _refine_indices(m, s, origin):
    """Nodes re-evaluated by the refined readout (within [lo, m-4])."""
    lo = AXIS_FIT_APPLY if origin else 2
    hi = m - 4
    if hi < lo:
        return np.empty(0, dtype=int)
    parts = []
    if origin and AXIS_REFINE_END - 1 >= lo:
        parts.append(np.arange(lo, min(AXIS_REFINE_END, hi + 1)))
    ds = np.diff(s)
    jump = np.nonzero(np.abs(ds[1:] - ds[:-1]) > SEAM_JUMP * ds[:-1])[0] + 1
    if jump.size:
        flank = np.concatenate([jump - 1, jump, jump + 1])
        parts.append(flank[(flank >= lo) & (flank <= hi)])
    if not parts:
        return np.empty(0, dtype=int)
    return np.unique(np.concatenate(parts))


def _axis_fit(s, phi):
    """(a3, a5) of the constrained fit phi ~ s + a3 s^3 + a5 s^5."""
    sj = s[1 : AXIS_FIT_NODES + 1]
    scale = sj[-1]
    u = sj / scale
    u3 = u**3
    u5 = u3 * u * u
    r = (phi[1 : AXIS_FIT_NODES + 1] - sj) / scale
    g11 = float(u3 @ u3)
    g12 = float(u3 @ u5)
    g22 = float(u5 @ u5)
    b1 = float(u3 @ r)
    b2 = float(u5 @ r)
    det = g11 * g22 - g12 * g12
    if det <= 0.0:
        return 0.0, 0.0
    a3 = (b1 * g22 - b2 * g12) / det
    a5 = (g11 * b2 - g12 * b1) / det
    return a3 / scale**2, a5 / scale**4


def compute_curvature(profile, refined=False):
    """All pointwise curvature quantities of the profile.

    At a smooth origin the even/odd extension limits apply:
    K(0) = L(0) = -phi_sss(0), estimated from the first interior node.

    refined=True re-evaluates the weakest-stencil nodes with five-point
    quartic interpolation (see the note above _quartic_at); it is meant for
    monitor readouts, never for values fed back into a time step.
    """
    _check_computable(profile)
    n = profile.n
    x, phi, xi = profile.x, profile.phi, profile.xi
    origin = profile.has_origin
    phi_s, phi_ss = _phi_derivatives(x, phi, xi, origin)

    with np.errstate(divide="ignore", invalid="ignore"):
        K = -phi_ss / phi
        L = (1.0 - phi_s**2) / phi**2
    A = phi * phi_ss + 1.0 - phi_s**2
    s = None
    if origin:
        applied = False
        if profile.m >= AXIS_FIT_NODES + 2:
            s = arc_length(profile)
            a3, a5 = _axis_fit(s, phi)
            sj = s[1:AXIS_FIT_APPLY]
            p = sj + a3 * sj**3 + a5 * sj**5
            if np.isfinite(p).all() and p.min() > 0.0:
                dp = 3.0 * a3 * sj**2 + 5.0 * a5 * sj**4  # phi_s - 1
                ddp = 6.0 * a3 * sj + 20.0 * a5 * sj**3
                one_minus = -dp * (2.0 + dp)  # 1 - phi_s^2, exact algebra
                K[1:AXIS_FIT_APPLY] = -ddp / p
                L[1:AXIS_FIT_APPLY] = one_minus / p**2
                A[1:AXIS_FIT_APPLY] = p * ddp + one_minus
                phi_s[1:AXIS_FIT_APPLY] = 1.0 + dp
                phi_ss[1:AXIS_FIT_APPLY] = ddp
                K[0] = L[0] = -6.0 * a3
                phi_s[0] = 1.0
                phi_ss[0] = 0.0
                applied = True
        if not applied:
            # phi_ss is odd: phi_ss ~ phi_sss(0) * s, so one node in suffices
            s1 = 0.5 * (xi[0] + xi[1]) * (x[1] - x[0])
            k0 = -phi_ss[1] / s1
            K[0] = k0
            L[0] = k0
        A[0] = 0.0

    if refined and profile.m >= 7:
        if s is None:
            s = arc_length(profile)
        idx = _refine_indices(profile.m, s, origin)
        if idx.size:
            ps, pss = _quartic_at(s, phi, idx)
            phi_s[idx] = ps
            phi_ss[idx] = pss
            K[idx] = -pss / phi[idx]
            L[idx] = (1.0 - ps**2) / phi[idx] ** 2
            A[idx] = phi[idx] * pss + 1.0 - ps**2

    ric_rad = n * K
    ric_sph = K + (n - 1.0) * L
    R = n * (2.0 * K + (n - 1.0) * L)
    rm_norm = np.maximum(np.abs(K), np.abs(L))
    return CurvatureField(
        K=K, L=L, ric_rad=ric_rad, ric_sph=ric_sph, R=R,
        rm_norm=rm_norm, A=A, phi_s=phi_s, phi_ss=phi_ss,
    )


def compute_A(profile):
    """The pinching quantity A = phi*phi_ss + 1 - phi_s^2 (= phi^2 (L-K))."""
    _check_computable(profile)
    phi_s, phi_ss = _phi_derivatives(profile.x, profile.phi, profile.xi, profile.has_origin)
    A = profile.phi * phi_ss + 1.0 - phi_s**2
    if profile.has_origin:
        A[0] = 0.0
    return A


def check_origin_regularity(profile, tol=1e-6):
    """Smooth-origin check: phi_s(0) = 1 and phi_ss(0) = 0.

    Both one-sided values come from the polynomial through the first (up to
    four) nodes in arc length, so a quadratic term like phi = s + c*s^2 is
    detected exactly.
    """
    if profile.m < 3:
        raise InvalidProfileError("origin check needs at least 3 grid nodes")
    if not profile.has_origin:
        return OriginRegularityReport(False, float("inf"), float("inf"), tol)
    k = min(4, profile.m)
    s = arc_length(profile)[:k]
    scale = s[-1]
    # interpolating fit in the scaled variable keeps the Vandermonde tame
    coef = np.polynomial.polynomial.polyfit(s / scale, profile.phi[:k], k - 1)
    dphi = coef[1] / scale
    d2phi = 2.0 * coef[2] / scale**2
    r1 = abs(dphi - 1.0)
    r2 = abs(d2phi)
    return OriginRegularityReport(bool(r1 <= tol and r2 <= tol), float(r1), float(r2), tol)


def is_near_singular(profile):
    """True when some off-axis radius dropped below 1e-3 of the maximum."""
    return bool(np.any(profile.phi[1:] < NEAR_SINGULAR_FRACTION * profile.phi.max()))
