"""Constructors for the initial metrics and the neck-pinching criterion."""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidParameterError, NoNeckError
from .geometry import RadialProfile, compute_curvature

__all__ = [
    "GridSpec",
    "InitialDataSpec",
    "PinchReport",
    "make_arctan_cylindrical",
    "make_neck_sine_walpha",
    "make_flat_perturbation",
    "pinching_report",
]

HALF_PI = 0.5 * np.pi
GRADING_STRENGTH = 2.0  # exponent of the graded-grid map


@dataclass(frozen=True)
class GridSpec:
    """Radial grid recipe: m nodes on [0, x_max], uniform or origin-graded."""

    x_max: float
    m: int = 1024
    kind: str = "uniform"

    def __post_init__(self):
        if not self.x_max > 0:
            raise InvalidParameterError("grid.x_max must be positive")
        if not isinstance(self.m, (int, np.integer)) or self.m < 64:
            raise InvalidParameterError("grid.points must be an integer >= 64")
        if self.kind not in ("uniform", "graded"):
            raise InvalidParameterError("grid.kind must be 'uniform' or 'graded'")

    def nodes(self):
        u = np.linspace(0.0, 1.0, self.m)
        if self.kind == "uniform":
            return self.x_max * u
        return self.x_max * np.expm1(GRADING_STRENGTH * u) / np.expm1(GRADING_STRENGTH)


@dataclass(frozen=True)
class InitialDataSpec:
    """Which initial metric to build, with its parameters."""

    kind: str
    n: int
    grid: GridSpec
    alpha: float = None
    eps_close: float = None
    smoothing_width: float = 0.1
    decay_eps: float = 2.0

    KINDS = ("arctan_cylindrical", "sine_walpha_neck", "flat_perturbation", "custom_profile")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidParameterError("unknown ic.kind %r" % (self.kind,))

    def build(self):
        if self.kind == "arctan_cylindrical":
            return make_arctan_cylindrical(self.n, self.grid)
        if self.kind == "sine_walpha_neck":
            if self.alpha is None:
                raise InvalidParameterError("ic.alpha is required for sine_walpha_neck")
            return make_neck_sine_walpha(self.n, self.alpha, self.grid, self.smoothing_width)
        if self.kind == "flat_perturbation":
            if self.eps_close is None:
                raise InvalidParameterError("ic.eps_close is required for flat_perturbation")
            return make_flat_perturbation(self.n, self.eps_close, self.grid)
        raise InvalidParameterError(
            "custom_profile has no generator; pass a RadialProfile to the run API"
        )


@dataclass(frozen=True)
class PinchReport:
    """Neck-pinching criterion evaluated on one profile."""

    x_star: float  # first bump location
    y_star: float  # first neck location after the bump
    phi_max0: float
    phi_min0: float
    r: float  # pinching ratio phi_max0 / phi_min0
    beta: float  # inf over the grid of A (<= 0 in practice)
    threshold: float  # sqrt((n+1-2*beta)/(n-1) + 1)
    criterion_met: bool


def _check_n(n):
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise InvalidParameterError("dimension parameter n must be an integer >= 2")
    return int(n)


def make_arctan_cylindrical(n, grid):
    """phi = arctan(x), xi = 1: no necks, opens to a cylinder of radius pi/2."""
    n = _check_n(n)
    x = grid.nodes()
    return RadialProfile(n=n, x=x, phi=np.arctan(x), xi=np.ones_like(x))


def _w_alpha(alpha, x):
    return np.sqrt(alpha + (x - HALF_PI) ** 2)


def _quintic_blend(u, L, fa, fpa, fppa, fb, fpb, fppb):
    """Two-point quintic Hermite matching value, slope and curvature."""
    u2, u3 = u * u, u * u * u
    u4, u5 = u3 * u, u3 * u * u
    h0 = 1.0 - 10.0 * u3 + 15.0 * u4 - 6.0 * u5
    h1 = u - 6.0 * u3 + 8.0 * u4 - 3.0 * u5
    h2 = 0.5 * u2 - 1.5 * u3 + 1.5 * u4 - 0.5 * u5
    h3 = 10.0 * u3 - 15.0 * u4 + 6.0 * u5
    h4 = -4.0 * u3 + 7.0 * u4 - 3.0 * u5
    h5 = 0.5 * u3 - u4 + 0.5 * u5
    return (
        fa * h0 + L * fpa * h1 + L * L * fppa * h2
        + fb * h3 + L * fpb * h4 + L * L * fppb * h5
    )


def sine_walpha_crossing(alpha):
    """The unique x in (0, pi/2) where sin(x) meets W_alpha(x)."""
    if not 0.0 < alpha < 1.0:
        raise InvalidParameterError("ic.alpha must lie in (0, 1)")
    return brentq(
        lambda x: np.sin(x) - np.sqrt(alpha + (x - HALF_PI) ** 2),
        1e-12, HALF_PI, xtol=1e-14, rtol=8.9e-16,
    )


def make_neck_sine_walpha(n, alpha, grid, smoothing_width=0.1):
    """Sphere-like cap sin(x) glued to the hyperbola W_alpha(x) across a C^2 blend.

    The neck sits at x = pi/2 with radius sqrt(alpha); the profile opens
    asymptotically flat (phi ~ x - pi/2 far out).
    """
    n = _check_n(n)
    if not 0.0 < alpha < 1.0:
        raise InvalidParameterError("ic.alpha must lie in (0, 1)")
    if grid.x_max <= np.pi:
        raise InvalidParameterError("grid.x_max must exceed pi to cover the neck")
    w = float(smoothing_width)
    if not w > 0:
        raise InvalidParameterError("ic.smoothing_width must be positive")
    x_alpha = sine_walpha_crossing(alpha)
    a, b = x_alpha - w, x_alpha + w
    if a <= 0 or b >= HALF_PI:
        raise InvalidParameterError(
            "ic.smoothing_width %.4g leaves no sin cap or touches the neck "
            "(crossing at %.4g)" % (w, x_alpha)
        )
    if n < 4:
        warnings.warn(
            "sine_walpha_neck has slightly negative scalar curvature on the "
            "outer piece for n < 4; nonnegativity is only checked for n >= 4",
            stacklevel=2,
        )

    x = grid.nodes()
    phi = np.empty_like(x)
    sin_part = x <= a
    w_part = x >= b
    blend = ~(sin_part | w_part)
    phi[sin_part] = np.sin(x[sin_part])
    phi[w_part] = _w_alpha(alpha, x[w_part])
    L = b - a
    wa = _w_alpha(alpha, b)
    phi[blend] = _quintic_blend(
        (x[blend] - a) / L, L,
        np.sin(a), np.cos(a), -np.sin(a),
        wa, (b - HALF_PI) / wa, alpha / wa**3,
    )
    return RadialProfile(n=n, x=x, phi=phi, xi=np.ones_like(x))


# Bump shape for the flat perturbation: B and its steepest slope.
_BUMP_SLOPE_MAX = 6.0 / np.sqrt(5.0) * (4.0 / 5.0) ** 2  # max |B'| at u = 1/sqrt(5)
_BUMP_CENTER = 2.0
_TARGET_DIP = 1.25  # aimed-for drop of phi_s below zero margin


def make_flat_perturbation(n, eps_close, grid):
    """phi = x (1 + eta) with a compactly supported C^2 bump eta.

    The amplitude keeps max(phi/x, x/phi)^2 <= 1 + eps_close (metric
    closeness to flat), while the bump is made narrow enough that phi still
    acquires exactly one bump and one neck.
    """
    n = _check_n(n)
    if eps_close is None or eps_close < 0:
        raise InvalidParameterError("ic.eps_close must be >= 0")
    x = grid.nodes()
    if eps_close == 0.0:
        return RadialProfile(n=n, x=x, phi=x.copy(), xi=np.ones_like(x))

    amp = 0.98 * (np.sqrt(1.0 + eps_close) - 1.0)
    c = _BUMP_CENTER
    # narrowest width that still drives phi_s below zero by a safe margin
    h = min(1.0, _BUMP_SLOPE_MAX * amp * c / _TARGET_DIP)
    if grid.x_max < c + h + 1.0:
        raise InvalidParameterError("grid.x_max too small for the perturbation bump")
    u = (x - c) / h
    bump = np.where(np.abs(u) < 1.0, (1.0 - np.minimum(u * u, 1.0)) ** 3, 0.0)
    phi = x * (1.0 + amp * bump)
    profile = RadialProfile(n=n, x=x, phi=phi, xi=np.ones_like(x))

    from .diagnostics import phi_s_zero_count

    if phi_s_zero_count(profile) != 2:
        raise NoNeckError(
            "eps_close=%.4g cannot produce a resolved bump+neck pair on this grid "
            "(bump half-width %.4g vs spacing %.4g)" % (eps_close, h, x[1] - x[0])
        )
    return profile


def pinching_report(profile):
    """Evaluate the neck-pinching ratio criterion on a profile.

    The report compares r = phi(first bump)/phi(first subsequent neck)
    against sqrt((n+1-2*beta)/(n-1) + 1), beta = inf A.
    """
    from .diagnostics import critical_points

    curv = compute_curvature(profile, refined=True)
    points = critical_points(profile, curv=curv)
    bump = next((p for p in points if p.kind == "bump"), None)
    if bump is None:
        raise NoNeckError("profile has no interior bump")
    neck = next((p for p in points if p.kind == "neck" and p.x > bump.x), None)
    if neck is None:
        raise NoNeckError("profile has no neck after the first bump")
    beta = float(curv.A.min())
    n = profile.n
    threshold = float(np.sqrt((n + 1.0 - 2.0 * beta) / (n - 1.0) + 1.0))
    r = bump.phi / neck.phi
    return PinchReport(
        x_star=bump.x, y_star=neck.x,
        phi_max0=bump.phi, phi_min0=neck.phi,
        r=float(r), beta=beta, threshold=threshold,
        criterion_met=bool(r > threshold),
    )
