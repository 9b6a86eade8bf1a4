"""Spectral domains of the free multiplicative Brownian motion.

This module tabulates, for a circle measure mu0 and admissible (s, tau):

  * the radial profile r_s(theta) solving T(r e^{i theta}) = s,
  * the boundary data I_s, R_s (imaginary/real part of J on the inner
    boundary circle) and the angle maps phi_s and delta_stau,
  * the twisted-spiral strip Sigma_{s,tau} = {e^{v tau} e^{i delta} :
    v1(delta) < v < v2(delta)} together with point classification,
  * the boundary density m_s of the unitary-time spectral measure mu_s,
  * numerical inverses of f_beta by Newton continuation.

Angles phi_s and delta_stau are carried as continuous lifts over the
theta grid, so they increase by 2*pi over one period.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import GridTooCoarse, NoConvergence, OutOfRegion
from .measures import BrownParams, CircleMeasure, T_fn, herglotz, herglotz_prime

_EDGE = 1e-6          # r_s values above 1 - _EDGE count as degenerate (empty strip)
_CLAMP = 1e-12        # derivative clamp inside the guaranteed (0, 2) range
_CLUSTER_HALFWIDTH = 2.0**-6
_CLUSTER_LEVELS = 12

__all__ = [
    "Location",
    "DomainProfile",
    "InsideDisk",
    "OutsideDisk",
    "OutsideSigma",
    "radial_profile",
    "build_profile",
    "v_bounds",
    "contains",
    "classify_many",
    "mu_s_density",
    "invert_f_beta",
    "boundary_polyline",
    "mu_s_quadrature",
    "spiral_coords",
    "theta_at_delta_exact",
    "theta_at_phi_exact",
]


class Location(enum.Enum):
    INSIDE = "inside"
    OUTSIDE = "outside"
    BOUNDARY = "boundary"


def radial_profile(m: CircleMeasure, s: float, theta):
    """Radius r_s(theta) in (0, 1]: the root of T(r e^{i theta}) = s.

    T is strictly decreasing in r on (0, 1), so the root below 1 exists
    exactly when the boundary limit of T is below s; otherwise 1 is
    returned. Bisection runs to |delta r| < 1e-12.
    """
    theta_arr = np.atleast_1d(np.asarray(theta, dtype=float))
    unit = np.exp(1j * theta_arr)
    limit = np.atleast_1d(T_fn(m, unit))
    has_root = limit < s
    # T(r) ~ -2 log r for small r, so this lower end always brackets.
    lo = np.full_like(theta_arr, min(1e-8, np.exp(-0.5 * s - 2.0)))
    hi = np.ones_like(theta_arr)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        above = np.atleast_1d(T_fn(m, mid * unit)) > s
        lo = np.where(has_root & above, mid, lo)
        hi = np.where(has_root & ~above, mid, hi)
    r = np.where(has_root, 0.5 * (lo + hi), 1.0)
    return r if np.ndim(theta) else float(r[0])


def _locate_crossings(m: CircleMeasure, s: float, theta: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Angles where r_s crosses the 1 - _EDGE contour, to ~1e-10."""
    below = r < 1.0 - _EDGE
    flips = np.nonzero(below != np.roll(below, -1))[0]
    out = []
    for i in flips:
        a = theta[i]
        b = theta[(i + 1) % theta.size] + (2 * np.pi if i == theta.size - 1 else 0.0)
        fa = below[i]
        for _ in range(40):
            mid = 0.5 * (a + b)
            if (radial_profile(m, s, mid) < 1.0 - _EDGE) == fa:
                a = mid
            else:
                b = mid
        out.append(0.5 * (a + b))
    return np.asarray(out)


def _wrap_angles(angles: np.ndarray) -> np.ndarray:
    return (angles + np.pi) % (2 * np.pi) - np.pi


def _grid_with_clusters(m: CircleMeasure, s: float, n: int) -> np.ndarray:
    base = np.linspace(-np.pi, np.pi, n, endpoint=False)
    r = radial_profile(m, s, base)
    crossings = _locate_crossings(m, s, base, r)
    if crossings.size == 0:
        return base
    offsets = _CLUSTER_HALFWIDTH * 2.0 ** -np.arange(_CLUSTER_LEVELS)
    extra = (crossings[:, None, None] + np.array([-1.0, 0.0, 1.0])[:, None] * offsets).ravel()
    grid = np.sort(np.unique(np.round(_wrap_angles(np.concatenate([base, extra])), 13)))
    # Drop near-duplicate nodes so finite differences stay conditioned.
    keep = np.concatenate([[True], np.diff(grid) > 1e-12])
    return grid[keep]


def _lifted_derivative(theta: np.ndarray, values: np.ndarray, jump: float) -> np.ndarray:
    """Centered difference on a non-uniform periodic grid.

    `jump` is the increase of `values` over one full period (2*pi for
    angle lifts, 0 for plain periodic data).
    """
    t_prev = np.roll(theta, 1).copy()
    t_next = np.roll(theta, -1).copy()
    f_prev = np.roll(values, 1).copy()
    f_next = np.roll(values, -1).copy()
    t_prev[0] -= 2 * np.pi
    f_prev[0] -= jump
    t_next[-1] += 2 * np.pi
    f_next[-1] += jump
    hm = theta - t_prev
    hp = t_next - theta
    return (f_next * hm**2 - f_prev * hp**2 + values * (hp**2 - hm**2)) / (
        hm * hp * (hm + hp)
    )


@dataclass(frozen=True)
class DomainProfile:
    """Tabulated boundary data of Sigma_{s,tau} over one angular period."""

    params: BrownParams
    measure: CircleMeasure
    theta_grid: np.ndarray
    r_s: np.ndarray
    I_s: np.ndarray
    R_s: np.ndarray
    phi_s: np.ndarray
    delta_stau: np.ndarray
    d_phi_d_theta: np.ndarray
    d_delta_d_theta: np.ndarray
    v1_nodes: np.ndarray = field(repr=False, default=None)
    v2_nodes: np.ndarray = field(repr=False, default=None)

    # -- periodic interpolation helpers -------------------------------------

    def _reduce(self, x, grid: np.ndarray):
        period = 2 * np.pi
        return grid[0] + np.mod(np.asarray(x, dtype=float) - grid[0], period)

    def _interp(self, x, grid: np.ndarray, values: np.ndarray, jump: float):
        xr = self._reduce(x, grid)
        gx = np.concatenate([grid, [grid[0] + 2 * np.pi]])
        gv = np.concatenate([values, [values[0] + jump]])
        return np.interp(xr, gx, gv)

    def theta_at_delta(self, delta):
        """theta with delta_stau(theta) = delta (periodic interpolation)."""
        dr = self._reduce(delta, self.delta_stau)
        gx = np.concatenate([self.delta_stau, [self.delta_stau[0] + 2 * np.pi]])
        gv = np.concatenate([self.theta_grid, [self.theta_grid[0] + 2 * np.pi]])
        return np.interp(dr, gx, gv)

    def theta_at_phi(self, phi):
        """theta with phi_s(theta) = phi (periodic interpolation)."""
        pr = self._reduce(phi, self.phi_s)
        gx = np.concatenate([self.phi_s, [self.phi_s[0] + 2 * np.pi]])
        gv = np.concatenate([self.theta_grid, [self.theta_grid[0] + 2 * np.pi]])
        return np.interp(pr, gx, gv)

    def at_theta(self, values: np.ndarray, theta, jump: float = 0.0):
        """Interpolate a per-node field at angle theta."""
        return self._interp(theta, self.theta_grid, values, jump)

    def at_delta(self, values: np.ndarray, delta, jump: float = 0.0):
        """Interpolate a per-node field at spiral angle delta."""
        dr = self._reduce(delta, self.delta_stau)
        gx = np.concatenate([self.delta_stau, [self.delta_stau[0] + 2 * np.pi]])
        gv = np.concatenate([values, [values[0] + jump]])
        return np.interp(dr, gx, gv)


def spiral_coords(lam, tau: complex):
    """Twisted log coordinates (v, delta) with lam = e^{v tau} e^{i delta}.

    delta is returned as a representative in (-pi - |tau2/tau1| rho, ...];
    reduce against a profile before interpolating.
    """
    lam = np.asarray(lam, dtype=complex)
    if np.any(lam == 0):
        raise ValueError("spiral coordinates are undefined at 0")
    rho = np.log(np.abs(lam))
    tau1, tau2 = tau.real, tau.imag
    v = rho / tau1
    delta = np.angle(lam) - (tau2 / tau1) * rho
    return v, delta


def _boundary_images(m: CircleMeasure, p: BrownParams, theta, r, J):
    """Images of the two boundary circles at angle theta under f_{s-tau}.

    u1 is the image of r_s e^{i theta} (lower strip edge), u2 of
    r_s^{-1} e^{i theta} (upper edge); u2 = u1 * e^{tau R_s}.
    """
    beta = p.s - p.tau
    u1 = r * np.exp(1j * np.asarray(theta)) * np.exp(0.5 * beta * J)
    u2 = np.exp(1j * np.asarray(theta)) / r * np.exp(0.5 * beta * (-np.conj(J)))
    return u1, u2


def build_profile(m: CircleMeasure, p: BrownParams, n: int = 1024) -> DomainProfile:
    """Tabulate the domain profile on an adaptively clustered grid.

    The grid is refined dyadically around every angle where r_s crosses
    1 - 1e-6. If the lifts phi_s or delta_stau fail to be strictly
    increasing, the base resolution is doubled twice before giving up
    with GridTooCoarse.
    """
    if n < 64:
        raise ValueError("need at least 64 grid nodes")
    s, tau = p.s, p.tau
    sigma = p.sigma
    attempt_n = n
    for _ in range(3):
        theta = _grid_with_clusters(m, s, attempt_n)
        r = radial_profile(m, s, theta)
        J = herglotz(m, r * np.exp(1j * theta))
        I_s = J.imag
        R_s = -(2.0 / s) * np.log(r)
        phi = theta + 0.5 * s * I_s
        delta = theta + 0.5 * (s - sigma) * I_s
        # The lifts are nondecreasing; d(phi)/d(theta) legitimately
        # touches 0 where a spectral gap degenerates to a point, so
        # roundoff-level ties are accepted and only oscillation counts
        # as an under-resolved grid.
        if np.all(np.diff(phi) > -1e-12) and np.all(np.diff(delta) > -1e-12):
            d_phi = _lifted_derivative(theta, phi, 2 * np.pi)
            d_delta = _lifted_derivative(theta, delta, 2 * np.pi)
            interior = r < 1.0 - _EDGE
            d_phi = np.where(interior, np.clip(d_phi, _CLAMP, 2.0 - _CLAMP), d_phi)
            d_delta = np.where(interior, np.clip(d_delta, _CLAMP, 2.0 - _CLAMP), d_delta)
            tau1, tau2 = p.tau1, p.tau2
            v1 = (tau2 / (2 * tau1)) * I_s - 0.5 * R_s
            v2 = v1 + R_s
            return DomainProfile(
                params=p,
                measure=m,
                theta_grid=theta,
                r_s=r,
                I_s=I_s,
                R_s=R_s,
                phi_s=phi,
                delta_stau=delta,
                d_phi_d_theta=d_phi,
                d_delta_d_theta=d_delta,
                v1_nodes=v1,
                v2_nodes=v2,
            )
        attempt_n *= 2
    raise GridTooCoarse(
        f"angle lifts not strictly increasing at {attempt_n // 2} nodes"
    )


def _node_data(m: CircleMeasure, p: BrownParams, theta: float):
    """Fresh (r_s, J, phi_s, delta_stau) at a single angle."""
    r = radial_profile(m, p.s, theta)
    J = complex(herglotz(m, r * np.exp(1j * theta)))
    phi = theta + 0.5 * p.s * J.imag
    delta = theta + 0.5 * (p.s - p.sigma) * J.imag
    return r, J, phi, delta


def _invert_lift_exact(prof: DomainProfile, lift: np.ndarray, which: int, value: float) -> float:
    """Solve lift(theta) = value by bisection on fresh evaluations.

    `which` selects the lift inside _node_data (2 = phi_s, 3 =
    delta_stau). The tabulated lift brackets the root; bisection then
    avoids the O(h^2) interpolation error of the node tables.
    """
    m, p = prof.measure, prof.params
    d = float(prof._reduce(value, lift))
    i = int(np.searchsorted(lift, d, side="right")) - 1
    if i >= lift.size - 1 or i < 0:
        lo, hi = prof.theta_grid[-1], prof.theta_grid[0] + 2 * np.pi
    else:
        lo, hi = prof.theta_grid[i], prof.theta_grid[i + 1]
    for _ in range(52):
        mid = 0.5 * (lo + hi)
        if _node_data(m, p, mid)[which] <= d:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def theta_at_delta_exact(prof: DomainProfile, delta: float) -> float:
    """theta with delta_stau(theta) = delta, by fresh bisection."""
    return _invert_lift_exact(prof, prof.delta_stau, 3, delta)


def theta_at_phi_exact(prof: DomainProfile, phi: float) -> float:
    """theta with phi_s(theta) = phi, by fresh bisection."""
    return _invert_lift_exact(prof, prof.phi_s, 2, phi)


def v_bounds(prof: DomainProfile, delta: float):
    """Strip bounds (v1, v2, theta) at spiral angle delta.

    theta is located by fresh bisection on the delta lift, and the
    bounds are the v coordinates of the two boundary-circle images from
    a fresh radial root, so v2 - v1 = -(2/s) log r_s holds to solver
    accuracy. A degenerate strip is signaled by v1 == v2.
    """
    m, p = prof.measure, prof.params
    theta = theta_at_delta_exact(prof, delta)
    r, J, _, _ = _node_data(m, p, theta)
    if r >= 1.0:
        v = (p.tau2 / (2 * p.tau1)) * J.imag
        return v, v, theta
    u1, u2 = _boundary_images(m, p, theta, r, J)
    v1 = np.log(abs(u1)) / p.tau1
    v2 = np.log(abs(u2)) / p.tau1
    return v1, v2, theta


def _strip_bounds_interp(prof: DomainProfile, delta):
    """Fast per-node interpolated (v1, v2) at delta (vectorized)."""
    v1 = prof.at_delta(prof.v1_nodes, delta)
    v2 = prof.at_delta(prof.v2_nodes, delta)
    return v1, v2


def contains(prof: DomainProfile, lam: complex, tol: float = 1e-9) -> Location:
    """Classify lam against the closed strip, with tolerance tol in v.

    Uses interpolated bounds for a cheap first pass and re-resolves
    near-boundary points with fresh bisection so the stated tolerance
    is honest.
    """
    lam = complex(lam)
    if lam == 0:
        return Location.OUTSIDE
    v, delta = spiral_coords(lam, prof.params.tau)
    v1, v2 = _strip_bounds_interp(prof, delta)
    margin = max(tol, 1e-3)
    if v < v1 - margin or v > v2 + margin:
        return Location.OUTSIDE
    if v1 + margin < v < v2 - margin:
        return Location.INSIDE
    v1, v2, _ = v_bounds(prof, delta)
    if v < v1 - tol or v > v2 + tol:
        return Location.OUTSIDE
    if v1 + tol < v < v2 - tol:
        return Location.INSIDE
    return Location.BOUNDARY


def classify_many(prof: DomainProfile, lam: np.ndarray, tol: float = 1e-9):
    """Vectorized contains: +1 inside, 0 boundary, -1 outside."""
    lam = np.asarray(lam, dtype=complex)
    out = np.full(lam.shape, -1, dtype=int)
    nz = lam != 0
    v, delta = spiral_coords(lam[nz], prof.params.tau)
    v1, v2 = _strip_bounds_interp(prof, delta)
    inside = (v > v1 + tol) & (v < v2 - tol)
    outside = (v < v1 - tol) | (v > v2 + tol)
    code = np.where(inside, 1, np.where(outside, -1, 0))
    out[nz] = code
    return out


def mu_s_density(prof: DomainProfile, phi, exact: bool = True):
    """Density m_s of mu_s w.r.t. dphi/(2*pi): m_s(phi_s(theta)) = R_s(theta).

    With exact=True each angle is resolved by fresh bisection on the
    phi lift; otherwise node interpolation is used (cheaper for large
    batches, accurate to O(grid spacing^2)).
    """
    m, p = prof.measure, prof.params
    if not exact:
        return prof.at_theta(prof.R_s, prof.theta_at_phi(phi))
    scalar = np.ndim(phi) == 0
    values = np.atleast_1d(np.asarray(phi, dtype=float))
    out = np.empty(values.shape)
    for i, ph in enumerate(values):
        theta = theta_at_phi_exact(prof, ph)
        out[i] = -(2.0 / p.s) * np.log(radial_profile(m, p.s, theta))
    return float(out[0]) if scalar else out


def boundary_polyline(prof: DomainProfile, n: int = 512):
    """Sampled inner and outer boundary arcs of Sigma_{s,tau}."""
    m, p = prof.measure, prof.params
    theta = np.linspace(-np.pi, np.pi, n, endpoint=False)
    r = radial_profile(m, p.s, theta)
    J = herglotz(m, r * np.exp(1j * theta))
    u1, u2 = _boundary_images(m, p, theta, r, J)
    return u1, u2


# ---------------------------------------------------------------------------
# Inversion of f_beta
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InsideDisk:
    """Invert within the closed unit disk (anchor 0)."""


@dataclass(frozen=True)
class OutsideDisk:
    """Invert within the closed exterior of the disk (anchor infinity)."""


@dataclass(frozen=True)
class OutsideSigma:
    """Invert within the complement of the closed strip of a profile."""

    prof: DomainProfile


_MAX_CONTINUATION = 200
_NEWTON_ITERS = 40
_TARGET_TOL = 1e-11


def _f_and_deriv(m: CircleMeasure, beta: complex, z: complex):
    J = herglotz(m, z)
    f = z * np.exp(0.5 * beta * J)
    df = np.exp(0.5 * beta * J) * (1.0 + 0.5 * beta * z * herglotz_prime(m, z))
    return f, df


def _newton_step_to(m, beta, z, w_target, guard):
    """Newton iterations for f_beta(z) = w_target; None on failure."""
    # Absolute tolerance, relaxed only where roundoff in f itself
    # exceeds it (very large targets on continuation paths).
    tol = max(_TARGET_TOL, 8e-16 * abs(w_target))
    for _ in range(_NEWTON_ITERS):
        try:
            f, df = _f_and_deriv(m, beta, z)
        except Exception:
            return None
        resid = f - w_target
        if abs(resid) < tol:
            return z
        if df == 0 or not np.isfinite(df):
            return None
        step = resid / df
        # Damp overly large jumps; keeps iterates near the tracked branch.
        if abs(step) > 0.5 * max(1.0, abs(z)):
            step *= 0.5 * max(1.0, abs(z)) / abs(step)
        z = z - step
        if not guard(z):
            return None
    return None


def _continue_along(m, beta, targets, z0, guard):
    """Follow targets with adaptive sub-stepping; NoConvergence on budget."""
    z = _newton_step_to(m, beta, z0, targets[0], guard)
    if z is None:
        raise NoConvergence("seed refinement failed inverting f_beta")
    steps_used = 1
    i = 1
    w_prev = targets[0]
    while i < len(targets):
        w_next = targets[i]
        frac = 1.0
        pos = 0.0
        while pos < 1.0:
            t = min(1.0, pos + frac)
            w_try = w_prev + (w_next - w_prev) * t
            z_new = _newton_step_to(m, beta, z, w_try, guard)
            steps_used += 1
            if steps_used > _MAX_CONTINUATION:
                raise NoConvergence("continuation budget exhausted inverting f_beta")
            if z_new is None:
                frac *= 0.5
                if frac < 1e-6:
                    raise NoConvergence("continuation step underflow inverting f_beta")
                continue
            z = z_new
            pos = t
            frac = min(1.0, frac * 2.0)
        w_prev = w_next
        i += 1
    return z


def invert_f_beta(m: CircleMeasure, beta: complex, w: complex, region) -> complex:
    """Solve f_beta(z) = w with z in the requested region.

    Newton continuation from the region's anchor (0 for disk-interior
    regions, infinity for exteriors, both for the strip complement with
    the branch picked by the target's v coordinate). Raises OutOfRegion
    if w or the solution violates the region, NoConvergence on budget
    exhaustion. The solution satisfies |f_beta(z) - w| < 1e-11.
    """
    w = complex(w)
    beta = complex(beta)
    if isinstance(region, InsideDisk):
        if abs(w) == 0:
            return 0.0 + 0.0j
        guard = lambda z: abs(z) <= 1.0 + 1e-9 and np.isfinite(z)
        # J(0) = 1, so f_beta(w_small) ~ z e^{beta/2} near the origin.
        targets = [0.05 * w, w] if abs(w) > 0.1 else [w]
        z0 = targets[0] * np.exp(-0.5 * beta)
        z = _continue_along(m, beta, targets, z0, guard)
        if abs(z) > 1.0 + 1e-6:
            raise OutOfRegion("solution left the closed unit disk")
        return z
    if isinstance(region, OutsideDisk):
        if w == 0:
            raise OutOfRegion("0 is not in the image of the disk exterior")
        zeta = _invert_from_infinity(m, beta, w)
        if abs(zeta) > 1.0 + 1e-6:
            raise OutOfRegion("solution left the closed disk exterior")
        return 1.0 / zeta
    if isinstance(region, OutsideSigma):
        return _invert_outside_strip(m, beta, w, region.prof)
    raise ValueError(f"unknown inversion region: {region!r}")


def _invert_from_infinity(m: CircleMeasure, beta: complex, w: complex) -> complex:
    """Solve f_beta(1/zeta) = w for |zeta| <= 1, tracking from zeta = 0.

    Uses the reciprocal chart h(zeta) = 1/f_beta(1/zeta), with
    h(zeta) ~ zeta e^{beta/2} near 0 because J(infinity) = -1.
    """
    u = 1.0 / w
    guard = lambda zeta: 0 < abs(zeta) <= 1.0 + 1e-9 and np.isfinite(zeta)

    def newton(zeta, u_target):
        for _ in range(_NEWTON_ITERS):
            try:
                f, df = _f_and_deriv(m, beta, 1.0 / zeta)
            except Exception:
                return None
            h = 1.0 / f
            resid = h - u_target
            if abs(resid) < _TARGET_TOL * max(1.0, abs(u_target)):
                return zeta
            dh = df / (zeta * f) ** 2
            if dh == 0 or not np.isfinite(dh):
                return None
            step = resid / dh
            if abs(step) > 0.5 * max(0.1, abs(zeta)):
                step *= 0.5 * max(0.1, abs(zeta)) / abs(step)
            zeta = zeta - step
            if not guard(zeta):
                return None
        return None

    pos = 0.05
    zeta = newton(pos * u * np.exp(-0.5 * beta), u * pos)
    if zeta is None:
        raise NoConvergence("seed refinement failed inverting f_beta")
    frac = 0.25
    steps_used = 1
    while pos < 1.0:
        t = min(1.0, pos + frac)
        z_new = newton(zeta, u * t)
        steps_used += 1
        if steps_used > _MAX_CONTINUATION:
            raise NoConvergence("continuation budget exhausted inverting f_beta")
        if z_new is None:
            frac *= 0.5
            if frac < 1e-6:
                raise NoConvergence("continuation step underflow inverting f_beta")
            continue
        zeta = z_new
        pos = t
        frac = min(1.0 - pos if pos < 1.0 else 1.0, frac * 2.0) or 1.0
    # Polish in the z chart so the contract holds in w space.
    z = _newton_step_to(m, beta, 1.0 / zeta, w, lambda z_: np.isfinite(z_))
    if z is None:
        raise NoConvergence("final polish failed inverting f_beta")
    return 1.0 / z


def _invert_outside_strip(m: CircleMeasure, beta: complex, w: complex, prof: DomainProfile) -> complex:
    """Invert f_{s-tau} on the complement of the closed strip.

    The continuation path holds delta fixed and moves v from deep
    inside the chosen complement component to the target value; such a
    path cannot cross the strip, which a straight segment in the plane
    can do once tau twists the domain.
    """
    p = prof.params
    where = contains(prof, w)
    if where is Location.INSIDE:
        raise OutOfRegion("target lies inside the strip")
    v_w, delta_w = spiral_coords(w, p.tau)
    v1, v2 = _strip_bounds_interp(prof, delta_w)
    below = v_w <= 0.5 * (v1 + v2)

    def lam_at(v):
        return np.exp(v * p.tau) * np.exp(1j * delta_w)

    def guard(z):
        if not np.isfinite(z) or z == 0:
            return False
        r_here = prof.at_theta(prof.r_s, np.angle(z))
        rz = abs(z)
        # Reject interior of the preimage annulus; its closure is fine.
        return not (r_here * (1 + 1e-9) < rz < (1 - 1e-9) / r_here)

    span = max(3.0, 2.0 * abs(v_w - (v1 if below else v2)))
    if below:
        v_path = np.linspace(v1 - span, v_w, 8)
        z0 = lam_at(v_path[0]) * np.exp(-0.5 * beta)
    else:
        v_path = np.linspace(v2 + span, v_w, 8)
        z0 = lam_at(v_path[0]) * np.exp(0.5 * beta)
    targets = [lam_at(v) for v in v_path]
    z = _continue_along(m, beta, targets, z0, guard)
    r_here = prof.at_theta(prof.r_s, np.angle(z))
    if r_here * (1 + 1e-6) < abs(z) < (1 - 1e-6) / r_here:
        raise OutOfRegion("solution landed inside the preimage strip")
    return z


# ---------------------------------------------------------------------------
# Adaptive quadrature of mu_s
# ---------------------------------------------------------------------------

_QUAD_CACHE: dict = {}


def mu_s_quadrature(
    m: CircleMeasure,
    s: float,
    target: float = 1e-7,
    max_gap: float = 1e-3,
    max_rounds: int = 14,
) -> CircleMeasure:
    """Discretize mu_s once as an atom measure on the circle.

    Nodes (phi_i = phi_s(theta_i), values R_s(theta_i)) are produced at
    exact radial roots and refined interval-by-interval until trapezoid
    mass increments are stable to `target` and support gaps in phi do
    not exceed `max_gap`; trapezoid weights (normalized) then define a
    fixed atomic measure used for every mu_s integral downstream.
    """
    key = (id(m), round(float(s), 12), target, max_gap)
    cached = _QUAD_CACHE.get(key)
    if cached is not None and cached[0] is m:
        return cached[1]

    theta = _grid_with_clusters(m, s, 1024)

    def node_data(th):
        r = radial_profile(m, s, th)
        J = herglotz(m, r * np.exp(1j * th))
        phi = th + 0.5 * s * J.imag
        dens = -(2.0 / s) * np.log(r)
        return phi, dens

    phi, dens = node_data(theta)
    for _ in range(max_rounds):
        if theta.size > 24000:
            break
        dphi = np.diff(phi)
        coarse = 0.5 * (dens[:-1] + dens[1:]) * dphi
        mid_theta = 0.5 * (theta[:-1] + theta[1:])
        phi_m, dens_m = node_data(mid_theta)
        fine = 0.5 * (dens[:-1] + dens_m) * (phi_m - phi[:-1]) + 0.5 * (
            dens_m + dens[1:]
        ) * (phi[1:] - phi_m)
        err = np.abs(fine - coarse) / (2 * np.pi)
        active = dens[:-1] + dens[1:] + dens_m > 0
        wide = active & (dphi > max_gap)
        split = wide | (err > target / max(err.size, 1))
        if not np.any(split):
            break
        theta = np.sort(np.concatenate([theta, mid_theta[split]]))
        phi, dens = node_data(theta)

    angles = _wrap_angles(phi)
    order = np.argsort(angles, kind="stable")
    angles = angles[order]
    values = dens[order]
    keep = np.concatenate([[True], np.diff(angles) > 1e-12])
    angles, values = angles[keep], values[keep]
    gaps = np.diff(np.concatenate([angles, [angles[0] + 2 * np.pi]]))
    halfspan = 0.5 * (gaps + np.roll(gaps, 1))
    raw_mass = float(np.sum(values * halfspan) / (2 * np.pi))
    quad = CircleMeasure.from_parts(
        density=list(zip(angles, values)), normalize=True
    )
    if len(_QUAD_CACHE) > 32:
        _QUAD_CACHE.clear()
    _QUAD_CACHE[key] = (m, quad, raw_mass)
    return quad


def unitary_mass(m: CircleMeasure, s: float, **kwargs) -> float:
    """Mass of the tabulated boundary density before normalization.

    This is the adaptive trapezoid value of (1/2pi) integral R_s dphi,
    which equals the total mass of the planar distribution for every
    admissible tau; deviation from 1 measures discretization error.
    """
    mu_s_quadrature(m, s, **kwargs)
    key = (
        id(m),
        round(float(s), 12),
        kwargs.get("target", 1e-7),
        kwargs.get("max_gap", 1e-3),
    )
    return _QUAD_CACHE[key][2]
