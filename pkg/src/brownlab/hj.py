"""Hamilton-Jacobi engine for the regularized log potential.

The potential S(s, tau, lambda, eps) is transported in closed form
along complex characteristics: initial momenta are integrals against
the unitary-time boundary measure, the flow is an exponential update,
and the value follows from the first Hamilton-Jacobi formula

    S = S(s, 0, lam0, eps0) + H^tau + Re[tau (eps0 p_eps0 / 2
        + lam0 p_lam0)],

with the real contracted Hamiltonian

    H^tau = -tau1/4 + Re[(tau/4) (eps p_eps + 2 lam p_lam - 1)^2],

which is conserved along the flow. Gradients come from the second
formulas: dS/dlambda = p_lambda(tau) (Wirtinger) and dS/deps =
p_eps(tau). Evaluating S at a requested (lambda, eps) means shooting:
Newton inversion of the characteristic endpoint map over (lam0, log
eps0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import (
    DomainProfile,
    InsideDisk,
    Location,
    OutsideDisk,
    OutsideSigma,
    _node_data,
    build_profile,
    contains,
    invert_f_beta,
    mu_s_density,
    mu_s_quadrature,
    radial_profile,
    spiral_coords,
    theta_at_delta_exact,
    theta_at_phi_exact,
)
from .errors import ShootingDiverged, SingularInitialPoint, ZeroDensity
from .measures import BrownParams, CircleMeasure, f_beta, herglotz

__all__ = [
    "CharState",
    "PotentialSample",
    "hamiltonian",
    "initial_momenta",
    "transport",
    "shoot",
    "evaluate_S",
    "s0_outside_value",
    "s0_outside_gradient",
    "s0_inside_gradients",
    "pde_residual_tau",
    "pde_residual_r",
    "blowup_momenta",
    "domain_profile",
]

_PROFILE_CACHE: dict = {}


def domain_profile(m: CircleMeasure, p: BrownParams) -> DomainProfile:
    """Build or fetch the cached domain profile for (m, p)."""
    key = (id(m), round(p.s, 12), round(p.tau1, 12), round(p.tau2, 12))
    hit = _PROFILE_CACHE.get(key)
    if hit is not None and hit[0] is m:
        return hit[1]
    prof = build_profile(m, p)
    if len(_PROFILE_CACHE) > 16:
        _PROFILE_CACHE.clear()
    _PROFILE_CACHE[key] = (m, prof)
    return prof


@dataclass(frozen=True)
class CharState:
    """One characteristic: initial data, endpoint data, and invariants."""

    lam0: complex
    eps0: float
    p_lam0: complex
    p_eps0: float
    lam: complex
    eps: float
    p_lam: complex
    p_eps: float
    H0: float
    tau: complex


@dataclass(frozen=True)
class PotentialSample:
    """Value and analytic gradients of S at one (s, tau, lambda, eps)."""

    s: float
    tau: complex
    lam: complex
    eps: float
    S_value: float
    grad_lam: complex
    grad_eps: float
    state: CharState


def hamiltonian(tau: complex, lam: complex, eps: float, p_lam: complex, p_eps: float) -> float:
    """Real contracted Hamiltonian H^tau; conserved along the flow."""
    A = eps * p_eps + 2.0 * lam * p_lam - 1.0
    return -tau.real / 4.0 + ((tau / 4.0) * A * A).real


def _momenta_from_quadrature(quad: CircleMeasure, lam0: complex, eps0: float):
    xi = quad.support_points
    w = quad.support_weights
    d2 = np.abs(xi - lam0) ** 2 + eps0 * eps0
    p_lam0 = complex(-np.sum(w * (np.conj(xi) - np.conj(lam0)) / d2))
    p_eps0 = float(2.0 * eps0 * np.sum(w / d2))
    return p_lam0, p_eps0


def _initial_value(quad: CircleMeasure, lam0: complex, eps0: float) -> float:
    xi = quad.support_points
    w = quad.support_weights
    d2 = np.abs(xi - lam0) ** 2 + eps0 * eps0
    return float(np.sum(w * np.log(d2)))


def initial_momenta(m: CircleMeasure, s: float, lam0: complex, eps0: float):
    """Initial momenta (p_lam0, p_eps0) of the characteristic flow.

    For eps0 > 0 both are integrals against the unitary-time measure.
    At eps0 = 0 the subordination identity 2 lam0 p_lam0 - 1 =
    -J_{mu0}(chi_s(lam0)) is used instead, which requires lam0 off the
    support of that measure.
    """
    lam0 = complex(lam0)
    eps0 = float(eps0)
    if eps0 < 0:
        raise ValueError("eps0 must be nonnegative")
    if eps0 == 0.0:
        on_circle = abs(abs(lam0) - 1.0) < 1e-9
        if on_circle and radial_profile(m, s, float(np.angle(lam0))) < 1.0 - 1e-9:
            raise SingularInitialPoint(
                "eps0 = 0 requires lam0 off the spectral support"
            )
        region = InsideDisk() if abs(lam0) <= 1.0 else OutsideDisk()
        z = invert_f_beta(m, s, lam0, region)
        p_lam0 = (1.0 - complex(herglotz(m, z))) / (2.0 * lam0)
        return p_lam0, 0.0
    quad = mu_s_quadrature(m, s)
    return _momenta_from_quadrature(quad, lam0, eps0)


def transport(lam0: complex, eps0: float, p_lam0: complex, p_eps0: float, tau: complex) -> CharState:
    """Closed-form characteristic flow from time 0 to complex time tau."""
    lam0 = complex(lam0)
    tau = complex(tau)
    k = 0.5 * tau * (eps0 * p_eps0 + 2.0 * lam0 * p_lam0 - 1.0)
    ek = np.exp(k)
    lam = lam0 * ek
    eps = eps0 * float(np.exp(k.real))
    p_lam = p_lam0 / ek
    p_eps = p_eps0 * float(np.exp(-k.real))
    H0 = hamiltonian(tau, lam0, eps0, p_lam0, p_eps0)
    return CharState(
        lam0=lam0,
        eps0=float(eps0),
        p_lam0=p_lam0,
        p_eps0=float(p_eps0),
        lam=complex(lam),
        eps=eps,
        p_lam=complex(p_lam),
        p_eps=p_eps,
        H0=H0,
        tau=tau,
    )


def _flow_endpoint(quad: CircleMeasure, tau: complex, lam0: complex, eps0: float):
    p_lam0, p_eps0 = _momenta_from_quadrature(quad, lam0, eps0)
    k = 0.5 * tau * (eps0 * p_eps0 + 2.0 * lam0 * p_lam0 - 1.0)
    ek = np.exp(k)
    return lam0 * ek, eps0 * float(np.exp(k.real))


def _seed_list(m: CircleMeasure, p: BrownParams, lam: complex, eps: float):
    """Multistart seeds (lam0, eps0) for the endpoint inversion."""
    tau, s = p.tau, p.s
    eps_base = eps * float(np.exp(-0.5 * tau.real))
    seeds = []
    try:
        prof = domain_profile(m, p)
        if contains(prof, lam, tol=1e-9) is Location.OUTSIDE:
            z = invert_f_beta(m, s - tau, lam, OutsideSigma(prof))
            lam0_star = complex(f_beta(m, s, z))
            k_star = -0.5 * tau * complex(herglotz(m, z))
            eps_star = eps * float(np.exp(-k_star.real))
            seeds.append((lam0_star, max(eps_star, 1e-12)))
    except Exception:
        pass
    seeds.append((lam * np.exp(0.5 * tau), eps_base))
    seeds.append((lam * np.exp(-0.5 * tau), eps_base))
    seeds.append((lam, eps))
    for fac in (np.exp(0.3), np.exp(-0.3), np.exp(0.3j), np.exp(-0.3j)):
        seeds.append((lam * np.exp(0.5 * tau) * fac, eps_base))
    return seeds[:8]


_SHOOT_TOL = 1e-11
_SHOOT_ITERS = 60


def _newton_shoot(quad, tau, lam, eps, lam0, eps0):
    """Damped Newton on (Re lam0, Im lam0, log eps0); None on failure."""
    x = np.array([lam0.real, lam0.imag, np.log(max(eps0, 1e-300))])
    log_eps = np.log(eps)
    scale = max(1.0, abs(lam))

    def residual(vec):
        l0 = complex(vec[0], vec[1])
        e0 = float(np.exp(vec[2]))
        lam_t, eps_t = _flow_endpoint(quad, tau, l0, e0)
        if not np.isfinite(lam_t) or eps_t <= 0:
            return None
        return np.array(
            [lam_t.real - lam.real, lam_t.imag - lam.imag, np.log(eps_t) - log_eps]
        )

    F = residual(x)
    if F is None:
        return None
    for _ in range(_SHOOT_ITERS):
        err = max(abs(F[0]), abs(F[1])) / scale + abs(F[2])
        if err < _SHOOT_TOL:
            l0 = complex(x[0], x[1])
            e0 = float(np.exp(x[2]))
            return l0, e0
        # Forward-difference Jacobian columns.
        Jc = np.empty((3, 3))
        good = True
        for j in range(3):
            h = 1e-7 * max(1.0, abs(x[j]))
            xp = x.copy()
            xp[j] += h
            Fp = residual(xp)
            if Fp is None:
                good = False
                break
            Jc[:, j] = (Fp - F) / h
        if not good:
            return None
        try:
            step = np.linalg.solve(Jc, -F)
        except np.linalg.LinAlgError:
            return None
        lam_step = 1.0
        for _ in range(12):
            xn = x + lam_step * step
            if abs(xn[2]) > 700:
                lam_step *= 0.5
                continue
            Fn = residual(xn)
            if Fn is not None and np.linalg.norm(Fn) < np.linalg.norm(F) * (
                1 - 0.25 * lam_step
            ) + 1e-15:
                x, F = xn, Fn
                break
            lam_step *= 0.5
        else:
            return None
    err = max(abs(F[0]), abs(F[1])) / scale + abs(F[2])
    if err < _SHOOT_TOL:
        return complex(x[0], x[1]), float(np.exp(x[2]))
    return None


def shoot(m: CircleMeasure, p: BrownParams, lam: complex, eps: float, seed_state: CharState | None = None) -> CharState:
    """Find the characteristic whose endpoint at time tau is (lam, eps).

    Newton multistart over the seeds of _seed_list, optionally warm
    started from a previous solution. Raises ShootingDiverged when all
    seeds fail.
    """
    if not eps > 0:
        raise ValueError("shooting requires eps > 0")
    lam = complex(lam)
    quad = mu_s_quadrature(m, p.s)
    attempts = []
    if seed_state is not None:
        attempts.append((seed_state.lam0, max(seed_state.eps0, 1e-300)))
    attempts.extend(_seed_list(m, p, lam, eps))
    for lam0_g, eps0_g in attempts:
        got = _newton_shoot(quad, p.tau, lam, eps, complex(lam0_g), float(eps0_g))
        if got is None:
            continue
        lam0, eps0 = got
        p_lam0, p_eps0 = _momenta_from_quadrature(quad, lam0, eps0)
        state = transport(lam0, eps0, p_lam0, p_eps0, p.tau)
        scale = max(1.0, abs(lam))
        if abs(state.lam - lam) / scale > 1e-8 or abs(state.eps - eps) > 1e-8 * eps:
            continue
        return state
    raise ShootingDiverged(
        f"no characteristic found for lambda={lam}, eps={eps}"
    )


def evaluate_S(m: CircleMeasure, p: BrownParams, lam: complex, eps: float, seed_state: CharState | None = None) -> PotentialSample:
    """Evaluate S and its analytic gradients at (lam, eps), eps > 0.

    The value combines the initial-time quadrature with the first
    Hamilton-Jacobi formula; the gradients are the transported momenta.
    """
    state = shoot(m, p, lam, eps, seed_state=seed_state)
    quad = mu_s_quadrature(m, p.s)
    S0 = _initial_value(quad, state.lam0, state.eps0)
    correction = (
        p.tau
        * (0.5 * state.eps0 * state.p_eps0 + state.lam0 * state.p_lam0)
    ).real
    value = S0 + state.H0 + correction
    return PotentialSample(
        s=p.s,
        tau=p.tau,
        lam=complex(lam),
        eps=float(eps),
        S_value=float(value),
        grad_lam=state.p_lam,
        grad_eps=state.p_eps,
        state=state,
    )


# ---------------------------------------------------------------------------
# The log potential at eps = 0
# ---------------------------------------------------------------------------


def _chi_route(m: CircleMeasure, p: BrownParams, lam: complex):
    """(z, lam0, p_lam0) for the eps = 0 characteristic hitting lam.

    z is the subordination point chi_{s-tau}(lam); lam0 = f_s(z) is the
    initial point and p_lam0 its momentum via the mu0 form.
    """
    prof = domain_profile(m, p)
    z = invert_f_beta(m, p.s - p.tau, lam, OutsideSigma(prof))
    J0 = complex(herglotz(m, z))
    lam0 = complex(f_beta(m, p.s, z))
    p_lam0 = (1.0 - J0) / (2.0 * lam0)
    return z, lam0, p_lam0


def s0_outside_value(m: CircleMeasure, p: BrownParams, lam: complex) -> float:
    """S at eps = 0 for lam outside the closed strip (log potential)."""
    _, lam0, p_lam0 = _chi_route(m, p, lam)
    quad = mu_s_quadrature(m, p.s)
    S0 = _initial_value(quad, lam0, 0.0)
    H0 = hamiltonian(p.tau, lam0, 0.0, p_lam0, 0.0)
    return float(S0 + H0 + (p.tau * lam0 * p_lam0).real)


def s0_outside_gradient(m: CircleMeasure, p: BrownParams, lam: complex) -> complex:
    """Wirtinger gradient dS0/dlambda outside the closed strip.

    Closed form lam dS0/dlam = (1 - J_{mu0}(chi_{s-tau}(lam))) / 2.
    """
    prof = domain_profile(m, p)
    z = invert_f_beta(m, p.s - p.tau, lam, OutsideSigma(prof))
    return (1.0 - complex(herglotz(m, z))) / (2.0 * complex(lam))


def s0_inside_gradients(prof: DomainProfile, lam: complex):
    """(dS0/dv, dS0/ddelta) inside the open strip, in closed form.

    dS0/dv = 2 tau1 v + tau1 and dS0/ddelta = (2 tau1/|tau|^2) *
    (phi^{s,tau}(delta) - delta), where the angle difference equals
    (sigma/2) I_s at the matching theta.
    """
    p = prof.params
    v, delta = spiral_coords(lam, p.tau)
    dv = 2.0 * p.tau1 * float(v) + p.tau1
    theta = theta_at_delta_exact(prof, float(delta))
    _, J, _, _ = _node_data(prof.measure, p, theta)
    ddelta = (2.0 * p.tau1 / abs(p.tau) ** 2) * (0.5 * p.sigma * J.imag)
    return dv, ddelta


# ---------------------------------------------------------------------------
# Finite-difference PDE residuals
# ---------------------------------------------------------------------------


def _fd_gradients(m, p, lam, eps, h, center_state):
    """(S_lam, S_eps) by centered differences of evaluate_S."""
    def val(lam_q, eps_q):
        return evaluate_S(m, p, lam_q, eps_q, seed_state=center_state).S_value

    dx = (val(lam + h, eps) - val(lam - h, eps)) / (2 * h)
    dy = (val(lam + 1j * h, eps) - val(lam - 1j * h, eps)) / (2 * h)
    de = (val(lam, eps + h) - val(lam, eps - h)) / (2 * h)
    return 0.5 * (dx - 1j * dy), de


def _fd_tau_derivative(m, s, tau, lam, eps, h, center_state):
    """dS/dtau = (1/2)(d/dtau1 - i d/dtau2) by centered differences."""
    def val(tau_q):
        return evaluate_S(
            m, BrownParams(s, tau_q), lam, eps, seed_state=center_state
        ).S_value

    d1 = (val(tau + h) - val(tau - h)) / (2 * h)
    d2 = (val(tau + 1j * h) - val(tau - 1j * h)) / (2 * h)
    return 0.5 * (d1 - 1j * d2)


def pde_residual_tau(
    m: CircleMeasure,
    p: BrownParams,
    lam: complex,
    eps: float,
    h: float = 1e-3,
    richardson: bool = False,
) -> float:
    """|dS/dtau - (1/8)[1 - (1 - eps S_eps - 2 lam S_lam)^2]|.

    Every term is assembled from centered finite differences of
    evaluate_S, so the residual probes the shooting solver against the
    complex-time PDE with no analytic-gradient shortcut. Requires
    |tau - s| <= s - 2h so all stencil points stay admissible.
    """
    if abs(p.tau - p.s) > p.s - 2 * h + 1e-15:
        raise ValueError("tau too close to the admissibility boundary for h")
    center = evaluate_S(m, p, lam, eps)

    def assemble(step):
        S_lam, S_eps = _fd_gradients(m, p, lam, eps, step, center.state)
        lhs = _fd_tau_derivative(m, p.s, p.tau, lam, eps, step, center.state)
        B = 1.0 - eps * S_eps - 2.0 * lam * S_lam
        rhs = (1.0 - B * B) / 8.0
        return lhs - rhs

    if not richardson:
        return abs(assemble(h))
    r1 = assemble(h)
    r2 = assemble(h / 2)
    return abs((4.0 * r2 - r1) / 3.0)


def pde_residual_r(
    m: CircleMeasure,
    s: float,
    tau: complex,
    s_dir: float,
    tau_dir: complex,
    r: float,
    lam: complex,
    eps: float,
    h: float = 1e-3,
) -> float:
    """Residual of the one-parameter family P(r) = S(s + r s', tau + r tau').

    dP/dr is differenced along the segment; the right side combines the
    tau'-scaled complex-time bracket with the s'-scaled transport
    bracket, all gradients taken by centered differences at the center
    parameters.
    """
    def params_at(rq):
        return BrownParams(s + rq * s_dir, tau + rq * tau_dir)

    p_c = params_at(r)
    center = evaluate_S(m, p_c, lam, eps)
    P_lam, P_eps = _fd_gradients(m, p_c, lam, eps, h, center.state)
    vp = evaluate_S(m, params_at(r + h), lam, eps, seed_state=center.state).S_value
    vm = evaluate_S(m, params_at(r - h), lam, eps, seed_state=center.state).S_value
    lhs = (vp - vm) / (2 * h)
    B = 1.0 - eps * P_eps - 2.0 * lam * P_lam
    bracket_tau = ((tau_dir / 4.0) * (1.0 - B * B)).real
    bracket_s = (
        lam * lam * P_lam * P_lam - lam * P_lam + (abs(lam) ** 2 / 4.0) * P_eps * P_eps
    ).real
    return abs(lhs - (bracket_tau + s_dir * bracket_s))


# ---------------------------------------------------------------------------
# Boundary blow-up limits
# ---------------------------------------------------------------------------


def blowup_momenta(prof: DomainProfile, phi: float, c: float):
    """Directional momentum limits at the unit circle in blow-up coords.

    Approaching e^{i phi} along lam0 = (1 + c eps0) e^{i phi} as eps0
    -> 0, the radial momentum tends to 1 + (c/sqrt(1+c^2)) m_s(phi) and
    the angular momentum to Im J at the boundary point, independent of
    c. Raises ZeroDensity where the boundary density vanishes.
    """
    dens = float(mu_s_density(prof, phi))
    if dens < 1e-12:
        raise ZeroDensity(f"boundary density vanishes at phi={phi}")
    theta = theta_at_phi_exact(prof, float(phi))
    _, J, _, _ = _node_data(prof.measure, prof.params, theta)
    p_rho = 1.0 + (c / np.sqrt(1.0 + c * c)) * dens
    p_theta = J.imag
    return float(p_rho), float(p_theta)
