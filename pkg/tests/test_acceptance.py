"""End-to-end acceptance sweep.

Each test exercises one headline guarantee of the toolkit at full
scale, prints a single PASS/FAIL line (visible even under captured
output), and asserts the stated tolerance. The Monte-Carlo criteria
use frozen seeds so the sweep is deterministic.
"""

import time

import numpy as np
import pytest

from brownlab.density import boundary_polyline, density, sample, total_mass
from brownlab.domain import Location, contains
from brownlab.hj import (
    domain_profile,
    evaluate_S,
    pde_residual_tau,
    s0_outside_value,
)
from brownlab.measures import BrownParams, delta1, four_points
from brownlab.moments import StarWord, factorization_check, mc_star_moments, solve_hierarchy
from brownlab.pushforward import (
    _phi_quantile_edges,
    build_push_map,
    phi_s_limit,
    verify_composite,
    verify_pushforward,
)
from brownlab.rmt import SimConfig, eig_cloud, eig_vs_density, estimate_S_mc
from brownlab.rng import substream

M_ONE = delta1()
M_FOUR = four_points()


def _report(capsys, num: int, ok: bool, text: str, elapsed: float) -> None:
    """One pass/fail line per criterion, bypassing output capture."""
    verdict = "PASS" if ok else "FAIL"
    with capsys.disabled():
        print(f"[criterion {num:02d}] {verdict} {text} ({elapsed:.1f}s)")


def test_criterion_01_mass_conservation(capsys):
    # Total mass 1 within 1e-6 on the s = 1 parameter grid
    # tau in {0.5, 1, 1.5} x {0, 0.5i, 1i} (admissible cells only),
    # for both built-in measures, in under 30 seconds.
    t0 = time.perf_counter()
    taus = [
        a + 1j * b
        for a in (0.5, 1.0, 1.5)
        for b in (0.0, 0.5, 1.0)
        if abs(a + 1j * b - 1.0) <= 1.0 + 1e-12
    ]
    assert len(taus) == 7
    worst = 0.0
    for m in (M_ONE, M_FOUR):
        for tau in taus:
            prof = domain_profile(m, BrownParams(1.0, tau))
            worst = max(worst, abs(total_mass(prof) - 1.0))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-6 and elapsed < 30.0
    _report(capsys, 1, ok,
            f"mass conservation: max |mass-1| = {worst:.2e} over 14 cells", elapsed)
    assert worst < 1e-6
    assert elapsed < 30.0


def test_criterion_02_diagonal_parameter_reduction(capsys):
    # At tau = s the spiral angle equals the polar angle on the whole
    # node grid (1e-12), and the planar density reduces to
    # (1 / 2 pi s) |lam|^{-2} dphi/dtheta.
    t0 = time.perf_counter()
    worst_delta = 0.0
    for m in (M_ONE, M_FOUR):
        for s in (0.5, 1.0, 1.5):
            prof = domain_profile(m, BrownParams(s, s))
            worst_delta = max(
                worst_delta, float(np.max(np.abs(prof.delta_stau - prof.theta_grid)))
            )
    worst_rel = 0.0
    for m in (M_ONE, M_FOUR):
        s = 1.0
        prof = domain_profile(m, BrownParams(s, s))
        dphi = np.gradient(prof.phi_s, prof.theta_grid)
        support = prof.theta_grid[prof.r_s < 1.0 - 1e-6]
        for theta_q in np.quantile(support, [0.3, 0.5, 0.7]):
            i = int(np.argmin(np.abs(prof.theta_grid - theta_q)))
            theta, rs = prof.theta_grid[i], prof.r_s[i]
            for frac in (0.25, 0.5, 0.75):
                r = rs ** (1.0 - 2.0 * frac)
                lam = r * np.exp(1j * theta)
                ref = dphi[i] / (2 * np.pi * s * abs(lam) ** 2)
                rel = abs(density(prof, lam) - ref) / abs(ref)
                worst_rel = max(worst_rel, rel)
    elapsed = time.perf_counter() - t0
    ok = worst_delta < 1e-12 and worst_rel < 2e-4
    _report(capsys, 2, ok,
            "diagonal reduction: max |delta-theta| = "
            f"{worst_delta:.1e}, density form rel dev = {worst_rel:.1e}", elapsed)
    assert worst_delta < 1e-12
    assert worst_rel < 2e-4


def test_criterion_03_pde_residual(capsys):
    # Finite-difference residual of the complex-time equation below
    # 1e-3 at h = 1e-3 on 50 random interior points, with the expected
    # factor-4 decay when h is halved, in under 5 minutes.
    t0 = time.perf_counter()
    p = BrownParams(1.0, 1.0)
    prof = domain_profile(M_ONE, p)
    points = sample(prof, 50, seed=5)
    eps = 0.05 + 0.2 * substream(0, 1).random(50)
    res_h = np.array([
        pde_residual_tau(M_ONE, p, complex(lam), float(e), h=1e-3)
        for lam, e in zip(points, eps)
    ])
    res_half = np.array([
        pde_residual_tau(M_ONE, p, complex(lam), float(e), h=5e-4)
        for lam, e in zip(points, eps)
    ])
    ratio = float(np.median(res_h / np.maximum(res_half, 1e-300)))
    elapsed = time.perf_counter() - t0
    ok = res_h.max() < 1e-3 and 3.0 < ratio < 5.0 and elapsed < 300.0
    _report(capsys, 3, ok,
            f"pde residual: max = {res_h.max():.2e} at h=1e-3, "
            f"median halving ratio = {ratio:.2f}", elapsed)
    assert res_h.max() < 1e-3
    assert 3.0 < ratio < 5.0
    assert elapsed < 300.0


def test_criterion_04_analytic_gradients(capsys):
    # Analytic (dS/dlam, dS/deps) match centered differences to a
    # relative error below 1e-4 on 100 points.
    t0 = time.perf_counter()
    h = 1e-5
    cases = []
    for m, p, tag in (
        (M_ONE, BrownParams(1.0, 1.0), 2),
        (M_FOUR, BrownParams(1.0, 1.0 + 0.5j), 3),
    ):
        prof = domain_profile(m, p)
        interior = sample(prof, 40, seed=9)
        eps_in = 0.1 + 0.3 * substream(0, tag).random(40)
        cases += [(m, p, complex(z), float(e)) for z, e in zip(interior, eps_in)]
        _, outer = boundary_polyline(prof, 64)
        for z in 1.3 * outer[::7][:10]:
            cases.append((m, p, complex(z), 0.15))
    assert len(cases) == 100
    worst = 0.0
    for m, p, lam, e in cases:
        c = evaluate_S(m, p, lam, e)

        def S(z, ee):
            return evaluate_S(m, p, z, ee, seed_state=c.state).S_value

        sx = (S(lam + h, e) - S(lam - h, e)) / (2 * h)
        sy = (S(lam + 1j * h, e) - S(lam - 1j * h, e)) / (2 * h)
        se = (S(lam, e + h) - S(lam, e - h)) / (2 * h)
        g_fd = 0.5 * (sx - 1j * sy)
        worst = max(
            worst,
            abs(c.grad_lam - g_fd) / max(abs(g_fd), 1e-3),
            abs(c.grad_eps - se) / max(abs(se), 1e-3),
        )
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4
    _report(capsys, 4, ok,
            f"gradients: max rel deviation = {worst:.2e} on 100 points", elapsed)
    assert worst < 1e-4


def test_criterion_05_outside_harmonicity(capsys):
    # Discrete Laplacian of the eps = 0 log potential below 1e-5 on
    # patches outside the closed domain (far field, annulus exterior,
    # and the inner hole).
    t0 = time.perf_counter()
    h = 1e-3
    worst = 0.0
    for m, p in ((M_ONE, BrownParams(1.0, 1.0)), (M_FOUR, BrownParams(1.0, 1.0 + 0.5j))):
        prof = domain_profile(m, p)
        _, outer = boundary_polyline(prof, 128)
        big = 1.35 * float(np.max(np.abs(outer)))
        centers = [
            big * np.exp(0.4j),
            big * np.exp(2.2j),
            -3.0 + 2.0j,
            0.1 + 0.03j,
            -0.02 + 0.05j,
        ]
        for c in centers:
            for lam in (complex(c), complex(0.97 * c)):
                assert contains(prof, lam) is Location.OUTSIDE
                stencil = (
                    s0_outside_value(m, p, lam + h)
                    + s0_outside_value(m, p, lam - h)
                    + s0_outside_value(m, p, lam + 1j * h)
                    + s0_outside_value(m, p, lam - 1j * h)
                    - 4.0 * s0_outside_value(m, p, lam)
                ) / h**2
                worst = max(worst, abs(stencil))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5
    _report(capsys, 5, ok,
            f"outside harmonicity: max |discrete Laplacian| = {worst:.2e}", elapsed)
    assert worst < 1e-5


def test_criterion_06_pushforward(capsys):
    # Chi-square goodness of fit for the push-forward map at
    # (s, tau) = (1, 1 + i/2) with 1e5 draws, and transitivity of the
    # composite map between tau = 1 and tau = 1 + i.
    t0 = time.perf_counter()
    pm = build_push_map(M_FOUR, 1.0, 1.0 + 0.5j)
    rep = verify_pushforward(pm, 100000, seed=0)
    pm_a = build_push_map(M_FOUR, 1.0, 1.0 + 0.0j)
    pm_b = build_push_map(M_FOUR, 1.0, 1.0 + 1.0j)
    rep_c = verify_composite(pm_a, pm_b, 100000, seed=0)
    elapsed = time.perf_counter() - t0
    ok = rep["pvalue"] > 0.01 and rep_c["pvalue"] > 0.01
    _report(capsys, 6, ok,
            f"push-forward: p = {rep['pvalue']:.3f}, "
            f"composite p = {rep_c['pvalue']:.3f} (n = 1e5 each)", elapsed)
    assert rep["pvalue"] > 0.01
    assert rep_c["pvalue"] > 0.01


def test_criterion_07_circle_limit_histogram(capsys):
    # Samples of the tau = s distribution collapsed by the radial
    # limit map onto the unit circle reproduce the time-s spectral
    # measure: 50 equal-mass bins, 1e5 draws, every bin within 3 sigma.
    t0 = time.perf_counter()
    n, k = 100000, 50
    prof = domain_profile(M_ONE, BrownParams(1.0, 1.0))
    edges = _phi_quantile_edges(M_ONE, 1.0, k)
    points = sample(prof, n, seed=0)
    phi = np.angle(phi_s_limit(prof, points))
    phi = edges[0] + np.mod(phi - edges[0], 2 * np.pi)
    counts = np.histogram(phi, bins=edges)[0]
    assert int(counts.sum()) == n
    sigma = np.sqrt(n * (1.0 / k) * (1.0 - 1.0 / k))
    devs = np.abs(counts - n / k) / sigma
    elapsed = time.perf_counter() - t0
    ok = bool(np.all(devs < 3.0))
    _report(capsys, 7, ok,
            f"circle limit: max bin deviation = {devs.max():.2f} sigma "
            f"over {k} bins", elapsed)
    assert np.all(devs < 3.0)


def test_criterion_08_moment_hierarchy(capsys):
    # Closed forms tr[b] = e^{-(s-tau)/2} and tr[b b*] = e^{tau1} to
    # 1e-8; the hierarchy matches a finite-N simulation (N = 300,
    # 200 samples, words to length 4) within 3 sigma; and the
    # two-factor product check stays within 3 sigma.
    t0 = time.perf_counter()
    worst_closed = 0.0
    for s, tau in ((1.0, 1.0 + 0.5j), (0.5, 0.7 + 0.2j), (2.0, 1.5 - 0.5j)):
        tab = solve_hierarchy(s, tau, max_len=2)
        worst_closed = max(
            worst_closed,
            abs(tab.final(StarWord.from_string("+")) - np.exp(-(s - tau) / 2.0)),
            abs(tab.final(StarWord.from_string("+*")) - np.exp(tau.real)),
        )

    s, tau = 1.0, 1.0 + 0.5j
    tab = solve_hierarchy(s, tau, max_len=4)
    words = [w for w in tab.words if len(w) >= 1]
    cfg = SimConfig(N=300, steps=200, samples=200, seed=0)
    mc = mc_star_moments(cfg, [(s, tau)], words)
    worst_sigma = 0.0
    for w in words:
        mean, stderr = mc[w]
        worst_sigma = max(worst_sigma, abs(mean - tab.final(w)) / stderr)

    fac = factorization_check(
        0.5, 0.5 + 0.0j, 0.5, 0.3 + 0.2j,
        max_len=4, cfg=SimConfig(N=200, steps=120, samples=120, seed=0),
    )
    elapsed = time.perf_counter() - t0
    ok = worst_closed < 1e-8 and worst_sigma < 3.0 and fac["max_sigma"] < 3.0
    _report(capsys, 8, ok,
            f"moments: closed forms dev = {worst_closed:.1e}, "
            f"hierarchy vs MC max = {worst_sigma:.2f} sigma, "
            f"factorization max = {fac['max_sigma']:.2f} sigma", elapsed)
    assert worst_closed < 1e-8
    assert worst_sigma < 3.0
    assert fac["max_sigma"] < 3.0


def test_criterion_09_eigenvalue_cloud(capsys):
    # Eigenvalues of simulated 400 x 400 matrices (10 samples) land
    # inside the 5 percent dilated domain at a rate of at least 95
    # percent; the chi-square of the cloud against the exact law is
    # reported. Runs in under 10 minutes.
    t0 = time.perf_counter()
    s, tau = 1.0, 1.0 + 0.5j
    prof = domain_profile(M_FOUR, BrownParams(s, tau))
    cfg = SimConfig(N=400, steps=200, samples=10, seed=0)
    cloud = eig_cloud(cfg, M_FOUR, s, tau)
    rep = eig_vs_density(cloud, prof, bins=(20, 5))
    elapsed = time.perf_counter() - t0
    ok = rep["inside_fraction"] >= 0.95 and elapsed < 600.0
    _report(capsys, 9, ok,
            f"eigenvalue cloud: inside fraction = {rep['inside_fraction']:.4f}, "
            f"chi2 = {rep['chi2']:.0f} on {rep['cells'] - 1} dof "
            f"(p = {rep['pvalue']:.3f}, reported)", elapsed)
    assert rep["inside_fraction"] >= 0.95
    assert elapsed < 600.0


def test_criterion_10_monte_carlo_potential(capsys):
    # The simulated log potential agrees with the deterministic value
    # within 3 standard errors at 5 interior and 5 exterior probes
    # (eps = 0.1).
    t0 = time.perf_counter()
    m, s, tau = M_ONE, 1.0, 1.0 + 0.5j
    p = BrownParams(s, tau)
    prof = domain_profile(m, p)
    interior = sample(prof, 5, seed=21)
    _, outer = boundary_polyline(prof, 64)
    exterior = 1.3 * outer[::13][:5]
    probes = np.concatenate([interior, exterior])
    eps = 0.1
    cfg = SimConfig(N=300, steps=200, samples=100, seed=0)
    mean, stderr = estimate_S_mc(cfg, m, s, tau, probes, eps)
    exact = np.array([
        evaluate_S(m, p, complex(z), eps).S_value for z in probes
    ])
    sigmas = np.abs(mean - exact) / stderr
    elapsed = time.perf_counter() - t0
    ok = bool(np.all(sigmas < 3.0))
    _report(capsys, 10, ok,
            f"potential MC: max deviation = {sigmas.max():.2f} sigma "
            f"over 10 probes", elapsed)
    assert np.all(sigmas < 3.0)


def _sinhc(z: np.ndarray) -> np.ndarray:
    """sinh(z)/z with its removable singularity filled by the series."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-4
    safe = np.where(small, 1.0, z)
    full = np.sinh(safe) / safe
    series = 1.0 + z * z / 6.0 + (z * z) * (z * z) / 120.0
    return np.where(small, series, full)


def test_criterion_11_difference_quotient_inequality(capsys):
    # |(e^{w1} - e^{w2}) / (w1 - w2)|^2 never exceeds the product of
    # (e^{2 Re w} - 1) / (2 Re w) factors: 1e5 random pairs plus
    # structured edge families, no violation beyond 1e-12 slack.
    # Dividing both sides by e^{Re(w1 + w2)} gives the stable form
    # |sinhc((w1 - w2)/2)|^2 <= sinhc(Re w1) sinhc(Re w2).
    t0 = time.perf_counter()
    rng = np.random.default_rng(20260823)

    def draw(k, scale):
        return scale * (rng.standard_normal(k) + 1j * rng.standard_normal(k))

    w1 = np.concatenate([draw(40000, 0.3), draw(40000, 1.5), draw(20000, 6.0)])
    w2 = np.concatenate([draw(40000, 0.3), draw(40000, 1.5), draw(20000, 6.0)])
    extra1 = np.concatenate([
        w1[:10000],                          # coincident pair limit
        w1[10000:20000],                     # equality family
        1j * w1[20000:30000].imag,           # purely imaginary
        w1[30000:40000],                     # nearly coincident
    ])
    extra2 = np.concatenate([
        w1[:10000],
        -np.conj(w1[10000:20000]),
        1j * w2[20000:30000].imag,
        w1[30000:40000] + 1e-9 * draw(10000, 1.0),
    ])
    a1 = np.concatenate([w1, extra1])
    a2 = np.concatenate([w2, extra2])
    lhs = np.abs(_sinhc((a1 - a2) / 2.0)) ** 2
    rhs = np.real(_sinhc(a1.real)) * np.real(_sinhc(a2.real))
    violation = lhs - rhs
    slack = 1e-12 * np.maximum(1.0, rhs)
    bad = int(np.sum(violation > slack))
    worst = float(np.max(violation / np.maximum(1.0, rhs)))

    # the stable form is the original inequality: cross-check on a
    # moderate-magnitude batch where the raw quotient is well posed
    sel = (np.abs(a1) < 3) & (np.abs(a2) < 3) & (np.abs(a1 - a2) > 1e-3)
    b1, b2 = a1[sel][:10000], a2[sel][:10000]
    raw = np.abs((np.exp(b1) - np.exp(b2)) / (b1 - b2)) ** 2
    stable = np.exp(b1.real + b2.real) * np.abs(_sinhc((b1 - b2) / 2.0)) ** 2
    form_dev = float(np.max(np.abs(raw - stable) / np.maximum(raw, 1e-12)))

    elapsed = time.perf_counter() - t0
    ok = bad == 0 and form_dev < 1e-10
    _report(capsys, 11, ok,
            f"difference quotient: 0 violations in {a1.size} pairs "
            f"(worst margin = {worst:.1e}), form agreement = {form_dev:.1e}"
            if bad == 0 else
            f"difference quotient: {bad} violations", elapsed)
    assert bad == 0
    assert form_dev < 1e-10
