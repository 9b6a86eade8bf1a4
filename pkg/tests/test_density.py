"""Tests for the planar density, mass integral, rasters, and sampling."""

import numpy as np
import pytest
from scipy.stats import chi2

from brownlab import (
    BrownParams,
    build_profile,
    delta1,
    density,
    four_points,
    raster,
    raster_log,
    sample,
    total_mass,
    v_bounds,
)
from brownlab.domain import _node_data, classify_many, spiral_coords


@pytest.fixture(scope="module")
def prof_twisted():
    return build_profile(delta1(), BrownParams(1.0, 1.0 + 0.5j))


@pytest.fixture(scope="module")
def prof_unitary():
    return build_profile(delta1(), BrownParams(1.0, 1.0))


@pytest.fixture(scope="module")
def prof_four():
    return build_profile(four_points(), BrownParams(1.0, 1.0 + 0.5j))


def interior_point(prof, frac=0.5, rank=0):
    order = np.argsort(prof.R_s)[::-1]
    i = order[rank]
    delta = float(prof.delta_stau[i])
    v1, v2, _ = v_bounds(prof, delta)
    v = v1 + frac * (v2 - v1)
    return np.exp(v * prof.params.tau) * np.exp(1j * delta)


class TestTotalMass:
    def test_unit_mass_examples(self, prof_twisted, prof_unitary, prof_four):
        for p in (prof_twisted, prof_unitary, prof_four):
            assert abs(total_mass(p) - 1.0) < 1e-6

    def test_mass_independent_of_tau(self):
        m = delta1()
        p1 = build_profile(m, BrownParams(1.5, 1.5))
        p2 = build_profile(m, BrownParams(1.5, 1.5 + 1.0j))
        assert total_mass(p1) == total_mass(p2)


class TestDensity:
    def test_zero_outside(self, prof_twisted):
        assert density(prof_twisted, 10.0 + 0.0j) == 0.0
        assert density(prof_twisted, 1e-4 + 0.0j) == 0.0
        assert density(prof_twisted, 0.0j) == 0.0

    def test_positive_inside(self, prof_twisted):
        lam = interior_point(prof_twisted)
        assert density(prof_twisted, lam) > 0

    def test_unitary_case_reduction(self, prof_unitary):
        # At tau = s the slope ratio collapses to dphi/dtheta and the
        # density to (1 / (2 pi s)) |lam|^{-2} dphi/dtheta.
        prof = prof_unitary
        m, p = prof.measure, prof.params
        for rank in (0, 5, 40):
            lam = interior_point(prof, frac=0.37, rank=rank)
            got = density(prof, lam)
            theta = float(np.angle(lam))
            h = 1e-6
            phi_p = _node_data(m, p, theta + h)[2]
            phi_m = _node_data(m, p, theta - h)[2]
            dphi = (phi_p - phi_m) / (2 * h)
            want = dphi / (2 * np.pi * p.s * abs(lam) ** 2)
            assert abs(got - want) < 1e-9 * max(1.0, abs(want))

    def test_exact_and_interp_agree(self, prof_twisted):
        lams = [interior_point(prof_twisted, 0.3, r) for r in (0, 10, 80)]
        a = np.array([density(prof_twisted, lam) for lam in lams])
        b = density(prof_twisted, np.array(lams), exact=False)
        assert np.max(np.abs(a - b) / np.abs(a)) < 1e-3


class TestRaster:
    def test_plane_raster_mass(self, prof_twisted):
        r = raster(prof_twisted, nx=200, ny=200)
        dx = r.x[1] - r.x[0]
        dy = r.y[1] - r.y[0]
        mass = r.values.sum() * dx * dy
        assert abs(mass - 1.0) < 0.05
        assert r.values.shape == (200, 200)
        assert r.kind == "plane"

    def test_log_raster_consistency(self, prof_twisted):
        r = raster_log(prof_twisted, n_rho=64, n_theta=64)
        assert r.values.shape == (64, 64)
        i, j = np.unravel_index(np.argmax(r.values), r.values.shape)
        lam = np.exp(r.x[i] + 1j * r.y[j])
        plane = density(prof_twisted, lam, exact=False)
        assert abs(r.values[i, j] - plane * abs(lam) ** 2) < 1e-12

    def test_log_raster_mass(self, prof_twisted):
        r = raster_log(prof_twisted, n_rho=256, n_theta=256)
        drho = r.x[1] - r.x[0]
        dth = r.y[1] - r.y[0]
        assert abs(r.values.sum() * drho * dth - 1.0) < 0.02

    def test_min_resolution(self, prof_twisted):
        with pytest.raises(ValueError):
            raster(prof_twisted, nx=8, ny=128)
        with pytest.raises(ValueError):
            raster_log(prof_twisted, n_rho=128, n_theta=8)


class TestSample:
    def test_deterministic(self, prof_twisted):
        a = sample(prof_twisted, 100, seed=42)
        b = sample(prof_twisted, 100, seed=42)
        c = sample(prof_twisted, 100, seed=43)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_all_draws_in_closed_strip(self, prof_twisted, prof_four):
        for prof in (prof_twisted, prof_four):
            pts = sample(prof, 20000, seed=1)
            codes = classify_many(prof, pts, tol=1e-6)
            assert np.all(codes >= 0)

    def test_phi_marginal_chi_square(self, prof_twisted):
        # Bin edges with equal mass under the piecewise-linear node
        # density; draws should fill them uniformly.
        prof = prof_twisted
        n = 100000
        pts = sample(prof, n, seed=7)
        phi = np.concatenate([prof.phi_s, [prof.phi_s[0] + 2 * np.pi]])
        dens = np.concatenate([prof.R_s, [prof.R_s[0]]])
        seg = 0.5 * (dens[:-1] + dens[1:]) * np.diff(phi)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        targets = np.linspace(0, cum[-1], 21)[1:-1]
        edges = np.interp(targets, cum, phi)
        edges = np.concatenate([[phi[0]], edges, [phi[-1]]])
        # Recover each draw's phi angle from theta via the stored lift.
        _, delta = spiral_coords(pts, prof.params.tau)
        theta = prof.theta_at_delta(delta)
        phis = prof.at_theta(prof.phi_s, theta, jump=2 * np.pi)
        counts, _ = np.histogram(phis, bins=edges)
        expected = n / 20.0
        stat = np.sum((counts - expected) ** 2 / expected)
        pvalue = chi2.sf(stat, df=19)
        assert pvalue > 1e-3

    def test_v_conditional_uniform(self, prof_twisted):
        # Across the strip the v coordinate is uniform; standardized
        # per-draw positions should have mean 1/2 and variance 1/12.
        prof = prof_twisted
        pts = sample(prof, 50000, seed=11)
        v, delta = spiral_coords(pts, prof.params.tau)
        theta = prof.theta_at_delta(delta)
        v1 = prof.at_theta(prof.v1_nodes, theta)
        v2 = prof.at_theta(prof.v2_nodes, theta)
        width = v2 - v1
        ok = width > 1e-6
        t = (v[ok] - v1[ok]) / width[ok]
        assert abs(t.mean() - 0.5) < 0.01
        assert abs(t.var() - 1.0 / 12.0) < 0.005

    def test_empty_sample(self, prof_twisted):
        assert sample(prof_twisted, 0, seed=1).size == 0
        with pytest.raises(ValueError):
            sample(prof_twisted, -1)
