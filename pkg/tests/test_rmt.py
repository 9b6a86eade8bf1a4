"""Tests for the finite-N simulation laboratory."""

import numpy as np
import pytest

from brownlab.errors import CholeskyFailure, NoConvergence
from brownlab.hj import domain_profile
from brownlab.measures import BrownParams, CircleMeasure, delta1, four_points, star_moment
from brownlab.rmt import (
    EigCloud,
    SimConfig,
    eig_cloud,
    eig_vs_density,
    eigenvalues,
    estimate_S_mc,
    girko_logdet,
    hermitian_increment,
    initial_unitary,
    sde_params,
    simulate_b,
    simulate_b_pair,
)
from brownlab.rng import substream


class TestSimConfig:
    def test_defaults(self):
        cfg = SimConfig()
        assert (cfg.N, cfg.steps, cfg.samples) == (300, 200, 100)

    def test_validation(self):
        with pytest.raises(ValueError):
            SimConfig(N=1)
        with pytest.raises(ValueError):
            SimConfig(steps=5)
        with pytest.raises(ValueError):
            SimConfig(samples=0)
        with pytest.raises(ValueError):
            SimConfig(scheme="heun")


class TestSdeParams:
    def test_diagonal_case(self):
        theta0, a, b = sde_params(1.0, 1.0)
        assert theta0 == 0.0
        assert abs(a - np.sqrt(0.5)) < 1e-14
        assert abs(b - np.sqrt(0.5)) < 1e-14

    def test_unitary_case(self):
        theta0, a, b = sde_params(1.0, 0.0)
        assert (theta0, b) == (0.0, 0.0)
        assert abs(a - 1.0) < 1e-14

    def test_variance_split(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            s = rng.uniform(0.2, 3.0)
            tau = s + rng.uniform(-1, 1) * s + 1j * rng.uniform(-1, 1) * s
            if abs(tau - s) > s:
                continue
            theta0, a, b = sde_params(s, tau)
            assert a >= b >= 0
            assert abs(a * a + b * b - s) < 1e-12
            # The two quadratic statistics of the increment law.
            assert abs(a * a - b * b - abs(tau - s)) < 1e-12

    def test_inadmissible(self):
        with pytest.raises(ValueError):
            sde_params(1.0, 2.5)
        with pytest.raises(ValueError):
            sde_params(0.0, 0.0)


class TestHermitianIncrement:
    def test_hermitian_and_normalized(self):
        rng = substream(0, 1)
        N, dt = 150, 0.02
        acc2 = 0.0
        acc4 = 0.0
        reps = 40
        for _ in range(reps):
            dx = hermitian_increment(N, dt, rng)
            assert np.max(np.abs(dx - dx.conj().T)) == 0.0
            acc2 += np.trace(dx @ dx).real / N
            acc4 += np.trace(np.linalg.matrix_power(dx, 4)).real / N
        assert abs(acc2 / reps / dt - 1.0) < 0.05
        # Fourth trace moment approaches the semicircle value 2 dt^2.
        assert abs(acc4 / reps / dt**2 - 2.0) < 0.3

    def test_invalid_dt(self):
        with pytest.raises(ValueError):
            hermitian_increment(10, 0.0, substream(0, 0))


class TestSimulateB:
    def test_deterministic_and_stream_separated(self):
        cfg = SimConfig(N=40, steps=20, samples=1, seed=2)
        b1 = simulate_b(cfg, 1.0, 0.5)
        b2 = simulate_b(cfg, 1.0, 0.5)
        b3 = simulate_b(cfg, 1.0, 0.5, sample_index=1)
        assert np.array_equal(b1, b2)
        assert not np.allclose(b1, b3)

    def test_tuple_path_matches_int(self):
        cfg = SimConfig(N=30, steps=20, samples=1, seed=2)
        a = simulate_b(cfg, 1.0, 1.0, sample_index=3)
        b = simulate_b(cfg, 1.0, 1.0, sample_index=(3,))
        assert np.array_equal(a, b)

    def test_zero_twist_exponential_unitary(self):
        cfg = SimConfig(N=50, steps=40, samples=1, seed=2, scheme="exponential")
        B = simulate_b(cfg, 1.0, 0.0)
        sv = np.linalg.svd(B, compute_uv=False)
        assert np.max(np.abs(sv - 1.0)) < 1e-10

    def test_small_twist_near_unitary(self):
        cfg = SimConfig(N=60, steps=40, samples=1, seed=4, scheme="exponential")
        B = simulate_b(cfg, 1.0, 1e-3)
        sv = np.linalg.svd(B, compute_uv=False)
        assert np.max(np.abs(sv - 1.0)) < 0.2

    def test_shared_noise_coupling_is_linear_in_gap(self):
        cfg = SimConfig(N=60, steps=60, samples=1, seed=7)
        ref = simulate_b(cfg, 1.0, 1.0 + 0.2j)
        gaps = (0.1, 0.01)
        norms = [
            np.linalg.norm(simulate_b(cfg, 1.0, 1.0 + (0.2 + g) * 1j) - ref)
            for g in gaps
        ]
        ratio = norms[0] / norms[1]
        assert 7.0 < ratio < 13.0

    def test_pair_requires_even_steps(self):
        with pytest.raises(ValueError):
            simulate_b_pair(SimConfig(N=20, steps=21, samples=1), 1.0, 1.0)

    def test_pair_extrapolation_tightens_mixed_closure(self):
        # Weak bias of the coarse run exceeds that of the fine run; the
        # extrapolated estimate should land within Monte-Carlo noise of
        # the exact value exp(tau_1).
        s, tau = 1.0, 1.0 + 0.5j
        cfg = SimConfig(N=100, steps=80, samples=20, seed=1)
        target = np.exp(tau.real)
        ext = []
        for i in range(cfg.samples):
            bf, bc = simulate_b_pair(cfg, s, tau, sample_index=i)
            vf = np.trace(bf @ bf.conj().T).real / cfg.N
            vc = np.trace(bc @ bc.conj().T).real / cfg.N
            ext.append(2.0 * vf - vc)
        ext = np.array(ext)
        err = np.std(ext, ddof=1) / np.sqrt(len(ext))
        assert abs(np.mean(ext) - target) < 4.5 * err + 5e-3


class TestInitialUnitary:
    def test_identity_measure(self):
        U = initial_unitary(delta1(), 30, substream(0, 0))
        assert np.max(np.abs(U - np.eye(30))) < 1e-12

    def test_unitarity_and_moments(self):
        m = four_points()
        N = 401
        U = initial_unitary(m, N, substream(1, 0))
        assert np.max(np.abs(U @ U.conj().T - np.eye(N))) < 1e-12
        for k in (1, 2, 3, 4):
            emp = np.trace(np.linalg.matrix_power(U, k)) / N
            assert abs(emp - star_moment(m, k)) <= 1.0 / N + 1e-12

    def test_largest_remainder_multiplicities(self):
        m = CircleMeasure(
            atom_angles=np.array([-np.pi, 0.0]),
            atom_weights=np.array([0.695, 0.305]),
        )
        U = initial_unitary(m, 10, substream(2, 0))
        eigs = np.linalg.eigvals(U)
        n_zero = int(np.sum(np.abs(eigs - 1.0) < 1e-8))
        n_pi = int(np.sum(np.abs(eigs + 1.0) < 1e-8))
        assert (n_zero, n_pi) == (3, 7)

    def test_density_measure_rejected(self):
        grid = np.linspace(-np.pi, np.pi, 64, endpoint=False)
        m = CircleMeasure(
            atom_angles=np.zeros(0),
            atom_weights=np.zeros(0),
            density_angles=grid,
            density_values=np.ones(64),
        )
        with pytest.raises(ValueError):
            initial_unitary(m, 16, substream(0, 0))


class TestEigenvalues:
    def test_against_library_oracle(self):
        rng = substream(3, 0)
        for n in (5, 40, 120):
            A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            mine = np.sort_complex(eigenvalues(A))
            ref = np.sort_complex(np.linalg.eigvals(A))
            scale = np.linalg.norm(A, 2)
            assert np.max(np.abs(mine - ref)) < 1e-10 * scale

    def test_jordan_block(self):
        J = 0.5 * np.eye(6) + np.eye(6, k=1)
        vals = eigenvalues(J)
        assert np.max(np.abs(np.sort_complex(vals) - 0.5)) < 1e-2

    def test_hermitian_spectrum(self):
        rng = substream(4, 0)
        A = rng.normal(size=(30, 30)) + 1j * rng.normal(size=(30, 30))
        H = A + A.conj().T
        mine = np.sort(eigenvalues(H).real)
        ref = np.sort(np.linalg.eigvalsh(H))
        assert np.max(np.abs(mine - ref)) < 1e-9
        assert np.max(np.abs(eigenvalues(H).imag)) < 1e-9

    def test_small_sizes(self):
        assert eigenvalues(np.zeros((0, 0))).size == 0
        assert eigenvalues(np.array([[3.0 + 1j]]))[0] == 3.0 + 1j
        vals = np.sort_complex(eigenvalues(np.array([[0.0, 1.0], [-1.0, 0.0]])))
        assert np.max(np.abs(vals - np.array([-1j, 1j]))) < 1e-14

    def test_input_validation(self):
        with pytest.raises(ValueError):
            eigenvalues(np.zeros((3, 4)))
        with pytest.raises(ValueError):
            eigenvalues(np.array([[np.nan, 0.0], [0.0, 1.0]]))

    def test_diagonal_scaling_robustness(self):
        # Badly scaled entries exercise the balancing stage.
        rng = substream(5, 0)
        n = 25
        A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        d = 10.0 ** rng.integers(-6, 7, n).astype(float)
        B = A * np.outer(d, 1.0 / d)
        mine = np.sort_complex(eigenvalues(B))
        ref = np.sort_complex(np.linalg.eigvals(A))
        assert np.max(np.abs(mine - ref)) < 1e-6 * np.linalg.norm(A, 2)


class TestEigCloud:
    def test_cloud_shape_and_report(self):
        m = four_points()
        s, tau = 1.0, 1.0 + 0.5j
        cfg = SimConfig(N=100, steps=60, samples=3, seed=4)
        cloud = eig_cloud(cfg, m, s, tau)
        assert cloud.values.shape == (cfg.N * cfg.samples,)
        assert cloud.sample_index.shape == cloud.values.shape
        assert set(np.unique(cloud.sample_index)) == {0, 1, 2}
        prof = domain_profile(m, BrownParams(s, tau))
        rep = eig_vs_density(cloud, prof, bins=(10, 4))
        assert 0.9 <= rep["inside_fraction"] <= 1.0
        assert rep["chi2"] >= 0.0
        assert rep["n"] == cfg.N * cfg.samples

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            EigCloud(values=np.zeros(3, dtype=complex), sample_index=np.zeros(2))

    def test_empty_cloud_rejected(self):
        prof = domain_profile(delta1(), BrownParams(1.0, 1.0))
        cloud = EigCloud(
            values=np.zeros(0, dtype=complex), sample_index=np.zeros(0)
        )
        with pytest.raises(ValueError):
            eig_vs_density(cloud, prof)


class TestGirkoLogdet:
    def test_identity_value(self):
        val = girko_logdet(np.eye(40, dtype=complex), 0.0, 1.0)
        assert abs(val - np.log(2.0)) < 1e-12

    def test_shifted_identity(self):
        # UB = I, lam = 3: every singular value of (I - 3) is 2.
        val = girko_logdet(np.eye(25, dtype=complex), 3.0, 0.5)
        assert abs(val - np.log(4.0 + 0.25)) < 1e-12

    def test_cholesky_failure(self):
        with pytest.raises(CholeskyFailure):
            girko_logdet(np.zeros((8, 8), dtype=complex), 0.0, 0.0)


class TestEstimateSMc:
    def test_matches_potential_at_interior_point(self):
        from brownlab.hj import evaluate_S

        m = delta1()
        s, tau, lam, eps = 1.0, 1.0, 0.3 + 0.1j, 0.3
        exact = evaluate_S(m, BrownParams(s, tau), lam, eps).S_value
        cfg = SimConfig(N=100, steps=60, samples=30, seed=6)
        mean, err = estimate_S_mc(cfg, m, s, tau, lam, eps)
        assert err > 0
        assert abs(mean - exact) < 4.5 * err + 2e-3

    def test_probe_array_shares_batch(self):
        m = delta1()
        cfg = SimConfig(N=60, steps=40, samples=8, seed=1)
        probes = np.array([0.2 + 0.1j, 2.5 + 0.0j])
        means, errs = estimate_S_mc(cfg, m, 1.0, 1.0, probes, 0.2)
        assert means.shape == (2,) and errs.shape == (2,)
        m0, e0 = estimate_S_mc(cfg, m, 1.0, 1.0, probes[0], 0.2)
        assert abs(m0 - means[0]) < 1e-12

    def test_eps_validation(self):
        with pytest.raises(ValueError):
            estimate_S_mc(SimConfig(N=20, steps=10, samples=1), delta1(), 1.0, 1.0, 0.0, 0.0)


class TestThreading:
    def test_thread_count_does_not_change_results(self, monkeypatch):
        m = delta1()
        cfg = SimConfig(N=40, steps=20, samples=4, seed=3)
        monkeypatch.delenv("BROWNLAB_THREADS", raising=False)
        seq = estimate_S_mc(cfg, m, 1.0, 1.0, 0.3, 0.5)
        monkeypatch.setenv("BROWNLAB_THREADS", "3")
        par = estimate_S_mc(cfg, m, 1.0, 1.0, 0.3, 0.5)
        assert seq == par
