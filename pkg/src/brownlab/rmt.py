"""Finite-N Monte-Carlo laboratory for the multiplicative matrix flow.

Simulates N x N approximations of the free multiplicative flow by
iterating matrix increments driven by Gaussian Hermitian steps,
computes eigenvalue clouds with a self-contained dense eigensolver,
and estimates the log potential and *-moments with standard errors.
The Euler and exponential one-step schemes share the drift implied by
the Ito expansion: E[DW^2] = (s - tau) dr already generates the
-1/2 (s - tau) dr term, so the exponential scheme multiplies by
exp(i DW) alone.

All randomness flows through counter-based substreams keyed by (seed,
sample index), so results are reproducible and independent of how
samples are scheduled across threads (BROWNLAB_THREADS caps workers).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .domain import DomainProfile, spiral_coords
from .errors import CholeskyFailure, NoConvergence
from .measures import CircleMeasure
from .rng import substream

__all__ = [
    "SimConfig",
    "EigCloud",
    "sde_params",
    "hermitian_increment",
    "simulate_b",
    "simulate_b_pair",
    "initial_unitary",
    "eigenvalues",
    "eig_cloud",
    "eig_vs_density",
    "estimate_S_mc",
    "girko_logdet",
]


@dataclass(frozen=True)
class SimConfig:
    """Simulation shape: matrix size, step count, sample count, seed."""

    N: int = 300
    steps: int = 200
    samples: int = 100
    seed: int = 0
    scheme: str = "euler"

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be at least 2")
        if self.steps < 10:
            raise ValueError("steps must be at least 10")
        if self.samples < 1:
            raise ValueError("samples must be positive")
        if self.scheme not in ("euler", "exponential"):
            raise ValueError(f"unknown scheme: {self.scheme!r}")


@dataclass(frozen=True)
class EigCloud:
    """Eigenvalues pooled over samples, with per-point sample index."""

    values: np.ndarray
    sample_index: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.sample_index.shape:
            raise ValueError("values and sample_index must align")


def _thread_count() -> int:
    raw = os.environ.get("BROWNLAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _map_samples(fn, n: int) -> list:
    """Apply fn(sample_index) for each sample, optionally threaded."""
    workers = _thread_count()
    if workers <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))


def sde_params(s: float, tau: complex):
    """Increment shape (theta0, a, b) for the complex-time driving noise.

    theta0 = arg(s - tau)/2, a = sqrt((s + |tau - s|)/2), b =
    sqrt((s - |tau - s|)/2); then a >= b >= 0 and a^2 + b^2 = s, and
    DW = e^{i theta0}(a DX + i b DY) has E[DW DW^H] = s dr and
    E[DW^2] = (s - tau) dr.
    """
    tau = complex(tau)
    gap = abs(tau - s)
    if not s > 0 or gap > s + 1e-12:
        raise ValueError("inadmissible parameter pair")
    theta0 = 0.5 * np.angle(s - tau)
    a = np.sqrt((s + gap) / 2.0)
    b = np.sqrt(max(s - gap, 0.0) / 2.0)
    return float(theta0), float(a), float(b)


def hermitian_increment(N: int, dt: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian Hermitian step with E[(1/N) Tr(DX^2)] = dt."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    scale = np.sqrt(dt / (2.0 * N))
    M = rng.normal(0.0, scale, (N, N)) + 1j * rng.normal(0.0, scale, (N, N))
    return (M + M.conj().T) / np.sqrt(2.0)


def _increment_stream(N, steps, s, tau, rng):
    """Yield the driving increments DW for one trajectory."""
    theta0, a, b = sde_params(s, tau)
    phase = np.exp(1j * theta0)
    dr = 1.0 / steps
    for _ in range(steps):
        dx = hermitian_increment(N, dr, rng)
        dy = hermitian_increment(N, dr, rng)
        yield phase * (a * dx + 1j * b * dy)


def _apply_step(b, dw, s, tau, dr, scheme):
    if scheme == "euler":
        step = np.eye(b.shape[0], dtype=complex) + 1j * dw
        step -= 0.5 * (s - tau) * dr * np.eye(b.shape[0], dtype=complex)
        return b @ step
    return b @ expm(1j * dw)


def _sample_stream(cfg: SimConfig, sample_index):
    path = (sample_index,) if isinstance(sample_index, int) else tuple(sample_index)
    return substream(cfg.seed, *path)


def simulate_b(cfg: SimConfig, s: float, tau: complex, sample_index=0) -> np.ndarray:
    """One realization of the matrix flow at time r = 1.

    Starts at the identity and iterates cfg.steps increments of the
    chosen scheme; randomness comes from the (cfg.seed, sample_index)
    substream. sample_index may be an int or a path tuple when several
    independent trajectories are needed per sample.
    """
    rng = _sample_stream(cfg, sample_index)
    b = np.eye(cfg.N, dtype=complex)
    dr = 1.0 / cfg.steps
    for dw in _increment_stream(cfg.N, cfg.steps, s, tau, rng):
        b = _apply_step(b, dw, s, tau, dr, cfg.scheme)
    return b


def simulate_b_pair(cfg: SimConfig, s: float, tau: complex, sample_index=0):
    """Coupled fine/coarse pair for weak-error extrapolation.

    The coarse trajectory uses cfg.steps // 2 steps whose increments
    are sums of consecutive fine increments, so 2 * E[f(fine)] -
    E[f(coarse)] cancels the leading O(dr) weak bias while the
    coupling keeps the variance of the combination small.
    """
    if cfg.steps % 2:
        raise ValueError("paired simulation needs an even step count")
    rng = _sample_stream(cfg, sample_index)
    n = cfg.N
    bf = np.eye(n, dtype=complex)
    bc = np.eye(n, dtype=complex)
    dr = 1.0 / cfg.steps
    held = None
    for dw in _increment_stream(n, cfg.steps, s, tau, rng):
        bf = _apply_step(bf, dw, s, tau, dr, cfg.scheme)
        if held is None:
            held = dw
        else:
            bc = _apply_step(bc, held + dw, s, tau, 2 * dr, cfg.scheme)
            held = None
    return bf, bc


def initial_unitary(m: CircleMeasure, N: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-conjugated unitary whose spectrum discretizes the atoms of m.

    Atom weights become integer multiplicities by largest-remainder
    rounding; the eigenbasis is Haar distributed via QR of a Ginibre
    matrix with the phase fix that makes the factor unique.
    """
    if m.density_angles.size:
        raise ValueError("initial unitary requires a purely atomic measure")
    w = m.atom_weights
    base = np.floor(w * N).astype(int)
    short = N - int(base.sum())
    if short:
        frac = w * N - base
        order = np.argsort(-frac, kind="stable")
        base[order[:short]] += 1
    angles = np.repeat(m.atom_angles, base)
    scale = np.sqrt(0.5)
    Z = rng.normal(0.0, scale, (N, N)) + 1j * rng.normal(0.0, scale, (N, N))
    Q, R = np.linalg.qr(Z)
    d = np.diagonal(R)
    Q = Q * (d / np.abs(d)).conj()
    return (Q * np.exp(1j * angles)) @ Q.conj().T


# ---------------------------------------------------------------------------
# Self-contained dense eigensolver
# ---------------------------------------------------------------------------

_EIG_EPS = float(np.finfo(float).eps)


def _balance(A: np.ndarray) -> np.ndarray:
    """Parlett-Reinsch norm balancing with powers of two."""
    A = A.copy()
    n = A.shape[0]
    radix = 2.0
    done = False
    while not done:
        done = True
        for i in range(n):
            r = np.sum(np.abs(A[i, :])) - abs(A[i, i])
            c = np.sum(np.abs(A[:, i])) - abs(A[i, i])
            if r == 0.0 or c == 0.0:
                continue
            f = 1.0
            target = r / radix
            while c < target:
                c *= radix
                r /= radix
                f *= radix
            target = r * radix
            while c > target:
                c /= radix
                r *= radix
                f /= radix
            if f != 1.0:
                done = False
                A[:, i] *= f
                A[i, :] /= f
    return A


def _hessenberg(A: np.ndarray) -> np.ndarray:
    """Householder reduction to upper Hessenberg form."""
    H = A.copy()
    n = H.shape[0]
    for k in range(n - 2):
        x = H[k + 1 :, k]
        nrm = np.linalg.norm(x)
        if nrm < 1e3 * _EIG_EPS * max(1.0, np.linalg.norm(H[:, k])):
            H[k + 2 :, k] = 0.0
            continue
        v = x.copy()
        pivot = x[0]
        phase = pivot / abs(pivot) if pivot != 0 else 1.0
        v[0] += phase * nrm
        v /= np.linalg.norm(v)
        H[k + 1 :, k:] -= 2.0 * np.outer(v, v.conj() @ H[k + 1 :, k:])
        H[:, k + 1 :] -= 2.0 * np.outer(H[:, k + 1 :] @ v, v.conj())
        H[k + 2 :, k] = 0.0
    return H


def _wilkinson_shift(a, b, c, d):
    """Eigenvalue of [[a, b], [c, d]] closer to d."""
    tr = a + d
    det = a * d - b * c
    disc = np.sqrt(tr * tr - 4.0 * det + 0j)
    r1 = 0.5 * (tr + disc)
    r2 = 0.5 * (tr - disc)
    return r1 if abs(r1 - d) <= abs(r2 - d) else r2


def _qr_eigvals(H: np.ndarray, budget: int) -> np.ndarray:
    """Explicit single-shift QR with deflation on a Hessenberg matrix."""
    H = H.copy()
    n = H.shape[0]
    out = np.empty(n, dtype=complex)
    filled = 0
    hi = n - 1
    iters = 0
    while hi >= 0:
        if hi == 0:
            out[filled] = H[0, 0]
            filled += 1
            break
        # Deflate converged subdiagonal entries above the active corner.
        for i in range(hi, 0, -1):
            if abs(H[i, i - 1]) <= _EIG_EPS * (abs(H[i - 1, i - 1]) + abs(H[i, i])):
                H[i, i - 1] = 0.0
        if H[hi, hi - 1] == 0.0:
            out[filled] = H[hi, hi]
            filled += 1
            hi -= 1
            continue
        lo = hi
        while lo > 0 and H[lo, lo - 1] != 0.0:
            lo -= 1
        if hi - lo == 1:
            a, b = H[lo, lo], H[lo, hi]
            c, d = H[hi, lo], H[hi, hi]
            tr = a + d
            disc = np.sqrt(tr * tr - 4.0 * (a * d - b * c) + 0j)
            out[filled] = 0.5 * (tr + disc)
            out[filled + 1] = 0.5 * (tr - disc)
            filled += 2
            hi = lo - 1
            continue
        iters += 1
        if iters > budget:
            raise NoConvergence("eigenvalue iteration budget exhausted")
        mu = _wilkinson_shift(
            H[hi - 1, hi - 1], H[hi - 1, hi], H[hi, hi - 1], H[hi, hi]
        )
        # Explicit shifted QR sweep on the active window via Givens.
        idx = np.arange(lo, hi + 1)
        H[idx, idx] -= mu
        rot = []
        for i in range(lo, hi):
            a = H[i, i]
            b = H[i + 1, i]
            r = np.hypot(abs(a), abs(b))
            if r == 0.0:
                rot.append((1.0 + 0j, 0.0 + 0j))
                continue
            cth = a / r
            sth = b / r
            rot.append((cth, sth))
            row_i = H[i, i:].copy()
            row_j = H[i + 1, i:].copy()
            H[i, i:] = cth.conjugate() * row_i + sth.conjugate() * row_j
            H[i + 1, i:] = -sth * row_i + cth * row_j
        for off, (cth, sth) in enumerate(rot):
            i = lo + off
            top = min(i + 2, hi)
            col_i = H[lo : top + 1, i].copy()
            col_j = H[lo : top + 1, i + 1].copy()
            H[lo : top + 1, i] = col_i * cth + col_j * sth
            H[lo : top + 1, i + 1] = -col_i * sth.conjugate() + col_j * cth.conjugate()
        idx = np.arange(lo, hi + 1)
        H[idx, idx] += mu
    return out


def eigenvalues(A: np.ndarray) -> np.ndarray:
    """All eigenvalues of a dense complex matrix.

    Balancing, Householder Hessenberg reduction, then single-shift QR
    with deflation. A trace-moment certificate (sums of the first three
    powers against matrix traces) guards the result; NoConvergence is
    raised after 30 N sweeps or a failed certificate.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    n = A.shape[0]
    if n == 0:
        return np.empty(0, dtype=complex)
    if n == 1:
        return A.ravel().copy()
    H = _hessenberg(_balance(A))
    vals = _qr_eigvals(H, budget=30 * n)
    scale = max(np.linalg.norm(A, ord="fro"), 1e-300)
    power = A
    for k in (1, 2, 3):
        resid = abs(np.sum(vals**k) - np.trace(power))
        if resid > 1e-8 * n * scale**k:
            raise NoConvergence(
                f"trace certificate failed at power {k}: residual {resid:.2e}"
            )
        if k < 3:
            power = power @ A
    return vals


# ---------------------------------------------------------------------------
# Cloud statistics and potential estimation
# ---------------------------------------------------------------------------


def eig_cloud(cfg: SimConfig, m: CircleMeasure, s: float, tau: complex) -> EigCloud:
    """Pooled eigenvalues of U B over cfg.samples independent runs."""

    def one(i):
        B = simulate_b(cfg, s, tau, sample_index=i)
        U = initial_unitary(m, cfg.N, substream(cfg.seed, i, 1))
        return eigenvalues(U @ B)

    blocks = _map_samples(one, cfg.samples)
    values = np.concatenate(blocks)
    index = np.repeat(np.arange(cfg.samples), cfg.N)
    return EigCloud(values=values, sample_index=index)


def eig_vs_density(cloud: EigCloud, prof: DomainProfile, bins=(20, 5)) -> dict:
    """Compare an eigenvalue cloud with the deterministic density.

    Classifies each eigenvalue against the strip dilated by 5% of the
    local width in the v coordinate and bins the cloud against the
    equal-mass decomposition of the exact law.
    """
    from .pushforward import _strip_histogram

    if cloud.values.size == 0:
        raise ValueError("empty eigenvalue cloud")
    p = prof.params
    lam = cloud.values
    v, delta = spiral_coords(lam, p.tau)
    v1 = prof.at_delta(prof.v1_nodes, delta)
    v2 = prof.at_delta(prof.v2_nodes, delta)
    width = np.maximum(v2 - v1, 0.0)
    pad = 0.05 * width
    inside = (v >= v1 - pad) & (v <= v2 + pad)
    report = _strip_histogram(prof, lam, bins)
    report["inside_fraction"] = float(np.mean(inside))
    return report


def girko_logdet(UB: np.ndarray, lam: complex, eps: float) -> float:
    """(1/N) log det((UB - lam)^*(UB - lam) + eps^2) via Cholesky."""
    n = UB.shape[0]
    M = UB - lam * np.eye(n, dtype=complex)
    G = M.conj().T @ M + (eps * eps) * np.eye(n, dtype=complex)
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise CholeskyFailure(
            "regularized Gram matrix not positive definite; eps too small"
        ) from exc
    return float(2.0 * np.sum(np.log(np.real(np.diagonal(L)))) / n)


def estimate_S_mc(cfg: SimConfig, m: CircleMeasure, s: float, tau: complex, lam, eps: float):
    """Monte-Carlo estimate (mean, stderr) of the log potential.

    `lam` may be a single probe point or an array of probes; all probes
    reuse the same simulated batch, so the cost of extra probe points
    is one Cholesky factorization per point and sample. Each sample
    couples a fine and a half-step trajectory and uses the extrapolated
    value 2 f(fine) - f(coarse), cancelling the leading weak
    discretization bias. Returns (mean, stderr) with the same shape as
    `lam`.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    probes = np.atleast_1d(np.asarray(lam, dtype=complex))
    scalar = np.isscalar(lam) or np.ndim(lam) == 0

    def one(i):
        bf, bc = simulate_b_pair(cfg, s, tau, sample_index=i)
        U = initial_unitary(m, cfg.N, substream(cfg.seed, i, 1))
        ubf = U @ bf
        ubc = U @ bc
        return [
            2.0 * girko_logdet(ubf, z, eps) - girko_logdet(ubc, z, eps)
            for z in probes
        ]

    vals = np.array(_map_samples(one, cfg.samples))
    mean = np.mean(vals, axis=0)
    if cfg.samples > 1:
        stderr = np.std(vals, axis=0, ddof=1) / np.sqrt(cfg.samples)
    else:
        stderr = np.zeros_like(mean)
    if scalar:
        return float(mean[0]), float(stderr[0])
    return mean, stderr
