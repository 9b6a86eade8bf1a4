"""Planar density, mass, rasters, and exact sampling of the spectral
distribution on the twisted strip.

With respect to Lebesgue measure dx dy the density is

    (1 / (2 pi tau1)) |lam|^{-2} (dphi/ddelta)(delta(lam))

on the open strip and 0 elsewhere. In log coordinates (rho, theta)
with lam = e^{rho + i theta} the |lam|^{-2} factor and the area
Jacobian cancel, leaving (1 / (2 pi tau1)) dphi/ddelta. Sampling uses
the factorization of the distribution into the boundary density m_s in
phi and a uniform v coordinate across the strip.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import (
    DomainProfile,
    _node_data,
    boundary_polyline,
    classify_many,
    spiral_coords,
    theta_at_delta_exact,
    unitary_mass,
)
from .rng import substream

__all__ = [
    "DensityRaster",
    "density",
    "total_mass",
    "raster",
    "raster_log",
    "sample",
]

_FD_STEP = 1e-6


def _phi_slope_ratio_exact(prof: DomainProfile, delta: float):
    """Fresh (dphi/ddelta, theta) at spiral angle delta.

    Both lifts are differentiated by centered differences of fresh
    evaluations around the exact matching angle, so no node
    interpolation error enters.
    """
    m, p = prof.measure, prof.params
    theta = theta_at_delta_exact(prof, delta)
    _, _, phi_p, del_p = _node_data(m, p, theta + _FD_STEP)
    _, _, phi_m, del_m = _node_data(m, p, theta - _FD_STEP)
    return (phi_p - phi_m) / (del_p - del_m), theta


def _ratio_nodes(prof: DomainProfile) -> np.ndarray:
    return prof.d_phi_d_theta / prof.d_delta_d_theta


def density(prof: DomainProfile, lam, exact: bool = True):
    """Pointwise planar density of the spectral distribution at lam.

    Returns 0 outside the open strip (including on its boundary). With
    exact=False the slope ratio is interpolated from the node tables,
    which is what the raster functions use internally.
    """
    scalar = np.ndim(lam) == 0
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=complex))
    out = np.zeros(lam_arr.shape)
    p = prof.params
    codes = classify_many(prof, lam_arr)
    inside = codes == 1
    if exact:
        for i in np.nonzero(inside)[0]:
            _, delta = spiral_coords(lam_arr[i], p.tau)
            ratio, _ = _phi_slope_ratio_exact(prof, float(delta))
            out[i] = ratio / (2 * np.pi * p.tau1 * abs(lam_arr[i]) ** 2)
    elif np.any(inside):
        _, delta = spiral_coords(lam_arr[inside], p.tau)
        ratio = prof.at_delta(_ratio_nodes(prof), delta)
        out[inside] = ratio / (2 * np.pi * p.tau1 * np.abs(lam_arr[inside]) ** 2)
    return float(out[0]) if scalar else out


def total_mass(prof: DomainProfile) -> float:
    """Total mass of the planar distribution.

    Equals (1/2pi) integral R_s dphi for every admissible tau; the
    value is computed on the adaptively refined boundary node set, so
    its deviation from 1 reports the discretization error of the whole
    domain construction.
    """
    return unitary_mass(prof.measure, prof.params.s)


@dataclass(frozen=True)
class DensityRaster:
    """Cell-centered raster of the density with axis coordinates."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    kind: str  # "plane" (x, y) or "log" (rho, theta)


def _default_bounds(prof: DomainProfile, pad: float = 0.08):
    inner, outer = boundary_polyline(prof, n=512)
    pts = np.concatenate([inner, outer])
    x0, x1 = pts.real.min(), pts.real.max()
    y0, y1 = pts.imag.min(), pts.imag.max()
    dx, dy = x1 - x0, y1 - y0
    return (x0 - pad * dx, x1 + pad * dx, y0 - pad * dy, y1 + pad * dy)


def raster(prof: DomainProfile, nx: int = 128, ny: int = 128, bounds=None) -> DensityRaster:
    """Rasterize the planar density on an nx-by-ny cell-centered grid.

    bounds is (xmin, xmax, ymin, ymax); by default the bounding box of
    the strip boundary with 8 percent padding.
    """
    if nx < 16 or ny < 16:
        raise ValueError("raster needs at least 16 cells per axis")
    if bounds is None:
        bounds = _default_bounds(prof)
    x0, x1, y0, y1 = map(float, bounds)
    xs = x0 + (np.arange(nx) + 0.5) * (x1 - x0) / nx
    ys = y0 + (np.arange(ny) + 0.5) * (y1 - y0) / ny
    lam = xs[None, :] + 1j * ys[:, None]
    vals = density(prof, lam.ravel(), exact=False).reshape(ny, nx)
    return DensityRaster(x=xs, y=ys, values=vals, kind="plane")


def raster_log(prof: DomainProfile, n_rho: int = 128, n_theta: int = 256, bounds=None) -> DensityRaster:
    """Rasterize the density in log coordinates (rho, theta).

    Values are taken w.r.t. drho dtheta, i.e. without the |lam|^{-2}
    area factor. bounds is (rho_min, rho_max); theta spans the circle.
    """
    if n_rho < 16 or n_theta < 16:
        raise ValueError("raster needs at least 16 cells per axis")
    p = prof.params
    if bounds is None:
        rho_lo = p.tau1 * prof.v1_nodes.min()
        rho_hi = p.tau1 * prof.v2_nodes.max()
        padding = 0.08 * max(rho_hi - rho_lo, 1e-3)
        bounds = (rho_lo - padding, rho_hi + padding)
    rho0, rho1 = map(float, bounds)
    rhos = rho0 + (np.arange(n_rho) + 0.5) * (rho1 - rho0) / n_rho
    thetas = -np.pi + (np.arange(n_theta) + 0.5) * 2 * np.pi / n_theta
    lam = np.exp(rhos[:, None] + 1j * thetas[None, :])
    flat = lam.ravel()
    vals = density(prof, flat, exact=False) * np.abs(flat) ** 2
    return DensityRaster(
        x=rhos, y=thetas, values=vals.reshape(n_rho, n_theta), kind="log"
    )


def sample(prof: DomainProfile, n: int, seed: int = 0) -> np.ndarray:
    """Draw n points distributed per the planar density.

    The boundary angle phi is drawn from the piecewise-linear density
    m_s over the tabulated nodes by analytic inverse CDF per segment;
    the cross-strip coordinate v is uniform between the strip edges at
    the matching delta. Degenerate arcs carry zero mass and are never
    selected.
    """
    if n < 0:
        raise ValueError("sample size must be nonnegative")
    rng = substream(seed, 0)
    p = prof.params
    phi = np.concatenate([prof.phi_s, [prof.phi_s[0] + 2 * np.pi]])
    dens = np.concatenate([prof.R_s, [prof.R_s[0]]])
    widths = np.diff(phi)
    seg_mass = 0.5 * (dens[:-1] + dens[1:]) * widths
    cum = np.concatenate([[0.0], np.cumsum(seg_mass)])
    total = cum[-1]
    u = rng.random(n) * total
    k = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, seg_mass.size - 1)
    # Guard against landing on zero-mass segments through ties.
    bad = seg_mass[k] <= 0
    while np.any(bad):
        k[bad] = np.clip(k[bad] - 1, 0, seg_mass.size - 1)
        bad = seg_mass[k] <= 0
    y = u - cum[k]
    a = dens[k]
    b = dens[k + 1]
    w = widths[k]
    slope = b - a
    with np.errstate(invalid="ignore", divide="ignore"):
        disc = np.sqrt(np.maximum(a**2 + 2 * slope * y / w, 0.0))
        x_lin = np.where(np.abs(slope) > 1e-14, (disc - a) / slope, np.inf)
    x_flat = y / np.maximum(a * w, 1e-300)
    x = np.where(np.isfinite(x_lin), x_lin, x_flat)
    x = np.clip(x, 0.0, 1.0)
    phi_draw = phi[k] + x * w
    theta = prof.theta_at_phi(phi_draw)
    delta = prof.at_theta(prof.delta_stau, theta, jump=2 * np.pi)
    v1 = prof.at_theta(prof.v1_nodes, theta)
    v2 = prof.at_theta(prof.v2_nodes, theta)
    v = v1 + (v2 - v1) * rng.random(n)
    return np.exp(v * p.tau) * np.exp(1j * delta)
