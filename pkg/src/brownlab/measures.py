"""Probability measures on the unit circle and their basic transforms.

A measure is a finite list of atoms plus an optional absolutely
continuous part tabulated at angular nodes. Density values are taken
with respect to the normalized arc measure dtheta/(2*pi), and the
tabulated part is discretized once, at construction, by the trapezoid
rule; every integral afterwards is a finite sum over support points.

The transforms implemented here are the Herglotz integral

    J(z) = integral (xi + z) / (xi - z) dmu(xi),

the associated exponential map f_beta(z) = z * exp(beta/2 * J(z)), and
the radius functional

    T(lam) = log(|lam|^2) / (|lam|^2 - 1) / integral |lam - xi|^-2 dmu,

whose sublevel sets determine the spectral domains downstream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import SingularPoint

_MASS_TOL = 1e-12
_SUPPORT_TOL = 1e-14
_UNIT_CIRCLE_TOL = 1e-9

__all__ = [
    "CircleMeasure",
    "BrownParams",
    "delta1",
    "four_points",
    "load_measure_json",
    "dump_measure_json",
    "herglotz",
    "herglotz_prime",
    "f_beta",
    "T_fn",
    "star_moment",
]


def _as_angle_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if arr.size and (arr.min() < -np.pi or arr.max() >= np.pi):
        raise ValueError(f"{name} must lie in [-pi, pi)")
    if arr.size > 1 and not np.all(np.diff(arr) > 0):
        raise ValueError(f"{name} must be strictly increasing")
    return arr


def _trapezoid_weights(angles: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Node weights of the circular trapezoid rule against dtheta/(2*pi)."""
    if angles.size == 0:
        return np.zeros(0)
    if angles.size == 1:
        # A single node carries the full period.
        return values * 1.0
    gaps = np.diff(np.concatenate([angles, [angles[0] + 2 * np.pi]]))
    halfspan = 0.5 * (gaps + np.roll(gaps, 1))
    return values * halfspan / (2 * np.pi)


@dataclass(frozen=True)
class CircleMeasure:
    """Probability measure on the unit circle: atoms + tabulated density."""

    atom_angles: np.ndarray
    atom_weights: np.ndarray
    density_angles: np.ndarray = field(default_factory=lambda: np.zeros(0))
    density_values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        aa = _as_angle_array(self.atom_angles, "atom_angles")
        aw = np.asarray(self.atom_weights, dtype=float)
        da = _as_angle_array(self.density_angles, "density_angles")
        dv = np.asarray(self.density_values, dtype=float)
        if aa.shape != aw.shape or da.shape != dv.shape:
            raise ValueError("angle and weight arrays must match in length")
        if aw.size and aw.min() < 0:
            raise ValueError("atom weights must be nonnegative")
        if dv.size and dv.min() < 0:
            raise ValueError("density values must be nonnegative")
        object.__setattr__(self, "atom_angles", aa)
        object.__setattr__(self, "atom_weights", aw)
        object.__setattr__(self, "density_angles", da)
        object.__setattr__(self, "density_values", dv)
        dw = _trapezoid_weights(da, dv)
        mass = aw.sum() + dw.sum()
        if abs(mass - 1.0) > _MASS_TOL:
            raise ValueError(f"total mass {mass!r} differs from 1 beyond {_MASS_TOL}")
        angles = np.concatenate([aa, da])
        weights = np.concatenate([aw, dw])
        keep = weights > 0
        object.__setattr__(self, "support_angles", angles[keep])
        object.__setattr__(self, "support_points", np.exp(1j * angles[keep]))
        object.__setattr__(self, "support_weights", weights[keep])

    @staticmethod
    def from_parts(atoms=(), density=(), normalize: bool = False) -> "CircleMeasure":
        """Build from (angle, weight) atom pairs and (angle, value) nodes."""
        aa = np.array([a for a, _ in atoms], dtype=float)
        aw = np.array([w for _, w in atoms], dtype=float)
        da = np.array([a for a, _ in density], dtype=float)
        dv = np.array([v for _, v in density], dtype=float)
        if normalize:
            mass = aw.sum() + _trapezoid_weights(_as_angle_array(da, "density_angles"), dv).sum()
            if mass <= 0:
                raise ValueError("cannot normalize a measure with zero mass")
            aw = aw / mass
            dv = dv / mass
        return CircleMeasure(aa, aw, da, dv)

    @property
    def has_density(self) -> bool:
        return self.density_angles.size > 0


def delta1() -> CircleMeasure:
    """Unit point mass at 1."""
    return CircleMeasure(np.array([0.0]), np.array([1.0]))


def four_points() -> CircleMeasure:
    """Equal point masses at the fourth roots of unity."""
    angles = np.array([-np.pi, -np.pi / 2, 0.0, np.pi / 2])
    return CircleMeasure(angles, np.full(4, 0.25))


def load_measure_json(source) -> CircleMeasure:
    """Parse the JSON measure schema; weights are normalized on load.

    Accepts a dict, a JSON string, or a path to a JSON file.
    """
    if isinstance(source, dict):
        data = source
    else:
        text = str(source)
        if text.lstrip().startswith("{"):
            data = json.loads(text)
        else:
            with open(text, "r", encoding="utf-8") as fh:
                data = json.load(fh)
    atoms = [(float(a["angle"]), float(a["weight"])) for a in data.get("atoms", [])]
    density = [(float(d["angle"]), float(d["value"])) for d in data.get("density", [])]
    return CircleMeasure.from_parts(atoms, density, normalize=True)


def dump_measure_json(m: CircleMeasure) -> dict:
    """Inverse of load_measure_json (up to normalization)."""
    return {
        "atoms": [
            {"angle": float(a), "weight": float(w)}
            for a, w in zip(m.atom_angles, m.atom_weights)
        ],
        "density": [
            {"angle": float(a), "value": float(v)}
            for a, v in zip(m.density_angles, m.density_values)
        ],
    }


@dataclass(frozen=True)
class BrownParams:
    """Admissible variance/covariance pair (s, tau).

    Admissibility means s > 0, tau != 0, and |tau - s| <= s; this forces
    tau1 > 0 and 0 < |tau|^2 / tau1 <= 2 s.
    """

    s: float
    tau: complex

    def __post_init__(self):
        s = float(self.s)
        tau = complex(self.tau)
        if not s > 0:
            raise ValueError("s must be positive")
        if tau == 0:
            raise ValueError("tau must be nonzero")
        if abs(tau - s) > s + 1e-12:
            raise ValueError(f"inadmissible pair: |tau - s| = {abs(tau - s)} > s = {s}")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "tau", tau)

    @property
    def tau1(self) -> float:
        return self.tau.real

    @property
    def tau2(self) -> float:
        return self.tau.imag

    @property
    def sigma(self) -> float:
        """|tau|^2 / tau1, the spiral-direction variance scale."""
        return abs(self.tau) ** 2 / self.tau.real


def _check_support_distance(m: CircleMeasure, z: np.ndarray) -> np.ndarray:
    """Distances |z - xi| to the support, raising on collision."""
    dist = np.abs(np.asarray(z)[..., None] - m.support_points)
    if dist.size and dist.min() < _SUPPORT_TOL:
        raise SingularPoint("evaluation point touches the support of the measure")
    return dist


def herglotz(m: CircleMeasure, z):
    """J(z) = integral (xi + z)/(xi - z) dmu(xi); scalar or array z."""
    z = np.asarray(z, dtype=complex)
    _check_support_distance(m, z)
    xi = m.support_points
    val = np.sum(m.support_weights * (xi + z[..., None]) / (xi - z[..., None]), axis=-1)
    return val if val.shape else complex(val)


def herglotz_prime(m: CircleMeasure, z):
    """dJ/dz = integral 2 xi / (xi - z)^2 dmu(xi)."""
    z = np.asarray(z, dtype=complex)
    _check_support_distance(m, z)
    xi = m.support_points
    val = np.sum(m.support_weights * 2.0 * xi / (xi - z[..., None]) ** 2, axis=-1)
    return val if val.shape else complex(val)


def f_beta(m: CircleMeasure, beta: complex, z):
    """f_beta(z) = z * exp(beta/2 * J(z))."""
    z = np.asarray(z, dtype=complex)
    val = z * np.exp(0.5 * complex(beta) * np.asarray(herglotz(m, z)))
    return val if val.shape else complex(val)


def _log_ratio(x: np.ndarray) -> np.ndarray:
    """log(x)/(x - 1) with a second-order switch near x = 1."""
    x = np.asarray(x, dtype=float)
    u = x - 1.0
    near = np.abs(np.sqrt(np.maximum(x, 0.0)) - 1.0) < _UNIT_CIRCLE_TOL
    safe = np.where(near, 2.0, x)
    with np.errstate(divide="ignore"):
        direct = np.log(safe) / (safe - 1.0)
    series = 1.0 - u / 2.0 + u * u / 3.0
    return np.where(near, series, direct)


def T_fn(m: CircleMeasure, lam):
    """Radius functional T; 0 where the support integral diverges.

    T(lam) = [log(|lam|^2)/(|lam|^2 - 1)] / integral |lam - xi|^-2 dmu.
    The prefactor switches to its series when |lam| is within 1e-9 of 1,
    where its limiting value is 1.
    """
    lam = np.asarray(lam, dtype=complex)
    dist2 = np.abs(lam[..., None] - m.support_points) ** 2
    diverged = np.any(dist2 < _SUPPORT_TOL**2, axis=-1)
    dist2 = np.where(diverged[..., None], 1.0, dist2)
    integral = np.sum(m.support_weights / dist2, axis=-1)
    val = _log_ratio(np.abs(lam) ** 2) / integral
    val = np.where(diverged, 0.0, val)
    return val if val.shape else float(val)


def star_moment(m: CircleMeasure, k: int):
    """integral xi^k dmu(xi) for integer k."""
    return complex(np.sum(m.support_weights * m.support_points ** int(k)))
