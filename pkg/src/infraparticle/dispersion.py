"""
Analytic stand-ins for the fiber ground-state energy E_P and its gradient,
plus a C^1 electron wave packet supported inside the allowed momentum shell.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "P_MAX",
    "DispersionModel",
    "WavePacket",
    "MomentumOutOfRange",
    "energy",
    "grad_energy",
    "velocity_factor",
    "default_wavepacket",
]

#: radius of the momentum ball S
P_MAX = 1.0 / 3.0


class MomentumOutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class DispersionModel:
    kind: str = "free"
    m_ren: float = 1.0
    sigma_dependence: bool = False
    sigma_c: float = 0.05
    nu_min: float = 0.1
    nu_max: float = 1.0 / 3.0

    def __post_init__(self):
        if self.kind not in ("free", "renormalized_mass"):
            raise ValueError(f"unknown dispersion kind {self.kind!r}")
        if self.kind == "free" and self.m_ren != 1.0:
            object.__setattr__(self, "m_ren", 1.0)
        if self.m_ren < 1.0:
            raise ValueError("m_ren must be >= 1")
        if not (0.0 < self.nu_min < self.nu_max < 1.0):
            raise ValueError("need 0 < nu_min < nu_max < 1")

    @property
    def r_alpha(self) -> float:
        return self.nu_min / 2.0

    def scale(self, sigma=None) -> float:
        """Multiplicative cutoff dependence (1 + c sqrt(sigma)); 1 when disabled."""
        if not self.sigma_dependence or sigma is None:
            return 1.0
        return 1.0 + self.sigma_c * np.sqrt(sigma)


def _check_inside(P):
    P = np.asarray(P, dtype=float)
    if np.any(np.linalg.norm(P, axis=-1) >= P_MAX):
        raise MomentumOutOfRange("momentum outside the ball |P| < 1/3")
    return P


def energy(model: DispersionModel, P, sigma=None):
    P = _check_inside(P)
    return model.scale(sigma) * np.sum(P * P, axis=-1) / (2.0 * model.m_ren)


def grad_energy(model: DispersionModel, P, sigma=None):
    """Velocity ``grad_P E``; shape follows ``P`` (..., 3)."""
    P = _check_inside(P)
    return model.scale(sigma) * P / model.m_ren


def velocity_factor(gradE, khat):
    """delta(khat) = 1 - gradE . khat."""
    return 1.0 - np.tensordot(np.asarray(khat, float), np.asarray(gradE, float), axes=([-1], [-1]))


def _bump(x):
    """(1 - x^2)^2 on [-1, 1], zero outside; C^1 across the edge."""
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) < 1.0, (1.0 - x * x) ** 2, 0.0)


def _bump_prime(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) < 1.0, -4.0 * x * (1.0 - x * x), 0.0)


@dataclass(frozen=True)
class WavePacket:
    """Product bump h(P) = prod_i b((P_i - c_i) / (L/2)) on the cube ``center +- L/2``."""

    center: tuple
    side: float

    @property
    def lower(self):
        return np.asarray(self.center) - self.side / 2.0

    @property
    def upper(self):
        return np.asarray(self.center) + self.side / 2.0

    @property
    def diameter(self) -> float:
        return float(np.sqrt(3.0) * self.side)

    def __call__(self, P):
        u = (np.asarray(P, float) - np.asarray(self.center)) / (self.side / 2.0)
        return np.prod(_bump(u), axis=-1)

    def gradient(self, P):
        u = (np.asarray(P, float) - np.asarray(self.center)) / (self.side / 2.0)
        b = _bump(u)
        db = _bump_prime(u) / (self.side / 2.0)
        g = np.empty(u.shape)
        for i in range(3):
            others = [b[..., j] for j in range(3) if j != i]
            g[..., i] = db[..., i] * others[0] * others[1]
        return g

    def quadrature(self, n: int = 6, lower=None, upper=None):
        """Gauss-Legendre tensor rule on a box (default: the support cube).

        Returns (points (m, 3), weights (m,)).  With n >= 5 the bump (degree 4
        per axis, squared 8) is integrated exactly on any sub-box.
        """
        lo = self.lower if lower is None else np.asarray(lower, float)
        hi = self.upper if upper is None else np.asarray(upper, float)
        x, w = np.polynomial.legendre.leggauss(n)
        axes, wts = [], []
        for i in range(3):
            axes.append(0.5 * (hi[i] - lo[i]) * x + 0.5 * (hi[i] + lo[i]))
            wts.append(0.5 * (hi[i] - lo[i]) * w)
        X, Y, Z = np.meshgrid(*axes, indexing="ij")
        WX, WY, WZ = np.meshgrid(*wts, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=-1)
        return pts, (WX * WY * WZ).ravel()

    def mass(self, lower=None, upper=None, n: int = 6) -> float:
        pts, w = self.quadrature(n, lower, upper)
        return float(np.sum(w * self(pts) ** 2))

    @cached_property
    def norm2(self) -> float:
        return self.mass()

    def norm2_exact(self) -> float:
        # int_{-1}^{1} (1 - x^2)^4 dx = 256/315
        return (256.0 / 315.0 * self.side / 2.0) ** 3

    def support_inside(self, r_alpha: float) -> bool:
        lo, hi = self.lower, self.upper
        far = np.sqrt(np.sum(np.maximum(np.abs(lo), np.abs(hi)) ** 2))
        near = np.sqrt(np.sum(np.where((lo <= 0) & (hi >= 0), 0.0,
                                       np.minimum(np.abs(lo), np.abs(hi))) ** 2))
        return bool(near > r_alpha and far < P_MAX)


def default_wavepacket(r_alpha: float = 0.05) -> WavePacket:
    if not (0 < r_alpha < P_MAX):
        raise ValueError("r_alpha must lie in (0, 1/3)")
    side = 0.12
    cx = max(0.2, r_alpha + side / 2.0 + 0.02)
    h = WavePacket(center=(cx, 0.0, 0.0), side=side)
    if not h.support_inside(r_alpha):
        raise ValueError(f"no default cube fits between r_alpha={r_alpha} and 1/3")
    return h
