"""
Photon momentum shells.

Product quadrature on a shell ``lo < |k| < hi``: Gauss-Legendre in the radial
variable (in ``ln|k|`` for log spacing), Gauss-Legendre in ``cos(theta)`` and
the trapezoid rule in ``phi``.  Every node carries a pair of real transverse
polarization vectors fixed by a deterministic gauge rule.

Units: hbar = c = m_electron = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "PolarizationBasis",
    "MomentumGrid",
    "GridMismatchError",
    "build_grid",
    "polarization_basis",
    "polarization_vectors",
    "inner_product",
    "shell_volume",
]


class GridMismatchError(ValueError):
    """Two amplitudes live on different momentum grids."""


@dataclass(frozen=True)
class PolarizationBasis:
    khat: np.ndarray
    eps1: np.ndarray
    eps2: np.ndarray


def polarization_vectors(khat):
    """Vectorised gauge rule, ``khat`` of shape (..., 3).

    eps1 = normalize(a x khat) with a = z, or a = x when |khat_z| > 0.9;
    eps2 = khat x eps1.
    """
    khat = np.asarray(khat, dtype=float)
    a = np.zeros_like(khat)
    use_x = np.abs(khat[..., 2]) > 0.9
    a[..., 2] = np.where(use_x, 0.0, 1.0)
    a[..., 0] = np.where(use_x, 1.0, 0.0)
    e1 = np.cross(a, khat)
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(khat, e1)
    return e1, e2


def polarization_basis(khat) -> PolarizationBasis:
    khat = np.asarray(khat, dtype=float)
    norm = np.linalg.norm(khat)
    if norm == 0.0:
        raise ValueError("polarization basis undefined for the zero vector")
    if abs(norm - 1.0) > 1e-12:
        raise ValueError(f"khat must be a unit vector, |khat| = {norm!r}")
    e1, e2 = polarization_vectors(khat)
    return PolarizationBasis(khat=khat.copy(), eps1=e1, eps2=e2)


def shell_volume(lo: float, hi: float) -> float:
    return 4.0 * np.pi / 3.0 * (hi**3 - lo**3)


@dataclass(frozen=True, eq=False)
class MomentumGrid:
    """Immutable product grid over the shell ``sigma_lo < |k| < sigma_hi``.

    Node arrays are flattened in (radial, polar, azimuth) C order.  ``k`` has
    shape (n, 3); ``eps`` has shape (2, n, 3) for the two polarizations.
    """

    sigma_lo: float
    sigma_hi: float
    radial_nodes: np.ndarray
    cos_theta: np.ndarray
    phi: np.ndarray
    kabs: np.ndarray
    khat: np.ndarray
    k: np.ndarray
    eps: np.ndarray
    weights: np.ndarray
    radial_spacing: str = "log"
    breaks: tuple = field(default=())

    @property
    def size(self) -> int:
        return self.weights.size

    def node_cos_phi(self):
        """(cos_theta, phi) per flattened node."""
        nr = self.radial_nodes.size
        ct = np.broadcast_to(self.cos_theta[None, :, None],
                             (nr, self.cos_theta.size, self.phi.size))
        ph = np.broadcast_to(self.phi[None, None, :],
                             (nr, self.cos_theta.size, self.phi.size))
        return ct.ravel(), ph.ravel()

    def integrate(self, values) -> float | complex:
        """Quadrature of a scalar field given at the nodes."""
        values = np.asarray(values)
        return np.sum(self.weights * values)

    def __repr__(self):
        return (f"MomentumGrid(sigma_lo={self.sigma_lo!r}, sigma_hi={self.sigma_hi!r}, "
                f"nodes={self.size}, spacing={self.radial_spacing!r})")


def _radial_rule(lo, hi, n, spacing):
    x, w = np.polynomial.legendre.leggauss(n)
    if spacing == "log":
        ulo, uhi = np.log(lo), np.log(hi)
        u = 0.5 * (uhi - ulo) * x + 0.5 * (uhi + ulo)
        r = np.exp(u)
        # d^3k = k^3 du dOmega
        return r, 0.5 * (uhi - ulo) * w * r**3
    if spacing == "linear":
        r = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        return r, 0.5 * (hi - lo) * w * r**2
    raise ValueError(f"unknown radial spacing {spacing!r}")


def build_grid(sigma_lo: float, sigma_hi: float, n_radial: int = 64,
               n_polar: int = 32, n_azimuth: int = 64,
               radial_spacing: str = "log",
               breaks: Sequence[float] = ()) -> MomentumGrid:
    """Build a shell grid.

    ``breaks`` optionally splits the radial range into segments, each with its
    own ``n_radial``-point Gauss-Legendre rule, so that amplitudes supported on
    a sub-shell (e.g. below a threshold kappa) are integrated exactly.
    """
    if not (sigma_lo > 0):
        raise ValueError("sigma_lo must be positive")
    if not (sigma_lo < sigma_hi):
        raise ValueError(f"need sigma_lo < sigma_hi, got {sigma_lo!r}, {sigma_hi!r}")
    for name, n in (("n_radial", n_radial), ("n_polar", n_polar), ("n_azimuth", n_azimuth)):
        if int(n) < 2:
            raise ValueError(f"{name} must be >= 2, got {n!r}")
    edges = [float(sigma_lo)]
    for b in sorted(float(b) for b in breaks):
        if not (sigma_lo < b < sigma_hi):
            raise ValueError(f"break {b!r} outside ({sigma_lo}, {sigma_hi})")
        edges.append(b)
    edges.append(float(sigma_hi))

    r_parts, wr_parts = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        r, wr = _radial_rule(lo, hi, int(n_radial), radial_spacing)
        r_parts.append(r)
        wr_parts.append(wr)
    r = np.concatenate(r_parts)
    wr = np.concatenate(wr_parts)

    ct, wc = np.polynomial.legendre.leggauss(int(n_polar))
    phi = 2.0 * np.pi * np.arange(int(n_azimuth)) / int(n_azimuth)
    wphi = np.full(phi.size, 2.0 * np.pi / int(n_azimuth))

    st = np.sqrt(1.0 - ct**2)
    dirs = np.stack([st[:, None] * np.cos(phi)[None, :],
                     st[:, None] * np.sin(phi)[None, :],
                     np.broadcast_to(ct[:, None], (ct.size, phi.size))], axis=-1)
    dirs = dirs.reshape(-1, 3)
    e1, e2 = polarization_vectors(dirs)
    w_ang = (wc[:, None] * wphi[None, :]).ravel()

    nr, na = r.size, dirs.shape[0]
    kabs = np.repeat(r, na)
    khat = np.tile(dirs, (nr, 1))
    weights = np.repeat(wr, na) * np.tile(w_ang, nr)
    eps = np.stack([np.tile(e1, (nr, 1)), np.tile(e2, (nr, 1))])
    grid = MomentumGrid(
        sigma_lo=float(sigma_lo), sigma_hi=float(sigma_hi), radial_nodes=r,
        cos_theta=ct, phi=phi, kabs=kabs, khat=khat, k=kabs[:, None] * khat,
        eps=eps, weights=weights, radial_spacing=radial_spacing,
        breaks=tuple(edges[1:-1]),
    )
    for arr in (r, ct, phi, kabs, khat, grid.k, eps, weights):
        arr.setflags(write=False)
    return grid


def inner_product(f, g) -> complex:
    """L2 pairing sum_lambda int conj(f) g d^3k, antilinear in ``f``."""
    if f.grid is not g.grid:
        raise GridMismatchError("amplitudes defined on different grids")
    if f is g:
        # exact real norm; the complex product can leave a round-off imaginary part
        sq = (f.values.real**2 + f.values.imag**2) * f.grid.weights[None, :]
        return complex(np.sum(sq.ravel()))
    prod = np.conj(f.values) * g.values * f.grid.weights[None, :]
    # np.sum over a contiguous 1-D array is a fixed pairwise reduction
    return complex(np.sum(prod.ravel()))
