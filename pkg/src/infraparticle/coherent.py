"""
Coherent-state calculus on momentum grids.

A coherent state is stored as e^{i phase} D(f)|0>, where D(f) is the Weyl
displacement exp(a*(f) - a(f)).  All quantities are closed-form functionals
of the amplitude; no Fock matrices are built.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate

from .grid import GridMismatchError, MomentumGrid, build_grid, inner_product

__all__ = [
    "CoherentAmplitude",
    "CoherentState",
    "bn_amplitude",
    "bn_angular_factor",
    "coherent_overlap",
    "state_overlap",
    "weyl_compose_phase",
    "displace",
    "photon_number",
    "representation_distance",
    "vacuum",
    "write_amplitude_csv",
]


@dataclass(frozen=True, eq=False)
class CoherentAmplitude:
    grid: MomentumGrid
    values: np.ndarray  # complex, shape (2, grid.size)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (2, self.grid.size):
            raise ValueError(f"values must have shape (2, {self.grid.size}), got {vals.shape}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros((2, grid.size), dtype=complex))

    def _check(self, other):
        if other.grid is not self.grid:
            raise GridMismatchError("amplitudes defined on different grids")

    def __add__(self, other):
        self._check(other)
        return CoherentAmplitude(self.grid, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return CoherentAmplitude(self.grid, self.values - other.values)

    def __neg__(self):
        return CoherentAmplitude(self.grid, -self.values)

    def __mul__(self, c):
        return CoherentAmplitude(self.grid, complex(c) * self.values)

    __rmul__ = __mul__

    def norm2(self) -> float:
        return inner_product(self, self).real

    def restricted(self, lo=0.0, hi=np.inf):
        """Copy with values zeroed outside lo <= |k| < hi."""
        mask = (self.grid.kabs >= lo) & (self.grid.kabs < hi)
        return CoherentAmplitude(self.grid, self.values * mask[None, :])


@dataclass(frozen=True, eq=False)
class CoherentState:
    amplitude: CoherentAmplitude
    global_phase: float = 0.0


def vacuum(grid) -> CoherentState:
    return CoherentState(CoherentAmplitude.zeros(grid), 0.0)


def bn_amplitude(v, grid: MomentumGrid, alpha: float, sign_convention: str = "creation",
                 kappa: Optional[float] = None) -> CoherentAmplitude:
    """Bloch-Nordsieck cloud alpha^{1/2} (v.eps_lambda) / (|k|^{3/2} (1 - v.khat)).

    ``kappa`` truncates the cloud to |k| < kappa (zero above).
    """
    if sign_convention != "creation":
        raise ValueError(f"unsupported sign convention {sign_convention!r}")
    v = np.asarray(v, dtype=float)
    if np.linalg.norm(v) >= 1.0:
        raise ValueError("|v| must be < 1")
    delta = 1.0 - grid.khat @ v
    vals = np.sqrt(alpha) * (grid.eps @ v) / (grid.kabs**1.5 * delta)[None, :]
    if kappa is not None:
        vals = vals * (grid.kabs < kappa)[None, :]
    return CoherentAmplitude(grid, vals.astype(complex))


def bn_angular_factor(u: float) -> float:
    """A(u) = 2 pi int_{-1}^{1} u^2 (1 - c^2) / (1 - u c)^2 dc by adaptive quadrature.

    ||bn_amplitude||^2 on a shell (sigma, kappa) equals alpha ln(kappa/sigma) A(|v|).
    """
    val, _ = integrate.quad(lambda c: u * u * (1 - c * c) / (1 - u * c) ** 2, -1.0, 1.0,
                            epsabs=1e-14, epsrel=1e-13)
    return 2.0 * np.pi * val


def coherent_overlap(f: CoherentAmplitude, g: CoherentAmplitude) -> complex:
    """<D(f)0, D(g)0> = exp(-|f|^2/2 - |g|^2/2 + <f, g>)."""
    fg = inner_product(f, g)
    return complex(np.exp(-0.5 * f.norm2() - 0.5 * g.norm2() + fg))


def state_overlap(a: CoherentState, b: CoherentState) -> complex:
    return np.exp(1j * (b.global_phase - a.global_phase)) * coherent_overlap(a.amplitude, b.amplitude)


def weyl_compose_phase(G: CoherentAmplitude, Gp: CoherentAmplitude) -> complex:
    """Phase e^{-rho/2}, rho = 2i Im<G, G'>, in W(G) W(G') = W(G + G') e^{-rho/2}."""
    return complex(np.exp(-1j * inner_product(G, Gp).imag))


def displace(state: CoherentState, G: CoherentAmplitude) -> CoherentState:
    old = state.amplitude
    if G.grid is not old.grid:
        raise GridMismatchError("displacement on a different grid")
    phase = state.global_phase - inner_product(G, old).imag
    return CoherentState(old + G, phase)


def photon_number(state: CoherentState) -> float:
    return state.amplitude.norm2()


def representation_distance(v1, v2, sigma: float, kappa: float, alpha: float,
                            n_radial: int = 32, n_polar: int = 32, n_azimuth: int = 64) -> float:
    """||f_{v1} - f_{v2}||^2 on the shell (sigma, kappa); grows like ln(1/sigma) for v1 != v2."""
    grid = build_grid(sigma, kappa, n_radial, n_polar, n_azimuth, "log")
    d = bn_amplitude(v1, grid, alpha) - bn_amplitude(v2, grid, alpha)
    return d.norm2()


def write_amplitude_csv(f: CoherentAmplitude, path) -> None:
    g = f.grid
    ct, ph = g.node_cos_phi()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "cos_theta", "phi", "lambda", "re_f", "im_f", "weight"])
        for lam in range(2):
            for i in range(g.size):
                val = f.values[lam, i]
                w.writerow([f"{g.kabs[i]:.17g}", f"{ct[i]:.17g}", f"{ph[i]:.17g}", lam + 1,
                            f"{val.real:.17g}", f"{val.imag:.17g}", f"{g.weights[i]:.17g}"])
