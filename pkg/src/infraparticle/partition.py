"""
Time-indexed dyadic cell partitions of the electron momentum support.

At time t the support cube of the wave packet is cut into 2^{3n} congruent
cubes with n = floor(epsilon log2 t), so the cell side shrinks like t^-epsilon.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .dispersion import DispersionModel, WavePacket, _bump, grad_energy

__all__ = ["CellPartition", "Refinement", "partition_level", "build_partition", "refine"]


def partition_level(t: float, epsilon: float) -> int:
    """n with (2^n)^{1/epsilon} <= t < (2^{n+1})^{1/epsilon}."""
    if t < 1:
        raise ValueError("t must be >= 1")
    # guard against log2 round-off at exact powers of two
    return int(math.floor(epsilon * math.log2(t) + 1e-12))


@dataclass(frozen=True, eq=False)
class CellPartition:
    t: float
    n: int
    epsilon: float
    packet: WavePacket
    origin: np.ndarray  # lower corner of the support cube
    cell_side: float
    index: np.ndarray  # (N, 3) integer cube coordinates
    centers: np.ndarray  # (N, 3)
    masses: np.ndarray  # (N,)

    @property
    def N(self) -> int:
        return self.masses.size

    @property
    def lower(self):
        return self.origin + self.index * self.cell_side

    @property
    def upper(self):
        return self.lower + self.cell_side

    def total_mass(self) -> float:
        return float(np.sum(self.masses))

    def velocities(self, dispersion: DispersionModel, sigma=None):
        return grad_energy(dispersion, self.centers, sigma)

    def sample_points(self, k: int = 3):
        """k^3 deterministic points per cell (midpoints of a k x k x k subdivision); shape (N, k^3, 3)."""
        f = (np.arange(k) + 0.5) / k
        F = np.stack(np.meshgrid(f, f, f, indexing="ij"), axis=-1).reshape(-1, 3)
        return self.lower[:, None, :] + self.cell_side * F[None, :, :]

    def to_csv(self, path, dispersion: DispersionModel, sigma=None) -> None:
        v = self.velocities(dispersion, sigma)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["j", "cx", "cy", "cz", "side", "mass", "vx", "vy", "vz"])
            for j in range(self.N):
                w.writerow([j, *(f"{c:.17g}" for c in self.centers[j]), f"{self.cell_side:.17g}",
                            f"{self.masses[j]:.17g}", *(f"{c:.17g}" for c in v[j])])


def build_partition(h: WavePacket, t: float, schedule, n_quad: int = 6) -> CellPartition:
    """Dyadic partition of supp h at time t; cell masses by an n_quad^3 Gauss rule per cell."""
    return _build(h, t, float(schedule.epsilon), n_quad)


def _build(h, t, epsilon, n_quad):
    n = partition_level(t, epsilon)
    m = 2**n
    side = h.side / m
    origin = np.asarray(h.lower, float)
    ii = np.arange(m)
    idx = np.stack(np.meshgrid(ii, ii, ii, indexing="ij"), axis=-1).reshape(-1, 3)

    x, w = np.polynomial.legendre.leggauss(n_quad)
    # separable rule: the wave packet is a product of one-dimensional bumps
    node = 0.5 * side * (x + 1.0)
    wt = 0.5 * side * w
    masses = np.ones(idx.shape[0])
    for axis in range(3):
        lo = origin[axis] + ii * side
        pts = lo[:, None] + node[None, :]
        u = (pts - h.center[axis]) / (h.side / 2.0)
        per_cell = np.sum(_bump(u) ** 2 * wt[None, :], axis=1)
        masses = masses * per_cell[idx[:, axis]]
    keep = masses > 0.0
    idx = idx[keep]
    centers = origin + (idx + 0.5) * side
    return CellPartition(float(t), n, epsilon, h, origin, side, idx,
                         centers, masses[keep])


@dataclass(frozen=True, eq=False)
class Refinement:
    parent: CellPartition
    child: CellPartition
    parent_of: np.ndarray  # child index -> parent index

    def children_of(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.parent_of == j)

    def child_mass_by_parent(self) -> np.ndarray:
        return np.bincount(self.parent_of, weights=self.child.masses, minlength=self.parent.N)

    def velocity_pairs(self, dispersion: DispersionModel, sigma_parent=None, sigma_child=None):
        """(v_{j}, v_{l(j)}) aligned with the child cells."""
        vp = self.parent.velocities(dispersion, sigma_parent)
        vc = self.child.velocities(dispersion, sigma_child)
        return vp[self.parent_of], vc

    def max_velocity_jump(self, dispersion: DispersionModel) -> float:
        vj, vl = self.velocity_pairs(dispersion)
        return float(np.max(np.linalg.norm(vj - vl, axis=1)))


def refine(parent: CellPartition, t2: float, n_quad: int = 6) -> Refinement:
    """Partition at t2 > t1 with the parent's epsilon, plus the containment map."""
    if t2 <= parent.t:
        raise ValueError("refinement needs t2 > t1")
    child = _build(parent.packet, t2, parent.epsilon, n_quad)
    d = child.n - parent.n
    if d < 0:
        raise ValueError("non-nested times: n(t2) < n(t1)")
    pidx = child.index >> d
    m = 2**parent.n
    lookup = -np.ones(m**3, dtype=int)
    flat = (parent.index[:, 0] * m + parent.index[:, 1]) * m + parent.index[:, 2]
    lookup[flat] = np.arange(parent.N)
    parent_of = lookup[(pidx[:, 0] * m + pidx[:, 1]) * m + pidx[:, 2]]
    if np.any(parent_of < 0):
        raise ValueError("child cell outside every parent cell")
    return Refinement(parent, child, parent_of)
