"""
Classical electrodynamics of a point charge with piecewise-uniform motion.

Heaviside-Lorentz units with c = 1, metric (+,-,-,-).  The field tensor is
F^{i0} = E^i, F^{ij} = -eps^{ijk} B^k, so that d_mu F^{mu nu} = J^nu with
J = q (delta, v delta) for a source of charge q.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .softphoton import ShellRay, loglog_fit

__all__ = [
    "charge_normalization",
    "Trajectory",
    "FieldTensor",
    "lw_uniform",
    "lw_retarded",
    "retarded_time",
    "RadiationSplit",
    "radiation_split",
    "interior_decay",
    "light_cone_pulse",
    "a_as_far_field",
    "maxwell_residual",
    "a_as_potential",
    "divergence",
    "write_field_map",
]


def charge_normalization(alpha: float = 1.0 / 137.0) -> float:
    """q = 2 (2 pi)^3 alpha^{1/2}; the electron carries charge -q."""
    return 2.0 * (2.0 * math.pi) ** 3 * math.sqrt(alpha)


def _smoothstep(u):
    return u * u * (3.0 - 2.0 * u)


@dataclass(frozen=True)
class Trajectory:
    """x(t) = v_in t for t <= 0, x_star + v_out t for t >= t_bar, smoothstep velocity ramp between."""

    v_in: tuple
    v_out: tuple
    t_bar: float

    def __post_init__(self):
        if self.t_bar <= 0:
            raise ValueError("t_bar must be positive")
        if np.linalg.norm(self.v_in) >= 1 or np.linalg.norm(self.v_out) >= 1:
            raise ValueError("velocities must satisfy |v| < 1")

    @property
    def x_star(self):
        return 0.5 * (np.asarray(self.v_in) - np.asarray(self.v_out)) * self.t_bar

    @property
    def speed_bound(self) -> float:
        # the ramp velocity is a convex combination of v_in and v_out
        return max(float(np.linalg.norm(self.v_in)), float(np.linalg.norm(self.v_out)))

    def x(self, t):
        vi, vo = np.asarray(self.v_in, float), np.asarray(self.v_out, float)
        if t <= 0:
            return vi * t
        if t >= self.t_bar:
            return self.x_star + vo * t
        u = t / self.t_bar
        return vi * t + (vo - vi) * self.t_bar * (u**3 - 0.5 * u**4)

    def v(self, t):
        vi, vo = np.asarray(self.v_in, float), np.asarray(self.v_out, float)
        u = min(max(t / self.t_bar, 0.0), 1.0)
        return vi + (vo - vi) * _smoothstep(u)

    def a(self, t):
        if t <= 0 or t >= self.t_bar:
            return np.zeros(3)
        u = t / self.t_bar
        return (np.asarray(self.v_out, float) - np.asarray(self.v_in, float)) * 6.0 * u * (1.0 - u) / self.t_bar


@dataclass(frozen=True, eq=False)
class FieldTensor:
    F: np.ndarray  # (4, 4), contravariant

    @classmethod
    def from_EB(cls, E, B) -> "FieldTensor":
        E = np.asarray(E, float)
        B = np.asarray(B, float)
        F = np.zeros((4, 4))
        F[1:, 0] = E
        F[0, 1:] = -E
        F[1, 2], F[2, 1] = -B[2], B[2]
        F[2, 3], F[3, 2] = -B[0], B[0]
        F[3, 1], F[1, 3] = -B[1], B[1]
        return cls(F)

    @classmethod
    def zero(cls) -> "FieldTensor":
        return cls(np.zeros((4, 4)))

    @property
    def E(self):
        return self.F[1:, 0].copy()

    @property
    def B(self):
        return np.array([self.F[3, 2], self.F[1, 3], self.F[2, 1]])

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.E**2) + np.sum(self.B**2)))

    def __sub__(self, other):
        return FieldTensor(self.F - other.F)

    def __add__(self, other):
        return FieldTensor(self.F + other.F)


def lw_uniform(q: float, x0, v, point) -> FieldTensor:
    """Boosted Coulomb field of a charge at x0 + v t."""
    t, y = point
    v = np.asarray(v, float)
    if np.linalg.norm(v) >= 1:
        raise ValueError("|v| must be < 1")
    R = np.asarray(y, float) - np.asarray(x0, float) - v * t
    vxR = np.cross(v, R)
    den = R @ R - vxR @ vxR
    if den <= 0.0:
        raise ValueError("field evaluated on the worldline")
    E = q * (1.0 - v @ v) * R / (4.0 * math.pi * den**1.5)
    return FieldTensor.from_EB(E, np.cross(v, E))


def retarded_time(trajectory: Trajectory, t: float, y, tol: float | None = None) -> float:
    """Root of t - tau - |y - x(tau)| = 0 (unique, the map is strictly decreasing)."""
    y = np.asarray(y, float)
    tol = 1e-12 * (1.0 + abs(t)) if tol is None else tol
    f = lambda tau: t - tau - float(np.linalg.norm(y - trajectory.x(tau)))
    d0 = float(np.linalg.norm(y - trajectory.x(t)))
    if d0 == 0.0:
        raise ValueError("field evaluated on the worldline")
    lo = t - d0 / (1.0 - trajectory.speed_bound) - 1.0
    tau, res = optimize.brentq(f, lo, t, xtol=tol, rtol=4 * np.finfo(float).eps,
                               maxiter=500, full_output=True)
    if not res.converged:
        raise RuntimeError("retarded-time solver did not converge")
    return tau


def lw_retarded(q: float, trajectory: Trajectory, point, tol: float | None = None) -> FieldTensor:
    """Full Lienard-Wiechert field (velocity and acceleration terms) at the retarded time."""
    t, y = point
    y = np.asarray(y, float)
    tau = retarded_time(trajectory, t, y, tol)
    Rv = y - trajectory.x(tau)
    R = float(np.linalg.norm(Rv))
    n = Rv / R
    b = trajectory.v(tau)
    a = trajectory.a(tau)
    g = 1.0 - n @ b
    nb = n - b
    E = q / (4.0 * math.pi) * (nb * (1.0 - b @ b) / (g**3 * R**2)
                                + np.cross(n, np.cross(nb, a)) / (g**3 * R))
    return FieldTensor.from_EB(E, np.cross(n, E))


@dataclass(frozen=True, eq=False)
class RadiationSplit:
    """phi_in (t < 0) or phi_out (t > t_bar); the other branch is None.

    ``exact_zero`` is set when the retarded time lies on the asymptotic
    segment of the branch: the retarded field then coincides with the
    uniform field and phi is the exact zero tensor.
    """

    phi_in: FieldTensor | None
    phi_out: FieldTensor | None
    exact_zero: bool

    @property
    def phi(self) -> FieldTensor:
        return self.phi_in if self.phi_in is not None else self.phi_out


def radiation_split(q: float, trajectory: Trajectory, t: float, y) -> RadiationSplit:
    """phi_in = F - F_{0, v_in} for t < 0, phi_out = F - F_{x_star, v_out} for t > t_bar."""
    if t < 0:
        x0, v, asymptotic = np.zeros(3), trajectory.v_in, lambda tau: tau <= 0.0
    elif t > trajectory.t_bar:
        x0, v, asymptotic = trajectory.x_star, trajectory.v_out, lambda tau: tau >= trajectory.t_bar
    else:
        raise ValueError("radiation split needs t < 0 (in) or t > t_bar (out)")
    if asymptotic(retarded_time(trajectory, t, y)):
        phi, zero = FieldTensor.zero(), True
    else:
        phi, zero = lw_retarded(q, trajectory, (t, y)) - lw_uniform(q, x0, v, (t, y)), False
    return RadiationSplit(phi, None, zero) if t < 0 else RadiationSplit(None, phi, zero)


def _d4(f, h):
    """Fourth-order central difference of f(s) at s = 0."""
    return (-f(2 * h) + 8 * f(h) - 8 * f(-h) + f(-2 * h)) / (12.0 * h)


def maxwell_residual(field, t: float, y, h: float = 1e-3):
    """d_mu F^{mu nu} by fourth-order differences away from sources.

    ``field(t, y)`` returns a FieldTensor.  Returns (residual 4-vector, scale)
    with scale the largest single derivative term, for relative checks.
    """
    y = np.asarray(y, float)
    terms = np.zeros((4, 4))  # terms[mu, nu] = d_mu F^{mu nu}
    dt = _d4(lambda s: field(t + s, y).F, h)
    terms[0] = dt[0]
    for i in range(3):
        e = np.zeros(3)
        e[i] = 1.0
        di = _d4(lambda s: field(t, y + s * e).F, h)
        terms[i + 1] = di[i + 1]
    return terms.sum(axis=0), float(np.max(np.abs(terms)))


def a_as_potential(v_as, v_lw, t: float, y, Lambda: float = 1.0, alpha: float = 1.0 / 137.0,
                   grid_res=(32, 32)):
    """Coulomb-gauge potential alpha^{1/2} int_{|k|<Lambda} (Sigma_{v_as} - Sigma_{v_lw})(k) cos(k.y - |k| t) d^3k."""
    if np.linalg.norm(v_as) >= 1 or np.linalg.norm(v_lw) >= 1:
        raise ValueError("velocities must satisfy |v| < 1")
    y = np.asarray(y, float)
    ray = ShellRay([v_as, v_lw], y, *grid_res, coefficients=[1.0, -1.0])
    return math.sqrt(alpha) * ray.integral([float(np.linalg.norm(y))], float(t), 0.0, float(Lambda))[0]


def divergence(vector_field, y, h: float = 0.05):
    """Fourth-order finite-difference divergence and the Jacobian scale at y."""
    y = np.asarray(y, float)
    J = np.zeros((3, 3))
    for i in range(3):
        e = np.zeros(3)
        e[i] = 1.0
        J[:, i] = _d4(lambda s: vector_field(y + s * e), h)
    return float(np.trace(J)), float(np.linalg.norm(J))


def write_field_map(path, q: float, trajectory: Trajectory, points) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "y1", "y2", "y3", "Ex", "Ey", "Ez", "Bx", "By", "Bz", "absF"])
        for t, y in points:
            F = lw_retarded(q, trajectory, (t, y))
            w.writerow([f"{x:.17g}" for x in (t, *y, *F.E, *F.B, F.norm())])


# ---------------------------------------------------------------------------
# Decay experiments
# ---------------------------------------------------------------------------

def interior_decay(q: float, trajectory: Trajectory, t_values, lam: float = 0.5,
                   direction=(0.0, 0.0, 1.0)):
    """|phi| at y = x(t) + lam |t| e (inside the light cone for lam < 1, outside for lam > 1).

    Returns (fit or None, values, all_identically_zero).
    """
    e = np.asarray(direction, float)
    e = e / np.linalg.norm(e)
    vals, zero = [], []
    for t in t_values:
        y = trajectory.x(t) + lam * abs(t) * e
        split = radiation_split(q, trajectory, t, y)
        vals.append(split.phi.norm())
        zero.append(split.exact_zero)
    vals = np.array(vals)
    if all(zero):
        return None, vals, True
    return loglog_fit(np.abs(t_values), vals), vals, False


def light_cone_pulse(q: float, trajectory: Trajectory, t_values):
    """|F| on the light cone of the mid-ramp event, perpendicular to the acceleration."""
    tm = 0.5 * trajectory.t_bar
    a = trajectory.a(tm)
    e = np.cross(a, [0.0, 0.0, 1.0])
    if np.linalg.norm(e) < 1e-12 * np.linalg.norm(a):
        e = np.cross(a, [1.0, 0.0, 0.0])
    e /= np.linalg.norm(e)
    x0 = trajectory.x(tm)
    vals = []
    for t in t_values:
        y = x0 + (t - tm) * e
        vals.append(radiation_split(q, trajectory, t, y).phi.norm())
    R = np.asarray(t_values, float) - tm
    return loglog_fit(R, np.array(vals))


def a_as_far_field(v_as, v_lw, t: float, radii, direction, Lambda: float = 1.0,
                   alpha: float = 1.0 / 137.0):
    e = np.asarray(direction, float)
    e = e / np.linalg.norm(e)
    vals = [np.linalg.norm(a_as_potential(v_as, v_lw, t, r * e, Lambda, alpha)) for r in radii]
    return loglog_fit(np.asarray(radii, float), np.array(vals))
