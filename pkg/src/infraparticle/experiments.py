"""
Desk-scale versions of the convergence bookkeeping: coherent suppression of
off-diagonal cell overlaps, the refinement-step diagonal bound and the
asymptotic expectation of Weyl operators in the dressed one-electron states.

All electron states are modeled by the Bloch-Nordsieck coherent ansatz; the
interacting remainder of the overlap ODE vanishes identically in this model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coherent import CoherentAmplitude, bn_amplitude, displace, state_overlap, vacuum
from .dispersion import DispersionModel, WavePacket, grad_energy
from .partition import CellPartition, build_partition, refine
from .softphoton import CutoffSchedule, FitResult, gamma_difference_batch, loglog_fit

__all__ = [
    "eta_difference",
    "pair_angular_factor",
    "c_suppression",
    "OverlapMatrix",
    "offdiag_overlap",
    "offdiag_sigma_sweep",
    "RefinementRecord",
    "refinement_diagonal_bound",
    "refinement_sweep",
    "AsymptoticExpectation",
    "asymptotic_expectation",
]


def eta_difference(v_j, v_l, k, alpha: float):
    """eta_{l,j}(k) = alpha^{1/2} [v_j / (1 - khat.v_j) - v_l / (1 - khat.v_l)] / |k|^{3/2}."""
    k = np.asarray(k, float)
    kabs = np.linalg.norm(k, axis=-1)
    if np.any(kabs == 0.0):
        raise ValueError("eta is singular at k = 0")
    khat = k / kabs[..., None]
    v_j = np.asarray(v_j, float)
    v_l = np.asarray(v_l, float)
    a = v_j / (1.0 - khat @ v_j)[..., None] - v_l / (1.0 - khat @ v_l)[..., None]
    return math.sqrt(alpha) * a / kabs[..., None] ** 1.5


def _sphere_rule(n_polar, n_azimuth):
    c, wc = np.polynomial.legendre.leggauss(n_polar)
    phi = 2.0 * np.pi * np.arange(n_azimuth) / n_azimuth
    s = np.sqrt(1.0 - c * c)
    dirs = np.stack([s[:, None] * np.cos(phi), s[:, None] * np.sin(phi),
                     np.broadcast_to(c[:, None], (n_polar, n_azimuth))], axis=-1).reshape(-1, 3)
    w = np.repeat(wc, n_azimuth) * (2.0 * np.pi / n_azimuth)
    return dirs, w


def pair_angular_factor(v_j, v_l, projected: bool = True, n_polar: int = 48,
                        n_azimuth: int = 96, chunk: int = 2048):
    """int dOmega |P(khat) (v_j/delta_j - v_l/delta_l)|^2 for rows of (m, 3) arrays.

    P is the transverse projector (sum over the two polarizations); with
    ``projected=False`` the full vector norm is used.
    """
    v_j = np.atleast_2d(np.asarray(v_j, float))
    v_l = np.atleast_2d(np.asarray(v_l, float))
    v_j, v_l = np.broadcast_arrays(v_j, v_l)
    dirs, w = _sphere_rule(n_polar, n_azimuth)
    out = np.empty(v_j.shape[0])
    for a in range(0, v_j.shape[0], chunk):
        vj, vl = v_j[a:a + chunk], v_l[a:a + chunk]
        dj = 1.0 - vj @ dirs.T  # (m, q)
        dl = 1.0 - vl @ dirs.T
        d = vj[:, None, :] / dj[:, :, None] - vl[:, None, :] / dl[:, :, None]
        sq = np.sum(d * d, axis=-1)
        if projected:
            sq = sq - np.sum(d * dirs[None], axis=-1) ** 2
        out[a:a + chunk] = sq @ w
    return out


def c_suppression(v_j, v_l, sigma: float, kappa: float, alpha: float, projected: bool = True):
    """C_{l,j,sigma} = int_{sigma<|k|<kappa} |eta_{l,j}|^2 d^3k = alpha ln(kappa/sigma) A(v_j, v_l)."""
    if not (0.0 < sigma < kappa):
        raise ValueError("need 0 < sigma < kappa")
    A = pair_angular_factor(v_j, v_l, projected)
    val = alpha * math.log(kappa / sigma) * A
    return float(val[0]) if np.ndim(v_j) == 1 and np.ndim(v_l) == 1 else val


# ---------------------------------------------------------------------------
# Off-diagonal overlaps
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OverlapMatrix:
    t: float
    sigma: float
    entries: np.ndarray  # (N, N) complex
    masses: np.ndarray
    rho_elec: float = 0.0

    @property
    def diagonal_sum(self) -> float:
        return float(np.real(np.trace(self.entries)))

    def offdiag_max(self) -> float:
        off = self.entries - np.diag(np.diag(self.entries))
        return float(np.max(np.abs(off))) if off.size else 0.0

    def is_hermitian(self, tol: float = 0.0) -> bool:
        return bool(np.max(np.abs(self.entries - self.entries.conj().T)) <= tol)


def _cell_phases(v, sigma, schedule, t, alpha):
    # gamma_sigma(v_j, u, t) evaluated with u = v_j (cell-center velocity)
    S = min(float(t), schedule.freeze_time(sigma))
    if S <= 1.0:
        return np.zeros(len(v))
    return gamma_difference_batch(v, None, v, sigma, schedule.theta, S, alpha)


def offdiag_overlap(t: float, partition: CellPartition, schedule: CutoffSchedule,
                    dispersion: DispersionModel, alpha: float = 1.0 / 137.0,
                    rho_elec: float = 0.0, sigma: float | None = None,
                    projected: bool = True) -> OverlapMatrix:
    """M_{l,j} = rho_elec min(m_l, m_j) e^{-C_{l,j}/2} e^{i(gamma_l - gamma_j)}, M_{j,j} = m_j.

    ``rho_elec`` is a synthetic electron cross-overlap (diagnostic only: real
    cells have disjoint momentum supports, so the physical value is 0).
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    if not 0.0 <= rho_elec <= 1.0:
        raise ValueError("rho_elec must lie in [0, 1]")
    sig = float(schedule.sigma(t)) if sigma is None else float(sigma)
    m = partition.masses
    N = m.size
    M = np.diag(m).astype(complex)
    if rho_elec > 0.0 and N > 1:
        v = partition.velocities(dispersion, sig)
        gam = _cell_phases(v, sig, schedule, t, alpha)
        il, ij = np.triu_indices(N, 1)
        C = c_suppression(v[il], v[ij], sig, schedule.kappa, alpha, projected)
        val = (rho_elec * np.minimum(m[il], m[ij]) * np.exp(-0.5 * C)
               * np.exp(1j * (gam[il] - gam[ij])))
        M[il, ij] = val
        M[ij, il] = np.conj(val)
    return OverlapMatrix(float(t), sig, M, m.copy(), float(rho_elec))


def offdiag_sigma_sweep(partition: CellPartition, schedule: CutoffSchedule,
                        dispersion: DispersionModel, sigmas, pair=(0, -1),
                        alpha: float = 1.0 / 137.0, projected: bool = True) -> FitResult:
    """|M_{l,j}| against sigma at fixed partition (rho_elec = 1); the slope is alpha A / 2."""
    sigmas = np.asarray(sigmas, float)
    l, j = pair
    vals, diag = [], []
    for s in sigmas:
        M = offdiag_overlap(partition.t, partition, schedule, dispersion, alpha, 1.0, s, projected)
        vals.append(abs(M.entries[l, j]))
        diag.append(M.diagonal_sum)
    fit = loglog_fit(sigmas, np.array(vals))
    fit.extra["diagonal_sums"] = diag
    v = partition.velocities(dispersion)
    A = float(pair_angular_factor(v[l], v[j], projected)[0])
    fit.extra.update(predicted=alpha * A / 2.0, angular_factor=A)
    return fit


# ---------------------------------------------------------------------------
# Refinement step
# ---------------------------------------------------------------------------

@dataclass
class RefinementRecord:
    t1: float
    t2: float
    n1: int
    n2: int
    weighted_sum: float
    max_D: float
    max_dgamma: float
    max_C: float


def refinement_diagonal_bound(t1: float, t2: float, h: WavePacket, schedule: CutoffSchedule,
                              dispersion: DispersionModel, alpha: float = 1.0 / 137.0,
                              n_samples: int = 3, projected: bool = True,
                              chunk: int = 4096) -> RefinementRecord:
    """sum_j sum_{l(j)} mass_l sup_P |2 - 2 cos(dgamma) e^{-C_{l(j),j}/2}|.

    v_j is the parent-cell velocity at sigma_{t1}, v_l the child-cell velocity
    at sigma_{t2}; the phase difference is taken at the freezing time
    sigma_{t2}^{-1/theta}, and P runs over n_samples^3 points of each child cell.
    """
    if not (t2 > t1 >= 2):
        raise ValueError("need t2 > t1 >= 2")
    s1, s2 = float(schedule.sigma(t1)), float(schedule.sigma(t2))
    parent = build_partition(h, t1, schedule)
    ref = refine(parent, t2)
    child = ref.child
    vj = parent.velocities(dispersion, s1)[ref.parent_of]
    vl = child.velocities(dispersion, s2)
    C = c_suppression(vj, vl, s2, schedule.kappa, alpha, projected)
    C = np.atleast_1d(C)
    S = schedule.freeze_time(s2)
    pts = child.sample_points(n_samples)  # (Nc, q, 3)
    q = pts.shape[1]
    D = np.empty(child.N)
    dg_max = 0.0
    for a in range(0, child.N, max(1, chunk // q)):
        b = min(child.N, a + max(1, chunk // q))
        u = grad_energy(dispersion, pts[a:b].reshape(-1, 3), s2)
        dg = gamma_difference_batch(np.repeat(vl[a:b], q, axis=0), np.repeat(vj[a:b], q, axis=0),
                                    u, s2, schedule.theta, S, alpha).reshape(b - a, q)
        dg_max = max(dg_max, float(np.max(np.abs(dg))))
        vals = np.abs(2.0 - 2.0 * np.cos(dg) * np.exp(-0.5 * C[a:b, None]))
        D[a:b] = vals.max(axis=1)
    return RefinementRecord(float(t1), float(t2), parent.n, child.n,
                            float(np.sum(child.masses * D)), float(D.max()), dg_max, float(C.max()))


@dataclass
class RefinementSweep:
    records: list
    eta_prime: float
    strictly_decreasing: bool
    bounded: bool
    fit: FitResult = field(repr=False, default=None)


def refinement_sweep(t1_values, ratio: float, h: WavePacket, schedule: CutoffSchedule,
                     dispersion: DispersionModel, alpha: float = 1.0 / 137.0,
                     **kw) -> RefinementSweep:
    """Weighted sums at fixed t2/t1 and the fit sum / ln t2 ~ t1^{-eta'}."""
    recs = [refinement_diagonal_bound(t, ratio * t, h, schedule, dispersion, alpha, **kw)
            for t in t1_values]
    sums = np.array([r.weighted_sum for r in recs])
    t1 = np.array([r.t1 for r in recs])
    ln_t2 = np.log(np.array([r.t2 for r in recs]))
    fit = loglog_fit(t1, sums / ln_t2, min_points=2)
    eta = -fit.slope
    bounded = bool(np.all(sums <= ln_t2 / t1**eta * (1.0 + 1e-12)))
    return RefinementSweep(recs, float(eta), bool(np.all(np.diff(sums) < 0)), bounded, fit)


# ---------------------------------------------------------------------------
# Asymptotic Weyl expectation
# ---------------------------------------------------------------------------

@dataclass
class AsymptoticExpectation:
    value: complex
    modulus_prediction: float
    C_G: float
    method: str
    # int |integrand| d^3P; equals modulus_prediction when every rho_u is imaginary
    integrand_modulus: float = math.nan


def _packet_rule(h: WavePacket, n: int):
    pts, w = h.quadrature(n)
    return pts, w * h(pts) ** 2


def asymptotic_expectation(G: CoherentAmplitude, h: WavePacket, kappa: float,
                           dispersion: DispersionModel, alpha: float = 1.0 / 137.0,
                           method: str = "closed_form", n_packet: int = 6,
                           chunk: int = 16) -> AsymptoticExpectation:
    """int e^{-|G|^2/2} e^{rho_{grad E_P}(G)} |h(P)|^2 d^3P.

    ``closed_form`` evaluates rho_u(G) = 2i Re(sum_lambda int_{B_kappa} G f_u)
    directly; ``direct`` builds the dressed coherent state of each P and takes
    the expectation of the Weyl operator through the coherent algebra.
    """
    grid = G.grid
    pts, wts = _packet_rule(h, n_packet)
    U = grad_energy(dispersion, pts)
    CG = G.norm2()
    norm_h = float(np.sum(wts))
    if method == "closed_form":
        inside = grid.kabs < kappa
        kh = grid.khat[inside]
        ew = grid.eps[:, inside, :]
        Gw = G.values[:, inside] * grid.weights[inside][None, :]
        pref = math.sqrt(alpha) / grid.kabs[inside] ** 1.5
        rho = np.empty(len(U))
        for a in range(0, len(U), chunk):
            u = U[a:a + chunk]
            delta = 1.0 - u @ kh.T  # (m, q)
            s = np.zeros(len(u), dtype=complex)
            for lam in range(2):
                s += ((u @ ew[lam].T) * pref / delta) @ Gw[lam]
            rho[a:a + chunk] = 2.0 * s.real
        terms = wts * np.exp(-0.5 * CG + 1j * rho)
        value = complex(np.sum(terms))
        modulus = float(np.sum(np.abs(terms)))
    elif method == "direct":
        chi = CoherentAmplitude(grid, -1j * G.values)
        terms = np.empty(len(U), dtype=complex)
        for i, (u, w) in enumerate(zip(U, wts)):
            beta = -bn_amplitude(u, grid, alpha, kappa=kappa)
            dressed = displace(vacuum(grid), beta)
            terms[i] = w * state_overlap(dressed, displace(dressed, chi))
        value = complex(np.sum(terms))
        modulus = float(np.sum(np.abs(terms)))
    else:
        raise ValueError(f"unknown method {method!r}")
    return AsymptoticExpectation(value, math.exp(-0.5 * CG) * norm_h, CG, method, modulus)
