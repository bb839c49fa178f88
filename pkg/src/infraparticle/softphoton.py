"""
Infrared machinery for the soft-photon cloud.

The central object is the oscillatory shell integral

    I(x, s) = int_{lo < |k| < hi} Sigma_v(k) cos(k.x - |k| s) d^3k ,

with Sigma_v(k) = Sigma_hat_v(khat) / |k|^2.  Because of the 1/|k|^2 the
radial integral is elementary,

    int_lo^hi cos(k a) dk = (sin(hi a) - sin(lo a)) / a ,   a = khat.x - s ,

so only the angular integral is done numerically, in a frame whose polar axis
is x.  Away from the light cone (s >= 1.5 |x|) the angular integral reduces to
Legendre moments int P_n(c) e^{iwc} dc = 2 i^n j_n(w); near and inside the
cone a composite Gauss-Legendre rule resolving the kernel oscillation is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

__all__ = [
    "CutoffSchedule",
    "PhaseSpec",
    "ShellRay",
    "FitResult",
    "QuadratureError",
    "DegenerateFitError",
    "sigma_field",
    "sigma_hat",
    "axial_sigma_profile",
    "shell_cosine_integral",
    "deterministic_directions",
    "loglog_fit",
    "decay_fit_A3",
    "decay_fit_A4",
    "gamma_phase",
    "gamma_difference",
    "gamma_difference_batch",
    "gamma_velocity_lipschitz",
    "gamma_cutoff_shift",
    "infrared_tail_scalar",
    "tail_derivative",
    "mu_ode_solve",
]


class QuadratureError(RuntimeError):
    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class DegenerateFitError(ValueError):
    pass


@dataclass(frozen=True)
class CutoffSchedule:
    beta: float = 1.5
    theta: float = 0.8
    epsilon: float = 1.0 / 3.0
    kappa: float = 1.0
    Lambda: float = 1.0

    def __post_init__(self):
        if not (self.beta > 1.0 > self.theta > 0.0):
            raise ValueError("need beta > 1 > theta > 0")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not (0.0 < self.kappa <= self.Lambda):
            raise ValueError("need 0 < kappa <= Lambda")

    def sigma(self, t):
        """Fast infrared cutoff sigma_t = t^-beta."""
        return np.asarray(t, float) ** (-self.beta) if np.ndim(t) else float(t) ** (-self.beta)

    def sigma_slow(self, s):
        """Slow cutoff sigma_s^S = s^-theta."""
        return np.asarray(s, float) ** (-self.theta) if np.ndim(s) else float(s) ** (-self.theta)

    def freeze_time(self, sigma: float) -> float:
        """Time sigma^{-1/theta} after which the dressing phase is frozen."""
        return float(sigma) ** (-1.0 / self.theta)


@dataclass(frozen=True)
class PhaseSpec:
    v_j: tuple
    gradE: tuple
    t: float
    schedule: CutoffSchedule = field(default_factory=CutoffSchedule)
    alpha: float = 1.0 / 137.0
    sigma: float | None = None  # overrides t^-beta when given

    def __post_init__(self):
        if np.linalg.norm(self.v_j) >= 1 or np.linalg.norm(self.gradE) >= 1:
            raise ValueError("velocities must satisfy |v| < 1")

    @property
    def sigma_t(self) -> float:
        return self.sigma if self.sigma is not None else float(self.schedule.sigma(self.t))


# ---------------------------------------------------------------------------
# Sigma field
# ---------------------------------------------------------------------------

def sigma_hat(v, khat):
    """|k|^2 Sigma_v(k) = 2 (v - (v.khat) khat) / (1 - v.khat); khat of shape (..., 3)."""
    v = np.asarray(v, float)
    khat = np.asarray(khat, float)
    vk = khat @ v
    return 2.0 * (v - vk[..., None] * khat) / (1.0 - vk)[..., None]


def sigma_field(v, k):
    k = np.asarray(k, float)
    kk = np.sum(k * k, axis=-1)
    if np.any(kk == 0.0):
        raise ValueError("Sigma_v(k) is singular at k = 0")
    if np.linalg.norm(v) >= 1:
        raise ValueError("|v| must be < 1")
    kn = np.sqrt(kk)
    return sigma_hat(v, k / kn[..., None]) / kk[..., None]


def _frame(axis):
    """Orthonormal (e1, e2, e3) with e3 along ``axis`` (e3 = z for the zero vector)."""
    axis = np.asarray(axis, float)
    n = np.linalg.norm(axis)
    e3 = np.array([0.0, 0.0, 1.0]) if n == 0 else axis / n
    a = np.array([1.0, 0.0, 0.0]) if abs(e3[2]) > 0.9 else np.array([0.0, 0.0, 1.0])
    e1 = np.cross(a, e3)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(e3, e1)
    return e1, e2, e3


def axial_sigma_profile(v, axis, c):
    """Closed form of int_0^{2pi} axis.Sigma_hat_v dphi about ``axis``.

    4 pi [c + (v_z - c) / sqrt((1 - v_z c)^2 - v_perp^2 (1 - c^2))].
    Accepts v of shape (3,) or (m, 3) (then c broadcasts against a new last axis).
    """
    v = np.asarray(v, float)
    axis = np.asarray(axis, float)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    vz = np.sum(v * axis, axis=-1)
    vp2 = np.sum(v * v, axis=-1) - vz**2
    if v.ndim == 2:
        vz = vz[:, None]
        vp2 = vp2[:, None]
    c = np.asarray(c, float)
    root = np.sqrt((1.0 - vz * c) ** 2 - vp2 * (1.0 - c * c))
    return 4.0 * np.pi * (c + (vz - c) / root)


# ---------------------------------------------------------------------------
# Oscillatory shell integral
# ---------------------------------------------------------------------------

_STATIONARY_SWITCH = 1.5
_TAYLOR_RADIUS = 1e-3


def _legendre_projection(n):
    """Nodes, weights and the matrix mapping nodal values to Legendre coefficients."""
    x, w = np.polynomial.legendre.leggauss(n)
    V = np.polynomial.legendre.legvander(x, n - 1)  # (n, n)
    scale = (2.0 * np.arange(n) + 1.0) / 2.0
    return x, w, (V * w[:, None]).T * scale[:, None]


def _bessel_moments(n, z):
    """int_{-1}^{1} P_k(c) e^{i z c} dc = 2 i^k j_k(z) for k < n; shape (len(z), n)."""
    k = np.arange(n)
    return 2.0 * (1j ** (k % 4))[None, :] * special.spherical_jn(k[None, :], np.asarray(z)[:, None])


class ShellRay:
    """Angular data of Sigma_hat for one direction of x.

    ``velocities`` / ``coefficients`` let the ray represent a linear
    combination sum_i c_i Sigma_hat_{v_i} (used for phase differences).
    """

    def __init__(self, velocities, xhat, n_polar: int = 32, n_azimuth: int = 32,
                 coefficients: Sequence[float] | None = None):
        vel = np.atleast_2d(np.asarray(velocities, float))
        coef = np.ones(len(vel)) if coefficients is None else np.asarray(coefficients, float)
        self.velocities = vel
        self.coefficients = coef
        self.xhat = np.asarray(xhat, float)
        self.frame = _frame(self.xhat)
        self.n_polar = int(n_polar)
        self.n_azimuth = int(n_azimuth)
        self.n_h = max(2 * self.n_polar, 64)
        self._hx, _, self._hproj = _legendre_projection(self.n_h)
        self._g_h = self.g(self._hx)
        self._gx, _, self._gproj = _legendre_projection(self.n_polar)
        self._g_nodes = self.g(self._gx)
        self._g_coef = self._gproj @ self._g_nodes  # (n_polar, 3)
        leg = np.polynomial.legendre
        self._g_der = [leg.legder(self._g_coef, m) for m in (1, 2, 3)]
        self.is_zero = not np.any(self._g_h)

    def g(self, c):
        """int_0^{2pi} Sigma_hat(khat(c, phi)) dphi, lab components, shape (len(c), 3)."""
        c = np.asarray(c, float)
        e1, e2, e3 = self.frame
        phi = 2.0 * np.pi * np.arange(self.n_azimuth) / self.n_azimuth
        st = np.sqrt(np.clip(1.0 - c * c, 0.0, None))
        kh = (st[:, None, None] * (np.cos(phi)[None, :, None] * e1 + np.sin(phi)[None, :, None] * e2)
              + c[:, None, None] * e3)
        out = np.zeros((c.size, 3))
        for ci, v in zip(self.coefficients, self.velocities):
            if ci == 0.0 or not np.any(v):
                continue
            out += ci * sigma_hat(v, kh).sum(axis=1) * (2.0 * np.pi / self.n_azimuth)
        return out

    def g_series(self, c):
        return np.polynomial.legendre.legval(np.asarray(c, float), self._g_coef).T

    def _far(self, X, s, lo, hi):
        # c0 = s/X >= 1.5: 1/(Xc - s) is smooth on [-1, 1], expand it with g
        d = X[:, None] * self._hx[None, :] - s
        hn = np.matmul(self._hproj, self._g_h[None, :, :] / d[:, :, None])
        # drop the negligible tail of the geometrically decaying series
        mag = np.abs(hn).max(axis=(0, 2))
        keep = np.flatnonzero(mag > 1e-17 * mag.max())
        nk = keep[-1] + 1 if keep.size else 1
        hn = hn[:, :nk]
        total = np.zeros((X.size, 3))
        for w, sign in ((hi, 1.0), (lo, -1.0)):
            if w == 0.0:
                continue
            mom = _bessel_moments(nk, w * X)
            total += sign * np.imag(np.exp(-1j * w * s) * np.matmul(mom[:, None, :], hn)[:, 0, :])
        return total

    def _near(self, X, s, lo, hi):
        # subtract the pole: g(c) = g(c0) + (c - c0) q(c) with q a polynomial;
        # the g(c0) part integrates to sine integrals, q to Bessel moments
        c0 = s / X
        leg = np.polynomial.legendre
        gc0 = leg.legval(c0, self._g_coef).T  # (f, 3)
        dc = self._gx[None, :] - c0[:, None]
        small = np.abs(dc) < _TAYLOR_RADIUS
        safe = np.where(small, 1.0, dc)
        q = (self._g_nodes[None, :, :] - gc0[:, None, :]) / safe[:, :, None]
        if np.any(small):
            d1, d2, d3 = (leg.legval(c0, c).T for c in self._g_der)
            taylor = (d1[:, None, :] + d2[:, None, :] * dc[:, :, None] / 2.0
                      + d3[:, None, :] * dc[:, :, None] ** 2 / 6.0)
            q = np.where(small[:, :, None], taylor, q)
        qn = np.matmul(self._gproj, q) / X[:, None, None]
        total = np.zeros((X.size, 3))
        for w, sign in ((hi, 1.0), (lo, -1.0)):
            if w == 0.0:
                continue
            mom = _bessel_moments(self.n_polar, w * X)
            smooth = np.imag(np.exp(-1j * w * s) * np.matmul(mom[:, None, :], qn)[:, 0, :])
            si = special.sici(w * (X - s))[0] + special.sici(w * (X + s))[0]
            total += sign * (smooth + gc0 * (si / X)[:, None])
        return total

    def integral(self, X, s, lo, hi):
        """Shell integral at x = X xhat for an array of radii X >= 0; shape (len(X), 3).

        The radial integral gives int_{-1}^{1} g(c) [sin(hi a) - sin(lo a)] / a dc
        with a = X c - s, evaluated exactly for the Legendre representation of g.
        """
        X = np.atleast_1d(np.asarray(X, float))
        out = np.zeros((X.size, 3))
        if self.is_zero:
            return out
        origin = X == 0.0
        if np.any(origin):
            out[origin] = 2.0 * self._g_coef[0] * (math.sin(hi * s) - math.sin(lo * s)) / s
        far = ~origin & (X * _STATIONARY_SWITCH <= s)
        near = ~origin & ~far
        if np.any(far):
            out[far] = self._far(X[far], s, lo, hi)
        if np.any(near):
            out[near] = self._near(X[near], s, lo, hi)
        return out


def shell_cosine_integral(v, x, s: float, lo: float, hi: float,
                          grid_res=(32, 32)):
    """int_{lo<|k|<hi} Sigma_v(k) cos(k.x - |k| s) d^3k as a 3-vector.

    ``grid_res`` = (n_polar, n_azimuth) sets the resolution of the smooth
    angular profile; the oscillatory kernel is always resolved exactly.
    ``ShellRay.integral`` additionally accepts ``lo = 0``.
    """
    if not (0.0 < lo < hi):
        raise ValueError("need 0 < lo < hi")
    if not s > 0:
        raise ValueError("s must be positive")
    x = np.asarray(x, float)
    X = float(np.linalg.norm(x))
    ray = ShellRay(v, x, *grid_res)
    return ray.integral([X], float(s), float(lo), float(hi))[0]


def deterministic_directions(n: int = 16):
    """Fibonacci-sphere unit vectors, fixed for a given n."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = i * np.pi * (3.0 - math.sqrt(5.0))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


# ---------------------------------------------------------------------------
# Log-log fits
# ---------------------------------------------------------------------------

@dataclass
class FitResult:
    x: np.ndarray
    y: np.ndarray
    slope: float
    intercept: float
    r2: float
    degenerate: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def prefactor(self) -> float:
        return math.exp(self.intercept)

    def summary(self) -> dict:
        out = {"slope": self.slope, "intercept": self.intercept, "r2": self.r2,
               "degenerate": self.degenerate}
        out.update(self.extra)
        return out


def loglog_fit(x, y, min_points: int = 4) -> FitResult:
    """Least-squares line through (ln x, ln y)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.size < min_points:
        raise DegenerateFitError(f"need at least {min_points} points, got {x.size}")
    if np.all(y == 0.0):
        return FitResult(x, y, math.nan, math.nan, math.nan, degenerate=True)
    if np.any(y <= 0.0):
        raise DegenerateFitError("log-log fit needs strictly positive values")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return FitResult(x, y, float(slope), float(intercept), float(r2))


def _sup_over_sample(v, s, lo, hi, radii, directions, grid_res):
    best = 0.0
    for d in directions:
        ray = ShellRay(v, d, *grid_res)
        vals = ray.integral(radii, s, lo, hi)
        best = max(best, float(np.max(np.linalg.norm(vals, axis=1))))
    return best


def decay_fit_A3(v, schedule: CutoffSchedule, t: float, s_values, n_radii: int = 64,
                 n_directions: int = 16, grid_res=(32, 32), sigma: float | None = None) -> FitResult:
    """sup_x |shell integral over (sigma_t, kappa)| against s, |x| in [0, 2s]."""
    s_values = np.asarray(s_values, float)
    if s_values.size < 4:
        raise DegenerateFitError("need at least 4 s values")
    if np.any(s_values < t):
        raise ValueError("s values must be >= t")
    sig = float(schedule.sigma(t)) if sigma is None else float(sigma)
    dirs = deterministic_directions(n_directions)
    sups = np.array([_sup_over_sample(v, s, sig, schedule.kappa,
                                      np.linspace(0.0, 2.0 * s, n_radii), dirs, grid_res)
                     for s in s_values])
    fit = loglog_fit(s_values, sups)
    bound = abs(math.log(sig)) / s_values
    fit.extra.update(sigma_t=sig, bound=bound.tolist(), ratio=(sups / bound).tolist())
    return fit


def decay_fit_A4(v, schedule: CutoffSchedule, t: float, s_values, window=(0.1, 1.0 / 3.0),
                 n_radii: int = 64, n_directions: int = 16, grid_res=(32, 32),
                 phase_samples: int = 8) -> FitResult:
    """Same sup restricted to nu_min <= |x|/s <= nu_max, lower cutoff t^-theta.

    At fixed s the windowed sup beats like |A + B e^{2i sigma^S s}| (the two
    end points of the angular integral interfere), so each reported value is
    the sup over x and over ``phase_samples`` times spread across one beat
    period pi / sigma^S starting at s.
    """
    lo_w, hi_w = window
    if not (0.0 < lo_w < hi_w < 1.0):
        raise ValueError("velocity window must lie inside (0, 1)")
    s_values = np.asarray(s_values, float)
    if s_values.size < 4:
        raise DegenerateFitError("need at least 4 s values")
    if np.any(s_values < t):
        raise ValueError("s values must be >= t")
    slow = float(schedule.sigma_slow(t))
    dirs = deterministic_directions(n_directions)
    period = math.pi / slow
    sups = []
    for s in s_values:
        best = 0.0
        for j in range(max(1, int(phase_samples))):
            sj = s + j * period / max(1, int(phase_samples))
            # the dominant term oscillates like cos(sigma^S |x|); keep >= 8 samples per period
            n = max(n_radii, int(math.ceil(4.0 * slow * (hi_w - lo_w) * sj / math.pi)) + 1)
            best = max(best, _sup_over_sample(v, sj, slow, schedule.kappa,
                                              np.linspace(lo_w * sj, hi_w * sj, n), dirs, grid_res))
        sups.append(best)
    sups = np.array(sups)
    fit = loglog_fit(s_values, sups)
    bound = t**schedule.theta / s_values**2
    fit.extra.update(sigma_slow=slow, bound=bound.tolist(), ratio=(sups / bound).tolist())
    return fit


# ---------------------------------------------------------------------------
# Dressing phase
# ---------------------------------------------------------------------------

def _phase_upper(spec: PhaseSpec, s: float) -> float:
    return min(float(s), spec.schedule.freeze_time(spec.sigma_t))


def _gamma_quadrature(velocities, coefficients, u, spec: PhaseSpec, s, grid_res,
                      epsabs=1e-9, limit=2000):
    u = np.asarray(u, float)
    un = np.linalg.norm(u)
    S = _phase_upper(spec, s)
    if un == 0.0 or S <= 1.0:
        return 0.0
    ray = ShellRay(velocities, u, *grid_res, coefficients=coefficients)
    if ray.is_zero:
        return 0.0
    sig, th = spec.sigma_t, spec.schedule.theta

    def integrand(y):
        tau = math.exp(y)
        hi = tau ** (-th)
        if hi <= sig:
            return 0.0
        val = ray.integral([un * tau], tau, sig, hi)[0]
        return tau * float(u @ val)

    # substitution tau = e^y; the integrand decays like a slowly oscillating 1/tau
    val, err, *rest = integrate.quad(integrand, 0.0, math.log(S), epsabs=epsabs / spec.alpha,
                                     epsrel=0.0, limit=limit, full_output=1)
    if len(rest) > 1:
        raise QuadratureError(f"phase quadrature did not converge: {rest[1]}",
                              estimate=-spec.alpha * val, error=spec.alpha * err)
    return -spec.alpha * val


def _radial_sine_kernel(d, sigma, theta, S):
    """int dk/k [sin(T(k) k d) - sin(k d)] over sigma < k < 1, T(k) = min(S, k^{-1/theta})."""
    p = 1.0 / theta - 1.0
    kS = S ** (-theta)
    si = lambda z: special.sici(z)[0]
    si_d = si(d)
    out = (si(kS ** (-p) * d) - si_d) / p - (si_d - si(sigma * d))
    # at or beyond the freezing time kS = sigma and the first bracket vanishes
    if np.any(kS > sigma):
        out = out + np.where(kS > sigma, si(S * kS * d) - si(S * sigma * d), 0.0)
    return out


def gamma_difference_batch(v_a, v_b, u, sigma: float, theta: float, S, alpha: float,
                           n_nodes: int | None = None):
    """gamma(v_a, u, S) - gamma(v_b, u, S) for rows of (m, 3) arrays via the
    time-integrated form.

    Swapping the tau and k integrals gives, exactly,
    gamma = -alpha |u| int_{-1}^{1} g_v(c) R(|u| c - 1) / (|u| c - 1) dc
    with g_v the axial Sigma_hat profile about u and R a combination of sine
    integrals.  ``v_b`` may be None (then the plain phase is returned).
    """
    u = np.atleast_2d(np.asarray(u, float))
    m = u.shape[0]
    v_a = np.broadcast_to(np.atleast_2d(np.asarray(v_a, float)), (m, 3))
    S = np.broadcast_to(np.asarray(S, float), (m,))
    un = np.linalg.norm(u, axis=1)
    out = np.zeros(m)
    live = (un > 0) & (S > 1.0)
    if not np.any(live):
        return out
    if n_nodes is None:
        freq = float(np.max(2.0 * un[live] * np.maximum(S[live] ** (1.0 - theta), S[live] * sigma)))
        n_nodes = 32 + int(math.ceil(freq))
    c, w = np.polynomial.legendre.leggauss(n_nodes)
    ul, Sl = un[live], S[live]
    d = ul[:, None] * c[None, :] - 1.0
    R = _radial_sine_kernel(d, sigma, theta, Sl[:, None])
    g = axial_sigma_profile(v_a[live], u[live], c)
    if v_b is not None:
        vb = np.broadcast_to(np.atleast_2d(np.asarray(v_b, float)), (m, 3))
        g = g - axial_sigma_profile(vb[live], u[live], c)
    out[live] = -alpha * ul * np.sum(w[None, :] * g * R / d, axis=1)
    return out


def gamma_phase(spec: PhaseSpec, s: float, method: str = "quadrature",
                grid_res=(32, 32)) -> float:
    """Dressing phase gamma_{sigma_t}(v_j, gradE, s), frozen beyond sigma_t^{-1/theta}.

    ``method="quadrature"`` integrates the shell integral over tau with
    adaptive Gauss-Kronrod; ``method="sine_integral"`` uses the exact
    time-integrated form.
    """
    if s < 1:
        raise ValueError("s must be >= 1")
    if method == "quadrature":
        return _gamma_quadrature([spec.v_j], None, spec.gradE, spec, s, grid_res)
    if method == "sine_integral":
        S = _phase_upper(spec, s)
        return float(gamma_difference_batch(spec.v_j, None, spec.gradE, spec.sigma_t,
                                            spec.schedule.theta, S, spec.alpha)[0])
    raise ValueError(f"unknown method {method!r}")


def gamma_difference(spec: PhaseSpec, v_other, s: float, method: str = "quadrature",
                     grid_res=(32, 32)) -> float:
    """gamma(v_other, gradE, s) - gamma(v_j, gradE, s) without cancellation."""
    if method == "quadrature":
        return _gamma_quadrature([v_other, spec.v_j], [1.0, -1.0], spec.gradE, spec, s, grid_res)
    if method == "sine_integral":
        S = _phase_upper(spec, s)
        return float(gamma_difference_batch(v_other, spec.v_j, spec.gradE, spec.sigma_t,
                                            spec.schedule.theta, S, spec.alpha)[0])
    raise ValueError(f"unknown method {method!r}")


def gamma_velocity_lipschitz(spec: PhaseSpec, v_j, v_l, method: str = "quadrature") -> float:
    """|Delta gamma| / |v_j - v_l| at the freezing time sigma_t^{-1/theta}."""
    v_j = np.asarray(v_j, float)
    v_l = np.asarray(v_l, float)
    dv = float(np.linalg.norm(v_j - v_l))
    if dv == 0.0:
        return 0.0
    base = PhaseSpec(tuple(v_j), spec.gradE, spec.t, spec.schedule, spec.alpha, spec.sigma)
    s = spec.schedule.freeze_time(base.sigma_t)
    return abs(gamma_difference(base, v_l, s, method)) / dv


@dataclass
class CutoffShiftRecord:
    t1: float
    t2: float
    measured: float
    bound: float

    @property
    def ratio(self) -> float:
        return self.measured / self.bound if self.bound > 0 else math.inf


def gamma_cutoff_shift(v_j, P, dispersion, schedule: CutoffSchedule, t1: float, t2: float,
                       delta: float = 0.1, alpha: float = 1.0 / 137.0,
                       method: str = "sine_integral", bound_constant: float = 1.0) -> CutoffShiftRecord:
    """|gamma_{sigma_t2}(v_j, gradE^{sigma_t2}, t1) - gamma_{sigma_t1}(v_j, gradE^{sigma_t1}, t1)|
    against sigma_t1^{(1-delta)/2} t1^{1-theta} + t1 sigma_t1."""
    from .dispersion import grad_energy

    if t2 < t1:
        raise ValueError("need t2 >= t1")
    s1, s2 = float(schedule.sigma(t1)), float(schedule.sigma(t2))
    bound = bound_constant * (s1 ** (0.5 * (1 - delta)) * t1 ** (1 - schedule.theta) + t1 * s1)
    if t2 == t1:
        return CutoffShiftRecord(t1, t2, 0.0, bound)
    g2 = PhaseSpec(tuple(v_j), tuple(grad_energy(dispersion, P, s2)), t1, schedule, alpha, s2)
    g1 = PhaseSpec(tuple(v_j), tuple(grad_energy(dispersion, P, s1)), t1, schedule, alpha, s1)
    diff = gamma_phase(g2, t1, method) - gamma_phase(g1, t1, method)
    return CutoffShiftRecord(t1, t2, abs(diff), bound)


# ---------------------------------------------------------------------------
# Infrared tail
# ---------------------------------------------------------------------------

def infrared_tail_scalar(v, gradE, s: float, schedule: CutoffSchedule, t: float,
                         grid_res=(32, 32), sigma: float | None = None):
    """int_{sigma_t < |k| < s^-theta} Sigma_v(k) cos(k.gradE s - |k| s) d^3k (zero once the shell is empty)."""
    if s < t:
        raise ValueError("need s >= t")
    sig = float(schedule.sigma(t)) if sigma is None else float(sigma)
    hi = float(schedule.sigma_slow(s))
    if hi < sig:
        return np.zeros(3)
    return shell_cosine_integral(v, np.asarray(gradE, float) * s, s, sig, hi, grid_res)


def tail_derivative(v, gradE, s: float, schedule: CutoffSchedule, t: float,
                    rel_step: float = 1e-4, grid_res=(32, 32)):
    """Central difference d/ds of the infrared tail with step s * rel_step."""
    h = s * rel_step
    lo = max(s - h, t)
    hi = s + h
    f1 = infrared_tail_scalar(v, gradE, hi, schedule, t, grid_res)
    f0 = infrared_tail_scalar(v, gradE, lo, schedule, t, grid_res)
    return (f1 - f0) / (hi - lo)


# ---------------------------------------------------------------------------
# mu-ODE for off-diagonal overlaps
# ---------------------------------------------------------------------------

@dataclass
class MuODESolution:
    rk4: complex
    closed_form: complex
    steps: int


def _rk4_step(f, mu, M, h):
    k1 = f(mu, M)
    k2 = f(mu + h / 2, M + h / 2 * k1)
    k3 = f(mu + h / 2, M + h / 2 * k2)
    k4 = f(mu + h, M + h * k3)
    return M + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def mu_ode_solve(C: float, r: Callable[[float], complex], M0: complex, mu_end: float,
                 tol: float = 1e-12, max_steps: int = 100000) -> MuODESolution:
    """dM/dmu = -mu C M + r(mu), M(0) = M0; RK4 with step doubling plus the closed form."""
    if C < 0:
        raise ValueError("C must be non-negative")
    f = lambda mu, M: -mu * C * M + complex(r(mu))
    mu, M = 0.0, complex(M0)
    h = mu_end / 16 if mu_end != 0 else 0.0
    steps = 0
    while abs(mu_end - mu) > 1e-15 * max(1.0, abs(mu_end)):
        if steps > max_steps:
            raise QuadratureError("mu-ODE step control failed", estimate=M)
        h = math.copysign(min(abs(h), abs(mu_end - mu)), mu_end)
        full = _rk4_step(f, mu, M, h)
        half = _rk4_step(f, mu + h / 2, _rk4_step(f, mu, M, h / 2), h / 2)
        err = abs(half - full) / 15.0
        if err <= tol or abs(h) < 1e-10:
            mu += h
            M = half + (half - full) / 15.0
            steps += 1
            if err < tol / 64:
                h *= 2.0
        else:
            h *= 0.5
    decay = lambda m1: math.exp(-0.5 * C * (mu_end**2 - m1**2))
    re, _ = integrate.quad(lambda m1: (complex(r(m1)) * decay(m1)).real, 0.0, mu_end,
                           epsabs=1e-14, epsrel=1e-13, limit=200)
    im, _ = integrate.quad(lambda m1: (complex(r(m1)) * decay(m1)).imag, 0.0, mu_end,
                           epsabs=1e-14, epsrel=1e-13, limit=200)
    closed = math.exp(-0.5 * C * mu_end**2) * complex(M0) + complex(re, im)
    return MuODESolution(M, closed, steps)
