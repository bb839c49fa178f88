import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from infraparticle.dispersion import (DispersionModel, MomentumOutOfRange, WavePacket, default_wavepacket,
                                      energy, grad_energy, velocity_factor)
from infraparticle.grid import build_grid

FREE = DispersionModel()
HEAVY = DispersionModel("renormalized_mass", m_ren=1.1)


def test_energy_values():
    assert energy(FREE, np.zeros(3)) == 0.0
    assert abs(energy(FREE, [0.3, 0, 0]) - 0.045) < 1e-16
    assert abs(energy(HEAVY, [0.3, 0, 0]) - 0.09 / 2.2) < 1e-16


def test_gradient_values():
    np.testing.assert_allclose(grad_energy(FREE, [0.2, 0, 0]), [0.2, 0, 0], atol=1e-16)
    np.testing.assert_allclose(grad_energy(HEAVY, [0.22, 0, 0]), [0.2, 0, 0], atol=1e-15)


def test_out_of_range():
    with pytest.raises(MomentumOutOfRange):
        energy(FREE, [0.4, 0, 0])
    with pytest.raises(MomentumOutOfRange):
        grad_energy(FREE, [0.0, 0.0, 1.0 / 3.0])


def test_invalid_models():
    with pytest.raises(ValueError):
        DispersionModel("other")
    with pytest.raises(ValueError):
        DispersionModel("renormalized_mass", m_ren=0.9)
    with pytest.raises(ValueError):
        DispersionModel(nu_min=0.5, nu_max=0.4)


@pytest.mark.parametrize("model", [FREE, HEAVY, DispersionModel(sigma_dependence=True)])
def test_gradient_finite_differences(model):
    rng = np.random.default_rng(7)
    P = rng.uniform(-0.18, 0.18, size=(100, 3))
    h = 1e-6
    fd = np.stack([(energy(model, P + h * e, 1e-2) - energy(model, P - h * e, 1e-2)) / (2 * h)
                   for e in np.eye(3)], axis=-1)
    assert np.abs(fd - grad_energy(model, P, 1e-2)).max() < 1e-9


def test_rotation_invariance():
    rng = np.random.default_rng(3)
    P = rng.uniform(-0.18, 0.18, size=(50, 3))
    R = Rotation.random(50, random_state=4).as_matrix()
    RP = np.einsum("nij,nj->ni", R, P)
    assert np.abs(energy(HEAVY, RP) - energy(HEAVY, P)).max() < 1e-14


def test_sigma_dependence_scale():
    m = DispersionModel(sigma_dependence=True, sigma_c=0.05)
    assert abs(m.scale(1e-4) - 1.0005) < 1e-15
    assert FREE.scale(1e-4) == 1.0
    assert m.r_alpha == 0.05


def test_wavepacket_support_and_velocity_bound():
    h = default_wavepacket(FREE.r_alpha)
    assert h.support_inside(FREE.r_alpha)
    rng = np.random.default_rng(0)
    P = rng.uniform(h.lower, h.upper, size=(100_000, 3))
    r = np.linalg.norm(P, axis=1)
    assert r.min() > FREE.r_alpha and r.max() < 1.0 / 3.0
    speed = np.linalg.norm(grad_energy(FREE, P), axis=1)
    assert speed.max() <= FREE.nu_max < 1


def test_delta_positivity():
    h = default_wavepacket()
    g = build_grid(0.1, 1.0, 2, 16, 32)
    pts, _ = h.quadrature(4)
    d = velocity_factor(grad_energy(FREE, pts), g.khat)
    assert d.min() >= 1 - FREE.nu_max > 0


def test_wavepacket_norm_and_boundary():
    h = default_wavepacket()
    assert abs(h.norm2 / h.norm2_exact() - 1) < 1e-13
    assert abs(h.mass(n=12) - h.mass(n=6)) < 1e-8 * h.norm2
    # value and gradient vanish on the boundary faces
    face = np.array([h.lower[0], h.center[1] + 0.01, h.center[2] - 0.02])
    assert h(face) == 0.0
    np.testing.assert_allclose(h.gradient(face), 0.0, atol=1e-15)
    np.testing.assert_allclose(h.gradient(h.center), 0.0, atol=1e-15)


def test_wavepacket_gradient_fd():
    h = default_wavepacket()
    P = np.asarray(h.center) + np.array([0.01, -0.02, 0.015])
    eps = 1e-7
    fd = np.array([(h(P + eps * e) - h(P - eps * e)) / (2 * eps) for e in np.eye(3)])
    np.testing.assert_allclose(h.gradient(P), fd, rtol=1e-6)


def test_default_wavepacket_rejects():
    with pytest.raises(ValueError):
        default_wavepacket(0.5)


def test_velocity_factor_range():
    g = build_grid(0.1, 1.0, 2, 8, 8)
    d = velocity_factor([0.3, 0.0, 0.0], g.khat)
    assert d.min() >= 0.7 - 1e-15 and d.max() <= 1.3 + 1e-15


def test_wavepacket_dataclass():
    h = WavePacket((0.2, 0.0, 0.0), 0.1)
    assert abs(h.diameter - np.sqrt(3) * 0.1) < 1e-16
