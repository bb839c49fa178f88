import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infraparticle.dispersion import DispersionModel, default_wavepacket
from infraparticle.partition import build_partition, partition_level, refine
from infraparticle.softphoton import CutoffSchedule

H = default_wavepacket()
SCH = CutoffSchedule()


def test_level_examples():
    assert partition_level(2.0, 1.0) == 1
    assert partition_level(2.0**10, 0.1) == 1
    assert partition_level(1.0, 1 / 3) == 0
    with pytest.raises(ValueError):
        partition_level(0.5, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1.0, 1e12), st.floats(0.05, 2.0))
def test_level_bracket(t, eps):
    n = partition_level(t, eps)
    assert (2.0**n) ** (1 / eps) <= t * (1 + 1e-9)
    assert t < (2.0 ** (n + 1)) ** (1 / eps)


def test_level_monotone():
    ts = np.logspace(0, 8, 200)
    n = [partition_level(t, 1 / 3) for t in ts]
    assert np.all(np.diff(n) >= 0)


def test_example_cell_count():
    p = build_partition(H, 2.0, CutoffSchedule(epsilon=1.0))
    assert p.n == 1 and p.N == 8
    assert abs(p.cell_side - H.side / 2) < 1e-17


@pytest.mark.parametrize("t", [1.0, 10.0, 100.0, 1e3, 1e4])
def test_mass_conservation_and_geometry(t):
    p = build_partition(H, t, SCH)
    assert p.N == 2 ** (3 * p.n)
    assert abs(p.total_mass() / H.norm2_exact() - 1) < 1e-8
    # N(t) ~ t^{3 eps} within one dyadic step
    assert t ** (3 * SCH.epsilon) / 8 <= p.N <= t ** (3 * SCH.epsilon) * (1 + 1e-9)
    r = np.linalg.norm(p.centers, axis=1)
    assert r.min() > DispersionModel().r_alpha and r.max() < 1 / 3
    assert np.all(p.centers >= H.lower) and np.all(p.centers <= H.upper)


def test_cells_disjoint_and_tiling():
    p = build_partition(H, 1e3, SCH)
    idx = {tuple(i) for i in p.index}
    assert len(idx) == p.N
    vol = p.N * p.cell_side**3
    assert abs(vol / H.side**3 - 1) < 1e-12


def test_refine_eight_children():
    parent = build_partition(H, 10.0, SCH)  # n = 1
    ref = refine(parent, 100.0)  # n = 2
    assert ref.child.n == parent.n + 1
    assert all(ref.children_of(j).size == 8 for j in range(parent.N))
    lo, hi = parent.lower[ref.parent_of], parent.upper[ref.parent_of]
    assert np.all(ref.child.lower >= lo - 1e-15) and np.all(ref.child.upper <= hi + 1e-15)


def test_refine_mass_split():
    parent = build_partition(H, 10.0, SCH)
    ref = refine(parent, 1e4)
    np.testing.assert_allclose(ref.child_mass_by_parent(), parent.masses, rtol=1e-10)


def test_refine_velocity_jump():
    parent = build_partition(H, 100.0, SCH)
    ref = refine(parent, 1e4)
    # free dispersion: v = P, the child centre lies within half a parent diagonal
    assert ref.max_velocity_jump(DispersionModel()) <= math.sqrt(3) / 2 * parent.cell_side


def test_refine_errors():
    parent = build_partition(H, 100.0, SCH)
    with pytest.raises(ValueError):
        refine(parent, 50.0)


def test_partition_csv(tmp_path):
    p = build_partition(H, 10.0, SCH)
    path = tmp_path / "cells.csv"
    p.to_csv(path, DispersionModel())
    lines = path.read_bytes().split(b"\n")
    assert lines[0] == b"j,cx,cy,cz,side,mass,vx,vy,vz"
    assert len(lines) == p.N + 2
    assert float(lines[1].split(b",")[5]) == p.masses[0]


def test_sample_points_inside():
    p = build_partition(H, 100.0, SCH)
    pts = p.sample_points(3)
    assert pts.shape == (p.N, 27, 3)
    assert np.all(pts > p.lower[:, None, :]) and np.all(pts < p.upper[:, None, :])
