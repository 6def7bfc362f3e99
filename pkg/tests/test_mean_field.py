import math

import numpy as np
import pytest

from vortexflow.errors import UnsupportedError, UsageError
from vortexflow.kernels import DISK, VortexConfiguration
from vortexflow.mean_field import (BumpTest, VorticityMeasure, ZeroTest, empirical_measure,
                                   maximal_vorticity, particles_csv, run_particles, step_particles,
                                   sunflower_patch, velocity, weak_residual)
from vortexflow.point_vortex import integrate, rescale_to_meanfield_time


def test_empirical_measure_examples():
    m = empirical_measure(VortexConfiguration.plus([[0, 0]]))
    assert m.weights.tolist() == [2 * math.pi]
    m4 = empirical_measure(VortexConfiguration.plus([[0.1, 0], [-0.1, 0], [0, 0.1], [0, -0.1]]))
    assert np.allclose(m4.weights, math.pi / 2)
    assert m4.mass == pytest.approx(2 * math.pi, abs=1e-15)
    with pytest.raises(UnsupportedError):
        empirical_measure(VortexConfiguration([[0.1, 0], [-0.1, 0]], [1, -1]))


def test_velocity_of_lone_particle():
    m = empirical_measure(VortexConfiguration.plus([[0, 0]]), blob_radius=1e-3)
    assert velocity(DISK, m, np.array([0.5, 0.0])) == pytest.approx([4 * math.pi, 0], abs=1e-12)
    assert np.allclose(velocity(DISK, m, np.array([0.0, 0.0])), 0)
    # inside the blob the value stays finite
    mb = VorticityMeasure([[0.3, 0.1]], [2 * math.pi], 0.1)
    v = velocity(DISK, mb, np.array([0.3, 0.1]))
    assert np.all(np.isfinite(v))


def test_blob_kernel_consistency():
    # error against the point kernel decays like delta^2 / d^2 once d > delta
    # (the blob kernel is exact beyond delta, so compare at d inside the largest blob)
    x = np.array([0.25, 0.0])
    exact = velocity(DISK, empirical_measure(VortexConfiguration.plus([[0.2, 0]]), 1e-9), x)
    errs = []
    for delta in (0.1, 0.08, 0.06):
        m = VorticityMeasure([[0.2, 0.0]], [2 * math.pi], delta)
        errs.append(np.linalg.norm(velocity(DISK, m, x) - exact))
    assert errs[0] > errs[1] > errs[2] > 0


def test_ring_velocity_symmetry():
    N = 1024
    th = 2 * np.pi * np.arange(N) / N
    m = VorticityMeasure(np.stack([0.4 * np.cos(th), 0.4 * np.sin(th)], 1), np.full(N, 2 * math.pi / N), 0.005)
    ang = 2 * np.pi * np.array([0.1, 0.37, 0.61, 0.83])
    pts = np.stack([0.6 * np.cos(ang), 0.6 * np.sin(ang)], 1)
    v = velocity(DISK, m, pts)
    vr = v[:, 0] * np.cos(ang) + v[:, 1] * np.sin(ang)
    assert np.ptp(vr) < 1e-3


def test_step_preserves_mass_and_centre():
    m = empirical_measure(VortexConfiguration.plus([[0, 0]]))
    m2 = step_particles(DISK, m, 0.01)
    assert np.array_equal(m2.positions, m.positions)
    p = sunflower_patch(256, 0.4, blob_radius=0.02)
    q = step_particles(DISK, p, 1e-3)
    assert q.mass == p.mass
    assert np.max(np.hypot(*q.positions.T)) > np.max(np.hypot(*p.positions.T))


def test_n1_particle_matches_point_vortex():
    cfg = VortexConfiguration.plus([[0.4, 0.1]])
    ode = rescale_to_meanfield_time(integrate(DISK, cfg, 0.05, 1e-3, rtol=1e-12, atol=1e-13))
    snaps = run_particles(DISK, empirical_measure(cfg, 1e-6), 0.05, 1e-3, probes=[0.05])
    assert np.allclose(snaps[-1][1].positions[0], ode.positions_at(0.05)[0], atol=1e-10)


def test_weak_residual_zero_test_function():
    p = sunflower_patch(64, 0.4, blob_radius=0.05)
    rep = weak_residual(DISK, [(0.0, p), (0.1, p)], ZeroTest())
    assert rep.total == 0.0


def test_weak_residual_support_check():
    p = sunflower_patch(64, 0.4, blob_radius=0.05)
    with pytest.raises(UsageError):
        weak_residual(DISK, [(0.0, p)], BumpTest(0.95))


def test_weak_residual_time_term_only_for_static_data():
    # a static measure with a time-dependent chi: -int chi_t omega + [int chi omega] = 0
    p = sunflower_patch(64, 0.4, blob_radius=0.05)
    chi = BumpTest(0.6, time_slope=2.0)
    rep = weak_residual(DISK, [(t, p) for t in np.linspace(0, 0.2, 5)], chi)
    assert abs(rep.time_term) < 1e-12


def test_weak_residual_decreases_with_refinement():
    chi = BumpTest(0.6)
    res = []
    for N in (64, 256):
        delta = 0.5 / math.sqrt(N)
        m0 = sunflower_patch(N, 0.4, blob_radius=delta)
        snaps = run_particles(DISK, m0, 0.1, 0.01, probes=np.linspace(0, 0.1, 11))
        res.append(abs(weak_residual(DISK, snaps, chi).total))
    assert res[1] < res[0] / 2


def test_maximal_vorticity_examples():
    pts = np.array([[0.0, 0.0], [0.5, 0.0], [0.0, 0.5], [-0.5, 0.0]])
    m = VorticityMeasure(pts, np.full(4, 2 * math.pi / 4), 0.01)
    assert maximal_vorticity(m, 0.2) == pytest.approx(2 * math.pi / 4)
    one = VorticityMeasure([[0.1, 0.2]], [2 * math.pi], 0.01)
    for r in (0.01, 0.1, 0.5):
        assert maximal_vorticity(one, r) == pytest.approx(2 * math.pi)
    with pytest.raises(UsageError):
        maximal_vorticity(one, 0.6)


def test_maximal_vorticity_is_monotone_in_r():
    p = sunflower_patch(256, 0.4)
    vals = [maximal_vorticity(p, r) for r in (0.02, 0.05, 0.1, 0.2, 0.4)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    assert vals[-1] <= 2 * math.pi + 1e-12


def test_particles_csv():
    p = sunflower_patch(4, 0.4)
    text = particles_csv([(0.0, p), (0.1, p)])
    lines = text.strip().split("\n")
    assert lines[0] == "tbar,x,y,w" and len(lines) == 9
