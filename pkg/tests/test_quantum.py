import math
from dataclasses import replace

import numpy as np
import pytest

import oracles as O
from atomguide.potential import ground_state_width, radial_trap_frequency
from atomguide.quantum import (ABSORBER_FRACTION, FringeScan, GridSpec, PhaseStepError, Propagator,
                               TwinGuideInterferometer, absorber_mask, init_gaussian_packet, mz_fringe_scan,
                               port_population, rectangle, split_step)
from atomguide.scene import RB85, Far, Flat, GuideSpec, Scene

M, HBAR = RB85.mass, RB85.hbar
NU = radial_trap_frequency(450e-6 * RB85.k_boltzmann, 7e-6)
OMEGA = 2 * math.pi * NU

# small transverse grid keeps the interferometer tests quick
TEMPLATE = TwinGuideInterferometer(ny_grid=256)


def harmonic(grid, omega=OMEGA):
    X, Y = grid.mesh()
    return 0.5 * M * omega**2 * (X**2 + Y**2)


def test_grid_requires_powers_of_two():
    with pytest.raises(ValueError):
        GridSpec(100, 128, (1e-6, 1e-6))
    g = GridSpec(64, 32, (6.4e-6, 3.2e-6))
    assert g.dx == pytest.approx(1e-7) and g.dy == pytest.approx(1e-7)
    assert g.x.mean() == pytest.approx(0.0, abs=1e-20)


def test_grid_resolution_check():
    g = GridSpec.with_spacing(64, 64, 1e-7)
    speed = 2 * math.pi * HBAR / (M * 8 * 1e-7)
    g.check_resolution(0.99 * speed)
    with pytest.raises(ValueError):
        g.check_resolution(1.01 * speed)


def test_interferometer_grid_resolves_fastest_atoms():
    t = TwinGuideInterferometer()
    g = t.grid()
    g.check_resolution(t.speed)
    assert t.guide_length <= 50e-6
    assert t.speed <= 5 * RB85.recoil_velocity


def test_packet_is_normalized():
    g = GridSpec.with_spacing(128, 128, 5e-8)
    for center, sigma, v in [((0.0, 0.0), 3e-7, (0.0, 0.0)), ((1e-7, -2e-7), (4e-7, 2e-7), (3e-3, -1e-3))]:
        p = init_gaussian_packet(g, center, sigma, v)
        assert p.norm() == pytest.approx(1.0, abs=1e-12)


def test_packet_at_rest_has_zero_mean_momentum():
    g = GridSpec.with_spacing(128, 128, 5e-8)
    p = init_gaussian_packet(g, (0.0, 0.0), 3e-7)
    assert np.all(np.abs(p.mean_wavevector()) < 1e-6)


def test_packet_momentum_matches_velocity():
    g = GridSpec.with_spacing(256, 128, 5e-8)
    v = 4e-3
    p = init_gaussian_packet(g, (0.0, 0.0), 5e-7, (v, 0.0))
    assert p.mean_wavevector()[0] == pytest.approx(M * v / HBAR, rel=1e-6)


def test_clipped_packet_rejected():
    g = GridSpec.with_spacing(64, 64, 5e-8)
    with pytest.raises(ValueError):
        init_gaussian_packet(g, (1.4e-6, 0.0), 2e-7)


def test_ground_state_width():
    assert ground_state_width(NU) == pytest.approx(O.FROZEN["ground_state_width"], rel=1e-9)
    assert ground_state_width(NU) == pytest.approx(78e-9, abs=1e-9)


def test_norm_conserved_without_absorber():
    g = GridSpec.with_spacing(128, 128, 5e-8)
    rng = np.random.default_rng(0)
    u = harmonic(g) + 1e-30 * rng.standard_normal(g.mesh()[0].shape)
    dt = Propagator.suggest_dt(u)
    p = init_gaussian_packet(g, (5e-8, -3e-8), 1e-7, (2e-3, 1e-3))
    out = Propagator(g, u, dt, absorb=False).run(p, 10000)
    assert abs(1 - out.norm()) < 1e-9


def test_free_dispersion():
    g = GridSpec.with_spacing(256, 256, 8e-8)
    sigma0 = 5e-7
    v = 2e-3
    p = init_gaussian_packet(g, (-2e-6, 0.0), sigma0, (v, 0.0))
    t = 1.5e-3
    n = 300
    out = Propagator(g, np.zeros(g.mesh()[0].shape), t / n, absorb=False).run(p, n)
    expected = O.free_width(sigma0, t)
    assert expected / sigma0 > 2
    sx, sy = np.sqrt(out.position_variance())
    assert sx == pytest.approx(expected, rel=5e-3)
    assert sy == pytest.approx(expected, rel=5e-3)
    assert out.centroid()[0] == pytest.approx(-2e-6 + v * t, rel=1e-6)


def test_centroid_stationary_without_potential_or_motion():
    g = GridSpec.with_spacing(256, 256, 8e-8)
    p = init_gaussian_packet(g, (3e-7, -2e-7), 4e-7)
    out = Propagator(g, np.zeros(g.mesh()[0].shape), 1e-6, absorb=False).run(p, 200)
    assert np.allclose(out.centroid(), p.centroid(), rtol=0, atol=1e-13)


def test_split_step_matches_propagator():
    scene = Scene(RB85, (GuideSpec((-3e-6, 0.0), 0.0, 1e-6, 1e-31, Flat(6e-6), "H", Far(), "g"),), (),
                  (-3.2e-6, 3.2e-6, -3.2e-6, 3.2e-6))
    g = GridSpec.with_spacing(64, 64, 1e-7)
    p = init_gaussian_packet(g, (0.0, 0.0), 3e-7, (1e-3, 0.0))
    a = split_step(p, scene, 1e-6, absorb=False)
    assert a.time == pytest.approx(1e-6)
    assert a.norm() == pytest.approx(1.0, abs=1e-12)


def test_phase_step_bound():
    g = GridSpec.with_spacing(64, 64, 1e-7)
    u = harmonic(g)
    dt = 0.1 * HBAR / np.max(np.abs(u))
    with pytest.raises(PhaseStepError):
        Propagator(g, u, dt * 1.0001)
    Propagator(g, u, dt * 0.999)


def test_coherent_state_frequency():
    sigma = ground_state_width(NU)
    g = GridSpec.with_spacing(64, 64, sigma / 4)
    u = harmonic(g)
    p = init_gaussian_packet(g, (3 * sigma, 0.0), sigma)
    period = 1 / NU
    n_per = int(math.ceil(period / Propagator.suggest_dt(u)))
    dt = period / n_per
    xs = []
    Propagator(g, u, dt, absorb=False).run(p, 5 * n_per + 1, observe=lambda q: xs.append(q.centroid()[0]), every=1)
    x = np.array(xs)
    t = dt * np.arange(1, len(x) + 1)
    idx = np.flatnonzero((x[:-1] > 0) & (x[1:] <= 0))
    cross = t[idx] + dt * x[idx] / (x[idx] - x[idx + 1])
    measured = (len(cross) - 1) / (cross[-1] - cross[0])
    assert len(cross) == 5
    assert measured == pytest.approx(NU, rel=1e-2)


def test_ground_state_is_stationary():
    sigma = ground_state_width(NU)
    g = GridSpec.with_spacing(64, 64, sigma / 4)
    u = harmonic(g)
    p = init_gaussian_packet(g, (0.0, 0.0), sigma)
    period = 1 / NU
    dt = Propagator.suggest_dt(u)
    n = int(math.ceil(10 * period / dt))
    fidelities = []
    prop = Propagator(g, u, 10 * period / n, absorb=False)
    prop.run(p, n, observe=lambda q: fidelities.append(abs(q.overlap(p)) ** 2), every=max(n // 50, 1))
    assert min(fidelities) > 0.999


def test_absorber_mask_ramp():
    g = GridSpec(128, 64, (1e-5, 1e-5))
    mask = absorber_mask(g)
    width = int(round(ABSORBER_FRACTION * 128))
    assert mask[0, 32] == 0.0
    assert mask[width, 32] == 1.0 and mask[64, 32] == 1.0
    assert np.all(np.diff(mask[:width + 1, 32]) >= 0)
    assert np.all((mask >= 0) & (mask <= 1))


def test_port_population_partition():
    g = GridSpec.with_spacing(128, 64, 1e-7)
    p = init_gaussian_packet(g, (1e-6, 2e-7), 5e-7)
    x0, x1, y0, y1 = g.bounds
    pad = g.dx
    whole = rectangle(x0 - pad, x1 + pad, y0 - pad, y1 + pad)
    assert port_population(p, whole) == pytest.approx(p.norm(), rel=1e-12)
    parts = [rectangle(x0 - pad, 0.0, y0 - pad, y1 + pad), rectangle(0.0, x1 + pad, y0 - pad, 0.0),
             rectangle(0.0, x1 + pad, 0.0, y1 + pad)]
    assert sum(port_population(p, r) for r in parts) == pytest.approx(p.norm(), rel=1e-12)


def test_symmetric_packet_splits_evenly():
    p1, p2, losses = TEMPLATE.run(0.0, symmetric=True)
    assert abs(p1 / (p1 + p2) - 0.5) < 1e-3
    assert p1 + p2 + losses == pytest.approx(1.0, abs=1e-3)


def test_twin_guides_are_mirror_images():
    g = TEMPLATE.grid()
    scene = TEMPLATE.scene(0.0, g)
    a, b = scene.guides
    assert a.origin[0] == b.origin[0] and a.origin[1] == -b.origin[1]
    assert np.allclose(g.y, -g.y[::-1], rtol=0, atol=1e-20)


def test_grid_doubling_convergence():
    depth = 0.15 * TEMPLATE.guide_depth
    coarse = TEMPLATE.run(depth)
    fine = replace(TEMPLATE, resolution=2 * TEMPLATE.resolution, n_grid=2 * TEMPLATE.n_grid,
                   ny_grid=2 * TEMPLATE.ny_grid)
    assert fine.grid().extent == pytest.approx(TEMPLATE.grid().extent, rel=1e-12)
    refined = fine.run(depth)
    assert max(abs(a - b) for a, b in zip(coarse, refined)) < 1e-3


def test_pi_phase_gives_population_extremum():
    pi_depth = TEMPLATE.pi_depth()
    factors = np.array([0.6, 0.8, 1.0, 1.2, 1.4])
    scan = mz_fringe_scan(TEMPLATE, factors * pi_depth)
    a, b, _ = np.polyfit(factors, scan.p_out1, 2)
    vertex = -b / (2 * a)
    assert vertex == pytest.approx(1.0, abs=0.15)
    assert np.all(np.abs(scan.p_out1 + scan.p_out2 + scan.losses - 1) < 1e-3)


def test_fringe_scan_complementary():
    depths = np.linspace(0.0, 2.0, 5) * TEMPLATE.pi_depth()
    scan = mz_fringe_scan(TEMPLATE, depths)
    assert np.all(scan.losses < 0.01)
    assert np.all(np.abs(scan.p_out1 + scan.p_out2 + scan.losses - 1) < 1e-3)
    assert scan.correlation < -0.99
    assert scan.contrast > 0.2
    lines = scan.to_csv().splitlines()
    assert lines[0] == "depth_J,p_out1,p_out2,losses,contrast"
    assert len(lines) == 1 + len(depths)
    assert float(lines[1].split(",")[1]) == scan.p_out1[0]


def test_fringe_scan_contrast_definition():
    scan = FringeScan(np.array([0.0, 1.0]), np.array([0.2, 0.8]), np.array([0.8, 0.2]), np.zeros(2))
    assert scan.contrast == pytest.approx(0.6)
    assert scan.correlation == pytest.approx(-1.0)
