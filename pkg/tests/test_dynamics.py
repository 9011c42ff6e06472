import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import solve_ivp

import oracles as O
from atomguide.dynamics import (Ensemble, Port, PortLayout, RunConfig, TimeStepError, apply_scattering,
                                assign_ports, default_dt, ensemble_energy, propagate, resolve_dt,
                                sample_thermal_ensemble, shortest_period, step, symmetric_launch, total_energy)
from atomguide.experiment import load_hold_transfer, load_preset
from atomguide.potential import evaluate, radial_trap_frequency
from atomguide.scene import DEG, RB85, Far, Flat, Gaussian, GuideSpec, Scene, make_michelson, make_x_splitter

kB = RB85.k_boltzmann
U0 = 450e-6 * kB
W = 7e-6
M = RB85.mass


def flat_guide(length=5e-3):
    g = GuideSpec((0.0, 0.0), 0.0, W, U0, Flat(length), "H", Far(), "G")
    return Scene(RB85, (g,), (), (-1e-3, length + 1e-3, -2e-4, 2e-4))


def one_atom(pos, vel, seed=0):
    return Ensemble.from_arrays(np.array([pos], dtype=float), np.array([vel], dtype=float), 2, seed)


def test_straight_line_in_zero_force_region():
    scene = flat_guide(1e-3)
    ens = one_atom((-5e-4, 1e-4), (0.3, -0.2))
    dt = 1e-6
    out = step(ens, scene, dt)
    assert out.pos[0, 0] == -5e-4 + 0.3 * dt
    assert out.pos[0, 1] == 1e-4 - 0.2 * dt
    assert np.array_equal(out.vel, ens.vel)


def test_default_dt_is_period_over_200():
    scene = flat_guide()
    period = 1.0 / radial_trap_frequency(U0, W)
    assert shortest_period(scene) == pytest.approx(period, rel=1e-12)
    assert default_dt(scene) == pytest.approx(period / 200, rel=1e-12)


def test_default_dt_uses_deepest_guide():
    scene = make_x_splitter(42 * DEG, U0, 4 * U0)
    period = 1.0 / radial_trap_frequency(4 * U0, W)
    assert default_dt(scene) == pytest.approx(period / 200, rel=1e-12)


def test_dt_above_bound_rejected():
    scene = flat_guide()
    period = shortest_period(scene)
    assert resolve_dt(scene, RunConfig(1e-3, dt=period / 100)) == period / 100
    with pytest.raises(TimeStepError):
        resolve_dt(scene, RunConfig(1e-3, dt=period / 99))


def test_harmonic_oscillation_frequency():
    scene = flat_guide()
    nu = radial_trap_frequency(U0, W)
    amplitude = 0.01 * W
    ens = one_atom((2.5e-3, amplitude), (0.0, 0.0))
    periods = 100
    rec = propagate(ens, scene, RunConfig(periods / nu, record_stride=1))
    y = rec.pos[:, 0, 1]
    t = rec.times
    idx = np.flatnonzero((y[:-1] > 0) & (y[1:] <= 0))
    crossings = t[idx] + (t[idx + 1] - t[idx]) * y[idx] / (y[idx] - y[idx + 1])
    measured = (len(crossings) - 1) / (crossings[-1] - crossings[0])
    assert len(crossings) >= 99
    assert measured == pytest.approx(nu, rel=1e-3)


def michelson_atoms(n=16, seed=3):
    scene = make_michelson(1e-3)
    ens = sample_thermal_ensemble(scene, ("A", -1.5e-3), 20e-6, n, seed=seed)
    return scene, ens


@pytest.fixture(scope="module")
def long_guide_run():
    """Thermal atoms in a 10 mm flat guide for 1e5 steps at the default dt."""
    g = GuideSpec((0.0, 0.0), 0.0, W, U0, Flat(10e-3), "H", Far(), "G")
    scene = Scene(RB85, (g,), (), (-1e-3, 11e-3, -2e-4, 2e-4))
    ens = sample_thermal_ensemble(scene, ("G", 5e-3), 20e-6, 16, seed=3)
    rec = propagate(ens, scene, RunConfig(1e5 * default_dt(scene), record_stride=1))
    u = evaluate(scene, rec.pos[:, :, 0], rec.pos[:, :, 1], 2, force=False)["U"]
    energy = 0.5 * M * np.einsum("kij,kij->ki", rec.vel, rec.vel) + u
    return rec, energy


def test_energy_drift_over_1e5_steps(long_guide_run):
    rec, energy = long_guide_run
    assert rec.n_steps == 100000 and rec.final.n_alive == 16
    window = 2000  # ten radial periods
    drift = np.abs(energy[-window:].mean(axis=0) - energy[:window].mean(axis=0)) / np.abs(energy[0])
    assert drift.max() < 1e-5


def test_max_energy_error_at_default_dt(long_guide_run):
    _, energy = long_guide_run
    worst = float(np.max(np.abs(energy - energy[0]) / np.abs(energy[0])))
    assert worst < 1e-5, f"max relative energy error {worst:.3g}"


def test_energy_error_is_second_order():
    scene, ens = michelson_atoms(8)
    dt = default_dt(scene)
    errors = []
    for h in (dt, dt / 2):
        rec = propagate(ens, scene, RunConfig(2000 * dt, dt=h, record_stride=1))
        e = np.array([ensemble_energy(rec.snapshot(k), scene) for k in range(len(rec.times))])
        errors.append(np.max(np.abs(e - e[0]) / np.abs(e[0])))
    assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.15)


def test_total_energy_examples():
    scene = flat_guide()
    at_rest = one_atom((2.5e-3, 0.0), (0.0, 0.0)).atoms[0]
    assert total_energy(at_rest, scene) / kB * 1e6 == pytest.approx(-450.0, rel=1e-12)
    free = one_atom((-5e-4, 1e-4), (0.1, 0.2)).atoms[0]
    assert total_energy(free, scene) == 0.5 * M * (0.1**2 + 0.2**2)


def test_bitwise_determinism_across_workers():
    scene = make_x_splitter()
    ens = symmetric_launch(sample_thermal_ensemble(scene, ("A", 1.2e-3), 20e-6, 12, seed=99,
                                                   launch_velocity=0.15))
    cfg = RunConfig(1.5e-3, scattering=True, record_stride=250)
    records = [propagate(ens, scene, cfg, workers=w) for w in (1, 4, 8)]
    ref = records[0]
    assert ref.final.n_events.sum() > 0
    for rec in records[1:]:
        for name in ("times", "stream_id", "pos", "vel", "state", "alive"):
            assert getattr(rec, name).tobytes() == getattr(ref, name).tobytes()
        for name in Ensemble._ARRAYS:
            assert getattr(rec.final, name).tobytes() == getattr(ref.final, name).tobytes()
        assert rec.to_csv() == ref.to_csv()


def test_thermal_velocity_spread():
    scene = flat_guide()
    ens = sample_thermal_ensemble(scene, ("G", 2.5e-3), 20e-6, 20000, seed=1)
    n = len(ens)
    tol = 5 / math.sqrt(2 * n)
    for axis in (0, 1):
        assert np.std(ens.vel[:, axis]) == pytest.approx(O.FROZEN["velocity_spread"], rel=tol)
    spread = np.std(ens.pos[:, 1])
    assert spread == pytest.approx(O.FROZEN["rms_spread"], rel=tol)
    assert 0.5e-6 <= spread <= 1.2e-6


def test_loading_window_is_two_waists():
    scene = flat_guide()
    ens = sample_thermal_ensemble(scene, ("G", 2.5e-3), 20e-6, 2000, seed=1)
    ds = ens.pos[:, 0] - 2.5e-3
    assert np.all(np.abs(ds) <= W)
    assert np.std(ds) == pytest.approx(2 * W / math.sqrt(12), rel=0.1)


def test_zero_temperature_sample():
    scene = flat_guide()
    ens = sample_thermal_ensemble(scene, ("G", 2.5e-3), 0.0, 50, seed=1)
    assert np.all(ens.vel == 0.0)
    assert np.all(ens.pos[:, 1] == 0.0)
    assert np.all(np.abs(ens.pos[:, 0] - 2.5e-3) <= W)


def test_sampling_rejects_non_trapping_site():
    scene = flat_guide(1e-3)
    with pytest.raises(ValueError):
        sample_thermal_ensemble(scene, ("G", 2e-3), 20e-6, 10, seed=1)


def test_sampling_is_reproducible_and_stream_based():
    scene = flat_guide()
    a = sample_thermal_ensemble(scene, ("G", 2.5e-3), 20e-6, 30, seed=5)
    b = sample_thermal_ensemble(scene, ("G", 2.5e-3), 20e-6, 30, seed=5)
    c = sample_thermal_ensemble(scene, ("G", 2.5e-3), 20e-6, 10, seed=5, first_stream_id=20)
    assert a.pos.tobytes() == b.pos.tobytes()
    assert np.array_equal(a.pos[20:], c.pos)
    d = sample_thermal_ensemble(scene, ("G", 2.5e-3), 20e-6, 30, seed=6)
    assert not np.array_equal(a.pos, d.pos)


def test_poisson_mean_scattering_events():
    scene = flat_guide()
    n = 1000
    ens = Ensemble.from_arrays(np.tile([2.5e-3, 0.0], (n, 1)), np.zeros((n, 2)), 2, 17)
    dt = 10e-6
    for _ in range(int(round(50e-3 / dt))):
        ens = apply_scattering(ens, scene, dt)
    expected = O.FROZEN["poisson_events"]
    counts = ens.n_events
    assert counts.mean() == pytest.approx(expected, abs=4 * math.sqrt(expected / n))
    assert counts.var() == pytest.approx(expected, rel=0.15)


def test_recoil_kick_magnitudes():
    scene = flat_guide()
    n = 400
    ens = Ensemble.from_arrays(np.tile([2.5e-3, 0.0], (n, 1)), np.zeros((n, 2)), 2, 8)
    dt = 10e-6
    while np.count_nonzero(ens.n_events == 1) < 50:
        ens = apply_scattering(ens, scene, dt)
    one = ens.n_events == 1
    # one absorbed kick along x plus one emitted kick in a random direction
    emitted = ens.vel[one] - np.array([RB85.recoil_velocity, 0.0])
    assert np.allclose(np.linalg.norm(emitted, axis=1), RB85.recoil_velocity, rtol=1e-12)
    assert np.all(ens.vel[ens.n_events == 0] == 0.0)


def test_scattering_probability_bound():
    scene = flat_guide()
    ens = one_atom((2.5e-3, 0.0), (0.0, 0.0))
    rate = O.FROZEN["scattering_rate"]
    with pytest.raises(TimeStepError):
        apply_scattering(ens, scene, 0.1001 / rate)
    apply_scattering(ens, scene, 0.099 / rate)


def test_scattering_off_leaves_ensemble_unchanged():
    scene = flat_guide()
    ens = sample_thermal_ensemble(scene, ("G", 2.5e-3), 20e-6, 20, seed=2)
    on = propagate(ens, scene, RunConfig(0.0, scattering=True))
    off = propagate(ens, scene, RunConfig(2e-4))
    assert np.array_equal(on.final.vel, ens.vel) and np.array_equal(on.final.pos, ens.pos)
    assert off.final.n_events.sum() == 0
    dark = one_atom((-5e-4, 0.0), (0.0, 0.0))
    out = apply_scattering(dark, scene, 1e-3)
    assert np.array_equal(out.vel, dark.vel) and out.n_events[0] == 0


def test_zero_duration_is_identity():
    scene = flat_guide()
    ens = sample_thermal_ensemble(scene, ("G", 2.5e-3), 20e-6, 10, seed=2)
    rec = propagate(ens, scene, RunConfig(0.0))
    assert rec.n_steps == 0
    assert len(rec.times) == 1
    assert rec.final.pos.tobytes() == ens.pos.tobytes()
    assert rec.final.vel.tobytes() == ens.vel.tobytes()


def test_trajectory_csv_columns():
    scene = flat_guide()
    ens = sample_thermal_ensemble(scene, ("G", 2.5e-3), 20e-6, 3, seed=2)
    rec = propagate(ens, scene, RunConfig(1e-5, record_stride=5))
    lines = rec.to_csv().splitlines()
    assert lines[0] == "t_s,atom_id,x_m,y_m,vx_mps,vy_mps,state,alive"
    assert len(lines) == 1 + 3 * len(rec.times)
    assert rec.walltime > 0 and rec.step_cost > 0
    t, atom, x = lines[4].split(",")[:3]
    assert float(x) == rec.pos[1, 0, 0]


def test_atom_number_conservation():
    scene = make_x_splitter()
    ens = sample_thermal_ensemble(scene, ("A", 0.5e-3), 20e-6, 40, seed=4, launch_velocity=0.3)
    rec = propagate(ens, scene, RunConfig(12e-3, record_stride=1000))
    n = len(ens)
    alive_counts = rec.alive.sum(axis=1)
    assert np.all(np.diff(alive_counts) <= 0)
    exited = np.count_nonzero(~np.isnan(rec.final.exit_time))
    assert rec.final.n_alive + exited == n
    assert rec.final.n_exited == exited
    assert exited > 0


def test_unbound_outbound_atom_escapes_after_dwell():
    scene = flat_guide()
    ens = one_atom((2.5e-3, 1e-4), (0.0, 0.05))
    rec = propagate(ens, scene, RunConfig(1.5e-3, record_stride=50))
    t_exit = rec.final.exit_time[0]
    assert not rec.final.alive[0]
    assert t_exit == pytest.approx(1e-3, abs=2 * rec.dt)


def test_bound_atom_survives():
    scene = flat_guide()
    ens = one_atom((2.5e-3, 2e-6), (0.0, 0.0))
    rec = propagate(ens, scene, RunConfig(2e-3, record_stride=1000))
    assert rec.final.alive[0]


def test_hold_retention():
    config = load_preset("x_splitter")
    config.section("ensemble").entries["n_atoms"] = replace(config.section("ensemble").entries["n_atoms"],
                                                            values=(200,))
    ens, info = load_hold_transfer(config, config.scene())
    assert info["n_loaded"] == 200
    assert info["n_after_hold"] / info["n_loaded"] > 0.99


def test_gradient_guide_traversal():
    scene = load_preset("single_guide").scene()
    g = scene.guides[0]
    accel = 0.5 * g.peak_depth / g.profile.length / M
    t_oracle = math.sqrt(2 * (g.profile.length - 0.1e-3) / accel)
    assert t_oracle < 60e-3
    ens = sample_thermal_ensemble(scene, ("G", 0.1e-3), 20e-6, 100, seed=20)
    rec = propagate(ens, scene, RunConfig(60e-3, record_stride=100))
    x = rec.pos[:, :, 0]
    reached = np.any(x >= g.profile.length, axis=0)
    back = np.any(x < 0.0, axis=0)
    assert np.all(reached | back)
    assert reached.mean() > 0.75


def test_michelson_turnaround():
    sigma, s0, v0 = 1e-3, -1.5e-3, 0.05
    g = GuideSpec((0.0, 0.0), 0.0, W, U0, Gaussian(0.0, sigma), "H", Far(), "G")
    scene = Scene(RB85, (g,), (), (-3e-3, 3e-3, -1e-4, 1e-4))
    ens = one_atom((s0, 0.0), (v0, 0.0))
    assert total_energy(ens.atoms[0], scene) < 0

    def rhs(t, z):
        s, v = z
        return [v, -U0 * s / sigma**2 * math.exp(-s * s / (2 * sigma**2)) / M]

    def back_at_start(t, z):
        return z[0] - s0

    back_at_start.direction = 1
    sol = solve_ivp(rhs, (0, 0.2), [s0, v0], method="DOP853", rtol=1e-11, atol=1e-15,
                    events=back_at_start, dense_output=True)
    period = next(t for t in sol.t_events[0] if t > 1e-4)
    dt = default_dt(scene)
    rec = propagate(ens, scene, RunConfig(round(period / dt) * dt, record_stride=20))
    vx = rec.vel[:, 0, 0]
    assert vx.min() < 0 < vx.max()
    s_end = rec.final.pos[0, 0]
    assert abs(s_end - s0) < 0.01 * abs(s0)
    assert rec.final.vel[0, 0] == pytest.approx(v0, rel=0.01)


def test_port_assignment_all_on_one_axis():
    scene = make_x_splitter()
    g = scene.guides[0]
    pts = np.array([g.point_at(s) for s in np.linspace(1.6e-3, 2.8e-3, 50)])
    ens = Ensemble.from_arrays(pts, np.zeros_like(pts), 2, 0)
    counts = assign_ports(ens, scene)
    assert counts["A+"] == 50 and counts["B+"] == 0 and counts["unassigned"] == 0


def test_port_assignment_excludes_crossing_and_lost():
    scene = make_x_splitter()
    pts = np.array([[0.0, 0.0], [5e-6, 0.0], [2e-3, 0.0]])
    ens = Ensemble.from_arrays(pts, np.zeros_like(pts), 2, 0)
    ens.alive[2] = False
    counts = assign_ports(ens, scene)
    assert counts["unassigned"] == 2 and counts["lost"] == 1
    assert sum(v for k, v in counts.items() if k not in ("unassigned", "lost")) == 0


def test_port_tie_goes_to_lower_index():
    layout = PortLayout((Port("p0", (0.0, 1.0), (1.0, 0.0), 2.0), Port("p1", (0.0, -1.0), (1.0, 0.0), 2.0)))
    ens = Ensemble.from_arrays(np.array([[1.0, 0.0]]), np.zeros((1, 2)), 2, 0)
    assert assign_ports(ens, make_x_splitter(), layout) == {"p0": 1, "p1": 0, "unassigned": 0, "lost": 0}


def test_empty_port_list_rejected():
    ens = one_atom((0.0, 0.0), (0.0, 0.0))
    with pytest.raises(ValueError):
        assign_ports(ens, make_x_splitter(), PortLayout(()))


def test_symmetric_splitter_is_even():
    scene = make_x_splitter()
    ens = symmetric_launch(sample_thermal_ensemble(scene, ("A", 1.2e-3), 20e-6, 100, seed=42, launch_velocity=0.15))
    rec = propagate(ens, scene, RunConfig(5.4e-3, record_stride=100000))
    counts = assign_ports(rec.final, scene)
    n = counts["A+"] + counts["B+"]
    assert n > 0.8 * len(ens)
    assert abs(counts["A+"] / n - 0.5) <= 3 * math.sqrt(0.25 / n)
