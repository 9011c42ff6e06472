"""Classical trajectories of thermal atom ensembles through a scene.

Atoms are stored as a structure of arrays. Every random number an atom uses
comes from a counter-based Philox stream keyed by ``(master_seed,
stream_id)``, so results do not depend on how atoms are split across
worker processes.
"""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .potential import HyperfineState, evaluate, radial_trap_frequency
from .scene import Scene

#: Philox counter word tagging draws used for initial sampling.
_PURPOSE_INIT = 0
#: Philox counter word tagging draws used for scattering events.
_PURPOSE_SCATTER = 1

ESCAPE_DWELL = 1e-3
MAX_SCATTER_PROBABILITY = 0.1


class TimeStepError(ValueError):
    """The requested time step violates a stability or accuracy bound."""


def stream_keys(master_seed: int, stream_ids) -> np.ndarray:
    """Philox keys (``uint64`` pairs) for each stream id."""
    ids = np.asarray(stream_ids, dtype=np.int64)
    keys = np.empty((ids.size, 2), dtype=np.uint64)
    for i, sid in enumerate(ids):
        keys[i] = np.random.SeedSequence((int(master_seed), int(sid))).generate_state(2, np.uint64)
    return keys


def _generator(key, purpose: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=key, counter=[block, purpose, 0, 0]))


@dataclass(frozen=True)
class Atom:
    position: np.ndarray
    velocity: np.ndarray
    state: HyperfineState
    alive: bool
    rng_stream_id: int


@dataclass
class Ensemble:
    """Phase-space state of a set of atoms.

    Attributes
    ----------
    pos, vel : ndarray, shape (n, 2)
    state : ndarray of int8
        Hyperfine level codes (2 or 3).
    alive : ndarray of bool
    stream_id : ndarray of int64
    keys : ndarray of uint64, shape (n, 2)
        Philox keys derived from ``(master_seed, stream_id)``.
    n_events : ndarray of int64
        Scattering events so far; indexes the next scatter draw block.
    hazard, threshold : ndarray
        Accumulated scattering probability and the exponential threshold at
        which the next event fires.
    outbound_time : ndarray
        Time spent unbound and moving away from the domain centre.
    exit_time : ndarray
        Time an atom was lost, NaN while alive.
    time : float
    master_seed : int
    """

    pos: np.ndarray
    vel: np.ndarray
    state: np.ndarray
    alive: np.ndarray
    stream_id: np.ndarray
    keys: np.ndarray
    n_events: np.ndarray
    hazard: np.ndarray
    threshold: np.ndarray
    outbound_time: np.ndarray
    exit_time: np.ndarray
    time: float = 0.0
    master_seed: int = 0

    def __len__(self):
        return self.pos.shape[0]

    @property
    def atoms(self) -> list[Atom]:
        return [
            Atom(self.pos[i].copy(), self.vel[i].copy(), HyperfineState(int(self.state[i])),
                 bool(self.alive[i]), int(self.stream_id[i]))
            for i in range(len(self))
        ]

    @property
    def n_alive(self) -> int:
        return int(self.alive.sum())

    @property
    def n_exited(self) -> int:
        return int((~self.alive).sum())

    _ARRAYS = ("pos", "vel", "state", "alive", "stream_id", "keys", "n_events", "hazard",
               "threshold", "outbound_time", "exit_time")

    def copy(self) -> "Ensemble":
        return replace(self, **{name: getattr(self, name).copy() for name in self._ARRAYS})

    def take(self, index) -> "Ensemble":
        return replace(self, **{name: getattr(self, name)[index].copy() for name in self._ARRAYS})

    @classmethod
    def concat(cls, parts: list["Ensemble"]) -> "Ensemble":
        if not parts:
            raise ValueError("nothing to concatenate")
        first = parts[0]
        return replace(first, **{name: np.concatenate([getattr(p, name) for p in parts]) for name in cls._ARRAYS})

    @classmethod
    def empty(cls, master_seed: int = 0, time: float = 0.0) -> "Ensemble":
        return cls.from_arrays(np.zeros((0, 2)), np.zeros((0, 2)), HyperfineState.F2, master_seed, time=time)

    @classmethod
    def from_arrays(cls, pos, vel, state, master_seed: int, stream_ids=None, time: float = 0.0) -> "Ensemble":
        """Build an ensemble from explicit positions and velocities."""
        pos = np.array(pos, dtype=float).reshape(-1, 2)
        vel = np.array(vel, dtype=float).reshape(-1, 2)
        n = pos.shape[0]
        if stream_ids is None:
            stream_ids = np.arange(n, dtype=np.int64)
        stream_ids = np.asarray(stream_ids, dtype=np.int64)
        if np.unique(stream_ids).size != n:
            raise ValueError("rng stream ids must be unique within an ensemble")
        keys = stream_keys(master_seed, stream_ids)
        threshold = np.array([_initial_threshold(k) for k in keys]) if n else np.zeros(0)
        return cls(
            pos=pos, vel=vel,
            state=np.broadcast_to(np.asarray(state, dtype=np.int8), (n,)).copy(),
            alive=np.ones(n, dtype=bool), stream_id=stream_ids, keys=keys,
            n_events=np.zeros(n, dtype=np.int64), hazard=np.zeros(n), threshold=threshold,
            outbound_time=np.zeros(n), exit_time=np.full(n, np.nan),
            time=float(time), master_seed=int(master_seed),
        )


def _initial_threshold(key) -> float:
    # the first five init draws are reserved for phase-space sampling
    u = _generator(key, _PURPOSE_INIT, 0).random(6)[5]
    return -math.log1p(-u)


@dataclass(frozen=True)
class RunConfig:
    """Integration settings.

    ``dt=None`` selects the default of the shortest transverse period divided
    by 200. ``recoil_axis`` is the in-plane direction (rad) of the
    absorbed-photon kick.
    """

    duration: float
    dt: float | None = None
    scattering: bool = False
    record_stride: int = 100
    recoil_axis: float = 0.0

    def __post_init__(self):
        if not self.duration >= 0:
            raise ValueError(f"duration must be >= 0, got {self.duration}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


def shortest_period(scene: Scene) -> float:
    """Shortest transverse harmonic period among the scene's attractive elements."""
    m = scene.species.mass
    curvature = 0.0
    for state in (2, 3):
        for g in scene.guides:
            if g.waist > 0:
                curvature = max(curvature, 4.0 * max(-g.signed_depth(state), 0.0) / g.waist**2)
        for sp in scene.spots:
            if sp.waist > 0:
                curvature = max(curvature, 4.0 * max(-sp.depth(state), 0.0) / sp.waist**2)
    if curvature == 0.0:
        return math.inf
    return 2.0 * math.pi / math.sqrt(curvature / m)


def default_dt(scene: Scene) -> float:
    period = shortest_period(scene)
    if not math.isfinite(period):
        raise TimeStepError("scene has no attractive elements; set dt explicitly")
    return period / 200.0


def resolve_dt(scene: Scene, config: RunConfig) -> float:
    dt = default_dt(scene) if config.dt is None else config.dt
    period = shortest_period(scene)
    if math.isfinite(period) and dt > period / 100.0 * (1 + 1e-12):
        raise TimeStepError(f"dt = {dt:.3g} s exceeds 1/100 of the shortest radial period {period:.3g} s")
    return dt


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def sample_thermal_ensemble(scene: Scene, site, temperature: float, n: int, state=HyperfineState.F2,
                            seed: int = 0, *, launch_velocity: float = 0.0, window: float | None = None,
                            first_stream_id: int = 0, time: float = 0.0) -> Ensemble:
    """Thermal atoms loaded into a guide.

    Parameters
    ----------
    scene : Scene
    site : (int or str, float)
        Guide index or name and longitudinal coordinate ``s`` of the site.
    temperature : float
        Kelvin.
    n : int
    state : HyperfineState
    seed : int
        Master seed.
    launch_velocity : float, optional
        Mean velocity added along the guide direction (m/s).
    window : float, optional
        Width of the uniform longitudinal loading window, default ``2 w0``.

    Notes
    -----
    Transverse positions follow the Boltzmann distribution of the local
    harmonic approximation; velocities are Gaussian with ``sqrt(kT/m)``.
    """
    ref, s0 = site
    gi = scene.guide_index(ref) if isinstance(ref, str) else int(ref)
    g = scene.guides[gi]
    center = g.point_at(s0)
    u_site = float(evaluate(scene, center[0], center[1], int(state), force=False)["U"])
    if u_site >= 0:
        raise ValueError(f"site s={s0} on guide {g.name or gi} is not trapping (U = {u_site:.3g} J)")
    local_depth = -g.signed_depth(int(state)) * float(g.profile.factor(s0))
    if local_depth <= 0:
        raise ValueError(f"guide {g.name or gi} does not attract state {int(state)} at s={s0}")
    species = scene.species
    kT = species.k_boltzmann * max(temperature, 0.0)
    omega = 2.0 * math.pi * radial_trap_frequency(local_depth, g.waist, species.mass)
    sigma_d = math.sqrt(kT / (species.mass * omega**2))
    sigma_v = math.sqrt(kT / species.mass)
    window = 2.0 * g.waist if window is None else window
    ids = np.arange(first_stream_id, first_stream_id + n, dtype=np.int64)
    ens = Ensemble.from_arrays(np.zeros((n, 2)), np.zeros((n, 2)), state, seed, ids, time=time)
    u_hat, n_hat = g.direction, g.normal
    for i in range(n):
        z = _generator(ens.keys[i], _PURPOSE_INIT, 0).random(6)
        gauss = _box_muller(z[:4])
        ds = (z[4] - 0.5) * window
        ens.pos[i] = center + ds * u_hat + sigma_d * gauss[0] * n_hat
        ens.vel[i] = (launch_velocity + sigma_v * gauss[1]) * u_hat + sigma_v * gauss[2] * n_hat
    return ens


def _box_muller(u):
    r1 = math.sqrt(-2.0 * math.log1p(-u[0]))
    r2 = math.sqrt(-2.0 * math.log1p(-u[2]))
    return (r1 * math.cos(2 * math.pi * u[1]), r1 * math.sin(2 * math.pi * u[1]),
            r2 * math.cos(2 * math.pi * u[3]))


def mirror_copy(ensemble: Ensemble, axis_angle: float = 0.0, first_stream_id: int | None = None) -> Ensemble:
    """Reflection of every atom across the line through the origin at ``axis_angle``.

    The copy gets fresh stream ids following the original ones.
    """
    c, s = math.cos(2 * axis_angle), math.sin(2 * axis_angle)
    refl = np.array([[c, s], [s, -c]])
    if first_stream_id is None:
        first_stream_id = int(ensemble.stream_id.max()) + 1 if len(ensemble) else 0
    ids = np.arange(first_stream_id, first_stream_id + len(ensemble), dtype=np.int64)
    out = Ensemble.from_arrays(ensemble.pos @ refl.T, ensemble.vel @ refl.T, ensemble.state,
                               ensemble.master_seed, ids, time=ensemble.time)
    out.alive = ensemble.alive.copy()
    return out


def symmetric_launch(ensemble: Ensemble, axis_angle: float = 0.0) -> Ensemble:
    """Interleave each atom with its mirror image, ``[a0, m0, a1, m1, ...]``."""
    mirror = mirror_copy(ensemble, axis_angle)
    order = np.empty(2 * len(ensemble), dtype=np.int64)
    order[0::2] = np.arange(len(ensemble))
    order[1::2] = np.arange(len(ensemble)) + len(ensemble)
    return Ensemble.concat([ensemble, mirror]).take(order)


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------


def total_energy(atom, scene: Scene) -> float:
    """Kinetic plus potential energy of one :class:`Atom` (J)."""
    u = float(evaluate(scene, atom.position[0], atom.position[1], int(atom.state), force=False)["U"])
    v = np.asarray(atom.velocity, dtype=float)
    return 0.5 * scene.species.mass * float(v @ v) + u


def ensemble_energy(ensemble: Ensemble, scene: Scene) -> np.ndarray:
    u = evaluate(scene, ensemble.pos[:, 0], ensemble.pos[:, 1], ensemble.state, force=False)["U"]
    return 0.5 * scene.species.mass * np.einsum("ij,ij->i", ensemble.vel, ensemble.vel) + u


class _Integrator:
    """Velocity-Verlet stepper working in place on one ensemble chunk."""

    def __init__(self, ens: Ensemble, scene: Scene, dt: float, scattering: bool, recoil_axis: float = 0.0):
        self.ens = ens
        self.scene = scene
        self.dt = dt
        self.scattering = scattering
        self.mass = scene.species.mass
        self.v_rec = scene.species.recoil_velocity
        self.recoil_dir = np.array([math.cos(recoil_axis), math.sin(recoil_axis)])
        self.center = scene.domain_center
        self.acc = np.zeros_like(ens.pos)
        self.energy_u = np.zeros(len(ens))
        self.rate = np.zeros(len(ens))
        self._refresh(np.flatnonzero(ens.alive))

    def _refresh(self, idx):
        if idx.size == 0:
            return
        p = self.ens.pos[idx]
        out = evaluate(self.scene, p[:, 0], p[:, 1], self.ens.state[idx], rate=self.scattering)
        self.acc[idx, 0] = out["fx"] / self.mass
        self.acc[idx, 1] = out["fy"] / self.mass
        self.energy_u[idx] = out["U"]
        if self.scattering:
            self.rate[idx] = out["rate"]

    def step(self, t_new: float):
        ens = self.ens
        idx = np.flatnonzero(ens.alive)
        if idx.size == 0:
            return
        dt = self.dt
        v_half = ens.vel[idx] + (0.5 * dt) * self.acc[idx]
        ens.pos[idx] = ens.pos[idx] + dt * v_half
        inside = self.scene.contains(ens.pos[idx, 0], ens.pos[idx, 1])
        lost = idx[~inside]
        ens.vel[idx] = v_half
        ens.alive[lost] = False
        ens.exit_time[lost] = t_new
        idx = idx[inside]
        self._refresh(idx)
        ens.vel[idx] = ens.vel[idx] + (0.5 * dt) * self.acc[idx]
        if self.scattering:
            self.scatter(idx)
        self._check_escape(idx, t_new)

    def _check_escape(self, idx, t_new):
        ens = self.ens
        v = ens.vel[idx]
        energy = 0.5 * self.mass * np.einsum("ij,ij->i", v, v) + self.energy_u[idx]
        outward = np.einsum("ij,ij->i", v, ens.pos[idx] - self.center) > 0
        unbound = (energy > 0) & outward
        ens.outbound_time[idx] = np.where(unbound, ens.outbound_time[idx] + self.dt, 0.0)
        gone = idx[ens.outbound_time[idx] > ESCAPE_DWELL]
        ens.alive[gone] = False
        ens.exit_time[gone] = t_new

    def scatter(self, idx):
        ens = self.ens
        p = self.rate[idx] * self.dt
        if p.size and p.max() >= MAX_SCATTER_PROBABILITY:
            raise TimeStepError(f"scattering probability per step {p.max():.3g} >= {MAX_SCATTER_PROBABILITY}")
        # exponential-threshold sampling of the per-step hazard
        ens.hazard[idx] += p
        fire = idx[ens.hazard[idx] >= ens.threshold[idx]]
        for i in fire:
            u = _generator(ens.keys[i], _PURPOSE_SCATTER, int(ens.n_events[i])).random(2)
            phi = 2.0 * math.pi * u[0]
            ens.vel[i] += self.v_rec * (self.recoil_dir + np.array([math.cos(phi), math.sin(phi)]))
            ens.hazard[i] = 0.0
            ens.threshold[i] = -math.log1p(-u[1])
            ens.n_events[i] += 1


def step(ensemble: Ensemble, scene: Scene, dt: float) -> Ensemble:
    """One velocity-Verlet step of all alive atoms; returns a new ensemble."""
    out = ensemble.copy()
    integ = _Integrator(out, scene, dt, scattering=False)
    integ.step(out.time + dt)
    out.time = ensemble.time + dt
    return out


def apply_scattering(ensemble: Ensemble, scene: Scene, dt: float, recoil_axis: float = 0.0) -> Ensemble:
    """Draw spontaneous-scattering events for one interval ``dt``.

    Each event adds one recoil kick along ``recoil_axis`` and one in a uniformly
    random in-plane direction.
    """
    out = ensemble.copy()
    integ = _Integrator(out, scene, dt, scattering=True, recoil_axis=recoil_axis)
    integ.scatter(np.flatnonzero(out.alive))
    return out


@dataclass
class TrajectoryRecord:
    """Snapshots of an ensemble plus run statistics."""

    times: np.ndarray
    stream_id: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    state: np.ndarray
    alive: np.ndarray
    final: Ensemble
    dt: float
    n_steps: int
    walltime: float = 0.0

    @property
    def step_cost(self) -> float:
        """Mean wall time per step (s)."""
        return self.walltime / self.n_steps if self.n_steps else 0.0

    def snapshot(self, k: int) -> Ensemble:
        ens = self.final.copy()
        ens.pos = self.pos[k].copy()
        ens.vel = self.vel[k].copy()
        ens.state = self.state[k].copy()
        ens.alive = self.alive[k].copy()
        ens.time = float(self.times[k])
        return ens

    def write_csv(self, fh) -> None:
        """Write ``t_s, atom_id, x_m, y_m, vx_mps, vy_mps, state, alive`` rows."""
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t_s", "atom_id", "x_m", "y_m", "vx_mps", "vy_mps", "state", "alive"])
        ids = [str(int(i)) for i in self.stream_id]
        for k, t in enumerate(self.times):
            ts = repr(float(t))
            xs, ys = self.pos[k, :, 0].tolist(), self.pos[k, :, 1].tolist()
            vxs, vys = self.vel[k, :, 0].tolist(), self.vel[k, :, 1].tolist()
            st, al = self.state[k].tolist(), self.alive[k].tolist()
            writer.writerows(
                (ts, ids[i], repr(xs[i]), repr(ys[i]), repr(vxs[i]), repr(vys[i]), st[i], int(al[i]))
                for i in range(len(ids))
            )

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def _propagate_chunk(args):
    ens, scene, dt, n_steps, stride, scattering, recoil_axis = args
    t0 = ens.time
    integ = _Integrator(ens, scene, dt, scattering, recoil_axis)
    n_snap = n_steps // stride + 1 + (1 if n_steps % stride else 0)
    n = len(ens)
    pos = np.empty((n_snap, n, 2))
    vel = np.empty((n_snap, n, 2))
    state = np.empty((n_snap, n), dtype=np.int8)
    alive = np.empty((n_snap, n), dtype=bool)
    k = 0

    def record():
        nonlocal k
        pos[k] = ens.pos
        vel[k] = ens.vel
        state[k] = ens.state
        alive[k] = ens.alive
        k += 1

    record()
    for i in range(1, n_steps + 1):
        integ.step(t0 + i * dt)
        if i % stride == 0 or i == n_steps:
            record()
    ens.time = t0 + n_steps * dt
    return ens, pos, vel, state, alive


def propagate(ensemble: Ensemble, scene: Scene, config: RunConfig, workers: int = 1) -> TrajectoryRecord:
    """Integrate an ensemble for ``config.duration``.

    Parameters
    ----------
    ensemble : Ensemble
        Not modified.
    scene : Scene
    config : RunConfig
    workers : int
        Number of processes. Atoms are split into contiguous chunks and the
        results merged in atom order; output is bitwise independent of this.

    Returns
    -------
    TrajectoryRecord
        Snapshots every ``record_stride`` steps, always including the first
        and last state.
    """
    dt = resolve_dt(scene, config)
    n_steps = int(round(config.duration / dt))
    stride = config.record_stride
    start = time.perf_counter()
    ens = ensemble.copy()
    n = len(ens)
    workers = max(1, min(int(workers), max(n, 1)))
    jobs = []
    bounds = np.linspace(0, n, workers + 1).astype(int)
    for a, b in zip(bounds[:-1], bounds[1:]):
        jobs.append((ens.take(slice(a, b)), scene, dt, n_steps, stride, config.scattering, config.recoil_axis))
    if workers == 1:
        results = [_propagate_chunk(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_propagate_chunk, jobs))
    final = Ensemble.concat([r[0] for r in results]) if n else results[0][0]
    final.time = ensemble.time + n_steps * dt
    pos, vel, state, alive = (np.concatenate([r[j] for r in results], axis=1) for j in range(1, 5))
    snap_steps = list(range(0, n_steps + 1, stride))
    if snap_steps[-1] != n_steps:
        snap_steps.append(n_steps)
    times = ensemble.time + np.asarray(snap_steps, dtype=float) * dt
    return TrajectoryRecord(times, final.stream_id.copy(), pos, vel, state, alive, final, dt, n_steps,
                            time.perf_counter() - start)


# ---------------------------------------------------------------------------
# Ports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Port:
    """Half-strip starting at ``start`` and extending along ``direction``."""

    name: str
    start: tuple[float, float]
    direction: tuple[float, float]
    half_width: float


@dataclass(frozen=True)
class PortLayout:
    ports: tuple[Port, ...]
    exclusion_centers: tuple[tuple[float, float], ...] = ()
    exclusion_radius: float = 0.0

    def names(self) -> list[str]:
        return [p.name for p in self.ports]


def default_ports(scene: Scene, half_width_waists: float = 10.0) -> PortLayout:
    """Ports beyond the outermost crossings of every guide.

    Each crossed guide gets ``"<name>+"`` and ``"<name>-"`` ports starting
    ``4 w0`` past its last crossing in either direction. Atoms within ``4 w0``
    of any crossing are excluded.
    """
    crossings = scene.intersections()
    ports = []
    for gi, g in enumerate(scene.guides):
        s_vals = [float(g.local_coords(*p)[0]) for i, j, p in crossings if gi in (i, j)]
        if not s_vals:
            continue
        gap = 4.0 * g.waist
        name = g.name or f"g{gi}"
        u = tuple(g.direction)
        ports.append(Port(f"{name}+", tuple(g.point_at(max(s_vals) + gap)), u, half_width_waists * g.waist))
        ports.append(Port(f"{name}-", tuple(g.point_at(min(s_vals) - gap)), (-u[0], -u[1]),
                          half_width_waists * g.waist))
    radius = 4.0 * max((g.waist for g in scene.guides), default=0.0)
    return PortLayout(tuple(ports), tuple(tuple(p) for _, _, p in crossings), radius)


def port_index(ensemble: Ensemble, layout: PortLayout) -> np.ndarray:
    """Port number of every atom, ``-1`` for unassigned or lost atoms."""
    if not layout.ports:
        raise ValueError("port list is empty")
    pos = ensemble.pos
    n = len(ensemble)
    dist = np.full((len(layout.ports), n), np.inf)
    for k, port in enumerate(layout.ports):
        rel = pos - np.asarray(port.start)
        ux, uy = port.direction
        along = rel[:, 0] * ux + rel[:, 1] * uy
        across = np.abs(-rel[:, 0] * uy + rel[:, 1] * ux)
        ok = (along >= 0) & (across <= port.half_width)
        dist[k, ok] = across[ok]
    best = np.argmin(dist, axis=0) if n else np.zeros(0, dtype=int)
    result = np.where(np.isfinite(dist[best, np.arange(n)]), best, -1) if n else np.zeros(0, dtype=int)
    for c in layout.exclusion_centers:
        inside = np.hypot(pos[:, 0] - c[0], pos[:, 1] - c[1]) < layout.exclusion_radius
        result[inside] = -1
    result[~ensemble.alive] = -1
    return result


def assign_ports(ensemble: Ensemble, scene: Scene, port_definitions: PortLayout | None = None) -> dict[str, int]:
    """Count alive atoms per port.

    Returns
    -------
    dict
        Port name to count, in port order, plus ``"unassigned"`` and ``"lost"``.
    """
    layout = default_ports(scene) if port_definitions is None else port_definitions
    idx = port_index(ensemble, layout)
    counts = {p.name: int(np.count_nonzero(idx == k)) for k, p in enumerate(layout.ports)}
    counts["unassigned"] = int(np.count_nonzero((idx < 0) & ensemble.alive))
    counts["lost"] = int(np.count_nonzero(~ensemble.alive))
    return counts
