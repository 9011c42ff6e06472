"""Split-step Fourier propagation of 2D matter waves through miniature scenes.

Millimetre networks cannot be resolved at the 0.1 um de Broglie scale, so
coherent splitting is studied on micrometre-sized copies of the structures.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import scipy.fft
from matplotlib.path import Path
from scipy.linalg import eigh_tridiagonal
from scipy.special import ndtr

from .potential import HyperfineState, evaluate
from .scene import RB85, Far, Flat, GuideSpec, Scene, SpeciesConstants, SpotBeam

#: Absorbing layer width as a fraction of the grid on each side.
ABSORBER_FRACTION = 0.1
#: Largest potential phase allowed per step (rad).
MAX_PHASE_PER_STEP = 0.1


class PhaseStepError(ValueError):
    """``dt * max|U| / hbar`` exceeds the split-step accuracy bound."""


def _is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@dataclass(frozen=True)
class GridSpec:
    """Uniform cell-centred grid.

    Points sit at ``center + (i - n/2 + 1/2) * spacing`` so the grid is
    symmetric about its centre and contains no point on the centre lines.
    """

    nx: int
    ny: int
    extent: tuple[float, float]
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        for n in (self.nx, self.ny):
            if not _is_power_of_two(n):
                raise ValueError(f"grid sizes must be powers of two, got {n}")
        if not (self.extent[0] > 0 and self.extent[1] > 0):
            raise ValueError("grid extent must be positive")

    @classmethod
    def with_spacing(cls, nx: int, ny: int, spacing: float, center=(0.0, 0.0)) -> "GridSpec":
        return cls(nx, ny, (nx * spacing, ny * spacing), center)

    @property
    def dx(self) -> float:
        return self.extent[0] / self.nx

    @property
    def dy(self) -> float:
        return self.extent[1] / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def x(self) -> np.ndarray:
        return self.center[0] + (np.arange(self.nx) - self.nx / 2 + 0.5) * self.dx

    @property
    def y(self) -> np.ndarray:
        return self.center[1] + (np.arange(self.ny) - self.ny / 2 + 0.5) * self.dy

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        hx, hy = 0.5 * self.extent[0], 0.5 * self.extent[1]
        return self.center[0] - hx, self.center[0] + hx, self.center[1] - hy, self.center[1] + hy

    def wavenumbers(self):
        kx = 2.0 * np.pi * scipy.fft.fftfreq(self.nx, self.dx)
        ky = 2.0 * np.pi * scipy.fft.fftfreq(self.ny, self.dy)
        return kx, ky

    def max_resolved_speed(self, mass: float = RB85.mass) -> float:
        """Speed whose de Broglie wavelength is eight grid spacings."""
        return 2.0 * np.pi * RB85.hbar / (mass * 8.0 * max(self.dx, self.dy))

    def check_resolution(self, speed: float, mass: float = RB85.mass) -> None:
        if speed > self.max_resolved_speed(mass) * (1 + 1e-12):
            raise ValueError(f"spacing {max(self.dx, self.dy):.3g} m exceeds lambda_dB/8 at {speed:.3g} m/s")


@dataclass
class Wavepacket:
    """Complex amplitude on a grid, normalized so that ``sum |psi|^2 dA`` is the probability."""

    psi: np.ndarray
    grid: GridSpec
    time: float = 0.0
    state: HyperfineState = HyperfineState.F2

    def __post_init__(self):
        if self.psi.shape != (self.grid.nx, self.grid.ny):
            raise ValueError(f"amplitude shape {self.psi.shape} does not match grid ({self.grid.nx}, {self.grid.ny})")

    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def norm(self) -> float:
        return float(np.sum(self.density()) * self.grid.cell_area)

    def centroid(self) -> np.ndarray:
        rho = self.density()
        X, Y = self.grid.mesh()
        total = rho.sum()
        return np.array([(rho * X).sum() / total, (rho * Y).sum() / total])

    def position_variance(self) -> np.ndarray:
        rho = self.density()
        X, Y = self.grid.mesh()
        total = rho.sum()
        c = self.centroid()
        return np.array([(rho * (X - c[0]) ** 2).sum() / total, (rho * (Y - c[1]) ** 2).sum() / total])

    def mean_wavevector(self) -> np.ndarray:
        phi = scipy.fft.fft2(self.psi)
        rho = np.abs(phi) ** 2
        kx, ky = self.grid.wavenumbers()
        total = rho.sum()
        return np.array([(rho.sum(axis=1) * kx).sum() / total, (rho.sum(axis=0) * ky).sum() / total])

    def overlap(self, other: "Wavepacket") -> complex:
        return complex(np.vdot(other.psi, self.psi) * self.grid.cell_area)


def init_gaussian_packet(grid: GridSpec, center, sigma, velocity=(0.0, 0.0),
                         species: SpeciesConstants = RB85, state=HyperfineState.F2) -> Wavepacket:
    """Normalized Gaussian packet with a plane-wave momentum.

    Parameters
    ----------
    grid : GridSpec
    center : (float, float)
    sigma : float or (float, float)
        Rms widths of the probability density (m).
    velocity : (float, float)
        Group velocity (m/s).

    Raises
    ------
    ValueError
        If more than 1e-6 of the probability falls outside the grid.
    """
    sx, sy = (sigma, sigma) if np.ndim(sigma) == 0 else sigma
    x0, y0 = center
    xmin, xmax, ymin, ymax = grid.bounds
    inside = (ndtr((xmax - x0) / sx) - ndtr((xmin - x0) / sx)) * (ndtr((ymax - y0) / sy) - ndtr((ymin - y0) / sy))
    if 1.0 - inside > 1e-6:
        raise ValueError(f"packet clipped by grid edge: {1.0 - inside:.3g} of the probability lies outside")
    kx = species.mass * velocity[0] / species.hbar
    ky = species.mass * velocity[1] / species.hbar
    x = grid.x[:, None]
    y = grid.y[None, :]
    psi = np.exp(-((x - x0) ** 2) / (4 * sx * sx) - (y - y0) ** 2 / (4 * sy * sy)) * np.exp(1j * (kx * x + ky * y))
    psi /= math.sqrt(np.sum(np.abs(psi) ** 2) * grid.cell_area)
    return Wavepacket(psi, grid, 0.0, HyperfineState(int(state)))


def potential_on_grid(scene: Scene, grid: GridSpec, state=HyperfineState.F2) -> np.ndarray:
    X, Y = grid.mesh()
    return evaluate(scene, X, Y, int(state), force=False)["U"]


def absorber_mask(grid: GridSpec, fraction: float = ABSORBER_FRACTION) -> np.ndarray:
    """Amplitude mask falling as ``sin^2`` to zero across the outer ``fraction`` of each side."""

    def ramp(n):
        width = int(round(fraction * n))
        edge = np.minimum(np.arange(n), n - 1 - np.arange(n))
        r = np.ones(n)
        if width > 0:
            inner = edge < width
            r[inner] = np.sin(0.5 * np.pi * edge[inner] / width) ** 2
        return r

    return np.outer(ramp(grid.nx), ramp(grid.ny))


class Propagator:
    """Second-order Strang splitting with merged half kinetic steps.

    Parameters
    ----------
    grid : GridSpec
    potential : ndarray
        Potential energy on the grid (J).
    dt : float
    mass : float
    absorb : bool
        Apply the boundary mask once per step.
    reference_energy : float
        Constant subtracted from the potential; only changes the global phase.
    """

    def __init__(self, grid: GridSpec, potential: np.ndarray, dt: float, mass: float = RB85.mass,
                 hbar: float = RB85.hbar, absorb: bool = True, reference_energy: float = 0.0):
        shifted = potential - reference_energy
        phase = dt * float(np.max(np.abs(shifted))) / hbar
        if phase >= MAX_PHASE_PER_STEP:
            raise PhaseStepError(f"dt * max|U| / hbar = {phase:.3g} rad >= {MAX_PHASE_PER_STEP}")
        self.grid = grid
        self.dt = dt
        self.reference_energy = reference_energy
        kx, ky = grid.wavenumbers()
        k2 = kx[:, None] ** 2 + ky[None, :] ** 2
        omega = hbar * k2 / (2.0 * mass)
        self.kin_half = np.exp(-0.5j * omega * dt)
        self.kin_full = self.kin_half * self.kin_half
        self.pot = np.exp(-1j * shifted * dt / hbar)
        if absorb:
            self.pot = self.pot * absorber_mask(grid)

    @staticmethod
    def suggest_dt(potential: np.ndarray, hbar: float = RB85.hbar, reference_energy: float = 0.0,
                   safety: float = 0.99) -> float:
        peak = float(np.max(np.abs(potential - reference_energy)))
        return safety * MAX_PHASE_PER_STEP * hbar / peak

    def run(self, packet: Wavepacket, n_steps: int, observe=None, every: int = 0) -> Wavepacket:
        """Advance ``packet`` by ``n_steps``; ``observe(packet)`` is called every ``every`` steps."""
        psi = packet.psi.astype(complex, copy=True)
        t0 = packet.time
        fft2, ifft2 = scipy.fft.fft2, scipy.fft.ifft2
        if n_steps == 0:
            return replace(packet, psi=psi)
        psi = ifft2(fft2(psi) * self.kin_half)
        for i in range(1, n_steps + 1):
            psi *= self.pot
            kin = self.kin_full if i < n_steps else self.kin_half
            if observe is not None and every and i % every == 0 and i < n_steps:
                # close the pending half step for an exact observation
                snap = ifft2(fft2(psi) * self.kin_half)
                observe(replace(packet, psi=snap, time=t0 + i * self.dt))
            psi = ifft2(fft2(psi, overwrite_x=True) * kin, overwrite_x=True)
        return replace(packet, psi=psi, time=t0 + n_steps * self.dt)


def split_step(packet: Wavepacket, scene: Scene, dt: float, absorb: bool = True) -> Wavepacket:
    """One symmetric split-step: half kinetic, potential, half kinetic."""
    potential = potential_on_grid(scene, packet.grid, packet.state)
    prop = Propagator(packet.grid, potential, dt, scene.species.mass, scene.species.hbar, absorb)
    return prop.run(packet, 1)


def rectangle(xmin: float, xmax: float, ymin: float, ymax: float) -> np.ndarray:
    return np.array([(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)])


def region_mask(grid: GridSpec, region) -> np.ndarray:
    X, Y = grid.mesh()
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return Path(np.asarray(region, dtype=float)).contains_points(pts).reshape(X.shape)


def port_population(packet: Wavepacket, region) -> float:
    """Probability inside the polygon ``region`` (sequence of vertices)."""
    mask = region_mask(packet.grid, region)
    return float(np.sum(packet.density()[mask]) * packet.grid.cell_area)


# ---------------------------------------------------------------------------
# Miniature twin-guide interferometer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwinGuideInterferometer:
    """Mach-Zehnder made of two tunnel-coupled parallel guides.

    Guide 1 runs at ``y = +separation/2`` and guide 2 at ``-separation/2``.
    The coupled region acts as a beam splitter: a packet launched in guide 1
    splits between the guides, passes a chain of spots on guide 2 that acts
    as a phase shifter, and recombines in the remaining coupled region. The
    ports are the half planes ``y > 0`` and ``y < 0`` at the readout time.

    Parameters
    ----------
    waist : float
        Guide and spot waist (m).
    depth_quanta : float
        Guide depth in units of the transverse vibrational quantum.
    separation : float
        Axis distance between the guides (m).
    kinetic_quanta : float
        Launch kinetic energy in vibrational quanta.
    packet_length : float
        Longitudinal rms width of the launched density (m).
    n_spots, spot_spacing : int, float
        Phase-shifter chain on guide 2.
    shifter_time : float
        Time at which the packet centre passes the chain centre (s).
    duration : float
        Readout time (s).
    guide_length : float
        Length of each guide (m).
    max_phase_depth : float
        Largest phase-well depth the grid and time step must handle, as a
        multiple of the guide depth.
    n_grid : int
        Grid points per axis.
    """

    waist: float = 1e-6
    depth_quanta: float = 2.5
    separation: float = 1.3e-6
    kinetic_quanta: float = 2.0
    packet_length: float = 3e-6
    n_spots: int = 5
    spot_spacing: float = 0.8e-6
    shifter_time: float = 1.7e-3
    duration: float = 3.4e-3
    guide_length: float = 45e-6
    guide_tail: float = 12e-6
    max_phase_depth: float = 0.4
    n_grid: int = 1024
    ny_grid: int | None = None
    resolution: float = 8.0
    species: SpeciesConstants = RB85

    @property
    def guide_depth(self) -> float:
        # U0 / (hbar omega) = depth_quanta with omega = sqrt(4 U0 / (m w^2))
        hbar, m, w = self.species.hbar, self.species.mass, self.waist
        return 4.0 * (self.depth_quanta * hbar) ** 2 / (m * w * w)

    @property
    def omega(self) -> float:
        return math.sqrt(4.0 * self.guide_depth / (self.species.mass * self.waist**2))

    @property
    def speed(self) -> float:
        energy = self.kinetic_quanta * self.species.hbar * self.omega
        return math.sqrt(2.0 * energy / self.species.mass)

    @property
    def transverse_sigma(self) -> float:
        return math.sqrt(self.species.hbar / (2.0 * self.species.mass * self.omega))

    def grid(self) -> GridSpec:
        m = self.species.mass
        top = 2.0 * (1.1 + 1.6 * self.max_phase_depth) * self.guide_depth / m
        vmax = math.sqrt(self.speed**2 + top)
        spacing = 2.0 * math.pi * self.species.hbar / (m * vmax) / self.resolution
        ny = self.ny_grid or self.n_grid
        return GridSpec.with_spacing(self.n_grid, ny, spacing)

    def start_x(self, grid: GridSpec) -> float:
        xmin = grid.bounds[0]
        return xmin + ABSORBER_FRACTION * grid.extent[0] + self.guide_tail

    def scene(self, phase_depth: float, grid: GridSpec | None = None) -> Scene:
        """Scene with a phase-shifter chain of depth ``phase_depth`` (J, >= 0)."""
        grid = grid or self.grid()
        x0 = self.start_x(grid)
        x_start = x0 - self.guide_tail
        half = 0.5 * self.separation
        guides = (
            GuideSpec((x_start, half), 0.0, self.waist, self.guide_depth, Flat(self.guide_length), "H", Far(), "g1"),
            GuideSpec((x_start, -half), 0.0, self.waist, self.guide_depth, Flat(self.guide_length), "V", Far(), "g2"),
        )
        xc = x0 + self.speed * self.shifter_time
        spots = tuple(
            SpotBeam((xc + (j - (self.n_spots - 1) / 2) * self.spot_spacing, -half), self.waist,
                     -phase_depth, -phase_depth, name=f"phase{j}")
            for j in range(self.n_spots)
        ) if phase_depth else ()
        return Scene(self.species, guides, spots, grid.bounds)

    def packet(self, grid: GridSpec, symmetric: bool = False) -> Wavepacket:
        """Launch packet in guide 1, or centred between the guides if ``symmetric``."""
        y0 = 0.0 if symmetric else 0.5 * self.separation
        sigma = (self.packet_length, self.transverse_sigma)
        return init_gaussian_packet(grid, (self.start_x(grid), y0), sigma, (self.speed, 0.0), self.species)

    def ports(self, grid: GridSpec):
        xmin, xmax, ymin, ymax = grid.bounds
        pad = grid.dx
        upper = rectangle(xmin - pad, xmax + pad, 0.0, ymax + pad)
        lower = rectangle(xmin - pad, xmax + pad, ymin - pad, 0.0)
        return upper, lower

    def numerics(self, grid: GridSpec) -> tuple[float, int, float]:
        """Time step, step count and reference energy shared by every scan point.

        Both follow from the deepest scene of the scan; the reference energy
        centres its potential range so the phase bound allows a larger step.
        """
        deepest = potential_on_grid(self.scene(self.max_phase_depth * self.guide_depth, grid), grid)
        reference = 0.5 * (float(deepest.max()) + float(deepest.min()))
        peak = float(np.max(np.abs(deepest - reference)))
        n = int(math.ceil(self.duration * peak / (0.99 * MAX_PHASE_PER_STEP * self.species.hbar)))
        return self.duration / n, n, reference

    def localized_modes(self, n: int = 4096):
        """Transverse modes localized on guide 1 and guide 2 (1D, grid ``y``, densities)."""
        half_span = 6.0 * self.waist + self.separation
        y = np.linspace(-half_span, half_span, n)
        h = y[1] - y[0]
        m, hbar = self.species.mass, self.species.hbar
        w = self.waist
        d = 0.5 * self.separation
        u = -self.guide_depth * (np.exp(-2 * (y - d) ** 2 / w**2) + np.exp(-2 * (y + d) ** 2 / w**2))
        t = hbar**2 / (2 * m * h * h)
        _, vecs = eigh_tridiagonal(u + 2 * t, np.full(n - 1, -t), select="i", select_range=(0, 1))
        even, odd = vecs[:, 0], vecs[:, 1]
        if even.sum() < 0:
            even = -even
        if (odd * y).sum() < 0:
            odd = -odd
        upper = (even + odd) / math.sqrt(2.0)
        lower = (even - odd) / math.sqrt(2.0)
        return y, upper**2, lower**2

    def phase_per_depth(self) -> float:
        """Differential phase (rad) per joule of phase-well depth.

        The chain shifts the guide-2 mode relative to the guide-1 mode by the
        mode-averaged spot potential; the phase is that shift integrated over
        the transit at the launch speed.
        """
        y, rho1, rho2 = self.localized_modes()
        d = 0.5 * self.separation
        transverse = np.exp(-2.0 * (y + d) ** 2 / self.waist**2)
        shift = (rho2 * transverse).sum() / rho2.sum() - (rho1 * transverse).sum() / rho1.sum()
        length = self.n_spots * self.waist * math.sqrt(math.pi / 2.0)
        return shift * length / (self.species.hbar * self.speed)

    def pi_depth(self) -> float:
        """Phase-well depth whose accumulated differential phase equals pi."""
        return math.pi / self.phase_per_depth()

    def run(self, phase_depth: float, symmetric: bool = False, grid: GridSpec | None = None):
        """Propagate one packet; returns ``(p_out1, p_out2, losses)``."""
        grid = grid or self.grid()
        scene = self.scene(phase_depth, grid)
        dt, n, reference = self.numerics(grid)
        potential = potential_on_grid(scene, grid)
        prop = Propagator(grid, potential, dt, self.species.mass, self.species.hbar, True, reference)
        final = prop.run(self.packet(grid, symmetric), n)
        upper, lower = self.ports(grid)
        p1 = port_population(final, upper)
        p2 = port_population(final, lower)
        return p1, p2, 1.0 - final.norm()


@dataclass
class FringeScan:
    depths: np.ndarray
    p_out1: np.ndarray
    p_out2: np.ndarray
    losses: np.ndarray

    @property
    def contrast(self) -> float:
        lo, hi = float(self.p_out1.min()), float(self.p_out1.max())
        return (hi - lo) / (hi + lo) if hi + lo > 0 else 0.0

    @property
    def correlation(self) -> float:
        return float(np.corrcoef(self.p_out1, self.p_out2)[0, 1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["depth_J", "p_out1", "p_out2", "losses", "contrast"])
        c = repr(self.contrast)
        for row in zip(self.depths, self.p_out1, self.p_out2, self.losses):
            writer.writerow([repr(float(v)) for v in row] + [c])
        return buf.getvalue()


def _scan_point(args):
    template, depth = args
    return template.run(depth)


def mz_fringe_scan(scene_template: TwinGuideInterferometer, phase_well_depths, packet_config=None,
                   workers: int = 1) -> FringeScan:
    """Output populations versus phase-well depth.

    Parameters
    ----------
    scene_template : TwinGuideInterferometer
    phase_well_depths : sequence of float
        Depths (J) of the phase-shifter chain.
    packet_config : dict, optional
        Field overrides applied to the template (for example ``packet_length``).
    workers : int
        Scan points are independent and may run in separate processes.
    """
    template = replace(scene_template, **(packet_config or {}))
    depths = np.asarray(phase_well_depths, dtype=float)
    if depths.size and depths.max() > template.max_phase_depth * template.guide_depth * (1 + 1e-9):
        template = replace(template, max_phase_depth=float(depths.max() / template.guide_depth))
    jobs = [(template, float(d)) for d in depths]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_scan_point, jobs))
    else:
        rows = [_scan_point(j) for j in jobs]
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    return FringeScan(depths, arr[:, 0], arr[:, 1], arr[:, 2])
