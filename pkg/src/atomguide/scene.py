"""Guide, spot-beam and species definitions plus preset guide geometries.

All geometry lives in the focal plane of the guide array. Lengths are in
metres, energies in joules, detunings in (non-angular) hertz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import constants

DEG = math.pi / 180.0

#: Lens pitch of the micro-lens array used by the Mach-Zehnder preset.
LENS_PITCH = 0.4e-3
#: Default crossing angle of the splitter presets.
DEFAULT_ANGLE = 42.0 * DEG
#: Default transverse waist of a line focus.
DEFAULT_WAIST = 7e-6
#: Default magnitude of the guide depth, expressed as a temperature.
DEFAULT_DEPTH_K = 450e-6
#: Gaussian longitudinal profiles are truncated at this many sigmas for geometry.
GAUSSIAN_SUPPORT_SIGMAS = 3.0


@dataclass(frozen=True)
class SpeciesConstants:
    """Atomic and physical constants for one alkali species.

    Defaults describe 85Rb on the D2 line.
    """

    mass: float = 1.40999e-25
    lambda_d2: float = 780.241e-9
    gamma: float = 6.0666e6
    hfs_split: float = 3.0357e9
    hbar: float = constants.hbar
    k_boltzmann: float = constants.k
    c_light: float = constants.c

    def __post_init__(self):
        for name in ("mass", "lambda_d2", "gamma", "hfs_split", "hbar", "k_boltzmann", "c_light"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")

    @property
    def omega_d2(self) -> float:
        """Angular transition frequency (rad/s)."""
        return 2.0 * math.pi * self.c_light / self.lambda_d2

    @property
    def gamma_angular(self) -> float:
        return 2.0 * math.pi * self.gamma

    @property
    def recoil_velocity(self) -> float:
        """Single-photon recoil velocity h / (m lambda)."""
        return 2.0 * math.pi * self.hbar / (self.mass * self.lambda_d2)

    def kelvin(self, temperature: float) -> float:
        """Convert a temperature to an energy in joules."""
        return temperature * self.k_boltzmann


RB85 = SpeciesConstants()


# ---------------------------------------------------------------------------
# Longitudinal profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Flat:
    """Uniform intensity on ``0 <= s <= length``, zero elsewhere."""

    length: float

    def factor(self, s):
        s = np.asarray(s, dtype=float)
        return np.where((s >= 0.0) & (s <= self.length), 1.0, 0.0)

    def slope(self, s):
        return np.zeros_like(np.asarray(s, dtype=float))

    def extent(self) -> tuple[float, float]:
        return 0.0, self.length

    def problems(self) -> list[str]:
        return [] if self.length > 0 else [f"flat length must be positive, got {self.length}"]


@dataclass(frozen=True)
class Gradient:
    """Intensity ramping linearly from ``start_scale`` to ``end_scale`` over the length."""

    length: float
    start_scale: float = 0.5
    end_scale: float = 1.0

    def factor(self, s):
        s = np.asarray(s, dtype=float)
        inside = (s >= 0.0) & (s <= self.length)
        ramp = self.start_scale + (self.end_scale - self.start_scale) * s / self.length
        return np.where(inside, ramp, 0.0)

    def slope(self, s):
        s = np.asarray(s, dtype=float)
        inside = (s >= 0.0) & (s <= self.length)
        return np.where(inside, (self.end_scale - self.start_scale) / self.length, 0.0)

    def extent(self) -> tuple[float, float]:
        return 0.0, self.length

    def problems(self) -> list[str]:
        out = []
        if not self.length > 0:
            out.append(f"gradient length must be positive, got {self.length}")
        for name in ("start_scale", "end_scale"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                out.append(f"gradient {name} must lie in (0, 1], got {value}")
        return out


@dataclass(frozen=True)
class Gaussian:
    """Gaussian intensity envelope ``exp(-(s - center_s)^2 / (2 sigma^2))``."""

    center_s: float
    sigma: float

    def factor(self, s):
        u = (np.asarray(s, dtype=float) - self.center_s) / self.sigma
        return np.exp(-0.5 * u * u)

    def slope(self, s):
        s = np.asarray(s, dtype=float)
        return -(s - self.center_s) / self.sigma**2 * self.factor(s)

    def extent(self) -> tuple[float, float]:
        half = GAUSSIAN_SUPPORT_SIGMAS * self.sigma
        return self.center_s - half, self.center_s + half

    def problems(self) -> list[str]:
        return [] if self.sigma > 0 else [f"gaussian sigma must be positive, got {self.sigma}"]


LongitudinalProfile = Union[Flat, Gradient, Gaussian]


def profile_factor(profile: LongitudinalProfile, s):
    """Relative intensity of ``profile`` at longitudinal coordinate ``s``.

    Parameters
    ----------
    profile : Flat, Gradient or Gaussian
    s : float or array_like
        Distance along the guide axis from the guide origin (m).

    Returns
    -------
    float or ndarray
        Value in [0, 1]. Flat and Gradient profiles vanish outside their support.
    """
    value = profile.factor(s)
    return float(value) if np.ndim(value) == 0 else value


# ---------------------------------------------------------------------------
# Beams
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Far:
    """Far-detuned light acting identically on both hyperfine states.

    ``delta`` only enters the photon-scattering rate.
    """

    delta: float = -500e9


@dataclass(frozen=True)
class Selective:
    """Near-detuned light whose sign and strength depend on the hyperfine state.

    ``peak_depth`` of the owning element refers to the F=2 coupling.
    """

    delta_f2: float = -1020e6
    delta_f3: float = 2020e6

    def detuning(self, state) -> float:
        return self.delta_f2 if int(state) == 2 else self.delta_f3


DetuningClass = Union[Far, Selective]


@dataclass(frozen=True)
class GuideSpec:
    """One line-focus waveguide.

    Parameters
    ----------
    origin : (float, float)
        Point where the longitudinal coordinate ``s`` is zero (m).
    angle : float
        Direction of the guide axis in the plane (rad).
    waist : float
        Transverse 1/e^2 intensity radius (m).
    peak_depth : float
        Magnitude of the depth at profile factor 1 (J, >= 0).
    profile : Flat, Gradient or Gaussian
    polarization : {"H", "V"}
    detuning : Far or Selective
    name : str
    """

    origin: tuple[float, float]
    angle: float
    waist: float
    peak_depth: float
    profile: LongitudinalProfile
    polarization: str = "H"
    detuning: DetuningClass = field(default_factory=Far)
    name: str = ""

    @property
    def direction(self) -> np.ndarray:
        return np.array([math.cos(self.angle), math.sin(self.angle)])

    @property
    def normal(self) -> np.ndarray:
        return np.array([-math.sin(self.angle), math.cos(self.angle)])

    def local_coords(self, x, y):
        """Longitudinal and signed transverse coordinates of points ``(x, y)``."""
        dx = np.asarray(x, dtype=float) - self.origin[0]
        dy = np.asarray(y, dtype=float) - self.origin[1]
        c, s = math.cos(self.angle), math.sin(self.angle)
        return dx * c + dy * s, -dx * s + dy * c

    def point_at(self, s: float) -> np.ndarray:
        return np.asarray(self.origin, dtype=float) + s * self.direction

    def axis_segment(self) -> tuple[np.ndarray, np.ndarray]:
        s0, s1 = self.profile.extent()
        return self.point_at(s0), self.point_at(s1)

    def signed_depth(self, state) -> float:
        """Potential at unit profile factor on axis for ``state`` (negative is attractive)."""
        if isinstance(self.detuning, Selective):
            d2 = self.detuning.delta_f2
            return self.peak_depth * abs(d2) / self.detuning.detuning(state)
        return -self.peak_depth

    def detuning_hz(self, state) -> float:
        if isinstance(self.detuning, Selective):
            return self.detuning.detuning(state)
        return self.detuning.delta


@dataclass(frozen=True)
class SpotBeam:
    """Circular Gaussian spot with separately specified depths per hyperfine state.

    Depths are signed energies; negative is attractive. The detunings only set
    the photon-scattering rate.
    """

    center: tuple[float, float]
    waist: float
    depth_f2: float
    depth_f3: float
    delta_f2: float = -1020e6
    delta_f3: float = 2020e6
    name: str = ""

    def depth(self, state) -> float:
        return self.depth_f2 if int(state) == 2 else self.depth_f3

    def detuning_hz(self, state) -> float:
        return self.delta_f2 if int(state) == 2 else self.delta_f3


# ---------------------------------------------------------------------------
# Scene
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scene:
    """Immutable collection of guides and spots with a rectangular domain.

    ``domain_bounds`` is ``(xmin, xmax, ymin, ymax)`` in metres. ``meta``
    carries derived geometry reported by the preset builders.
    """

    species: SpeciesConstants = RB85
    guides: tuple[GuideSpec, ...] = ()
    spots: tuple[SpotBeam, ...] = ()
    domain_bounds: tuple[float, float, float, float] = (-1e-3, 1e-3, -1e-3, 1e-3)
    meta: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "guides", tuple(self.guides))
        object.__setattr__(self, "spots", tuple(self.spots))
        object.__setattr__(self, "domain_bounds", tuple(float(b) for b in self.domain_bounds))
        if isinstance(self.meta, dict):
            object.__setattr__(self, "meta", tuple(sorted(self.meta.items())))

    @property
    def info(self) -> dict:
        return dict(self.meta)

    @property
    def domain_center(self) -> np.ndarray:
        xmin, xmax, ymin, ymax = self.domain_bounds
        return np.array([0.5 * (xmin + xmax), 0.5 * (ymin + ymax)])

    def contains(self, x, y):
        xmin, xmax, ymin, ymax = self.domain_bounds
        x = np.asarray(x)
        y = np.asarray(y)
        return (x >= xmin) & (x <= xmax) & (y >= ymin) & (y <= ymax)

    def guide_index(self, name: str) -> int:
        for i, g in enumerate(self.guides):
            if g.name == name:
                return i
        raise KeyError(f"no guide named {name!r}")

    def intersections(self) -> list[tuple[int, int, np.ndarray]]:
        """Crossing points of guide axis segments as ``(i, j, point)`` with ``i < j``."""
        out = []
        for i, a in enumerate(self.guides):
            for j in range(i + 1, len(self.guides)):
                p = segment_intersection(*a.axis_segment(), *self.guides[j].axis_segment())
                if p is not None:
                    out.append((i, j, p))
        return out

    def structure_bounds(self) -> tuple[float, float, float, float]:
        """Axis-aligned bounding box of all guide axis segments."""
        pts = np.array([p for g in self.guides for p in g.axis_segment()])
        return pts[:, 0].min(), pts[:, 0].max(), pts[:, 1].min(), pts[:, 1].max()

    def max_radial_frequency(self) -> float:
        """Highest transverse harmonic frequency among the guides (Hz)."""
        from .potential import radial_trap_frequency

        freqs = [
            radial_trap_frequency(abs(g.signed_depth(s)), g.waist, self.species.mass)
            for g in self.guides
            if g.waist > 0
            for s in (2, 3)
        ]
        return max(freqs, default=0.0)


def segment_intersection(p0, p1, q0, q1, eps: float = 1e-12):
    """Intersection point of segments ``p0-p1`` and ``q0-q1`` or ``None``.

    Parallel segments return ``None``.
    """
    p0, p1, q0, q1 = (np.asarray(v, dtype=float) for v in (p0, p1, q0, q1))
    r = p1 - p0
    s = q1 - q0
    denom = r[0] * s[1] - r[1] * s[0]
    scale = np.linalg.norm(r) * np.linalg.norm(s)
    if scale == 0 or abs(denom) <= eps * scale:
        return None
    qp = q0 - p0
    t = (qp[0] * s[1] - qp[1] * s[0]) / denom
    u = (qp[0] * r[1] - qp[1] * r[0]) / denom
    if -eps <= t <= 1 + eps and -eps <= u <= 1 + eps:
        return p0 + t * r
    return None


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str

    def __str__(self):
        return f"{self.kind}: {self.detail}"


def _guides_overlap(a: GuideSpec, b: GuideSpec) -> bool:
    a0, a1 = a.axis_segment()
    b0, b1 = b.axis_segment()
    if segment_intersection(a0, a1, b0, b1) is not None:
        return True
    if abs(math.sin(a.angle - b.angle)) > 1e-9:
        return False
    # parallel: transverse separation against combined waists, plus shared span
    _, d = a.local_coords(*b.origin)
    if abs(float(d)) >= a.waist + b.waist:
        return False
    sb = sorted(float(v) for v in a.local_coords(*np.array([b0, b1]).T)[0])
    sa = sorted(a.profile.extent())
    return sb[0] <= sa[1] and sa[0] <= sb[1]


def validate_scene(scene: Scene) -> list[Violation]:
    """List every broken invariant of ``scene``; an empty list means valid."""
    out: list[Violation] = []
    xmin, xmax, ymin, ymax = scene.domain_bounds
    if not (xmax > xmin and ymax > ymin):
        out.append(Violation("domain", f"degenerate domain bounds {scene.domain_bounds}"))
    hfs = scene.species.hfs_split
    for i, g in enumerate(scene.guides):
        label = g.name or f"guide[{i}]"
        if not g.waist > 0:
            out.append(Violation("waist", f"{label}: waist must be positive, got {g.waist}"))
        if not g.peak_depth >= 0:
            out.append(Violation("depth", f"{label}: peak_depth must be >= 0, got {g.peak_depth}"))
        if g.polarization not in ("H", "V"):
            out.append(Violation("polarization", f"{label}: tag must be H or V, got {g.polarization!r}"))
        for msg in g.profile.problems():
            out.append(Violation("profile", f"{label}: {msg}"))
        if isinstance(g.detuning, Selective):
            gap = g.detuning.delta_f3 - g.detuning.delta_f2
            if abs(gap - hfs) > 0.02 * hfs:
                out.append(Violation("detuning", f"{label}: delta_f3 - delta_f2 = {gap:.6g} Hz, expected {hfs:.6g} Hz within 2%"))
        if g.profile.problems():
            continue
        for p in g.axis_segment():
            if not scene.contains(p[0], p[1]):
                out.append(Violation("domain", f"{label}: axis end {tuple(p)} outside domain"))
                break
    for i, sp in enumerate(scene.spots):
        if not sp.waist > 0:
            out.append(Violation("waist", f"{sp.name or f'spot[{i}]'}: waist must be positive, got {sp.waist}"))
    valid = [g for g in scene.guides if g.waist > 0 and not g.profile.problems()]
    for i, a in enumerate(valid):
        for b in valid[i + 1:]:
            if a.polarization == b.polarization and _guides_overlap(a, b):
                out.append(Violation("overlap", f"{a.name or 'guide'} and {b.name or 'guide'} overlap with the same polarization {a.polarization}"))
    return out


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------


def _depth_pair(depths, species):
    if depths is None:
        d = species.kelvin(DEFAULT_DEPTH_K)
        return d, d
    if np.ndim(depths) == 0:
        return float(depths), float(depths)
    a, b = depths
    return float(a), float(b)


def _padded_domain(points, pad):
    pts = np.asarray(points)
    return (pts[:, 0].min() - pad, pts[:, 0].max() + pad, pts[:, 1].min() - pad, pts[:, 1].max() + pad)


def make_x_splitter(
    angle: float = DEFAULT_ANGLE,
    depth_a: float | None = None,
    depth_b: float | None = None,
    waist: float = DEFAULT_WAIST,
    profiles=None,
    arm_length: float = 1.5e-3,
    species: SpeciesConstants = RB85,
    margin: float = 0.1e-3,
) -> Scene:
    """Two guides crossing at the origin, ``A`` at ``+angle/2`` and ``B`` at ``-angle/2``.

    The layout is mirror symmetric about the x axis: atoms enter on the
    negative half of either guide and leave on the positive halves.

    Parameters
    ----------
    angle : float
        Relative crossing angle in (0, pi).
    depth_a, depth_b : float, optional
        Peak depths (J). Default 450 uK * k_B; ``depth_b`` defaults to ``depth_a``.
    profiles : pair of profiles, optional
        Longitudinal profiles for A and B measured from each guide origin.
        Default: flat over ``2 * arm_length`` centred on the crossing.
    """
    if not 0.0 < angle < math.pi:
        raise ValueError(f"crossing angle must lie in (0, pi), got {angle}")
    if depth_a is None:
        depth_a = species.kelvin(DEFAULT_DEPTH_K)
    if depth_b is None:
        depth_b = depth_a
    if profiles is None:
        profiles = (Flat(2.0 * arm_length), Flat(2.0 * arm_length))
        start = -arm_length
    else:
        start = 0.0
    guides = []
    for name, theta, depth, pol, prof in (
        ("A", 0.5 * angle, depth_a, "H", profiles[0]),
        ("B", -0.5 * angle, depth_b, "V", profiles[1]),
    ):
        origin = (start * math.cos(theta), start * math.sin(theta))
        guides.append(GuideSpec(origin, theta, waist, depth, prof, pol, Far(), name))
    ends = [p for g in guides for p in g.axis_segment()]
    return Scene(species, guides, (), _padded_domain(ends, margin), {"crossing_angle": angle})


def mach_zehnder_cell_area(pitch: float, angle: float) -> float:
    """Area of the parallelogram enclosed by two pairs of guides at ``pitch``."""
    return pitch * pitch / math.sin(angle)


def make_mach_zehnder(
    pitch: float = LENS_PITCH,
    angle: float = DEFAULT_ANGLE,
    depths=None,
    waist: float = DEFAULT_WAIST,
    n_per_family: int = 2,
    overhang: float = 0.15e-3,
    species: SpeciesConstants = RB85,
    margin: float = 0.05e-3,
) -> Scene:
    """Two families of parallel guides crossing at ``angle``.

    Family ``A`` runs along x and is H polarized, family ``B`` runs at
    ``angle`` and is V polarized. Each guide extends ``overhang`` beyond its
    outermost crossing. ``meta`` reports ``cell_area``, ``bounding_box_area``
    and ``n_intersections``.
    """
    if not pitch > 0:
        raise ValueError(f"pitch must be positive, got {pitch}")
    if not 0.0 < angle < math.pi or abs(math.sin(angle)) < 1e-6:
        raise ValueError(f"degenerate crossing angle {angle}")
    if n_per_family < 2:
        raise ValueError("each family needs at least two guides")
    depth_a, depth_b = _depth_pair(depths, species)
    sin_t, cos_t = math.sin(angle), math.cos(angle)
    offsets = pitch * np.arange(n_per_family)
    # A_i: y = offsets[i]; B_j passes through (offsets[j] / sin_t, 0) along (cos_t, sin_t)
    # crossing A_i with B_j at s_A = offsets[j]/sin_t + offsets[i]*cot, s_B = offsets[i]/sin_t
    cot = cos_t / sin_t
    guides = []
    a_lo = offsets.min() / sin_t + (offsets * cot).min()
    a_hi = offsets.max() / sin_t + (offsets * cot).max()
    for i, off in enumerate(offsets):
        start = a_lo - overhang
        length = a_hi - a_lo + 2 * overhang
        guides.append(GuideSpec((start, off), 0.0, waist, depth_a, Flat(length), "H", Far(), f"A{i}"))
    b_lo = offsets.min() / sin_t - overhang
    b_hi = offsets.max() / sin_t + overhang
    for j, off in enumerate(offsets):
        base = np.array([off / sin_t, 0.0])
        origin = base + b_lo * np.array([cos_t, sin_t])
        guides.append(GuideSpec(tuple(origin), angle, waist, depth_b, Flat(b_hi - b_lo), "V", Far(), f"B{j}"))
    ends = [p for g in guides for p in g.axis_segment()]
    probe = Scene(species, guides, (), _padded_domain(ends, margin))
    xmin, xmax, ymin, ymax = probe.structure_bounds()
    meta = {
        "cell_area": mach_zehnder_cell_area(pitch, angle),
        "bounding_box_area": (xmax - xmin) * (ymax - ymin),
        "n_intersections": float(len(probe.intersections())),
    }
    return Scene(species, guides, (), probe.domain_bounds, meta)


def make_michelson(
    sigma_long: float = 1e-3,
    depths=None,
    angle: float = DEFAULT_ANGLE,
    waist: float = DEFAULT_WAIST,
    species: SpeciesConstants = RB85,
    margin: float = 0.2e-3,
) -> Scene:
    """Crossed guides with Gaussian longitudinal profiles centred on the crossing.

    Geometry matches :func:`make_x_splitter`; each guide origin is the crossing
    point so the profile maximum sits at ``s = 0``.
    """
    if not sigma_long > 0:
        raise ValueError(f"sigma_long must be positive, got {sigma_long}")
    if not 0.0 < angle < math.pi:
        raise ValueError(f"crossing angle must lie in (0, pi), got {angle}")
    depth_a, depth_b = _depth_pair(depths, species)
    guides = [
        GuideSpec((0.0, 0.0), 0.5 * angle, waist, depth_a, Gaussian(0.0, sigma_long), "H", Far(), "A"),
        GuideSpec((0.0, 0.0), -0.5 * angle, waist, depth_b, Gaussian(0.0, sigma_long), "V", Far(), "B"),
    ]
    ends = [p for g in guides for p in g.axis_segment()]
    return Scene(species, guides, (), _padded_domain(ends, margin), {"crossing_angle": angle})
