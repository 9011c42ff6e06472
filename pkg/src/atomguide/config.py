"""Line-oriented scene files with unit-suffixed keys.

A file is a sequence of ``[section]`` or ``[section id]`` headers followed by
``key_unit = value`` lines; ``#`` starts a comment. Physical quantities must
carry a unit suffix (``depth_uK``, ``waist_um``, ``angle_deg``); the parser
converts them to SI. Values are stored exactly as written so that
:func:`serialize` followed by :func:`parse_scene_file` reproduces the same
configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

from scipy import constants

from .scene import (DEG, RB85, Far, Flat, Gaussian, Gradient, GuideSpec, Scene, Selective,
                    SpeciesConstants, SpotBeam)

#: unit suffix -> (dimension, factor to SI)
UNITS = {
    "K": ("temperature", 1.0),
    "mK": ("temperature", 1e-3),
    "uK": ("temperature", 1e-6),
    "nK": ("temperature", 1e-9),
    "m": ("length", 1.0),
    "mm": ("length", 1e-3),
    "um": ("length", 1e-6),
    "nm": ("length", 1e-9),
    "deg": ("angle", DEG),
    "rad": ("angle", 1.0),
    "s": ("time", 1.0),
    "ms": ("time", 1e-3),
    "us": ("time", 1e-6),
    "Hz": ("frequency", 1.0),
    "kHz": ("frequency", 1e3),
    "MHz": ("frequency", 1e6),
    "GHz": ("frequency", 1e9),
    "W": ("power", 1.0),
    "mW": ("power", 1e-3),
    "mps": ("velocity", 1.0),
    "mmps": ("velocity", 1e-3),
    "kg": ("mass", 1.0),
    "amu": ("mass", constants.atomic_mass),
}

_DIMENSION_UNITS = {}
for _unit, (_dim, _) in UNITS.items():
    _DIMENSION_UNITS.setdefault(_dim, []).append(_unit)


@dataclass(frozen=True)
class Key:
    """Schema entry: ``dimension`` is a unit dimension, or one of ``int``, ``str``,
    ``float`` (dimensionless), ``bool`` for unsuffixed keys."""

    dimension: str
    required: bool = False
    default: Any = None
    count: int = 1          # values per key; 0 = any length list
    choices: tuple = ()
    nonnegative: bool = False


SCHEMA: dict[str, dict[str, Key]] = {
    "species": {
        "mass": Key("mass", default=(RB85.mass, "kg")),
        "lambda_d2": Key("length", default=(RB85.lambda_d2 * 1e9, "nm")),
        "gamma": Key("frequency", default=(RB85.gamma / 1e6, "MHz")),
        "hfs_split": Key("frequency", default=(RB85.hfs_split / 1e9, "GHz")),
    },
    "guide": {
        "origin": Key("length", required=True, count=2),
        "angle": Key("angle", required=True),
        "waist": Key("length", required=True),
        "depth": Key("temperature", required=True, nonnegative=True),
        "profile": Key("str", default="flat", choices=("flat", "gradient", "gaussian")),
        "length": Key("length"),
        "start_scale": Key("float", default=0.5),
        "end_scale": Key("float", default=1.0),
        "center_s": Key("length", default=(0.0, "mm")),
        "sigma": Key("length"),
        "polarization": Key("str", default="H", choices=("H", "V")),
        "detuning": Key("str", default="far", choices=("far", "selective")),
        "delta": Key("frequency", default=(-500.0, "GHz")),
        "delta_f2": Key("frequency", default=(-1020.0, "MHz")),
        "delta_f3": Key("frequency", default=(2020.0, "MHz")),
    },
    "spot": {
        "center": Key("length", required=True, count=2),
        "waist": Key("length", required=True),
        "depth_f2": Key("temperature", required=True),
        "depth_f3": Key("temperature", required=True),
        "delta_f2": Key("frequency", default=(-1020.0, "MHz")),
        "delta_f3": Key("frequency", default=(2020.0, "MHz")),
    },
    "ensemble": {
        "seed": Key("int", required=True),
        "n_atoms": Key("int", default=1000),
        "temperature": Key("temperature", default=(20.0, "uK")),
        "state": Key("str", default="F2", choices=("F2", "F3")),
        "site_guide": Key("str", required=True),
        "site_s": Key("length", required=True),
        "launch_velocity": Key("velocity", default=(0.0, "mps")),
        "launch": Key("str", default="single", choices=("single", "mirror")),
        "mirror_axis": Key("angle", default=(0.0, "deg")),
    },
    "run": {
        "hold": Key("time", default=(0.0, "ms"), nonnegative=True),
        "hold_spot_waist": Key("length", default=(20.0, "um")),
        "hold_spot_depth": Key("temperature", default=(450.0, "uK"), nonnegative=True),
        "duration": Key("time", required=True, nonnegative=True),
        "dt": Key("time"),
        "scattering": Key("bool", default=False),
        "record_stride": Key("int", default=100),
        "workers": Key("int", default=1),
        "recoil_axis": Key("angle", default=(0.0, "deg")),
        "domain_x": Key("length", count=2),
        "domain_y": Key("length", count=2),
    },
    "image": {
        "psf_rms": Key("length", default=(14.0, "um")),
        "exposure": Key("time", default=(0.8, "ms")),
        "pixel": Key("length", default=(7.0, "um")),
        "times": Key("time", count=0),
        "profile_line": Key("length", count=4),
        "profile_half_width": Key("length", default=(30.0, "um")),
        "window_1": Key("length", count=2),
        "window_2": Key("length", count=2),
    },
    "quantum": {
        "n_grid": Key("int", default=1024),
        "ny_grid": Key("int"),
        "waist": Key("length", default=(1.0, "um")),
        "depth_quanta": Key("float", default=2.5),
        "separation": Key("length", default=(1.3, "um")),
        "kinetic_quanta": Key("float", default=2.0),
        "packet_length": Key("length", default=(3.0, "um")),
        "n_spots": Key("int", default=5),
        "spot_spacing": Key("length", default=(0.8, "um")),
        "shifter_time": Key("time", default=(1.7, "ms")),
        "duration": Key("time", default=(3.4, "ms")),
        "guide_length": Key("length", default=(45.0, "um")),
        "phase_depths": Key("temperature", count=0),
        "phase_steps_pi": Key("float", count=0),
        "workers": Key("int", default=1),
    },
    "sweep": {
        "ratios": Key("float", required=True, count=0),
        "guide": Key("str"),
        "reference_guide": Key("str"),
        "workers": Key("int", default=1),
    },
}

#: Sections that take an id and may repeat.
IDENTIFIED = ("guide", "spot")


@dataclass(frozen=True)
class Diagnostic:
    line: int
    token: str
    expected: str

    def __str__(self):
        return f"line {self.line}: {self.token!r}: {self.expected}"


class ConfigError(ValueError):
    """Raised with every diagnostic found in a scene file."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


@dataclass
class Entry:
    """One key: raw values as written, their unit and the source line."""

    values: tuple
    unit: str | None
    line: int = 0

    def si(self):
        factor = UNITS[self.unit][1] if self.unit else 1.0
        out = tuple(v * factor for v in self.values)
        return out

    def __eq__(self, other):
        return isinstance(other, Entry) and self.values == other.values and self.unit == other.unit


@dataclass
class Section:
    kind: str
    ident: str | None
    entries: dict[str, Entry] = field(default_factory=dict)
    line: int = 0
    # keys present in the file but rejected, so they are not also reported missing
    rejected: set = field(default_factory=set)

    def __eq__(self, other):
        return (isinstance(other, Section) and (self.kind, self.ident) == (other.kind, other.ident)
                and self.entries == other.entries)

    def has(self, name) -> bool:
        return name in self.entries

    def get(self, name, default=None):
        """Value in SI (scalar for single-valued keys, tuple otherwise)."""
        if name not in self.entries:
            return default
        entry = self.entries[name]
        key = SCHEMA[self.kind][name]
        vals = entry.si() if key.dimension not in ("int", "str", "bool") else entry.values
        return vals[0] if key.count == 1 else vals


@dataclass
class Config:
    """Parsed scene file."""

    sections: list[Section]

    def __eq__(self, other):
        return isinstance(other, Config) and self.sections == other.sections

    def section(self, kind: str) -> Section | None:
        for s in self.sections:
            if s.kind == kind:
                return s
        return None

    def all(self, kind: str) -> list[Section]:
        return [s for s in self.sections if s.kind == kind]

    @property
    def seed(self) -> int:
        return int(self.section("ensemble").get("seed"))

    def species(self) -> SpeciesConstants:
        sec = self.section("species")
        if sec is None:
            return RB85
        return SpeciesConstants(mass=sec.get("mass"), lambda_d2=sec.get("lambda_d2"), gamma=sec.get("gamma"),
                                hfs_split=sec.get("hfs_split"))

    def scene(self) -> Scene:
        species = self.species()
        kB = species.k_boltzmann
        guides = []
        for sec in self.all("guide"):
            kind = sec.get("profile")
            if kind == "flat":
                profile = Flat(sec.get("length"))
            elif kind == "gradient":
                profile = Gradient(sec.get("length"), sec.get("start_scale"), sec.get("end_scale"))
            else:
                profile = Gaussian(sec.get("center_s"), sec.get("sigma"))
            if sec.get("detuning") == "far":
                det = Far(sec.get("delta"))
            else:
                det = Selective(sec.get("delta_f2"), sec.get("delta_f3"))
            guides.append(GuideSpec(tuple(sec.get("origin")), sec.get("angle"), sec.get("waist"),
                                    sec.get("depth") * kB, profile, sec.get("polarization"), det, sec.ident))
        spots = [
            SpotBeam(tuple(sec.get("center")), sec.get("waist"), sec.get("depth_f2") * kB, sec.get("depth_f3") * kB,
                     sec.get("delta_f2"), sec.get("delta_f3"), sec.ident)
            for sec in self.all("spot")
        ]
        run = self.section("run")
        probe = Scene(species, guides, spots)
        if run is not None and run.has("domain_x") and run.has("domain_y"):
            (x0, x1), (y0, y1) = run.get("domain_x"), run.get("domain_y")
            bounds = (x0, x1, y0, y1)
        elif guides:
            xmin, xmax, ymin, ymax = probe.structure_bounds()
            pad = 0.1e-3
            bounds = (xmin - pad, xmax + pad, ymin - pad, ymax + pad)
        else:
            bounds = probe.domain_bounds
        return Scene(species, guides, spots, bounds)


def _parse_number(token: str, kind: str):
    if kind == "int":
        return int(token)
    if kind == "bool":
        low = token.lower()
        if low in ("on", "true", "yes", "1"):
            return True
        if low in ("off", "false", "no", "0"):
            return False
        raise ValueError(token)
    value = float(token)
    if not math.isfinite(value):
        raise ValueError(token)
    return value


def _split_key(section_kind: str, key: str):
    """Return ``(base, unit)`` for a key, matching the longest known base name."""
    schema = SCHEMA[section_kind]
    if key in schema and schema[key].dimension in ("int", "str", "bool", "float"):
        return key, None
    base, sep, unit = key.rpartition("_")
    if sep and base in schema:
        return base, unit
    return key, None


def parse_scene_file(text: str) -> Config:
    """Parse and validate a scene file.

    Raises
    ------
    ConfigError
        Carrying one :class:`Diagnostic` per problem found.
    """
    diags: list[Diagnostic] = []
    sections: list[Section] = []
    current: Section | None = None
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                diags.append(Diagnostic(lineno, line, "section header of the form [name] or [name id]"))
                current = None
                continue
            parts = line[1:-1].split()
            if not parts or parts[0] not in SCHEMA:
                diags.append(Diagnostic(lineno, line, f"one of the sections {', '.join(SCHEMA)}"))
                current = None
                continue
            kind = parts[0]
            if kind in IDENTIFIED:
                if len(parts) != 2:
                    diags.append(Diagnostic(lineno, line, f"[{kind} <id>] with exactly one id"))
                    current = None
                    continue
                ident = parts[1]
            else:
                if len(parts) != 1:
                    diags.append(Diagnostic(lineno, line, f"[{kind}] without an id"))
                    current = None
                    continue
                ident = None
            if (kind, ident) in seen:
                diags.append(Diagnostic(lineno, line, "a section id not used before (duplicate section)"))
                current = None
                continue
            seen.add((kind, ident))
            current = Section(kind, ident, line=lineno)
            sections.append(current)
            continue
        if "=" not in line:
            diags.append(Diagnostic(lineno, line, "key = value"))
            continue
        key, _, value = (p.strip() for p in line.partition("="))
        if current is None:
            diags.append(Diagnostic(lineno, key, "key inside a valid section"))
            continue
        base, unit = _split_key(current.kind, key)
        schema = SCHEMA[current.kind]
        if base not in schema:
            diags.append(Diagnostic(lineno, key, f"a known key of [{current.kind}]: {', '.join(sorted(schema))}"))
            continue
        rule = schema[base]
        current.rejected.add(base)
        if rule.dimension in _DIMENSION_UNITS:
            if unit is None:
                diags.append(Diagnostic(lineno, key, f"a unit suffix, e.g. {base}_{_DIMENSION_UNITS[rule.dimension][0]}"))
                continue
            if unit not in UNITS or UNITS[unit][0] != rule.dimension:
                allowed = ", ".join(f"{base}_{u}" for u in _DIMENSION_UNITS[rule.dimension])
                diags.append(Diagnostic(lineno, key, f"a {rule.dimension} unit: {allowed}"))
                continue
        elif unit is not None:
            diags.append(Diagnostic(lineno, key, f"{base} without a unit suffix"))
            continue
        if base in current.entries:
            diags.append(Diagnostic(lineno, key, "a key not already set in this section"))
            continue
        tokens = value.replace(",", " ").split()
        if rule.dimension == "str":
            if len(tokens) != 1 or (rule.choices and tokens[0] not in rule.choices):
                expect = " | ".join(rule.choices) if rule.choices else "a single word"
                diags.append(Diagnostic(lineno, value, f"{key} = {expect}"))
                continue
            values = (tokens[0],)
        else:
            kind = rule.dimension if rule.dimension in ("int", "bool") else "float"
            try:
                values = tuple(_parse_number(t, kind) for t in tokens)
            except ValueError:
                diags.append(Diagnostic(lineno, value, f"{rule.dimension if kind != 'float' else 'numeric'} value(s)"))
                continue
            if rule.count and len(values) != rule.count:
                diags.append(Diagnostic(lineno, value, f"{rule.count} value(s) for {key}"))
                continue
            if not values:
                diags.append(Diagnostic(lineno, key, "at least one value"))
                continue
            if rule.nonnegative and any(v < 0 for v in values):
                msg = "depth must be >= 0; sign comes from detuning" if base == "depth" else f"{base} must be >= 0"
                diags.append(Diagnostic(lineno, value, msg))
                continue
        current.rejected.discard(base)
        current.entries[base] = Entry(values, unit, lineno)
    for sec in sections:
        _check_section(sec, diags)
    kinds = {s.kind for s in sections}
    if "ensemble" not in kinds and "quantum" not in kinds:
        diags.append(Diagnostic(0, "[ensemble]", "an [ensemble] section with a seed (or a [quantum] section)"))
    if "ensemble" in kinds and "run" not in kinds:
        diags.append(Diagnostic(0, "[run]", "a [run] section with duration"))
    ens = next((s for s in sections if s.kind == "ensemble"), None)
    guide_ids = [s.ident for s in sections if s.kind == "guide"]
    if ens is not None and ens.has("site_guide") and ens.get("site_guide") not in guide_ids:
        diags.append(Diagnostic(ens.entries["site_guide"].line, ens.get("site_guide"), f"one of the guides {guide_ids}"))
    sweep = next((s for s in sections if s.kind == "sweep"), None)
    if sweep is not None:
        for name in ("guide", "reference_guide"):
            if sweep.has(name) and sweep.get(name) not in guide_ids:
                diags.append(Diagnostic(sweep.entries[name].line, sweep.get(name), f"one of the guides {guide_ids}"))
        for r in sweep.get("ratios") or ():
            if not r > 0:
                diags.append(Diagnostic(sweep.entries["ratios"].line, repr(r), "ratios > 0"))
    if diags:
        raise ConfigError(diags)
    return Config(sections)


def _check_section(sec: Section, diags: list[Diagnostic]):
    schema = SCHEMA[sec.kind]
    for name, rule in schema.items():
        if rule.required and name not in sec.entries and name not in sec.rejected:
            label = f"[{sec.kind}{' ' + sec.ident if sec.ident else ''}]"
            diags.append(Diagnostic(sec.line, label, f"mandatory key {name}"))
    if sec.kind == "guide":
        profile = sec.get("profile", "flat")
        needs = {"flat": ("length",), "gradient": ("length",), "gaussian": ("sigma",)}[profile]
        for name in needs:
            if name not in sec.entries:
                diags.append(Diagnostic(sec.line, f"[guide {sec.ident}]", f"key {name} for a {profile} profile"))
    # fill defaults so the configuration is fully resolved
    for name, rule in schema.items():
        if name not in sec.entries and rule.default is not None:
            if isinstance(rule.default, tuple):
                value, unit = rule.default
                sec.entries[name] = Entry((value,), unit, 0)
            else:
                sec.entries[name] = Entry((rule.default,), None, 0)


def _format(value) -> str:
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize(config: Config) -> str:
    """Render a configuration back to scene-file text."""
    lines = []
    for sec in config.sections:
        lines.append(f"[{sec.kind}{' ' + sec.ident if sec.ident else ''}]")
        for name, entry in sec.entries.items():
            key = f"{name}_{entry.unit}" if entry.unit else name
            lines.append(f"{key} = {' '.join(_format(v) for v in entry.values)}")
        lines.append("")
    return "\n".join(lines)


def _num(value: float, digits: int = 12) -> str:
    return repr(float(f"{value:.{digits}g}"))


def scene_text(scene: Scene) -> str:
    """``[guide]`` and ``[spot]`` sections describing ``scene``.

    Numbers are rounded to 12 significant digits.
    """
    kB = scene.species.k_boltzmann
    lines = []
    for i, g in enumerate(scene.guides):
        lines.append(f"[guide {g.name or f'g{i}'}]")
        lines.append(f"origin_um = {_num(g.origin[0] * 1e6)} {_num(g.origin[1] * 1e6)}")
        lines.append(f"angle_deg = {_num(g.angle / DEG)}")
        lines.append(f"waist_um = {_num(g.waist * 1e6)}")
        lines.append(f"depth_uK = {_num(g.peak_depth / kB * 1e6)}")
        prof = g.profile
        if isinstance(prof, Flat):
            lines += ["profile = flat", f"length_mm = {_num(prof.length * 1e3)}"]
        elif isinstance(prof, Gradient):
            lines += ["profile = gradient", f"length_mm = {_num(prof.length * 1e3)}",
                      f"start_scale = {_num(prof.start_scale)}", f"end_scale = {_num(prof.end_scale)}"]
        else:
            lines += ["profile = gaussian", f"center_s_mm = {_num(prof.center_s * 1e3)}",
                      f"sigma_mm = {_num(prof.sigma * 1e3)}"]
        lines.append(f"polarization = {g.polarization}")
        if isinstance(g.detuning, Selective):
            lines += ["detuning = selective", f"delta_f2_MHz = {_num(g.detuning.delta_f2 / 1e6)}",
                      f"delta_f3_MHz = {_num(g.detuning.delta_f3 / 1e6)}"]
        else:
            lines += ["detuning = far", f"delta_GHz = {_num(g.detuning.delta / 1e9)}"]
        lines.append("")
    for i, sp in enumerate(scene.spots):
        lines.append(f"[spot {sp.name or f's{i}'}]")
        lines.append(f"center_um = {_num(sp.center[0] * 1e6)} {_num(sp.center[1] * 1e6)}")
        lines.append(f"waist_um = {_num(sp.waist * 1e6)}")
        lines.append(f"depth_f2_uK = {_num(sp.depth_f2 / kB * 1e6)}")
        lines.append(f"depth_f3_uK = {_num(sp.depth_f3 / kB * 1e6)}")
        lines.append(f"delta_f2_MHz = {_num(sp.delta_f2 / 1e6)}")
        lines.append(f"delta_f3_MHz = {_num(sp.delta_f3 / 1e6)}")
        lines.append("")
    return "\n".join(lines)
