"""Command-line entry point ``sim``.

Exit status is 0 on success, 2 when a scene file fails validation and 1 on
any runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from . import potential as pot
from .config import UNITS, ConfigError, parse_scene_file
from .experiment import PRESETS, preset_text, run_experiment, run_sweep
from .scene import RB85, mach_zehnder_cell_area, validate_scene

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_INVALID = 2

log = logging.getLogger("atomguide")


class ValidationFailure(Exception):
    pass


def _read_config(source: str):
    """Parse a scene file path or ``preset:<name>``."""
    if source.startswith("preset:"):
        text = preset_text(source.split(":", 1)[1])
    else:
        text = Path(source).read_text()
    try:
        config = parse_scene_file(text)
    except ConfigError as exc:
        raise ValidationFailure("\n".join(str(d) for d in exc.diagnostics)) from None
    if config.all("guide"):
        violations = validate_scene(config.scene())
        if violations:
            raise ValidationFailure("\n".join(str(v) for v in violations))
    return config


def _parse_params(items: list[str]) -> dict[str, float]:
    """``name_unit=value`` pairs to SI values keyed by ``name``."""
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"expected name_unit=value, got {item!r}")
        base, _, unit = key.rpartition("_")
        if unit in UNITS and base:
            dim, factor = UNITS[unit]
            number = float(value) * factor
            if dim == "temperature" and base in ("depth", "energy"):
                number *= RB85.k_boltzmann
            out[base] = number
        else:
            out[key] = float(value)
    return out


def _calc(quantity: str, params: dict[str, float]) -> tuple[float, str]:
    p = params
    if quantity == "radial_frequency":
        return pot.radial_trap_frequency(p["depth"], p["waist"], p.get("mass", RB85.mass)), "Hz"
    if quantity == "rayleigh_range":
        return pot.rayleigh_range(p["waist"], p.get("wavelength", RB85.lambda_d2)), "m"
    if quantity == "scattering_rate":
        return pot.scattering_rate(p["depth"], p["delta"]), "1/s"
    if quantity == "depth_from_power":
        depth = pot.depth_from_power(p["power"], p["waist"], p["length"], p["delta"])
        return depth / RB85.k_boltzmann * 1e6, "uK (signed)"
    if quantity == "mean_occupation":
        return pot.mean_occupation(p["temperature"], p["frequency"]), ""
    if quantity == "rms_spread":
        return pot.thermal_rms_spread(p["temperature"], p["frequency"], p.get("mass", RB85.mass)), "m"
    if quantity == "thermal_velocity":
        return pot.thermal_velocity_spread(p["temperature"], p.get("mass", RB85.mass)), "m/s"
    if quantity == "recoil_velocity":
        return RB85.recoil_velocity, "m/s"
    if quantity == "detuning":
        return pot.detuning_from_wavelength_offset(p["delta_lambda"], p.get("wavelength", RB85.lambda_d2)), "Hz"
    if quantity == "mz_cell_area":
        return mach_zehnder_cell_area(p["pitch"], p["angle"]), "m^2"
    raise ValueError(f"unknown quantity {quantity!r}")


CALC_QUANTITIES = ("radial_frequency", "rayleigh_range", "scattering_rate", "depth_from_power", "mean_occupation",
                   "rms_spread", "thermal_velocity", "recoil_velocity", "detuning", "mz_cell_area")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sim", description="Cold atoms in crossed optical waveguides.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scene file and write all products")
    p.add_argument("scene", help="scene file, or preset:<name> with name in " + ", ".join(PRESETS))
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--force", action="store_true", help="replace a non-empty output directory")
    p.add_argument("--no-trajectories", action="store_true", help="skip trajectories.csv")

    p = sub.add_parser("sweep", help="splitting ratio versus guide power ratio")
    p.add_argument("scene")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("calc", help="evaluate a derived quantity")
    p.add_argument("quantity", choices=CALC_QUANTITIES)
    p.add_argument("params", nargs="*", help="name_unit=value, e.g. depth_uK=450 waist_um=7")

    p = sub.add_parser("validate", help="check a scene file")
    p.add_argument("scene")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "calc":
            value, unit = _calc(args.quantity, _parse_params(args.params))
            print(f"{args.quantity} = {value!r} {unit}".rstrip())
            return EXIT_OK
        config = _read_config(args.scene)
        if args.command == "validate":
            print(f"{args.scene}: ok")
        elif args.command == "run":
            result = run_experiment(config, args.out, overwrite=args.force,
                                    write_trajectories=not args.no_trajectories)
            for key, value in result.summary.items():
                print(f"{key} = {value}")
            log.info("wrote %d files to %s", len(result.files), result.out_dir)
        elif args.command == "sweep":
            path = run_sweep(config, args.out, overwrite=args.force)
            print(path.read_text(), end="")
        return EXIT_OK
    except ValidationFailure as exc:
        print(f"validation failed:\n{exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to one exit code
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
