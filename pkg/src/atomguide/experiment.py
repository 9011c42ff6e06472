"""Experiment pipeline: load, hold, transfer, propagate, image, count.

Every output file except ``timing.txt`` is a deterministic function of the
scene file, so two runs of one manifest produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import math
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .config import Config, parse_scene_file, serialize
from .dynamics import (Ensemble, RunConfig, TrajectoryRecord, assign_ports, default_ports, ensemble_energy,
                       propagate, sample_thermal_ensemble, symmetric_launch)
from .imaging import line_profile, render_image, splitting_ratio, write_pgm
from .potential import HyperfineState
from .quantum import TwinGuideInterferometer, mz_fringe_scan
from .scene import Scene, SpotBeam, validate_scene

PRESETS = ("single_guide", "x_splitter", "state_selective", "mach_zehnder", "michelson", "mini_mz", "sweep")


def preset_text(name: str) -> str:
    """Scene-file text of a shipped preset."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("atomguide").joinpath("presets", f"{name}.scene").read_text()


def load_preset(name: str) -> Config:
    return parse_scene_file(preset_text(name))


@dataclass
class ExperimentResult:
    out_dir: Path
    summary: dict
    files: list[Path] = field(default_factory=list)
    record: TrajectoryRecord | None = None


def _reflect(vectors: np.ndarray, axis_angle: float) -> np.ndarray:
    c, s = math.cos(2 * axis_angle), math.sin(2 * axis_angle)
    return vectors @ np.array([[c, s], [s, -c]]).T


def _hold_scene(scene: Scene, sites: np.ndarray, waist: float, depth: float) -> Scene:
    spots = tuple(SpotBeam(tuple(p), waist, -depth, -depth, name=f"hold{i}") for i, p in enumerate(sites))
    return replace(scene, spots=scene.spots + spots)


def prepare_ensemble(config: Config, scene: Scene) -> tuple[Ensemble, np.ndarray]:
    """Sample the loaded atoms and the per-atom launch directions.

    Returns
    -------
    ensemble : Ensemble
    launch : ndarray, shape (n, 2)
        Launch velocity vectors applied at transfer.
    """
    ens_sec = config.section("ensemble")
    guide = ens_sec.get("site_guide")
    s0 = ens_sec.get("site_s")
    n = int(ens_sec.get("n_atoms"))
    state = HyperfineState[ens_sec.get("state")]
    mirror = ens_sec.get("launch") == "mirror"
    g = scene.guides[scene.guide_index(guide)]
    n_base = (n + 1) // 2 if mirror else n
    ens = sample_thermal_ensemble(scene, (guide, s0), ens_sec.get("temperature"), n_base, state, config.seed)
    launch = np.tile(ens_sec.get("launch_velocity") * g.direction, (n_base, 1))
    if mirror:
        axis = ens_sec.get("mirror_axis")
        ens = symmetric_launch(ens, axis)
        both = np.empty((2 * n_base, 2))
        both[0::2] = launch
        both[1::2] = _reflect(launch, axis)
        launch = both
        if 2 * n_base != n:
            ens = ens.take(slice(0, n))
            launch = launch[:n]
    return ens, launch


def load_hold_transfer(config: Config, scene: Scene) -> tuple[Ensemble, dict]:
    """Loaded ensemble after the hold phase with the launch velocity applied."""
    run = config.section("run")
    ens, launch = prepare_ensemble(config, scene)
    info = {"n_loaded": len(ens)}
    hold = run.get("hold")
    if hold > 0 and len(ens):
        ens_sec = config.section("ensemble")
        g = scene.guides[scene.guide_index(ens_sec.get("site_guide"))]
        sites = [g.point_at(ens_sec.get("site_s"))]
        if ens_sec.get("launch") == "mirror":
            sites.append(_reflect(sites[0][None, :], ens_sec.get("mirror_axis"))[0])
        hold_scene = _hold_scene(scene, np.array(sites), run.get("hold_spot_waist"),
                                 run.get("hold_spot_depth") * scene.species.k_boltzmann)
        cfg = RunConfig(hold, run.get("dt"), run.get("scattering"), 10**9, run.get("recoil_axis"))
        rec = propagate(ens, hold_scene, cfg, workers=run.get("workers"))
        ens = rec.final
        info["n_after_hold"] = ens.n_alive
    ens.vel = ens.vel + np.where(ens.alive[:, None], launch, 0.0)
    ens.time = 0.0
    return ens, info


def _run_config(config: Config) -> RunConfig:
    run = config.section("run")
    return RunConfig(run.get("duration"), run.get("dt"), run.get("scattering"), run.get("record_stride"),
                     run.get("recoil_axis"))


def output_ports(scene: Scene, first: str | None = None, second: str | None = None):
    """Names of the two output ports used for splitting ratios."""
    names = default_ports(scene).names()
    first = first or (scene.guides[0].name if scene.guides else None)
    second = second or (scene.guides[1].name if len(scene.guides) > 1 else None)
    a, b = f"{first}+", f"{second}+"
    return (a, b) if a in names and b in names else (None, None)


def _write_rows(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _prepare_dir(out_dir: Path, overwrite: bool) -> Path:
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()) and not overwrite:
        raise FileExistsError(f"output directory {out_dir} is not empty")
    staging = out_dir.with_name(out_dir.name + ".partial")
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir(parents=True)
    return staging


def _commit_dir(staging: Path, out_dir: Path):
    out_dir = Path(out_dir)
    if out_dir.exists():
        shutil.rmtree(out_dir)
    staging.rename(out_dir)


def _manifest(config: Config) -> str:
    seed = config.seed if config.section("ensemble") else "none"
    return f"# atomguide run manifest\n# version = {__version__}\n# seed = {seed}\n" + serialize(config)


def run_experiment(config: Config | None, out_dir, preset: str | None = None, overwrite: bool = False,
                   write_trajectories: bool = True) -> ExperimentResult:
    """Run a scene file end to end and write all products to ``out_dir``.

    Parameters
    ----------
    config : Config or None
        Parsed scene file; ``None`` requires ``preset``.
    out_dir : path
    preset : str, optional
        Name of a shipped preset used when ``config`` is ``None``.
    overwrite : bool
        Replace a non-empty output directory.
    write_trajectories : bool
        Skip ``trajectories.csv`` when false.

    Notes
    -----
    Outputs are staged in ``<out_dir>.partial`` and moved into place only
    after every step succeeded.
    """
    if config is None:
        if preset is None:
            raise ValueError("either a configuration or a preset is required")
        config = load_preset(preset)
    out_dir = Path(out_dir)
    staging = _prepare_dir(out_dir, overwrite)
    try:
        if config.section("ensemble") is None:
            result = _run_quantum(config, staging)
        else:
            result = _run_classical(config, staging, write_trajectories)
        (staging / "run_manifest.txt").write_text(_manifest(config))
        _commit_dir(staging, out_dir)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    result.out_dir = out_dir
    result.files = sorted(out_dir.rglob("*"))
    return result


def _run_classical(config: Config, out: Path, write_trajectories: bool) -> ExperimentResult:
    scene = config.scene()
    problems = validate_scene(scene)
    if problems:
        raise ValueError("invalid scene: " + "; ".join(str(p) for p in problems))
    ens, info = load_hold_transfer(config, scene)
    run_cfg = _run_config(config)
    e_start = ensemble_energy(ens, scene)[ens.alive] if len(ens) else np.zeros(0)
    record = propagate(ens, scene, run_cfg, workers=config.section("run").get("workers"))
    final = record.final
    summary = {"n_atoms": len(ens), **info, "n_alive": final.n_alive, "n_lost": final.n_exited}
    if scene.intersections():
        counts = assign_ports(final, scene)
        for name, count in counts.items():
            summary[f"port_{name}"] = count
        a, b = output_ports(scene)
        if a is not None and counts[a] + counts[b] > 0:
            summary["ratio_out1"] = counts[a] / (counts[a] + counts[b])
            summary["ratio_out2"] = counts[b] / (counts[a] + counts[b])
    e_end = ensemble_energy(final, scene)[final.alive] if len(final) else np.zeros(0)
    summary["mean_energy_start_J"] = float(e_start.mean()) if e_start.size else 0.0
    summary["mean_energy_end_J"] = float(e_end.mean()) if e_end.size else 0.0
    if write_trajectories:
        with open(out / "trajectories.csv", "w", newline="") as fh:
            record.write_csv(fh)
    _images(config, scene, record, out, summary)
    _write_rows(out / "summary.csv", ["quantity", "value"], [(k, _fmt(v)) for k, v in summary.items()])
    (out / "timing.txt").write_text(
        f"walltime_s = {record.walltime!r}\nsteps = {record.n_steps}\nstep_cost_s = {record.step_cost!r}\n")
    return ExperimentResult(out, summary, record=record)


def _images(config: Config, scene: Scene, record: TrajectoryRecord, out: Path, summary: dict):
    img = config.section("image")
    if img is None:
        return
    (out / "images").mkdir()
    times = img.get("times") or (float(record.times[-1]),)
    x0, x1, y0, y1 = scene.domain_bounds
    for k, t in enumerate(times):
        idx = int(np.argmin(np.abs(record.times - t)))
        if abs(record.times[idx] - t) > 0.5 * record.dt * config.section("run").get("record_stride") + 1e-12:
            raise ValueError(f"image time {t:.6g} s is not covered by the trajectory record")
        frame = render_image(record.snapshot(idx), img.get("psf_rms"), img.get("exposure"), img.get("pixel"),
                             bounds=(x0, x1, y0, y1))
        write_pgm(frame, out / "images" / f"frame_{k:02d}.pgm")
        if img.has("profile_line"):
            (out / "profiles").mkdir(exist_ok=True)
            xa, ya, xb, yb = img.get("profile_line")
            prof = line_profile(frame, ((xa, ya), (xb, yb)), img.get("profile_half_width"))
            (out / "profiles" / f"profile_{k:02d}.csv").write_text(prof.to_csv())
            if img.has("window_1") and img.has("window_2"):
                try:
                    r1, r2 = splitting_ratio(prof, img.get("window_1"), img.get("window_2"))
                except ValueError:
                    r1 = r2 = float("nan")
                summary[f"image_{k:02d}_ratio_1"] = r1
                summary[f"image_{k:02d}_ratio_2"] = r2


def _run_quantum(config: Config, out: Path) -> ExperimentResult:
    template, depths, workers = quantum_setup(config)
    scan = mz_fringe_scan(template, depths, workers=workers)
    (out / "fringe_scan.csv").write_text(scan.to_csv())
    summary = {
        "guide_depth_J": template.guide_depth,
        "pi_depth_J": template.pi_depth(),
        "contrast": scan.contrast,
        "correlation": scan.correlation,
        "max_losses": float(scan.losses.max()) if scan.losses.size else 0.0,
    }
    _write_rows(out / "summary.csv", ["quantity", "value"], [(k, _fmt(v)) for k, v in summary.items()])
    return ExperimentResult(out, summary)


def quantum_setup(config: Config):
    """Interferometer template, phase-well depths and worker count of a ``[quantum]`` section."""
    q = config.section("quantum")
    species = config.species()
    template = TwinGuideInterferometer(
        waist=q.get("waist"), depth_quanta=q.get("depth_quanta"), separation=q.get("separation"),
        kinetic_quanta=q.get("kinetic_quanta"), packet_length=q.get("packet_length"), n_spots=q.get("n_spots"),
        spot_spacing=q.get("spot_spacing"), shifter_time=q.get("shifter_time"), duration=q.get("duration"),
        guide_length=q.get("guide_length"), n_grid=q.get("n_grid"), ny_grid=q.get("ny_grid"), species=species,
    )
    if q.has("phase_depths"):
        depths = [d * species.k_boltzmann for d in q.get("phase_depths")]
    else:
        steps = q.get("phase_steps_pi") or tuple(np.linspace(0.0, 2.0, 9))
        depths = [f * template.pi_depth() for f in steps]
    if depths:
        template = replace(template, max_phase_depth=max(template.max_phase_depth, max(depths) / template.guide_depth))
    return template, depths, q.get("workers")


def _sweep_point(args):
    config_text, guide, reference, ratio = args
    config = parse_scene_file(config_text)
    scene = config.scene()
    ia, ib = scene.guide_index(reference), scene.guide_index(guide)
    guides = list(scene.guides)
    guides[ib] = replace(guides[ib], peak_depth=ratio * guides[ia].peak_depth)
    scene = replace(scene, guides=tuple(guides))
    ens, _ = load_hold_transfer(config, scene)
    rec = propagate(ens, scene, _run_config(config))
    counts = assign_ports(rec.final, scene)
    a, b = counts[f"{reference}+"], counts[f"{guide}+"]
    total = a + b
    r1 = a / total if total else float("nan")
    r2 = b / total if total else float("nan")
    return ratio, r1, r2, counts["lost"]


def sweep_power_ratio(config: Config, ratios=None, workers: int | None = None) -> list[tuple]:
    """Splitting ratios for a list of depth ratios ``depth_b / depth_a``.

    Returns
    -------
    list of (ratio, r1, r2, n_lost)
        In the order of ``ratios``.
    """
    sweep = config.section("sweep")
    scene = config.scene()
    reference = (sweep.get("reference_guide") if sweep else None) or scene.guides[0].name
    guide = (sweep.get("guide") if sweep else None) or scene.guides[1].name
    if ratios is None:
        ratios = sweep.get("ratios")
    if any(not r > 0 for r in ratios):
        raise ValueError("ratios must be positive")
    if workers is None:
        workers = sweep.get("workers") if sweep else 1
    text = serialize(config)
    jobs = [(text, guide, reference, float(r)) for r in ratios]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_point, jobs))
    return [_sweep_point(j) for j in jobs]


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["ratio", "r1", "r2", "n_lost"])
    writer.writerows((_fmt(r), _fmt(a), _fmt(b), str(int(n))) for r, a, b, n in rows)
    return buf.getvalue()


def run_sweep(config: Config, out_dir, overwrite: bool = False) -> Path:
    out_dir = Path(out_dir)
    staging = _prepare_dir(out_dir, overwrite)
    try:
        rows = sweep_power_ratio(config)
        (staging / "sweep.csv").write_text(sweep_csv(rows))
        (staging / "run_manifest.txt").write_text(_manifest(config))
        _commit_dir(staging, out_dir)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    return out_dir / "sweep.csv"
