"""Synthetic fluorescence images, line profiles and splitting ratios.

Images are stored with row 0 at the top (largest y), matching the usual
raster convention of image files.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

DEFAULT_PSF_RMS = 14e-6
DEFAULT_EXPOSURE = 0.8e-3
DEFAULT_PIXEL_PITCH = 7e-6
#: Padding added around the atoms, in PSF rms widths.
PSF_PADDING = 6.0


@dataclass
class ImageFrame:
    """Fluorescence image.

    Attributes
    ----------
    pixels : ndarray, shape (rows, cols)
        Detected photons per pixel; row 0 is the top edge.
    pixel_pitch : float
    origin : (float, float)
        Lower-left corner of the image (m).
    psf_rms : float
    exposure : float
    """

    pixels: np.ndarray
    pixel_pitch: float
    origin: tuple[float, float]
    psf_rms: float
    exposure: float

    def __post_init__(self):
        if np.any(self.pixels < 0):
            raise ValueError("pixel values must be non-negative")

    @property
    def shape(self):
        return self.pixels.shape

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        rows, cols = self.pixels.shape
        x0, y0 = self.origin
        return x0, x0 + cols * self.pixel_pitch, y0, y0 + rows * self.pixel_pitch

    def pixel_centers(self):
        rows, cols = self.pixels.shape
        x = self.origin[0] + (np.arange(cols) + 0.5) * self.pixel_pitch
        y = self.origin[1] + (rows - np.arange(rows) - 0.5) * self.pixel_pitch
        return x, y

    def total(self) -> float:
        return float(self.pixels.sum())

    def moments(self):
        """Intensity centroid and rms widths ``((cx, cy), (sx, sy))``."""
        x, y = self.pixel_centers()
        w = self.pixels
        total = w.sum()
        cx = (w.sum(axis=0) * x).sum() / total
        cy = (w.sum(axis=1) * y).sum() / total
        sx = math.sqrt((w.sum(axis=0) * (x - cx) ** 2).sum() / total)
        sy = math.sqrt((w.sum(axis=1) * (y - cy) ** 2).sum() / total)
        return (cx, cy), (sx, sy)

    def to_fractional_index(self, x, y):
        """Continuous (row, col) indices of points, pixel centres at integers."""
        rows, _ = self.pixels.shape
        col = (np.asarray(x) - self.origin[0]) / self.pixel_pitch - 0.5
        row = rows - 0.5 - (np.asarray(y) - self.origin[1]) / self.pixel_pitch
        return row, col


def coast(ensemble, exposure: float, n_sub: int = 16):
    """Ballistic positions of the alive atoms at ``n_sub`` midpoint times of an exposure.

    Returns
    -------
    times : ndarray, shape (n_sub,)
    positions : ndarray, shape (n_sub, n_alive, 2)
    """
    alive = ensemble.alive
    p = ensemble.pos[alive]
    v = ensemble.vel[alive]
    tau = (np.arange(n_sub) + 0.5) * exposure / n_sub
    return ensemble.time + tau, p[None, :, :] + tau[:, None, None] * v[None, :, :]


def render_image(trajectory_slice, psf_rms: float = DEFAULT_PSF_RMS, exposure: float = DEFAULT_EXPOSURE,
                 pixel_pitch: float = DEFAULT_PIXEL_PITCH, *, bounds=None, photon_rate: float = 1.0,
                 t_start: float | None = None, poisson_seed: int | None = None) -> ImageFrame:
    """Accumulate atom positions over an exposure and blur with a Gaussian PSF.

    Parameters
    ----------
    trajectory_slice : TrajectoryRecord, Ensemble or (times, positions)
        Snapshots covering the exposure. An ``Ensemble`` is coasted
        ballistically with the guides switched off. A ``(times, positions)``
        pair gives positions of shape ``(n_times, n_atoms, 2)``.
    psf_rms, exposure, pixel_pitch : float
    bounds : (xmin, xmax, ymin, ymax), optional
        Imaged region before PSF padding; defaults to the atoms' extent.
    photon_rate : float
        Detected photons per atom per second.
    t_start : float, optional
        Start of the exposure within a record; defaults to its first snapshot.
    poisson_seed : int, optional
        Replace pixel values by Poisson draws seeded with this value.
    """
    if exposure < 0:
        raise ValueError("exposure must be >= 0")
    if not pixel_pitch > 0:
        raise ValueError("pixel pitch must be positive")
    times, positions = _exposure_samples(trajectory_slice, exposure, t_start)
    weights = _sample_weights(times, exposure) * photon_rate
    flat = positions.reshape(-1, 2)
    w_flat = np.repeat(weights, positions.shape[1])
    if bounds is None:
        if flat.size:
            bounds = (flat[:, 0].min(), flat[:, 0].max(), flat[:, 1].min(), flat[:, 1].max())
        else:
            bounds = (0.0, pixel_pitch, 0.0, pixel_pitch)
    pad = PSF_PADDING * psf_rms + pixel_pitch
    xmin, xmax, ymin, ymax = bounds[0] - pad, bounds[1] + pad, bounds[2] - pad, bounds[3] + pad
    cols = max(int(math.ceil((xmax - xmin) / pixel_pitch)), 1)
    rows = max(int(math.ceil((ymax - ymin) / pixel_pitch)), 1)
    frame = ImageFrame(np.zeros((rows, cols)), pixel_pitch, (xmin, ymin), psf_rms, exposure)
    if flat.size:
        row, col = frame.to_fractional_index(flat[:, 0], flat[:, 1])
        r = np.rint(row).astype(np.int64)
        c = np.rint(col).astype(np.int64)
        ok = (r >= 0) & (r < rows) & (c >= 0) & (c < cols)
        np.add.at(frame.pixels, (r[ok], c[ok]), w_flat[ok])
    if psf_rms > 0:
        frame.pixels = gaussian_filter(frame.pixels, psf_rms / pixel_pitch, mode="constant", truncate=PSF_PADDING)
        np.clip(frame.pixels, 0.0, None, out=frame.pixels)
    if poisson_seed is not None:
        frame.pixels = np.random.default_rng(poisson_seed).poisson(frame.pixels).astype(float)
    return frame


def _exposure_samples(trajectory_slice, exposure, t_start):
    from .dynamics import Ensemble, TrajectoryRecord

    if isinstance(trajectory_slice, Ensemble):
        return coast(trajectory_slice, exposure)
    if isinstance(trajectory_slice, TrajectoryRecord):
        rec = trajectory_slice
        t0 = rec.times[0] if t_start is None else t_start
        t1 = t0 + exposure
        tol = 1e-9 * max(exposure, rec.dt)
        if t0 < rec.times[0] - tol or t1 > rec.times[-1] + tol:
            raise ValueError(f"exposure [{t0:.6g}, {t1:.6g}] s exceeds the record [{rec.times[0]:.6g}, {rec.times[-1]:.6g}] s")
        sel = np.flatnonzero((rec.times >= t0 - tol) & (rec.times <= t1 + tol))
        alive = rec.alive[sel[-1]]
        return rec.times[sel] - t0, rec.pos[sel][:, alive, :]
    times, positions = trajectory_slice
    return np.asarray(times, dtype=float), np.asarray(positions, dtype=float).reshape(len(times), -1, 2)


def _sample_weights(times, exposure):
    """Exposure time attributed to each snapshot, summing to ``exposure``."""
    n = len(times)
    if n == 0:
        return np.zeros(0)
    if n == 1:
        return np.array([exposure])
    edges = np.concatenate([[times[0]], 0.5 * (times[1:] + times[:-1]), [times[-1]]])
    span = times[-1] - times[0]
    return np.diff(edges) * (exposure / span) if span > 0 else np.full(n, exposure / n)


@dataclass
class LineProfile:
    """Intensity integrated across a line, as a function of arc length along it."""

    s: np.ndarray
    intensity: np.ndarray
    line: tuple[tuple[float, float], tuple[float, float]]
    integration_half_width: float

    @property
    def ds(self) -> float:
        return float(self.s[1] - self.s[0]) if self.s.size > 1 else 0.0

    def integral(self, window) -> float:
        """Area over the half-open arc-length window ``[lo, hi)``."""
        lo, hi = window
        sel = (self.s >= lo) & (self.s < hi)
        return float(self.intensity[sel].sum() * self.ds)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["s_m", "intensity"])
        writer.writerows((repr(float(a)), repr(float(b))) for a, b in zip(self.s, self.intensity))
        return buf.getvalue()


def line_profile(image: ImageFrame, line, half_width: float) -> LineProfile:
    """Integrate the intensity over ``+-half_width`` across ``line``.

    Samples are spaced by one pixel pitch along and across the line; values
    are bilinearly interpolated. The area under the profile equals the
    detected photons within the strip.
    """
    (x0, y0), (x1, y1) = line
    xmin, xmax, ymin, ymax = image.bounds
    for x, y in ((x0, y0), (x1, y1)):
        if not (xmin <= x <= xmax and ymin <= y <= ymax):
            raise ValueError(f"line end ({x:.6g}, {y:.6g}) lies outside the image {image.bounds}")
    length = math.hypot(x1 - x0, y1 - y0)
    if length == 0:
        raise ValueError("line has zero length")
    p = image.pixel_pitch
    u = np.array([x1 - x0, y1 - y0]) / length
    n = np.array([-u[1], u[0]])
    s = np.arange(int(math.floor(length / p)) + 1) * p
    m = int(math.floor(half_width / p))
    offsets = np.arange(-m, m + 1) * p
    px = x0 + s[:, None] * u[0] + offsets[None, :] * n[0]
    py = y0 + s[:, None] * u[1] + offsets[None, :] * n[1]
    row, col = image.to_fractional_index(px, py)
    density = map_coordinates(image.pixels, [row.ravel(), col.ravel()], order=1, mode="constant", cval=0.0)
    density = np.clip(density.reshape(px.shape), 0.0, None) / (p * p)
    return LineProfile(s, density.sum(axis=1) * p, ((x0, y0), (x1, y1)), half_width)


def splitting_ratio(profile: LineProfile, window_1, window_2) -> tuple[float, float]:
    """Fractions of the profile area in two disjoint half-open windows."""
    (a0, a1), (b0, b1) = sorted(window_1), sorted(window_2)
    if a0 < b1 and b0 < a1:
        raise ValueError("splitting windows overlap")
    i1 = profile.integral((a0, a1))
    i2 = profile.integral((b0, b1))
    if i1 + i2 <= 0:
        raise ValueError("both windows are empty; the splitting ratio is undefined")
    return i1 / (i1 + i2), i2 / (i1 + i2)


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------


def write_pgm(image: ImageFrame, path) -> Path:
    """Write a binary 16-bit PGM plus a ``.hdr`` sidecar with the calibration.

    Pixel values are scaled so the brightest pixel maps to 65535; the scale
    (photons per grey level) is stored in the sidecar.
    """
    path = Path(path)
    peak = float(image.pixels.max()) if image.pixels.size else 0.0
    scale = peak / 65535.0 if peak > 0 else 1.0
    grey = np.rint(image.pixels / scale).astype(">u2")
    rows, cols = grey.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n65535\n".encode("ascii"))
        fh.write(grey.tobytes())
    header = path.with_suffix(".hdr")
    header.write_text(
        f"pixel_pitch_m = {image.pixel_pitch!r}\n"
        f"origin_m = {float(image.origin[0])!r} {float(image.origin[1])!r}\n"
        f"psf_rms_m = {image.psf_rms!r}\n"
        f"exposure_s = {image.exposure!r}\n"
        f"photons_per_level = {scale!r}\n"
    )
    return path


def read_pgm(path) -> ImageFrame:
    """Read an image written by :func:`write_pgm`."""
    path = Path(path)
    data = path.read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        fields.append(data[pos:end].decode("ascii"))
        pos = end
    pos += 1
    magic, cols, rows, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic != "P5" or maxval != 65535:
        raise ValueError(f"{path}: expected a 16-bit binary PGM")
    grey = np.frombuffer(data, dtype=">u2", count=rows * cols, offset=pos).reshape(rows, cols)
    meta = {}
    for line in path.with_suffix(".hdr").read_text().splitlines():
        key, _, value = line.partition("=")
        meta[key.strip()] = value.split()
    scale = float(meta["photons_per_level"][0])
    return ImageFrame(grey.astype(float) * scale, float(meta["pixel_pitch_m"][0]),
                      (float(meta["origin_m"][0]), float(meta["origin_m"][1])),
                      float(meta["psf_rms_m"][0]), float(meta["exposure_s"][0]))
