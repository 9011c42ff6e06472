"""Dipole potential, force and photon-scattering rate of a scene, plus calculators.

The vectorized :func:`evaluate` is the workhorse used by the trajectory
integrator; the point functions wrap it with domain checking.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import constants

from .scene import RB85, Scene, SpeciesConstants


class HyperfineState(enum.IntEnum):
    """Ground-state hyperfine level of 85Rb."""

    F2 = 2
    F3 = 3


class DomainError(ValueError):
    """A query point lies outside the scene domain."""


@dataclass(frozen=True)
class PotentialSample:
    energy: float
    force: np.ndarray
    scatter_rate: float


def evaluate(scene: Scene, x, y, state, *, force: bool = True, rate: bool = False):
    """Potential, force and scattering rate on arrays of points.

    Parameters
    ----------
    scene : Scene
    x, y : array_like
        Coordinates (m); broadcast together.
    state : HyperfineState or array_like of int
        Either one state for all points or a per-point array of 2/3 codes.
    force, rate : bool
        Whether to compute the force components and the scattering rate.

    Returns
    -------
    dict
        ``"U"`` always; ``"fx"``, ``"fy"`` if ``force``; ``"rate"`` if ``rate``.
    """
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    if np.ndim(state) == 0:
        return _evaluate_single(scene, x, y, int(state), force, rate)
    codes = np.broadcast_to(np.asarray(state), x.shape)
    out = {"U": np.zeros(x.shape)}
    if force:
        out["fx"] = np.zeros(x.shape)
        out["fy"] = np.zeros(x.shape)
    if rate:
        out["rate"] = np.zeros(x.shape)
    for code in np.unique(codes):
        mask = codes == code
        part = _evaluate_single(scene, x[mask], y[mask], int(code), force, rate)
        for key, arr in part.items():
            out[key][mask] = arr
    return out


def _evaluate_single(scene, x, y, state, want_force, want_rate):
    u_total = np.zeros(x.shape)
    fx = np.zeros(x.shape) if want_force else None
    fy = np.zeros(x.shape) if want_force else None
    rate = np.zeros(x.shape) if want_rate else None
    hbar = scene.species.hbar
    gamma = scene.species.gamma
    for g in scene.guides:
        amp = g.signed_depth(state)
        if amp == 0.0:
            continue
        c, s_ = math.cos(g.angle), math.sin(g.angle)
        rx = x - g.origin[0]
        ry = y - g.origin[1]
        s = rx * c + ry * s_
        d = -rx * s_ + ry * c
        inv_w2 = 1.0 / (g.waist * g.waist)
        gauss = np.exp(-2.0 * d * d * inv_w2)
        f = g.profile.factor(s)
        u = amp * f * gauss
        u_total += u
        if want_force:
            # F = -dU/ds * u_hat - dU/dd * n_hat
            dU_ds = amp * g.profile.slope(s) * gauss
            dU_dd = -4.0 * d * inv_w2 * u
            fx -= dU_ds * c - dU_dd * s_
            fy -= dU_ds * s_ + dU_dd * c
        if want_rate:
            rate += gamma / abs(g.detuning_hz(state)) * np.abs(u) / hbar
    for sp in scene.spots:
        amp = sp.depth(state)
        if amp == 0.0:
            continue
        rx = x - sp.center[0]
        ry = y - sp.center[1]
        inv_w2 = 1.0 / (sp.waist * sp.waist)
        u = amp * np.exp(-2.0 * (rx * rx + ry * ry) * inv_w2)
        u_total += u
        if want_force:
            fx += 4.0 * inv_w2 * rx * u
            fy += 4.0 * inv_w2 * ry * u
        if want_rate:
            rate += gamma / abs(sp.detuning_hz(state)) * np.abs(u) / hbar
    out = {"U": u_total}
    if want_force:
        out["fx"] = fx
        out["fy"] = fy
    if want_rate:
        out["rate"] = rate
    return out


def _check_point(scene: Scene, point):
    x, y = float(point[0]), float(point[1])
    if not scene.contains(x, y):
        raise DomainError(f"point ({x:.6g}, {y:.6g}) m lies outside domain {scene.domain_bounds}")
    return x, y


def potential_at(scene: Scene, point, state=HyperfineState.F2) -> float:
    """Potential energy (J) at ``point``; negative values trap."""
    x, y = _check_point(scene, point)
    return float(evaluate(scene, x, y, state, force=False)["U"])


def force_at(scene: Scene, point, state=HyperfineState.F2) -> np.ndarray:
    """Force ``-grad U`` (N) at ``point``."""
    x, y = _check_point(scene, point)
    out = evaluate(scene, x, y, state)
    return np.array([float(out["fx"]), float(out["fy"])])


def scatter_rate_at(scene: Scene, point, state=HyperfineState.F2) -> float:
    """Photon-scattering rate (1/s) summed over all beams at ``point``."""
    x, y = _check_point(scene, point)
    return float(evaluate(scene, x, y, state, force=False, rate=True)["rate"])


def sample_at(scene: Scene, point, state=HyperfineState.F2) -> PotentialSample:
    x, y = _check_point(scene, point)
    out = evaluate(scene, x, y, state, rate=True)
    return PotentialSample(float(out["U"]), np.array([float(out["fx"]), float(out["fy"])]), float(out["rate"]))


# ---------------------------------------------------------------------------
# Derived-quantity calculators
# ---------------------------------------------------------------------------


def detuning_from_wavelength_offset(delta_lambda: float, wavelength: float = RB85.lambda_d2) -> float:
    """Frequency detuning (Hz) of light red-shifted by ``delta_lambda`` (m)."""
    return -constants.c * delta_lambda / wavelength**2


def depth_from_power(power: float, waist: float, line_length: float, delta_nu: float,
                     species: SpeciesConstants = RB85) -> float:
    """Signed dipole potential (J) on the axis of a line focus.

    The focus is Gaussian across (1/e^2 radius ``waist``) and uniform along
    ``line_length``, so the peak intensity is ``P / (sqrt(pi/2) w L)``. The
    two-level rotating-wave shift is ``3 pi c^2 Gamma / (2 w0^3 Delta) * I``.
    A negative ``delta_nu`` (red) yields a negative, trapping value.
    """
    if not waist > 0:
        raise ValueError(f"waist must be positive, got {waist}")
    if not line_length > 0:
        raise ValueError(f"line length must be positive, got {line_length}")
    if power < 0:
        raise ValueError(f"power must be >= 0, got {power}")
    if delta_nu == 0:
        raise ValueError("detuning must be non-zero")
    intensity = power / (math.sqrt(math.pi / 2.0) * waist * line_length)
    w0 = species.omega_d2
    delta = 2.0 * math.pi * delta_nu
    return 3.0 * math.pi * species.c_light**2 * species.gamma_angular / (2.0 * w0**3 * delta) * intensity


def radial_trap_frequency(depth: float, waist: float, mass: float = RB85.mass) -> float:
    """Transverse harmonic frequency (Hz) of a Gaussian guide of ``depth`` (J)."""
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    return math.sqrt(4.0 * depth / (mass * waist * waist)) / (2.0 * math.pi)


def rayleigh_range(waist: float, wavelength: float) -> float:
    if not (waist > 0 and wavelength > 0):
        raise ValueError("waist and wavelength must be positive")
    return math.pi * waist * waist / wavelength


def scattering_rate(depth: float, delta_nu: float, species: SpeciesConstants = RB85) -> float:
    """Photon-scattering rate (1/s) for a potential of magnitude ``depth`` at ``delta_nu``."""
    return species.gamma / abs(delta_nu) * abs(depth) / species.hbar


def mean_occupation(temperature: float, frequency: float) -> float:
    """Bose-Einstein mean vibrational quantum number."""
    if temperature <= 0:
        return 0.0
    x = constants.h * frequency / (constants.k * temperature)
    # 1 / (e^x - 1) written to stay finite for large x
    return math.exp(-x) / -math.expm1(-x)


def thermal_rms_spread(temperature: float, frequency: float, mass: float = RB85.mass) -> float:
    """Classical rms position spread in a harmonic well."""
    omega = 2.0 * math.pi * frequency
    return math.sqrt(constants.k * temperature / (mass * omega * omega))


def thermal_velocity_spread(temperature: float, mass: float = RB85.mass) -> float:
    return math.sqrt(constants.k * temperature / mass)


def ground_state_width(frequency: float, mass: float = RB85.mass) -> float:
    """Position rms of the harmonic-oscillator ground state."""
    return math.sqrt(constants.hbar / (2.0 * mass * 2.0 * math.pi * frequency))
