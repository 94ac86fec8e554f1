"""Closed-loop stabilization: pump-resonance following and phase locking.

Two plants are modeled. The pump follower keeps the pump frequency on a
drifting Lorentzian dip by dither-and-descend: it probes the transmission
slope a small dither away from the working point and drives the slope to
zero with a PID. The phase lock monitors a reference fringe arranged so
the desired phase sits at quadrature of the monitor signal (side-of-fringe
locking), where a plain PID has full sign information.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .grid import ResonatorSpec
from .rng import substream


@dataclass(frozen=True)
class DriftModel:
    kind: str = "walk"  # "walk" or "sine_walk"
    step_std: float = 0.0  # observable units per sqrt(s)
    bound: float | None = None  # clamp on the walk component
    sine_amplitude: float = 0.0
    sine_period_s: float = 3600.0

    def __post_init__(self):
        if self.step_std < 0:
            raise ConfigurationError("step_std must be non-negative")
        if self.kind not in ("walk", "sine_walk"):
            raise ConfigurationError(f"unknown drift kind: {self.kind}")


@dataclass(frozen=True)
class DriftState:
    walk: float = 0.0
    t_s: float = 0.0

    def value(self, model: DriftModel) -> float:
        out = self.walk
        if model.kind == "sine_walk" and model.sine_amplitude:
            out += model.sine_amplitude * math.sin(
                2.0 * math.pi * self.t_s / model.sine_period_s
            )
        return out


def step_drift(
    state: DriftState, model: DriftModel, dt_s: float, rng: np.random.Generator
) -> DriftState:
    """Advance the drift by one step: Gaussian random-walk increment of
    std step_std * sqrt(dt), clamped to the model bound."""
    if dt_s <= 0:
        raise ConfigurationError("dt_s must be positive")
    walk = state.walk + rng.normal(0.0, model.step_std * math.sqrt(dt_s))
    if model.bound is not None:
        walk = min(max(walk, -model.bound), model.bound)
    return DriftState(walk=walk, t_s=state.t_s + dt_s)


@dataclass(frozen=True)
class PidGains:
    kp: float = 0.0
    ki: float = 0.0
    kd: float = 0.0
    setpoint: float = 0.0
    output_limits: tuple[float, float] | None = None


class PidController:
    """Position-form PID with clamped integral anti-windup."""

    def __init__(self, gains: PidGains):
        self.gains = gains
        self.integral = 0.0
        self.prev_error: float | None = None

    def step(self, error: float, dt_s: float) -> float:
        g = self.gains
        self.integral += error * dt_s
        derivative = 0.0
        if self.prev_error is not None and dt_s > 0:
            derivative = (error - self.prev_error) / dt_s
        self.prev_error = error
        raw = g.kp * error + g.ki * self.integral + g.kd * derivative
        if g.output_limits is None:
            return raw
        lo, hi = g.output_limits
        out = min(max(raw, lo), hi)
        if out != raw and g.ki:
            # back out the windup that saturated the actuator
            self.integral -= error * dt_s
        return out


@dataclass
class LockStatus:
    t_s: np.ndarray
    observable: np.ndarray
    actuator: np.ndarray
    error: np.ndarray  # controlled quantity minus its target
    target: float
    tolerance: float
    lock_lost: bool
    rms_error: float  # over the post-settling samples
    settle_s: float

    def in_lock(self) -> np.ndarray:
        return np.abs(self.error) <= self.tolerance

    def in_band_fraction(self, band: float, target: float | None = None) -> float:
        """Fraction of post-settling observable samples within target +- band."""
        tgt = self.target if target is None else target
        post = self.t_s >= self.settle_s
        if not np.any(post):
            return 0.0
        return float(np.mean(np.abs(self.observable[post] - tgt) <= band))


def _dip_transmission(detuning_mhz: float, fwhm_mhz: float, extinction: float):
    x = 2.0 * detuning_mhz / fwhm_mhz
    return 1.0 - (1.0 - extinction) / (1.0 + x * x)


def pump_follow(
    resonator: ResonatorSpec,
    drift: DriftModel,
    controller: PidGains,
    duration_s: float,
    dt_s: float = 0.1,
    seed: int = 0,
    dither_mhz: float | None = None,
    initial_offset_mhz: float = 0.0,
    settle_s: float = 5.0,
) -> LockStatus:
    """Track a drifting resonance dip with pump-frequency feedback.

    The recorded observable is the transmission at the working point (the
    dither excursions probe the slope but are not logged). Lock is lost
    when the pump strays beyond one FWHM for more than a second; the
    simulation keeps running and reports it.
    """
    fwhm = resonator.linewidth_fwhm_mhz
    extinction = resonator.extinction_at(0)
    if abs(initial_offset_mhz) > fwhm:
        raise ConfigurationError("pump must start within one FWHM of resonance")
    if dither_mhz is None:
        dither_mhz = fwhm / 20.0
    rng = substream(seed, "pump-follow")
    pid = PidController(controller)
    state = DriftState()
    pump = initial_offset_mhz

    n = int(round(duration_s / dt_s))
    t = np.empty(n)
    obs = np.empty(n)
    act = np.empty(n)
    err = np.empty(n)
    out_of_range_s = 0.0
    lock_lost = False
    for i in range(n):
        state = step_drift(state, drift, dt_s, rng)
        resonance = state.value(drift)
        detuning = pump - resonance
        g = (
            _dip_transmission(detuning + dither_mhz, fwhm, extinction)
            - _dip_transmission(detuning - dither_mhz, fwhm, extinction)
        ) / (2.0 * dither_mhz)
        pump += pid.step(-g, dt_s)
        t[i] = state.t_s
        obs[i] = _dip_transmission(detuning, fwhm, extinction)
        act[i] = pump
        err[i] = detuning
        if abs(detuning) > fwhm:
            out_of_range_s += dt_s
            if out_of_range_s > 1.0:
                lock_lost = True
        else:
            out_of_range_s = 0.0

    post = t >= settle_s
    rms = float(np.sqrt(np.mean(err[post] ** 2))) if np.any(post) else math.inf
    return LockStatus(
        t_s=t,
        observable=obs,
        actuator=act,
        error=err,
        target=extinction,
        tolerance=fwhm,
        lock_lost=lock_lost,
        rms_error=rms,
        settle_s=settle_s,
    )


def phase_lock(
    drift: DriftModel,
    controller: PidGains,
    setpoint_rad: float,
    duration_s: float,
    dt_s: float = 0.1,
    seed: int = 0,
    tolerance_rad: float = 0.05,
    settle_s: float = 5.0,
) -> LockStatus:
    """Hold an interferometer phase against drift with a PID.

    The monitor fringe is offset so the setpoint sits at quadrature
    (observable (1 - sin(phase - setpoint)) / 2, slope -1/2 at lock), the
    standard side-of-fringe arrangement for locking at fringe extrema.
    """
    if not 0.0 <= setpoint_rad < 2.0 * math.pi:
        raise ConfigurationError("setpoint must be in [0, 2pi)")
    rng = substream(seed, "phase-lock", f"{setpoint_rad:.6f}")
    pid = PidController(controller)
    state = DriftState()
    act = 0.0

    n = int(round(duration_s / dt_s))
    t = np.empty(n)
    obs = np.empty(n)
    actuator = np.empty(n)
    err = np.empty(n)
    for i in range(n):
        state = step_drift(state, drift, dt_s, rng)
        phase = setpoint_rad + state.value(drift) + act
        y = (1.0 - math.sin(phase - setpoint_rad)) / 2.0
        act += pid.step(y - 0.5, dt_s)
        t[i] = state.t_s
        obs[i] = y
        actuator[i] = act
        err[i] = phase - setpoint_rad

    post = t >= settle_s
    rms = float(np.sqrt(np.mean(err[post] ** 2))) if np.any(post) else math.inf
    return LockStatus(
        t_s=t,
        observable=obs,
        actuator=actuator,
        error=err,
        target=0.5,
        tolerance=tolerance_rad,
        lock_lost=bool(np.any(np.abs(err[post]) > math.pi)) if np.any(post) else False,
        rms_error=rms,
        settle_s=settle_s,
    )
