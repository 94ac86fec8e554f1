"""Detector-chain model: loss thinning, delay, jitter, darks, quantization.

A detected tag is an integer number of tagger ticks, one tick being the
tagger resolution (156.25 ps by default), so quantized times stay exact
over arbitrarily long sessions.

``DetectorSpec.jitter_sigma_ps`` is the pair-correlation Gaussian kernel
parameter for two identical detectors (the number a correlation fit
reports). Each individual detector therefore contributes Gaussian noise
of standard deviation jitter_sigma_ps / 2: the difference of two such
jitters has variance sigma^2 / 2, which is exactly the kernel
exp(-dt^2 / sigma^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import dead_time_filter
from .errors import ConfigurationError
from .grid import Channel
from .rng import substream

PS_PER_S = 1e12
PS_PER_NS = 1e3


@dataclass(frozen=True)
class ChannelLoss:
    """Chip-to-detector power transmission for one channel, in dB (<= 0)."""

    total_loss_db: float

    def __post_init__(self):
        if self.total_loss_db > 0:
            raise ConfigurationError(
                f"loss must be expressed as dB <= 0, got {self.total_loss_db}"
            )

    @property
    def transmission(self) -> float:
        return 10.0 ** (self.total_loss_db / 10.0)

    @classmethod
    def from_transmission(cls, fraction: float) -> "ChannelLoss":
        if not 0.0 < fraction <= 1.0:
            raise ConfigurationError("transmission fraction must be in (0, 1]")
        return cls(10.0 * math.log10(fraction))

    def compose(self, other: "ChannelLoss") -> "ChannelLoss":
        return ChannelLoss(self.total_loss_db + other.total_loss_db)


@dataclass(frozen=True)
class DetectorSpec:
    efficiency: float = 1.0  # folded into ChannelLoss by default
    dark_count_rate: float = 100.0  # s^-1
    jitter_sigma_ps: float = 138.3  # pair-kernel value; sigma/2 per detector
    resolution_ps: float = 156.25
    dead_time_ns: float = 25.0

    def __post_init__(self):
        if self.resolution_ps <= 0:
            raise ConfigurationError("resolution_ps must be positive")
        if self.jitter_sigma_ps < 0:
            raise ConfigurationError("jitter_sigma_ps must be non-negative")


@dataclass(frozen=True)
class DetectorRole:
    """What a detector id means inside a stream."""

    user: str
    channel: int
    basis: str = ""
    port: int = 0


@dataclass
class TimeTagStream:
    """Sorted detector tags: integer ticks of size resolution_ps."""

    detector_ids: np.ndarray  # uint32
    ticks: np.ndarray  # int64
    resolution_ps: float
    duration_s: float
    detector_map: dict[int, DetectorRole] = field(default_factory=dict)

    def __len__(self) -> int:
        return self.ticks.size

    def times_ps(self, detector_id: int | None = None) -> np.ndarray:
        if detector_id is None:
            return self.ticks.astype(np.float64) * self.resolution_ps
        sel = self.detector_ids == detector_id
        return self.ticks[sel].astype(np.float64) * self.resolution_ps


def apply_loss(times_ps: np.ndarray, loss: ChannelLoss, rng) -> np.ndarray:
    """Thin arrivals: each survives independently with the loss transmission."""
    rng = _as_generator(rng)
    p = loss.transmission
    if p >= 1.0:
        return np.asarray(times_ps, dtype=np.float64).copy()
    keep = rng.random(len(times_ps)) < p
    return np.asarray(times_ps, dtype=np.float64)[keep]


def apply_delay(times_ps: np.ndarray, delay_ns: float) -> np.ndarray:
    """Uniform fiber-delay shift; ordering is preserved."""
    if delay_ns < 0:
        raise ConfigurationError("delay_ns must be non-negative")
    return np.asarray(times_ps, dtype=np.float64) + delay_ns * PS_PER_NS


def detect(
    arrivals_ps: np.ndarray,
    spec: DetectorSpec,
    duration_s: float,
    rng,
    detector_id: int = 0,
    role: DetectorRole | None = None,
) -> TimeTagStream:
    """Turn ideal photon arrivals into one detector's tag stream.

    Adds per-detector Gaussian jitter (sigma/2, see module docstring),
    quantizes to the tagger grid, merges Poisson dark counts, applies the
    dead-time veto, and drops anything outside [0, duration].
    """
    rng = _as_generator(rng)
    arrivals = np.asarray(arrivals_ps, dtype=np.float64)
    if spec.efficiency < 1.0:
        arrivals = arrivals[rng.random(arrivals.size) < spec.efficiency]
    if spec.jitter_sigma_ps > 0:
        arrivals = arrivals + rng.normal(0.0, spec.jitter_sigma_ps / 2.0, arrivals.size)

    n_dark = rng.poisson(spec.dark_count_rate * duration_s)
    darks = rng.uniform(0.0, duration_s * PS_PER_S, n_dark)

    merged = np.concatenate([arrivals, darks])
    ticks = np.rint(merged / spec.resolution_ps).astype(np.int64)
    max_tick = int(duration_s * PS_PER_S / spec.resolution_ps)
    ticks = ticks[(ticks >= 0) & (ticks <= max_tick)]
    ticks.sort()

    if spec.dead_time_ns > 0 and ticks.size:
        keep = dead_time_filter(
            ticks.astype(np.float64) * spec.resolution_ps,
            spec.dead_time_ns * PS_PER_NS,
        )
        ticks = ticks[keep]

    ids = np.full(ticks.size, detector_id, dtype=np.uint32)
    detector_map = {detector_id: role} if role is not None else {}
    return TimeTagStream(
        detector_ids=ids,
        ticks=ticks,
        resolution_ps=spec.resolution_ps,
        duration_s=duration_s,
        detector_map=detector_map,
    )


def merge_streams(streams: list[TimeTagStream]) -> TimeTagStream:
    """Merge per-detector streams into one time-sorted stream."""
    if not streams:
        raise ConfigurationError("nothing to merge")
    res = streams[0].resolution_ps
    dur = streams[0].duration_s
    for s in streams[1:]:
        if s.resolution_ps != res:
            raise ConfigurationError("streams disagree on tagger resolution")
        dur = max(dur, s.duration_s)
    ids = np.concatenate([s.detector_ids for s in streams])
    ticks = np.concatenate([s.ticks for s in streams])
    order = np.argsort(ticks, kind="stable")
    detector_map = {}
    for s in streams:
        detector_map.update(s.detector_map)
    return TimeTagStream(
        detector_ids=ids[order],
        ticks=ticks[order],
        resolution_ps=res,
        duration_s=dur,
        detector_map=detector_map,
    )


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return substream(int(rng), "detection")
