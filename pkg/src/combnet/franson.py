"""Unbalanced Mach-Zehnder (Franson) analyzer statistics.

Each photon of a pair traverses its user's analyzer by the short or long
path (long = short + delta_t). Joint outcomes split into three histogram
peaks: side peaks where exactly one photon went long, and a central peak
where both took the same path. Only the central peak interferes; its
probability carries cos(phase_a + phase_b) scaled by the injected
visibility.

Outcome law per pair, single monitored port (each analyzer transmits a
1/2 amplitude per path to its output):

    P(early side)  = 1/16          (photon a long, b short)
    P(late side)   = 1/16          (photon a short, b long)
    P(central)     = (1 + V cos(phase_a + phase_b)) / 8
    P(undetected)  = remainder     (photons exit unmonitored ports)

With a circulator recovering both output ports nothing is lost:
side peaks land with probability 1/4 each and the central peak with 1/2,
and the central-port parity carries the interference instead:
P(port_a == port_b | central) = (1 + V cos(phase_a + phase_b)) / 2.

Central outcomes shift both photons together (the both-long case is
displaced by delta_t in absolute time), so the pair offset is unchanged
and the three-peak structure survives arbitrary fiber delays.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, EmptyDataError

PS_PER_NS = 1e3


class Peak(enum.IntEnum):
    EARLY_SIDE = 0  # pair offset (t_b - t_a) shifted by -delta_t
    CENTRAL = 1
    LATE_SIDE = 2  # pair offset shifted by +delta_t


@dataclass(frozen=True)
class InterferometerConfig:
    delta_t_ns: float = 2.5  # long minus short arm
    phase_rad: float = 0.0
    ports: int = 1  # 1 = single monitored output, 2 = circulator-equipped
    insertion_loss_db: float = 0.0

    def __post_init__(self):
        if self.ports not in (1, 2):
            raise ConfigurationError("ports must be 1 or 2")
        if self.delta_t_ns <= 0:
            raise ConfigurationError("delta_t_ns must be positive")


def check_franson_regime(
    config: InterferometerConfig, tau_c_ps: float, tau_p_us: float
) -> None:
    """Reject configurations outside delta_t >> tau_c and delta_t << tau_p."""
    delta_t_ps = config.delta_t_ns * PS_PER_NS
    if delta_t_ps < 5.0 * tau_c_ps:
        raise ConfigurationError(
            f"arm imbalance {config.delta_t_ns} ns must be >= 5x the photon "
            f"coherence time {tau_c_ps} ps to separate the peaks"
        )
    if delta_t_ps > 1e-3 * tau_p_us * 1e6:
        raise ConfigurationError(
            f"arm imbalance {config.delta_t_ns} ns must be <= 1e-3x the pump "
            f"coherence time {tau_p_us} us for stable interference"
        )


def central_probability(phase_sum_rad, visibility_v: float):
    """Single-port central-peak probability (1 + V cos(phase_sum)) / 8."""
    _check_visibility(visibility_v)
    return (1.0 + visibility_v * np.cos(phase_sum_rad)) / 8.0


@dataclass(frozen=True)
class AnalyzedOutcome:
    peak: Peak
    port_a: int
    port_b: int
    emission_time_a_ps: float
    emission_time_b_ps: float


@dataclass
class AnalyzedBatch:
    """Vectorized analyzer outcomes for the pairs that produced a joint
    detection (undetected pairs are already dropped). ``kept`` holds the
    indices of the surviving pairs in the input arrays so per-pair labels
    carried alongside can be filtered consistently."""

    peak: np.ndarray  # int8 Peak codes
    port_a: np.ndarray  # uint8
    port_b: np.ndarray  # uint8
    time_a_ps: np.ndarray
    time_b_ps: np.ndarray
    kept: np.ndarray  # int64 indices into the input pair arrays

    def __len__(self) -> int:
        return self.peak.size

    def central_mask(self) -> np.ndarray:
        return self.peak == int(Peak.CENTRAL)


def analyze_pair_batch(
    signal_ps: np.ndarray,
    idler_ps: np.ndarray,
    phase_a,
    phase_b,
    visibility_v: float,
    delta_t_ns: float,
    ports: int,
    rng: np.random.Generator,
) -> AnalyzedBatch:
    """Sample joint analyzer outcomes for many pairs at once.

    ``phase_a``/``phase_b`` may be scalars or per-pair arrays (radians).
    """
    _check_visibility(visibility_v)
    if ports not in (1, 2):
        raise ConfigurationError("ports must be 1 or 2")
    n = signal_ps.size
    dt_ps = delta_t_ns * PS_PER_NS
    phase_sum = np.broadcast_to(
        np.asarray(phase_a, dtype=np.float64) + np.asarray(phase_b, dtype=np.float64),
        (n,),
    )
    cosphi = np.cos(phase_sum)

    u = rng.random(n)
    if ports == 1:
        p_side = 1.0 / 16.0
        p_central = (1.0 + visibility_v * cosphi) / 8.0
    else:
        p_side = 1.0 / 4.0
        p_central = np.full(n, 0.5)
    early = u < p_side
    late = (~early) & (u < 2 * p_side)
    central = (~early) & (~late) & (u < 2 * p_side + p_central)
    detected = early | late | central

    peak = np.full(n, -1, dtype=np.int8)
    peak[early] = int(Peak.EARLY_SIDE)
    peak[late] = int(Peak.LATE_SIDE)
    peak[central] = int(Peak.CENTRAL)

    t_a = signal_ps.astype(np.float64, copy=True)
    t_b = idler_ps.astype(np.float64, copy=True)
    t_a[early] += dt_ps
    t_b[late] += dt_ps
    both_long = central & (rng.random(n) < 0.5)
    t_a[both_long] += dt_ps
    t_b[both_long] += dt_ps

    port_a = np.zeros(n, dtype=np.uint8)
    port_b = np.zeros(n, dtype=np.uint8)
    if ports == 2:
        port_a = rng.integers(0, 2, n, dtype=np.uint8)
        side = early | late
        port_b[side] = rng.integers(0, 2, int(side.sum()), dtype=np.uint8)
        p_match = (1.0 + visibility_v * cosphi[central]) / 2.0
        match = rng.random(int(central.sum())) < p_match
        port_b[central] = np.where(match, port_a[central], 1 - port_a[central])

    return AnalyzedBatch(
        peak=peak[detected],
        port_a=port_a[detected],
        port_b=port_b[detected],
        time_a_ps=t_a[detected],
        time_b_ps=t_b[detected],
        kept=np.flatnonzero(detected),
    )


def analyze_pair(
    signal_ps: float,
    idler_ps: float,
    config_a: InterferometerConfig,
    config_b: InterferometerConfig,
    visibility_v: float,
    rng: np.random.Generator,
) -> AnalyzedOutcome | None:
    """Single-pair analyzer outcome, or None when the pair goes undetected.

    Both analyzers must share the arm imbalance and port count (one
    network-wide analyzer design).
    """
    if config_a.delta_t_ns != config_b.delta_t_ns:
        raise ConfigurationError("analyzers must share the arm imbalance")
    if config_a.ports != config_b.ports:
        raise ConfigurationError("analyzers must share the port count")
    batch = analyze_pair_batch(
        np.asarray([signal_ps], dtype=np.float64),
        np.asarray([idler_ps], dtype=np.float64),
        config_a.phase_rad,
        config_b.phase_rad,
        visibility_v,
        config_a.delta_t_ns,
        config_a.ports,
        rng,
    )
    if len(batch) == 0:
        return None
    return AnalyzedOutcome(
        peak=Peak(int(batch.peak[0])),
        port_a=int(batch.port_a[0]),
        port_b=int(batch.port_b[0]),
        emission_time_a_ps=float(batch.time_a_ps[0]),
        emission_time_b_ps=float(batch.time_b_ps[0]),
    )


def singles_rate_check(sweep: list[tuple[float, float]]) -> float:
    """Max relative singles fluctuation over a phase sweep covering >= 2pi.

    The model predicts phase-independent singles (no single-photon
    interference once delta_t exceeds the photon coherence time), so this
    should come back at the statistical level only.
    """
    if not sweep:
        raise EmptyDataError("empty phase sweep")
    phases = np.asarray([p for p, _ in sweep], dtype=np.float64)
    counts = np.asarray([c for _, c in sweep], dtype=np.float64)
    if phases.max() - phases.min() < 2.0 * np.pi - 1e-9:
        raise ConfigurationError("sweep must cover at least 2pi")
    mean = counts.mean()
    if mean == 0:
        raise EmptyDataError("zero-count sweep")
    return float(np.max(np.abs(counts - mean)) / mean)


def _check_visibility(v) -> None:
    if float(np.min(v)) < 0.0 or float(np.max(v)) > 1.0:
        raise ValueError(f"visibility must be in [0, 1], got {v}")
