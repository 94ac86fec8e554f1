"""Photon-pair emission statistics for one comb channel pair.

Pairs arrive as a homogeneous Poisson process whose rate is quadratic in
pump power (spontaneous four-wave mixing). The signal-idler time offset is
two-sided exponential with scale tau_c, so an ideal coincidence histogram
reproduces the (1/tau_c) exp(-|dt|/tau_c) cross-correlation directly.

Times are float64 picoseconds from the session start; durations seconds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .planner import EdgeAssignment
from .rng import substream

PS_PER_S = 1e12


@dataclass(frozen=True)
class SourceConfig:
    pgr_per_mw2: float  # pair generation rate density, s^-1 mW^-2
    pump_power_mw: float
    coherence_time_tau_c_ps: float
    pump_coherence_time_tau_p_us: float
    duration_s: float
    seed: int

    def __post_init__(self):
        if self.coherence_time_tau_c_ps <= 0:
            raise ConfigurationError("coherence_time_tau_c_ps must be positive")
        if self.pump_power_mw < 0:
            raise ConfigurationError("pump_power_mw must be non-negative")
        # Two-photon interference needs the pump coherent across both analyzer
        # arms; enforce the working regime tau_p >= 1000 tau_c.
        tau_p_ps = self.pump_coherence_time_tau_p_us * 1e6
        if tau_p_ps < 1000.0 * self.coherence_time_tau_c_ps:
            raise ConfigurationError(
                "pump coherence time must exceed 1000x the photon coherence time"
            )


@dataclass(frozen=True)
class PairEvents:
    """Time-ordered pair emissions for one edge (struct of arrays)."""

    signal_time_ps: np.ndarray
    idler_time_ps: np.ndarray
    edge: EdgeAssignment | None = None

    def __len__(self) -> int:
        return self.signal_time_ps.size

    def offsets_ps(self) -> np.ndarray:
        return self.idler_time_ps - self.signal_time_ps


def pair_rate(config: SourceConfig) -> float:
    """Pair generation rate in s^-1 (quadratic in pump power)."""
    return config.pgr_per_mw2 * config.pump_power_mw**2


def multi_pair_rate(config: SourceConfig, window_ns: float) -> float:
    """Rate of accidental two-pair events inside ``window_ns`` (s^-1)."""
    r = pair_rate(config)
    return r * r * window_ns * 1e-9


def _edge_labels(edge: EdgeAssignment | None):
    if edge is None:
        return (0, 0)
    return edge.key()


def emit_pairs(config: SourceConfig, edge: EdgeAssignment | None = None) -> PairEvents:
    """Emit all pair events for one edge over the configured duration.

    Signal times are a homogeneous Poisson process at pair_rate; idler
    times add a Laplace(tau_c) offset. Deterministic given (config, edge).
    """
    if config.duration_s <= 0:
        raise ConfigurationError("duration_s must be positive")
    rng = substream(config.seed, "source", *_edge_labels(edge))
    rate = pair_rate(config)
    n = rng.poisson(rate * config.duration_s)
    signal = np.sort(rng.uniform(0.0, config.duration_s * PS_PER_S, n))
    delta = rng.laplace(0.0, config.coherence_time_tau_c_ps, n)
    return PairEvents(signal_time_ps=signal, idler_time_ps=signal + delta, edge=edge)


@dataclass(frozen=True)
class ThinnedEmission:
    """Post-loss emission split into surviving-pair and orphan streams.

    Equivalent in distribution to emitting every pair and thinning each
    photon independently (Poisson coloring), but the work scales with the
    detected counts instead of the generated ones.
    """

    pair_signal_ps: np.ndarray
    pair_idler_ps: np.ndarray
    orphan_signal_ps: np.ndarray
    orphan_idler_ps: np.ndarray
    edge: EdgeAssignment | None = None


def emit_thinned(
    config: SourceConfig,
    eta_signal: float,
    eta_idler: float,
    edge: EdgeAssignment | None = None,
    include_orphans: bool = True,
) -> ThinnedEmission:
    """Emit only photons that survive per-arm transmissions eta_signal/idler.

    Splits the source process into three independent Poisson streams:
    both photons survive (rate R*es*ei), signal-only (R*es*(1-ei)), and
    idler-only (R*(1-es)*ei). Orphan streams can be skipped when singles
    are irrelevant to the analysis being run.
    """
    if not (0.0 <= eta_signal <= 1.0 and 0.0 <= eta_idler <= 1.0):
        raise ConfigurationError("transmissions must be fractions in [0, 1]")
    if config.duration_s <= 0:
        raise ConfigurationError("duration_s must be positive")
    rng = substream(config.seed, "source-thinned", *_edge_labels(edge))
    rate = pair_rate(config)
    span_ps = config.duration_s * PS_PER_S
    tau = config.coherence_time_tau_c_ps

    n_both = rng.poisson(rate * eta_signal * eta_idler * config.duration_s)
    t_pair = np.sort(rng.uniform(0.0, span_ps, n_both))
    delta = rng.laplace(0.0, tau, n_both)

    orphan_s = np.empty(0)
    orphan_i = np.empty(0)
    if include_orphans:
        n_s = rng.poisson(rate * eta_signal * (1.0 - eta_idler) * config.duration_s)
        n_i = rng.poisson(rate * (1.0 - eta_signal) * eta_idler * config.duration_s)
        orphan_s = np.sort(rng.uniform(0.0, span_ps, n_s))
        orphan_i = np.sort(rng.uniform(0.0, span_ps, n_i))
    return ThinnedEmission(
        pair_signal_ps=t_pair,
        pair_idler_ps=t_pair + delta,
        orphan_signal_ps=orphan_s,
        orphan_idler_ps=orphan_i,
        edge=edge,
    )
