"""Per-edge end-to-end simulation: source, analyzers, detector chains.

Produces the two users' detection-plane tag streams for one channel pair,
either in the BBM92 configuration (passive basis choice, two-port
analyzers, eight detectors total) or the single-analyzer fringe/counting
configuration. All randomness derives from the edge's named substreams,
so edges are independent and reproducible in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .detection import ChannelLoss, DetectorRole, DetectorSpec, detect, merge_streams
from .errors import ConfigurationError
from .franson import InterferometerConfig, analyze_pair_batch, check_franson_regime
from .qkd import PHASE_A, PHASE_B, QkdSessionReport, session_report
from .rng import substream
from .source import SourceConfig, emit_thinned

PS_PER_NS = 1e3
PS_PER_S = 1e12


@dataclass(frozen=True)
class PhaseErrorSeries:
    """Piecewise-linear phase error vs time for one analyzer."""

    t_s: np.ndarray
    error_rad: np.ndarray

    def at(self, times_ps: np.ndarray) -> np.ndarray:
        return np.interp(times_ps / PS_PER_S, self.t_s, self.error_rad)


@dataclass
class EdgeSessionConfig:
    edge_name: str
    pgr_per_mw2: float
    pump_power_mw: float
    tau_c_ps: float
    loss_signal_db: float
    loss_idler_db: float
    visibility: float
    duration_s: float
    seed: int
    edge_key: tuple[int, int] = (0, 1)
    tau_p_us: float = 2.7
    analyzer: InterferometerConfig = field(
        default_factory=lambda: InterferometerConfig(ports=2)
    )
    detector: DetectorSpec = field(default_factory=DetectorSpec)
    extra_background_rate: float = 0.0  # added to darks, e.g. pump leakage
    include_orphan_singles: bool = True
    signal_delay_ns: float = 0.0
    idler_delay_ns: float = 0.0
    phase_errors: dict[str, PhaseErrorSeries] = field(default_factory=dict)
    phase_a_rad: float = 0.0  # analyzer phases for single-port running
    phase_b_rad: float = 0.0
    counting_plane: bool = False  # detect signal/idler directly, no analyzers
    user_a: str = "A"
    user_b: str = "B"
    signal_channel: int = 0
    idler_channel: int = 0


def _source_config(cfg: EdgeSessionConfig) -> SourceConfig:
    return SourceConfig(
        pgr_per_mw2=cfg.pgr_per_mw2,
        pump_power_mw=cfg.pump_power_mw,
        coherence_time_tau_c_ps=cfg.tau_c_ps,
        pump_coherence_time_tau_p_us=cfg.tau_p_us,
        duration_s=cfg.duration_s,
        seed=cfg.seed,
    )


def _arm_transmissions(cfg: EdgeSessionConfig) -> tuple[float, float]:
    il = cfg.analyzer.insertion_loss_db
    eta_s = ChannelLoss(cfg.loss_signal_db + il).transmission
    eta_i = ChannelLoss(cfg.loss_idler_db + il).transmission
    return eta_s, eta_i


def _phases(cfg, side: str, basis_code: np.ndarray, times_ps: np.ndarray):
    if cfg.analyzer.ports == 1:
        base_val = cfg.phase_a_rad if side == "a" else cfg.phase_b_rad
        phases = np.full(times_ps.size, base_val, dtype=np.float64)
        series = cfg.phase_errors.get(f"{side}_z")
        if series is not None:
            phases += series.at(times_ps)
        return phases
    base = PHASE_A if side == "a" else PHASE_B
    phases = np.where(basis_code == 0, base["Z"], base["X"]).astype(np.float64)
    for code, basis in enumerate("zx"):
        series = cfg.phase_errors.get(f"{side}_{basis}")
        if series is not None:
            sel = basis_code == code
            if np.any(sel):
                phases[sel] += series.at(times_ps[sel])
    return phases


def _detect_side(
    cfg: EdgeSessionConfig,
    side: str,
    user: str,
    channel: int,
    delay_ns: float,
    tag_sets: dict[tuple[int, int], np.ndarray],
    base_id: int,
):
    """Run each (basis, port) arrival list through its own detector chain."""
    spec = cfg.detector
    if cfg.extra_background_rate > 0.0:
        spec = replace(
            spec, dark_count_rate=spec.dark_count_rate + cfg.extra_background_rate
        )
    streams = []
    for (basis_code, port), times in sorted(tag_sets.items()):
        det_id = base_id + 2 * basis_code + port
        role = DetectorRole(
            user=user, channel=channel, basis="ZX"[basis_code], port=port
        )
        arrivals = np.sort(times + delay_ns * PS_PER_NS)
        rng = substream(cfg.seed, "detect", cfg.edge_key, side, basis_code, port)
        streams.append(
            detect(arrivals, spec, cfg.duration_s, rng, detector_id=det_id, role=role)
        )
    return merge_streams(streams)


def simulate_edge_streams(cfg: EdgeSessionConfig):
    """Simulate one edge end to end; returns (stream_a, stream_b).

    Each stream carries four detectors in the BBM92 configuration
    (basis Z/X times port 0/1), or a single monitored output when the
    analyzer is single-port (basis splitter bypassed).
    """
    if cfg.counting_plane:
        return _simulate_counting(cfg)
    check_franson_regime(cfg.analyzer, cfg.tau_c_ps, cfg.tau_p_us)
    eta_s, eta_i = _arm_transmissions(cfg)
    emission = emit_thinned(
        _source_config(cfg),
        eta_s,
        eta_i,
        include_orphans=cfg.include_orphan_singles,
    )
    rng = substream(cfg.seed, "analyzer", cfg.edge_key)
    n_pairs = emission.pair_signal_ps.size
    dt_ps = cfg.analyzer.delta_t_ns * PS_PER_NS
    two_port = cfg.analyzer.ports == 2

    if two_port:
        basis_a = rng.integers(0, 2, n_pairs, dtype=np.uint8)
        basis_b = rng.integers(0, 2, n_pairs, dtype=np.uint8)
    else:
        basis_a = np.zeros(n_pairs, dtype=np.uint8)
        basis_b = np.zeros(n_pairs, dtype=np.uint8)
    phases_a = _phases(cfg, "a", basis_a, emission.pair_signal_ps)
    phases_b = _phases(cfg, "b", basis_b, emission.pair_idler_ps)

    batch = analyze_pair_batch(
        emission.pair_signal_ps,
        emission.pair_idler_ps,
        phases_a,
        phases_b,
        cfg.visibility,
        cfg.analyzer.delta_t_ns,
        cfg.analyzer.ports,
        rng,
    )
    ba = basis_a[batch.kept]
    bb = basis_b[batch.kept]

    tags_a: dict[tuple[int, int], list[np.ndarray]] = {}
    tags_b: dict[tuple[int, int], list[np.ndarray]] = {}
    basis_codes = (0, 1) if two_port else (0,)
    ports = (0, 1) if two_port else (0,)
    for basis_code in basis_codes:
        for port in ports:
            sel_a = (ba == basis_code) & (batch.port_a == port)
            sel_b = (bb == basis_code) & (batch.port_b == port)
            tags_a.setdefault((basis_code, port), []).append(batch.time_a_ps[sel_a])
            tags_b.setdefault((basis_code, port), []).append(batch.time_b_ps[sel_b])

    for orphan_times, tags, side in (
        (emission.orphan_signal_ps, tags_a, "a"),
        (emission.orphan_idler_ps, tags_b, "b"),
    ):
        if orphan_times.size == 0:
            continue
        orng = substream(cfg.seed, "orphans", cfg.edge_key, side)
        long_path = orng.random(orphan_times.size) < 0.5
        t = orphan_times + np.where(long_path, dt_ps, 0.0)
        if two_port:
            basis = orng.integers(0, 2, t.size, dtype=np.uint8)
            port = orng.integers(0, 2, t.size, dtype=np.uint8)
            for basis_code in basis_codes:
                for p in ports:
                    sel = (basis == basis_code) & (port == p)
                    tags.setdefault((basis_code, p), []).append(t[sel])
        else:
            # Half the orphans exit the unmonitored analyzer port.
            survive = orng.random(t.size) < 0.5
            tags.setdefault((0, 0), []).append(t[survive])

    merged_a = {k: np.concatenate(v) for k, v in tags_a.items()}
    merged_b = {k: np.concatenate(v) for k, v in tags_b.items()}

    stream_a = _detect_side(
        cfg, "a", cfg.user_a, cfg.signal_channel, cfg.signal_delay_ns, merged_a, 0
    )
    stream_b = _detect_side(
        cfg, "b", cfg.user_b, cfg.idler_channel, cfg.idler_delay_ns, merged_b, 4
    )
    return stream_a, stream_b


def _simulate_counting(cfg: EdgeSessionConfig):
    """Direct signal/idler detection with no analyzers in the path."""
    eta_s = ChannelLoss(cfg.loss_signal_db).transmission
    eta_i = ChannelLoss(cfg.loss_idler_db).transmission
    emission = emit_thinned(
        _source_config(cfg),
        eta_s,
        eta_i,
        include_orphans=cfg.include_orphan_singles,
    )
    arrivals_s = np.sort(
        np.concatenate([emission.pair_signal_ps, emission.orphan_signal_ps])
    )
    arrivals_i = np.sort(
        np.concatenate([emission.pair_idler_ps, emission.orphan_idler_ps])
    )
    stream_a = _detect_side(
        cfg,
        "a",
        cfg.user_a,
        cfg.signal_channel,
        cfg.signal_delay_ns,
        {(0, 0): arrivals_s},
        0,
    )
    stream_b = _detect_side(
        cfg,
        "b",
        cfg.user_b,
        cfg.idler_channel,
        cfg.idler_delay_ns,
        {(0, 0): arrivals_i},
        4,
    )
    return stream_a, stream_b


def run_qkd_session(
    cfg: EdgeSessionConfig,
    coincidence_window_ns: float = 2.5,
    report_window_s: float = 10.0,
    f_ec: float = 1.2,
) -> QkdSessionReport:
    """Simulate one edge and decode the BBM92 session from its streams."""
    if cfg.analyzer.ports != 2:
        raise ConfigurationError("key distribution needs two-port analyzers")
    stream_a, stream_b = simulate_edge_streams(cfg)
    return session_report(
        stream_a,
        stream_b,
        edge_name=cfg.edge_name,
        duration_s=cfg.duration_s,
        expected_offset_ns=cfg.idler_delay_ns - cfg.signal_delay_ns,
        coincidence_window_ns=coincidence_window_ns,
        report_window_s=report_window_s,
        f_ec=f_ec,
    )
