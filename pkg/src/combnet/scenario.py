"""Scenario configs, pipeline stages, run directories, golden comparison.

A scenario is a JSON-compatible dict (see presets.py for shipped ones).
``run_scenario`` validates it, executes the requested stages in order,
and writes every artifact under one run directory together with a
manifest (config hashes, seed, package version) and a flat metrics.json
used by ``compare_golden``.

Stage outputs:
    plan/       allocation table, plan.json, comb transmission CSV
    simulate/   per-edge time-tag binaries (+ sidecar metadata)
    analyze/    histograms, correlation fits, sweep CSVs, rate summaries
    qkd/        per-edge session reports and 10 s time series
    stabilize/  lock time-series CSVs per control loop
    report/     aggregated report.json / report.md
"""

from __future__ import annotations

import csv
import fnmatch
import hashlib
import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    accidental_estimate,
    build_histogram,
    cc_ac_car,
    fit_correlation,
    fit_fringe,
    rate_summary,
    window_sums,
)
from .control import DriftModel, PidGains, phase_lock, pump_follow
from .detection import DetectorSpec
from .errors import (
    CombnetError,
    ConfigurationError,
    FitFailureError,
    StageError,
    ValidationError,
)
from .franson import InterferometerConfig
from .grid import Channel, ResonatorSpec, transmission_spectrum
from .planner import (
    assign_delays,
    format_allocation_table,
    plan_from_dict,
    plan_network,
    plan_to_dict,
    verify_plan,
)
from .presets import preset
from .rng import derive_seed
from .session import EdgeSessionConfig, run_qkd_session, simulate_edge_streams
from .tagio import read_binary, write_binary, write_csv

STAGE_ORDER = ("plan", "simulate", "analyze", "qkd", "stabilize", "report")

_EDGE_DEFAULTS = {"pgr_per_mw2": 8.3e3, "tau_c_ps": 245.2, "jitter_ps": 138.3}

# --- config schema ----------------------------------------------------------

_NUM = (int, float)
_SCHEMA = {
    "name": str,
    "kind": ("point", "power_sweep", "fringe_sweep", "qkd", "stabilize"),
    "seed": int,
    "resonator": {
        "fsr_ghz": _NUM,
        "q_factor": _NUM,
        "linewidth_fwhm_mhz": _NUM,
        "pump_channel": int,
        "mode_count": int,
        "extinction": _NUM,
        "insertion_loss_db": _NUM,
    },
    "plan": {
        "n_users": int,
        "channel_range": [int],
        "exclusion_radius": int,
        "extra_exclusions": [int],
        "base_step_ns": _NUM,
        "identification_window_ns": _NUM,
    },
    "source": {
        "pump_power_mw": _NUM,
        "tau_p_us": _NUM,
        "per_edge": {
            "*": {"pgr_per_mw2": _NUM, "tau_c_ps": _NUM, "jitter_ps": _NUM}
        },
    },
    "losses": {
        "per_channel_db": {"*": _NUM},
        "arm_loss_per_edge_db": {"*": _NUM},
        "default_db": _NUM,
    },
    "detector": {
        "dark_count_rate": _NUM,
        "resolution_ps": _NUM,
        "dead_time_ns": _NUM,
        "pump_leak_per_mw": _NUM,
    },
    "analyzer": {
        "delta_t_ns": _NUM,
        "ports": int,
        "insertion_loss_db": _NUM,
        "default_visibility": _NUM,
        "visibility_per_edge": {"*": _NUM},
    },
    "analysis": {
        "histogram_bin_ps": _NUM,
        "histogram_span_ns": _NUM,
        "coincidence_window_ns": _NUM,
    },
    "simulate": {
        "duration_s": _NUM,
        "include_orphan_singles": bool,
        "write_tag_csv": bool,
        "edges": [str],
    },
    "power_sweep": {
        "edge": str,
        "powers_mw": [_NUM],
        "seconds_per_point": _NUM,
    },
    "fringe_sweep": {
        "phase_steps": int,
        "seconds_per_point": _NUM,
        "include_orphan_singles": bool,
        "edges": [str],
    },
    "qkd": {
        "duration_s": _NUM,
        "f_ec": _NUM,
        "report_window_s": _NUM,
        "include_orphan_singles": bool,
        "coincidence_window_ns": _NUM,
    },
    "control": {
        "duration_s": _NUM,
        "dt_s": _NUM,
        "resonance_drift": {"kind": str, "step_std": _NUM, "bound": _NUM},
        "phase_drift": {"kind": str, "step_std": _NUM, "bound": _NUM},
        "pump_pid": {"kp": _NUM, "ki": _NUM, "kd": _NUM},
        "phase_pid": {"kp": _NUM, "ki": _NUM, "kd": _NUM},
        "phase_setpoints": [_NUM],
    },
}


def _check(value, schema, path, problems):
    if isinstance(schema, dict):
        if not isinstance(value, dict):
            problems.append(f"{path}: expected an object")
            return
        wildcard = schema.get("*")
        for key, sub in value.items():
            if key in schema:
                _check(sub, schema[key], f"{path}.{key}", problems)
            elif wildcard is not None:
                _check(sub, wildcard, f"{path}.{key}", problems)
            else:
                problems.append(f"{path}.{key}: unknown key")
    elif isinstance(schema, list):
        if not isinstance(value, list):
            problems.append(f"{path}: expected a list")
            return
        for i, item in enumerate(value):
            _check(item, schema[0], f"{path}[{i}]", problems)
    elif isinstance(schema, tuple) and all(isinstance(s, str) for s in schema):
        if value not in schema:
            problems.append(f"{path}: must be one of {schema}, got {value!r}")
    else:
        types = schema if isinstance(schema, tuple) else (schema,)
        if isinstance(value, bool) and bool not in types:
            problems.append(f"{path}: expected {types}, got bool")
        elif not isinstance(value, types):
            names = "/".join(t.__name__ for t in types)
            problems.append(f"{path}: expected {names}, got {type(value).__name__}")


def validate_config(config: dict) -> list[str]:
    """Every schema problem in ``config`` (empty list when valid)."""
    problems: list[str] = []
    if not isinstance(config, dict):
        return ["config root must be an object"]
    _check(config, _SCHEMA, "config", problems)
    if "name" not in config:
        problems.append("config.name: required")
    if "kind" not in config:
        problems.append("config.kind: required")
    rng_ = config.get("plan", {}).get("channel_range")
    if isinstance(rng_, list) and len(rng_) != 2:
        problems.append("config.plan.channel_range: expected [low, high]")
    return problems


def load_config(source) -> dict:
    """Config from a preset name, a JSON file path, or a dict."""
    if isinstance(source, dict):
        return source
    text = str(source)
    path = Path(text)
    if path.suffix == ".json" or path.exists():
        return json.loads(path.read_text())
    return preset(text)


# --- resolved edge parameters -------------------------------------------------


class EdgeParams:
    def __init__(self, edge, config):
        self.edge = edge
        self.name = edge.name()
        src = config.get("source", {})
        per_edge = src.get("per_edge", {}).get(self.name, {})
        merged = {**_EDGE_DEFAULTS, **per_edge}
        self.pgr_per_mw2 = merged["pgr_per_mw2"]
        self.tau_c_ps = merged["tau_c_ps"]
        self.jitter_ps = merged["jitter_ps"]
        self.pump_power_mw = src.get("pump_power_mw", 1.0)
        self.tau_p_us = src.get("tau_p_us", 2.7)

        losses = config.get("losses", {})
        default_db = losses.get("default_db", -10.0)
        per_channel = losses.get("per_channel_db", {})
        per_edge_arm = losses.get("arm_loss_per_edge_db", {})
        if str(edge.signal_channel.index) in per_channel:
            self.loss_signal_db = per_channel[str(edge.signal_channel.index)]
        else:
            self.loss_signal_db = per_edge_arm.get(self.name, default_db)
        if str(edge.idler_channel.index) in per_channel:
            self.loss_idler_db = per_channel[str(edge.idler_channel.index)]
        else:
            self.loss_idler_db = per_edge_arm.get(self.name, default_db)

        ana = config.get("analyzer", {})
        self.visibility = ana.get("visibility_per_edge", {}).get(
            self.name, ana.get("default_visibility", 1.0)
        )
        self.analyzer = InterferometerConfig(
            delta_t_ns=ana.get("delta_t_ns", 2.5),
            ports=ana.get("ports", 2),
            insertion_loss_db=ana.get("insertion_loss_db", 0.0),
        )
        self._window_ns = config.get("analysis", {}).get(
            "coincidence_window_ns", 2.5
        )
        det = config.get("detector", {})
        self.detector = DetectorSpec(
            dark_count_rate=det.get("dark_count_rate", 100.0),
            jitter_sigma_ps=self.jitter_ps,
            resolution_ps=det.get("resolution_ps", 156.25),
            dead_time_ns=det.get("dead_time_ns", 25.0),
        )
        self.pump_leak_per_mw = det.get("pump_leak_per_mw", 0.0)

    def intrinsic_visibility(self) -> float:
        """Analyzer contrast that reproduces the configured window-measured
        fringe contrast.

        Counting inside a finite coincidence window dilutes the measured
        contrast: the side peaks' exponential tails leak a flat floor into
        the central window. Configured per-edge visibilities are the
        measured values, so the leak factor is divided back out here.
        """
        half_window_ps = self._window_ns * 500.0
        tail = math.exp(-half_window_ps / self.tau_c_ps)
        capture = 1.0 - tail
        dilution = 1.0 + tail / (2.0 * capture)
        return min(self.visibility * dilution, 1.0)

    def session_config(
        self,
        duration_s: float,
        seed: int,
        include_orphans: bool,
        counting_plane: bool = False,
        pump_power_mw: float | None = None,
        schedule=None,
        **overrides,
    ) -> EdgeSessionConfig:
        power = self.pump_power_mw if pump_power_mw is None else pump_power_mw
        delay_s = delay_i = 0.0
        if schedule is not None:
            delay_s = schedule.delay_by_channel[self.edge.signal_channel]
            delay_i = schedule.delay_by_channel[self.edge.idler_channel]
        cfg = EdgeSessionConfig(
            edge_name=self.name,
            pgr_per_mw2=self.pgr_per_mw2,
            pump_power_mw=power,
            tau_c_ps=self.tau_c_ps,
            loss_signal_db=self.loss_signal_db,
            loss_idler_db=self.loss_idler_db,
            visibility=self.intrinsic_visibility(),
            duration_s=duration_s,
            seed=seed,
            edge_key=self.edge.key(),
            tau_p_us=self.tau_p_us,
            analyzer=self.analyzer,
            detector=self.detector,
            extra_background_rate=self.pump_leak_per_mw * power,
            include_orphan_singles=include_orphans,
            counting_plane=counting_plane,
            signal_delay_ns=delay_s,
            idler_delay_ns=delay_i,
            user_a=self.edge.user_a.display(),
            user_b=self.edge.user_b.display(),
            signal_channel=self.edge.signal_channel.index,
            idler_channel=self.edge.idler_channel.index,
        )
        return replace(cfg, **overrides) if overrides else cfg


# --- stage implementations ----------------------------------------------------


def _resonator_from(config) -> ResonatorSpec:
    r = config.get("resonator", {})
    return ResonatorSpec(
        fsr_ghz=r.get("fsr_ghz", 97.8),
        q_factor=r.get("q_factor", 3.1e5),
        linewidth_fwhm_mhz=r.get("linewidth_fwhm_mhz", 649.0),
        pump_channel=Channel(r.get("pump_channel", 35)),
        mode_count=r.get("mode_count", 129),
        extinction=r.get("extinction", 0.022),
        insertion_loss_db=r.get("insertion_loss_db", 0.0),
    )


def _write_csv_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [f"{v:.9g}" if isinstance(v, float) else v for v in row]
            )


def _edge_slug(name: str) -> str:
    return name.replace(" ", "").replace("-", "_").lower()


def stage_plan(config, ctx, outdir: Path) -> dict:
    p = config.get("plan", {})
    resonator = _resonator_from(config)
    pump = resonator.pump_channel
    lo, hi = p.get("channel_range", [28, 42])
    available = [Channel(i) for i in range(lo, hi + 1)]
    radius = p.get("exclusion_radius", 1)
    exclusions = {Channel(pump.index + d) for d in range(-radius, radius + 1)
                  if lo <= pump.index + d <= hi}
    exclusions |= {Channel(i) for i in p.get("extra_exclusions", [])}
    plan = plan_network(p.get("n_users", 4), pump, available, exclusions)
    schedule = assign_delays(
        plan, p.get("base_step_ns", 10.0), p.get("identification_window_ns", 2.5)
    )
    violations = verify_plan(plan, schedule)
    if violations:
        raise StageError("plan", "; ".join(violations))

    (outdir / "plan").mkdir(parents=True, exist_ok=True)
    (outdir / "plan" / "plan.json").write_text(
        json.dumps(plan_to_dict(plan, schedule), indent=2, sort_keys=True)
    )
    (outdir / "plan" / "allocation.txt").write_text(
        format_allocation_table(plan, schedule) + "\n"
    )
    freqs, trans = transmission_spectrum(
        resonator,
        pump.center_frequency_thz - 3.2 * resonator.fsr_ghz * 1e-3,
        pump.center_frequency_thz + 3.2 * resonator.fsr_ghz * 1e-3,
        4001,
    )
    _write_csv_rows(
        outdir / "plan" / "transmission_spectrum.csv",
        ["frequency_THz", "transmittance"],
        zip(freqs.tolist(), trans.tolist()),
    )

    ctx["plan"] = plan
    ctx["schedule"] = schedule
    ctx["edges"] = {e.name(): EdgeParams(e, config) for e in plan.edges}
    metrics = {
        "plan.n_users": len(plan.users),
        "plan.channels_used": len(plan.all_channels()),
    }
    for e in plan.edges:
        metrics[f"plan.edge.{_edge_slug(e.name())}"] = (
            f"{e.signal_channel}-{e.idler_channel}"
        )
        metrics[f"plan.offset_ns.{_edge_slug(e.name())}"] = schedule.edge_offset_ns(e)
    return metrics


def _require_edges(ctx):
    if "edges" not in ctx:
        raise StageError("simulate", "plan stage must run first")
    return ctx["edges"]


def stage_simulate(config, ctx, outdir: Path) -> dict:
    sim = config.get("simulate", {})
    edges = _require_edges(ctx)
    names = sim.get("edges") or list(edges)
    duration = sim.get("duration_s", 1.0)
    seed = ctx["seed"]
    (outdir / "simulate").mkdir(parents=True, exist_ok=True)
    metrics = {}
    ctx.setdefault("streams", {})
    for name in names:
        if name not in edges:
            raise StageError("simulate", f"unknown edge '{name}'")
        params = edges[name]
        cfg = params.session_config(
            duration_s=duration,
            seed=derive_seed(seed, "simulate"),
            include_orphans=sim.get("include_orphan_singles", True),
            counting_plane=True,
        )
        stream_a, stream_b = simulate_edge_streams(cfg)
        slug = _edge_slug(name)
        for side, stream in (("a", stream_a), ("b", stream_b)):
            path = outdir / "simulate" / f"{slug}_{side}.bin"
            write_binary(stream, path)
            if sim.get("write_tag_csv", False):
                write_csv(stream, outdir / "simulate" / f"{slug}_{side}.csv")
        ctx["streams"][name] = (stream_a, stream_b)
        metrics[f"simulate.{slug}.tags_a"] = len(stream_a)
        metrics[f"simulate.{slug}.tags_b"] = len(stream_b)
    return metrics


def _load_streams(ctx, outdir, name):
    if "streams" in ctx and name in ctx["streams"]:
        return ctx["streams"][name]
    slug = _edge_slug(name)
    pa = outdir / "simulate" / f"{slug}_a.bin"
    pb = outdir / "simulate" / f"{slug}_b.bin"
    if pa.exists() and pb.exists():
        return read_binary(pa), read_binary(pb)
    raise StageError(
        "analyze", f"no time-tag streams for edge '{name}'; run simulate first"
    )


def stage_analyze(config, ctx, outdir: Path) -> dict:
    kind = config.get("kind", "point")
    (outdir / "analyze").mkdir(parents=True, exist_ok=True)
    if kind == "power_sweep":
        return _analyze_power_sweep(config, ctx, outdir)
    if kind == "fringe_sweep":
        return _analyze_fringe_sweep(config, ctx, outdir)
    return _analyze_point(config, ctx, outdir)


def _analysis_params(config):
    a = config.get("analysis", {})
    return (
        a.get("histogram_bin_ps", 156.25),
        a.get("histogram_span_ns", 30.0),
        a.get("coincidence_window_ns", 2.5),
    )


def _analyze_point(config, ctx, outdir: Path) -> dict:
    bin_ps, span_ns, window_ns = _analysis_params(config)
    edges = _require_edges(ctx)
    sim = config.get("simulate", {})
    names = sim.get("edges") or list(edges)
    metrics = {}
    for name in names:
        stream_a, stream_b = _load_streams(ctx, outdir, name)
        slug = _edge_slug(name)
        duration = stream_a.duration_s
        h = build_histogram(
            stream_a.times_ps(), stream_b.times_ps(), bin_ps, span_ns
        )
        _write_csv_rows(
            outdir / "analyze" / f"{slug}_histogram.csv",
            ["delay_ps", "counts"],
            zip(h.bin_centers_ps.tolist(), h.counts.tolist()),
        )
        counts = cc_ac_car(h, window_ns)
        metrics[f"analyze.{slug}.cc_per_s"] = counts.cc / duration
        metrics[f"analyze.{slug}.ac_per_s"] = counts.ac / duration
        metrics[f"analyze.{slug}.car"] = counts.car

        report = {
            "edge": name,
            "duration_s": duration,
            "cc": counts.cc,
            "ac": counts.ac,
            "car": counts.car,
        }
        try:
            fit = fit_correlation(h)
            report["fit"] = {
                "tau_c_ps": fit.tau_c_ps,
                "sigma_ps": fit.sigma_ps,
                "amplitude": fit.amplitude,
                "baseline": fit.baseline,
                "center_ps": fit.center_ps,
                "residual_norm": fit.residual_norm,
                "bandwidth_mhz": fit.bandwidth_mhz(),
            }
            metrics[f"analyze.{slug}.tau_c_ps"] = fit.tau_c_ps
            metrics[f"analyze.{slug}.sigma_ps"] = fit.sigma_ps
            metrics[f"analyze.{slug}.bandwidth_mhz"] = fit.bandwidth_mhz()
        except FitFailureError as exc:
            report["fit_error"] = str(exc)
        s_s = len(stream_a) / duration
        s_i = len(stream_b) / duration
        r_c = counts.cc / duration
        if 0 < r_c <= min(s_s, s_i):
            rs = rate_summary(s_s, s_i, r_c, car=counts.car)
            report["rates"] = {
                "singles_signal": rs.singles_signal,
                "singles_idler": rs.singles_idler,
                "coincidences": rs.coincidences,
                "pgr": rs.pgr,
                "loss_per_arm_db": rs.loss_per_arm_db,
            }
            metrics[f"analyze.{slug}.pgr_per_s"] = rs.pgr
            metrics[f"analyze.{slug}.loss_per_arm_db"] = rs.loss_per_arm_db
        (outdir / "analyze" / f"{slug}_report.json").write_text(
            json.dumps(report, indent=2, sort_keys=True)
        )
    return metrics


def _analyze_power_sweep(config, ctx, outdir: Path) -> dict:
    bin_ps, span_ns, window_ns = _analysis_params(config)
    sweep = config.get("power_sweep", {})
    edges = _require_edges(ctx)
    name = sweep.get("edge", next(iter(edges)))
    if name not in edges:
        raise StageError("analyze", f"unknown edge '{name}'")
    params = edges[name]
    powers = sweep.get("powers_mw", [0.4, 0.64, 1.0, 2.24, 5.0])
    seconds = sweep.get("seconds_per_point", 200.0)
    seed = ctx["seed"]
    rows = []
    metrics = {}
    for power in powers:
        cfg = params.session_config(
            duration_s=seconds,
            seed=derive_seed(seed, "power", f"{power:.6g}"),
            include_orphans=True,
            counting_plane=True,
            pump_power_mw=power,
        )
        stream_a, stream_b = simulate_edge_streams(cfg)
        h = build_histogram(
            stream_a.times_ps(), stream_b.times_ps(), bin_ps, span_ns
        )
        counts = cc_ac_car(h, window_ns)
        rows.append(
            (
                float(power),
                counts.cc / seconds,
                counts.ac / seconds,
                counts.car,
                len(stream_a) / seconds,
                len(stream_b) / seconds,
            )
        )
        metrics[f"analyze.car.P{power:g}"] = counts.car
        metrics[f"analyze.cc_per_s.P{power:g}"] = counts.cc / seconds
    _write_csv_rows(
        outdir / "analyze" / "power_sweep.csv",
        ["power_mw", "cc_per_s", "ac_per_s", "car", "singles_a_per_s", "singles_b_per_s"],
        rows,
    )
    logp = np.log([r[0] for r in rows])
    logc = np.log([r[1] for r in rows])
    slope = float(np.polyfit(logp, logc, 1)[0])
    metrics["analyze.cc_loglog_slope"] = slope
    return metrics


def _analyze_fringe_sweep(config, ctx, outdir: Path) -> dict:
    bin_ps, span_ns, window_ns = _analysis_params(config)
    sweep = config.get("fringe_sweep", {})
    edges = _require_edges(ctx)
    names = sweep.get("edges") or list(edges)
    steps = sweep.get("phase_steps", 13)
    seconds = sweep.get("seconds_per_point", 240.0)
    include_orphans = sweep.get("include_orphan_singles", False)
    delta_t_ns = config.get("analyzer", {}).get("delta_t_ns", 2.5)
    seed = ctx["seed"]
    metrics = {}
    for name in names:
        params = edges[name]
        slug = _edge_slug(name)
        phases = np.linspace(0.0, 2.0 * math.pi, steps, endpoint=False)
        rows = []
        sweep_points = []
        acc = []
        for k, phase in enumerate(phases):
            cfg = params.session_config(
                duration_s=seconds,
                seed=derive_seed(seed, "fringe", slug, k),
                include_orphans=include_orphans,
                analyzer=replace(params.analyzer, ports=1),
                phase_a_rad=float(phase),
                phase_b_rad=0.0,
            )
            stream_a, stream_b = simulate_edge_streams(cfg)
            h = build_histogram(
                stream_a.times_ps(), stream_b.times_ps(), bin_ps, span_ns
            )
            sums, ci = window_sums(h, window_ns)
            central = int(sums[ci])
            early = int(sums[ci - 1])
            late = int(sums[ci + 1])
            ac = accidental_estimate(h, window_ns)
            rows.append((float(phase), central, early, late, ac))
            sweep_points.append((float(phase), float(central)))
            acc.append(ac)
        _write_csv_rows(
            outdir / "analyze" / f"{slug}_fringe.csv",
            ["phase_rad", "central_cc", "early_cc", "late_cc", "accidental"],
            rows,
        )
        fit = fit_fringe(sweep_points, accidentals=acc)
        metrics[f"analyze.fringe.{slug}.visibility_raw"] = fit.visibility_raw
        metrics[f"analyze.fringe.{slug}.visibility_net"] = fit.visibility_net
        metrics[f"analyze.fringe.{slug}.mean_level"] = fit.mean_level
    return metrics


def stage_qkd(config, ctx, outdir: Path) -> dict:
    q = config.get("qkd", {})
    edges = _require_edges(ctx)
    duration = q.get("duration_s", 2000.0)
    f_ec = q.get("f_ec", 1.2)
    window_s = q.get("report_window_s", 10.0)
    cw_ns = q.get("coincidence_window_ns", 2.5)
    include_orphans = q.get("include_orphan_singles", False)
    seed = ctx["seed"]
    (outdir / "qkd").mkdir(parents=True, exist_ok=True)
    metrics = {}
    for name, params in edges.items():
        slug = _edge_slug(name)
        cfg = params.session_config(
            duration_s=duration,
            seed=derive_seed(seed, "qkd"),
            include_orphans=include_orphans,
        )
        report = run_qkd_session(
            cfg,
            coincidence_window_ns=cw_ns,
            report_window_s=window_s,
            f_ec=f_ec,
        )
        (outdir / "qkd" / f"{slug}_report.json").write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True)
        )
        _write_csv_rows(
            outdir / "qkd" / f"{slug}_timeseries.csv",
            ["t_s", "visibility", "qber", "skr_bits_per_s"],
            [
                (w.t_s, w.visibility, w.qber, w.skr)
                for w in report.windows
                if not w.flagged
            ],
        )
        metrics[f"qkd.{slug}.sifted"] = report.sifted_count
        metrics[f"qkd.{slug}.sift_rate"] = report.sift_rate
        metrics[f"qkd.{slug}.qber"] = report.qber
        metrics[f"qkd.{slug}.visibility"] = report.visibility
        metrics[f"qkd.{slug}.skr"] = report.skr
        metrics[f"qkd.{slug}.total_secure_bits"] = report.total_secure_bits
    return metrics


def stage_stabilize(config, ctx, outdir: Path) -> dict:
    c = config.get("control", {})
    resonator = _resonator_from(config)
    duration = c.get("duration_s", 600.0)
    dt = c.get("dt_s", 0.1)
    seed = ctx["seed"]
    (outdir / "stabilize").mkdir(parents=True, exist_ok=True)
    metrics = {}

    rd = c.get("resonance_drift", {})
    drift = DriftModel(
        kind=rd.get("kind", "walk"),
        step_std=rd.get("step_std", 2.0),
        bound=rd.get("bound", 150.0),
    )
    pg = c.get("pump_pid", {})
    pump_gains = PidGains(
        kp=pg.get("kp", 30000.0), ki=pg.get("ki", 0.0), kd=pg.get("kd", 0.0)
    )
    status = pump_follow(
        resonator,
        drift,
        pump_gains,
        duration,
        dt,
        seed=derive_seed(seed, "pump-follow"),
    )
    _write_csv_rows(
        outdir / "stabilize" / "pump_lock.csv",
        ["t_s", "transmission", "pump_offset_mhz"],
        zip(status.t_s.tolist(), status.observable.tolist(), status.actuator.tolist()),
    )
    band = status.in_band_fraction(0.001)
    metrics["stabilize.pump.in_band_fraction"] = band
    metrics["stabilize.pump.rms_detuning_mhz"] = status.rms_error
    metrics["stabilize.pump.lock_lost"] = int(status.lock_lost)

    pd_ = c.get("phase_drift", {})
    phase_drift = DriftModel(
        kind=pd_.get("kind", "walk"),
        step_std=pd_.get("step_std", 0.005),
        bound=pd_.get("bound"),
    )
    ppg = c.get("phase_pid", {})
    phase_gains = PidGains(
        kp=ppg.get("kp", 1.2), ki=ppg.get("ki", 0.2), kd=ppg.get("kd", 0.0)
    )
    setpoints = c.get("phase_setpoints", [0.0, math.pi / 2, 0.0, 3 * math.pi / 2])
    ctx["phase_locks"] = []
    for i, sp in enumerate(setpoints):
        st = phase_lock(
            phase_drift,
            phase_gains,
            sp,
            duration,
            dt,
            seed=derive_seed(seed, "phase-lock", i),
        )
        _write_csv_rows(
            outdir / "stabilize" / f"phase_lock_{i}.csv",
            ["t_s", "monitor", "actuator_rad"],
            zip(st.t_s.tolist(), st.observable.tolist(), st.actuator.tolist()),
        )
        metrics[f"stabilize.phase{i}.rms_error_rad"] = st.rms_error
        metrics[f"stabilize.phase{i}.in_lock_fraction"] = float(
            np.mean(st.in_lock())
        )
        ctx["phase_locks"].append(st)
    return metrics


def stage_report(config, ctx, outdir: Path) -> dict:
    (outdir / "report").mkdir(parents=True, exist_ok=True)
    metrics = dict(ctx.get("metrics", {}))
    merged_path = outdir / "metrics.json"
    if merged_path.exists():
        on_disk = json.loads(merged_path.read_text())
        on_disk.update(metrics)
        metrics = on_disk
    (outdir / "report" / "report.json").write_text(
        json.dumps(metrics, indent=2, sort_keys=True)
    )
    lines = [
        f"# Run report: {config.get('name', 'unnamed')}",
        "",
        "| metric | value |",
        "| --- | --- |",
    ]
    for key in sorted(metrics):
        value = metrics[key]
        if isinstance(value, float):
            value = f"{value:.6g}"
        lines.append(f"| {key} | {value} |")
    (outdir / "report" / "report.md").write_text("\n".join(lines) + "\n")
    return {}


_STAGES = {
    "plan": stage_plan,
    "simulate": stage_simulate,
    "analyze": stage_analyze,
    "qkd": stage_qkd,
    "stabilize": stage_stabilize,
    "report": stage_report,
}


def _config_hashes(config: dict) -> tuple[str, str]:
    full = hashlib.sha256(
        json.dumps(config, sort_keys=True).encode()
    ).hexdigest()
    seedless = {k: v for k, v in config.items() if k != "seed"}
    scen = hashlib.sha256(
        json.dumps(seedless, sort_keys=True).encode()
    ).hexdigest()
    return full, scen


def run_scenario(
    config_source,
    out_dir,
    stages: list[str] | None = None,
    seed_override: int | None = None,
) -> dict:
    """Validate, execute the requested stages, and write the manifest.

    Returns the manifest dict. Raises ValidationError on a bad config and
    StageError when a stage fails (the CLI maps these to exit codes).
    """
    config = load_config(config_source)
    problems = validate_config(config)
    if problems:
        raise ValidationError(problems)
    if seed_override is not None:
        config = {**config, "seed": int(seed_override)}

    requested = list(stages) if stages else list(STAGE_ORDER)
    unknown = [s for s in requested if s not in _STAGES]
    if unknown:
        raise ValidationError([f"unknown stage: {s}" for s in unknown])
    ordered = [s for s in STAGE_ORDER if s in requested]
    if "plan" not in ordered and any(
        s in ordered for s in ("simulate", "analyze", "qkd")
    ):
        ordered = ["plan"] + ordered

    outdir = Path(out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    ctx: dict = {"seed": config.get("seed", 0), "metrics": {}}

    for stage in ordered:
        try:
            stage_metrics = _STAGES[stage](config, ctx, outdir)
        except CombnetError:
            raise
        except Exception as exc:  # noqa: BLE001 - annotate with the stage name
            raise StageError(stage, str(exc)) from exc
        ctx["metrics"].update(stage_metrics)

    merged_path = outdir / "metrics.json"
    metrics = {}
    if merged_path.exists():
        metrics = json.loads(merged_path.read_text())
    metrics.update(ctx["metrics"])
    merged_path.write_text(json.dumps(metrics, indent=2, sort_keys=True))

    full_hash, scen_hash = _config_hashes(config)
    manifest = {
        "scenario_name": config.get("name", "unnamed"),
        "kind": config.get("kind"),
        "seed": config.get("seed", 0),
        "config_sha256": full_hash,
        "scenario_sha256": scen_hash,
        "package_version": __version__,
        "stages_run": ordered,
    }
    (outdir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True)
    )
    (outdir / "config.json").write_text(
        json.dumps(config, indent=2, sort_keys=True)
    )
    return manifest


# --- golden comparison --------------------------------------------------------

DEFAULT_TOLERANCES = {"default": {"abs": 1e-9, "rel": 0.0}}


def _tolerance_for(key: str, tolerances: dict) -> dict:
    best = tolerances.get("default", {"abs": 1e-9, "rel": 0.0})
    for pattern, tol in tolerances.items():
        if pattern != "default" and fnmatch.fnmatch(key, pattern):
            best = tol
    return best


def compare_golden(
    run_dir, golden_dir, tolerances: dict | None = None
) -> tuple[bool, list[str]]:
    """Per-metric comparison of a run against a golden run.

    Returns (all_passed, report_lines). Metrics present in the golden but
    missing from the run fail by name; numeric metrics compare with the
    configured absolute/relative tolerances, everything else exactly.
    """
    tolerances = tolerances or DEFAULT_TOLERANCES
    run_dir, golden_dir = Path(run_dir), Path(golden_dir)
    lines = []
    ok = True

    try:
        run_manifest = json.loads((run_dir / "manifest.json").read_text())
        gold_manifest = json.loads((golden_dir / "manifest.json").read_text())
    except FileNotFoundError as exc:
        return False, [f"FAIL missing manifest: {exc}"]
    if run_manifest["scenario_sha256"] != gold_manifest["scenario_sha256"]:
        lines.append("FAIL manifest: scenario configs differ (seed aside)")
        ok = False

    run_metrics = json.loads((run_dir / "metrics.json").read_text())
    gold_metrics = json.loads((golden_dir / "metrics.json").read_text())
    for key in sorted(gold_metrics):
        gold = gold_metrics[key]
        if key not in run_metrics:
            lines.append(f"FAIL {key}: missing from run")
            ok = False
            continue
        got = run_metrics[key]
        if isinstance(gold, (int, float)) and isinstance(got, (int, float)):
            tol = _tolerance_for(key, tolerances)
            diff = abs(float(got) - float(gold))
            limit = max(tol.get("abs", 0.0), tol.get("rel", 0.0) * abs(float(gold)))
            if diff <= limit:
                lines.append(f"PASS {key}: {got:.6g} vs {gold:.6g}")
            else:
                lines.append(
                    f"FAIL {key}: {got:.6g} vs {gold:.6g} (diff {diff:.3g} > {limit:.3g})"
                )
                ok = False
        else:
            if got == gold:
                lines.append(f"PASS {key}: {got}")
            else:
                lines.append(f"FAIL {key}: {got!r} vs {gold!r}")
                ok = False
    return ok, lines
