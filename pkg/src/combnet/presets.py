"""Shipped scenario presets.

All numeric defaults describe the reference four-user bench this package
models: a 97.8 GHz comb pumped on channel 35, six conjugate channel pairs
fanned out to four users, measured per-pair generation rates, coherence
times, detection-chain losses and fringe contrasts. Every preset is a
plain config dict accepted by ``scenario.run_scenario``.
"""

from __future__ import annotations

import copy

# Per-edge source characterization: pair generation rate density,
# coherence time, and combined detection-system jitter.
EDGE_SOURCE = {
    "Alice-Bob": {"pgr_per_mw2": 7.22e3, "tau_c_ps": 250.8, "jitter_ps": 138.3},
    "Alice-Chloe": {"pgr_per_mw2": 8.70e3, "tau_c_ps": 234.4, "jitter_ps": 133.9},
    "Alice-Dave": {"pgr_per_mw2": 7.27e3, "tau_c_ps": 245.0, "jitter_ps": 136.4},
    "Bob-Chloe": {"pgr_per_mw2": 9.55e3, "tau_c_ps": 254.6, "jitter_ps": 127.0},
    "Bob-Dave": {"pgr_per_mw2": 7.92e3, "tau_c_ps": 242.2, "jitter_ps": 139.8},
    "Chloe-Dave": {"pgr_per_mw2": 9.51e3, "tau_c_ps": 244.6, "jitter_ps": 128.1},
}

# Source-plane per-arm loss (coincidence/singles derived, no analyzers).
EDGE_ARM_LOSS_DB = {
    "Alice-Bob": -10.29,
    "Alice-Chloe": -11.22,
    "Alice-Dave": -10.82,
    "Bob-Chloe": -11.00,
    "Bob-Dave": -11.12,
    "Chloe-Dave": -11.85,
}

# Chip-to-detector loss per channel through the full network fan-out.
CHANNEL_LOSS_DB = {
    "37": -14.29, "33": -13.20,
    "38": -14.90, "32": -13.12,
    "39": -15.27, "31": -15.30,
    "40": -14.03, "30": -14.01,
    "41": -13.86, "29": -14.67,
    "42": -14.29, "28": -14.56,
}

# Fringe contrast per edge measured through the network (uncorrected).
EDGE_VISIBILITY_FRINGE = {
    "Alice-Bob": 0.9270,
    "Alice-Chloe": 0.9050,
    "Alice-Dave": 0.8556,
    "Bob-Chloe": 0.9189,
    "Bob-Dave": 0.9125,
    "Chloe-Dave": 0.8948,
}

# Fringe contrast per edge during key-distribution running (short path,
# analyzers fed straight from the demultiplexer).
EDGE_VISIBILITY_QKD = {
    "Alice-Bob": 0.9389,
    "Alice-Chloe": 0.9485,
    "Alice-Dave": 0.9465,
    "Bob-Chloe": 0.9504,
    "Bob-Dave": 0.9382,
    "Chloe-Dave": 0.9418,
}

_RESONATOR = {
    "fsr_ghz": 97.8,
    "q_factor": 3.1e5,
    "linewidth_fwhm_mhz": 649.0,
    "pump_channel": 35,
    "mode_count": 129,
    "extinction": 0.022,
    "insertion_loss_db": 5.0,
}

_PLAN = {
    "n_users": 4,
    "channel_range": [28, 42],
    "exclusion_radius": 1,
    "extra_exclusions": [],
    "base_step_ns": 10.0,
    "identification_window_ns": 2.5,
}

_DETECTOR = {
    "dark_count_rate": 100.0,
    "resolution_ps": 156.25,
    "dead_time_ns": 25.0,
}

_ANALYSIS = {
    "histogram_bin_ps": 156.25,
    "histogram_span_ns": 30.0,
    "coincidence_window_ns": 2.5,
}

PRESETS: dict[str, dict] = {}

PRESETS["paper_4user"] = {
    "name": "paper_4user",
    "kind": "point",
    "seed": 20230817,
    "resonator": dict(_RESONATOR),
    "plan": dict(_PLAN),
    "source": {
        "pump_power_mw": 6.45,
        "tau_p_us": 2.7,
        "per_edge": copy.deepcopy(EDGE_SOURCE),
    },
    "losses": {"arm_loss_per_edge_db": dict(EDGE_ARM_LOSS_DB)},
    "detector": {**_DETECTOR, "pump_leak_per_mw": 12300.0},
    "analysis": dict(_ANALYSIS),
    "simulate": {
        "duration_s": 5.0,
        "include_orphan_singles": True,
        "write_tag_csv": False,
        "edges": ["Alice-Bob"],
    },
}

PRESETS["power_sweep_fig2b"] = {
    "name": "power_sweep_fig2b",
    "kind": "power_sweep",
    "seed": 811,
    "resonator": dict(_RESONATOR),
    "plan": dict(_PLAN),
    "source": {
        "pump_power_mw": 1.0,
        "tau_p_us": 2.7,
        "per_edge": copy.deepcopy(EDGE_SOURCE),
    },
    "losses": {"arm_loss_per_edge_db": dict(EDGE_ARM_LOSS_DB)},
    "detector": {**_DETECTOR, "pump_leak_per_mw": 12300.0},
    "analysis": dict(_ANALYSIS),
    "power_sweep": {
        "edge": "Alice-Bob",
        "powers_mw": [0.4, 0.64, 1.0, 2.24, 5.0],
        "seconds_per_point": 200.0,
    },
}

PRESETS["fringes_fig4"] = {
    "name": "fringes_fig4",
    "kind": "fringe_sweep",
    "seed": 101,
    "resonator": dict(_RESONATOR),
    "plan": dict(_PLAN),
    "source": {
        "pump_power_mw": 6.45,
        "tau_p_us": 2.7,
        "per_edge": copy.deepcopy(EDGE_SOURCE),
    },
    "losses": {"per_channel_db": dict(CHANNEL_LOSS_DB)},
    "detector": dict(_DETECTOR),
    "analyzer": {
        "delta_t_ns": 2.5,
        "ports": 1,
        "insertion_loss_db": 0.0,
        "visibility_per_edge": dict(EDGE_VISIBILITY_FRINGE),
    },
    "analysis": dict(_ANALYSIS),
    "fringe_sweep": {
        "phase_steps": 13,
        "seconds_per_point": 600.0,
        "include_orphan_singles": False,
    },
}

PRESETS["qkd_tableS3"] = {
    "name": "qkd_tableS3",
    "kind": "qkd",
    "seed": 60117,
    "resonator": dict(_RESONATOR),
    "plan": dict(_PLAN),
    "source": {
        "pump_power_mw": 12.0,
        "tau_p_us": 2.7,
        "per_edge": copy.deepcopy(EDGE_SOURCE),
    },
    "losses": {"per_channel_db": dict(CHANNEL_LOSS_DB)},
    "detector": dict(_DETECTOR),
    "analyzer": {
        "delta_t_ns": 2.5,
        "ports": 2,
        "insertion_loss_db": 0.0,
        "visibility_per_edge": dict(EDGE_VISIBILITY_QKD),
    },
    "analysis": dict(_ANALYSIS),
    "qkd": {
        "duration_s": 2000.0,
        "f_ec": 1.2,
        "report_window_s": 10.0,
        "include_orphan_singles": False,
        "coincidence_window_ns": 2.5,
    },
}

PRESETS["stabilize_figS8"] = {
    "name": "stabilize_figS8",
    "kind": "stabilize",
    "seed": 90512,
    "resonator": dict(_RESONATOR),
    "control": {
        "duration_s": 600.0,
        "dt_s": 0.1,
        "resonance_drift": {"kind": "walk", "step_std": 2.0, "bound": 150.0},
        "phase_drift": {"kind": "walk", "step_std": 0.005},
        "pump_pid": {"kp": 30000.0, "ki": 0.0, "kd": 0.0},
        "phase_pid": {"kp": 1.2, "ki": 0.2, "kd": 0.0},
        "phase_setpoints": [0.0, 1.5707963267948966, 0.0, 4.71238898038469],
    },
}


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise KeyError(
            f"unknown preset '{name}'; available: {', '.join(sorted(PRESETS))}"
        )
    return copy.deepcopy(PRESETS[name])
