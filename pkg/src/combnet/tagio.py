"""Time-tag stream serialization.

Binary format: a flat sequence of little-endian records, each
``u32 detector_id`` followed by ``u64 time`` in tagger resolution units.
Stream metadata (resolution, duration, detector roles) travels in a
sidecar JSON file at ``<path>.meta.json``.

CSV format: header ``detector_id,ticks,time_ps`` with one row per tag.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .detection import DetectorRole, TimeTagStream

_RECORD_DTYPE = np.dtype([("detector_id", "<u4"), ("ticks", "<u8")])


def meta_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def write_binary(stream: TimeTagStream, path) -> None:
    records = np.empty(len(stream), dtype=_RECORD_DTYPE)
    records["detector_id"] = stream.detector_ids
    records["ticks"] = stream.ticks.astype(np.uint64)
    Path(path).write_bytes(records.tobytes())
    meta = {
        "resolution_ps": stream.resolution_ps,
        "duration_s": stream.duration_s,
        "detectors": {
            str(k): asdict(v) for k, v in sorted(stream.detector_map.items())
        },
    }
    meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True))


def read_binary(path) -> TimeTagStream:
    raw = np.frombuffer(Path(path).read_bytes(), dtype=_RECORD_DTYPE)
    meta = json.loads(meta_path(path).read_text())
    detector_map = {
        int(k): DetectorRole(**v) for k, v in meta.get("detectors", {}).items()
    }
    return TimeTagStream(
        detector_ids=raw["detector_id"].astype(np.uint32),
        ticks=raw["ticks"].astype(np.int64),
        resolution_ps=meta["resolution_ps"],
        duration_s=meta["duration_s"],
        detector_map=detector_map,
    )


def write_csv(stream: TimeTagStream, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["detector_id", "ticks", "time_ps"])
        times = stream.ticks.astype(np.float64) * stream.resolution_ps
        for det, tick, t in zip(stream.detector_ids, stream.ticks, times):
            writer.writerow([int(det), int(tick), f"{t:.9g}"])


def write_pair_events_csv(events, path, edge_id: str = "") -> None:
    """Pair emissions as ``edge_id,signal_ps,idler_ps`` rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["edge_id", "signal_ps", "idler_ps"])
        for s, i in zip(events.signal_time_ps, events.idler_time_ps):
            writer.writerow([edge_id, f"{s:.9g}", f"{i:.9g}"])
