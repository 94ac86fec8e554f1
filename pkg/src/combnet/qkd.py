"""BBM92 over two-port Franson outcomes.

Passive basis choice (a 50:50 splitter sends each photon to a Z or X
analyzer), sifting on matched-basis central-peak coincidences, bit value
from the analyzer output port, and the asymptotic secure key rate

    SKR = n_sift * (1 - f_ec * H2(qber) - H2(qber))

with the bit and phase error rates both set to the measured QBER
(symmetric bases) and H2 the binary entropy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import match_pairs
from .detection import TimeTagStream
from .errors import ConfigurationError, EmptyDataError
from .franson import AnalyzedBatch, Peak

PS_PER_NS = 1e3
PS_PER_S = 1e12

BASIS_Z = "Z"
BASIS_X = "X"

# Interferometer phase per basis. The first analyzer on side A defines the
# zero phase; side B's X analyzer sits at -pi/2 so matched-basis phase sums
# vanish and correlations are maximal, while mixed bases sit in quadrature.
PHASE_A = {BASIS_Z: 0.0, BASIS_X: math.pi / 2.0}
PHASE_B = {BASIS_Z: 0.0, BASIS_X: -math.pi / 2.0}


@dataclass(frozen=True)
class BasisSetting:
    basis: str
    phase_pair: tuple[float, float]


BASIS_SETTINGS = {
    BASIS_Z: BasisSetting(BASIS_Z, (0.0, math.pi)),
    BASIS_X: BasisSetting(BASIS_X, (math.pi / 2.0, 3.0 * math.pi / 2.0)),
}


def route_basis(rng: np.random.Generator) -> BasisSetting:
    """Passive 50:50 basis choice for one photon."""
    return BASIS_SETTINGS[BASIS_Z if rng.random() < 0.5 else BASIS_X]


def route_basis_batch(n: int, rng: np.random.Generator) -> np.ndarray:
    """Basis codes for n photons: 0 = Z, 1 = X."""
    return rng.integers(0, 2, n, dtype=np.uint8)


@dataclass(frozen=True)
class SiftedKey:
    bits: np.ndarray  # uint8
    basis_record: np.ndarray  # uint8, 0 = Z, 1 = X
    session_duration_s: float

    def __len__(self) -> int:
        return self.bits.size


def sift(
    batch: AnalyzedBatch,
    basis_a: np.ndarray,
    basis_b: np.ndarray,
    duration_s: float,
) -> tuple[SiftedKey, SiftedKey]:
    """Keep matched-basis central-peak coincidences; bit = output port."""
    basis_a = np.asarray(basis_a, dtype=np.uint8)
    basis_b = np.asarray(basis_b, dtype=np.uint8)
    if basis_a.size != len(batch) or basis_b.size != len(batch):
        raise ConfigurationError("one basis label per analyzed pair per side")
    keep = batch.central_mask() & (basis_a == basis_b)
    record = basis_a[keep]
    key_a = SiftedKey(batch.port_a[keep].astype(np.uint8), record, duration_s)
    key_b = SiftedKey(batch.port_b[keep].astype(np.uint8), record.copy(), duration_s)
    return key_a, key_b


def qber(key_a: SiftedKey, key_b: SiftedKey) -> float:
    """Hamming mismatch fraction of two aligned sifted keys."""
    if len(key_a) != len(key_b):
        raise ConfigurationError("sifted keys must be index-aligned")
    if len(key_a) == 0:
        raise EmptyDataError("no sifted bits; QBER undefined")
    return float(np.mean(key_a.bits != key_b.bits))


def qber_from_visibility(visibility: float) -> float:
    """QBER implied by the analyzer fringe contrast: (1 - V) / 2."""
    if not 0.0 <= visibility <= 1.0:
        raise ValueError(f"visibility must be in [0, 1], got {visibility}")
    return (1.0 - visibility) / 2.0


def binary_entropy(x):
    """H2(x) = -x log2 x - (1-x) log2 (1-x), with H2(0) = H2(1) = 0."""
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0) or np.any(arr > 1):
        raise ValueError("binary entropy argument must be in [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(
            np.where(arr > 0, arr * np.log2(np.where(arr > 0, arr, 1.0)), 0.0)
            + np.where(
                arr < 1, (1 - arr) * np.log2(np.where(arr < 1, 1 - arr, 1.0)), 0.0
            )
        )
    return float(h) if np.isscalar(x) else h


def secure_key_rate(n_sift: float, qber_value: float, f_ec: float = 1.2) -> float:
    """Asymptotic secure bits per second after error correction and
    privacy amplification; clamped at zero."""
    if not 0.0 <= qber_value <= 0.5:
        raise ValueError("qber must be in [0, 0.5]")
    if f_ec < 1.0:
        raise ValueError("error-correction inefficiency must be >= 1")
    h = binary_entropy(qber_value)
    return max(n_sift * (1.0 - f_ec * h - h), 0.0)


@dataclass(frozen=True)
class QkdWindow:
    t_s: float
    sifted: int
    qber: float
    visibility: float
    skr: float
    flagged: bool  # no sifted bits; excluded from averages


@dataclass
class QkdSessionReport:
    edge_name: str
    duration_s: float
    sifted_count: int
    sift_rate: float  # bits/s
    qber: float
    visibility: float
    skr: float  # bits/s
    total_secure_bits: float
    f_ec: float
    ambiguous_matches: int = 0
    windows: list[QkdWindow] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "edge": self.edge_name,
            "duration_s": self.duration_s,
            "sifted_count": self.sifted_count,
            "sift_rate_bits_per_s": self.sift_rate,
            "qber": self.qber,
            "visibility": self.visibility,
            "skr_bits_per_s": self.skr,
            "total_secure_bits": self.total_secure_bits,
            "f_ec": self.f_ec,
            "ambiguous_matches": self.ambiguous_matches,
            "windows": [
                {
                    "t_s": w.t_s,
                    "sifted": w.sifted,
                    "qber": w.qber,
                    "visibility": w.visibility,
                    "skr_bits_per_s": w.skr,
                    "flagged": w.flagged,
                }
                for w in self.windows
            ],
        }


def _detectors_by_role(stream: TimeTagStream) -> dict[tuple[str, int], int]:
    out = {}
    for det_id, role in stream.detector_map.items():
        out[(role.basis, role.port)] = det_id
    return out


def session_report(
    stream_a: TimeTagStream,
    stream_b: TimeTagStream,
    edge_name: str,
    duration_s: float,
    expected_offset_ns: float = 0.0,
    coincidence_window_ns: float = 2.5,
    report_window_s: float = 10.0,
    f_ec: float = 1.2,
) -> QkdSessionReport:
    """Decode a BBM92 session from the two users' tag streams.

    Each stream must carry four detectors (two bases times two ports) in
    its detector map. Coincidences are matched per basis inside the
    central window around the edge's arrival-time signature; side peaks
    fall outside the window and are dropped, as are mixed-basis events.
    """
    dets_a = _detectors_by_role(stream_a)
    dets_b = _detectors_by_role(stream_b)
    lo = expected_offset_ns * PS_PER_NS - coincidence_window_ns * PS_PER_NS / 2.0
    hi = expected_offset_ns * PS_PER_NS + coincidence_window_ns * PS_PER_NS / 2.0

    times = []
    errors = []
    basis_codes = []
    ambiguous = 0
    for code, basis in enumerate((BASIS_Z, BASIS_X)):
        t_parts, p_parts = [], []
        for port in (0, 1):
            if (basis, port) in dets_a:
                t = stream_a.times_ps(dets_a[(basis, port)])
                t_parts.append(t)
                p_parts.append(np.full(t.size, port, dtype=np.uint8))
        if not t_parts:
            continue
        t_a = np.concatenate(t_parts)
        p_a = np.concatenate(p_parts)
        order = np.argsort(t_a, kind="stable")
        t_a, p_a = t_a[order], p_a[order]

        t_parts, p_parts = [], []
        for port in (0, 1):
            if (basis, port) in dets_b:
                t = stream_b.times_ps(dets_b[(basis, port)])
                t_parts.append(t)
                p_parts.append(np.full(t.size, port, dtype=np.uint8))
        if not t_parts:
            continue
        t_b = np.concatenate(t_parts)
        p_b = np.concatenate(p_parts)
        order = np.argsort(t_b, kind="stable")
        t_b, p_b = t_b[order], p_b[order]

        ia, ib, amb = match_pairs(t_a, t_b, lo, hi)
        ambiguous += amb
        times.append(t_a[ia])
        errors.append(p_a[ia] != p_b[ib])
        basis_codes.append(np.full(ia.size, code, dtype=np.uint8))

    if times:
        t_all = np.concatenate(times)
        err_all = np.concatenate(errors)
        code_all = np.concatenate(basis_codes)
    else:
        t_all = np.empty(0)
        err_all = np.empty(0, dtype=bool)
        code_all = np.empty(0, dtype=np.uint8)

    sifted = int(t_all.size)
    session_qber = float(err_all.mean()) if sifted else 0.0
    vis = _port_visibility(err_all, code_all)
    n_sift = sifted / duration_s if duration_s > 0 else 0.0
    skr = secure_key_rate(n_sift, min(session_qber, 0.5), f_ec) if sifted else 0.0

    windows = []
    if duration_s > 0 and report_window_s > 0:
        n_windows = int(duration_s // report_window_s)
        idx = (t_all / (report_window_s * PS_PER_S)).astype(np.int64)
        for w in range(n_windows):
            sel = idx == w
            count = int(sel.sum())
            t_mid = (w + 0.5) * report_window_s
            if count == 0:
                windows.append(QkdWindow(t_mid, 0, 0.0, 0.0, 0.0, True))
                continue
            q = float(err_all[sel].mean())
            v = _port_visibility(err_all[sel], code_all[sel])
            rate = count / report_window_s
            windows.append(
                QkdWindow(
                    t_mid,
                    count,
                    q,
                    v,
                    secure_key_rate(rate, min(q, 0.5), f_ec),
                    False,
                )
            )

    return QkdSessionReport(
        edge_name=edge_name,
        duration_s=duration_s,
        sifted_count=sifted,
        sift_rate=n_sift,
        qber=session_qber,
        visibility=vis,
        skr=skr,
        total_secure_bits=skr * duration_s,
        f_ec=f_ec,
        ambiguous_matches=int(ambiguous),
        windows=windows,
    )


def _port_visibility(errors: np.ndarray, basis_codes: np.ndarray) -> float:
    """Port-correlation contrast averaged over the bases present."""
    if errors.size == 0:
        return 0.0
    values = []
    for code in np.unique(basis_codes):
        sel = basis_codes == code
        values.append(1.0 - 2.0 * float(errors[sel].mean()))
    return float(np.mean(values))
