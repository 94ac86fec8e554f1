"""ITU DWDM grid arithmetic and the microring comb model.

Conventions:
    - Channel n sits at 190.0 THz + n * 0.1 THz (100 GHz grid).
    - Frequencies are float64 THz, FSR in GHz, linewidths in MHz.
    - Resonator transmission is a product of inverted Lorentzian dips,
      one per resonance mode; on resonance it bottoms out at the mode's
      extinction fraction, far off resonance it approaches 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DegeneratePairError, GridRangeError

C_VACUUM = 299_792_458.0  # m/s

GRID_ANCHOR_THZ = 190.0
GRID_SPACING_THZ = 0.1
GRID_INDEX_MIN = -100
GRID_INDEX_MAX = 100

# A comb mode maps to an ITU channel only if it falls within a quarter of
# the channel spacing; beyond that the walk-off is flagged as unmapped.
CHANNEL_MAP_TOLERANCE_GHZ = 25.0


def channel_center_frequency(index: int) -> float:
    """Center frequency in THz of ITU channel ``index``.

    Raises GridRangeError for indices outside [-100, 100].
    """
    if not GRID_INDEX_MIN <= index <= GRID_INDEX_MAX:
        raise GridRangeError(
            f"channel index {index} outside grid range "
            f"[{GRID_INDEX_MIN}, {GRID_INDEX_MAX}]"
        )
    return GRID_ANCHOR_THZ + GRID_SPACING_THZ * index


@dataclass(frozen=True, order=True)
class Channel:
    """One 100 GHz ITU grid channel."""

    index: int

    def __post_init__(self):
        channel_center_frequency(self.index)  # range check

    @property
    def center_frequency_thz(self) -> float:
        return channel_center_frequency(self.index)

    @property
    def center_wavelength_nm(self) -> float:
        return C_VACUUM / (self.center_frequency_thz * 1e12) * 1e9

    @property
    def label(self) -> str:
        return f"CH{self.index}"

    def __str__(self) -> str:
        return self.label


def conjugate_channel(signal: Channel, pump: Channel) -> Channel:
    """Partner channel of ``signal`` about ``pump`` (2 nu_p = nu_s + nu_i).

    Raises DegeneratePairError when signal coincides with the pump.
    """
    if signal.index == pump.index:
        raise DegeneratePairError(
            f"signal {signal} coincides with pump; no conjugate partner"
        )
    return Channel(2 * pump.index - signal.index)


def nearest_channel(frequency_thz: float) -> tuple[Channel, float]:
    """Nearest grid channel and the offset to it in GHz (signed)."""
    index = int(round((frequency_thz - GRID_ANCHOR_THZ) / GRID_SPACING_THZ))
    index = min(max(index, GRID_INDEX_MIN), GRID_INDEX_MAX)
    offset_ghz = (frequency_thz - channel_center_frequency(index)) * 1e3
    return Channel(index), offset_ghz


@dataclass(frozen=True)
class ResonatorSpec:
    """Microring comb parameters.

    ``extinction`` is the on-resonance transmission floor (dip depth) and
    may be a single fraction for all modes or a per-order mapping.
    ``mode_frequency_overrides`` replaces individual mode centers (THz)
    for dispersion studies; default spacing is exactly uniform.
    """

    fsr_ghz: float
    q_factor: float
    linewidth_fwhm_mhz: float
    pump_channel: Channel
    mode_count: int
    extinction: float | dict[int, float] = 0.022
    insertion_loss_db: float = 0.0
    mode_frequency_overrides: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        pump_mhz = self.pump_channel.center_frequency_thz * 1e6
        implied_fwhm = pump_mhz / self.q_factor
        if abs(self.linewidth_fwhm_mhz - implied_fwhm) > 0.05 * implied_fwhm:
            raise ConfigurationError(
                f"linewidth {self.linewidth_fwhm_mhz:.1f} MHz inconsistent with "
                f"Q={self.q_factor:.3g} (implies {implied_fwhm:.1f} MHz)"
            )
        if self.fsr_ghz * 1e3 <= 10.0 * self.linewidth_fwhm_mhz:
            raise ConfigurationError(
                f"FSR {self.fsr_ghz} GHz does not resolve the comb "
                f"(needs > 10x linewidth {self.linewidth_fwhm_mhz} MHz)"
            )

    def extinction_at(self, order: int) -> float:
        if isinstance(self.extinction, dict):
            return self.extinction.get(order, 0.022)
        return self.extinction

    def mode_frequency_thz(self, order: int) -> float:
        if order in self.mode_frequency_overrides:
            return self.mode_frequency_overrides[order]
        return self.pump_channel.center_frequency_thz + order * self.fsr_ghz * 1e-3


@dataclass(frozen=True)
class ResonanceMode:
    """One comb line: signed order from the pump mode."""

    order: int
    center_frequency_thz: float
    linewidth_mhz: float
    mapped_channel: Channel | None


def resonance_comb(spec: ResonatorSpec) -> list[ResonanceMode]:
    """All comb modes of ``spec``, pump mode at order 0.

    Requires an odd mode_count >= 3 so the comb is symmetric about the
    pump. Modes within 25 GHz of a grid center get a channel mapping.
    """
    if spec.mode_count < 3 or spec.mode_count % 2 == 0:
        raise ConfigurationError(
            f"mode_count must be odd and >= 3, got {spec.mode_count}"
        )
    half = (spec.mode_count - 1) // 2
    modes = []
    for order in range(-half, half + 1):
        freq = spec.mode_frequency_thz(order)
        chan, offset_ghz = nearest_channel(freq)
        mapped = chan if abs(offset_ghz) <= CHANNEL_MAP_TOLERANCE_GHZ else None
        modes.append(
            ResonanceMode(
                order=order,
                center_frequency_thz=freq,
                linewidth_mhz=spec.linewidth_fwhm_mhz,
                mapped_channel=mapped,
            )
        )
    return modes


def transmission(spec: ResonatorSpec, frequency_thz):
    """Bus-waveguide power transmission at ``frequency_thz`` (THz).

    Product of inverted Lorentzian dips over all comb modes:
    T(nu) = prod_k [1 - (1 - e_k) / (1 + (2 (nu - nu_k) / FWHM)^2)].
    Accepts a scalar or ndarray; returns the same shape.
    """
    nu = np.asarray(frequency_thz, dtype=np.float64)
    out = np.ones_like(nu)
    fwhm_thz = spec.linewidth_fwhm_mhz * 1e-6
    half = (spec.mode_count - 1) // 2
    for order in range(-half, half + 1):
        nu_k = spec.mode_frequency_thz(order)
        ext = spec.extinction_at(order)
        x = 2.0 * (nu - nu_k) / fwhm_thz
        out = out * (1.0 - (1.0 - ext) / (1.0 + x * x))
    if np.isscalar(frequency_thz):
        return float(out)
    return out


def transmission_spectrum(
    spec: ResonatorSpec, start_thz: float, stop_thz: float, points: int
) -> tuple[np.ndarray, np.ndarray]:
    """Sampled (frequency_THz, transmittance) arrays for CSV export."""
    freqs = np.linspace(start_thz, stop_thz, points)
    return freqs, transmission(spec, freqs)
