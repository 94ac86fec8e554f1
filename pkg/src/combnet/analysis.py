"""Turn time-tag streams into measured quantities.

Covers coincidence histograms, windowed coincidence/accidental counting,
the correlation-peak fit, fringe fits, and the singles-based rate and
loss bookkeeping.

Correlation model: the measured coincidence peak is a two-sided
exponential of scale tau (the photon coherence time) convolved with the
detection-system Gaussian written as exp(-dt^2 / sigma^2). The
convolution has a closed form in erfc; it is evaluated through the
scaled complementary error function so large |dt|/sigma cannot overflow,
and fitted by a damped Gauss-Newton loop with an analytic Jacobian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import erfc, erfcx

from ._kernels import delay_histogram
from .errors import (
    ConfigurationError,
    EmptyDataError,
    FitFailureError,
    InconsistentRatesError,
)

PS_PER_NS = 1e3
_TWO_OVER_SQRTPI = 2.0 / math.sqrt(math.pi)

# Fringe contrast above this is unreachable by any local hidden-variable
# model (CHSH); used to flag edges that fail entanglement verification.
CLASSICAL_VISIBILITY_BOUND = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class Histogram:
    bin_width_ps: float
    origin_ps: float  # left edge of the first bin
    counts: np.ndarray  # int64

    @property
    def nbins(self) -> int:
        return self.counts.size

    @property
    def bin_centers_ps(self) -> np.ndarray:
        return self.origin_ps + (np.arange(self.nbins) + 0.5) * self.bin_width_ps

    @property
    def span_ps(self) -> float:
        return self.nbins * self.bin_width_ps

    def total(self) -> int:
        return int(self.counts.sum())


def build_histogram(
    a_times_ps: np.ndarray,
    b_times_ps: np.ndarray,
    bin_width_ps: float = 156.25,
    span_ns: float = 30.0,
    center_ps: float = 0.0,
) -> Histogram:
    """Histogram of delays (t_b - t_a) over center +- span/2.

    Inputs must be sorted ascending; cost scales with the number of tag
    pairs inside the span (sorted two-stream sweep, no quadratic blowup).
    Empty inputs give a zero histogram.
    """
    if bin_width_ps <= 0 or span_ns <= 0:
        raise ConfigurationError("bin width and span must be positive")
    span_ps = span_ns * PS_PER_NS
    nbins = max(int(round(span_ps / bin_width_ps)), 1)
    lo = center_ps - nbins * bin_width_ps / 2.0
    counts = delay_histogram(
        np.asarray(a_times_ps, dtype=np.float64),
        np.asarray(b_times_ps, dtype=np.float64),
        lo,
        lo + nbins * bin_width_ps,
        bin_width_ps,
        nbins,
    )
    return Histogram(bin_width_ps=bin_width_ps, origin_ps=lo, counts=counts)


class CoincidenceCounts(NamedTuple):
    cc: float
    ac: float
    car: float
    car_saturated: bool = False  # AC was zero; car holds +inf


def window_sums(
    h: Histogram, window_ns: float, center_ps: float = 0.0
) -> tuple[np.ndarray, int]:
    """Sums over disjoint windows of width window_ns tiling the span.

    One window is centered on ``center_ps``; its index is returned with
    the sums. Window edges snap to the nearest bin edge.
    """
    w_ps = window_ns * PS_PER_NS
    bins_per = int(round(w_ps / h.bin_width_ps))
    if bins_per < 1:
        raise ConfigurationError("window narrower than one bin")
    start_ps = center_ps - w_ps / 2.0
    start_bin = int(round((start_ps - h.origin_ps) / h.bin_width_ps))
    n_left = start_bin // bins_per
    first_bin = start_bin - n_left * bins_per
    n_windows = (h.nbins - first_bin) // bins_per
    if n_windows < 3:
        raise ConfigurationError(
            f"span fits only {n_windows} windows of {window_ns} ns; need >= 3"
        )
    trimmed = h.counts[first_bin : first_bin + n_windows * bins_per]
    sums = trimmed.reshape(n_windows, bins_per).sum(axis=1)
    return sums, n_left


def cc_ac_car(
    h: Histogram, window_ns: float = 2.5, center_ps: float = 0.0
) -> CoincidenceCounts:
    """Coincidences in the centered window, mean accidentals elsewhere.

    CC sums the window centered on ``center_ps``; AC is the mean over all
    other same-width disjoint windows in the span; CAR is their ratio.
    """
    sums, ci = window_sums(h, window_ns, center_ps)
    cc = float(sums[ci])
    others = np.delete(sums, ci)
    ac = float(others.mean())
    if ac == 0.0:
        return CoincidenceCounts(cc=cc, ac=0.0, car=math.inf, car_saturated=True)
    return CoincidenceCounts(cc=cc, ac=ac, car=cc / ac)


def accidental_estimate(
    h: Histogram,
    window_ns: float = 2.5,
    center_ps: float = 0.0,
    exclude_nearest: int = 3,
) -> float:
    """Mean off-peak window count, excluding the windows nearest the peak
    group (central plus both side peaks by default)."""
    sums, ci = window_sums(h, window_ns, center_ps)
    if sums.size <= exclude_nearest:
        raise ConfigurationError("not enough windows to estimate accidentals")
    order = np.argsort(np.abs(np.arange(sums.size) - ci), kind="stable")
    return float(sums[order[exclude_nearest:]].mean())


# --- correlation-peak model -------------------------------------------------


def _emg_component(x, tau, sigma, sign):
    """One wing of the exponential (x) Gaussian convolution.

    Returns (value, d/dx, d/dtau, d/dsigma) of
        exp(a^2 + sign*x/tau) * erfc(a + sign*x/sigma),  a = sigma/(2 tau),
    evaluated through erfcx where the erfc argument is non-negative so
    nothing overflows.
    """
    a = sigma / (2.0 * tau)
    z = a + sign * x / sigma
    gauss = np.exp(-(x * x) / (sigma * sigma))

    da_dtau = -a / tau
    da_dsig = a / sigma
    dz_dtau = da_dtau
    dz_dsig = da_dsig - sign * x / (sigma * sigma)
    dz_dx = sign / sigma

    val = np.empty_like(x)
    dx = np.empty_like(x)
    dtau = np.empty_like(x)
    dsig = np.empty_like(x)

    pos = z >= 0
    if np.any(pos):
        zp = z[pos]
        f = erfcx(zp)
        fprime = 2.0 * zp * f - _TWO_OVER_SQRTPI
        g = gauss[pos]
        xp = x[pos]
        val[pos] = g * f
        dx[pos] = g * (-2.0 * xp / sigma**2 * f + fprime * dz_dx)
        dtau[pos] = g * fprime * dz_dtau
        dsig[pos] = g * (2.0 * xp * xp / sigma**3 * f + fprime * dz_dsig[pos])
    neg = ~pos
    if np.any(neg):
        zn = z[neg]
        xn = x[neg]
        q = a * a + sign * xn / tau
        eq = np.exp(q)
        fc = erfc(zn)
        g = gauss[neg]
        dq_dtau = 2.0 * a * da_dtau + (-sign) * xn / (tau * tau)
        dq_dsig = 2.0 * a * da_dsig
        val[neg] = eq * fc
        dx[neg] = eq * fc * (sign / tau) - _TWO_OVER_SQRTPI * g * dz_dx
        dtau[neg] = eq * fc * dq_dtau - _TWO_OVER_SQRTPI * g * dz_dtau
        dsig[neg] = eq * fc * dq_dsig - _TWO_OVER_SQRTPI * g * dz_dsig[neg]
    return val, dx, dtau, dsig


def correlation_model(x_ps, height, center_ps, tau_ps, sigma_ps, baseline):
    """Model value at delays ``x_ps``; peak-normalized so the parameter
    ``height`` is the peak amplitude above baseline in counts."""
    x = np.asarray(x_ps, dtype=np.float64) - center_ps
    if sigma_ps < 1e-9 * tau_ps:
        return height * np.exp(-np.abs(x) / tau_ps) + baseline
    a = sigma_ps / (2.0 * tau_ps)
    b1, _, _, _ = _emg_component(x, tau_ps, sigma_ps, -1.0)
    b2, _, _, _ = _emg_component(x, tau_ps, sigma_ps, +1.0)
    return height * (b1 + b2) / (2.0 * erfcx(a)) + baseline


# 3-point Gauss-Legendre rule used to average the model over each bin;
# fitting bin integrals instead of center values keeps the recovered
# sigma free of the bin-width broadening bias.
_QUAD_OFFSET = math.sqrt(0.6)
_QUAD_WEIGHTS = (5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0)


def correlation_model_binned(
    centers_ps, bin_width_ps, height, center_ps, tau_ps, sigma_ps, baseline
):
    """Bin-averaged model values (what an ideal histogram would contain)."""
    x = np.asarray(centers_ps, dtype=np.float64)
    half = bin_width_ps / 2.0
    out = np.zeros_like(x)
    for w, off in zip(_QUAD_WEIGHTS, (-_QUAD_OFFSET * half, 0.0, _QUAD_OFFSET * half)):
        out += w * correlation_model(
            x + off, height, center_ps, tau_ps, sigma_ps, baseline
        )
    return out


def _model_and_jacobian_point(x, params):
    height, mu, tau, sigma, baseline = params
    xs = x - mu
    if sigma < 1e-9 * tau:
        shape = np.exp(-np.abs(xs) / tau)
        m = height * shape + baseline
        jac = np.empty((x.size, 5))
        jac[:, 0] = shape
        jac[:, 1] = height * shape * np.sign(xs) / tau
        jac[:, 2] = height * shape * np.abs(xs) / tau**2
        jac[:, 3] = 0.0
        jac[:, 4] = 1.0
        return m, jac

    a = sigma / (2.0 * tau)
    denom = 2.0 * erfcx(a)
    ddenom_da = 2.0 * (2.0 * a * erfcx(a) - _TWO_OVER_SQRTPI)
    da_dtau = -a / tau
    da_dsig = a / sigma

    b1, b1x, b1t, b1s = _emg_component(xs, tau, sigma, -1.0)
    b2, b2x, b2t, b2s = _emg_component(xs, tau, sigma, +1.0)
    n = b1 + b2
    r = n / denom
    dr_dx = (b1x + b2x) / denom
    dr_dtau = (b1t + b2t - r * ddenom_da * da_dtau) / denom
    dr_dsig = (b1s + b2s - r * ddenom_da * da_dsig) / denom

    m = height * r + baseline
    jac = np.empty((x.size, 5))
    jac[:, 0] = r
    jac[:, 1] = -height * dr_dx
    jac[:, 2] = height * dr_dtau
    jac[:, 3] = height * dr_dsig
    jac[:, 4] = 1.0
    return m, jac


def _model_and_jacobian(x, params, bin_half_width=0.0):
    if bin_half_width <= 0.0:
        return _model_and_jacobian_point(x, params)
    m = np.zeros(x.size)
    jac = np.zeros((x.size, 5))
    for w, off in zip(
        _QUAD_WEIGHTS,
        (-_QUAD_OFFSET * bin_half_width, 0.0, _QUAD_OFFSET * bin_half_width),
    ):
        mi, ji = _model_and_jacobian_point(x + off, params)
        m += w * mi
        jac += w * ji
    return m, jac


@dataclass(frozen=True)
class CorrelationFit:
    tau_c_ps: float
    sigma_ps: float
    amplitude: float  # peak height above baseline, counts
    baseline: float  # counts per bin
    center_ps: float
    residual_norm: float  # ||residual|| / ||data||
    iterations: int

    def bandwidth_mhz(self) -> float:
        return bandwidth_from_tau(self.tau_c_ps)


def _initial_guess(x, y):
    edge = max(1, y.size // 10)
    baseline = float(np.concatenate([y[:edge], y[-edge:]]).mean())
    ipk = int(np.argmax(y))
    height = float(y[ipk] - baseline)
    if height <= 0:
        raise FitFailureError("no dominant peak above the baseline")
    mu = float(x[ipk])
    half = baseline + height / 2.0
    above = np.flatnonzero(y >= half)
    width = float(x[above[-1]] - x[above[0]]) if above.size > 1 else abs(x[1] - x[0])
    width = max(width, abs(x[1] - x[0]))
    return np.array([height, mu, width / 2.0, width / 3.0, baseline])


def fit_correlation(
    h: Histogram, tol: float = 1e-6, max_iterations: int = 200
) -> CorrelationFit:
    """Fit the exponential (x) Gaussian peak model to a histogram.

    Levenberg-Marquardt style damped Gauss-Newton with the analytic
    Jacobian; stops at relative parameter tolerance ``tol`` or
    ``max_iterations``. Raises FitFailureError (carrying the last
    iterate) when the data are peakless or damping cannot find descent.
    """
    x = h.bin_centers_ps
    y = h.counts.astype(np.float64)
    if y.size < 6:
        raise FitFailureError("too few bins to fit")
    half = h.bin_width_ps / 2.0
    params = _initial_guess(x, y)
    lam = 1e-3
    ynorm = float(np.linalg.norm(y)) or 1.0
    scale = np.abs(params) + 1e-8 * (1.0 + np.abs(params[0]))

    m, jac = _model_and_jacobian(x, params, half)
    resid = m - y
    cost = float(resid @ resid)
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        a = jac.T @ jac
        g = jac.T @ resid
        accepted = False
        for _ in range(50):
            damped = a + lam * np.diag(np.diag(a).clip(min=1e-12))
            try:
                step = np.linalg.solve(damped, -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = params + step
            trial[0] = abs(trial[0])  # height
            trial[2] = abs(trial[2])  # tau
            trial[3] = abs(trial[3])  # sigma
            m_t, jac_t = _model_and_jacobian(x, trial, half)
            resid_t = m_t - y
            cost_t = float(resid_t @ resid_t)
            if np.isfinite(cost_t) and cost_t <= cost:
                accepted = True
                break
            lam *= 10.0
            if lam > 1e14:
                break
        if not accepted:
            raise FitFailureError(
                "damping exhausted without descent",
                last_params=params,
                residual_norm=math.sqrt(cost) / ynorm,
            )
        rel_step = np.max(np.abs(step) / np.maximum(np.abs(trial), scale))
        params, resid, cost, jac = trial, resid_t, cost_t, jac_t
        lam = max(lam / 3.0, 1e-12)
        if rel_step < tol:
            break
    else:
        raise FitFailureError(
            f"no convergence in {max_iterations} iterations",
            last_params=params,
            residual_norm=math.sqrt(cost) / ynorm,
        )
    return CorrelationFit(
        tau_c_ps=float(params[2]),
        sigma_ps=float(params[3]),
        amplitude=float(params[0]),
        baseline=float(params[4]),
        center_ps=float(params[1]),
        residual_norm=math.sqrt(cost) / ynorm,
        iterations=iterations,
    )


def bandwidth_from_tau(tau_c_ps: float) -> float:
    """Photon bandwidth in MHz: 1 / (2 pi tau_c)."""
    if tau_c_ps <= 0:
        raise ConfigurationError("tau_c must be positive")
    return 1e6 / (2.0 * math.pi * tau_c_ps)


# --- fringes ----------------------------------------------------------------


@dataclass(frozen=True)
class FringeFit:
    mean_level: float
    visibility_raw: float
    visibility_net: float | None
    phase_offset_rad: float
    clamped: bool  # a visibility fell outside [0, 1] and was clamped

    @property
    def beats_classical_bound(self) -> bool:
        """True when the raw contrast exceeds 1/sqrt(2), the most any
        local hidden-variable model can produce."""
        return self.visibility_raw > CLASSICAL_VISIBILITY_BOUND


def _cosine_lsq(phases, counts):
    design = np.column_stack(
        [np.ones_like(phases), np.cos(phases), np.sin(phases)]
    )
    coef, *_ = np.linalg.lstsq(design, counts, rcond=None)
    c0, p, q = coef
    if c0 <= 0:
        raise FitFailureError("fringe mean level is not positive")
    v = math.hypot(p, q) / c0
    phi0 = math.atan2(-q, p)
    return float(c0), float(v), float(phi0)


def fit_fringe(
    sweep: list[tuple[float, float]],
    accidentals: list[float] | None = None,
) -> FringeFit:
    """Fit C0 (1 + V cos(phase + phi0)) to (phase, counts) points.

    ``accidentals`` supplies a per-point background whose subtraction
    gives the net visibility. Linear least squares (the model is linear
    in C0, C0 V cos(phi0), C0 V sin(phi0)).
    """
    if len(sweep) < 5:
        raise FitFailureError("need at least 5 phase points")
    phases = np.asarray([p for p, _ in sweep], dtype=np.float64)
    counts = np.asarray([c for _, c in sweep], dtype=np.float64)
    if phases.max() - phases.min() < math.pi - 1e-9:
        raise FitFailureError("phase sweep must span at least pi")
    c0, v_raw, phi0 = _cosine_lsq(phases, counts)
    clamped = not (0.0 <= v_raw <= 1.0)
    v_net = None
    if accidentals is not None:
        ac = np.asarray(accidentals, dtype=np.float64)
        if ac.size != counts.size:
            raise ConfigurationError("one accidental level per sweep point")
        _, v_net, _ = _cosine_lsq(phases, counts - ac)
        clamped = clamped or not (0.0 <= v_net <= 1.0)
        v_net = min(max(v_net, 0.0), 1.0)
    return FringeFit(
        mean_level=c0,
        visibility_raw=min(max(v_raw, 0.0), 1.0),
        visibility_net=v_net,
        phase_offset_rad=phi0,
        clamped=clamped,
    )


def two_point_visibility(
    max_count: float,
    min_count: float,
    ac_max: float = 0.0,
    ac_min: float = 0.0,
) -> float:
    """Fringe contrast from its extrema, optionally accidental-subtracted."""
    hi = max_count - ac_max
    lo = min_count - ac_min
    if hi + lo <= 0:
        raise EmptyDataError("fringe extrema sum to zero after subtraction")
    return (hi - lo) / (hi + lo)


# --- rates ------------------------------------------------------------------


@dataclass(frozen=True)
class RateSummary:
    singles_signal: float  # s^-1
    singles_idler: float  # s^-1
    coincidences: float  # s^-1
    pgr: float  # s^-1 at the source plane
    loss_per_arm_db: float
    car: float | None = None
    bandwidth_mhz: float | None = None


def rate_summary(
    singles_signal: float,
    singles_idler: float,
    coincidences: float,
    car: float | None = None,
    bandwidth_mhz: float | None = None,
) -> RateSummary:
    """Source-plane pair rate and per-arm loss from singles/coincidences.

    pgr = S_s S_i / R_c and the per-arm transmission is R_c / sqrt(S_s S_i),
    reported in dB.
    """
    if coincidences <= 0:
        raise EmptyDataError("coincidence rate must be positive")
    if coincidences > min(singles_signal, singles_idler):
        raise InconsistentRatesError(
            "coincidence rate exceeds a singles rate"
        )
    pgr = singles_signal * singles_idler / coincidences
    loss_fraction = coincidences / math.sqrt(singles_signal * singles_idler)
    return RateSummary(
        singles_signal=singles_signal,
        singles_idler=singles_idler,
        coincidences=coincidences,
        pgr=pgr,
        loss_per_arm_db=10.0 * math.log10(loss_fraction),
        car=car,
        bandwidth_mhz=bandwidth_mhz,
    )
