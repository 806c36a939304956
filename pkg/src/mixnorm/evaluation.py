"""Objective mix evaluation: audio features, MAPE reports, spectral losses.

Feature definitions are pinned in docs/features.md. All feature time
series share one frame grid (frame centers at t*hop) and a 0.5 s running
mean smooths either the power spectrogram (spectral group) or the feature
series itself (panning/dynamic groups).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import firwin, firls, lfilter

from .core import StereoWaveform, linear_to_db, stft
from .errors import DataError
from .loudness import integrated_loudness

log = logging.getLogger(__name__)

FEATURE_FFT_SIZE = 2048
FEATURE_HOP = 512
RUNNING_MEAN_S = 0.5
CONTRAST_BANDS_HZ = (200.0, 400.0, 800.0, 1600.0, 3200.0, 6400.0, 12800.0)
CONTRAST_QUANTILE = 0.02
MAPE_REFERENCE_FLOOR = 1e-8

FEATURE_GROUPS = {
    "spectral": ("centroid", "bandwidth", "contrast", "flatness", "rolloff"),
    "panning": ("panning_rms",),
    "dynamic": ("rms_level", "dynamic_spread", "crest_factor"),
    "loudness": ("loudness",),
}


@dataclass
class MixFeatureReport:
    """Per-mix feature trajectories, their means, and optional MAPE."""

    series: dict[str, np.ndarray]
    loudness: float
    frame_times: np.ndarray
    sample_rate: int
    mape_by_group: dict[str, float] | None = None

    def mean(self, name: str) -> float:
        if name == "loudness":
            return self.loudness
        return float(np.mean(self.series[name]))

    def means(self) -> dict[str, float]:
        out = {name: self.mean(name) for name in self.series}
        out["loudness"] = self.loudness
        return out

    def to_dict(self) -> dict:
        data = {
            "sample_rate": self.sample_rate,
            "loudness_lufs": self.loudness,
            "feature_means": self.means(),
        }
        if self.mape_by_group is not None:
            data["mape_by_group"] = self.mape_by_group
        return data


def _frame_slices(n: int, frame: int, hop: int) -> tuple[np.ndarray, np.ndarray]:
    """Start/stop sample indices of frames centered at t*hop, edge-clipped."""
    centers = np.arange(n // hop + 1) * hop
    starts = np.maximum(centers - frame // 2, 0)
    stops = np.minimum(centers + frame // 2, n)
    return starts, stops


def mix_features(mix: StereoWaveform, fft_size: int = FEATURE_FFT_SIZE,
                 hop: int = FEATURE_HOP,
                 running_mean_s: float = RUNNING_MEAN_S) -> MixFeatureReport:
    """Spectral, panning, dynamic and loudness features of one mix."""
    if mix.duration < running_mean_s:
        raise DataError(
            f"mix too short for feature analysis: need at least {running_mean_s} s"
        )
    smooth = max(1, int(round(running_mean_s * mix.sample_rate / hop)))
    left = stft(mix.left, fft_size, hop, mix.sample_rate).magnitudes
    right = stft(mix.right, fft_size, hop, mix.sample_rate).magnitudes
    freqs = np.fft.rfftfreq(fft_size, d=1.0 / mix.sample_rate)

    power = (left * left + right * right) / 2.0
    power_s = uniform_filter1d(power, size=smooth, axis=0, mode="nearest")
    mag_s = np.sqrt(power_s)

    # power weighting keeps window-leakage sidelobes from biasing the
    # centroid of narrowband content
    power_total = power_s.sum(axis=1) + 1e-30
    centroid = (power_s @ freqs) / power_total
    bandwidth = np.sqrt(
        np.sum(power_s * (freqs[None, :] - centroid[:, None]) ** 2, axis=1) / power_total
    )

    logp = np.log(power_s + 1e-30)
    flatness = np.exp(logp.mean(axis=1)) / (power_s.mean(axis=1) + 1e-30)

    cumulative = np.cumsum(power_s, axis=1)
    target = 0.85 * cumulative[:, -1:]
    rolloff = freqs[np.argmax(cumulative >= target, axis=1)]

    contrast = _spectral_contrast(mag_s, freqs)

    # Panning index per bin: (1 - psi) signed by the dominant side, RMS
    # over bins per frame, then smoothed as a series.
    denom = left * left + right * right
    psi = np.ones_like(denom)
    live = denom > 0.0
    psi[live] = 2.0 * left[live] * right[live] / denom[live]
    index = (1.0 - np.clip(psi, 0.0, 1.0)) * np.sign(left - right)
    panning_rms = uniform_filter1d(
        np.sqrt((index ** 2).mean(axis=1)), size=smooth, mode="nearest"
    )

    starts, stops = _frame_slices(mix.num_samples, fft_size, hop)
    sq = np.concatenate([[0.0], np.cumsum(mix.left.astype(np.float64) ** 2
                                          + mix.right.astype(np.float64) ** 2)])
    counts = np.maximum(stops - starts, 1)
    frame_rms = np.sqrt((sq[stops] - sq[starts]) / (2 * counts))
    amplitude = np.maximum(np.abs(mix.left), np.abs(mix.right)).astype(np.float64)
    frame_peak = np.array([amplitude[a:b].max() if b > a else 0.0
                           for a, b in zip(starts, stops)])
    rms_db = linear_to_db(frame_rms)
    crest = np.where(frame_rms > 0.0, frame_peak / np.maximum(frame_rms, 1e-30), 0.0)
    spread = np.abs(rms_db - rms_db.mean())

    series = {
        "centroid": centroid,
        "bandwidth": bandwidth,
        "contrast": contrast,
        "flatness": flatness,
        "rolloff": rolloff,
        "panning_rms": panning_rms,
        "rms_level": uniform_filter1d(rms_db, size=smooth, mode="nearest"),
        "dynamic_spread": uniform_filter1d(spread, size=smooth, mode="nearest"),
        "crest_factor": uniform_filter1d(crest, size=smooth, mode="nearest"),
    }
    n_frames = min(s.size for s in series.values())
    series = {k: v[:n_frames] for k, v in series.items()}
    return MixFeatureReport(
        series=series,
        loudness=integrated_loudness(mix).integrated_lufs,
        frame_times=np.arange(n_frames) * hop / mix.sample_rate,
        sample_rate=mix.sample_rate,
    )


def _spectral_contrast(mag_s: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    """Mean over octave bands of peak-vs-valley level difference (dB)."""
    per_band = []
    for lo, hi in zip(CONTRAST_BANDS_HZ[:-1], CONTRAST_BANDS_HZ[1:]):
        bins = np.flatnonzero((freqs >= lo) & (freqs < hi))
        if bins.size == 0:
            continue
        band = np.sort(mag_s[:, bins], axis=1)
        take = max(1, int(round(CONTRAST_QUANTILE * bins.size)))
        valley = band[:, :take].mean(axis=1)
        peak = band[:, -take:].mean(axis=1)
        per_band.append(20.0 * np.log10((peak + 1e-30) / (valley + 1e-30)))
    if not per_band:
        raise DataError("no contrast bands below Nyquist")
    return np.mean(per_band, axis=0)


def mape_report(candidate: StereoWaveform, reference: StereoWaveform) -> MixFeatureReport:
    """Candidate features plus per-subgroup MAPE against a reference mix.

    Unequal durations are trimmed to the shorter with a warning; reference
    frames with magnitude under 1e-8 are excluded from that feature's MAPE.
    Group values are fractional (1.0 = 100%).
    """
    if candidate.sample_rate != reference.sample_rate:
        raise DataError("candidate and reference sample rates differ")
    n = min(candidate.num_samples, reference.num_samples)
    if candidate.num_samples != reference.num_samples:
        log.warning(
            "duration mismatch (%d vs %d samples); trimming to the shorter",
            candidate.num_samples, reference.num_samples,
        )
        candidate = StereoWaveform(candidate.left[:n], candidate.right[:n],
                                   candidate.sample_rate)
        reference = StereoWaveform(reference.left[:n], reference.right[:n],
                                   reference.sample_rate)
    feats_c = mix_features(candidate)
    feats_r = mix_features(reference)

    def series_mape(name: str) -> float | None:
        c, r = feats_c.series[name], feats_r.series[name]
        n = min(c.size, r.size)
        c, r = c[:n], r[:n]
        mask = np.abs(r) >= MAPE_REFERENCE_FLOOR
        if not mask.any():
            return None
        return float(np.mean(np.abs(c[mask] - r[mask]) / np.abs(r[mask])))

    by_group = {}
    for group, names in FEATURE_GROUPS.items():
        values = []
        for name in names:
            if name == "loudness":
                if abs(feats_r.loudness) >= MAPE_REFERENCE_FLOOR and math.isfinite(feats_r.loudness):
                    values.append(abs(feats_c.loudness - feats_r.loudness)
                                  / abs(feats_r.loudness))
            else:
                value = series_mape(name)
                if value is not None:
                    values.append(value)
        by_group[group] = float(np.mean(values)) if values else 0.0
    feats_c.mape_by_group = by_group
    return feats_c


# --- Stereo-invariant spectral losses ---------------------------------------

_EMPHASIS_CACHE: dict[tuple, np.ndarray] = {}


def a_weighting_response(freqs: np.ndarray) -> np.ndarray:
    """Analytic A-weighting magnitude, normalized to unity at 1 kHz."""
    def raw(f):
        f2 = np.asarray(f, dtype=np.float64) ** 2
        num = (12194.0 ** 2) * f2 ** 2
        den = ((f2 + 20.6 ** 2)
               * np.sqrt((f2 + 107.7 ** 2) * (f2 + 737.9 ** 2))
               * (f2 + 12194.0 ** 2))
        return num / np.maximum(den, 1e-30)

    return raw(freqs) / raw(1000.0)


def emphasis_filter(sample_rate: int, taps: int = 101,
                    lowpass_hz: float = 16000.0) -> np.ndarray:
    """Perceptual pre-emphasis: A-weighting FIR cascaded with a low-pass.

    The A-weighting stage is a least-squares fit to the analytic curve.
    """
    key = (sample_rate, taps, lowpass_hz)
    if key not in _EMPHASIS_CACHE:
        grid = np.linspace(0.0, sample_rate / 2.0, 128)
        desired = a_weighting_response(grid)
        bands = np.repeat(grid, 2)[1:-1]
        gains = np.repeat(desired, 2)[1:-1]
        a_taps = firls(taps, bands, gains, fs=sample_rate)
        lp_taps = firwin(taps, lowpass_hz, fs=sample_rate)
        _EMPHASIS_CACHE[key] = np.convolve(a_taps, lp_taps)
    return _EMPHASIS_CACHE[key]


@dataclass
class LossBreakdown:
    """Components of the stereo-invariant losses on sum/diff spectra.

    total_a = SC + L1Log terms; total_b swaps SC for L2. Unused SC terms
    are NaN when the reference has a zero-energy sum or diff signal and
    the caller asked for variant b.
    """

    sc_sum: float
    l1log_sum: float
    sc_diff: float
    l1log_diff: float
    l2_sum: float
    l2_diff: float
    total_a: float = field(init=False)
    total_b: float = field(init=False)

    def __post_init__(self):
        self.total_a = self.sc_sum + self.l1log_sum + self.sc_diff + self.l1log_diff
        self.total_b = self.l2_sum + self.l1log_sum + self.l2_diff + self.l1log_diff

    def total(self, variant: str) -> float:
        return self.total_a if variant == "a" else self.total_b

    def to_dict(self) -> dict:
        return {
            "sc_sum": self.sc_sum, "l1log_sum": self.l1log_sum,
            "sc_diff": self.sc_diff, "l1log_diff": self.l1log_diff,
            "l2_sum": self.l2_sum, "l2_diff": self.l2_diff,
            "total_a": self.total_a, "total_b": self.total_b,
        }


def loss_from_magnitudes(ref_sum, est_sum, ref_diff, est_diff,
                         variant: str = "a", log_eps: float = 1e-7) -> LossBreakdown:
    """Loss components from precomputed magnitude spectrograms."""
    def sc(ref, est):
        denom = np.linalg.norm(ref)
        if denom == 0.0:
            if variant == "a":
                raise DataError("silent reference: spectral convergence undefined")
            return float("nan")
        return float(np.linalg.norm(est - ref) / denom)

    def l1log(ref, est):
        return float(np.mean(np.abs(np.log(ref + log_eps) - np.log(est + log_eps))))

    def l2(ref, est):
        return float(np.mean((ref - est) ** 2))

    return LossBreakdown(
        sc_sum=sc(ref_sum, est_sum),
        l1log_sum=l1log(ref_sum, est_sum),
        sc_diff=sc(ref_diff, est_diff),
        l1log_diff=l1log(ref_diff, est_diff),
        l2_sum=l2(ref_sum, est_sum),
        l2_diff=l2(ref_diff, est_diff),
    )


def stereo_invariant_loss(y: StereoWaveform, y_hat: StereoWaveform,
                          variant: str = "a", fft_size: int = 4096,
                          hop: int | None = None, emphasis_taps: int = 101,
                          lowpass_hz: float = 16000.0,
                          log_eps: float = 1e-7) -> LossBreakdown:
    """Spectral loss on pre-emphasized sum and difference signals.

    Swapping L/R of both signals leaves the loss exactly unchanged: the
    sum is invariant and the difference only flips sign.
    """
    if variant not in ("a", "b"):
        raise DataError(f"variant must be 'a' or 'b', got {variant!r}")
    if y.num_samples != y_hat.num_samples:
        raise DataError("loss inputs must have equal length")
    if y.sample_rate != y_hat.sample_rate:
        raise DataError("loss inputs must share a sample rate")
    hop = fft_size // 4 if hop is None else hop
    rho = emphasis_filter(y.sample_rate, emphasis_taps, lowpass_hz)

    def sum_diff_mags(w: StereoWaveform) -> tuple[np.ndarray, np.ndarray]:
        fl = lfilter(rho, [1.0], w.left.astype(np.float64))
        fr = lfilter(rho, [1.0], w.right.astype(np.float64))
        mag = lambda x: stft(x, fft_size, hop, w.sample_rate).magnitudes
        return mag(fl + fr), mag(fl - fr)

    ref_sum, ref_diff = sum_diff_mags(y)
    est_sum, est_diff = sum_diff_mags(y_hat)
    return loss_from_magnitudes(ref_sum, est_sum, ref_diff, est_diff, variant, log_eps)
