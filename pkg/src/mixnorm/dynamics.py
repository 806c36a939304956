"""Onset-based dynamics analysis and grid-search compression normalization.

Onsets come from a High Frequency Content novelty over mel-band energies;
per-onset peak levels summarize how transient-heavy a stem is, and stems
whose mean onset peak exceeds the corpus bound get compressed by the
mildest grid setting that brings them under it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.ndimage import median_filter
from scipy.signal import find_peaks

from .core import StereoWaveform, db_to_linear, linear_to_db, stft
from .errors import DataError

log = logging.getLogger(__name__)

ONSET_FFT_SIZE = 2048
ONSET_HOP = 512
MEDIAN_WINDOW_S = 0.5     # adaptive threshold window on the novelty curve
NOVELTY_OFFSET = 0.1      # fixed offset above the median, on max-normalized novelty
MIN_ONSET_GAP_S = 0.05
PEAK_WINDOW_S = 0.1       # peak search region after each onset
PEAK_PREROLL_S = 0.012    # absorbs the +-1 hop quantization of onset times
PEAK_PERCENTILE = 25.0    # keep the top 75% of onset peaks for the stats


def mel_filterbank(n_bands: int, fft_size: int, sample_rate: int) -> np.ndarray:
    """Triangular mel filterbank, (n_bands, bins)."""
    def hz_to_mel(f):
        return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)

    def mel_to_hz(m):
        return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)

    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_bands + 2))
    freqs = np.fft.rfftfreq(fft_size, d=1.0 / sample_rate)
    bank = np.zeros((n_bands, freqs.size))
    for b in range(n_bands):
        lo, mid, hi = edges[b], edges[b + 1], edges[b + 2]
        up = (freqs - lo) / max(mid - lo, 1e-9)
        down = (hi - freqs) / max(hi - mid, 1e-9)
        bank[b] = np.clip(np.minimum(up, down), 0.0, None)
    return bank


def hfc_novelty(w: StereoWaveform, mel_bands: int = 128,
                fft_size: int = ONSET_FFT_SIZE, hop: int = ONSET_HOP) -> np.ndarray:
    """Per-frame HFC: band-index-weighted sum of mel-band energies."""
    power = np.zeros((w.num_samples // hop + 1, fft_size // 2 + 1))
    for channel in (w.left, w.right):
        mags = stft(channel, fft_size, hop, w.sample_rate).magnitudes
        power += mags * mags
    energies = power @ mel_filterbank(mel_bands, fft_size, w.sample_rate).T
    weights = np.arange(1, mel_bands + 1, dtype=np.float64)
    return energies @ weights


def detect_onsets(w: StereoWaveform, mel_bands: int = 128,
                  fft_size: int = ONSET_FFT_SIZE, hop: int = ONSET_HOP) -> list[float]:
    """Onset times (seconds) from HFC novelty peaks.

    Peaks must clear a running-median threshold plus a fixed offset and
    sit at least 50 ms apart. Silence yields an empty list.
    """
    novelty = hfc_novelty(w, mel_bands, fft_size, hop)
    peak = novelty.max(initial=0.0)
    if peak <= 0.0:
        return []
    novelty = novelty / peak
    median_frames = max(3, int(round(MEDIAN_WINDOW_S * w.sample_rate / hop)) | 1)
    threshold = median_filter(novelty, size=median_frames, mode="nearest") + NOVELTY_OFFSET
    distance = max(1, int(round(MIN_ONSET_GAP_S * w.sample_rate / hop)))
    frames, _ = find_peaks(novelty, height=threshold, distance=distance)
    return [float(f * hop / w.sample_rate) for f in frames]


@dataclass
class OnsetPeakStats:
    """Onset peak levels and their robust summary.

    mu/sigma are the mean/std of the top-75th-percentile peak levels, or
    None when the stem has no detected transients (`has_transients`).
    """

    onset_times: list[float]
    peak_levels: list[float]  # dB, one per onset
    mu: float | None
    sigma: float | None

    @property
    def has_transients(self) -> bool:
        return self.mu is not None


def onset_peak_stats(w: StereoWaveform, onsets: list[float]) -> OnsetPeakStats:
    """Max absolute sample level (both channels) around each onset.

    The search window runs from one hop before the onset (onset times are
    quantized to the analysis hop) to the next onset or 100 ms, whichever
    comes first.
    """
    if not onsets:
        return OnsetPeakStats([], [], None, None)
    amplitude = np.maximum(np.abs(w.left), np.abs(w.right))
    cap = int(round(PEAK_WINDOW_S * w.sample_rate))
    preroll = int(round(PEAK_PREROLL_S * w.sample_rate))
    anchors = [int(round(t * w.sample_rate)) for t in onsets]
    levels = []
    for i, anchor in enumerate(anchors):
        start = max(anchor - preroll, 0)
        stop = anchors[i + 1] if i + 1 < len(anchors) else w.num_samples
        stop = min(stop, anchor + cap, w.num_samples)
        if stop <= start:
            continue
        levels.append(float(linear_to_db(amplitude[start:stop].max())))
    if not levels:
        return OnsetPeakStats(list(onsets), [], None, None)
    arr = np.asarray(levels)
    top = arr[arr >= np.percentile(arr, PEAK_PERCENTILE)]
    return OnsetPeakStats(
        onset_times=list(onsets),
        peak_levels=levels,
        mu=float(top.mean()),
        sigma=float(top.std()),
    )


@dataclass
class CompressorSettings:
    threshold_db: float
    ratio: float
    attack_ms: float
    release_ms: float
    knee_db: float = 0.0  # 0 = hard knee

    def __post_init__(self):
        if self.ratio < 1.0:
            raise DataError(f"compressor ratio must be >= 1, got {self.ratio}")
        if self.attack_ms <= 0.0 or self.release_ms <= 0.0:
            raise DataError("attack and release must be positive")
        if self.knee_db < 0.0:
            raise DataError("knee width cannot be negative")


@njit(cache=True)
def _gain_ballistics(target_db, attack_coef, release_coef):  # pragma: no cover
    out = np.empty_like(target_db)
    state = 0.0
    for i in range(target_db.size):
        g = target_db[i]
        coef = attack_coef if g < state else release_coef
        state = coef * state + (1.0 - coef) * g
        out[i] = state
    return out


def _static_gain_db(level_db: np.ndarray, threshold: float, ratio: float,
                    knee: float) -> np.ndarray:
    slope = 1.0 - 1.0 / ratio
    over = level_db - threshold
    gain = np.minimum(0.0, -slope * over)
    if knee > 0.0:
        in_knee = np.abs(2.0 * over) <= knee
        gain[in_knee] = -slope * (over[in_knee] + knee / 2.0) ** 2 / (2.0 * knee)
    return gain


def _time_coef(ms: float, sample_rate: int) -> float:
    return float(np.exp(-1.0 / (ms * 1e-3 * sample_rate)))


def compress(w: StereoWaveform, settings: CompressorSettings) -> StereoWaveform:
    """Feed-forward peak compressor with a linked max-of-channels detector.

    The static curve runs on the per-sample level in dB; the gain is
    smoothed by first-order attack/release ballistics and applied equally
    to both channels, preserving the stereo image.
    """
    channels = w.channels()
    level_db = linear_to_db(np.max(np.abs(channels), axis=0))
    static = _static_gain_db(level_db, settings.threshold_db, settings.ratio,
                             settings.knee_db)
    smoothed = _gain_ballistics(
        static,
        _time_coef(settings.attack_ms, w.sample_rate),
        _time_coef(settings.release_ms, w.sample_rate),
    )
    gain = 10.0 ** (smoothed / 20.0)
    return StereoWaveform.from_channels(channels * gain, w.sample_rate)


def peak_normalize(w: StereoWaveform, target_db: float = -10.0,
                   per_channel: bool = True) -> StereoWaveform:
    """Scale so the maximum absolute sample sits at `target_db`.

    Channels are scaled independently by default (panning is restored by a
    later stage); silent channels pass through.
    """
    target = db_to_linear(target_db)
    if per_channel:
        channels = []
        for ch in (w.left, w.right):
            peak = float(np.max(np.abs(ch), initial=0.0))
            channels.append(ch * (target / peak) if peak > 0.0 else ch)
        return StereoWaveform(channels[0], channels[1], w.sample_rate)
    peak = w.peak()
    return w.scaled(target / peak) if peak > 0.0 else w


@dataclass
class DrcResult:
    """Outcome of normalize_drc: the audio plus what was measured/chosen."""

    waveform: StereoWaveform
    settings: CompressorSettings | None  # None = passthrough
    stats_before: OnsetPeakStats
    stats_after: OnsetPeakStats | None
    satisfied: bool


def normalize_drc(w: StereoWaveform, peak_mu: float | None, peak_sigma: float | None,
                  attack_ms: float, release_ms: float, mel_bands: int = 128,
                  thresholds_db: tuple = tuple(range(-10, -41, -2)),
                  ratios: tuple = tuple(range(4, 21, 2))) -> DrcResult:
    """Compress a stem until its mean onset peak is under the corpus bound.

    Grid order is mildest-first: thresholds from the highest down (outer),
    ratios from the lowest up (inner); the first satisfying setting wins.
    Each candidate is re-measured with a fresh onset analysis. Stems with
    no transients, or already under the bound, pass through untouched.
    """
    stats = onset_peak_stats(w, detect_onsets(w, mel_bands))
    if not stats.has_transients:
        return DrcResult(w, None, stats, None, True)
    if peak_mu is None or peak_sigma is None:
        return DrcResult(w, None, stats, None, True)
    bound = peak_mu + peak_sigma
    if stats.mu <= bound:
        return DrcResult(w, None, stats, None, True)

    last = None
    for threshold in thresholds_db:
        for ratio in ratios:
            settings = CompressorSettings(threshold, ratio, attack_ms, release_ms)
            candidate = compress(w, settings)
            after = onset_peak_stats(candidate, detect_onsets(candidate, mel_bands))
            last = (candidate, settings, after)
            if not after.has_transients or after.mu <= bound:
                return DrcResult(candidate, settings, stats, after, True)
    candidate, settings, after = last
    log.warning(
        "DRC grid exhausted: mu %.2f dB still above bound %.2f dB at "
        "threshold %.0f dB / ratio %.0f; keeping the most compressive setting",
        after.mu, bound, settings.threshold_db, settings.ratio,
    )
    return DrcResult(candidate, settings, stats, after, False)
