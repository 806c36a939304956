"""Stereo panning analysis and re-panning toward a corpus-average image.

Per STFT bin, the channel similarity

    psi = 2*L*R / (L^2 + R^2)

is 1 for centered content and falls toward 0 as content hard-pans; the
side comes from the sign of |L| - |R|. Re-panning scales bin magnitudes so
the output similarity matches a target curve, then resynthesizes with the
original channel phases.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.signal import savgol_filter

from .core import Spectrogram, StereoWaveform, istft, stft_stereo
from .errors import DataError

# A bin is treated as dead on one side when its estimated panning gain
# falls below this; its content is then rebuilt from the panning model
# instead of a (numerically exploding) gain ratio.
DEAD_GAIN = 1e-4


@dataclass
class PanningSpectrum:
    """Per-frame, per-bin similarity, side, and estimated panning gains.

    `alpha` uses the linear panning law with the first-order estimate
    alpha ~= psi/2 mirrored onto the detected side, so gains_left +
    gains_right == 1 everywhere.
    """

    psi: np.ndarray          # (frames, bins), in [0, 1]
    delta_sign: np.ndarray   # (frames, bins), {-1, 0, +1}; +1 = panned left
    alpha: np.ndarray        # (frames, bins), in [0, 1]
    gains_left: np.ndarray   # (frames, bins)
    gains_right: np.ndarray  # (frames, bins)
    fft_size: int
    hop: int
    sample_rate: int

    @property
    def num_frames(self) -> int:
        return self.psi.shape[0]

    @property
    def num_bins(self) -> int:
        return self.psi.shape[1]


@dataclass
class AveragePanning:
    """Smoothed corpus-average similarity per bin."""

    similarity: np.ndarray  # (bins,), in [0, 1]
    fft_size: int
    stem_type: str | None = None

    def __post_init__(self):
        self.similarity = np.clip(
            np.asarray(self.similarity, dtype=np.float64), 0.0, 1.0
        )
        bins = self.fft_size // 2 + 1
        if self.similarity.shape != (bins,):
            raise DataError(
                f"expected {bins} similarity bins for fft_size {self.fft_size}, "
                f"got {self.similarity.shape}"
            )


def panning_spectrum(s_left: Spectrogram, s_right: Spectrogram) -> PanningSpectrum:
    """Similarity/side/gain analysis of a stereo spectrogram pair.

    Bins silent in both channels are defined as centered (psi = 1).
    """
    if s_left.magnitudes.shape != s_right.magnitudes.shape:
        raise DataError("left/right spectrograms have different shapes")
    if s_left.fft_size != s_right.fft_size or s_left.hop != s_right.hop:
        raise DataError("left/right spectrograms disagree on fft_size or hop")
    left, right = s_left.magnitudes, s_right.magnitudes
    denom = left * left + right * right
    psi = np.ones_like(left)
    live = denom > 0.0
    psi[live] = 2.0 * left[live] * right[live] / denom[live]
    psi = np.clip(psi, 0.0, 1.0)
    delta_sign = np.sign(left - right).astype(np.int8)
    half = psi / 2.0
    alpha = np.where(delta_sign > 0, half, np.where(delta_sign < 0, 1.0 - half, 0.5))
    return PanningSpectrum(
        psi=psi,
        delta_sign=delta_sign,
        alpha=alpha,
        gains_left=1.0 - alpha,
        gains_right=alpha,
        fft_size=s_left.fft_size,
        hop=s_left.hop,
        sample_rate=s_left.sample_rate,
    )


def similarity_partial(ps: PanningSpectrum) -> tuple[np.ndarray, int]:
    """One stem's contribution to the corpus similarity: (psi sum, frames)."""
    return ps.psi.sum(axis=0, dtype=np.float64), ps.num_frames


def similarity_from_partials(partials: Iterable[tuple[np.ndarray, int]],
                             fft_size: int,
                             smoothing_window_bins: int = 65,
                             smoothing_order: int = 2,
                             stem_type: str | None = None) -> AveragePanning:
    """Merge per-stem partial sums into the smoothed average similarity."""
    total = np.zeros(fft_size // 2 + 1, dtype=np.float64)
    frames = 0
    for vec, count in partials:
        if vec.shape != total.shape:
            raise DataError("panning partials disagree on fft_size")
        total += vec
        frames += count
    if not frames:
        raise DataError("no panning frames to average")
    mean = total / frames
    window = min(smoothing_window_bins, mean.size)
    if window % 2 == 0:
        window -= 1
    if window > smoothing_order:
        mean = savgol_filter(mean, window, smoothing_order)
    return AveragePanning(mean, fft_size, stem_type)


def corpus_average_similarity(spectra: Iterable[PanningSpectrum],
                              smoothing_window_bins: int = 65,
                              smoothing_order: int = 2,
                              stem_type: str | None = None) -> AveragePanning:
    """Mean similarity over every frame of every stem, then smoothed.

    Accepts a stream so corpora never need to be resident at once.
    """
    fft_size = None

    def partials():
        nonlocal fft_size
        for ps in spectra:
            if fft_size is None:
                fft_size = ps.fft_size
            elif ps.fft_size != fft_size:
                raise DataError("panning spectra disagree on fft_size")
            yield similarity_partial(ps)

    collected = list(partials())
    if fft_size is None:
        raise DataError("no panning frames to average")
    return similarity_from_partials(collected, fft_size, smoothing_window_bins,
                                    smoothing_order, stem_type)


def _weak_to_strong_ratio(similarity: np.ndarray) -> np.ndarray:
    """Exact inversion of the similarity: the weak/strong channel ratio.

    psi = 2m/(1+m^2) with m = min/max gives m = psi/(1+sqrt(1-psi^2)),
    stable for psi -> 0.
    """
    s = np.clip(similarity, 0.0, 1.0)
    return s / (1.0 + np.sqrt(np.maximum(0.0, 1.0 - s * s)))


def repan(w: StereoWaveform, target: AveragePanning, hop: int | None = None,
          cutoff_hz: float = 16000.0, gain_limit_db: float = 12.0) -> StereoWaveform:
    """Re-pan a stem so its per-bin similarity matches the target curve.

    Magnitude-only: phases are preserved (a bin dead on one side borrows
    the other channel's phase so synthesized content stays coherent).
    Bins at or above `cutoff_hz` are untouched. Per-bin gains on live bins
    are clamped to +/-gain_limit_db.
    """
    fft_size = target.fft_size
    hop = fft_size // 2 if hop is None else hop
    s_left, s_right = stft_stereo(w, fft_size, hop)
    new_left, new_right, phase_left, phase_right = repan_magnitudes(
        s_left.magnitudes, s_right.magnitudes,
        s_left.phases, s_right.phases,
        target.similarity,
        np.fft.rfftfreq(fft_size, d=1.0 / w.sample_rate),
        cutoff_hz, gain_limit_db,
    )
    out_left = Spectrogram(new_left, phase_left, fft_size, hop, w.sample_rate,
                           num_samples=w.num_samples)
    out_right = Spectrogram(new_right, phase_right, fft_size, hop, w.sample_rate,
                            num_samples=w.num_samples)
    return StereoWaveform(istft(out_left), istft(out_right), w.sample_rate)


def repan_magnitudes(left, right, phase_left, phase_right, similarity,
                     bin_freqs, cutoff_hz, gain_limit_db=12.0):
    """Spectrogram-domain core of repan(); returns new magnitudes/phases.

    Implements the gain-ratio rule new_ch = (target_gain/gain) * mag_ch
    through the equivalent stable form new_ch = target_gain * (L + R):
    with a linear panning law the estimated gains satisfy
    gain_ch = mag_ch / (L + R) exactly, so both forms agree wherever the
    ratio is finite, and the stable form also fills bins whose weak side
    is silent (hard-panned content being re-centered).
    """
    total = left + right
    ratio_t = _weak_to_strong_ratio(similarity)[None, :]
    strong_t = 1.0 / (1.0 + ratio_t)
    weak_t = ratio_t / (1.0 + ratio_t)
    left_dominant = left >= right

    new_left = np.where(left_dominant, strong_t, weak_t) * total
    new_right = np.where(left_dominant, weak_t, strong_t) * total

    # Centered bins (exact tie, psi == 1) have no side to re-pan toward;
    # they stay as they are.
    tie = left == right
    new_left[tie] = left[tie]
    new_right[tie] = right[tie]

    limit = 10.0 ** (gain_limit_db / 20.0)
    live_left = left > DEAD_GAIN * total
    live_right = right > DEAD_GAIN * total
    np.clip(new_left, left / limit, left * limit, where=live_left, out=new_left)
    np.clip(new_right, right / limit, right * limit, where=live_right, out=new_right)

    keep = bin_freqs >= cutoff_hz
    new_left[:, keep] = left[:, keep]
    new_right[:, keep] = right[:, keep]

    new_phase_left = np.where(live_left | tie | keep[None, :], phase_left, phase_right)
    new_phase_right = np.where(live_right | tie | keep[None, :], phase_right, phase_left)
    return new_left, new_right, new_phase_left, new_phase_right
