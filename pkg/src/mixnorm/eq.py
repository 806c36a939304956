"""Average-spectrum analysis and EQ matching with a zero-phase FIR.

A stem's long-term magnitude spectrum is matched to a target spectrum by
designing a linear-phase FIR (window method) from the smoothed log-domain
difference and applying it forward-backward to both channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve, firwin2, savgol_filter

from .core import StereoWaveform, stft
from .errors import DataError

SPECTRUM_FLOOR = 1e-10  # keeps logs finite for silent bins


@dataclass
class AverageSpectrum:
    """Long-term average magnitude spectrum on an rfft bin grid."""

    magnitude: np.ndarray  # (bins,), linear, floored strictly positive
    fft_size: int
    sample_rate: int
    stem_type: str | None = None

    def __post_init__(self):
        self.magnitude = np.maximum(
            np.asarray(self.magnitude, dtype=np.float64), SPECTRUM_FLOOR
        )
        bins = self.fft_size // 2 + 1
        if self.magnitude.shape != (bins,):
            raise DataError(
                f"expected {bins} bins for fft_size {self.fft_size}, "
                f"got {self.magnitude.shape}"
            )
        if not np.all(np.isfinite(self.magnitude)):
            raise DataError("average spectrum contains non-finite values")

    def bin_frequencies(self) -> np.ndarray:
        return np.fft.rfftfreq(self.fft_size, d=1.0 / self.sample_rate)


def stem_mean_spectrum(w: StereoWaveform, fft_size: int = 65536,
                       hop: int | None = None,
                       stem_type: str | None = None) -> AverageSpectrum:
    """Frame- and channel-averaged STFT magnitude of one stem."""
    hop = fft_size // 4 if hop is None else hop
    if w.num_samples < fft_size:
        raise DataError(
            f"stem too short for spectrum analysis: need at least "
            f"{fft_size / w.sample_rate:.2f} s ({fft_size} samples), "
            f"got {w.num_samples}"
        )
    acc = np.zeros(fft_size // 2 + 1, dtype=np.float64)
    for channel in (w.left, w.right):
        acc += stft(channel, fft_size, hop, w.sample_rate).magnitudes.mean(axis=0)
    return AverageSpectrum(acc / 2.0, fft_size, w.sample_rate, stem_type)


def corpus_average_spectrum(spectra: list[AverageSpectrum]) -> AverageSpectrum:
    """Bin-wise arithmetic mean of per-stem average spectra."""
    if not spectra:
        raise DataError("cannot average an empty list of spectra")
    first = spectra[0]
    for s in spectra[1:]:
        if s.fft_size != first.fft_size or s.sample_rate != first.sample_rate:
            raise DataError("spectra disagree on fft_size or sample rate")
    stacked = np.stack([s.magnitude for s in spectra])
    types = {s.stem_type for s in spectra}
    return AverageSpectrum(
        stacked.mean(axis=0), first.fft_size, first.sample_rate,
        types.pop() if len(types) == 1 else None,
    )


def design_match_fir(gamma: AverageSpectrum, target: AverageSpectrum,
                     fir_taps: int = 1001, smoothing_window_bins: int = 513,
                     smoothing_order: int = 2, max_gain_db: float = 24.0) -> np.ndarray:
    """Linear-phase FIR whose squared magnitude realizes target/gamma.

    The log-domain difference is Savitzky-Golay smoothed, clamped to
    +/-max_gain_db, square-rooted (forward-backward filtering squares the
    response), and sampled onto a Hann-windowed FIR prototype.
    """
    if gamma.fft_size != target.fft_size or gamma.sample_rate != target.sample_rate:
        raise DataError("stem and target spectra disagree on fft_size or sample rate")
    diff_db = 20.0 * (np.log10(target.magnitude) - np.log10(gamma.magnitude))
    window = min(smoothing_window_bins, diff_db.size)
    if window % 2 == 0:
        window -= 1
    if window > smoothing_order:
        diff_db = savgol_filter(diff_db, window, smoothing_order)
    diff_db = np.clip(diff_db, -max_gain_db, max_gain_db)
    if not np.all(np.isfinite(diff_db)):
        raise DataError("non-finite EQ difference; target spectrum is corrupt")
    amplitude = 10.0 ** (diff_db / 40.0)  # sqrt of the clamped ratio
    grid = np.linspace(0.0, 1.0, diff_db.size)
    return firwin2(fir_taps, grid, amplitude, window="hann")


def filtfilt_fir(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Zero-phase (forward-backward) FIR filtering, length preserving.

    Edge transients are handled by reflect-padding one filter length at
    both ends; the two passes are fused into one FFT convolution with the
    filter's autocorrelation kernel.
    """
    x = np.asarray(x, dtype=np.float64)
    pad = taps.size
    if x.size < 2:
        raise DataError("signal too short for zero-phase filtering")
    pad = min(pad, x.size - 1)
    kernel = np.convolve(taps, taps[::-1])
    padded = np.pad(x, pad, mode="reflect")
    return fftconvolve(padded, kernel, mode="same")[pad:pad + x.size]


def match_eq(w: StereoWaveform, target: AverageSpectrum,
             fir_taps: int = 1001, smoothing_window_bins: int = 513,
             smoothing_order: int = 2, max_gain_db: float = 24.0,
             hop: int | None = None) -> StereoWaveform:
    """EQ-match one stem to a target average spectrum, zero phase.

    Both channels get the identical filter so the stereo image is
    untouched; output length equals input length.
    """
    if w.sample_rate != target.sample_rate:
        raise DataError(
            f"sample-rate mismatch: stem {w.sample_rate} Hz, "
            f"target {target.sample_rate} Hz"
        )
    gamma = stem_mean_spectrum(w, target.fft_size, hop)
    taps = design_match_fir(gamma, target, fir_taps, smoothing_window_bins,
                            smoothing_order, max_gain_db)
    return StereoWaveform(
        filtfilt_fir(w.left, taps),
        filtfilt_fir(w.right, taps),
        w.sample_rate,
    )
