"""Core audio primitives: waveform/spectrogram containers, STFT, WAV I/O.

Everything downstream (loudness, EQ, panning, dynamics, reverb) works on
these types. Audio buffers are stored as float32; all transforms and
feature accumulation run in float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft
from numpy.lib.stride_tricks import sliding_window_view
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import DataError

STEM_TYPES = ("vocals", "drums", "bass", "other")
DEFAULT_SAMPLE_RATE = 44100
DB_FLOOR = -120.0


def db_to_linear(db):
    """Convert decibels to a linear amplitude factor."""
    return 10.0 ** (db / 20.0)


def linear_to_db(x, floor_db: float = DB_FLOOR):
    """Convert linear amplitude to dB, clamped at `floor_db` (inverse of
    db_to_linear above the floor)."""
    floor_lin = 10.0 ** (floor_db / 20.0)
    return 20.0 * np.log10(np.maximum(np.abs(x), floor_lin))


@dataclass
class StereoWaveform:
    """Time-domain stereo audio, the common currency of the toolkit.

    Channels always have equal length, samples are finite, and mono
    sources are represented by duplicating the channel.
    """

    left: np.ndarray
    right: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.left = np.ascontiguousarray(self.left, dtype=np.float32)
        self.right = np.ascontiguousarray(self.right, dtype=np.float32)
        if self.left.ndim != 1 or self.right.ndim != 1:
            raise DataError("waveform channels must be 1-D")
        if self.left.shape != self.right.shape:
            raise DataError(
                f"channel length mismatch: {self.left.size} vs {self.right.size}"
            )
        if self.sample_rate <= 0:
            raise DataError(f"sample rate must be positive, got {self.sample_rate}")
        if not (np.all(np.isfinite(self.left)) and np.all(np.isfinite(self.right))):
            raise DataError("waveform contains NaN or Inf samples")

    @property
    def num_samples(self) -> int:
        return self.left.size

    @property
    def duration(self) -> float:
        return self.left.size / self.sample_rate

    def channels(self) -> np.ndarray:
        """Return a (2, N) float64 view for DSP work."""
        return np.stack([self.left, self.right]).astype(np.float64)

    def peak(self) -> float:
        if self.num_samples == 0:
            return 0.0
        return float(max(np.max(np.abs(self.left)), np.max(np.abs(self.right))))

    def scaled(self, gain: float) -> "StereoWaveform":
        """Apply one scalar gain to both channels."""
        return StereoWaveform(self.left * gain, self.right * gain, self.sample_rate)

    @classmethod
    def from_channels(cls, data: np.ndarray, sample_rate: int) -> "StereoWaveform":
        """Build from a (2, N) array."""
        return cls(data[0], data[1], sample_rate)

    @classmethod
    def silence(cls, num_samples: int, sample_rate: int = DEFAULT_SAMPLE_RATE):
        z = np.zeros(num_samples, dtype=np.float32)
        return cls(z, z.copy(), sample_rate)


@dataclass
class Spectrogram:
    """Magnitude/phase STFT frames. Frame t is centered at sample t*hop."""

    magnitudes: np.ndarray  # (frames, bins), linear magnitude
    phases: np.ndarray      # (frames, bins), radians
    fft_size: int
    hop: int
    sample_rate: int
    num_samples: int | None = None  # original signal length, for exact istft

    def __post_init__(self):
        self.magnitudes = np.asarray(self.magnitudes, dtype=np.float64)
        self.phases = np.asarray(self.phases, dtype=np.float64)
        if self.magnitudes.shape != self.phases.shape:
            raise DataError("magnitude/phase shape mismatch")
        bins = self.fft_size // 2 + 1
        if self.magnitudes.ndim != 2 or self.magnitudes.shape[1] != bins:
            raise DataError(
                f"expected {bins} bins for fft_size {self.fft_size}, "
                f"got shape {self.magnitudes.shape}"
            )
        if self.magnitudes.size and self.magnitudes.min() < 0:
            raise DataError("spectrogram magnitudes must be nonnegative")

    @property
    def num_frames(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def num_bins(self) -> int:
        return self.magnitudes.shape[1]

    def bin_frequencies(self) -> np.ndarray:
        return np.fft.rfftfreq(self.fft_size, d=1.0 / self.sample_rate)

    def complex(self) -> np.ndarray:
        return self.magnitudes * np.exp(1j * self.phases)


@dataclass
class StemSet:
    """All stems of one song, equal length and sample rate.

    Shorter stems are padded with trailing silence on construction.
    """

    stems: dict[str, StereoWaveform]
    song_id: str = ""

    def __post_init__(self):
        if not self.stems:
            raise DataError("StemSet needs at least one stem")
        rates = {w.sample_rate for w in self.stems.values()}
        if len(rates) > 1:
            raise DataError(f"stems disagree on sample rate: {sorted(rates)}")
        target = max(w.num_samples for w in self.stems.values())
        for k, w in self.stems.items():
            if w.num_samples < target:
                pad = target - w.num_samples
                self.stems[k] = StereoWaveform(
                    np.pad(w.left, (0, pad)), np.pad(w.right, (0, pad)), w.sample_rate
                )

    @property
    def sample_rate(self) -> int:
        return next(iter(self.stems.values())).sample_rate

    @property
    def num_samples(self) -> int:
        return next(iter(self.stems.values())).num_samples

    def types(self) -> list[str]:
        return sorted(self.stems)


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window (satisfies COLA at hops n/2, n/4, ...)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(x: np.ndarray, fft_size: int, hop: int,
         sample_rate: int = DEFAULT_SAMPLE_RATE) -> Spectrogram:
    """STFT of a single channel with a periodic Hann window.

    The signal is center-padded by fft_size/2 so frame t is centered at
    sample t*hop; frames cover the whole signal.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DataError("stft expects a single channel")
    if x.size == 0:
        raise DataError("empty signal")
    if fft_size < 2 or fft_size & (fft_size - 1):
        raise DataError(f"fft_size must be a power of two, got {fft_size}")
    if not 1 <= hop <= fft_size:
        raise DataError(f"hop must be in [1, fft_size], got {hop}")

    window = hann_window(fft_size)
    num_frames = x.size // hop + 1
    pad_left = fft_size // 2
    total = (num_frames - 1) * hop + fft_size
    padded = np.zeros(total, dtype=np.float64)
    padded[pad_left:pad_left + x.size] = x
    frames = sliding_window_view(padded, fft_size)[::hop][:num_frames]
    spectra = scipy.fft.rfft(frames * window, axis=1)
    return Spectrogram(
        magnitudes=np.abs(spectra),
        phases=np.angle(spectra),
        fft_size=fft_size,
        hop=hop,
        sample_rate=sample_rate,
        num_samples=x.size,
    )


def istft(spec: Spectrogram, length: int | None = None) -> np.ndarray:
    """Inverse STFT by weighted overlap-add; exact inverse of stft().

    `length` overrides the stored original signal length.
    """
    if length is None:
        length = spec.num_samples
    if length is None:
        raise DataError("istft needs a target length (none stored in spectrogram)")
    fft_size, hop = spec.fft_size, spec.hop
    window = hann_window(fft_size)
    frames = scipy.fft.irfft(spec.complex(), n=fft_size, axis=1)
    total = (spec.num_frames - 1) * hop + fft_size
    out = np.zeros(total, dtype=np.float64)
    norm = np.zeros(total, dtype=np.float64)
    wsq = window * window
    for m in range(spec.num_frames):
        start = m * hop
        out[start:start + fft_size] += frames[m] * window
        norm[start:start + fft_size] += wsq
    nonzero = norm > 1e-12
    out[nonzero] /= norm[nonzero]
    pad_left = fft_size // 2
    if pad_left + length > total:
        raise DataError("spectrogram too short for requested length")
    return out[pad_left:pad_left + length]


def stft_stereo(w: StereoWaveform, fft_size: int, hop: int) -> tuple[Spectrogram, Spectrogram]:
    return (
        stft(w.left, fft_size, hop, w.sample_rate),
        stft(w.right, fft_size, hop, w.sample_rate),
    )


# --- WAV I/O ----------------------------------------------------------------
#
# Reading goes through scipy (PCM 8/16/24/32-bit and IEEE float); writing is
# a small RIFF writer so 24-bit PCM is supported and float32 round trips are
# bit-exact. Dataset layout convention:
#   <root>/<song_id>/{vocals,drums,bass,other,mixture}.wav

_INT_SCALES = {np.dtype(np.int16): 2 ** 15, np.dtype(np.int32): 2 ** 31}


def read_audio(path, expected_sample_rate: int | None = None,
               resample: bool = False) -> StereoWaveform:
    """Read a WAV file into a StereoWaveform.

    Mono files are duplicated to both channels. Integer PCM is scaled to
    [-1, 1]. A sample-rate mismatch with `expected_sample_rate` is an error
    unless `resample` is set (linear-phase polyphase resampling).
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"audio file not found: {path}")
    try:
        rate, data = wavfile.read(str(path))
    except ValueError as exc:
        raise DataError(
            f"unsupported audio file {path}: {exc}; "
            "supported formats: WAV PCM 16/24/32-bit, IEEE float 32/64-bit"
        ) from exc
    if data.dtype == np.uint8:
        data = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype in _INT_SCALES:
        data = data.astype(np.float64) / _INT_SCALES[data.dtype]
    else:
        data = data.astype(np.float64)
    if data.ndim == 1:
        left = right = data
    elif data.shape[1] == 1:
        left = right = data[:, 0]
    elif data.shape[1] == 2:
        left, right = data[:, 0], data[:, 1]
    else:
        raise DataError(f"{path}: expected mono or stereo, got {data.shape[1]} channels")
    if expected_sample_rate is not None and rate != expected_sample_rate:
        if not resample:
            raise DataError(
                f"{path}: sample rate {rate} Hz does not match session rate "
                f"{expected_sample_rate} Hz (enable --resample to convert)"
            )
        g = np.gcd(rate, expected_sample_rate)
        left = resample_poly(left, expected_sample_rate // g, rate // g)
        right = resample_poly(right, expected_sample_rate // g, rate // g)
        rate = expected_sample_rate
    return StereoWaveform(left.copy(), right.copy(), int(rate))


def write_audio(path, w: StereoWaveform, bit_depth: int = 32) -> None:
    """Write a stereo WAV. bit_depth 16/24 = integer PCM, 32 = IEEE float."""
    if bit_depth not in (16, 24, 32):
        raise DataError(f"unsupported bit depth {bit_depth}; use 16, 24 or 32")
    interleaved = np.empty((w.num_samples, 2), dtype=np.float64)
    interleaved[:, 0] = w.left
    interleaved[:, 1] = w.right

    if bit_depth == 32:
        payload = interleaved.astype(np.float32).tobytes()
        fmt_tag, bits = 3, 32
    else:
        scale = 2.0 ** (bit_depth - 1)
        ints = np.clip(np.rint(interleaved * scale), -scale, scale - 1).astype(np.int32)
        if bit_depth == 16:
            payload = ints.astype("<i2").tobytes()
        else:
            as_bytes = ints.astype("<i4").view(np.uint8).reshape(-1, 4)
            payload = as_bytes[:, :3].tobytes()
        fmt_tag, bits = 1, bit_depth

    block_align = 2 * bits // 8
    byte_rate = w.sample_rate * block_align
    fmt = struct.pack("<HHIIHH", fmt_tag, 2, w.sample_rate, byte_rate, block_align, bits)
    chunks = b"fmt " + struct.pack("<I", len(fmt)) + fmt
    if fmt_tag == 3:
        chunks += b"fact" + struct.pack("<II", 4, w.num_samples)
    chunks += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) % 2:
        chunks += b"\x00"
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks)
