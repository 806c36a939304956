"""Stochastic send-style reverberation augmentation.

A copy of the stem is shelved (lows and highs cut by a fixed -30 dB),
convolved with a sampled impulse response, and summed back with the dry
signal. Impulse-response pools are selected by RT60, estimated with
Schroeder backward integration.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve, lfilter

from .core import StemSet, StereoWaveform, read_audio
from .errors import DataError

log = logging.getLogger(__name__)

SHELF_Q = 0.7071
ELIGIBLE_STEMS = ("vocals", "other")


@dataclass
class ImpulseResponseEntry:
    audio: StereoWaveform
    rt60: float
    name: str = ""

    def __post_init__(self):
        if not self.rt60 > 0.0:
            raise DataError(f"impulse response RT60 must be positive, got {self.rt60}")


@dataclass
class ReverbSendConfig:
    """Shelf cutoffs and level of one send; cutoffs are normally sampled
    uniformly from the configured ranges."""

    low_shelf_cutoff: float
    high_shelf_cutoff: float
    shelf_gain_db: float = -30.0
    wet_gain: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.low_shelf_cutoff < self.high_shelf_cutoff:
            raise DataError("low shelf cutoff must lie below the high shelf cutoff")


def estimate_rt60(ir: StereoWaveform, fit_range_db: tuple = (-5.0, -35.0)) -> float:
    """RT60 from the Schroeder energy decay curve.

    A line is fit to the decay between -5 and -35 dB and extrapolated to
    -60 dB. Level-invariant by construction.
    """
    if ir.duration < 0.1:
        raise DataError("impulse response shorter than 0.1 s")
    energy = (ir.channels() ** 2).mean(axis=0)
    edc = np.cumsum(energy[::-1])[::-1]
    if edc[0] <= 0.0:
        raise DataError("impulse response is silent")
    edc_db = 10.0 * np.log10(np.maximum(edc / edc[0], 1e-30))
    hi, lo = fit_range_db
    start = int(np.argmax(edc_db <= hi))
    stop = int(np.argmax(edc_db <= lo))
    if edc_db[start] > hi or edc_db[stop] > lo:
        raise DataError("IR too short for RT estimation: decay never reaches fit range")
    if (stop - start) < 0.05 * ir.sample_rate:
        raise DataError("IR too short for RT estimation: decay segment under 50 ms")
    t = np.arange(start, stop) / ir.sample_rate
    slope, _ = np.polyfit(t, edc_db[start:stop], 1)
    if slope >= 0.0:
        raise DataError("IR energy does not decay; cannot estimate RT60")
    return float(-60.0 / slope)


def _shelf_coefficients(gain_db: float, f0: float, sample_rate: int,
                        high: bool) -> tuple[np.ndarray, np.ndarray]:
    # RBJ audio-EQ-cookbook shelving biquad.
    a = 10.0 ** (gain_db / 40.0)
    w0 = 2.0 * np.pi * f0 / sample_rate
    cw, sw = np.cos(w0), np.sin(w0)
    alpha = sw / (2.0 * SHELF_Q)
    two_rt_a_alpha = 2.0 * np.sqrt(a) * alpha
    if high:
        b0 = a * ((a + 1) + (a - 1) * cw + two_rt_a_alpha)
        b1 = -2 * a * ((a - 1) + (a + 1) * cw)
        b2 = a * ((a + 1) + (a - 1) * cw - two_rt_a_alpha)
        a0 = (a + 1) - (a - 1) * cw + two_rt_a_alpha
        a1 = 2 * ((a - 1) - (a + 1) * cw)
        a2 = (a + 1) - (a - 1) * cw - two_rt_a_alpha
    else:
        b0 = a * ((a + 1) - (a - 1) * cw + two_rt_a_alpha)
        b1 = 2 * a * ((a - 1) - (a + 1) * cw)
        b2 = a * ((a + 1) - (a - 1) * cw - two_rt_a_alpha)
        a0 = (a + 1) + (a - 1) * cw + two_rt_a_alpha
        a1 = -2 * ((a - 1) + (a + 1) * cw)
        a2 = (a + 1) + (a - 1) * cw - two_rt_a_alpha
    return np.array([b0, b1, b2]) / a0, np.array([1.0, a1 / a0, a2 / a0])


def shelf_chain(w: StereoWaveform, cfg: ReverbSendConfig) -> StereoWaveform:
    """Cut lows below the low cutoff and highs above the high cutoff."""
    low_b, low_a = _shelf_coefficients(cfg.shelf_gain_db, cfg.low_shelf_cutoff,
                                       w.sample_rate, high=False)
    high_b, high_a = _shelf_coefficients(cfg.shelf_gain_db, cfg.high_shelf_cutoff,
                                         w.sample_rate, high=True)
    channels = w.channels()
    channels = lfilter(low_b, low_a, channels, axis=1)
    channels = lfilter(high_b, high_a, channels, axis=1)
    return StereoWaveform.from_channels(channels, w.sample_rate)


def reverb_send(w: StereoWaveform, ir: ImpulseResponseEntry,
                cfg: ReverbSendConfig) -> StereoWaveform:
    """Dry signal plus a shelved, convolved, wet-gain-scaled copy.

    Output is trimmed to the input length; a single safety gain is applied
    if the sum would clip.
    """
    if cfg.wet_gain == 0.0:
        return w
    if ir.audio.sample_rate != w.sample_rate:
        raise DataError(
            f"impulse response rate {ir.audio.sample_rate} Hz does not match "
            f"stem rate {w.sample_rate} Hz"
        )
    shelved = shelf_chain(w, cfg)
    wet = np.stack([
        fftconvolve(shelved.left.astype(np.float64), ir.audio.left.astype(np.float64))[:w.num_samples],
        fftconvolve(shelved.right.astype(np.float64), ir.audio.right.astype(np.float64))[:w.num_samples],
    ])
    out = w.channels() + cfg.wet_gain * wet
    peak = np.max(np.abs(out), initial=0.0)
    if peak > 1.0:
        out /= peak
    return StereoWaveform.from_channels(out, w.sample_rate)


def stem_rng(seed: int, song_id: str, stem_type: str, stage: str) -> np.random.Generator:
    """Independent, reproducible RNG stream per (seed, song, stem, stage).

    Derived via a stable hash so corpus-level parallelism cannot reorder
    draws.
    """
    digest = hashlib.sha256(f"{song_id}|{stem_type}|{stage}".encode()).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *words]))


def sample_send_config(rng: np.random.Generator,
                       low_shelf_hz: tuple = (500.0, 700.0),
                       high_shelf_hz: tuple = (7000.0, 10000.0),
                       shelf_gain_db: float = -30.0,
                       wet_gain: float = 1.0,
                       seed: int = 0) -> ReverbSendConfig:
    return ReverbSendConfig(
        low_shelf_cutoff=float(rng.uniform(*low_shelf_hz)),
        high_shelf_cutoff=float(rng.uniform(*high_shelf_hz)),
        shelf_gain_db=shelf_gain_db,
        wet_gain=wet_gain,
        seed=seed,
    )


def _pool(library: list[ImpulseResponseEntry], rt_range: tuple) -> list[ImpulseResponseEntry]:
    lo, hi = rt_range
    pool = [e for e in library if lo <= e.rt60 <= hi]
    if not pool:
        raise DataError(
            f"no impulse responses with RT60 in [{lo:g}, {hi:g}] s in the library"
        )
    return pool


def augment_reverb(stems: StemSet, library: list[ImpulseResponseEntry],
                   mode: str, seed: int,
                   wet_gain: float = 1.0,
                   train_rt60_s: tuple = (2.0, 4.0),
                   pre_reverb_rt60_s: tuple = (1.0, 1.5),
                   low_shelf_hz: tuple = (500.0, 700.0),
                   high_shelf_hz: tuple = (7000.0, 10000.0),
                   shelf_gain_db: float = -30.0,
                   eligible: tuple = ELIGIBLE_STEMS) -> tuple[StemSet, dict]:
    """Add send reverb to the eligible stems of one song.

    train mode: one random long-RT60 IR and sampled shelf cutoffs per
    eligible stem. inference mode: a short-RT60 "pre-reverb" send first,
    then the train-mode send. Other stems pass through bit-identical.
    Returns the new StemSet and a manifest of every sampled choice.
    """
    if mode not in ("train", "inference"):
        raise DataError(f"mode must be 'train' or 'inference', got {mode!r}")
    train_pool = _pool(library, train_rt60_s)
    pre_pool = _pool(library, pre_reverb_rt60_s) if mode == "inference" else None

    out: dict[str, StereoWaveform] = {}
    manifest: dict[str, list] = {}
    for stem_type in sorted(stems.stems):
        w = stems.stems[stem_type]
        if stem_type not in eligible:
            out[stem_type] = w
            continue
        sends = []
        if mode == "inference":
            rng = stem_rng(seed, stems.song_id, stem_type, "pre_reverb")
            index = int(rng.integers(len(pre_pool)))
            cfg = sample_send_config(rng, low_shelf_hz, high_shelf_hz,
                                     shelf_gain_db, wet_gain, seed)
            w = reverb_send(w, pre_pool[index], cfg)
            sends.append(_send_record("pre_reverb", pre_pool[index], cfg))
        rng = stem_rng(seed, stems.song_id, stem_type, "reverb")
        index = int(rng.integers(len(train_pool)))
        cfg = sample_send_config(rng, low_shelf_hz, high_shelf_hz,
                                 shelf_gain_db, wet_gain, seed)
        w = reverb_send(w, train_pool[index], cfg)
        sends.append(_send_record("reverb", train_pool[index], cfg))
        out[stem_type] = w
        manifest[stem_type] = sends
    return StemSet(out, stems.song_id), manifest


def _send_record(stage: str, ir: ImpulseResponseEntry, cfg: ReverbSendConfig) -> dict:
    return {
        "stage": stage,
        "ir": ir.name,
        "ir_rt60_s": round(ir.rt60, 4),
        "low_shelf_cutoff_hz": round(cfg.low_shelf_cutoff, 3),
        "high_shelf_cutoff_hz": round(cfg.high_shelf_cutoff, 3),
        "shelf_gain_db": cfg.shelf_gain_db,
        "wet_gain": cfg.wet_gain,
    }


def load_ir_library(directory, sample_rate: int,
                    use_cache: bool = True) -> list[ImpulseResponseEntry]:
    """Load every WAV in a directory as an impulse response.

    RT60 values are estimated once and cached in a sidecar JSON file keyed
    by file name and size. IRs whose RT60 cannot be estimated are skipped
    with a warning.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"impulse response directory not found: {directory}")
    cache_path = directory / "rt60_cache.json"
    cache = {}
    if use_cache and cache_path.exists():
        try:
            cache = json.loads(cache_path.read_text())
        except (OSError, json.JSONDecodeError):
            cache = {}
    entries = []
    dirty = False
    for path in sorted(directory.glob("*.wav")):
        key = f"{path.name}:{path.stat().st_size}"
        audio = read_audio(path, expected_sample_rate=sample_rate, resample=True)
        if key in cache:
            rt60 = cache[key]
        else:
            try:
                rt60 = estimate_rt60(audio)
            except DataError as exc:
                log.warning("skipping %s: %s", path.name, exc)
                continue
            cache[key] = rt60
            dirty = True
        entries.append(ImpulseResponseEntry(audio, rt60, name=path.name))
    if use_cache and dirty:
        cache_path.write_text(json.dumps(cache, sort_keys=True, indent=1))
    if not entries:
        raise DataError(f"no usable impulse responses in {directory}")
    return entries
