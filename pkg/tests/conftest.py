"""Shared synthesis helpers and the three-song fixture corpus."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.signal import lfilter

from mixnorm.core import StemSet, StereoWaveform, write_audio
from mixnorm.reverb import ImpulseResponseEntry

SR = 44100


def sine(freq: float, duration: float, sr: int = SR, amplitude: float = 1.0,
         phase: float = 0.0) -> np.ndarray:
    t = np.arange(int(round(duration * sr))) / sr
    return amplitude * np.sin(2.0 * np.pi * freq * t + phase)


def noise(rng: np.random.Generator, duration: float, sr: int = SR,
          amplitude: float = 0.1) -> np.ndarray:
    return amplitude * rng.standard_normal(int(round(duration * sr)))


def dyadic_noise(rng: np.random.Generator, n: int) -> np.ndarray:
    """Noise quantized so scaling by k/4 stays exact in float32."""
    return np.round(rng.standard_normal(n) * 2 ** 17) * 2.0 ** -22


def panned(source: np.ndarray, alpha: float, sr: int = SR) -> StereoWaveform:
    """Linear panning law: left gain 1-alpha, right gain alpha."""
    return StereoWaveform((1.0 - alpha) * source, alpha * source, sr)


def peaking_biquad(gain_db: float, f0: float, q: float, sr: int = SR):
    a_lin = 10.0 ** (gain_db / 40.0)
    w0 = 2.0 * np.pi * f0 / sr
    alpha = np.sin(w0) / (2.0 * q)
    b = np.array([1 + alpha * a_lin, -2 * np.cos(w0), 1 - alpha * a_lin])
    a = np.array([1 + alpha / a_lin, -2 * np.cos(w0), 1 - alpha / a_lin])
    return b / a[0], a / a[0]


def burst_train(rng: np.random.Generator, duration: float, spacing_s: float,
                peak_dbs, sr: int = SR, burst_ms: float = 25.0,
                start_s: float = 0.25) -> np.ndarray:
    """Decaying noise bursts with controlled peak levels: drum-like stems."""
    n = int(round(duration * sr))
    x = np.zeros(n)
    burst_n = int(burst_ms * 1e-3 * sr)
    envelope = np.exp(-np.arange(burst_n) / (0.004 * sr))
    t = start_s
    i = 0
    while t + burst_ms * 1e-3 < duration:
        start = int(t * sr)
        shape = rng.standard_normal(burst_n) * envelope
        peak = np.abs(shape).max()
        level = 10.0 ** (peak_dbs[i % len(peak_dbs)] / 20.0)
        x[start:start + burst_n] += shape * (level / peak)
        t += spacing_s
        i += 1
    return x


def exponential_ir(rng: np.random.Generator, rt60: float, sr: int = SR,
                   duration: float | None = None, direct: float = 0.0,
                   tail_level: float = 0.05) -> np.ndarray | StereoWaveform:
    """Decaying-noise impulse response with a known RT60.

    `direct` adds a direct-path impulse at t=0 (realistic room IRs are not
    pure tails).
    """
    duration = duration if duration is not None else rt60 * 1.3
    n = int(round(duration * sr))
    t = np.arange(n) / sr
    envelope = 10.0 ** (-3.0 * t / rt60)
    channels = rng.standard_normal((2, n)) * envelope * tail_level
    channels[:, 0] += direct
    return StereoWaveform(channels[0], channels[1], sr)


def make_ir_library(seed: int = 99, sr: int = SR) -> list[ImpulseResponseEntry]:
    """Synthetic IRs covering both pools: long RT60 for training, short for
    pre-reverb. A strong direct path keeps the wet tail at a realistic
    level relative to the dry signal."""
    rng = np.random.default_rng(seed)
    entries = []
    for i, rt in enumerate((2.2, 2.8, 3.5, 1.1, 1.3)):
        ir = exponential_ir(rng, rt, sr, direct=0.8, tail_level=0.01)
        entries.append(ImpulseResponseEntry(ir, rt, name=f"synthetic_{i}_{rt:.1f}s"))
    return entries


# --- Fixture corpus -----------------------------------------------------------
#
# Three six-second songs with distinct loudness, EQ tilt, panning and
# transient character, so every normalization stage has real work to do.

SONG_SPECS = {
    "song01": dict(level_db=0.0, tilt=("dark", 3000.0), vocal_alpha=0.42,
                   other_alpha=0.34, drum_peaks=(-12.0, -13.5, -14.5, -13.0)),
    "song02": dict(level_db=-8.0, tilt=("thin", 300.0), vocal_alpha=0.5,
                   other_alpha=0.60, drum_peaks=(-11.0, -11.2, -11.4, -11.1)),
    "song03": dict(level_db=-4.0, tilt=(None, 0.0), vocal_alpha=0.57,
                   other_alpha=0.45, drum_peaks=(-10.5, -15.5, -16.0, -15.2, -16.4)),
}


def _tilted(x: np.ndarray, kind: str | None, cutoff: float, sr: int) -> np.ndarray:
    """Bounded shelf coloration (-8 dB) above or below the cutoff."""
    if kind is None:
        return x
    from mixnorm.reverb import _shelf_coefficients

    b, a = _shelf_coefficients(-8.0, cutoff, sr, high=(kind == "dark"))
    return lfilter(b, a, x)


def _fade(x: np.ndarray, sr: int, fade_s: float = 0.08) -> np.ndarray:
    n = int(fade_s * sr)
    x = x.copy()
    ramp = np.linspace(0.0, 1.0, n)
    x[:n] *= ramp
    x[-n:] *= ramp[::-1]
    return x


def synth_song(song_id: str, duration: float = 6.0, sr: int = SR) -> StemSet:
    spec = SONG_SPECS[song_id]
    rng = np.random.default_rng(int.from_bytes(song_id.encode(), "little") % 2 ** 32)
    n = int(duration * sr)
    gain = 10.0 ** (spec["level_db"] / 20.0)

    syllables = 0.5 + 0.5 * np.sin(2.0 * np.pi * 2.7 * np.arange(n) / sr) ** 2
    vocal_src = noise(rng, duration, sr, 0.15) * syllables
    b, a = peaking_biquad(8.0, 800.0, 0.8, sr)
    vocal_src = lfilter(b, a, vocal_src)
    vocal_src = _tilted(vocal_src, *spec["tilt"], sr)
    vocals = panned(_fade(vocal_src * gain, sr), spec["vocal_alpha"], sr)

    # drums dead-center (dual mono) so re-panning is exactly transparent
    # and the DRC bound survives re-analysis unperturbed
    drums_src = burst_train(rng, duration, 0.4, spec["drum_peaks"], sr)
    drums_src = _fade(drums_src + noise(rng, duration, sr, 0.002), sr)
    drums = panned(drums_src * min(1.0, gain * 1.2), 0.5, sr)

    bass_gate = (np.sin(2.0 * np.pi * 1.0 * np.arange(n) / sr) > -0.4).astype(float)
    bass_gate = lfilter([0.001], [1.0, -0.999], bass_gate)
    bass_src = (sine(82.0, duration, sr, 0.4) + sine(164.0, duration, sr, 0.1)) * bass_gate
    bass = panned(_fade(bass_src * gain + noise(rng, duration, sr, 0.001), sr), 0.5, sr)

    chord = sum(sine(f, duration, sr, 0.04, phase=rng.uniform(0, 6.28))
                for f in (220.0, 277.2, 329.6, 440.0))
    other_src = _tilted(chord + noise(rng, duration, sr, 0.06), *spec["tilt"], sr)
    other = panned(_fade(other_src * gain, sr), spec["other_alpha"], sr)

    return StemSet(
        {"vocals": vocals, "drums": drums, "bass": bass, "other": other}, song_id
    )


def write_corpus(root, songs: dict[str, StemSet], with_mixture: bool = False) -> None:
    for song_id, stems in songs.items():
        song_dir = root / song_id
        song_dir.mkdir(parents=True, exist_ok=True)
        for stem_type, w in stems.stems.items():
            write_audio(song_dir / f"{stem_type}.wav", w, bit_depth=32)
        if with_mixture:
            mix = np.sum([w.channels() for w in stems.stems.values()], axis=0)
            write_audio(song_dir / "mixture.wav",
                        StereoWaveform(mix[0], mix[1], stems.sample_rate), 32)


@pytest.fixture(scope="session")
def fixture_songs() -> dict[str, StemSet]:
    return {song_id: synth_song(song_id) for song_id in SONG_SPECS}


@pytest.fixture(scope="session")
def fixture_corpus_dir(tmp_path_factory, fixture_songs):
    root = tmp_path_factory.mktemp("corpus")
    write_corpus(root, fixture_songs)
    return root


@pytest.fixture(scope="session")
def ir_library():
    return make_ir_library()


@pytest.fixture(scope="session")
def fixture_profiles(fixture_corpus_dir):
    from mixnorm import PipelineConfig, analyze_corpus

    return analyze_corpus(fixture_corpus_dir, PipelineConfig())
