"""End to end: analyze a tiny corpus, normalize a song, verify the result.

Analysis is progressive (each stage's average is computed on stems
already normalized by the previous stages) in the order EQ -> DRC ->
panning -> loudness; normalization then applies reverb augmentation
followed by the four stages against the saved profiles.
"""

import tempfile
from pathlib import Path

import numpy as np

from mixnorm import (
    PipelineConfig,
    StereoWaveform,
    StemSet,
    analyze_corpus,
    integrated_loudness,
    normalize_song,
    save_profile,
    write_audio,
)
from mixnorm.core import stft_stereo
from mixnorm.panning import panning_spectrum

SR = 44100
rng = np.random.default_rng(5)


def tiny_song(song_id: str, level_db: float, pan: float) -> StemSet:
    gain = 10 ** (level_db / 20)
    n = 3 * SR

    def stereo(x, alpha=0.5):
        return StereoWaveform((1 - alpha) * x, alpha * x, SR)

    vocals = stereo(rng.standard_normal(n) * 0.1 * gain, pan)
    drums = np.zeros(n)
    for i in range(6):
        start = int((0.3 + 0.45 * i) * SR)
        burst = rng.standard_normal(1100) * np.exp(-np.arange(1100) / 180.0)
        drums[start:start + 1100] += burst * (0.25 / np.abs(burst).max())
    drums = stereo(drums + rng.standard_normal(n) * 0.002)
    bass = stereo(np.sin(2 * np.pi * 82.0 * np.arange(n) / SR) * 0.2 * gain)
    other = stereo(rng.standard_normal(n) * 0.05 * gain, 1.0 - pan)
    return StemSet({"vocals": vocals, "drums": drums, "bass": bass, "other": other},
                   song_id)


songs = {
    "alpha": tiny_song("alpha", level_db=0.0, pan=0.35),
    "beta": tiny_song("beta", level_db=-9.0, pan=0.55),
    "gamma": tiny_song("gamma", level_db=-4.0, pan=0.5),
}

root = Path(tempfile.mkdtemp(prefix="mixnorm_demo_")) / "corpus"
for song_id, stems in songs.items():
    song_dir = root / song_id
    song_dir.mkdir(parents=True)
    for stem_type, w in stems.stems.items():
        write_audio(song_dir / f"{stem_type}.wav", w, bit_depth=32)

cfg = PipelineConfig()
profiles = analyze_corpus(root, cfg)
print("profiles:")
for stem_type, profile in profiles.items():
    mu = "n/a" if profile.peak_mu is None else f"{profile.peak_mu:6.1f} dB"
    print(f"  {stem_type:7s} L={profile.loudness_avg:7.2f} LUFS   P_mu={mu}")
    save_profile(profile, root.parent / f"{stem_type}.json")

result = normalize_song(songs["beta"], profiles, cfg, skip={"reverb"})
print("\nsong 'beta' after normalization:")
for stem_type, w in result.stems.stems.items():
    lufs = integrated_loudness(w).integrated_lufs
    ps = panning_spectrum(*stft_stereo(w, cfg.panning.fft_size, cfg.panning.hop))
    pan_err = np.abs(ps.psi.mean(axis=0) - profiles[stem_type].panning_avg.similarity).mean()
    print(f"  {stem_type:7s} loudness {lufs:7.2f} LUFS "
          f"(target {profiles[stem_type].loudness_avg:7.2f}); "
          f"panning error {pan_err:.3f}")
print(f"\nmanifest for vocals: {result.manifest['stems']['vocals']}")
