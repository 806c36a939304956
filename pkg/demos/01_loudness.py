"""Integrated loudness: measuring, averaging, and normalizing stems.

The meter is the gated broadcast measure (K-weighting, 400 ms blocks at
75% overlap, absolute then relative gate). A full-scale 997 Hz sine in a
single channel reads -3.01 LUFS; putting the same tone in both channels
doubles the energy and reads 3 dB higher.
"""

import numpy as np

from mixnorm import StereoWaveform, average_stem_loudness, integrated_loudness, normalize_loudness

SR = 44100

t = np.arange(5 * SR) / SR
tone = np.sin(2 * np.pi * 997.0 * t)

single = StereoWaveform(tone, np.zeros_like(tone))
dual = StereoWaveform(tone, tone)
print("997 Hz full-scale sine, left channel only :",
      f"{integrated_loudness(single).integrated_lufs:7.2f} LUFS")
print("997 Hz full-scale sine, both channels     :",
      f"{integrated_loudness(dual).integrated_lufs:7.2f} LUFS")

# a small "corpus" of stems at different levels
rng = np.random.default_rng(0)
stems = []
for target in (-16.0, -22.0, -28.0):
    x = rng.standard_normal(2 * SR) * 0.1
    stems.append(normalize_loudness(StereoWaveform(x, x.copy()), target))
average = average_stem_loudness(stems)
print(f"\nper-type average of three stems at -16/-22/-28: {average:7.2f} LUFS")

# normalize a quiet stem to that average and verify
quiet = StereoWaveform(rng.standard_normal(2 * SR) * 0.003,
                       rng.standard_normal(2 * SR) * 0.003)
print(f"quiet stem before: {integrated_loudness(quiet).integrated_lufs:7.2f} LUFS")
normalized = normalize_loudness(quiet, average)
print(f"quiet stem after : {integrated_loudness(normalized).integrated_lufs:7.2f} LUFS "
      f"(target {average:.2f})")

# silence is reported as a sentinel and passes through normalization
silent = StereoWaveform.silence(2 * SR)
print(f"\nsilence is_silent={integrated_loudness(silent).is_silent}, "
      f"normalization leaves it untouched: "
      f"{normalize_loudness(silent, average) is silent}")
