"""Send-style reverberation augmentation with RT60-filtered IR pools.

A copy of the stem is shelved (-30 dB below ~500-700 Hz and above
~7-10 kHz), convolved with a randomly drawn impulse response, and summed
back with the dry signal. Pools are selected by RT60 estimated via
Schroeder backward integration.
"""

import numpy as np

from mixnorm import StereoWaveform, StemSet, augment_reverb, estimate_rt60
from mixnorm.reverb import ImpulseResponseEntry

SR = 44100
rng = np.random.default_rng(4)


def synthetic_ir(rt60: float) -> ImpulseResponseEntry:
    n = int(1.3 * rt60 * SR)
    t = np.arange(n) / SR
    tail = rng.standard_normal((2, n)) * 10 ** (-3 * t / rt60) * 0.01
    tail[:, 0] += 0.8  # direct path
    ir = StereoWaveform(tail[0], tail[1], SR)
    return ImpulseResponseEntry(ir, estimate_rt60(ir), name=f"ir_{rt60:.1f}s")


library = [synthetic_ir(rt) for rt in (2.2, 2.8, 3.4, 1.1, 1.4)]
print("impulse response pool:")
for entry in library:
    print(f"  {entry.name}: estimated RT60 = {entry.rt60:.2f} s")

stems = {}
for name in ("vocals", "drums", "bass", "other"):
    x = rng.standard_normal(3 * SR) * 0.05
    stems[name] = StereoWaveform(x, x.copy(), SR)
song = StemSet(stems, "demo_song")

augmented, manifest = augment_reverb(song, library, mode="inference", seed=42)
print("\ninference-mode augmentation (pre-reverb from the short-RT pool, "
      "then the long-RT send):")
for stem_type, sends in manifest.items():
    for send in sends:
        print(f"  {stem_type:7s} {send['stage']:10s} ir={send['ir']} "
              f"lowshelf={send['low_shelf_cutoff_hz']:.0f} Hz "
              f"highshelf={send['high_shelf_cutoff_hz']:.0f} Hz")

for stem_type in ("vocals", "drums"):
    energy_in = np.sum(song.stems[stem_type].channels() ** 2)
    energy_out = np.sum(augmented.stems[stem_type].channels() ** 2)
    print(f"{stem_type:7s} energy ratio out/in = {energy_out / energy_in:.3f}"
          + ("  (untouched)" if stem_type == "drums" else ""))
