"""Stereo-invariant spectral losses and objective mix metrics.

The losses operate on pre-emphasized (A-weighting + low-pass) sum and
difference signals, so swapping both signals' channels leaves them
unchanged. The metric report covers spectral, panning, dynamic and
loudness features with per-subgroup MAPE against a reference mix.
"""

import numpy as np

from mixnorm import StereoWaveform, mape_report, mix_features, stereo_invariant_loss

SR = 44100
rng = np.random.default_rng(6)

reference = StereoWaveform(rng.standard_normal(3 * SR) * 0.1,
                           rng.standard_normal(3 * SR) * 0.1, SR)
candidate = StereoWaveform(reference.left * 0.7 + rng.standard_normal(3 * SR) * 0.02,
                           reference.right * 0.7 + rng.standard_normal(3 * SR) * 0.02, SR)

for variant in ("a", "b"):
    zero = stereo_invariant_loss(reference, reference, variant)
    loss = stereo_invariant_loss(reference, candidate, variant)
    print(f"variant {variant}: identity loss = {zero.total(variant):.3f}, "
          f"candidate loss = {loss.total(variant):.4f}")

swapped = stereo_invariant_loss(
    StereoWaveform(reference.right, reference.left),
    StereoWaveform(candidate.right, candidate.left), "a")
plain = stereo_invariant_loss(reference, candidate, "a")
print(f"channel-swap difference: {abs(swapped.total_a - plain.total_a):.2e} "
      "(stereo invariance)")

print("\nmix features of the reference:")
report = mix_features(reference)
for name in ("centroid", "bandwidth", "flatness", "rolloff", "panning_rms",
             "rms_level", "crest_factor"):
    print(f"  {name:15s} {report.mean(name):10.3f}")
print(f"  {'loudness':15s} {report.loudness:10.3f} LUFS")

mape = mape_report(candidate, reference).mape_by_group
print("\nMAPE by feature subgroup (fraction, 1.0 = 100%):")
for group, value in mape.items():
    print(f"  {group:9s} {value:.4f}")
