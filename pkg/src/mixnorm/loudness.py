"""Integrated loudness measurement (ITU-R BS.1770 family) and normalization.

The K-weighting pre-filter is re-derived analytically for the session
sample rate instead of hard-coding the 48 kHz coefficient table, so the
meter stays conformant at 44.1 kHz and other rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import sosfilt

from .core import StereoWaveform, db_to_linear
from .errors import DataError

BLOCK_S = 0.400          # gating block length
BLOCK_OVERLAP = 0.75     # 75% overlap -> 100 ms hop
ABSOLUTE_GATE_LUFS = -70.0
RELATIVE_GATE_LU = -10.0
MAX_NORMALIZE_GAIN_DB = 40.0

# Analytic parameters of the BS.1770 pre-filter stages (high shelf + high
# pass), from the sample-rate-independent parameterization of the standard's
# 48 kHz filter tables.
_SHELF_F0 = 1681.9744509555319
_SHELF_GAIN_DB = 3.99984385397
_SHELF_Q = 0.7071752369554193
_SHELF_VB_EXP = 0.499666774155
_HIGHPASS_F0 = 38.13547087613982
_HIGHPASS_Q = 0.5003270373253953


def k_weighting_sos(sample_rate: int) -> np.ndarray:
    """K-weighting filter as second-order sections for any sample rate."""
    k = math.tan(math.pi * _SHELF_F0 / sample_rate)
    vh = 10.0 ** (_SHELF_GAIN_DB / 20.0)
    vb = vh ** _SHELF_VB_EXP
    a0 = 1.0 + k / _SHELF_Q + k * k
    shelf = [
        (vh + vb * k / _SHELF_Q + k * k) / a0,
        2.0 * (k * k - vh) / a0,
        (vh - vb * k / _SHELF_Q + k * k) / a0,
        1.0,
        2.0 * (k * k - 1.0) / a0,
        (1.0 - k / _SHELF_Q + k * k) / a0,
    ]
    k = math.tan(math.pi * _HIGHPASS_F0 / sample_rate)
    a0 = 1.0 + k / _HIGHPASS_Q + k * k
    highpass = [
        1.0, -2.0, 1.0,
        1.0,
        2.0 * (k * k - 1.0) / a0,
        (1.0 - k / _HIGHPASS_Q + k * k) / a0,
    ]
    return np.array([shelf, highpass], dtype=np.float64)


@dataclass
class LoudnessStats:
    """Result of an integrated-loudness measurement.

    `integrated_lufs` is -inf (and `gated_block_count` 0) when every block
    fell below the gates; callers must skip such stems in corpus averages.
    """

    integrated_lufs: float
    gated_block_count: int

    @property
    def is_silent(self) -> bool:
        return self.gated_block_count == 0


def _block_powers(w: StereoWaveform) -> np.ndarray:
    """Per-block K-weighted mean-square power, summed over channels."""
    block = int(round(BLOCK_S * w.sample_rate))
    hop = int(round(BLOCK_S * (1.0 - BLOCK_OVERLAP) * w.sample_rate))
    if w.num_samples < block:
        raise DataError(
            f"signal too short for loudness measurement: need at least "
            f"{BLOCK_S:.1f} s ({block} samples), got {w.num_samples}"
        )
    filtered = sosfilt(k_weighting_sos(w.sample_rate), w.channels(), axis=1)
    sq = filtered * filtered
    csum = np.concatenate([np.zeros((2, 1)), np.cumsum(sq, axis=1)], axis=1)
    n_blocks = (w.num_samples - block) // hop + 1
    starts = np.arange(n_blocks) * hop
    powers = (csum[:, starts + block] - csum[:, starts]) / block
    return powers.sum(axis=0)  # channel weights are 1.0 for L and R


def _lufs(power: np.ndarray | float) -> np.ndarray | float:
    return -0.691 + 10.0 * np.log10(np.maximum(power, 1e-30))


def integrated_loudness(w: StereoWaveform) -> LoudnessStats:
    """Gated integrated loudness of a stereo waveform, in LUFS.

    400 ms blocks at 75% overlap, absolute gate at -70 LUFS, then a
    relative gate 10 LU below the ungated mean, per the standard.
    """
    powers = _block_powers(w)
    block_lufs = _lufs(powers)
    above_abs = powers[block_lufs > ABSOLUTE_GATE_LUFS]
    if above_abs.size == 0:
        return LoudnessStats(float("-inf"), 0)
    relative_gate = _lufs(above_abs.mean()) + RELATIVE_GATE_LU
    gated = powers[(block_lufs > ABSOLUTE_GATE_LUFS) & (block_lufs > relative_gate)]
    if gated.size == 0:
        return LoudnessStats(float("-inf"), 0)
    return LoudnessStats(float(_lufs(gated.mean())), int(gated.size))


def average_stem_loudness(stems: Sequence[StereoWaveform], stem_type: str = "") -> float:
    """Arithmetic mean of per-stem integrated loudness, skipping silent stems."""
    values = []
    for w in stems:
        stats = integrated_loudness(w)
        if not stats.is_silent:
            values.append(stats.integrated_lufs)
    if not values:
        label = f" for type {stem_type}" if stem_type else ""
        raise DataError(f"no measurable stems{label}")
    return math.fsum(values) / len(values)


def loudness_gain_to_target(w: StereoWaveform, target_lufs: float) -> float:
    """Scalar gain (dB) that brings `w` to `target_lufs`.

    Measures once, applies, re-measures, and folds in one corrective gain
    if gating shifted. Raises for unmeasurable or far-too-quiet stems.
    """
    stats = integrated_loudness(w)
    if stats.is_silent:
        raise DataError("cannot normalize a silent stem")
    gain_db = target_lufs - stats.integrated_lufs
    if gain_db > MAX_NORMALIZE_GAIN_DB:
        raise DataError(
            f"stem too quiet to normalize: needs {gain_db:.1f} dB "
            f"(limit {MAX_NORMALIZE_GAIN_DB:.0f} dB)"
        )
    if gain_db == 0.0:
        return 0.0
    check = integrated_loudness(w.scaled(db_to_linear(gain_db)))
    if abs(check.integrated_lufs - target_lufs) > 1e-3:
        gain_db += target_lufs - check.integrated_lufs
    return gain_db


def normalize_loudness(w: StereoWaveform, target_lufs: float) -> StereoWaveform:
    """Loudness-normalize with a single scalar gain on both channels.

    Silent stems pass through unchanged; output measures within 0.1 LU of
    the target otherwise.
    """
    if integrated_loudness(w).is_silent:
        return w
    gain_db = loudness_gain_to_target(w, target_lufs)
    if gain_db == 0.0:
        return w
    return w.scaled(db_to_linear(gain_db))
