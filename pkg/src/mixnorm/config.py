"""Default processing parameters for the normalization pipeline.

Every constant here can be overridden through a JSON config file (see the
CLI's --config flag); the defaults reproduce the reference preprocessing
setup used throughout the test suite.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .errors import DataError


@dataclass
class EqSettings:
    fft_size: int = 65536
    hop_fraction: float = 0.25
    fir_taps: int = 1001
    smoothing_window_bins: int = 513
    smoothing_order: int = 2
    max_gain_db: float = 24.0
    pre_normalize_lufs: float = -30.0  # loudness applied before EQ analysis/matching

    @property
    def hop(self) -> int:
        return int(self.fft_size * self.hop_fraction)


@dataclass
class DrcSettings:
    attack_ms: dict = field(default_factory=lambda: {
        "vocals": 7.5, "drums": 10.0, "bass": 10.0, "other": 15.0})
    release_ms: dict = field(default_factory=lambda: {
        "vocals": 400.0, "drums": 180.0, "bass": 500.0, "other": 666.0})
    ratio_min: float = 4.0
    ratio_max: float = 20.0
    ratio_step: float = 2.0
    threshold_min_db: float = -40.0
    threshold_max_db: float = -10.0
    threshold_step_db: float = 2.0
    mel_bands: dict = field(default_factory=lambda: {"default": 128, "bass": 16})
    pre_normalize_peak_db: float = -10.0  # per-channel peak level before onset stats
    onset_fft_size: int = 2048
    onset_hop: int = 512

    def mel_bands_for(self, stem_type: str) -> int:
        return int(self.mel_bands.get(stem_type, self.mel_bands["default"]))

    def attack_for(self, stem_type: str) -> float:
        return float(self.attack_ms.get(stem_type, self.attack_ms["other"]))

    def release_for(self, stem_type: str) -> float:
        return float(self.release_ms.get(stem_type, self.release_ms["other"]))

    def thresholds(self) -> list[float]:
        """Candidate thresholds, mildest (highest) first."""
        out, t = [], self.threshold_max_db
        while t >= self.threshold_min_db - 1e-9:
            out.append(round(t, 6))
            t -= self.threshold_step_db
        return out

    def ratios(self) -> list[float]:
        """Candidate ratios, mildest (lowest) first."""
        out, r = [], self.ratio_min
        while r <= self.ratio_max + 1e-9:
            out.append(round(r, 6))
            r += self.ratio_step
        return out


@dataclass
class PanningSettings:
    fft_size: int = 2048
    hop_fraction: float = 0.5
    cutoff_hz: dict = field(default_factory=lambda: {"default": 16000.0, "drums": 16000.0})
    smoothing_window_bins: int = 65
    smoothing_order: int = 2
    gain_limit_db: float = 12.0

    @property
    def hop(self) -> int:
        return int(self.fft_size * self.hop_fraction)

    def cutoff_for(self, stem_type: str) -> float:
        return float(self.cutoff_hz.get(stem_type, self.cutoff_hz["default"]))


@dataclass
class ReverbSettings:
    train_rt60_s: tuple = (2.0, 4.0)
    pre_reverb_rt60_s: tuple = (1.0, 1.5)
    shelf_gain_db: float = -30.0
    low_shelf_hz: tuple = (500.0, 700.0)
    high_shelf_hz: tuple = (7000.0, 10000.0)
    wet_gain: float = 1.0
    eligible_stems: tuple = ("vocals", "other")


@dataclass
class LossSettings:
    fft_size: int = 4096
    hop_fraction: float = 0.25
    emphasis_taps: int = 101
    lowpass_hz: float = 16000.0
    log_eps: float = 1e-7

    @property
    def hop(self) -> int:
        return int(self.fft_size * self.hop_fraction)


@dataclass
class FeatureSettings:
    fft_size: int = 2048
    hop: int = 512
    running_mean_s: float = 0.5


@dataclass
class PipelineConfig:
    sample_rate: int = 44100
    stem_types: tuple = ("vocals", "drums", "bass", "other")
    eq: EqSettings = field(default_factory=EqSettings)
    drc: DrcSettings = field(default_factory=DrcSettings)
    panning: PanningSettings = field(default_factory=PanningSettings)
    reverb: ReverbSettings = field(default_factory=ReverbSettings)
    loss: LossSettings = field(default_factory=LossSettings)
    features: FeatureSettings = field(default_factory=FeatureSettings)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        cfg = cls()
        sections = {
            "eq": EqSettings, "drc": DrcSettings, "panning": PanningSettings,
            "reverb": ReverbSettings, "loss": LossSettings, "features": FeatureSettings,
        }
        kwargs = {}
        for key, value in data.items():
            if key in sections:
                base = getattr(cfg, key)
                unknown = set(value) - set(asdict(base))
                if unknown:
                    raise DataError(f"unknown config keys in '{key}': {sorted(unknown)}")
                fixed = {
                    k: tuple(v) if isinstance(getattr(base, k), tuple) else v
                    for k, v in value.items()
                }
                kwargs[key] = replace(base, **fixed)
            elif key == "stem_types":
                kwargs[key] = tuple(value)
            elif key == "sample_rate":
                kwargs[key] = int(value)
            else:
                raise DataError(f"unknown config key: {key}")
        return replace(cfg, **kwargs)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)
