"""Batch audio-effect normalization for multitrack stems.

Computes dataset-average effect features (loudness, EQ spectrum, panning
similarity, onset-peak dynamics) from wet stems and normalizes or augments
stems against those averages, plus stereo-invariant spectral losses and
objective mix-evaluation metrics.
"""

from .config import PipelineConfig
from .core import (
    STEM_TYPES,
    Spectrogram,
    StemSet,
    StereoWaveform,
    db_to_linear,
    istft,
    linear_to_db,
    read_audio,
    stft,
    write_audio,
)
from .dynamics import (
    CompressorSettings,
    DrcResult,
    OnsetPeakStats,
    compress,
    detect_onsets,
    normalize_drc,
    onset_peak_stats,
    peak_normalize,
)
from .eq import AverageSpectrum, corpus_average_spectrum, match_eq, stem_mean_spectrum
from .errors import DataError, MixnormError
from .evaluation import (
    LossBreakdown,
    MixFeatureReport,
    mape_report,
    mix_features,
    stereo_invariant_loss,
)
from .loudness import (
    LoudnessStats,
    average_stem_loudness,
    integrated_loudness,
    normalize_loudness,
)
from .panning import (
    AveragePanning,
    PanningSpectrum,
    corpus_average_similarity,
    panning_spectrum,
    repan,
)
from .pipeline import (
    NormalizeResult,
    StemTypeProfile,
    analyze_corpus,
    load_profile,
    normalize_song,
    save_profile,
)
from .reverb import (
    ImpulseResponseEntry,
    ReverbSendConfig,
    augment_reverb,
    estimate_rt60,
    load_ir_library,
    reverb_send,
)

__version__ = "0.1.0"
