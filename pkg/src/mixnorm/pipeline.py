"""Corpus analysis and song normalization in the fixed effect order.

Analysis is progressive: each stage's corpus average is computed on stems
already normalized by every previous stage, in the order EQ -> DRC ->
panning -> loudness (reverb augmentation is treated as noise and never
enters the statistics). Normalization applies reverb augmentation first,
then the four stages against a saved per-stem-type profile.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from . import dynamics, eq, loudness, panning, reverb
from .config import PipelineConfig
from .core import StemSet, StereoWaveform, db_to_linear, read_audio, stft_stereo
from .errors import DataError

log = logging.getLogger(__name__)

PROFILE_SCHEMA_VERSION = "mixnorm-profile/1"
STAGES = ("reverb", "eq", "drc", "panning", "loudness")


@dataclass
class StemTypeProfile:
    """Normalization target for one stem type: every per-type average the
    pipeline needs (loudness, spectrum, panning similarity, onset peaks)."""

    stem_type: str
    loudness_avg: float                # LUFS
    spectrum_avg: eq.AverageSpectrum
    panning_avg: panning.AveragePanning
    peak_mu: float | None              # dB; None if the corpus had no transients
    peak_sigma: float | None
    sample_rate: int
    num_stems: int = 0
    schema_version: str = PROFILE_SCHEMA_VERSION
    corpus_fingerprint: str = ""

    @property
    def fft_sizes(self) -> dict[str, int]:
        return {"spectrum": self.spectrum_avg.fft_size,
                "panning": self.panning_avg.fft_size}


def save_profile(profile: StemTypeProfile, path) -> None:
    """Write a profile as versioned JSON; vectors keep full float64 precision."""
    data = {
        "schema_version": profile.schema_version,
        "stem_type": profile.stem_type,
        "sample_rate": profile.sample_rate,
        "num_stems": profile.num_stems,
        "corpus_fingerprint": profile.corpus_fingerprint,
        "loudness_avg_lufs": profile.loudness_avg,
        "peak_mu_db": profile.peak_mu,
        "peak_sigma_db": profile.peak_sigma,
        "spectrum": {
            "fft_size": profile.spectrum_avg.fft_size,
            "magnitude": profile.spectrum_avg.magnitude.tolist(),
        },
        "panning": {
            "fft_size": profile.panning_avg.fft_size,
            "similarity": profile.panning_avg.similarity.tolist(),
        },
    }
    Path(path).write_text(json.dumps(data, sort_keys=True))


def load_profile(path, expected_sample_rate: int | None = None) -> StemTypeProfile:
    """Load a profile, refusing unknown schemas and wrong sample rates."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"profile file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataError(f"corrupt profile file {path}: {exc}") from exc
    if not isinstance(data, dict) or data.get("schema_version") != PROFILE_SCHEMA_VERSION:
        raise DataError(
            f"unsupported profile schema in {path}: "
            f"{data.get('schema_version') if isinstance(data, dict) else type(data).__name__!r} "
            f"(expected {PROFILE_SCHEMA_VERSION})"
        )
    try:
        sample_rate = int(data["sample_rate"])
        profile = StemTypeProfile(
            stem_type=data["stem_type"],
            loudness_avg=float(data["loudness_avg_lufs"]),
            spectrum_avg=eq.AverageSpectrum(
                np.asarray(data["spectrum"]["magnitude"], dtype=np.float64),
                int(data["spectrum"]["fft_size"]), sample_rate, data["stem_type"],
            ),
            panning_avg=panning.AveragePanning(
                np.asarray(data["panning"]["similarity"], dtype=np.float64),
                int(data["panning"]["fft_size"]), data["stem_type"],
            ),
            peak_mu=None if data["peak_mu_db"] is None else float(data["peak_mu_db"]),
            peak_sigma=None if data["peak_sigma_db"] is None else float(data["peak_sigma_db"]),
            sample_rate=sample_rate,
            num_stems=int(data.get("num_stems", 0)),
            corpus_fingerprint=data.get("corpus_fingerprint", ""),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"corrupt profile file {path}: missing or bad field ({exc})") from exc
    if expected_sample_rate is not None and profile.sample_rate != expected_sample_rate:
        raise DataError(
            f"sample-rate mismatch: profile {path} was built at "
            f"{profile.sample_rate} Hz, session runs at {expected_sample_rate} Hz"
        )
    return profile


# --- Dataset discovery -------------------------------------------------------

def discover_songs(dataset_root, stem_types) -> list[tuple[str, dict[str, Path]]]:
    """Songs under `<root>/<song_id>/<stem>.wav` that have every stem.

    Songs with missing stems are skipped with a warning; order is sorted
    by song id so reductions are deterministic.
    """
    root = Path(dataset_root)
    if not root.is_dir():
        raise DataError(f"dataset root not found: {root}")
    songs = []
    for song_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        paths = {k: song_dir / f"{k}.wav" for k in stem_types}
        missing = [k for k, p in paths.items() if not p.exists()]
        if missing:
            log.warning("skipping song %s: missing stems %s", song_dir.name, missing)
            continue
        songs.append((song_dir.name, paths))
    return songs


def corpus_fingerprint(songs: list[tuple[str, dict[str, Path]]]) -> str:
    """Hash of the corpus file list and sizes, stored in profiles so stale
    profiles are detectable."""
    digest = hashlib.sha256()
    for song_id, paths in songs:
        for stem_type in sorted(paths):
            p = paths[stem_type]
            digest.update(f"{song_id}/{stem_type}:{p.stat().st_size}\n".encode())
    return "sha256:" + digest.hexdigest()


def load_song(song_id: str, paths: dict[str, Path], sample_rate: int,
              resample: bool = False) -> StemSet:
    stems = {k: read_audio(p, sample_rate, resample) for k, p in paths.items()}
    return StemSet(stems, song_id)


# --- Parallel helpers ---------------------------------------------------------

def _pmap(fn, items, workers: int = 1) -> list:
    """Order-preserving map; results are identical for any worker count."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))


def _panning_partial(w: StereoWaveform, fft_size: int, hop: int):
    ps = panning.panning_spectrum(*stft_stereo(w, fft_size, hop))
    return panning.similarity_partial(ps)


def _measure_lufs(w: StereoWaveform) -> float:
    return loudness.integrated_loudness(w).integrated_lufs


def _drc_waveform(w: StereoWaveform, **kwargs) -> StereoWaveform:
    return dynamics.normalize_drc(w, **kwargs).waveform


# --- Corpus analysis ----------------------------------------------------------

def analyze_corpus(dataset_root, config: PipelineConfig | None = None,
                   stem_types=None, resample: bool = False,
                   workers: int = 1) -> dict[str, StemTypeProfile]:
    """Compute one StemTypeProfile per stem type from a dataset.

    Stage statistics are computed on stems already normalized by the
    previous stages; silent or unmeasurable stems are excluded from every
    average.
    """
    cfg = config or PipelineConfig()
    stem_types = tuple(stem_types if stem_types is not None else cfg.stem_types)
    songs = discover_songs(dataset_root, stem_types)
    if not songs:
        raise DataError(f"no usable songs found under {dataset_root}")
    fingerprint = corpus_fingerprint(songs)
    min_samples = max(cfg.eq.fft_size, int(0.4 * cfg.sample_rate) + 1)

    profiles = {}
    for stem_type in stem_types:
        stems: list[StereoWaveform] = []
        for song_id, paths in songs:
            w = read_audio(paths[stem_type], cfg.sample_rate, resample)
            if w.num_samples < min_samples:
                log.warning("excluding %s/%s: shorter than %d samples",
                            song_id, stem_type, min_samples)
                continue
            if loudness.integrated_loudness(w).is_silent:
                log.warning("excluding silent stem %s/%s", song_id, stem_type)
                continue
            try:
                stems.append(loudness.normalize_loudness(w, cfg.eq.pre_normalize_lufs))
            except DataError as exc:
                log.warning("excluding %s/%s: %s", song_id, stem_type, exc)
        if not stems:
            raise DataError(f"no measurable stems for type {stem_type}")
        log.info("analyzing %d %s stems", len(stems), stem_type)

        # EQ: average spectrum on loudness-normalized stems, then match.
        gammas = _pmap(
            partial(eq.stem_mean_spectrum, fft_size=cfg.eq.fft_size,
                    hop=cfg.eq.hop, stem_type=stem_type),
            stems, workers)
        spectrum_avg = eq.corpus_average_spectrum(gammas)
        stems = _pmap(
            partial(eq.match_eq, target=spectrum_avg, fir_taps=cfg.eq.fir_taps,
                    smoothing_window_bins=cfg.eq.smoothing_window_bins,
                    smoothing_order=cfg.eq.smoothing_order,
                    max_gain_db=cfg.eq.max_gain_db, hop=cfg.eq.hop),
            stems, workers)

        # DRC: onset peak stats on peak-normalized stems, then grid search.
        stems = [dynamics.peak_normalize(w, cfg.drc.pre_normalize_peak_db)
                 for w in stems]
        mel_bands = cfg.drc.mel_bands_for(stem_type)
        all_stats = _pmap(partial(_onset_stats, mel_bands=mel_bands), stems, workers)
        mus = [s.mu for s in all_stats if s.has_transients]
        sigmas = [s.sigma for s in all_stats if s.has_transients]
        peak_mu = float(np.mean(mus)) if mus else None
        peak_sigma = float(np.mean(sigmas)) if sigmas else None
        if peak_mu is None:
            log.warning("no transients detected in any %s stem; "
                        "DRC stage will pass stems through", stem_type)
        stems = _pmap(
            partial(_drc_waveform, peak_mu=peak_mu, peak_sigma=peak_sigma,
                    attack_ms=cfg.drc.attack_for(stem_type),
                    release_ms=cfg.drc.release_for(stem_type),
                    mel_bands=mel_bands,
                    thresholds_db=tuple(cfg.drc.thresholds()),
                    ratios=tuple(cfg.drc.ratios())),
            stems, workers)

        # Panning: average similarity, then re-pan.
        partials = _pmap(
            partial(_panning_partial, fft_size=cfg.panning.fft_size,
                    hop=cfg.panning.hop),
            stems, workers)
        panning_avg = panning.similarity_from_partials(
            partials, cfg.panning.fft_size, cfg.panning.smoothing_window_bins,
            cfg.panning.smoothing_order, stem_type)
        stems = _pmap(
            partial(panning.repan, target=panning_avg, hop=cfg.panning.hop,
                    cutoff_hz=cfg.panning.cutoff_for(stem_type),
                    gain_limit_db=cfg.panning.gain_limit_db),
            stems, workers)

        # Loudness: average integrated loudness of the fully processed stems.
        lufs = _pmap(_measure_lufs, stems, workers)
        lufs = [v for v in lufs if np.isfinite(v)]
        if not lufs:
            raise DataError(f"no measurable stems for type {stem_type}")
        profiles[stem_type] = StemTypeProfile(
            stem_type=stem_type,
            loudness_avg=float(np.mean(lufs)),
            spectrum_avg=spectrum_avg,
            panning_avg=panning_avg,
            peak_mu=peak_mu,
            peak_sigma=peak_sigma,
            sample_rate=cfg.sample_rate,
            num_stems=len(stems),
            corpus_fingerprint=fingerprint,
        )
    return profiles


def _onset_stats(w: StereoWaveform, mel_bands: int) -> dynamics.OnsetPeakStats:
    return dynamics.onset_peak_stats(w, dynamics.detect_onsets(w, mel_bands))


# --- Song normalization --------------------------------------------------------

@dataclass
class NormalizeResult:
    stems: StemSet
    manifest: dict
    intermediates: dict[str, StemSet] = field(default_factory=dict)


def normalize_song(stems: StemSet, profiles: dict[str, StemTypeProfile],
                   config: PipelineConfig | None = None, mode: str = "inference",
                   seed: int = 0, ir_library=None, skip=frozenset(),
                   collect_intermediates: bool = False) -> NormalizeResult:
    """Normalize one song's stems against the profiles.

    Stage order is fixed: reverb augmentation (train/inference mode), then
    EQ, DRC, panning and loudness normalization. Stages named in `skip`
    are bypassed (including their pre-normalizations). Silent stems pass
    through untouched.
    """
    cfg = config or PipelineConfig()
    skip = frozenset(skip)
    unknown = skip - set(STAGES)
    if unknown:
        raise DataError(f"unknown stages in skip list: {sorted(unknown)}")
    for stem_type in stems.stems:
        if stem_type not in profiles:
            raise DataError(f"no profile for stem type {stem_type!r}")
        if profiles[stem_type].sample_rate != stems.sample_rate:
            raise DataError(
                f"sample-rate mismatch for {stem_type!r}: profile "
                f"{profiles[stem_type].sample_rate} Hz, stems {stems.sample_rate} Hz"
            )

    manifest: dict = {
        "song_id": stems.song_id,
        "mode": mode,
        "seed": seed,
        "skip": sorted(skip),
        "stems": {k: {} for k in stems.stems},
    }
    intermediates: dict[str, StemSet] = {}

    if "reverb" not in skip:
        if ir_library is None:
            raise DataError("reverb augmentation needs an IR library "
                            "(pass ir_library or skip the reverb stage)")
        rv = cfg.reverb
        stems, reverb_manifest = reverb.augment_reverb(
            stems, ir_library, mode, seed, wet_gain=rv.wet_gain,
            train_rt60_s=rv.train_rt60_s, pre_reverb_rt60_s=rv.pre_reverb_rt60_s,
            low_shelf_hz=rv.low_shelf_hz, high_shelf_hz=rv.high_shelf_hz,
            shelf_gain_db=rv.shelf_gain_db, eligible=rv.eligible_stems)
        manifest["reverb"] = reverb_manifest
        if collect_intermediates:
            intermediates["reverb"] = stems

    working = dict(stems.stems)
    for stage in ("eq", "drc", "panning", "loudness"):
        if stage in skip:
            continue
        for stem_type in sorted(working):
            w = working[stem_type]
            prof = profiles[stem_type]
            record = manifest["stems"][stem_type]
            if loudness.integrated_loudness(w).is_silent:
                record["silent"] = True
                continue
            if stage == "eq":
                gain = loudness.loudness_gain_to_target(w, cfg.eq.pre_normalize_lufs)
                w = w.scaled(db_to_linear(gain))
                record["pre_eq_gain_db"] = round(gain, 4)
                w = eq.match_eq(w, prof.spectrum_avg, fir_taps=cfg.eq.fir_taps,
                                smoothing_window_bins=cfg.eq.smoothing_window_bins,
                                smoothing_order=cfg.eq.smoothing_order,
                                max_gain_db=cfg.eq.max_gain_db, hop=cfg.eq.hop)
            elif stage == "drc":
                w = dynamics.peak_normalize(w, cfg.drc.pre_normalize_peak_db)
                result = dynamics.normalize_drc(
                    w, prof.peak_mu, prof.peak_sigma,
                    attack_ms=cfg.drc.attack_for(stem_type),
                    release_ms=cfg.drc.release_for(stem_type),
                    mel_bands=cfg.drc.mel_bands_for(stem_type),
                    thresholds_db=tuple(cfg.drc.thresholds()),
                    ratios=tuple(cfg.drc.ratios()))
                w = result.waveform
                record["drc"] = {
                    "mu_before_db": None if not result.stats_before.has_transients
                    else round(result.stats_before.mu, 4),
                    "mu_after_db": None if result.stats_after is None
                    or not result.stats_after.has_transients
                    else round(result.stats_after.mu, 4),
                    "satisfied": result.satisfied,
                    "settings": None if result.settings is None else {
                        "threshold_db": result.settings.threshold_db,
                        "ratio": result.settings.ratio,
                        "attack_ms": result.settings.attack_ms,
                        "release_ms": result.settings.release_ms,
                    },
                }
            elif stage == "panning":
                w = panning.repan(w, prof.panning_avg, hop=cfg.panning.hop,
                                  cutoff_hz=cfg.panning.cutoff_for(stem_type),
                                  gain_limit_db=cfg.panning.gain_limit_db)
            else:  # loudness
                gain = loudness.loudness_gain_to_target(w, prof.loudness_avg)
                w = w.scaled(db_to_linear(gain))
                record["loudness_gain_db"] = round(gain, 6)
                record["target_lufs"] = prof.loudness_avg
            working[stem_type] = w
        if collect_intermediates:
            intermediates[stage] = StemSet(dict(working), stems.song_id)

    return NormalizeResult(StemSet(working, stems.song_id), manifest, intermediates)
