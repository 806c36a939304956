"""Command-line entry point for reproducible batch jobs.

Subcommands: analyze (corpus -> profiles), normalize (stems -> normalized
stems), evaluate (MAPE tables against a reference), loss (spectral loss of
one pair). Exit codes: 0 success, 1 internal error, 2 user/data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__, pipeline, reverb
from .config import PipelineConfig
from .core import StereoWaveform, read_audio, write_audio
from .errors import DataError
from .evaluation import FEATURE_GROUPS, mape_report, stereo_invariant_loss

log = logging.getLogger("mixnorm")

CONFIG_ENV_VAR = "MIXNORM_CONFIG"


def _load_config(path: str | None) -> PipelineConfig:
    path = path or os.environ.get(CONFIG_ENV_VAR)
    return PipelineConfig.load(path) if path else PipelineConfig()


def _versions() -> dict:
    return {
        "mixnorm": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": ".".join(map(str, sys.version_info[:3])),
    }


def _write_run_manifest(out_dir: Path, args_dict: dict, cfg: PipelineConfig) -> None:
    manifest = {"command": args_dict, "config": cfg.to_dict(), "versions": _versions()}
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run_manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))


def _spectral_tilt_db(profile: pipeline.StemTypeProfile) -> float:
    """High band (1-10 kHz) level minus low band (100-1000 Hz) level."""
    freqs = profile.spectrum_avg.bin_frequencies()
    mag_db = 20.0 * np.log10(profile.spectrum_avg.magnitude)
    low = mag_db[(freqs >= 100.0) & (freqs < 1000.0)]
    high = mag_db[(freqs >= 1000.0) & (freqs < 10000.0)]
    if low.size == 0 or high.size == 0:
        return float("nan")
    return float(high.mean() - low.mean())


def cmd_analyze(args) -> int:
    cfg = _load_config(args.config)
    stem_types = tuple(args.stems.split(",")) if args.stems else None
    profiles = pipeline.analyze_corpus(
        args.dataset, cfg, stem_types=stem_types,
        resample=args.resample, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for stem_type, profile in profiles.items():
        pipeline.save_profile(profile, out / f"{stem_type}.json")
    _write_run_manifest(out, _args_dict(args), cfg)
    print(f"analyzed {next(iter(profiles.values())).num_stems} songs "
          f"-> {len(profiles)} profiles in {out}")
    for stem_type, profile in profiles.items():
        mu = "n/a" if profile.peak_mu is None else f"{profile.peak_mu:7.2f} dB"
        sigma = "n/a" if profile.peak_sigma is None else f"{profile.peak_sigma:5.2f} dB"
        print(f"  {stem_type:8s} L={profile.loudness_avg:7.2f} LUFS  "
              f"P_mu={mu}  P_sigma={sigma}  "
              f"tilt={_spectral_tilt_db(profile):+6.2f} dB")
    return 0


def _load_profiles(profiles_dir, stem_types, sample_rate) -> dict:
    profiles_dir = Path(profiles_dir)
    if not profiles_dir.is_dir():
        raise DataError(f"profiles directory not found: {profiles_dir}")
    profiles = {}
    for stem_type in stem_types:
        path = profiles_dir / f"{stem_type}.json"
        if path.exists():
            profiles[stem_type] = pipeline.load_profile(path, sample_rate)
    if not profiles:
        raise DataError(f"no profiles found in {profiles_dir}")
    return profiles


def _normalize_one(job) -> dict:
    """Normalize one song and write its stems; runs in a worker process."""
    (song_id, paths, profiles, cfg, mode, seed, skip, ir_dir, resample, out_dir) = job
    stems = pipeline.load_song(song_id, paths, cfg.sample_rate, resample)
    library = None
    if "reverb" not in skip:
        library = reverb.load_ir_library(ir_dir, cfg.sample_rate)
    result = pipeline.normalize_song(
        stems, profiles, cfg, mode=mode, seed=seed,
        ir_library=library, skip=skip)
    song_out = Path(out_dir) / song_id
    song_out.mkdir(parents=True, exist_ok=True)
    mixture = np.zeros((2, result.stems.num_samples))
    for stem_type, w in result.stems.stems.items():
        write_audio(song_out / f"{stem_type}.wav", w, bit_depth=32)
        mixture += w.channels()
    # the normalized mix (stem sum) is what evaluate compares; float WAV
    # keeps any overshoot intact
    write_audio(song_out / "mixture.wav",
                StereoWaveform(mixture[0], mixture[1], cfg.sample_rate), bit_depth=32)
    (song_out / "manifest.json").write_text(
        json.dumps(result.manifest, sort_keys=True, indent=1))
    return result.manifest


def cmd_normalize(args) -> int:
    cfg = _load_config(args.config)
    skip = frozenset(args.skip or [])
    unknown = skip - set(pipeline.STAGES)
    if unknown:
        raise DataError(f"unknown stages in --skip: {sorted(unknown)}")
    if "reverb" not in skip and not args.ir_library:
        raise DataError("--ir-library is required unless you pass --skip reverb")
    stem_types = tuple(args.stems.split(",")) if args.stems else cfg.stem_types
    songs = pipeline.discover_songs(args.dataset, stem_types)
    if not songs:
        raise DataError(f"no usable songs found under {args.dataset}")
    profiles = _load_profiles(args.profiles, stem_types, cfg.sample_rate)
    missing = [k for k in stem_types if k not in profiles]
    if missing:
        raise DataError(f"missing profiles for stem types: {missing}")
    out_dir = Path(args.out)
    jobs = [(song_id, paths, profiles, cfg, args.mode, args.seed, skip,
             args.ir_library, args.resample, out_dir)
            for song_id, paths in songs]
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as executor:
            manifests = list(executor.map(_normalize_one, jobs))
    else:
        manifests = [_normalize_one(job) for job in jobs]
    _write_run_manifest(out_dir, _args_dict(args), cfg)
    print(f"normalized {len(manifests)} songs -> {out_dir}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args.config)
    cand_root, ref_root = Path(args.candidate), Path(args.reference)
    for root in (cand_root, ref_root):
        if not root.is_dir():
            raise DataError(f"directory not found: {root}")

    def mixes(root):
        return {p.parent.name: p for p in sorted(root.glob("*/mixture.wav"))}

    cand, ref = mixes(cand_root), mixes(ref_root)
    if not cand or not ref:
        raise DataError("no songs found (expected <root>/<song>/mixture.wav)")
    unmatched = sorted(set(cand) ^ set(ref))
    if unmatched:
        raise DataError(f"unmatched songs between candidate and reference: {unmatched}")

    rows = {}
    for song_id in sorted(cand):
        report = mape_report(
            read_audio(cand[song_id], cfg.sample_rate, args.resample),
            read_audio(ref[song_id], cfg.sample_rate, args.resample))
        rows[song_id] = report.mape_by_group
    groups = list(FEATURE_GROUPS)
    aggregate = {g: float(np.mean([rows[s][g] for s in rows])) for g in groups}

    header = f"{'song':20s} " + " ".join(f"{g:>9s}" for g in groups)
    print(header)
    for song_id in sorted(rows):
        print(f"{song_id:20s} " + " ".join(f"{rows[song_id][g]:9.3f}" for g in groups))
    print(f"{'average':20s} " + " ".join(f"{aggregate[g]:9.3f}" for g in groups))

    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = {"songs": rows, "aggregate": aggregate}
        (out_dir / "mape.json").write_text(json.dumps(payload, sort_keys=True, indent=1))
        with open(out_dir / "mape.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["song", *groups])
            for song_id in sorted(rows):
                writer.writerow([song_id, *(repr(rows[song_id][g]) for g in groups)])
            writer.writerow(["average", *(repr(aggregate[g]) for g in groups)])
        _write_run_manifest(out_dir, _args_dict(args), cfg)
    return 0


def cmd_loss(args) -> int:
    cfg = _load_config(args.config)
    y = read_audio(args.reference, cfg.sample_rate, args.resample)
    y_hat = read_audio(args.estimate, cfg.sample_rate, args.resample)
    ls = cfg.loss
    breakdown = stereo_invariant_loss(
        y, y_hat, variant=args.variant, fft_size=ls.fft_size, hop=ls.hop,
        emphasis_taps=ls.emphasis_taps, lowpass_hz=ls.lowpass_hz,
        log_eps=ls.log_eps)
    payload = breakdown.to_dict()
    payload["variant"] = args.variant
    payload["total"] = breakdown.total(args.variant)
    payload["versions"] = _versions()
    print(json.dumps(payload, sort_keys=True, indent=1))
    return 0


def _args_dict(args) -> dict:
    skip_keys = {"func"}
    return {k: (sorted(v) if isinstance(v, (set, frozenset)) else v)
            for k, v in vars(args).items() if k not in skip_keys}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixnorm",
        description="Batch audio-effect normalization for multitrack stems.")
    parser.add_argument("--version", action="version", version=f"mixnorm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV_VAR})")
        p.add_argument("--resample", action="store_true",
                       help="resample inputs to the session rate instead of erroring")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                       help="worker processes (1 = canonical sequential order)")

    p = sub.add_parser("analyze", help="compute per-stem-type profiles from a dataset")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="directory for profile files")
    p.add_argument("--stems", help="comma-separated stem types (default: all four)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("normalize", help="normalize a dataset against saved profiles")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--profiles", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("train", "inference"), default="inference")
    p.add_argument("--skip", action="append", choices=pipeline.STAGES,
                   help="stage to bypass (repeatable)")
    p.add_argument("--ir-library", help="directory of impulse-response WAVs")
    p.add_argument("--stems", help="comma-separated stem types (default: all four)")
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("evaluate", help="MAPE table of candidate mixes vs reference mixes")
    common(p)
    p.add_argument("--candidate", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--out", help="directory for mape.json / mape.csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("loss", help="stereo-invariant spectral loss of one pair")
    common(p)
    p.add_argument("reference")
    p.add_argument("estimate")
    p.add_argument("--variant", choices=("a", "b"), default="a")
    p.set_defaults(func=cmd_loss)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:  # noqa: BLE001 - CLI boundary
        import traceback
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
