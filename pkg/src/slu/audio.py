"""WAV I/O, SNR-controlled noise mixing, corpus augmentation, and features.

The augmentation protocol draws a fixed number of noise files per clean
utterance (without replacement, seeded per record id) and pairs noise k with
SNR level k, so a five-level spec yields a five-fold corpus.  Train and test
noise pools never share files.
"""

from __future__ import annotations

import io
import logging
import math
import random
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Manifest, Utterance, build_manifest
from .errors import AudioFormatError, ValidationError
from .ioutil import atomic_write_bytes

log = logging.getLogger(__name__)

PCM_SCALE = 32768.0
DEFAULT_SNR_LEVELS = (0.0, 10.0, 20.0, 30.0, 40.0)


@dataclass
class AudioClip:
    samples: np.ndarray  # float64 amplitudes in [-1, 1]
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise AudioFormatError("audio clip must be a non-empty mono sample vector")
        if self.sample_rate <= 0:
            raise AudioFormatError(f"bad sample rate {self.sample_rate}")

    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def read_wav(path: str | Path) -> AudioClip:
    """Read a 16-bit PCM mono WAV; amplitudes are scaled by 1/32768."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as fh:
            if fh.getcomptype() != "NONE":
                raise AudioFormatError(f"{path}: compressed WAV not supported")
            if fh.getnchannels() != 1:
                raise AudioFormatError(f"{path}: expected mono, got {fh.getnchannels()} channels")
            if fh.getsampwidth() != 2:
                raise AudioFormatError(f"{path}: expected 16-bit PCM, got {8 * fh.getsampwidth()}-bit")
            frames = fh.getnframes()
            if frames == 0:
                raise AudioFormatError(f"{path}: empty data chunk")
            raw = fh.readframes(frames)
            rate = fh.getframerate()
    except wave.Error as exc:
        raise AudioFormatError(f"{path}: not a readable WAV file: {exc}") from exc
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM_SCALE
    return AudioClip(samples, rate)


def wav_bytes(clip: AudioClip) -> bytes:
    ints = np.clip(np.rint(clip.samples * PCM_SCALE), -32768, 32767).astype("<i2")
    buf = io.BytesIO()
    with wave.open(buf, "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(clip.sample_rate)
        fh.writeframes(ints.tobytes())
    return buf.getvalue()


def write_wav(clip: AudioClip, path: str | Path) -> None:
    """Write 16-bit PCM mono; round trip error is at most 1/32768 per sample."""
    atomic_write_bytes(path, wav_bytes(clip))


def rms(clip: AudioClip | np.ndarray) -> float:
    samples = clip.samples if isinstance(clip, AudioClip) else np.asarray(clip, dtype=np.float64)
    if samples.size == 0:
        raise ValidationError("RMS of an empty signal is undefined")
    return float(np.sqrt(np.mean(samples**2)))


def fit_length(samples: np.ndarray, length: int, offset: int = 0) -> np.ndarray:
    """Loop (tile) or truncate a signal to an exact length, starting at offset."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise ValidationError("cannot fit an empty signal")
    offset = offset % samples.size
    rolled = np.concatenate([samples[offset:], samples[:offset]])
    reps = math.ceil(length / rolled.size)
    return np.tile(rolled, reps)[:length]


@dataclass
class MixResult:
    audio: AudioClip
    gain: float
    clipped: int


def mix_at_snr_report(clean: AudioClip, noise: AudioClip, snr_db: float, offset: int = 0) -> MixResult:
    """Add noise to a clean clip at an exact SNR.

    The noise is looped or truncated to the clean clip's length first, and
    the gain is computed from the fitted segment, so re-measuring the SNR of
    (clean, scaled noise) returns the target exactly (pre-clipping).  Samples
    pushed outside [-1, 1] are hard-clipped and counted.
    """
    if clean.sample_rate != noise.sample_rate:
        raise ValidationError(
            f"sample rate mismatch: clean {clean.sample_rate} Hz vs noise {noise.sample_rate} Hz"
        )
    clean_rms = rms(clean)
    if clean_rms == 0.0:
        raise ValidationError("SNR is undefined for a silent clean signal")
    fitted = fit_length(noise.samples, clean.samples.size, offset)
    noise_rms = rms(fitted)
    if noise_rms == 0.0:
        raise ValidationError("SNR is undefined for a silent noise signal")
    gain = clean_rms / (noise_rms * 10.0 ** (snr_db / 20.0))
    mixed = clean.samples + gain * fitted
    clipped = int(np.count_nonzero((mixed < -1.0) | (mixed > 1.0)))
    if clipped:
        log.warning("mix at %.1f dB clipped %d samples", snr_db, clipped)
        mixed = np.clip(mixed, -1.0, 1.0)
    return MixResult(AudioClip(mixed, clean.sample_rate), gain, clipped)


def mix_at_snr(clean: AudioClip, noise: AudioClip, snr_db: float) -> AudioClip:
    return mix_at_snr_report(clean, noise, snr_db).audio


@dataclass
class NoisePool:
    train_noises: tuple[str, ...]
    test_noises: tuple[str, ...]

    def __post_init__(self):
        overlap = set(self.train_noises) & set(self.test_noises)
        if overlap:
            raise ValidationError(f"train/test noise files overlap: {sorted(overlap)[:3]}")

    def split(self, name: str) -> tuple[str, ...]:
        if name == "train":
            return self.train_noises
        if name == "test":
            return self.test_noises
        raise ValidationError(f"unknown split {name!r}, expected 'train' or 'test'")

    @classmethod
    def from_directory(cls, directory: str | Path) -> "NoisePool":
        """Build a pool from a directory of WAVs.

        Subdirectories ``train/`` and ``test/`` are used when both exist;
        otherwise the sorted file list is split alternately, which keeps the
        two halves disjoint and deterministic.
        """
        directory = Path(directory)
        train_dir, test_dir = directory / "train", directory / "test"
        if train_dir.is_dir() and test_dir.is_dir():
            train = tuple(str(p) for p in sorted(train_dir.glob("*.wav")))
            test = tuple(str(p) for p in sorted(test_dir.glob("*.wav")))
        else:
            files = [str(p) for p in sorted(directory.glob("*.wav"))]
            train, test = tuple(files[0::2]), tuple(files[1::2])
        return cls(train, test)


@dataclass
class AugmentSpec:
    snr_levels_db: tuple[float, ...] = DEFAULT_SNR_LEVELS
    noises_per_clip: int = len(DEFAULT_SNR_LEVELS)
    seed: int = 0
    random_offset: bool = False

    def __post_init__(self):
        if self.noises_per_clip != len(self.snr_levels_db):
            raise ValidationError(
                "noises_per_clip must equal the number of SNR levels "
                f"({self.noises_per_clip} vs {len(self.snr_levels_db)})"
            )


def _record_clip(rec: Utterance, base_dir: Path | None) -> AudioClip:
    if rec.samples is not None:
        return AudioClip(np.asarray(rec.samples), 16000)
    if rec.audio_path is None:
        raise ValidationError(f"record {rec.id!r} has no audio to augment")
    path = Path(rec.audio_path)
    if not path.is_absolute() and base_dir is not None:
        path = base_dir / path
    return read_wav(path)


def _augment_record(
    rec: Utterance,
    base_dir: Path | None,
    noise_files: tuple[str, ...],
    spec: AugmentSpec,
    out_dir: Path,
    noise_cache: dict[str, AudioClip],
) -> tuple[list[Utterance], list[dict]]:
    clean = _record_clip(rec, base_dir)
    rng = random.Random(f"{spec.seed}:{rec.id}")
    chosen = rng.sample(list(noise_files), spec.noises_per_clip)
    records: list[Utterance] = []
    provenance: list[dict] = []
    for noise_file, level in zip(chosen, spec.snr_levels_db):
        if noise_file not in noise_cache:
            noise_cache[noise_file] = read_wav(noise_file)
        noise = noise_cache[noise_file]
        offset = rng.randrange(noise.samples.size) if spec.random_offset else 0
        mixed = mix_at_snr_report(clean, noise, level, offset)
        new_id = f"{rec.id}#snr{level:g}"
        wav_name = f"{new_id}.wav"
        write_wav(mixed.audio, out_dir / wav_name)
        records.append(Utterance(new_id, list(rec.words), list(rec.slots), rec.intent, wav_name))
        provenance.append(
            {
                "id": new_id,
                "source_id": rec.id,
                "noise": noise_file,
                "snr_db": level,
                "gain": mixed.gain,
                "clipped": mixed.clipped,
            }
        )
    return records, provenance


def augment_corpus(
    manifest: Manifest,
    pool: NoisePool,
    spec: AugmentSpec,
    split: str,
    out_dir: str | Path,
    jobs: int = 1,
) -> tuple[Manifest, list[dict]]:
    """Mix every record with sampled noises at the requested SNR ladder.

    Emits ``noises_per_clip`` records per input record with ids
    ``{id}#snr{level}``, writes the mixed WAVs under out_dir, and returns the
    augmented manifest plus a provenance entry per output record.  The noise
    draw is seeded per (seed, record id), so results are independent of
    processing order and of ``jobs``.
    """
    noise_files = pool.split(split)
    if len(noise_files) < spec.noises_per_clip:
        raise ValidationError(
            f"{split} noise pool has {len(noise_files)} files, need {spec.noises_per_clip}"
        )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    noise_cache: dict[str, AudioClip] = {}

    def one(rec: Utterance):
        return _augment_record(rec, manifest.base_dir, noise_files, spec, out_dir, noise_cache)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool_exec:
            results = list(pool_exec.map(one, manifest.records))
    else:
        results = [one(rec) for rec in manifest.records]
    new_records = [rec for records, _ in results for rec in records]
    provenance = [entry for _, entries in results for entry in entries]
    return build_manifest(new_records, out_dir), provenance


def mask_features(
    features: np.ndarray,
    time_masks: int,
    freq_masks: int,
    max_time_width: int,
    max_freq_width: int,
    seed: int = 0,
) -> np.ndarray:
    """Masking transform: contiguous time/feature ranges set to the matrix mean."""
    features = np.asarray(features, dtype=np.float64)
    n_time, n_freq = features.shape
    if not (0 <= max_time_width <= n_time and 0 <= max_freq_width <= n_freq):
        raise ValidationError(
            f"mask widths ({max_time_width}, {max_freq_width}) exceed matrix extents {features.shape}"
        )
    rng = np.random.default_rng(seed)
    out = features.copy()
    fill = features.mean()
    for _ in range(time_masks):
        width = int(rng.integers(0, max_time_width + 1))
        start = int(rng.integers(0, n_time - width + 1))
        out[start : start + width, :] = fill
    for _ in range(freq_masks):
        width = int(rng.integers(0, max_freq_width + 1))
        start = int(rng.integers(0, n_freq - width + 1))
        out[:, start : start + width] = fill
    return out


@dataclass
class FeatureConfig:
    frame_length: int = 256
    hop: int = 160
    num_bands: int = 20


def log_power_features(clip: AudioClip, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Banded log-power spectrogram, standardized per utterance (time x bands)."""
    x = clip.samples
    if x.size < config.frame_length:
        x = np.pad(x, (0, config.frame_length - x.size))
    count = 1 + (x.size - config.frame_length) // config.hop
    idx = np.arange(config.frame_length)[None, :] + config.hop * np.arange(count)[:, None]
    frames = x[idx] * np.hanning(config.frame_length)
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    bands = np.array_split(power, config.num_bands, axis=1)
    feats = np.log(np.stack([b.mean(axis=1) for b in bands], axis=1) + 1e-10)
    return (feats - feats.mean()) / (feats.std() + 1e-8)
