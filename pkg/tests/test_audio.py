import math
import wave

import numpy as np
import pytest

from oracles import measured_snr_db
from slu.audio import (
    AudioClip,
    AugmentSpec,
    FeatureConfig,
    NoisePool,
    augment_corpus,
    fit_length,
    log_power_features,
    mask_features,
    mix_at_snr,
    mix_at_snr_report,
    read_wav,
    rms,
    write_wav,
)
from slu.data import Utterance, build_manifest
from slu.errors import AudioFormatError, ValidationError


def tone(freq=440.0, seconds=1.0, rate=16000, amp=0.5):
    t = np.arange(int(rate * seconds)) / rate
    return AudioClip(amp * np.sin(2 * np.pi * freq * t), rate)


def test_wav_round_trip(tmp_path):
    clip = tone()
    path = tmp_path / "t.wav"
    write_wav(clip, path)
    back = read_wav(path)
    assert back.sample_rate == 16000
    assert back.samples.size == clip.samples.size
    assert np.abs(back.samples - clip.samples).max() <= 1 / 32768


def test_wav_round_trip_at_full_scale(tmp_path):
    clip = AudioClip(np.array([1.0, -1.0, 0.0, 0.99997]), 16000)
    path = tmp_path / "t.wav"
    write_wav(clip, path)
    back = read_wav(path)
    assert np.abs(back.samples - clip.samples).max() <= 1 / 32768


def test_stereo_rejected(tmp_path):
    path = tmp_path / "stereo.wav"
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(2)
        fh.setsampwidth(2)
        fh.setframerate(16000)
        fh.writeframes(b"\x00\x00\x00\x00" * 10)
    with pytest.raises(AudioFormatError, match="mono"):
        read_wav(path)


def test_wrong_bit_depth_rejected(tmp_path):
    path = tmp_path / "w8.wav"
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(1)
        fh.setframerate(16000)
        fh.writeframes(b"\x00" * 10)
    with pytest.raises(AudioFormatError, match="16-bit"):
        read_wav(path)


def test_empty_data_chunk_rejected(tmp_path):
    path = tmp_path / "empty.wav"
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(16000)
    with pytest.raises(AudioFormatError, match="empty"):
        read_wav(path)


def test_not_a_wav_rejected(tmp_path):
    path = tmp_path / "x.wav"
    path.write_bytes(b"definitely not RIFF")
    with pytest.raises(AudioFormatError):
        read_wav(path)


def test_rms_values():
    assert rms(AudioClip(np.full(100, 0.5), 16000)) == pytest.approx(0.5)
    assert rms(AudioClip(np.zeros(10), 16000)) == 0.0
    sine = tone(freq=100.0, seconds=1.0, amp=1.0)  # 100 periods
    assert rms(sine) == pytest.approx(1 / math.sqrt(2), abs=1e-3)
    with pytest.raises(ValidationError):
        rms(np.array([]))


def test_fit_length_loops_and_truncates():
    x = np.array([1.0, 2.0, 3.0])
    assert np.array_equal(fit_length(x, 7), [1, 2, 3, 1, 2, 3, 1])
    assert np.array_equal(fit_length(x, 2), [1, 2])
    assert np.array_equal(fit_length(x, 4, offset=1), [2, 3, 1, 2])


def test_mix_gain_examples():
    clean = tone(freq=300, amp=0.3)
    noise = AudioClip(np.resize([0.3, -0.3], clean.samples.size), 16000)
    # equal RMS at 0 dB -> unit gain
    r0 = mix_at_snr_report(clean, AudioClip(noise.samples * rms(clean) / rms(noise), 16000), 0.0)
    assert r0.gain == pytest.approx(1.0)
    # equal RMS at 20 dB -> gain 0.1
    r20 = mix_at_snr_report(clean, AudioClip(noise.samples * rms(clean) / rms(noise), 16000), 20.0)
    assert r20.gain == pytest.approx(0.1)


def test_mix_measured_snr_and_linearity():
    rng = np.random.default_rng(0)
    clean = AudioClip(0.25 * np.sin(np.linspace(0, 200, 4000)), 16000)
    noise = AudioClip(0.2 * rng.standard_normal(1500), 16000)
    for target in (0.0, 10.0, 20.0, 30.0, 40.0):
        result = mix_at_snr_report(clean, noise, target)
        assert result.clipped == 0
        scaled = result.audio.samples - clean.samples  # linearity: mix - clean == g * noise
        assert measured_snr_db(clean.samples, scaled) == pytest.approx(target, abs=1e-6)
    low = mix_at_snr_report(clean, noise, 0.0)
    high = mix_at_snr_report(clean, noise, 40.0)
    assert rms(high.audio.samples - clean.samples) < rms(low.audio.samples - clean.samples)


def test_mix_errors():
    clean = tone()
    silent = AudioClip(np.zeros(100), 16000)
    with pytest.raises(ValidationError):
        mix_at_snr(clean, silent, 10.0)
    with pytest.raises(ValidationError):
        mix_at_snr(silent, clean, 10.0)
    with pytest.raises(ValidationError):
        mix_at_snr(clean, AudioClip(np.ones(10) * 0.1, 8000), 10.0)


def test_mix_counts_clipping():
    clean = AudioClip(np.full(100, 0.9), 16000)
    noise = AudioClip(np.full(100, 0.9), 16000)
    result = mix_at_snr_report(clean, noise, 0.0)
    assert result.clipped == 100
    assert result.audio.samples.max() <= 1.0


def test_noise_pool_disjointness():
    with pytest.raises(ValidationError):
        NoisePool(("a.wav",), ("a.wav", "b.wav"))
    pool = NoisePool(("a.wav",), ("b.wav",))
    assert pool.split("train") == ("a.wav",)
    with pytest.raises(ValidationError):
        pool.split("dev")


def test_noise_pool_from_flat_directory(tmp_path):
    for i in range(6):
        write_wav(tone(freq=200 + 50 * i, seconds=0.05), tmp_path / f"n{i}.wav")
    pool = NoisePool.from_directory(tmp_path)
    assert len(pool.train_noises) == 3 and len(pool.test_noises) == 3
    assert not set(pool.train_noises) & set(pool.test_noises)


def test_augment_spec_requires_matched_lengths():
    with pytest.raises(ValidationError):
        AugmentSpec(snr_levels_db=(0.0, 10.0), noises_per_clip=5)


def _noise_dir(tmp_path, count=12):
    rng = np.random.default_rng(5)
    d = tmp_path / "noise"
    d.mkdir(parents=True)
    for i in range(count):
        write_wav(AudioClip(0.3 * rng.standard_normal(2000), 16000), d / f"n{i}.wav")
    return d


def _clean_manifest(tmp_path, n=10):
    wavs = tmp_path / "clean"
    wavs.mkdir()
    records = []
    for i in range(n):
        write_wav(tone(freq=250 + 30 * i, seconds=0.2, amp=0.3), wavs / f"u{i}.wav")
        records.append(Utterance(f"u{i}", ["hello"], ["O"], "greet", f"u{i}.wav"))
    return build_manifest(records, wavs)


def test_augment_five_fold(tmp_path):
    manifest = _clean_manifest(tmp_path, 10)
    pool = NoisePool.from_directory(_noise_dir(tmp_path))
    spec = AugmentSpec(seed=17)
    out, provenance = augment_corpus(manifest, pool, spec, "train", tmp_path / "aug")
    assert len(out.records) == 50
    assert len(provenance) == 50
    ids = [r.id for r in out.records]
    assert len(set(ids)) == 50
    assert all("#snr" in i for i in ids)
    # source ids recoverable by prefix; SNR ladder attached per source
    for i in range(10):
        mine = [p for p in provenance if p["source_id"] == f"u{i}"]
        assert sorted(p["snr_db"] for p in mine) == [0.0, 10.0, 20.0, 30.0, 40.0]
    # train noises only
    used = {p["noise"] for p in provenance}
    assert used <= set(pool.train_noises)
    assert not used & set(pool.test_noises)


def test_augment_deterministic_and_job_independent(tmp_path):
    manifest = _clean_manifest(tmp_path, 4)
    pool = NoisePool.from_directory(_noise_dir(tmp_path))
    spec = AugmentSpec(seed=3)
    out1, prov1 = augment_corpus(manifest, pool, spec, "test", tmp_path / "a1")
    out2, prov2 = augment_corpus(manifest, pool, spec, "test", tmp_path / "a2", jobs=4)
    assert [r.id for r in out1.records] == [r.id for r in out2.records]
    assert prov1 == prov2
    for rec in out1.records:
        b1 = (tmp_path / "a1" / rec.audio_path).read_bytes()
        b2 = (tmp_path / "a2" / rec.audio_path).read_bytes()
        assert b1 == b2


def test_augment_requires_audio_and_enough_noises(tmp_path):
    pool = NoisePool.from_directory(_noise_dir(tmp_path, count=6))
    manifest = build_manifest([Utterance("nosound", ["a"], ["O"], "x")])
    with pytest.raises(ValidationError, match="pool"):
        augment_corpus(manifest, pool, AugmentSpec(seed=0), "train", tmp_path / "o")
    big_pool = NoisePool.from_directory(_noise_dir(tmp_path / "more", count=12))
    with pytest.raises(ValidationError, match="nosound"):
        augment_corpus(manifest, big_pool, AugmentSpec(seed=0), "train", tmp_path / "o")


def test_mask_features_identity_and_full_width():
    feats = np.arange(24.0).reshape(6, 4)
    assert np.array_equal(mask_features(feats, 0, 0, 0, 0), feats)
    masked = mask_features(feats, 1, 0, 6, 0, seed=1)
    # some rows may be replaced by the global mean; shape is preserved
    assert masked.shape == feats.shape
    # seed 7 draws a single time mask spanning all six frames
    forced = mask_features(feats, 1, 0, 6, 0, seed=7)
    assert np.allclose(forced, np.full_like(feats, feats.mean()))
    # masked rows take the mean of the ORIGINAL matrix
    one_row = mask_features(feats, 50, 0, 6, 0, seed=0)
    assert np.allclose(one_row, np.full_like(feats, feats.mean()))


def test_mask_features_deterministic_and_validated():
    feats = np.random.default_rng(0).normal(size=(10, 8))
    a = mask_features(feats, 2, 2, 4, 3, seed=11)
    b = mask_features(feats, 2, 2, 4, 3, seed=11)
    assert np.array_equal(a, b)
    with pytest.raises(ValidationError):
        mask_features(feats, 1, 1, 11, 3)
    with pytest.raises(ValidationError):
        mask_features(feats, 1, 1, 4, -1)


def test_log_power_features_shape_and_determinism():
    clip = tone(seconds=0.3)
    config = FeatureConfig(frame_length=256, hop=160, num_bands=20)
    feats = log_power_features(clip, config)
    expected_frames = 1 + (clip.samples.size - 256) // 160
    assert feats.shape == (expected_frames, 20)
    assert np.array_equal(feats, log_power_features(clip, config))
    assert np.isfinite(feats).all()
