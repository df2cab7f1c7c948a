import math
from pathlib import Path

import numpy as np
import pytest

from ehnet.core.exceptions import CorpusAbortError, DegenerateSourceError, InputDataError
from ehnet.models.schemas import DatasetManifest, MixSpec
from ehnet.models.tensors import Waveform
from ehnet.services.data_service import (
    CorpusGenerator,
    apply_rir,
    ensure_disjoint_noise,
    fit_noise,
    generate_corpus,
    mix_at_snr,
    plan_manifest,
    record_rng,
)
from ehnet.services.metrics_service import snr_db
from ehnet.utils.demo_assets import DEMO_RECORDS, demo_manifest, write_demo_assets, write_demo_manifest
from ehnet.utils.manifest_io import read_index, read_manifest, write_manifest
from ehnet.utils.wav_io import read_wav


def _wave(samples) -> Waveform:
    return Waveform(np.asarray(samples, dtype=np.float64), 16000)


def naive_convolve(x, h):
    out = np.zeros(x.size)
    for n in range(x.size):
        total = 0.0
        for m in range(h.size):
            if 0 <= n - m < x.size:
                total += h[m] * x[n - m]
        out[n] = total
    return out


class TestMixing:
    def test_scale_factor(self):
        clean = _wave(np.full(1000, 0.2))
        noise = _wave(np.tile([0.1, -0.1], 500))
        _, scaled = mix_at_snr(clean, noise, 10.0)
        assert scaled.power() / noise.power() == pytest.approx(0.4, rel=1e-12)

    def test_zero_db_matches_powers(self, rng):
        clean = _wave(rng.normal(scale=0.1, size=4000))
        noise = _wave(rng.normal(scale=0.5, size=9000))
        noisy, scaled = mix_at_snr(clean, noise, 0.0, record_rng(3))
        assert scaled.power() / clean.power() == pytest.approx(1.0, rel=1e-6)
        np.testing.assert_allclose(noisy.samples, clean.samples + scaled.samples, atol=1e-15)

    def test_infinite_snr_disables_mixing(self, rng):
        clean = _wave(rng.normal(size=500))
        noisy, scaled = mix_at_snr(clean, _wave(rng.normal(size=500)), math.inf)
        np.testing.assert_array_equal(noisy.samples, clean.samples)
        assert scaled.power() == 0.0

    def test_achieved_snr(self, rng):
        clean = _wave(rng.normal(scale=0.1, size=4000))
        noisy, _ = mix_at_snr(clean, _wave(rng.normal(size=4000)), 17.5, record_rng(1))
        assert snr_db(clean, noisy) == pytest.approx(17.5, abs=1e-9)

    def test_loop_oracle(self, rng):
        for _ in range(50):
            n = int(rng.integers(8, 64))
            clean, noise = rng.normal(size=n), rng.normal(size=n)
            target = float(rng.uniform(0, 30))
            noisy, _ = mix_at_snr(_wave(clean), _wave(noise), target)
            p_clean = sum(v * v for v in clean) / n
            p_noise = sum(v * v for v in noise) / n
            alpha = math.sqrt(p_clean / (p_noise * 10 ** (target / 10)))
            expected = [c + alpha * v for c, v in zip(clean, noise)]
            np.testing.assert_allclose(noisy.samples, expected, atol=1e-12, rtol=0)

    def test_mixing_is_linear(self, rng):
        clean, noise = _wave(rng.normal(size=800)), _wave(rng.normal(size=800))
        base, _ = mix_at_snr(clean, noise, 5.0)
        scaled, _ = mix_at_snr(_wave(3.0 * clean.samples), _wave(3.0 * noise.samples), 5.0)
        np.testing.assert_allclose(scaled.samples, 3.0 * base.samples, rtol=1e-12, atol=1e-14)

    def test_degenerate_clean(self, rng):
        with pytest.raises(DegenerateSourceError, match="degenerate source"):
            mix_at_snr(_wave(np.zeros(100)), _wave(rng.normal(size=100)), 5.0)

    def test_degenerate_noise(self, rng):
        with pytest.raises(DegenerateSourceError, match="degenerate source"):
            mix_at_snr(_wave(rng.normal(size=100)), _wave(np.zeros(100)), 5.0)

    def test_sample_rate_mismatch(self, rng):
        with pytest.raises(InputDataError):
            mix_at_snr(_wave(rng.normal(size=10)), Waveform(rng.normal(size=10), 8000), 5.0)


class TestNoiseFitting:
    def test_long_noise_is_cropped(self, rng):
        noise = np.arange(100.0)
        segment = fit_noise(noise, 30, rng)
        assert segment.size == 30
        np.testing.assert_array_equal(np.diff(segment), 1.0)

    def test_short_noise_is_looped(self, rng):
        noise = np.arange(10.0)
        segment = fit_noise(noise, 25, rng)
        assert segment.size == 25
        np.testing.assert_array_equal(segment, noise[(int(segment[0]) + np.arange(25)) % 10])

    def test_seeded(self):
        noise = np.arange(1000.0)
        np.testing.assert_array_equal(fit_noise(noise, 50, record_rng(9)), fit_noise(noise, 50, record_rng(9)))


class TestReverberation:
    def test_unit_impulse(self, rng):
        clean = _wave(rng.normal(size=256))
        np.testing.assert_allclose(apply_rir(clean, np.array([1.0])).samples, clean.samples, atol=1e-12)

    def test_delayed_impulse_shifts(self, rng):
        samples = np.concatenate([rng.normal(size=200), np.zeros(5)])
        rir = np.zeros(6)
        rir[5] = 1.0
        wet = apply_rir(_wave(samples), rir)
        np.testing.assert_allclose(wet.samples[5:], samples[:-5], atol=1e-12)
        np.testing.assert_allclose(wet.samples[:5], 0.0, atol=1e-12)

    def test_naive_oracle(self, rng):
        for _ in range(50):
            x = rng.normal(size=128)
            h = rng.normal(size=32) * np.exp(-np.arange(32) / 8.0)
            wet = naive_convolve(x, h)
            expected = wet * math.sqrt(np.mean(x**2) / np.mean(wet**2))
            np.testing.assert_allclose(apply_rir(_wave(x), h).samples, expected, atol=1e-12, rtol=0)

    def test_output_keeps_clean_rms(self, rng):
        clean = _wave(rng.normal(scale=0.2, size=1000))
        wet = apply_rir(clean, rng.normal(size=50))
        assert wet.power() == pytest.approx(clean.power(), rel=1e-12)
        assert len(wet) == len(clean)

    def test_empty_rir(self, rng):
        with pytest.raises(DegenerateSourceError):
            apply_rir(_wave(rng.normal(size=10)), np.array([]))


class TestManifestPlanning:
    def test_plan_is_seeded(self, tmp_path):
        clean = [tmp_path / "a.wav", tmp_path / "b.wav"]
        noise = [tmp_path / "n1.wav", tmp_path / "n2.wav"]
        first = plan_manifest(clean, noise, count=20, seed=4)
        second = plan_manifest(clean, noise, count=20, seed=4)
        assert first == second
        assert len(first.specs) == 20
        assert all(0.0 <= spec.target_snr_db <= 30.0 for spec in first.specs)
        assert all(spec.rir_path is None for spec in first.specs)

    def test_unseen_noise_must_be_disjoint(self, tmp_path):
        train = plan_manifest([tmp_path / "a.wav"], [tmp_path / "n1.wav"], count=3)
        ensure_disjoint_noise([tmp_path / "other" / "n2.wav"], train)
        with pytest.raises(InputDataError, match="overlap"):
            ensure_disjoint_noise([tmp_path / "other" / "n1.wav"], train)
        with pytest.raises(InputDataError):
            plan_manifest([tmp_path / "a.wav"], [tmp_path / "n1.wav"], forbidden_noise=[tmp_path / "n1.wav"])

    def test_empty_lists(self):
        with pytest.raises(InputDataError):
            plan_manifest([], [Path("n.wav")])

    def test_manifest_file_round_trip(self, tmp_path):
        assets = write_demo_assets(tmp_path)
        manifest = demo_manifest(assets, seed=2)
        path = write_manifest(tmp_path / "demo" / "manifest.tsv", manifest)
        loaded = read_manifest(path)
        assert loaded.split == "demo" and loaded.rng == "philox"
        assert [s.clean_path.resolve() for s in loaded.specs] == [s.clean_path.resolve() for s in manifest.specs]
        assert [s.target_snr_db for s in loaded.specs] == [s.target_snr_db for s in manifest.specs]

    def test_bad_manifest_row(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("a.wav\tn.wav\t-\tten\t1\t0\n", encoding="utf-8")
        with pytest.raises(InputDataError, match="invalid record"):
            read_manifest(path)

    def test_only_philox(self):
        with pytest.raises(ValueError):
            DatasetManifest(rng="mt19937")


class TestCorpusGeneration:
    def test_demo_corpus(self, tmp_path):
        manifest = read_manifest(write_demo_manifest(tmp_path / "data", seed=0))
        summary = generate_corpus(manifest, tmp_path / "corpus")
        assert summary.written == DEMO_RECORDS and summary.skipped == 0
        entries = read_index(summary.index_path)
        assert [e.pair_id for e in entries] == [f"demo_{i:05d}" for i in range(DEMO_RECORDS)]
        for entry in entries:
            assert entry.noisy_path.is_file() and entry.clean_path.is_file()
            achieved = snr_db(read_wav(entry.clean_path), read_wav(entry.noisy_path))
            assert achieved == pytest.approx(entry.target_snr_db, abs=0.02)
        assert sum(summary.snr_histogram().values()) == DEMO_RECORDS

    def test_hundred_planned_pairs_hit_their_targets(self, tmp_path):
        assets = write_demo_assets(tmp_path / "data")
        manifest = plan_manifest(assets.clean_files, assets.noise_files, assets.rir_files,
                                 count=100, seed=5, split="bulk")
        summary = generate_corpus(manifest, tmp_path / "corpus", workers=4)
        assert summary.written == 100 and summary.skipped == 0
        for entry in read_index(summary.index_path):
            achieved = snr_db(read_wav(entry.clean_path), read_wav(entry.noisy_path))
            assert achieved == pytest.approx(entry.target_snr_db, abs=0.02)

    def test_dry_target_records_the_mixing_snr(self, tmp_path):
        assets = write_demo_assets(tmp_path / "data")
        manifest = plan_manifest(assets.clean_files, assets.noise_files, assets.rir_files,
                                 count=12, seed=3, split="dry", dry_target=True)
        summary = generate_corpus(manifest, tmp_path / "corpus")
        assert summary.written == 12
        for entry in summary.entries:
            assert entry.achieved_snr_db == pytest.approx(entry.target_snr_db, abs=0.02)
        recorded = [e.achieved_snr_db for e in read_index(summary.index_path)]
        assert recorded == pytest.approx([e.achieved_snr_db for e in summary.entries], abs=1e-4)

    def test_regeneration_is_byte_identical(self, tmp_path):
        manifest = read_manifest(write_demo_manifest(tmp_path / "data", seed=1))
        first = CorpusGenerator(tmp_path / "one").generate(manifest)
        second = CorpusGenerator(tmp_path / "two", workers=3).generate(manifest)
        for a, b in zip(first.entries, second.entries):
            assert a.noisy_path.read_bytes() == b.noisy_path.read_bytes()
            assert a.clean_path.read_bytes() == b.clean_path.read_bytes()

    def test_index_header(self, tmp_path):
        manifest = read_manifest(write_demo_manifest(tmp_path / "data"))
        summary = generate_corpus(manifest, tmp_path / "corpus")
        text = summary.index_path.read_text(encoding="utf-8")
        assert "#! rng=philox" in text and "#! sample_rate=16000" in text

    def test_one_bad_record_in_ten_is_skipped(self, tmp_path):
        assets = write_demo_assets(tmp_path)
        specs = [MixSpec(clean_path=assets.clean_files[i % 3], noise_path=assets.noise_files[0],
                         target_snr_db=10.0, seed=i) for i in range(9)]
        specs.append(MixSpec(clean_path=tmp_path / "missing.wav", noise_path=assets.noise_files[0],
                             target_snr_db=10.0, seed=9))
        summary = generate_corpus(DatasetManifest(split="test", specs=specs), tmp_path / "corpus")
        assert summary.written == 9 and summary.skipped == 1
        assert len(read_index(summary.index_path)) == 9

    def test_too_many_skips_abort(self, tmp_path):
        assets = write_demo_assets(tmp_path)
        manifest = demo_manifest(assets)
        manifest.specs[0] = manifest.specs[0].model_copy(update={"noise_path": tmp_path / "missing.wav"})
        with pytest.raises(CorpusAbortError):
            generate_corpus(manifest, tmp_path / "corpus")

    def test_empty_manifest(self, tmp_path):
        with pytest.raises(InputDataError, match="empty manifest"):
            generate_corpus(DatasetManifest(split="x"), tmp_path / "corpus")

    def test_dry_target_keeps_the_source(self, tmp_path):
        assets = write_demo_assets(tmp_path)
        spec = MixSpec(clean_path=assets.clean_files[0], noise_path=assets.noise_files[0],
                       rir_path=assets.rir_files[0], target_snr_db=math.inf, seed=0)
        generator = CorpusGenerator(tmp_path / "corpus")
        noisy, target = generator.render(DatasetManifest(dry_target=True, specs=[spec]), spec)
        dry = read_wav(assets.clean_files[0])
        np.testing.assert_allclose(target.samples, dry.samples, atol=1e-12)
        assert not np.allclose(noisy.samples, dry.samples)

    def test_gain_is_applied_to_both_sides(self, tmp_path):
        assets = write_demo_assets(tmp_path)
        spec = MixSpec(clean_path=assets.clean_files[0], noise_path=assets.noise_files[0],
                       target_snr_db=5.0, seed=0, gain_db=-6.0)
        generator = CorpusGenerator(tmp_path / "corpus")
        noisy, target = generator.render(DatasetManifest(specs=[spec]), spec)
        dry = read_wav(assets.clean_files[0])
        np.testing.assert_allclose(target.samples, dry.samples * 10 ** (-6.0 / 20), atol=1e-12)
        assert snr_db(target, noisy) == pytest.approx(5.0, abs=1e-9)
