import numpy as np
import pytest

from ehnet.core.exceptions import InputDataError
from ehnet.models.schemas import StftConfig
from ehnet.models.tensors import Spectrogram, Waveform
from ehnet.services.dsp_service import frame_count, istft, output_length, reconstruct_with_phase, stft
from ehnet.utils.windows import is_cola_pair, make_window, squared_overlap_add


def _interior(cfg: StftConfig, length: int) -> slice:
    return slice(cfg.fft_size, length - cfg.fft_size)


class TestWindows:
    def test_periodic_hann(self):
        window = make_window("hann", 8)
        assert window[0] == pytest.approx(0.0)
        assert window[4] == pytest.approx(1.0)

    def test_sqrt_hann_squares_to_hann(self):
        np.testing.assert_allclose(make_window("sqrt_hann", 64) ** 2, make_window("hann", 64), atol=1e-15)

    def test_squared_envelope(self):
        envelope = squared_overlap_add(make_window("sqrt_hann", 512), 256)
        np.testing.assert_allclose(envelope, 1.0, atol=1e-12)
        assert squared_overlap_add(make_window("hann", 512), 256).min() > 0

    def test_cola_pairs(self):
        assert is_cola_pair("hann", 512, 256)
        assert is_cola_pair("sqrt_hann", 512, 256)
        assert is_cola_pair("rect", 512, 512)
        assert not is_cola_pair("hann", 512, 400)

    def test_unknown_window(self):
        with pytest.raises(ValueError):
            make_window("kaiser", 16)

    def test_non_cola_config_rejected(self):
        with pytest.raises(ValueError, match="constant-overlap-add"):
            StftConfig(fft_size=512, hop_size=400)


class TestStft:
    def test_default_has_256_rows(self, default_stft, random_wave):
        spectrogram = stft(random_wave(16000), default_stft)
        assert spectrogram.d == 256
        assert spectrogram.frames == frame_count(16000, default_stft) == 61

    def test_zero_waveform_gives_zero_magnitudes(self, default_stft):
        spectrogram = stft(Waveform(np.zeros(2048), 16000), default_stft)
        assert np.all(spectrogram.magnitudes == 0)

    def test_cosine_at_bin_frequency_concentrates_energy(self):
        cfg = StftConfig(fft_size=64, hop_size=64, window="rect", bins_kept=33)
        k = 5
        n = np.arange(64)
        spectrogram = stft(Waveform(np.cos(2 * np.pi * k * n / 64), 16000), cfg)
        column = spectrogram.magnitudes[:, 0]
        assert int(np.argmax(column)) == k
        others = np.delete(column, k)
        assert np.all(others <= 1e-10 * column[k])

    def test_direct_dft_oracle(self, rng):
        cfg = StftConfig(fft_size=16, hop_size=8, window="hann", bins_kept=9)
        samples = rng.normal(size=16)
        spectrogram = stft(Waveform(samples, 16000), cfg)
        window = make_window("hann", 16)
        n = np.arange(16)
        for k in range(9):
            expected = np.sum(samples * window * np.exp(-2j * np.pi * k * n / 16))
            assert spectrogram.magnitudes[k, 0] == pytest.approx(abs(expected), abs=1e-12)

    def test_frame_energy_matches_spectrum(self, rng, tiny_stft):
        samples = rng.normal(size=200)
        spectrogram = stft(Waveform(samples, 16000), tiny_stft)
        window = make_window("hann", 16)
        n = np.arange(16)
        dft = np.exp(-2j * np.pi * np.outer(n, n) / 16)
        bins = spectrogram.complex_bins()
        for idx in range(spectrogram.frames):
            frame = samples[idx * 8: idx * 8 + 16] * window
            energy = float(np.sum(frame**2))
            assert np.sum(np.abs(dft @ frame) ** 2) / 16 == pytest.approx(energy, rel=1e-9)
            power = np.abs(bins[:, idx]) ** 2
            assert (power[0] + 2 * power[1:-1].sum() + power[-1]) / 16 == pytest.approx(energy, rel=1e-9)

    def test_phases_in_half_open_interval(self, default_stft, random_wave):
        phases = stft(random_wave(8000), default_stft).phases
        assert phases.min() > -np.pi and phases.max() <= np.pi

    def test_insufficient_samples(self, default_stft):
        with pytest.raises(InputDataError, match="insufficient samples"):
            stft(Waveform(np.ones(100), 16000), default_stft)


class TestIstft:
    @pytest.mark.parametrize("window,hop", [("hann", 256), ("sqrt_hann", 256), ("hamming", 256), ("rect", 512)])
    def test_round_trip(self, random_wave, window, hop):
        cfg = StftConfig(window=window, hop_size=hop)
        wave = random_wave(8192)
        rebuilt = istft(stft(wave, cfg))
        assert len(rebuilt) == output_length(frame_count(8192, cfg), cfg)
        interior = _interior(cfg, len(rebuilt))
        reference = wave.samples[interior]
        error = np.max(np.abs(rebuilt.samples[interior] - reference)) / np.max(np.abs(reference))
        assert error <= 1e-6

    def test_round_trip_over_many_waveforms(self, rng, default_stft):
        for _ in range(20):
            wave = Waveform(rng.normal(scale=0.2, size=4096), 16000)
            rebuilt = istft(stft(wave, default_stft))
            interior = _interior(default_stft, len(rebuilt))
            np.testing.assert_allclose(rebuilt.samples[interior], wave.samples[interior], rtol=0, atol=1e-9)

    def test_zero_magnitudes_give_silence(self, default_stft):
        spectrogram = Spectrogram(np.zeros((256, 5)), np.zeros((256, 5)), default_stft)
        assert np.all(istft(spectrogram).samples == 0)

    def test_shape_mismatch(self, default_stft):
        with pytest.raises(InputDataError):
            Spectrogram(np.zeros((256, 5)), np.zeros((256, 4)), default_stft)


class TestReconstructWithPhase:
    def test_identity(self, default_stft, random_wave):
        noisy = stft(random_wave(8192), default_stft)
        rebuilt = reconstruct_with_phase(noisy.magnitudes, noisy)
        np.testing.assert_allclose(rebuilt.samples, istft(noisy).samples, atol=1e-12)

    def test_zero_prediction_is_silent(self, default_stft, random_wave):
        noisy = stft(random_wave(8192), default_stft)
        rebuilt = reconstruct_with_phase(np.zeros_like(noisy.magnitudes), noisy)
        assert np.all(np.abs(rebuilt.samples) < 1e-15)

    def test_halved_magnitudes_halve_the_output(self, default_stft, random_wave):
        noisy = stft(random_wave(8192), default_stft)
        full = reconstruct_with_phase(noisy.magnitudes, noisy)
        half = reconstruct_with_phase(0.5 * noisy.magnitudes, noisy)
        interior = _interior(default_stft, len(full))
        np.testing.assert_allclose(half.samples[interior], 0.5 * full.samples[interior], rtol=1e-9, atol=1e-15)

    def test_shape_mismatch(self, default_stft, random_wave):
        noisy = stft(random_wave(8192), default_stft)
        with pytest.raises(InputDataError):
            reconstruct_with_phase(noisy.magnitudes[:, :-1], noisy)


class TestResidualBins:
    def test_nyquist_bin_is_carried(self, default_stft, random_wave):
        wave = random_wave(4096)
        spec = stft(wave, default_stft)
        assert spec.residual.shape == (1, spec.frames)
        first = np.fft.rfft(wave.samples[:512] * make_window("hann", 512))
        assert spec.residual[0, 0] == pytest.approx(first[256], abs=1e-9)

    def test_residual_follows_the_highest_kept_bin(self, default_stft, random_wave):
        noisy = stft(random_wave(4096), default_stft)
        clean = noisy.magnitudes.copy()
        clean[-1] *= 0.25
        rebuilt = reconstruct_with_phase(clean, noisy)
        expected = istft(Spectrogram(clean, noisy.phases, default_stft, residual=0.25 * noisy.residual))
        np.testing.assert_allclose(rebuilt.samples, expected.samples, atol=1e-12)
