import numpy as np
import pytest

from moac.continuous import (Waveform, add_waveform_noise, filter_bank, n0_for_snr,
                             sample_noise_variance, synthesize, wmfs_sample)
from moac.model import ChannelConfig, apply_channel, build_D, flatten


def overlap_energy(cfg, s):
    """Integral of |sum_m h_m x_m(t - tau_m)|^2 from pairwise pulse overlaps."""
    T = cfg.T
    total = 0j
    for m in range(cfg.M):
        for mp in range(cfg.M):
            for l in range(cfg.L):
                a0 = l * T + cfg.tau[m]
                for lp in range(cfg.L):
                    b0 = lp * T + cfg.tau[mp]
                    ov = max(0.0, min(a0 + T, b0 + T) - max(a0, b0))
                    if ov:
                        total += cfg.h[m] * np.conj(cfg.h[mp]) * s[m, l] * s[mp, lp] * ov
    return total.real


def matched_filter_samples(w, cfg, Q):
    """Filter with a causal rectangle of width delta_tau_m, normalized, then sample.

    Literal filter-then-sample realization: the rectangle ending at
    (i-1)T + tau_{m+1} integrates exactly the interval of y_m[i].
    """
    bank = filter_bank(cfg, Q)
    y = []
    for i in range(cfg.L + 1):
        for m in range(cfg.M):
            if len(y) == cfg.n_samples:
                break
            n = bank.widths[m]
            filtered = np.convolve(w.samples, np.ones(n) / n)
            y.append(filtered[i * Q + bank.edges[m + 1] - 1])
    return np.array(y)


class TestSynthesize:
    def test_single_pulse_train(self):
        cfg = ChannelConfig(M=1, L=2, tau=[0], h=[1])
        w = synthesize(cfg, [[5.0, 7.0]], Q=64)
        coarse = w.samples.real.reshape(-1, 16)[:, 0]
        np.testing.assert_array_equal(coarse, [5, 5, 5, 5, 7, 7, 7, 7, 0, 0, 0, 0])
        assert w.samples.size == 64 * 3

    def test_two_sensor_staircase(self):
        cfg = ChannelConfig(M=2, L=2, tau=[0, 0.5], h=[1, 1])
        w = synthesize(cfg, np.ones((2, 2)), Q=64)
        coarse = w.samples.real.reshape(-1, 16)[:, 0]
        np.testing.assert_array_equal(coarse, [1, 1, 2, 2, 2, 2, 2, 2, 1, 1, 0, 0])

    def test_energy_matches_overlap_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            cfg = ChannelConfig.random(int(rng.integers(1, 5)), int(rng.integers(1, 6)),
                                       seed=rng, grid=128)
            s = rng.random((cfg.M, cfg.L)) * 5
            w = synthesize(cfg, s, Q=128)
            energy = np.sum(np.abs(w.samples) ** 2) * w.dt
            assert energy == pytest.approx(overlap_energy(cfg, s), rel=1e-12)

    def test_rejects_small_Q_and_collisions(self):
        cfg = ChannelConfig(M=2, L=2, tau=[0, 0.004], h=[1, 1])
        with pytest.raises(ValueError):
            synthesize(cfg, np.ones((2, 2)), Q=32)
        with pytest.raises(ValueError):
            synthesize(cfg, np.ones((2, 2)), Q=64)


class TestWmfs:
    def test_single_sensor_returns_symbols(self):
        cfg = ChannelConfig(M=1, L=4, tau=[0], h=[1])
        s = np.array([[1.0, 2.0, 3.0, 4.0]])
        np.testing.assert_allclose(wmfs_sample(synthesize(cfg, s, 64), cfg), s[0])

    def test_toy_matches_sampled_model(self, toy):
        cfg, s = toy
        y = wmfs_sample(synthesize(cfg, s, 64), cfg)
        np.testing.assert_allclose(y, [1, 1 + 2j, 3 + 2j, 3 + 4j, 4j], atol=1e-14)

    def test_random_configs_match_D(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            M, L = int(rng.integers(2, 7)), int(rng.integers(4, 17))
            cfg = ChannelConfig.random(M, L, seed=rng, grid=256)
            s = rng.random((M, L)) * 10
            y = wmfs_sample(synthesize(cfg, s, 256), cfg)
            ref = build_D(cfg) @ flatten(s)
            assert np.max(np.abs(y - ref)) <= 1e-9 * np.max(np.abs(ref))

    def test_literal_matched_filter_agrees(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            cfg = ChannelConfig.random(int(rng.integers(1, 5)), int(rng.integers(1, 6)),
                                       seed=rng, grid=64)
            s = rng.random((cfg.M, cfg.L))
            w = synthesize(cfg, s, 64)
            np.testing.assert_allclose(wmfs_sample(w, cfg), matched_filter_samples(w, cfg, 64),
                                       atol=1e-12)

    def test_intervals_tile_period(self):
        cfg = ChannelConfig.random(7, 3, seed=1, grid=256)
        bank = filter_bank(cfg, 256)
        assert bank.widths.sum() == 256 and np.all(bank.widths >= 1)

    def test_mismatched_waveform(self, toy):
        cfg, s = toy
        w = synthesize(cfg, s, 64)
        with pytest.raises(ValueError):
            wmfs_sample(Waveform(w.samples[:-1], 64), cfg)
        with pytest.raises(ValueError):
            wmfs_sample(w, cfg, Q=128)


class TestWaveformNoise:
    def test_zero_psd_is_identity(self, toy):
        cfg, s = toy
        w = synthesize(cfg, s, 64)
        assert add_waveform_noise(w, 0.0, seed=1) is w

    def test_deterministic(self, toy):
        cfg, s = toy
        w = synthesize(cfg, s, 64)
        a = add_waveform_noise(w, 0.3, seed=9).samples
        np.testing.assert_array_equal(a, add_waveform_noise(w, 0.3, seed=9).samples)

    def test_sample_variance_and_whiteness(self):
        cfg = ChannelConfig(M=3, L=1, tau=[0, 0.125, 0.5], h=[1, 1, 1])
        Q, N0, trials = 64, 0.5, 10_000
        clean = synthesize(cfg, np.zeros((3, 1)), Q)
        rng = np.random.default_rng(7)
        noise = np.array([wmfs_sample(add_waveform_noise(clean, N0, rng), cfg)
                          for _ in range(trials)])
        expected = sample_noise_variance(cfg, N0, Q)
        per_sample = np.concatenate([expected, expected[:-1]])
        np.testing.assert_allclose(np.var(noise, axis=0), per_sample, rtol=0.05)
        np.testing.assert_allclose(expected, N0 / np.diff([0, 0.125, 0.5, 1.0]))
        z = noise / np.sqrt(per_sample)
        corr = (z.conj().T @ z) / trials
        off = corr[~np.eye(corr.shape[0], dtype=bool)]
        assert np.max(np.abs(off)) <= 3 / np.sqrt(trials)


def test_oracle_path_agrees_with_sampled_model():
    rng = np.random.default_rng(8)
    cfg = ChannelConfig.random(4, 12, seed=rng, grid=256)
    s = rng.random((4, 12))
    assert n0_for_snr(cfg, s) == 0.0
    np.testing.assert_allclose(wmfs_sample(synthesize(cfg, s, 256), cfg), apply_channel(cfg, s),
                               rtol=0, atol=1e-12)
