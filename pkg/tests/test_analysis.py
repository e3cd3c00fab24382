import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import erfc

from otfsftn.analysis import (
    LIGHT_SPEED,
    NMSE_FLOOR_DB,
    ChannelSpec,
    PilotSpec,
    ber_trial,
    bpsk_waveforms,
    info_rate,
    loglog_slope,
    match_taps,
    modeling_errors,
    noise_for,
    nmse,
    psd,
    run_ber,
    run_nmse,
    sense_targets,
    sidelobe_level_db,
    transmission_rate,
    trial_rng,
    wilson_interval,
)
from otfsftn.channel import ChannelRealization, ChannelTap, build_effective_H
from otfsftn.errors import ConfigurationError, InvalidInputError
from otfsftn.estimator import EstimatedChannel, EstimatorConfig
from otfsftn.modem import SystemConfig

from conftest import crandn


def two_tap():
    return ChannelRealization((ChannelTap(0.8 + 0.1j, 0), ChannelTap(-0.3j, 2, 1, 0.2)))


class TestNmse:
    cfg = SystemConfig(M=16, N=8, c=4, alpha=0.85)

    def test_exact_hits_floor(self):
        assert nmse(two_tap(), two_tap(), self.cfg) == NMSE_FLOOR_DB

    def test_zero_estimate(self):
        assert nmse(ChannelRealization(()), two_tap(), self.cfg) == pytest.approx(0.0, abs=1e-12)

    def test_one_percent_perturbation(self, rng):
        H = build_effective_H(two_tap(), self.cfg)
        E = crandn(rng, *H.shape)
        E *= 0.01 * np.linalg.norm(H) / np.linalg.norm(E)
        assert nmse(H + E, H, self.cfg) == pytest.approx(-40.0, abs=0.1)

    def test_estimated_channel_input(self):
        est = EstimatedChannel(two_tap().taps)
        assert nmse(est, two_tap(), self.cfg) == NMSE_FLOOR_DB

    def test_zero_truth(self):
        with pytest.raises(InvalidInputError):
            nmse(two_tap(), ChannelRealization(()), self.cfg)


class TestTransmissionRate:
    def test_qpsk_example(self):
        cfg = SystemConfig(M=256, N=6, c=8, alpha=0.85, beta=0.25)
        assert transmission_rate([2] * 1536, cfg) == pytest.approx(0.75 * 2 / (1.25 * 0.85))
        assert transmission_rate([2] * 1536, cfg) == pytest.approx(1.4118, abs=1e-4)

    def test_nyquist_bpsk(self):
        cfg = SystemConfig(M=8, N=4, c=2, alpha=1.0, beta=0.0)
        assert transmission_rate([1] * 32, cfg, code_rate=1.0) == pytest.approx(1.0)

    @given(bits=st.lists(st.integers(1, 8), min_size=32, max_size=32))
    def test_linear(self, bits):
        cfg = SystemConfig(M=8, N=4, c=2, alpha=0.9)
        assert transmission_rate(2 * np.array(bits), cfg) == pytest.approx(2 * transmission_rate(bits, cfg))

    def test_length(self):
        with pytest.raises(InvalidInputError):
            transmission_rate([2] * 3, SystemConfig(M=8, N=4, c=2))


class TestInfoRate:
    def test_isotropic(self):
        cfg = SystemConfig(M=8, N=4, c=2, alpha=1.0).with_snr(7.0)
        rep = info_rate(ChannelRealization((ChannelTap(1.0, 0),)), noise_for(cfg), cfg)
        snr = cfg.sigma_x_sq / cfg.sigma0_sq
        assert rep.R == pytest.approx(cfg.MN * np.log2(1 + snr), rel=1e-9)
        np.testing.assert_allclose(rep.xi, 1.0, atol=1e-9)
        assert rep.R_N == pytest.approx(rep.R / (1.25 * cfg.MN))

    def test_no_signal(self):
        cfg = SystemConfig(M=8, N=4, c=2, sigma_x_sq=0.0)
        assert info_rate(two_tap(), noise_for(cfg), cfg).R == 0.0

    @pytest.mark.parametrize("alpha", [1.0, 0.85])
    def test_report_invariants(self, alpha):
        cfg = SystemConfig(M=8, N=4, c=3, alpha=alpha).with_snr(10)
        rep = info_rate(two_tap(), noise_for(cfg), cfg)
        assert np.all(rep.xi >= 0)
        assert np.all(np.diff(rep.xi) <= 1e-12)
        assert rep.R_N >= 0

    @given(phi=st.floats(0, 2 * np.pi))
    def test_global_phase_invariance(self, phi):
        cfg = SystemConfig(M=8, N=4, c=3, alpha=0.85).with_snr(10)
        ch = two_tap()
        a = info_rate(ch, noise_for(cfg), cfg).R
        b = info_rate(ch.scaled(np.exp(1j * phi)), noise_for(cfg), cfg).R
        assert abs(a - b) < 1e-9


class TestSensing:
    def test_one_microsecond(self):
        cfg = SystemConfig(M=100, N=4, c=4, alpha=1.0, delta_f=30e3)
        rep = sense_targets([ChannelTap(1.0, 3)], 5e9, 0.0, cfg)
        assert rep.ranges[0] == pytest.approx(149.896229, abs=1e-6)
        assert rep.velocities[0] == 0.0

    def test_velocity_formula(self):
        cfg = SystemConfig(M=128, N=16, c=16, delta_f=30e3)
        rep = sense_targets([ChannelTap(1.0, 4, 3, 0.2)], 5e9, np.pi / 3, cfg)
        nu = 3.2 * cfg.delta_f / cfg.N
        assert rep.velocities[0] == pytest.approx(LIGHT_SPEED * nu / (5e9 * 0.5))

    def test_perpendicular(self):
        with pytest.raises(ConfigurationError):
            sense_targets([ChannelTap(1.0, 3)], 5e9, np.pi / 2, SystemConfig(M=8, N=4, c=2))

    def test_match_taps(self):
        truth = [ChannelTap(1.0, 2, 1), ChannelTap(0.1, 5, -1)]
        est = [ChannelTap(0.1, 5, -1, 0.1), ChannelTap(0.9, 2, 1)]
        pairs = match_taps(est, truth)
        assert pairs[0] == (truth[0], est[1])
        assert pairs[1] == (truth[1], est[0])
        assert match_taps([], truth)[0][1] is None


class TestBer:
    def test_noiseless_perfect_csi(self):
        cfg = SystemConfig(M=8, N=4, c=2, alpha=1.0, sigma0_sq=0.0)
        errs, bits = ber_trial(cfg, ChannelSpec(P=1), "perfect-csi", None, None, "QPSK", True, 0, 0, 0)
        assert (errs, bits) == (0, 2 * cfg.MN)

    def test_reproducible_and_mapper_independent(self):
        cfg = SystemConfig(M=8, N=4, c=2, alpha=0.85)
        ch = ChannelSpec(P=2, l_max=2, nu_max_hz=3e3)
        a = run_ber(cfg, ch, "perfect-csi", [0, 5], 6, seed=3)
        b = run_ber(cfg, ch, "perfect-csi", [0, 5], 6, seed=3, mapper=map)
        assert a == b
        assert [p.trials for p in a] == [6, 6]

    def test_estimated_mode_counts_data_bins_only(self):
        cfg = SystemConfig(M=16, N=8, c=4, alpha=1.0)
        ch = ChannelSpec(P=1)
        pilot = PilotSpec(Ng=2, k_max=1, l_max=2)
        pt = run_ber(cfg, ch, "ftnp-estimated", [20], 1, pilot=pilot, est_cfg=EstimatorConfig())[0]
        assert pt.bits == 2 * (cfg.MN - 5 * 5)

    def test_wilson_closed_form(self):
        k, n, z = 7, 50, 1.959963984540054
        p = k / n
        centre = (p + z * z / (2 * n)) / (1 + z * z / n)
        half = z / (1 + z * z / n) * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
        lo, hi = wilson_interval(k, n)
        assert lo == pytest.approx(centre - half, rel=1e-9)
        assert hi == pytest.approx(centre + half, rel=1e-9)

    def test_awgn_single_point(self):
        # QPSK per bit: Q(sqrt(2 Eb/N0)) with Es = 2 Eb
        cfg = SystemConfig(M=16, N=8, c=4, alpha=1.0)
        ebn0 = 4.0
        pt = run_ber(cfg, ChannelSpec(P=1, fading="none"), "perfect-csi", [ebn0 + 10 * np.log10(2)], 60, seed=1)[0]
        p = 0.5 * erfc(np.sqrt(10 ** (ebn0 / 10)))
        se = np.sqrt(p * (1 - p) / pt.bits)
        assert abs(pt.ber - p) < 3 * se


class TestNmseSweep:
    def test_trials_and_mapper(self):
        cfg = SystemConfig(M=16, N=8, c=4, alpha=0.85)
        ch = ChannelSpec(P=2, l_max=2, nu_max_hz=2e3)
        a = run_nmse(cfg, ch, PilotSpec(), EstimatorConfig(), [10.0], 3, seed=2)
        b = run_nmse(cfg, ch, PilotSpec(), EstimatorConfig(), [10.0], 3, seed=2, mapper=map)
        assert a == b and a[0].trials == 3


class TestPsd:
    def test_half_power_at_half_symbol_rate(self):
        cfg = SystemConfig(M=16, N=8, c=8, alpha=1.0)
        f, S = psd(bpsk_waveforms(cfg, 60, np.random.default_rng(0)), cfg, nperseg=512)
        assert np.all(np.diff(f) > 0)
        lin = 10 ** (S / 10)
        ref = lin[np.abs(f) < 0.3].mean()
        smooth = np.convolve(lin, np.ones(5) / 5, "same")
        band = (f > 0.3) & (f < 0.8)
        edge = f[band][np.argmax(smooth[band] < ref / 2)]
        assert edge == pytest.approx(0.5, abs=0.03)
        assert sidelobe_level_db(f, S, 0.625) < -30

    def test_sidelobe_grid_error(self):
        with pytest.raises(InvalidInputError):
            sidelobe_level_db(np.linspace(-0.5, 0.5, 11), np.zeros(11), 0.625)


class TestModelingErrors:
    def test_exact_at_nyquist(self):
        cfg = SystemConfig(M=16, N=4, c=4, alpha=1.0)
        eps0, _ = modeling_errors(ChannelRealization((ChannelTap(1.0, 0),)), noise_for(cfg), cfg)
        assert eps0 < 1e-10

    def test_longer_prefix_helps(self):
        errs = []
        for c in (4, 8):
            cfg = SystemConfig(M=16, N=4, c=c, alpha=0.8)
            errs.append(modeling_errors(ChannelRealization((ChannelTap(1.0, 0),)), noise_for(cfg), cfg)[0])
        assert errs[1] < errs[0]


class TestSpecs:
    def test_fading_none(self):
        cfg = SystemConfig(M=16, N=8, c=4)
        ch = ChannelSpec(P=4, l_max=3, nu_max_hz=1e3, fading="none").realize(cfg, np.random.default_rng(0))
        np.testing.assert_allclose([abs(t.gain) ** 2 for t in ch.taps], 0.25)

    def test_fading_unknown(self):
        with pytest.raises(ConfigurationError):
            ChannelSpec(fading="rician")

    def test_trial_rng_streams(self):
        a = trial_rng(1, 0, 0).standard_normal(4)
        assert np.array_equal(a, trial_rng(1, 0, 0).standard_normal(4))
        assert not np.array_equal(a, trial_rng(1, 0, 1).standard_normal(4))

    def test_loglog_slope(self):
        x = np.array([1, 2, 4, 8.0])
        assert loglog_slope(x, 3 * x**2) == pytest.approx(2.0)
