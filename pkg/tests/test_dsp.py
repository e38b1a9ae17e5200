import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import unitary_group

from mdmfso.channel import IsiConfig, NoiseConfig, PhaseNoiseConfig, propagate, wiener_phase
from mdmfso.dsp import (
    ChannelEstimate,
    cancel_phase,
    equalize,
    estimate_channel,
    estimate_phase,
    hard_decision,
    mmse_decode,
    sic_decode,
    sic_order,
)
from mdmfso.framing import QPSK, balanced_qpsk


def random_channel(rng, n_r, n_t):
    return (rng.standard_normal((n_r, n_t)) + 1j * rng.standard_normal((n_r, n_t))) / np.sqrt(2 * n_t)


def training_block(n_t, length, seed=0):
    return np.stack([balanced_qpsk(seed + k, length) for k in range(n_t)])


class TestEstimateChannel:
    def test_exact_noiseless(self):
        rng = np.random.default_rng(0)
        h = random_channel(rng, 4, 3)
        s = training_block(3, 1680)
        est = estimate_channel(h @ s, s)
        assert np.max(np.abs(est.h_hat - h)) <= 1e-9
        assert est.residual <= 1e-18
        assert (est.n_r, est.n_t) == (4, 3)

    def test_error_variance(self):
        # LS entrywise error variance ~ n0 / T_ts for near-orthogonal TS
        rng = np.random.default_rng(1)
        h = random_channel(rng, 4, 4)
        s = training_block(4, 1680, seed=10)
        n0 = 0.05
        errs = []
        for trial in range(40):
            y = propagate(s, h, None, NoiseConfig(n0=n0, seed=trial))
            errs.append(np.abs(estimate_channel(y, s).h_hat - h) ** 2)
        var = np.mean(errs)
        assert n0 / 1680 / 2 < var < n0 / 1680 * 2

    def test_static_phase_absorbed(self):
        rng = np.random.default_rng(2)
        h = random_channel(rng, 3, 3)
        s = training_block(3, 840, seed=20)
        est = estimate_channel(np.exp(0.4j) * (h @ s), s)
        np.testing.assert_allclose(est.h_hat, np.exp(0.4j) * h, atol=1e-9)

    def test_rank_deficient_rejected(self):
        s = training_block(1, 400, seed=3)
        s2 = np.vstack([s, s])  # identical sequences on both channels
        with pytest.raises(ValueError, match="rank deficient"):
            estimate_channel(np.zeros((2, 400), dtype=complex), s2)

    def test_length_validation(self):
        with pytest.raises(ValueError):
            estimate_channel(np.zeros((2, 10)), np.zeros((2, 12)))
        with pytest.raises(ValueError):
            estimate_channel(np.zeros((2, 1)), np.zeros((2, 1)))


class TestEstimatePhase:
    def _pilot_setup(self, n_r, total, seed=0):
        pilot_times = np.arange(0, total, 10)
        n = -(-pilot_times.size // 4) * 4
        pilots = np.stack(
            [balanced_qpsk(seed + k, n)[: pilot_times.size] for k in range(n_r)]
        )
        return pilot_times, pilots

    def test_zero_linewidth_flat(self):
        h = np.eye(2, dtype=complex)
        pt, pilots = self._pilot_setup(2, 2000)
        y = np.zeros((2, 2000), dtype=complex)
        y[:, pt] = pilots
        est = estimate_phase(y, pt, pilots, h, window=8)
        np.testing.assert_allclose(est.trajectory, 0.0, atol=1e-12)

    def test_constant_offset(self):
        h = np.eye(2, dtype=complex)
        pt, pilots = self._pilot_setup(2, 2000)
        y = np.zeros((2, 2000), dtype=complex)
        y[:, pt] = np.exp(0.3j) * pilots
        est = estimate_phase(y, pt, pilots, h, window=8)
        np.testing.assert_allclose(est.trajectory, 0.3, atol=1e-9)

    def test_tracking_mse(self):
        # 100 kHz linewidth, Es/N0 = 15 dB, window 8: MSE < 5e-3 rad^2
        rng = np.random.default_rng(7)
        total, n_r = 20000, 2
        pt, pilots = self._pilot_setup(n_r, total, seed=30)
        s = np.zeros((n_r, total), dtype=complex)
        s[:, pt] = pilots
        s[:, np.setdiff1d(np.arange(total), pt)] = QPSK[
            rng.integers(0, 4, (n_r, total - pt.size))
        ]
        phi = wiener_phase(total, n_r, PhaseNoiseConfig(linewidth=1e5, seed=8))
        y = propagate(s, np.eye(n_r), phi, NoiseConfig(n0=10 ** -1.5, seed=9))
        est = estimate_phase(y, pt, pilots, np.eye(n_r), window=8)
        mse = np.mean((est.trajectory - phi) ** 2)
        assert mse < 5e-3

    def test_low_reference_skipped(self):
        # channel 1 receives nothing: its trajectory stays zero, no NaN
        h = np.diag([1.0, 0.0]).astype(complex)
        pt, pilots = self._pilot_setup(2, 1000)
        y = h @ np.zeros((2, 1000), dtype=complex)
        est = estimate_phase(y, pt, pilots, h, window=4)
        assert np.all(np.isfinite(est.trajectory))
        np.testing.assert_array_equal(est.trajectory[1], 0.0)

    def test_window_validation(self):
        with pytest.raises(ValueError):
            estimate_phase(np.zeros((1, 10)), [0], np.ones((1, 1)), np.eye(1), window=0)


class TestCancelPhase:
    def test_exact_inverse(self):
        rng = np.random.default_rng(3)
        y = rng.standard_normal((2, 50)) + 1j * rng.standard_normal((2, 50))
        phi = rng.standard_normal((2, 50))
        out = cancel_phase(np.exp(1j * phi) * y, phi)
        np.testing.assert_allclose(out, y, atol=1e-12)

    def test_unitary(self):
        rng = np.random.default_rng(4)
        y = rng.standard_normal((2, 50)) + 1j * rng.standard_normal((2, 50))
        phi = rng.standard_normal((2, 50))
        np.testing.assert_allclose(np.abs(cancel_phase(y, phi)), np.abs(y))

    def test_zero_phase_identity(self):
        y = np.ones((2, 5), dtype=complex)
        np.testing.assert_array_equal(cancel_phase(y, np.zeros((2, 5))), y)


class TestEqualize:
    def test_memoryless_near_identity(self):
        rng = np.random.default_rng(5)
        h = np.eye(2, dtype=complex) * 2.0
        total = 20000
        pt = np.arange(0, total, 10)
        s = QPSK[rng.integers(0, 4, (2, total))]
        y = h @ s
        out = equalize(y, h, pt, s[:, pt], taps=7, step=1e-3)
        # reference is Hhat s_p, so a memoryless channel needs no change
        assert np.mean(np.abs(out - y) ** 2) / np.mean(np.abs(y) ** 2) < 1e-3

    def test_isi_improvement(self):
        # 3-tap ISI at 15 dB: LMS bank removes >= 30% of the error power
        rng = np.random.default_rng(6)
        h = np.eye(2, dtype=complex)
        total = 40000
        pt = np.arange(0, total, 10)
        s = QPSK[rng.integers(0, 4, (2, total))]
        isi = IsiConfig.normalized([0.3, 1.0, 0.2])
        y = propagate(s, h, None, NoiseConfig(n0=10 ** -1.5, seed=11), isi=isi)
        out = equalize(y, h, pt, s[:, pt], taps=7, step=1e-3)
        err_before = np.mean(np.abs(y - h @ s) ** 2)
        err_after = np.mean(np.abs(out - h @ s) ** 2)
        assert err_after < 0.7 * err_before

    def test_divergence_guard(self):
        rng = np.random.default_rng(12)
        s = QPSK[rng.integers(0, 4, (2, 5000))]
        pt = np.arange(0, 5000, 10)
        with pytest.raises(RuntimeError, match="diverged"):
            # reference 3x larger than the stream forces big LMS errors
            equalize(s, 3.0 * np.eye(2), pt, s[:, pt], taps=7, step=5.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            equalize(np.zeros((1, 10)), np.eye(1), [0], np.ones((1, 1)), taps=4)
        with pytest.raises(ValueError):
            equalize(np.zeros((1, 10)), np.eye(1), [0], np.ones((1, 1)), step=0.0)


class TestHardDecision:
    def test_examples(self):
        soft = np.array([0.3 + 0.1j, -0.2 + 0.9j, -1 - 1j, 0.0 + 0.0j])
        out = hard_decision(soft)
        r2 = np.sqrt(2.0)
        np.testing.assert_allclose(
            out, np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 + 1j]) / r2
        )

    @given(
        st.floats(-2, 2, allow_nan=False),
        st.floats(-2, 2, allow_nan=False),
        st.floats(0.01, 100.0),
    )
    @settings(max_examples=100, deadline=None)
    def test_scale_invariance(self, re, im, scale):
        z = complex(re, im)
        assert hard_decision(np.array([z])) == hard_decision(np.array([scale * z]))


class TestMmseDecode:
    def test_scalar_weight_and_sinr(self):
        # h = 1, n0 = 0.1: w = 1/1.1, rho = 1/1.1, SINR = 10
        y = np.array([[1.1 + 0.0j]])
        res = mmse_decode(y, np.array([[1.0 + 0j]]), 0.1)
        assert res.soft[0, 0] == pytest.approx(1.0)
        assert res.sinr[0] == pytest.approx(10.0)
        assert not res.regularized

    def test_identity_exact(self):
        rng = np.random.default_rng(8)
        s = QPSK[rng.integers(0, 4, (3, 100))]
        res = mmse_decode(s, np.eye(3, dtype=complex), 0.0)
        np.testing.assert_allclose(res.soft, s, atol=1e-12)
        np.testing.assert_array_equal(res.hard, s)
        assert res.order == (0, 1, 2)

    def test_unitary_matched_filter(self):
        rng = np.random.default_rng(9)
        u = unitary_group.rvs(4, random_state=10)
        s = QPSK[rng.integers(0, 4, (4, 200))]
        res = mmse_decode(u @ s, u, 0.2)
        # with orthonormal columns MMSE reduces to a scaled matched filter
        np.testing.assert_allclose(res.soft, s / 1.2, atol=1e-9)

    def test_sinr_matches_capacity_form(self):
        # SINR_k = 1/[(I + H^H H / n0)^-1]_kk - 1
        rng = np.random.default_rng(10)
        h = random_channel(rng, 5, 4)
        n0 = 0.07
        res = mmse_decode(np.zeros((5, 1), dtype=complex), h, n0)
        inv = np.linalg.inv(np.eye(4) + h.conj().T @ h / n0)
        np.testing.assert_allclose(res.sinr, 1.0 / np.real(np.diag(inv)) - 1.0, rtol=1e-9)

    def test_singular_regularized(self):
        h = np.array([[1.0, 1.0], [1.0, 1.0]], dtype=complex)
        res = mmse_decode(np.zeros((2, 1), dtype=complex), h, 0.0)
        assert res.regularized
        assert np.all(np.isfinite(res.soft))

    def test_negative_n0(self):
        with pytest.raises(ValueError):
            mmse_decode(np.zeros((1, 1)), np.eye(1), -0.1)


class TestSicOrder:
    def test_identity_natural(self):
        assert sic_order(np.eye(3, dtype=complex), 0.1) == (0, 1, 2)

    def test_strong_column_first(self):
        h = np.diag([1.0, 2.0]).astype(complex)
        assert sic_order(h, 0.1) == (1, 0)

    def test_greedy_near_optimal_max_min(self):
        # greedy V-BLAST vs exhaustive max-min stage SINR over 6 orders
        def min_stage_sinr(h, order, n0):
            remaining = list(range(h.shape[1]))
            worst = np.inf
            for k in order:
                sub = h[:, remaining]
                pos = remaining.index(k)
                gram = sub @ sub.conj().T + n0 * np.eye(h.shape[0])
                w = np.linalg.solve(gram, sub[:, pos])
                rho = np.clip(np.real(w.conj() @ sub[:, pos]), 0, 1 - 1e-15)
                worst = min(worst, rho / (1 - rho))
                remaining.remove(k)
            return worst

        rng = np.random.default_rng(11)
        n0 = 0.1
        hits, gaps = 0, []
        for _ in range(200):
            h = random_channel(rng, 4, 3)
            greedy = min_stage_sinr(h, sic_order(h, n0), n0)
            best = max(
                min_stage_sinr(h, p, n0) for p in itertools.permutations(range(3))
            )
            if np.isclose(greedy, best, rtol=1e-9):
                hits += 1
            gaps.append(10 * np.log10(best / greedy))
        assert hits >= 190  # >= 95%
        assert max(gaps) <= 1.0


class TestSicDecode:
    def test_identity_equals_mmse(self):
        rng = np.random.default_rng(13)
        s = QPSK[rng.integers(0, 4, (3, 100))]
        y = s + 0.05 * (rng.standard_normal((3, 100)) + 1j * rng.standard_normal((3, 100)))
        a = mmse_decode(y, np.eye(3, dtype=complex), 0.005)
        b = sic_decode(y, np.eye(3, dtype=complex), 0.005)
        np.testing.assert_array_equal(a.hard, b.hard)

    def test_triangular_noiseless_zero_errors(self):
        rng = np.random.default_rng(14)
        h = np.array([[1.0, 0.9], [0.0, 1.0]], dtype=complex)
        s = QPSK[rng.integers(0, 4, (2, 2000))]
        res = sic_decode(h @ s, h, 0.0)
        np.testing.assert_array_equal(res.hard, s)

    def test_stage1_bit_exact_with_mmse(self):
        rng = np.random.default_rng(15)
        for trial in range(20):
            h = random_channel(rng, 6, 4)
            s = QPSK[rng.integers(0, 4, (4, 50))]
            y = propagate(s, h, None, NoiseConfig(n0=0.05, seed=trial))
            mmse = mmse_decode(y, h, 0.05)
            sic = sic_decode(y, h, 0.05)
            first = sic.order[0]
            assert np.array_equal(sic.soft[first], mmse.soft[first])

    def test_orthogonal_equivalence(self):
        # orthonormal columns: cancellation changes nothing, SIC == MMSE
        rng = np.random.default_rng(16)
        for trial in range(10):
            u = unitary_group.rvs(4, random_state=100 + trial)
            s = QPSK[rng.integers(0, 4, (4, 500))]
            y = propagate(s, u, None, NoiseConfig(n0=0.1, seed=trial))
            a = mmse_decode(y, u, 0.1)
            b = sic_decode(y, u, 0.1)
            np.testing.assert_array_equal(a.hard, b.hard)

    def test_explicit_order_respected(self):
        rng = np.random.default_rng(17)
        h = random_channel(rng, 3, 3)
        y = np.zeros((3, 10), dtype=complex)
        res = sic_decode(y, h, 0.1, order=(2, 0, 1))
        assert res.order == (2, 0, 1)

    def test_bad_order(self):
        with pytest.raises(ValueError):
            sic_decode(np.zeros((2, 5)), np.eye(2), 0.1, order=(0, 0))

    def test_bits_roundtrip(self):
        s = QPSK[np.array([[0, 1, 2, 3]])]
        res = mmse_decode(s, np.eye(1, dtype=complex), 0.0)
        bits = res.bits()
        assert bits.shape == (1, 4, 2)
        np.testing.assert_array_equal(
            bits[0], np.array([[0, 0], [0, 1], [1, 1], [1, 0]])
        )
