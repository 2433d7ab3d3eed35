import numpy as np
import pytest
from hypothesis import given, strategies as st

from robust_wsrm.model import (BeamformerSet, ChannelSet, DimensionError, NetworkConfig, ZeroForcingError,
                               generate_channels, per_bs_power, sinr, sinr_all, weighted_sum_rate,
                               zero_forcing_beamformers)

from conftest import crand


def brute_sinr(h, w, cfg, u):
    """Straight-line evaluation: signal over noise plus every other beam seen by user u."""
    bs = cfg.serving_bs
    num = abs(np.sum(h[bs[u], u] * w[u])) ** 2
    den = cfg.sigma2
    for v in range(cfg.K):
        if v != u:
            den += abs(np.sum(h[bs[v], u] * w[v])) ** 2
    return num / den


def test_single_user_sinr():
    cfg = NetworkConfig(1, (1,), 1, 1.0, (1.0,))
    assert sinr(np.array([[[2.0]]]), np.array([[1.0]]), cfg, (0, 0)) == pytest.approx(4.0)


def test_intra_cell_interferer():
    cfg = NetworkConfig(1, (2,), 2, 1.0, (2.0,))
    h = np.array([[[1, 1], [0, 0]]], dtype=complex)
    w = np.array([[1, 0], [0, 1]], dtype=complex)
    assert sinr(h, w, cfg, (0, 0)) == pytest.approx(0.5)


def test_sinr_matches_direct_sum(rng):
    cfg = NetworkConfig.from_snr(2, (2, 2), 4, 10)
    h, w = crand(rng, 2, 4, 4), crand(rng, 4, 4)
    direct = [brute_sinr(h, w, cfg, u) for u in range(4)]
    split = [sinr(h, w, cfg, user) for user in cfg.users]
    np.testing.assert_allclose(sinr_all(h, w, cfg), direct, rtol=1e-12)
    np.testing.assert_allclose(split, direct, rtol=1e-12)


def test_rate_examples():
    cfg = NetworkConfig(1, (1,), 1, 1.0, (1.0,), (2.0,))
    # gamma = 3 with weight 2
    assert weighted_sum_rate(np.array([[[np.sqrt(3)]]]), np.array([[1.0]]), cfg) == pytest.approx(4.0)
    cfg4 = NetworkConfig(1, (4,), 4, 1.0, (1.0,))
    h = np.eye(4, dtype=complex)[None]
    assert weighted_sum_rate(h, np.eye(4), cfg4) == pytest.approx(4.0)


def test_rate_is_weighted_sum_of_logs(rng):
    cfg = NetworkConfig(2, (1, 2), 3, 0.7, (1.0, 2.0), (0.5, 1.5, 2.0))
    h, w = crand(rng, 2, 3, 3), crand(rng, 3, 3)
    terms = [a * np.log2(1 + sinr(h, w, cfg, user)) for a, user in zip(cfg.alpha, cfg.users)]
    assert weighted_sum_rate(h, w, cfg) == pytest.approx(sum(terms), rel=1e-12)


def test_batched_rate_matches_loop(rng):
    cfg = NetworkConfig.from_snr(2, (2, 2), 4, 10)
    h, w = crand(rng, 5, 2, 4, 4), crand(rng, 4, 4)
    batched = weighted_sum_rate(h, w, cfg)
    np.testing.assert_allclose(batched, [weighted_sum_rate(x, w, cfg) for x in h], rtol=1e-12)


def test_power():
    cfg = NetworkConfig(1, (2,), 4, 1.0, (1.0,))
    w = np.zeros((2, 4), dtype=complex)
    assert per_bs_power(w, cfg, 0) == 0
    w[0, 0] = w[1, 1] = 1
    assert per_bs_power(w, cfg, 0) == pytest.approx(2.0)
    with pytest.raises(IndexError):
        per_bs_power(w, cfg, 1)


def test_dimension_mismatch():
    cfg = NetworkConfig(1, (2,), 4, 1.0, (1.0,))
    with pytest.raises(DimensionError):
        sinr(np.zeros((1, 2, 3)), np.zeros((2, 4)), cfg, (0, 0))
    with pytest.raises(DimensionError):
        ChannelSet(np.zeros((1, 2, 3))).check(cfg)


@pytest.mark.parametrize("kwargs", [dict(B=0, users_per_bs=(), T=1), dict(B=1, users_per_bs=(0,), T=1),
                                    dict(B=1, users_per_bs=(1,), T=1, sigma2=0.0),
                                    dict(B=1, users_per_bs=(1,), T=1, P=(-1.0,))])
def test_config_rejects(kwargs):
    with pytest.raises(ValueError):
        NetworkConfig(**kwargs)


def test_channels_reproducible_and_unit_variance():
    cfg = NetworkConfig.from_snr(2, (2, 2), 4, 10)
    np.testing.assert_array_equal(generate_channels(cfg, 3).h, generate_channels(cfg, 3).h)
    big = NetworkConfig(1, (1,), 100_000, 1.0, (1.0,))
    h = generate_channels(big, 0).h.ravel()
    assert 0.97 <= np.mean(np.abs(h) ** 2) <= 1.03
    assert np.var(h.real) == pytest.approx(0.5, rel=0.03)
    assert np.var(h.imag) == pytest.approx(0.5, rel=0.03)


def test_zf_nulls_other_users(rng):
    cfg = NetworkConfig.from_snr(2, (2, 2), 4, 10)
    h = crand(rng, 2, 4, 4)
    w = zero_forcing_beamformers(h, cfg).w
    bs = cfg.serving_bs
    for u in range(4):
        for v in range(4):
            if u != v:
                leak = abs(h[bs[v], u] @ w[v])
                assert leak <= 1e-9 * np.linalg.norm(h[bs[v], u]) * np.linalg.norm(w[v])
    for b in range(2):
        assert per_bs_power(w, cfg, b) == pytest.approx(cfg.P[b])


def test_zf_orthogonal_channels_is_matched_filter():
    cfg = NetworkConfig(1, (3,), 3, 1.0, (3.0,))
    h = (np.eye(3) * np.array([1.0, 2.0, 0.5j]))[None].astype(complex)
    w = zero_forcing_beamformers(h, cfg).w
    for u in range(3):
        mf = h[0, u].conj()
        cos = abs(np.vdot(mf, w[u])) / (np.linalg.norm(mf) * np.linalg.norm(w[u]))
        assert cos == pytest.approx(1.0, abs=1e-9)


def test_zf_too_many_users():
    cfg = NetworkConfig(1, (3,), 2, 1.0, (1.0,))
    with pytest.raises(ZeroForcingError):
        zero_forcing_beamformers(np.ones((1, 3, 2), dtype=complex), cfg)


@given(st.integers(0, 10_000), st.floats(0, 2 * np.pi), st.integers(0, 3))
def test_sinr_phase_invariance(seed, theta, u):
    rng = np.random.default_rng(seed)
    cfg = NetworkConfig.from_snr(2, (2, 2), 3, 5)
    h, w = crand(rng, 2, 4, 3), crand(rng, 4, 3)
    w2 = w.copy()
    w2[u] *= np.exp(1j * theta)
    np.testing.assert_allclose(sinr_all(h, w2, cfg), sinr_all(h, w, cfg), rtol=1e-10)


@given(st.integers(0, 10_000), st.floats(0.1, 10), st.floats(0.1, 10))
def test_rate_decreases_with_noise(seed, s1, s2):
    rng = np.random.default_rng(seed)
    lo, hi = sorted((s1, s2))
    h, w = crand(rng, 2, 4, 3), crand(rng, 4, 3)
    r_lo = weighted_sum_rate(h, w, NetworkConfig(2, (2, 2), 3, lo))
    r_hi = weighted_sum_rate(h, w, NetworkConfig(2, (2, 2), 3, hi))
    assert r_hi <= r_lo + 1e-12


@given(st.integers(0, 10_000), st.floats(0.01, 100))
def test_power_scales_quadratically(seed, s):
    rng = np.random.default_rng(seed)
    cfg = NetworkConfig(2, (2, 1), 3)
    beams = BeamformerSet(crand(rng, 3, 3))
    for b in range(2):
        assert per_bs_power(beams.scaled(s), cfg, b) == pytest.approx(s * s * per_bs_power(beams, cfg, b), rel=1e-12)
