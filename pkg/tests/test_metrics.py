from fractions import Fraction

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from cellfree_wsr.errors import PreconditionError, StateError
from cellfree_wsr.metrics import (
    Beamformer,
    StreamLayout,
    ap_power,
    ap_powers,
    interaction_count,
    interference_plus_noise,
    ue_rate,
    ue_rates,
    weighted_sum_rate,
)
from cellfree_wsr.network import ChannelSet

from .helpers import crandn, even_counts, random_channels, scalar_channels


def random_beam(ch, D, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return Beamformer({(i, k): scale * crandn(rng, ch.tx_antennas[i], D[i, k])
                       for k, aps in enumerate(ch.serving_sets) for i in aps})


def zero_beam(ch, D):
    return Beamformer({(i, k): np.zeros((ch.tx_antennas[i], D[i, k]))
                       for k, aps in enumerate(ch.serving_sets) for i in aps})


def direct_cov(ch, bf, k):
    """Interference plus noise by explicit double sum over other UEs and their serving APs."""
    n = ch.rx_antennas[k]
    out = ch.noise_powers[k] * np.eye(n, dtype=complex)
    for l in range(ch.num_ues):
        if l == k:
            continue
        for j in ch.serving_sets[l]:
            T = ch.link(j, k) @ bf[(j, l)]
            out += T @ T.conj().T
    return out


def eigen_rate(ch, bf, k):
    S = np.hstack([ch.link(i, k) @ bf[(i, k)] for i in ch.serving_sets[k]])
    lam = scipy.linalg.eigh(S @ S.conj().T, direct_cov(ch, bf, k), eigvals_only=True)
    return float(np.sum(np.log2(1.0 + np.clip(lam, 0, None))))


def test_no_interferers_leaves_noise():
    ch = scalar_channels(1.0, 0.7)
    bf = Beamformer({(0, 0): np.array([[3.0]])})
    np.testing.assert_allclose(interference_plus_noise(0, ch, bf), [[0.7]])


def test_zero_beams_leave_noise(small):
    ch, D = small
    for k in range(ch.num_ues):
        np.testing.assert_allclose(interference_plus_noise(k, ch, zero_beam(ch, D)),
                                   0.5 * np.eye(ch.rx_antennas[k]))


def test_scalar_interferer():
    ch = ChannelSet([[np.array([[1.0]]), np.array([[1.0]])]], [(0,), (0,)], 1.0)
    bf = Beamformer({(0, 0): np.array([[0.0]]), (0, 1): np.array([[np.sqrt(2.0)]])})
    assert interference_plus_noise(0, ch, bf)[0, 0].real == pytest.approx(3.0, abs=1e-12)


def test_covariance_matches_direct_sum(small):
    ch, _ = small
    D = even_counts(ch, 2)
    bf = random_beam(ch, D, 1)
    for k in range(ch.num_ues):
        N = interference_plus_noise(k, ch, bf)
        np.testing.assert_allclose(N, direct_cov(ch, bf, k), atol=1e-12)
        assert np.abs(N - N.conj().T).max() <= 1e-12
        assert np.linalg.eigvalsh(N).min() >= ch.noise_powers[k] - 1e-9


def test_unset_noise_is_a_state_error():
    ch = ChannelSet([[np.array([[1.0]])]], [(0,)])
    with pytest.raises(StateError):
        interference_plus_noise(0, ch, Beamformer({(0, 0): np.ones((1, 1))}))


def test_rate_examples():
    ch = scalar_channels(1.0, 1.0)
    assert ue_rate(0, ch, Beamformer({(0, 0): np.zeros((1, 1))})) == 0.0
    assert ue_rate(0, ch, Beamformer({(0, 0): np.array([[2.0]])})) == pytest.approx(np.log2(5.0), abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_rate_matches_eigen_oracle(seed):
    ch = random_channels(seed, I=3, K=3, M=4, N=3, L=2, sigma2=0.3)
    D = even_counts(ch, 1)
    D[ch.serving_sets[0][0], 0] = 2
    bf = random_beam(ch, D, seed + 10)
    for k in range(ch.num_ues):
        assert ue_rate(k, ch, bf) == pytest.approx(eigen_rate(ch, bf, k), abs=1e-9)


def test_zero_stream_ue_has_zero_rate(small):
    ch, D = small
    D = D.copy()
    D[:, 0] = 0
    assert ue_rates(ch, random_beam(ch, D, 0))[0] == 0.0


def test_weighted_sum_examples(small):
    ch, D = small
    assert weighted_sum_rate(ch, zero_beam(ch, D), 1.0) == 0.0
    sc = scalar_channels(1.0, 1.0)
    bf = Beamformer({(0, 0): np.array([[np.sqrt(7.0)]])})
    assert weighted_sum_rate(sc, bf, [2.0]) == pytest.approx(6.0, abs=1e-12)


def test_symmetric_users_have_equal_rates():
    h = np.array([[1.0, 0.5j]])
    ch = ChannelSet([[h, h]], [(0,), (0,)], 0.2)
    p = np.array([[0.6], [0.1]])
    bf = Beamformer({(0, 0): p, (0, 1): p})
    r = ue_rates(ch, bf)
    assert r[0] == pytest.approx(r[1], abs=1e-14)
    assert weighted_sum_rate(ch, bf, 1.0) == pytest.approx(2 * r[0], abs=1e-12)


def test_power_examples(small):
    ch, D = small
    assert ap_power(0, zero_beam(ch, D)) == 0.0
    bf = Beamformer({(0, 0): np.array([[0.0], [2.0j]])})
    assert ap_power(0, bf) == pytest.approx(4.0, abs=1e-15)


def test_power_matches_entrywise_sum(small):
    ch, _ = small
    D = even_counts(ch, 2)
    bf = random_beam(ch, D, 4)
    for i in range(ch.num_aps):
        direct = sum(np.sum(bf[(i, k)].real ** 2 + bf[(i, k)].imag ** 2) for k in ch.served_sets[i])
        assert ap_power(i, bf) == pytest.approx(direct, rel=1e-12)
    np.testing.assert_allclose(ap_powers(ch, bf), [ap_power(i, bf) for i in range(ch.num_aps)], rtol=1e-14)


@given(st.floats(1.0, 10.0), st.integers(0, 50))
def test_rate_nondecreasing_in_own_power(c, seed):
    ch = random_channels(seed, I=2, K=3, M=3, N=2, L=1)
    D = even_counts(ch, 1)
    bf = random_beam(ch, D, seed)
    k = seed % ch.num_ues
    boosted = Beamformer({key: (c * b if key[1] == k else b) for key, b in bf.blocks.items()})
    assert ue_rate(k, ch, boosted) >= ue_rate(k, ch, bf) - 1e-12


@given(st.integers(0, 50))
def test_rates_are_nonnegative(seed):
    ch = random_channels(seed, I=2, K=3, M=3, N=2, L=2)
    assert np.all(ue_rates(ch, random_beam(ch, even_counts(ch, 1), seed, scale=3.0)) >= 0)


def test_interaction_examples():
    assert interaction_count("local-ezf", [4] * 8, [64] * 4, [8] * 4) == [0] * 4
    assert interaction_count("wmmse", [4] * 8, [64] * 4, [8] * 4) == [2560] * 4
    assert interaction_count("rwmmse", [4] * 8, [64] * 4, [8] * 4) == [768] * 4


def test_interaction_half_integers_are_exact():
    got = interaction_count("rwmmse", [1, 2], [4], [1])
    assert got == [Fraction(15, 2)]
    assert isinstance(got[0], Fraction)


def test_interaction_unknown_tag():
    with pytest.raises(PreconditionError):
        interaction_count("fp", [4], [8], [1])


@given(st.lists(st.integers(1, 6), min_size=1, max_size=6), st.integers(0, 10), st.integers(1, 40))
def test_rwmmse_interaction_below_wmmse_when_m_exceeds_sum_n(rx, streams, extra):
    M = sum(rx) + extra
    r = interaction_count("rwmmse", rx, [M], [streams])[0]
    w = interaction_count("wmmse", rx, [M], [streams])[0]
    assert r < w


def test_layout_offsets_follow_ascending_aps(small):
    ch, _ = small
    D = even_counts(ch, 1)
    k = next(k for k in range(ch.num_ues) if len(ch.serving_sets[k]) == 2)
    i0, i1 = ch.serving_sets[k]
    D[i0, k] = 2
    lay = StreamLayout(ch, D)
    assert lay.ue_cols[k][i0] == slice(0, 2)
    assert lay.ue_cols[k][i1] == slice(2, 3)


def test_beamformer_keys_must_match_serving_pairs(small):
    ch, D = small
    bf = random_beam(ch, D, 0)
    blocks = dict(bf.blocks)
    blocks.pop(next(iter(blocks)))
    with pytest.raises(PreconditionError):
        ue_rates(ch, Beamformer(blocks))
