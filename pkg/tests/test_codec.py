import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import crc_long_division, encode
from polarprune import (CRC16_CCITT_FALSE, ConfigurationError, assemble_source,
                        crc_append, crc_verify, decode_sc, evaluate_reliability_bec, extract_info,
                        polar_encode, select_information_set)
from polarprune.codec import crc_value, encode_inplace

words = st.integers(0, 6).flatmap(
    lambda n: st.lists(st.integers(0, 1), min_size=1 << n, max_size=1 << n))


@pytest.mark.parametrize("u,x", [
    ((0, 0, 0, 0), (0, 0, 0, 0)),
    ((1, 0, 1, 1), (1, 0, 1, 1)),
    ((1, 1, 1, 1), (0, 0, 0, 1)),
])
def test_encoder_examples(u, x):
    assert tuple(polar_encode(u)) == x


@given(words)
def test_encoder_matches_generator_matrix(u):
    assert np.array_equal(polar_encode(u), encode(u))


@pytest.mark.invariant
@pytest.mark.parametrize("n", range(0, 5))
def test_involution_exhaustive(n):
    N = 1 << n
    u = np.array(list(itertools.product((0, 1), repeat=N)), dtype=np.uint8)
    assert np.array_equal(polar_encode(polar_encode(u)), u)


@pytest.mark.invariant
def test_involution_n16_exhaustive():
    # all 2^16 words of length 16
    v = np.arange(1 << 16, dtype=np.uint32)
    u = ((v[:, None] >> np.arange(16)) & 1).astype(np.uint8)
    assert np.array_equal(polar_encode(polar_encode(u)), u)


@pytest.mark.invariant
def test_involution_and_jit_agree_n1024(rng):
    u = rng.integers(0, 2, (10_000, 1024), dtype=np.uint8)
    x = polar_encode(u)
    assert np.array_equal(polar_encode(x), u)
    for row in range(0, 10_000, 997):
        y = u[row].copy()
        encode_inplace(y)
        assert np.array_equal(y, x[row])


@pytest.mark.invariant
@given(words, st.randoms(use_true_random=False))
def test_linearity(u, r):
    v = [r.randint(0, 1) for _ in u]
    lhs = polar_encode(np.bitwise_xor(u, v))
    assert np.array_equal(lhs, polar_encode(u) ^ polar_encode(v))


def test_rejects_non_power_of_two():
    with pytest.raises(ConfigurationError):
        polar_encode([0, 1, 1])


def _bits_of(data):
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def test_crc_check_value():
    assert crc_value(_bits_of(b"123456789"), CRC16_CCITT_FALSE) == 0x29B1
    assert crc_long_division(_bits_of(b"123456789"), 0x1021, 16, 0xFFFF) == 0x29B1


@given(st.lists(st.integers(0, 1), min_size=1, max_size=200))
def test_crc_matches_long_division(bits):
    assert crc_value(bits, CRC16_CCITT_FALSE) == crc_long_division(bits, 0x1021, 16, 0xFFFF)
    assert crc_verify(crc_append(bits, CRC16_CCITT_FALSE), CRC16_CCITT_FALSE)


def test_crc_single_bit_flip_detected(rng):
    word = crc_append(rng.integers(0, 2, 496, dtype=np.uint8), CRC16_CCITT_FALSE)
    for k in range(len(word)):
        bad = word.copy()
        bad[k] ^= 1
        assert not crc_verify(bad, CRC16_CCITT_FALSE)


def test_crc_bursts_up_to_16_detected(rng):
    word = crc_append(rng.integers(0, 2, 64, dtype=np.uint8), CRC16_CCITT_FALSE)
    L = len(word)
    for length in range(1, 17):
        inner = length - 2
        # a burst starts and ends with a flipped bit; enumerate every interior pattern
        interiors = itertools.product((0, 1), repeat=inner) if inner > 0 else [()]
        patterns = [np.array((1,) + p + ((1,) if length > 1 else ()), dtype=np.uint8)
                    for p in interiors]
        for start in range(0, L - length + 1, 7 if length > 12 else 1):
            for pat in patterns:
                bad = word.copy()
                bad[start:start + length] ^= pat
                assert not crc_verify(bad, CRC16_CCITT_FALSE)


def test_crc_rejects_empty_payload():
    with pytest.raises(ConfigurationError):
        crc_append([], CRC16_CCITT_FALSE)


def test_assemble_scatter_example():
    spec = select_information_set(evaluate_reliability_bec(2, 0.5), 2)
    assert assemble_source(spec, [1, 0]).tolist() == [0, 0, 1, 0]


def test_assemble_extract_round_trip(code1024, rng):
    spec, _ = code1024
    info = rng.integers(0, 2, (1000, spec.K), dtype=np.uint8)
    u = assemble_source(spec, info)
    assert np.array_equal(extract_info(spec, u), info)
    assert np.all(u[:, spec.frozen_set] == spec.frozen_values)


def test_assemble_wrong_length(code1024):
    with pytest.raises(ConfigurationError):
        assemble_source(code1024[0], np.zeros(10, dtype=np.uint8))


@settings(deadline=None, max_examples=60)
@given(st.integers(0, 3).flatmap(lambda n: st.tuples(
    st.just(n), st.integers(1, 1 << n),
    st.lists(st.integers(0, 1), min_size=1 << n, max_size=1 << n))))
@pytest.mark.invariant
def test_noiseless_sc_recovers_source(case):
    n, K, bits = case
    spec = select_information_set(evaluate_reliability_bec(n, 0.5), K)
    u = assemble_source(spec, np.array(bits[:K], dtype=np.uint8))
    llr = 30.0 * (1.0 - 2.0 * polar_encode(u))
    assert np.array_equal(decode_sc(spec, llr).u_hat, u)
