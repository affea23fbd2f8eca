import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fbclab.convcode import (
    GENERATORS,
    chase_combine,
    conv_encode,
    modulate_bpsk,
    viterbi_decode,
    viterbi_decode_batch,
)
from fbclab.errors import ConfigError, InputDomainError, ProtocolViolation


def test_all_zero_input():
    out = conv_encode(np.zeros(20, dtype=int))
    assert out.size == 3 * 26
    assert not out.any()


def test_impulse_response_matches_generators():
    # a single leading 1 walks through the register: step i output k is tap i
    # of generator k (MSB = the current bit)
    out = conv_encode(np.eye(7, dtype=int)[0])
    for i in range(7):
        for k, g in enumerate(GENERATORS):
            assert out[3 * i + k] == (g >> (6 - i)) & 1


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**30 - 1), st.integers(0, 2**30 - 1))
def test_code_linearity(a_int, b_int):
    a = np.array([(a_int >> i) & 1 for i in range(30)])
    b = np.array([(b_int >> i) & 1 for i in range(30)])
    assert np.array_equal(conv_encode(a ^ b), conv_encode(a) ^ conv_encode(b))


def test_round_trip_noiseless():
    rng = np.random.default_rng(0)
    for k in (5, 47, 48):
        bits = rng.integers(0, 2, k)
        llr = modulate_bpsk(conv_encode(bits)) * 4.0
        assert np.array_equal(viterbi_decode(llr), bits)


def test_llr_positive_scaling_invariance():
    rng = np.random.default_rng(1)
    bits = rng.integers(0, 2, 47)
    llr = modulate_bpsk(conv_encode(bits)) * 2.0 + 0.3 * rng.standard_normal(3 * 53)
    assert np.array_equal(viterbi_decode(llr), viterbi_decode(llr * 7.25))


def test_single_flip_corrected():
    rng = np.random.default_rng(2)
    bits = rng.integers(0, 2, 47)
    llr = modulate_bpsk(conv_encode(bits)) * 8.0
    llr[31] = -llr[31]
    assert np.array_equal(viterbi_decode(llr), bits)


def test_batch_matches_single():
    rng = np.random.default_rng(3)
    blocks = []
    for _ in range(8):
        bits = rng.integers(0, 2, 30)
        blocks.append(modulate_bpsk(conv_encode(bits)) + rng.standard_normal(108))
    batch = np.stack(blocks)
    dec_batch = viterbi_decode_batch(batch)
    for row, llr in zip(dec_batch, blocks):
        assert np.array_equal(row, viterbi_decode(llr))


def test_length_validation():
    with pytest.raises(ProtocolViolation):
        viterbi_decode(np.ones(10))
    with pytest.raises(InputDomainError):
        conv_encode(np.array([0, 1, 2]))
    with pytest.raises(InputDomainError):
        conv_encode(np.zeros((2, 3), dtype=int))


def test_chase_single_set_identity():
    llr = np.array([0.5, -1.0, 2.0])
    assert np.array_equal(chase_combine([llr]), llr)


def test_chase_scaling_keeps_decisions():
    rng = np.random.default_rng(4)
    bits = rng.integers(0, 2, 40)
    llr = modulate_bpsk(conv_encode(bits)) * 3.0
    combined = chase_combine([llr] * 4)
    assert np.allclose(combined, 4 * llr)
    assert np.array_equal(viterbi_decode(combined), viterbi_decode(llr))


def test_chase_empty_rejected():
    with pytest.raises(ConfigError):
        chase_combine([])
    with pytest.raises(InputDomainError):
        chase_combine([np.ones(3), np.ones(4)])
