import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fbclab.channel import FixedTrace, SnrTraceConfig
from fbclab.errors import ProtocolViolation
from fbclab.session import SessionConfig, run_session, transcript_to_json


class EchoEncoder:
    """Round 0 sends the message; later rounds echo the newest usable feedback."""

    def __init__(self, m):
        self.m = m

    def encode_round(self, t, message_bits, past_codewords, feedback, snr_db):
        if feedback:
            return np.asarray(feedback[-1], dtype=float)
        return 1.0 - 2.0 * message_bits[: self.m].astype(float)


class IdentityDecoder:
    """Feeds back the raw reception; decodes to zeros."""

    def __init__(self, k):
        self.k = k

    def generate_feedback(self, t, received, snr_history):
        return received[-1]

    def decode_final(self, received, snr_history):
        return np.zeros(self.k, dtype=np.int64)


class RecordingEncoder(EchoEncoder):
    def __init__(self, m):
        super().__init__(m)
        self.seen: list[int] = []

    def encode_round(self, t, message_bits, past_codewords, feedback, snr_db):
        self.seen.append(len(feedback))
        return super().encode_round(t, message_bits, past_codewords, feedback, snr_db)


def _config(**kw):
    base = dict(
        k=8,
        rounds=4,
        symbols_per_round=8,
        feedback_lag=1,
        uplink=SnrTraceConfig(FixedTrace(30.0)),
        noiseless_feedback=True,
    )
    base.update(kw)
    return SessionConfig(**base)


def test_synchronous_lag_echoes_previous_round():
    cfg = _config(feedback_lag=1)
    tr = run_session(EchoEncoder(8), IdentityDecoder(8), cfg, np.random.default_rng(0))
    # with L = 1 and identity feedback, c^(t) equals y^(t-1)
    for t in range(1, cfg.rounds):
        assert np.array_equal(tr.rounds[t].codeword, tr.rounds[t - 1].received)


def test_lag_two_consumed_rounds():
    cfg = _config(rounds=9, feedback_lag=2)
    tr = run_session(EchoEncoder(8), IdentityDecoder(8), cfg, np.random.default_rng(1))
    assert tr.rounds[8].consumed_feedback_rounds == list(range(0, 7))
    for rec in tr.rounds:
        assert all(i <= rec.round - 2 for i in rec.consumed_feedback_rounds)


def test_lag_equal_to_horizon_sees_no_feedback():
    cfg = _config(rounds=5, feedback_lag=5)
    enc = RecordingEncoder(8)
    run_session(enc, IdentityDecoder(8), cfg, np.random.default_rng(2))
    assert enc.seen == [0] * 5


@settings(max_examples=20, deadline=None)
@given(
    rounds=st.integers(1, 6),
    lag=st.integers(1, 6),
    seed=st.integers(0, 1000),
)
def test_lag_enforcement_property(rounds, lag, seed):
    cfg = _config(rounds=rounds, feedback_lag=lag)
    tr = run_session(EchoEncoder(8), IdentityDecoder(8), cfg, np.random.default_rng(seed))
    for rec in tr.rounds:
        assert set(rec.consumed_feedback_rounds) <= set(range(0, rec.round - lag + 1))


def test_wrong_length_codeword_rejected():
    class BadEncoder:
        def encode_round(self, t, message_bits, past_codewords, feedback, snr_db):
            return np.ones(3)

    with pytest.raises(ProtocolViolation):
        run_session(BadEncoder(), IdentityDecoder(8), _config(), np.random.default_rng(0))


def test_wrong_length_feedback_rejected():
    class BadDecoder(IdentityDecoder):
        def generate_feedback(self, t, received, snr_history):
            return np.ones(2)

    with pytest.raises(ProtocolViolation):
        run_session(EchoEncoder(8), BadDecoder(8), _config(), np.random.default_rng(0))


def test_transcript_structure_and_determinism():
    cfg = _config(rounds=3)
    tr1 = run_session(EchoEncoder(8), IdentityDecoder(8), cfg, np.random.default_rng(9))
    tr2 = run_session(EchoEncoder(8), IdentityDecoder(8), cfg, np.random.default_rng(9))
    assert len(tr1.rounds) == 3
    for a, b in zip(tr1.rounds, tr2.rounds):
        assert np.array_equal(a.received, b.received)
    assert tr1.success == (tr1.message_bits == 0).all()

    doc = json.loads(transcript_to_json(tr1))
    assert set(doc) == {"rounds", "decoded", "success"}
    assert {"round", "codeword", "received", "feedback", "snr_db"} <= set(doc["rounds"][0])
    assert len(doc["decoded"]) == cfg.k


def test_success_flag_tracks_message():
    cfg = _config()
    bits = np.zeros(8, dtype=np.int64)
    tr = run_session(
        EchoEncoder(8), IdentityDecoder(8), cfg, np.random.default_rng(3), message_bits=bits
    )
    assert tr.success  # decoder always answers zeros
    bits[0] = 1
    tr2 = run_session(
        EchoEncoder(8), IdentityDecoder(8), cfg, np.random.default_rng(3), message_bits=bits
    )
    assert not tr2.success
