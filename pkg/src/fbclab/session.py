"""Round-based interactive coding session engine.

The engine owns the lag contract: when encoding round t it hands the encoder
only feedback receptions for rounds <= t - L, so a codec cannot consume
fresher feedback than the protocol allows. Lag L = 1 is the synchronous
setting (feedback of the immediately preceding round), L = 2 the default
pipelined one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .channel import (
    ChannelParams,
    FixedTrace,
    SnrTraceConfig,
    apply_channel,
    sample_trace_kind,
    trace_value_at,
)
from .errors import ConfigError, ProtocolViolation


class SessionEncoder(Protocol):
    def encode_round(
        self,
        t: int,
        message_bits: np.ndarray,
        past_codewords: list[np.ndarray],
        feedback: list[np.ndarray],
        snr_db: float,
    ) -> np.ndarray: ...


class SessionDecoder(Protocol):
    def generate_feedback(
        self, t: int, received: list[np.ndarray], snr_history: list[float]
    ) -> np.ndarray: ...

    def decode_final(
        self, received: list[np.ndarray], snr_history: list[float]
    ) -> np.ndarray: ...


@dataclass
class SessionConfig:
    k: int = 48
    rounds: int = 9
    symbols_per_round: int = 16
    feedback_lag: int = 2
    feedback_dim: int | None = None  # None -> symbols_per_round
    uplink: SnrTraceConfig = field(default_factory=lambda: SnrTraceConfig(FixedTrace(0.0)))
    feedback: SnrTraceConfig = field(default_factory=lambda: SnrTraceConfig(FixedTrace(20.0)))
    noiseless_feedback: bool = True
    round_period_ms: float = 1.0

    def __post_init__(self):
        if self.rounds < 1 or self.symbols_per_round < 1:
            raise ConfigError("rounds and symbols_per_round must be >= 1")
        if self.feedback_lag < 1:
            raise ConfigError("feedback_lag must be >= 1")
        if self.k < 1:
            raise ConfigError("k must be >= 1")

    @property
    def blocklength(self) -> int:
        return self.rounds * self.symbols_per_round

    @property
    def fb_dim(self) -> int:
        return self.feedback_dim if self.feedback_dim is not None else self.symbols_per_round


@dataclass
class RoundRecord:
    round: int
    codeword: np.ndarray
    received: np.ndarray
    feedback_sent: np.ndarray
    feedback_received: np.ndarray
    snr_db: float
    feedback_snr_db: float
    consumed_feedback_rounds: list[int]


@dataclass
class SessionTranscript:
    config: SessionConfig
    message_bits: np.ndarray
    rounds: list[RoundRecord]
    decoded_bits: np.ndarray
    success: bool


def _check_vector(vec, expected_len: int, what: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (expected_len,):
        raise ProtocolViolation(
            f"{what} has shape {vec.shape}, expected ({expected_len},)"
        )
    if not np.all(np.isfinite(vec)):
        raise ProtocolViolation(f"{what} contains non-finite values")
    return vec


def run_session(
    encoder: SessionEncoder,
    decoder: SessionDecoder,
    config: SessionConfig,
    rng: np.random.Generator,
    message_bits: np.ndarray | None = None,
) -> SessionTranscript:
    """Run one complete interactive session and return its transcript.

    Deterministic given (codecs, config, rng state, message bits). The trace
    realizations are drawn from the session rng, not the per-config seeds, so
    independent Monte-Carlo sessions see independent channel conditions.
    """
    T, M, L = config.rounds, config.symbols_per_round, config.feedback_lag
    duration = max(T * config.round_period_ms, config.round_period_ms)
    up_trace = _sample_with_rng(config.uplink, duration, rng)
    fb_trace = _sample_with_rng(config.feedback, duration, rng)

    if message_bits is None:
        message_bits = rng.integers(0, 2, config.k)
    message_bits = np.asarray(message_bits, dtype=np.int64)
    if message_bits.shape != (config.k,):
        raise ConfigError(f"message_bits must have length {config.k}")

    codewords: list[np.ndarray] = []
    received: list[np.ndarray] = []
    fb_received: list[np.ndarray] = []
    snr_history: list[float] = []
    records: list[RoundRecord] = []

    for t in range(T):
        now = t * config.round_period_ms
        snr_t = trace_value_at(up_trace, now)
        fb_snr_t = trace_value_at(fb_trace, now)

        consumed = list(range(0, t - L + 1))
        available = [fb_received[i] for i in consumed]
        cw = encoder.encode_round(
            t, message_bits.copy(), [c.copy() for c in codewords], available, snr_t
        )
        cw = _check_vector(cw, M, f"round-{t} codeword")

        y = apply_channel(cw, ChannelParams(snr_db=snr_t), rng)
        codewords.append(cw)
        received.append(y)
        snr_history.append(snr_t)

        fb = decoder.generate_feedback(t, [r.copy() for r in received], list(snr_history))
        fb = _check_vector(fb, config.fb_dim, f"round-{t} feedback")
        fb_params = ChannelParams(
            snr_db=fb_snr_t, noiseless=config.noiseless_feedback, direction="feedback"
        )
        fb_rx = apply_channel(fb, fb_params, rng)
        fb_received.append(fb_rx)

        records.append(
            RoundRecord(t, cw, y, fb, fb_rx, snr_t, fb_snr_t, consumed)
        )

    decoded = np.asarray(
        decoder.decode_final([r.copy() for r in received], list(snr_history)),
        dtype=np.int64,
    )
    if decoded.shape != (config.k,):
        raise ProtocolViolation(f"decoded bits have shape {decoded.shape}")
    success = bool(np.array_equal(decoded, message_bits))
    return SessionTranscript(config, message_bits, records, decoded, success)


def _sample_with_rng(cfg: SnrTraceConfig, duration, rng: np.random.Generator):
    return sample_trace_kind(cfg.kind, duration, rng)


def transcript_to_json(tr: SessionTranscript, indent: int | None = None) -> str:
    doc = {
        "rounds": [
            {
                "round": r.round,
                "codeword": r.codeword.tolist(),
                "received": r.received.tolist(),
                "feedback": r.feedback_received.tolist(),
                "feedback_sent": r.feedback_sent.tolist(),
                "snr_db": r.snr_db,
                "feedback_snr_db": r.feedback_snr_db,
                "consumed_feedback_rounds": r.consumed_feedback_rounds,
            }
            for r in tr.rounds
        ],
        "decoded": tr.decoded_bits.tolist(),
        "success": tr.success,
    }
    return json.dumps(doc, indent=indent)
