"""HARQ with Chase combining over the convolutional mother code.

Every attempt retransmits the full rate-1/3 codeword; the receiver sums the
channel LLRs of all receptions before re-running Viterbi. Acknowledgment is
genie-aided by default (decoded bits compared with the truth); a CRC-16 check
can be enabled instead, in which case the CRC is carried inside the K info
bits.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .convcode import (
    TAIL_BITS,
    bpsk_llr,
    conv_encode,
    modulate_bpsk,
    viterbi_decode_batch,
)
from .errors import ConfigError

CRC16_POLY = 0x1021  # CCITT
CRC16_LEN = 16


@dataclass
class HarqConfig:
    k: int = 47
    max_attempts: int = 3
    use_crc16: bool = False

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")
        if self.use_crc16 and self.k <= CRC16_LEN:
            raise ConfigError("k must exceed the CRC-16 length")

    @property
    def codeword_len(self) -> int:
        return 3 * (self.k + TAIL_BITS)


@dataclass
class HarqResult:
    success: bool
    attempts_used: int


def crc16(bits: np.ndarray) -> np.ndarray:
    """CRC-16/CCITT remainder of a bit vector, MSB first."""
    reg = 0xFFFF
    for b in np.asarray(bits, dtype=int):
        reg ^= int(b) << 15
        reg = ((reg << 1) ^ CRC16_POLY) & 0xFFFF if reg & 0x8000 else (reg << 1) & 0xFFFF
    return np.array([(reg >> i) & 1 for i in range(15, -1, -1)], dtype=np.int64)


@lru_cache(maxsize=8)
def _generator_matrix(k: int) -> np.ndarray:
    """GF(2) generator matrix of the zero-tail code, built from impulses."""
    rows = [conv_encode(np.eye(k, dtype=np.int64)[i]) for i in range(k)]
    return np.array(rows, dtype=np.int64)


def conv_encode_batch(bits: np.ndarray) -> np.ndarray:
    """Encode a (B, K) bit matrix via the generator matrix (linearity)."""
    bits = np.asarray(bits, dtype=np.int64)
    return (bits @ _generator_matrix(bits.shape[1])) & 1


def _draw_payload(config: HarqConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    if config.use_crc16:
        data = rng.integers(0, 2, (n, config.k - CRC16_LEN))
        return np.concatenate([data, np.array([crc16(d) for d in data])], axis=1)
    return rng.integers(0, 2, (n, config.k))


def harq_cc_trial_batch(
    config: HarqConfig, snr_db: float, rng: np.random.Generator, n: int
) -> np.ndarray:
    """Run n independent HARQ sessions; returns per-trial success flags."""
    bits = _draw_payload(config, rng, n)
    symbols = modulate_bpsk(conv_encode_batch(bits))
    sigma = 10.0 ** (-snr_db / 20.0)

    combined = np.zeros_like(symbols)
    success = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)
    for _ in range(config.max_attempts):
        received = symbols + sigma * rng.standard_normal(symbols.shape)
        combined += bpsk_llr(received, snr_db)
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        decoded = viterbi_decode_batch(combined[idx])
        if config.use_crc16:
            ok = np.array([np.array_equal(crc16(d[:-CRC16_LEN]), d[-CRC16_LEN:]) for d in decoded])
        else:
            ok = np.all(decoded == bits[idx], axis=1)
        success[idx[ok]] = True
        active[idx[ok]] = False
    return success


def run_harq_cc(config: HarqConfig, snr_db: float, rng: np.random.Generator) -> HarqResult:
    """One HARQ-CC session: attempts stop at success or the attempt budget."""
    bits = _draw_payload(config, rng, 1)[0]
    symbols = modulate_bpsk(conv_encode(bits))
    sigma = 10.0 ** (-snr_db / 20.0)

    combined = np.zeros_like(symbols)
    for attempt in range(1, config.max_attempts + 1):
        received = symbols + sigma * rng.standard_normal(symbols.shape)
        combined += bpsk_llr(received, snr_db)
        decoded = viterbi_decode_batch(combined[None, :])[0]
        if config.use_crc16:
            ok = np.array_equal(crc16(decoded[:-CRC16_LEN]), decoded[-CRC16_LEN:])
        else:
            ok = np.array_equal(decoded, bits)
        if ok:
            return HarqResult(True, attempt)
    return HarqResult(False, config.max_attempts)


def harq_trial_fn(config: HarqConfig):
    """Adapter for measure_per."""

    def trial(snr_db: float, rng: np.random.Generator, n: int) -> np.ndarray:
        return harq_cc_trial_batch(config, snr_db, rng, n)

    return trial


def uncoded_bpsk_trial_fn(k: int):
    """Single-shot uncoded BPSK packets, for the closed-form PER oracle."""

    def trial(snr_db: float, rng: np.random.Generator, n: int) -> np.ndarray:
        bits = rng.integers(0, 2, (n, k))
        sigma = 10.0 ** (-snr_db / 20.0)
        y = modulate_bpsk(bits) + sigma * rng.standard_normal((n, k))
        return np.all((y < 0).astype(np.int64) == bits, axis=1)

    return trial


def effective_snr_db(llrs: np.ndarray, bits: np.ndarray) -> float:
    """Post-detection SNR estimated from LLR statistics.

    For BPSK channel LLRs the sign-corrected LLR has mean 2/sigma^2 and
    variance 4/sigma^2, so mean^2/variance equals the linear SNR.
    """
    corrected = np.asarray(llrs, dtype=float) * modulate_bpsk(bits)
    m = corrected.mean()
    v = corrected.var()
    return float(10.0 * np.log10(m * m / v))
