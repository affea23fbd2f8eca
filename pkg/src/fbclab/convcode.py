"""Rate-1/3 convolutional mother code with soft-decision Viterbi decoding.

Feedforward code, constraint length 7, generators (133, 171, 165) octal,
zero-tail terminated. Stands in for the heavyweight mother codes of
production HARQ stacks at the same minimum rate of ~1/3.

LLR convention: positive LLR means bit 0 is more likely. For BPSK (0 -> +1,
1 -> -1) over AWGN with noise variance sigma^2 the channel LLR is 2*y/sigma^2.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, InputDomainError, ProtocolViolation

GENERATORS = (0o133, 0o171, 0o165)
CONSTRAINT_LEN = 7
TAIL_BITS = CONSTRAINT_LEN - 1
RATE_INV = len(GENERATORS)

_N_STATES = 1 << TAIL_BITS


def _build_trellis():
    # state s holds the previous TAIL_BITS inputs, most recent in the MSB.
    # On input b the full register is (b << TAIL_BITS) | s.
    next_state = np.zeros((_N_STATES, 2), dtype=np.int64)
    out_idx = np.zeros((_N_STATES, 2), dtype=np.int64)  # 3-bit output pattern
    for s in range(_N_STATES):
        for b in (0, 1):
            reg = (b << TAIL_BITS) | s
            pattern = 0
            for g in GENERATORS:
                pattern = (pattern << 1) | (bin(reg & g).count("1") & 1)
            next_state[s, b] = reg >> 1
            out_idx[s, b] = pattern
    return next_state, out_idx


_NEXT_STATE, _OUT_IDX = _build_trellis()

# Predecessor tables: every state ns is reached with input bit ns >> (TAIL_BITS-1)
# from the two states that differ in the bit leaving the register.
_B_IN = np.arange(_N_STATES) >> (TAIL_BITS - 1)
_PRED0 = (np.arange(_N_STATES) & (_N_STATES // 2 - 1)) << 1
_PRED1 = _PRED0 | 1
_OUT_P0 = _OUT_IDX[_PRED0, _B_IN]
_OUT_P1 = _OUT_IDX[_PRED1, _B_IN]

# Antipodal signs of each 3-bit output pattern, per coded position.
_PATTERN_SIGNS = np.array(
    [[1 - 2 * ((q >> k) & 1) for k in (2, 1, 0)] for q in range(8)], dtype=float
)


def conv_encode(bits: np.ndarray) -> np.ndarray:
    """Encode a bit vector; output has 3*(len(bits)+6) coded bits."""
    bits = np.asarray(bits)
    if bits.ndim != 1 or bits.size == 0:
        raise InputDomainError("conv_encode expects a non-empty 1-D bit vector")
    if not np.isin(bits, (0, 1)).all():
        raise InputDomainError("conv_encode input must be 0/1 valued")
    padded = np.concatenate([bits.astype(np.int64), np.zeros(TAIL_BITS, dtype=np.int64)])
    out = np.empty(RATE_INV * padded.size, dtype=np.int64)
    s = 0
    for i, b in enumerate(padded):
        pattern = _OUT_IDX[s, b]
        out[3 * i] = (pattern >> 2) & 1
        out[3 * i + 1] = (pattern >> 1) & 1
        out[3 * i + 2] = pattern & 1
        s = _NEXT_STATE[s, b]
    return out


def viterbi_decode(llrs: np.ndarray) -> np.ndarray:
    """Maximum-likelihood decode of one zero-tail codeword from channel LLRs.

    Ties between merging paths are broken toward the 0-branch so decoding is
    deterministic. Input length must be 3*(K+6); returns the K message bits.
    """
    llrs = np.asarray(llrs, dtype=float)
    if llrs.ndim != 1:
        raise ProtocolViolation("viterbi_decode expects a 1-D LLR vector")
    return viterbi_decode_batch(llrs[None, :])[0]


def viterbi_decode_batch(llrs: np.ndarray) -> np.ndarray:
    """Vectorized Viterbi over a batch of codewords, shape (B, 3*(K+6))."""
    llrs = np.asarray(llrs, dtype=float)
    if llrs.ndim != 2 or llrs.shape[1] % RATE_INV != 0:
        raise ProtocolViolation(
            f"LLR vector length {llrs.shape[-1]} is not a multiple of {RATE_INV}"
        )
    n_steps = llrs.shape[1] // RATE_INV
    if n_steps <= TAIL_BITS:
        raise ProtocolViolation("codeword too short for a zero-tail trellis")
    n_batch = llrs.shape[0]

    neg_inf = -1e30
    pm = np.full((n_batch, _N_STATES), neg_inf)
    pm[:, 0] = 0.0
    choose_p1 = np.empty((n_steps, n_batch, _N_STATES), dtype=bool)

    steps = llrs.reshape(n_batch, n_steps, RATE_INV)
    for t in range(n_steps):
        corr = steps[:, t, :] @ _PATTERN_SIGNS.T  # (B, 8) pattern scores
        sc0 = pm[:, _PRED0] + corr[:, _OUT_P0]
        sc1 = pm[:, _PRED1] + corr[:, _OUT_P1]
        take1 = sc1 > sc0  # ties -> predecessor 0, the 0-branch
        pm = np.where(take1, sc1, sc0)
        choose_p1[t] = take1

    # Zero tail forces the final state to 0.
    state = np.zeros(n_batch, dtype=np.int64)
    decoded = np.empty((n_batch, n_steps), dtype=np.int64)
    rows = np.arange(n_batch)
    for t in range(n_steps - 1, -1, -1):
        decoded[:, t] = _B_IN[state]
        take1 = choose_p1[t][rows, state]
        state = np.where(take1, _PRED1[state], _PRED0[state])
    return decoded[:, : n_steps - TAIL_BITS]


def chase_combine(llr_sets: list[np.ndarray]) -> np.ndarray:
    """Elementwise LLR sum over replica receptions (maximal-ratio combining)."""
    if not llr_sets:
        raise ConfigError("chase_combine needs at least one LLR set")
    arrs = [np.asarray(a, dtype=float) for a in llr_sets]
    length = arrs[0].shape
    if any(a.shape != length for a in arrs):
        raise InputDomainError("chase_combine LLR sets must share one length")
    return np.sum(arrs, axis=0)


def modulate_bpsk(bits: np.ndarray) -> np.ndarray:
    """Map bits to antipodal unit-power symbols: 0 -> +1, 1 -> -1."""
    return 1.0 - 2.0 * np.asarray(bits, dtype=float)


def bpsk_llr(received: np.ndarray, snr_db: float) -> np.ndarray:
    """Channel LLRs for BPSK over AWGN at the given SNR (unit signal power)."""
    sigma2 = 10.0 ** (-snr_db / 10.0)
    return 2.0 * np.asarray(received, dtype=float) / sigma2
