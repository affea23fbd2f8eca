"""Curriculum training of the feedback codec.

Each batch draws one training SNR from a time-varying mixture of a benign and
a harsh anchor distribution, then jitters it with a zero-mean Gaussian
perturbation. The mixing weight alpha(k) decays from 1 to 0 over training, so
the codec first masters easy channels and then migrates to hard ones without
forgetting. A fixed-SNR mode bypasses the curriculum entirely (the
conventional way these codecs are trained).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.stats import norm

from . import autodiff as ad
from .afc import (
    AfcModel,
    bits_to_block_targets,
    block_cross_entropy,
    forward_backward,
    logits_to_bits,
    session_graph,
)
from .errors import ConfigError, NumericalFailure
from .layers import Module
from .per import PerPoint, measure_per

HISTORY_CSV_HEADER = ["step", "loss", "alpha", "mean_snr_db"]


@dataclass
class GaussianAnchor:
    mean_db: float
    std_db: float

    def __post_init__(self):
        if self.std_db < 0:
            raise ConfigError("anchor std must be >= 0")


@dataclass
class LinearDecay:
    """alpha falls linearly from 1 at k_start to 0 at k_end."""

    k_start: int = 0
    k_end: int | None = None  # None -> total_steps


@dataclass
class ExponentialDecay:
    rate: float

    def __post_init__(self):
        if self.rate <= 0:
            raise ConfigError("decay rate must be > 0")


AlphaSchedule = Union[LinearDecay, ExponentialDecay]


@dataclass
class CurriculumConfig:
    p_orig: GaussianAnchor = field(default_factory=lambda: GaussianAnchor(8.0, 1.0))
    p_targ: GaussianAnchor = field(default_factory=lambda: GaussianAnchor(0.0, 1.0))
    schedule: AlphaSchedule = field(default_factory=LinearDecay)
    sigma_p: float = 1.0
    total_steps: int = 1000

    def __post_init__(self):
        if self.sigma_p < 0:
            raise ConfigError("sigma_p must be >= 0")
        if self.total_steps < 1:
            raise ConfigError("total_steps must be >= 1")

    def alpha(self, k: int) -> float:
        if isinstance(self.schedule, LinearDecay):
            k_start = self.schedule.k_start
            k_end = self.schedule.k_end if self.schedule.k_end is not None else self.total_steps
            if k_end <= k_start:
                return 0.0 if k >= k_end else 1.0
            return float(np.clip(1.0 - (k - k_start) / (k_end - k_start), 0.0, 1.0))
        return float(np.exp(-self.schedule.rate * k))


def sample_train_snr(k: int, config: CurriculumConfig, rng: np.random.Generator) -> float:
    """Draw one training SNR: anchor mixture plus Gaussian perturbation."""
    a = config.alpha(k)
    anchor = config.p_orig if rng.random() < a else config.p_targ
    base = rng.normal(anchor.mean_db, anchor.std_db)
    return float(base + rng.normal(0.0, config.sigma_p))


def mixture_cdf(x, alpha: float, config: CurriculumConfig):
    """Analytic CDF of the perturbed mixture at a fixed alpha.

    The perturbation convolves each Gaussian anchor, inflating its variance
    by sigma_p^2.
    """
    s1 = np.sqrt(config.p_orig.std_db**2 + config.sigma_p**2)
    s2 = np.sqrt(config.p_targ.std_db**2 + config.sigma_p**2)
    return alpha * norm.cdf(x, config.p_orig.mean_db, s1) + (1.0 - alpha) * norm.cdf(
        x, config.p_targ.mean_db, s2
    )


@dataclass
class TrainConfig:
    steps: int = 1000
    batch_size: int = 64
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    fixed_snr_db: float | None = None  # set -> curriculum bypassed
    noiseless_uplink: bool = False
    noiseless_feedback: bool = True
    feedback_snr_db: float = 20.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")


class Adam:
    """Adaptive-moment gradient descent with bias correction."""

    def __init__(self, model: Module, config: TrainConfig):
        self.lr = config.learning_rate
        self.b1, self.b2, self.eps = config.adam_beta1, config.adam_beta2, config.adam_eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in model.parameters()}
        self.v = {name: np.zeros_like(p.data) for name, p in model.parameters()}

    def step(self, model: Module, grads: dict[str, np.ndarray]):
        self.t += 1
        for name, p in model.parameters():
            g = grads[name]
            self.m[name] = self.b1 * self.m[name] + (1 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1 - self.b2) * g * g
            m_hat = self.m[name] / (1 - self.b1**self.t)
            v_hat = self.v[name] / (1 - self.b2**self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class HistoryRow:
    step: int
    loss: float
    alpha: float
    mean_snr_db: float


def train(
    model: AfcModel,
    curriculum: CurriculumConfig,
    config: TrainConfig,
) -> list[HistoryRow]:
    """Train the codec in place and return the per-step loss history.

    Deterministic given the seed: batches, SNR draws, and channel noise all
    come from one generator, so identical seeds give identical histories and
    identical final weights.
    """
    rng = np.random.default_rng(config.seed)
    optimizer = Adam(model, config)
    history: list[HistoryRow] = []
    for k in range(config.steps):
        if config.fixed_snr_db is not None:
            snr, alpha = float(config.fixed_snr_db), 0.0
        else:
            snr = sample_train_snr(k, curriculum, rng)
            alpha = curriculum.alpha(k)
        bits = rng.integers(0, 2, (config.batch_size, model.config.k))
        try:
            loss, grads = forward_backward(
                model,
                bits,
                np.full(model.config.rounds, snr),
                rng,
                noiseless_uplink=config.noiseless_uplink,
                noiseless_feedback=config.noiseless_feedback,
                feedback_snr_db=config.feedback_snr_db,
            )
        except NumericalFailure as exc:
            raise NumericalFailure(f"training aborted at step {k}: {exc}") from exc
        optimizer.step(model, grads)
        history.append(HistoryRow(k, loss, alpha, snr))
    return history


def write_history_csv(history: list[HistoryRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_CSV_HEADER)
        for row in history:
            writer.writerow(
                [row.step, f"{row.loss:.9g}", f"{row.alpha:.9g}", f"{row.mean_snr_db:.9g}"]
            )


def neural_trial_fn(
    model: AfcModel,
    noiseless_feedback: bool = True,
    feedback_snr_db: float = 20.0,
):
    """Batched packet trials of the neural codec, for measure_per."""
    c = model.config

    def trial(snr_db: float, rng: np.random.Generator, n: int) -> np.ndarray:
        bits = rng.integers(0, 2, (n, c.k))
        with ad.no_grad():
            logits = session_graph(
                model,
                bits,
                np.full(c.rounds, snr_db),
                rng,
                noiseless_feedback=noiseless_feedback,
                feedback_snr_db=feedback_snr_db,
            )
        return np.all(logits_to_bits(logits.data) == bits, axis=1)

    return trial


def evaluate_robustness(
    model: AfcModel,
    snr_grid,
    max_trials: int = 2000,
    target_errors: int = 100,
    seed: int = 0,
    noiseless_feedback: bool = True,
    feedback_snr_db: float = 20.0,
) -> list[PerPoint]:
    """PER with confidence intervals across an SNR grid."""
    return measure_per(
        neural_trial_fn(model, noiseless_feedback, feedback_snr_db),
        snr_grid,
        max_trials=max_trials,
        target_errors=target_errors,
        seed=seed,
        batch_size=256,
    )


def evaluate_loss(
    model: AfcModel, snr_db: float, batch_size: int, rng: np.random.Generator
) -> float:
    """Session loss on a fresh batch without updating the model."""
    bits = rng.integers(0, 2, (batch_size, model.config.k))
    with ad.no_grad():
        logits = session_graph(model, bits, np.full(model.config.rounds, snr_db), rng)
        return block_cross_entropy(logits, bits_to_block_targets(bits, model.config)).item()
