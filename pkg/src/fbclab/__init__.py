"""Feedback-channel-coding laboratory.

Round-based interactive coding sessions over AWGN-style channels, HARQ
baselines with Chase combining, a toy attention-based feedback codec with
its own reverse-mode autodiff, an SNR curriculum trainer, a pipeline
latency model, and link-budget / complexity analysis tools.
"""

__version__ = "0.1.0"
