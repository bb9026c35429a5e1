"""Trace-driven ABR experimentation: simulator, baselines, beam-search expert,
DPO pretraining plus PPO fine-tuning, and a benchmark harness."""

__version__ = "0.1.0"
