from .dpo import DPOConfig, EmptyBatch, ExpertFailure, PreferenceBatch, dpo_step_loss, run_bc_pretraining
from .env import TrainEnv, sample_action
from .ppo import LengthMismatch, PPOConfig, RolloutBatch, compute_gae, ppo_loss, run_rl_finetune

__all__ = [
    "DPOConfig", "EmptyBatch", "ExpertFailure", "PreferenceBatch", "dpo_step_loss", "run_bc_pretraining",
    "TrainEnv", "sample_action",
    "LengthMismatch", "PPOConfig", "RolloutBatch", "compute_gae", "ppo_loss", "run_rl_finetune",
]
