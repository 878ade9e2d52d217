"""Dataclass configs with per-domain defaults.

Values follow the tuned settings for each domain; epochs for the supervised
stages and the distillation budget are overridable knobs with defaults that
fit a desk-scale run.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from .envs import DOMAIN_NAVIGATE, DOMAIN_REARRANGE


@dataclass
class GoalPredictorConfig:
    attr_dim: int = 32
    pos_dim: int = 64          # entity token width = 2*attr_dim + pos_dim = 128
    n_layers: int = 4
    n_heads: int = 8
    ff_dim: int = 256
    dropout: float = 0.4
    head_hidden: int = 128
    batch_size: int = 16
    lr: float = 1e-4
    epochs: int = 100

    @property
    def model_dim(self) -> int:
        return 2 * self.attr_dim + self.pos_dim


@dataclass
class DistanceConfig:
    hidden: int = 512
    batch_size: int = 512
    lr: float = 3e-3
    epochs: int = 100
    pairs_per_demo: int = 32


@dataclass
class BCConfig:
    hidden: int = 256
    n_hidden: int = 2
    batch_size: int = 64
    lr: float = 1e-4
    epochs: int = 20
    log_std: float = -1.0      # fixed log-std of the continuous head
    max_states_per_demo: int = 0   # 0 = use every demo state


@dataclass
class AdapterConfig:
    attr_dim: int = 4
    pos_dim: int = 8           # entity token width = 16
    n_layers: int = 2
    n_heads: int = 4
    ff_dim: int = 128
    dropout: float = 0.1
    head_hidden: int = 256
    batch_size: int = 32
    lr: float = 1e-3
    epochs: int = 10

    @property
    def model_dim(self) -> int:
        return 2 * self.attr_dim + self.pos_dim


@dataclass
class PPOConfig:
    batch_size: int = 32
    lr: float = 3e-5
    n_steps: int = 512
    n_epochs: int = 50
    gamma: float = 0.99
    gae_lambda: float = 0.99
    clip_range: float = 0.3
    entropy_coef: float = 0.1
    vf_coef: float = 0.5
    max_grad_norm: float = 2.0
    hidden: int = 64
    init_log_std: float = 0.0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 < self.clip_range < 1.0:
            raise ValueError("clip_range must lie in (0, 1)")


@dataclass
class DistillConfig:
    steps: int = 2000
    lr: float = 1e-3
    batch_size: int = 64
    entropy_coef: float = 0.05     # discrete: low-entropy penalty weight
    log_std_floor: float = -0.5    # continuous: post-distillation log-std


def goal_config_for(domain: str, **overrides) -> GoalPredictorConfig:
    return replace(GoalPredictorConfig(), **overrides)


def distance_config_for(domain: str, **overrides) -> DistanceConfig:
    base = DistanceConfig() if domain == DOMAIN_REARRANGE else DistanceConfig(
        hidden=128, batch_size=32, lr=1e-3)
    return replace(base, **overrides)


def bc_config_for(domain: str, **overrides) -> BCConfig:
    base = BCConfig() if domain == DOMAIN_REARRANGE else BCConfig(batch_size=32)
    return replace(base, **overrides)


def adapter_config_for(domain: str, **overrides) -> AdapterConfig:
    return replace(AdapterConfig(), **overrides)


def ppo_config_for(domain: str, **overrides) -> PPOConfig:
    if domain == DOMAIN_REARRANGE:
        base = PPOConfig()
    else:
        base = PPOConfig(batch_size=16, lr=3e-4, n_steps=256, n_epochs=10,
                         clip_range=0.2, entropy_coef=3e-4, max_grad_norm=1.0)
    return replace(base, **overrides)


def distill_config_for(domain: str, **overrides) -> DistillConfig:
    return replace(DistillConfig(), **overrides)


def config_to_dict(cfg) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}
