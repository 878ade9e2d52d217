"""PPO on a single target task, with optional distillation-based
initialization of the actor and critic from the two adaptation models.

The reward is supplied as a potential function phi; each step earns
phi(s') - phi(s) (or zero for the zero-reward baseline). Episode success is
counted at termination and the cumulative count over training is the
headline metric.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .configs import DistillConfig, PPOConfig
from .envs import DOMAIN_REARRANGE, GridAction, feature_dim, state_features
from .policy_adapt import N_GRID_ACTIONS

log = logging.getLogger(__name__)

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


class ActorCritic(ad.Module):
    """Separate policy and value MLPs over the state features. Discrete
    policy emits categorical logits; continuous policy emits a mean with a
    state-independent log-std parameter bounded in [-5, 2]."""

    def __init__(self, domain: str, cfg: PPOConfig, rng: np.random.Generator):
        self.domain = domain
        self.discrete = domain == DOMAIN_REARRANGE
        obs = feature_dim(domain)
        out = N_GRID_ACTIONS if self.discrete else 2
        self.policy = ad.MLP([obs, cfg.hidden, cfg.hidden, out], rng, activation="tanh")
        self.value = ad.MLP([obs, cfg.hidden, cfg.hidden, 1], rng, activation="tanh")
        if not self.discrete:
            self.log_std = ad.parameter(np.full(2, cfg.init_log_std))

    def clamp_log_std(self) -> None:
        if not self.discrete:
            np.clip(self.log_std.data, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std.data)

    # fast numpy-only forward for rollouts; weights are read fresh so the
    # views stay valid across in-place optimizer updates
    def _np_weights(self, net) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(layer.weight.data, layer.bias.data) for layer in net.layers]

    def policy_forward_np(self, x: np.ndarray, weights=None) -> np.ndarray:
        weights = weights or self._np_weights(self.policy)
        for i, (w, b) in enumerate(weights):
            x = x @ w + b
            if i < len(weights) - 1:
                x = np.tanh(x)
        return x

    def value_forward_np(self, x: np.ndarray, weights=None) -> np.ndarray:
        weights = weights or self._np_weights(self.value)
        for i, (w, b) in enumerate(weights):
            x = x @ w + b
            if i < len(weights) - 1:
                x = np.tanh(x)
        return x[..., 0]


def categorical_sample(logits: np.ndarray, rng: np.random.Generator) -> tuple[int, float, float]:
    """(action, log prob, entropy) from one logits row."""
    z = logits - logits.max()
    p = np.exp(z)
    p /= p.sum()
    a = int(np.searchsorted(np.cumsum(p), rng.random()))
    a = min(a, len(p) - 1)
    logp = float(np.log(p[a]))
    entropy = float(-(p * np.log(np.maximum(p, 1e-300))).sum())
    return a, logp, entropy


def gaussian_sample(mean: np.ndarray, log_std: np.ndarray,
                    rng: np.random.Generator) -> tuple[np.ndarray, float, float]:
    std = np.exp(log_std)
    a = mean + std * rng.standard_normal(mean.shape)
    logp = float((-0.5 * ((a - mean) / std) ** 2 - log_std - _HALF_LOG_2PI).sum())
    entropy = float((log_std + 0.5 + _HALF_LOG_2PI).sum())
    return a, logp, entropy


def compute_gae(rewards, values, dones, last_value, gamma: float, lam: float):
    """Generalized advantage estimation over a rollout buffer; the buffer may
    end mid-episode, in which case last_value bootstraps the tail. Returns
    (advantages, returns)."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    T = len(rewards)
    adv = np.zeros(T)
    acc = 0.0
    for t in range(T - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        next_value = last_value if t == T - 1 else values[t + 1]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        acc = delta + gamma * lam * nonterminal * acc
        adv[t] = acc
    return adv, adv + values


@dataclass
class RolloutBatch:
    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    values: np.ndarray = field(default=None)
    advantages: np.ndarray = field(default=None)
    returns: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.obs)


def _policy_logp_entropy(ac: ActorCritic, obs: np.ndarray, actions) -> tuple[Tensor, Tensor]:
    out = ac.policy(ad.ensure_tensor(obs))
    if ac.discrete:
        logp_all = ad.log_softmax(out, axis=-1)
        logp = ad.take_rows(logp_all, actions)
        probs = ad.exp(logp_all)
        entropy = ad.neg((probs * logp_all).sum(axis=-1)).mean()
        return logp, entropy
    log_std = ad.clip(ac.log_std, LOG_STD_MIN, LOG_STD_MAX)
    std = ad.exp(log_std)
    z = (actions - out) / std
    logp = (ad.neg(z * z * 0.5) - log_std - _HALF_LOG_2PI).sum(axis=-1)
    entropy = (log_std + (0.5 + _HALF_LOG_2PI)).sum().mean()
    return logp, entropy


def ppo_update(ac: ActorCritic, batch: RolloutBatch, cfg: PPOConfig,
               opt: ad.Adam, rng: np.random.Generator) -> dict:
    """Clipped-surrogate PPO epochs over shuffled minibatches. Advantages
    are normalized per minibatch. Returns loss/clipping statistics."""
    n = len(batch)
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
             "clip_fraction": 0.0, "updates": 0}
    for _ in range(cfg.n_epochs):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            adv = batch.advantages[idx]
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)
            logp, entropy = _policy_logp_entropy(ac, batch.obs[idx], batch.actions[idx])
            ratio = ad.exp(logp - batch.log_probs[idx])
            unclipped = ratio * adv
            clipped = ad.clip(ratio, 1.0 - cfg.clip_range, 1.0 + cfg.clip_range) * adv
            policy_loss = ad.neg(ad.minimum(unclipped, clipped).mean())
            v = ac.value(ad.ensure_tensor(batch.obs[idx]))[:, 0]
            verr = v - batch.returns[idx]
            value_loss = (verr * verr).mean()
            loss = policy_loss + value_loss * cfg.vf_coef - entropy * cfg.entropy_coef
            if not np.isfinite(loss.item()):
                raise FloatingPointError(
                    f"PPO loss diverged (policy {policy_loss.item():.3g}, "
                    f"value {value_loss.item():.3g}, adv range "
                    f"[{adv.min():.3g}, {adv.max():.3g}])")
            opt.zero_grad()
            loss.backward()
            ad.clip_grad_norm([p for _, p in opt.params], cfg.max_grad_norm)
            opt.step()
            ac.clamp_log_std()
            stats["policy_loss"] += policy_loss.item()
            stats["value_loss"] += value_loss.item()
            stats["entropy"] += entropy.item()
            stats["clip_fraction"] += float(
                (np.abs(ratio.data - 1.0) > cfg.clip_range).mean())
            stats["updates"] += 1
    k = max(stats["updates"], 1)
    return {key: val / k if key != "updates" else val for key, val in stats.items()}


@dataclass
class RLRunResult:
    rows: list[dict]
    successes: int
    episodes: int
    actor_critic: ActorCritic

    @property
    def final_successes(self) -> int:
        return self.successes


def train_target_policy(env_factory, domain: str, cfg: PPOConfig, total_steps: int,
                        seed: int, potential=None, actor_critic: ActorCritic | None = None,
                        csv_path=None, log_every: int = 1) -> RLRunResult:
    """Run PPO for ``total_steps`` environment steps on one task.

    ``potential`` maps a state to a scalar; the per-step reward is the
    potential difference (None means the zero-reward baseline).
    ``actor_critic`` carries a distillation-initialized model; by default a
    fresh randomly initialized one is used.
    """
    rng = np.random.default_rng(seed)
    ac = actor_critic if actor_critic is not None else ActorCritic(domain, cfg, rng)
    opt = ad.Adam(dict(ac.named_parameters()), lr=cfg.lr)
    env = env_factory()

    state = env.reset(rng)
    phi_prev = potential(state) if potential else 0.0
    episode_reward = 0.0
    recent_rewards: list[float] = []
    successes = 0
    episodes = 0
    env_steps = 0
    rows: list[dict] = []
    iteration = 0

    while env_steps < total_steps:
        n = min(cfg.n_steps, total_steps - env_steps)
        obs_buf = np.empty((n, feature_dim(domain)))
        act_buf = (np.empty(n, dtype=np.int64) if ac.discrete else np.empty((n, 2)))
        logp_buf = np.empty(n)
        rew_buf = np.empty(n)
        done_buf = np.zeros(n)
        entropies = np.empty(n)
        pw = ac._np_weights(ac.policy)

        for t in range(n):
            obs = state_features(domain, state)
            out = ac.policy_forward_np(obs, pw)
            if ac.discrete:
                a, logp, ent = categorical_sample(out, rng)
                action = GridAction(a)
            else:
                log_std = np.clip(ac.log_std.data, LOG_STD_MIN, LOG_STD_MAX)
                a, logp, ent = gaussian_sample(out, log_std, rng)
                action = (float(a[0]), float(a[1]))
            next_state, done, info = env.step(action)
            phi_next = potential(next_state) if potential else 0.0
            reward = phi_next - phi_prev
            obs_buf[t] = obs
            act_buf[t] = a
            logp_buf[t] = logp
            rew_buf[t] = reward
            entropies[t] = ent
            episode_reward += reward
            if done:
                done_buf[t] = 1.0
                episodes += 1
                successes += int(bool(info.get("success", False)))
                recent_rewards.append(episode_reward)
                episode_reward = 0.0
                state = env.reset(rng)
                phi_prev = potential(state) if potential else 0.0
            else:
                state = next_state
                phi_prev = phi_next
        env_steps += n

        values = ac.value_forward_np(obs_buf)
        last_value = float(ac.value_forward_np(state_features(domain, state)[None])[0])
        if done_buf[-1]:
            last_value = 0.0  # buffer ended exactly on an episode boundary
        advantages, returns = compute_gae(rew_buf, values, done_buf, last_value,
                                          cfg.gamma, cfg.gae_lambda)
        batch = RolloutBatch(obs=obs_buf, actions=act_buf, log_probs=logp_buf,
                             rewards=rew_buf, dones=done_buf, values=values,
                             advantages=advantages, returns=returns)
        update_stats = ppo_update(ac, batch, cfg, opt, rng)

        iteration += 1
        if iteration % log_every == 0 or env_steps >= total_steps:
            rows.append({
                "env_steps": env_steps,
                "cumulative_successes": successes,
                "episodes": episodes,
                "mean_episode_reward": float(np.mean(recent_rewards[-20:])) if recent_rewards else 0.0,
                "policy_entropy": float(entropies.mean()),
                "clip_fraction": update_stats["clip_fraction"],
            })

    if csv_path is not None:
        write_run_csv(csv_path, rows)
    return RLRunResult(rows=rows, successes=successes, episodes=episodes, actor_critic=ac)


CSV_FIELDS = ["env_steps", "cumulative_successes", "episodes",
              "mean_episode_reward", "policy_entropy", "clip_fraction"]


def write_run_csv(path, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in CSV_FIELDS})


def read_run_csv(path) -> list[dict]:
    with open(path, "r", encoding="utf-8") as f:
        return [{k: float(v) if v != "" else None for k, v in row.items()}
                for row in csv.DictReader(f)]


# -- knowledge distillation -----------------------------------------------------


def _named(module: ad.Module):
    return list(module.named_parameters())


def distill_value(ac: ActorCritic, state_feats: np.ndarray, targets: np.ndarray,
                  cfg: DistillConfig, seed: int = 0) -> list[float]:
    """Regress the value head onto the potential at the pooled states for a
    fixed Adam budget; returns the loss history."""
    rng = np.random.default_rng(seed)
    opt = ad.Adam({f"value.{k}": p for k, p in _named(ac.value)}, lr=cfg.lr)
    history = []
    n = len(state_feats)
    for _ in range(cfg.steps):
        idx = rng.integers(0, n, size=min(cfg.batch_size, n))
        v = ac.value(ad.ensure_tensor(state_feats[idx]))[:, 0]
        err = v - targets[idx]
        loss = (err * err).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.append(loss.item())
    return history


def distill_policy_discrete(ac: ActorCritic, state_feats: np.ndarray,
                            teacher_probs: np.ndarray, cfg: DistillConfig,
                            seed: int = 0) -> list[float]:
    """Cross-entropy toward the teacher's action distribution with a
    low-entropy penalty so the initialized policy still explores."""
    rng = np.random.default_rng(seed)
    opt = ad.Adam({f"policy.{k}": p for k, p in _named(ac.policy)}, lr=cfg.lr)
    history = []
    n = len(state_feats)
    for _ in range(cfg.steps):
        idx = rng.integers(0, n, size=min(cfg.batch_size, n))
        logits = ac.policy(ad.ensure_tensor(state_feats[idx]))
        logp = ad.log_softmax(logits, axis=-1)
        ce = ad.neg((teacher_probs[idx] * logp).sum(axis=-1)).mean()
        probs = ad.exp(logp)
        entropy = ad.neg((probs * logp).sum(axis=-1)).mean()
        loss = ce - entropy * cfg.entropy_coef
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.append(ce.item())
    return history


def distill_policy_continuous(ac: ActorCritic, state_feats: np.ndarray,
                              teacher_actions: np.ndarray, cfg: DistillConfig,
                              seed: int = 0) -> list[float]:
    """MSE toward the teacher's action; afterwards the log-std is set to the
    configured exploration floor exactly."""
    rng = np.random.default_rng(seed)
    opt = ad.Adam({f"policy.{k}": p for k, p in _named(ac.policy)}, lr=cfg.lr)
    history = []
    n = len(state_feats)
    for _ in range(cfg.steps):
        idx = rng.integers(0, n, size=min(cfg.batch_size, n))
        mean = ac.policy(ad.ensure_tensor(state_feats[idx]))
        err = mean - teacher_actions[idx]
        loss = (err * err).sum(axis=-1).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.append(loss.item())
    ac.log_std.data[:] = cfg.log_std_floor
    return history


def policy_entropy_mean(ac: ActorCritic, state_feats: np.ndarray) -> float:
    """Average policy entropy (nats) over the given states."""
    with ad.no_grad():
        out = ac.policy(ad.ensure_tensor(state_feats)).data
    if ac.discrete:
        z = out - out.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        return float(-(p * np.log(np.maximum(p, 1e-300))).sum(axis=1).mean())
    log_std = np.clip(ac.log_std.data, LOG_STD_MIN, LOG_STD_MAX)
    return float((log_std + 0.5 + _HALF_LOG_2PI).sum())
