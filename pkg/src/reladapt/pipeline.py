"""End-to-end orchestration: model persistence, distillation wiring, and
per-task RL runs, shared by the command line and the experiment scripts.

Directory layout under a work directory:
    data/<domain>/    dataset splits + vocab + manifest
    models/<domain>/  goal.ckpt distance.ckpt bc.ckpt adapter.ckpt (+ CSVs)
    runs/<domain>/    task{i}_seed{s}_{reward}_{init}.csv
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import configs, taskgen
from .autodiff import load_checkpoint, save_checkpoint
from .configs import DistillConfig, PPOConfig
from .dataset import Triplet
from .encoders import clip_tokens
from .envs import (
    ARENA_HALF,
    DOMAIN_REARRANGE,
    GridAction,
    NavState,
    normalize_positions,
    reset_rearrange,
    state_features,
    step_rearrange,
)
from .policy_adapt import ActionAdapter, GCPolicy, make_target_env
from .reward_adapt import (
    DistanceNet,
    GoalPredictor,
    LearnedPotential,
    OraclePotential,
    predict_goal,
)
from .rl_ppo import (
    ActorCritic,
    RLRunResult,
    distill_policy_continuous,
    distill_policy_discrete,
    distill_value,
    train_target_policy,
)
from .taskgen import pad_token_batch

log = logging.getLogger(__name__)

REWARD_MODES = ("learned", "oracle", "zero")
INIT_MODES = ("random", "distilled")


# -- model persistence -----------------------------------------------------------


def save_model(path, model, kind: str, cfg) -> None:
    meta = {"kind": kind, "domain": model.domain, "config": asdict(cfg)}
    if hasattr(model, "language_encoder"):
        meta["vocab_size"] = model.language_encoder.token_emb.weight.shape[0]
    save_checkpoint(path, model.state_dict(), meta=meta)


def load_model(path):
    """Rebuild a model from a checkpoint; dispatches on the stored kind."""
    arrays, meta = load_checkpoint(path)
    kind, domain = meta["kind"], meta["domain"]
    rng = np.random.default_rng(0)
    if kind == "goal":
        cfg = configs.GoalPredictorConfig(**meta["config"])
        model = GoalPredictor(domain, meta["vocab_size"], cfg, rng)
    elif kind == "distance":
        cfg = configs.DistanceConfig(**meta["config"])
        model = DistanceNet(domain, cfg, rng)
    elif kind == "bc":
        cfg = configs.BCConfig(**meta["config"])
        model = GCPolicy(domain, cfg, rng)
    elif kind == "adapter":
        cfg = configs.AdapterConfig(**meta["config"])
        model = ActionAdapter(domain, meta["vocab_size"], cfg, rng)
    else:
        raise ValueError(f"unknown model kind {kind!r} in {path}")
    model.load_state_dict(arrays)
    return model


def write_metrics_csv(path, rows: list[dict]) -> None:
    if not rows:
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fieldnames = list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


# -- reward construction -----------------------------------------------------------


def task_tokens(task, vocab, language: str = "template") -> list[int]:
    text = task.paraphrase_text if (language == "paraphrase" and task.paraphrase_text) \
        else task.template_text
    return clip_tokens(taskgen.tokenize(text, vocab))


def predicted_goal_for_task(triplet: Triplet, goal_model: GoalPredictor, vocab,
                            language: str = "template") -> np.ndarray:
    """Predict the target goal state once per task, conditioning on the
    source demonstration's final state and the language."""
    task = triplet.task
    source_goal = triplet.source_demo.final_state.positions()
    return predict_goal(goal_model, task.entities, source_goal,
                        task_tokens(task, vocab, language))


def build_potential(triplet: Triplet, reward: str, goal_model=None,
                    distance_model=None, vocab=None, language: str = "template"):
    """Potential function for a task under a reward mode; None for zero."""
    task = triplet.task
    if reward == "zero":
        return None
    if reward == "oracle":
        return OraclePotential(task.domain, task.target_goal_array())
    if reward == "learned":
        goal = predicted_goal_for_task(triplet, goal_model, vocab, language)
        return LearnedPotential(distance_model, goal)
    raise ValueError(f"unknown reward mode {reward!r}")


# -- distillation wiring -------------------------------------------------------------


def distill_state_pool(triplet: Triplet, rng: np.random.Generator,
                       n_random: int = 1024, n_walk: int = 512):
    """States used for knowledge distillation: the task's source
    demonstration states plus uniformly sampled environment states (and, on
    the grid, short random walks so grasped configurations appear)."""
    domain = triplet.task.domain
    states = list(triplet.source_demo.states)
    if domain == DOMAIN_REARRANGE:
        for _ in range(n_random):
            states.append(reset_rearrange(rng))
        walk_state = reset_rearrange(rng)
        actions = [GridAction.UP, GridAction.DOWN, GridAction.LEFT,
                   GridAction.RIGHT, GridAction.GRASP, GridAction.RELEASE]
        for i in range(n_walk):
            if i % 32 == 0:
                walk_state = reset_rearrange(rng)
            walk_state, _ = step_rearrange(walk_state, actions[rng.integers(len(actions))])
            states.append(walk_state)
    else:
        objects = tuple(triplet.task.source_goal[1:])
        for _ in range(n_random):
            agent = rng.uniform(-ARENA_HALF, ARENA_HALF, size=2)
            states.append(NavState(agent=(float(agent[0]), float(agent[1])),
                                   objects=objects))
    return states


def build_distilled_actor_critic(triplet: Triplet, potential, gc_policy: GCPolicy,
                                 adapter: ActionAdapter, vocab, ppo_cfg: PPOConfig,
                                 distill_cfg: DistillConfig, seed: int,
                                 language: str = "template") -> ActorCritic:
    """Initialize the actor toward the adapter pipeline's actions and the
    critic toward the potential, both over a pooled state sample."""
    task = triplet.task
    domain = task.domain
    rng = np.random.default_rng(seed)
    ac = ActorCritic(domain, ppo_cfg, rng)
    states = distill_state_pool(triplet, rng)
    feats = np.stack([state_features(domain, s) for s in states])

    targets = np.array([potential(s) for s in states]) if potential else np.zeros(len(states))
    distill_value(ac, feats, targets, distill_cfg, seed=seed)

    attrs, nouns = taskgen.entity_id_arrays(task.entities)
    m = len(states)
    attr_b = np.broadcast_to(attrs, (m, attrs.size))
    noun_b = np.broadcast_to(nouns, (m, nouns.size))
    positions = np.stack([normalize_positions(domain, s.positions()) for s in states])
    tokens = pad_token_batch([task_tokens(task, vocab, language)] * m)
    g_src = np.broadcast_to(state_features(domain, triplet.source_demo.final_state),
                            (m, feats.shape[1]))
    a_src = gc_policy.act(feats, g_src)
    if domain == DOMAIN_REARRANGE:
        teacher = _batched_adapter(adapter, attr_b, noun_b, positions, tokens, a_src,
                                   probs=True)
        distill_policy_discrete(ac, feats, teacher, distill_cfg, seed=seed)
    else:
        teacher = _batched_adapter(adapter, attr_b, noun_b, positions, tokens, a_src,
                                   probs=False)
        distill_policy_continuous(ac, feats, teacher, distill_cfg, seed=seed)
    return ac


def _batched_adapter(adapter, attrs, nouns, positions, tokens, a_src,
                     probs: bool, batch_size: int = 512) -> np.ndarray:
    parts = []
    for lo in range(0, len(a_src), batch_size):
        sl = slice(lo, lo + batch_size)
        fn = adapter.action_probs if probs else adapter.adapt
        parts.append(fn(attrs[sl], nouns[sl], positions[sl], tokens[sl], a_src[sl]))
    return np.concatenate(parts)


# -- RL runs -------------------------------------------------------------------------


def run_name(task_index: int, seed: int, reward: str, init: str) -> str:
    return f"task{task_index}_seed{seed}_{reward}_{init}.csv"


RUN_NAME_RE = re.compile(r"task(\d+)_seed(\d+)_(\w+)_(\w+)\.csv$")


def run_rl_for_task(triplet: Triplet, reward: str, init: str, total_steps: int,
                    seed: int, models: dict, vocab, csv_path=None,
                    ppo_overrides: dict | None = None,
                    distill_cfg: DistillConfig | None = None,
                    language: str = "template") -> RLRunResult:
    task = triplet.task
    domain = task.domain
    ppo_cfg = configs.ppo_config_for(domain, **(ppo_overrides or {}))
    potential = build_potential(triplet, reward, goal_model=models.get("goal"),
                                distance_model=models.get("distance"), vocab=vocab,
                                language=language)
    ac = None
    if init == "distilled":
        distill_cfg = distill_cfg or configs.distill_config_for(domain)
        ac = build_distilled_actor_critic(triplet, potential, models["bc"],
                                          models["adapter"], vocab, ppo_cfg,
                                          distill_cfg, seed, language)
    return train_target_policy(lambda: make_target_env(task), domain, ppo_cfg,
                               total_steps, seed, potential=potential,
                               actor_critic=ac, csv_path=csv_path)


# -- aggregation ----------------------------------------------------------------------


def collect_run_results(runs_dir) -> list[dict]:
    """Parse final cumulative successes out of every run CSV in a directory."""
    out = []
    runs_dir = Path(runs_dir)
    for path in sorted(runs_dir.glob("*.csv")):
        m = RUN_NAME_RE.search(path.name)
        if not m:
            continue
        with open(path, "r", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
        if not rows:
            continue
        out.append({
            "task": int(m.group(1)),
            "seed": int(m.group(2)),
            "reward": m.group(3),
            "init": m.group(4),
            "successes": float(rows[-1]["cumulative_successes"]),
            "env_steps": float(rows[-1]["env_steps"]),
        })
    return out


def summarize_runs(results: list[dict]) -> list[dict]:
    """Mean and std of final successes per (reward, init) setting, normalized
    so the oracle setting reads 100.00."""
    groups: dict[tuple[str, str], list[float]] = {}
    for r in results:
        groups.setdefault((r["reward"], r["init"]), []).append(r["successes"])
    oracle = groups.get(("oracle", "random"))
    oracle_mean = float(np.mean(oracle)) if oracle else None
    table = []
    for (reward, init), vals in sorted(groups.items()):
        mean = float(np.mean(vals))
        std = float(np.std(vals))
        row = {"reward": reward, "init": init, "runs": len(vals),
               "successes_mean": mean, "successes_std": std}
        if oracle_mean:
            row["normalized_mean"] = 100.0 * mean / oracle_mean
            row["normalized_std"] = 100.0 * std / oracle_mean
        table.append(row)
    return table


def format_table(table: list[dict]) -> str:
    lines = [f"{'setting':<24}{'runs':>5}{'successes':>18}{'normalized':>18}"]
    for row in table:
        setting = f"{row['reward']}/{row['init']}"
        succ = f"{row['successes_mean']:.2f} ± {row['successes_std']:.2f}"
        norm = (f"{row['normalized_mean']:.2f} ± {row['normalized_std']:.2f}"
                if "normalized_mean" in row else "-")
        lines.append(f"{setting:<24}{row['runs']:>5}{succ:>18}{norm:>18}")
    return "\n".join(lines)
