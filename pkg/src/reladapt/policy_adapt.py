"""Relational policy adaptation.

A goal-conditioned policy is behavior-cloned from all source and target
demonstrations. It then relabels every demonstration state with the action
it would take under the source goal and under the target goal; a small
transformer learns to map (state entities, language, source action) to the
target action. Chaining the two at evaluation time yields a target-task
policy with no reinforcement learning.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import taskgen
from .autodiff import Tensor
from .configs import AdapterConfig, BCConfig
from .dataset import Triplet
from .encoders import (
    MAX_TOKENS,
    SEG_ACTION,
    SEG_ENTITY,
    SEG_LANGUAGE,
    EntityEncoder,
    LanguageEncoder,
    clip_tokens,
)
from .envs import (
    DOMAIN_REARRANGE,
    GridAction,
    NavigationEnv,
    RearrangementEnv,
    feature_dim,
    normalize_positions,
    state_features,
)
from .reward_adapt import N_ATTRS, N_NOUNS
from .taskgen import N_ENTITIES, pad_token_batch

log = logging.getLogger(__name__)

N_GRID_ACTIONS = len(GridAction)


class GCPolicy(ad.Module):
    """pi(a | s, g): an MLP over concatenated state and goal features.
    Discrete head emits 7-way logits; continuous head emits a 2-D mean with
    a fixed log-std."""

    def __init__(self, domain: str, cfg: BCConfig, rng: np.random.Generator):
        self.domain = domain
        self.cfg = cfg
        in_dim = 2 * feature_dim(domain)
        out_dim = N_GRID_ACTIONS if domain == DOMAIN_REARRANGE else 2
        dims = [in_dim] + [cfg.hidden] * cfg.n_hidden + [out_dim]
        self.net = ad.MLP(dims, rng)
        self.log_std = cfg.log_std

    def __call__(self, x) -> Tensor:
        return self.net(ad.ensure_tensor(x))

    def act(self, state_feats: np.ndarray, goal_feats: np.ndarray,
            rng: np.random.Generator | None = None) -> np.ndarray:
        """Batched mode action (argmax / mean); pass ``rng`` to sample
        instead."""
        x = np.concatenate([state_feats, goal_feats], axis=1)
        with ad.no_grad():
            out = self(x).data
        if self.domain == DOMAIN_REARRANGE:
            if rng is None:
                return out.argmax(axis=1)
            shifted = out - out.max(axis=1, keepdims=True)
            probs = np.exp(shifted)
            probs /= probs.sum(axis=1, keepdims=True)
            u = rng.random((len(out), 1))
            return (probs.cumsum(axis=1) < u).sum(axis=1)
        if rng is None:
            return out
        return out + rng.normal(scale=np.exp(self.log_std), size=out.shape)


def bc_training_rows(triplets: list[Triplet], domain: str,
                     max_states_per_demo: int = 0):
    """(state features, goal features, action) for every demo state, the goal
    being that demo's final state."""
    xs, gs, acts = [], [], []
    for t in triplets:
        for demo in (t.source_demo, t.target_demo):
            goal = state_features(domain, demo.final_state)
            idx = range(len(demo.actions))
            if max_states_per_demo and len(demo.actions) > max_states_per_demo:
                idx = np.linspace(0, len(demo.actions) - 1, max_states_per_demo).astype(int)
            for i in idx:
                xs.append(state_features(domain, demo.states[i]))
                gs.append(goal)
                acts.append(int(demo.actions[i]) if domain == DOMAIN_REARRANGE
                            else list(demo.actions[i]))
    actions = (np.array(acts, dtype=np.int64) if domain == DOMAIN_REARRANGE
               else np.array(acts, dtype=np.float64))
    return np.stack(xs), np.stack(gs), actions


def train_bc(triplets, domain: str, cfg: BCConfig, seed: int = 0,
             progress=None) -> tuple[GCPolicy, list[dict]]:
    """Cross-entropy (grid) / mean-squared-error (arena) behavior cloning."""
    rng = np.random.default_rng(seed)
    policy = GCPolicy(domain, cfg, rng)
    states, goals, actions = bc_training_rows(triplets, domain, cfg.max_states_per_demo)
    inputs = np.concatenate([states, goals], axis=1)
    opt = ad.Adam(dict(policy.named_parameters()), lr=cfg.lr)
    n = len(inputs)
    metrics = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            out = policy(inputs[idx])
            if domain == DOMAIN_REARRANGE:
                logp = ad.log_softmax(out, axis=-1)
                loss = -ad.take_rows(logp, actions[idx]).mean()
            else:
                diff = out - actions[idx]
                loss = (diff * diff).sum(axis=-1).mean()
            value = loss.item()
            if not np.isfinite(value):
                raise FloatingPointError(f"behavior cloning loss diverged at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(value)
        row = {"epoch": epoch, "train_loss": float(np.mean(losses))}
        metrics.append(row)
        if progress:
            progress(row)
        log.info("bc[%s] epoch %d loss %.5f", domain, epoch, row["train_loss"])
    return policy, metrics


def bc_action_agreement(policy: GCPolicy, triplets, domain: str,
                        batch_size: int = 4096) -> float:
    """Fraction of demo states where the policy's argmax matches the demo
    action (grid domain)."""
    states, goals, actions = bc_training_rows(triplets, domain)
    hits = 0
    for lo in range(0, len(states), batch_size):
        pred = policy.act(states[lo:lo + batch_size], goals[lo:lo + batch_size])
        hits += int((pred == actions[lo:lo + batch_size]).sum())
    return hits / len(states)


# -- relabeling -------------------------------------------------------------------


@dataclass
class AdapterData:
    """One row per demonstration state: the state's entity positions, the
    triplet's language, and the relabeled source/target actions."""

    attr_ids: np.ndarray       # [M, N]
    noun_ids: np.ndarray       # [M, N]
    positions: np.ndarray      # [M, N, 2] normalized current-state positions
    token_lists: list[list[int]]
    a_src: np.ndarray          # [M] int or [M, 2] float
    a_tgt: np.ndarray

    def __len__(self) -> int:
        return len(self.a_src)

    def tokens(self, idx) -> np.ndarray:
        return pad_token_batch([self.token_lists[i] for i in idx])


def relabel_actions(triplets, policy: GCPolicy, vocab, domain: str,
                    language: str = "template", batch_size: int = 4096) -> AdapterData:
    """Run the goal-conditioned policy in mode over every state of both demos
    of each triplet, once under the source goal and once under the target
    goal. Deterministic given the policy checkpoint."""
    feats, g_src_rows, g_tgt_rows = [], [], []
    attrs, nouns, positions, toks = [], [], [], []
    for t in triplets:
        a, n = taskgen.entity_id_arrays(t.task.entities)
        text = t.task.paraphrase_text if (language == "paraphrase" and t.task.paraphrase_text) \
            else t.task.template_text
        ids = clip_tokens(taskgen.tokenize(text, vocab))
        g_src = state_features(domain, t.source_demo.final_state)
        g_tgt = state_features(domain, t.target_demo.final_state)
        for demo in (t.source_demo, t.target_demo):
            for i in range(len(demo.actions)):
                s = demo.states[i]
                feats.append(state_features(domain, s))
                g_src_rows.append(g_src)
                g_tgt_rows.append(g_tgt)
                attrs.append(a)
                nouns.append(n)
                positions.append(normalize_positions(domain, s.positions()))
                toks.append(ids)
    feats = np.stack(feats)
    g_src_rows = np.stack(g_src_rows)
    g_tgt_rows = np.stack(g_tgt_rows)
    a_src_parts, a_tgt_parts = [], []
    for lo in range(0, len(feats), batch_size):
        sl = slice(lo, lo + batch_size)
        a_src_parts.append(policy.act(feats[sl], g_src_rows[sl]))
        a_tgt_parts.append(policy.act(feats[sl], g_tgt_rows[sl]))
    return AdapterData(
        attr_ids=np.stack(attrs), noun_ids=np.stack(nouns),
        positions=np.stack(positions), token_lists=toks,
        a_src=np.concatenate(a_src_parts), a_tgt=np.concatenate(a_tgt_parts),
    )


# -- the adaptation transformer -----------------------------------------------------


class ActionAdapter(ad.Module):
    """Maps (state entities, language, source action) to the target action.
    The source action enters as one extra token; its transformer output
    feeds the readout head."""

    def __init__(self, domain: str, vocab_size: int, cfg: AdapterConfig,
                 rng: np.random.Generator):
        self.domain = domain
        self.cfg = cfg
        self.n_entities = N_ENTITIES[domain]
        d = cfg.model_dim
        self.entity_encoder = EntityEncoder(N_ATTRS, N_NOUNS, cfg.attr_dim, cfg.pos_dim, rng)
        self.language_encoder = LanguageEncoder(vocab_size, d, rng)
        self.segment_emb = ad.Embedding(3, d, rng)
        if domain == DOMAIN_REARRANGE:
            self.action_emb = ad.Embedding(N_GRID_ACTIONS, d, rng)
        else:
            self.action_proj = ad.Linear(2, d, rng)
        self.encoder = ad.TransformerEncoder(d, cfg.n_layers, cfg.n_heads,
                                             cfg.ff_dim, cfg.dropout, rng)
        out_dim = N_GRID_ACTIONS if domain == DOMAIN_REARRANGE else 2
        self.head = ad.MLP([d, cfg.head_hidden, cfg.head_hidden, out_dim], rng)

    def __call__(self, attr_ids, noun_ids, positions, token_ids, a_src,
                 train: bool = False, rng=None) -> Tensor:
        n = self.n_entities
        seg = self.segment_emb(np.array([SEG_ENTITY, SEG_ACTION, SEG_LANGUAGE]))
        ent = self.entity_encoder(attr_ids, noun_ids, positions) + seg[0]
        if self.domain == DOMAIN_REARRANGE:
            act = self.action_emb(np.asarray(a_src, dtype=np.int64))
        else:
            act = self.action_proj(ad.ensure_tensor(a_src))
        act = ad.reshape(act + seg[1], (attr_ids.shape[0], 1, self.cfg.model_dim))
        lang = self.language_encoder(token_ids) + seg[2]
        x = ad.concat([ent, act, lang], axis=1)
        mask = ad.padding_mask(token_ids, lead=n + 1)
        out = self.encoder(x, mask=mask, train=train, rng=rng)
        return self.head(out[:, n])

    def adapt(self, attr_ids, noun_ids, positions, token_ids, a_src):
        """Mode target action(s): argmax / raw vector."""
        with ad.no_grad():
            out = self(attr_ids, noun_ids, positions, token_ids, a_src).data
        return out.argmax(axis=1) if self.domain == DOMAIN_REARRANGE else out

    def action_probs(self, attr_ids, noun_ids, positions, token_ids, a_src) -> np.ndarray:
        with ad.no_grad():
            logits = self(attr_ids, noun_ids, positions, token_ids, a_src).data
        shifted = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(shifted)
        return p / p.sum(axis=1, keepdims=True)


def train_adapter(data: AdapterData, domain: str, vocab, cfg: AdapterConfig,
                  seed: int = 0, progress=None) -> tuple[ActionAdapter, list[dict]]:
    rng = np.random.default_rng(seed)
    model = ActionAdapter(domain, len(vocab), cfg, rng)
    opt = ad.Adam(dict(model.named_parameters()), lr=cfg.lr)
    n = len(data)
    metrics = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            out = model(data.attr_ids[idx], data.noun_ids[idx], data.positions[idx],
                        data.tokens(idx), data.a_src[idx], train=True, rng=rng)
            if domain == DOMAIN_REARRANGE:
                loss = -ad.take_rows(ad.log_softmax(out, axis=-1), data.a_tgt[idx]).mean()
            else:
                diff = out - data.a_tgt[idx]
                loss = (diff * diff).sum(axis=-1).mean()
            value = loss.item()
            if not np.isfinite(value):
                raise FloatingPointError(f"adapter loss diverged at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(value)
        row = {"epoch": epoch, "train_loss": float(np.mean(losses))}
        metrics.append(row)
        if progress:
            progress(row)
        log.info("adapter[%s] epoch %d loss %.5f", domain, epoch, row["train_loss"])
    return model, metrics


def adapter_agreement(model: ActionAdapter, data: AdapterData,
                      batch_size: int = 2048) -> float:
    """Held-out argmax agreement with the relabeled target actions (grid)."""
    hits = 0
    for lo in range(0, len(data), batch_size):
        idx = np.arange(lo, min(lo + batch_size, len(data)))
        pred = model.adapt(data.attr_ids[idx], data.noun_ids[idx], data.positions[idx],
                           data.tokens(idx), data.a_src[idx])
        hits += int((pred == data.a_tgt[idx]).sum())
    return hits / len(data)


# -- evaluation rollouts -------------------------------------------------------------


def make_target_env(task) -> RearrangementEnv | NavigationEnv:
    if task.domain == DOMAIN_REARRANGE:
        return RearrangementEnv(task.target_goal[1:])
    return NavigationEnv(task.source_goal[1:], task.target_goal[0])


def adapted_rollout(triplet: Triplet, policy: GCPolicy, adapter: ActionAdapter,
                    vocab, rng: np.random.Generator,
                    language: str = "template") -> tuple[list, bool]:
    """Roll the chained source-policy + adapter in the target environment
    until Stop / a sub-norm action / the time limit. Returns (states,
    success)."""
    task = triplet.task
    domain = task.domain
    env = make_target_env(task)
    attrs, nouns = taskgen.entity_id_arrays(task.entities)
    attrs, nouns = attrs[None, :], nouns[None, :]
    text = triplet.task.paraphrase_text if (language == "paraphrase"
                                            and task.paraphrase_text) else task.template_text
    tokens = pad_token_batch([clip_tokens(taskgen.tokenize(text, vocab))])
    g_src = state_features(domain, triplet.source_demo.final_state)[None, :]

    state = env.reset(rng)
    states = [state]
    done = False
    info: dict = {}
    while not done:
        feats = state_features(domain, state)[None, :]
        a_src = policy.act(feats, g_src)
        positions = normalize_positions(domain, state.positions())[None]
        a_tgt = adapter.adapt(attrs, nouns, positions, tokens, a_src)
        action = (GridAction(int(a_tgt[0])) if domain == DOMAIN_REARRANGE
                  else (float(a_tgt[0][0]), float(a_tgt[0][1])))
        state, done, info = env.step(action)
        states.append(state)
    return states, bool(info.get("success", False))


def rollout_success_rate(triplets, policy, adapter, vocab, n_rollouts: int,
                         seed: int = 0, language: str = "template") -> dict:
    """Spread ``n_rollouts`` round-robin over the tasks; each rollout starts
    from a fresh randomized initial state."""
    rng = np.random.default_rng(seed)
    wins = 0
    per_task = [0] * len(triplets)
    for k in range(n_rollouts):
        t = triplets[k % len(triplets)]
        _, ok = adapted_rollout(t, policy, adapter, vocab, rng, language)
        wins += int(ok)
        per_task[k % len(triplets)] += int(ok)
    return {"rollouts": n_rollouts, "successes": wins,
            "success_rate": wins / n_rollouts, "per_task": per_task}
