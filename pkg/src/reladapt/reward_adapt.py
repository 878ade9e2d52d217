"""Relational reward adaptation.

Two learned pieces combine into a potential-based reward for the target
task: a transformer that predicts the target goal state from the source goal
state and the language, and a distance embedding whose L2 gap defines
d(s, s'). The reward between consecutive states is the potential difference
R(s, s') = phi(s') - phi(s) with phi(s) = -d(s, predicted_goal).
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import taskgen
from .autodiff import Tensor
from .configs import DistanceConfig, GoalPredictorConfig
from .dataset import Triplet
from .encoders import EntityEncoder, LanguageEncoder, clip_tokens
from .envs import DOMAIN_REARRANGE, denormalize_positions, normalize_positions
from .taskgen import N_ENTITIES, pad_token_batch

log = logging.getLogger(__name__)

N_ATTRS = len(taskgen.ATTRIBUTES) + 1
N_NOUNS = len(taskgen.NOUNS) + 1


class GoalPredictor(ad.Module):
    """Entity tokens (source-goal positions) plus language tokens go through
    a transformer encoder; the first n_entities outputs project back to one
    (x, y) per entity through a three-layer ReLU head."""

    def __init__(self, domain: str, vocab_size: int, cfg: GoalPredictorConfig,
                 rng: np.random.Generator):
        self.domain = domain
        self.cfg = cfg
        self.n_entities = N_ENTITIES[domain]
        d = cfg.model_dim
        self.entity_encoder = EntityEncoder(N_ATTRS, N_NOUNS, cfg.attr_dim, cfg.pos_dim, rng)
        self.language_encoder = LanguageEncoder(vocab_size, d, rng)
        self.segment_emb = ad.Embedding(2, d, rng)
        self.encoder = ad.TransformerEncoder(d, cfg.n_layers, cfg.n_heads,
                                             cfg.ff_dim, cfg.dropout, rng)
        self.head = ad.MLP([d, cfg.head_hidden, cfg.head_hidden, 2], rng)

    def __call__(self, attr_ids, noun_ids, source_goal_norm, token_ids,
                 train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        n = attr_ids.shape[1]
        if n != self.n_entities:
            raise ValueError(f"expected {self.n_entities} entities, got {n}")
        seg = self.segment_emb(np.arange(2))  # row 0 entities, row 1 language
        ent = self.entity_encoder(attr_ids, noun_ids, source_goal_norm) + seg[0]
        lang = self.language_encoder(token_ids) + seg[1]
        x = ad.concat([ent, lang], axis=1)
        mask = ad.padding_mask(token_ids, lead=n)
        out = self.encoder(x, mask=mask, train=train, rng=rng)
        # the head regresses each entity's goal displacement; predicting a
        # delta from the (known) source position sidesteps reconstructing
        # absolute coordinates from normalized features
        delta = self.head(out[:, :n])
        return delta + np.asarray(source_goal_norm, dtype=np.float64)


@dataclass
class GoalBatch:
    attr_ids: np.ndarray       # [B, N]
    noun_ids: np.ndarray       # [B, N]
    source_goal: np.ndarray    # [B, N, 2] normalized
    target_goal: np.ndarray    # [B, N, 2] normalized
    token_lists: list[list[int]]

    def tokens(self, idx=None) -> np.ndarray:
        lists = self.token_lists if idx is None else [self.token_lists[i] for i in idx]
        return pad_token_batch(lists)


def prepare_goal_data(triplets: list[Triplet], vocab: dict[str, int],
                      language: str = "template") -> GoalBatch:
    """Training rows for goal prediction. Goals come from the final states of
    the demonstrations, not from the symbolic task record. ``language``
    selects template text, paraphrase text (template fallback), or both."""
    attrs, nouns, src, tgt, toks = [], [], [], [], []
    for t in triplets:
        a, n = taskgen.entity_id_arrays(t.task.entities)
        domain = t.task.domain
        s = normalize_positions(domain, t.source_demo.final_state.positions())
        g = normalize_positions(domain, t.target_demo.final_state.positions())
        variants = [t.task.template_text]
        if language == "paraphrase":
            variants = [t.task.paraphrase_text or t.task.template_text]
        elif language == "both" and t.task.paraphrase_text:
            variants.append(t.task.paraphrase_text)
        for text in variants:
            attrs.append(a)
            nouns.append(n)
            src.append(s)
            tgt.append(g)
            toks.append(clip_tokens(taskgen.tokenize(text, vocab)))
    return GoalBatch(attr_ids=np.stack(attrs), noun_ids=np.stack(nouns),
                     source_goal=np.stack(src), target_goal=np.stack(tgt),
                     token_lists=toks)


def scored_entities(domain: str) -> slice:
    """Entity slots whose goal matters for success: the objects on the grid,
    the agent in the arena."""
    return slice(1, None) if domain == DOMAIN_REARRANGE else slice(0, 1)


def goal_l1_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    return ad.absval(pred - target).sum(axis=(1, 2)).mean()


def evaluate_goal_predictor(model: GoalPredictor, data: GoalBatch,
                            batch_size: int = 256) -> dict:
    """Mean L1 error in raw units over the success-relevant entities, plus
    the fraction of those entities predicted within the domain's bound."""
    domain = model.domain
    sel = scored_entities(domain)
    bound = 0.5 if domain == DOMAIN_REARRANGE else 10.0
    errors = []
    with ad.no_grad():
        for lo in range(0, len(data.token_lists), batch_size):
            idx = np.arange(lo, min(lo + batch_size, len(data.token_lists)))
            pred = model(data.attr_ids[idx], data.noun_ids[idx],
                         data.source_goal[idx], data.tokens(idx)).data
            pred_raw = denormalize_positions(domain, pred)
            tgt_raw = denormalize_positions(domain, data.target_goal[idx])
            err = np.abs(pred_raw - tgt_raw).sum(axis=2)[:, sel]  # L1 per entity
            errors.append(err.reshape(-1))
    err = np.concatenate(errors)
    return {"mae": float(err.mean()), "within_bound": float((err < bound).mean()),
            "bound": bound}


def train_goal_predictor(train_triplets, val_triplets, vocab, domain: str,
                         cfg: GoalPredictorConfig, seed: int = 0,
                         language: str = "template",
                         progress=None) -> tuple[GoalPredictor, list[dict]]:
    """Minimize the goal L1 loss with Adam; returns the best-validation-MAE
    parameters and per-epoch metrics."""
    rng = np.random.default_rng(seed)
    model = GoalPredictor(domain, len(vocab), cfg, rng)
    train_data = prepare_goal_data(train_triplets, vocab, language)
    val_data = prepare_goal_data(val_triplets, vocab, language="template")
    opt = ad.Adam(dict(model.named_parameters()), lr=cfg.lr)
    n = len(train_data.token_lists)
    best = {"mae": np.inf, "state": None, "epoch": -1}
    metrics = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            pred = model(train_data.attr_ids[idx], train_data.noun_ids[idx],
                         train_data.source_goal[idx], train_data.tokens(idx),
                         train=True, rng=rng)
            loss = goal_l1_loss(pred, train_data.target_goal[idx])
            value = loss.item()
            if not np.isfinite(value):
                raise FloatingPointError(
                    f"goal predictor loss diverged at epoch {epoch} (loss={value})")
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(value)
        val = evaluate_goal_predictor(model, val_data)
        row = {"epoch": epoch, "train_loss": float(np.mean(losses)),
               "val_mae": val["mae"], "val_within": val["within_bound"]}
        metrics.append(row)
        if val["mae"] < best["mae"]:
            best = {"mae": val["mae"], "state": model.state_dict(), "epoch": epoch}
        if progress:
            progress(row)
        log.info("goal[%s] epoch %d train %.4f val MAE %.4f (within %.2f)",
                 domain, epoch, row["train_loss"], row["val_mae"], row["val_within"])
    if best["state"] is not None:
        model.load_state_dict(best["state"])
    return model, metrics


def predict_goal(model: GoalPredictor, entities, source_goal_raw, token_ids) -> np.ndarray:
    """Deterministic (eval-mode) target-goal prediction in raw coordinates."""
    attrs, nouns = taskgen.entity_id_arrays(entities)
    src = normalize_positions(model.domain, np.asarray(source_goal_raw, dtype=np.float64))
    tokens = pad_token_batch([clip_tokens(list(token_ids))])
    with ad.no_grad():
        pred = model(attrs[None, :], nouns[None, :], src[None], tokens).data[0]
    return denormalize_positions(model.domain, pred)


# -- distance ------------------------------------------------------------------


class DistanceNet(ad.Module):
    """psi: flattened normalized entity positions -> embedding; the distance
    between two states is the L2 norm of their embedding difference."""

    def __init__(self, domain: str, cfg: DistanceConfig, rng: np.random.Generator):
        self.domain = domain
        self.in_dim = 2 * N_ENTITIES[domain]
        self.lin1 = ad.Linear(self.in_dim, cfg.hidden, rng)
        self.lin2 = ad.Linear(cfg.hidden, cfg.hidden, rng)

    def embed(self, flat_norm) -> Tensor:
        return self.lin2(ad.relu(self.lin1(ad.ensure_tensor(flat_norm))))

    def distance_t(self, a, b) -> Tensor:
        diff = self.embed(a) - self.embed(b)
        return ad.sqrt((diff * diff).sum(axis=-1))


def state_to_distance_input(domain: str, state) -> np.ndarray:
    return normalize_positions(domain, state.positions()).reshape(-1)


def distance(model: DistanceNet, state_a, state_b) -> float:
    a = state_to_distance_input(model.domain, state_a)
    b = state_to_distance_input(model.domain, state_b)
    with ad.no_grad():
        return float(model.distance_t(a[None], b[None]).data[0])


def _demo_distance_rows(domain: str, demo) -> tuple[np.ndarray, np.ndarray]:
    """(valid state rows, goal row) for one demonstration; states whose
    positions coincide with the goal carry no ranking signal and are
    dropped."""
    flat = np.stack([normalize_positions(domain, s.positions()).reshape(-1)
                     for s in demo.states])
    goal = flat[-1]
    keep = ~np.all(flat == goal, axis=1)
    return flat[keep], goal


def sample_distance_pairs(triplets, domain: str, pairs_per_demo: int,
                          rng: np.random.Generator):
    """(goal, earlier state, later state) rows sampled within each demo."""
    g_rows, si_rows, sj_rows = [], [], []
    for t in triplets:
        for demo in (t.source_demo, t.target_demo):
            states, goal = _demo_distance_rows(domain, demo)
            m = len(states)
            if m < 2:
                continue
            i = rng.integers(0, m - 1, size=pairs_per_demo)
            j = rng.integers(i + 1, m)
            g_rows.append(np.broadcast_to(goal, (pairs_per_demo, goal.size)))
            si_rows.append(states[i])
            sj_rows.append(states[j])
    return np.concatenate(g_rows), np.concatenate(si_rows), np.concatenate(sj_rows)


def distance_ranking_accuracy(model: DistanceNet, triplets, pairs_per_demo: int = 16,
                              seed: int = 0) -> float:
    """Fraction of sampled within-demo pairs ranked correctly: the earlier
    state strictly farther from the goal."""
    rng = np.random.default_rng(seed)
    g, si, sj = sample_distance_pairs(triplets, model.domain, pairs_per_demo, rng)
    with ad.no_grad():
        d_i = model.distance_t(g, si).data
        d_j = model.distance_t(g, sj).data
    return float((d_i > d_j).mean())


def train_distance(train_triplets, val_triplets, domain: str, cfg: DistanceConfig,
                   seed: int = 0, progress=None) -> tuple[DistanceNet, list[dict]]:
    """Pairwise ranking loss: -log softmax selecting the earlier state as the
    farther one, i.e. softplus(d(g,s_j) - d(g,s_i)) for i < j."""
    rng = np.random.default_rng(seed)
    model = DistanceNet(domain, cfg, rng)
    opt = ad.Adam(dict(model.named_parameters()), lr=cfg.lr)
    metrics = []
    for epoch in range(cfg.epochs):
        g, si, sj = sample_distance_pairs(train_triplets, domain, cfg.pairs_per_demo, rng)
        order = rng.permutation(len(g))
        losses = []
        for lo in range(0, len(g), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            d_i = model.distance_t(g[idx], si[idx])
            d_j = model.distance_t(g[idx], sj[idx])
            loss = ad.softplus(d_j - d_i).mean()
            value = loss.item()
            if not np.isfinite(value):
                raise FloatingPointError(f"distance loss diverged at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(value)
        row = {"epoch": epoch, "train_loss": float(np.mean(losses))}
        if val_triplets:
            row["val_ranking"] = distance_ranking_accuracy(model, val_triplets)
        metrics.append(row)
        if progress:
            progress(row)
        log.info("distance[%s] epoch %d loss %.4f ranking %.4f",
                 domain, epoch, row["train_loss"], row.get("val_ranking", float("nan")))
    return model, metrics


# -- potential and reward --------------------------------------------------------


class LearnedPotential:
    """phi(s) = -d(s, goal_state) with the goal embedding cached. The goal is
    an (n_entities, 2) raw position array, typically a predicted target
    goal."""

    def __init__(self, model: DistanceNet, goal_positions_raw):
        self.model = model
        goal_flat = normalize_positions(model.domain,
                                        np.asarray(goal_positions_raw)).reshape(1, -1)
        with ad.no_grad():
            self._goal_emb = model.embed(goal_flat).data[0]
        # raw weight views for the fast path
        self._w1 = model.lin1.weight.data
        self._b1 = model.lin1.bias.data
        self._w2 = model.lin2.weight.data
        self._b2 = model.lin2.bias.data

    def __call__(self, state) -> float:
        x = state_to_distance_input(self.model.domain, state)
        h = np.maximum(x @ self._w1 + self._b1, 0.0)
        emb = h @ self._w2 + self._b2
        return -float(np.linalg.norm(emb - self._goal_emb))


class OraclePotential:
    """phi(s) = -distance(s, true goal): L1 on the grid, L2 in the arena."""

    def __init__(self, domain: str, goal_positions_raw):
        self.domain = domain
        self.goal = np.asarray(goal_positions_raw, dtype=np.float64)

    def __call__(self, state) -> float:
        diff = state.positions() - self.goal
        if self.domain == DOMAIN_REARRANGE:
            return -float(np.abs(diff).sum())
        return -float(np.linalg.norm(diff.reshape(-1)))


class PotentialReward:
    """R(s, s') = phi(s') - phi(s); telescopes over a trajectory."""

    def __init__(self, potential):
        self.potential = potential

    def __call__(self, state, next_state) -> float:
        return self.potential(next_state) - self.potential(state)


class ZeroReward:
    def __call__(self, state, next_state) -> float:
        return 0.0


def copy_model(model):
    return copy.deepcopy(model)
