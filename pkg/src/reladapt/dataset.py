"""Triplet dataset assembly and serialization.

A triplet is (task, source demonstration, target demonstration); both demos
start from the same initial state and are planner-generated for the source
and target goals. Files are JSONL, one triplet per line, with a manifest
recording counts, the seed, and a content hash. Generation is deterministic:
datapoint i draws from a generator seeded by (master seed, split, template,
i), so regeneration is byte identical.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import taskgen
from .envs import (
    ARENA_HALF,
    DOMAIN_NAVIGATE,
    DOMAIN_REARRANGE,
    GridAction,
    GridState,
    NavState,
    reset_rearrange,
)
from .planner import Demonstration, plan_navigation, plan_rearrangement, replay
from .taskgen import TaskSpec, adaptation_from_dict, adaptation_to_dict

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# per-template counts at full scale
SPLIT_BASE_COUNTS = {"train": 5000, "val": 100, "rl_tune": 5, "rl_test": 10}
# which attribute-noun pair pool each split draws from
SPLIT_PAIR_SOURCE = {"train": "train", "val": "val", "rl_tune": "val", "rl_test": "test"}
SPLIT_ORDER = ("train", "val", "rl_tune", "rl_test")

MIN_NAV_START_DISTANCE = 1.0


class DatasetError(Exception):
    pass


@dataclass
class Triplet:
    uid: str
    task: TaskSpec
    source_demo: Demonstration
    target_demo: Demonstration

    @property
    def language(self) -> str:
        return self.task.paraphrase_text or self.task.template_text


@dataclass
class DatasetConfig:
    domain: str
    out_dir: str
    seed: int = 0
    scale: float = 1.0
    splits: tuple[str, ...] = SPLIT_ORDER
    # explicit per-template counts that win over the scaled defaults,
    # e.g. {"rl_test": 2} to widen a small-scale RL test split
    per_template_overrides: dict = field(default_factory=dict)


def split_count(split: str, scale: float, overrides: dict | None = None) -> int:
    """Per-template datapoint count for a split at the given scale."""
    if overrides and split in overrides:
        return int(overrides[split])
    base = SPLIT_BASE_COUNTS[split]
    if scale >= 1.0:
        return base
    return max(1, math.ceil(base * scale))


# -- record (de)serialization ---------------------------------------------------


def _grid_state_to_list(s: GridState) -> list:
    g = -1 if s.grasped is None else s.grasped
    return [s.agent[0], s.agent[1], s.objects[0][0], s.objects[0][1],
            s.objects[1][0], s.objects[1][1], g]


def _grid_state_from_list(row) -> GridState:
    ax, ay, ox0, oy0, ox1, oy1, g = row
    return GridState(agent=(int(ax), int(ay)),
                     objects=((int(ox0), int(oy0)), (int(ox1), int(oy1))),
                     grasped=None if g < 0 else int(g))


def _demo_to_dict(domain: str, demo: Demonstration) -> dict:
    if domain == DOMAIN_REARRANGE:
        return {
            "states": [_grid_state_to_list(s) for s in demo.states],
            "actions": [GridAction(a).name.lower() for a in demo.actions],
        }
    # landmark objects never move; store the agent path only
    return {
        "agent_path": [[s.agent[0], s.agent[1]] for s in demo.states],
        "actions": [[a[0], a[1]] for a in demo.actions],
    }


def _demo_from_dict(domain: str, d: dict, objects) -> Demonstration:
    if domain == DOMAIN_REARRANGE:
        states = [_grid_state_from_list(row) for row in d["states"]]
        actions = [GridAction[name.upper()] for name in d["actions"]]
        return Demonstration(states=states, actions=actions)
    objects = tuple((float(x), float(y)) for x, y in objects)
    states = [NavState(agent=(float(x), float(y)), objects=objects)
              for x, y in d["agent_path"]]
    actions = [(float(dx), float(dy)) for dx, dy in d["actions"]]
    return Demonstration(states=states, actions=actions)


def triplet_to_record(t: Triplet) -> dict:
    task = t.task
    return {
        "schema_version": SCHEMA_VERSION,
        "id": t.uid,
        "domain": task.domain,
        "entities": [[e.attribute, e.noun] for e in task.entities],
        "source_goal": [[x, y] for x, y in task.source_goal],
        "target_goal": [[x, y] for x, y in task.target_goal],
        "adaptation": adaptation_to_dict(task.adaptation),
        "template_text": task.template_text,
        "paraphrase_text": task.paraphrase_text,
        "source_demo": _demo_to_dict(task.domain, t.source_demo),
        "target_demo": _demo_to_dict(task.domain, t.target_demo),
    }


def triplet_from_record(rec: dict) -> Triplet:
    if rec.get("schema_version") != SCHEMA_VERSION:
        raise DatasetError(f"schema version {rec.get('schema_version')} != {SCHEMA_VERSION}")
    domain = rec["domain"]
    entities = tuple(taskgen.Entity(a, n) for a, n in rec["entities"])
    task = TaskSpec(
        domain=domain,
        entities=entities,
        source_goal=tuple((float(x), float(y)) for x, y in rec["source_goal"]),
        adaptation=adaptation_from_dict(rec["adaptation"]),
        target_goal=tuple((float(x), float(y)) for x, y in rec["target_goal"]),
        template_text=rec["template_text"],
        paraphrase_text=rec.get("paraphrase_text"),
    )
    objects = rec["source_goal"][1:] if domain == DOMAIN_NAVIGATE else None
    return Triplet(
        uid=rec["id"],
        task=task,
        source_demo=_demo_from_dict(domain, rec["source_demo"], objects),
        target_demo=_demo_from_dict(domain, rec["target_demo"], objects),
    )


# -- generation ------------------------------------------------------------------


def _sample_initial_state(task: TaskSpec, rng: np.random.Generator):
    if task.domain == DOMAIN_REARRANGE:
        return reset_rearrange(rng)
    objects = tuple(task.source_goal[1:])
    src_goal = np.array(task.source_goal[0])
    tgt_goal = np.array(task.target_goal[0])
    for _ in range(1000):
        agent = rng.uniform(-ARENA_HALF, ARENA_HALF, size=2)
        if (np.hypot(*(agent - src_goal)) >= MIN_NAV_START_DISTANCE
                and np.hypot(*(agent - tgt_goal)) >= MIN_NAV_START_DISTANCE):
            return NavState(agent=(float(agent[0]), float(agent[1])), objects=objects)
    raise DatasetError("could not sample an initial state away from both goals")


def make_triplet(task: TaskSpec, uid: str, rng: np.random.Generator) -> Triplet:
    s0 = _sample_initial_state(task, rng)
    if task.domain == DOMAIN_REARRANGE:
        src = plan_rearrangement(s0, task.source_goal[1:])
        tgt = plan_rearrangement(s0, task.target_goal[1:])
    else:
        src = plan_navigation(s0, task.source_goal[0])
        tgt = plan_navigation(s0, task.target_goal[0])
    return Triplet(uid=uid, task=task, source_demo=src, target_demo=tgt)


def _template_kinds(domain: str) -> tuple[str, ...]:
    return (taskgen.REARRANGE_KINDS if domain == DOMAIN_REARRANGE
            else taskgen.NAVIGATE_KINDS)


def generate_dataset(cfg: DatasetConfig) -> dict:
    """Write per-split JSONL files plus vocab.json and manifest.json under
    cfg.out_dir; returns the manifest."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pair_split = taskgen.split_pairs(cfg.seed)
    kinds = _template_kinds(cfg.domain)
    domain_code = 0 if cfg.domain == DOMAIN_REARRANGE else 1

    counts: dict[str, int] = {}
    files: dict[str, str] = {}
    hasher = hashlib.sha256()
    for split_idx, split in enumerate(SPLIT_ORDER):
        if split not in cfg.splits:
            continue
        pairs = pair_split.for_split(SPLIT_PAIR_SOURCE[split])
        per_template = split_count(split, cfg.scale, cfg.per_template_overrides)
        filename = f"{split}.jsonl"
        path = out_dir / filename
        n_written = 0
        with open(path, "w", encoding="utf-8") as f:
            for kind_idx, kind in enumerate(kinds):
                for i in range(per_template):
                    rng = np.random.default_rng(
                        np.random.SeedSequence([cfg.seed, domain_code, split_idx, kind_idx, i]))
                    task = taskgen.sample_task(cfg.domain, pairs, rng, kind=kind)
                    uid = f"{cfg.domain}-{split}-{kind}-{i:05d}"
                    triplet = make_triplet(task, uid, rng)
                    f.write(json.dumps(triplet_to_record(triplet)) + "\n")
                    n_written += 1
        counts[split] = n_written
        files[split] = filename
        hasher.update(path.read_bytes())

    vocab = taskgen.build_vocab()
    vocab_path = out_dir / "vocab.json"
    vocab_path.write_text(json.dumps(vocab, indent=0) + "\n", encoding="utf-8")
    hasher.update(vocab_path.read_bytes())

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "domain": cfg.domain,
        "seed": cfg.seed,
        "scale": cfg.scale,
        "per_template": {s: split_count(s, cfg.scale, cfg.per_template_overrides)
                         for s in cfg.splits},
        "counts": counts,
        "files": files,
        "vocab_file": "vocab.json",
        "content_hash": hasher.hexdigest(),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n",
                                           encoding="utf-8")
    return manifest


# -- loading ---------------------------------------------------------------------


def load_manifest(dataset_dir) -> dict:
    path = Path(dataset_dir) / "manifest.json"
    if not path.exists():
        raise DatasetError(f"no manifest at {path}")
    manifest = json.loads(path.read_text(encoding="utf-8"))
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise DatasetError(f"manifest schema {manifest.get('schema_version')} != {SCHEMA_VERSION}")
    return manifest


def load_vocab(dataset_dir) -> dict[str, int]:
    return json.loads((Path(dataset_dir) / "vocab.json").read_text(encoding="utf-8"))


def validate_triplet(t: Triplet) -> None:
    """Replay both demonstrations and check goal consistency."""
    t.task.validate()
    for demo, goal, label in ((t.source_demo, t.task.source_goal, "source"),
                              (t.target_demo, t.task.target_goal, "target")):
        replayed = replay(t.task.domain, demo)
        if t.task.domain == DOMAIN_REARRANGE:
            ok = replayed == demo.states
            reached = list(demo.final_state.objects) == [tuple(int(v) for v in g)
                                                         for g in goal[1:]]
        else:
            ok = all(np.allclose(a.agent, b.agent, atol=1e-12)
                     for a, b in zip(replayed, demo.states))
            reached = bool(np.hypot(*(np.array(demo.final_state.agent)
                                      - np.array(goal[0]))) < 1e-6)
        if not ok:
            raise DatasetError(f"{t.uid}: {label} demo does not replay")
        if not reached:
            raise DatasetError(f"{t.uid}: {label} demo does not reach its goal")


def iter_triplets(dataset_dir, split: str, validate: bool = False):
    """Yield triplets in file order; raises DatasetError naming the line on
    corrupt records."""
    manifest = load_manifest(dataset_dir)
    if split not in manifest["files"]:
        raise DatasetError(f"split {split!r} not in dataset ({list(manifest['files'])})")
    path = Path(dataset_dir) / manifest["files"][split]
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                triplet = triplet_from_record(rec)
            except (json.JSONDecodeError, KeyError, ValueError, DatasetError) as err:
                raise DatasetError(f"{path}:{lineno}: corrupt record ({err})") from err
            if validate:
                try:
                    validate_triplet(triplet)
                except (DatasetError, ValueError) as err:
                    raise DatasetError(f"{path}:{lineno}: {err}") from err
            yield triplet


def load_triplets(dataset_dir, split: str, validate: bool = False) -> list[Triplet]:
    return list(iter_triplets(dataset_dir, split, validate=validate))


# -- paraphrases ------------------------------------------------------------------


def attach_paraphrases(dataset_dir, split: str, paraphrase_file) -> dict:
    """Merge an id -> text mapping into a split file. Unknown ids warn and
    are skipped. Rebuilds vocab.json so paraphrase words are in-vocabulary.
    Returns coverage statistics."""
    try:
        mapping = json.loads(Path(paraphrase_file).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise DatasetError(f"cannot read paraphrase file {paraphrase_file}: {err}") from err
    if not isinstance(mapping, dict):
        raise DatasetError("paraphrase file must be a JSON object of id -> text")

    manifest = load_manifest(dataset_dir)
    path = Path(dataset_dir) / manifest["files"][split]
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                records.append(json.loads(line))
    known_ids = {rec["id"] for rec in records}
    for uid in mapping:
        if uid not in known_ids:
            log.warning("paraphrase id %s not in split %s; skipped", uid, split)

    matched = 0
    for rec in records:
        text = mapping.get(rec["id"])
        if text is not None:
            rec["paraphrase_text"] = str(text)
            matched += 1
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")

    texts = []
    for split_name, fname in manifest["files"].items():
        fpath = Path(dataset_dir) / fname
        if fpath.exists():
            with open(fpath, "r", encoding="utf-8") as f:
                for line in f:
                    if line.strip():
                        rec = json.loads(line)
                        if rec.get("paraphrase_text"):
                            texts.append(rec["paraphrase_text"])
    vocab = taskgen.build_vocab(extra_texts=texts)
    (Path(dataset_dir) / "vocab.json").write_text(json.dumps(vocab, indent=0) + "\n",
                                                  encoding="utf-8")

    stats = {
        "split": split,
        "matched": matched,
        "total": len(records),
        "coverage": matched / len(records) if records else 0.0,
        "unknown_ids": sorted(set(mapping) - known_ids),
    }
    return stats
