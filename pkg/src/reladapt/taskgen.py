"""Task vocabulary and generation.

A task is defined over entities (the agent plus 2 grid objects or 4 arena
landmarks), a source goal state, and an adaptation: a structured edit of the
goal. ``apply_adaptation`` is the symbolic oracle that derives the target
goal; it is the ground truth for dataset labels and evaluation.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass
from itertools import product

import numpy as np

from .envs import (
    ARENA_HALF,
    DOMAIN_NAVIGATE,
    DOMAIN_REARRANGE,
    GRID_SIZE,
)

ATTRIBUTES = ("large", "wide", "wooden", "metallic", "corner", "foldable")
NOUNS = ("chair", "table", "sofa", "light", "shelf", "wardrobe")
AGENT_WORD = "agent"

DIRECTIONS = ("left", "right", "forward", "backward")
DIRECTION_DELTAS = {
    "left": (-1, 0),
    "right": (1, 0),
    "forward": (0, 1),
    "backward": (0, -1),
}
MAGNITUDES = (1, 2, 3)
NUMBER_WORDS = {1: "one", 2: "two", 3: "three"}

CLOSER_ALPHA = 0.5
FURTHER_ALPHA = 1.5

N_ENTITIES = {DOMAIN_REARRANGE: 3, DOMAIN_NAVIGATE: 5}

# id maps for entity encoders; the agent shares one reserved row
ATTR_IDS = {a: i for i, a in enumerate(ATTRIBUTES)}
ATTR_IDS[AGENT_WORD] = len(ATTRIBUTES)
NOUN_IDS = {n: i for i, n in enumerate(NOUNS)}
NOUN_IDS[AGENT_WORD] = len(NOUNS)


class TaskGenError(Exception):
    pass


class AdaptationRejected(TaskGenError):
    """The adaptation result violates domain bounds or degeneracy rules;
    the caller resamples."""


@dataclass(frozen=True)
class Entity:
    attribute: str
    noun: str

    def __post_init__(self):
        agentish = (self.attribute == AGENT_WORD, self.noun == AGENT_WORD)
        if any(agentish) and not all(agentish):
            raise ValueError("agent symbol must fill both fields or neither")

    @property
    def is_agent(self) -> bool:
        return self.attribute == AGENT_WORD

    def phrase(self) -> str:
        return f"{self.attribute} {self.noun}"


AGENT_ENTITY = Entity(AGENT_WORD, AGENT_WORD)


# -- adaptations ---------------------------------------------------------------


@dataclass(frozen=True)
class AbsoluteShift:
    """Both objects' goals translate; one (direction, magnitude) per object,
    listed in entity order (entity 1 then entity 2)."""

    moves: tuple[tuple[str, int], tuple[str, int]]
    kind = "absolute_shift"


@dataclass(frozen=True)
class RelativeShift:
    """One object's goal moves toward/away from the other object's goal
    along the dominant axis (the axis with the larger coordinate gap,
    x on ties)."""

    mover: int  # entity index, 1 or 2
    sense: str  # "closer" | "farther"
    magnitude: int
    kind = "relative_shift"


@dataclass(frozen=True)
class SwapGoals:
    kind = "swap_goals"


@dataclass(frozen=True)
class GoCloser:
    ref: int  # entity index of the referenced landmark, 1..4
    kind = "go_closer"


@dataclass(frozen=True)
class GoFurther:
    ref: int
    kind = "go_further"


@dataclass(frozen=True)
class GoOpposite:
    ref: int
    kind = "go_opposite"


Adaptation = AbsoluteShift | RelativeShift | SwapGoals | GoCloser | GoFurther | GoOpposite

REARRANGE_KINDS = ("absolute_shift", "relative_shift", "swap_goals")
NAVIGATE_KINDS = ("go_closer", "go_further", "go_opposite")


def adaptation_to_dict(adaptation: Adaptation) -> dict:
    if isinstance(adaptation, AbsoluteShift):
        return {"kind": adaptation.kind,
                "moves": [[d, m] for d, m in adaptation.moves]}
    if isinstance(adaptation, RelativeShift):
        return {"kind": adaptation.kind, "mover": adaptation.mover,
                "sense": adaptation.sense, "magnitude": adaptation.magnitude}
    if isinstance(adaptation, SwapGoals):
        return {"kind": adaptation.kind}
    return {"kind": adaptation.kind, "ref": adaptation.ref}


def adaptation_from_dict(d: dict) -> Adaptation:
    kind = d["kind"]
    if kind == "absolute_shift":
        moves = tuple((str(dd), int(m)) for dd, m in d["moves"])
        return AbsoluteShift(moves=moves)  # type: ignore[arg-type]
    if kind == "relative_shift":
        return RelativeShift(mover=int(d["mover"]), sense=str(d["sense"]),
                             magnitude=int(d["magnitude"]))
    if kind == "swap_goals":
        return SwapGoals()
    cls = {"go_closer": GoCloser, "go_further": GoFurther, "go_opposite": GoOpposite}[kind]
    return cls(ref=int(d["ref"]))


def _check_grid_goals(goals: np.ndarray) -> None:
    objs = goals[1:]
    if (objs < 0).any() or (objs > GRID_SIZE - 1).any():
        raise AdaptationRejected("object goal outside the grid")
    if tuple(objs[0]) == tuple(objs[1]):
        raise AdaptationRejected("object goals collide")


def apply_adaptation(source_goal, adaptation: Adaptation, domain: str) -> np.ndarray:
    """Derive the target goal state from the source goal state.

    ``source_goal`` is an (n_entities, 2) array, agent first. The agent's
    slot in the grid domain mirrors where a demonstration leaves the agent:
    on the second object's goal cell, right after releasing it. Raises
    AdaptationRejected when the result leaves the domain or degenerates;
    generators respond by resampling rather than clamping.
    """
    src = np.array(source_goal, dtype=np.float64)
    tgt = src.copy()

    if domain == DOMAIN_REARRANGE:
        if isinstance(adaptation, AbsoluteShift):
            for obj_idx, (direction, magnitude) in zip((1, 2), adaptation.moves):
                delta = DIRECTION_DELTAS[direction]
                tgt[obj_idx, 0] += delta[0] * magnitude
                tgt[obj_idx, 1] += delta[1] * magnitude
        elif isinstance(adaptation, RelativeShift):
            mover = adaptation.mover
            ref = 3 - mover
            diff = tgt[ref] - tgt[mover]
            axis = 0 if abs(diff[0]) >= abs(diff[1]) else 1
            gap = abs(diff[axis])
            step = adaptation.magnitude if adaptation.sense == "closer" else -adaptation.magnitude
            if adaptation.sense == "closer" and step > gap:
                raise AdaptationRejected("closer-shift overshoots the reference")
            tgt[mover, axis] += math.copysign(1.0, diff[axis]) * step if diff[axis] != 0 else step
        elif isinstance(adaptation, SwapGoals):
            tgt[1], tgt[2] = src[2].copy(), src[1].copy()
        else:
            raise TaskGenError(f"{adaptation.kind} is not a grid adaptation")
        _check_grid_goals(tgt)
        tgt[0] = tgt[2]
        return tgt

    if domain == DOMAIN_NAVIGATE:
        if not isinstance(adaptation, (GoCloser, GoFurther, GoOpposite)):
            raise TaskGenError(f"{adaptation.kind} is not an arena adaptation")
        e = src[adaptation.ref]
        g = src[0]
        if float(np.hypot(*(g - e))) < 1e-6:
            raise AdaptationRejected("goal coincides with the referenced landmark")
        if isinstance(adaptation, GoCloser):
            new_goal = e + CLOSER_ALPHA * (g - e)
        elif isinstance(adaptation, GoFurther):
            new_goal = e + FURTHER_ALPHA * (g - e)
        else:
            new_goal = 2.0 * e - g
        if (np.abs(new_goal) > ARENA_HALF).any():
            raise AdaptationRejected("target goal outside the arena")
        tgt[0] = new_goal
        return tgt

    raise TaskGenError(f"unknown domain {domain!r}")


# -- language ------------------------------------------------------------------


def _units(magnitude: int) -> str:
    return f"{NUMBER_WORDS[magnitude]} unit" + ("" if magnitude == 1 else "s")


def render_template(adaptation: Adaptation, entities) -> str:
    """One fixed sentence per adaptation kind, lowercase, magnitudes spelled
    out as words."""
    if isinstance(adaptation, AbsoluteShift):
        parts = []
        for obj_idx, (direction, magnitude) in zip((1, 2), adaptation.moves):
            parts.append(f"{entities[obj_idx].phrase()} {_units(magnitude)} further {direction}")
        return "move " + " and ".join(parts)
    if isinstance(adaptation, RelativeShift):
        mover = entities[adaptation.mover].phrase()
        ref = entities[3 - adaptation.mover].phrase()
        rel = "closer to" if adaptation.sense == "closer" else "farther from"
        return f"move the {mover} {_units(adaptation.magnitude)} {rel} the {ref}"
    if isinstance(adaptation, SwapGoals):
        return (f"move the {entities[1].phrase()} to where the "
                f"{entities[2].phrase()} was moved, and vice versa")
    if isinstance(adaptation, GoCloser):
        return f"go closer to the {entities[adaptation.ref].phrase()}"
    if isinstance(adaptation, GoFurther):
        return f"go further away from the {entities[adaptation.ref].phrase()}"
    if isinstance(adaptation, GoOpposite):
        return f"go to the opposite side of the {entities[adaptation.ref].phrase()}"
    raise TaskGenError(f"unknown adaptation {adaptation!r}")


PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

_TEMPLATE_SCAFFOLD = (
    "move", "the", "to", "where", "was", "moved", "and", "vice", "versa",
    "go", "further", "away", "from", "closer", "farther",
    "unit", "units", "opposite", "side", "of",
)

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def split_words(text: str) -> list[str]:
    return text.lower().translate(_PUNCT_TABLE).split()


def build_vocab(extra_texts=()) -> dict[str, int]:
    """Token ids for the closed template grammar plus any supplied corpus
    (e.g. paraphrases). Id 0 is the pad token, id 1 unknown."""
    vocab = {PAD_TOKEN: 0, UNK_TOKEN: 1}
    words = list(_TEMPLATE_SCAFFOLD)
    words += list(NUMBER_WORDS.values())
    words += list(DIRECTIONS)
    words += list(ATTRIBUTES) + list(NOUNS)
    for text in extra_texts:
        words += split_words(text)
    for w in words:
        if w not in vocab:
            vocab[w] = len(vocab)
    return vocab


def tokenize(text: str, vocab: dict[str, int]) -> list[int]:
    unk = vocab[UNK_TOKEN]
    return [vocab.get(w, unk) for w in split_words(text)]


def detokenize(ids, vocab: dict[str, int]) -> str:
    rev = {i: w for w, i in vocab.items()}
    return " ".join(rev[i] for i in ids)


def pad_token_batch(sequences: list[list[int]], length: int | None = None) -> np.ndarray:
    """Stack variable-length id sequences into an int array padded with 0."""
    if length is None:
        length = max((len(s) for s in sequences), default=1)
        length = max(length, 1)
    out = np.zeros((len(sequences), length), dtype=np.int64)
    for i, seq in enumerate(sequences):
        out[i, :len(seq)] = seq[:length]
    return out


# -- splits and sampling -------------------------------------------------------


@dataclass(frozen=True)
class SplitPairs:
    train: tuple[tuple[str, str], ...]
    val: tuple[tuple[str, str], ...]
    test: tuple[tuple[str, str], ...]

    def for_split(self, name: str):
        return getattr(self, name)


def split_pairs(seed: int) -> SplitPairs:
    """Partition the 36 (attribute, noun) pairs into 24/6/6 disjoint sets."""
    pairs = list(product(ATTRIBUTES, NOUNS))
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pairs))
    shuffled = [pairs[i] for i in order]
    return SplitPairs(train=tuple(shuffled[:24]), val=tuple(shuffled[24:30]),
                      test=tuple(shuffled[30:36]))


@dataclass(frozen=True)
class TaskSpec:
    domain: str
    entities: tuple[Entity, ...]
    source_goal: tuple[tuple[float, float], ...]
    adaptation: Adaptation
    target_goal: tuple[tuple[float, float], ...]
    template_text: str
    paraphrase_text: str | None = None

    def source_goal_array(self) -> np.ndarray:
        return np.array(self.source_goal, dtype=np.float64)

    def target_goal_array(self) -> np.ndarray:
        return np.array(self.target_goal, dtype=np.float64)

    def validate(self) -> None:
        derived = apply_adaptation(self.source_goal_array(), self.adaptation, self.domain)
        if not np.allclose(derived, self.target_goal_array(), atol=1e-9):
            raise TaskGenError("target goal does not match the adaptation oracle")


def _as_goal_tuple(goals: np.ndarray) -> tuple[tuple[float, float], ...]:
    return tuple((float(x), float(y)) for x, y in goals)


def _sample_grid_adaptation(kind: str, rng: np.random.Generator) -> Adaptation:
    if kind == "absolute_shift":
        moves = tuple(
            (DIRECTIONS[rng.integers(len(DIRECTIONS))], int(rng.choice(MAGNITUDES)))
            for _ in range(2)
        )
        return AbsoluteShift(moves=moves)  # type: ignore[arg-type]
    if kind == "relative_shift":
        return RelativeShift(mover=int(rng.integers(1, 3)),
                             sense=("closer", "farther")[rng.integers(2)],
                             magnitude=int(rng.choice(MAGNITUDES)))
    return SwapGoals()


def sample_task(domain: str, pairs, rng: np.random.Generator,
                kind: str | None = None, max_tries: int = 1000) -> TaskSpec:
    """Draw a task whose entities come from the given (attribute, noun) pair
    pool. The adaptation kind is drawn once, uniformly, unless pinned via
    ``kind``; goals and adaptation parameters are rejection-resampled until
    the oracle accepts."""
    n_objects = N_ENTITIES[domain] - 1
    idx = rng.choice(len(pairs), size=n_objects, replace=False)
    entities = (AGENT_ENTITY, *(Entity(*pairs[i]) for i in idx))

    if domain == DOMAIN_REARRANGE:
        if kind is None:
            kind = REARRANGE_KINDS[rng.integers(len(REARRANGE_KINDS))]
        for _ in range(max_tries):
            cells = rng.choice(GRID_SIZE * GRID_SIZE, size=2, replace=False)
            obj_goals = [(int(c) % GRID_SIZE, int(c) // GRID_SIZE) for c in cells]
            source = np.array([obj_goals[1], obj_goals[0], obj_goals[1]], dtype=np.float64)
            adaptation = _sample_grid_adaptation(kind, rng)
            try:
                target = apply_adaptation(source, adaptation, domain)
            except AdaptationRejected:
                continue
            return TaskSpec(domain=domain, entities=entities,
                            source_goal=_as_goal_tuple(source), adaptation=adaptation,
                            target_goal=_as_goal_tuple(target),
                            template_text=render_template(adaptation, entities))
        raise TaskGenError(f"no valid {kind} task after {max_tries} tries")

    if domain == DOMAIN_NAVIGATE:
        if kind is None:
            kind = NAVIGATE_KINDS[rng.integers(len(NAVIGATE_KINDS))]
        cls = {"go_closer": GoCloser, "go_further": GoFurther, "go_opposite": GoOpposite}[kind]
        for _ in range(max_tries):
            objects = rng.uniform(-ARENA_HALF, ARENA_HALF, size=(n_objects, 2))
            agent_goal = rng.uniform(-ARENA_HALF, ARENA_HALF, size=2)
            source = np.vstack([agent_goal[None, :], objects])
            adaptation = cls(ref=int(rng.integers(1, n_objects + 1)))
            try:
                target = apply_adaptation(source, adaptation, domain)
            except AdaptationRejected:
                continue
            return TaskSpec(domain=domain, entities=entities,
                            source_goal=_as_goal_tuple(source), adaptation=adaptation,
                            target_goal=_as_goal_tuple(target),
                            template_text=render_template(adaptation, entities))
        raise TaskGenError(f"no valid {kind} task after {max_tries} tries")

    raise TaskGenError(f"unknown domain {domain!r}")


def entity_id_arrays(entities) -> tuple[np.ndarray, np.ndarray]:
    attrs = np.array([ATTR_IDS[e.attribute] for e in entities], dtype=np.int64)
    nouns = np.array([NOUN_IDS[e.noun] for e in entities], dtype=np.int64)
    return attrs, nouns
