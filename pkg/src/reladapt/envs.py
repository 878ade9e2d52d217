"""The two benchmark environments.

Rearrangement: a 5x5 grid with an agent and two movable objects. The agent
walks, grasps, carries, and releases objects; the episode ends on Stop.

Navigation: a continuous 200x200 arena with four fixed landmark objects.
The agent moves by bounded (dx, dy) steps; the episode ends when it takes a
step with L2 norm below 0.1.

Coordinate convention everywhere: x grows to the right, y grows upward, so
"forward" means +y and "backward" means -y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np

GRID_SIZE = 5
ARENA_HALF = 100.0
STOP_NORM = 0.1
NAV_SUCCESS_RADIUS = 5.0

REARRANGE_TIME_LIMIT = 100
NAVIGATE_TIME_LIMIT = 500

DOMAIN_REARRANGE = "rearrange"
DOMAIN_NAVIGATE = "navigate"


class GridAction(IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    GRASP = 4
    RELEASE = 5
    STOP = 6


MOVE_DELTAS = {
    GridAction.UP: (0, 1),
    GridAction.DOWN: (0, -1),
    GridAction.LEFT: (-1, 0),
    GridAction.RIGHT: (1, 0),
}


@dataclass(frozen=True)
class GridState:
    agent: tuple[int, int]
    objects: tuple[tuple[int, int], tuple[int, int]]
    grasped: int | None = None

    def validate(self) -> None:
        for x, y in (self.agent, *self.objects):
            if not (0 <= x < GRID_SIZE and 0 <= y < GRID_SIZE):
                raise ValueError(f"cell ({x},{y}) outside the {GRID_SIZE}x{GRID_SIZE} grid")
        if self.objects[0] == self.objects[1]:
            raise ValueError("the two objects may not share a cell")
        if self.grasped is not None and self.agent != self.objects[self.grasped]:
            raise ValueError("grasped object must share the agent's cell")

    def positions(self) -> np.ndarray:
        """Entity positions, agent first: shape (3, 2)."""
        return np.array([self.agent, *self.objects], dtype=np.float64)


@dataclass(frozen=True)
class NavState:
    agent: tuple[float, float]
    objects: tuple[tuple[float, float], ...]

    def positions(self) -> np.ndarray:
        """Entity positions, agent first: shape (1 + n_objects, 2)."""
        return np.array([self.agent, *self.objects], dtype=np.float64)


def _in_grid(cell: tuple[int, int]) -> bool:
    return 0 <= cell[0] < GRID_SIZE and 0 <= cell[1] < GRID_SIZE


def step_rearrange(state: GridState, action: GridAction) -> tuple[GridState, bool]:
    """Pure grid transition. Movement that would leave the grid or put the
    two objects on one cell is a no-op. Grasp only acts on an object under
    the agent; Release always succeeds; Stop terminates."""
    action = GridAction(action)
    if action == GridAction.STOP:
        return state, True
    if action == GridAction.GRASP:
        for i, pos in enumerate(state.objects):
            if pos == state.agent:
                return replace(state, grasped=i), False
        return state, False
    if action == GridAction.RELEASE:
        if state.grasped is None:
            return state, False
        return replace(state, grasped=None), False

    dx, dy = MOVE_DELTAS[action]
    target = (state.agent[0] + dx, state.agent[1] + dy)
    if not _in_grid(target):
        return state, False
    if state.grasped is None:
        return replace(state, agent=target), False
    other = 1 - state.grasped
    if target == state.objects[other]:
        return state, False
    objects = list(state.objects)
    objects[state.grasped] = target
    return replace(state, agent=target, objects=tuple(objects)), False


def clamp_nav_action(action) -> tuple[float, float]:
    dx = min(max(float(action[0]), -1.0), 1.0)
    dy = min(max(float(action[1]), -1.0), 1.0)
    return dx, dy


def step_navigate(state: NavState, action) -> tuple[NavState, bool]:
    """Pure arena transition: clamp the action to [-1,1]^2, translate the
    agent (clamped per axis to the arena), terminate if the executed action's
    norm is below 0.1. Objects never move."""
    dx, dy = clamp_nav_action(action)
    x = min(max(state.agent[0] + dx, -ARENA_HALF), ARENA_HALF)
    y = min(max(state.agent[1] + dy, -ARENA_HALF), ARENA_HALF)
    done = math.hypot(dx, dy) < STOP_NORM
    return NavState(agent=(x, y), objects=state.objects), done


def reset_rearrange(rng: np.random.Generator) -> GridState:
    """Agent and both objects on pairwise-distinct uniform cells."""
    cells = rng.choice(GRID_SIZE * GRID_SIZE, size=3, replace=False)
    pts = [(int(c) % GRID_SIZE, int(c) // GRID_SIZE) for c in cells]
    return GridState(agent=pts[0], objects=(pts[1], pts[2]), grasped=None)


def reset_navigate(object_positions, rng: np.random.Generator) -> NavState:
    agent = tuple(rng.uniform(-ARENA_HALF, ARENA_HALF, size=2))
    objects = tuple((float(x), float(y)) for x, y in object_positions)
    return NavState(agent=(float(agent[0]), float(agent[1])), objects=objects)


def rearrange_success(final_state: GridState, object_goals, stopped: bool) -> bool:
    """Both objects on their goal cells and the episode ended via Stop."""
    if not stopped:
        return False
    goals = [tuple(int(v) for v in g) for g in object_goals]
    return list(final_state.objects) == goals


def navigate_success(final_state: NavState, agent_goal) -> bool:
    """Agent strictly within 5 units of the goal at episode end."""
    gx, gy = float(agent_goal[0]), float(agent_goal[1])
    return math.hypot(final_state.agent[0] - gx, final_state.agent[1] - gy) < NAV_SUCCESS_RADIUS


class RearrangementEnv:
    """Stateful wrapper around the pure grid dynamics with a step limit.

    ``step`` returns (state, done, info); info carries ``stopped`` (episode
    ended via Stop rather than truncation) once done.
    """

    def __init__(self, object_goals, time_limit: int = REARRANGE_TIME_LIMIT):
        self.object_goals = [tuple(int(v) for v in g) for g in object_goals]
        self.time_limit = time_limit
        self.state: GridState | None = None
        self.steps = 0

    def reset(self, rng: np.random.Generator) -> GridState:
        self.state = reset_rearrange(rng)
        self.steps = 0
        return self.state

    def step(self, action: GridAction):
        self.state, stopped = step_rearrange(self.state, action)
        self.steps += 1
        truncated = self.steps >= self.time_limit and not stopped
        done = stopped or truncated
        info = {"stopped": stopped, "truncated": truncated}
        if done:
            info["success"] = rearrange_success(self.state, self.object_goals, stopped)
        return self.state, done, info


class NavigationEnv:
    def __init__(self, object_positions, agent_goal, time_limit: int = NAVIGATE_TIME_LIMIT):
        self.object_positions = [(float(x), float(y)) for x, y in object_positions]
        self.agent_goal = (float(agent_goal[0]), float(agent_goal[1]))
        self.time_limit = time_limit
        self.state: NavState | None = None
        self.steps = 0

    def reset(self, rng: np.random.Generator) -> NavState:
        self.state = reset_navigate(self.object_positions, rng)
        self.steps = 0
        return self.state

    def step(self, action):
        self.state, stopped = step_navigate(self.state, action)
        self.steps += 1
        truncated = self.steps >= self.time_limit and not stopped
        done = stopped or truncated
        info = {"stopped": stopped, "truncated": truncated}
        if done:
            # success is judged at whichever terminal state ends the episode
            info["success"] = navigate_success(self.state, self.agent_goal)
        return self.state, done, info


def render_grid(state: GridState, object_goals=None) -> str:
    """ASCII view, one char per cell, top row is y=4. Agent 'A' (or 'G' when
    grasping), objects 'a'/'b', goals 'x'/'y', empty '.'."""
    grid = [["." for _ in range(GRID_SIZE)] for _ in range(GRID_SIZE)]
    if object_goals is not None:
        for mark, (gx, gy) in zip("xy", object_goals):
            grid[int(gy)][int(gx)] = mark
    for mark, (ox, oy) in zip("ab", state.objects):
        grid[oy][ox] = mark
    ax, ay = state.agent
    grid[ay][ax] = "G" if state.grasped is not None else "A"
    return "\n".join("".join(grid[y]) for y in range(GRID_SIZE - 1, -1, -1))


# -- model-facing state features ---------------------------------------------


def normalize_positions(domain: str, positions: np.ndarray) -> np.ndarray:
    """Map raw coordinates into [-1, 1] per axis."""
    positions = np.asarray(positions, dtype=np.float64)
    if domain == DOMAIN_REARRANGE:
        return (positions - (GRID_SIZE - 1) / 2.0) / ((GRID_SIZE - 1) / 2.0)
    return positions / ARENA_HALF


def denormalize_positions(domain: str, positions: np.ndarray) -> np.ndarray:
    positions = np.asarray(positions, dtype=np.float64)
    if domain == DOMAIN_REARRANGE:
        return positions * ((GRID_SIZE - 1) / 2.0) + (GRID_SIZE - 1) / 2.0
    return positions * ARENA_HALF


def state_features(domain: str, state) -> np.ndarray:
    """Flat observation vector: normalized entity positions, plus a grasp
    one-hot over {none, obj0, obj1} for the grid domain."""
    flat = normalize_positions(domain, state.positions()).reshape(-1)
    if domain == DOMAIN_REARRANGE:
        grasp = np.zeros(3)
        grasp[0 if state.grasped is None else state.grasped + 1] = 1.0
        return np.concatenate([flat, grasp])
    return flat


def feature_dim(domain: str) -> int:
    return 9 if domain == DOMAIN_REARRANGE else 10
