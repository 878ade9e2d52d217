"""Demonstration synthesis.

Grid plans visit object 0 then object 1: walk to the object along a
Manhattan path (x moves before y moves), grasp, carry it to its goal with
the same move ordering, release; finally Stop. While carrying, a move that
would put the carried object on the other object's cell is resolved by
taking a pending perpendicular move early, or, on a straight corridor, by a
two-step sidestep. If the other object sits exactly on the carried object's
goal, that leg is solved by exact breadth-first search over the joint state
space instead.

Arena plans walk the straight line to the goal in unit steps with an exact
final landing, then terminate with a zero action.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .envs import (
    GRID_SIZE,
    STOP_NORM,
    GridAction,
    GridState,
    NavState,
    step_navigate,
    step_rearrange,
)

_AXIS_ACTIONS = {
    (0, 1): (GridAction.LEFT, GridAction.RIGHT),
    (1, 1): (GridAction.DOWN, GridAction.UP),
}


@dataclass
class Demonstration:
    """States and the action taken at each; len(states) == len(actions) + 1,
    the trailing state being terminal."""

    states: list
    actions: list

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def final_state(self):
        return self.states[-1]


def _axis_action(axis: int, delta: float) -> GridAction:
    return _AXIS_ACTIONS[(axis, 1)][delta > 0]


def _walk_actions(src: tuple[int, int], dst: tuple[int, int]) -> list[GridAction]:
    """Unobstructed Manhattan walk, x moves first."""
    moves = []
    dx, dy = dst[0] - src[0], dst[1] - src[1]
    moves += [_axis_action(0, dx)] * abs(dx)
    moves += [_axis_action(1, dy)] * abs(dy)
    return moves


def _l_path_cells(src: tuple[int, int], dst: tuple[int, int], x_first: bool):
    """Cells visited (src excluded) along an L-shaped Manhattan path."""
    cells = []
    x, y = src
    def run(axis, target):
        nonlocal x, y
        while (x, y)[axis] != target:
            if axis == 0:
                x += 1 if target > x else -1
            else:
                y += 1 if target > y else -1
            cells.append((x, y))
    if x_first:
        run(0, dst[0]), run(1, dst[1])
    else:
        run(1, dst[1]), run(0, dst[0])
    return cells


def _carry_actions(src: tuple[int, int], dst: tuple[int, int],
                   obstacle: tuple[int, int]) -> list[GridAction]:
    """Manhattan carry from src to dst keeping the carried object off
    ``obstacle``. When both axes move, the x-first and y-first L paths have
    disjoint interiors, so one of them always clears the single obstacle
    (x-first preferred). On a straight corridor a two-cell sidestep around
    the obstacle costs exactly two extra moves."""
    if src == dst:
        return []
    dx, dy = dst[0] - src[0], dst[1] - src[1]
    if dx != 0 and dy != 0:
        cells = _l_path_cells(src, dst, x_first=True)
        if obstacle in cells:
            cells = _l_path_cells(src, dst, x_first=False)
        assert obstacle not in cells
        return _cells_to_actions(src, cells)

    axis = 0 if dx != 0 else 1
    other = 1 - axis
    cells = _l_path_cells(src, dst, x_first=True)
    if obstacle not in cells:
        return _cells_to_actions(src, cells)
    # detour: advance to the cell before the obstacle, sidestep, pass it
    # with two axis moves (the obstacle is never the destination), return
    blocked_at = cells.index(obstacle)
    path = cells[:blocked_at]
    pos = cells[blocked_at - 1] if blocked_at else src
    side = 1 if pos[other] + 1 < GRID_SIZE else -1
    pos = _step(pos, other, side)
    path.append(pos)
    for _ in range(2):
        pos = _step(pos, axis, dx + dy)
        path.append(pos)
    pos = _step(pos, other, -side)
    path.append(pos)
    rest_from = cells.index(pos) if pos != dst else len(cells)
    path.extend(cells[rest_from + 1:] if pos != dst else [])
    return _cells_to_actions(src, path)


def _cells_to_actions(src: tuple[int, int], cells) -> list[GridAction]:
    moves = []
    prev = src
    for cell in cells:
        delta = (cell[0] - prev[0], cell[1] - prev[1])
        axis = 0 if delta[0] != 0 else 1
        moves.append(_axis_action(axis, delta[axis]))
        prev = cell
    return moves


def _step(pos: tuple[int, int], axis: int, delta: float) -> tuple[int, int]:
    sign = 1 if delta > 0 else -1
    return (pos[0] + sign, pos[1]) if axis == 0 else (pos[0], pos[1] + sign)


def bfs_to_condition(start: GridState, goal_test, max_nodes: int = 500_000) -> list[GridAction]:
    """Shortest action sequence (excluding Stop) reaching any state that
    satisfies ``goal_test``, via BFS over the joint environment state."""
    if goal_test(start):
        return []
    seen = {start}
    frontier = deque([(start, ())])
    explored = 0
    while frontier:
        state, path = frontier.popleft()
        explored += 1
        if explored > max_nodes:
            raise RuntimeError("BFS node budget exhausted")
        for action in (GridAction.UP, GridAction.DOWN, GridAction.LEFT,
                       GridAction.RIGHT, GridAction.GRASP, GridAction.RELEASE):
            nxt, _ = step_rearrange(state, action)
            if nxt in seen:
                continue
            new_path = path + (action,)
            if goal_test(nxt):
                return list(new_path)
            seen.add(nxt)
            frontier.append((nxt, new_path))
    raise RuntimeError("BFS found no path")


def _leg_actions(state: GridState, obj: int, goal: tuple[int, int]) -> list[GridAction]:
    """Actions placing object ``obj`` on ``goal`` and releasing it."""
    if state.objects[obj] == goal and state.grasped != obj:
        return []
    other = 1 - obj
    if state.objects[other] == goal:
        # goal cell occupied by the other object: exact search for this leg
        return bfs_to_condition(
            state, lambda s: s.objects[obj] == goal and s.grasped is None)
    actions = _walk_actions(state.agent, state.objects[obj])
    actions.append(GridAction.GRASP)
    actions += _carry_actions(state.objects[obj], goal, state.objects[other])
    actions.append(GridAction.RELEASE)
    return actions


def plan_rearrangement(initial_state: GridState, object_goals) -> Demonstration:
    """Optimal-for-the-visit-order grid demonstration ending in Stop."""
    initial_state.validate()
    goals = [tuple(int(v) for v in g) for g in object_goals]
    state = initial_state
    states = [state]
    actions: list[GridAction] = []

    def emit(seq):
        nonlocal state
        for action in seq:
            nxt, done = step_rearrange(state, action)
            if nxt == state and action in MOVELIKE:
                raise RuntimeError(f"planned action {action.name} was a no-op")
            state = nxt
            states.append(state)
            actions.append(action)
            assert not done

    MOVELIKE = {GridAction.UP, GridAction.DOWN, GridAction.LEFT, GridAction.RIGHT}
    if state.grasped is not None:
        emit([GridAction.RELEASE])
    for obj in (0, 1):
        emit(_leg_actions(state, obj, goals[obj]))

    state, done = step_rearrange(state, GridAction.STOP)
    states.append(state)
    actions.append(GridAction.STOP)
    assert done
    return Demonstration(states=states, actions=actions)


def plan_navigation(initial_state: NavState, agent_goal) -> Demonstration:
    """Straight-line arena demonstration. Unit steps along the goal
    direction, an exact landing, then the terminating zero action. When the
    fractional tail would fall below the stop norm, the last unit of travel
    is split into two equal half steps so no intermediate action terminates
    the episode early."""
    goal = np.array([float(agent_goal[0]), float(agent_goal[1])])
    start = np.array(initial_state.agent)
    dist = float(np.hypot(*(goal - start)))
    if dist < 2 * STOP_NORM:
        raise ValueError(f"initial agent position within {2 * STOP_NORM} of the goal")

    state = initial_state
    states = [state]
    actions: list[tuple[float, float]] = []

    def emit(action):
        nonlocal state
        action = (float(action[0]), float(action[1]))
        state, done = step_navigate(state, action)
        states.append(state)
        actions.append(action)
        return done

    direction = (goal - start) / dist
    n_full = int(math.floor(dist))
    frac = dist - n_full
    if 0.0 < frac < STOP_NORM:
        n_full -= 1  # fold the last whole unit into two compliant half steps
    for _ in range(n_full):
        done = emit(direction)
        assert not done
    remaining = goal - np.array(state.agent)
    rem_norm = float(np.hypot(*remaining))
    if rem_norm > 1.0:
        done = emit(remaining / 2.0)
        assert not done
        remaining = goal - np.array(state.agent)
        rem_norm = float(np.hypot(*remaining))
    if rem_norm > 0.0:
        done = emit(remaining)
        if done:
            return Demonstration(states=states, actions=actions)
    emit((0.0, 0.0))
    return Demonstration(states=states, actions=actions)


def replay(domain: str, demo: Demonstration):
    """Re-execute a demonstration's actions from its first state; returns the
    reproduced state list (length len(actions) + 1)."""
    state = demo.states[0]
    out = [state]
    step = step_rearrange if domain == "rearrange" else step_navigate
    for i, action in enumerate(demo.actions):
        state, done = step(state, action)
        out.append(state)
        if done and i != len(demo.actions) - 1:
            raise ValueError(f"demonstration terminated early at action {i}")
    return out
