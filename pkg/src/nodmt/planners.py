"""Planners under test and episode execution.

``ORACLE_OPTIMAL`` plans on the full map and is provably step-optimal.  The
three other planners see the world only through observations and carry
deliberate flaws:

* ``GREEDY_FRONTIER`` commits to the frontier nearest by straight-line
  distance, ignoring walls between it and the agent.
* ``WALL_BIASED`` hugs the wall on its right while the target is unknown.
* ``SCENE_SENSITIVE`` is a frontier explorer whose tie-breaking order is keyed
  on a hash of the scene feature vector, so cosmetic changes alter its route.
"""
from __future__ import annotations

import enum
import hashlib
import json
import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field

from .gridworld import (
    DIRECTIONS,
    HEADINGS,
    Action,
    AgentState,
    GridEnvironment,
    Observation,
    TaskInstruction,
    is_complete,
    observe,
    satisfies,
    scene_feature_vector,
    sight_line,
    step,
)

UNKNOWN, FREE, WALL = 0, 1, 2

# fixed expansion order for breadth-first search
_ACTION_ORDER = (Action.MOVE_AHEAD, Action.ROTATE_LEFT, Action.ROTATE_RIGHT, Action.MOVE_BACK)

State = tuple[int, int, int]


class PlannerId(str, enum.Enum):
    ORACLE_OPTIMAL = "ORACLE_OPTIMAL"
    GREEDY_FRONTIER = "GREEDY_FRONTIER"
    WALL_BIASED = "WALL_BIASED"
    SCENE_SENSITIVE = "SCENE_SENSITIVE"


FLAWED_PLANNERS = (PlannerId.GREEDY_FRONTIER, PlannerId.WALL_BIASED, PlannerId.SCENE_SENSITIVE)


class Termination(str, enum.Enum):
    COMPLETED = "completed"
    STEP_BUDGET_EXHAUSTED = "step_budget_exhausted"
    DECLARED_DONE_UNSATISFIED = "planner_declared_done_unsatisfied"


@dataclass(frozen=True)
class Trajectory:
    actions: tuple[Action, ...]
    poses: tuple[AgentState, ...]

    def __post_init__(self):
        if len(self.poses) != len(self.actions) + 1:
            raise ValueError("poses must have exactly one more entry than actions")

    def replays_in(self, env: GridEnvironment) -> bool:
        state = self.poses[0]
        for a, expected in zip(self.actions, self.poses[1:]):
            state = step(env, state, a)
            if state != expected:
                return False
        return True


@dataclass(frozen=True)
class EpisodeResult:
    trajectory: Trajectory
    success: bool
    steps: int
    initial_observation: Observation
    termination: Termination
    planner: PlannerId
    seed: int

    def to_dict(self) -> dict:
        return {
            "planner": self.planner.value,
            "seed": self.seed,
            "success": self.success,
            "steps": self.steps,
            "termination": self.termination.value,
            "actions": [a.value for a in self.trajectory.actions],
            "poses": [p.to_list() for p in self.trajectory.poses],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


@dataclass
class PlannerContext:
    """Per-episode planner memory.  Owned by exactly one episode at a time."""

    planner: PlannerId
    width: int
    height: int
    belief: bytearray
    visited: list[int]
    rng_seed: int
    pending: list[Action] = field(default_factory=list)
    commit: tuple | None = None
    expected: AgentState | None = None
    known_objects: dict[tuple[int, int], str] = field(default_factory=dict)
    pose_visits: dict[State, int] = field(default_factory=dict)
    failed_goals: set[State] = field(default_factory=set)
    scene_key: int = 0
    env: GridEnvironment | None = None  # full map; oracle only

    def copy(self) -> "PlannerContext":
        return PlannerContext(
            self.planner,
            self.width,
            self.height,
            bytearray(self.belief),
            list(self.visited),
            self.rng_seed,
            list(self.pending),
            self.commit,
            self.expected,
            dict(self.known_objects),
            dict(self.pose_visits),
            set(self.failed_goals),
            self.scene_key,
            self.env,
        )

    def reset_plan(self) -> None:
        self.pending.clear()
        self.commit = None
        self.expected = None

    def cell(self, pos: tuple[int, int]) -> int:
        return self.belief[pos[1] * self.width + pos[0]]

    def known_free(self, pos: tuple[int, int]) -> bool:
        x, y = pos
        return 0 <= x < self.width and 0 <= y < self.height and self.belief[y * self.width + x] == FREE

    def observe(self, obs: Observation) -> None:
        """Fold an observation into the belief map and visit counters."""
        w = self.width
        for c in obs.visible_cells:
            i = c.position[1] * w + c.position[0]
            self.belief[i] = WALL if c.wall else FREE
            if c.category is not None:
                self.known_objects[c.position] = c.category
        pose = obs.agent_pose
        self.belief[pose.y * w + pose.x] = FREE
        self.visited[pose.y * w + pose.x] += 1
        key = (pose.x, pose.y, pose.heading)
        self.pose_visits[key] = self.pose_visits.get(key, 0) + 1


def scene_key(env: GridEnvironment) -> int:
    vec = scene_feature_vector(env)
    digest = hashlib.blake2b(",".join(f"{v:.12g}" for v in vec).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_context(planner: PlannerId, env: GridEnvironment, seed: int = 0) -> PlannerContext:
    n = env.width * env.height
    return PlannerContext(
        planner=planner,
        width=env.width,
        height=env.height,
        belief=bytearray(n),
        visited=[0] * n,
        rng_seed=seed,
        scene_key=scene_key(env) if planner is PlannerId.SCENE_SENSITIVE else 0,
        env=env if planner is PlannerId.ORACLE_OPTIMAL else None,
    )


def context_from_history(
    planner: PlannerId, env: GridEnvironment, observations: Iterable[Observation], seed: int = 0
) -> PlannerContext:
    """Fresh context whose memory is rebuilt from an observation history."""
    ctx = make_context(planner, env, seed)
    for obs in observations:
        ctx.observe(obs)
    return ctx


# -- search -----------------------------------------------------------------------

def _successors(s: State, passable: Callable[[tuple[int, int]], bool]):
    x, y, h = s
    for a in _ACTION_ORDER:
        if a is Action.ROTATE_LEFT:
            yield a, (x, y, (h - 90) % 360)
        elif a is Action.ROTATE_RIGHT:
            yield a, (x, y, (h + 90) % 360)
        else:
            dx, dy = DIRECTIONS[h]
            if a is Action.MOVE_BACK:
                dx, dy = -dx, -dy
            nxt = (x + dx, y + dy)
            if passable(nxt):
                yield a, (nxt[0], nxt[1], h)


def _goal_order(s: State) -> tuple[int, int, int]:
    return (s[1], s[0], s[2])


def bfs_plan(
    start: State, passable: Callable[[tuple[int, int]], bool], is_goal: Callable[[State], bool]
) -> list[Action] | None:
    """Shortest action list (excluding DONE) from ``start`` to any goal state.

    Among goals at minimal depth the one with lowest ``(y, x, heading)`` wins;
    parents are the first discovered in the fixed action order.
    """
    if is_goal(start):
        return []
    parent: dict[State, tuple[State, Action]] = {start: (start, Action.DONE)}
    layer = [start]
    while layer:
        nxt_layer = []
        goals = []
        for s in layer:
            for a, t in _successors(s, passable):
                if t in parent:
                    continue
                parent[t] = (s, a)
                nxt_layer.append(t)
                if is_goal(t):
                    goals.append(t)
        if goals:
            g = min(goals, key=_goal_order)
            path = []
            while g != start:
                g, a = parent[g]
                path.append(a)
            path.reverse()
            return path
        layer = nxt_layer
    return None


def pose_distances(env: GridEnvironment, start: AgentState) -> dict[State, int]:
    """Action-count distance from ``start`` to every reachable pose."""
    s0 = (start.x, start.y, start.heading)
    dist = {s0: 0}
    layer = [s0]
    d = 0
    while layer:
        d += 1
        nxt = []
        for s in layer:
            for _, t in _successors(s, env.is_free):
                if t not in dist:
                    dist[t] = d
                    nxt.append(t)
        layer = nxt
    return dist


def goal_states(env: GridEnvironment, task: TaskInstruction) -> set[State]:
    out = set()
    for x, y in env.free_cells():
        for h in HEADINGS:
            if is_complete(env, AgentState((x, y), h), task):
                out.add((x, y, h))
    return out


def _goal_test(env: GridEnvironment, task: TaskInstruction) -> Callable[[State], bool]:
    goals = goal_states(env, task)
    return goals.__contains__


def shortest_path_cost(env: GridEnvironment, start: AgentState, task: TaskInstruction) -> int | None:
    """Minimal action count (moves, rotations and the final DONE); ``None`` if unreachable."""
    plan = bfs_plan((start.x, start.y, start.heading), env.is_free, _goal_test(env, task))
    return None if plan is None else len(plan) + 1


def optimal_plan(env: GridEnvironment, start: AgentState, task: TaskInstruction) -> list[Action] | None:
    plan = bfs_plan((start.x, start.y, start.heading), env.is_free, _goal_test(env, task))
    return None if plan is None else plan + [Action.DONE]


# -- planner policies -----------------------------------------------------------------

def _follow_pending(ctx: PlannerContext, pose: AgentState) -> Action | None:
    if ctx.pending and ctx.expected == pose:
        a = ctx.pending.pop(0)
        ctx.expected = None if not ctx.pending else _predict(ctx, pose, a)
        return a
    return None


def _predict(ctx: PlannerContext, pose: AgentState, a: Action) -> AgentState:
    if a is Action.ROTATE_LEFT:
        return AgentState(pose.position, (pose.heading - 90) % 360)
    if a is Action.ROTATE_RIGHT:
        return AgentState(pose.position, (pose.heading + 90) % 360)
    dx, dy = DIRECTIONS[pose.heading]
    if a is Action.MOVE_BACK:
        dx, dy = -dx, -dy
    return AgentState((pose.x + dx, pose.y + dy), pose.heading)


def _set_plan(ctx: PlannerContext, pose: AgentState, plan: Sequence[Action], commit) -> Action:
    ctx.pending = list(plan)
    ctx.commit = commit
    ctx.expected = pose
    return _follow_pending(ctx, pose)


def _oracle_action(ctx: PlannerContext, obs: Observation, task: TaskInstruction) -> Action:
    env = ctx.env
    pose = obs.agent_pose
    if is_complete(env, pose, task):
        ctx.reset_plan()
        return Action.DONE
    if ctx.commit == ("task", task):
        a = _follow_pending(ctx, pose)
        if a is not None:
            return a
    plan = bfs_plan((pose.x, pose.y, pose.heading), env.is_free, _goal_test(env, task))
    if not plan:
        ctx.reset_plan()
        return Action.DONE
    return _set_plan(ctx, pose, plan, ("task", task))


def _sees_completion(ctx: PlannerContext, obs: Observation, task: TaskInstruction) -> bool:
    pose = obs.agent_pose
    cond = task.condition
    for pos, cat in ctx.known_objects.items():
        if cat != task.target_category:
            continue
        if not satisfies(pose.position, pose.heading, pos, cond):
            continue
        if cond.requires_line_of_sight and pos not in obs.visible_positions:
            continue
        return True
    return False


def _believed_goals(ctx: PlannerContext, task: TaskInstruction) -> set[State]:
    cond = task.condition
    r = int(math.floor(cond.max_distance + 1e-9))
    out = set()
    for (tx, ty), cat in ctx.known_objects.items():
        if cat != task.target_category:
            continue
        for y in range(ty - r, ty + r + 1):
            for x in range(tx - r, tx + r + 1):
                if not ctx.known_free((x, y)):
                    continue
                for h in HEADINGS:
                    if (x, y, h) in ctx.failed_goals:
                        continue
                    if not satisfies((x, y), h, (tx, ty), cond):
                        continue
                    if cond.requires_line_of_sight and any(
                        ctx.cell((x + ox, y + oy)) == WALL for ox, oy in sight_line(tx - x, ty - y)
                    ):
                        continue
                    out.add((x, y, h))
    return out


def _reachable_cells(ctx: PlannerContext, origin: tuple[int, int]) -> list[tuple[int, int]]:
    seen = {origin}
    order = [origin]
    i = 0
    while i < len(order):
        x, y = order[i]
        i += 1
        for dx, dy in DIRECTIONS.values():
            n = (x + dx, y + dy)
            if n not in seen and ctx.known_free(n):
                seen.add(n)
                order.append(n)
    return order


def _unknown_neighbours(ctx: PlannerContext, cell: tuple[int, int]) -> list[int]:
    """Headings from ``cell`` that face an in-bounds unknown cell."""
    out = []
    for h in HEADINGS:
        dx, dy = DIRECTIONS[h]
        nx, ny = cell[0] + dx, cell[1] + dy
        if 0 <= nx < ctx.width and 0 <= ny < ctx.height and ctx.belief[ny * ctx.width + nx] == UNKNOWN:
            out.append(h)
    return out


def _mix(key: int, *parts: int) -> int:
    digest = hashlib.blake2b(repr((key,) + parts).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _choose_frontier(ctx: PlannerContext, pose: AgentState) -> tuple[tuple[int, int], list[int]] | None:
    frontiers = []
    for cell in _reachable_cells(ctx, pose.position):
        hs = _unknown_neighbours(ctx, cell)
        if hs:
            d = math.hypot(cell[0] - pose.x, cell[1] - pose.y)
            frontiers.append((d, cell, hs))
    if not frontiers:
        return None
    if ctx.planner is PlannerId.SCENE_SENSITIVE:
        # everything within one cell of the nearest counts as a tie; the scene decides
        dmin = min(f[0] for f in frontiers)
        ties = [f for f in frontiers if f[0] <= dmin + 1.0 + 1e-9]
        _, cell, hs = min(ties, key=lambda f: _mix(ctx.scene_key, f[1][0], f[1][1]))
        hs = sorted(hs, key=lambda h: _mix(ctx.scene_key, cell[0], cell[1], h))
        return cell, hs
    _, cell, hs = min(frontiers, key=lambda f: (f[0], f[1][1], f[1][0]))
    return cell, hs


def _frontier_action(ctx: PlannerContext, pose: AgentState) -> Action | None:
    if ctx.commit is not None and ctx.commit[0] == "frontier":
        cell, h = ctx.commit[1]
        dx, dy = DIRECTIONS[h]
        tx, ty = cell[0] + dx, cell[1] + dy
        if ctx.belief[ty * ctx.width + tx] == UNKNOWN:
            a = _follow_pending(ctx, pose)
            if a is not None:
                return a
    choice = _choose_frontier(ctx, pose)
    if choice is None:
        return None
    cell, hs = choice
    targets = {(cell[0], cell[1], h) for h in hs}
    plan = bfs_plan((pose.x, pose.y, pose.heading), ctx.known_free, targets.__contains__)
    if not plan:
        return None
    # commit to whichever heading the plan ends on
    end = pose
    for a in plan:
        end = _predict(ctx, end, a)
    return _set_plan(ctx, pose, plan, ("frontier", (cell, end.heading)))


def _sweep_action(ctx: PlannerContext, pose: AgentState) -> Action | None:
    """Fallback once no frontier remains: visit the nearest never-visited pose."""
    if ctx.commit is not None and ctx.commit[0] == "sweep":
        if ctx.pose_visits.get(ctx.commit[1], 0) == 0:
            a = _follow_pending(ctx, pose)
            if a is not None:
                return a
    unvisited = lambda s: ctx.pose_visits.get(s, 0) == 0  # noqa: E731
    plan = bfs_plan((pose.x, pose.y, pose.heading), ctx.known_free, unvisited)
    if not plan:
        return None
    end = pose
    for a in plan:
        end = _predict(ctx, end, a)
    return _set_plan(ctx, pose, plan, ("sweep", (end.x, end.y, end.heading)))


def _right_hand_action(ctx: PlannerContext, pose: AgentState) -> Action | None:
    if ctx.commit is not None and ctx.commit[0] == "wall":
        a = _follow_pending(ctx, pose)
        if a is not None:
            return a
    if ctx.pose_visits.get((pose.x, pose.y, pose.heading), 0) > 1:
        return None
    right = (pose.heading + 90) % 360
    rx, ry = DIRECTIONS[right]
    fx, fy = DIRECTIONS[pose.heading]
    if ctx.known_free((pose.x + rx, pose.y + ry)):
        return _set_plan(ctx, pose, [Action.ROTATE_RIGHT, Action.MOVE_AHEAD], ("wall", None))
    if ctx.known_free((pose.x + fx, pose.y + fy)):
        ctx.reset_plan()
        return Action.MOVE_AHEAD
    ctx.reset_plan()
    return Action.ROTATE_LEFT


def _flawed_action(ctx: PlannerContext, obs: Observation, task: TaskInstruction) -> Action:
    pose = obs.agent_pose
    if _sees_completion(ctx, obs, task):
        ctx.reset_plan()
        return Action.DONE

    goals = _believed_goals(ctx, task)
    key = (pose.x, pose.y, pose.heading)
    if key in goals:
        # believed goal that did not pan out; never try it again
        ctx.failed_goals.add(key)
        goals.discard(key)
    if goals:
        if ctx.commit is not None and ctx.commit[0] == "target" and ctx.commit[1] in goals:
            a = _follow_pending(ctx, pose)
            if a is not None:
                return a
        plan = bfs_plan(key, ctx.known_free, goals.__contains__)
        if plan:
            end = pose
            for a in plan:
                end = _predict(ctx, end, a)
            return _set_plan(ctx, pose, plan, ("target", (end.x, end.y, end.heading)))

    a = None
    if ctx.planner is PlannerId.WALL_BIASED:
        a = _right_hand_action(ctx, pose)
    if a is None:
        a = _frontier_action(ctx, pose)
    if a is None:
        a = _sweep_action(ctx, pose)
    if a is None:
        ctx.reset_plan()
        return Action.DONE
    return a


def next_action(
    planner: PlannerId, ctx: PlannerContext, obs: Observation, task: TaskInstruction
) -> tuple[Action, PlannerContext]:
    """One policy step.  ``ctx`` is updated in place and returned."""
    if planner is PlannerId.ORACLE_OPTIMAL:
        if ctx.env is None:
            raise ValueError("oracle context carries no map")
        return _oracle_action(ctx, obs, task), ctx
    ctx.observe(obs)
    return _flawed_action(ctx, obs, task), ctx


# -- episodes ---------------------------------------------------------------------------

@dataclass
class Rollout:
    actions: list[Action]
    poses: list[AgentState]
    observations: list[Observation]
    termination: Termination | None
    ctx: PlannerContext


def rollout(
    planner: PlannerId,
    env: GridEnvironment,
    task: TaskInstruction,
    start: AgentState,
    ctx: PlannerContext,
    budget: int,
    sensing_range: float | None = None,
    stop: Callable[[AgentState], bool] | None = None,
) -> Rollout:
    """Run the observe/act/step loop for at most ``budget`` actions.

    ``stop`` ends the loop before acting (termination ``None``); a DONE from the
    planner while ``stop`` is set also ends it without being recorded.
    """
    state = start
    actions: list[Action] = []
    poses = [start]
    observations: list[Observation] = []
    fov = task.condition.fov_degrees
    for _ in range(budget):
        if stop is not None and stop(state):
            return Rollout(actions, poses, observations, None, ctx)
        obs = observe(env, state, fov, sensing_range)
        observations.append(obs)
        a, ctx = next_action(planner, ctx, obs, task)
        if a is Action.DONE:
            if stop is not None:
                return Rollout(actions, poses, observations, None, ctx)
            actions.append(a)
            poses.append(state)
            done_ok = is_complete(env, state, task)
            term = Termination.COMPLETED if done_ok else Termination.DECLARED_DONE_UNSATISFIED
            return Rollout(actions, poses, observations, term, ctx)
        state = step(env, state, a)
        actions.append(a)
        poses.append(state)
    if stop is not None:
        return Rollout(actions, poses, observations, None, ctx)
    return Rollout(actions, poses, observations, Termination.STEP_BUDGET_EXHAUSTED, ctx)


def finish_episode(
    planner: PlannerId,
    seed: int,
    actions: Sequence[Action],
    poses: Sequence[AgentState],
    initial_observation: Observation,
    termination: Termination,
) -> EpisodeResult:
    traj = Trajectory(tuple(actions), tuple(poses))
    return EpisodeResult(
        trajectory=traj,
        success=termination is Termination.COMPLETED,
        steps=len(traj.actions),
        initial_observation=initial_observation,
        termination=termination,
        planner=planner,
        seed=seed,
    )


def execute_episode(
    planner: PlannerId,
    env: GridEnvironment,
    task: TaskInstruction,
    start: AgentState,
    max_steps: int,
    seed: int = 0,
    sensing_range: float | None = None,
) -> EpisodeResult:
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    ctx = make_context(planner, env, seed)
    run = rollout(planner, env, task, start, ctx, max_steps, sensing_range)
    return finish_episode(planner, seed, run.actions, run.poses, run.observations[0], run.termination)
