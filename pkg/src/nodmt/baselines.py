"""Comparison methods: two property checks and two classic metamorphic relations."""
from __future__ import annotations

import enum
import math
import random
from collections.abc import Sequence
from dataclasses import replace

from .detector import (
    CostModel,
    DetectionOutcome,
    Severity,
    TaskExecutionFailed,
    ViolationRecord,
    compare_costs,
    compute_cost,
    detect_violation,
)
from .gridworld import Transform, derive_seed, transform_case
from .metamorphic import SourceCase
from .planners import EpisodeResult, PlannerId, execute_episode, shortest_path_cost


class BaselineId(str, enum.Enum):
    PBT_NR = "PBT_NR"
    PBT_SP = "PBT_SP"
    MT_OBSTACLE = "MT_OBSTACLE"
    MT_TRANSFORM = "MT_TRANSFORM"


class PlacementError(RuntimeError):
    pass


def cell_visits(ep: EpisodeResult) -> dict[tuple[int, int], int]:
    """Entries into each cell; turning in place does not count as a new visit."""
    counts: dict[tuple[int, int], int] = {}
    prev = None
    for pose in ep.trajectory.poses:
        if pose.position != prev:
            counts[pose.position] = counts.get(pose.position, 0) + 1
        prev = pose.position
    return counts


def pbt_nr_check(ep: EpisodeResult, max_visits: int = 2) -> bool:
    if not ep.success:
        raise ValueError("revisit check needs a successful episode")
    return any(c > max_visits for c in cell_visits(ep).values())


def default_sp_indices(tau: int) -> list[int]:
    raw = [math.ceil(tau / 4), math.ceil(tau / 2), math.ceil(3 * tau / 4)]
    return sorted({i for i in raw if 0 < i < tau})


def pbt_sp_run(
    planner: PlannerId,
    src: SourceCase,
    indices: Sequence[int] | None,
    max_steps: int,
    seed: int = 0,
    model: CostModel | None = None,
    sensing_range: float | None = None,
) -> list[tuple[int, bool, EpisodeResult]]:
    """Restart from intermediate source poses; a sub-run that beats the
    corresponding source suffix is a violation."""
    traj = src.episode.trajectory
    tau = len(traj.actions)
    if indices is None:
        indices = default_sp_indices(tau)
    out = []
    for i in indices:
        if not (0 < i < tau):
            raise IndexError(f"sub-problem index {i} outside (0, {tau})")
        sub = execute_episode(planner, src.env, src.task, traj.poses[i], max_steps, seed, sensing_range)
        suffix = compute_cost(replace(traj, actions=traj.actions[i:], poses=traj.poses[i:]), model)
        violated = sub.success and compute_cost(sub.trajectory, model) < suffix
        out.append((i, violated, sub))
    return out


def pbt_sp_outcome(
    planner, src: SourceCase, max_steps: int, seed: int = 0, model=None, sensing_range=None, indices=None
) -> DetectionOutcome:
    runs = pbt_sp_run(planner, src, indices, max_steps, seed, model, sensing_range)
    traj = src.episode.trajectory
    c_s = compute_cost(traj, model)
    best = None
    for i, _, sub in runs:
        if not sub.success:
            continue
        prefix = compute_cost(replace(traj, actions=traj.actions[:i], poses=traj.poses[: i + 1]), model)
        c_f = prefix + compute_cost(sub.trajectory, model)
        if best is None or c_f < best[1]:
            best = (i, c_f)
    if best is None:
        return TaskExecutionFailed("followup")
    violated, vs, sev = compare_costs(c_s, best[1])
    return ViolationRecord(
        BaselineId.PBT_SP.value, c_s, best[1], violated, vs, sev, {"kind": "PBT_SP", "indices": [r[0] for r in runs], "best_index": best[0]}
    )


def pbt_nr_outcome(src: SourceCase, model: CostModel | None = None) -> ViolationRecord:
    violated = pbt_nr_check(src.episode)
    visits = cell_visits(src.episode)
    worst = max(visits.values()) if visits else 0
    return ViolationRecord(
        BaselineId.PBT_NR.value,
        compute_cost(src.episode.trajectory, model),
        None,
        violated,
        0.0,
        Severity.NONE,
        {"kind": "PBT_NR", "max_visits": worst},
    )


def place_obstacles(src: SourceCase, n_obstacles: int, seed: int, max_retries: int = 50):
    """Add walls off the source trajectory, keeping the task solvable."""
    if n_obstacles < 1:
        raise ValueError("n_obstacles must be at least 1")
    env = src.env
    on_path = {p.position for p in src.episode.trajectory.poses}
    blocked = on_path | set(env.object_at)
    pool = [c for c in env.free_cells() if c not in blocked]
    if len(pool) < n_obstacles:
        raise PlacementError("not enough off-path free cells for obstacles")
    for attempt in range(max_retries):
        rng = random.Random(derive_seed("obstacles", seed, attempt))
        cells = sorted(rng.sample(pool, n_obstacles), key=lambda p: (p[1], p[0]))
        occ = list(env.occupancy)
        for x, y in cells:
            occ[y * env.width + x] = 1
        new_env = replace(env, occupancy=tuple(occ))
        if shortest_path_cost(new_env, src.start, src.task) is not None:
            return new_env, cells
    raise PlacementError(f"no feasible obstacle placement for seed={seed}")


def mt_obstacle_run(
    planner: PlannerId,
    src: SourceCase,
    n_obstacles: int,
    seed: int,
    max_steps: int,
    model: CostModel | None = None,
    sensing_range: float | None = None,
) -> DetectionOutcome:
    new_env, cells = place_obstacles(src, n_obstacles, seed)
    fu = execute_episode(planner, new_env, src.task, src.start, max_steps, src.episode.seed, sensing_range)
    return detect_violation(
        src.episode, fu, BaselineId.MT_OBSTACLE.value, model, {"kind": "MT_OBSTACLE", "cells": [list(c) for c in cells]}
    )


def mt_transform_run(
    planner: PlannerId,
    src: SourceCase,
    transform: Transform,
    max_steps: int,
    seed: int = 0,
    model: CostModel | None = None,
    sensing_range: float | None = None,
) -> DetectionOutcome:
    env, start = transform_case(src.env, src.start, transform)
    fu = execute_episode(planner, env, src.task, start, max_steps, seed, sensing_range)
    return detect_violation(
        src.episode, fu, BaselineId.MT_TRANSFORM.value, model, {"kind": "MT_TRANSFORM", "transform": transform.value}
    )
