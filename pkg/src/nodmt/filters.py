"""Select one follow-up per relation from its candidate pool."""
from __future__ import annotations

import json
import math
import random
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gridworld import Action, CompletionCondition, GridEnvironment, cosine_similarity, scene_feature_vector
from .metamorphic import FollowUpCase, MRKind
from .planners import Trajectory

ACTION_ORDER = tuple(Action)


@dataclass(frozen=True)
class SemanticDistanceTable:
    actions: tuple[Action, ...]
    matrix: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        n = len(self.actions)
        if len(self.matrix) != n or any(len(r) != n for r in self.matrix):
            raise ValueError("semantic distance matrix must be square over the action list")
        for i in range(n):
            if self.matrix[i][i] != 0:
                raise ValueError("diagonal must be zero")
            for j in range(n):
                if self.matrix[i][j] < 0:
                    raise ValueError("distances must be non-negative")
                if self.matrix[i][j] != self.matrix[j][i]:
                    raise ValueError("matrix must be symmetric")
        top = max(max(r) for r in self.matrix)
        for a, b in ((Action.MOVE_AHEAD, Action.MOVE_BACK), (Action.ROTATE_LEFT, Action.ROTATE_RIGHT)):
            if a in self.actions and b in self.actions and self(a, b) != top:
                raise ValueError(f"opposite pair {a.value}/{b.value} must carry the maximal distance")

    def __call__(self, a: Action, b: Action) -> float:
        return self.matrix[self.actions.index(a)][self.actions.index(b)]

    @classmethod
    def default(cls) -> "SemanticDistanceTable":
        return _DEFAULT_TABLE

    @classmethod
    def from_json(cls, path: str | Path) -> "SemanticDistanceTable":
        data = json.loads(Path(path).read_text())
        return cls(tuple(Action(a) for a in data["actions"]), tuple(tuple(float(v) for v in r) for r in data["matrix"]))

    def to_json(self) -> str:
        return json.dumps({"actions": [a.value for a in self.actions], "matrix": [list(r) for r in self.matrix]})


def _build_default() -> SemanticDistanceTable:
    opposites = {
        frozenset((Action.MOVE_AHEAD, Action.MOVE_BACK)),
        frozenset((Action.ROTATE_LEFT, Action.ROTATE_RIGHT)),
    }
    rows = []
    for a in ACTION_ORDER:
        row = []
        for b in ACTION_ORDER:
            if a is b:
                d = 0.0
            elif frozenset((a, b)) in opposites:
                d = 1.0
            elif Action.DONE in (a, b):
                d = 0.5
            else:  # rotation vs translation
                d = 0.6
            row.append(d)
        rows.append(tuple(row))
    return SemanticDistanceTable(ACTION_ORDER, tuple(rows))


_DEFAULT_TABLE = _build_default()


def _require(candidates: Sequence[FollowUpCase], kind: MRKind) -> None:
    if not candidates:
        raise ValueError("candidate list is empty")
    for c in candidates:
        if c.kind is not kind:
            raise ValueError(f"expected {kind.value} candidates, got {c.kind.value}")


def point_segment_distance(p, a, b) -> float:
    px, py = p
    ax, ay = a
    bx, by = b
    vx, vy = bx - ax, by - ay
    denom = vx * vx + vy * vy
    if denom == 0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * vx + (py - ay) * vy) / denom))
    return math.hypot(px - (ax + t * vx), py - (ay + t * vy))


def distance_to_path(point, path: Sequence[tuple[float, float]]) -> float:
    """Minimum distance from ``point`` to the polyline through ``path``."""
    if len(path) == 1:
        return math.hypot(point[0] - path[0][0], point[1] - path[0][1])
    return min(point_segment_distance(point, path[i], path[i + 1]) for i in range(len(path) - 1))


def select_position(
    candidates: Sequence[FollowUpCase], source_traj: Trajectory, path_mode: str = "polyline"
) -> FollowUpCase:
    _require(candidates, MRKind.POSITION)
    positions = [p.position for p in source_traj.poses]
    if path_mode == "chord":
        path = [positions[0], positions[-1]]
    elif path_mode == "polyline":
        # consecutive duplicates (rotations) add zero-length segments only
        path = [positions[0]] + [q for p, q in zip(positions, positions[1:]) if q != p]
    else:
        raise ValueError(f"unknown path mode {path_mode!r}")

    def score(c: FollowUpCase):
        tgt = c.payload.intermediate_target
        return (-distance_to_path(tgt.position, path), tgt.id)

    return min(candidates, key=score)


def select_action(
    candidates: Sequence[FollowUpCase], planned: Action, table: SemanticDistanceTable | None = None
) -> FollowUpCase:
    _require(candidates, MRKind.ACTION)
    table = table or SemanticDistanceTable.default()
    return min(
        candidates,
        key=lambda c: (-table(planned, c.payload.extraneous_action), ACTION_ORDER.index(c.payload.extraneous_action)),
    )


def refinement_divergence(original: CompletionCondition, refined: CompletionCondition) -> float:
    """Relative shrinkage summed over the continuous dimensions."""
    return abs(original.fov_degrees - refined.fov_degrees) / original.fov_degrees + abs(
        original.max_distance - refined.max_distance
    ) / original.max_distance


def select_condition(candidates: Sequence[FollowUpCase], original: CompletionCondition) -> FollowUpCase:
    _require(candidates, MRKind.CONDITION)
    return min(
        candidates,
        key=lambda c: (
            -round(refinement_divergence(original, c.payload.refined), 12),
            c.payload.refined.fov_degrees,
            c.payload.refined.max_distance,
        ),
    )


def select_scene(candidates: Sequence[FollowUpCase], source_env: GridEnvironment) -> FollowUpCase:
    _require(candidates, MRKind.SCENE)
    ref = scene_feature_vector(source_env)
    sims = [cosine_similarity(ref, scene_feature_vector(c.payload.mutated_env)) for c in candidates]
    best = int(np.argmin(sims))  # first minimum wins
    return candidates[best]


def select_random(candidates: Sequence[FollowUpCase], seed: int) -> FollowUpCase:
    if not candidates:
        raise ValueError("candidate list is empty")
    return candidates[random.Random(seed).randrange(len(candidates))]


def select_diverse(
    candidates: Sequence[FollowUpCase],
    kind: MRKind,
    source_traj: Trajectory,
    original: CompletionCondition,
    source_env: GridEnvironment,
    table: SemanticDistanceTable | None = None,
    path_mode: str = "polyline",
) -> FollowUpCase:
    """Dispatch to the selector for ``kind``."""
    if kind is MRKind.POSITION:
        return select_position(candidates, source_traj, path_mode)
    if kind is MRKind.ACTION:
        t = candidates[0].payload.substitution_index
        return select_action(candidates, source_traj.actions[t], table)
    if kind is MRKind.CONDITION:
        return select_condition(candidates, original)
    return select_scene(candidates, source_env)
