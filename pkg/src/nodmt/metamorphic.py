"""Follow-up case generation for the four relations and their execution protocols."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

from .gridworld import (
    MOTION_ACTIONS,
    Action,
    AgentState,
    CompletionCondition,
    GridEnvironment,
    SceneMutation,
    SceneObject,
    TaskInstruction,
    derive_seed,
    is_complete,
    mutate_scene,
    observe,
    step,
)
from .planners import (
    EpisodeResult,
    PlannerId,
    Termination,
    context_from_history,
    execute_episode,
    finish_episode,
    make_context,
    rollout,
)

FOV_FACTORS = (0.75, 0.80, 0.85, 0.90, 0.95)


class MRKind(str, enum.Enum):
    POSITION = "POSITION"
    ACTION = "ACTION"
    CONDITION = "CONDITION"
    SCENE = "SCENE"


class NoCandidatesError(ValueError):
    pass


class SequenceTooShortError(ValueError):
    pass


@dataclass(frozen=True)
class PositionPayload:
    intermediate_target: SceneObject
    detour_steps: int


@dataclass(frozen=True)
class ActionPayload:
    substitution_index: int
    extraneous_action: Action


@dataclass(frozen=True)
class ConditionPayload:
    refined: CompletionCondition


@dataclass(frozen=True)
class ScenePayload:
    mutated_env: GridEnvironment
    mutation: SceneMutation
    seed: int


Payload = Union[PositionPayload, ActionPayload, ConditionPayload, ScenePayload]


@dataclass(frozen=True)
class FollowUpCase:
    kind: MRKind
    payload: Payload

    def to_dict(self) -> dict:
        p = self.payload
        if self.kind is MRKind.POSITION:
            o = p.intermediate_target
            body = {
                "intermediate_target": {"id": o.id, "category": o.category, "x": o.position[0], "y": o.position[1]},
                "detour_steps": p.detour_steps,
            }
        elif self.kind is MRKind.ACTION:
            body = {"substitution_index": p.substitution_index, "extraneous_action": p.extraneous_action.value}
        elif self.kind is MRKind.CONDITION:
            body = {"refined": p.refined.to_dict()}
        else:
            body = {"mutation": p.mutation.value, "seed": p.seed, "mutated_env": p.mutated_env.to_dict()}
        return {"kind": self.kind.value, **body}

    @classmethod
    def from_dict(cls, d: dict) -> "FollowUpCase":
        kind = MRKind(d["kind"])
        if kind is MRKind.POSITION:
            o = d["intermediate_target"]
            payload = PositionPayload(SceneObject(o["id"], o["category"], (o["x"], o["y"])), d["detour_steps"])
        elif kind is MRKind.ACTION:
            payload = ActionPayload(d["substitution_index"], Action(d["extraneous_action"]))
        elif kind is MRKind.CONDITION:
            payload = ConditionPayload(CompletionCondition.from_dict(d["refined"]))
        else:
            payload = ScenePayload(
                GridEnvironment.from_dict(d["mutated_env"]), SceneMutation(d["mutation"]), d["seed"]
            )
        return cls(kind, payload)


@dataclass(frozen=True)
class SourceCase:
    env: GridEnvironment
    task: TaskInstruction
    start: AgentState
    episode: EpisodeResult
    source_id: str = ""

    def __post_init__(self):
        if not self.episode.success:
            raise ValueError("a source case needs a successful episode")

    @property
    def tau(self) -> int:
        return self.episode.steps


def gen_position_candidates(src: SourceCase) -> list[FollowUpCase]:
    eta = math.ceil(src.tau / 4)
    out = [
        FollowUpCase(MRKind.POSITION, PositionPayload(o, eta))
        for o in src.env.objects
        if o.category != src.task.target_category
    ]
    if not out:
        raise NoCandidatesError("environment holds only the target category")
    return out


def gen_action_candidates(src: SourceCase, index: int | None = None) -> list[FollowUpCase]:
    tau = src.tau
    if tau < 3:
        raise SequenceTooShortError(f"action substitution needs at least 3 actions, got {tau}")
    t = tau // 2 if index is None else index
    if not (1 <= t <= tau - 1):
        raise SequenceTooShortError(f"substitution index {t} outside [1, {tau - 1}]")
    planned = src.episode.trajectory.actions[t]
    return [
        FollowUpCase(MRKind.ACTION, ActionPayload(t, a))
        for a in MOTION_ACTIONS
        if a is not planned
    ]


def gen_condition_candidates(
    src: SourceCase, factors=FOV_FACTORS, refine_distance: bool = False
) -> list[FollowUpCase]:
    cond = src.task.condition
    out = []
    for f in factors:
        if not (0.0 < f < 1.0):
            raise ValueError(f"refinement factor {f} is not a strict refinement")
        out.append(
            FollowUpCase(
                MRKind.CONDITION,
                ConditionPayload(CompletionCondition(cond.fov_degrees * f, cond.max_distance, cond.requires_line_of_sight)),
            )
        )
    if refine_distance:
        for f in factors:
            out.append(
                FollowUpCase(
                    MRKind.CONDITION,
                    ConditionPayload(CompletionCondition(cond.fov_degrees, cond.max_distance * f, cond.requires_line_of_sight)),
                )
            )
    return out


def gen_scene_candidates(src: SourceCase, n: int, seed: int) -> list[FollowUpCase]:
    if n < 1:
        raise ValueError("n must be at least 1")
    out = []
    for i in range(n):
        mutation = SceneMutation.MATERIALS if i % 2 == 0 else SceneMutation.LIGHTING
        s = derive_seed("scene-candidate", seed, i)
        out.append(FollowUpCase(MRKind.SCENE, ScenePayload(mutate_scene(src.env, mutation, s), mutation, s)))
    return out


def generate_candidates(src: SourceCase, kind: MRKind, seed: int, n_scene: int = 6, refine_distance: bool = False):
    if kind is MRKind.POSITION:
        return gen_position_candidates(src)
    if kind is MRKind.ACTION:
        return gen_action_candidates(src)
    if kind is MRKind.CONDITION:
        return gen_condition_candidates(src, refine_distance=refine_distance)
    return gen_scene_candidates(src, n_scene, seed)


def _run_position(planner, src, payload: PositionPayload, max_steps, seed, sensing_range):
    env = src.env
    sub_task = TaskInstruction(payload.intermediate_target.category, src.task.condition)
    ctx = make_context(planner, env, seed)
    phase1 = rollout(
        planner,
        env,
        sub_task,
        src.start,
        ctx,
        min(payload.detour_steps, max_steps),
        sensing_range,
        stop=lambda s: is_complete(env, s, sub_task),
    )
    ctx = phase1.ctx
    ctx.reset_plan()
    mid = phase1.poses[-1]
    remaining = max_steps - len(phase1.actions)
    initial = phase1.observations[0] if phase1.observations else observe(env, src.start, src.task.condition.fov_degrees, sensing_range)
    if remaining < 1:
        return finish_episode(planner, seed, phase1.actions, phase1.poses, initial, Termination.STEP_BUDGET_EXHAUSTED)
    phase2 = rollout(planner, env, src.task, mid, ctx, remaining, sensing_range)
    actions = phase1.actions + phase2.actions
    poses = phase1.poses + phase2.poses[1:]
    return finish_episode(planner, seed, actions, poses, initial, phase2.termination)


def _run_action(planner, src, payload: ActionPayload, max_steps, seed, sensing_range):
    env, task = src.env, src.task
    fov = task.condition.fov_degrees
    t = payload.substitution_index
    source_actions = src.episode.trajectory.actions
    state = src.start
    actions: list[Action] = []
    poses = [state]
    history = []
    for a in source_actions[:t]:
        history.append(observe(env, state, fov, sensing_range))
        state = step(env, state, a)
        actions.append(a)
        poses.append(state)
    history.append(observe(env, state, fov, sensing_range))
    state = step(env, state, payload.extraneous_action)
    actions.append(payload.extraneous_action)
    poses.append(state)
    remaining = max_steps - len(actions)
    if remaining < 1:
        return finish_episode(planner, seed, actions, poses, history[0], Termination.STEP_BUDGET_EXHAUSTED)
    ctx = context_from_history(planner, env, history, seed)
    suffix = rollout(planner, env, task, state, ctx, remaining, sensing_range)
    return finish_episode(planner, seed, actions + suffix.actions, poses + suffix.poses[1:], history[0], suffix.termination)


def run_followup(
    planner: PlannerId,
    src: SourceCase,
    fu: FollowUpCase,
    max_steps: int,
    seed: int = 0,
    sensing_range: float | None = None,
) -> EpisodeResult:
    """Execute a follow-up case under its relation's protocol."""
    if fu.kind is MRKind.POSITION:
        return _run_position(planner, src, fu.payload, max_steps, seed, sensing_range)
    if fu.kind is MRKind.ACTION:
        return _run_action(planner, src, fu.payload, max_steps, seed, sensing_range)
    if fu.kind is MRKind.CONDITION:
        task = TaskInstruction(src.task.target_category, fu.payload.refined)
        return execute_episode(planner, src.env, task, src.start, max_steps, seed, sensing_range)
    return execute_episode(planner, fu.payload.mutated_env, src.task, src.start, max_steps, seed, sensing_range)
