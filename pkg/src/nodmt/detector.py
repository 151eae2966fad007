"""Source/follow-up cost comparison and severity grading."""
from __future__ import annotations

import enum
import json
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any, Union

from .gridworld import Action
from .planners import EpisodeResult, Trajectory

SEVERE_ABOVE = 0.20
MODERATE_ABOVE = 0.10


class Severity(str, enum.Enum):
    NONE = "NONE"
    SLIGHT = "SLIGHT"
    MODERATE = "MODERATE"
    SEVERE = "SEVERE"


@dataclass(frozen=True)
class CostModel:
    """``weights`` is None for plain step counting."""

    weights: Mapping[Action, float] | None = None

    def __post_init__(self):
        if self.weights is None:
            return
        for a in Action:
            if a not in self.weights:
                raise ValueError(f"weighted cost model lacks a weight for {a.value}")
            if self.weights[a] < 0:
                raise ValueError("weights must be non-negative")
        for a in (Action.MOVE_AHEAD, Action.MOVE_BACK, Action.ROTATE_LEFT, Action.ROTATE_RIGHT):
            if self.weights[a] <= 0:
                raise ValueError("motion actions need strictly positive weights")

    @property
    def name(self) -> str:
        return "STEP_COUNT" if self.weights is None else "WEIGHTED"

    @classmethod
    def step_count(cls) -> "CostModel":
        return cls()

    @classmethod
    def weighted(cls, move: float, rotate: float, done: float) -> "CostModel":
        return cls(
            {
                Action.MOVE_AHEAD: move,
                Action.MOVE_BACK: move,
                Action.ROTATE_LEFT: rotate,
                Action.ROTATE_RIGHT: rotate,
                Action.DONE: done,
            }
        )


def compute_cost(traj: Trajectory, model: CostModel | None = None) -> float:
    if model is None or model.weights is None:
        return float(len(traj.actions))
    return float(sum(model.weights[a] for a in traj.actions))


def classify_severity(vs: float) -> Severity:
    if not (0.0 < vs <= 1.0):
        raise ValueError(f"violation severity {vs} outside (0, 1]")
    if vs > SEVERE_ABOVE:
        return Severity.SEVERE
    if vs > MODERATE_ABOVE:
        return Severity.MODERATE
    return Severity.SLIGHT


@dataclass(frozen=True)
class ViolationRecord:
    mr: str
    source_cost: float
    followup_cost: float | None
    violated: bool
    vs: float
    severity: Severity
    followup: dict | None = None
    source_id: str = ""
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "source_id": self.source_id,
            "mr": self.mr,
            "c_s": self.source_cost,
            "c_f": self.followup_cost,
            "violated": self.violated,
            "vs": self.vs,
            "severity": self.severity.value,
            "followup": self.followup,
        }
        d.update(self.extra)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


@dataclass(frozen=True)
class TaskExecutionFailed:
    which: str  # "source" | "followup" | "both"


DetectionOutcome = Union[ViolationRecord, TaskExecutionFailed]


def compare_costs(c_s: float, c_f: float) -> tuple[bool, float, Severity]:
    """Strict ``c_f < c_s`` check; ties are not violations."""
    if c_f < c_s:
        vs = (c_s - c_f) / c_s
        return True, vs, classify_severity(vs)
    return False, 0.0, Severity.NONE


def detect_violation(
    src_ep: EpisodeResult,
    fu_ep: EpisodeResult,
    mr: str,
    model: CostModel | None = None,
    followup: dict | None = None,
    source_id: str = "",
) -> DetectionOutcome:
    if not src_ep.success or not fu_ep.success:
        which = "both" if not (src_ep.success or fu_ep.success) else ("source" if not src_ep.success else "followup")
        return TaskExecutionFailed(which)
    c_s = compute_cost(src_ep.trajectory, model)
    c_f = compute_cost(fu_ep.trajectory, model)
    violated, vs, sev = compare_costs(c_s, c_f)
    return ViolationRecord(getattr(mr, "value", mr), c_s, c_f, violated, vs, sev, followup, source_id)
