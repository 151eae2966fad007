"""Campaign orchestration: config, suite generation, the run matrix, persistence, reports."""
from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import logging
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from .baselines import BaselineId, PlacementError, mt_obstacle_run, mt_transform_run, pbt_nr_outcome, pbt_sp_outcome
from .detector import CostModel, Severity, TaskExecutionFailed, ViolationRecord, detect_violation
from .diversity import encode_view, violation_diversity
from .filters import select_diverse, select_random
from .gridworld import (
    Action,
    AgentState,
    CompletionCondition,
    GenerationParams,
    GridEnvironment,
    SceneObject,
    TaskInstruction,
    Transform,
    derive_seed,
    generate_environment,
)
from .metamorphic import (
    MRKind,
    NoCandidatesError,
    SequenceTooShortError,
    SourceCase,
    generate_candidates,
    run_followup,
)
from .planners import PlannerId, execute_episode, shortest_path_cost

log = logging.getLogger(__name__)

RECORDS_FILE = "records.jsonl"
SKIPS_FILE = "skips.jsonl"
CLUSTERS_FILE = "clusters.json"
REPORT_FILE = "report.json"
MANIFEST_FILE = "manifest.json"
CONFIG_FILE = "config.json"
SUITE_FILE = "suite.jsonl"

MIN_SOURCE_COST = 4


class ConfigError(ValueError):
    def __init__(self, message: str, field_name: str | None = None):
        super().__init__(message)
        self.field = field_name


class ComplexityClass(str, enum.Enum):
    SHORT = "SHORT"
    MEDIUM = "MEDIUM"
    LONG = "LONG"


@dataclass(frozen=True)
class CampaignConfig:
    seed: int
    N: int
    generation: GenerationParams = field(default_factory=GenerationParams)
    condition: CompletionCondition = field(default_factory=CompletionCondition)
    planners: tuple[PlannerId, ...] = tuple(PlannerId)
    mrs: tuple[MRKind, ...] = tuple(MRKind)
    filter_arms: str = "both"
    baselines: tuple[BaselineId, ...] = tuple(BaselineId)
    cost_model: CostModel = field(default_factory=CostModel)
    max_steps_multiplier: int = 20
    short_max: int = 15
    medium_max: int = 40
    k_max: int | None = None
    output_dir: str = "runs/default"
    n_scene_candidates: int = 6
    refine_distance: bool = False
    position_path: str = "polyline"
    n_obstacles: int = 3
    sensing_range: float | None = None
    diversity_pool: str = "per_mr"
    suite: str = "generated"

    @property
    def arms(self) -> tuple[str, ...]:
        return ("filtered", "random") if self.filter_arms == "both" else (self.filter_arms,)

    def to_dict(self) -> dict:
        g = self.generation
        cm: dict[str, Any] = {"kind": self.cost_model.name}
        if self.cost_model.weights is not None:
            cm["weights"] = {a.value: w for a, w in self.cost_model.weights.items()}
        return {
            "seed": self.seed,
            "N": self.N,
            "generation": {
                "width": g.width,
                "height": g.height,
                "wall_density": g.wall_density,
                "n_objects": g.n_objects,
            },
            "condition": self.condition.to_dict(),
            "planners": [p.value for p in self.planners],
            "mrs": [m.value for m in self.mrs],
            "filter_arms": self.filter_arms,
            "baselines": [b.value for b in self.baselines],
            "cost_model": cm,
            "max_steps_multiplier": self.max_steps_multiplier,
            "complexity": {"short_max": self.short_max, "medium_max": self.medium_max},
            "k_max": self.k_max,
            "output_dir": self.output_dir,
            "n_scene_candidates": self.n_scene_candidates,
            "refine_distance": self.refine_distance,
            "position_path": self.position_path,
            "n_obstacles": self.n_obstacles,
            "sensing_range": self.sensing_range,
            "diversity_pool": self.diversity_pool,
            "suite": self.suite,
        }

    def replace(self, **changes) -> "CampaignConfig":
        d = self.to_dict()
        d.update(changes)
        return config_from_dict(d)


_TOP_KEYS = {
    "seed", "N", "generation", "condition", "planners", "mrs", "filter_arms", "baselines", "cost_model",
    "max_steps_multiplier", "complexity", "k_max", "output_dir", "n_scene_candidates", "refine_distance",
    "position_path", "n_obstacles", "sensing_range", "diversity_pool", "suite",
}  # fmt: skip


def _check_keys(d: dict, allowed: set[str], where: str) -> None:
    for k in d:
        if k not in allowed:
            raise ConfigError(f"unknown config key {where}{k!r}", f"{where}{k}")


def _int(d: dict, key: str, default, where: str = "") -> int:
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}{key} must be an integer", where + key)
    return v


def _enum_list(d: dict, key: str, enum_cls, default):
    v = d.get(key)
    if v is None:
        return default
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{key} must be a non-empty list", key)
    try:
        return tuple(enum_cls(x) for x in v)
    except ValueError as e:
        raise ConfigError(f"{key}: {e}", key) from None


def config_from_dict(d: dict) -> CampaignConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(d, _TOP_KEYS, "")
    if "seed" not in d:
        raise ConfigError("missing required key 'seed'", "seed")
    if "N" not in d:
        raise ConfigError("missing required key 'N'", "N")
    seed = _int(d, "seed", None)
    if not (0 <= seed < 2**64):
        raise ConfigError("seed must be an unsigned 64-bit integer", "seed")
    n = _int(d, "N", None)
    if n < 1:
        raise ConfigError("N must be at least 1", "N")

    g = d.get("generation", {})
    _check_keys(g, {"width", "height", "wall_density", "n_objects"}, "generation.")
    try:
        gen = GenerationParams(
            _int(g, "width", 12, "generation."),
            _int(g, "height", 12, "generation."),
            float(g.get("wall_density", 0.2)),
            _int(g, "n_objects", 4, "generation."),
        )
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"generation: {e}", "generation") from None

    c = d.get("condition", {})
    _check_keys(c, {"fov_degrees", "max_distance", "requires_line_of_sight"}, "condition.")
    try:
        cond = CompletionCondition(
            float(c.get("fov_degrees", 90.0)),
            float(c.get("max_distance", 2.0)),
            bool(c.get("requires_line_of_sight", True)),
        )
    except ValueError as e:
        raise ConfigError(f"condition: {e}", "condition") from None

    arms = d.get("filter_arms", "both")
    if arms not in ("filtered", "random", "both"):
        raise ConfigError("filter_arms must be 'filtered', 'random' or 'both'", "filter_arms")

    cm = d.get("cost_model", {"kind": "STEP_COUNT"})
    _check_keys(cm, {"kind", "weights"}, "cost_model.")
    if cm.get("kind", "STEP_COUNT") == "STEP_COUNT":
        model = CostModel()
    elif cm.get("kind") == "WEIGHTED":
        try:
            model = CostModel({Action(k): float(v) for k, v in cm.get("weights", {}).items()})
        except ValueError as e:
            raise ConfigError(f"cost_model: {e}", "cost_model.weights") from None
    else:
        raise ConfigError("cost_model.kind must be STEP_COUNT or WEIGHTED", "cost_model.kind")

    mult = _int(d, "max_steps_multiplier", 20)
    if mult < 2:
        raise ConfigError("max_steps_multiplier must be at least 2", "max_steps_multiplier")

    cx = d.get("complexity", {})
    _check_keys(cx, {"short_max", "medium_max"}, "complexity.")
    short_max = _int(cx, "short_max", 15, "complexity.")
    medium_max = _int(cx, "medium_max", 40, "complexity.")
    if short_max >= medium_max:
        raise ConfigError("complexity.short_max must be below complexity.medium_max", "complexity.short_max")

    k_max = d.get("k_max")
    if k_max is not None and (isinstance(k_max, bool) or not isinstance(k_max, int) or k_max < 2):
        raise ConfigError("k_max must be null or an integer >= 2", "k_max")

    out = d.get("output_dir", "runs/default")
    if not isinstance(out, str) or not out:
        raise ConfigError("output_dir must be a non-empty string", "output_dir")

    n_scene = _int(d, "n_scene_candidates", 6)
    if n_scene < 1:
        raise ConfigError("n_scene_candidates must be at least 1", "n_scene_candidates")
    path_mode = d.get("position_path", "polyline")
    if path_mode not in ("polyline", "chord"):
        raise ConfigError("position_path must be 'polyline' or 'chord'", "position_path")
    n_obs = _int(d, "n_obstacles", 3)
    if n_obs < 1:
        raise ConfigError("n_obstacles must be at least 1", "n_obstacles")
    sr = d.get("sensing_range")
    if sr is not None and (isinstance(sr, bool) or not isinstance(sr, (int, float)) or sr <= 0):
        raise ConfigError("sensing_range must be null or positive", "sensing_range")
    pool = d.get("diversity_pool", "per_mr")
    if pool not in ("per_mr", "pooled"):
        raise ConfigError("diversity_pool must be 'per_mr' or 'pooled'", "diversity_pool")
    suite = d.get("suite", "generated")
    if suite not in ("generated", "fixtures"):
        raise ConfigError("suite must be 'generated' or 'fixtures'", "suite")
    refine = d.get("refine_distance", False)
    if not isinstance(refine, bool):
        raise ConfigError("refine_distance must be a boolean", "refine_distance")

    return CampaignConfig(
        seed=seed,
        N=n,
        generation=gen,
        condition=cond,
        planners=_enum_list(d, "planners", PlannerId, tuple(PlannerId)),
        mrs=_enum_list(d, "mrs", MRKind, tuple(MRKind)),
        filter_arms=arms,
        baselines=tuple(BaselineId(b) for b in d["baselines"]) if d.get("baselines") is not None else tuple(BaselineId),
        cost_model=model,
        max_steps_multiplier=mult,
        short_max=short_max,
        medium_max=medium_max,
        k_max=k_max,
        output_dir=out,
        n_scene_candidates=n_scene,
        refine_distance=refine,
        position_path=path_mode,
        n_obstacles=n_obs,
        sensing_range=None if sr is None else float(sr),
        diversity_pool=pool,
        suite=suite,
    )


def _reject_duplicates(pairs):
    seen = {}
    for k, v in pairs:
        if k in seen:
            raise ConfigError(f"duplicate config key {k!r}", k)
        seen[k] = v
    return seen


def _reject_constant(name):
    raise ConfigError(f"non-standard JSON constant {name}")


def parse_config(text: str, source: str = "<config>") -> CampaignConfig:
    try:
        data = json.loads(text, object_pairs_hook=_reject_duplicates, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}:{e.lineno}:{e.colno}: {e.msg}") from None
    return config_from_dict(data)


def load_config(path: str | Path) -> CampaignConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), str(path))


# -- suite -------------------------------------------------------------------------

def classify_complexity(oracle_cost: int, cfg: CampaignConfig) -> ComplexityClass:
    if oracle_cost < 1:
        raise ValueError("oracle cost must be at least 1")
    if oracle_cost <= cfg.short_max:
        return ComplexityClass.SHORT
    if oracle_cost <= cfg.medium_max:
        return ComplexityClass.MEDIUM
    return ComplexityClass.LONG


@dataclass(frozen=True)
class SuiteCase:
    source_id: str
    index: int
    env: GridEnvironment
    task: TaskInstruction
    start: AgentState
    oracle_cost: int
    complexity: ComplexityClass
    name: str = ""

    def to_dict(self) -> dict:
        return {
            "source_id": self.source_id,
            "name": self.name,
            "index": self.index,
            "env": self.env.to_dict(),
            "task": self.task.to_dict(),
            "start": self.start.to_list(),
            "oracle_cost": self.oracle_cost,
            "complexity": self.complexity.value,
        }


class SuiteExhaustedError(RuntimeError):
    pass


def source_id_for(index: int) -> str:
    return f"case-{index:04d}"


def generate_case(cfg: CampaignConfig, index: int, max_retries: int = 200) -> SuiteCase:
    import random

    for attempt in range(max_retries):
        s = derive_seed("case", cfg.seed, index, attempt)
        env = generate_environment(s, cfg.generation)
        rng = random.Random(s)
        cats = sorted(env.categories)
        target = cats[rng.randrange(len(cats))]
        if len(cats) < 2:
            continue
        cells = [c for c in env.free_cells() if c not in env.object_at]
        start = AgentState(cells[rng.randrange(len(cells))], (0, 90, 180, 270)[rng.randrange(4)])
        task = TaskInstruction(target, cfg.condition)
        cost = shortest_path_cost(env, start, task)
        if cost is None or cost < MIN_SOURCE_COST:
            continue
        return SuiteCase(source_id_for(index), index, env, task, start, cost, classify_complexity(cost, cfg))
    raise SuiteExhaustedError(f"no solvable case for index {index} after {max_retries} draws (seed={cfg.seed})")


def fixture_path() -> Path:
    return Path(__file__).parent / "data" / "fixtures.json"


def load_fixture_pack(cfg: CampaignConfig, path: str | Path | None = None) -> list[SuiteCase]:
    """Hand-built maps; the completion condition comes from the config."""
    data = json.loads(Path(path or fixture_path()).read_text(encoding="utf-8"))
    cases = []
    for i, fx in enumerate(data["fixtures"]):
        objects = [SceneObject(o["id"], o["category"], (o["x"], o["y"])) for o in fx["objects"]]
        env = GridEnvironment.from_ascii(fx["rows"], objects, seed=fx["seed"])
        start = AgentState.from_list(fx["start"])
        task = TaskInstruction(fx["target"], cfg.condition)
        cost = shortest_path_cost(env, start, task)
        if cost is None:
            raise ValueError(f"fixture {fx['name']!r} is unsolvable")
        cases.append(SuiteCase(source_id_for(i), i, env, task, start, cost, classify_complexity(cost, cfg), fx["name"]))
    return cases


def generate_suite(cfg: CampaignConfig) -> list[SuiteCase]:
    """N seeded cases, or the first N fixtures when the config selects the fixture pack."""
    if cfg.suite == "fixtures":
        return load_fixture_pack(cfg)[: cfg.N]
    return [generate_case(cfg, i) for i in range(cfg.N)]


def case_at(cfg: CampaignConfig, index: int) -> SuiteCase:
    if cfg.suite == "fixtures":
        return load_fixture_pack(cfg)[index]
    return generate_case(cfg, index)


# -- run matrix -------------------------------------------------------------------

def _arm_choice(cfg: CampaignConfig, src: SourceCase, kind: MRKind, arm: str, candidates, planner: PlannerId):
    if arm == "filtered":
        return select_diverse(
            candidates, kind, src.episode.trajectory, src.task.condition, src.env, path_mode=cfg.position_path
        )
    return select_random(candidates, derive_seed("random-arm", cfg.seed, src.source_id, planner.value, kind.value))


def _record(
    outcome, source_id: str, mr: str, c_s: float, planner: PlannerId, arm: str | None, case: SuiteCase,
    followup: dict | None, fu_ep=None,
) -> dict:  # fmt: skip
    if isinstance(outcome, TaskExecutionFailed):
        rec = ViolationRecord(mr, c_s, None, False, 0.0, Severity.NONE, followup, source_id)
        status, which = "task_execution_failed", outcome.which
    else:
        rec = ViolationRecord(
            outcome.mr, outcome.source_cost, outcome.followup_cost, outcome.violated, outcome.vs, outcome.severity,
            followup, source_id,
        )  # fmt: skip
        status, which = "result", None
    d = rec.to_dict()
    d.update(
        {
            "planner": planner.value,
            "arm": arm,
            "complexity": case.complexity.value,
            "outcome": status,
            "failed": which,
            "fu_actions": [a.value for a in fu_ep.trajectory.actions] if fu_ep is not None else None,
            "fu_view": [round(float(v), 12) for v in encode_view(fu_ep.initial_observation)] if fu_ep is not None else None,
        }
    )
    return d


def run_case(cfg: CampaignConfig, case: SuiteCase) -> tuple[list[dict], list[dict]]:
    """All records for one suite case, in deterministic order; plus skip notes."""
    records: list[dict] = []
    skips: list[dict] = []
    model = cfg.cost_model
    for planner in cfg.planners:
        max_steps = cfg.max_steps_multiplier * case.oracle_cost
        pseed = derive_seed("planner-seed", cfg.seed, case.index)
        src_ep = execute_episode(planner, case.env, case.task, case.start, max_steps, pseed, cfg.sensing_range)
        if not src_ep.success:
            skips.append({"source_id": case.source_id, "planner": planner.value, "reason": src_ep.termination.value})
            continue
        src = SourceCase(case.env, case.task, case.start, src_ep, case.source_id)
        c_s = float(src_ep.steps) if model.weights is None else None
        for kind in cfg.mrs:
            try:
                candidates = generate_candidates(
                    src, kind, derive_seed("candidates", cfg.seed, case.index, kind.value), cfg.n_scene_candidates,
                    cfg.refine_distance,
                )  # fmt: skip
            except (NoCandidatesError, SequenceTooShortError) as e:
                skips.append({"source_id": case.source_id, "planner": planner.value, "mr": kind.value, "reason": str(e)})
                continue
            for arm in cfg.arms:
                fu = _arm_choice(cfg, src, kind, arm, candidates, planner)
                fu_ep = run_followup(planner, src, fu, max_steps, pseed, cfg.sensing_range)
                outcome = detect_violation(src_ep, fu_ep, kind, model, fu.to_dict(), case.source_id)
                base_cost = c_s if c_s is not None else _cost(src_ep, model)
                records.append(_record(outcome, case.source_id, kind.value, base_cost, planner, arm, case, fu.to_dict(), fu_ep))
        for bid in cfg.baselines:
            try:
                records.append(_run_baseline(cfg, bid, planner, src, case, max_steps, pseed))
            except PlacementError as e:
                skips.append({"source_id": case.source_id, "planner": planner.value, "mr": bid.value, "reason": str(e)})
    return records, skips


def _cost(ep, model):
    from .detector import compute_cost

    return compute_cost(ep.trajectory, model)


def _run_baseline(cfg, bid: BaselineId, planner, src: SourceCase, case: SuiteCase, max_steps: int, pseed: int) -> dict:
    model = cfg.cost_model
    c_s = _cost(src.episode, model)
    if bid is BaselineId.PBT_NR:
        outcome = pbt_nr_outcome(src, model)
        followup = outcome.followup
    elif bid is BaselineId.PBT_SP:
        outcome = pbt_sp_outcome(planner, src, max_steps, pseed, model, cfg.sensing_range)
        followup = outcome.followup if isinstance(outcome, ViolationRecord) else {"kind": "PBT_SP"}
    elif bid is BaselineId.MT_OBSTACLE:
        seed = derive_seed("obstacle", cfg.seed, case.index)
        outcome = mt_obstacle_run(planner, src, cfg.n_obstacles, seed, max_steps, model, cfg.sensing_range)
        followup = outcome.followup if isinstance(outcome, ViolationRecord) else {"kind": "MT_OBSTACLE"}
    else:
        transforms = tuple(Transform)
        t = transforms[derive_seed("transform", cfg.seed, case.index) % len(transforms)]
        outcome = mt_transform_run(planner, src, t, max_steps, pseed, model, cfg.sensing_range)
        followup = outcome.followup if isinstance(outcome, ViolationRecord) else {"kind": "MT_TRANSFORM", "transform": t.value}
    return _record(outcome, case.source_id, bid.value, c_s, planner, None, case, followup)


# -- aggregation -------------------------------------------------------------------

def _rate(v: int, n: int) -> float:
    return 0.0 if n == 0 else v / n


def compute_diversity(records: list[dict], cfg: CampaignConfig) -> list[dict]:
    """VD per (planner, MR, arm) pool, or per (planner, arm) when pooled."""
    mr_names = {m.value for m in MRKind}
    pools: dict[tuple, list[dict]] = defaultdict(list)
    for r in records:
        if r["mr"] not in mr_names or r["outcome"] != "result" or not r["violated"]:
            continue
        mr = r["mr"] if cfg.diversity_pool == "per_mr" else "ALL"
        pools[(r["planner"], mr, r["arm"])].append(r)
    out = []
    for key in sorted(pools):
        rs = pools[key]
        cases = [(r["fu_view"], r["fu_actions"]) for r in rs]
        k_max = None if cfg.k_max is None else min(cfg.k_max, max(2, len(cases) - 1))
        res = violation_diversity(cases, k_max, derive_seed("cluster", cfg.seed, *key))
        d = res.to_dict("/".join(key))
        d.update({"planner": key[0], "mr": key[1], "arm": key[2], "n": len(cases), "flagged": res.flagged})
        out.append(d)
    return out


def build_report(records: list[dict], cfg: CampaignConfig, clusters: list[dict] | None = None, skips=()) -> dict:
    mr_names = [m.value for m in MRKind]
    cells: dict[tuple, dict] = {}

    def cell(key):
        if key not in cells:
            cells[key] = {"pairs": 0, "failures": 0, "violations": 0, "SLIGHT": 0, "MODERATE": 0, "SEVERE": 0}
        return cells[key]

    for r in records:
        if r["mr"] not in mr_names:
            continue
        c = cell((r["planner"], r["mr"], r["arm"], r["complexity"]))
        if r["outcome"] != "result":
            c["failures"] += 1
            continue
        c["pairs"] += 1
        if r["violated"]:
            c["violations"] += 1
            c[r["severity"]] += 1

    cell_rows = []
    for key in sorted(cells):
        c = cells[key]
        row = {"planner": key[0], "mr": key[1], "arm": key[2], "complexity": key[3], **c}
        row["rate"] = _rate(c["violations"], c["pairs"])
        for s in ("SLIGHT", "MODERATE", "SEVERE"):
            row[f"rate_{s}"] = _rate(c[s], c["pairs"])
        cell_rows.append(row)

    totals: dict[tuple, dict] = defaultdict(lambda: {"pairs": 0, "failures": 0, "violations": 0})
    for row in cell_rows:
        t = totals[(row["planner"], row["mr"], row["arm"])]
        for k in ("pairs", "failures", "violations"):
            t[k] += row[k]
    total_rows = [
        {"planner": k[0], "mr": k[1], "arm": k[2], **v, "rate": _rate(v["violations"], v["pairs"])}
        for k, v in sorted(totals.items())
    ]

    base: dict[tuple, dict] = defaultdict(lambda: {"pairs": 0, "failures": 0, "violations": 0})
    for r in records:
        if r["mr"] in mr_names:
            continue
        b = base[(r["planner"], r["mr"])]
        if r["outcome"] != "result":
            b["failures"] += 1
        else:
            b["pairs"] += 1
            b["violations"] += int(r["violated"])
    base_rows = [
        {"planner": k[0], "baseline": k[1], **v, "rate": _rate(v["violations"], v["pairs"])} for k, v in sorted(base.items())
    ]
    echo = cfg.to_dict()
    del echo["output_dir"]  # location is provenance, kept in the manifest
    return {
        "config": echo,
        "n_records": len(records),
        "cells": cell_rows,
        "totals": total_rows,
        "diversity": clusters or [],
        "baselines": base_rows,
        "skips": list(skips),
    }


# -- rendering ------------------------------------------------------------------------

def _pct(x: float) -> str:
    return f"{100.0 * x:.1f}%"


def render_tables(report: dict) -> tuple[str, str]:
    """Plain-text and CSV renderings of a report."""
    mrs = [m.value for m in MRKind]
    comps = [c.value for c in (ComplexityClass.LONG, ComplexityClass.MEDIUM, ComplexityClass.SHORT)]
    sevs = ["SLIGHT", "MODERATE", "SEVERE"]
    idx = {(r["planner"], r["mr"], r["arm"], r["complexity"]): r for r in report["cells"]}
    planners = sorted({r["planner"] for r in report["cells"]} | {r["planner"] for r in report["baselines"]})
    arms = sorted({r["arm"] for r in report["cells"]})

    text = io.StringIO()
    rows_csv = [["table", "planner", "arm", "severity", "mr", "complexity", "value"]]
    header = "severity  " + "".join(f"{m[:9]+'/'+c[0]:>12}" for m in mrs for c in comps)
    for planner in planners:
        for arm in arms:
            text.write(f"\n[violation rates] planner={planner} arm={arm}\n{header}\n")
            for sev in sevs + ["TOTAL"]:
                line = f"{sev:<10}"
                for m in mrs:
                    for c in comps:
                        r = idx.get((planner, m, arm, c))
                        if r is None:
                            v = 0.0
                        elif sev == "TOTAL":
                            v = r["rate"]
                        else:
                            v = r[f"rate_{sev}"]
                        line += f"{_pct(v):>12}"
                        rows_csv.append(["rates", planner, arm, sev, m, c, f"{100 * v:.1f}"])
                text.write(line + "\n")

    tot = {(r["planner"], r["mr"], r["arm"]): r for r in report["totals"]}
    div = {(r["planner"], r["mr"], r["arm"]): r["vd"] for r in report["diversity"]}
    text.write("\n[filter ablation] rate filtered / random / delta ; VD filtered / random / delta\n")
    for planner in planners:
        for m in mrs + (["ALL"] if any(k[1] == "ALL" for k in div) else []):
            rf = tot.get((planner, m, "filtered"), {}).get("rate", 0.0)
            rr = tot.get((planner, m, "random"), {}).get("rate", 0.0)
            vf = div.get((planner, m, "filtered"), 0)
            vr = div.get((planner, m, "random"), 0)
            text.write(
                f"{planner:<16}{m:<10}{_pct(rf):>8}{_pct(rr):>8}{100 * (rf - rr):>+8.1f}"
                f"{vf:>6}{vr:>6}{vf - vr:>+6}\n"
            )
            rows_csv.append(["ablation_rate", planner, "", "", m, "", f"{100 * (rf - rr):.1f}"])
            rows_csv.append(["ablation_vd", planner, "", "", m, "", str(vf - vr)])

    text.write("\n[baselines] violation rate (pairs, failures)\n")
    for r in report["baselines"]:
        text.write(f"{r['planner']:<16}{r['baseline']:<14}{_pct(r['rate']):>8} ({r['pairs']}, {r['failures']})\n")
        rows_csv.append(["baseline", r["planner"], "", "", r["baseline"], "", f"{100 * r['rate']:.1f}"])

    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows_csv)
    return text.getvalue(), buf.getvalue()


class SchemaError(ValueError):
    pass


_REQUIRED = ("source_id", "mr", "c_s", "c_f", "violated", "vs", "severity", "followup", "planner", "arm", "complexity", "outcome")


def read_records(path: str | Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"{path}:{lineno}: malformed JSON ({e.msg})") from None
            if not isinstance(rec, dict) or any(k not in rec for k in _REQUIRED):
                raise SchemaError(f"{path}:{lineno}: record does not match the violation-record schema")
            out.append(rec)
    return out


def summarize(records_path: str | Path, cfg: CampaignConfig, clusters: list[dict] | None = None) -> tuple[dict, str, str]:
    records = read_records(records_path)
    if clusters is None:
        clusters = compute_diversity(records, cfg)
    report = build_report(records, cfg, clusters)
    text, table_csv = render_tables(report)
    return report, text, table_csv


# -- persistence ---------------------------------------------------------------------

def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _run_case_star(args):
    return run_case(*args)


def execute_suite(cfg: CampaignConfig, suite: list[SuiteCase], jobs: int = 1):
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_case_star, [(cfg, c) for c in suite]))
    else:
        results = [run_case(cfg, c) for c in suite]
    records, skips = [], []
    for recs, sk in results:
        records.extend(recs)
        skips.extend(sk)
    return records, skips


def run_campaign(cfg: CampaignConfig, jobs: int = 1, out_dir: str | Path | None = None) -> dict:
    """Run the full matrix and write artifacts; returns the report dict."""
    out = Path(out_dir or cfg.output_dir)
    started = time.time()
    written: list[str] = []
    manifest = {"started": datetime.now(timezone.utc).isoformat(), "status": "running", "files": {}}
    try:
        out.mkdir(parents=True, exist_ok=True)
        suite = generate_suite(cfg)
        records, skips = execute_suite(cfg, suite, jobs)
        clusters = compute_diversity(records, cfg)
        report = build_report(records, cfg, clusters, skips)
        text, table_csv = render_tables(report)
        payloads = {
            CONFIG_FILE: _dump(cfg.to_dict()),
            RECORDS_FILE: "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in records),
            SKIPS_FILE: "".join(json.dumps(s, separators=(",", ":")) + "\n" for s in skips),
            CLUSTERS_FILE: _dump(clusters),
            REPORT_FILE: _dump(report),
            "report.txt": text,
            "report.csv": table_csv,
        }
        for name, content in payloads.items():
            (out / name).write_text(content, encoding="utf-8")
            written.append(name)
    except OSError:
        manifest.update({"status": "aborted", "files": {n: _sha256(out / n) for n in written}})
        try:
            (out / MANIFEST_FILE).write_text(_dump(manifest), encoding="utf-8")
        except OSError:
            pass
        raise
    manifest.update(
        {
            "status": "complete",
            "finished": datetime.now(timezone.utc).isoformat(),
            "runtime_seconds": round(time.time() - started, 3),
            "jobs": jobs,
            "output_dir": str(out),
            "files": {n: _sha256(out / n) for n in written},
        }
    )
    (out / MANIFEST_FILE).write_text(_dump(manifest), encoding="utf-8")
    log.info("campaign finished: %d records in %.1fs", len(records), time.time() - started)
    return report


def replay(cfg: CampaignConfig, source_id: str, records_path: str | Path | None = None) -> tuple[list[dict], list[dict]]:
    """Re-execute every pair of one source case; returns (fresh, stored) records."""
    if not source_id.startswith("case-"):
        raise ValueError(f"malformed source id {source_id!r}")
    index = int(source_id.split("-", 1)[1])
    if not (0 <= index < cfg.N):
        raise ValueError(f"source id {source_id!r} outside the suite of {cfg.N} cases")
    if cfg.suite == "fixtures":
        n = min(cfg.N, len(load_fixture_pack(cfg)))
        if index >= n:
            raise ValueError(f"source id {source_id!r} outside the suite of {n} cases")
    fresh, _ = run_case(cfg, case_at(cfg, index))
    stored = []
    if records_path is not None:
        stored = [r for r in read_records(records_path) if r["source_id"] == source_id]
    return fresh, stored
