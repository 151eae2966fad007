"""Deterministic 2-D grid world: kinematics, FOV-cone perception, completion predicate.

Coordinates are ``(x, y)`` with ``y`` growing downward, so heading 0 (north)
moves toward smaller ``y``.  Headings are degrees clockwise from north.
Walls are the only obstacles; scene objects sit on free cells and can be
walked over.  Walls (and the grid boundary) also occlude sight lines.
"""
from __future__ import annotations

import enum
import hashlib
import json
import math
import random
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

import numpy as np

HEADINGS = (0, 90, 180, 270)
DIRECTIONS = {0: (0, -1), 90: (1, 0), 180: (0, 1), 270: (-1, 0)}

CATEGORIES = ("pillow", "chair", "bed", "toilet", "basketball", "sofa", "television", "plant")

# material id -> family; three families over eight ids
MATERIAL_FAMILIES = {"wood": (0, 1, 2), "metal": (3, 4, 5), "fabric": (6, 7)}
N_MATERIALS = 8
FAMILY_OF = {mid: fam for fam, ids in MATERIAL_FAMILIES.items() for mid in ids}

_EPS = 1e-9


class GenerationError(RuntimeError):
    pass


class Action(str, enum.Enum):
    MOVE_AHEAD = "MOVE_AHEAD"
    MOVE_BACK = "MOVE_BACK"
    ROTATE_LEFT = "ROTATE_LEFT"
    ROTATE_RIGHT = "ROTATE_RIGHT"
    DONE = "DONE"


MOTION_ACTIONS = (Action.MOVE_AHEAD, Action.MOVE_BACK, Action.ROTATE_LEFT, Action.ROTATE_RIGHT)


class SceneMutation(str, enum.Enum):
    MATERIALS = "MATERIALS"
    LIGHTING = "LIGHTING"


@dataclass(frozen=True)
class Lighting:
    hue: float = 0.5
    brightness: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.hue <= 1.0):
            raise ValueError(f"hue {self.hue} outside [0, 1]")
        if not (0.5 <= self.brightness <= 1.5):
            raise ValueError(f"brightness {self.brightness} outside [0.5, 1.5]")


@dataclass(frozen=True)
class SceneObject:
    id: int
    category: str
    position: tuple[int, int]

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown object category {self.category!r}")


@dataclass(frozen=True)
class AgentState:
    position: tuple[int, int]
    heading: int = 0

    def __post_init__(self):
        if self.heading not in HEADINGS:
            raise ValueError(f"heading must be one of {HEADINGS}, got {self.heading}")

    @property
    def x(self) -> int:
        return self.position[0]

    @property
    def y(self) -> int:
        return self.position[1]

    def to_list(self) -> list[int]:
        return [self.position[0], self.position[1], self.heading]

    @classmethod
    def from_list(cls, values: Sequence[int]) -> "AgentState":
        x, y, h = values
        return cls((int(x), int(y)), int(h))


@dataclass(frozen=True)
class CompletionCondition:
    fov_degrees: float = 90.0
    max_distance: float = 2.0
    requires_line_of_sight: bool = True

    def __post_init__(self):
        if not (0.0 < self.fov_degrees <= 180.0):
            raise ValueError(f"fov_degrees must lie in (0, 180], got {self.fov_degrees}")
        if self.max_distance <= 0:
            raise ValueError("max_distance must be positive")

    def contained_in(self, other: "CompletionCondition") -> bool:
        """True when every state satisfying ``self`` also satisfies ``other``."""
        if other.requires_line_of_sight and not self.requires_line_of_sight:
            return False
        return self.fov_degrees <= other.fov_degrees and self.max_distance <= other.max_distance

    def to_dict(self) -> dict:
        return {
            "fov_degrees": self.fov_degrees,
            "max_distance": self.max_distance,
            "requires_line_of_sight": self.requires_line_of_sight,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CompletionCondition":
        return cls(float(d["fov_degrees"]), float(d["max_distance"]), bool(d["requires_line_of_sight"]))


@dataclass(frozen=True)
class TaskInstruction:
    target_category: str
    condition: CompletionCondition = field(default_factory=CompletionCondition)

    def to_dict(self) -> dict:
        return {"target_category": self.target_category, "condition": self.condition.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "TaskInstruction":
        return cls(d["target_category"], CompletionCondition.from_dict(d["condition"]))


@dataclass(frozen=True)
class GenerationParams:
    width: int = 12
    height: int = 12
    wall_density: float = 0.2
    n_objects: int = 4

    def __post_init__(self):
        if self.width < 4 or self.height < 4:
            raise ValueError("grid must be at least 4x4")
        if not (0.0 <= self.wall_density <= 0.35):
            raise ValueError("wall_density must lie in [0, 0.35]")
        if self.n_objects < 2:
            raise ValueError("need at least 2 objects")


@dataclass(frozen=True)
class GridEnvironment:
    """Immutable world.  ``occupancy`` and ``materials`` are row-major flat tuples."""

    width: int
    height: int
    occupancy: tuple[int, ...]
    objects: tuple[SceneObject, ...]
    materials: tuple[int, ...]
    lighting: Lighting = field(default_factory=Lighting)
    seed: int = 0

    def __post_init__(self):
        if self.width < 4 or self.height < 4:
            raise ValueError("grid must be at least 4x4")
        n = self.width * self.height
        if len(self.occupancy) != n or len(self.materials) != n:
            raise ValueError("occupancy/materials length does not match grid size")
        seen = set()
        for obj in self.objects:
            if not self.in_bounds(obj.position):
                raise ValueError(f"object {obj.id} out of bounds")
            if self.is_wall(obj.position):
                raise ValueError(f"object {obj.id} sits on a wall")
            if obj.position in seen:
                raise ValueError(f"two objects share cell {obj.position}")
            seen.add(obj.position)
        if len({o.id for o in self.objects}) != len(self.objects):
            raise ValueError("object ids must be unique")

    def in_bounds(self, pos: tuple[int, int]) -> bool:
        return 0 <= pos[0] < self.width and 0 <= pos[1] < self.height

    def is_wall(self, pos: tuple[int, int]) -> bool:
        return self.occupancy[pos[1] * self.width + pos[0]] == 1

    def is_free(self, pos: tuple[int, int]) -> bool:
        return self.in_bounds(pos) and not self.is_wall(pos)

    def material_at(self, pos: tuple[int, int]) -> int:
        return self.materials[pos[1] * self.width + pos[0]]

    @cached_property
    def object_at(self) -> dict[tuple[int, int], SceneObject]:
        return {o.position: o for o in self.objects}

    def objects_of(self, category: str) -> list[SceneObject]:
        return [o for o in self.objects if o.category == category]

    @property
    def categories(self) -> set[str]:
        return {o.category for o in self.objects}

    def free_cells(self) -> list[tuple[int, int]]:
        return [(x, y) for y in range(self.height) for x in range(self.width) if not self.is_wall((x, y))]

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "occupancy": list(self.occupancy),
            "objects": [
                {"id": o.id, "category": o.category, "x": o.position[0], "y": o.position[1]} for o in self.objects
            ],
            "materials": list(self.materials),
            "lighting": {"hue": self.lighting.hue, "brightness": self.lighting.brightness},
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "GridEnvironment":
        return cls(
            width=int(d["width"]),
            height=int(d["height"]),
            occupancy=tuple(int(v) for v in d["occupancy"]),
            objects=tuple(SceneObject(int(o["id"]), o["category"], (int(o["x"]), int(o["y"]))) for o in d["objects"]),
            materials=tuple(int(v) for v in d["materials"]),
            lighting=Lighting(float(d["lighting"]["hue"]), float(d["lighting"]["brightness"])),
            seed=int(d["seed"]),
        )

    @classmethod
    def from_ascii(
        cls,
        rows: Sequence[str],
        objects: Iterable[SceneObject] = (),
        materials: Sequence[int] | None = None,
        lighting: Lighting | None = None,
        seed: int = 0,
    ) -> "GridEnvironment":
        """Build from rows of ``#`` (wall) and ``.`` (free).  Materials default to a seeded draw."""
        height = len(rows)
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise ValueError("ragged ascii map")
        occ = tuple(1 if ch == "#" else 0 for r in rows for ch in r)
        if materials is None:
            materials = _draw_materials(random.Random(seed), width * height)
        return cls(width, height, occ, tuple(objects), tuple(materials), lighting or Lighting(), seed)

    def to_ascii(self) -> list[str]:
        rows = []
        for y in range(self.height):
            row = []
            for x in range(self.width):
                if self.is_wall((x, y)):
                    row.append("#")
                elif (x, y) in self.object_at:
                    row.append(self.object_at[(x, y)].category[0].upper())
                else:
                    row.append(".")
            rows.append("".join(row))
        return rows


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from arbitrary printable parts."""
    h = hashlib.blake2b(repr(parts).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def _draw_materials(rng: random.Random, n: int) -> list[int]:
    families = list(MATERIAL_FAMILIES.values())
    out = []
    for _ in range(n):
        fam = families[rng.randrange(len(families))]
        out.append(fam[rng.randrange(len(fam))])
    return out


def _components(width: int, height: int, occ: Sequence[int]) -> list[list[tuple[int, int]]]:
    seen = bytearray(width * height)
    comps = []
    for y in range(height):
        for x in range(width):
            i = y * width + x
            if occ[i] or seen[i]:
                continue
            seen[i] = 1
            comp = [(x, y)]
            stack = [(x, y)]
            while stack:
                cx, cy = stack.pop()
                for dx, dy in DIRECTIONS.values():
                    nx, ny = cx + dx, cy + dy
                    if 0 <= nx < width and 0 <= ny < height:
                        j = ny * width + nx
                        if not occ[j] and not seen[j]:
                            seen[j] = 1
                            comp.append((nx, ny))
                            stack.append((nx, ny))
            comps.append(comp)
    return comps


def generate_environment(seed: int, params: GenerationParams, max_retries: int = 50) -> GridEnvironment:
    """Procedurally generate a connected environment; bit-identical for equal ``(seed, params)``.

    Walls are sampled at ``params.wall_density``; free pockets cut off from the
    largest free component are filled in, so every free cell is mutually reachable.
    Object categories are drawn so that at least two distinct categories exist.
    """
    n = params.width * params.height
    for attempt in range(max_retries):
        rng = random.Random(derive_seed("env", seed, attempt))
        occ = [0] * n
        n_walls = int(round(params.wall_density * n))
        for i in rng.sample(range(n), n_walls):
            occ[i] = 1
        comps = _components(params.width, params.height, occ)
        if not comps:
            continue
        main = max(comps, key=len)
        main_set = set(main)
        for comp in comps:
            if comp is not main:
                for x, y in comp:
                    occ[y * params.width + x] = 1
        if len(main_set) < params.n_objects + 2:
            continue
        cells = sorted(main_set, key=lambda p: (p[1], p[0]))
        spots = rng.sample(cells, params.n_objects)
        cats = [CATEGORIES[rng.randrange(len(CATEGORIES))] for _ in spots]
        if len(set(cats)) < 2:
            cats[-1] = next(c for c in CATEGORIES if c != cats[0])
        objects = tuple(SceneObject(i, c, p) for i, (c, p) in enumerate(zip(cats, spots)))
        materials = _draw_materials(rng, n)
        lighting = Lighting(rng.uniform(0.0, 1.0), rng.uniform(0.5, 1.5))
        return GridEnvironment(params.width, params.height, tuple(occ), objects, tuple(materials), lighting, seed)
    raise GenerationError(f"could not generate a connected environment for seed={seed}")


# -- kinematics -------------------------------------------------------------

def step(env: GridEnvironment, state: AgentState, action: Action) -> AgentState:
    if action is Action.ROTATE_LEFT:
        return AgentState(state.position, (state.heading - 90) % 360)
    if action is Action.ROTATE_RIGHT:
        return AgentState(state.position, (state.heading + 90) % 360)
    if action is Action.DONE:
        return state
    dx, dy = DIRECTIONS[state.heading]
    if action is Action.MOVE_BACK:
        dx, dy = -dx, -dy
    dest = (state.position[0] + dx, state.position[1] + dy)
    if not env.is_free(dest):
        return state
    return AgentState(dest, state.heading)


# -- perception geometry ----------------------------------------------------

@lru_cache(maxsize=None)
def sight_line(dx: int, dy: int) -> tuple[tuple[int, int], ...]:
    """Offsets of cells strictly between the origin and ``(dx, dy)`` whose closed
    unit square touches the segment joining the two cell centres.

    Computed exactly in doubled integer coordinates, so the set is symmetric
    under the grid's rotations and mirrors.
    """
    if dx == 0 and dy == 0:
        return ()
    ex, ey = 2 * dx, 2 * dy
    out = []
    for cy in range(min(0, dy), max(0, dy) + 1):
        for cx in range(min(0, dx), max(0, dx) + 1):
            if (cx, cy) in ((0, 0), (dx, dy)):
                continue
            # separating-axis test against the segment normal
            signs = [ex * (2 * cy + sy) - ey * (2 * cx + sx) for sx in (-1, 1) for sy in (-1, 1)]
            if min(signs) <= 0 <= max(signs):
                out.append((cx, cy))
    return tuple(out)


def in_cone(dx: int, dy: int, heading: int, fov_degrees: float) -> bool:
    if dx == 0 and dy == 0:
        return False
    hx, hy = DIRECTIONS[heading]
    cos_angle = (dx * hx + dy * hy) / math.hypot(dx, dy)
    return cos_angle >= math.cos(math.radians(fov_degrees / 2.0)) - _EPS


@lru_cache(maxsize=4096)
def _cone_offsets(heading: int, fov_degrees: float, sensing_range: float) -> tuple[tuple[int, int], ...]:
    r = int(math.floor(sensing_range + _EPS))
    out = []
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if math.hypot(dx, dy) <= sensing_range + _EPS and in_cone(dx, dy, heading, fov_degrees):
                out.append((dx, dy))
    out.sort(key=lambda o: (o[1], o[0]))
    return tuple(out)


def line_of_sight(env: GridEnvironment, a: tuple[int, int], b: tuple[int, int]) -> bool:
    ax, ay = a
    for ox, oy in sight_line(b[0] - ax, b[1] - ay):
        if env.is_wall((ax + ox, ay + oy)):
            return False
    return True


@dataclass(frozen=True)
class VisibleCell:
    position: tuple[int, int]
    wall: bool
    material: int
    category: str | None


@dataclass(frozen=True)
class Observation:
    visible_cells: tuple[VisibleCell, ...]
    agent_pose: AgentState
    lighting: Lighting
    width: int
    height: int
    fov_degrees: float

    @cached_property
    def visible_positions(self) -> frozenset[tuple[int, int]]:
        return frozenset(c.position for c in self.visible_cells)


def default_sensing_range(env: GridEnvironment) -> float:
    return float(max(env.width, env.height))


def observe(
    env: GridEnvironment, state: AgentState, fov_degrees: float, sensing_range: float | None = None
) -> Observation:
    if not (0.0 < fov_degrees <= 180.0):
        raise ValueError(f"fov must lie in (0, 180], got {fov_degrees}")
    rng = default_sensing_range(env) if sensing_range is None else float(sensing_range)
    x0, y0 = state.position
    cells = []
    for dx, dy in _cone_offsets(state.heading, float(fov_degrees), rng):
        pos = (x0 + dx, y0 + dy)
        if not env.in_bounds(pos):
            continue
        if not line_of_sight(env, state.position, pos):
            continue
        obj = env.object_at.get(pos)
        cells.append(VisibleCell(pos, env.is_wall(pos), env.material_at(pos), obj.category if obj else None))
    return Observation(tuple(cells), state, env.lighting, env.width, env.height, float(fov_degrees))


def satisfies(
    agent: tuple[int, int], heading: int, target: tuple[int, int], condition: CompletionCondition
) -> bool:
    """Distance and cone part of the completion predicate (no occlusion)."""
    dx, dy = target[0] - agent[0], target[1] - agent[1]
    if dx == 0 and dy == 0:
        return False
    if math.hypot(dx, dy) > condition.max_distance + _EPS:
        return False
    return in_cone(dx, dy, heading, condition.fov_degrees)


def is_complete(env: GridEnvironment, state: AgentState, task: TaskInstruction) -> bool:
    cond = task.condition
    for obj in env.objects:
        if obj.category != task.target_category:
            continue
        if not satisfies(state.position, state.heading, obj.position, cond):
            continue
        if cond.requires_line_of_sight and not line_of_sight(env, state.position, obj.position):
            continue
        return True
    return False


# -- scene mutation -----------------------------------------------------------

def mutate_scene(env: GridEnvironment, mutation: SceneMutation, seed: int) -> GridEnvironment:
    """Cosmetic mutation; occupancy and objects are untouched."""
    rng = random.Random(derive_seed("scene", mutation.value, seed))
    if mutation is SceneMutation.MATERIALS:
        new = []
        for mid in env.materials:
            fam = MATERIAL_FAMILIES[FAMILY_OF[mid]]
            new.append(fam[rng.randrange(len(fam))])
        return replace(env, materials=tuple(new))
    if mutation is SceneMutation.LIGHTING:
        return replace(env, lighting=Lighting(rng.uniform(0.0, 1.0), rng.uniform(0.5, 1.5)))
    raise ValueError(f"unknown scene mutation {mutation}")


def scene_feature_vector(env: GridEnvironment) -> np.ndarray:
    """[normalized material histogram (8), hue, brightness]."""
    hist = np.bincount(np.asarray(env.materials, dtype=np.int64), minlength=N_MATERIALS).astype(float)
    hist /= hist.sum()
    return np.concatenate([hist, [env.lighting.hue, env.lighting.brightness]])


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 1.0 if na == nb else 0.0
    return float(np.dot(a, b) / (na * nb))


# -- isometries (used by the transform baseline) -------------------------------

class Transform(str, enum.Enum):
    ROTATE_90 = "ROTATE_90"
    ROTATE_180 = "ROTATE_180"
    ROTATE_270 = "ROTATE_270"
    MIRROR_X = "MIRROR_X"
    MIRROR_Y = "MIRROR_Y"


def pad_square(env: GridEnvironment) -> GridEnvironment:
    """Pad with wall cells on the right/bottom until the grid is square."""
    n = max(env.width, env.height)
    if env.width == env.height:
        return env
    occ, mats = [], []
    for y in range(n):
        for x in range(n):
            if x < env.width and y < env.height:
                occ.append(env.occupancy[y * env.width + x])
                mats.append(env.materials[y * env.width + x])
            else:
                occ.append(1)
                mats.append(0)
    return replace(env, width=n, height=n, occupancy=tuple(occ), materials=tuple(mats))


def _map_point(t: Transform, x: int, y: int, w: int, h: int) -> tuple[int, int]:
    if t is Transform.ROTATE_90:
        return (h - 1 - y, x)
    if t is Transform.ROTATE_180:
        return (w - 1 - x, h - 1 - y)
    if t is Transform.ROTATE_270:
        return (y, w - 1 - x)
    if t is Transform.MIRROR_X:
        return (w - 1 - x, y)
    if t is Transform.MIRROR_Y:
        return (x, h - 1 - y)
    raise ValueError(t)


def _map_heading(t: Transform, heading: int) -> int:
    if t is Transform.ROTATE_90:
        return (heading + 90) % 360
    if t is Transform.ROTATE_180:
        return (heading + 180) % 360
    if t is Transform.ROTATE_270:
        return (heading + 270) % 360
    if t is Transform.MIRROR_X:
        return (360 - heading) % 360
    if t is Transform.MIRROR_Y:
        return (180 - heading) % 360
    raise ValueError(t)


def transform_case(
    env: GridEnvironment, start: AgentState, t: Transform
) -> tuple[GridEnvironment, AgentState]:
    """Apply an isometry to the environment and start pose consistently."""
    if t in (Transform.ROTATE_90, Transform.ROTATE_270):
        env = pad_square(env)
    w, h = env.width, env.height
    nw, nh = (h, w) if t in (Transform.ROTATE_90, Transform.ROTATE_270) else (w, h)
    occ = [0] * (nw * nh)
    mats = [0] * (nw * nh)
    for y in range(h):
        for x in range(w):
            nx, ny = _map_point(t, x, y, w, h)
            occ[ny * nw + nx] = env.occupancy[y * w + x]
            mats[ny * nw + nx] = env.materials[y * w + x]
    objs = tuple(SceneObject(o.id, o.category, _map_point(t, *o.position, w, h)) for o in env.objects)
    new_env = replace(env, width=nw, height=nh, occupancy=tuple(occ), materials=tuple(mats), objects=objs)
    new_start = AgentState(_map_point(t, *start.position, w, h), _map_heading(t, start.heading))
    return new_env, new_start
