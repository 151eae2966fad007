import json
import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import LineString, box

from nodmt.gridworld import (
    CATEGORIES,
    DIRECTIONS,
    FAMILY_OF,
    Action,
    AgentState,
    CompletionCondition,
    GenerationParams,
    GridEnvironment,
    Lighting,
    SceneMutation,
    SceneObject,
    TaskInstruction,
    Transform,
    cosine_similarity,
    generate_environment,
    in_cone,
    is_complete,
    line_of_sight,
    mutate_scene,
    observe,
    scene_feature_vector,
    sight_line,
    step,
    transform_case,
)
from nodmt.planners import shortest_path_cost

OPEN = ["......", "......", "......", "......"]


def open_env(rows=OPEN, objects=()):
    return GridEnvironment.from_ascii(rows, objects, seed=3)


def sight_line_oracle(dx, dy):
    """Cells whose closed square meets the centre-to-centre segment (shapely)."""
    seg = LineString([(0, 0), (dx, dy)])
    out = []
    for cy in range(min(0, dy), max(0, dy) + 1):
        for cx in range(min(0, dx), max(0, dx) + 1):
            if (cx, cy) in ((0, 0), (dx, dy)):
                continue
            if box(cx - 0.5, cy - 0.5, cx + 0.5, cy + 0.5).intersects(seg):
                out.append((cx, cy))
    return sorted(out)


def bfs_component(env, start):
    seen = {start}
    q = deque([start])
    while q:
        x, y = q.popleft()
        for dx, dy in DIRECTIONS.values():
            n = (x + dx, y + dy)
            if env.is_free(n) and n not in seen:
                seen.add(n)
                q.append(n)
    return seen


# -- kinematics ---------------------------------------------------------------

def test_rotations_cycle_back():
    env = open_env()
    s = AgentState((2, 2), 0)
    for a in (Action.ROTATE_LEFT, Action.ROTATE_RIGHT):
        t = s
        for _ in range(4):
            t = step(env, t, a)
        assert t == s
    assert step(env, s, Action.ROTATE_RIGHT).heading == 90
    assert step(env, s, Action.ROTATE_LEFT).heading == 270


def test_move_ahead_follows_heading_y_down():
    env = open_env()
    assert step(env, AgentState((2, 2), 0), Action.MOVE_AHEAD).position == (2, 1)
    assert step(env, AgentState((2, 2), 90), Action.MOVE_AHEAD).position == (3, 2)
    assert step(env, AgentState((2, 2), 180), Action.MOVE_BACK).position == (2, 1)


def test_blocked_move_keeps_pose():
    env = open_env(["#...", "....", "....", "...."])
    s = AgentState((1, 1), 270)
    assert step(env, s, Action.MOVE_AHEAD) == AgentState((0, 1), 270)
    s = AgentState((1, 0), 270)
    assert step(env, s, Action.MOVE_AHEAD) == s  # wall
    edge = AgentState((3, 0), 270)
    assert step(env, edge, Action.MOVE_BACK) == edge  # out of bounds


def test_done_is_identity():
    s = AgentState((1, 1), 180)
    assert step(open_env(), s, Action.DONE) == s


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 500), st.sampled_from(list(Action)))
def test_ahead_then_back_returns(seed, _a):
    env = generate_environment(seed, GenerationParams(8, 8, 0.25, 3))
    cell = env.free_cells()[seed % len(env.free_cells())]
    for h in (0, 90, 180, 270):
        s = AgentState(cell, h)
        t = step(env, s, Action.MOVE_AHEAD)
        if t != s:
            assert step(env, t, Action.MOVE_BACK) == s


# -- perception geometry --------------------------------------------------------

@pytest.mark.parametrize("dx", range(-6, 7))
@pytest.mark.parametrize("dy", range(-6, 7))
def test_sight_line_matches_geometric_oracle(dx, dy):
    assert sorted(sight_line(dx, dy)) == sight_line_oracle(dx, dy)


def test_sight_line_diagonal_touches_corners():
    # the exact diagonal passes through shared corners and touches both neighbours
    assert set(sight_line(2, 2)) == {(1, 0), (0, 1), (1, 1), (2, 1), (1, 2)}


@settings(max_examples=200, deadline=None)
@given(st.integers(-7, 7), st.integers(-7, 7))
def test_sight_line_symmetric_under_isometries(dx, dy):
    base = set(sight_line(dx, dy))
    maps = [
        lambda x, y: (-y, x),
        lambda x, y: (-x, -y),
        lambda x, y: (y, -x),
        lambda x, y: (-x, y),
        lambda x, y: (x, -y),
    ]
    for m in maps:
        assert set(sight_line(*m(dx, dy))) == {m(*c) for c in base}
    # reversibility: seen from the other end
    assert set(sight_line(-dx, -dy)) == {(c[0] - dx, c[1] - dy) for c in base}


@settings(max_examples=300, deadline=None)
@given(st.integers(-8, 8), st.integers(-8, 8), st.sampled_from((0, 90, 180, 270)), st.floats(1.0, 180.0))
def test_in_cone_matches_angle_oracle(dx, dy, heading, fov):
    if dx == 0 and dy == 0:
        assert not in_cone(dx, dy, heading, fov)
        return
    hx, hy = DIRECTIONS[heading]
    ang = abs(math.degrees(math.atan2(hx * dy - hy * dx, hx * dx + hy * dy)))
    if abs(ang - fov / 2) > 1e-6:
        assert in_cone(dx, dy, heading, fov) == (ang <= fov / 2)


def test_cone_boundary_is_inclusive():
    # 45 degrees off-axis sits exactly on the edge of a 90 degree cone
    assert in_cone(1, -1, 0, 90.0)
    assert not in_cone(1, 0, 0, 90.0)
    assert in_cone(1, 0, 0, 180.0)


def test_observation_excludes_own_cell_and_occluded():
    env = open_env(["....", ".#..", "....", "...."])
    obs = observe(env, AgentState((1, 2), 0), 90.0)
    assert (1, 2) not in obs.visible_positions
    assert (1, 1) in obs.visible_positions  # the wall itself is seen
    assert (1, 0) not in obs.visible_positions  # behind it
    assert obs.fov_degrees == 90.0


def test_observation_respects_sensing_range():
    env = open_env()
    obs = observe(env, AgentState((0, 0), 90), 180.0, sensing_range=2)
    assert all(math.hypot(x, y) <= 2 for x, y in obs.visible_positions)


def test_completion_predicate():
    env = open_env(OPEN, [SceneObject(0, "chair", (3, 1))])
    task = TaskInstruction("chair", CompletionCondition(90, 2.0, True))
    assert is_complete(env, AgentState((1, 1), 90), task)
    assert not is_complete(env, AgentState((1, 1), 0), task)  # outside cone
    assert not is_complete(env, AgentState((0, 1), 90), task)  # too far
    assert not is_complete(env, AgentState((3, 1), 90), task)  # own cell
    walled = open_env(["......", "..#...", "......", "......"], [SceneObject(0, "chair", (3, 1))])
    assert not is_complete(walled, AgentState((1, 1), 90), task)
    no_los = TaskInstruction("chair", CompletionCondition(90, 2.0, False))
    assert is_complete(walled, AgentState((1, 1), 90), no_los)


def test_line_of_sight_reciprocal():
    env = generate_environment(4, GenerationParams(9, 9, 0.3, 3))
    cells = env.free_cells()
    for a in cells[::5]:
        for b in cells[::7]:
            assert line_of_sight(env, a, b) == line_of_sight(env, b, a)


def test_condition_containment():
    base = CompletionCondition(90, 2.0, True)
    assert CompletionCondition(67.5, 2.0, True).contained_in(base)
    assert not base.contained_in(CompletionCondition(67.5, 2.0, True))
    assert not CompletionCondition(90, 2.0, False).contained_in(base)
    with pytest.raises(ValueError):
        CompletionCondition(0, 2.0)
    with pytest.raises(ValueError):
        CompletionCondition(90, -1.0)


# -- generation --------------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.0, 0.35))
def test_generation_is_connected_and_valid(seed, density):
    params = GenerationParams(10, 9, density, 4)
    env = generate_environment(seed, params)
    free = set(env.free_cells())
    assert bfs_component(env, next(iter(free))) == free
    assert len(env.categories) >= 2
    assert all(env.is_free(o.position) for o in env.objects)
    assert len({o.position for o in env.objects}) == len(env.objects)
    assert all(0 <= m < 8 for m in env.materials)
    assert 0 <= env.lighting.hue <= 1 and 0.5 <= env.lighting.brightness <= 1.5


def test_generation_deterministic():
    p = GenerationParams()
    assert generate_environment(11, p).to_json() == generate_environment(11, p).to_json()
    assert generate_environment(11, p).to_json() != generate_environment(12, p).to_json()


def test_generation_params_validated():
    with pytest.raises(ValueError):
        GenerationParams(1, 5)
    with pytest.raises(ValueError):
        GenerationParams(5, 5, 1.2)


def test_json_roundtrip_and_key_order():
    env = generate_environment(5, GenerationParams(7, 6, 0.2, 3))
    d = json.loads(env.to_json())
    assert list(d) == ["width", "height", "occupancy", "objects", "materials", "lighting", "seed"]
    assert GridEnvironment.from_dict(d) == env


def test_ascii_roundtrip():
    rows = ["#...", ".#..", "....", "...."]
    env = GridEnvironment.from_ascii(rows, [SceneObject(0, "bed", (2, 2))], seed=1)
    assert env.to_ascii() == ["#...", ".#..", "..B.", "...."]


def test_environment_rejects_object_on_wall():
    with pytest.raises(ValueError):
        GridEnvironment.from_ascii(["#..."] + ["...."] * 3, [SceneObject(0, "bed", (0, 0))])


# -- scene mutation ---------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_scene_mutation_is_cosmetic(seed):
    env = generate_environment(seed % 97, GenerationParams(8, 8, 0.2, 3))
    m = mutate_scene(env, SceneMutation.MATERIALS, seed)
    assert m.occupancy == env.occupancy and m.objects == env.objects and m.lighting == env.lighting
    assert all(FAMILY_OF[a] == FAMILY_OF[b] for a, b in zip(env.materials, m.materials))
    light = mutate_scene(env, SceneMutation.LIGHTING, seed)
    assert light.materials == env.materials
    assert 0.0 <= light.lighting.hue <= 1.0 and 0.5 <= light.lighting.brightness <= 1.5


def test_feature_vector_layout():
    env = generate_environment(2, GenerationParams(6, 6, 0.1, 2))
    v = scene_feature_vector(env)
    assert v.shape == (10,)
    assert v[:8].sum() == pytest.approx(1.0)
    assert v[8] == env.lighting.hue and v[9] == env.lighting.brightness
    assert cosine_similarity(v, v) == pytest.approx(1.0)
    assert cosine_similarity(np.array([1.0, 0]), np.array([0, 1.0])) == 0.0


def test_lighting_range_checked():
    with pytest.raises(ValueError):
        Lighting(1.5, 1.0)
    with pytest.raises(ValueError):
        Lighting(0.5, 2.0)


def test_categories_fixed():
    assert len(CATEGORIES) == 8 and len(set(CATEGORIES)) == 8


# -- isometries ------------------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**5), st.sampled_from(list(Transform)))
def test_transform_preserves_oracle_cost(seed, t):
    env = generate_environment(seed, GenerationParams(9, 7, 0.2, 3))
    start = AgentState(env.free_cells()[0], 90)
    task = TaskInstruction(sorted(env.categories)[0], CompletionCondition())
    env2, start2 = transform_case(env, start, t)
    assert shortest_path_cost(env2, start2, task) == shortest_path_cost(env, start, task)


def test_four_quarter_turns_are_identity():
    env = generate_environment(8, GenerationParams(7, 7, 0.2, 3))
    s = AgentState(env.free_cells()[3], 180)
    e, t = env, s
    for _ in range(4):
        e, t = transform_case(e, t, Transform.ROTATE_90)
    assert e == env and t == s


def test_mirror_twice_is_identity():
    env = generate_environment(9, GenerationParams(6, 8, 0.2, 3))
    s = AgentState(env.free_cells()[1], 90)
    for t in (Transform.MIRROR_X, Transform.MIRROR_Y):
        e, p = transform_case(*transform_case(env, s, t), t)
        assert e == env and p == s
