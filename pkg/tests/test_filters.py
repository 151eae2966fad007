import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import LineString, Point

from nodmt.filters import (
    SemanticDistanceTable,
    distance_to_path,
    point_segment_distance,
    refinement_divergence,
    select_action,
    select_condition,
    select_diverse,
    select_position,
    select_random,
    select_scene,
)
from nodmt.gridworld import Action, CompletionCondition, cosine_similarity, scene_feature_vector
from nodmt.metamorphic import (
    ActionPayload,
    FollowUpCase,
    MRKind,
    SourceCase,
    gen_action_candidates,
    gen_condition_candidates,
    gen_position_candidates,
    gen_scene_candidates,
    generate_candidates,
)
from nodmt.planners import PlannerId, execute_episode

from conftest import sample_case

coord = st.floats(-20, 20, allow_nan=False)


def source(seed, planner=PlannerId.GREEDY_FRONTIER):
    env, task, start, cost = sample_case(seed)
    return SourceCase(env, task, start, execute_episode(planner, env, task, start, 20 * cost))


@settings(max_examples=300)
@given(coord, coord, coord, coord, coord, coord)
def test_point_segment_distance_matches_shapely(px, py, ax, ay, bx, by):
    expected = Point(px, py).distance(LineString([(ax, ay), (bx, by)])) if (ax, ay) != (bx, by) else math.hypot(px - ax, py - ay)
    assert point_segment_distance((px, py), (ax, ay), (bx, by)) == pytest.approx(expected, abs=1e-9)


def test_distance_to_path_single_point():
    assert distance_to_path((3, 4), [(0, 0)]) == 5.0
    assert distance_to_path((1, 1), [(0, 0), (2, 0), (2, 2)]) == 1.0


def test_default_table_shape():
    t = SemanticDistanceTable.default()
    assert t(Action.MOVE_AHEAD, Action.MOVE_BACK) == 1.0
    assert t(Action.ROTATE_LEFT, Action.ROTATE_RIGHT) == 1.0
    assert t(Action.MOVE_AHEAD, Action.MOVE_AHEAD) == 0.0
    for a in Action:
        for b in Action:
            assert t(a, b) == t(b, a)


def test_table_validation():
    acts = (Action.MOVE_AHEAD, Action.MOVE_BACK)
    with pytest.raises(ValueError):
        SemanticDistanceTable(acts, ((0.0, 1.0), (0.5, 0.0)))
    with pytest.raises(ValueError):
        SemanticDistanceTable(acts, ((0.1, 1.0), (1.0, 0.0)))
    acts3 = (Action.MOVE_AHEAD, Action.MOVE_BACK, Action.DONE)
    with pytest.raises(ValueError):  # opposites must be the maximum
        SemanticDistanceTable(acts3, ((0, 0.5, 0.9), (0.5, 0, 0.2), (0.9, 0.2, 0)))


def test_shipped_table_matches_default(tmp_path):
    from importlib.resources import files

    shipped = SemanticDistanceTable.from_json(files("nodmt") / "data" / "semantic_distance.json")
    assert shipped == SemanticDistanceTable.default()
    p = tmp_path / "t.json"
    p.write_text(shipped.to_json())
    assert SemanticDistanceTable.from_json(p) == shipped


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_position_selector_is_argmax(seed):
    src = source(seed)
    cands = gen_position_candidates(src)
    pick = select_position(cands, src.episode.trajectory)
    path = [p.position for p in src.episode.trajectory.poses]

    def d(c):
        pts = [path[0]] + [q for p, q in zip(path, path[1:]) if q != p]
        if len(pts) == 1:
            return Point(c.payload.intermediate_target.position).distance(Point(pts[0]))
        return Point(c.payload.intermediate_target.position).distance(LineString(pts))

    best = max(d(c) for c in cands)
    assert d(pick) == pytest.approx(best)
    ties = [c for c in cands if abs(d(c) - best) < 1e-9]
    assert pick.payload.intermediate_target.id == min(c.payload.intermediate_target.id for c in ties)


def test_position_chord_mode():
    src = source(33)
    cands = gen_position_candidates(src)
    pick = select_position(cands, src.episode.trajectory, "chord")
    a, b = src.episode.trajectory.poses[0].position, src.episode.trajectory.poses[-1].position
    best = max(point_segment_distance(c.payload.intermediate_target.position, a, b) for c in cands)
    assert point_segment_distance(pick.payload.intermediate_target.position, a, b) == pytest.approx(best)
    with pytest.raises(ValueError):
        select_position(cands, src.episode.trajectory, "spline")


@pytest.mark.parametrize(
    "planned,expected",
    [
        (Action.MOVE_AHEAD, Action.MOVE_BACK),
        (Action.MOVE_BACK, Action.MOVE_AHEAD),
        (Action.ROTATE_LEFT, Action.ROTATE_RIGHT),
        (Action.ROTATE_RIGHT, Action.ROTATE_LEFT),
    ],
)
def test_action_selector_prefers_opposite(planned, expected):
    cands = [FollowUpCase(MRKind.ACTION, ActionPayload(3, a)) for a in Action if a not in (planned, Action.DONE)]
    assert select_action(cands, planned).payload.extraneous_action is expected


def test_action_selector_tie_uses_enum_order():
    cands = [FollowUpCase(MRKind.ACTION, ActionPayload(3, a)) for a in (Action.ROTATE_RIGHT, Action.ROTATE_LEFT)]
    assert select_action(cands, Action.MOVE_AHEAD).payload.extraneous_action is Action.ROTATE_LEFT


def test_condition_selector_picks_tightest():
    src = source(2)
    pick = select_condition(gen_condition_candidates(src), src.task.condition)
    assert pick.payload.refined.fov_degrees == pytest.approx(67.5)
    both = gen_condition_candidates(src, refine_distance=True)
    pick = select_condition(both, src.task.condition)
    # equal relative shrinkage: the narrower cone wins the tie
    assert pick.payload.refined.fov_degrees == pytest.approx(67.5)
    assert refinement_divergence(CompletionCondition(90, 2), CompletionCondition(45, 1)) == pytest.approx(1.0)


def test_scene_selector_minimises_similarity():
    src = source(8)
    cands = gen_scene_candidates(src, 8, seed=2)
    pick = select_scene(cands, src.env)
    ref = scene_feature_vector(src.env)
    sims = [cosine_similarity(ref, scene_feature_vector(c.payload.mutated_env)) for c in cands]
    assert cands.index(pick) == sims.index(min(sims))


def test_random_selector_reproducible_and_uniform():
    cands = list(range(5))
    picks = [select_random(cands, s) for s in range(5000)]
    assert select_random(cands, 42) == select_random(cands, 42)
    counts = [picks.count(i) for i in cands]
    assert min(counts) > 850 and max(counts) < 1150
    with pytest.raises(ValueError):
        select_random([], 1)


def test_selectors_reject_wrong_kind():
    src = source(5)
    with pytest.raises(ValueError):
        select_position(gen_action_candidates(src), src.episode.trajectory)
    with pytest.raises(ValueError):
        select_scene([], src.env)


@pytest.mark.parametrize("kind", list(MRKind))
def test_dispatch_returns_a_candidate(kind):
    src = source(14)
    cands = generate_candidates(src, kind, seed=1)
    pick = select_diverse(cands, kind, src.episode.trajectory, src.task.condition, src.env)
    assert pick in cands
