import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridpoly.sysdef import (
    FIELD_VANISHES, JUMP_CROSSING, JUMP_SINGULARITY, NOT_LOCAL_DIFFEO, TANGENCY_AT_P, TANGENCY_AT_PBAR,
    AmbiguousMatch, ConfigError, Interior, NoMatch, NonRegular, OnBoundary, RegularBoundary, Tolerances,
    classify_boundary_event, classify_point, jump_chart_series, load_system, region_of,
)

from conftest import V0, data_path, system


def _doc(manifolds=(), fields=(), **extra):
    d = {"manifolds": list(manifolds), "fields": list(fields)}
    d.update(extra)
    return d


SPLIT = _doc([{"name": "s", "h": "y", "jump": ["x", "y"]}],
             [{"signs": [1], "f": ["1", "1"]}, {"signs": [-1], "f": ["1", "2"]}])

PINBALL_UNIT = _doc(
    [{"name": "right", "h": "x - 1", "jump": ["x", "-15/8*y + 5/4*y^3 - 3/8*y^5"]},
     {"name": "left", "h": "x + 1", "jump": ["x", "-15/8*y + 5/4*y^3 - 3/8*y^5"]}],
    [{"signs": [0, 0], "f": ["y", "g*cos(pi/2 + atan(-x))"]}], params={"g": 9.8})


# --------------------------------------------------------------------------
# Loading


def test_shipped_systems_load():
    b = system("bouncing_ball")
    assert len(b.manifolds) == 1 and len(b.fields) == 1
    p = system("pinball")
    assert [m.name for m in p.manifolds] == ["right", "left"]
    assert p.params["v0"] == V0


def test_pinball_v0_matches_separatrix_energy():
    assert V0 == pytest.approx(math.sqrt(2 * 9.8 * (math.sqrt(2) - 1)), rel=1e-15)


def test_jump_leaving_manifold_rejected():
    doc = _doc([{"name": "s", "h": "y", "jump": ["x", "y + 1"]}], [{"signs": [0], "f": ["1", "0"]}])
    with pytest.raises(ConfigError, match="jump"):
        load_system(doc)


@pytest.mark.parametrize("doc,match", [
    ('{"fields": [}', "line 1"),
    ({"fields": [], "extra": 1}, "unknown"),
    ({"fields": [{"signs": [], "f": ["x +", "y"]}]}, "offset"),
    ({"fields": [{"signs": [], "f": ["z", "y"]}]}, "z"),
    ({"fields": [{"signs": [1], "f": ["x", "y"]}]}, "signs"),
    ({"fields": [{"signs": [], "f": ["x", "y"]}], "tolerances": {"nope": 1}}, "nope"),
    ({"fields": [{"signs": [], "f": ["x", "y"]}], "tolerances": {"lie_tol": -1}}, "lie_tol"),
])
def test_config_errors(doc, match):
    with pytest.raises(ConfigError, match=match):
        load_system(doc if isinstance(doc, str) else json.dumps(doc))


def test_tolerance_overrides():
    s = load_system(SPLIT, tolerance_overrides={"lie_tol": 1e-7, "n_check": 8})
    assert s.tolerances.lie_tol == 1e-7 and s.tolerances.n_check == 8
    assert Tolerances().boundary_tol == 1e-9


# --------------------------------------------------------------------------
# Regions and points


def test_region_of_examples(pinball):
    assert region_of(pinball, (0, 1)) == 0
    s = load_system(SPLIT)
    assert s.fields[region_of(s, (0.3, -2))].signs == (-1,)
    with pytest.raises(OnBoundary):
        region_of(s, (0.3, 0))


def test_region_errors():
    gap = _doc([{"name": "s", "h": "y", "jump": ["x", "y"]}], [{"signs": [1], "f": ["1", "1"]}])
    with pytest.raises(NoMatch):
        region_of(load_system(gap), (0, -1))
    both = _doc([{"name": "s", "h": "y", "jump": ["x", "y"]}],
                [{"signs": [1], "f": ["1", "1"]}, {"signs": [0], "f": ["1", "2"]}])
    with pytest.raises(AmbiguousMatch):
        region_of(load_system(both), (0, 1))


def test_classify_point_examples(pinball):
    unit = load_system(PINBALL_UNIT)
    c = classify_point(unit, (1, 1))
    assert isinstance(c, RegularBoundary) and c.manifold_index == 0
    assert c.p_bar == pytest.approx((1.0, -1.0), abs=1e-15)
    assert classify_point(pinball, (0, 0.5)) == Interior(0)
    cross = _doc([{"name": "a", "h": "x", "jump": ["x", "y"]}, {"name": "b", "h": "y", "jump": ["x", "y"]}],
                 [{"signs": [0, 0], "f": ["1", "1"]}])
    assert classify_point(load_system(cross), (0, 0)) == NonRegular("on two manifolds")


def test_conjugated_pinball_image(pinball):
    c = classify_point(pinball, (1, V0))
    assert c.p_bar == pytest.approx((1.0, -V0), rel=1e-14)


@pytest.mark.parametrize("c", [1e-3, 1.0, 1e3])
def test_classify_point_scale_invariant(c):
    base = _doc([{"name": "s", "h": "y - x^2/4", "jump": ["x", "x^2/4"]}], [{"signs": [0], "f": ["1", "1"]}])
    scaled = json.loads(json.dumps(base))
    scaled["manifolds"][0]["h"] = f"{c!r}*(y - x^2/4)"
    a, b = load_system(base), load_system(scaled)
    for p in [(0.0, 0.0), (1.0, 0.25), (0.5, 1.0), (2.0, 1.0 + 1e-10), (1.0, 0.25 + 5e-10)]:
        assert type(classify_point(a, p)) is type(classify_point(b, p))
        assert classify_point(a, p) == classify_point(b, p)


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 2 * math.pi))
def test_region_locally_constant(x, y, ang):
    s = system("two_saddle")
    tol = s.tolerances.boundary_tol
    if min(abs(v) for v in s.h_values((x, y))) <= 2 * tol:
        return
    d = tol / 10
    assert region_of(s, (x, y)) == region_of(s, (x + d * math.cos(ang), y + d * math.sin(ang)))


# --------------------------------------------------------------------------
# Boundary events


def test_bouncing_ball_crossing(ball):
    ev = classify_boundary_event(ball, (0, -3))
    assert ev.kind == JUMP_CROSSING
    assert ev.xh_in == -3.0 and ev.xh_out == 1.5
    assert ev.p_bar == (0.0, 1.5)
    assert ev.chart_derivative == pytest.approx(-0.5, abs=1e-15)
    assert ev.product == pytest.approx(4.5, abs=1e-15)


def test_pinball_wall_not_local_diffeo(pinball):
    ev = classify_boundary_event(pinball, (1, V0))
    assert ev.kind == JUMP_SINGULARITY
    assert ev.reasons == frozenset({NOT_LOCAL_DIFFEO})


def test_quadratic_tangency_event():
    ev = classify_boundary_event(system("quadratic_tangency"), (0, 0))
    assert ev.kind == JUMP_SINGULARITY
    assert ev.reasons == frozenset({TANGENCY_AT_P, TANGENCY_AT_PBAR})


def test_field_vanishes():
    doc = _doc([{"name": "s", "h": "x", "jump": ["x", "y"]}], [{"signs": [0], "f": ["y", "x"]}])
    assert classify_boundary_event(load_system(doc), (0, 0)).kind == FIELD_VANISHES


@settings(max_examples=60, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_filippov_crossing_rule(a, b, c, d):
    """With an identity jump the event is a crossing exactly when both sides push the same way."""
    doc = _doc([{"name": "s", "h": "y", "jump": ["x", "y"]}],
               [{"signs": [1], "f": [repr(a), repr(b)]}, {"signs": [-1], "f": [repr(c), repr(d)]}])
    s = load_system(doc)
    if min(abs(b), abs(d)) <= 1e-6 or math.hypot(a, b) < 1e-6 or math.hypot(c, d) < 1e-6:
        return
    ev = classify_boundary_event(s, (0.0, 0.0))
    assert (ev.kind == JUMP_CROSSING) == (b * d > 0)


def test_explicit_sides(ball):
    ev = classify_boundary_event(ball, (0, -3), incoming_side=-1)
    assert TANGENCY_AT_P in ev.reasons


def test_jump_chart_series_identity_and_quintic(pinball):
    s = system("quadratic_tangency")
    psi, axis = jump_chart_series(s, 0, (0.0, 0.0), 4)
    assert axis == 0
    assert psi == pytest.approx([0, 1, 0, 0, 0], abs=1e-15)
    psi, axis = jump_chart_series(pinball, 0, (1.0, V0), 5)
    assert axis == 1
    assert psi[:4] == pytest.approx([0, 0, 0, -2.5 / V0 ** 2], abs=1e-12)


def test_chart_independence():
    """Both axes admissible on a diagonal line: same leading order."""
    doc = _doc([{"name": "s", "h": "x - y", "jump": ["x + (x-1)^3", "y + (y-1)^3"]}],
               [{"signs": [0], "f": ["1", "0"]}])
    s = load_system(doc)
    a, _ = jump_chart_series(s, 0, (1.0, 1.0), 4, chart_axis_in=0)
    b, _ = jump_chart_series(s, 0, (1.0, 1.0), 4, chart_axis_in=1)
    assert a == pytest.approx(b, abs=1e-12)


def test_data_files_are_valid_json():
    for name in ("pinball", "bouncing_ball", "two_saddle", "regular_tangential", "fish", "linear_saddle",
                 "quadratic_tangency", "harmonic"):
        with open(data_path(name + ".json")) as fh:
            json.load(fh)
    np.testing.assert_equal(system("harmonic").manifolds, ())
