import json
import math

import pytest
from scipy.optimize import brentq

from hybridpoly.flow import (
    EQUILIBRIUM_APPROACH, JUMP_LIMIT, NON_REGULAR_HIT, SINGULAR_EVENT, TIME_LIMIT, JumpEvent, SectionDef,
    SmoothArc, flow_hybrid, integrate_smooth, section_hits, trajectory_to_csv, trajectory_to_json,
)
from hybridpoly.integrator import IntegratorOptions
from hybridpoly.sysdef import JUMP_CROSSING, JUMP_SINGULARITY, load_system

from conftest import V0, pinball_energy, system


def apex_heights(traj):
    """Maxima of x on each arc, located on the dense output where x' = y changes sign."""
    out = []
    for arc in traj.arcs:
        for st in arc.steps:
            if st.y0[1] > 0 >= st.y1[1]:
                th = brentq(lambda t: st.at(t)[1], 0.0, 1.0, xtol=1e-15)
                out.append(st.at(th)[0])
    return out


def test_ball_first_impact(ball):
    res = integrate_smooth(ball, 0, (1.0, 0.0), 10.0)
    assert res.hit is not None and res.hit.manifold_index == 0
    assert res.hit.t == pytest.approx(math.sqrt(2 / 9.8), abs=1e-9)
    assert res.hit.p[1] == pytest.approx(-math.sqrt(2 * 9.8), abs=1e-8)
    assert abs(res.hit.p[0]) <= 1e-11


def test_harmonic_closes():
    res = integrate_smooth(system("harmonic"), 0, (1.0, 0.0), 2 * math.pi)
    assert res.hit is None and res.termination == TIME_LIMIT
    x, y = res.arc.end
    assert math.hypot(x - 1, y) < 1e-6


def test_pinball_above_separatrix_hits_right_wall(pinball):
    res = integrate_smooth(pinball, 0, (0.0, 2.9), 10.0)
    assert res.hit.manifold_index == 0
    assert res.hit.p[1] > 0
    assert pinball_energy(res.hit.p) == pytest.approx(pinball_energy((0.0, 2.9)), abs=1e-8)


def test_ball_apex_recursion(ball):
    traj = flow_hybrid(ball, (1.0, 0.0), 10.0, 3)
    assert traj.termination == JUMP_LIMIT
    assert len(traj.jumps) == 3
    assert apex_heights(traj) == pytest.approx([0.25, 0.0625, 0.015625], rel=1e-8)
    assert all(j.kind == JUMP_CROSSING for j in traj.jumps)


def test_ball_at_rest(ball):
    traj = flow_hybrid(ball, (0.0, 0.0), 10.0, 10)
    assert traj.termination == EQUILIBRIUM_APPROACH


def test_ball_zeno_terminates(ball):
    traj = flow_hybrid(ball, (1.0, 0.0), 10.0, 1000)
    assert traj.termination == EQUILIBRIUM_APPROACH
    assert traj.t_end < 3 * math.sqrt(2 / 9.8) + 1e-6


def test_jump_events_on_manifold(pinball):
    traj = flow_hybrid(pinball, (0.0, 3.2), 5.0, 8)
    assert len(traj.jumps) >= 4
    tol = pinball.tolerances
    for j in traj.jumps:
        m = pinball.manifolds[j.manifold_index]
        assert abs(m.value(j.p)) <= tol.event_tol
        assert abs(m.value(j.p_bar)) <= tol.jump_consistency_tol
    assert [j.manifold_index for j in traj.jumps[:4]] == [0, 1, 0, 1]


def test_pinball_arcs_conserve_energy(pinball):
    traj = flow_hybrid(pinball, (0.0, 3.2), 5.0, 8)
    for arc in traj.arcs:
        e = [pinball_energy((x, y)) for _, x, y in arc.samples]
        duration = arc.samples[-1][0] - arc.samples[0][0]
        assert max(e) - min(e) <= 1e-6 * max(duration, 1e-3)


def test_segments_alternate(pinball):
    traj = flow_hybrid(pinball, (0.0, 3.2), 5.0, 6)
    kinds = [type(s) for s in traj.segments]
    assert kinds[0] is SmoothArc
    for a, b in zip(kinds, kinds[1:]):
        assert a is not b
    for k, seg in enumerate(traj.segments[1:], 1):
        if isinstance(seg, SmoothArc):
            prev = traj.segments[k - 1]
            assert (seg.samples[0][1], seg.samples[0][2]) == pytest.approx(prev.p_bar, abs=1e-3)
        for a, b in zip(getattr(seg, "samples", []), getattr(seg, "samples", [])[1:]):
            assert b[0] > a[0]


def test_stop_on_singular(pinball):
    traj = flow_hybrid(pinball, (0.3, V0), 5.0, 5, incoming_side=None, stop_on_singular=True)
    # starts inside, reaches the wall near v0 only if it is on the separatrix; use the wall point itself
    traj = flow_hybrid(pinball, (1.0, V0), 5.0, 5, stop_on_singular=True)
    assert traj.termination == SINGULAR_EVENT
    assert traj.pending_event is not None or traj.jumps[0].kind == JUMP_SINGULARITY


def test_non_regular_hit():
    doc = {"manifolds": [{"name": "a", "h": "x", "jump": ["x", "y"]},
                         {"name": "b", "h": "y", "jump": ["x", "y"]}],
           "fields": [{"signs": [0, 0], "f": ["-1", "-1"]}]}
    traj = flow_hybrid(load_system(doc), (1.0, 1.0), 5.0, 5)
    assert traj.termination == NON_REGULAR_HIT


def test_identity_jumps_are_seamless():
    """A global field split by an identity-jump manifold follows the single-field solution."""
    split = load_system({"manifolds": [{"name": "s", "h": "x", "jump": ["x", "y"]}],
                         "fields": [{"signs": [0], "f": ["y", "-x"]}]})
    free = system("harmonic")
    a = flow_hybrid(split, (0.5, 0.5), 6.0, 10)
    b = flow_hybrid(free, (0.5, 0.5), 6.0, 10)
    assert len(a.jumps) >= 2
    assert a.end == pytest.approx(b.end, abs=1e-8)


def test_no_manifolds_matches_smooth():
    h = system("harmonic")
    a = flow_hybrid(h, (1.0, 0.0), 3.0, 0)
    b = integrate_smooth(h, 0, (1.0, 0.0), 3.0)
    assert a.end == b.arc.end


def test_harmonic_section_hit():
    h = system("harmonic")
    traj = flow_hybrid(h, (1.0, 0.0), 2 * math.pi + 0.1, 0)
    hits = section_hits(traj, SectionDef((0, 0), (1, 0), 2.0))
    assert len(hits) == 1
    assert hits[0].s == pytest.approx(1.0, abs=1e-8)
    assert hits[0].t == pytest.approx(2 * math.pi, abs=1e-6)
    assert hits[0].orientation == 1
    assert section_hits(traj, SectionDef((5, 5), (1, 0), 1.0)) == []


def test_pinball_section_hits_alternate(pinball):
    traj = flow_hybrid(pinball, (0.0, 3.2), 5.0, 8)
    hits = section_hits(traj, SectionDef((0, -4), (0, 1), 8.0))
    assert len(hits) >= 4
    assert all(a.orientation != b.orientation for a, b in zip(hits, hits[1:]))


def test_exports_deterministic(ball):
    a = flow_hybrid(ball, (1.0, 0.0), 5.0, 4)
    b = flow_hybrid(ball, (1.0, 0.0), 5.0, 4)
    assert trajectory_to_csv(a) == trajectory_to_csv(b)
    assert trajectory_to_json(a) == trajectory_to_json(b)
    doc = json.loads(trajectory_to_json(a))
    assert doc["termination"] == JUMP_LIMIT
    first = trajectory_to_csv(a).splitlines()
    assert first[0] == "segment,kind,t,x,y"
    # 17 significant digits round-trip
    for line in first[1:20]:
        for cell in line.split(",")[2:]:
            assert float(repr(float(cell))) == float(cell)


def test_options_passthrough(ball):
    opts = IntegratorOptions(h_max=0.01)
    res = integrate_smooth(ball, 0, (1.0, 0.0), 10.0, opts)
    assert max(st.h for st in res.arc.steps) <= 0.01 + 1e-15


def test_jump_event_type(ball):
    traj = flow_hybrid(ball, (1.0, 0.0), 10.0, 1)
    assert isinstance(traj.segments[1], JumpEvent)
    assert traj.segments[1].p_bar[1] == pytest.approx(-0.5 * traj.segments[1].p[1], rel=1e-15)
