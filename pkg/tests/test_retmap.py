import math

import pytest

from hybridpoly.flow import SectionDef, flow_hybrid
from hybridpoly.local import reverse_system
from hybridpoly.retmap import (
    EMPIRICAL_MIXED, EMPIRICAL_STABLE, EMPIRICAL_UNSTABLE, BracketInvalid, NoReturn, ReturnMapOptions,
    find_fixed_point, probe_to_csv, return_map, stability_probe,
)

from conftest import V0, spec, system

AXIS = SectionDef((0.0, 0.0), (1.0, 0.0), 2.0)


def test_options_validation():
    with pytest.raises(ValueError):
        ReturnMapOptions(t_max=0)
    with pytest.raises(ValueError):
        ReturnMapOptions(max_jumps=-1)
    with pytest.raises(ValueError):
        ReturnMapOptions(orientation=2)


@pytest.mark.parametrize("s", [0.2, 0.5, 1.0])
def test_harmonic_identity(s):
    r = return_map(system("harmonic"), AXIS, s)
    assert r.pi_s == pytest.approx(s, abs=1e-8)
    assert r.t == pytest.approx(2 * math.pi, abs=1e-6)


def test_pinball_near_polycycle_contracts(pinball):
    sec = spec("pinball_gamma").section
    for s in (0.01 * V0, 0.05 * V0, 1.0):
        assert return_map(pinball, sec, s).pi_s < s


def test_pinball_return_crosses_both_walls(pinball):
    r = return_map(pinball, spec("pinball_gamma").section, 2.0)
    assert r.jumps == 2
    assert r.orientation == 1


def test_pinball_large_s_spirals_out(pinball):
    sec = spec("pinball_gamma").section
    for s in (3.5, 3.9):
        assert return_map(pinball, sec, s).pi_s > s
    with pytest.raises(NoReturn):
        return_map(pinball, sec, 4.5)


def test_probe_verdicts(pinball):
    sec = spec("pinball_gamma").section
    grid = [0.01 * V0, 0.02 * V0, 0.05 * V0]
    assert stability_probe(pinball, sec, grid).verdict == EMPIRICAL_STABLE
    assert stability_probe(reverse_system(pinball), sec, grid).verdict == EMPIRICAL_UNSTABLE


def test_probe_harmonic_degenerate():
    res = stability_probe(system("harmonic"), AXIS, [0.2, 0.5, 1.0])
    assert res.degenerate and res.verdict == EMPIRICAL_MIXED
    assert all(abs(e.gap) <= 1e-8 for e in res.entries)


def test_probe_grid_checks(pinball):
    sec = spec("pinball_gamma").section
    with pytest.raises(ValueError):
        stability_probe(pinball, sec, [2.0, 1.0])
    with pytest.raises(ValueError):
        stability_probe(pinball, sec, [0.0, 1.0])
    with pytest.raises(ValueError):
        stability_probe(pinball, sec, [])


def test_probe_partial_failure_recorded(pinball):
    sec = spec("pinball_gamma").section
    res = stability_probe(pinball, sec, [1.0, 4.5])
    assert res.entries[1].pi_s is None and res.entries[1].error
    assert res.verdict == EMPIRICAL_MIXED
    with pytest.raises(NoReturn):
        stability_probe(pinball, sec, [4.5, 5.0])


def test_probe_csv(pinball):
    res = stability_probe(pinball, spec("pinball_gamma").section, [1.0, 4.5])
    lines = probe_to_csv(res).splitlines()
    assert lines[0] == "s,pi_s,gap"
    assert lines[2] == "4.5,,"
    assert float(lines[1].split(",")[1]) == res.entries[0].pi_s


def test_monotone_on_probe_grid(pinball):
    sp = spec("pinball_gamma")
    values = [return_map(pinball, sp.section, s).pi_s for s in sp.probe_grid]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_fixed_point_certificate(pinball):
    sp = spec("pinball_gamma")
    tol = 1e-10
    fp = find_fixed_point(pinball, sp.section, sp.bracket, tol=tol)
    assert sp.bracket[0] < fp.s_star < sp.bracket[1]
    assert abs(fp.gap) <= 10 * tol
    assert fp.jumps_per_period == 2
    start = sp.section.point(fp.s_star)
    traj = flow_hybrid(pinball, start, fp.period_time, 10)
    end = traj.end
    assert math.hypot(end[0] - start[0], end[1] - start[1]) <= 10 * tol
    assert fp.to_json().keys() >= {"s_star", "gap", "period_time", "jumps_per_period"}


def test_fixed_point_harmonic_degenerate():
    fp = find_fixed_point(system("harmonic"), AXIS, (0.5, 1.5))
    assert fp.degenerate
    assert fp.s_star == 1.0
    assert abs(fp.gap) <= 1e-8


def test_bouncing_ball_bracket_invalid(ball):
    sec = SectionDef((0.5, 0.0), (0.0, 1.0), 20.0)
    with pytest.raises(BracketInvalid):
        find_fixed_point(ball, sec, (1.0, 5.0))


def test_same_sign_bracket_invalid(pinball):
    with pytest.raises(BracketInvalid, match="same sign"):
        find_fixed_point(pinball, spec("pinball_gamma").section, (1.0, 2.0))


@pytest.mark.parametrize("name,sysname", [("pinball_gamma_R", "pinball"), ("pinball_gamma_L", "pinball"),
                                          ("two_saddle_loop", "two_saddle"),
                                          ("regular_tangential_loop", "regular_tangential")])
def test_shipped_probe_grids_resolve(name, sysname):
    sp = spec(name)
    res = stability_probe(system(sysname), sp.section, sp.probe_grid)
    assert all(e.error is None for e in res.entries)


def test_two_saddle_return_map_power_law():
    sp = spec("two_saddle_loop")
    s = system("two_saddle")
    for x in sp.probe_grid:
        assert return_map(s, sp.section, x).pi_s == pytest.approx(2 ** 0.25 * math.sqrt(x), rel=0.05)
