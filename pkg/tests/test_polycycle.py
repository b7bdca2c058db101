import json
import math

import pytest

from hybridpoly.polycycle import (
    INCONCLUSIVE, STABLE, UNSTABLE, IndeterminateRatio, NotHyperbolicPolycycle, analyze_polycycle,
    classify_stability, graphic_number, load_spec, verify_connections,
)
from hybridpoly.local import analyze_singularity
from hybridpoly.retmap import stability_probe
from hybridpoly.sysdef import ConfigError, load_system

from conftest import V0, data_path, spec, system

SHIPPED = [
    ("pinball", "pinball_gamma_L", 3.0, STABLE),
    ("pinball", "pinball_gamma_R", 3.0, STABLE),
    ("pinball", "pinball_gamma", 9.0, STABLE),
    ("two_saddle", "two_saddle_loop", 0.5, UNSTABLE),
    ("regular_tangential", "regular_tangential_loop", 2.0, STABLE),
    ("fish", "fish_loop", 1.0, INCONCLUSIVE),
]


def test_graphic_number_examples():
    assert graphic_number([1.0, 3.0]) == 3.0
    assert graphic_number([1.0, 3.0, 1.0, 3.0]) == 9.0
    assert graphic_number([2.0, math.inf]) == math.inf
    with pytest.raises(IndeterminateRatio):
        graphic_number([2.0, None])
    assert graphic_number([1e200, 1e200, 1e-300]) == pytest.approx(1e100, rel=1e-12)


def test_graphic_number_cyclic_invariance():
    rs = [1.0, 3.0, 0.7, 2.5, 1.3]
    base = graphic_number(rs)
    for k in range(len(rs)):
        assert graphic_number(rs[k:] + rs[:k]) == pytest.approx(base, rel=1e-15)


def test_classify_stability():
    assert classify_stability(3.0).verdict == STABLE
    assert classify_stability(math.inf).verdict == STABLE
    v = classify_stability(1.0)
    assert v.verdict == INCONCLUSIVE and v.inconclusive_reason
    assert classify_stability(0.5).verdict == UNSTABLE
    assert classify_stability(1 + 1e-7).verdict == INCONCLUSIVE


@pytest.mark.parametrize("sysname,specname,r,verdict", SHIPPED)
def test_shipped_verdicts(sysname, specname, r, verdict):
    v = analyze_polycycle(system(sysname), spec(specname))
    assert v.r == r
    assert v.verdict == verdict
    assert all(e.passed for e in v.edges)
    json.dumps(v.to_json())


def test_fish_homoclinic_residual():
    v = analyze_polycycle(system("fish"), spec("fish_loop"))
    assert v.edges[0].residual <= 1e-5


def test_pinball_edges_into_saddle(pinball):
    s = spec("pinball_gamma")
    reports = [analyze_singularity(pinball, d) for d in s.singularities]
    edges = verify_connections(pinball, s, reports)
    assert all(e.residual <= pinball.tolerances.connection_tol for e in edges)


def test_perturbed_pinball_rejected():
    with open(data_path("pinball.json")) as fh:
        doc = json.load(fh)
    doc["params"]["g"] = 9.8 * 1.05
    with pytest.raises(NotHyperbolicPolycycle, match="does not connect"):
        analyze_polycycle(load_system(doc), spec("pinball_gamma_R"))


def test_saddle_on_manifold_rejected():
    s = load_system({"manifolds": [{"name": "s", "h": "y", "jump": ["x", "y"]}],
                     "fields": [{"signs": [0], "f": ["x", "-y"]}]})
    sp = load_spec({"singularities": [{"type": "saddle", "guess": [0.1, 0.1]}],
                    "edges": [{"from": 0, "to": 0}],
                    "section": {"base": [0.5, 0.5], "direction": [1, 0], "length": 1, "interior_side": 1}})
    with pytest.raises(NotHyperbolicPolycycle, match="manifold"):
        analyze_polycycle(s, sp)


def test_regular_point_is_not_a_singularity(pinball):
    sp = load_spec({"singularities": [{"type": "saddle", "guess": [0.3, 0.2]},
                                      {"type": "jump", "p": [1.0, 1.0], "manifold": "right",
                                       "incoming_side": -1, "outgoing_side": -1}],
                    "edges": [{"from": 0, "to": 1}, {"from": 1, "to": 0}],
                    "section": {"base": [0.5, 0.5], "direction": [0, 1], "length": 1, "interior_side": 1}})
    with pytest.raises(NotHyperbolicPolycycle):
        analyze_polycycle(pinball, sp)


@pytest.mark.parametrize("doc,match", [
    ({"singularities": []}, "singularities"),
    ({"singularities": [{"type": "node"}]}, "saddle"),
    ({"singularities": [{"type": "saddle", "guess": [0, 0]}], "edges": [], "section": {}}, "edges"),
    ({"singularities": [{"type": "saddle", "guess": [0, 0]}], "bogus": 1}, "bogus"),
])
def test_spec_errors(doc, match):
    with pytest.raises(ConfigError, match=match):
        load_spec(doc)


@pytest.mark.parametrize("sysname,specname,r,verdict", [s for s in SHIPPED if s[3] != INCONCLUSIVE])
def test_verdict_matches_return_map(sysname, specname, r, verdict):
    sp = spec(specname)
    probe = stability_probe(system(sysname), sp.section, sp.probe_grid)
    assert probe.verdict == verdict


def test_filippov_reduction_ratios():
    """Identity jumps: every corner ratio is n_u/n_s and the tangential loop is stable."""
    s = system("regular_tangential")
    sp = spec("regular_tangential_loop")
    v = analyze_polycycle(s, sp)
    for rep in v.reports:
        assert rep.k0 == 1
        assert rep.ratio == rep.n_u / rep.n_s


def test_smooth_reduction_cherkas_rule():
    s = system("two_saddle")
    v = analyze_polycycle(s, spec("two_saddle_loop"))
    prod = 1.0
    for rep in v.reports:
        prod *= abs(rep.nu) / rep.lam
    assert v.r == pytest.approx(prod, rel=1e-15)
