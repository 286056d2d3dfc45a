import numpy as np
import pytest

from stiffbuck.pathtrace import detect_buckling, trace, work_energy_audit
from stiffbuck.scenarios import model_a_analytic, scenario
from stiffbuck.stability import Classification

from conftest import spring_arm

AXIAL = np.array([-1.0, 0, 0, 0, 0, 0])


@pytest.fixture(scope="module")
def model_a_path():
    return trace(scenario("modelA-S").build(), AXIAL, 1.0, 20)


def test_trace_follows_closed_form(model_a_path):
    assert len(model_a_path) == 21 and model_a_path[0].delta == 0.0
    for p in model_a_path[1:]:
        assert p.converged and p.verdict.classification is Classification.STABLE
        assert p.F_along == pytest.approx(model_a_analytic(p.delta), rel=1e-8)


def test_audit_is_small_and_shrinks(model_a_path):
    coarse = work_energy_audit(model_a_path)
    fine = work_energy_audit(trace(scenario("modelA-S").build(), AXIAL, 1.0, 40))
    assert fine < coarse < 1e-2
    assert coarse / fine == pytest.approx(4.0, rel=0.1)


def test_linear_chain_has_no_event():
    ch = spring_arm(2)
    path = trace(ch, [1, 0, 0, 0, 0, 0], 1e-3, 6)
    assert all(p.converged for p in path)
    assert detect_buckling(path, ch) is None
    k = [p.tangent_stiffness for p in path]
    assert np.ptp(k) < 1e-3 * abs(np.mean(k))


def test_beam_chain_buckles_near_reference():
    ch = scenario("modelB-S").build()
    path = trace(ch, AXIAL, 0.002, 20)
    rep = detect_buckling(path, ch, ray=AXIAL)
    assert rep is not None and rep.crossing_kind == "eigenvalue_zero"
    assert 0.85 < rep.critical_force < 1.05
    assert rep.post_stiffness < rep.pre_stiffness / 5


def test_gaps_are_marked():
    ch = scenario("modelA-S").build()
    path = trace(ch, [1, 0, 0, 0, 0, 0], 0.5, 3)
    assert path[0].converged and all(p.gap for p in path[1:])
    assert np.isnan(path[1].F_along)


def test_argument_checks():
    ch = scenario("modelA-S").build()
    with pytest.raises(ValueError):
        trace(ch, AXIAL, 1.0, 1)
    with pytest.raises(ValueError):
        trace(ch, np.zeros(6), 1.0, 5)
    with pytest.raises(ValueError):
        trace(ch, AXIAL, -1.0, 5)
    assert len(trace(ch, AXIAL, 0.0, 5)) == 1


@pytest.mark.xfail(strict=True, reason="rigid three-link geometry softens by about 21% over this range; "
                                       "confirmed by direct constrained energy minimisation")
def test_model_a_pi_small_deflection_is_near_linear():
    sc = scenario("modelA-Pi")
    path = trace(sc.build(), sc.ray, 0.05, 10)
    k = np.array([p.tangent_stiffness for p in path[1:]])
    assert np.ptp(k) / np.mean(k) < 0.05


@pytest.mark.parametrize("name", ["modelA-S", "modelB-Z", "modelC-Pi"])
def test_energy_rises_along_stable_loaded_segments(name):
    sc = scenario(name)
    path = trace(sc.build(), sc.ray, sc.delta_max, 12)
    for p, q in zip(path, path[1:]):
        if p.converged and q.converged and p.verdict.stable and q.verdict.stable and min(p.F_along, q.F_along) >= 0:
            assert q.energy >= p.energy - 1e-12 * max(1.0, abs(p.energy))
