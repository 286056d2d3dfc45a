import numpy as np
import pytest

from stiffbuck.chain import Configuration
from stiffbuck.equilibrium import newton_continue, solve_for_pose, state_at, tool_pose
from stiffbuck.scenarios import scenario
from stiffbuck.stability import (
    Classification,
    _task_jacobians,
    classify,
    constraint_nullspace,
    energy_probe,
    stability_matrix,
)

from conftest import spring_arm, two_link

AXIAL = np.array([-1.0, 0, 0, 0, 0, 0])


def _axial_state(f):
    ch = scenario("modelA-S").build()
    return ch, state_at(ch, ch.home(), np.r_[-f, 0, 0, 0, 0, 0])


def test_nullspace_is_orthonormal_kernel():
    ch = two_link(preloaded=True)
    cfg = Configuration(np.zeros(0), np.array([0.3, 0.4]))
    Jt, Jq = _task_jacobians(ch, cfg)
    b = constraint_nullspace(Jt, Jq)
    assert b.r == 0
    ch = scenario("modelB-S").build()
    Jt, Jq = _task_jacobians(ch, ch.home())
    b = constraint_nullspace(Jt, Jq)
    V = b.stacked
    assert np.allclose(V.T @ V, np.eye(b.r), atol=1e-12)
    assert np.allclose(np.hstack([Jt, Jq]) @ V, 0, atol=1e-12)


@pytest.mark.parametrize("f,expected", [
    (0.5, Classification.STABLE),
    (0.99, Classification.STABLE),
    (1.01, Classification.UNSTABLE),
    (2.0, Classification.UNSTABLE),
])
def test_axial_threshold(f, expected):
    ch, st = _axial_state(f)
    assert classify(ch, st).classification is expected


def test_threshold_is_critical():
    ch, st = _axial_state(1.0)
    assert classify(ch, st).classification is Classification.CRITICAL


def test_unloaded_chain_is_stable_with_positive_matrix():
    ch = scenario("modelC-Pi").build()
    st = solve_for_pose(ch, tool_pose(ch))
    v = classify(ch, st)
    assert v.stable and v.min_eigenvalue > 0
    M = stability_matrix(ch, st)
    assert np.allclose(M, M.T, atol=1e-12)


@pytest.mark.parametrize("delta,unstable", [(3e-4, False), (1e-3, True)])
def test_probe_agrees_with_classification(delta, unstable):
    # straight compressed branch of the beam chain, followed past its limit
    ch = scenario("modelB-S").build()
    st = newton_continue(ch, tool_pose(ch).displaced(delta * AXIAL), ch.home(), np.zeros(6))
    assert st.converged
    assert classify(ch, st).stable is not unstable
    rep = energy_probe(ch, st, samples=60)
    assert rep.used == 60 and rep.agreement == 1.0
    # one soft direction among eight: random samples rarely descend, but every
    # sample must carry the sign the quadratic form predicts
    assert rep.verdict.classification is classify(ch, st).classification


def test_probe_without_kernel():
    ch = two_link(preloaded=True)
    st = solve_for_pose(ch, tool_pose(ch))
    rep = energy_probe(ch, st, samples=5)
    assert rep.used == 0 and rep.verdict.stable
