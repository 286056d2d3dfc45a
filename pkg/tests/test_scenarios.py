import numpy as np
import pytest

from stiffbuck.chain import Assembly, ChainModel
from stiffbuck.equilibrium import solve, tool_pose
from stiffbuck.errors import DomainError, ModelError
from stiffbuck.scenarios import (
    BISECTING_RAY,
    Model,
    ScenarioSpec,
    model_a_analytic,
    scenario,
    scenario_names,
    workspace_point,
)


def test_registry():
    names = scenario_names()
    assert len(names) == 14
    for n in names:
        assert scenario(n).name == n
    with pytest.raises(ModelError):
        scenario("modelD-S")
    with pytest.raises(ModelError):
        scenario("orthoglide-Q9")


@pytest.mark.parametrize("name", [n for n in scenario_names() if n.startswith("model")])
def test_planar_models_start_unloaded_on_the_axis(name):
    ch = scenario(name).build()
    assert isinstance(ch, ChainModel)
    t = tool_pose(ch)
    assert abs(t.position[1]) < 1e-12 and t.position[0] > 0
    st = solve(ch, t)
    assert st.converged and np.allclose(st.F_vector, 0, atol=1e-10)


def test_dimensions():
    assert (lambda c: (c.n, c.m))(scenario("modelA-S").build()) == (1, 2)
    assert (lambda c: (c.n, c.m))(scenario("modelB-S").build()) == (2, 9)
    assert (lambda c: (c.n, c.m))(scenario("modelC-S").build()) == (5, 18)
    asm = scenario("orthoglide-Q0").build()
    assert isinstance(asm, Assembly) and len(asm.chains) == 3


@pytest.mark.parametrize("label", ["Q0", "Q1", "Q2", "Q3", "Q4"])
def test_orthoglide_closes_at_workspace_point(label):
    asm = scenario(f"orthoglide-{label}").build()
    home = asm.home()
    from stiffbuck.chain import forward_pose
    p = [forward_pose(c, h).position for c, h in zip(asm.chains, home)]
    assert np.allclose(p, workspace_point(label), atol=1e-9)


def test_bisecting_ray_unit():
    assert np.linalg.norm(BISECTING_RAY) == pytest.approx(1.0)


def test_closed_form_domain():
    with pytest.raises(DomainError):
        model_a_analytic(2.5)
    with pytest.raises(DomainError):
        model_a_analytic(0.5, branch="sideways")
    with pytest.raises(ModelError):
        ScenarioSpec(Model.A, L=-1.0)


def _min_energy_force(angles, deltas):
    """Axial force of a rigid three-link arm with unit rotational springs by constrained minimisation."""
    from scipy.optimize import minimize

    a1, a2 = angles

    def end(v):
        A = np.cumsum([v[0], a1 + v[1], a2 + v[2]])
        return np.array([np.cos(A).sum(), np.sin(A).sum()])

    p = end([0.0, 0.0, 0.0])
    x0 = np.linalg.norm(p)
    guess = np.array([-np.arctan2(p[1], p[0]), 1e-3, -1e-3])
    U = []
    for d in deltas:
        cons = {"type": "eq", "fun": lambda v, d=d: end(v) - np.array([x0 - d, 0.0])}
        r = minimize(lambda v: 0.5 * (v[1] ** 2 + v[2] ** 2), guess, constraints=[cons], method="SLSQP",
                     options={"ftol": 1e-16, "maxiter": 500})
        U.append(r.fun)
        guess = r.x
    return np.gradient(np.array(U), deltas)


def test_closed_form_against_energy_minimisation():
    deltas = np.linspace(0.2, 1.0, 81)
    F = _min_energy_force((0.0, 0.0), deltas)
    inner = slice(5, -5)
    expected = np.array([model_a_analytic(d) for d in deltas[inner]])
    assert np.allclose(F[inner], expected, rtol=1e-3)
