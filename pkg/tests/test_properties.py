import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import expm_frechet

from stiffbuck.chain import (
    ActuatedLocked,
    Assembly,
    ChainModel,
    Configuration,
    FixedTransform,
    VirtualSpringBlock,
    jacobians,
)
from stiffbuck.config import dump_config, parse_config
from stiffbuck.elasticity import BeamSection, beam_spring_spatial
from stiffbuck.equilibrium import solve, solve_for_pose, state_at, tool_pose
from stiffbuck.scenarios import model_a_analytic, scenario
from stiffbuck.se3 import hat6, is_rotation, se3_exp, se3_right_jacobian, so3_exp, so3_log
from stiffbuck.stability import classify
from stiffbuck.stiffness import aggregate_parallel, kc_reduced, system_stiffness

finite = st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False)
vec3 = arrays(np.float64, 3, elements=finite)
vec6 = arrays(np.float64, 6, elements=finite)
FAST = settings(max_examples=40, deadline=None)


def _spd(seed, d):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(d, d))
    return A @ A.T + d * np.eye(d)


def _arm(seed, offset=(0.0, 0.0, 0.0), theta0=None):
    rng = np.random.default_rng(seed)
    t0 = np.zeros(12) if theta0 is None else np.asarray(theta0)
    els = [FixedTransform.translation(*offset)]
    for i in range(2):
        els += [ActuatedLocked("rz", float(rng.uniform(-1, 1))), ActuatedLocked("ry", float(rng.uniform(-1, 1))),
                VirtualSpringBlock(("tx", "ty", "tz", "rx", "ry", "rz"), _spd(int(rng.integers(1 << 30)), 6),
                                   t0[6 * i: 6 * i + 6]),
                FixedTransform.translation(*rng.uniform(0.2, 1.0, 3))]
    return ChainModel(els)


@FAST
@given(vec3)
def test_rotation_exp_log(w):
    R = so3_exp(w)
    assert is_rotation(R)
    if np.linalg.norm(w) < np.pi - 1e-3:
        assert np.allclose(so3_log(R), w, atol=1e-10)


@FAST
@given(vec6)
def test_rigid_exp_inverse(xi):
    assert np.allclose(se3_exp(xi) @ se3_exp(-xi), np.eye(4), atol=1e-10)


@FAST
@given(vec6, vec6)
def test_right_jacobian_is_exp_derivative(xi, d):
    E, L = expm_frechet(hat6(xi), hat6(d))
    assert np.allclose(np.linalg.solve(E, L), hat6(se3_right_jacobian(xi) @ d), atol=1e-9 * (1 + np.abs(L).max()))


@FAST
@given(st.floats(0.05, 2.0), st.floats(1e-3, 0.05), st.floats(1e-3, 0.05), st.floats(1e9, 3e11))
def test_beam_block_is_spd_with_cantilever_deflection(L, a, b, E):
    sec = BeamSection(L=L, a=a, b=b, E=E)
    K = beam_spring_spatial(sec).K
    assert np.all(np.linalg.eigvalsh(K) > 0)
    C = np.linalg.inv(K)
    assert np.isclose(C[1, 1], L**3 / (3 * E * sec.I_z), rtol=1e-8)


@FAST
@given(st.integers(0, 10_000), arrays(np.float64, 12, elements=st.floats(-0.4, 0.4)))
def test_unloaded_spring_chain_stiffness(seed, theta):
    # preloaded springs make the deformed configuration an unloaded equilibrium
    ch = _arm(seed, theta0=theta)
    cfg = Configuration(np.zeros(0), theta)
    st_ = state_at(ch, cfg, np.zeros(6))
    Jt, _ = jacobians(ch, cfg)
    K = np.linalg.inv(Jt @ ch.K_theta_inv @ Jt.T)
    r = kc_reduced(ch, st_)
    assert np.allclose(r.K_c, K, rtol=1e-8, atol=1e-8 * np.abs(K).max())
    assert np.all(np.linalg.eigvalsh((r.K_c + r.K_c.T) / 2) > 0)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 10_000))
def test_parallel_stiffness_is_the_sum(s1, s2):
    a, b = _arm(s1), _arm(s2)
    # place the second arm so both end at the same point
    pa = tool_pose(a).position
    pb = tool_pose(b).position
    b = _arm(s2, offset=tuple(pa - pb))
    asm = Assembly([a, b])
    state = solve(asm, tool_pose(asm))
    parts = [kc_reduced(c, s).K_c for c, s in zip(asm.chains, state.states)]
    assert np.allclose(system_stiffness(asm, state).K_c, parts[0] + parts[1])
    assert np.allclose(aggregate_parallel([kc_reduced(c, s) for c, s in zip(asm.chains[::-1], state.states[::-1])]).K_c,
                       parts[0] + parts[1])


@FAST
@given(st.floats(0.01, 1.9), st.floats(0.01, 1.9))
def test_closed_form_rises_above_threshold(d1, d2):
    lo, hi = sorted((d1, d2))
    assert 1.0 < model_a_analytic(lo) <= model_a_analytic(hi)


@FAST
@given(st.floats(0.1, 3.0), st.floats(0.2, 10.0))
def test_verdict_scales_with_stiffness(f, c):
    # scaling spring stiffness and load together leaves the verdict unchanged
    from stiffbuck.scenarios import Model, ScenarioSpec, build_chain
    if abs(f - 1.0) < 1e-3:
        return
    a = build_chain(ScenarioSpec(Model.A))
    b = build_chain(ScenarioSpec(Model.A, K_theta_ref=c))
    va = classify(a, state_at(a, a.home(), np.r_[-f, 0, 0, 0, 0, 0]))
    vb = classify(b, state_at(b, b.home(), np.r_[-c * f, 0, 0, 0, 0, 0]))
    assert va.classification == vb.classification
    assert np.isclose(vb.min_eigenvalue, c * va.min_eigenvalue, rtol=1e-6, atol=1e-12)


@FAST
@given(st.integers(0, 10_000), arrays(np.float64, 3, elements=st.floats(-2, 2)))
def test_config_round_trip_random_chain(seed, offset):
    ch = _arm(seed, offset=tuple(offset))
    for fmt in ("yaml", "json"):
        back = parse_config(dump_config(ch, fmt))
        assert back == ch
