"""Acceptance criteria 1-11, one pass/fail line each.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in the
terminal summary under "acceptance criteria".
"""

import subprocess
import sys
import time
from functools import lru_cache

import numpy as np
import pytest

from stiffbuck.chain import jacobians
from stiffbuck.equilibrium import solve, solve_for_pose, state_at, tool_pose
from stiffbuck.errors import SingularStiffnessError
from stiffbuck.pathtrace import detect_buckling, trace, work_energy_audit
from stiffbuck.scenarios import model_a_analytic, scenario, scenario_names
from stiffbuck.stability import Classification, classify, energy_probe
from stiffbuck.stiffness import fd_stiffness_probe, kc_frobenius, kc_full, kc_reduced

from conftest import ACCEPTANCE, spring_arm

AXIAL = np.array([-1.0, 0, 0, 0, 0, 0])
SUITE = [n for n in scenario_names() if n.startswith("model")] + ["orthoglide-Q0"]


def report(n, ok, detail):
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[n] = line
    print(line)
    assert ok, line


@lru_cache(maxsize=None)
def path_of(name):
    sc = scenario(name)
    system = sc.build()
    return system, trace(system, sc.ray, sc.delta_max, sc.steps)


@lru_cache(maxsize=None)
def buckling_of(name):
    system, path = path_of(name)
    return detect_buckling(path, system, ray=scenario(name).ray)


def chain_states(system, state):
    if hasattr(system, "chains"):
        return list(zip(system.chains, state.states))
    return [(system, state)]


def rel(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def test_c01_model_a_closed_form():
    ch = scenario("modelA-S").build()
    t = time.perf_counter()
    path = trace(ch, AXIAL, 1.0, 50)
    elapsed = time.perf_counter() - t
    pts = [(p.delta, p.F_along) for p in path[1:]]
    first = solve_for_pose(ch, tool_pose(ch).displaced(0.01 * AXIAL))
    pts.append((0.01, -first.F.force[0]))
    worst = max(abs(f / model_a_analytic(d) - 1) for d, f in pts)
    lo = model_a_analytic(1e-9)
    hi = model_a_analytic(1e-9, branch="unstable")
    ok = (all(p.converged for p in path) and worst <= 1e-6 and elapsed < 5.0
          and abs(lo - 1) < 1e-6 and abs(hi - 3) < 1e-6)
    report(1, ok, f"max rel error {worst:.2e} over {len(pts)} points, {elapsed:.2f} s; "
                  f"limits {lo:.6f} and {hi:.6f} K/L")


def test_c02_bifurcation_threshold():
    ch = scenario("modelA-S").build()
    lo, hi = 0.5, 1.5
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        v = classify(ch, state_at(ch, ch.home(), np.r_[-mid, 0, 0, 0, 0, 0]))
        if v.classification is Classification.STABLE:
            lo = mid
        else:
            hi = mid
    flip = 0.5 * (lo + hi)
    report(2, abs(flip - 1.0) <= 0.01, f"Stable to Unstable at F = {flip:.8f} K/L")


def test_c03_model_b_critical_forces():
    s = buckling_of("modelB-S")
    z = buckling_of("modelB-Z")
    fs = s.critical_force if s else np.nan
    fz = z.critical_force if z else np.nan
    ok = abs(fs - 1.0) <= 0.05 and abs(fz - 1.07) <= 0.107
    report(3, ok, f"S {fs:.4f} (target 1.00 +/- 5%), Z {fz:.4f} (target 1.07 +/- 10%)")


def test_c04_model_c_critical_forces():
    targets = {"S": 0.16, "Pi": 0.20, "Z": 0.17}
    got = {}
    for k in targets:
        r = buckling_of(f"modelC-{k}")
        got[k] = r.critical_force if r else np.nan
    fb = buckling_of("modelB-S").critical_force
    within = all(abs(got[k] - t) <= 0.2 * t for k, t in targets.items())
    below = all(got[k] < 0.40 for k in targets)
    ok = within and below and got["S"] < fb
    detail = ", ".join(f"{k} {got[k]:.4f} (target {t})" for k, t in targets.items())
    report(4, ok, f"{detail}; C(S) < B(S): {got['S'] < fb}")


def test_c05_stiffness_forms_agree():
    worst, compared, frob, undefined = 0.0, 0, 0, 0
    for name in SUITE:
        system, path = path_of(name)
        for p in path:
            if not p.converged:
                continue
            for ch, st in chain_states(system, p.state):
                f, r = kc_full(ch, st), kc_reduced(ch, st)
                if not f.defined:
                    undefined += 1
                    worst = max(worst, 0.0 if not r.defined else 1.0)
                    continue
                worst = max(worst, rel(r.K_c, f.K_c))
                compared += 1
                try:
                    worst = max(worst, rel(kc_frobenius(ch, st), f.K_c))
                    frob += 1
                except SingularStiffnessError:
                    pass
    report(5, worst <= 1e-9, f"max pairwise rel difference {worst:.2e} over {compared} states "
                             f"({frob} with the factorized form, {undefined} singular in both)")


def test_c06_fd_linearization():
    picked = []
    for name in ("modelB-S", "modelB-Pi", "modelB-Z", "modelC-S", "modelC-Pi", "modelC-Z"):
        system, path = path_of(name)
        cand = [p for p in path[1:] if p.converged and p.verdict.stable and np.any(p.F_full.as_vector())]
        idx = np.linspace(0, len(cand) - 1, 4 if name.startswith("modelB") else 3).round().astype(int)
        picked += [(system, cand[i].state) for i in sorted(set(idx))]
    picked = picked[:20]
    worst = max(rel(fd_stiffness_probe(ch, st), kc_reduced(ch, st).K_c) for ch, st in picked)
    report(6, len(picked) == 20 and worst <= 1e-4, f"max rel difference {worst:.2e} on {len(picked)} loaded states")


def test_c07_rank_laws():
    asm = scenario("orthoglide-Q0").build()
    st = solve(asm, tool_pose(asm))
    parts = [kc_reduced(c, s) for c, s in zip(asm.chains, st.states)]
    total = sum(p.K_c for p in parts)
    ranks = [p.rank for p in parts]
    agg = int(np.sum(np.linalg.svd(total, compute_uv=False) > 1e-10 * np.linalg.norm(total, 2)))
    ch = spring_arm(11)
    s = solve_for_pose(ch, tool_pose(ch))
    Jt, _ = jacobians(ch, s.cfg)
    K = np.linalg.inv(Jt @ ch.K_theta_inv @ Jt.T)
    r = kc_reduced(ch, s)
    err = rel(r.K_c, K)
    ok = ranks == [4, 4, 4] and agg == 6 and r.rank == 6 and err <= 1e-10
    report(7, ok, f"chain ranks {ranks}, aggregate rank {agg}, spring-only chain rank {r.rank} "
                  f"with closed-form error {err:.1e}")


def test_c08_probe_agreement():
    worst, states = 1.0, 0
    for name in SUITE:
        system, path = path_of(name)
        for p in path:
            if not p.converged or p.verdict.classification is Classification.CRITICAL:
                continue
            for ch, st in chain_states(system, p.state):
                if classify(ch, st).classification is Classification.CRITICAL:
                    continue
                rep = energy_probe(ch, st, samples=100)
                if rep.used:
                    worst = min(worst, rep.agreement)
                states += 1
    report(8, worst >= 0.99, f"minimum agreement {worst:.4f} over {states} chain states")


def test_c09_conservativity():
    ch = scenario("modelA-S").build()
    audits = {n: work_energy_audit(trace(ch, AXIAL, 0.5, n)) for n in (50, 100, 200)}
    orders = [np.log2(audits[50] / audits[100]), np.log2(audits[100] / audits[200])]
    ok = audits[100] <= 1e-3 and all(abs(o - 2) < 0.2 for o in orders)
    report(9, ok, f"audit {audits[100]:.2e} at 100 steps; observed orders {orders[0]:.3f}, {orders[1]:.3f}")


def test_c10_orthoglide_knee():
    system, path = path_of("orthoglide-Q0")
    rep = buckling_of("orthoglide-Q0")
    if rep is None:
        report(10, False, "no buckling detected")
    ratio = rep.post_stiffness / rep.pre_stiffness
    pre = [p.tangent_stiffness for p in path if p.converged and 0 < p.F_along <= 0.5 * rep.critical_force]
    variation = (max(pre) - min(pre)) / np.mean(pre)
    ok = ratio <= 0.2 and variation < 0.05 and len(pre) >= 3
    report(10, ok, f"{rep.crossing_kind} at {rep.critical_force:.0f} N, {rep.critical_deflection * 1e3:.3f} mm; "
                   f"post/pre {ratio:.3f}; tangent variation {variation:.2%} over {len(pre)} points below half load")


def test_c11_determinism(tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}.csv"
        subprocess.run([sys.executable, "-m", "stiffbuck.cli", "trace", "--scenario", "modelC-Z",
                        "--steps", "15", "--seed", "7", "--out", str(out)], check=True)
        outs.append(out.read_bytes())
    report(11, outs[0] == outs[1] and len(outs[0]) > 0, f"two seeded runs, {len(outs[0])} bytes each, identical")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
