"""Force-deflection paths along a displacement ray, buckling detection, work-energy audit."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .chain import Assembly, Configuration, Wrench
from .equilibrium import (
    AssemblyState,
    SolverSettings,
    newton_continue,
    solve,
    tool_pose,
)
from .stability import (
    Classification,
    StabilityVerdict,
    _task_jacobians,
    classify_system,
    constraint_nullspace,
    stability_matrix,
)

SYMMETRY_NOISE = 1e-6
BRANCH_KICKS = (1e-3, 1e-2, 5e-2, 0.1, 0.2)
DROP_FACTOR = 5.0
AVERAGE_SPAN = 3


@dataclass(frozen=True, eq=False)
class PathPoint:
    delta: float
    F_along: float
    F_full: Wrench
    verdict: StabilityVerdict
    tangent_stiffness: float
    energy: float
    converged: bool = True
    state: object = None

    @property
    def gap(self) -> bool:
        return not self.converged


@dataclass(frozen=True)
class BucklingReport:
    critical_force: float
    critical_deflection: float
    pre_stiffness: float
    post_stiffness: float
    crossing_kind: str  # "eigenvalue_zero" or "stiffness_drop"


def _unit(ray) -> np.ndarray:
    ray = np.asarray(ray, dtype=float).reshape(6)
    nrm = np.linalg.norm(ray)
    if nrm == 0:
        raise ValueError("ray must be non-zero")
    return ray / nrm


def _chains(system):
    return system.chains if isinstance(system, Assembly) else (system,)


def _split(system, state):
    return state.states if isinstance(system, Assembly) else (state,)


def _cfgs(system, state):
    cfgs = [s.cfg for s in _split(system, state)]
    return cfgs if isinstance(system, Assembly) else cfgs[0]


def _forces(system, state):
    Fs = [s.F_vector for s in _split(system, state)]
    return Fs if isinstance(system, Assembly) else Fs[0]


def _perturbed(system, state, amount, rng):
    out = []
    for c, s in zip(_chains(system), _split(system, state)):
        x = s.cfg.x + rng.uniform(-amount, amount, s.cfg.x.size)
        out.append(Configuration.from_x(x, c.n))
    return out if isinstance(system, Assembly) else out[0]


def _kicked(system, state, amount):
    """Move the most unstable chain along its softest admissible direction."""
    out = []
    for c, s in zip(_chains(system), _split(system, state)):
        basis = constraint_nullspace(*_task_jacobians(c, s.cfg))
        x = s.cfg.x
        if basis.r:
            M = stability_matrix(c, s, basis)
            w, V = np.linalg.eigh(-M)
            v = np.vstack([basis.V_q0, basis.V_theta0]) @ V[:, 0]
            x = x + amount * v / max(np.max(np.abs(v)), 1e-300)
        out.append(Configuration.from_x(x, c.n))
    return out if isinstance(system, Assembly) else out[0]


def _energy(state) -> float:
    return float(state.energy)


def _solve_point(system, target, prev, settings, rng):
    """Warm-started solve plus symmetry-breaking and branch-switching candidates; minimum energy wins."""
    cands = []
    quick = replace(settings, restart_count=0)
    warm_F = _forces(system, prev)
    main = solve(system, target, _cfgs(system, prev), settings, start_F=warm_F)
    cands.append(main)
    if not isinstance(system, Assembly):
        cands.extend(main.alternatives)
    noisy = solve(system, target, _perturbed(system, prev, SYMMETRY_NOISE, rng), quick, start_F=warm_F)
    cands.append(noisy)
    best = _pick(cands)
    if best is not None:
        verdict = classify_system(system, best)
        if verdict.classification is not Classification.STABLE:
            for amount in BRANCH_KICKS:
                found = []
                for sign in (1.0, -1.0):
                    kick = _kicked(system, best, sign * amount)
                    s = solve(system, target, kick, quick, start_F=_forces(system, best))
                    cands.append(s)
                    if s.converged and _energy(s) < _energy(best) and _stable(system, s):
                        found.append(s)
                if found:
                    break
            best = _pick(cands)
            verdict = classify_system(system, best)
        best = replace(best, verdict=verdict)
    return best if best is not None else main


def _pick(cands):
    ok = [(i, c) for i, c in enumerate(cands) if c.converged]
    if not ok:
        return None
    return min(ok, key=lambda ic: (_energy(ic[1]), ic[0]))[1]


def trace(system, ray, delta_max: float, steps: int, settings: SolverSettings = None):
    """Sweep delta from 0 to delta_max along ``ray`` with warm starts; returns PathPoint list."""
    if steps < 2 and delta_max > 0:
        raise ValueError("steps must be >= 2")
    if delta_max < 0:
        raise ValueError("delta_max must be non-negative")
    settings = settings or SolverSettings()
    ray = _unit(ray)
    rng = np.random.default_rng(settings.rng_seed)
    start_cfg = system.home() if isinstance(system, Assembly) else system.home()
    t0 = tool_pose(system, start_cfg)
    origin = solve(system, t0, start_cfg, settings)
    origin = replace(origin, verdict=classify_system(system, origin))
    states = [origin]
    deltas = [0.0]
    if delta_max > 0:
        prev = origin
        for i in range(1, steps + 1):
            d = delta_max * i / steps
            st = _solve_point(system, t0.displaced(d * ray), prev, settings, rng)
            states.append(st)
            deltas.append(d)
            if st.converged:
                prev = st
    return _assemble(states, deltas, ray)


def _assemble(states, deltas, ray):
    F_along = np.array([float(s.F.as_vector() @ ray) if s.converged else np.nan for s in states])
    d = np.asarray(deltas)
    ok = np.isfinite(F_along)
    ts = np.full(len(states), np.nan)
    if ok.sum() >= 2:
        ts[ok] = np.gradient(F_along[ok], d[ok])
    pts = []
    for i, s in enumerate(states):
        pts.append(PathPoint(
            delta=float(d[i]),
            F_along=float(F_along[i]),
            F_full=s.F,
            verdict=s.verdict if s.converged else None,
            tangent_stiffness=float(ts[i]),
            energy=_energy(s) if s.converged else float("nan"),
            converged=bool(s.converged),
            state=s,
        ))
    return pts


def _continue(system, target, state, settings):
    """Newton continuation of the branch through ``state`` (stable or not)."""
    if isinstance(system, Assembly):
        subs = tuple(newton_continue(c, target, s.cfg, s.F, settings) for c, s in zip(system.chains, state.states))
        F = np.sum([s.F_vector for s in subs], axis=0)
        return AssemblyState(subs, Wrench.from_vector(F), target, max(s.residual_norm for s in subs),
                             all(s.converged for s in subs))
    return newton_continue(system, target, state.cfg, state.F, settings)


def _stable(system, state):
    return state.converged and classify_system(system, state).classification is Classification.STABLE


def _avg(values):
    v = np.asarray([x for x in values if np.isfinite(x)])
    return float(v.mean()) if v.size else float("nan")


def _side_averages(path, lo_idx, hi_idx):
    pre = _avg(p.tangent_stiffness for p in path[max(0, lo_idx - AVERAGE_SPAN + 1): lo_idx + 1] if p.converged)
    post = _avg(p.tangent_stiffness for p in path[hi_idx: hi_idx + AVERAGE_SPAN] if p.converged)
    return pre, post


def detect_buckling(path, system, settings: SolverSettings = None, ray=None):
    """First stability loss along the path, refined by bisection; None if no event.

    The branch through each stable point is continued with Newton steps to the
    next path delta; if the continued state is no longer stable, the crossing is
    bisected to 1e-4 of the traced range. Without an eigenvalue crossing, the
    first tangent stiffness below 1/DROP_FACTOR of the largest one before it is
    reported.
    """
    settings = settings or SolverSettings()
    conv = [p for p in path if p.converged]
    if len(conv) < 3:
        return None
    if ray is None:
        ray = _infer_ray(path)
    ray = _unit(ray)
    delta_max = path[-1].delta
    t0 = tool_pose(system, system.home())
    idx = [i for i, p in enumerate(path) if p.converged]

    for a, b in zip(idx, idx[1:]):
        pa, pb = path[a], path[b]
        if pa.verdict is None or pa.verdict.classification is not Classification.STABLE:
            continue
        cont = _continue(system, t0.displaced(pb.delta * ray), pa.state, settings)
        if not cont.converged or _stable(system, cont):
            continue
        lo_d, hi_d, lo_s = pa.delta, pb.delta, pa.state
        while hi_d - lo_d > 1e-4 * delta_max:
            mid = 0.5 * (lo_d + hi_d)
            ms = _continue(system, t0.displaced(mid * ray), lo_s, settings)
            if not ms.converged:
                break
            if _stable(system, ms):
                lo_d, lo_s = mid, ms
            else:
                hi_d = mid
        pre, post = _side_averages(path, a, b)
        return BucklingReport(
            critical_force=float(lo_s.F.as_vector() @ ray),
            critical_deflection=float(lo_d),
            pre_stiffness=pre,
            post_stiffness=post,
            crossing_kind="eigenvalue_zero",
        )

    # without a crossing, compare against the stiffest tangent seen so far so
    # that a gradual knee is caught regardless of the step size
    peak = -np.inf
    for a, b in zip(idx, idx[1:]):
        ka, kb = path[a].tangent_stiffness, path[b].tangent_stiffness
        if np.isfinite(ka):
            peak = max(peak, ka)
        if np.isfinite(kb) and peak > 0 and kb < peak / DROP_FACTOR:
            _, post = _side_averages(path, a, b)
            return BucklingReport(
                critical_force=float(path[a].F_along),
                critical_deflection=float(path[a].delta),
                pre_stiffness=float(peak),
                post_stiffness=post,
                crossing_kind="stiffness_drop",
            )
    return None


def _infer_ray(path):
    for p in path[1:]:
        if p.converged and p.state is not None:
            d = p.state.t.position - path[0].state.t.position
            if np.linalg.norm(d) > 0:
                return np.concatenate([d / np.linalg.norm(d), np.zeros(3)])
    raise ValueError("cannot infer the ray from the path; pass it explicitly")


def work_energy_audit(path, skip_origin: bool = True) -> float:
    """Largest per-segment relative mismatch between trapezoidal work and elastic energy change.

    Segments touching delta = 0 are skipped by default (a buckled chain jumps in
    force there) as are segments whose stability class changes.
    """
    worst = 0.0
    for p, q in zip(path, path[1:]):
        if not (p.converged and q.converged):
            continue
        if skip_origin and p.delta == 0.0:
            continue
        if p.verdict is not None and q.verdict is not None and p.verdict.classification != q.verdict.classification:
            continue
        work = 0.5 * (p.F_along + q.F_along) * (q.delta - p.delta)
        dU = q.energy - p.energy
        scale = max(abs(dU), abs(work))
        if scale == 0.0:
            continue
        worst = max(worst, abs(work - dU) / scale)
    return worst
