"""Loaded static equilibrium: pose-driven and wrench-driven solves.

The pose-driven iteration eliminates theta through the spring law and solves
the bordered system [[J_t K^-1 J_t^T, J_q], [J_q^T, 0]] for (F, dq) at every
step. Once the iterate is close, a Newton step on the full bordered matrix
(with load Hessians) removes the remaining linear-rate error.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .chain import (
    Assembly,
    ChainModel,
    Configuration,
    Pose,
    Wrench,
    _jacobians_raw,
    forward_pose,
    torque_map,
    FD_STEP,
)
from .errors import ModelError, ParameterError, SingularStiffnessError
from .se3 import so3_exp, so3_log

log = logging.getLogger(__name__)

COND_WARN = 1e12
POLISH_START = 1e-4
CHORD_START = 1e-4  # below this the load derivative is reused between Newton steps
FINISH_FLOOR = 1e-17  # near the round-off floor of the weighted residual


class IllConditionedWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class SolverSettings:
    residual_tol: float = 1e-9
    max_iters: int = 100
    continuation_steps: int = 1
    restart_count: int = 8
    restart_noise: float = 1e-3
    rng_seed: int = 0
    fallback_steps: int = 20
    polish: bool = True
    step_cap: float = 0.1  # largest coordinate change per iteration (rad or length)

    def __post_init__(self):
        if not self.residual_tol > 0:
            raise ParameterError("residual_tol must be positive")
        if self.max_iters < 1 or self.continuation_steps < 1 or self.fallback_steps < 1:
            raise ParameterError("iteration and step counts must be >= 1")
        if self.restart_count < 0 or self.restart_noise < 0 or not self.step_cap > 0:
            raise ParameterError("restart count and noise must be non-negative")


@dataclass(frozen=True, eq=False)
class EquilibriumState:
    cfg: Configuration
    F: Wrench
    t: Pose
    residual_norm: float
    iterations: int
    converged: bool
    trace: tuple = ()
    target: Pose = None
    energy: float = 0.0
    alternatives: tuple = ()
    verdict: object = None

    @property
    def F_vector(self) -> np.ndarray:
        return self.F.as_vector()


@dataclass(frozen=True, eq=False)
class AssemblyState:
    """Equilibrium of every chain at a common tool pose; F is the summed wrench."""

    states: tuple
    F: Wrench
    t: Pose
    residual_norm: float
    converged: bool
    iterations: int = 0
    verdict: object = None

    @property
    def energy(self) -> float:
        return float(sum(s.energy for s in self.states))

    @property
    def cfg(self):
        return [s.cfg for s in self.states]

    @property
    def F_vector(self) -> np.ndarray:
        return self.F.as_vector()


# ---------------------------------------------------------------------------
# residuals


def _rows(chain: ChainModel) -> np.ndarray:
    return np.asarray(chain.task_axes, dtype=int)


def _embed(chain: ChainModel, F_task) -> np.ndarray:
    F = np.zeros(6)
    F[_rows(chain)] = F_task
    return F


def _weights(chain: ChainModel):
    Kn = float(np.linalg.norm(chain.K_theta, 2)) if chain.m else 0.0
    return max(1.0, Kn), max(1.0, chain.reach)


def _kin_residual(target_T, T) -> np.ndarray:
    out = np.empty(6)
    out[:3] = target_T[:3, 3] - T[:3, 3]
    out[3:] = so3_log(target_T[:3, :3] @ T[:3, :3].T)
    return out


def _wrench_vector(F) -> np.ndarray:
    if isinstance(F, Wrench):
        return F.as_vector()
    F = np.asarray(F, dtype=float).reshape(-1)
    if F.shape != (6,):
        raise ModelError("wrench must have 6 components")
    return F


def equilibrium_residual(chain: ChainModel, cfg: Configuration, F, target: Pose):
    """(stat_theta, stat_q, kin, weighted_norm) of the static equilibrium conditions."""
    chain.check(cfg)
    Fv = _wrench_vector(F)
    Jt, Jq, T = _jacobians_raw(chain, cfg.q, cfg.theta)
    stat_theta = Jt.T @ Fv - chain.K_theta @ (cfg.theta - chain.theta0)
    stat_q = Jq.T @ Fv
    kin = _kin_residual(target.as_matrix(), T)
    w_tau, w_t = _weights(chain)
    rows = _rows(chain)
    norm = (np.linalg.norm(stat_theta) + np.linalg.norm(stat_q)) / w_tau + np.linalg.norm(kin[rows]) / w_t
    return stat_theta, stat_q, kin, float(norm)


# ---------------------------------------------------------------------------
# core iteration


class _Eval:
    """Residuals and task-row Jacobians at one iterate."""

    __slots__ = ("Jt", "Jq", "T", "stat_t", "stat_q", "kin", "norm")

    def __init__(self, chain, x, F_task, target_T, weights):
        n = chain.n
        rows = _rows(chain)
        Jt, Jq, T = _jacobians_raw(chain, x[:n], x[n:])
        self.Jt = Jt[rows]
        self.Jq = Jq[rows]
        self.T = T
        self.stat_t = self.Jt.T @ F_task - chain.K_theta @ (x[n:] - chain.theta0)
        self.stat_q = self.Jq.T @ F_task
        self.kin = _kin_residual(target_T, T)[rows]
        w_tau, w_t = weights
        v = (np.linalg.norm(self.stat_t) + np.linalg.norm(self.stat_q)) / w_tau + np.linalg.norm(self.kin) / w_t
        self.norm = float(v) if np.all(np.isfinite(x)) else np.inf


def _lstsq(M, rhs):
    sol, _, _, s = np.linalg.lstsq(M, rhs, rcond=None)
    cond = s[0] / s[-1] if s.size and s[-1] > 0 else np.inf
    if cond > COND_WARN:
        warnings.warn(f"bordered matrix condition number {cond:.3g}", IllConditionedWarning, stacklevel=3)
    return sol


def _reduced_step(chain, x, ev: _Eval):
    """One fixed-point step of the reduced bordered scheme; returns (x_new, F_task)."""
    n, k = chain.n, len(chain.task_axes)
    Kinv = chain.K_theta_inv
    theta = x[n:]
    M = np.zeros((k + n, k + n))
    M[:k, :k] = ev.Jt @ Kinv @ ev.Jt.T
    M[:k, k:] = ev.Jq
    M[k:, :k] = ev.Jq.T
    rhs = np.zeros(k + n)
    # linearized closure with theta eliminated; theta0 enters through the spring law
    rhs[:k] = ev.kin + ev.Jt @ (theta - chain.theta0)
    sol = _lstsq(M, rhs)
    F_task = sol[:k]
    x_new = np.empty_like(x)
    x_new[:n] = x[:n] + sol[k:]
    x_new[n:] = Kinv @ ev.Jt.T @ F_task + chain.theta0
    return x_new, F_task


def load_derivative(chain: ChainModel, x, F_full, step: float = FD_STEP) -> np.ndarray:
    """Raw derivative of the torque map (J_q^T F, J_theta^T F) with respect to x = (q, theta)."""
    N = x.size
    D = np.zeros((N, N))
    if not np.any(F_full):
        return D
    for j in range(N):
        xp = x.copy()
        xm = x.copy()
        xp[j] += step
        xm[j] -= step
        D[:, j] = (torque_map(chain, xp, F_full) - torque_map(chain, xm, F_full)) / (2.0 * step)
    return D


def bordered_full(chain: ChainModel, Jt, Jq, D) -> np.ndarray:
    """[[0, J_q, J_t], [J_q^T, D_qq, D_qt], [J_t^T, D_tq, D_tt - K]] over (F, q, theta)."""
    n, m, k = chain.n, chain.m, Jt.shape[0]
    N = k + n + m
    M = np.zeros((N, N))
    M[:k, k:k + n] = Jq
    M[:k, k + n:] = Jt
    M[k:k + n, :k] = Jq.T
    M[k + n:, :k] = Jt.T
    M[k:, k:] = D
    M[k + n:, k + n:] -= chain.K_theta
    return M


def _newton_step(chain, x, F_task, ev: _Eval, D=None):
    """Newton step on the full bordered system; D may be reused from a nearby iterate."""
    n, k = chain.n, len(chain.task_axes)
    if D is None:
        D = load_derivative(chain, x, _embed(chain, F_task))
    M = bordered_full(chain, ev.Jt, ev.Jq, D)
    rhs = np.concatenate([ev.kin, -ev.stat_q, -ev.stat_t])
    try:
        sol = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
    return x + sol[k:], F_task + sol[:k], D


def _iterate(chain, target_T, x, F_task, settings: SolverSettings, weights, newton_only=False):
    """Run the stage iteration. Returns (x, F_task, norm, iters, trace, ok)."""
    tol = settings.residual_tol
    ev = _Eval(chain, x, F_task, target_T, weights)
    trace = [ev.norm]
    first = max(1.0, ev.norm)
    decreases = 0
    D = None
    for it in range(1, settings.max_iters + 1):
        if ev.norm <= tol:
            x, F_task, ev = _finish(chain, target_T, x, F_task, ev, settings, weights, D)
            return x, F_task, ev.norm, it - 1, trace, True
        use_newton = newton_only or (settings.polish and ev.norm < POLISH_START and decreases >= 3)
        if use_newton:
            if ev.norm > CHORD_START:
                D = None
            xs, Fs, D = _newton_step(chain, x, F_task, ev, D)
            xn, Fn, evn = _damped(chain, x, F_task, ev, xs, Fs, target_T, weights, settings.step_cap)
            if evn.norm > 0.5 * ev.norm:
                D = None
            if not newton_only and not evn.norm < ev.norm:
                # Newton went astray; fall back to the fixed-point step
                decreases = 0
                xn, Fn, evn = _damped(chain, x, F_task, ev, *_reduced_step(chain, x, ev), target_T, weights,
                                       settings.step_cap)
        else:
            xn, Fn, evn = _damped(chain, x, F_task, ev, *_reduced_step(chain, x, ev), target_T, weights,
                                       settings.step_cap)
        if not np.isfinite(evn.norm) or evn.norm > 1e8 * first:
            trace.append(evn.norm)
            return x, F_task, ev.norm, it, trace, False
        decreases = decreases + 1 if evn.norm < ev.norm else 0
        x, F_task, ev = xn, Fn, evn
        trace.append(ev.norm)
        if len(trace) > 5 and trace[-6] - trace[-1] < 1e-12 and ev.norm > tol:
            return x, F_task, ev.norm, it, trace, False
    if ev.norm <= tol:
        x, F_task, ev = _finish(chain, target_T, x, F_task, ev, settings, weights, D)
        return x, F_task, ev.norm, settings.max_iters, trace, True
    return x, F_task, ev.norm, settings.max_iters, trace, False


def _damped(chain, x, F, ev, xn, Fn, target_T, weights, cap):
    """Scale the step so that no coordinate moves by more than ``cap``."""
    s = float(np.max(np.abs(xn - x))) if x.size else 0.0
    if np.isfinite(s) and s > cap:
        lam = cap / s
        xn = x + lam * (xn - x)
        Fn = F + lam * (Fn - F)
    return xn, Fn, _Eval(chain, xn, Fn, target_T, weights)


def _finish(chain, target_T, x, F_task, ev, settings, weights, D=None):
    """Full Newton steps past the tolerance while the corrections contract.

    Along a soft mode a tiny residual can hide a sizeable error in x, and the
    first Newton step may raise the residual norm before quadratic convergence
    sets in, so steps are judged by the size of the correction instead.
    The iterate with the smallest residual is returned.
    """
    if not settings.polish:
        return x, F_task, ev
    best = (x, F_task, ev)
    prev = np.inf
    for _ in range(8):
        if ev.norm < FINISH_FLOOR:
            break
        xs, Fs, D = _newton_step(chain, x, F_task, ev, D)
        step = float(np.max(np.abs(xs - x))) if x.size else 0.0
        if not np.isfinite(step) or step > settings.step_cap or step > 0.5 * prev:
            if D is None:
                break
            # stale chord derivative; retry with a fresh one
            xs, Fs, D = _newton_step(chain, x, F_task, ev, None)
            step = float(np.max(np.abs(xs - x))) if x.size else 0.0
            if not np.isfinite(step) or step > settings.step_cap or step > 0.5 * prev:
                break
        x, F_task, ev, prev = xs, Fs, _Eval(chain, xs, Fs, target_T, weights), step
        if ev.norm < best[2].norm:
            best = (x, F_task, ev)
    return best


def _interp_pose(T0, T1, alpha):
    T = np.eye(4)
    T[:3, 3] = (1.0 - alpha) * T0[:3, 3] + alpha * T1[:3, 3]
    T[:3, :3] = so3_exp(alpha * so3_log(T1[:3, :3] @ T0[:3, :3].T)) @ T0[:3, :3]
    return T


def _continuation(chain, target_T, x0, F0, steps, settings, weights, newton_only=False):
    n = chain.n
    T0, _ = _walk_T(chain, x0)
    x, F = x0.copy(), F0.copy()
    total = 0
    trace = []
    norm = np.inf
    for j in range(1, steps + 1):
        Tj = target_T if j == steps else _interp_pose(T0, target_T, j / steps)
        x, F, norm, its, tr, ok = _iterate(chain, Tj, x, F, settings, weights, newton_only)
        total += its
        trace.extend(tr)
        if not ok:
            return x, F, norm, total, trace, False
    return x, F, norm, total, trace, True


def _walk_T(chain, x):
    n = chain.n
    _, _, T = _jacobians_raw(chain, x[:n], x[n:])
    return T, None


def _make_state(chain, x, F_task, norm, iters, trace, ok, target) -> EquilibriumState:
    n = chain.n
    cfg = Configuration(x[:n].copy(), x[n:].copy())
    T, _ = _walk_T(chain, x)
    return EquilibriumState(
        cfg=cfg,
        F=Wrench.from_vector(_embed(chain, F_task)),
        t=Pose.from_matrix(T),
        residual_norm=float(norm),
        iterations=int(iters),
        converged=bool(ok),
        trace=tuple(float(v) for v in trace),
        target=target,
        energy=chain.elastic_energy(cfg) if np.all(np.isfinite(x)) else np.inf,
    )


def _start_force(chain, start_F):
    k = len(chain.task_axes)
    if start_F is None:
        return np.zeros(k)
    return _wrench_vector(start_F)[_rows(chain)]


def solve_for_pose(chain: ChainModel, target: Pose, start: Configuration = None,
                   settings: SolverSettings = None, start_F=None, explore: bool = False) -> EquilibriumState:
    """Equilibrium at a prescribed end pose.

    The direct attempt uses ``settings.continuation_steps``; on failure the
    schedule is refined to ``fallback_steps`` and then noisy restarts are run.
    With ``explore`` the restarts run even when the direct solve succeeds.
    The minimum-energy converged state is returned; the others are kept in
    ``alternatives``.
    """
    settings = settings or SolverSettings()
    start = start if start is not None else chain.home()
    chain.check(start)
    weights = _weights(chain)
    target_T = target.as_matrix()
    x0 = start.x
    F0 = _start_force(chain, start_F)

    found = []
    last = None
    steps_used = settings.continuation_steps
    res = _continuation(chain, target_T, x0, F0, steps_used, settings, weights)
    last = res
    if res[-1]:
        found.append(res)
    elif steps_used < settings.fallback_steps:
        steps_used = settings.fallback_steps
        res = _continuation(chain, target_T, x0, F0, steps_used, settings, weights)
        last = res
        if res[-1]:
            found.append(res)

    if not found or explore:
        rng = np.random.default_rng(settings.rng_seed)
        for _ in range(settings.restart_count):
            xr = x0 + rng.uniform(-settings.restart_noise, settings.restart_noise, x0.size)
            res = _continuation(chain, target_T, xr, F0, steps_used, settings, weights)
            if res[-1]:
                found.append(res)
            elif not found:
                last = res

    if not found:
        x, F, norm, its, tr, _ = last
        log.debug("pose-driven solve failed on %s (residual %.3g)", chain.name, norm)
        return _make_state(chain, x, F, norm, its, tr, False, target)

    states = [_make_state(chain, *r[:5], True, target) for r in found]
    order = sorted(range(len(states)), key=lambda i: (states[i].energy, i))
    best = states[order[0]]
    return replace(best, alternatives=tuple(states[i] for i in order[1:]))


def newton_continue(chain: ChainModel, target: Pose, start: Configuration, start_F,
                    settings: SolverSettings = None) -> EquilibriumState:
    """Full-Newton solve warm-started from a neighbouring equilibrium.

    Unlike the reduced fixed-point scheme this follows the branch it starts on,
    stable or not; used to continue a branch past its stability limit.
    """
    settings = settings or SolverSettings()
    weights = _weights(chain)
    x, F, norm, its, tr, ok = _iterate(chain, target.as_matrix(), start.x, _start_force(chain, start_F),
                                       settings, weights, newton_only=True)
    return _make_state(chain, x, F, norm, its, tr, ok, target)


def state_at(chain: ChainModel, cfg: Configuration, F, tol: float = None) -> EquilibriumState:
    """Wrap an explicit (configuration, wrench) pair as a state at its own pose."""
    tol = SolverSettings().residual_tol if tol is None else tol
    chain.check(cfg)
    pose = forward_pose(chain, cfg)
    Fv = _wrench_vector(F)
    _, _, _, norm = equilibrium_residual(chain, cfg, Fv, pose)
    return EquilibriumState(cfg=cfg, F=Wrench.from_vector(Fv), t=pose, residual_norm=norm,
                            iterations=0, converged=norm <= tol, target=pose,
                            energy=chain.elastic_energy(cfg))


# ---------------------------------------------------------------------------
# assemblies


def tool_pose(system, cfg=None) -> Pose:
    if isinstance(system, Assembly):
        chain = system.chains[0]
        return forward_pose(chain, (cfg[0] if cfg is not None else chain.home()))
    return forward_pose(system, cfg if cfg is not None else system.home())


def solve_assembly(asm: Assembly, target: Pose, starts=None, settings: SolverSettings = None,
                   start_F=None, explore: bool = False) -> AssemblyState:
    """Every chain is closed at the common tool pose independently; wrenches add up."""
    settings = settings or SolverSettings()
    starts = starts if starts is not None else asm.home()
    start_F = start_F if start_F is not None else [None] * len(asm.chains)
    states = tuple(
        solve_for_pose(c, target, s, settings, start_F=f, explore=explore)
        for c, s, f in zip(asm.chains, starts, start_F)
    )
    F = np.sum([s.F_vector for s in states], axis=0)
    return AssemblyState(
        states=states,
        F=Wrench.from_vector(F),
        t=target,
        residual_norm=max(s.residual_norm for s in states),
        converged=all(s.converged for s in states),
        iterations=sum(s.iterations for s in states),
    )


def solve(system, target: Pose, start=None, settings=None, start_F=None, explore=False):
    """Pose-driven solve for either a single chain or an assembly."""
    if isinstance(system, Assembly):
        return solve_assembly(system, target, start, settings, start_F, explore)
    return solve_for_pose(system, target, start, settings, start_F, explore)


def solve_for_wrench(system, F, start=None, settings: SolverSettings = None, max_outer: int = 50):
    """Find the pose at which the equilibrium wrench equals F.

    Outer update t <- t + K_c^-1 (F - F_i) with K_c from the current inner
    solution. A singular K_c (any single chain with passive joints) makes the
    problem ill-posed and raises SingularStiffnessError.
    """
    from .stiffness import cartesian_stiffness

    settings = settings or SolverSettings()
    Fv = _wrench_vector(F)
    is_asm = isinstance(system, Assembly)
    rows = np.asarray(system.task_axes)
    t = tool_pose(system, start)
    state = solve(system, t, start, settings)
    goal = settings.residual_tol * max(1.0, float(np.linalg.norm(Fv)))
    for it in range(max_outer):
        if not state.converged:
            return state
        dF = Fv - state.F_vector
        if np.linalg.norm(dF) <= goal:
            return state
        Kc = cartesian_stiffness(system, state)
        Kt = Kc[np.ix_(rows, rows)]
        if not np.all(np.isfinite(Kt)):
            raise SingularStiffnessError("singular stiffness: wrench-driven problem ill-posed")
        s = np.linalg.svd(Kt, compute_uv=False)
        if s[-1] <= 1e-10 * s[0]:
            raise SingularStiffnessError("singular stiffness: wrench-driven problem ill-posed")
        dt = np.zeros(6)
        dt[rows] = np.linalg.solve(Kt, dF[rows])
        t = t.displaced(dt)
        warm = [s_.cfg for s_ in state.states] if is_asm else state.cfg
        warmF = [s_.F_vector for s_ in state.states] if is_asm else state.F_vector
        state = solve(system, t, warm, settings, start_F=warmF)
    return replace(state, converged=False)
