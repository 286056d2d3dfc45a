"""Cartesian stiffness of loaded serial chains and their parallel aggregation.

Small variations around an equilibrium satisfy

    [dt; 0; 0] = [[0, J_q, J_t], [J_q^T, H_qq, H_qt], [J_t^T, H_tq, H_tt - K]] [dF; dq; dtheta]

so the upper-left task block of the inverse is K_c. The load derivative H is
taken unsymmetrized here: with moment loads the torque map's derivative is not
symmetric and only the raw form reproduces the re-solved response.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .chain import Assembly, ChainModel, _jacobians_raw
from .equilibrium import (
    AssemblyState,
    EquilibriumState,
    SolverSettings,
    bordered_full,
    load_derivative,
    newton_continue,
    solve_for_pose,
)
from .errors import NotConvergedError, SingularStiffnessError

RANK_RTOL = 1e-10
BORDERED_RTOL = 1e-12  # on the equilibrated bordered matrix; exact rank loss sits near 1e-16


@dataclass(frozen=True, eq=False)
class StiffnessResult:
    K_c: np.ndarray  # 6 x 6
    S_q: np.ndarray  # n x 6 (tuple of arrays for aggregates)
    S_theta: np.ndarray  # m x 6
    singular_directions: tuple = ()  # (kind, unit 6-vector); kind in {"infinite", "zero"}
    condition: float = 1.0
    method: str = ""
    point: np.ndarray = None  # tool point the matrix refers to
    spring_critical: bool = False
    inverted_size: int = 0

    @property
    def defined(self) -> bool:
        return not self.singular_directions

    @property
    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(np.nan_to_num(self.K_c), compute_uv=False)

    @property
    def rank(self) -> int:
        s = self.singular_values
        return int(np.sum(s > RANK_RTOL * s[0])) if s[0] > 0 else 0

    @property
    def asymmetry(self) -> float:
        K = self.K_c
        return float(np.linalg.norm(K - K.T) / max(np.linalg.norm(K), 1e-300))


def _require(state):
    if not state.converged:
        raise NotConvergedError("stiffness needs a converged equilibrium state")


def _parts(chain: ChainModel, state: EquilibriumState):
    rows = np.asarray(chain.task_axes)
    cfg = state.cfg
    Jt, Jq, _ = _jacobians_raw(chain, cfg.q, cfg.theta)
    D = load_derivative(chain, cfg.x, state.F.as_vector())
    return rows, Jt[rows], Jq[rows], D


def _embed_cols(rows, A, nrows):
    out = np.zeros((nrows, 6))
    out[:, rows] = A
    return out


def _embed_sq(rows, A):
    out = np.zeros((6, 6))
    out[np.ix_(rows, rows)] = A
    return out


def _singular(M, k, rtol=BORDERED_RTOL):
    """Kernel directions of a bordered matrix whose first k unknowns are the wrench.

    Rows and columns are equilibrated first: spring blocks can be many orders
    of magnitude stiffer than the Jacobian entries, which would otherwise read
    as rank loss.
    """
    r = np.linalg.norm(M, axis=1)
    c = np.linalg.norm(M, axis=0)
    r = 1.0 / np.where(r > 0, r, 1.0)
    c = 1.0 / np.where(c > 0, c, 1.0)
    U, s, Vt = np.linalg.svd(r[:, None] * M * c[None, :])
    cond = s[0] / s[-1] if s[-1] > 0 else np.inf
    dirs = []
    for i in np.nonzero(s <= rtol * s[0])[0]:
        v = c * Vt[i]
        w = r * U[:, i]
        if np.linalg.norm(v[:k]) > 1e-8:
            dirs.append(("infinite", v[:k] / np.linalg.norm(v[:k])))
        elif np.linalg.norm(w[:k]) > 1e-8:
            dirs.append(("zero", w[:k] / np.linalg.norm(w[:k])))
        else:
            dirs.append(("internal", np.zeros(k)))
    return dirs, cond


def _direction6(rows, v):
    out = np.zeros(6)
    out[rows] = v
    return out


def kc_full(chain: ChainModel, state: EquilibriumState) -> StiffnessResult:
    """Invert the complete (k + n + m) bordered matrix."""
    _require(state)
    rows, Jt, Jq, D = _parts(chain, state)
    k, n, m = len(rows), chain.n, chain.m
    M = bordered_full(chain, Jt, Jq, D)
    dirs, cond = _singular(M, k)
    point = state.t.position.copy()
    if dirs:
        nan = np.full((6, 6), np.nan)
        return StiffnessResult(
            K_c=nan, S_q=np.full((n, 6), np.nan), S_theta=np.full((m, 6), np.nan),
            singular_directions=tuple((kind, _direction6(rows, v)) for kind, v in dirs),
            condition=cond, method="full", point=point, inverted_size=M.shape[0])
    Minv = np.linalg.inv(M)
    return StiffnessResult(
        K_c=_embed_sq(rows, Minv[:k, :k]),
        S_q=_embed_cols(rows, Minv[k:k + n, :k], n),
        S_theta=_embed_cols(rows, Minv[k + n:, :k], m),
        condition=cond,
        method="full",
        point=point,
        inverted_size=M.shape[0],
    )


def _reduced_blocks(chain, Jt, Jq, D):
    n = chain.n
    Dqq, Dqt = D[:n, :n], D[:n, n:]
    Dtq, Dtt = D[n:, :n], D[n:, n:]
    Ks = chain.K_theta - Dtt
    s = np.linalg.svd(Ks, compute_uv=False)
    if s[-1] <= RANK_RTOL * s[0]:
        return None
    kf = np.linalg.inv(Ks)
    A = Jt @ kf @ Jt.T
    B = Jq + Jt @ kf @ Dtq
    C = Jq.T + Dqt @ kf @ Jt.T
    Dm = Dqq + Dqt @ kf @ Dtq
    return kf, A, B, C, Dm, Dtq


def kc_reduced(chain: ChainModel, state: EquilibriumState) -> StiffnessResult:
    """Eliminate dtheta through (K - H_tt)^-1 and invert the (k + n) bordered matrix."""
    _require(state)
    rows, Jt, Jq, D = _parts(chain, state)
    k, n, m = len(rows), chain.n, chain.m
    blocks = _reduced_blocks(chain, Jt, Jq, D)
    if blocks is None:
        # K - H_tt singular: a spring-level critical load
        return replace(kc_full(chain, state), spring_critical=True)
    kf, A, B, C, Dm, Dtq = blocks
    R = np.block([[A, B], [C, Dm]])
    dirs, cond = _singular(R, k)
    point = state.t.position.copy()
    if dirs:
        full = kc_full(chain, state)
        return replace(full, method="reduced->full")
    Rinv = np.linalg.inv(R)
    Kc = Rinv[:k, :k]
    Sq = Rinv[k:, :k]
    St = kf @ (Jt.T @ Kc + Dtq @ Sq)
    return StiffnessResult(
        K_c=_embed_sq(rows, Kc),
        S_q=_embed_cols(rows, Sq, n),
        S_theta=_embed_cols(rows, St, m),
        condition=cond,
        method="reduced",
        point=point,
        inverted_size=R.shape[0],
    )


def kc_frobenius(chain: ChainModel, state: EquilibriumState) -> np.ndarray:
    """Block-factorized form A^-1 + A^-1 B (D - C A^-1 B)^-1 C A^-1 (6 x 6)."""
    _require(state)
    rows, Jt, Jq, D = _parts(chain, state)
    blocks = _reduced_blocks(chain, Jt, Jq, D)
    if blocks is None:
        raise SingularStiffnessError("K_theta - H_thetatheta is singular; use kc_full")
    _, A, B, C, Dm, _ = blocks
    sA = np.linalg.svd(A, compute_uv=False)
    if sA[-1] <= RANK_RTOL * sA[0]:
        raise SingularStiffnessError("J_theta k J_theta^T is singular; use kc_full")
    Ainv = np.linalg.inv(A)
    if chain.n == 0:
        return _embed_sq(rows, Ainv)
    S = Dm - C @ Ainv @ B
    sS = np.linalg.svd(S, compute_uv=False)
    if sS[-1] <= RANK_RTOL * max(sS[0], 1e-300):
        raise SingularStiffnessError("passive-joint Schur complement is singular; use kc_full")
    Kc = Ainv + Ainv @ B @ np.linalg.solve(S, C @ Ainv)
    return _embed_sq(rows, Kc)


def aggregate_parallel(results, atol: float = 1e-9) -> StiffnessResult:
    """Sum chain stiffness matrices referred to the same tool point."""
    results = list(results)
    if not results:
        raise ValueError("at least one chain result is required")
    pts = [r.point for r in results if r.point is not None]
    for p in pts[1:]:
        if np.linalg.norm(p - pts[0]) > atol * max(1.0, np.linalg.norm(pts[0])):
            raise ValueError("chain stiffness matrices refer to different points")
    if len(results) == 1:
        return results[0]
    dirs = tuple(d for r in results for d in r.singular_directions)
    return StiffnessResult(
        K_c=np.sum([r.K_c for r in results], axis=0),
        S_q=tuple(r.S_q for r in results),
        S_theta=tuple(r.S_theta for r in results),
        singular_directions=dirs,
        condition=max(r.condition for r in results),
        method="parallel",
        point=pts[0] if pts else None,
        spring_critical=any(r.spring_critical for r in results),
        inverted_size=max(r.inverted_size for r in results),
    )


def system_stiffness(system, state) -> StiffnessResult:
    """Reduced-form stiffness for a chain, or the parallel sum for an assembly."""
    if isinstance(system, Assembly):
        _require(state)
        return aggregate_parallel(kc_reduced(c, s) for c, s in zip(system.chains, state.states))
    return kc_reduced(system, state)


def cartesian_stiffness(system, state) -> np.ndarray:
    return system_stiffness(system, state).K_c


def _probe_chain(chain, state, target, settings):
    s = solve_for_pose(chain, target, state.cfg, settings, start_F=state.F)
    if not s.converged:
        s = newton_continue(chain, target, state.cfg, state.F, settings)
    return s


def fd_stiffness_probe(system, state, step: float = None, settings: SolverSettings = None) -> np.ndarray:
    """Central-difference dF/dt from re-solved equilibria at t +- step e_k.

    Columns whose probe solves fail are NaN.
    """
    _require(state)
    chains = system.chains if isinstance(system, Assembly) else (system,)
    states = state.states if isinstance(system, Assembly) else (state,)
    if step is None:
        step = 1e-6 * max(c.reach for c in chains)
    settings = settings or SolverSettings(residual_tol=1e-11, restart_count=0)
    rows = np.asarray(chains[0].task_axes)
    K = np.zeros((6, 6))
    for j in rows:
        e = np.zeros(6)
        e[j] = step
        Fs = []
        for sign in (1.0, -1.0):
            target = state.t.displaced(sign * e)
            total = np.zeros(6)
            ok = True
            for c, s in zip(chains, states):
                r = _probe_chain(c, s, target, settings)
                ok &= r.converged
                total += r.F.as_vector()
            Fs.append(total if ok else np.full(6, np.nan))
        K[:, j] = (Fs[0] - Fs[1]) / (2.0 * step)
    return K
