"""Second-order stability of loaded equilibria.

Admissible variations (dtheta, dq) keep the end pose fixed, so to first order
they lie in the kernel of [J_theta J_q]. On that kernel the energy change is
-1/2 dmu^T M dmu with

    M = V^T [[H_tt - K, H_tq], [H_qt, H_qq]] V,

and the equilibrium is stable iff M is negative definite.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .chain import Assembly, ChainModel, Configuration, _jacobians_raw, torque_hessians
from .equilibrium import EquilibriumState, _kin_residual
from .errors import NotConvergedError

KERNEL_RTOL = 1e-10
CRITICAL_RTOL = 1e-8


class Classification(str, Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    CRITICAL = "Critical"

    def __str__(self):
        return self.value


_SEVERITY = {Classification.STABLE: 0, Classification.CRITICAL: 1, Classification.UNSTABLE: 2}


@dataclass(frozen=True, eq=False)
class NullSpaceBasis:
    V_theta0: np.ndarray  # m x r
    V_q0: np.ndarray  # n x r
    singular_values: np.ndarray = None

    @property
    def r(self) -> int:
        return self.V_theta0.shape[1]

    @property
    def stacked(self) -> np.ndarray:
        return np.vstack([self.V_theta0, self.V_q0])


@dataclass(frozen=True)
class StabilityVerdict:
    classification: Classification
    min_eigenvalue: float
    basis_rank: int
    note: str = ""

    @property
    def stable(self) -> bool:
        return self.classification is Classification.STABLE


def constraint_nullspace(J_theta, J_q, rtol: float = KERNEL_RTOL) -> NullSpaceBasis:
    """Orthonormal kernel of [J_theta J_q] from the SVD."""
    J_theta = np.atleast_2d(np.asarray(J_theta, dtype=float))
    J_q = np.asarray(J_q, dtype=float).reshape(J_theta.shape[0], -1)
    m = J_theta.shape[1]
    J = np.hstack([J_theta, J_q])
    if J.shape[1] == 0:
        return NullSpaceBasis(np.zeros((m, 0)), np.zeros((0, 0)), np.zeros(0))
    _, s, Vt = np.linalg.svd(J, full_matrices=True)
    rank = int(np.sum(s > rtol * s[0])) if s.size and s[0] > 0 else 0
    V = Vt[rank:].T
    return NullSpaceBasis(V[:m], V[m:], s)


def _require(state):
    if not state.converged:
        raise NotConvergedError("stability analysis needs a converged equilibrium state")


def _task_jacobians(chain: ChainModel, cfg: Configuration):
    rows = np.asarray(chain.task_axes)
    Jt, Jq, _ = _jacobians_raw(chain, cfg.q, cfg.theta)
    return Jt[rows], Jq[rows]


def stability_matrix(chain: ChainModel, state: EquilibriumState, basis: NullSpaceBasis = None) -> np.ndarray:
    _require(state)
    if basis is None:
        basis = constraint_nullspace(*_task_jacobians(chain, state.cfg))
    H = torque_hessians(chain, state.cfg, state.F)
    W = np.block([
        [H.H_thetatheta - chain.K_theta, H.H_thetaq],
        [H.H_qtheta, H.H_qq],
    ])
    V = basis.stacked
    M = V.T @ W @ V
    return (M + M.T) / 2.0


def _verdict_from_matrix(M: np.ndarray, r: int, tol: float) -> StabilityVerdict:
    if r == 0:
        return StabilityVerdict(Classification.STABLE, np.inf, 0, "no admissible variations (r = 0)")
    lam = np.linalg.eigvalsh(-M)
    lo = float(lam[0])
    scale = float(np.max(np.abs(lam)))
    band = tol * scale
    if scale > 0 and lo > band:
        cls = Classification.STABLE
    elif lo < -band:
        cls = Classification.UNSTABLE
    else:
        cls = Classification.CRITICAL
    return StabilityVerdict(cls, lo, r)


def classify(chain: ChainModel, state: EquilibriumState, tol: float = CRITICAL_RTOL) -> StabilityVerdict:
    basis = constraint_nullspace(*_task_jacobians(chain, state.cfg))
    M = stability_matrix(chain, state, basis)
    return _verdict_from_matrix(M, basis.r, tol)


def classify_system(system, state, tol: float = CRITICAL_RTOL) -> StabilityVerdict:
    """Verdict for a chain or an assembly (the worst chain decides)."""
    if isinstance(system, Assembly):
        _require(state)
        verdicts = [classify(c, s, tol) for c, s in zip(system.chains, state.states)]
        worst = max(verdicts, key=lambda v: (_SEVERITY[v.classification], -v.min_eigenvalue))
        return StabilityVerdict(worst.classification, min(v.min_eigenvalue for v in verdicts),
                                sum(v.basis_rank for v in verdicts), worst.note)
    return classify(chain=system, state=state, tol=tol)


@dataclass(frozen=True)
class ProbeReport:
    verdict: StabilityVerdict
    samples: int
    used: int
    discarded: int
    agreement: float  # fraction of used probes whose energy change has the predicted sign
    ascending: float  # fraction of used probes with energy above the equilibrium
    descending_found: bool
    min_change: float
    max_change: float


def _restore(chain, x, target_T, rows, tol=1e-13, max_iter=50):
    """Pull x back onto g(x) = t with minimum-norm corrections (orthogonal to the kernel)."""
    n = chain.n
    for _ in range(max_iter):
        Jt, Jq, T = _jacobians_raw(chain, x[:n], x[n:])
        r = _kin_residual(target_T, T)[rows]
        if np.linalg.norm(r) < tol:
            return x
        J = np.hstack([Jq[rows], Jt[rows]])
        x = x + np.linalg.lstsq(J, r, rcond=None)[0]
        if not np.all(np.isfinite(x)):
            return None
    return None


def energy_probe(chain: ChainModel, state: EquilibriumState, samples: int = 200, radius: float = 1e-3,
                 seed: int = 0, tol: float = CRITICAL_RTOL) -> ProbeReport:
    """Sample the potential on the constraint manifold around the equilibrium.

    Each probe steps along a random kernel direction, restores the end-pose
    constraint exactly, and compares the potential U = 1/2 dtheta^T K dtheta
    - F^T (g - t) with its equilibrium value.
    """
    _require(state)
    rows = np.asarray(chain.task_axes)
    basis = constraint_nullspace(*_task_jacobians(chain, state.cfg))
    M = stability_matrix(chain, state, basis)
    verdict = _verdict_from_matrix(M, basis.r, tol)
    if basis.r == 0:
        return ProbeReport(verdict, samples, 0, 0, 1.0, 1.0, False, 0.0, 0.0)
    n = chain.n
    # basis is ordered (theta, q); the solver's stacked x is (q, theta)
    V = np.vstack([basis.V_q0, basis.V_theta0])
    target_T = state.t.as_matrix()
    x0 = state.cfg.x
    F = state.F.as_vector()
    U0 = chain.elastic_energy(state.cfg)
    rng = np.random.default_rng(seed)
    agree = up = used = 0
    changes = []
    for _ in range(samples):
        u = rng.standard_normal(basis.r)
        u /= np.linalg.norm(u)
        x = _restore(chain, x0 + radius * (V @ u), target_T, rows)
        if x is None:
            continue
        _, _, T = _jacobians_raw(chain, x[:n], x[n:])
        d = x[n:] - chain.theta0
        U = 0.5 * float(d @ chain.K_theta @ d) + float(F[rows] @ _kin_residual(target_T, T)[rows])
        dU = U - U0
        predicted = -float(u @ M @ u)
        used += 1
        up += dU > 0.0
        agree += np.sign(dU) == np.sign(predicted)
        changes.append(dU)
    changes = np.array(changes) if changes else np.zeros(1)
    return ProbeReport(
        verdict=verdict,
        samples=samples,
        used=used,
        discarded=samples - used,
        agreement=agree / used if used else 0.0,
        ascending=up / used if used else 0.0,
        descending_found=bool(np.any(changes < 0.0)),
        min_change=float(changes.min()),
        max_change=float(changes.max()),
    )
