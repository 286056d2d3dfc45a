"""Serial chain data model: geometry, forward kinematics, Jacobians, torque-map Hessians.

A chain is an ordered tuple of elements. Fixed transforms carry rigid geometry;
joints carry one elementary axis (``tx``..``rz``); virtual spring blocks carry
several axes whose coordinates are exponential twist coordinates of the local
deflection. Every scalar joint coordinate belongs either to ``q`` (perfect
passive joints) or to ``theta`` (spring blocks and preloaded passive joints).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag

from .errors import ModelError, ParameterError
from .se3 import adjoint, is_rotation, se3_exp, se3_right_jacobian, so3_exp, so3_log

AXES = ("tx", "ty", "tz", "rx", "ry", "rz")
AXIS_INDEX = {name: i for i, name in enumerate(AXES)}
ALL_TASK_AXES = (0, 1, 2, 3, 4, 5)
FD_STEP = 1e-6


def _check_axis(axis: str) -> str:
    if axis not in AXIS_INDEX:
        raise ModelError(f"unknown joint axis {axis!r}; expected one of {AXES}")
    return axis


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def elementary_transform(axis: str, value: float) -> np.ndarray:
    """Homogeneous transform of a single elementary motion along/about ``axis``."""
    k = AXIS_INDEX[axis]
    T = np.eye(4)
    if k < 3:
        T[k, 3] = value
    else:
        c, s = np.cos(value), np.sin(value)
        i, j = [(1, 2), (2, 0), (0, 1)][k - 3]
        T[i, i] = c
        T[j, j] = c
        T[i, j] = -s
        T[j, i] = s
    return T


# ---------------------------------------------------------------------------
# elements


@dataclass(frozen=True, eq=False)
class FixedTransform:
    matrix: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        if M.shape != (4, 4):
            raise ModelError("fixed transform must be 4x4")
        if not is_rotation(M[:3, :3], tol=1e-9) or not np.allclose(M[3], [0, 0, 0, 1]):
            raise ModelError("fixed transform is not a proper rigid transform")
        object.__setattr__(self, "matrix", _readonly(M))

    @classmethod
    def translation(cls, x=0.0, y=0.0, z=0.0):
        T = np.eye(4)
        T[:3, 3] = (x, y, z)
        return cls(T)

    def __eq__(self, other):
        return isinstance(other, FixedTransform) and np.array_equal(self.matrix, other.matrix)


@dataclass(frozen=True)
class ActuatedLocked:
    """Actuated joint held at a fixed coordinate; contributes no Jacobian column."""

    axis: str
    value: float = 0.0

    def __post_init__(self):
        _check_axis(self.axis)


@dataclass(frozen=True)
class PassivePerfect:
    """Unactuated joint without internal spring; ``home`` seeds the start configuration."""

    axis: str
    home: float = 0.0

    def __post_init__(self):
        _check_axis(self.axis)


@dataclass(frozen=True)
class PassiveCoupled:
    """Passive joint slaved to an earlier perfect passive coordinate: value = ratio * q[source].

    Used to express parallelogram-type motions (translation along a circle with
    constant orientation) without closing kinematic loops.
    """

    axis: str
    source: int
    ratio: float = -1.0

    def __post_init__(self):
        _check_axis(self.axis)


@dataclass(frozen=True)
class PassivePreloaded:
    """Passive joint with an internal spring; its coordinate lives in theta."""

    axis: str
    stiffness: float
    preload: float = 0.0

    def __post_init__(self):
        _check_axis(self.axis)
        if not self.stiffness > 0.0:
            raise ParameterError("preloaded joint stiffness must be positive")


@dataclass(frozen=True, eq=False)
class VirtualSpringBlock:
    """Localized d-dof spring. Coordinates are twist components along ``axes``."""

    axes: tuple
    K: np.ndarray
    theta0: np.ndarray = None

    def __post_init__(self):
        axes = tuple(_check_axis(a) for a in self.axes)
        if not axes or len(set(axes)) != len(axes):
            raise ModelError("spring block axes must be non-empty and distinct")
        d = len(axes)
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        if K.shape != (d, d):
            raise ModelError(f"spring block K must be {d}x{d}, got {K.shape}")
        scale = max(np.max(np.abs(K)), 1e-300)
        if np.max(np.abs(K - K.T)) > 1e-12 * scale:
            raise ParameterError("spring block not symmetric")
        try:
            np.linalg.cholesky(K)
        except np.linalg.LinAlgError:
            raise ParameterError("spring block not positive definite") from None
        t0 = np.zeros(d) if self.theta0 is None else np.asarray(self.theta0, dtype=float).reshape(-1)
        if t0.shape != (d,):
            raise ModelError("spring block theta0 length mismatch")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "K", _readonly((K + K.T) / 2.0))
        object.__setattr__(self, "theta0", _readonly(t0))

    @property
    def dof(self) -> int:
        return len(self.axes)

    def __eq__(self, other):
        return (
            isinstance(other, VirtualSpringBlock)
            and self.axes == other.axes
            and np.array_equal(self.K, other.K)
            and np.array_equal(self.theta0, other.theta0)
        )


JOINT_TYPES = (ActuatedLocked, PassivePerfect, PassiveCoupled, PassivePreloaded, VirtualSpringBlock)


# ---------------------------------------------------------------------------
# state types


@dataclass(frozen=True, eq=False)
class Pose:
    position: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        R = np.asarray(self.rotation, dtype=float)
        if not is_rotation(R, tol=1e-9):
            raise ModelError("pose rotation is not orthonormal")
        object.__setattr__(self, "position", _readonly(p))
        object.__setattr__(self, "rotation", _readonly(R))

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, dtype=float)
        return cls(T[:3, 3], T[:3, :3])

    def as_matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.position
        return T

    def displaced(self, twist) -> "Pose":
        """Pose moved by a world-frame twist increment (dp, dphi)."""
        twist = np.asarray(twist, dtype=float)
        return Pose(self.position + twist[:3], so3_exp(twist[3:]) @ self.rotation)

    def angles(self) -> np.ndarray:
        """Rotation vector of the orientation (the 3-angle form used at I/O boundaries)."""
        return so3_log(self.rotation)


@dataclass(frozen=True, eq=False)
class Wrench:
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    moment: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        f = np.asarray(self.force, dtype=float).reshape(3)
        m = np.asarray(self.moment, dtype=float).reshape(3)
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(m))):
            raise ModelError("wrench entries must be finite")
        object.__setattr__(self, "force", _readonly(f))
        object.__setattr__(self, "moment", _readonly(m))

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        return cls(v[:3], v[3:6])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.moment])

    def __add__(self, other: "Wrench") -> "Wrench":
        return Wrench(self.force + other.force, self.moment + other.moment)


@dataclass(frozen=True, eq=False)
class Configuration:
    q: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", _readonly(np.asarray(self.q, dtype=float).reshape(-1)))
        object.__setattr__(self, "theta", _readonly(np.asarray(self.theta, dtype=float).reshape(-1)))

    @property
    def x(self) -> np.ndarray:
        """Stacked coordinates (q, theta)."""
        return np.concatenate([self.q, self.theta])

    @classmethod
    def from_x(cls, x, n: int):
        return cls(x[:n], x[n:])


@dataclass(frozen=True, eq=False)
class HessianSet:
    """Second derivatives of psi = g(q, theta)^T F.

    ``D`` keeps the raw (unsymmetrized) derivative of the torque map
    (J_q^T F, J_theta^T F) with respect to (q, theta), which is what the
    incremental stiffness relations need when the load carries moments.
    """

    H_qq: np.ndarray
    H_qtheta: np.ndarray
    H_thetatheta: np.ndarray
    D: np.ndarray = None

    @property
    def H_thetaq(self) -> np.ndarray:
        return self.H_qtheta.T


# ---------------------------------------------------------------------------
# chain model


class ChainModel:
    """Immutable ordered description of one serial chain.

    ``task_axes`` selects which of the six pose components (x, y, z, rx, ry, rz)
    are constrained/loaded at the end point; planar reductions use a subset.
    """

    __slots__ = ("elements", "task_axes", "name", "n", "m", "K_theta", "theta0",
                 "_slots", "_K_inv", "reach", "_frozen")

    def __init__(self, elements, task_axes=ALL_TASK_AXES, name: str = ""):
        elements = tuple(elements)
        if not elements:
            raise ModelError("chain must contain at least one element")
        task_axes = tuple(sorted(int(a) for a in task_axes))
        if not task_axes or len(set(task_axes)) != len(task_axes) or not set(task_axes) <= set(ALL_TASK_AXES):
            raise ModelError(f"invalid task axes {task_axes}")
        slots = []
        n = m = 0
        blocks = []
        theta0 = []
        reach = 0.0
        for idx, el in enumerate(elements):
            if isinstance(el, FixedTransform):
                slots.append(("fixed", None))
                reach += float(np.linalg.norm(el.matrix[:3, 3]))
            elif isinstance(el, ActuatedLocked):
                slots.append(("locked", None))
                if AXIS_INDEX[el.axis] < 3:
                    reach += abs(el.value)
            elif isinstance(el, PassivePerfect):
                slots.append(("q", n))
                n += 1
            elif isinstance(el, PassiveCoupled):
                if not 0 <= el.source < n:
                    raise ModelError(f"element {idx}: coupled joint source {el.source} is not an earlier passive coordinate")
                slots.append(("coupled", el.source))
            elif isinstance(el, PassivePreloaded):
                slots.append(("theta", m))
                blocks.append(np.array([[el.stiffness]]))
                theta0.append([el.preload])
                m += 1
            elif isinstance(el, VirtualSpringBlock):
                slots.append(("block", m))
                blocks.append(np.asarray(el.K))
                theta0.append(el.theta0)
                m += el.dof
            else:
                raise ModelError(f"element {idx}: unsupported element type {type(el).__name__}")
        K = block_diag(*blocks) if blocks else np.zeros((0, 0))
        self.elements = elements
        self.task_axes = task_axes
        self.name = name
        self.n = n
        self.m = m
        self.K_theta = _readonly(K)
        self.theta0 = _readonly(np.concatenate(theta0) if theta0 else np.zeros(0))
        self._slots = tuple(slots)
        self._K_inv = _readonly(np.linalg.inv(K) if m else np.zeros((0, 0)))
        self.reach = reach
        self._frozen = True

    def __setattr__(self, key, value):
        if getattr(self, "_frozen", False):
            raise AttributeError("ChainModel is immutable")
        object.__setattr__(self, key, value)

    def __repr__(self):
        return f"ChainModel(name={self.name!r}, n={self.n}, m={self.m}, task_axes={self.task_axes})"

    def __eq__(self, other):
        if not isinstance(other, ChainModel):
            return NotImplemented
        return (self.task_axes == other.task_axes and len(self.elements) == len(other.elements)
                and all(a == b for a, b in zip(self.elements, other.elements)))

    __hash__ = object.__hash__

    @property
    def K_theta_inv(self) -> np.ndarray:
        return self._K_inv

    @property
    def task_dim(self) -> int:
        return len(self.task_axes)

    def home(self) -> Configuration:
        """Unloaded start configuration: passive homes, springs at preload."""
        q = [el.home for el in self.elements if isinstance(el, PassivePerfect)]
        return Configuration(np.array(q, dtype=float), np.array(self.theta0))

    def check(self, cfg: Configuration) -> None:
        if cfg.q.shape != (self.n,) or cfg.theta.shape != (self.m,):
            raise ModelError(
                f"configuration dimensions (q={cfg.q.shape[0]}, theta={cfg.theta.shape[0]}) "
                f"do not match chain (n={self.n}, m={self.m})")

    def elastic_energy(self, cfg: Configuration) -> float:
        d = cfg.theta - self.theta0
        return 0.5 * float(d @ self.K_theta @ d)


def _cross(a, b):
    """a x b for 3-vectors (also column-wise when a, b are 3 x k)."""
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def _walk(chain: ChainModel, q, theta):
    """Compose all elements; return end transform and per-joint frame records."""
    T = np.eye(4)
    records = []
    for el, (kind, idx) in zip(chain.elements, chain._slots):
        if kind == "fixed":
            T = T @ el.matrix
        elif kind == "locked":
            T = T @ elementary_transform(el.axis, el.value)
        elif kind == "q":
            T = T @ elementary_transform(el.axis, q[idx])
            records.append(("q", idx, 1.0, el.axis, T))
        elif kind == "coupled":
            T = T @ elementary_transform(el.axis, el.ratio * q[idx])
            records.append(("q", idx, el.ratio, el.axis, T))
        elif kind == "theta":
            T = T @ elementary_transform(el.axis, theta[idx])
            records.append(("theta", idx, 1.0, el.axis, T))
        else:  # spring block
            d = el.dof
            xi = np.zeros(6)
            cols = [AXIS_INDEX[a] for a in el.axes]
            xi[cols] = theta[idx: idx + d]
            T = T @ se3_exp(xi)
            records.append(("block", idx, cols, xi, T))
    return T, records


def forward_pose(chain: ChainModel, cfg: Configuration) -> Pose:
    chain.check(cfg)
    T, _ = _walk(chain, cfg.q, cfg.theta)
    return Pose.from_matrix(T)


def pose_residual(target: Pose, actual: Pose) -> np.ndarray:
    """(target.p - actual.p, log(target.R actual.R^T)); zero iff the poses coincide."""
    out = np.empty(6)
    out[:3] = target.position - actual.position
    out[3:] = so3_log(target.rotation @ actual.rotation.T)
    return out


def _jacobians_raw(chain: ChainModel, q, theta):
    T_end, records = _walk(chain, q, theta)
    p_end = T_end[:3, 3]
    Jq = np.zeros((6, chain.n))
    Jt = np.zeros((6, chain.m))
    for rec in records:
        if rec[0] == "block":
            _, idx, cols, xi, T = rec
            Jr = se3_right_jacobian(xi)[:, cols]
            # body twist at the block's output frame -> world twist at the end point
            A = adjoint(T) @ Jr
            w = A[3:]
            v = A[:3] + _cross(w, p_end[:, None])
            Jt[:3, idx: idx + len(cols)] = v
            Jt[3:, idx: idx + len(cols)] = w
            continue
        kind, idx, ratio, axis, T = rec
        k = AXIS_INDEX[axis]
        R = T[:3, :3]
        col = np.zeros(6)
        if k < 3:
            col[:3] = R[:, k]
        else:
            w = R[:, k - 3]
            col[:3] = _cross(w, p_end - T[:3, 3])
            col[3:] = w
        if kind == "q":
            Jq[:, idx] += ratio * col
        else:
            Jt[:, idx] = col
    return Jt, Jq, T_end


def jacobians(chain: ChainModel, cfg: Configuration):
    """Geometric Jacobians (J_theta 6 x m, J_q 6 x n) taken at the end point."""
    chain.check(cfg)
    Jt, Jq, _ = _jacobians_raw(chain, cfg.q, cfg.theta)
    return Jt, Jq


def kinematics(chain: ChainModel, cfg: Configuration):
    """Pose and both Jacobians from a single pass."""
    chain.check(cfg)
    Jt, Jq, T = _jacobians_raw(chain, cfg.q, cfg.theta)
    return Pose.from_matrix(T), Jt, Jq


def torque_map(chain: ChainModel, x, F) -> np.ndarray:
    """(J_q^T F, J_theta^T F) at stacked coordinates x = (q, theta)."""
    n = chain.n
    Jt, Jq, _ = _jacobians_raw(chain, x[:n], x[n:])
    return np.concatenate([Jq.T @ F, Jt.T @ F])


def torque_hessians(chain: ChainModel, cfg: Configuration, F, step: float = FD_STEP,
                    symmetrize: bool = True) -> HessianSet:
    """Hessians of psi = g^T F by central differences of the analytic torque map."""
    chain.check(cfg)
    Fv = F.as_vector() if isinstance(F, Wrench) else np.asarray(F, dtype=float)
    n, m = chain.n, chain.m
    N = n + m
    x = cfg.x
    D = np.zeros((N, N))
    if np.any(Fv != 0.0):
        for j in range(N):
            xp = x.copy()
            xm = x.copy()
            xp[j] += step
            xm[j] -= step
            D[:, j] = (torque_map(chain, xp, Fv) - torque_map(chain, xm, Fv)) / (2.0 * step)
    H = (D + D.T) / 2.0 if symmetrize else D
    return HessianSet(
        H_qq=H[:n, :n],
        H_qtheta=H[:n, n:] if symmetrize else D[:n, n:],
        H_thetatheta=H[n:, n:],
        D=D,
    )


def product_of_fixed(chain: ChainModel) -> np.ndarray:
    """Product of the rigid parts with all joint coordinates at zero."""
    T = np.eye(4)
    for el in chain.elements:
        if isinstance(el, FixedTransform):
            T = T @ el.matrix
        elif isinstance(el, ActuatedLocked):
            T = T @ elementary_transform(el.axis, el.value)
    return T


class Assembly:
    """Parallel chains sharing one tool point.

    Each chain must end at the tool point; ``tool_frames`` (optional 4x4 per
    chain) are appended as rigid transforms to get there.
    """

    def __init__(self, chains, tool_frames=None, name: str = ""):
        chains = list(chains)
        if not chains:
            raise ModelError("assembly needs at least one chain")
        if tool_frames is not None:
            tool_frames = list(tool_frames)
            if len(tool_frames) != len(chains):
                raise ModelError("one tool frame per chain is required")
            chains = [
                ChainModel(c.elements + (FixedTransform(T),), c.task_axes, c.name)
                for c, T in zip(chains, tool_frames)
            ]
        axes = {c.task_axes for c in chains}
        if len(axes) != 1:
            raise ModelError("all chains of an assembly must share the task axes")
        self.chains = tuple(chains)
        self.task_axes = chains[0].task_axes
        self.name = name

    def __repr__(self):
        return f"Assembly(name={self.name!r}, chains={len(self.chains)})"

    def __eq__(self, other):
        if not isinstance(other, Assembly):
            return NotImplemented
        return len(self.chains) == len(other.chains) and all(a == b for a, b in zip(self.chains, other.chains))

    __hash__ = object.__hash__

    def home(self):
        return [c.home() for c in self.chains]

    @property
    def reach(self) -> float:
        return max(c.reach for c in self.chains)
