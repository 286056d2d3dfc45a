"""Benchmark chains (Models A, B, C at S / Pi / Z postures) and an Orthoglide-like assembly.

Models are normalized: link length L and reference bending coefficient
K_ref, so forces come out in units of K_ref / L.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .chain import (
    ActuatedLocked,
    Assembly,
    ChainModel,
    Configuration,
    FixedTransform,
    PassiveCoupled,
    PassivePerfect,
    VirtualSpringBlock,
    forward_pose,
)
from .elasticity import BeamSection, beam_spring_planar, beam_spring_spatial, spring_1d
from .errors import DomainError, ModelError

PLANAR_XY = (0, 1)
PLANAR_XY_RZ = (0, 1, 5)


class Model(str, Enum):
    A = "A"
    B = "B"
    C = "C"
    ORTHOGLIDE = "OrthoglideLike"


class Posture(str, Enum):
    S = "S"
    Pi = "Pi"
    Z = "Z"


POSTURE_ANGLES = {
    Posture.S: (0.0, 0.0),
    Posture.Pi: (np.radians(-30.0), np.radians(-30.0)),
    Posture.Z: (np.radians(30.0), np.radians(-30.0)),
}

# Orthoglide-like nominal data (SI units). The identified compliance matrices of
# the real machine are not available; these sections only fix plausible ratios.
ORTHO_LIMB = 0.31
ORTHO_HALF_EDGE = 0.1
ORTHO_E = 2.1e11
ORTHO_ACTUATOR_K = 2.0e8
ORTHO_FOOT = dict(L=0.25, a=0.004, b=0.02)
ORTHO_BAR = dict(L=ORTHO_LIMB, a=0.01, b=0.02)
ORTHO_COUPLER = dict(L=0.03, a=0.03, b=0.03)

WORKSPACE_POINTS = {
    "Q0": (0.0, 0.0, 0.0),
    "Q1": (-1.0, -1.0, -1.0),
    "Q2": (1.0, 1.0, 1.0),
    "Q3": (1.0, -1.0, -1.0),
    "Q4": (1.0, 1.0, -1.0),
}


def default_section(L: float = 1.0, K_ref: float = 1.0) -> BeamSection:
    """a = 0.02 L, b = 0.05 L, E chosen so that E I_z / L = K_ref."""
    a, b = 0.02 * L, 0.05 * L
    I_z = a * b**3 / 12.0
    return BeamSection(L=L, a=a, b=b, E=K_ref * L / I_z)


@dataclass(frozen=True)
class ScenarioSpec:
    model: Model
    configuration: Posture = Posture.S
    L: float = 1.0
    K_theta_ref: float = 1.0
    section: BeamSection = None
    workspace_point: str = "Q0"

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        object.__setattr__(self, "configuration", Posture(self.configuration))
        if self.model is Model.ORTHOGLIDE and self.workspace_point not in WORKSPACE_POINTS:
            raise ModelError(f"unknown workspace point {self.workspace_point!r}")
        if not (self.L > 0 and self.K_theta_ref > 0):
            raise ModelError("L and K_theta_ref must be positive")

    @property
    def name(self) -> str:
        if self.model is Model.ORTHOGLIDE:
            return f"orthoglide-{self.workspace_point}"
        return f"model{self.model.value}-{self.configuration.value}"


def _tx(L):
    return FixedTransform.translation(L, 0.0, 0.0)


def _base_angle(elements, task_axes, n_before) -> float:
    """Base rotation that puts the end point on the +x axis."""
    probe = ChainModel(elements, task_axes)
    p = forward_pose(probe, probe.home()).position
    return -float(np.arctan2(p[1], p[0]))


def _model_a(spec: ScenarioSpec):
    L, K = spec.L, spec.K_theta_ref
    qa1, qa2 = POSTURE_ANGLES[spec.configuration]
    k = spring_1d(K)

    def elements(home):
        return [
            PassivePerfect("rz", home),
            _tx(L),
            ActuatedLocked("rz", qa1),
            VirtualSpringBlock(("rz",), k.K),
            _tx(L),
            ActuatedLocked("rz", qa2),
            VirtualSpringBlock(("rz",), k.K),
            _tx(L),
        ]

    home = _base_angle(elements(0.0), PLANAR_XY, 0)
    return ChainModel(elements(home), PLANAR_XY, spec.name)


def _model_b(spec: ScenarioSpec):
    L = spec.L
    qa1, qa2 = POSTURE_ANGLES[spec.configuration]
    sec = spec.section or default_section(L, spec.K_theta_ref)
    Kb = beam_spring_planar(sec).K
    axes = ("tx", "ty", "rz")

    def elements(home):
        return [
            PassivePerfect("rz", home),
            _tx(L), VirtualSpringBlock(axes, Kb),
            ActuatedLocked("rz", qa1),
            _tx(L), VirtualSpringBlock(axes, Kb),
            ActuatedLocked("rz", qa2),
            _tx(L), VirtualSpringBlock(axes, Kb),
            PassivePerfect("rz", 0.0),
        ]

    home = _base_angle(elements(0.0), PLANAR_XY_RZ, 0)
    el = elements(home)
    # the end joint cancels the base turn so the platform starts unrotated
    el[-1] = PassivePerfect("rz", -home - qa1 - qa2)
    return ChainModel(el, PLANAR_XY_RZ, spec.name)


def _model_c(spec: ScenarioSpec):
    L = spec.L
    qa1, qa2 = POSTURE_ANGLES[spec.configuration]
    sec = spec.section or default_section(L, spec.K_theta_ref)
    Kb = beam_spring_spatial(sec).K
    axes = ("tx", "ty", "tz", "rx", "ry", "rz")

    def elements(home):
        return [
            PassivePerfect("rz", home), PassivePerfect("ry", 0.0),
            _tx(L), VirtualSpringBlock(axes, Kb),
            ActuatedLocked("rz", qa1),
            _tx(L), VirtualSpringBlock(axes, Kb),
            ActuatedLocked("rz", qa2),
            _tx(L), VirtualSpringBlock(axes, Kb),
            PassivePerfect("rx", 0.0), PassivePerfect("ry", 0.0), PassivePerfect("rz", 0.0),
        ]

    home = _base_angle(elements(0.0), (0, 1, 2, 3, 4, 5), 0)
    el = elements(home)
    el[-1] = PassivePerfect("rz", -home - qa1 - qa2)
    return ChainModel(el, (0, 1, 2, 3, 4, 5), spec.name)


def build_chain(spec: ScenarioSpec) -> ChainModel:
    if spec.model is Model.A:
        return _model_a(spec)
    if spec.model is Model.B:
        return _model_b(spec)
    if spec.model is Model.C:
        return _model_c(spec)
    raise ModelError("Orthoglide-like scenarios build an assembly; use build_orthoglide_like")


def model_a_analytic(delta: float, branch: str = "stable", K: float = 1.0, L: float = 1.0) -> float:
    """Closed-form axial force of Model A at normalized deflection delta = Delta / L."""
    delta = float(delta)
    if branch == "stable":
        if not 0.0 < delta < 2.0:
            raise DomainError("stable branch needs 0 < delta < 2")
        phi = np.arccos(1.0 - delta / 2.0)
        return K / L * phi / np.sin(phi)
    if branch == "unstable":
        c_q = (12.0 - 6.0 * delta + delta**2) / (12.0 - 4.0 * delta)
        c_t = 1.0 - 1.5 * delta + delta**2 / 4.0
        if not (0.0 < delta < 3.0 and -1.0 <= c_q <= 1.0 and -1.0 <= c_t < 1.0):
            raise DomainError(f"unstable branch undefined at delta = {delta}")
        q = np.arccos(c_q)
        th = -np.arccos(c_t)
        return K / L * (np.cos(q + th) + 2.0 * np.cos(q)) / np.sin(th) * th
    raise DomainError(f"unknown branch {branch!r}")


# ---------------------------------------------------------------------------
# Orthoglide-like assembly


def _leg_rotation(k: int) -> np.ndarray:
    """Local frame of leg k: x along drive axis e_k, y along e_{k+1}, z along e_{k+2}."""
    R = np.zeros((3, 3))
    for i in range(3):
        R[(k + i) % 3, i] = 1.0
    return R


def _limb_drop(K6: np.ndarray, drop: int = 4) -> np.ndarray:
    keep = [i for i in range(6) if i != drop]
    return K6[np.ix_(keep, keep)]


def orthoglide_leg(k: int, P, L_limb: float = ORTHO_LIMB, name: str = "") -> ChainModel:
    """Leg k of the Orthoglide-like machine with its tool point at P.

    Prismatic drive along e_k (locked, with an axial spring), foot spring, a
    parallelogram limb modelled as R_u(b1) R_v(b2) T_x(L) R_v(-b2) R_u(-b1)
    (circular translation, orientation preserved) with an equivalent 5-dof
    spring, and coupling-element springs at both limb ends.
    """
    P = np.asarray(P, dtype=float)
    R = _leg_rotation(k)
    e = R[:, 0]
    perp = P - e * P[k]
    h2 = L_limb**2 - perp @ perp
    if h2 <= 0.0:
        raise ModelError(f"workspace point {P} unreachable by leg {k}")
    a = P[k] - np.sqrt(h2)  # foot position along the drive axis
    d = R.T @ (P - a * e) / L_limb  # limb direction in the leg frame
    b2 = float(np.arcsin(np.clip(d[1], -1.0, 1.0)))
    b1 = float(np.arctan2(-d[2], d[0]))

    foot = beam_spring_spatial(BeamSection(E=ORTHO_E, **ORTHO_FOOT)).K
    bar = beam_spring_spatial(BeamSection(E=ORTHO_E, **ORTHO_BAR)).K
    coupler = beam_spring_spatial(BeamSection(E=ORTHO_E, **ORTHO_COUPLER)).K
    six = ("tx", "ty", "tz", "rx", "ry", "rz")
    base = np.eye(4)
    base[:3, :3] = R
    elements = [
        FixedTransform(base),
        ActuatedLocked("tx", a),
        VirtualSpringBlock(("tx",), [[ORTHO_ACTUATOR_K]]),
        VirtualSpringBlock(six, foot),
        PassivePerfect("ry", b1),
        PassivePerfect("rz", b2),
        VirtualSpringBlock(six, coupler),
        _tx(L_limb),
        # two stiff bars in parallel; rotation about the parallelogram axle is rigid
        VirtualSpringBlock(("tx", "ty", "tz", "rx", "rz"), 2.0 * _limb_drop(bar)),
        PassiveCoupled("rz", 1, -1.0),
        PassiveCoupled("ry", 0, -1.0),
        VirtualSpringBlock(six, coupler),
        FixedTransform(np.block([[R.T, np.zeros((3, 1))], [np.zeros((1, 3)), np.ones((1, 1))]])),
    ]
    return ChainModel(elements, (0, 1, 2, 3, 4, 5), name or f"leg{k}")


def workspace_point(label: str, half_edge: float = ORTHO_HALF_EDGE) -> np.ndarray:
    if label not in WORKSPACE_POINTS:
        raise ModelError(f"unknown workspace point {label!r}")
    return half_edge * np.asarray(WORKSPACE_POINTS[label], dtype=float)


def build_orthoglide_like(spec: ScenarioSpec) -> Assembly:
    P = workspace_point(spec.workspace_point)
    legs = [orthoglide_leg(k, P, name=f"{spec.name}/leg{k}") for k in range(3)]
    for leg in legs:
        p = forward_pose(leg, leg.home()).position
        if np.linalg.norm(p - P) > 1e-9:
            raise ModelError("leg does not close at the tool point")
    return Assembly(legs, name=spec.name)


BISECTING_RAY = -np.concatenate([np.ones(3) / np.sqrt(3.0), np.zeros(3)])


# ---------------------------------------------------------------------------
# registry used by the CLI


@dataclass(frozen=True)
class Scenario:
    spec: ScenarioSpec
    ray: np.ndarray
    delta_max: float
    steps: int

    @property
    def name(self) -> str:
        return self.spec.name

    def build(self):
        if self.spec.model is Model.ORTHOGLIDE:
            return build_orthoglide_like(self.spec)
        return build_chain(self.spec)


AXIAL_RAY = np.array([-1.0, 0.0, 0.0, 0.0, 0.0, 0.0])

# sweep lengths chosen to cover each model's buckling event with margin
_DELTA = {
    (Model.A, Posture.S): 1.0, (Model.A, Posture.Pi): 0.5, (Model.A, Posture.Z): 0.5,
    (Model.B, Posture.S): 0.002, (Model.B, Posture.Pi): 0.3, (Model.B, Posture.Z): 0.3,
    (Model.C, Posture.S): 0.0003, (Model.C, Posture.Pi): 0.3, (Model.C, Posture.Z): 0.02,
}
ORTHO_DELTA = 4e-4


def scenario(name: str) -> Scenario:
    try:
        kind, rest = name.split("-", 1)
    except ValueError:
        raise ModelError(f"unknown scenario {name!r}") from None
    if kind == "orthoglide":
        spec = ScenarioSpec(Model.ORTHOGLIDE, workspace_point=rest)
        return Scenario(spec, BISECTING_RAY.copy(), ORTHO_DELTA, 50)
    models = {"modelA": Model.A, "modelB": Model.B, "modelC": Model.C}
    if kind not in models or rest not in ("S", "Pi", "Z"):
        raise ModelError(f"unknown scenario {name!r}")
    spec = ScenarioSpec(models[kind], Posture(rest))
    return Scenario(spec, AXIAL_RAY.copy(), _DELTA[(spec.model, spec.configuration)], 50)


def scenario_names():
    out = [f"model{m}-{p}" for m in "ABC" for p in ("S", "Pi", "Z")]
    return out + [f"orthoglide-Q{i}" for i in range(5)]
