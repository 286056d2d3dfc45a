"""Loaded-mode stiffness, stability and buckling of serial and parallel chains built from virtual joints and springs."""

from .chain import (
    ActuatedLocked,
    Assembly,
    ChainModel,
    Configuration,
    FixedTransform,
    PassiveCoupled,
    PassivePerfect,
    PassivePreloaded,
    Pose,
    VirtualSpringBlock,
    Wrench,
)
from .equilibrium import SolverSettings, solve, solve_for_pose, solve_for_wrench, state_at, tool_pose
from .errors import (
    ConfigError,
    DomainError,
    ModelError,
    NotConvergedError,
    ParameterError,
    SingularStiffnessError,
    StiffbuckError,
)
from .pathtrace import BucklingReport, PathPoint, detect_buckling, trace, work_energy_audit
from .scenarios import Scenario, ScenarioSpec, scenario, scenario_names
from .stability import Classification, StabilityVerdict, classify, classify_system, energy_probe
from .stiffness import StiffnessResult, aggregate_parallel, fd_stiffness_probe, kc_full, kc_reduced, system_stiffness

__version__ = "0.1.0"
