"""Spring stiffness blocks: actuator springs and Euler-Bernoulli cantilever links."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .errors import ParameterError

POISSON_SHEAR_RATIO = 0.385  # G/E for nu = 0.3

# Saint-Venant torsion coefficient beta(b/a) for a rectangle, J = beta * a^3 * b
_TORSION_RATIO = np.array([1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 10.0])
_TORSION_BETA = np.array([0.141, 0.196, 0.229, 0.249, 0.263, 0.281, 0.291, 0.299, 0.312])


@dataclass(frozen=True)
class BeamSection:
    """Rectangular link. ``a`` is the thickness along local z, ``b`` along local y."""

    L: float
    a: float
    b: float
    E: float
    G: float = None

    def __post_init__(self):
        if self.G is None:
            object.__setattr__(self, "G", POISSON_SHEAR_RATIO * self.E)
        for name in ("L", "a", "b", "E", "G"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0.0):
                raise ParameterError(f"beam section {name} must be positive, got {v}")

    @property
    def area(self) -> float:
        return self.a * self.b

    @property
    def I_y(self) -> float:
        return self.b * self.a**3 / 12.0

    @property
    def I_z(self) -> float:
        return self.a * self.b**3 / 12.0

    @property
    def J(self) -> float:
        return torsion_constant(self.a, self.b)


def torsion_beta(ratio: float) -> float:
    """Saint-Venant coefficient for long side / short side = ratio (>= 1)."""
    if ratio <= _TORSION_RATIO[-1]:
        return float(np.interp(ratio, _TORSION_RATIO, _TORSION_BETA))
    # thin-strip asymptote; meets the table end (0.3123 vs 0.312)
    return (1.0 - 0.63 / ratio) / 3.0


def torsion_constant(a: float, b: float) -> float:
    short, long_ = min(a, b), max(a, b)
    return torsion_beta(long_ / short) * short**3 * long_


@dataclass(frozen=True, eq=False)
class SpringBlock:
    K: np.ndarray
    theta0: np.ndarray = None

    def __post_init__(self):
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        d = K.shape[0]
        if K.shape != (d, d):
            raise ParameterError("spring block must be square")
        scale = max(np.max(np.abs(K)), 1e-300)
        if np.max(np.abs(K - K.T)) > 1e-12 * scale:
            raise ParameterError("spring block not symmetric")
        try:
            np.linalg.cholesky(K)
        except np.linalg.LinAlgError:
            raise ParameterError("spring block not positive definite") from None
        t0 = np.zeros(d) if self.theta0 is None else np.asarray(self.theta0, dtype=float).reshape(d)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "theta0", t0)

    @property
    def dof(self) -> int:
        return self.K.shape[0]


def spring_1d(k: float) -> SpringBlock:
    if not k > 0.0:
        raise ParameterError(f"spring stiffness must be positive, got {k}")
    return SpringBlock(np.array([[float(k)]]))


def beam_spring_planar(sec: BeamSection) -> SpringBlock:
    """3x3 cantilever tip stiffness over (dx, dy, dphi_z)."""
    L, E = sec.L, sec.E
    EI = E * sec.I_z
    K = np.array([
        [E * sec.area / L, 0.0, 0.0],
        [0.0, 12.0 * EI / L**3, -6.0 * EI / L**2],
        [0.0, -6.0 * EI / L**2, 4.0 * EI / L],
    ])
    return SpringBlock(K)


def beam_spring_spatial(sec: BeamSection) -> SpringBlock:
    """6x6 cantilever tip stiffness over (dx, dy, dz, dphi_x, dphi_y, dphi_z)."""
    L, E = sec.L, sec.E
    EIz = E * sec.I_z
    EIy = E * sec.I_y
    K = np.zeros((6, 6))
    K[0, 0] = E * sec.area / L
    K[1, 1] = 12.0 * EIz / L**3
    K[2, 2] = 12.0 * EIy / L**3
    K[3, 3] = sec.G * sec.J / L
    K[4, 4] = 4.0 * EIy / L
    K[5, 5] = 4.0 * EIz / L
    K[1, 5] = K[5, 1] = -6.0 * EIz / L**2
    K[2, 4] = K[4, 2] = 6.0 * EIy / L**2
    return SpringBlock(K)


def assemble_chain_springs(blocks):
    """Block-diagonal K_theta and concatenated preload over an ordered block list."""
    blocks = list(blocks)
    if not blocks:
        raise ParameterError("at least one spring block is required")
    K = block_diag(*[b.K for b in blocks])
    theta0 = np.concatenate([b.theta0 for b in blocks])
    return K, theta0
