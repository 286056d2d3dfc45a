import numpy as np

from stiffbuck.chain import (
    ActuatedLocked,
    ChainModel,
    FixedTransform,
    PassivePerfect,
    PassivePreloaded,
    VirtualSpringBlock,
)


def two_link(preloaded=False):
    """Planar 2R arm with unit links along x at home."""
    J = (lambda: PassivePreloaded("rz", 1.0)) if preloaded else (lambda: PassivePerfect("rz"))
    return ChainModel([J(), FixedTransform.translation(1.0), J(), FixedTransform.translation(1.0)],
                      task_axes=(0, 1, 5))


def spring_arm(seed=0, links=3):
    """Spatial arm made only of 6-dof springs and rigid offsets (no passive joints)."""
    rng = np.random.default_rng(seed)
    els = []
    for i in range(links):
        A = rng.normal(size=(6, 6))
        K = A @ A.T + 6.0 * np.eye(6)
        els.append(ActuatedLocked("rz", float(rng.uniform(-1, 1))))
        els.append(VirtualSpringBlock(("tx", "ty", "tz", "rx", "ry", "rz"), K))
        els.append(FixedTransform.translation(*rng.uniform(0.2, 1.0, 3)))
    return ChainModel(els)


# acceptance results, one line per criterion, echoed in the terminal summary
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
