"""Structured-text chain and assembly descriptions (YAML or JSON).

Tree::

    chain:
      name: optional
      task_axes: [0, 1, 5]            # optional, default all six
      elements:
        - transform: [r11, r12, r13, r21, r22, r23, r31, r32, r33, x, y, z]
        - joint: {kind: actuated | passive | coupled | preloaded, axis: rz, value: 0.0,
                  k: 1.0, theta0: 0.0, source: 0, ratio: -1.0}
        - spring: {dof: [tx, ty, rz] | 6, K: [...] | C: [...] | beam: {L, a, b, E, G}, theta0: [...]}
    assembly:
      chains: [{name, task_axes, elements}, ...]
      tool_frames: [[12 numbers], ...]  # optional
    reference: {L: 1.0, K_theta: 1.0}  # optional, forces reported in K_theta / L

Matrices are row-major, flat or nested. An explicit K or C wins over ``beam``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import yaml

from .chain import (
    AXES,
    ActuatedLocked,
    Assembly,
    ChainModel,
    FixedTransform,
    PassiveCoupled,
    PassivePerfect,
    PassivePreloaded,
    VirtualSpringBlock,
)
from .elasticity import BeamSection, beam_spring_planar, beam_spring_spatial
from .errors import ConfigError, StiffbuckError

PLANAR_DOF = ("tx", "ty", "rz")
JOINT_KINDS = ("actuated", "passive", "coupled", "preloaded")


@dataclass(frozen=True)
class ConfigDocument:
    system: object  # ChainModel or Assembly
    reference: dict = None


# ---------------------------------------------------------------------------
# line anchoring


def _lines(text: str) -> dict:
    """Map element paths like ('chains', 0, 'elements', 3) to 1-based source lines."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return {}
    out = {}

    def walk(node, path):
        out[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                walk(v, path + (k.value,))
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, path + (i,))

    if root is not None:
        walk(root, ())
    return out


class _Ctx:
    def __init__(self, lines):
        self.lines = lines or {}

    def fail(self, path, msg):
        label = "".join(f"[{p}]" if isinstance(p, int) else (f".{p}" if i else p) for i, p in enumerate(path))
        line = None
        for cut in range(len(path), -1, -1):
            line = self.lines.get(tuple(path[:cut]))
            if line is not None:
                break
        where = f"line {line}: " if line is not None else ""
        raise ConfigError(f"{where}{label}: {msg}")


# ---------------------------------------------------------------------------
# parsing


def _numbers(ctx, path, value, count=None):
    try:
        a = np.asarray(value, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        ctx.fail(path, "expected numbers")
    if count is not None and a.size != count:
        ctx.fail(path, f"expected {count} numbers, got {a.size}")
    if not np.all(np.isfinite(a)):
        ctx.fail(path, "numbers must be finite")
    return a


def _transform(ctx, path, value):
    a = _numbers(ctx, path, value, 12)
    T = np.eye(4)
    T[:3, :3] = a[:9].reshape(3, 3)
    T[:3, 3] = a[9:]
    return T


def _axis(ctx, path, value):
    if value not in AXES:
        ctx.fail(path, f"unknown axis {value!r}; expected one of {', '.join(AXES)}")
    return value


def _joint(ctx, path, spec):
    if not isinstance(spec, dict):
        ctx.fail(path, "joint must be a mapping")
    kind = spec.get("kind")
    if kind not in JOINT_KINDS:
        ctx.fail(path + ("kind",), f"joint kind must be one of {', '.join(JOINT_KINDS)}")
    axis = _axis(ctx, path + ("axis",), spec.get("axis"))
    value = float(spec.get("value", 0.0))
    if kind == "actuated":
        return ActuatedLocked(axis, value)
    if kind == "passive":
        return PassivePerfect(axis, value)
    if kind == "coupled":
        if "source" not in spec:
            ctx.fail(path, "coupled joint needs a source passive coordinate")
        return PassiveCoupled(axis, int(spec["source"]), float(spec.get("ratio", -1.0)))
    if "k" not in spec:
        ctx.fail(path, "preloaded joint needs a stiffness k")
    return PassivePreloaded(axis, float(spec["k"]), float(spec.get("theta0", 0.0)))


def _dof(ctx, path, value):
    if value == 6:
        return AXES
    if value == 3:
        return PLANAR_DOF
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, (list, tuple)) or not value:
        ctx.fail(path, "dof must be a list of axes, 3 (planar) or 6")
    return tuple(_axis(ctx, path + (i,), a) for i, a in enumerate(value))


def _square(ctx, path, value, d):
    return _numbers(ctx, path, value, d * d).reshape(d, d)


def _spring(ctx, path, spec):
    if not isinstance(spec, dict):
        ctx.fail(path, "spring must be a mapping")
    axes = _dof(ctx, path + ("dof",), spec.get("dof"))
    d = len(axes)
    if "K" in spec and "C" in spec:
        ctx.fail(path, "give either K or C, not both")
    if "K" in spec:
        K = _square(ctx, path + ("K",), spec["K"], d)
    elif "C" in spec:
        C = _square(ctx, path + ("C",), spec["C"], d)
        if np.max(np.abs(C - C.T)) > 1e-12 * max(np.max(np.abs(C)), 1e-300):
            ctx.fail(path + ("C",), "spring block not symmetric")
        try:
            K = np.linalg.inv(C)
        except np.linalg.LinAlgError:
            ctx.fail(path + ("C",), "compliance matrix is singular")
        K = (K + K.T) / 2.0
    elif "beam" in spec:
        b = spec["beam"]
        if not isinstance(b, dict):
            ctx.fail(path + ("beam",), "beam must be a mapping with L, a, b, E (G optional)")
        try:
            sec = BeamSection(**{k: float(v) for k, v in b.items()})
        except TypeError as e:
            ctx.fail(path + ("beam",), f"bad beam parameters ({e})")
        except StiffbuckError as e:
            ctx.fail(path + ("beam",), str(e))
        if axes == AXES:
            K = beam_spring_spatial(sec).K
        elif axes == PLANAR_DOF:
            K = beam_spring_planar(sec).K
        else:
            ctx.fail(path + ("dof",), "beam springs need dof 6 or the planar set (tx, ty, rz)")
    else:
        ctx.fail(path, "spring needs K, C or beam")
    t0 = spec.get("theta0")
    t0 = None if t0 is None else _numbers(ctx, path + ("theta0",), t0, d)
    return VirtualSpringBlock(axes, K, t0)


def _element(ctx, path, el):
    if not isinstance(el, dict) or len(el) != 1:
        ctx.fail(path, "element must be a mapping with exactly one of transform, joint, spring")
    (kind, spec), = el.items()
    try:
        if kind == "transform":
            return FixedTransform(_transform(ctx, path + (kind,), spec))
        if kind == "joint":
            return _joint(ctx, path + (kind,), spec)
        if kind == "spring":
            return _spring(ctx, path + (kind,), spec)
    except ConfigError:
        raise
    except StiffbuckError as e:
        ctx.fail(path + (kind,), str(e))
    ctx.fail(path, f"unknown element kind {kind!r}")


def _task_axes(ctx, path, value):
    if value is None:
        return tuple(range(6))
    if not isinstance(value, (list, tuple)):
        ctx.fail(path, "task_axes must be a list")
    out = []
    for i, a in enumerate(value):
        if isinstance(a, str):
            out.append(AXES.index(_axis(ctx, path + (i,), a)))
        elif isinstance(a, int) and 0 <= a < 6:
            out.append(a)
        else:
            ctx.fail(path + (i,), "task axis must be 0..5 or an axis name")
    return tuple(out)


def _chain(ctx, path, spec):
    if not isinstance(spec, dict):
        ctx.fail(path, "chain must be a mapping")
    elements = spec.get("elements")
    if not isinstance(elements, list) or not elements:
        ctx.fail(path + ("elements",), "chain needs a non-empty element list")
    els = [_element(ctx, path + ("elements", i), el) for i, el in enumerate(elements)]
    try:
        return ChainModel(els, _task_axes(ctx, path + ("task_axes",), spec.get("task_axes")), str(spec.get("name", "")))
    except ConfigError:
        raise
    except StiffbuckError as e:
        ctx.fail(path, str(e))


def _reference(ctx, spec):
    if spec is None:
        return None
    if not isinstance(spec, dict) or set(spec) - {"L", "K_theta"}:
        ctx.fail(("reference",), "reference takes L and K_theta")
    out = {k: float(v) for k, v in spec.items()}
    if any(not v > 0 for v in out.values()):
        ctx.fail(("reference",), "reference values must be positive")
    return out


def load_document(document) -> ConfigDocument:
    """Parse text (YAML or JSON) or an already-loaded mapping."""
    lines = {}
    if isinstance(document, (str, bytes)):
        text = document.decode() if isinstance(document, bytes) else document
        try:
            tree = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse configuration: {e}") from None
        lines = _lines(text)
    else:
        tree = document
    ctx = _Ctx(lines)
    if not isinstance(tree, dict):
        ctx.fail(("document",), "top level must be a mapping")
    unknown = set(tree) - {"chain", "assembly", "reference", "name"}
    if unknown:
        ctx.fail((sorted(unknown)[0],), "unknown top-level key")
    if ("chain" in tree) == ("assembly" in tree):
        ctx.fail(("document",), "exactly one of chain or assembly is required")
    ref = _reference(ctx, tree.get("reference"))
    if "chain" in tree:
        return ConfigDocument(_chain(ctx, ("chain",), tree["chain"]), ref)
    spec = tree["assembly"]
    if not isinstance(spec, dict) or not isinstance(spec.get("chains"), list) or not spec["chains"]:
        ctx.fail(("assembly",), "assembly needs a non-empty chains list")
    chains = [_chain(ctx, ("assembly", "chains", i), c) for i, c in enumerate(spec["chains"])]
    frames = spec.get("tool_frames")
    if frames is not None:
        if not isinstance(frames, list) or len(frames) != len(chains):
            ctx.fail(("assembly", "tool_frames"), "one tool frame per chain is required")
        frames = [_transform(ctx, ("assembly", "tool_frames", i), f) for i, f in enumerate(frames)]
    try:
        asm = Assembly(chains, frames, str(spec.get("name", tree.get("name", ""))))
    except StiffbuckError as e:
        ctx.fail(("assembly",), str(e))
    return ConfigDocument(asm, ref)


def parse_config(document):
    """ChainModel or Assembly described by ``document``."""
    return load_document(document).system


def read_config(path) -> ConfigDocument:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from None
    return load_document(text)


# ---------------------------------------------------------------------------
# export


def _flat(a):
    return [float(v) for v in np.asarray(a, dtype=float).reshape(-1)]


def _export_element(el):
    if isinstance(el, FixedTransform):
        M = el.matrix
        return {"transform": _flat(M[:3, :3]) + _flat(M[:3, 3])}
    if isinstance(el, ActuatedLocked):
        return {"joint": {"kind": "actuated", "axis": el.axis, "value": float(el.value)}}
    if isinstance(el, PassivePerfect):
        return {"joint": {"kind": "passive", "axis": el.axis, "value": float(el.home)}}
    if isinstance(el, PassiveCoupled):
        return {"joint": {"kind": "coupled", "axis": el.axis, "source": int(el.source), "ratio": float(el.ratio)}}
    if isinstance(el, PassivePreloaded):
        return {"joint": {"kind": "preloaded", "axis": el.axis, "k": float(el.stiffness), "theta0": float(el.preload)}}
    if isinstance(el, VirtualSpringBlock):
        out = {"dof": list(el.axes), "K": _flat(el.K)}
        if np.any(el.theta0):
            out["theta0"] = _flat(el.theta0)
        return {"spring": out}
    raise ConfigError(f"cannot export element {el!r}")


def _export_chain(chain: ChainModel):
    return {
        "name": chain.name,
        "task_axes": list(chain.task_axes),
        "elements": [_export_element(el) for el in chain.elements],
    }


def export_config(system, reference: dict = None) -> dict:
    if isinstance(system, Assembly):
        tree = {"assembly": {"name": system.name, "chains": [_export_chain(c) for c in system.chains]}}
    else:
        tree = {"chain": _export_chain(system)}
    if reference:
        tree["reference"] = {k: float(v) for k, v in reference.items()}
    return tree


def dump_config(system, fmt: str = "yaml", reference: dict = None) -> str:
    tree = export_config(system, reference)
    if fmt == "json":
        return json.dumps(tree, indent=1) + "\n"
    if fmt == "yaml":
        return yaml.safe_dump(tree, sort_keys=False, default_flow_style=None)
    raise ConfigError(f"unknown format {fmt!r}")
