"""stiffbuck command line: analyze, trace, buckle, stability, export.

Exit status: 0 when every requested solve converged, 2 when some did not
(gaps), 1 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .chain import Assembly, Wrench
from .config import dump_config, read_config
from .equilibrium import IllConditionedWarning, SolverSettings, solve, solve_for_wrench, tool_pose
from .errors import StiffbuckError
from .pathtrace import detect_buckling, trace
from .scenarios import BISECTING_RAY, Model, scenario, scenario_names
from .stability import classify_system, energy_probe
from .stiffness import system_stiffness

EXIT_OK, EXIT_USAGE, EXIT_GAPS = 0, 1, 2
TRACE_COLUMNS = ("delta", "F_along", "Fx", "Fy", "Fz", "Mx", "My", "Mz",
                 "energy", "stable", "min_eig", "tangent_stiffness")
BUCKLE_COLUMNS = ("configuration", "unloaded_stiffness", "critical_force", "critical_deflection",
                  "stiffness_below_critical", "stiffness_above_critical", "stiffness_large_deformation")
NAMED_RAYS = {
    "x": np.array([1.0, 0, 0, 0, 0, 0]),
    "y": np.array([0, 1.0, 0, 0, 0, 0]),
    "z": np.array([0, 0, 1.0, 0, 0, 0]),
    "bisect": BISECTING_RAY,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass(frozen=True)
class RunConfig:
    command: str
    scenarios: tuple = ()
    config: str = None
    ray: object = None
    delta_max: float = None
    steps: int = None
    seed: int = 0
    out: str = None
    pose: tuple = None
    wrench: tuple = None
    probe: int = 0
    fmt: str = "yaml"
    jobs: int = 1

    def __post_init__(self):
        if bool(self.scenarios) == bool(self.config):
            raise UsageError("give exactly one of --scenario or --config")


@dataclass
class _Target:
    label: str
    system: object
    ray: np.ndarray
    delta_max: float
    steps: int
    reference: dict = None


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def _vector(text: str, name: str, size: int = 6) -> np.ndarray:
    parts = text.replace(",", " ").split()
    try:
        v = np.array([float(p) for p in parts])
    except ValueError:
        raise UsageError(f"{name} must be {size} numbers") from None
    if v.size != size or not np.all(np.isfinite(v)):
        raise UsageError(f"{name} must be {size} finite numbers")
    return v


def _ray(text):
    if text is None:
        return None
    if text in NAMED_RAYS:
        return NAMED_RAYS[text].copy()
    v = _vector(text, "--ray")
    if not np.any(v):
        raise UsageError("--ray must be non-zero")
    return v


def _targets(run: RunConfig):
    out = []
    if run.config:
        doc = read_config(run.config)
        if run.command in ("trace", "buckle") and (run.ray is None or run.delta_max is None):
            raise UsageError("--ray and --delta-max are required with --config")
        out.append(_Target(run.config, doc.system, run.ray, run.delta_max, run.steps or 50, doc.reference))
        return out
    for name in run.scenarios:
        try:
            sc = scenario(name)
        except StiffbuckError:
            raise UsageError(f"unknown scenario {name!r}; known: {', '.join(scenario_names())}") from None
        ref = None if sc.spec.model is Model.ORTHOGLIDE else {"L": sc.spec.L, "K_theta": sc.spec.K_theta_ref}
        out.append(_Target(name, sc.build(),
                           run.ray if run.ray is not None else sc.ray,
                           run.delta_max if run.delta_max is not None else sc.delta_max,
                           run.steps or sc.steps, ref))
    return out


def _settings(run: RunConfig) -> SolverSettings:
    return SolverSettings(rng_seed=run.seed)


def _unit_note(ref):
    if not ref:
        return ""
    return f"forces in units of K_theta/L (K_theta = {_fmt(ref['K_theta'])}, L = {_fmt(ref['L'])})"


# ---------------------------------------------------------------------------
# state at the requested pose or wrench


def _state(run, tgt, settings):
    sys_ = tgt.system
    home = sys_.home()
    if run.wrench is not None:
        return solve_for_wrench(sys_, Wrench.from_vector(run.wrench), home, settings)
    t = tool_pose(sys_, home)
    if run.pose is not None:
        t = t.displaced(run.pose)
    return solve(sys_, t, home, settings)


def _verdict_lines(sys_, st):
    v = classify_system(sys_, st)
    return v, [f"stability: {v.classification} (min eigenvalue {_fmt(v.min_eigenvalue)}, kernel rank {v.basis_rank})"]


def _analyze_one(run, tgt):
    settings = _settings(run)
    st = _state(run, tgt, settings)
    lines = [f"# {tgt.label}"]
    note = _unit_note(tgt.reference)
    if note:
        lines.append(note)
    if not st.converged:
        lines.append(f"equilibrium not converged (residual {_fmt(st.residual_norm)})")
        return "\n".join(lines) + "\n", False
    res = system_stiffness(tgt.system, st)
    lines.append("wrench: " + " ".join(_fmt(v) for v in st.F.as_vector()))
    lines.append("K_c:")
    K = res.K_c
    for row in K:
        lines.append("  " + " ".join(f"{v: .10e}" for v in row))
    lines.append(f"rank: {res.rank}")
    lines.append(f"condition: {_fmt(res.condition)}")
    lines.append(f"method: {res.method}")
    for kind, d in res.singular_directions:
        lines.append(f"singular direction ({kind}): " + " ".join(_fmt(v) for v in d))
    Sq = res.S_q if isinstance(res.S_q, tuple) else (res.S_q,)
    St = res.S_theta if isinstance(res.S_theta, tuple) else (res.S_theta,)
    lines.append("|S_q|: " + " ".join(_fmt(np.linalg.norm(np.nan_to_num(s))) for s in Sq))
    lines.append("|S_theta|: " + " ".join(_fmt(np.linalg.norm(np.nan_to_num(s))) for s in St))
    _, vl = _verdict_lines(tgt.system, st)
    lines.extend(vl)
    return "\n".join(lines) + "\n", True


def _stability_one(run, tgt):
    settings = _settings(run)
    st = _state(run, tgt, settings)
    lines = [f"# {tgt.label}"]
    if not st.converged:
        lines.append(f"equilibrium not converged (residual {_fmt(st.residual_norm)})")
        return "\n".join(lines) + "\n", False
    _, vl = _verdict_lines(tgt.system, st)
    lines.extend(vl)
    if run.probe:
        chains = tgt.system.chains if isinstance(tgt.system, Assembly) else (tgt.system,)
        states = st.states if isinstance(tgt.system, Assembly) else (st,)
        for i, (c, s) in enumerate(zip(chains, states)):
            rep = energy_probe(c, s, samples=run.probe, seed=run.seed)
            lines.append(f"probe chain {i}: agreement {_fmt(rep.agreement)}, used {rep.used}/{rep.samples}, "
                         f"descending found {rep.descending_found}")
    return "\n".join(lines) + "\n", True


# ---------------------------------------------------------------------------
# trace and buckle


def trace_rows(path):
    rows = []
    for p in path:
        if p.converged:
            F = p.F_full.as_vector()
            v = p.verdict
            rows.append([p.delta, p.F_along, *F, p.energy, str(v.classification), v.min_eigenvalue,
                         p.tangent_stiffness])
        else:
            rows.append([p.delta] + [float("nan")] * 8 + ["gap", float("nan"), float("nan")])
    return rows


def write_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _trace_one(run, tgt):
    path = trace(tgt.system, tgt.ray, tgt.delta_max, tgt.steps, _settings(run))
    return write_csv(trace_rows(path), TRACE_COLUMNS), all(p.converged for p in path)


def _unit(ray):
    ray = np.asarray(ray, dtype=float)
    return ray / np.linalg.norm(ray)


def buckle_row(label, system, path, report, ray):
    u = _unit(ray)
    origin = path[0].state
    unloaded = float("nan")
    if origin.converged:
        res = system_stiffness(system, origin)
        if any(k == "infinite" and abs(d @ u) > 1 - 1e-9 for k, d in res.singular_directions):
            unloaded = float("inf")
        else:
            unloaded = float(u @ res.K_c @ u)
    conv = [p for p in path if p.converged and np.isfinite(p.tangent_stiffness)]
    large = conv[-1].tangent_stiffness if conv else float("nan")
    if report is None:
        return [label, unloaded, "none detected", "none detected", "", "", large]
    return [label, unloaded, report.critical_force, report.critical_deflection,
            report.pre_stiffness, report.post_stiffness, large]


def _buckle_one(run, tgt):
    settings = _settings(run)
    path = trace(tgt.system, tgt.ray, tgt.delta_max, tgt.steps, settings)
    rep = detect_buckling(path, tgt.system, settings, tgt.ray)
    return buckle_row(tgt.label, tgt.system, path, rep, tgt.ray), all(p.converged for p in path)


def _run_one(args):
    run, tgt = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IllConditionedWarning)
        return {
            "analyze": _analyze_one,
            "stability": _stability_one,
            "trace": _trace_one,
            "buckle": _buckle_one,
        }[run.command](run, tgt)


def _map(run, targets):
    jobs = [(run, t) for t in targets]
    if run.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=run.jobs) as ex:
            return list(ex.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def _emit(text: str, out):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def execute(run: RunConfig) -> int:
    if run.command == "export":
        if not run.scenarios or len(run.scenarios) != 1:
            raise UsageError("export takes exactly one --scenario")
        tgt = _targets(run)[0]
        _emit(dump_config(tgt.system, run.fmt, tgt.reference), run.out)
        return EXIT_OK
    targets = _targets(run)
    if run.command == "trace" and len(targets) != 1:
        raise UsageError("trace takes one scenario or config")
    results = _map(run, targets)
    ok = all(r[1] for r in results)
    if run.command == "buckle":
        notes = sorted({_unit_note(t.reference) for t in targets} - {""})
        text = write_csv([r[0] for r in results], BUCKLE_COLUMNS)
        for n in notes:
            print(n, file=sys.stderr)
        _emit(text, run.out)
    else:
        _emit("".join(r[0] for r in results), run.out)
    return EXIT_OK if ok else EXIT_GAPS


# ---------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stiffbuck", description="Loaded-mode stiffness and buckling analysis of serial and parallel chains.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, hlp in (("analyze", "Cartesian stiffness and stability at a pose or wrench"),
                      ("trace", "force-deflection path along a ray (CSV)"),
                      ("buckle", "critical force and stiffness around buckling (CSV)"),
                      ("stability", "stability verdict at a pose or wrench"),
                      ("export", "write a built-in scenario as a configuration file")):
        s = sub.add_parser(name, help=hlp)
        src = s.add_mutually_exclusive_group(required=True)
        src.add_argument("--scenario", nargs="+", metavar="NAME")
        src.add_argument("--config", metavar="PATH")
        s.add_argument("--out", metavar="PATH")
        s.add_argument("--seed", type=int, default=0)
        if name in ("trace", "buckle"):
            s.add_argument("--ray", help="x, y, z, bisect or six numbers")
            s.add_argument("--delta-max", type=float)
            s.add_argument("--steps", type=int)
            s.add_argument("--jobs", type=int, default=1)
        if name in ("analyze", "stability"):
            g = s.add_mutually_exclusive_group()
            g.add_argument("--pose", help="tool displacement twist from home: dx dy dz rx ry rz")
            g.add_argument("--wrench", help="applied wrench: Fx Fy Fz Mx My Mz")
        if name == "stability":
            s.add_argument("--probe", type=int, default=0, metavar="N", help="also sample the energy N times")
        if name == "export":
            s.add_argument("--format", choices=("yaml", "json"), default="yaml")
    return p


def parse_args(argv) -> RunConfig:
    ns = build_parser().parse_args(argv)
    steps = getattr(ns, "steps", None)
    if steps is not None and steps < 2:
        raise UsageError("--steps must be at least 2")
    dmax = getattr(ns, "delta_max", None)
    if dmax is not None and not dmax > 0:
        raise UsageError("--delta-max must be positive")
    jobs = getattr(ns, "jobs", 1)
    if jobs < 1:
        raise UsageError("--jobs must be at least 1")
    pose = getattr(ns, "pose", None)
    wrench = getattr(ns, "wrench", None)
    return RunConfig(
        command=ns.command,
        scenarios=tuple(ns.scenario or ()),
        config=ns.config,
        ray=_ray(getattr(ns, "ray", None)),
        delta_max=dmax,
        steps=steps,
        seed=ns.seed,
        out=ns.out,
        pose=None if pose is None else tuple(_vector(pose, "--pose")),
        wrench=None if wrench is None else tuple(_vector(wrench, "--wrench")),
        probe=getattr(ns, "probe", 0),
        fmt=getattr(ns, "format", "yaml"),
        jobs=jobs,
    )


def main(argv=None) -> int:
    try:
        run = parse_args(sys.argv[1:] if argv is None else argv)
        return execute(run)
    except UsageError as e:
        print(f"stiffbuck: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except StiffbuckError as e:
        print(f"stiffbuck: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
