"""``formulac`` command line: compile, run, bench and the two demos."""
from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .codegen import dump_tape, emit_source
from .demos import (DEFAULT_SEED, OdeSystem, bench_compare, bench_threads,
                    build_kalman_step, integrate_rk4, random_kalman_model)
from .errors import FormulaError
from .interp import coerce_bindings, format_value, parse_binding, random_bindings
from .pipeline import compile_project
from .parser import parse_project


class UsageError(Exception):
    pass


def shipped_project_dir() -> Path:
    return Path(str(resources.files("formulac") / "projects"))


def resolve_project(spec: str) -> Path:
    """A readable path, else a shipped project by (base)name, e.g. ``matmul4``."""
    path = Path(spec)
    if path.is_file():
        return path
    name = path.name if path.suffix else path.name + ".flc"
    shipped = shipped_project_dir() / name
    if shipped.is_file():
        return shipped
    raise UsageError(f"cannot read project {spec!r}")


def _load(spec):
    path = resolve_project(spec)
    return path, path.read_text()


def _render(err: FormulaError, path, text) -> str:
    """``file:line:col: error: msg`` followed by the offending line and a caret."""
    if err.span is None or text is None:
        return f"{path}: error: {err.message}"
    line, col = err.span
    lines = text.splitlines()
    out = f"{path}:{line}:{col}: error: {err.message}"
    if 1 <= line <= len(lines):
        out += f"\n    {lines[line - 1]}\n    {' ' * (col - 1)}^"
    return out


def _bindings(specs, project_path: Path):
    """CSV paths resolve against the working directory, then the project's."""
    raw = {}
    for spec in specs:
        _, _, text = spec.partition("=")
        text = text.strip()
        base = "."
        if text.startswith("@") and not Path(text[1:]).exists():
            base = project_path.parent
        name, value = parse_binding(spec, base)
        raw[name] = value
    return raw


def _write(text: str, dest):
    if dest:
        Path(dest).write_text(text)
    else:
        sys.stdout.write(text)


# ------------------------------------------------------------------- commands
def cmd_compile(args, ctx):
    path, text = _load(args.project)
    ctx["path"], ctx["text"] = path, text
    c = compile_project(text, derive=args.derive)
    artifact = emit_source(c.tape) if args.emit == "source" else dump_tape(c.tape)
    _write(artifact, args.output)
    print(f"# {len(c.tape.instrs)} instructions, {c.tape.n_slots} slots")
    return 0


def cmd_run(args, ctx):
    path, text = _load(args.project)
    ctx["path"], ctx["text"] = path, text
    c = compile_project(text, derive=args.derive)
    if args.random:
        raw = random_bindings(c.project.inputs, np.random.default_rng(args.seed))
        raw.update(_bindings(args.bind, path))
    else:
        raw = _bindings(args.bind, path)
    values = c.run(coerce_bindings(raw, c.input_types), check_finite=args.check_finite)
    lines = [f"{name} = {format_value(v)}" for name, v in values.items()]
    _write("\n".join(lines) + "\n", args.output)
    return 0


def cmd_bench(args, ctx):
    if args.n < 10_000:
        raise UsageError("bench needs -n >= 10000")
    path, text = _load(args.project)
    ctx["path"], ctx["text"] = path, text
    c = compile_project(text, derive=args.derive)
    name = path.stem
    if args.threads > 1:
        reports, identical = bench_threads(c, args.n, args.threads, seed=args.seed, name=name)
        body = "\n".join(r.to_json() for r in reports) + "\n"
        _write(body, args.output)
        print(f"# outputs identical across threads: {'yes' if identical else 'no'}")
        return 0 if identical else 1
    report = bench_compare(c, args.n, seed=args.seed, name=name)
    _write(report.to_json() + "\n", args.output)
    return 0


def cmd_demo_kalman(args, ctx):
    rng = np.random.default_rng(args.seed)
    model = random_kalman_model(args.n, args.m, rng)
    step = build_kalman_step(model)
    x, P = np.zeros(model.n), np.eye(model.n)
    truth = rng.normal(size=model.n)
    for _ in range(args.steps):
        truth = model.F @ truth + rng.multivariate_normal(np.zeros(model.n), model.Q)
        z = model.H @ truth + rng.multivariate_normal(np.zeros(model.m), model.R)
        x, P, _ = step.step(x, P, z)
    print(f"steps = {args.steps}")
    print(f"x = {format_value(x)}")
    print(f"P = {format_value(P)}")
    print(f"asymmetry = {format_value(float(np.max(np.abs(P - P.T))))}")
    print(f"instructions = {len(step.predict.tape.instrs)} + {len(step.update.tape.instrs)}")
    return 0


def cmd_demo_ode(args, ctx):
    path, text = _load(args.project)
    ctx["path"], ctx["text"] = path, text
    project = parse_project(text)
    params = coerce_bindings(_bindings(args.bind, path), dict(project.inputs))
    x0 = params.pop(args.state, args.x0)
    traj = integrate_rk4(OdeSystem(project, args.h, args.steps, params, state=args.state), x0)
    lines = [f"t = {format_value(args.h * args.steps)}",
             f"{args.state} = {format_value(traj[-1])}"]
    _write("\n".join(lines) + "\n", args.output)
    return 0


# ---------------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="formulac", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, bindings=True):
        p.add_argument("project", help="project file or shipped project name")
        p.add_argument("--derive", metavar="VAR", help="differentiate every output w.r.t. VAR")
        p.add_argument("-o", "--output", metavar="PATH", help="write the result here")
        if bindings:
            p.add_argument("--bind", action="append", default=[], metavar="NAME=VAL|@FILE")

    p = sub.add_parser("compile", help="compile to a tape or a source listing")
    common(p, bindings=False)
    p.add_argument("--emit", choices=("tape", "source"), default="tape")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("run", help="execute a project and print its outputs")
    common(p)
    p.add_argument("--random", action="store_true", help="bind unbound inputs randomly")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--check-finite", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="time the tape VM against the tree interpreter")
    common(p, bindings=False)
    p.add_argument("-n", type=int, default=1_000_000, help="iterations per engine")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_bench)

    demo = sub.add_parser("demo", help="built-in workloads").add_subparsers(dest="demo", required=True)
    p = demo.add_parser("kalman", help="filter a simulated random model")
    p.add_argument("--n", type=int, default=2, help="state dimension (1..4)")
    p.add_argument("--m", type=int, default=1, help="measurement dimension (1..4)")
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_demo_kalman)

    p = demo.add_parser("ode", help="integrate a right-hand side with RK4")
    p.add_argument("project", nargs="?", default="ode_exp")
    p.add_argument("--bind", action="append", default=[], metavar="NAME=VAL|@FILE")
    p.add_argument("--state", default="x")
    p.add_argument("--x0", type=float, default=1.0)
    p.add_argument("--h", type=float, default=0.01)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("-o", "--output", metavar="PATH")
    p.set_defaults(func=cmd_demo_ode)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    ctx = {"path": None, "text": None}
    try:
        return args.func(args, ctx)
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        print(f"formulac: error: {exc}", file=sys.stderr)
        return 2
    except FormulaError as exc:
        print(_render(exc, ctx["path"] or "formulac", ctx["text"]), file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"formulac: error: {exc}", file=sys.stderr)
        return 1
