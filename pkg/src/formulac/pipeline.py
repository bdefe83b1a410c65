"""parse -> inline -> infer -> (derive) -> simplify -> lower -> optimize."""
from __future__ import annotations

from dataclasses import dataclass

from .codegen import UNROLL_BUDGET, Tape, emit_source, lower, optimize
from .errors import FormulaError, LoweringError
from .interp import detect_discontinuity, eval_outputs
from .parser import parse_formula, parse_project
from .runtime import TapeRunner, eval_tape
from .semtypes import SemType
from .symdiff import differentiate, resolve_derivatives, simplify
from .syntax import Expr, Project
from .typecheck import TypeEnv, infer, inline_functions


def analyze(project: Project | str, derive: str | None = None):
    """Type-checked, derivative-free, simplified outputs of a project."""
    p = parse_project(project) if isinstance(project, str) else project
    if not p.outputs:
        raise FormulaError("no outputs: project declares nothing to compute")
    env = TypeEnv(dict(p.inputs))
    outs = []
    for name, e in inline_functions(p).outputs:
        e = resolve_derivatives(e, env)
        typed = infer(e, env)
        if derive is not None:
            infer(Expr("deriv", (typed,), derive, span=e.span), env)  # validates the variable
            typed = infer(differentiate(typed, derive), env)
        outs.append((name, infer(simplify(typed), env)))
    return p, tuple(outs)


@dataclass(frozen=True)
class Compiled:
    project: Project
    outputs: tuple[tuple[str, Expr], ...]
    raw_tape: Tape
    tape: Tape

    @property
    def input_types(self) -> dict[str, SemType]:
        return dict(self.project.inputs)

    def run(self, bindings, check_finite=False) -> dict:
        return eval_tape(self.tape, bindings, check_finite=check_finite)

    def run_ast(self, bindings) -> dict:
        return eval_outputs(self.outputs, bindings, self.input_types)

    def runner(self, check_finite=False) -> TapeRunner:
        return TapeRunner(self.tape, check_finite)

    def source(self) -> str:
        return emit_source(self.tape)

    @property
    def has_discontinuity(self) -> bool:
        return any(detect_discontinuity(e) for _, e in self.outputs)


def compile_project(project: Project | str, derive: str | None = None,
                    budget: int = UNROLL_BUDGET) -> Compiled:
    p, outs = analyze(project, derive)
    for name, e in outs:
        if detect_discontinuity(e):
            raise LoweringError(
                f"output {name!r} contains delta(...); a delta impulse has no pointwise "
                "tape semantics (use detect_discontinuity / the AST evaluator)", e.span)
    raw = lower(outs, p.inputs, budget)
    return Compiled(p, outs, raw, optimize(raw))


def compile_formula(text: str, inputs, derive: str | None = None) -> Compiled:
    """Compile one formula over ``inputs`` (mapping or pairs of name -> SemType)."""
    pairs = tuple(inputs.items()) if isinstance(inputs, dict) else tuple(inputs)
    p = Project(pairs, (), (("result", parse_formula(text)),))
    return compile_project(p, derive)
