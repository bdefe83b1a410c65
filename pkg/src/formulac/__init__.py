"""Runtime optimizing compiler for engineering formulas.

Formulas over scalars, vectors and matrices are type-checked, optionally
differentiated, and lowered to loop-free, branch-free scalar instruction
tapes executed by a small allocation-free VM.
"""
from .codegen import (Instr, Op, Port, Tape, check_tape, dump_tape, emit_source,
                      load_tape, lower, optimize)
from .errors import (BindingError, DifferentiationError, DiscontinuityError,
                     DuplicateNameError, FormulaError, LoweringError, NonFiniteError,
                     ParseError, ShapeError, SingularMatrixError, TypeCheckError,
                     UnresolvedNameError, UnrollBudgetError)
from .interp import detect_discontinuity, eval_ast, eval_outputs
from .parser import parse_formula, parse_project
from .pipeline import Compiled, analyze, compile_formula, compile_project
from .runtime import TapeRunner, eval_tape
from .semtypes import BOOL, INT, REAL, SemType, matrix, vector
from .symdiff import differentiate, simplify
from .syntax import Expr, FunctionDef, Project, node_count, pretty_print
from .typecheck import TypeEnv, infer, inline_functions

__version__ = "0.1.0"

__all__ = [
    "BOOL", "INT", "REAL", "SemType", "matrix", "vector",
    "Expr", "FunctionDef", "Project", "node_count", "pretty_print",
    "parse_formula", "parse_project",
    "TypeEnv", "infer", "inline_functions",
    "differentiate", "simplify",
    "Instr", "Op", "Port", "Tape", "check_tape", "dump_tape", "emit_source", "load_tape",
    "lower", "optimize",
    "TapeRunner", "eval_tape", "detect_discontinuity", "eval_ast", "eval_outputs",
    "Compiled", "analyze", "compile_formula", "compile_project",
    "BindingError", "DifferentiationError", "DiscontinuityError", "DuplicateNameError",
    "FormulaError", "LoweringError", "NonFiniteError", "ParseError", "ShapeError",
    "SingularMatrixError", "TypeCheckError", "UnresolvedNameError", "UnrollBudgetError",
]
