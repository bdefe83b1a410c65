"""Formula AST, project structure and the canonical pretty-printer."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from .semtypes import SemType

ELEMENTWISE = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs")
BINARY_BUILTINS = ("min", "max", "emul")
SPECIAL_BUILTINS = ("sum", "cross", "delta", "cond", "D")
BUILTINS = frozenset(ELEMENTWISE + BINARY_BUILTINS + SPECIAL_BUILTINS)
KEYWORDS = frozenset({"input", "def", "output", "and", "or", "not", "true", "false"})


@dataclass(frozen=True)
class Expr:
    """One AST node.

    ``kind`` selects the node type; ``value`` holds the literal, the variable or
    callee name, the operator symbol, or the differentiation variable.  Source
    span, resolved type and broadcast annotation do not take part in equality.
    """

    kind: str
    args: tuple[Expr, ...] = ()
    value: object = None
    span: tuple[int, int] | None = field(default=None, compare=False, repr=False)
    ty: SemType | None = field(default=None, compare=False, repr=False)
    broadcast: str | None = field(default=None, compare=False, repr=False)

    def with_args(self, args) -> Expr:
        return replace(self, args=tuple(args))

    def typed(self, ty, broadcast=None) -> Expr:
        return replace(self, ty=ty, broadcast=broadcast)

    def walk(self):
        """Pre-order iteration over the subtree."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.args))

    @property
    def is_literal(self) -> bool:
        return self.kind in ("int", "real", "bool")

    def __str__(self) -> str:
        return pretty_print(self)


# Convenience constructors, mostly for tests and for the differentiator.
def Real(v) -> Expr:
    return Expr("real", value=float(v), ty=SemType("real"))


def Int(v) -> Expr:
    return Expr("int", value=int(v), ty=SemType("int"))


def Bool(v) -> Expr:
    return Expr("bool", value=bool(v), ty=SemType("bool"))


def Var(name: str) -> Expr:
    return Expr("var", value=name)


def BinOp(op: str, left: Expr, right: Expr) -> Expr:
    return Expr("binop", (left, right), op)


def Neg(x: Expr) -> Expr:
    return Expr("neg", (x,))


def Call(name: str, *args: Expr) -> Expr:
    return Expr("call", tuple(args), name)


def Cmp(op: str, left: Expr, right: Expr) -> Expr:
    return Expr("cmp", (left, right), op)


def Cond(c: Expr, a: Expr, b: Expr) -> Expr:
    return Expr("cond", (c, a, b))


def node_count(e: Expr) -> int:
    return sum(1 for _ in e.walk())


def free_variables(e: Expr) -> set[str]:
    return {n.value for n in e.walk() if n.kind == "var"}


def contains_kind(e: Expr, kind: str) -> bool:
    return any(n.kind == kind for n in e.walk())


@dataclass(frozen=True)
class FunctionDef:
    name: str
    params: tuple[tuple[str, SemType], ...]
    body: Expr
    ret: SemType | None = None
    span: tuple[int, int] | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Project:
    inputs: tuple[tuple[str, SemType], ...] = ()
    defs: tuple[FunctionDef, ...] = ()
    outputs: tuple[tuple[str, Expr], ...] = ()

    @property
    def input_types(self) -> dict[str, SemType]:
        return dict(self.inputs)

    def definition(self, name: str) -> FunctionDef | None:
        for d in self.defs:
            if d.name == name:
                return d
        return None


def format_project(p: Project) -> str:
    lines = [f"input {name}: {ty}" for name, ty in p.inputs]
    for d in p.defs:
        params = ", ".join(f"{n}: {t}" for n, t in d.params)
        ret = f" :: {d.ret}" if d.ret is not None else ""
        lines.append(f"def {d.name}({params}){ret} = {pretty_print(d.body)}")
    lines += [f"output {name} = {pretty_print(e)}" for name, e in p.outputs]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- printing
# Binding levels follow the grammar: or < and < cmp < add < mul < postfix < unary < atom.
_OR, _AND, _CMP, _ADD, _MUL, _POST, _UNARY, _ATOM = range(1, 9)
_BINOP_LEVEL = {"+": _ADD, "-": _ADD, "*": _MUL, "/": _MUL}


def _format_real(v: float) -> str:
    text = repr(float(v))
    if "inf" in text or "nan" in text:
        raise ValueError(f"cannot print non-finite literal {text}")
    return text


def _level(e: Expr) -> int:
    k = e.kind
    if k in ("int", "real"):
        return _UNARY if e.value < 0 else _ATOM
    if k == "or":
        return _OR
    if k == "and":
        return _AND
    if k == "cmp":
        return _CMP
    if k == "binop":
        return _POST if e.value == "^" else _BINOP_LEVEL[e.value]
    if k in ("transpose", "inverse"):
        return _POST
    if k in ("neg", "not"):
        return _UNARY
    return _ATOM


def _wrap(e: Expr, minimum: int) -> str:
    text = pretty_print(e)
    return text if _level(e) >= minimum else f"({text})"


def pretty_print(e: Expr) -> str:
    """Canonical text that re-parses to a structurally equal tree."""
    k = e.kind
    if k == "int":
        return str(e.value)
    if k == "real":
        return _format_real(e.value)
    if k == "bool":
        return "true" if e.value else "false"
    if k == "var":
        return e.value
    if k == "neg":
        return "-" + _wrap(e.args[0], _UNARY)
    if k == "not":
        return "not " + _wrap(e.args[0], _UNARY)
    if k in ("or", "and"):
        lvl = _OR if k == "or" else _AND
        return f"{_wrap(e.args[0], lvl)} {k} {_wrap(e.args[1], lvl + 1)}"
    if k == "cmp":
        return f"{_wrap(e.args[0], _CMP + 1)} {e.value} {_wrap(e.args[1], _CMP + 1)}"
    if k == "binop":
        if e.value == "^":
            return f"{_wrap(e.args[0], _POST)}^{e.args[1].value}"
        lvl = _BINOP_LEVEL[e.value]
        return f"{_wrap(e.args[0], lvl)} {e.value} {_wrap(e.args[1], lvl + 1)}"
    if k == "transpose":
        return _wrap(e.args[0], _POST) + "^T"
    if k == "inverse":
        return _wrap(e.args[0], _POST) + "^-1"
    args = ", ".join(pretty_print(a) for a in e.args)
    if k == "call":
        return f"{e.value}({args})"
    if k == "apply":
        rest = ", ".join(pretty_print(a) for a in e.args[1:])
        return f"{pretty_print(e.args[0])}({rest})"
    if k == "deriv":
        return f"D({pretty_print(e.args[0])}, {e.value})"
    if k in ("sum", "cross", "delta", "cond"):
        return f"{k}({args})"
    raise ValueError(f"unknown node kind {k!r}")
