"""Context-sensitive type inference and compile-time function inlining."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from . import semtypes as st
from .errors import ShapeError, TypeCheckError, UnresolvedNameError
from .semtypes import BOOL, INT, REAL, SemType
from .syntax import ELEMENTWISE, Expr, FunctionDef, Project

MAX_INVERSE = 4


@dataclass
class TypeEnv:
    values: dict[str, SemType] = field(default_factory=dict)
    functions: dict[str, FunctionDef] = field(default_factory=dict)

    @classmethod
    def from_project(cls, p: Project) -> TypeEnv:
        return cls(dict(p.inputs), {d.name: d for d in p.defs})

    def extended(self, extra) -> TypeEnv:
        return TypeEnv({**self.values, **dict(extra)}, self.functions)


def _err(msg, node, cls=TypeCheckError):
    return cls(msg, node.span)


def _unify_scalar(a: SemType, b: SemType) -> SemType:
    return INT if a == INT and b == INT else REAL


def _as_scalar(t: SemType) -> SemType | None:
    """Numeric scalar view of ``t``; matrix(1,1) demotes to real here."""
    if t.kind in ("int", "real"):
        return t
    if t.is_1x1:
        return REAL
    return None


def _value_type(t: SemType, node) -> SemType:
    if t.is_function:
        raise _err(f"function of type {t} used as a runtime value", node)
    return t


def _elementwise_pair(op, lt, rt, node):
    """Shared rule for +, -, min, max, emul: equal shapes or one scalar side."""
    if lt.kind in ("int", "real") and rt.kind in ("int", "real"):
        return _unify_scalar(lt, rt), None
    if lt.kind in ("int", "real") and rt.is_array:
        return rt, "left-scalar"
    if rt.kind in ("int", "real") and lt.is_array:
        return lt, "right-scalar"
    if lt.is_array and lt == rt:
        return lt, None
    raise _err(f"shape mismatch in {op!r}: {lt} vs {rt}", node, ShapeError)


def _product(lt, rt, node):
    if lt.kind in ("int", "real") or rt.kind in ("int", "real"):
        return _elementwise_pair("*", lt, rt, node)
    lk, rk = lt.kind, rt.kind
    if lk == "matrix" and rk == "matrix":
        (m, k1), (k2, n) = lt.shape, rt.shape
        if k1 != k2:
            raise _err(f"shape mismatch in '*': {lt} vs {rt} (inner dimensions {k1} != {k2})",
                       node, ShapeError)
        return st.matrix(m, n), None
    if lk == "matrix" and rk == "vector":
        (m, k1), (k2,) = lt.shape, rt.shape
        if k1 != k2:
            raise _err(f"shape mismatch in '*': {lt} vs {rt}", node, ShapeError)
        # a row times a column is a 1x1 matrix, otherwise a column vector
        return (st.matrix(1, 1) if m == 1 else st.vector(m)), None
    if lk == "vector" and rk == "matrix":
        (n,), (k, p) = lt.shape, rt.shape
        if k != 1:
            raise _err(f"shape mismatch in '*': {lt} (column) vs {rt}", node, ShapeError)
        return st.matrix(n, p), None
    if lt == rt:  # two vectors of equal length: componentwise
        return lt, None
    raise _err(f"shape mismatch in '*': {lt} vs {rt}", node, ShapeError)


def _quotient(lt, rt, node):
    if lt.kind in ("int", "real") and rt.kind in ("int", "real"):
        return REAL, None
    if lt.is_array and lt == rt:
        return lt, None
    t, b = _elementwise_pair("/", lt, rt, node)
    return t, b


def infer(e: Expr, env: TypeEnv) -> Expr:
    """Return ``e`` with every node annotated by its SemType."""
    k = e.kind
    if k == "int":
        return e.typed(INT)
    if k == "real":
        return e.typed(REAL)
    if k == "bool":
        return e.typed(BOOL)
    if k == "var":
        if e.value in env.values:
            return e.typed(env.values[e.value])
        if e.value in env.functions:
            return e.typed(_signature(env.functions[e.value], env))
        raise _err(f"unresolved identifier {e.value!r}", e, UnresolvedNameError)

    if k == "call" and e.value in env.functions:
        return _infer_call(e, env)
    if k == "apply":
        callee = infer(e.args[0], env)
        if not callee.ty.is_function:
            raise _err(f"calling a non-function of type {callee.ty}", e)
        args = [infer(a, env) for a in e.args[1:]]
        ret = _check_application(callee.ty, args, e)
        return e.with_args([callee, *args]).typed(ret)

    args = [infer(a, env) for a in e.args]
    ts = [_value_type(a.ty, a) for a in args]
    typed = e.with_args(args)

    if k == "neg":
        if not ts[0].is_numeric:
            raise _err(f"cannot negate {ts[0]}", e)
        return typed.typed(ts[0])
    if k == "binop":
        lt, rt = ts
        if e.value == "^":
            if not lt.is_numeric:
                raise _err(f"cannot raise {lt} to a power", e)
            if args[1].kind != "int" or args[1].value < 0:
                raise _err("power exponent must be a non-negative integer literal", e)
            return typed.typed(lt)
        if not (lt.is_numeric and rt.is_numeric):
            raise _err(f"arithmetic on non-numeric operands: {lt} {e.value} {rt}", e)
        if e.value in "+-":
            t, b = _elementwise_pair(e.value, lt, rt, e)
        elif e.value == "*":
            t, b = _product(lt, rt, e)
        else:
            t, b = _quotient(lt, rt, e)
        return typed.typed(t, b)
    if k == "cmp":
        ls, rs = _as_scalar(ts[0]), _as_scalar(ts[1])
        if ls is None or rs is None:
            if e.value in ("==", "!=") and ts[0] == ts[1] == BOOL:
                return typed.typed(BOOL)
            raise _err(f"comparison of non-scalars: {ts[0]} {e.value} {ts[1]}", e)
        return typed.typed(BOOL)
    if k in ("and", "or", "not"):
        if any(t != BOOL for t in ts):
            raise _err(f"'{k}' needs boolean operands, got {', '.join(map(str, ts))}", e)
        return typed.typed(BOOL)
    if k == "call":
        name = e.value
        if name in ELEMENTWISE:
            t = ts[0]
            if t.is_1x1:
                return typed.typed(REAL)
            if t.kind in ("int", "real"):
                return typed.typed(REAL)
            if t.is_array:
                return typed.typed(t)
            raise _err(f"{name} needs a numeric argument, got {t}", e)
        if name in ("min", "max", "emul"):
            if not all(t.is_numeric for t in ts):
                raise _err(f"{name} needs numeric arguments", e)
            t, b = _elementwise_pair(name, ts[0], ts[1], e)
            return typed.typed(t, b)
        raise _err(f"calling a non-function {name!r}", e)
    if k == "transpose":
        t = ts[0]
        if t.kind == "matrix":
            return typed.typed(st.matrix(t.shape[1], t.shape[0]))
        if t.kind == "vector":
            return typed.typed(st.matrix(1, t.shape[0]))
        if t.kind in ("int", "real"):
            return typed.typed(t)
        raise _err(f"cannot transpose {t}", e)
    if k == "inverse":
        t = ts[0]
        if t.kind in ("int", "real"):
            return typed.typed(REAL)
        if t.kind == "matrix" and t.shape[0] == t.shape[1] and t.shape[0] <= MAX_INVERSE:
            return typed.typed(t)
        if t.kind == "matrix" and t.shape[0] == t.shape[1]:
            raise _err(f"inverse of {t} not supported (n > {MAX_INVERSE})", e, ShapeError)
        raise _err(f"inverse of non-square {t}", e, ShapeError)
    if k == "cross":
        if ts[0] != st.vector(3) or ts[1] != st.vector(3):
            raise _err(f"cross needs two vector[3] operands, got {ts[0]} and {ts[1]}", e, ShapeError)
        return typed.typed(st.vector(3))
    if k == "sum":
        if not ts[0].is_numeric:
            raise _err(f"sum of {ts[0]}", e)
        return typed.typed(REAL)
    if k == "cond":
        c, a, b = ts
        if c != BOOL:
            raise _err(f"cond condition must be bool, got {c}", e)
        if a == b:
            return typed.typed(a)
        if a.kind in ("int", "real") and b.kind in ("int", "real"):
            return typed.typed(REAL)
        raise _err(f"cond branches differ: {a} vs {b}", e, ShapeError)
    if k == "delta":
        if _as_scalar(ts[0]) is None:
            raise _err(f"delta needs a scalar argument, got {ts[0]}", e)
        return typed.typed(REAL)
    if k == "deriv":
        t = ts[0]
        if not t.is_numeric:
            raise _err(f"cannot differentiate {t}", e)
        vt = env.values.get(e.value)
        if vt is None:
            raise _err(f"unknown differentiation variable {e.value!r}", e, UnresolvedNameError)
        if vt not in (REAL, INT):
            raise _err(f"differentiation variable {e.value!r} must be a real scalar, got {vt}", e)
        return typed.typed(REAL if t == INT else t)
    raise _err(f"unknown node kind {k!r}", e)


def _signature(d: FunctionDef, env: TypeEnv) -> SemType:
    body = infer(d.body, env.extended(d.params))
    ret = _value_type(body.ty, d.body)
    if d.ret is not None:
        _check_assignable(ret, d.ret, d.body, f"return value of {d.name}")
        ret = d.ret
    return st.function([t for _, t in d.params], ret)


def _check_assignable(actual: SemType, expected: SemType, node, what):
    if actual == expected or (actual == INT and expected == REAL):
        return
    raise _err(f"type mismatch for {what}: expected {expected}, got {actual}", node)


def _check_application(fty: SemType, args, node) -> SemType:
    """Type of applying ``fty`` to typed ``args``; function arguments compose."""
    if len(args) != len(fty.params):
        raise _err(f"arity mismatch: expected {len(fty.params)} argument(s), got {len(args)}", node)
    inner = None
    for a, p in zip(args, fty.params):
        if a.ty.is_function and not p.is_function:
            _check_assignable(a.ty.ret, p, a, "composed argument")
            if inner is not None and inner != a.ty.params:
                raise _err("composed functions must share one signature", a)
            inner = a.ty.params
        else:
            _check_assignable(a.ty, p, a, "argument")
    if inner is not None:
        return st.function(inner, fty.ret)
    return fty.ret


def _infer_call(e: Expr, env: TypeEnv) -> Expr:
    fty = _signature(env.functions[e.value], env)
    args = [infer(a, env) for a in e.args]
    return e.with_args(args).typed(_check_application(fty, args, e))


# ------------------------------------------------------------------ inlining
_fresh = itertools.count()


@dataclass
class _Fn:
    """A compile-time function value: parameter types plus a body builder."""
    params: tuple[SemType, ...]
    ret: SemType
    build: object  # callable(list[Expr]) -> Expr


def substitute(e: Expr, mapping: dict[str, Expr]) -> Expr:
    """Replace variable references; expressions have no binders so this is capture-free."""
    if e.kind == "var" and e.value in mapping:
        return mapping[e.value]
    if not e.args:
        return e
    return e.with_args(substitute(a, mapping) for a in e.args)


def _rename_vars(e: Expr, names: dict[str, str]) -> Expr:
    if e.kind == "var" and e.value in names:
        return Expr("var", value=names[e.value], span=e.span)
    if e.kind == "deriv" and e.value in names:
        e = Expr("deriv", e.args, names[e.value], span=e.span)
    if not e.args:
        return e
    return e.with_args(_rename_vars(a, names) for a in e.args)


class _Inliner:
    def __init__(self, project: Project):
        self.inputs = dict(project.inputs)
        self.fns: dict[str, _Fn] = {}

    def add_def(self, d: FunctionDef):
        from .symdiff import resolve_derivatives

        uniq = {n: f"{n}%{next(_fresh)}" for n, _ in d.params}
        env = TypeEnv({**self.inputs, **{uniq[n]: t for n, t in d.params}})
        body = self.expand(_rename_vars(d.body, uniq), env)
        if isinstance(body, _Fn):
            raise TypeCheckError(f"definition {d.name} returns a function", d.span)
        body = resolve_derivatives(body, env)
        ret = infer(body, env).ty
        if d.ret is not None:
            _check_assignable(ret, d.ret, d.body, f"return value of {d.name}")
        formals = [uniq[n] for n, _ in d.params]

        def build(args, body=body, formals=formals):
            return substitute(body, dict(zip(formals, args)))

        self.fns[d.name] = _Fn(tuple(t for _, t in d.params), d.ret or ret, build)

    def apply(self, fn: _Fn, args, env, node):
        if len(args) != len(fn.params):
            raise _err(f"arity mismatch: expected {len(fn.params)} argument(s), got {len(args)}", node)
        composed = [a for a in args if isinstance(a, _Fn)]
        if composed:
            sig = composed[0].params
            for a, p in zip(args, fn.params):
                if isinstance(a, _Fn):
                    if a.params != sig:
                        raise _err("composed functions must share one signature", node)
                    _check_assignable(a.ret, p, node, "composed argument")
                else:
                    _check_assignable(infer(a, env).ty, p, a, "argument")

            def build(inner_args):
                return fn.build([a.build(inner_args) if isinstance(a, _Fn) else a for a in args])

            return _Fn(sig, fn.ret, build)
        for a, p in zip(args, fn.params):
            _check_assignable(infer(a, env).ty, p, a, "argument")
        return fn.build(list(args))

    def expand(self, e: Expr, env: TypeEnv):
        if e.kind == "var" and e.value not in env.values and e.value in self.fns:
            return self.fns[e.value]
        if e.kind == "call" and e.value in self.fns:
            args = [self.expand(a, env) for a in e.args]
            return self.apply(self.fns[e.value], args, env, e)
        if e.kind == "apply":
            callee = self.expand(e.args[0], env)
            if not isinstance(callee, _Fn):
                raise _err("calling a non-function value", e)
            args = [self.expand(a, env) for a in e.args[1:]]
            return self.apply(callee, args, env, e)
        if not e.args:
            return e
        args = [self.expand(a, env) for a in e.args]
        for a in args:
            if isinstance(a, _Fn):
                raise _err("function used as a runtime value", e)
        return e.with_args(args)


def inline_functions(p: Project) -> Project:
    """Replace every call to a definition by its substituted body.

    Passing a definition's name where a value is expected composes the two
    functions; the result is resolved here so no function values survive.
    """
    inl = _Inliner(p)
    for d in p.defs:
        inl.add_def(d)
    env = TypeEnv(dict(p.inputs))
    outputs = []
    for name, e in p.outputs:
        out = inl.expand(e, env)
        if isinstance(out, _Fn):
            raise TypeCheckError(f"output {name!r} is a function, not a runtime value", e.span)
        outputs.append((name, out))
    return Project(p.inputs, (), tuple(outputs))
