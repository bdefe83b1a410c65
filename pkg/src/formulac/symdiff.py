"""Symbolic differentiation and algebraic simplification."""
from __future__ import annotations

import math

from . import scalarops
from .errors import DifferentiationError
from .semtypes import BOOL, INT, REAL
from .syntax import (BinOp, Bool, Call, Cmp, Cond, Expr, Int, Neg, Real,
                     contains_kind)


def _is_scalar(ty) -> bool:
    return ty is None or ty.kind in ("int", "real")


def zero_like(e: Expr) -> Expr:
    if _is_scalar(e.ty):
        return Real(0.0)
    return BinOp("*", Real(0.0), e)


def _emul(a: Expr, a_ty, b: Expr, b_ty) -> Expr:
    """Componentwise product; plain '*' whenever one side is scalar."""
    if _is_scalar(a_ty) or _is_scalar(b_ty):
        return BinOp("*", a, b)
    return Call("emul", a, b)


def _fit(d: Expr, d_ty, target: Expr) -> Expr:
    """Broadcast a scalar derivative up to the array type of ``target``."""
    if _is_scalar(d_ty) and not _is_scalar(target.ty):
        return BinOp("+", d, zero_like(target))
    return d


def _sum_terms(target, a, a_ty, b, b_ty, op="+"):
    if a is None and b is None:
        return None
    if b is None:
        return _fit(a, a_ty, target)
    if a is None:
        return _fit(Neg(b) if op == "-" else b, b_ty, target)
    return BinOp(op, a, b)


def _outer_derivative(name: str, u: Expr, node: Expr) -> Expr:
    if name == "sin":
        return Call("cos", u)
    if name == "cos":
        return Neg(Call("sin", u))
    if name == "tan":
        return BinOp("+", Int(1), BinOp("^", Call("tan", u), Int(2)))
    if name == "exp":
        return Call("exp", u)
    if name == "log":
        return BinOp("/", Int(1), u)
    if name == "sqrt":
        return BinOp("/", Int(1), BinOp("*", Int(2), Call("sqrt", u)))
    if name == "abs":
        if not _is_scalar(u.ty):
            raise DifferentiationError("derivative of abs is only defined for scalars", node.span)
        return Cond(Cmp(">=", u, Int(0)), Int(1), Neg(Int(1)))
    raise DifferentiationError(f"no derivative rule for {name}", node.span)


def _d(e: Expr, v: str):
    """Derivative of typed ``e`` w.r.t. ``v``; ``None`` stands for an exact zero."""
    k = e.kind
    if k in ("int", "real"):
        return None
    if k == "var":
        return Real(1.0) if e.value == v else None
    if k == "neg":
        du = _d(e.args[0], v)
        return None if du is None else Neg(du)
    if k == "binop":
        u, w = e.args
        op = e.value
        if op == "^":
            n = w.value
            du = _d(u, v)
            if n == 0 or du is None:
                return None
            if n == 1:
                return du
            outer = BinOp("*", Int(n), BinOp("^", u, Int(n - 1)))
            return _emul(du, u.ty, outer, u.ty)
        du, dw = _d(u, v), _d(w, v)
        if op in "+-":
            return _sum_terms(e, du, u.ty, dw, w.ty, op)
        if op == "*":
            if du is None and dw is None:
                return None
            # operand order is preserved: matrix products do not commute
            left = None if du is None else BinOp("*", du, w)
            right = None if dw is None else BinOp("*", u, dw)
            return _sum_terms(e, left, e.ty, right, e.ty)
        if op == "/":
            if du is None and dw is None:
                return None
            left = None if du is None else BinOp("/", du, w)
            right = None
            if dw is not None:
                right = BinOp("/", _emul(u, u.ty, dw, w.ty), BinOp("^", w, Int(2)))
            return _sum_terms(e, left, e.ty, right, e.ty, "-")
    if k == "call":
        name = e.value
        if name in ("min", "max"):
            u, w = e.args
            du, dw = _d(u, v), _d(w, v)
            if du is None and dw is None:
                return None
            if not (_is_scalar(u.ty) and _is_scalar(w.ty)):
                raise DifferentiationError(f"derivative of {name} is only defined for scalars", e.span)
            pick_w = Cmp("<" if name == "min" else ">", w, u)
            return Cond(pick_w, dw if dw is not None else Real(0.0), du if du is not None else Real(0.0))
        if name == "emul":
            u, w = e.args
            du, dw = _d(u, v), _d(w, v)
            left = None if du is None else _emul(du, u.ty, w, w.ty)
            right = None if dw is None else _emul(u, u.ty, dw, w.ty)
            return _sum_terms(e, left, e.ty, right, e.ty)
        if len(e.args) == 1:
            u = e.args[0]
            du = _d(u, v)
            if du is None:
                return None
            outer = _outer_derivative(name, u, e)
            if u.ty is not None and u.ty.is_1x1 and _is_scalar(e.ty):
                du = Expr("sum", (du,))  # 1x1 matrix demoted to real
                return BinOp("*", du, outer)
            return _emul(du, u.ty, outer, u.ty)
        raise DifferentiationError(f"call to {name!r} must be inlined before differentiation", e.span)
    if k == "transpose":
        du = _d(e.args[0], v)
        return None if du is None else Expr("transpose", (du,))
    if k == "inverse":
        u = e.args[0]
        if not _is_scalar(u.ty):
            raise DifferentiationError("derivative of a matrix inverse is not supported", e.span)
        du = _d(u, v)
        return None if du is None else Neg(BinOp("/", du, BinOp("^", u, Int(2))))
    if k == "cross":
        u, w = e.args
        du, dw = _d(u, v), _d(w, v)
        left = None if du is None else Expr("cross", (du, w))
        right = None if dw is None else Expr("cross", (u, dw))
        return _sum_terms(e, left, e.ty, right, e.ty)
    if k == "sum":
        du = _d(e.args[0], v)
        return None if du is None else Expr("sum", (du,))
    if k == "cond":
        c, a, b = e.args
        da, db = _d(a, v), _d(b, v)
        if da is None and db is None:
            return None
        return Cond(c, da if da is not None else zero_like(a), db if db is not None else zero_like(b))
    if k == "delta":
        raise DifferentiationError("derivative of delta is unsupported", e.span)
    if k == "deriv":
        raise DifferentiationError("nested derivative must be resolved first", e.span)
    raise DifferentiationError(f"cannot differentiate a {k} node", e.span)


def differentiate(e: Expr, var: str) -> Expr:
    """d(e)/d(var) for a typed, call-free expression.

    Vector and matrix expressions differentiate componentwise and matrix
    products keep their operand order.  The result is untyped; re-run
    ``infer`` before lowering it.
    """
    if e.ty is not None and e.ty == BOOL:
        raise DifferentiationError("cannot differentiate a boolean expression", e.span)
    d = _d(e, var)
    return zero_like(e) if d is None else d


def resolve_derivatives(e: Expr, env) -> Expr:
    """Replace every ``D(body, v)`` node, innermost first, by its simplified derivative."""
    from .typecheck import infer

    if not contains_kind(e, "deriv"):
        return e
    e = e.with_args(resolve_derivatives(a, env) for a in e.args)
    if e.kind != "deriv":
        return e
    typed = infer(e, env)  # validates the variable
    d = differentiate(typed.args[0], e.value)
    return simplify(infer(d, env))


# ------------------------------------------------------------- simplifier
def _lit_value(e: Expr):
    return e.value if e.kind in ("int", "real") else None


def _is_const(e: Expr, c) -> bool:
    return e.kind in ("int", "real") and e.value == c


def _same_type(node: Expr, repl: Expr) -> bool:
    return node.ty is None or repl.ty is None or node.ty == repl.ty


def _literal(value, like_int: bool):
    if isinstance(value, bool):
        return Bool(value)
    if like_int:
        if abs(value) > 2**53:
            return None
        return Int(value)
    value = float(value)
    if not math.isfinite(value):
        return None
    return Real(value)


def _scalar_zero(node: Expr):
    if node.ty == INT:
        return Int(0)
    if node.ty == REAL:
        return Real(0.0)
    return None


def _fold(n: Expr):
    k = n.kind
    args = n.args
    if not args or not all(a.is_literal for a in args):
        return None
    vals = [a.value for a in args]
    all_int = all(a.kind == "int" for a in args)
    try:
        if k == "neg" and args[0].kind != "bool":
            return _literal(-vals[0], all_int)
        if k == "binop":
            a, b = vals
            if n.value == "^":
                return _literal(a ** b if all_int else scalarops.ipow(float(a), b), all_int)
            if n.value == "/":
                if b == 0:
                    return None
                return _literal(float(a) / float(b), False)
            if all_int:
                return _literal(scalarops.BINARY[n.value](a, b), True)
            return _literal(scalarops.BINARY[n.value](float(a), float(b)), False)
        if k == "cmp":
            return Bool(scalarops.COMPARE[n.value](vals[0], vals[1]))
        if k == "and":
            return Bool(vals[0] and vals[1])
        if k == "or":
            return Bool(vals[0] or vals[1])
        if k == "not":
            return Bool(not vals[0])
        if k == "call" and n.value in scalarops.ELEMENTWISE:
            return _literal(scalarops.ELEMENTWISE[n.value](float(vals[0])), False)
        if k == "call" and n.value in ("min", "max"):
            return _literal(scalarops.BINARY[n.value](vals[0], vals[1]), all_int)
        if k == "inverse" and vals[0] != 0:
            return _literal(1.0 / vals[0], False)
    except (OverflowError, ValueError, TypeError, KeyError):
        return None
    return None


def _rewrite(n: Expr):
    """One local rewrite at ``n`` or ``None``; children are already simplified."""
    folded = _fold(n)
    if folded is not None:
        return folded
    k = n.kind
    if k == "neg" and n.args[0].kind == "neg":
        inner = n.args[0].args[0]
        return inner if _same_type(n, inner) else None
    if k == "cond" and n.args[0].kind == "bool":
        pick = n.args[1] if n.args[0].value else n.args[2]
        return pick if _same_type(n, pick) else None
    if k != "binop":
        return None
    l, r = n.args
    op = n.value
    if op == "+":
        if _is_const(l, 0) and _same_type(n, r):
            return r
        if _is_const(r, 0) and _same_type(n, l):
            return l
    elif op == "-":
        if _is_const(r, 0) and _same_type(n, l):
            return l
        if _is_const(l, 0) and _same_type(n, r):
            return Expr("neg", (r,), ty=r.ty)
    elif op == "*":
        if _is_const(l, 1) and _same_type(n, r):
            return r
        if _is_const(r, 1) and _same_type(n, l):
            return l
        if _is_const(l, 0) or _is_const(r, 0):
            return _scalar_zero(n)
    elif op == "/":
        if _is_const(r, 1) and _same_type(n, l):
            return l
        if _is_const(l, 0):
            return _scalar_zero(n)
    elif op == "^":
        if r.value == 1 and _same_type(n, l):
            return l
        if r.value == 0:
            if n.ty == INT:
                return Int(1)
            if n.ty == REAL:
                return Real(1.0)
    return None


def simplify(e: Expr) -> Expr:
    """Bottom-up identity elimination and constant folding.

    The result never has more nodes than the input, and types are preserved
    on annotated trees (a rule that would change a node's type is skipped).
    """
    if e.args:
        e = e.with_args(simplify(a) for a in e.args)
    while True:
        r = _rewrite(e)
        if r is None:
            return e
        e = r
