"""Naive tree-walking evaluator: the reference the tapes are tested against.

Values travel through the walk as Python floats, lists (vectors, column
semantics) and lists of rows (matrices).  Everything numeric is a float, the
same representation the tape slots use; ints and bools are restored at the
boundary.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import linalg, scalarops
from .errors import BindingError, ExecutionError, SingularMatrixError
from .runtime import SINGULAR_RTOL, unpack_value
from .semtypes import SemType
from .syntax import Expr


def detect_discontinuity(e: Expr) -> bool:
    """True iff ``e`` contains a delta node anywhere."""
    return any(n.kind == "delta" for n in e.walk())


def _is_list(v):
    return isinstance(v, list)


def _map(v, fn):
    if not _is_list(v):
        return fn(v)
    if _is_list(v[0]):
        return [[fn(x) for x in row] for row in v]
    return [fn(x) for x in v]


def _zip(a, b, fn):
    if not _is_list(a) and not _is_list(b):
        return fn(a, b)
    if not _is_list(a):
        return _map(b, lambda y: fn(a, y))
    if not _is_list(b):
        return _map(a, lambda x: fn(x, b))
    if _is_list(a[0]):
        return [[fn(x, y) for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]
    return [fn(x, y) for x, y in zip(a, b)]


def _first(v):
    while _is_list(v):
        v = v[0]
    return v


def _flat(v):
    if not _is_list(v):
        return [v]
    if _is_list(v[0]):
        return [x for row in v for x in row]
    return list(v)


def _product(a, b, ty: SemType):
    """Schoolbook product, summing k = 0..K-1 left to right."""
    ma = a if _is_list(a[0]) else [[x] for x in a]
    mb = b if _is_list(b[0]) else [[x] for x in b]
    rows = []
    for i in range(len(ma)):
        row = []
        for j in range(len(mb[0])):
            acc = ma[i][0] * mb[0][j]
            for p in range(1, len(mb)):
                acc = acc + ma[i][p] * mb[p][j]
            row.append(acc)
        rows.append(row)
    if ty.kind == "vector":
        return [r[0] for r in rows]
    return rows


def _guarded_inverse(m):
    inv, det = linalg.inverse(m, lambda x: scalarops.div(1.0, x))
    scale = 0.0
    for x in _flat(m):
        if abs(x) > scale:
            scale = abs(x)
    if abs(det) < SINGULAR_RTOL * (1.0 + scale):
        raise SingularMatrixError(f"singular matrix: |det| = {abs(det):.3g} below guard threshold")
    return inv


class _Evaluator:
    def __init__(self, env, functions=None):
        self.env = env
        self.functions = functions or {}

    def ev(self, e: Expr):
        return getattr(self, "k_" + e.kind)(e)

    def k_int(self, e):
        return float(e.value)

    k_real = k_int

    def k_bool(self, e):
        return bool(e.value)

    def k_var(self, e):
        try:
            return self.env[e.value]
        except KeyError:
            raise BindingError(f"input {e.value!r} unbound") from None

    def k_neg(self, e):
        return _map(self.ev(e.args[0]), lambda x: -x)

    def k_binop(self, e):
        a = self.ev(e.args[0])
        op = e.value
        if op == "^":
            n = e.args[1].value
            return _map(a, lambda x: scalarops.ipow(x, n))
        b = self.ev(e.args[1])
        if op == "*" and _is_list(a) and _is_list(b) and not (
                not _is_list(a[0]) and not _is_list(b[0])):
            return _product(a, b, e.ty)
        return _zip(a, b, scalarops.BINARY[op])

    def k_cmp(self, e):
        a, b = (_first(self.ev(x)) for x in e.args)
        return scalarops.COMPARE[e.value](a, b)

    def k_and(self, e):
        a, b = self.ev(e.args[0]), self.ev(e.args[1])
        return a and b

    def k_or(self, e):
        a, b = self.ev(e.args[0]), self.ev(e.args[1])
        return a or b

    def k_not(self, e):
        return not self.ev(e.args[0])

    def k_call(self, e):
        name = e.value
        if name in scalarops.ELEMENTWISE:
            v = _map(self.ev(e.args[0]), scalarops.ELEMENTWISE[name])
            return _first(v) if e.ty is not None and e.ty.is_scalar else v
        if name in scalarops.BINARY:
            return _zip(self.ev(e.args[0]), self.ev(e.args[1]), scalarops.BINARY[name])
        if name in self.functions:
            d = self.functions[name]
            args = [self.ev(a) for a in e.args]
            inner = _Evaluator({**self.env, **{p: v for (p, _), v in zip(d.params, args)}},
                               self.functions)
            return inner.ev(d.body)
        raise ExecutionError(f"cannot evaluate call to {name!r}", e.span)

    def k_transpose(self, e):
        v = self.ev(e.args[0])
        if not _is_list(v):
            return v
        if not _is_list(v[0]):
            return [list(v)]
        return [list(col) for col in zip(*v)]

    def k_inverse(self, e):
        v = self.ev(e.args[0])
        if not _is_list(v):
            return scalarops.div(1.0, v)
        return _guarded_inverse(v)

    def k_cross(self, e):
        a, b = self.ev(e.args[0]), self.ev(e.args[1])
        return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]

    def k_sum(self, e):
        items = _flat(self.ev(e.args[0]))
        acc = items[0]
        for x in items[1:]:
            acc = acc + x
        return acc

    def k_cond(self, e):
        c = self.ev(e.args[0])
        a, b = self.ev(e.args[1]), self.ev(e.args[2])
        # both branches are evaluated, like the select opcode
        return _zip(a, b, lambda x, y: x if c else y)

    def k_delta(self, e):
        self.ev(e.args[0])
        return 0.0

    def k_deriv(self, e):
        raise ExecutionError("derivative nodes must be resolved before evaluation", e.span)

    def k_apply(self, e):
        raise ExecutionError("function application must be inlined before evaluation", e.span)


def _to_internal(ty: SemType, value):
    if ty.kind == "bool":
        return bool(value)
    if ty.kind in ("int", "real"):
        return float(np.asarray(value, dtype=float).reshape(()))
    arr = np.asarray(value, dtype=float)
    if ty.kind == "vector":
        return arr.reshape(-1).tolist()
    return arr.tolist()


def _to_value(ty: SemType, raw):
    if ty.kind == "bool":
        return bool(raw)
    return unpack_value(ty, _flat(raw))


def eval_ast(e: Expr, bindings, types=None, functions=None):
    """Evaluate typed ``e`` directly on the tree.

    ``types`` maps input names to SemTypes for converting bindings; when it is
    omitted the bindings are taken as-is (numpy arrays and scalars).
    ``functions`` (name -> FunctionDef) allows evaluating un-inlined calls.
    """
    env = {}
    for name, value in bindings.items():
        ty = types.get(name) if types else None
        if ty is None:
            arr = np.asarray(value)
            if arr.dtype == bool and arr.ndim == 0:
                env[name] = bool(value)
            elif arr.ndim == 0:
                env[name] = float(arr)
            else:
                env[name] = arr.astype(float).tolist()
        else:
            env[name] = _to_internal(ty, value)
    raw = _Evaluator(env, functions).ev(e)
    if e.ty is None:
        return raw
    return _to_value(e.ty, raw)


def eval_outputs(outputs, bindings, types=None, functions=None) -> dict:
    return {name: eval_ast(e, bindings, types, functions) for name, e in outputs}


# ------------------------------------------------------------ binding specs
def parse_binding(spec: str, base_dir: Path | str = ".") -> tuple[str, object]:
    """``name=2.5``, ``name=true`` or ``name=@file.csv`` (row-major CSV)."""
    if "=" not in spec:
        raise BindingError(f"binding {spec!r} is not of the form name=value")
    name, text = spec.split("=", 1)
    name, text = name.strip(), text.strip()
    if text.startswith("@"):
        path = Path(base_dir) / text[1:]
        try:
            arr = np.loadtxt(path, delimiter=",", ndmin=2)
        except OSError as exc:
            raise BindingError(f"cannot read {path}: {exc}") from None
        return name, arr
    if text in ("true", "false"):
        return name, text == "true"
    try:
        return name, float(text)
    except ValueError:
        raise BindingError(f"binding {name!r}: cannot parse {text!r}") from None


def coerce_bindings(raw: dict, types: dict[str, SemType]) -> dict:
    """Fit CSV-loaded arrays to the declared shapes (vectors as columns or rows)."""
    out = {}
    for name, value in raw.items():
        ty = types.get(name)
        if ty is None:
            raise BindingError(f"binding for unknown input {name!r}")
        if isinstance(value, np.ndarray):
            if ty.kind == "vector" and value.size == ty.shape[0] and 1 in value.shape:
                value = value.reshape(-1)
            elif ty.kind in ("int", "real") and value.size == 1:
                value = float(value.reshape(()))
            elif ty.kind == "matrix" and value.shape != ty.shape:
                raise BindingError(f"input {name!r} expects {ty}, got shape {value.shape}")
        if ty.kind == "int" and not isinstance(value, bool):
            if float(value) != int(value):
                raise BindingError(f"input {name!r} expects int, got {value}")
            value = int(value)
        out[name] = value
    return out


def random_bindings(inputs, rng, low=-2.0, high=2.0) -> dict:
    """Random Values for an input layout; ints in [-3, 3]."""
    out = {}
    for name, ty in inputs:
        if ty.kind == "bool":
            out[name] = bool(rng.integers(0, 2))
        elif ty.kind == "int":
            out[name] = int(rng.integers(-3, 4))
        elif ty.kind == "real":
            out[name] = float(rng.uniform(low, high))
        else:
            out[name] = rng.uniform(low, high, size=ty.shape)
    return out


def format_value(v) -> str:
    """Stable text form; reals with 17 significant digits."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return _fmt(v)
    arr = np.asarray(v)
    if arr.ndim == 1:
        return "[" + ", ".join(_fmt(x) for x in arr) + "]"
    return "[" + ", ".join("[" + ", ".join(_fmt(x) for x in row) + "]" for row in arr) + "]"


def _fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")
