"""Lowering of typed expressions to straight-line scalar tapes.

A tape is a flat list of scalar instructions over a slot file.  Vectors and
matrices exist only in the slot layout of inputs and outputs; every opcode
reads and writes scalars, and no opcode transfers control.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property

import numpy as np

from . import linalg
from .errors import LoweringError, UnrollBudgetError
from .semtypes import SemType, parse_type
from .syntax import ELEMENTWISE, Expr

UNROLL_BUDGET = 1_000_000
TAPE_FORMAT_VERSION = 1


class Op(IntEnum):
    CONST = 0
    COPY = 1
    ADD = 2
    SUB = 3
    MUL = 4
    DIV = 5
    NEG = 6
    MIN = 7
    MAX = 8
    SIN = 9
    COS = 10
    TAN = 11
    EXP = 12
    LOG = 13
    SQRT = 14
    ABS = 15
    SIGN = 16
    SELECT = 17
    LT = 18
    LE = 19
    EQ = 20
    NE = 21
    GE = 22
    GT = 23
    AND = 24
    OR = 25
    NOT = 26


ARITY = {Op.CONST: 0, Op.SELECT: 3}
for _op in (Op.COPY, Op.NEG, Op.SIN, Op.COS, Op.TAN, Op.EXP, Op.LOG, Op.SQRT,
            Op.ABS, Op.SIGN, Op.NOT):
    ARITY[_op] = 1
for _op in Op:
    ARITY.setdefault(_op, 2)

# Operand order is irrelevant to the result bits.  MIN/MAX are excluded: with
# signed zeros and NaN, b<a?b:a is not symmetric.
COMMUTATIVE = frozenset({Op.ADD, Op.MUL, Op.EQ, Op.NE, Op.AND, Op.OR})
ARITHMETIC = frozenset({Op.ADD, Op.SUB, Op.MUL, Op.DIV, Op.NEG})

_CALL_OPS = {name: Op[name.upper()] for name in ELEMENTWISE}
_CMP_OPS = {"<": Op.LT, "<=": Op.LE, "==": Op.EQ, "!=": Op.NE, ">=": Op.GE, ">": Op.GT}


@dataclass(frozen=True)
class Instr:
    dest: int
    op: Op
    args: tuple[int, ...]


@dataclass(frozen=True)
class Port:
    """Name, type and row-major slot list of one input or output."""
    name: str
    type: SemType
    slots: tuple[int, ...]


@dataclass(frozen=True)
class Guard:
    """Singularity check for one matrix inverse, evaluated after the tape runs."""
    det: int
    operands: tuple[int, ...]
    results: tuple[int, ...]


@dataclass(frozen=True)
class Tape:
    n_slots: int
    inputs: tuple[Port, ...]
    outputs: tuple[Port, ...]
    consts: tuple[tuple[int, float], ...]
    instrs: tuple[Instr, ...]
    guards: tuple[Guard, ...] = ()

    @property
    def n_input_slots(self) -> int:
        return sum(len(p.slots) for p in self.inputs)

    def count(self, *ops) -> int:
        return sum(1 for i in self.instrs if i.op in ops)

    @property
    def arithmetic_count(self) -> int:
        return self.count(*ARITHMETIC)

    @cached_property
    def arrays(self):
        """Flat numpy encoding consumed by the VM kernel."""
        code = np.zeros((len(self.instrs), 5), dtype=np.int64)
        for row, ins in zip(code, self.instrs):
            row[0] = ins.op
            row[1] = ins.dest
            row[2:2 + len(ins.args)] = ins.args
        cslots = np.array([s for s, _ in self.consts], dtype=np.int64)
        cvals = np.array([v for _, v in self.consts], dtype=np.float64)
        gdet = np.array([g.det for g in self.guards], dtype=np.int64)
        gptr = np.zeros(len(self.guards) + 1, dtype=np.int64)
        gptr[1:] = np.cumsum([len(g.operands) for g in self.guards])
        gops = np.array([s for g in self.guards for s in g.operands], dtype=np.int64)
        return code, cslots, cvals, gdet, gptr, gops


# ------------------------------------------------------------------ lowering
class _Builder:
    def __init__(self, budget):
        self.n_slots = 0
        self.instrs: list[Instr] = []
        self.consts: dict[bytes, int] = {}
        self.const_values: list[tuple[int, float]] = []
        self.guards: list[Guard] = []
        self.budget = budget

    def new_slot(self) -> int:
        self.n_slots += 1
        return self.n_slots - 1

    def const(self, v: float) -> Sym:
        key = struct.pack("<d", float(v))
        slot = self.consts.get(key)
        if slot is None:
            slot = self.consts[key] = self.new_slot()
            self.const_values.append((slot, float(v)))
        return Sym(self, slot)

    def emit(self, op: Op, *args: Sym) -> Sym:
        if len(self.instrs) >= self.budget:
            raise UnrollBudgetError(f"unroll budget exceeded ({self.budget} instructions)")
        dest = self.new_slot()
        self.instrs.append(Instr(dest, op, tuple(a.slot for a in args)))
        return Sym(self, dest)


class Sym:
    """A scalar tape value; arithmetic on it appends instructions."""

    __slots__ = ("b", "slot")

    def __init__(self, builder, slot):
        self.b = builder
        self.slot = slot

    def _lift(self, other):
        return other if isinstance(other, Sym) else self.b.const(other)

    def __add__(self, o):
        return self.b.emit(Op.ADD, self, self._lift(o))

    def __radd__(self, o):
        return self.b.emit(Op.ADD, self._lift(o), self)

    def __sub__(self, o):
        return self.b.emit(Op.SUB, self, self._lift(o))

    def __rsub__(self, o):
        return self.b.emit(Op.SUB, self._lift(o), self)

    def __mul__(self, o):
        return self.b.emit(Op.MUL, self, self._lift(o))

    def __rmul__(self, o):
        return self.b.emit(Op.MUL, self._lift(o), self)

    def __truediv__(self, o):
        return self.b.emit(Op.DIV, self, self._lift(o))

    def __rtruediv__(self, o):
        return self.b.emit(Op.DIV, self._lift(o), self)

    def __neg__(self):
        return self.b.emit(Op.NEG, self)


def _flatten(v):
    if isinstance(v, Sym):
        return [v]
    if v and isinstance(v[0], list):
        return [x for row in v for x in row]
    return list(v)


def _shape_of(v):
    if isinstance(v, Sym):
        return ()
    if isinstance(v[0], list):
        return (len(v), len(v[0]))
    return (len(v),)


def _map(v, fn):
    if isinstance(v, Sym):
        return fn(v)
    if isinstance(v[0], list):
        return [[fn(x) for x in row] for row in v]
    return [fn(x) for x in v]


def _zip(a, b, fn):
    """Componentwise combination with scalar broadcast on either side."""
    if isinstance(a, Sym) and isinstance(b, Sym):
        return fn(a, b)
    if isinstance(a, Sym):
        return _map(b, lambda y: fn(a, y))
    if isinstance(b, Sym):
        return _map(a, lambda x: fn(x, b))
    if isinstance(a[0], list):
        return [[fn(x, y) for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]
    return [fn(x, y) for x, y in zip(a, b)]


def _scalar(v):
    while not isinstance(v, Sym):
        v = v[0]
    return v


def _reshape(v, ty: SemType):
    if ty.kind in ("bool", "int", "real"):
        return _scalar(v)
    return v


def _matmul(a, b):
    m, k, n = len(a), len(b), len(b[0])
    out = []
    for i in range(m):
        row = []
        for j in range(n):
            acc = a[i][0] * b[0][j]
            for p in range(1, k):
                acc = acc + a[i][p] * b[p][j]
            row.append(acc)
        out.append(row)
    return out


def _as_matrix(v):
    if isinstance(v[0], list):
        return v
    return [[x] for x in v]  # vectors are columns


class _Lowerer:
    def __init__(self, builder: _Builder, env: dict):
        self.b = builder
        self.env = env

    def lower(self, e: Expr):
        k = e.kind
        b = self.b
        if k in ("int", "real"):
            return b.const(float(e.value))
        if k == "bool":
            return b.const(1.0 if e.value else 0.0)
        if k == "var":
            try:
                return self.env[e.value]
            except KeyError:
                raise LoweringError(f"unbound variable {e.value!r} in lowering", e.span) from None
        if k in ("delta", "deriv", "apply") or (k == "call" and e.value not in _CALL_OPS
                                                 and e.value not in ("min", "max", "emul")):
            raise LoweringError(f"{k} node reached code generation (pipeline order bug)", e.span)

        args = [self.lower(a) for a in e.args] if k != "binop" or e.value != "^" \
            else [self.lower(e.args[0])]

        if k == "neg":
            return _map(args[0], lambda x: b.emit(Op.NEG, x))
        if k == "binop":
            return self.binop(e, args)
        if k == "cmp":
            op = _CMP_OPS[e.value]
            return b.emit(op, _scalar(args[0]), _scalar(args[1]))
        if k == "and":
            return b.emit(Op.AND, args[0], args[1])
        if k == "or":
            return b.emit(Op.OR, args[0], args[1])
        if k == "not":
            return b.emit(Op.NOT, args[0])
        if k == "call":
            if e.value in _CALL_OPS:
                op = _CALL_OPS[e.value]
                return _reshape(_map(args[0], lambda x: b.emit(op, x)), e.ty)
            op = {"min": Op.MIN, "max": Op.MAX, "emul": Op.MUL}[e.value]
            return _zip(args[0], args[1], lambda x, y: b.emit(op, x, y))
        if k == "transpose":
            v = args[0]
            if isinstance(v, Sym):
                return v
            if not isinstance(v[0], list):
                return [list(v)]
            return [list(col) for col in zip(*v)]
        if k == "inverse":
            v = args[0]
            if isinstance(v, Sym):
                return 1.0 / v
            inv, det = linalg.inverse(v, lambda x: 1.0 / x)
            b.guards.append(Guard(det.slot, tuple(x.slot for x in _flatten(v)),
                                  tuple(x.slot for x in _flatten(inv))))
            return inv
        if k == "cross":
            return linalg.cross(args[0], args[1])
        if k == "sum":
            items = _flatten(args[0])
            acc = items[0]
            for x in items[1:]:
                acc = acc + x
            return acc
        if k == "cond":
            c = _scalar(args[0])
            return _zip(args[1], args[2], lambda x, y: b.emit(Op.SELECT, c, x, y))
        raise LoweringError(f"cannot lower {k} node", e.span)

    def binop(self, e: Expr, args):
        op = e.value
        if op == "^":
            n = e.args[1].value
            if n == 0:
                return _map(args[0], lambda x: self.b.const(1.0))

            def power(x):
                acc = x
                for _ in range(n - 1):
                    acc = acc * x
                return acc
            return _map(args[0], power)
        lhs, rhs = args
        if op == "+":
            return _zip(lhs, rhs, lambda x, y: x + y)
        if op == "-":
            return _zip(lhs, rhs, lambda x, y: x - y)
        if op == "/":
            return _zip(lhs, rhs, lambda x, y: x / y)
        # '*': scalar broadcast, componentwise vectors, or a matrix product
        ls, rs = _shape_of(lhs), _shape_of(rhs)
        if not ls or not rs or (len(ls) == 1 and ls == rs):
            return _zip(lhs, rhs, lambda x, y: x * y)
        prod = _matmul(_as_matrix(lhs), _as_matrix(rhs))
        if e.ty.kind == "vector":
            return [row[0] for row in prod]
        return prod


def lower(outputs, inputs, budget: int = UNROLL_BUDGET) -> Tape:
    """Lower typed expressions to an unoptimized tape.

    ``outputs`` is either one typed expression (named ``result``) or a
    sequence of ``(name, typed_expr)``.  ``inputs`` is the ordered
    ``(name, SemType)`` layout; input slots are allocated first, row-major.
    """
    if isinstance(outputs, Expr):
        outputs = [("result", outputs)]
    b = _Builder(budget)
    env, in_ports = {}, []
    for name, ty in inputs:
        if ty.kind in ("bool", "int", "real"):
            v = Sym(b, b.new_slot())
        elif ty.kind == "vector":
            v = [Sym(b, b.new_slot()) for _ in range(ty.shape[0])]
        elif ty.kind == "matrix":
            v = [[Sym(b, b.new_slot()) for _ in range(ty.shape[1])] for _ in range(ty.shape[0])]
        else:
            raise LoweringError(f"input {name!r} has non-value type {ty}")
        env[name] = v
        in_ports.append(Port(name, ty, tuple(x.slot for x in _flatten(v))))
    lw = _Lowerer(b, env)
    out_ports = []
    for name, e in outputs:
        if e.ty is None:
            raise LoweringError(f"output {name!r} is not type-annotated")
        v = lw.lower(e)
        out_ports.append(Port(name, e.ty, tuple(x.slot for x in _flatten(v))))
    return Tape(b.n_slots, tuple(in_ports), tuple(out_ports), tuple(b.const_values),
                tuple(b.instrs), tuple(b.guards))


# ----------------------------------------------------------------- optimizer
def optimize(t: Tape) -> Tape:
    """Constant folding, value-numbered CSE, dead-code elimination, compaction.

    Surviving instructions keep their operand order, so outputs are bitwise
    identical to those of the input tape.
    """
    from .runtime import apply_op

    const_val = dict(t.consts)
    const_by_bits = {struct.pack("<d", v): s for s, v in t.consts}
    next_slot = t.n_slots
    alias: dict[int, int] = {}

    def rep(s):
        return alias.get(s, s)

    def intern(v):
        nonlocal next_slot
        key = struct.pack("<d", v)
        s = const_by_bits.get(key)
        if s is None:
            s = const_by_bits[key] = next_slot
            next_slot += 1
            const_val[s] = v
        return s

    table: dict[tuple, int] = {}
    kept: list[Instr] = []
    for ins in t.instrs:
        args = tuple(rep(a) for a in ins.args)
        if ins.op == Op.COPY:
            alias[ins.dest] = args[0]
            continue
        if all(a in const_val for a in args):
            padded = [const_val[a] for a in args] + [0.0] * (3 - len(args))
            alias[ins.dest] = intern(float(apply_op(int(ins.op), *padded)))
            continue
        if ins.op == Op.SELECT and args[0] in const_val:
            alias[ins.dest] = args[1] if const_val[args[0]] != 0.0 else args[2]
            continue
        key = (ins.op, tuple(sorted(args)) if ins.op in COMMUTATIVE else args)
        if key in table:
            alias[ins.dest] = table[key]
            continue
        table[key] = ins.dest
        kept.append(Instr(ins.dest, ins.op, args))

    outputs = [Port(p.name, p.type, tuple(rep(s) for s in p.slots)) for p in t.outputs]

    live = {s for p in outputs for s in p.slots}
    needed = []
    for ins in reversed(kept):
        if ins.dest in live:
            needed.append(ins)
            live.update(ins.args)
    needed.reverse()

    guards = []
    for g in t.guards:
        results = tuple(rep(s) for s in g.results)
        if any(s in live for s in results):
            guards.append(Guard(rep(g.det), tuple(rep(s) for s in g.operands), results))
            live.add(rep(g.det))
            live.update(rep(s) for s in g.operands)

    # compaction: inputs, then constants, then instruction results
    remap = {}
    for p in t.inputs:
        for s in p.slots:
            remap[s] = len(remap)
    for s in sorted(s for s in const_val if s in live):
        remap[s] = len(remap)
    for ins in needed:
        remap[ins.dest] = len(remap)

    def m(s):
        return remap[s]

    return Tape(
        n_slots=len(remap),
        inputs=t.inputs,
        outputs=tuple(Port(p.name, p.type, tuple(map(m, p.slots))) for p in outputs),
        consts=tuple(sorted((m(s), v) for s, v in const_val.items() if s in live)),
        instrs=tuple(Instr(m(i.dest), i.op, tuple(map(m, i.args))) for i in needed),
        guards=tuple(Guard(m(g.det), tuple(map(m, g.operands)), tuple(map(m, g.results)))
                     for g in guards),
    )


def check_tape(t: Tape, optimized: bool = False) -> list[str]:
    """Return a list of invariant violations (empty when the tape is well formed)."""
    problems = []
    input_slots = {s for p in t.inputs for s in p.slots}
    defined = set(input_slots)
    for s, _ in t.consts:
        if s in defined:
            problems.append(f"constant slot {s} assigned twice")
        defined.add(s)
    for n, ins in enumerate(t.instrs):
        if len(ins.args) != ARITY[ins.op]:
            problems.append(f"instr {n}: arity {len(ins.args)} for {ins.op.name}")
        for a in ins.args:
            if a not in defined:
                problems.append(f"instr {n}: operand slot {a} read before written")
        if ins.dest in defined:
            what = "input" if ins.dest in input_slots else "already assigned"
            problems.append(f"instr {n}: slot {ins.dest} {what}")
        if not 0 <= ins.dest < t.n_slots:
            problems.append(f"instr {n}: slot {ins.dest} out of range")
        defined.add(ins.dest)
    for p in t.outputs:
        for s in p.slots:
            if s not in defined:
                problems.append(f"output {p.name}: slot {s} never written")
    if optimized:
        seen = set()
        for ins in t.instrs:
            key = (ins.op, tuple(sorted(ins.args)) if ins.op in COMMUTATIVE else ins.args)
            if key in seen:
                problems.append(f"duplicate instruction {ins.op.name}{ins.args}")
            seen.add(key)
        live = {s for p in t.outputs for s in p.slots}
        for g in t.guards:
            live.add(g.det)
        dead = 0
        for ins in reversed(t.instrs):
            if ins.dest in live:
                live.update(ins.args)
            else:
                dead += 1
        if dead:
            problems.append(f"{dead} dead instruction(s)")
    return problems


def dead_instruction_count(t: Tape) -> int:
    live = {s for p in t.outputs for s in p.slots}
    dead = 0
    for ins in reversed(t.instrs):
        if ins.dest in live:
            live.update(ins.args)
        else:
            dead += 1
    return dead


def duplicate_instruction_count(t: Tape) -> int:
    keys = [(i.op, tuple(sorted(i.args)) if i.op in COMMUTATIVE else i.args) for i in t.instrs]
    return len(keys) - len(set(keys))


# ------------------------------------------------------------------ listings
_INFIX = {Op.ADD: ("+", 4), Op.SUB: ("-", 4), Op.MUL: ("*", 5), Op.DIV: ("/", 5),
          Op.LT: ("<", 3), Op.LE: ("<=", 3), Op.EQ: ("==", 3), Op.NE: ("!=", 3),
          Op.GE: (">=", 3), Op.GT: (">", 3), Op.AND: ("&&", 2), Op.OR: ("||", 1)}
_PREFIX = {Op.NEG: "-", Op.NOT: "!"}
_ATOM = 8


def _format_const(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15 and repr(v) != "-0.0":
        return str(int(v))
    return repr(v)


def _element(name: str, ty: SemType, k: int) -> str:
    if ty.kind == "vector":
        return f"{name}[{k}]"
    if ty.kind == "matrix":
        i, j = divmod(k, ty.shape[1])
        return f"{name}[{i}, {j}]"
    return name


def emit_source(t: Tape, names: dict[str, str] | None = None) -> str:
    """C-like listing: one assignment per materialized value, no control flow.

    Inputs then outputs are numbered ``var_0, var_1, ...`` in declaration
    order (``names`` may override any of them).  Temporaries used once are
    fused into their consumer; values used more than once get their own
    ``var_K``.  The output is deterministic.
    """
    names = dict(names or {})
    counter = 0

    def var_name(port):
        nonlocal counter
        n = names.get(port.name)
        if n is None:
            n = f"var_{counter}"
        counter += 1
        return n

    text: dict[int, tuple[str, int]] = {}
    for p in t.inputs:
        base = var_name(p)
        for k, s in enumerate(p.slots):
            text[s] = (_element(base, p.type, k), _ATOM)
    for s, v in t.consts:
        text[s] = (_format_const(v), 6 if repr(v).startswith("-") else _ATOM)

    out_elems = []
    out_targets: dict[int, str] = {}
    for p in t.outputs:
        base = var_name(p)
        for k, s in enumerate(p.slots):
            target = _element(base, p.type, k)
            out_elems.append((target, s))
            out_targets.setdefault(s, target)

    uses: dict[int, int] = {}
    for ins in t.instrs:
        for a in ins.args:
            uses[a] = uses.get(a, 0) + 1

    def wrap(s, minimum):
        expr, lvl = text[s]
        return expr if lvl >= minimum else f"({expr})"

    lines = []
    for ins in t.instrs:
        op = ins.op
        if op in _INFIX:
            sym, lvl = _INFIX[op]
            expr = f"{wrap(ins.args[0], lvl)} {sym} {wrap(ins.args[1], lvl + 1)}"
        elif op in _PREFIX:
            lvl = 6
            expr = _PREFIX[op] + wrap(ins.args[0], lvl + 1)
        elif op == Op.COPY:
            expr, lvl = text[ins.args[0]]
        else:
            lvl = _ATOM
            expr = f"{op.name.lower()}({', '.join(text[a][0] for a in ins.args)})"
        target = out_targets.get(ins.dest)
        if target is None and uses.get(ins.dest, 0) > 1:
            target = f"var_{counter}"
            counter += 1
        if target is None:
            text[ins.dest] = (expr, lvl)
        else:
            lines.append(f"{target} = {expr};")
            text[ins.dest] = (target, _ATOM)
    # output elements that alias an input, a constant or another output element
    for target, s in out_elems:
        if text[s][0] != target:
            lines.append(f"{target} = {text[s][0]};")
    return "\n".join(lines) + ("\n" if lines else "")


# ------------------------------------------------------------ serialization
def dump_tape(t: Tape) -> str:
    """Versioned, deterministic text form used for golden diffs."""
    out = [f"formulac-tape {TAPE_FORMAT_VERSION}", f"slots {t.n_slots}"]
    for p in t.inputs:
        out.append(f"input {p.name} {p.type} {' '.join(map(str, p.slots))}")
    for p in t.outputs:
        out.append(f"output {p.name} {p.type} {' '.join(map(str, p.slots))}")
    for s, v in t.consts:
        out.append(f"const {s} {v!r}")
    for g in t.guards:
        out.append(f"guard {g.det} {' '.join(map(str, g.operands))} | {' '.join(map(str, g.results))}")
    out.append(f"instrs {len(t.instrs)}")
    for ins in t.instrs:
        out.append(" ".join([str(ins.dest), ins.op.name.lower(), *map(str, ins.args)]))
    return "\n".join(out) + "\n"


def load_tape(text: str) -> Tape:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    head = lines[0].split()
    if head[0] != "formulac-tape" or int(head[1]) != TAPE_FORMAT_VERSION:
        raise ValueError("not a formulac tape (or unsupported version)")
    n_slots = int(lines[1].split()[1])
    inputs, outputs, consts, guards, instrs = [], [], [], [], []
    i = 2
    while not lines[i].startswith("instrs "):
        kind, rest = lines[i].split(" ", 1)
        if kind in ("input", "output"):
            name, ty, *slots = rest.split()
            port = Port(name, parse_type(ty), tuple(map(int, slots)))
            (inputs if kind == "input" else outputs).append(port)
        elif kind == "const":
            s, v = rest.split()
            consts.append((int(s), float(v)))
        elif kind == "guard":
            left, right = rest.split("|")
            det, *ops = map(int, left.split())
            guards.append(Guard(det, tuple(ops), tuple(map(int, right.split()))))
        else:
            raise ValueError(f"bad tape line: {lines[i]!r}")
        i += 1
    for ln in lines[i + 1:]:
        dest, op, *args = ln.split()
        instrs.append(Instr(int(dest), Op[op.upper()], tuple(map(int, args))))
    return Tape(n_slots, tuple(inputs), tuple(outputs), tuple(consts), tuple(instrs), tuple(guards))
