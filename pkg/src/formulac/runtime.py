"""Tape execution.

The kernel is a numba nopython interpreter over the flat encoding in
``Tape.arrays``: it reads and writes a caller-owned float64 slot buffer and
allocates nothing.  One shared immutable tape may run on many threads as
long as each thread owns its runner (the kernel releases the GIL).
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .codegen import Op, Tape
from .errors import BindingError, NonFiniteError, SingularMatrixError
from .semtypes import SemType

SINGULAR_RTOL = 1e-12

_ADD, _SUB, _MUL, _DIV, _NEG = int(Op.ADD), int(Op.SUB), int(Op.MUL), int(Op.DIV), int(Op.NEG)
_MIN, _MAX, _SIN, _COS, _TAN = int(Op.MIN), int(Op.MAX), int(Op.SIN), int(Op.COS), int(Op.TAN)
_EXP, _LOG, _SQRT, _ABS, _SIGN = int(Op.EXP), int(Op.LOG), int(Op.SQRT), int(Op.ABS), int(Op.SIGN)
_SELECT, _LT, _LE, _EQ, _NE = int(Op.SELECT), int(Op.LT), int(Op.LE), int(Op.EQ), int(Op.NE)
_GE, _GT, _AND, _OR, _NOT = int(Op.GE), int(Op.GT), int(Op.AND), int(Op.OR), int(Op.NOT)
_COPY = int(Op.COPY)


@njit(cache=True, nogil=True)
def apply_op(op, x, y, z):
    """Scalar semantics of one opcode; also used for constant folding."""
    if op == _ADD:
        return x + y
    if op == _MUL:
        return x * y
    if op == _SUB:
        return x - y
    if op == _DIV:
        if y == 0.0:  # numba raises on float division by zero; IEEE says inf/nan
            if x != x or x == 0.0:
                return np.nan
            return math.copysign(np.inf, x) * math.copysign(1.0, y)
        return x / y
    if op == _NEG:
        return -x
    if op == _SELECT:
        return y if x != 0.0 else z
    if op == _SIN:
        return math.sin(x)
    if op == _COS:
        return math.cos(x)
    if op == _EXP:
        return math.exp(x)
    if op == _LOG:
        if x == 0.0:
            return -np.inf
        if x < 0.0:
            return np.nan
        return math.log(x)
    if op == _SQRT:
        if x < 0.0:
            return np.nan
        return math.sqrt(x)
    if op == _TAN:
        return math.tan(x)
    if op == _ABS:
        return abs(x)
    if op == _MIN:
        return y if y < x else x
    if op == _MAX:
        return y if y > x else x
    if op == _SIGN:
        if x > 0.0:
            return 1.0
        if x < 0.0:
            return -1.0
        return x
    if op == _LT:
        return 1.0 if x < y else 0.0
    if op == _LE:
        return 1.0 if x <= y else 0.0
    if op == _EQ:
        return 1.0 if x == y else 0.0
    if op == _NE:
        return 1.0 if x != y else 0.0
    if op == _GE:
        return 1.0 if x >= y else 0.0
    if op == _GT:
        return 1.0 if x > y else 0.0
    if op == _AND:
        return 1.0 if (x != 0.0 and y != 0.0) else 0.0
    if op == _OR:
        return 1.0 if (x != 0.0 or y != 0.0) else 0.0
    if op == _NOT:
        return 1.0 if x == 0.0 else 0.0
    if op == _COPY:
        return x
    return np.nan


@njit(cache=True, nogil=True)
def execute(code, cslots, cvals, gdet, gptr, gops, packed, scratch):
    """Run a tape in place.  Returns -1, or the index of the first tripped guard."""
    for i in range(packed.shape[0]):
        scratch[i] = packed[i]
    for i in range(cslots.shape[0]):
        scratch[cslots[i]] = cvals[i]
    for i in range(code.shape[0]):
        scratch[code[i, 1]] = apply_op(code[i, 0], scratch[code[i, 2]],
                                       scratch[code[i, 3]], scratch[code[i, 4]])
    for g in range(gdet.shape[0]):
        scale = 0.0
        for j in range(gptr[g], gptr[g + 1]):
            a = abs(scratch[gops[j]])
            if a > scale:
                scale = a
        if abs(scratch[gdet[g]]) < SINGULAR_RTOL * (1.0 + scale):
            return g
    return -1


@njit(cache=True, nogil=True)
def gather(scratch, slots, out):
    for i in range(slots.shape[0]):
        out[i] = scratch[slots[i]]


_EMPTY = np.zeros(0)


def _pack_value(name, ty: SemType, value, out):
    if ty.kind == "bool":
        if not isinstance(value, (bool, np.bool_)):
            raise BindingError(f"input {name!r} expects bool, got {value!r}")
        out[0] = 1.0 if value else 0.0
        return
    if ty.kind in ("int", "real"):
        arr = np.asarray(value, dtype=float)
        if arr.size != 1 or arr.ndim > 2:
            raise BindingError(f"input {name!r} expects {ty}, got shape {arr.shape}")
        x = float(arr.reshape(()))
        if ty.kind == "int" and x != int(x):
            raise BindingError(f"input {name!r} expects int, got {x}")
        out[0] = x
        return
    arr = np.asarray(value, dtype=float)
    if ty.kind == "vector":
        ok = arr.shape in ((ty.shape[0],), (ty.shape[0], 1))
    else:
        ok = arr.shape == ty.shape
    if not ok:
        raise BindingError(f"input {name!r} expects {ty}, got shape {arr.shape}")
    out[:] = arr.reshape(-1)


def pack_inputs(t: Tape, bindings, out=None) -> np.ndarray:
    """Flatten a name->Value mapping into the tape's contiguous input slots."""
    if out is None:
        out = np.empty(t.n_input_slots)
    pos = 0
    for p in t.inputs:
        if p.name not in bindings:
            raise BindingError(f"input {p.name!r} unbound")
        n = len(p.slots)
        _pack_value(p.name, p.type, bindings[p.name], out[pos:pos + n])
        pos += n
    return out


def unpack_value(ty: SemType, flat):
    if ty.kind == "bool":
        return bool(flat[0] != 0.0)
    if ty.kind == "int":
        x = float(flat[0])
        return int(x) if math.isfinite(x) else x
    if ty.kind == "real":
        return float(flat[0])
    return np.array(flat, dtype=float).reshape(ty.shape)


class TapeRunner:
    """Owns one slot buffer for a shared tape; ``run`` is allocation-free."""

    def __init__(self, tape: Tape, check_finite: bool = False):
        self.tape = tape
        self.check_finite = check_finite
        self.arrays = tape.arrays
        self.scratch = np.zeros(max(tape.n_slots, 1))
        self.out_slots = np.array([s for p in tape.outputs for s in p.slots], dtype=np.int64)
        self.out_buffer = np.zeros(len(self.out_slots))
        offsets = np.cumsum([0] + [len(p.slots) for p in tape.outputs])
        self.out_views = {p.name: self.out_buffer[a:b]
                          for p, a, b in zip(tape.outputs, offsets[:-1], offsets[1:])}
        self.packed = np.zeros(tape.n_input_slots)

    def load(self, bindings):
        pack_inputs(self.tape, bindings, self.packed)

    def run(self, packed=None):
        """Execute once; results land in ``self.out_buffer``."""
        code, cslots, cvals, gdet, gptr, gops = self.arrays
        status = execute(code, cslots, cvals, gdet, gptr, gops,
                         self.packed if packed is None else packed, self.scratch)
        if status >= 0:
            g = self.tape.guards[status]
            raise SingularMatrixError(
                f"singular matrix: |det| = {abs(self.scratch[g.det]):.3g} below guard threshold")
        gather(self.scratch, self.out_slots, self.out_buffer)
        if self.check_finite and not np.isfinite(self.out_buffer).all():
            raise NonFiniteError("non-finite value in tape output")

    def results(self) -> dict:
        return {p.name: unpack_value(p.type, self.out_views[p.name]) for p in self.tape.outputs}


def eval_tape(t: Tape, bindings, scratch=None, check_finite=False) -> dict:
    """Execute ``t`` on ``bindings`` and return output Values by name.

    Pass a ``TapeRunner`` as ``scratch`` to reuse its slot buffer.
    """
    runner = scratch if isinstance(scratch, TapeRunner) else TapeRunner(t, check_finite)
    if scratch is not None and not isinstance(scratch, TapeRunner):
        if len(scratch) < t.n_slots:
            raise BindingError(f"scratch buffer has {len(scratch)} slots, tape needs {t.n_slots}")
        runner.scratch = scratch
    runner.load(bindings)
    runner.run()
    return runner.results()
