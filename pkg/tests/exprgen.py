"""Random well-typed expressions for property tests.

Trees are built type-directed, so every draw type-checks by construction;
the generator still runs ``infer`` so a generator bug surfaces loudly.
"""
from __future__ import annotations

import numpy as np

from formulac.semtypes import REAL, SemType, matrix, vector
from formulac.syntax import BinOp, Call, Cmp, Cond, Expr, Neg, Project, Real, Var

ELEMENTWISE = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs")


class ExprGen:
    def __init__(self, seed, max_depth=6, max_dim=4):
        self.rng = np.random.default_rng(seed)
        self.max_depth = max_depth
        self.max_dim = max_dim
        self.inputs: dict[str, SemType] = {}

    def _choice(self, items):
        return items[int(self.rng.integers(len(items)))]

    def _dim(self):
        return int(self.rng.integers(1, self.max_dim + 1))

    def var(self, ty: SemType) -> Expr:
        # up to two distinct inputs per type keeps sharing (and CSE) interesting
        tag = {"real": "s", "vector": "v", "matrix": "m"}[ty.kind]
        name = tag + "".join(map(str, ty.shape)) + "_" + str(int(self.rng.integers(2)))
        self.inputs[name] = ty
        return Var(name)

    def leaf(self, ty):
        if ty.kind == "real" and self.rng.random() < 0.3:
            v = round(float(self.rng.uniform(-3, 3)), 2)
            # parser-shaped: a negative literal is a negation node
            return Neg(Real(-v)) if v < 0 else Real(v)
        return self.var(ty)

    def expr(self, ty: SemType, depth: int | None = None) -> Expr:
        depth = self.max_depth if depth is None else depth
        if depth <= 1 or self.rng.random() < 0.15:
            return self.leaf(ty)
        d = depth - 1
        if ty.kind == "real":
            return self._real(d)
        if ty.kind == "vector":
            return self._vector(ty.shape[0], d)
        return self._matrix(*ty.shape, d)

    def _real(self, d):
        r = self.rng.random()
        if r < 0.3:
            return BinOp(self._choice("+-*/"), self.expr(REAL, d), self.expr(REAL, d))
        if r < 0.45:
            return Call(self._choice(ELEMENTWISE), self.expr(REAL, d))
        if r < 0.55:
            shape = self._choice([vector(self._dim()), matrix(self._dim(), self._dim())])
            return Expr("sum", (self.expr(shape, d),))
        if r < 0.62:
            return Expr("binop", (self.expr(REAL, d), Expr("int", value=int(self.rng.integers(0, 4)))), "^")
        if r < 0.68:
            return Neg(self.expr(REAL, d))
        if r < 0.75:
            return Call(self._choice(("min", "max")), self.expr(REAL, d), self.expr(REAL, d))
        if r < 0.83:
            c = Cmp(self._choice(("<", "<=", ">", ">=", "==", "!=")), self.expr(REAL, d - 1),
                    self.expr(REAL, d - 1))
            return Cond(c, self.expr(REAL, d), self.expr(REAL, d))
        if r < 0.9:
            return Expr("inverse", (self.expr(REAL, d),))
        # quadratic form f^T * A * f, a matrix[1,1] read back through sum
        n = self._dim()
        f = self.expr(vector(n), d - 1)
        q = BinOp("*", BinOp("*", Expr("transpose", (f,)), self.expr(matrix(n, n), d - 1)), f)
        return Expr("sum", (q,))

    def _vector(self, n, d):
        ty = vector(n)
        r = self.rng.random()
        if r < 0.25:
            return BinOp(self._choice("+-"), self.expr(ty, d), self.expr(ty, d))
        if r < 0.4:
            s, v = self.expr(REAL, d), self.expr(ty, d)
            op = self._choice("+-*/")
            return BinOp(op, v, s) if op == "/" or self.rng.random() < 0.5 else BinOp(op, s, v)
        if r < 0.55 and n > 1:
            k = self._dim()
            return BinOp("*", self.expr(matrix(n, k), d), self.expr(vector(k), d))
        if r < 0.65:
            return Call(self._choice(ELEMENTWISE), self.expr(ty, d))
        if r < 0.72 and n == 3:
            return Expr("cross", (self.expr(ty, d), self.expr(ty, d)))
        if r < 0.8:
            return Call(self._choice(("emul", "min", "max")), self.expr(ty, d), self.expr(ty, d))
        if r < 0.87:
            return Neg(self.expr(ty, d))
        if r < 0.93:
            return Expr("binop", (self.expr(ty, d), Expr("int", value=2)), "^")
        c = Cmp("<", self.expr(REAL, d - 1), self.expr(REAL, d - 1))
        return Cond(c, self.expr(ty, d), self.expr(ty, d))

    def _matrix(self, m, n, d):
        ty = matrix(m, n)
        r = self.rng.random()
        if r < 0.25:
            return BinOp(self._choice("+-"), self.expr(ty, d), self.expr(ty, d))
        if r < 0.4:
            s, a = self.expr(REAL, d), self.expr(ty, d)
            return BinOp("*", s, a) if self.rng.random() < 0.5 else BinOp(self._choice("+-"), a, s)
        if r < 0.6:
            k = self._dim()
            return BinOp("*", self.expr(matrix(m, k), d), self.expr(matrix(k, n), d))
        if r < 0.7:
            return Expr("transpose", (self.expr(matrix(n, m), d),))
        if r < 0.78 and m == n:
            return Expr("inverse", (self.expr(ty, min(d, 2)),))
        if r < 0.88:
            return Call(self._choice(ELEMENTWISE), self.expr(ty, d))
        return Neg(self.expr(ty, d))

    def project(self, ty: SemType | None = None) -> Project:
        """A one-output project over the inputs the draw happened to use."""
        self.inputs = {}
        if ty is None:
            ty = self._choice([REAL, vector(self._dim()), matrix(self._dim(), self._dim())])
        e = self.expr(ty)
        return Project(tuple(sorted(self.inputs.items())), (), (("r", e),))


def corpus(count=500, seed=2024, max_depth=6):
    """``count`` deterministic random projects."""
    gen = ExprGen(seed, max_depth=max_depth)
    return [gen.project() for _ in range(count)]
