"""Tokenizer and recursive-descent parser for formulas and project files.

Grammar summary (whitespace-insensitive, ``#`` starts a line comment)::

    project   := (decl NEWLINE)*
    decl      := "input" IDENT ":" type
               | "def" IDENT "(" params ")" ["::" type] "=" expr
               | "output" IDENT "=" expr
    expr      := or_e
    or_e      := and_e ("or" and_e)*
    and_e     := cmp_e ("and" cmp_e)*
    cmp_e     := add_e (CMPOP add_e)?
    add_e     := mul_e (("+"|"-") mul_e)*
    mul_e     := post_e (("*"|"/") post_e)*
    post_e    := unary_e ("^" ("T" | "-1" | INT))*
    unary_e   := "-" unary_e | "not" unary_e | atom
    atom      := NUMBER | "true" | "false" | IDENT
               | IDENT "(" args ")" ("(" args ")")* | "(" expr ")"

Note that unary minus binds tighter than ``^``: ``-t^2`` is ``(-t)^2``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from . import semtypes as st
from .errors import DuplicateNameError, ParseError, UnresolvedNameError
from .syntax import (BINARY_BUILTINS, BUILTINS, ELEMENTWISE, KEYWORDS, Expr,
                     FunctionDef, Project)

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<newline>\n)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>::|<=|>=|==|!=|[-+*/^()<>,:=\[\]])
""", re.VERBOSE)

_CMP_OPS = ("<", "<=", "==", "!=", ">=", ">")


@dataclass(frozen=True)
class Token:
    kind: str  # number | ident | op | newline | eof
    text: str
    line: int
    col: int

    @property
    def span(self):
        return (self.line, self.col)


def tokenize(text: str, keep_newlines: bool = False) -> list[Token]:
    tokens = []
    pos, line, line_start, depth = 0, 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", (line, col))
        kind = m.lastgroup
        tok = m.group()
        if kind == "newline":
            if keep_newlines and depth == 0:
                tokens.append(Token("newline", "\n", line, col))
            line += 1
            line_start = m.end()
        elif kind in ("number", "ident", "op"):
            if tok == "(":
                depth += 1
            elif tok == ")":
                depth = max(depth - 1, 0)
            tokens.append(Token(kind, tok, line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k=1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def advance(self) -> Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def at(self, text) -> bool:
        t = self.tok
        return t.kind in ("op", "ident") and t.text == text

    def error(self, message, expected=()):
        t = self.tok
        found = "end of input" if t.kind == "eof" else repr(t.text) if t.kind != "newline" else "end of line"
        raise ParseError(f"{message}, found {found}", t.span, expected)

    def expect(self, text) -> Token:
        if not self.at(text):
            self.error("syntax error", [repr(text)])
        return self.advance()

    def ident(self, what="identifier") -> Token:
        t = self.tok
        if t.kind != "ident" or t.text in KEYWORDS:
            self.error(f"expected {what}", ["IDENT"])
        return self.advance()

    # ---- expressions
    def expr(self) -> Expr:
        return self.or_e()

    def or_e(self):
        left = self.and_e()
        while self.at("or"):
            t = self.advance()
            left = Expr("or", (left, self.and_e()), span=t.span)
        return left

    def and_e(self):
        left = self.cmp_e()
        while self.at("and"):
            t = self.advance()
            left = Expr("and", (left, self.cmp_e()), span=t.span)
        return left

    def cmp_e(self):
        left = self.add_e()
        if self.tok.kind == "op" and self.tok.text in _CMP_OPS:
            t = self.advance()
            left = Expr("cmp", (left, self.add_e()), t.text, span=t.span)
        return left

    def add_e(self):
        left = self.mul_e()
        while self.at("+") or self.at("-"):
            t = self.advance()
            left = Expr("binop", (left, self.mul_e()), t.text, span=t.span)
        return left

    def mul_e(self):
        left = self.post_e()
        while self.at("*") or self.at("/"):
            t = self.advance()
            left = Expr("binop", (left, self.post_e()), t.text, span=t.span)
        return left

    def post_e(self):
        base = self.unary_e()
        while self.at("^"):
            t = self.advance()
            nxt = self.tok
            if nxt.kind == "ident" and nxt.text == "T":
                self.advance()
                base = Expr("transpose", (base,), span=t.span)
            elif self.at("-") and self.peek().kind == "number" and self.peek().text == "1":
                self.advance()
                self.advance()
                base = Expr("inverse", (base,), span=t.span)
            elif nxt.kind == "number" and nxt.text.isdigit():
                self.advance()
                k = Expr("int", value=int(nxt.text), span=nxt.span)
                base = Expr("binop", (base, k), "^", span=t.span)
            else:
                self.error("bad exponent", ["T", "-1", "INT"])
        return base

    def unary_e(self):
        if self.at("-"):
            t = self.advance()
            return Expr("neg", (self.unary_e(),), span=t.span)
        if self.at("not"):
            t = self.advance()
            return Expr("not", (self.unary_e(),), span=t.span)
        return self.atom()

    def atom(self):
        t = self.tok
        if t.kind == "number":
            self.advance()
            if re.fullmatch(r"\d+", t.text):
                return Expr("int", value=int(t.text), span=t.span)
            return Expr("real", value=float(t.text), span=t.span)
        if t.kind == "ident" and t.text in ("true", "false"):
            self.advance()
            return Expr("bool", value=t.text == "true", span=t.span)
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "ident" and t.text not in KEYWORDS:
            self.advance()
            if not self.at("("):
                return Expr("var", value=t.text, span=t.span)
            args = self.arglist()
            node = self.builtin(t, args)
            while self.at("("):
                more = self.arglist()
                node = Expr("apply", (node, *more), span=node.span)
            return node
        self.error("expected expression",
                   ["NUMBER", "IDENT", "'('", "'-'", "'not'", "'true'", "'false'"])

    def arglist(self):
        self.expect("(")
        args = [self.expr()]
        while self.at(","):
            self.advance()
            args.append(self.expr())
        self.expect(")")
        return args

    def builtin(self, t: Token, args) -> Expr:
        name, span = t.text, t.span

        def arity(n):
            if len(args) != n:
                raise ParseError(f"{name} takes {n} argument(s), got {len(args)}", span)

        if name in ELEMENTWISE:
            arity(1)
            return Expr("call", tuple(args), name, span=span)
        if name in BINARY_BUILTINS:
            arity(2)
            return Expr("call", tuple(args), name, span=span)
        if name in ("sum", "delta"):
            arity(1)
            return Expr(name, tuple(args), span=span)
        if name == "cross":
            arity(2)
            return Expr("cross", tuple(args), span=span)
        if name == "cond":
            arity(3)
            return Expr("cond", tuple(args), span=span)
        if name == "D":
            arity(2)
            if args[1].kind != "var":
                raise ParseError("D(expr, var): second argument must be a variable name",
                                 args[1].span or span)
            return Expr("deriv", (args[0],), args[1].value, span=span)
        return Expr("call", tuple(args), name, span=span)

    # ---- projects
    def type_(self) -> st.SemType:
        t = self.tok
        if t.kind == "ident" and t.text in ("bool", "int", "real"):
            self.advance()
            return st.SemType(t.text)
        if t.kind == "ident" and t.text in ("vector", "matrix"):
            self.advance()
            self.expect("[")
            dims = [self.dim()]
            if t.text == "matrix":
                self.expect(",")
                dims.append(self.dim())
            self.expect("]")
            return st.vector(*dims) if t.text == "vector" else st.matrix(*dims)
        self.error("expected type", ["bool", "int", "real", "vector[N]", "matrix[M,N]"])

    def dim(self) -> int:
        t = self.tok
        if t.kind != "number" or not t.text.isdigit() or int(t.text) < 1:
            self.error("expected positive integer dimension", ["INT"])
        self.advance()
        return int(t.text)

    def end_of_decl(self):
        if self.tok.kind == "eof":
            return
        if self.tok.kind != "newline":
            self.error("expected end of declaration", ["NEWLINE"])
        self.advance()

    def project(self):
        inputs, defs, outputs = [], [], []
        while True:
            while self.tok.kind == "newline":
                self.advance()
            if self.tok.kind == "eof":
                break
            kw = self.tok
            if self.at("input"):
                self.advance()
                name = self.ident("input name")
                self.expect(":")
                inputs.append((name, self.type_()))
            elif self.at("def"):
                self.advance()
                name = self.ident("function name")
                self.expect("(")
                params = []
                while True:
                    pname = self.ident("parameter name")
                    self.expect(":")
                    params.append((pname, self.type_()))
                    if not self.at(","):
                        break
                    self.advance()
                self.expect(")")
                ret = None
                if self.at("::"):
                    self.advance()
                    ret = self.type_()
                self.expect("=")
                defs.append((name, params, ret, self.expr(), kw.span))
            elif self.at("output"):
                self.advance()
                name = self.ident("output name")
                self.expect("=")
                outputs.append((name, self.expr()))
            else:
                self.error("expected declaration", ["input", "def", "output"])
            self.end_of_decl()
        return inputs, defs, outputs


def parse_formula(text: str) -> Expr:
    """Parse a single formula. Parsing never consults types."""
    p = _Parser(tokenize(text))
    e = p.expr()
    if p.tok.kind != "eof":
        p.error("unexpected trailing input", ["end of input"])
    return e


def _check_names(e: Expr, scope, defs, span):
    for node in e.walk():
        where = node.span or span
        if node.kind == "var" and node.value not in scope and node.value not in defs:
            raise UnresolvedNameError(f"unresolved identifier {node.value!r}", where)
        if node.kind == "call" and node.value not in BUILTINS and node.value not in defs:
            raise UnresolvedNameError(f"unknown function {node.value!r}", where)
        if node.kind == "deriv" and node.value not in scope:
            raise UnresolvedNameError(
                f"differentiation variable {node.value!r} is not an input or parameter", where)


def parse_project(text: str) -> Project:
    """Parse a project file and check naming invariants.

    Raises ``DuplicateNameError`` for clashing names and ``UnresolvedNameError``
    for identifiers that do not refer to an input, a parameter or an earlier
    definition.
    """
    p = _Parser(tokenize(text, keep_newlines=True))
    inputs, raw_defs, outputs = p.project()

    seen = {}

    def claim(name, what, span=None):
        if name in BUILTINS:
            raise DuplicateNameError(f"{what} {name!r} shadows a builtin", span)
        if name in seen:
            raise DuplicateNameError(f"duplicate name {name!r} (already declared as {seen[name]})", span)
        seen[name] = what

    for name, _ in inputs:
        claim(name.text, "input", name.span)
    scope = {name.text for name, _ in inputs}

    defs, def_names = [], set()
    for name, params, ret, body, span in raw_defs:
        claim(name.text, "definition", name.span)
        pnames = [pn.text for pn, _ in params]
        for pn, _ in params:
            if pnames.count(pn.text) > 1:
                raise DuplicateNameError(f"duplicate parameter {pn.text!r} in {name.text}", pn.span)
            if pn.text in BUILTINS:
                raise DuplicateNameError(f"parameter {pn.text!r} shadows a builtin", pn.span)
        # a definition may not refer to itself: no recursion
        _check_names(body, scope | set(pnames), def_names, span)
        defs.append(FunctionDef(name.text, tuple((pn.text, t) for pn, t in params), body, ret, span))
        def_names.add(name.text)

    outs = []
    for name, e in outputs:
        claim(name.text, "output", name.span)
        _check_names(e, scope, def_names, name.span)
        outs.append((name.text, e))

    return Project(tuple((n.text, t) for n, t in inputs), tuple(defs), tuple(outs))
