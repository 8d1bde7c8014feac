"""Line-oriented equation source parser.

Grammar (one statement per line, `#` starts a comment):

    statement  = param | ascription | equation
    param      = "param" IDENT
    ascription = IDENT "::" TYPE
    equation   = expr "==" expr
    expr       = IDENT | IDENT "(" expr { "," expr } ")"

`sum(a, b, ...)` with two or more arguments builds a summation row;
`∂ₜ(x)` (alias `dt`) marks a tangent variable; every other application
with one argument is a unary operator row and with two a binary row.
Nested expressions introduce •-numbered anonymous variables, deterministic
for a given source.  Equating two expressions identifies their result
variables.  ASCII operator aliases (d0, star1, inv_star0, wedge01, ...) are
normalized to their canonical names.
"""

import re
import unicodedata
from dataclasses import dataclass

from .errors import ParseError
from .ir import (DT, OPERATOR_ALIASES, VAR_TYPES, EquationSystem, Op1Row,
                 Op2Row, SumRow, SummandRow, TVarRow, VarRow, infer_types,
                 unify_types)

_DELIMS = {"(": "lparen", ")": "rparen", ",": "comma"}


@dataclass
class Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize_line(text, line_no):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "#":
            break
        if ch.isspace():
            i += 1
            continue
        if ch in _DELIMS:
            tokens.append(Token(_DELIMS[ch], ch, line_no, i + 1))
            i += 1
            continue
        if text.startswith("==", i):
            tokens.append(Token("eq", "==", line_no, i + 1))
            i += 2
            continue
        if text.startswith("::", i):
            tokens.append(Token("ascribe", "::", line_no, i + 1))
            i += 2
            continue
        j = i
        while j < n and not text[j].isspace() and text[j] not in "(),#" \
                and not text.startswith("==", j) and not text.startswith("::", j):
            j += 1
        tokens.append(Token("ident", text[i:j], line_no, i + 1))
        i = j
    return tokens


class _LineParser:
    def __init__(self, tokens, builder):
        self.tokens = tokens
        self.pos = 0
        self.b = builder

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self, kind=None, what=None):
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1]
            col = last.column + len(last.text)
            raise ParseError(f"unexpected end of line, expected {what or kind}",
                             last.line, col)
        if kind is not None and tok.kind != kind:
            raise ParseError(f"expected {what or kind}, got {tok.text!r}",
                             tok.line, tok.column)
        self.pos += 1
        return tok

    def parse_statement(self):
        tok = self.peek()
        if tok.kind == "ident" and tok.text == "param":
            self.next()
            name = self.next("ident", "parameter name")
            self.expect_end()
            self.b.declare_param(name)
            return
        if len(self.tokens) >= 2 and self.tokens[1].kind == "ascribe":
            name = self.next("ident", "variable name")
            self.next("ascribe")
            ty = self.next("ident", "type name")
            if ty.text not in VAR_TYPES:
                raise ParseError(f"unknown type {ty.text!r}", ty.line, ty.column)
            self.expect_end()
            self.b.ascribe(name, ty.text)
            return
        lhs = self.parse_expr()
        self.next("eq", "'=='")
        rhs = self.parse_expr()
        self.expect_end()
        self.b.merge(lhs, rhs)

    def expect_end(self):
        tok = self.peek()
        if tok is not None:
            raise ParseError(f"unexpected {tok.text!r}", tok.line, tok.column)

    def parse_expr(self):
        tok = self.next("ident", "variable or operator")
        nxt = self.peek()
        if nxt is None or nxt.kind != "lparen":
            return self.b.variable(tok)
        self.next("lparen")
        args = [self.parse_expr()]
        while True:
            sep = self.peek()
            if sep is None:
                last = self.tokens[-1]
                raise ParseError("expected ')' or ','", last.line,
                                 last.column + len(last.text))
            if sep.kind == "comma":
                self.next()
                args.append(self.parse_expr())
                continue
            if sep.kind == "rparen":
                self.next()
                break
            raise ParseError(f"expected ')' or ',', got {sep.text!r}",
                             sep.line, sep.column)
        return self.b.apply(tok, args)


class _Builder:
    """Accumulates rows with provisional var ids, plus a union-find for
    the identifications introduced by `expr == expr` lines."""

    def __init__(self, anon_start):
        self.system = EquationSystem()
        self.by_name = {}
        self.params = set()
        self.tangent_of = {}
        self.anon_counter = anon_start
        self.uf = []

    # union-find ------------------------------------------------------
    def _find(self, i):
        while self.uf[i] != i:
            self.uf[i] = self.uf[self.uf[i]]
            i = self.uf[i]
        return i

    def _union(self, a, b):
        ra, rb = self._find(a), self._find(b)
        if ra == rb:
            return ra
        lo, hi = min(ra, rb), max(ra, rb)
        self.uf[hi] = lo
        return lo

    # rows ------------------------------------------------------------
    def _new_var(self, name, ty="Infer"):
        idx = len(self.system.vars)
        self.system.vars.append(VarRow(name, ty))
        self.uf.append(idx)
        self.by_name[name] = idx
        return idx

    def variable(self, tok):
        idx = self.by_name.get(tok.text)
        if idx is None:
            idx = self._new_var(tok.text)
        return idx

    def anonymous(self):
        self.anon_counter += 1
        return self._new_var(f"•{self.anon_counter}")

    def declare_param(self, tok):
        idx = self.by_name.get(tok.text)
        if idx is None:
            idx = self._new_var(tok.text, "Literal")
        else:
            self.system.vars[idx].type = "Literal"
        self.params.add(idx)

    def ascribe(self, name_tok, ty):
        idx = self.by_name.get(name_tok.text)
        if idx is None:
            idx = self._new_var(name_tok.text)
        self.system.vars[idx].type = ty

    def apply(self, op_tok, args):
        name = OPERATOR_ALIASES.get(op_tok.text, op_tok.text)
        if name == "sum":
            if len(args) < 2:
                raise ParseError("sum needs at least two summands",
                                 op_tok.line, op_tok.column)
            out = self.anonymous()
            row = len(self.system.sums)
            self.system.sums.append(SumRow(out))
            for a in args:
                self.system.summands.append(SummandRow(a, row))
            return out
        if name == DT:
            if len(args) != 1:
                raise ParseError("∂ₜ takes exactly one argument",
                                 op_tok.line, op_tok.column)
            return self.tangent(args[0])
        if len(args) == 1:
            out = self.anonymous()
            self.system.op1s.append(Op1Row(args[0], out, name))
            return out
        if len(args) == 2:
            out = self.anonymous()
            self.system.op2s.append(Op2Row(args[0], args[1], out, name))
            return out
        raise ParseError(
            f"operator {op_tok.text!r} applied to {len(args)} arguments; only "
            "unary, binary and sum(...) are supported", op_tok.line, op_tok.column)

    def tangent(self, src):
        existing = self.tangent_of.get(src)
        if existing is None:
            base = self.system.vars[src].name
            name = _tangent_name(base, self.by_name)
            existing = self._new_var(name)
            self.tangent_of[src] = existing
            self.system.tvars.append(TVarRow(existing))
        self.system.op1s.append(Op1Row(src, existing, DT))
        return existing

    def merge(self, a, b):
        self._union(a, b)

    # quotient ---------------------------------------------------------
    def finish(self):
        roots = {}
        order = []
        for i in range(len(self.system.vars)):
            r = self._find(i)
            if r not in roots:
                roots[r] = len(order)
                order.append(r)

        def class_members(root):
            return [i for i in range(len(self.system.vars)) if self._find(i) == root]

        out = EquationSystem()
        for root in order:
            members = class_members(root)
            named = [self.system.vars[i] for i in members
                     if not self.system.vars[i].name.startswith("•")]
            rep = named[0] if named else self.system.vars[members[0]]
            ty = "Infer"
            for i in members:
                ty = unify_types(ty, self.system.vars[i].type)
            out.vars.append(VarRow(rep.name, ty))

        remap = {i: roots[self._find(i)] for i in range(len(self.system.vars))}
        seen_tvars = set()
        for t in self.system.tvars:
            m = remap[t.incl]
            if m not in seen_tvars:
                seen_tvars.add(m)
                out.tvars.append(TVarRow(m))
        for op in self.system.op1s:
            out.op1s.append(Op1Row(remap[op.src], remap[op.tgt], op.op1))
        for op in self.system.op2s:
            out.op2s.append(Op2Row(remap[op.proj1], remap[op.proj2],
                                   remap[op.res], op.op2))
        for s in self.system.sums:
            out.sums.append(SumRow(remap[s.sum]))
        for s in self.system.summands:
            out.summands.append(SummandRow(remap[s.summand], s.summation))
        return out


def _tangent_name(base, taken):
    """Dot-above name for a tangent variable, NFC-normalized."""
    name = unicodedata.normalize("NFC", base + "̇")
    while name in taken:
        name += "′"
    return name


def parse_equations(source):
    """Parse equation source text into an EquationSystem (types inferred)."""
    source = unicodedata.normalize("NFC", source)
    lines = source.split("\n")
    token_lines = [_tokenize_line(text, n) for n, text in enumerate(lines, start=1)]

    # start anonymous numbering above any •N identifier already in the text,
    # so generated names never collide with explicit ones
    anon_start = 0
    for toks in token_lines:
        for tok in toks:
            m = re.fullmatch("•(\\d+)", tok.text)
            if m:
                anon_start = max(anon_start, int(m.group(1)))

    builder = _Builder(anon_start)
    for toks in token_lines:
        if not toks:
            continue
        _LineParser(toks, builder).parse_statement()

    system = builder.finish()
    system.check()
    infer_types(system)
    return system
