"""Recursive-descent parser producing a QueryAst.

The WHERE clause is parsed with ordinary boolean precedence (OR lowest,
then AND, NOT, comparisons, arithmetic) and afterwards split at the
top-level AND chain into conjuncts. AREA(...) and XMATCH(...) < n are
recognized there and lifted into their specs; anywhere deeper (under OR,
NOT, or parentheses) they are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..sphere import GeometryError, SkyPos
from .lexer import Token, tokenize
from .nodes import (
    AreaSpec, BinOp, ColumnRef, CountStar, NotOp, NumberLit, ParseError,
    Predicate, QueryAst, SemanticError, StringLit, TableRef, XMatchSpec,
)


@dataclass(frozen=True)
class _AreaNode:
    ra: float
    dec: float
    radius: float


@dataclass(frozen=True)
class _XMatchNode:
    args: tuple[tuple[bool, str], ...]  # (is_dropout, alias)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def cur(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, expected: str):
        tok = self.cur
        found = tok.text if tok.kind != "EOF" else "end of input"
        raise ParseError(
            f"expected {expected}, found {found!r} at position {tok.pos}",
            tok.pos)

    def expect_kw(self, kw: str) -> Token:
        if self.cur.kind == "KEYWORD" and self.cur.text == kw:
            return self.advance()
        self.fail(kw)

    def expect_op(self, op: str) -> Token:
        if self.cur.kind == "OP" and self.cur.text == op:
            return self.advance()
        self.fail(f"'{op}'")

    def expect_ident(self, what: str) -> str:
        if self.cur.kind == "IDENT":
            return self.advance().text
        self.fail(what)

    def at_op(self, *ops: str) -> bool:
        return self.cur.kind == "OP" and self.cur.text in ops

    def at_kw(self, *kws: str) -> bool:
        return self.cur.kind == "KEYWORD" and self.cur.text in kws

    # --- grammar ---------------------------------------------------------

    def query(self) -> QueryAst:
        self.expect_kw("SELECT")
        select = self.select_list()
        self.expect_kw("FROM")
        tables = self.table_list()
        conjuncts: list = []
        if self.at_kw("WHERE"):
            self.advance()
            conjuncts = self.flatten_and(self.or_expr())
        if self.cur.kind != "EOF":
            self.fail("end of query")
        return self.assemble(select, tables, conjuncts)

    def select_list(self):
        if self.at_kw("COUNT"):
            self.advance()
            self.expect_op("(")
            self.expect_op("*")
            self.expect_op(")")
            return CountStar()
        cols = [self.colref()]
        while self.at_op(","):
            self.advance()
            cols.append(self.colref())
        return tuple(cols)

    def colref(self) -> ColumnRef:
        alias = self.expect_ident("column reference (alias.column)")
        self.expect_op(".")
        column = self.expect_ident("column name after '.'")
        return ColumnRef(alias, column)

    def table_list(self) -> tuple[TableRef, ...]:
        tables = [self.tableref()]
        while self.at_op(","):
            self.advance()
            tables.append(self.tableref())
        return tuple(tables)

    def tableref(self) -> TableRef:
        first = self.expect_ident("table reference")
        archive = None
        table = first
        if self.at_op(":"):
            self.advance()
            archive = first
            table = self.expect_ident("table name after ':'")
        alias = self.expect_ident("table alias")
        return TableRef(archive, table, alias)

    # boolean precedence: OR < AND < NOT < comparison < arithmetic
    def or_expr(self):
        left = self.and_expr()
        while self.at_kw("OR"):
            self.advance()
            left = BinOp("OR", left, self.and_expr())
        return left

    def and_expr(self):
        left = self.not_expr()
        while self.at_kw("AND"):
            self.advance()
            left = BinOp("AND", left, self.not_expr())
        return left

    def not_expr(self):
        if self.at_kw("NOT"):
            self.advance()
            return NotOp(self.not_expr())
        return self.comparison()

    def comparison(self):
        left = self.arith()
        if self.at_op("<", ">", "=", "<=", ">=", "!="):
            op = self.advance().text
            return BinOp(op, left, self.arith())
        return left

    def arith(self):
        left = self.mul()
        while self.at_op("+", "-"):
            op = self.advance().text
            left = BinOp(op, left, self.mul())
        return left

    def mul(self):
        left = self.unary()
        while self.at_op("*", "/"):
            op = self.advance().text
            left = BinOp(op, left, self.unary())
        return left

    def unary(self):
        if self.at_op("-"):
            self.advance()
            operand = self.unary()
            if isinstance(operand, NumberLit):
                return NumberLit(-operand.value)
            return BinOp("-", NumberLit(0.0), operand)
        return self.primary()

    def primary(self):
        tok = self.cur
        if tok.kind == "NUMBER":
            self.advance()
            return NumberLit(float(tok.text))
        if tok.kind == "STRING":
            self.advance()
            return StringLit(tok.text)
        if self.at_kw("AREA"):
            return self.area_node()
        if self.at_kw("XMATCH"):
            return self.xmatch_node()
        if tok.kind == "IDENT":
            return self.colref()
        if self.at_op("("):
            self.advance()
            inner = self.or_expr()
            self.expect_op(")")
            return inner
        self.fail("an expression")

    def signed_number(self) -> float:
        neg = False
        if self.at_op("-"):
            self.advance()
            neg = True
        elif self.at_op("+"):
            self.advance()
        if self.cur.kind != "NUMBER":
            self.fail("a number")
        value = float(self.advance().text)
        return -value if neg else value

    def area_node(self) -> _AreaNode:
        self.advance()
        self.expect_op("(")
        ra = self.signed_number()
        self.expect_op(",")
        dec = self.signed_number()
        self.expect_op(",")
        radius = self.signed_number()
        self.expect_op(")")
        return _AreaNode(ra, dec, radius)

    def xmatch_node(self) -> _XMatchNode:
        self.advance()
        self.expect_op("(")
        args = [self.xmatch_arg()]
        while self.at_op(","):
            self.advance()
            args.append(self.xmatch_arg())
        self.expect_op(")")
        return _XMatchNode(tuple(args))

    def xmatch_arg(self) -> tuple[bool, str]:
        dropout = False
        if self.at_op("!"):
            self.advance()
            dropout = True
        return (dropout, self.expect_ident("an alias in XMATCH"))

    # --- assembly and semantic checks ------------------------------------

    def flatten_and(self, expr) -> list:
        if isinstance(expr, BinOp) and expr.op == "AND":
            return self.flatten_and(expr.left) + self.flatten_and(expr.right)
        return [expr]

    def assemble(self, select, tables, conjuncts) -> QueryAst:
        seen_aliases: set[str] = set()
        seen_archives: set[str] = set()
        for t in tables:
            if t.alias in seen_aliases:
                raise SemanticError(f"duplicate alias: {t.alias}")
            seen_aliases.add(t.alias)
            if t.archive is not None:
                key = t.archive.upper()
                if key in seen_archives:
                    raise SemanticError(
                        f"archive referenced more than once: {t.archive}")
                seen_archives.add(key)

        area = None
        xmatch = None
        predicates: list[Predicate] = []
        for conj in conjuncts:
            if isinstance(conj, _AreaNode):
                if area is not None:
                    raise SemanticError("AREA appears more than once")
                try:
                    center = SkyPos(conj.ra, conj.dec)
                except GeometryError as exc:
                    raise SemanticError(f"invalid AREA center: {exc}")
                area = AreaSpec(center, conj.radius)
                continue
            if (isinstance(conj, BinOp) and conj.op == "<"
                    and isinstance(conj.left, _XMatchNode)
                    and isinstance(conj.right, NumberLit)):
                if xmatch is not None:
                    raise SemanticError("XMATCH appears more than once")
                node = conj.left
                mandatory = tuple(a for drop, a in node.args if not drop)
                dropouts = tuple(a for drop, a in node.args if drop)
                for a in mandatory + dropouts:
                    if a not in seen_aliases:
                        raise SemanticError(f"unknown alias in XMATCH: {a}")
                xmatch = XMatchSpec(mandatory, dropouts, conj.right.value)
                continue
            self.reject_nested_special(conj)
            pred = Predicate.of(conj)
            for a in pred.aliases:
                if a not in seen_aliases:
                    raise SemanticError(f"unknown alias: {a}")
            predicates.append(pred)

        if not isinstance(select, CountStar):
            for col in select:
                if col.alias not in seen_aliases:
                    raise SemanticError(f"unknown alias: {col.alias}")
        return QueryAst(select, tables, area, xmatch, tuple(predicates))

    def reject_nested_special(self, expr):
        if isinstance(expr, (_AreaNode, _XMatchNode)):
            raise SemanticError(
                "AREA/XMATCH allowed only as top-level AND conjuncts")
        if isinstance(expr, BinOp):
            self.reject_nested_special(expr.left)
            self.reject_nested_special(expr.right)
        elif isinstance(expr, NotOp):
            self.reject_nested_special(expr.operand)


def parse(query_text: str) -> QueryAst:
    """Parse a query in the extended dialect into an AST."""
    return _Parser(query_text).query()


def parse_expression(text: str):
    """Parse a bare boolean/arithmetic expression (no AREA/XMATCH)."""
    p = _Parser(text)
    expr = p.or_expr()
    if p.cur.kind != "EOF":
        p.fail("end of expression")
    p.reject_nested_special(expr)
    return expr
