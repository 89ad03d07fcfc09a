"""AST node types for the query dialect, plus expression evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

from ..sphere import SkyPos

# radius bound: half the sky, in arcminutes
MAX_RADIUS_ARCMIN = 10800.0


class QueryError(ValueError):
    """Base for every dialect error; carries an optional text position."""

    def __init__(self, message: str, pos: int | None = None):
        super().__init__(message)
        self.message = message
        self.pos = pos


class LexError(QueryError):
    pass


class ParseError(QueryError):
    pass


class SemanticError(QueryError):
    pass


class EvalError(QueryError):
    """Type mismatch or unknown column during predicate evaluation."""


@dataclass(frozen=True)
class ColumnRef:
    alias: str
    column: str

    def __str__(self):
        return f"{self.alias}.{self.column}"


@dataclass(frozen=True)
class CountStar:
    """The COUNT(*) select list."""


@dataclass(frozen=True)
class TableRef:
    archive: str | None  # None in the node-local single-table dialect
    table: str
    alias: str


@dataclass(frozen=True)
class NumberLit:
    value: float


@dataclass(frozen=True)
class StringLit:
    value: str


@dataclass(frozen=True)
class BinOp:
    op: str  # + - * / < > = <= >= != AND OR
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class NotOp:
    operand: "Expr"


Expr = Union[ColumnRef, NumberLit, StringLit, BinOp, NotOp]


def referenced_aliases(expr: Expr) -> frozenset[str]:
    out: set[str] = set()

    def walk(e):
        if isinstance(e, ColumnRef):
            out.add(e.alias)
        elif isinstance(e, BinOp):
            walk(e.left)
            walk(e.right)
        elif isinstance(e, NotOp):
            walk(e.operand)

    walk(expr)
    return frozenset(out)


def referenced_columns(expr: Expr) -> frozenset[ColumnRef]:
    out: set[ColumnRef] = set()

    def walk(e):
        if isinstance(e, ColumnRef):
            out.add(e)
        elif isinstance(e, BinOp):
            walk(e.left)
            walk(e.right)
        elif isinstance(e, NotOp):
            walk(e.operand)

    walk(expr)
    return frozenset(out)


@dataclass(frozen=True)
class Predicate:
    """One top-level WHERE conjunct with its derived alias set."""

    expr: Expr
    aliases: frozenset[str] = field(default=frozenset())

    @classmethod
    def of(cls, expr: Expr) -> "Predicate":
        return cls(expr, referenced_aliases(expr))


@dataclass(frozen=True)
class AreaSpec:
    center: SkyPos
    radius_arcmin: float

    def __post_init__(self):
        if not (0.0 < self.radius_arcmin <= MAX_RADIUS_ARCMIN):
            raise SemanticError(
                f"AREA radius must be in (0, {MAX_RADIUS_ARCMIN}] arcmin, "
                f"got {self.radius_arcmin}"
            )


@dataclass(frozen=True)
class XMatchSpec:
    mandatory: tuple[str, ...]
    dropouts: tuple[str, ...]
    threshold: float

    def __post_init__(self):
        if len(self.mandatory) < 2:
            raise SemanticError("XMATCH needs at least 2 mandatory members")
        if set(self.mandatory) & set(self.dropouts):
            raise SemanticError("XMATCH mandatory and dropout lists overlap")
        if self.threshold <= 0:
            raise SemanticError("XMATCH threshold must be positive")


@dataclass(frozen=True)
class QueryAst:
    select_list: tuple[ColumnRef, ...] | CountStar
    tables: tuple[TableRef, ...]
    area: AreaSpec | None
    xmatch: XMatchSpec | None
    predicates: tuple[Predicate, ...]

    def table_for(self, alias: str) -> TableRef:
        for t in self.tables:
            if t.alias == alias:
                return t
        raise SemanticError(f"unknown alias: {alias}")

    @property
    def aliases(self) -> tuple[str, ...]:
        return tuple(t.alias for t in self.tables)


# --- expression evaluation ----------------------------------------------

_Number = (int, float)


def eval_expr(expr: Expr, lookup: Callable[[ColumnRef], object]):
    """Evaluate an expression over one row; `lookup` resolves column refs.

    Numbers compare with numbers, strings with strings (equality and
    ordering); mixing the two is an EvalError, as is arithmetic on strings.
    """
    if isinstance(expr, NumberLit):
        return expr.value
    if isinstance(expr, StringLit):
        return expr.value
    if isinstance(expr, ColumnRef):
        return lookup(expr)
    if isinstance(expr, NotOp):
        return not _as_bool(eval_expr(expr.operand, lookup))
    if isinstance(expr, BinOp):
        if expr.op == "AND":
            return (_as_bool(eval_expr(expr.left, lookup))
                    and _as_bool(eval_expr(expr.right, lookup)))
        if expr.op == "OR":
            return (_as_bool(eval_expr(expr.left, lookup))
                    or _as_bool(eval_expr(expr.right, lookup)))
        lv = eval_expr(expr.left, lookup)
        rv = eval_expr(expr.right, lookup)
        if expr.op in ("+", "-", "*", "/"):
            if not (isinstance(lv, _Number) and isinstance(rv, _Number)):
                raise EvalError(f"arithmetic '{expr.op}' needs numbers, "
                                f"got {type(lv).__name__}/{type(rv).__name__}")
            if expr.op == "+":
                return lv + rv
            if expr.op == "-":
                return lv - rv
            if expr.op == "*":
                return lv * rv
            if rv == 0:
                raise EvalError("division by zero")
            return lv / rv
        # comparison
        both_num = isinstance(lv, _Number) and isinstance(rv, _Number)
        both_str = isinstance(lv, str) and isinstance(rv, str)
        if not (both_num or both_str):
            raise EvalError(f"cannot compare {type(lv).__name__} with "
                            f"{type(rv).__name__}")
        if expr.op == "=":
            return lv == rv
        if expr.op == "!=":
            return lv != rv
        if expr.op == "<":
            return lv < rv
        if expr.op == ">":
            return lv > rv
        if expr.op == "<=":
            return lv <= rv
        if expr.op == ">=":
            return lv >= rv
        raise EvalError(f"unknown operator {expr.op!r}")
    raise EvalError(f"cannot evaluate node {type(expr).__name__}")


def _as_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    raise EvalError(f"expected a boolean, got {type(v).__name__}")
