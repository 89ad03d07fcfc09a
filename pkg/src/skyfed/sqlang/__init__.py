"""The extended SQL dialect: AREA and XMATCH clauses over archive-qualified
tables, plus predicate partitioning for planning."""

from .nodes import (
    AreaSpec,
    BinOp,
    ColumnRef,
    CountStar,
    NotOp,
    NumberLit,
    Predicate,
    QueryAst,
    QueryError,
    LexError,
    ParseError,
    SemanticError,
    StringLit,
    TableRef,
    XMatchSpec,
    eval_expr,
)
from .parser import parse, parse_expression
from .render import render, render_expr, render_local_sql
from .partition import partition_predicates

__all__ = [
    "AreaSpec", "BinOp", "ColumnRef", "CountStar", "NotOp", "NumberLit",
    "Predicate", "QueryAst", "QueryError", "LexError", "ParseError",
    "SemanticError", "StringLit", "TableRef", "XMatchSpec", "eval_expr",
    "parse", "parse_expression", "render", "render_expr",
    "render_local_sql", "partition_predicates",
]
