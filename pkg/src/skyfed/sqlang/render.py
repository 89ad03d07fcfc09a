"""Pretty-printer for ASTs and the per-node local SQL builder.

render(parse(text)) is the canonical form; parse(render(ast)) == ast
structurally for any valid AST.
"""

from __future__ import annotations

from .nodes import (
    BinOp, ColumnRef, CountStar, NotOp, NumberLit, Predicate, QueryAst,
    SemanticError, StringLit, TableRef,
)
from .partition import partition_predicates

# higher binds tighter; comparisons are non-associative single level
_PREC = {"OR": 1, "AND": 2, "NOT": 3,
         "<": 4, ">": 4, "=": 4, "<=": 4, ">=": 4, "!=": 4,
         "+": 5, "-": 5, "*": 6, "/": 6}


def _num(value: float) -> str:
    return repr(value)


def render_expr(expr, parent_prec: int = 0) -> str:
    if isinstance(expr, NumberLit):
        return _num(expr.value)
    if isinstance(expr, StringLit):
        return f"'{expr.value}'"
    if isinstance(expr, ColumnRef):
        return f"{expr.alias}.{expr.column}"
    if isinstance(expr, NotOp):
        inner = render_expr(expr.operand, _PREC["NOT"])
        text = f"NOT {inner}"
        return f"({text})" if parent_prec > _PREC["NOT"] else text
    if isinstance(expr, BinOp):
        prec = _PREC[expr.op]
        # left-associative chains render without parens on the left;
        # the right side parenthesizes at equal precedence
        left = render_expr(expr.left, prec)
        right = render_expr(expr.right, prec + 1)
        sep = f" {expr.op} " if expr.op in ("AND", "OR") else expr.op
        text = f"{left}{sep}{right}"
        return f"({text})" if parent_prec > prec else text
    raise SemanticError(f"cannot render node {type(expr).__name__}")


def _render_area(area) -> str:
    return (f"AREA({_num(area.center.ra)},{_num(area.center.dec)},"
            f"{_num(area.radius_arcmin)})")


def _render_xmatch(xm) -> str:
    args = list(xm.mandatory) + ["!" + a for a in xm.dropouts]
    return f"XMATCH({','.join(args)})<{_num(xm.threshold)}"


def _render_table(t: TableRef) -> str:
    name = f"{t.archive}:{t.table}" if t.archive else t.table
    return f"{name} {t.alias}"


def render(ast: QueryAst) -> str:
    """Full-query pretty printer."""
    if isinstance(ast.select_list, CountStar):
        select = "COUNT(*)"
    else:
        select = ", ".join(str(c) for c in ast.select_list)
    tables = ", ".join(_render_table(t) for t in ast.tables)
    parts = []
    if ast.xmatch is not None:
        parts.append(_render_xmatch(ast.xmatch))
    if ast.area is not None:
        parts.append(_render_area(ast.area))
    parts.extend(render_expr(p.expr, _PREC["AND"]) for p in ast.predicates)
    text = f"SELECT {select} FROM {tables}"
    if parts:
        text += " WHERE " + " AND ".join(parts)
    return text


def render_local_sql(alias: str, ast: QueryAst, mode: str,
                     extra_columns: list[str] | None = None) -> str:
    """Single-table query for one archive in the same dialect.

    mode "count" emits COUNT(*); mode "select" emits the query's select
    columns for this alias followed by extra_columns (key, positions,
    attributes needed by cross predicates), de-duplicated in order. The
    archive qualifier is dropped: the text is addressed to the node that
    owns the table.
    """
    if mode not in ("count", "select"):
        raise SemanticError(f"unknown mode: {mode}")
    table = ast.table_for(alias)
    local, _cross = partition_predicates(ast)

    if mode == "count":
        select = "COUNT(*)"
    else:
        cols: list[str] = []
        if not isinstance(ast.select_list, CountStar):
            for c in ast.select_list:
                if c.alias == alias and c.column not in cols:
                    cols.append(c.column)
        for name in extra_columns or []:
            if name not in cols:
                cols.append(name)
        if not cols:
            raise SemanticError(f"no columns selected for alias {alias}")
        select = ", ".join(f"{alias}.{c}" for c in cols)

    parts = []
    if ast.area is not None:
        parts.append(_render_area(ast.area))
    parts.extend(render_expr(p.expr, _PREC["AND"]) for p in local[alias])
    text = f"SELECT {select} FROM {table.table} {alias}"
    if parts:
        text += " WHERE " + " AND ".join(parts)
    return text
