"""Split WHERE conjuncts into per-archive local lists and cross predicates."""

from __future__ import annotations

from .nodes import Predicate, QueryAst


def partition_predicates(
    ast: QueryAst,
) -> tuple[dict[str, list[Predicate]], list[Predicate]]:
    """Per-alias local predicate lists plus the cross-archive remainder.

    A conjunct referencing exactly one alias is local to that alias; one
    referencing several goes to the cross list; a constant conjunct can be
    evaluated anywhere and is handed to every local list.
    """
    local: dict[str, list[Predicate]] = {t.alias: [] for t in ast.tables}
    cross: list[Predicate] = []
    for pred in ast.predicates:
        if len(pred.aliases) == 1:
            (alias,) = pred.aliases
            local[alias].append(pred)
        elif len(pred.aliases) == 0:
            for lst in local.values():
                lst.append(pred)
        else:
            cross.append(pred)
    return local, cross
