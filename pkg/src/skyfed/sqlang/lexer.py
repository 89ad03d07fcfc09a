"""Tokenizer for the query dialect.

Keywords are case-insensitive; identifiers keep their case. Numbers are
decimal with optional sign handled at the parser level; strings are
single-quoted.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .nodes import LexError

KEYWORDS = {"SELECT", "FROM", "WHERE", "AND", "OR", "NOT",
            "AREA", "XMATCH", "COUNT"}

_TOKEN_RE = re.compile(r"""
      (?P<ws>\s+)
    | (?P<number>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)
    | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
    | (?P<string>'[^']*')
    | (?P<op><=|>=|!=|[-+*/<>=(),.:!])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str   # KEYWORD | IDENT | NUMBER | STRING | OP | EOF
    text: str
    pos: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise LexError(
                f"unexpected character {text[pos]!r} at position {pos}", pos)
        if m.lastgroup == "ws":
            pos = m.end()
            continue
        value = m.group()
        if m.lastgroup == "ident":
            upper = value.upper()
            kind = "KEYWORD" if upper in KEYWORDS else "IDENT"
            tokens.append(Token(kind, upper if kind == "KEYWORD" else value,
                                pos))
        elif m.lastgroup == "number":
            tokens.append(Token("NUMBER", value, pos))
        elif m.lastgroup == "string":
            tokens.append(Token("STRING", value[1:-1], pos))
        else:
            tokens.append(Token("OP", value, pos))
        pos = m.end()
    tokens.append(Token("EOF", "", len(text)))
    return tokens
