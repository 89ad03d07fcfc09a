"""ResultTable: the typed column/row payload of every service response."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

COLUMN_TYPES = ("int64", "float64", "string")


class TableError(ValueError):
    pass


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    type: str
    unit: str = ""
    description: str = ""

    def __post_init__(self):
        if self.type not in COLUMN_TYPES:
            raise TableError(f"unknown column type: {self.type}")


class ResultTable:
    """Columns with name/type/unit/description and a list of value rows."""

    def __init__(self, columns: list[ColumnMeta], rows: list[list]):
        names = [c.name for c in columns]
        if len(set(names)) != len(names):
            raise TableError("duplicate column names")
        for r in rows:
            if len(r) != len(columns):
                raise TableError("row width does not match column count")
        self.columns = list(columns)
        self.rows = [list(r) for r in rows]

    def __len__(self):
        return len(self.rows)

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column_index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise TableError(f"unknown column: {name}")

    def column_values(self, name: str) -> list:
        i = self.column_index(name)
        return [r[i] for r in self.rows]

    def to_json_obj(self) -> dict:
        return {
            "columns": [
                {"name": c.name, "type": c.type, "unit": c.unit,
                 "description": c.description}
                for c in self.columns
            ],
            "rows": self.rows,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ResultTable":
        try:
            columns = [
                ColumnMeta(c["name"], c["type"], c.get("unit", ""),
                           c.get("description", ""))
                for c in obj["columns"]
            ]
            rows = obj["rows"]
        except (KeyError, TypeError) as exc:
            raise TableError(f"malformed table document: {exc}")
        coerced = []
        for r in rows:
            row = []
            for c, v in zip(columns, r):
                if c.type == "int64":
                    row.append(int(v))
                elif c.type == "float64":
                    row.append(float(v))
                else:
                    row.append(str(v))
            coerced.append(row)
        return cls(columns, coerced)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.column_names())
        for r in self.rows:
            writer.writerow(r)
        return buf.getvalue()

    def __repr__(self):
        return (f"ResultTable({len(self.columns)} cols x "
                f"{len(self.rows)} rows)")
