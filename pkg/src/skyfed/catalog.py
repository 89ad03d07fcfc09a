"""Per-node data layer: schema-templated catalog tables with HTM-indexed
positions, local query evaluation, and the archive metadata documents.

Schema files are JSON; data files are headered CSV whose columns must
match the schema in order. Tables are immutable after load.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import htm
from .sphere import (
    ARCMIN_TO_RAD, DEG_TO_RAD, SkyPos, UnitVec3, radec_to_unitvec,
)
from .sqlang.nodes import (
    AreaSpec, ColumnRef, EvalError, Predicate, eval_expr,
)
from .table import ColumnMeta, ResultTable
from .xmatch import ArchiveSigma


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    type: str  # int64 | float64 | string
    unit: str = ""
    description: str = ""


@dataclass(frozen=True)
class TableSchema:
    table_name: str
    description: str
    columns: tuple[ColumnSpec, ...]
    key_column: str
    ra_column: str
    dec_column: str

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise CatalogError(
                f"duplicate column names in schema {self.table_name}")
        by_name = {c.name: c for c in self.columns}
        for role, name, want in (
            ("key", self.key_column, "int64"),
            ("ra", self.ra_column, "float64"),
            ("dec", self.dec_column, "float64"),
        ):
            if name not in by_name:
                raise CatalogError(f"{role} column {name!r} missing from "
                                   f"schema {self.table_name}")
            if by_name[name].type != want:
                raise CatalogError(f"{role} column {name!r} must be {want}")

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise CatalogError(f"unknown column: {self.table_name}.{name}")

    @classmethod
    def from_json_obj(cls, obj: dict) -> "TableSchema":
        try:
            cols = tuple(
                ColumnSpec(c["name"], c["type"], c.get("unit", ""),
                           c.get("description", ""))
                for c in obj["columns"]
            )
            return cls(obj["table_name"], obj.get("description", ""), cols,
                       obj["key_column"], obj["ra_column"], obj["dec_column"])
        except (KeyError, TypeError) as exc:
            raise CatalogError(f"malformed schema document: {exc}")

    def to_json_obj(self) -> dict:
        return {
            "table_name": self.table_name,
            "description": self.description,
            "columns": [
                {"name": c.name, "type": c.type, "unit": c.unit,
                 "description": c.description}
                for c in self.columns
            ],
            "key_column": self.key_column,
            "ra_column": self.ra_column,
            "dec_column": self.dec_column,
        }


_NP_TYPE = {"int64": np.int64, "float64": np.float64}


class CatalogTable:
    """Columnar, read-only catalog with a clustered-order HTM index."""

    def __init__(self, schema: TableSchema, columns: dict,
                 index_level: int = htm.DEFAULT_INDEX_LEVEL):
        self.schema = schema
        self.columns = columns
        self.index_level = index_level
        self.n_rows = len(columns[schema.key_column])

        ra = np.asarray(columns[schema.ra_column], dtype=np.float64)
        dec = np.asarray(columns[schema.dec_column], dtype=np.float64)
        ra_r = ra * DEG_TO_RAD
        dec_r = dec * DEG_TO_RAD
        cd = np.cos(dec_r)
        self.xyz = np.column_stack(
            (cd * np.cos(ra_r), cd * np.sin(ra_r), np.sin(dec_r)))
        self.htm_ids = np.array(
            [htm.trixel_of_point(UnitVec3(*self.xyz[i]), index_level).id
             for i in range(self.n_rows)],
            dtype=np.uint64)
        self.htm_order = np.argsort(self.htm_ids, kind="stable")
        self.sorted_ids = self.htm_ids[self.htm_order]

    def row(self, i: int) -> dict:
        return {name: _pyval(vals[i]) for name, vals in self.columns.items()}

    def position(self, i: int) -> UnitVec3:
        x, y, z = self.xyz[i]
        return UnitVec3(float(x), float(y), float(z))


def _pyval(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


def load_schema(schema_file: str) -> TableSchema:
    with open(schema_file, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CatalogError(f"schema {schema_file}: invalid JSON: {exc}")
    return TableSchema.from_json_obj(obj)


def load_catalog(schema_file: str, data_file: str,
                 index_level: int = htm.DEFAULT_INDEX_LEVEL) -> CatalogTable:
    """Load and type-check a CSV catalog against its schema."""
    schema = load_schema(schema_file)
    names = [c.name for c in schema.columns]
    raw: dict[str, list] = {n: [] for n in names}
    with open(data_file, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CatalogError(f"{data_file}: empty file (header required)")
        if header != names:
            raise CatalogError(
                f"{data_file}: header {header} does not match schema "
                f"columns {names}")
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(names):
                raise CatalogError(
                    f"{data_file}: row {row_no}: expected {len(names)} "
                    f"values, got {len(row)}")
            for spec, text in zip(schema.columns, row):
                if spec.type == "string":
                    raw[spec.name].append(text)
                    continue
                try:
                    value = (int(text) if spec.type == "int64"
                             else float(text))
                except ValueError:
                    raise CatalogError(
                        f"{data_file}: row {row_no}, column "
                        f"{spec.name!r}: cannot parse {text!r} as "
                        f"{spec.type}")
                if spec.type == "float64" and not math.isfinite(value):
                    raise CatalogError(
                        f"{data_file}: row {row_no}, column "
                        f"{spec.name!r}: non-finite value")
                raw[spec.name].append(value)
    columns = {}
    for spec in schema.columns:
        if spec.type == "string":
            columns[spec.name] = raw[spec.name]
        else:
            columns[spec.name] = np.asarray(
                raw[spec.name], dtype=_NP_TYPE[spec.type])
    # dec range check happens here instead of per-value: one pass, clear error
    dec = np.asarray(columns[schema.dec_column], dtype=np.float64)
    bad = np.nonzero((dec < -90.0) | (dec > 90.0))[0]
    if bad.size:
        raise CatalogError(
            f"{data_file}: row {int(bad[0]) + 2}: dec out of [-90, 90]")
    return CatalogTable(schema, columns, index_level)


def _candidate_rows(table: CatalogTable, area: AreaSpec) -> np.ndarray:
    """Row indices whose trixel falls inside the cover of the area cap."""
    center = radec_to_unitvec(area.center)
    radius = area.radius_arcmin * ARCMIN_TO_RAD
    cover = htm.cover_circle(center, radius, table.index_level)
    out = []
    for lo, hi in cover.ranges:
        a = np.searchsorted(table.sorted_ids, lo, side="left")
        b = np.searchsorted(table.sorted_ids, hi, side="right")
        if b > a:
            out.append(table.htm_order[a:b])
    if not out:
        return np.empty(0, dtype=np.intp)
    idx = np.concatenate(out)
    # exact separation filter on the narrowed candidates
    c = np.array([center.x, center.y, center.z])
    d = table.xyz[idx] - c
    chord2 = np.einsum("ij,ij->i", d, d)
    max_chord = 2.0 * math.sin(min(radius, math.pi) / 2.0)
    return idx[chord2 <= max_chord * max_chord]


def local_query(table: CatalogTable, predicates: list[Predicate],
                area: AreaSpec | None, projection: list[str],
                mode: str = "rows"):
    """Evaluate a single-table query: area narrowing via the HTM index,
    then predicates, then projection. mode "count" returns an int."""
    if mode not in ("rows", "count"):
        raise CatalogError(f"unknown mode: {mode}")
    schema = table.schema
    for name in projection:
        schema.column(name)

    if area is not None:
        idx = _candidate_rows(table, area)
    else:
        idx = np.arange(table.n_rows, dtype=np.intp)

    if predicates:
        kept = []
        for i in idx:
            row = table.row(int(i))

            def lookup(col: ColumnRef, _row=row):
                if col.column not in _row:
                    raise EvalError(
                        f"unknown column: {col.alias}.{col.column}")
                return _row[col.column]

            ok = True
            for p in predicates:
                v = eval_expr(p.expr, lookup)
                if not isinstance(v, bool):
                    raise EvalError("predicate did not evaluate to a boolean")
                if not v:
                    ok = False
                    break
            if ok:
                kept.append(int(i))
        idx = np.asarray(kept, dtype=np.intp)

    if mode == "count":
        return int(len(idx))

    cols = [ColumnMeta(n, schema.column(n).type, schema.column(n).unit,
                       schema.column(n).description)
            for n in projection]
    rows = []
    for i in idx:
        r = table.row(int(i))
        rows.append([r[n] for n in projection])
    return ResultTable(cols, rows)


# --- metadata -------------------------------------------------------------

@dataclass(frozen=True)
class ArchiveMeta:
    archive_name: str
    sky_coverage: tuple[tuple[SkyPos, float], ...]  # (center, radius arcmin)
    wavelength_coverage: str
    sigma: ArchiveSigma
    functions: tuple[tuple[str, str, str], ...] = field(
        default=(
            ("Info", "", "archive key/value metadata"),
            ("Schema", "", "full schema of all tables"),
            ("Tables", "", "table names and descriptions"),
            ("Columns", "table", "column details for one table"),
            ("Functions", "", "this list"),
            ("DocSearch", "key", "search names, units and descriptions"),
            ("Query", "sql", "run a query in the single-table dialect"),
            ("XMatch", "plan", "recursive cross-identification step"),
        ))


def metadata(kind: str, meta: ArchiveMeta,
             tables: dict[str, CatalogTable], **kwargs) -> dict:
    """Build one of the six metadata documents."""
    if kind == "info":
        return {
            "archive_name": meta.archive_name,
            "sky_coverage": [
                {"ra": c.ra, "dec": c.dec, "radius_arcmin": r}
                for c, r in meta.sky_coverage
            ],
            "wavelength_coverage": meta.wavelength_coverage,
            "positional_accuracy_arcsec": meta.sigma.sigma_arcsec,
        }
    if kind == "schema":
        return {"tables": [t.schema.to_json_obj() for t in tables.values()]}
    if kind == "tables":
        return {"tables": [
            {"name": t.schema.table_name,
             "description": t.schema.description}
            for t in tables.values()
        ]}
    if kind == "columns":
        name = kwargs["table"]
        if name not in tables:
            raise CatalogError(f"unknown table: {name}")
        schema = tables[name].schema
        return {"table": name, "columns": [
            {"name": c.name, "type": c.type, "unit": c.unit,
             "description": c.description}
            for c in schema.columns
        ]}
    if kind == "functions":
        return {"functions": [
            {"name": n, "params": p, "description": d}
            for n, p, d in meta.functions
        ]}
    if kind == "docsearch":
        key = kwargs["key"].lower()

        def hit(*texts):
            return any(key in t.lower() for t in texts)

        matches = []
        for t in tables.values():
            s = t.schema
            if hit(s.table_name, s.description):
                matches.append({"kind": "table", "name": s.table_name,
                                "description": s.description})
            for c in s.columns:
                if hit(c.name, c.unit, c.description):
                    matches.append({
                        "kind": "column",
                        "name": f"{s.table_name}.{c.name}",
                        "unit": c.unit, "description": c.description})
        for n, p, d in meta.functions:
            if hit(n, d):
                matches.append({"kind": "function", "name": n,
                                "description": d})
        return {"key": kwargs["key"], "matches": matches}
    raise CatalogError(f"unknown metadata kind: {kind}")
