"""SkyNode: the network face of one archive.

Serves the metadata functions, Query() over the single-table dialect, and
the recursive XMatch() hop of the daisy chain. Per-request state only; the
catalog is loaded once and read concurrently.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .catalog import (
    ArchiveMeta, CatalogError, CatalogTable, load_catalog, metadata,
)
from .httpbase import JsonHttpService, ServiceError, TransferLog, post_json
from .sphere import SkyPos, radec_to_unitvec
from .sqlang import parse, parse_expression
from .sqlang.nodes import (
    ColumnRef, CountStar, EvalError, QueryError, eval_expr,
    referenced_columns,
)
from .table import ColumnMeta, ResultTable
from .xmatch import (
    ArchiveSigma, CandidateSlice, MatchTuple, XMatchError, crossmatch_step,
    match_statistic, tuple_seed,
)

RESERVED_COLUMNS = ("_ax", "_ay", "_az", "_a", "_members")


@dataclass(frozen=True)
class XMatchPlanStep:
    node_url: str
    archive_name: str
    alias: str
    local_sql: str
    sigma_arcsec: float
    is_dropout: bool
    theta: float

    def to_json_obj(self) -> dict:
        return {
            "node_url": self.node_url,
            "archive_name": self.archive_name,
            "alias": self.alias,
            "local_sql": self.local_sql,
            "sigma_arcsec": self.sigma_arcsec,
            "is_dropout": self.is_dropout,
            "theta": self.theta,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "XMatchPlanStep":
        try:
            return cls(obj["node_url"], obj["archive_name"], obj["alias"],
                       obj["local_sql"], float(obj["sigma_arcsec"]),
                       bool(obj["is_dropout"]), float(obj["theta"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ServiceError("bad_request",
                               f"malformed plan step: {exc}", 400)


# --- TupleBatch <-> MatchTuple ------------------------------------------

def encode_members(members) -> str:
    return "|".join(f"{archive}:{key}" for archive, key in members)


def decode_members(text: str) -> tuple:
    out = []
    if text:
        for part in text.split("|"):
            archive, key = part.rsplit(":", 1)
            out.append((archive, int(key)))
    return tuple(out)


def tuples_to_batch(tuples: list[MatchTuple],
                    carried_meta: dict[str, ColumnMeta]) -> ResultTable:
    carried_names = sorted(carried_meta)
    columns = [
        ColumnMeta("_ax", "float64"),
        ColumnMeta("_ay", "float64"),
        ColumnMeta("_az", "float64"),
        ColumnMeta("_a", "float64", unit="rad^-2"),
        ColumnMeta("_members", "string"),
    ] + [carried_meta[n] for n in carried_names]
    rows = []
    for t in tuples:
        row = [t.a_vec[0], t.a_vec[1], t.a_vec[2], t.a_weight,
               encode_members(t.members)]
        row.extend(t.carried[n] for n in carried_names)
        rows.append(row)
    return ResultTable(columns, rows)


def batch_to_tuples(
    batch: ResultTable,
) -> tuple[list[MatchTuple], dict[str, ColumnMeta]]:
    names = batch.column_names()
    if names[:5] != list(RESERVED_COLUMNS):
        raise ServiceError(
            "bad_request",
            "tuple batch must start with the reserved columns", 400)
    carried_meta = {c.name: c for c in batch.columns[5:]}
    tuples = []
    for row in batch.rows:
        ax, ay, az, a, members = row[:5]
        if math.sqrt(ax * ax + ay * ay + az * az) > a * (1 + 1e-9):
            raise ServiceError(
                "bad_request", "tuple batch violates |a_vec| <= a", 400)
        carried = dict(zip(names[5:], row[5:]))
        tuples.append(MatchTuple(decode_members(members), (ax, ay, az),
                                 a, carried))
    return tuples, carried_meta


# --- the node service -----------------------------------------------------

@dataclass
class NodeConfig:
    archive_name: str
    sigma_arcsec: float
    host: str
    port: int
    tables: list[tuple[str, str]]  # (schema_file, data_file)
    index_level: int
    stats_enabled: bool
    wavelength_coverage: str = ""
    sky_coverage: list[tuple[float, float, float]] = None  # (ra, dec, arcmin)
    timeout_s: float = 30.0

    @classmethod
    def from_file(cls, path: str) -> "NodeConfig":
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        return cls(
            archive_name=obj["archive_name"],
            sigma_arcsec=float(obj["sigma_arcsec"]),
            host=obj.get("host", "127.0.0.1"),
            port=int(obj.get("port", 0)),
            tables=[(t["schema"], t["data"]) for t in obj["tables"]],
            index_level=int(obj.get("index_level", 14)),
            stats_enabled=bool(obj.get("stats_enabled", False)),
            wavelength_coverage=obj.get("wavelength_coverage", ""),
            sky_coverage=[(c["ra"], c["dec"], c["radius_arcmin"])
                          for c in obj.get("sky_coverage", [])],
            timeout_s=float(obj.get("timeout_s", 30.0)),
        )


class SkyNode:
    """One archive service: catalogs + metadata + the xmatch hop."""

    def __init__(self, config: NodeConfig):
        self.config = config
        self.sigma = ArchiveSigma(config.archive_name, config.sigma_arcsec)
        self.tables: dict[str, CatalogTable] = {}
        for schema_file, data_file in config.tables:
            table = load_catalog(schema_file, data_file, config.index_level)
            self.tables[table.schema.table_name] = table
        self.meta = ArchiveMeta(
            archive_name=config.archive_name,
            sky_coverage=tuple(
                (SkyPos(ra, dec), radius)
                for ra, dec, radius in (config.sky_coverage or [])),
            wavelength_coverage=config.wavelength_coverage,
            sigma=self.sigma,
        )
        self.stats = TransferLog() if config.stats_enabled else None
        self.service = JsonHttpService()
        self._register_routes()
        self.url: str | None = None

    def start(self) -> str:
        self.url = self.service.start(self.config.host, self.config.port)
        return self.url

    def stop(self):
        self.service.stop()

    # --- routes ----------------------------------------------------------

    def _register_routes(self):
        s = self.service
        s.route("GET", "/info", lambda p, b: metadata(
            "info", self.meta, self.tables))
        s.route("GET", "/schema", lambda p, b: metadata(
            "schema", self.meta, self.tables))
        s.route("GET", "/tables", lambda p, b: metadata(
            "tables", self.meta, self.tables))
        s.route("GET", "/functions", lambda p, b: metadata(
            "functions", self.meta, self.tables))
        s.route("GET", "/columns", self._handle_columns)
        s.route("GET", "/docsearch", self._handle_docsearch)
        s.route("POST", "/query", self._handle_query)
        s.route("POST", "/xmatch", self._handle_xmatch)
        s.route("GET", "/stats", self._handle_stats)

    def _handle_columns(self, params, body):
        if "table" not in params:
            raise ServiceError("bad_request",
                               "missing query parameter: table", 400)
        try:
            return metadata("columns", self.meta, self.tables,
                            table=params["table"])
        except CatalogError as exc:
            raise ServiceError("not_found", str(exc), 404)

    def _handle_docsearch(self, params, body):
        if "key" not in params:
            raise ServiceError("bad_request",
                               "missing query parameter: key", 400)
        return metadata("docsearch", self.meta, self.tables,
                        key=params["key"])

    def _handle_stats(self, params, body):
        if self.stats is None:
            raise ServiceError("not_found", "stats are not enabled", 404)
        return {"entries": self.stats.entries(params.get("plan_id"))}

    # --- Query() ---------------------------------------------------------

    def _run_local_sql(self, sql: str):
        """Parse and execute single-table dialect SQL against this node.

        Returns (ast, alias, table, ResultTable or count)."""
        try:
            ast = parse(sql)
        except QueryError as exc:
            raise ServiceError("parse_error", str(exc), 400)
        if len(ast.tables) != 1:
            raise ServiceError(
                "bad_request",
                "node-local queries must reference exactly one table", 400)
        tref = ast.tables[0]
        if ast.xmatch is not None:
            raise ServiceError(
                "bad_request", "XMATCH is not valid in node-local SQL", 400)
        if tref.table not in self.tables:
            raise ServiceError("not_found",
                               f"unknown table: {tref.table}", 404)
        table = self.tables[tref.table]
        if isinstance(ast.select_list, CountStar):
            count = self._eval(table, ast, [], "count")
            return ast, tref.alias, table, count
        projection = []
        for c in ast.select_list:
            if c.alias != tref.alias:
                raise ServiceError(
                    "bad_request", f"unknown alias: {c.alias}", 400)
            if c.column not in projection:
                projection.append(c.column)
        rtab = self._eval(table, ast, projection, "rows")
        return ast, tref.alias, table, rtab

    def _eval(self, table, ast, projection, mode):
        from .catalog import local_query
        try:
            return local_query(table, list(ast.predicates), ast.area,
                               projection, mode)
        except (CatalogError, EvalError) as exc:
            raise ServiceError("query_error", str(exc), 400)

    def _handle_query(self, params, body):
        if not body or "sql" not in body:
            raise ServiceError("bad_request",
                               'body must be {"sql": string}', 400)
        _ast, _alias, _table, result = self._run_local_sql(body["sql"])
        if isinstance(result, int):
            out = ResultTable(
                [ColumnMeta("count", "int64", description="row count")],
                [[result]])
        else:
            out = result
        return out.to_json_obj()

    # --- XMatch() --------------------------------------------------------

    def _handle_xmatch(self, params, body):
        if not body or "plan" not in body:
            raise ServiceError("bad_request",
                               'body must carry a "plan" list', 400)
        plan = [XMatchPlanStep.from_json_obj(s) for s in body["plan"]]
        if not plan:
            raise ServiceError("bad_request", "empty plan", 400)
        theta = float(body.get("theta", plan[0].theta))
        cross_texts = body.get("cross_predicates", [])
        plan_id = body.get("plan_id")
        step = plan[0]
        if step.archive_name != self.config.archive_name:
            raise ServiceError(
                "bad_request",
                f"plan step addressed to {step.archive_name}, this node is "
                f"{self.config.archive_name}", 400)

        try:
            cross_exprs = [parse_expression(t) for t in cross_texts]
        except QueryError as exc:
            raise ServiceError("parse_error",
                               f"cross predicate: {exc}", 400)

        ast, alias, table, local = self._run_local_sql(step.local_sql)
        if isinstance(local, int):
            raise ServiceError("bad_request",
                               "xmatch local_sql must select columns", 400)

        schema = table.schema
        carried_meta_local = {}
        for n in local.column_names():
            spec = schema.column(n)
            qname = f"{alias}.{n}"
            carried_meta_local[qname] = ColumnMeta(
                qname, spec.type, spec.unit, spec.description)
        key_i = local.column_index(schema.key_column)
        ra_i = local.column_index(schema.ra_column)
        dec_i = local.column_index(schema.dec_column)

        def row_pos(row):
            return radec_to_unitvec(SkyPos(row[ra_i], row[dec_i]))

        def row_carried(row):
            return {f"{alias}.{n}": v
                    for n, v in zip(local.column_names(), row)}

        if len(plan) == 1:
            if step.is_dropout:
                raise ServiceError(
                    "bad_request", "plan cannot end at a dropout step", 400)
            tuples = [
                tuple_seed(row_pos(r), r[key_i], self.sigma, row_carried(r))
                for r in local.rows
            ]
            return {"batch": tuples_to_batch(
                tuples, carried_meta_local).to_json_obj()}

        downstream = plan[1]
        resp = post_json(
            downstream.node_url + "/xmatch",
            {"plan": [s.to_json_obj() for s in plan[1:]], "theta": theta,
             "cross_predicates": cross_texts, "plan_id": plan_id},
            timeout=self.config.timeout_s,
            log=self.stats, plan_id=plan_id)
        incoming, carried_meta = batch_to_tuples(
            ResultTable.from_json_obj(resp["batch"]))

        xyz = np.array(
            [row_pos(r).as_tuple() for r in local.rows], dtype=np.float64
        ).reshape(len(local.rows), 3)
        cslice = CandidateSlice(
            [r[key_i] for r in local.rows], xyz,
            [row_carried(r) for r in local.rows])
        try:
            tuples = crossmatch_step(incoming, cslice, self.sigma, theta,
                                     step.is_dropout)
        except XMatchError as exc:
            raise ServiceError("xmatch_error", str(exc), 400)

        if not step.is_dropout:
            carried_meta = dict(carried_meta, **carried_meta_local)
            tuples = _apply_cross_predicates(tuples, cross_exprs)
        return {"batch": tuples_to_batch(tuples, carried_meta).to_json_obj()}


def _apply_cross_predicates(tuples: list[MatchTuple],
                            exprs) -> list[MatchTuple]:
    """Filter by every cross predicate whose columns are all carried."""
    if not exprs or not tuples:
        return tuples
    present = set(tuples[0].carried)
    active = [
        e for e in exprs
        if all(f"{c.alias}.{c.column}" in present
               for c in referenced_columns(e))
    ]
    if not active:
        return tuples
    out = []
    for t in tuples:
        def lookup(col: ColumnRef, _c=t.carried):
            return _c[f"{col.alias}.{col.column}"]

        try:
            keep = True
            for e in active:
                v = eval_expr(e, lookup)
                if not isinstance(v, bool):
                    raise EvalError(
                        "cross predicate did not evaluate to a boolean")
                if not v:
                    keep = False
                    break
        except EvalError as exc:
            raise ServiceError("query_error",
                               f"cross predicate: {exc}", 400)
        if keep:
            out.append(t)
    return out


def match_sigma(ax: float, ay: float, az: float, a: float) -> float:
    """Match statistic recomputed from a serialized tuple row."""
    return match_statistic(MatchTuple((), (ax, ay, az), a, {}))
