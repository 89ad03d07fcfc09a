"""The federating portal: parse, count, sort, plan, run the daisy chain,
assemble the output table, and optionally fetch a cutout of the area.

The portal holds no catalog data. Count queries go out concurrently; the
chain itself is one synchronous recursive call through the first node.
A star-join baseline mode pulls every in-area row to the portal and
matches locally, for result cross-checking and transfer accounting.
"""

from __future__ import annotations

import base64
import json
import math
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .httpbase import (
    JsonHttpService, ServiceError, TransferLog, get_json, post_json,
)
from .node import XMatchPlanStep, batch_to_tuples, match_sigma
from .sphere import SkyPos, UnitVec3, radec_to_unitvec, unitvec_to_radec
from .sqlang import (
    parse, partition_predicates, render_expr, render_local_sql,
)
from .sqlang.nodes import (
    CountStar, QueryAst, QueryError, SemanticError, referenced_columns,
)
from .table import ColumnMeta, ResultTable
from .xmatch import (
    ArchiveSigma, CandidateSlice, crossmatch_step, tuple_seed,
)


class PortalError(ValueError):
    pass


@dataclass(frozen=True)
class Member:
    archive_name: str
    node_url: str
    kind: str  # catalog | cutout

    def __post_init__(self):
        if self.kind not in ("catalog", "cutout"):
            raise PortalError(f"unknown member kind: {self.kind}")


@dataclass
class FederationConfig:
    members: list[Member]
    theta_max: float = 10.0
    timeout_s: float = 30.0

    def __post_init__(self):
        names = [m.archive_name.upper() for m in self.members]
        if len(set(names)) != len(names):
            raise PortalError("duplicate archive names in federation")
        if len([m for m in self.members if m.kind == "catalog"]) < 2:
            raise PortalError(
                "federation needs at least 2 catalog members")

    def catalog_member(self, archive: str) -> Member:
        for m in self.members:
            if (m.kind == "catalog"
                    and m.archive_name.upper() == archive.upper()):
                return m
        raise PortalError(f"archive not in federation: {archive}")

    def cutout_member(self) -> Member | None:
        for m in self.members:
            if m.kind == "cutout":
                return m
        return None

    @classmethod
    def from_file(cls, path: str) -> "FederationConfig":
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        members = [Member(m["archive"], m["url"], m.get("kind", "catalog"))
                   for m in obj["members"]]
        return cls(members, float(obj.get("theta_max", 10.0)),
                   float(obj.get("timeout_s", 30.0)))


@dataclass
class ExecutionPlan:
    steps: list[XMatchPlanStep]          # call order
    final_select: list
    counts: dict[str, int]
    cross_predicates: list[str]
    theta: float
    plan_id: str = field(default_factory=lambda: uuid.uuid4().hex)

    def to_json_obj(self) -> dict:
        return {
            "plan_id": self.plan_id,
            "theta": self.theta,
            "counts": self.counts,
            "cross_predicates": self.cross_predicates,
            "steps": [s.to_json_obj() for s in self.steps],
        }


class Portal:
    def __init__(self, config: FederationConfig):
        self.config = config
        self.log = TransferLog()
        self._node_meta: dict[str, dict] = {}

    # --- node metadata ----------------------------------------------------

    def node_info(self, member: Member) -> dict:
        key = member.archive_name.upper()
        if key not in self._node_meta:
            info = get_json(member.node_url + "/info", None,
                            self.config.timeout_s)
            schema = get_json(member.node_url + "/schema", None,
                              self.config.timeout_s)
            self._node_meta[key] = {"info": info, "schema": schema}
        return self._node_meta[key]

    def _table_schema(self, member: Member, table: str) -> dict:
        meta = self.node_info(member)
        for t in meta["schema"]["tables"]:
            if t["table_name"] == table:
                return t
        raise PortalError(
            f"table {table} not served by {member.archive_name}")

    # --- the eight steps --------------------------------------------------

    def parse_query(self, sql: str) -> QueryAst:
        ast = parse(sql)
        if ast.xmatch is None:
            raise SemanticError("federated queries require an XMATCH clause")
        if ast.area is None:
            raise SemanticError("federated queries require an AREA clause")
        if ast.xmatch.threshold > self.config.theta_max:
            raise SemanticError(
                f"XMATCH threshold exceeds the federation limit "
                f"{self.config.theta_max}")
        for t in ast.tables:
            if t.archive is None:
                raise SemanticError(
                    f"table {t.table} needs an archive qualifier")
            self.config.catalog_member(t.archive)
        _local, cross = partition_predicates(ast)
        dropouts = set(ast.xmatch.dropouts)
        for p in cross:
            if p.aliases & dropouts:
                raise SemanticError(
                    "cross-archive predicates cannot reference dropout "
                    "archives (dropouts contribute no attributes)")
        return ast

    def gather_counts(self, ast: QueryAst,
                      plan_id: str | None = None) -> dict[str, int]:
        aliases = list(ast.xmatch.mandatory) + list(ast.xmatch.dropouts)

        def one(alias: str) -> tuple[str, int]:
            member = self.config.catalog_member(
                ast.table_for(alias).archive)
            sql = render_local_sql(alias, ast, "count")
            resp = post_json(member.node_url + "/query", {"sql": sql},
                             self.config.timeout_s, log=self.log,
                             plan_id=plan_id)
            table = ResultTable.from_json_obj(resp)
            return alias, int(table.rows[0][0])

        with ThreadPoolExecutor(max_workers=len(aliases)) as pool:
            return dict(pool.map(one, aliases))

    def make_plan(self, ast: QueryAst, counts: dict[str, int],
                  order_override: list[str] | None = None) -> ExecutionPlan:
        """Call order: dropouts first, then mandatory by decreasing count
        (ties by archive name); the smallest-count mandatory archive is
        called last and seeds the pipeline.

        order_override (mandatory aliases only) is a test hook for the
        match-order symmetry property.
        """
        xm = ast.xmatch
        if len(xm.mandatory) < 2:
            raise SemanticError("XMATCH needs at least 2 mandatory members")
        _local, cross = partition_predicates(ast)

        def archive_of(alias):
            return ast.table_for(alias).archive

        if order_override is not None:
            if sorted(order_override) != sorted(xm.mandatory):
                raise PortalError("order override must permute the "
                                  "mandatory aliases")
            mandatory = list(order_override)
        else:
            mandatory = sorted(
                xm.mandatory,
                key=lambda a: (-counts[a], archive_of(a).upper()))
        dropouts = sorted(
            xm.dropouts,
            key=lambda a: (-counts[a], archive_of(a).upper()))

        cross_texts = [render_expr(p.expr) for p in cross]
        steps = []
        for alias in dropouts + mandatory:
            member = self.config.catalog_member(archive_of(alias))
            meta = self.node_info(member)
            sigma = float(meta["info"]["positional_accuracy_arcsec"])
            tschema = self._table_schema(member,
                                         ast.table_for(alias).table)
            is_dropout = alias in xm.dropouts
            extra = [tschema["key_column"], tschema["ra_column"],
                     tschema["dec_column"]]
            if not is_dropout:
                for p in cross:
                    for c in sorted(referenced_columns(p.expr),
                                    key=str):
                        if c.alias == alias and c.column not in extra:
                            extra.append(c.column)
            sql = render_local_sql(alias, ast, "select", extra)
            steps.append(XMatchPlanStep(
                node_url=member.node_url,
                archive_name=member.archive_name,
                alias=alias,
                local_sql=sql,
                sigma_arcsec=sigma,
                is_dropout=is_dropout,
                theta=xm.threshold,
            ))
        final_select = (list(ast.select_list)
                        if not isinstance(ast.select_list, CountStar)
                        else [])
        return ExecutionPlan(steps, final_select, dict(counts),
                             cross_texts, xm.threshold)

    def execute(self, plan: ExecutionPlan) -> ResultTable:
        """Run the daisy chain and project the final output table."""
        first = plan.steps[0]
        resp = post_json(
            first.node_url + "/xmatch",
            {"plan": [s.to_json_obj() for s in plan.steps],
             "theta": plan.theta,
             "cross_predicates": plan.cross_predicates,
             "plan_id": plan.plan_id},
            self.config.timeout_s, log=self.log, plan_id=plan.plan_id)
        batch = ResultTable.from_json_obj(resp["batch"])
        return self._project(batch, plan)

    def _project(self, batch: ResultTable, plan: ExecutionPlan,
                 ) -> ResultTable:
        names = batch.column_names()
        for col in plan.final_select:
            if str(col) not in names:
                raise PortalError(
                    f"internal plan error: column {col} missing from the "
                    f"returned tuple batch")
        meta_by_name = {c.name: c for c in batch.columns}
        out_cols = [meta_by_name[str(c)] for c in plan.final_select]
        out_cols.extend([
            ColumnMeta("_ra", "float64", unit="deg",
                       description="best combined position"),
            ColumnMeta("_dec", "float64", unit="deg",
                       description="best combined position"),
            ColumnMeta("_xmatch_sigma", "float64",
                       description="match statistic (standard deviations)"),
        ])
        sel_idx = [batch.column_index(str(c)) for c in plan.final_select]
        ax_i, ay_i, az_i, a_i = (batch.column_index(n)
                                 for n in ("_ax", "_ay", "_az", "_a"))
        rows = []
        for r in batch.rows:
            row = [r[i] for i in sel_idx]
            pos = unitvec_to_radec(
                UnitVec3.normalized(r[ax_i], r[ay_i], r[az_i]))
            row.extend([pos.ra, pos.dec])
            row.append(match_sigma(r[ax_i], r[ay_i], r[az_i], r[a_i]))
            rows.append(row)
        return ResultTable(out_cols, rows)

    def run(self, sql: str, order_override: list[str] | None = None,
            ) -> tuple[ResultTable, ExecutionPlan]:
        ast = self.parse_query(sql)
        plan_id = uuid.uuid4().hex
        counts = self.gather_counts(ast, plan_id)
        plan = self.make_plan(ast, counts, order_override)
        plan.plan_id = plan_id
        return self.execute(plan), plan

    # --- star-join baseline ----------------------------------------------

    def star_join_baseline(self, sql: str) -> tuple[ResultTable,
                                                    ExecutionPlan, int]:
        """Pull every in-area row to the portal and match centrally.

        Returns (result, plan, transfer_bytes); the result set must equal
        the daisy chain's.
        """
        ast = self.parse_query(sql)
        counts = self.gather_counts(ast)  # reused for a comparable plan
        plan = self.make_plan(ast, counts)
        log = TransferLog()
        plan_id = plan.plan_id

        pulled: dict[str, ResultTable] = {}
        sigmas: dict[str, ArchiveSigma] = {}
        schemas: dict[str, dict] = {}
        for step in plan.steps:
            member = self.config.catalog_member(
                ast.table_for(step.alias).archive)
            resp = post_json(member.node_url + "/query",
                             {"sql": step.local_sql},
                             self.config.timeout_s, log=log,
                             plan_id=plan_id)
            pulled[step.alias] = ResultTable.from_json_obj(resp)
            sigmas[step.alias] = ArchiveSigma(step.archive_name,
                                              step.sigma_arcsec)
            schemas[step.alias] = self._table_schema(
                member, ast.table_for(step.alias).table)

        # local chain, in the plan's data-flow order: seed at the last
        # step, then extend backwards; dropouts (head of call order) last
        data_flow = list(reversed(plan.steps))
        seed_step = data_flow[0]
        tuples = [
            tuple_seed(pos, key, sigmas[seed_step.alias], carried)
            for pos, key, carried in _slice_rows(
                pulled[seed_step.alias], schemas[seed_step.alias],
                seed_step.alias)
        ]
        from .sqlang import parse_expression
        cross_exprs = [parse_expression(t) for t in plan.cross_predicates]
        from .node import _apply_cross_predicates
        for step in data_flow[1:]:
            cslice = _make_slice(pulled[step.alias], schemas[step.alias],
                                 step.alias)
            tuples = crossmatch_step(tuples, cslice, sigmas[step.alias],
                                     plan.theta, step.is_dropout)
            if not step.is_dropout:
                tuples = _apply_cross_predicates(tuples, cross_exprs)

        carried_meta = {}
        for step in plan.steps:
            if step.is_dropout:
                continue
            table = pulled[step.alias]
            for c in table.columns:
                qname = f"{step.alias}.{c.name}"
                carried_meta[qname] = ColumnMeta(qname, c.type, c.unit,
                                                 c.description)
        from .node import tuples_to_batch
        batch = tuples_to_batch(tuples, carried_meta)
        bytes_total = sum(e["request_bytes"] + e["response_bytes"]
                          for e in log.entries())
        return self._project(batch, plan), plan, bytes_total

    # --- transfer accounting ---------------------------------------------

    def daisy_transfer_bytes(self, plan: ExecutionPlan) -> int:
        """Portal-side bytes plus every node-to-node hop for this plan."""
        total = sum(e["request_bytes"] + e["response_bytes"]
                    for e in self.log.entries(plan.plan_id))
        for step in plan.steps:
            try:
                stats = get_json(step.node_url + "/stats",
                                 {"plan_id": plan.plan_id},
                                 self.config.timeout_s)
            except ServiceError:
                continue  # stats disabled on that node
            total += sum(e["request_bytes"] + e["response_bytes"]
                         for e in stats["entries"])
        return total

    # --- cutout -----------------------------------------------------------

    def cutout_for_area(self, ast: QueryAst) -> dict | None:
        """Request an area-sized cutout; None when no cutout member."""
        member = self.config.cutout_member()
        if member is None:
            return None
        if ast.area is None:
            raise PortalError("query has no AREA clause")
        info = get_json(member.node_url + "/cutout/info", None,
                        self.config.timeout_s)
        scale = float(info["pixel_scale"])
        size_deg = 2.0 * ast.area.radius_arcmin / 60.0
        npix = max(1, min(4096, int(round(size_deg * scale))))
        import requests
        try:
            resp = requests.get(
                member.node_url + "/cutout",
                params={"ra": ast.area.center.ra,
                        "dec": ast.area.center.dec,
                        "scale": scale, "width": npix, "height": npix},
                timeout=self.config.timeout_s)
            if resp.status_code != 200:
                return {"error": resp.json().get("error", {})}
            return {"format": "P5",
                    "width": npix, "height": npix,
                    "data_base64":
                        base64.b64encode(resp.content).decode("ascii")}
        except requests.RequestException as exc:
            return {"error": {"code": "unreachable", "message": str(exc)}}


def _slice_rows(table: ResultTable, tschema: dict, alias: str):
    key_i = table.column_index(tschema["key_column"])
    ra_i = table.column_index(tschema["ra_column"])
    dec_i = table.column_index(tschema["dec_column"])
    names = table.column_names()
    for r in table.rows:
        pos = radec_to_unitvec(SkyPos(r[ra_i], r[dec_i]))
        carried = {f"{alias}.{n}": v for n, v in zip(names, r)}
        yield pos, r[key_i], carried


def _make_slice(table: ResultTable, tschema: dict,
                alias: str) -> CandidateSlice:
    keys, xyz, carried = [], [], []
    for pos, key, c in _slice_rows(table, tschema, alias):
        keys.append(key)
        xyz.append(pos.as_tuple())
        carried.append(c)
    arr = (np.array(xyz, dtype=np.float64).reshape(len(keys), 3)
           if keys else np.empty((0, 3)))
    return CandidateSlice(keys, arr, carried)


# --- portal HTTP service --------------------------------------------------

class PortalService:
    """POST /skyquery wrapping Portal.run / star_join_baseline."""

    def __init__(self, portal: Portal):
        self.portal = portal
        self.service = JsonHttpService()
        self.service.route("POST", "/skyquery", self._handle)
        self.url: str | None = None

    def start(self, host: str = "127.0.0.1", port: int = 0) -> str:
        self.url = self.service.start(host, port)
        return self.url

    def stop(self):
        self.service.stop()

    def _handle(self, params, body):
        if not body or "sql" not in body:
            raise ServiceError("bad_request",
                               'body must carry "sql"', 400)
        mode = body.get("mode", "daisy")
        want_cutout = bool(body.get("cutout", False))
        try:
            if mode == "daisy":
                result, plan = self.portal.run(body["sql"])
                transfer = self.portal.daisy_transfer_bytes(plan)
            elif mode == "star":
                result, plan, transfer = self.portal.star_join_baseline(
                    body["sql"])
            else:
                raise ServiceError("bad_request",
                                   f"unknown mode: {mode}", 400)
        except QueryError as exc:
            raise ServiceError("query_error", str(exc), 400)
        except PortalError as exc:
            raise ServiceError("portal_error", str(exc), 400)
        out = {
            "result": result.to_json_obj(),
            "plan": plan.to_json_obj(),
            "transfer_bytes": transfer,
        }
        if want_cutout:
            ast = self.portal.parse_query(body["sql"])
            image = self.portal.cutout_for_area(ast)
            if image is not None:
                out["image"] = image
        return out
