"""Command line entry points.

Subcommands:
  query        run a federated query through a portal configuration
  nodes        list the federation members with their /info summaries
  serve        serve the federating portal endpoint (POST /skyquery)
  serve-node   serve one archive (metadata, local queries, xmatch hop)
  serve-cutout serve the image cutout endpoint for a tile set
  demo         build a synthetic federation in-process and run the
               flagship query against it

Exit codes: 0 success, 1 query error, 2 config or transport error.
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile

from .httpbase import ServiceError
from .portal import FederationConfig, Member, Portal, PortalError, \
    PortalService
from .sqlang.nodes import QueryError


def _read_sql(args) -> str:
    if args.sql_file:
        with open(args.sql_file, "r", encoding="utf-8") as fh:
            return fh.read()
    if args.sql:
        return args.sql
    raise ConfigError("give a query string or --file")


class ConfigError(Exception):
    """Config/usage-level error; maps to exit code 2."""


def _emit(table, fmt: str, stream=None):
    stream = stream or sys.stdout
    if fmt == "json":
        json.dump(table.to_json_obj(), stream, indent=2)
        stream.write("\n")
    else:
        stream.write(table.to_csv())


def _cmd_query(args) -> int:
    sql = _read_sql(args)
    portal = Portal(FederationConfig.from_file(args.federation))
    if args.mode == "star":
        result, plan, transfer = portal.star_join_baseline(sql)
    else:
        result, plan = portal.run(sql)
        transfer = portal.daisy_transfer_bytes(plan)
    if args.explain:
        print(json.dumps(plan.to_json_obj(), indent=2), file=sys.stderr)
        print(f"transfer_bytes: {transfer}", file=sys.stderr)
    _emit(result, args.format)
    if args.report_dir:
        from .report import write_report
        counts = {f"{s.alias} ({s.archive_name})": plan.counts[s.alias]
                  for s in plan.steps}
        written = write_report(result, args.report_dir, counts)
        for p in written:
            print(f"wrote {p}", file=sys.stderr)
    return 0


def _cmd_nodes(args) -> int:
    from .httpbase import get_json
    config = FederationConfig.from_file(args.federation)
    for m in config.members:
        if m.kind == "cutout":
            try:
                info = get_json(m.node_url + "/cutout/info", None,
                                config.timeout_s)
                extra = (f"scale {info['min_scale']:g}.."
                         f"{info['max_scale']:g} px/deg, "
                         f"{info['n_objects']} objects")
            except ServiceError as exc:
                extra = f"unreachable ({exc})"
            print(f"{m.archive_name:12s} cutout   {m.node_url}  {extra}")
            continue
        try:
            info = get_json(m.node_url + "/info", None, config.timeout_s)
            extra = (f"sigma {info['positional_accuracy_arcsec']}\" "
                     f"({info.get('wavelength_coverage', '')})")
        except ServiceError as exc:
            extra = f"unreachable ({exc})"
        print(f"{m.archive_name:12s} catalog  {m.node_url}  {extra}")
    return 0


def _cmd_serve_node(args) -> int:
    from .node import NodeConfig, SkyNode
    node = SkyNode(NodeConfig.from_file(args.config))
    url = node.start()
    print(f"serving archive {node.config.archive_name} at {url}",
          file=sys.stderr)
    return _wait(node)


def _cmd_serve_cutout(args) -> int:
    from .cutout import CutoutService, TileSet
    svc = CutoutService(TileSet.load(args.manifest))
    url = svc.start(args.host, args.port)
    print(f"serving cutouts at {url}/cutout", file=sys.stderr)
    return _wait(svc)


def _cmd_serve_portal(args) -> int:
    portal = Portal(FederationConfig.from_file(args.federation))
    svc = PortalService(portal)
    url = svc.start(args.host, args.port)
    print(f"serving portal at {url}/skyquery", file=sys.stderr)
    return _wait(svc)


def _wait(svc) -> int:
    import time
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        svc.stop()
        return 0


DEMO_SQL = ("SELECT o.objId, o.r, o.type, t.objId, t.m_j\n"
            "FROM SDSS:PhotoPrimary o, TWOMASS:PhotoPrimary t\n"
            "WHERE XMATCH(o, t) < 3.5\n"
            "  AND AREA(181.3, -0.76, 6.5)\n"
            "  AND o.type = 3 AND (o.i - t.m_j) > 2")


def _cmd_demo(args) -> int:
    from .node import NodeConfig, SkyNode
    from .synth import build_federation

    outdir = args.outdir or tempfile.mkdtemp(prefix="skyfed-demo-")
    print(f"building 3 synthetic archives under {outdir} ...",
          file=sys.stderr)
    fed = build_federation(outdir, rows_per_archive=args.rows,
                           seed=args.seed)
    nodes, members = [], []
    for name, files in fed.items():
        fp = files["footprint"]
        cfg = NodeConfig(
            archive_name=name, sigma_arcsec=files["sigma_arcsec"],
            host="127.0.0.1", port=0,
            tables=[(files["schema"], files["data"])],
            index_level=10, stats_enabled=True,
            wavelength_coverage=files["wavelength"],
            sky_coverage=[(fp["ra"], fp["dec"], fp["radius_arcmin"])])
        node = SkyNode(cfg)
        members.append(Member(name, node.start(), "catalog"))
        nodes.append(node)
        print(f"  {name}: {args.rows} rows, "
              f"sigma {files['sigma_arcsec']}\" at {members[-1].node_url}",
              file=sys.stderr)
    try:
        portal = Portal(FederationConfig(members))
        sql = args.sql or DEMO_SQL
        print("\nquery:\n" + sql + "\n", file=sys.stderr)
        result, plan = portal.run(sql)
        transfer = portal.daisy_transfer_bytes(plan)
        order = " -> ".join(f"{s.archive_name}"
                            f"{' (dropout)' if s.is_dropout else ''}"
                            for s in plan.steps)
        print(f"plan: {order}", file=sys.stderr)
        print(f"in-area counts: {plan.counts}", file=sys.stderr)
        print(f"daisy-chain transfer: {transfer} bytes", file=sys.stderr)
        _emit(result, args.format)
        if args.report_dir:
            from .report import write_report
            for p in write_report(result, args.report_dir, plan.counts):
                print(f"wrote {p}", file=sys.stderr)
    finally:
        for node in nodes:
            node.stop()
    return 0


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="skyfed",
        description="federated astronomical cross-identification")
    sub = top.add_subparsers(dest="command", required=True)

    q = sub.add_parser("query", help="run a federated query")
    q.add_argument("sql", nargs="?", help="query text")
    q.add_argument("--file", dest="sql_file", help="read the query from a file")
    q.add_argument("--federation", required=True,
                   help="federation config JSON")
    q.add_argument("--mode", choices=("daisy", "star"), default="daisy")
    q.add_argument("--format", choices=("csv", "json"), default="csv")
    q.add_argument("--explain", action="store_true",
                   help="print the plan and transfer bytes to stderr")
    q.add_argument("--report-dir",
                   help="also write result.csv and figures here")
    q.set_defaults(func=_cmd_query)

    ls = sub.add_parser("nodes", help="list federation members")
    ls.add_argument("--federation", required=True)
    ls.set_defaults(func=_cmd_nodes)

    n = sub.add_parser("serve-node", help="serve one archive")
    n.add_argument("--config", required=True, help="node config JSON")
    n.set_defaults(func=_cmd_serve_node)

    c = sub.add_parser("serve-cutout", help="serve image cutouts")
    c.add_argument("--manifest", required=True, help="tile set manifest")
    c.add_argument("--host", default="127.0.0.1")
    c.add_argument("--port", type=int, default=0)
    c.set_defaults(func=_cmd_serve_cutout)

    p = sub.add_parser("serve", help="serve the portal endpoint")
    p.add_argument("--federation", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.set_defaults(func=_cmd_serve_portal)

    d = sub.add_parser("demo",
                       help="synthetic federation + flagship query")
    d.add_argument("--rows", type=int, default=5000,
                   help="rows per synthetic archive")
    d.add_argument("--seed", type=int, default=20020800)
    d.add_argument("--sql", help="run this query instead of the default")
    d.add_argument("--outdir", help="keep the generated CSVs here")
    d.add_argument("--format", choices=("csv", "json"), default="csv")
    d.add_argument("--report-dir")
    d.set_defaults(func=_cmd_demo)
    return top


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (QueryError, PortalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, ServiceError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
