import math

import pytest
import requests

from skyfed.httpbase import ServiceError, get_json, post_json
from skyfed.node import (
    RESERVED_COLUMNS, XMatchPlanStep, batch_to_tuples, decode_members,
    encode_members, match_sigma, tuples_to_batch,
)
from skyfed.sphere import SkyPos, radec_to_unitvec
from skyfed.table import ColumnMeta, ResultTable
from skyfed.xmatch import ArchiveSigma, tuple_extend, tuple_seed

TIMEOUT = 10


class TestMetadataEndpoints:
    def test_info(self, node_urls, sigmas):
        for name, url in node_urls.items():
            doc = get_json(url + "/info", None, TIMEOUT)
            assert doc["archive_name"] == name
            assert doc["positional_accuracy_arcsec"] == sigmas[name]
            assert doc["sky_coverage"]

    def test_schema(self, node_urls):
        doc = get_json(node_urls["SDSS"] + "/schema", None, TIMEOUT)
        t = doc["tables"][0]
        assert t["table_name"] == "PhotoPrimary"
        assert t["key_column"] == "objId"
        assert t["ra_column"] == "ra" and t["dec_column"] == "dec"

    def test_tables_and_columns(self, node_urls):
        url = node_urls["TWOMASS"]
        tables = get_json(url + "/tables", None, TIMEOUT)
        assert tables["tables"][0]["name"] == "PhotoPrimary"
        cols = get_json(url + "/columns", {"table": "PhotoPrimary"},
                        TIMEOUT)
        assert "m_j" in [c["name"] for c in cols["columns"]]

    def test_columns_unknown_table_404(self, node_urls):
        with pytest.raises(ServiceError) as exc:
            get_json(node_urls["SDSS"] + "/columns", {"table": "Nope"},
                     TIMEOUT)
        assert exc.value.status == 404
        # raw response carries the machine-readable error body
        r = requests.get(node_urls["SDSS"] + "/columns",
                         params={"table": "Nope"}, timeout=TIMEOUT)
        assert r.status_code == 404
        assert "error" in r.json()
        assert r.json()["error"]["code"] == "not_found"

    def test_functions(self, node_urls):
        doc = get_json(node_urls["FIRST"] + "/functions", None, TIMEOUT)
        names = {f["name"] for f in doc["functions"]}
        assert {"Info", "Schema", "Tables", "Columns", "Functions",
                "DocSearch", "Query", "XMatch"} <= names

    def test_docsearch(self, node_urls):
        doc = get_json(node_urls["TWOMASS"] + "/docsearch",
                       {"key": "m_"}, TIMEOUT)
        names = [m["name"] for m in doc["matches"]]
        assert "PhotoPrimary.m_j" in names


class TestQueryEndpoint:
    def test_count(self, node_urls):
        resp = post_json(
            node_urls["SDSS"] + "/query",
            {"sql": "SELECT COUNT(*) FROM PhotoPrimary o "
                    "WHERE AREA(181.3,-0.76,6.5) AND o.type=3"},
            TIMEOUT)
        table = ResultTable.from_json_obj(resp)
        assert table.column_names() == ["count"]
        assert isinstance(table.rows[0][0], int)

    def test_select(self, node_urls):
        resp = post_json(
            node_urls["SDSS"] + "/query",
            {"sql": "SELECT o.objId, o.ra, o.dec FROM PhotoPrimary o "
                    "WHERE AREA(181.3,-0.76,3)"},
            TIMEOUT)
        table = ResultTable.from_json_obj(resp)
        assert table.column_names() == ["objId", "ra", "dec"]

    def test_malformed_sql_is_structured(self, node_urls):
        with pytest.raises(ServiceError) as exc:
            post_json(node_urls["SDSS"] + "/query",
                      {"sql": "SELECT FROM nothing"}, TIMEOUT)
        assert exc.value.code == "parse_error"
        assert exc.value.status == 400

    def test_unknown_table_404(self, node_urls):
        with pytest.raises(ServiceError) as exc:
            post_json(node_urls["SDSS"] + "/query",
                      {"sql": "SELECT o.a FROM Nope o"}, TIMEOUT)
        assert exc.value.status == 404

    def test_xmatch_rejected_in_local_sql(self, node_urls):
        with pytest.raises(ServiceError) as exc:
            post_json(
                node_urls["SDSS"] + "/query",
                {"sql": "SELECT o.ra FROM PhotoPrimary o, B:T t "
                        "WHERE XMATCH(o,t)<1 AND AREA(0,0,1)"},
                TIMEOUT)
        assert exc.value.status == 400

    def test_statelessness(self, node_urls):
        sql = ("SELECT COUNT(*) FROM PhotoPrimary o "
               "WHERE AREA(181.3,-0.76,10)")
        counts = {
            post_json(node_urls["SDSS"] + "/query", {"sql": sql},
                      TIMEOUT)["rows"][0][0]
            for _ in range(5)
        }
        assert len(counts) == 1


class TestTupleBatch:
    def make_tuples(self):
        s1 = ArchiveSigma("SDSS", 0.1)
        s2 = ArchiveSigma("TWOMASS", 0.2)
        base = SkyPos(181.3, -0.76)
        ts = []
        for k in range(5):
            pos = radec_to_unitvec(SkyPos(base.ra + k * 1e-3, base.dec))
            t = tuple_seed(pos, 1000 + k, s1, {"o.objId": 1000 + k})
            t = tuple_extend(t, pos, 2000 + k, s2, {"t.objId": 2000 + k})
            ts.append(t)
        return ts

    def test_round_trip_conserves_statistics(self):
        ts = self.make_tuples()
        meta = {"o.objId": ColumnMeta("o.objId", "int64"),
                "t.objId": ColumnMeta("t.objId", "int64")}
        batch = tuples_to_batch(ts, meta)
        assert batch.column_names()[:5] == list(RESERVED_COLUMNS)
        back, meta_back = batch_to_tuples(
            ResultTable.from_json_obj(batch.to_json_obj()))
        assert len(back) == len(ts)
        for orig, rt in zip(ts, back):
            assert rt.members == orig.members
            assert rt.a_weight == pytest.approx(orig.a_weight, rel=1e-12)
            for a, b in zip(rt.a_vec, orig.a_vec):
                assert a == pytest.approx(b, rel=1e-12)
            assert rt.carried == orig.carried
        assert set(meta_back) == set(meta)

    def test_match_sigma_recompute(self):
        for t in self.make_tuples():
            ax, ay, az = t.a_vec
            from skyfed.xmatch import match_statistic
            assert match_sigma(ax, ay, az, t.a_weight) == \
                match_statistic(t)

    def test_members_encoding(self):
        members = (("SDSS", 12), ("TWOMASS", 34))
        assert decode_members(encode_members(members)) == members
        assert decode_members("") == ()

    def test_invariant_violation_rejected(self):
        cols = [ColumnMeta(n, "float64") for n in RESERVED_COLUMNS[:4]]
        cols.append(ColumnMeta("_members", "string"))
        bad = ResultTable(cols, [[10.0, 0.0, 0.0, 5.0, "A:1"]])
        with pytest.raises(ServiceError):
            batch_to_tuples(bad)  # |a_vec| > a

    def test_reserved_prefix_enforced(self):
        cols = [ColumnMeta("x", "float64")]
        with pytest.raises(ServiceError):
            batch_to_tuples(ResultTable(cols, [[1.0]]))


class TestXMatchEndpoint:
    def plan_for(self, node_urls, sigmas):
        sql_t = ("SELECT t.objId, t.ra, t.dec FROM PhotoPrimary t "
                 "WHERE AREA(181.3,-0.76,6.5)")
        sql_o = ("SELECT o.objId, o.ra, o.dec FROM PhotoPrimary o "
                 "WHERE AREA(181.3,-0.76,6.5) AND o.type=3.0")
        return [
            XMatchPlanStep(node_urls["TWOMASS"], "TWOMASS", "t", sql_t,
                           sigmas["TWOMASS"], False, 3.5),
            XMatchPlanStep(node_urls["SDSS"], "SDSS", "o", sql_o,
                           sigmas["SDSS"], False, 3.5),
        ]

    def test_two_hop_chain(self, node_urls, sigmas):
        plan = self.plan_for(node_urls, sigmas)
        resp = post_json(
            node_urls["TWOMASS"] + "/xmatch",
            {"plan": [s.to_json_obj() for s in plan], "theta": 3.5,
             "cross_predicates": [], "plan_id": "test-chain"},
            TIMEOUT)
        batch = ResultTable.from_json_obj(resp["batch"])
        tuples, _ = batch_to_tuples(batch)
        for t in tuples:
            assert {a for a, _ in t.members} == {"SDSS", "TWOMASS"}
            assert match_sigma(*t.a_vec, t.a_weight) < 3.5

    def test_wrong_node_rejected(self, node_urls, sigmas):
        plan = self.plan_for(node_urls, sigmas)
        with pytest.raises(ServiceError) as exc:
            post_json(node_urls["SDSS"] + "/xmatch",
                      {"plan": [s.to_json_obj() for s in plan]}, TIMEOUT)
        assert exc.value.status == 400

    def test_dropout_terminal_rejected(self, node_urls, sigmas):
        step = XMatchPlanStep(
            node_urls["SDSS"], "SDSS", "o",
            "SELECT o.objId, o.ra, o.dec FROM PhotoPrimary o "
            "WHERE AREA(181.3,-0.76,5)",
            sigmas["SDSS"], True, 3.0)
        with pytest.raises(ServiceError) as exc:
            post_json(node_urls["SDSS"] + "/xmatch",
                      {"plan": [step.to_json_obj()]}, TIMEOUT)
        assert exc.value.status == 400

    def test_error_propagates_with_hop(self, node_urls, sigmas):
        # downstream step carries bad SQL; the first node must surface
        # the failure naming the failing hop
        plan = self.plan_for(node_urls, sigmas)
        bad = XMatchPlanStep(node_urls["SDSS"], "SDSS", "o",
                             "SELECT gibberish", sigmas["SDSS"],
                             False, 3.5)
        with pytest.raises(ServiceError) as exc:
            post_json(
                node_urls["TWOMASS"] + "/xmatch",
                {"plan": [plan[0].to_json_obj(), bad.to_json_obj()],
                 "theta": 3.5}, TIMEOUT)
        assert exc.value.hop is not None
        assert node_urls["SDSS"] in exc.value.hop

    def test_unreachable_downstream(self, node_urls, sigmas):
        plan = self.plan_for(node_urls, sigmas)
        dead = XMatchPlanStep("http://127.0.0.1:9", "SDSS", "o",
                              plan[1].local_sql, sigmas["SDSS"],
                              False, 3.5)
        with pytest.raises(ServiceError) as exc:
            post_json(
                node_urls["TWOMASS"] + "/xmatch",
                {"plan": [plan[0].to_json_obj(), dead.to_json_obj()],
                 "theta": 3.5}, TIMEOUT)
        assert exc.value.code == "unreachable"
        assert "127.0.0.1:9" in (exc.value.hop or "")

    def test_stats_accounting(self, node_urls, sigmas, running_nodes):
        plan = self.plan_for(node_urls, sigmas)
        post_json(node_urls["TWOMASS"] + "/xmatch",
                  {"plan": [s.to_json_obj() for s in plan],
                   "theta": 3.5, "plan_id": "stats-probe"}, TIMEOUT)
        stats = get_json(node_urls["TWOMASS"] + "/stats",
                         {"plan_id": "stats-probe"}, TIMEOUT)
        assert len(stats["entries"]) == 1
        e = stats["entries"][0]
        assert e["request_bytes"] > 0 and e["response_bytes"] > 0
