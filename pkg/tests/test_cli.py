import json
import os

import pytest

from skyfed.cli import main


@pytest.fixture(scope="module")
def federation_file(tmp_path_factory, node_urls):
    cfg = {
        "members": [
            {"archive": name, "url": url, "kind": "catalog"}
            for name, url in node_urls.items()
        ],
        "theta_max": 10.0,
    }
    path = tmp_path_factory.mktemp("cli") / "federation.json"
    path.write_text(json.dumps(cfg))
    return str(path)


class TestQueryCommand:
    SQL = ("SELECT o.objId, t.objId "
           "FROM SDSS:PhotoPrimary o, TWOMASS:PhotoPrimary t "
           "WHERE XMATCH(o, t) < 3.5 AND AREA(181.3, -0.76, 6.5)")

    def test_csv_output(self, federation_file, capsys):
        rc = main(["query", self.SQL, "--federation", federation_file])
        assert rc == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0].startswith("o.objId,t.objId")

    def test_json_output(self, federation_file, capsys):
        rc = main(["query", self.SQL, "--federation", federation_file,
                   "--format", "json"])
        assert rc == 0
        doc = json.loads(capsys.readouterr().out)
        assert [c["name"] for c in doc["columns"]][:2] == \
            ["o.objId", "t.objId"]

    def test_report_dir(self, federation_file, capsys, tmp_path):
        outdir = tmp_path / "rep"
        rc = main(["query", self.SQL, "--federation", federation_file,
                   "--report-dir", str(outdir)])
        assert rc == 0
        assert (outdir / "result.csv").exists()
        assert (outdir / "sky_matches.png").exists()

    def test_query_error_exit_1(self, federation_file, capsys):
        rc = main(["query", "SELECT nonsense(", "--federation",
                   federation_file])
        assert rc == 1

    def test_missing_config_exit_2(self, capsys):
        rc = main(["query", self.SQL, "--federation", "/no/such/file.json"])
        assert rc == 2


class TestDemoCommand:
    def test_demo_round_trip(self, capsys, tmp_path):
        data = tmp_path / "data"
        report = tmp_path / "report"
        rc = main(["demo", "--rows", "1500", "--outdir", str(data),
                   "--report-dir", str(report)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "o.objId" in out
        assert (data / "sdss_data.csv").exists()
        assert os.path.exists(report / "result.csv")
