import json

import pytest

from conftest import store_header

ARTIFACTS = ["cpws.store", "sim.json", "sim.csv", "pca.json", "probe.json", "stats.json", "pwc.jsonl", "spwc.jsonl",
             "report.json"]


def test_version_and_usage(cli):
    r = cli("--version", check=0)
    assert r.stdout.strip().endswith("0.1.0")
    assert cli().returncode == 2
    assert cli("extract").returncode == 2
    assert cli("similarity", "--store", "x", "--format", "xml", "--out", "y").returncode == 2


@pytest.mark.parametrize("name,schema", [
    ("sim.json", "similarity"), ("pca.json", "pca"), ("probe.json", "probe"), ("stats.json", "stats"),
    ("report.json", "report"), ("pwc.jsonl.join_report.json", "join_report"), ("cpws.store.manifest.json", "sidecar"),
    ("pwc.jsonl.manifest.json", "sidecar"), ("spwc.jsonl.manifest.json", "sidecar"),
])
def test_json_outputs_match_schema(workspace, schemas, name, schema):
    assert schemas.errors(schema, json.loads((workspace / name).read_text())) == []


def test_store_header_and_datasets_match_schema(workspace, schemas):
    assert schemas.errors("tracestore_header", store_header(workspace / "cpws.store")) == []
    for name in ["pwc.jsonl", "spwc.jsonl"]:
        for line in (workspace / name).read_text().splitlines():
            assert schemas.errors("dataset_record", json.loads(line)) == []


def test_csv_carries_schema_and_manifest(workspace, schemas):
    lines = (workspace / "sim.csv").read_text().splitlines()
    assert lines[0] == "# schema=ctxprobe.similarity/1"
    assert lines[1].startswith("# manifest=")
    assert schemas.errors("manifest", json.loads(lines[1][len("# manifest="):])) == []
    assert lines[2] == "metric,sublayer,layer,value"


def test_report_markdown(workspace):
    md = (workspace / "report.md").read_text()
    assert md.startswith("<!-- manifest: ")
    assert "# ctxprobe report" in md
    assert "| Layer | SA | Acts | Out |" in md


@pytest.mark.parametrize("name", ARTIFACTS)
def test_rerun_is_byte_identical(workspace, cli, name):
    again = workspace / ("again_" + name)
    args = ["rerun", "--manifest", workspace / name, "--out", again]
    if name == "report.json":
        args += ["--markdown", workspace / "again_report.md"]
    cli(*args, epoch="1900000000", check=0)
    assert again.read_bytes() == (workspace / name).read_bytes()
    if name == "report.json":
        assert (workspace / "again_report.md").read_bytes() == (workspace / "report.md").read_bytes()


def test_rerun_from_sidecar_and_markdown(workspace, cli, tmp_path):
    cli("rerun", "--manifest", workspace / "cpws.store.manifest.json", "--out", tmp_path / "s.store", check=0)
    assert (tmp_path / "s.store").read_bytes() == (workspace / "cpws.store").read_bytes()
    cli("rerun", "--manifest", workspace / "report.md", "--out", tmp_path / "r.json", check=0)
    assert (tmp_path / "r.json").read_bytes() == (workspace / "report.json").read_bytes()
    assert (tmp_path / "r.md").read_bytes() == (workspace / "report.md").read_bytes()


def test_fresh_run_records_source_date_epoch(cli, data, tmp_path):
    cli("stats", "--dataset", data / "datasets" / "cpws_fixture.csv", "--format", "json", "--out",
        tmp_path / "a.json", epoch="1800000000", check=0)
    a = json.loads((tmp_path / "a.json").read_text())
    assert a["manifest"]["timestamp"] == "2027-01-15T08:00:00Z"
    cli("rerun", "--manifest", tmp_path / "a.json", "--out", tmp_path / "b.json", check=0)
    assert json.loads((tmp_path / "b.json").read_text()) == a


def test_validation_errors_exit_2(cli, data, tmp_path):
    missing = cli("stats", "--dataset", tmp_path / "nope.csv", "--out", tmp_path / "o.csv")
    assert missing.returncode == 2 and "error:" in missing.stderr
    (tmp_path / "bad.store").write_bytes(b"\x05\x00\x00\x00\x00\x00\x00\x00{oops")
    assert cli("pca", "--store", tmp_path / "bad.store", "--out", tmp_path / "o.csv").returncode == 2
    (tmp_path / "empty.csv").write_text("keyword,sense,sentence\n")
    r = cli("extract", "--model-dir", data / "tiny_bert", "--dataset", tmp_path / "empty.csv", "--out",
            tmp_path / "e.store")
    assert r.returncode == 2
    assert not (tmp_path / "e.store").exists()
    assert cli("extract", "--model-dir", tmp_path, "--dataset", data / "datasets" / "cpws_fixture.csv", "--out",
               tmp_path / "x.store").returncode == 2


def test_changed_input_blocks_rerun(cli, data, tmp_path):
    ds = tmp_path / "d.csv"
    ds.write_bytes((data / "datasets" / "cpws_fixture.csv").read_bytes())
    cli("stats", "--dataset", ds, "--out", tmp_path / "s.csv", check=0)
    with open(ds, "a") as f:
        f.write("zebra,animal,The zebra ran\n")
    r = cli("rerun", "--manifest", tmp_path / "s.csv")
    assert r.returncode == 2
    assert "checksum" in r.stderr


def test_conflicting_report_inputs_exit_2(workspace, cli, tmp_path):
    cli("similarity", "--store", workspace / "cpws.store", "--format", "json", "--out", tmp_path / "other.json",
        epoch="1700000555", check=0)
    r = cli("report", "--input", workspace / "sim.json", "--input", tmp_path / "other.json", "--out",
            tmp_path / "r.json")
    assert r.returncode == 2
    assert "conflicting manifests" in r.stderr
    assert cli("report", "--input", workspace / "sim.csv", "--out", tmp_path / "r.json").returncode == 2


def test_missing_pair_member_exit_3(cli, data, tmp_path):
    ds = tmp_path / "trunc.csv"
    ds.write_text("keyword,sense,sentence\n"
                  "bank,river,The bank of the river was muddy\n"
                  "bank,money,After a long and tiring day the bank closed\n"
                  "school,place,The school closed for the summer\n"
                  "school,people,The school decided to hire more teachers\n")
    store = tmp_path / "t.store"
    r = cli("extract", "--model-dir", data / "tiny_bert", "--dataset", ds, "--max-len", "6", "--out", store, check=0)
    assert "truncated" in r.stderr
    header = store_header(store)
    assert header["num_skipped"] == 1
    r = cli("similarity", "--store", store, "--out", tmp_path / "s.csv")
    assert r.returncode == 3
    assert "--skip-incomplete-pairs" in r.stderr
    r = cli("similarity", "--store", store, "--skip-incomplete-pairs", "--format", "json", "--out",
            tmp_path / "s.json", check=0)
    assert "WARNING: dropped pair for keyword 'bank'" in r.stderr
    out = json.loads((tmp_path / "s.json").read_text())
    assert out["pairs"] == 1
    assert out["warnings"]
