import json
import os
import struct
import subprocess
from pathlib import Path

import pytest
from jsonschema import Draft202012Validator
from referencing import Registry, Resource


def pytest_addoption(parser):
    parser.addoption("--ctxprobe", required=True, help="path to the ctxprobe binary")
    parser.addoption("--data", required=True, help="tests/data directory")
    parser.addoption("--schemas", required=True, help="schemas directory")


@pytest.fixture(scope="session")
def data(request):
    return Path(request.config.getoption("--data"))


class Cli:
    def __init__(self, binary):
        self.binary = binary

    def __call__(self, *args, cwd=None, epoch="1700000000", check=None):
        env = dict(os.environ, SOURCE_DATE_EPOCH=epoch)
        r = subprocess.run([self.binary, *map(str, args)], capture_output=True, text=True, cwd=cwd, env=env)
        if check is not None:
            assert r.returncode == check, (args, r.returncode, r.stdout, r.stderr)
        return r


@pytest.fixture(scope="session")
def cli(request):
    return Cli(request.config.getoption("--ctxprobe"))


class Schemas:
    def __init__(self, root):
        self.docs = {p.stem: json.loads(p.read_text()) for p in Path(root).glob("*.json")}
        self.registry = Registry().with_resources(
            [(d["$id"], Resource.from_contents(d)) for d in self.docs.values()])

    def errors(self, name, doc):
        v = Draft202012Validator(self.docs[name], registry=self.registry)
        return [e.message for e in v.iter_errors(doc)]


@pytest.fixture(scope="session")
def schemas(request):
    return Schemas(request.config.getoption("--schemas"))


def store_header(path):
    raw = Path(path).read_bytes()
    (n,) = struct.unpack_from("<Q", raw, 0)
    return json.loads(raw[8:8 + n].decode("utf-8"))


@pytest.fixture(scope="session")
def workspace(tmp_path_factory, cli, data):
    """Every command run once on the fixtures."""
    w = tmp_path_factory.mktemp("ws")
    ds = data / "datasets"
    cpws = ds / "cpws_fixture.csv"
    store = w / "cpws.store"
    cli("extract", "--model-dir", data / "tiny_bert", "--dataset", cpws, "--out", store, check=0)
    cli("similarity", "--store", store, "--format", "json", "--out", w / "sim.json", check=0)
    cli("similarity", "--store", store, "--out", w / "sim.csv", check=0)
    cli("pca", "--store", store, "--format", "json", "--out", w / "pca.json", check=0)
    cli("probe", "--store", store, "--format", "json", "--kind", "svm", "--svm-epochs", "30", "--out",
        w / "probe.json", check=0)
    cli("stats", "--dataset", cpws, "--format", "json", "--out", w / "stats.json", check=0)
    cli("build-pwc", "--cwi", ds / "cwi_fixture.tsv", "--secoda", ds / "secoda_fixture.csv", "--out",
        w / "pwc.jsonl", check=0)
    cli("subset-spwc", "--dataset", w / "pwc.jsonl", "--seed", "2", "--out", w / "spwc.jsonl", check=0)
    cli("report", "--input", w / "sim.json", "--input", w / "pca.json", "--input", w / "probe.json",
        "--input", w / "stats.json", "--out", w / "report.json", check=0)
    return w
