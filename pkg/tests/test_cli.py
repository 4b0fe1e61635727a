import io
from pathlib import Path

import numpy as np
import pytest

from lightconv.cli import main

FIXTURES = Path(__file__).parent / "fixtures"


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(map(str, argv)), out, err)
    return code, out.getvalue(), err.getvalue()


def kv(text):
    return dict(line.split("\t") for line in text.splitlines())


@pytest.fixture(scope="module")
def doc_artifact(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "doc.fcnv"
    code, out, err = run("train", "--task", "doc_class", "--synthetic", "--seed", 7, "--out", path)
    assert code == 0, err
    return path, kv(out)


def test_analyze_prints_decreasing_ladder():
    code, out, err = run("analyze", "--config", "ref_docclass")
    assert code == 0
    got = kv(out)
    params = [int(got[f"ladder.{v}.params"]) for v in
              ("conv_glu", "conv_gelu", "separable_gelu", "separable_bottleneck_gelu")]
    assert params == sorted(params, reverse=True) and len(set(params)) == 4
    assert float(got["ladder.separable_bottleneck_gelu.ratio.params"]) >= 10
    assert "conv_glu" in err


def test_train_then_eval(doc_artifact):
    path, trained = doc_artifact
    assert int(trained["artifact.bytes"]) == path.stat().st_size
    assert float(trained["train.loss.last"]) < float(trained["train.loss.first"])
    code, out, err = run("eval", path, "--synthetic", "--seed", 7)
    assert code == 0
    assert float(kv(out)["eval.accuracy"]) >= 0.95
    assert "accuracy=" in err


def test_eval_on_data_file(doc_artifact):
    code, out, _ = run("eval", doc_artifact[0], "--data", FIXTURES / "docs.txt")
    assert code == 0 and kv(out)["eval.accuracy.support"] == "3"


def test_bench_reports_kv(doc_artifact):
    path, _ = doc_artifact
    code, out, _ = run("bench", path, "--input-len", 64)
    got = kv(out)
    assert code == 0 and int(got["bench.file_size_bytes"]) == path.stat().st_size
    assert int(got["bench.latency_runs"]) >= 50


def test_bench_without_checksum_exits_4(doc_artifact, tmp_path):
    bad = tmp_path / "cut.fcnv"
    bad.write_bytes(doc_artifact[0].read_bytes()[:-8])
    code, out, err = run("bench", bad)
    assert code == 4 and out == ""
    assert str(bad) in err and "checksum" in err


def test_export(doc_artifact, tmp_path):
    dest = tmp_path / "w.txt"
    assert run("export", doc_artifact[0], "--out", dest)[0] == 0
    lines = dest.read_text().splitlines()
    assert "# format = FCNV/1" in lines
    rows = [line.split("\t") for line in lines if not line.startswith("#")]
    name, shape, values = rows[0]
    dims = [int(d) for d in shape.split("x")]
    assert len(values.split()) == int(np.prod(dims))


@pytest.mark.parametrize("argv", [
    ("frobnicate",),
    ("train", "--task", "doc_class"),
    ("train", "--task", "doc_class", "--seed", 1),
    ("analyze", "--config", "no_such_config"),
])
def test_usage_errors_exit_2(argv):
    assert run(*argv)[0] == 2


def test_eval_synthetic_needs_seed(doc_artifact):
    code, _, err = run("eval", doc_artifact[0], "--synthetic")
    assert code == 2 and "--seed" in err


def test_empty_training_data_exits_3(tmp_path):
    code, _, err = run("train", "--task", "doc_class", "--seed", 1, "--data", FIXTURES / "empty.txt",
                       "--out", tmp_path / "x.fcnv")
    assert code == 3 and "empty" in err


def test_malformed_data_exits_3(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("#intent a\nx\t-\n")
    code, _, err = run("train", "--task", "intent_slot", "--seed", 1, "--data", bad, "--out", tmp_path / "x.fcnv")
    assert code == 3 and "bad.txt:2" in err


def test_missing_artifact_exits_4(tmp_path):
    assert run("bench", tmp_path / "nope.fcnv")[0] == 4
