import json
import subprocess
import sys

import pytest

from sqp.cli import main
from sqp.data import load_matrix, load_runs


@pytest.fixture
def corpus(tmp_path):
    (tmp_path / "qrels").write_text(
        "q1 0 d1 1\nq1 0 d2 0\nq1 0 d3 2\nq2 0 d2 1\nq2 0 d4 1\nq3 0 d1 1\n"
    )
    runs = tmp_path / "runs"
    runs.mkdir()
    rows = {
        "bm25": {"q1": ["d1", "d2", "d3"], "q2": ["d4", "d1", "d2"], "q3": ["d2", "d1"]},
        "pl2": {"q1": ["d3", "d1", "d2"], "q2": ["d1", "d3", "d5"], "q3": ["d1", "d2"]},
        "dph": {"q1": ["d2", "d5", "d6"], "q2": ["d2", "d4", "d1"], "q3": ["d3", "d4"]},
    }
    for tag, per_q in rows.items():
        lines = [f"{q} Q0 {d} {r} {10 - r} {tag}" for q, docs in per_q.items() for r, d in enumerate(docs, 1)]
        (runs / f"{tag}.run").write_text("\n".join(lines) + "\n")
    feats = []
    for i, q in enumerate(["q1", "q2", "q3"]):
        for j, d in enumerate(["d1", "d2"]):
            feats.append(f"{q}\t{d}\tbm25\t{(i + 1) * (j + 2)}.5")
            feats.append(f"{q}\t{d}\tidf\t{(3 - i) + j * 0.25}")
    (tmp_path / "feats.tsv").write_text("\n".join(feats) + "\n")
    return tmp_path


def sqp(*args):
    return main([str(a) for a in args])


def test_eval(corpus):
    assert sqp("eval", "--runs", corpus / "runs", "--qrels", corpus / "qrels",
               "--metric", "p@2", "--out", corpus / "m.tsv") == 0
    m = load_matrix(corpus / "m.tsv")
    assert m.metric_name == "p@2"
    assert m.configs == ("bm25", "dph", "pl2")
    assert m.queries == ("q1", "q2", "q3")
    assert m.score("bm25", "q1") == 0.5 and m.score("dph", "q2") == 1.0


def test_eval_rbp_residuals(corpus):
    assert sqp("eval", "--runs", corpus / "runs", "--qrels", corpus / "qrels", "--metric", "rbp:0.5:3",
               "--out", corpus / "m.tsv", "--rbp-residuals", corpus / "res.tsv") == 0
    lines = (corpus / "res.tsv").read_text().splitlines()
    assert lines[0].startswith("#") and len(lines) == 10
    c, q, base, res = lines[1].split("\t")
    assert 0 <= float(base) + float(res) <= 1
    assert sqp("eval", "--runs", corpus / "runs", "--qrels", corpus / "qrels", "--metric", "ap",
               "--out", corpus / "m.tsv", "--rbp-residuals", corpus / "r.tsv") == 3


def pipeline(corpus, tag):
    d = corpus
    assert sqp("eval", "--runs", d / "runs", "--qrels", d / "qrels", "--metric", "ndcg@3",
               "--out", d / f"m{tag}.tsv") == 0
    assert sqp("select", "--matrix", d / f"m{tag}.tsv", "--baseline", "bm25", "--objective", "e",
               "--k", 2, "--out", d / f"pool{tag}.json") == 0
    assert sqp("train", "--matrix", d / f"m{tag}.tsv", "--pool", d / f"pool{tag}.json",
               "--features", d / "feats.tsv", "--zscore", "--out", d / f"model{tag}.json") == 0
    assert sqp("match", "--model", d / f"model{tag}.json", "--features", d / "feats.tsv",
               "--out", d / f"assign{tag}.tsv") == 0
    assert sqp("fuse", "--runs", f"{d / 'runs/bm25.run'},{d / 'runs/pl2.run'}",
               "--out", d / f"fused{tag}.run") == 0
    assert sqp("experiment", "--matrix", d / f"m{tag}.tsv", "--features", d / "feats.tsv",
               "--methods", "best_trained,erisk_cosine,oracle_full", "--draws", 2, "--k", 2,
               "--references", "best_trained", "--out", d / f"rep{tag}") == 0
    assert sqp("synth", "--seed", 3, "--out-prefix", d / f"syn{tag}") == 0
    return [f"m{tag}.tsv", f"pool{tag}.json", f"model{tag}.json", f"assign{tag}.tsv", f"fused{tag}.run",
            f"rep{tag}.tsv", f"rep{tag}.md", f"syn{tag}.matrix.tsv", f"syn{tag}.features.tsv",
            f"syn{tag}.descriptors.tsv"]


def test_pipeline_outputs(corpus):
    pipeline(corpus, "")
    pool = json.loads((corpus / "pool.json").read_text())
    chosen = [s["config_id"] for s in pool["steps"]]
    assert chosen[0] == "bm25" and len(chosen) == 2
    assignments = [a.split("\t") for a in (corpus / "assign.tsv").read_text().splitlines()]
    assert [a[0] for a in assignments] == ["q1", "q2", "q3"]
    assert all(a[1] in chosen for a in assignments)
    fused = load_runs(corpus / "fused.run")
    assert [r.tag for r in fused] == ["combsum"] * 3
    assert "| best_trained |" in (corpus / "rep.md").read_text()


def test_reruns_are_byte_identical(corpus):
    first = pipeline(corpus, "a")
    second = pipeline(corpus, "b")
    for x, y in zip(first, second):
        assert (corpus / x).read_bytes() == (corpus / y).read_bytes(), x


def test_report_suffix(corpus):
    pipeline(corpus, "")
    assert sqp("experiment", "--matrix", corpus / "m.tsv", "--methods", "best_trained,oracle_full",
               "--out", corpus / "r.md") == 0
    assert (corpus / "r.md").read_text().startswith("Metric:")
    assert not (corpus / "r.md.tsv").exists()


def test_format_errors_exit_2(corpus, capsys):
    (corpus / "bad.tsv").write_text("c1\tq1\t1.5\n")
    assert sqp("select", "--matrix", corpus / "bad.tsv", "--baseline", "c1", "--k", 1,
               "--out", corpus / "p.json") == 2
    assert "bad.tsv" in capsys.readouterr().err
    assert sqp("select", "--matrix", corpus / "missing.tsv", "--baseline", "c1", "--k", 1,
               "--out", corpus / "p.json") == 2
    assert sqp("eval", "--runs", corpus / "runs", "--qrels", corpus / "qrels", "--metric", "map@x",
               "--out", corpus / "m.tsv") == 2


def test_contract_errors_exit_3(corpus):
    pipeline(corpus, "")
    assert sqp("select", "--matrix", corpus / "m.tsv", "--baseline", "nope", "--k", 1,
               "--out", corpus / "p.json") == 3
    assert sqp("select", "--matrix", corpus / "m.tsv", "--baseline", "bm25", "--k", 9,
               "--out", corpus / "p.json") == 3
    assert sqp("experiment", "--matrix", corpus / "m.tsv", "--methods", "erisk_cosine",
               "--out", corpus / "r.tsv") == 3


def test_workers_env(corpus, monkeypatch):
    monkeypatch.setenv("SQP_WORKERS", "2")
    assert sqp("--workers", 8, "eval", "--runs", corpus / "runs", "--qrels", corpus / "qrels",
               "--metric", "rr", "--out", corpus / "m.tsv") == 0
    monkeypatch.setenv("SQP_WORKERS", "many")
    assert sqp("eval", "--runs", corpus / "runs", "--qrels", corpus / "qrels",
               "--metric", "rr", "--out", corpus / "m.tsv") == 2


def test_module_entry_point(corpus):
    proc = subprocess.run([sys.executable, "-m", "sqp", "synth", "--clusters", "2", "--out-prefix",
                           str(corpus / "s")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (corpus / "s.matrix.tsv").exists()
