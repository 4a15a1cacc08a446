import json

import pytest

from docicl import toy_dataset_path
from docicl.cli import main
from docicl.dataset import load_canonical

from test_adapters import write_funsd


@pytest.fixture
def toy_cfg(tmp_path):
    path = tmp_path / "toy.cfg"
    path.write_text(
        "# toy run\n"
        f"dataset_path = {toy_dataset_path()}\n"
        "dataset_name = toy\n"
        "workers = 1\n",
        encoding="utf-8",
    )
    return str(path)


class TestExitCodes:
    def test_unknown_config_key_is_exit_2(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("no_such_key = 1\n", encoding="utf-8")
        assert main(["--config", str(cfg), "run"]) == 2
        assert "config error" in capsys.readouterr().err

    def test_missing_dataset_is_exit_2(self, tmp_path, capsys):
        cfg = tmp_path / "empty.cfg"
        cfg.write_text("", encoding="utf-8")
        assert main(["--config", str(cfg), "index"]) == 2

    def test_partial_failure_is_exit_1(self, toy_cfg, tmp_path, capsys):
        # a mock reply without braces never validates -> every document fails
        bad = tmp_path / "bad_mock.cfg"
        bad.write_text(
            open(toy_cfg).read() + "mock_llm_mode = fixed_text\nmock_fixed_text = nope\n",
            encoding="utf-8",
        )
        code = main(["--config", str(bad), "run", "--out-dir", str(tmp_path / "out")])
        assert code == 1


class TestRunAndEval:
    def test_run_then_eval(self, toy_cfg, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["--config", toy_cfg, "run", "--out-dir", str(out)]) == 0
        stdout = capsys.readouterr().out
        assert "F1=1.0000" in stdout
        assert (out / "report.json").is_file()
        assert (out / "report.csv").is_file()
        assert (out / "figures" / "f1_per_doc.png").is_file()

        assert main(["--config", toy_cfg, "eval", "--run-dir", str(out)]) == 0
        eval_report = json.loads((out / "report.eval.json").read_text())
        run_report = json.loads((out / "report.json").read_text())
        assert eval_report["aggregate"] == run_report["aggregate"]

    def test_csv_matches_report(self, toy_cfg, tmp_path):
        out = tmp_path / "out"
        main(["--config", toy_cfg, "run", "--out-dir", str(out)])
        rows = (out / "report.csv").read_text().splitlines()
        report = json.loads((out / "report.json").read_text())
        assert len(rows) == 1 + len(report["per_doc"])
        assert rows[0].startswith("doc_id,precision,recall,f1")


class TestAuditCommands:
    def test_index(self, toy_cfg, tmp_path, capsys):
        assert main(["--config", toy_cfg, "--cache-dir", str(tmp_path / "c"), "index"]) == 0
        stats = json.loads(capsys.readouterr().out)
        assert stats["documents"] == 10
        assert (tmp_path / "c" / "layouts").is_dir()

    def test_index_pgm_export(self, toy_cfg, tmp_path):
        assert (
            main(
                [
                    "--config", toy_cfg, "index",
                    "--export-pgm", str(tmp_path / "pgm"),
                ]
            )
            == 0
        )
        files = sorted(p.name for p in (tmp_path / "pgm").glob("*.layout.pgm"))
        assert len(files) == 10
        assert files[0].endswith(".layout.pgm")

    def test_select_dumps_json(self, toy_cfg, tmp_path):
        out = tmp_path / "sel.json"
        code = main(
            ["--config", toy_cfg, "select", "--doc-id", "test-receipt-1", "--output", str(out)]
        )
        assert code == 0
        sel = json.loads(out.read_text())
        assert sel["test_doc_id"] == "test-receipt-1"
        assert len(sel["text_docs"]) == 4
        assert len(sel["layout_docs"]) == 4

    def test_prompt_emits_text(self, toy_cfg, capsys):
        assert main(["--config", toy_cfg, "prompt", "--doc-id", "test-receipt-1"]) == 0
        out = capsys.readouterr().out
        assert "What are the labels for these texts?" in out
        assert out.index("Sample text and corresponding label:") < out.index(
            "Please analyze where each label"
        )

    def test_unknown_doc_id(self, toy_cfg):
        assert main(["--config", toy_cfg, "select", "--doc-id", "nope"]) == 2


class TestIngest:
    def test_funsd_ingest(self, tmp_path, capsys):
        write_funsd(tmp_path / "training_data")
        out = tmp_path / "funsd.jsonl"
        code = main(
            [
                "ingest", "--format", "funsd",
                "--input", str(tmp_path / "training_data"),
                "--output", str(out),
            ]
        )
        assert code == 0
        docs = load_canonical(out)
        assert len(docs) == 2

    def test_empty_dir_fails(self, tmp_path):
        (tmp_path / "empty").mkdir()
        code = main(
            [
                "ingest", "--format", "funsd",
                "--input", str(tmp_path / "empty"),
                "--output", str(tmp_path / "x.jsonl"),
            ]
        )
        assert code == 1


class TestSynth:
    def test_replace_text(self, tmp_path):
        out = tmp_path / "synth.jsonl"
        code = main(
            [
                "--seed", "3",
                "synth", "--mode", "replace_text",
                "--input", str(toy_dataset_path()),
                "--output", str(out),
            ]
        )
        assert code == 0
        originals = {d.doc_id: d for d in load_canonical(toy_dataset_path())}
        for doc in load_canonical(out):
            orig = originals[doc.doc_id]
            assert [e.box for e in doc.entities] == [e.box for e in orig.entities]
            assert [e.gold_label for e in doc.entities] == [e.gold_label for e in orig.entities]

    def test_replace_layout(self, tmp_path):
        out = tmp_path / "synth.jsonl"
        code = main(
            [
                "synth", "--mode", "replace_layout",
                "--input", str(toy_dataset_path()),
                "--output", str(out),
            ]
        )
        assert code == 0
        originals = {d.doc_id: d for d in load_canonical(toy_dataset_path())}
        for doc in load_canonical(out):
            orig = originals[doc.doc_id]
            assert [e.text for e in doc.entities] == [e.text for e in orig.entities]
            assert [e.gold_label for e in doc.entities] == [e.gold_label for e in orig.entities]


class TestSignificance:
    def _report(self, path, f1s):
        per_doc = [
            {"doc_id": f"d{i}", "precision": f, "recall": f, "f1": f,
             "true_positives": 0, "predicted_count": 0, "gold_count": 0}
            for i, f in enumerate(f1s)
        ]
        path.write_text(
            json.dumps(
                {"dataset": "x", "model": "m", "aggregate": {}, "per_doc": per_doc,
                 "config_hash": "h"}
            ),
            encoding="utf-8",
        )

    def test_significance_json(self, tmp_path, capsys):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        self._report(a, [0.9, 0.8, 0.85, 0.7, 0.95, 0.88])
        self._report(b, [0.5, 0.6, 0.55, 0.65, 0.5, 0.6])
        assert main(["significance", "--report-a", str(a), "--report-b", str(b)]) == 0
        result = json.loads(capsys.readouterr().out)
        assert result["method"] == "exact"
        assert result["n_pairs"] == 6
        assert result["p_value"] == pytest.approx(2 / 64)

    def test_mismatched_docs(self, tmp_path, capsys):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        self._report(a, [0.9, 0.8, 0.85, 0.7, 0.95])
        self._report(b, [0.5, 0.6, 0.55, 0.65, 0.5, 0.6])
        assert main(["significance", "--report-a", str(a), "--report-b", str(b)]) == 1
