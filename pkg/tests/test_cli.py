"""Command-line front end: outputs, exit codes, config handling."""

import csv
import json
import os

import numpy as np
import pytest

from tunnelscope import cli
from tunnelscope.features import LABEL_COLUMNS
from tunnelscope.pcapio import PacketRecord, Transport, write_pcap
from tunnelscope.synthgen import GenConfig, export_corpus, generate_corpus


def one_flow_pcap(path):
    records = [
        PacketRecord(1_000, "10.0.0.1", "10.9.9.9", Transport.TCP, 1111, 443,
                     40 + 200, 200),
        PacketRecord(2_000, "10.9.9.9", "10.0.0.1", Transport.TCP, 443, 1111,
                     40 + 1000, 1000),
        PacketRecord(3_000, "10.0.0.1", "10.9.9.9", Transport.TCP, 1111, 443,
                     40 + 0, 0),
    ]
    write_pcap(records, path)


@pytest.fixture()
def corpus_dir(tmp_path, tiny_corpus):
    export_corpus(tiny_corpus, tmp_path / "c.pcap", tmp_path / "c-labels.json")
    return tmp_path


def read_table(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.reader(lines))


class TestExtract:
    def test_fs2_column_arity_on_one_flow(self, tmp_path):
        pcap = tmp_path / "one.pcap"
        one_flow_pcap(pcap)
        rc = cli.main(["extract", "--pcap", str(pcap), "--spec", "fs2",
                       "--n", "50", "--out", "f.csv",
                       "--out-dir", str(tmp_path)])
        assert rc == 0
        rows = read_table(tmp_path / "f.csv")
        assert len(rows[0]) == 50 + 50 + 2 + len(LABEL_COLUMNS)
        assert len(rows) == 1 + 1
        assert (tmp_path / "f.csv.meta.json").exists()

    def test_missing_file_exits_2(self, tmp_path, capsys):
        rc = cli.main(["extract", "--pcap", str(tmp_path / "nope.pcap"),
                       "--out", "f.csv", "--out-dir", str(tmp_path)])
        assert rc == 2
        assert "error" in capsys.readouterr().err

    def test_corrupt_capture_reports_offset(self, tmp_path, capsys):
        import struct

        bad = tmp_path / "bad.pcap"
        header = struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, 1)
        bad.write_bytes(header + b"\x01\x02\x03")  # stray partial record
        rc = cli.main(["extract", "--pcap", str(bad), "--out", "f.csv",
                       "--out-dir", str(tmp_path)])
        assert rc == 2
        err = capsys.readouterr().err
        assert "offset" in err and "bad.pcap" in err

    def test_rerun_is_byte_identical(self, corpus_dir):
        argv = ["extract", "--pcap", str(corpus_dir / "c.pcap"),
                "--labels", str(corpus_dir / "c-labels.json"),
                "--n", "5", "--out", "f.csv", "--out-dir", str(corpus_dir)]
        assert cli.main(argv) == 0
        first = (corpus_dir / "f.csv").read_bytes()
        assert cli.main(argv) == 0
        assert (corpus_dir / "f.csv").read_bytes() == first

    def test_unlabeled_rows_have_empty_labels(self, tmp_path):
        pcap = tmp_path / "one.pcap"
        one_flow_pcap(pcap)
        cli.main(["extract", "--pcap", str(pcap), "--n", "3",
                  "--out", "f.csv", "--out-dir", str(tmp_path)])
        rows = read_table(tmp_path / "f.csv")
        assert rows[1][-5:] == ["", "", "", "", ""]


class TestSynth:
    def test_writes_corpus_and_manifest(self, tmp_path):
        rc = cli.main(["synth", "--seed", "3", "--flows-per-cell", "1",
                       "--mtus", "1500", "--out-dir", str(tmp_path)])
        assert rc == 0
        manifest = json.loads((tmp_path / "corpus-labels.json").read_text())
        assert len(manifest["flows"]) == 1 * 1 * 4 * 6
        meta = json.loads((tmp_path / "synth.meta.json").read_text())
        assert meta["seed"] == 3 and meta["tool"] == "tunnelscope"

    def test_profiles_file_used(self, tmp_path):
        from tunnelscope.synthgen import (
            default_app_profiles,
            default_tunnel_profiles,
            save_profiles,
        )
        profiles = tmp_path / "p.json"
        save_profiles(default_tunnel_profiles()[:1], default_app_profiles()[:2],
                      profiles)
        rc = cli.main(["synth", "--flows-per-cell", "1", "--mtus", "1500",
                       "--profiles", str(profiles), "--out-dir", str(tmp_path)])
        assert rc == 0
        manifest = json.loads((tmp_path / "corpus-labels.json").read_text())
        assert len(manifest["flows"]) == 1 * 1 * 2 * 2  # 1 tunnel + untunneled


class TestConfigFile:
    def test_config_supplies_flags_cli_wins(self, tmp_path, corpus_dir):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"n": 3, "seed": 55}))
        rc = cli.main(["extract", "--pcap", str(corpus_dir / "c.pcap"),
                       "--out", "f.csv", "--out-dir", str(tmp_path),
                       "--config", str(config), "--seed", "7"])
        assert rc == 0
        meta = json.loads((tmp_path / "f.csv.meta.json").read_text())
        assert meta["config"]["n"] == 3      # from the config file
        assert meta["seed"] == 7             # command line wins

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"bogus_flag": 1}))
        rc = cli.main(["synth", "--config", str(config),
                       "--out-dir", str(tmp_path)])
        assert rc == 2
        assert "bogus_flag" in capsys.readouterr().err

    def test_unknown_cli_flag_rejected(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            cli.main(["synth", "--frobnicate", "--out-dir", str(tmp_path)])
        assert exc.value.code == 2


class TestExperimentCommands:
    def test_nestedcv_report(self, corpus_dir):
        rc = cli.main(["nestedcv", "--pcap", str(corpus_dir / "c.pcap"),
                       "--labels", str(corpus_dir / "c-labels.json"),
                       "--alg", "dt", "--n", "10",
                       "--out-dir", str(corpus_dir), "--seed", "2"])
        assert rc == 0
        doc = json.loads((corpus_dir / "nestedcv.json").read_text())
        assert len(doc["fold_scores"]) == 5
        assert doc["meta"]["seed"] == 2
        assert (corpus_dir / "nestedcv.png").exists()

    def test_stratification_problem_exits_1(self, corpus_dir, capsys):
        rc = cli.main(["nestedcv", "--pcap", str(corpus_dir / "c.pcap"),
                       "--labels", str(corpus_dir / "c-labels.json"),
                       "--alg", "dt", "--stage", "app:ssh", "--n", "5",
                       "--outer-k", "40", "--out-dir", str(corpus_dir)])
        assert rc == 1
        assert "fewer than" in capsys.readouterr().err

    def test_importance_top_rows_descending(self, corpus_dir):
        rc = cli.main(["importance", "--pcap", str(corpus_dir / "c.pcap"),
                       "--labels", str(corpus_dir / "c-labels.json"),
                       "--alg", "rf", "--n", "10", "--top", "20",
                       "--out-dir", str(corpus_dir)])
        assert rc == 0
        rows = read_table(corpus_dir / "importance.csv")
        assert rows[0] == ["feature", "importance"]
        values = [float(r[1]) for r in rows[1:]]
        assert len(values) == 20
        assert values == sorted(values, reverse=True)

    def test_dg_mtu_pivot_columns(self, corpus_dir):
        rc = cli.main(["dg", "--axis", "mtu",
                       "--pcap", str(corpus_dir / "c.pcap"),
                       "--labels", str(corpus_dir / "c-labels.json"),
                       "--train-mtu", "1500", "--test-mtus", "1500,1200",
                       "--specs", "signed_size:10", "--alg", "dt",
                       "--repeats", "2", "--out-dir", str(corpus_dir)])
        assert rc == 0
        rows = read_table(corpus_dir / "dg.csv")
        assert rows[0] == ["spec", "train", "test_1200", "test_1500"]

    def test_dg_default_mtu_list_gives_six_test_columns(self, tmp_path):
        corpus = generate_corpus(GenConfig(flows_per_cell=1, master_seed=17))
        export_corpus(corpus, tmp_path / "all.pcap", tmp_path / "all.json")
        rc = cli.main(["dg", "--axis", "mtu",
                       "--pcap", str(tmp_path / "all.pcap"),
                       "--labels", str(tmp_path / "all.json"),
                       "--train-mtu", "1500", "--specs", "signed_size:5",
                       "--alg", "dt", "--repeats", "1", "--no-figures",
                       "--out-dir", str(tmp_path)])
        assert rc == 0
        rows = read_table(tmp_path / "dg.csv")
        assert rows[0] == ["spec", "train", "test_1200", "test_1300",
                           "test_1400", "test_1420", "test_1472", "test_1500"]

    def test_dg_dataset_axis(self, tmp_path):
        for tag, seed in (("east", 41), ("west", 42)):
            corpus = generate_corpus(GenConfig(mtu_list=[1500], flows_per_cell=2,
                                               master_seed=seed, dataset_tag=tag))
            export_corpus(corpus, tmp_path / f"{tag}.pcap",
                          tmp_path / f"{tag}.json")
        rc = cli.main(["dg", "--axis", "dataset",
                       "--train-pcap", str(tmp_path / "east.pcap"),
                       "--train-labels", str(tmp_path / "east.json"),
                       "--test-pcap", str(tmp_path / "west.pcap"),
                       "--test-labels", str(tmp_path / "west.json"),
                       "--specs", "signed_size:10", "--alg", "dt",
                       "--repeats", "2", "--out-dir", str(tmp_path)])
        assert rc == 0
        doc = json.loads((tmp_path / "dg.json").read_text())
        pairs = {(c["train"], c["test"]) for c in doc["cells"]}
        assert pairs == {("east", "west"), ("west", "east")}

    def test_pipeline_reports_stage_scores(self, corpus_dir):
        rc = cli.main(["pipeline", "--train-pcap", str(corpus_dir / "c.pcap"),
                       "--train-labels", str(corpus_dir / "c-labels.json"),
                       "--alg", "dt", "--n", "10", "--app-n", "20",
                       "--save-models", "--out-dir", str(corpus_dir)])
        assert rc == 0
        doc = json.loads((corpus_dir / "pipeline.json").read_text())
        assert "detection_f1" in doc["stage_scores"]
        lines = (corpus_dir / "predictions.jsonl").read_text().splitlines()
        assert len(lines) == doc["flows"]
        first = json.loads(lines[0])
        assert {"key", "is_tunnel", "tunnel_kind", "app_kind", "scores"} == set(first)
        assert (corpus_dir / "models" / "manifest.json").exists()

    def test_pipeline_model_reuse(self, corpus_dir):
        train = ["pipeline", "--train-pcap", str(corpus_dir / "c.pcap"),
                 "--train-labels", str(corpus_dir / "c-labels.json"),
                 "--alg", "dt", "--n", "10", "--app-n", "20",
                 "--save-models", "--out-dir", str(corpus_dir)]
        assert cli.main(train) == 0
        first = (corpus_dir / "predictions.jsonl").read_text()
        reuse = ["pipeline", "--train-pcap", str(corpus_dir / "c.pcap"),
                 "--train-labels", str(corpus_dir / "c-labels.json"),
                 "--load-models", str(corpus_dir / "models"),
                 "--out-dir", str(corpus_dir)]
        assert cli.main(reuse) == 0
        assert (corpus_dir / "predictions.jsonl").read_text() == first

    def test_learncurve_table(self, corpus_dir):
        rc = cli.main(["learncurve", "--pcap", str(corpus_dir / "c.pcap"),
                       "--labels", str(corpus_dir / "c-labels.json"),
                       "--alg", "dt", "--sizes", "20,40", "--n", "5",
                       "--repeats", "2", "--out-dir", str(corpus_dir)])
        assert rc == 0
        rows = read_table(corpus_dir / "learncurve.csv")
        assert [r[0] for r in rows[1:]] == ["20", "40"]

    def test_sweep_table(self, corpus_dir):
        rc = cli.main(["sweep", "--pcap", str(corpus_dir / "c.pcap"),
                       "--labels", str(corpus_dir / "c-labels.json"),
                       "--families", "signed_size", "--n-values", "1,5",
                       "--algorithms", "dt,gnb", "--k", "3",
                       "--out-dir", str(corpus_dir)])
        assert rc == 0
        rows = read_table(corpus_dir / "sweep.csv")
        assert len(rows) == 1 + 2 * 2
        assert (corpus_dir / "sweep.png").exists()

    def test_no_figures_flag(self, corpus_dir, tmp_path):
        rc = cli.main(["sweep", "--pcap", str(corpus_dir / "c.pcap"),
                       "--labels", str(corpus_dir / "c-labels.json"),
                       "--families", "signed_size", "--n-values", "1",
                       "--algorithms", "dt", "--k", "3", "--no-figures",
                       "--out-dir", str(tmp_path)])
        assert rc == 0
        assert not (tmp_path / "sweep.png").exists()


class TestOutDirEnv:
    def test_env_var_fallback(self, tmp_path, monkeypatch):
        pcap = tmp_path / "one.pcap"
        one_flow_pcap(pcap)
        target = tmp_path / "from-env"
        monkeypatch.setenv(cli.OUT_DIR_ENV, str(target))
        rc = cli.main(["extract", "--pcap", str(pcap), "--n", "2",
                       "--out", "f.csv"])
        assert rc == 0
        assert (target / "f.csv").exists()
