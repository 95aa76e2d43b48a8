"""Command-line parsing, emission formats, exit codes, and round-tripping."""

import json
import math
import subprocess
import sys

import pytest

from relayaloha.cli import (ExperimentConfig, UsageError, main, parse_config,
                            reparse_metadata, run_experiment)


def run_cli(args, tmp_path=None):
    proc = subprocess.run([sys.executable, "-m", "relayaloha.cli", *args],
                          capture_output=True, text=True)
    return proc.returncode, proc.stdout, proc.stderr


class TestParsing:
    def test_uplink_sweep(self):
        cfg = parse_config(["uplink", "--eps", "0.3", "--k", "1,2,4,6", "--g", "0.1:0.5:0.1"])
        assert cfg.command == "uplink"
        assert cfg.params["k"] == [1, 2, 4, 6]
        assert cfg.params["g"] == pytest.approx([0.1, 0.2, 0.3, 0.4, 0.5])

    def test_missing_command(self):
        with pytest.raises(UsageError):
            parse_config([])

    def test_bad_range(self):
        with pytest.raises(UsageError):
            parse_config(["uplink", "--g", "1:0.5:0.1"])
        with pytest.raises(UsageError):
            parse_config(["uplink", "--g", "0.1:0.5:-0.1"])

    def test_bad_eps(self):
        with pytest.raises(UsageError):
            parse_config(["uplink", "--eps", "1.4"])

    def test_unknown_config_key(self, tmp_path):
        f = tmp_path / "c.json"
        f.write_text(json.dumps({"command": "uplink", "gee": 1.0}))
        with pytest.raises(UsageError, match="gee"):
            parse_config(["--config", str(f)])

    def test_flags_override_file(self, tmp_path):
        f = tmp_path / "c.json"
        f.write_text(json.dumps({"command": "uplink", "eps": [0.1], "k": [4]}))
        cfg = parse_config(["--config", str(f), "uplink", "--eps", "0.5"])
        assert cfg.params["eps"] == [0.5]
        assert cfg.params["k"] == [4]

    def test_defaults_follow_running_example(self, tmp_path):
        out = tmp_path / "t.json"
        cfg = parse_config(["sfp", "--mode", "interference", "--r", "0.45",
                            "--out", str(out), "--format", "json"])
        table, code = run_experiment(cfg)
        assert code == 0
        assert table.meta["params"]["eps"] == [0.3]
        assert table.meta["params"]["g"][0] == pytest.approx(1.0 / 0.7)
        assert table.meta["seed"] == 41226


class TestExitCodes:
    def test_usage_error_is_2(self):
        code, _, err = run_cli(["uplink", "--eps", "2.0"])
        assert code == 2 and "eps" in err

    def test_unknown_flag_is_2(self):
        code, _, _ = run_cli(["uplink", "--nope", "1"])
        assert code == 2

    def test_success_is_0(self):
        code, out, _ = run_cli(["uplink", "--g", "0.5,1.0", "--k", "2"])
        assert code == 0
        assert out.startswith("# json-metadata: ")

    def test_verify_conjecture_passes(self):
        code, out, _ = run_cli(["verify-conjecture", "--q", "3", "--points", "3"])
        assert code == 0
        gaps = [abs(float(line.split(",")[-1])) for line in out.splitlines()[2:]]
        assert max(gaps) < 1e-6


class TestEmission:
    def test_csv_json_numeric_identity(self, tmp_path):
        fcsv, fjson = tmp_path / "a.csv", tmp_path / "a.json"
        base = ["bound", "--k", "4", "--eps", "0.3", "--g", "1.4286"]
        assert main(base + ["--out", str(fcsv), "--format", "csv"]) == 0
        assert main(base + ["--out", str(fjson), "--format", "json"]) == 0
        lines = fcsv.read_text().splitlines()
        doc = json.loads(fjson.read_text())
        assert lines[1].split(",") == doc["columns"]
        for row_line, row in zip(lines[2:], doc["rows"]):
            for cell, val in zip(row_line.split(","), row):
                assert float(cell) == val

    def test_metadata_line_parses(self, tmp_path):
        f = tmp_path / "a.csv"
        assert main(["plr", "--g", "0.5", "--k", "1,2", "--out", str(f)]) == 0
        head = f.read_text().splitlines()[0]
        assert head.startswith("# json-metadata: ")
        meta = json.loads(head[len("# json-metadata: "):])
        assert meta["command"] == "plr"
        assert meta["params"]["k"] == [1, 2]

    def test_round_trip_reproduces_table(self, tmp_path):
        f1 = tmp_path / "r1.csv"
        assert main(["simulate", "--what", "uplink", "--g", "1.0", "--k", "2",
                     "--mul", "2000", "--trials", "4", "--out", str(f1)]) in (0, 1)
        meta = json.loads(f1.read_text().splitlines()[0][len("# json-metadata: "):])
        cfg = reparse_metadata(meta)
        f2 = tmp_path / "r2.csv"
        cfg2 = ExperimentConfig(cfg.command, cfg.params, str(f2), "csv")
        run_experiment(cfg2)
        assert f1.read_text().splitlines()[1:] == f2.read_text().splitlines()[1:]


class TestCommands:
    def test_bound_table(self):
        code, out, _ = run_cli(["bound", "--k", "3", "--eps", "0.3", "--g", "1.4286"])
        assert code == 0
        rows = [line.split(",") for line in out.splitlines()[2:]]
        assert len(rows) == 3
        assert float(rows[-1][1]) == 0.0  # leaving every relay out relaxes nothing

    def test_rlc_finite_columns(self):
        code, out, _ = run_cli(["rlc-finite", "--mul", "25", "--q", "2",
                                "--r", "0.45:0.65:0.1"])
        assert code == 0
        assert out.splitlines()[1] == "r,c1,c2,s_dl_analytic"
        assert len(out.splitlines()) == 2 + 3

    def test_rlc_finite_bad_field_order(self):
        code, _, err = run_cli(["rlc-finite", "--q", "3"])
        assert code == 2 and "power of two" in err

    def test_sfp_channel_mode(self):
        code, out, _ = run_cli(["sfp", "--mode", "channel", "--q", "4", "--r", "0.5"])
        assert code == 0
        header = out.splitlines()[1].split(",")
        assert header[:2] == ["r", "s_dl"] and len(header) == 2 + 2 * 5

    def test_simulate_uplink_cross_validation(self):
        code, out, _ = run_cli(["simulate", "--what", "uplink", "--g", "0.8,1.6",
                                "--k", "1,2", "--mul", "20000", "--trials", "10"])
        assert code == 0
        lines = out.splitlines()
        assert lines[1].split(",")[-1] == "ok"
        oks = [float(line.split(",")[-1]) for line in lines[2:]]
        assert sum(oks) >= 0.75 * len(oks)
