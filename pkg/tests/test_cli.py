"""Command-line surface: parsing, precedence, file formats, exit codes."""
import csv
import json
import math

import numpy as np
import pytest

from overcp import cli, descent, lazybound, model


RUN_ARGS = ["run", "--d", "4", "--r", "1", "--l", "3", "--m", "5",
            "--H", "20", "--K", "2", "--seeds", "1..2"]


def read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh]


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


class TestParsers:
    def test_seed_spec_range(self):
        assert cli.parse_seed_spec("3..6") == [3, 4, 5, 6]
        assert cli.parse_seed_spec("5..5") == [5]

    def test_seed_spec_commas(self):
        assert cli.parse_seed_spec("4,1,9") == [4, 1, 9]

    @pytest.mark.parametrize("bad", ["6..3", "a..b", "", "1,x", "1.5,2"])
    def test_seed_spec_rejects(self, bad):
        with pytest.raises(cli.ConfigError):
            cli.parse_seed_spec(bad)

    def test_int_list(self):
        assert cli.parse_int_list("20,40, 80") == [20, 40, 80]
        with pytest.raises(cli.ConfigError):
            cli.parse_int_list("20,forty")

    def test_grid_inclusive_endpoints(self):
        assert cli.parse_grid("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]
        # a step that does not divide the span still stops at or before stop
        assert cli.parse_grid("0:1:0.3") == [0.0, 0.3, 0.6, 0.9]
        assert cli.parse_grid("2:2:1") == [2.0]

    def test_grid_rounding_is_clean(self):
        vals = cli.parse_grid("0.5:2.5:0.0625")
        assert len(vals) == 33
        assert vals[-1] == 2.5  # no 2.4999... endpoint loss

    @pytest.mark.parametrize("bad", ["1:2", "1:0:1", "0:1:0", "a:b:c"])
    def test_grid_rejects(self, bad):
        with pytest.raises(cli.ConfigError):
            cli.parse_grid(bad)

    def test_bool(self):
        assert cli.parse_bool("TRUE") and cli.parse_bool("on")
        assert not cli.parse_bool("0")
        with pytest.raises(cli.ConfigError):
            cli.parse_bool("maybe")


class TestConfigFile:
    def test_round_trip_identity(self):
        cfg = {"d": "10", "epsilon": "0.05", "format": "csv"}
        assert cli.parse_config_text(cli.serialize_config(cfg)) == cfg

    def test_comments_and_blanks(self):
        text = "\n# full-line comment\nd = 4  # trailing\n\n  l=3\n"
        assert cli.parse_config_text(text) == {"d": "4", "l": "3"}

    @pytest.mark.parametrize("bad", ["d", "= 3", "d =", "d 4"])
    def test_malformed_lines(self, bad):
        with pytest.raises(cli.ConfigError):
            cli.parse_config_text(bad)

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("d = 4\nr = 1\nl = 3\nm = 5\nseeds = 1\nbogus = 7\n")
        code = cli.main(["run", "--config", str(cfg), "--out", str(tmp_path)])
        assert code == cli.EXIT_USAGE

    def test_flag_overrides_file(self, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("l = 3\nd = 2,4\nxgrid = 0:1:0.5\n")
        code = cli.main(["lazybound", "--config", str(cfg), "--d", "8"])
        assert code == cli.EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert all(row.startswith("8,") for row in lines[1:])
        assert len(lines) == 1 + 3  # one d value, three grid points

    def test_file_overrides_default(self, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("samples = 123\n")
        code = cli.main(["lazybound", "--config", str(cfg), "--l", "3",
                         "--d", "4", "--xgrid", "0:0:1", "--mc"])
        assert code == cli.EXIT_OK
        out = capsys.readouterr().out.strip().splitlines()
        assert out[1].endswith(",123")


class TestExitCodes:
    def test_missing_required_option(self, tmp_path):
        assert cli.main(["run", "--d", "4", "--out", str(tmp_path)]) == cli.EXIT_USAGE

    def test_unknown_flag(self):
        assert cli.main(["run", "--nonsense", "1"]) == cli.EXIT_USAGE

    def test_no_subcommand(self):
        assert cli.main([]) == cli.EXIT_USAGE

    def test_help_exits_zero(self, capsys):
        assert cli.main(["--help"]) == cli.EXIT_OK
        assert "lazybound" in capsys.readouterr().out

    def test_bad_instance_is_usage_error(self):
        # r >= d can never be built; rejected before any work happens
        assert cli.main(["localmin", "--kind", "vanilla", "--d", "3",
                         "--r", "3", "--l", "3"]) == cli.EXIT_USAGE


class TestRunCommand:
    def test_writes_per_seed_files_and_summary(self, tmp_path):
        code = cli.main(RUN_ARGS + ["--out", str(tmp_path)])
        assert code == cli.EXIT_OK
        rows1 = read_jsonl(tmp_path / "run_seed1.jsonl")
        rows2 = read_jsonl(tmp_path / "run_seed2.jsonl")
        assert rows1 and rows2
        assert all(tuple(r) == cli.ROW_FIELDS for r in rows1)
        assert [r["iter"] for r in rows1] == list(range(len(rows1)))
        assert rows1[0]["epoch"] == 0 and rows1[0]["path_len"] == 0.0
        assert rows1[0]["pbu_sq"] >= 0.0  # defined already at the init point
        summary = read_csv(tmp_path / "run_summary.csv")
        assert [s["seed"] for s in summary] == ["1", "2"]
        assert set(summary[0]) == {"seed", "final_residual", "epochs_used",
                                   "iterations", "success"}
        for s in summary:
            assert float(s["final_residual"]) >= 0.0

    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert cli.main(RUN_ARGS + ["--out", str(a)]) == cli.EXIT_OK
        assert cli.main(RUN_ARGS + ["--out", str(b)]) == cli.EXIT_OK
        assert (a / "run_seed1.jsonl").read_bytes() == (b / "run_seed1.jsonl").read_bytes()
        assert (a / "run_summary.csv").read_bytes() == (b / "run_summary.csv").read_bytes()

    def test_vacuous_epsilon_single_row(self, tmp_path):
        code = cli.main(["run", "--d", "4", "--r", "1", "--l", "3", "--m", "5",
                         "--seeds", "1", "--epsilon", "10", "--out", str(tmp_path)])
        assert code == cli.EXIT_OK
        assert len(read_jsonl(tmp_path / "run_seed1.jsonl")) == 1

    def test_csv_mirrors_jsonl(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        cli.main(RUN_ARGS + ["--out", str(a)])
        cli.main(RUN_ARGS + ["--format", "csv", "--out", str(b)])
        jl = read_jsonl(a / "run_seed1.jsonl")
        cv = read_csv(b / "run_seed1.csv")
        assert len(jl) == len(cv)
        for rj, rc in zip(jl, cv):
            assert list(rc) == list(cli.ROW_FIELDS)
            assert int(rc["iter"]) == rj["iter"]
            assert float(rc["loss"]) == pytest.approx(rj["loss"], rel=1e-15)
            if rj["pbu_sq"] is None:
                assert rc["pbu_sq"] == ""
            else:
                assert float(rc["pbu_sq"]) == pytest.approx(rj["pbu_sq"], rel=1e-15)

    def test_parallel_workers_match_sequential(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        cli.main(RUN_ARGS + ["--out", str(a)])
        cli.main(RUN_ARGS + ["--workers", "2", "--out", str(b)])
        for name in ("run_seed1.jsonl", "run_seed2.jsonl", "run_summary.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_out_dir_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("OVERCP_OUT_DIR", str(tmp_path))
        code = cli.main(["run", "--d", "4", "--r", "1", "--l", "3", "--m", "5",
                         "--seeds", "3", "--epsilon", "10"])
        assert code == cli.EXIT_OK
        assert (tmp_path / "run_seed3.jsonl").exists()

    def test_ground_truth_from_npz(self, tmp_path):
        gt = model.generate_ground_truth(4, 1, 3, seed=99)
        npz = tmp_path / "gt.npz"
        np.savez(npz, weights=gt.weights, components=gt.components)
        code = cli.main(["run", "--d", "4", "--r", "1", "--l", "3", "--m", "5",
                         "--H", "20", "--K", "2", "--seeds", "1",
                         "--gt", str(npz), "--out", str(tmp_path)])
        assert code == cli.EXIT_OK
        rows = read_jsonl(tmp_path / "run_seed1.jsonl")
        # the loaded target is the same tensor the generator produced
        hyper = model.desk_hyperparams(4, 3, 1, 5, 0.05, seed=1, H=20, K=2)
        direct = model.loss(descent.init_params(hyper, seed=1), gt, hyper.lam)
        assert rows[0]["loss"] == pytest.approx(direct, rel=1e-12)


class TestLocalminCommand:
    def test_vanilla_certifies(self, capsys):
        code = cli.main(["localmin", "--kind", "vanilla", "--d", "4",
                         "--r", "2", "--l", "3"])
        out = capsys.readouterr().out
        assert code == cli.EXIT_OK
        assert "loss" in out and "3" in out
        assert "FAILED" not in out

    def test_2homo_certifies(self, capsys):
        code = cli.main(["localmin", "--kind", "2homo", "--d", "5",
                         "--r", "1", "--l", "3"])
        out = capsys.readouterr().out
        assert code == cli.EXIT_OK
        assert "FAILED" not in out

    def test_explicit_m_too_small(self):
        code = cli.main(["localmin", "--kind", "vanilla", "--d", "4",
                         "--r", "2", "--l", "3", "--m", "3"])
        assert code == cli.EXIT_USAGE


class TestLazyboundCommand:
    def test_header_bytes_exact(self, capsys):
        cli.main(["lazybound", "--l", "3", "--d", "4", "--xgrid", "0:1:0.5"])
        out = capsys.readouterr().out
        assert out.splitlines()[0] == "d,l,log_d_m,m,analytic_bound"

    def test_rows_match_library_values(self, capsys):
        cli.main(["lazybound", "--l", "3", "--d", "4,8", "--xgrid", "0:1:0.25"])
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 1 + 2 * 5
        for row in lines[1:]:
            d, l, x, m, bound = row.split(",")
            assert int(m) == int(round(int(d) ** float(x)))
            assert float(bound) == lazybound.analytic_lower_bound(
                int(d), int(l), int(m))

    def test_out_file_and_mc_columns(self, tmp_path):
        target = tmp_path / "curve.csv"
        code = cli.main(["lazybound", "--l", "3", "--d", "4",
                         "--xgrid", "0:0.5:0.5", "--mc", "--samples", "64",
                         "--seed", "5", "--out", str(target)])
        assert code == cli.EXIT_OK
        lines = target.read_text().strip().splitlines()
        assert lines[0] == ("d,l,log_d_m,m,analytic_bound,"
                            "mc_estimate,mc_stderr,mc_samples")
        for row in lines[1:]:
            fields = row.split(",")
            assert len(fields) == 8
            assert int(fields[7]) == 64
            assert float(fields[5]) >= float(fields[4])  # estimate above bound

    def test_mc_deterministic_for_seed(self, tmp_path):
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["lazybound", "--l", "3", "--d", "4", "--xgrid", "0:1:0.5",
                "--mc", "--samples", "128", "--seed", "9"]
        cli.main(args + ["--out", str(out1)])
        cli.main(args + ["--out", str(out2)])
        assert out1.read_bytes() == out2.read_bytes()

    def test_guard_rejected_before_output(self, tmp_path):
        target = tmp_path / "never.csv"
        code = cli.main(["lazybound", "--l", "6", "--d", "13",
                         "--xgrid", "0:1:1", "--mc", "--out", str(target)])
        assert code == cli.EXIT_USAGE
        assert not target.exists()


class TestBaselineCommand:
    def test_random_start_descends(self, tmp_path):
        code = cli.main(["baseline", "--d", "4", "--r", "1", "--l", "3",
                         "--m", "5", "--seeds", "1", "--steps", "50",
                         "--out", str(tmp_path)])
        assert code == cli.EXIT_OK
        rows = read_jsonl(tmp_path / "baseline_seed1.jsonl")
        assert len(rows) == 51
        assert rows[0]["iter"] == 0 and rows[-1]["iter"] == 50
        for r in rows:
            assert r["pbu_sq"] is None and r["path_len"] is None
            assert r["epoch"] == 0  # single uninterrupted pass
            assert r["residual"] == pytest.approx(
                math.sqrt(2 * r["loss"]), rel=1e-12)
        summary = read_csv(tmp_path / "baseline_summary.csv")
        assert set(summary[0]) == {"seed", "initial_loss", "final_loss", "steps"}
        assert float(summary[0]["final_loss"]) <= float(summary[0]["initial_loss"])

    def test_localmin_start_is_flat(self, tmp_path):
        code = cli.main(["baseline", "--d", "4", "--r", "2", "--l", "3",
                         "--m", "9", "--seeds", "1", "--steps", "40",
                         "--start", "localmin", "--out", str(tmp_path)])
        assert code == cli.EXIT_OK
        rows = read_jsonl(tmp_path / "baseline_seed1.jsonl")
        losses = {r["loss"] for r in rows}
        # stuck exactly at l(l-1)r/4 = 3: gradient is numerically zero there
        assert losses == {3.0} or max(losses) - min(losses) <= 1e-12
        summary = read_csv(tmp_path / "baseline_summary.csv")
        assert float(summary[0]["initial_loss"]) == pytest.approx(3.0, rel=1e-12)
        assert float(summary[0]["final_loss"]) == pytest.approx(3.0, rel=1e-12)

    def test_seed_changes_random_start(self, tmp_path):
        cli.main(["baseline", "--d", "4", "--r", "1", "--l", "3", "--m", "5",
                  "--seeds", "1,2", "--steps", "5", "--out", str(tmp_path)])
        r1 = read_jsonl(tmp_path / "baseline_seed1.jsonl")
        r2 = read_jsonl(tmp_path / "baseline_seed2.jsonl")
        assert r1[0]["loss"] != r2[0]["loss"]
