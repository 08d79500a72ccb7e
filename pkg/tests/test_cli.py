import json

import pytest

from esncast.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, build_parser, main

# The CLI runs real calibrations; the fixture config uses a short
# calibration horizon and schedule to keep these tests quick while still
# exercising the full path.


@pytest.fixture()
def fast_config(tmp_path):
    cfg = tmp_path / "fast.cfg"
    cfg.write_text(
        "# quick settings for tests\n"
        "calibration_horizon = 400\n"
        "t_transient = 5\n"
        "t_train = 20\n"
        "t_end = 35\n"
        "windows = 10\n"
        "nodes = 40\n"
    )
    return cfg


@pytest.fixture()
def outdir(tmp_path):
    return tmp_path / "out"


def run_cli(*argv):
    return main([str(a) for a in argv])


class TestParser:
    def test_help_lists_subcommands(self, capsys):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for cmd in ("calibrate", "train", "evaluate", "optimize",
                    "distribution", "transfer", "freerun", "plot"):
            assert cmd in out

    def test_subcommand_help_documents_defaults(self, capsys):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["optimize", "--help"])
        out = capsys.readouterr().out
        for snippet in ("0.01", "100", "200", "300", "50", "1.104"):
            assert snippet in out

    def test_unknown_flag_is_config_error(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["optimize", "--system", "lorenz",
                                       "--frobnicate"])
        assert exc.value.code == 2


class TestTrainEvaluate:
    def test_train_then_evaluate_and_echo(self, fast_config, outdir, capsys,
                                          tmp_path):
        cache = tmp_path / "calcache"
        code = run_cli("train", "--system", "lorenz", "--topology", "line",
                       "--seed", "4", "--output-dir", outdir,
                       "--config", fast_config, "--calibration-cache", cache)
        assert code == EXIT_OK
        snap = outdir / "reservoir_lorenz_line_4.json"
        assert snap.exists()
        echo = json.loads((outdir / "train_config_echo.json").read_text())
        assert echo["command"] == "train"
        assert "config_hash" in echo
        out = capsys.readouterr().out
        assert "alpha" in out and "train rms" in out

        code = run_cli("evaluate", "--snapshot", snap, "--seed", "4",
                       "--output-dir", outdir, "--config", fast_config,
                       "--calibration-cache", cache)
        assert code == EXIT_OK
        report = json.loads(
            (outdir / "evaluation_lorenz_line_4.json").read_text())
        assert len(report["epsilon_i"]) == 10
        assert report["epsilon"] > 0

    def test_out_of_range_hyperparameter_is_config_error(self, outdir, capsys):
        code = run_cli("train", "--system", "lorenz", "--gamma", "99",
                       "--output-dir", outdir)
        assert code == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "gamma" in err and "[7.0, 11.0]" in err

    def test_missing_snapshot_is_io_error(self, outdir, capsys):
        code = run_cli("evaluate", "--snapshot", outdir / "missing.json",
                       "--output-dir", outdir)
        assert code == EXIT_IO


class TestOptimize:
    def test_small_campaign_writes_log_and_summary(self, fast_config, outdir,
                                                   capsys, tmp_path):
        cache = tmp_path / "calcache"
        code = run_cli("optimize", "--system", "lorenz", "--topology", "line",
                       "--budget", "3", "--seed", "2", "--output-dir", outdir,
                       "--config", fast_config, "--calibration-cache", cache)
        assert code == EXIT_OK
        log = outdir / "campaign_lorenz_line_2.jsonl"
        summary = json.loads((outdir / "campaign_lorenz_line_2.json").read_text())
        assert log.exists()
        assert summary["iterations"] == 3
        assert "best epsilon" in capsys.readouterr().out
        # One header line plus one observation per iteration.
        assert len(log.read_text().splitlines()) == 4

    def test_campaign_rerun_is_byte_identical(self, fast_config, outdir,
                                              tmp_path):
        cache = tmp_path / "calcache"
        blobs = []
        for run in range(2):
            run_dir = outdir / f"run{run}"
            code = run_cli("optimize", "--system", "lorenz", "--topology",
                           "line", "--budget", "3", "--seed", "8",
                           "--output-dir", run_dir, "--config", fast_config,
                           "--calibration-cache", cache)
            assert code == EXIT_OK
            blobs.append((run_dir / "campaign_lorenz_line_8.jsonl").read_bytes())
        assert blobs[0] == blobs[1]


class TestStudies:
    def test_distribution_outputs(self, fast_config, outdir, capsys, tmp_path):
        cache = tmp_path / "calcache"
        code = run_cli("distribution", "--system", "lorenz", "--topology",
                       "line", "--n", "3", "--seed", "5", "--output-dir",
                       outdir, "--config", fast_config,
                       "--calibration-cache", cache)
        assert code == EXIT_OK
        base = "distribution_lorenz_line_5"
        assert (outdir / f"{base}.csv").exists()
        assert (outdir / f"{base}.svg").exists()
        summary = json.loads((outdir / f"{base}.json").read_text())
        assert summary["n"] == 3
        assert "median epsilon" in capsys.readouterr().out

    @pytest.mark.slow
    def test_parallel_distribution_matches_sequential(self, fast_config,
                                                      outdir, tmp_path):
        cache = tmp_path / "calcache"
        blobs = []
        for jobs, sub in (("2", "par"), ("1", "seq")):
            run_dir = outdir / sub
            assert run_cli("distribution", "--system", "lorenz", "--topology",
                           "line", "--n", "4", "--seed", "5", "--jobs", jobs,
                           "--output-dir", run_dir, "--config", fast_config,
                           "--calibration-cache", cache) == EXIT_OK
            blobs.append((run_dir / "distribution_lorenz_line_5.csv").read_bytes())
        assert blobs[0] == blobs[1]

    def test_transfer_from_campaign_logs(self, fast_config, outdir, capsys,
                                         tmp_path):
        cache = tmp_path / "calcache"
        for seed in (2, 3):
            assert run_cli("optimize", "--system", "lorenz", "--topology",
                           "line", "--budget", "2", "--seed", seed,
                           "--output-dir", outdir, "--config", fast_config,
                           "--calibration-cache", cache) == EXIT_OK
        code = run_cli("transfer", "--system", "lorenz", "--campaign-logs",
                       outdir / "campaign_lorenz_line_*.jsonl",
                       "--seed", "1", "--output-dir", outdir,
                       "--config", fast_config, "--calibration-cache", cache)
        assert code == EXIT_OK
        out_file = outdir / "transfer_lorenz_to_lorenz_line_1.json"
        doc = json.loads(out_file.read_text())
        assert len(doc["epsilons"]) == 2
        assert doc["epsilon_min"] == min(doc["epsilons"])

    def test_transfer_without_logs_is_config_error(self, outdir):
        code = run_cli("transfer", "--system", "lorenz", "--campaign-logs",
                       outdir / "nothing_*.jsonl", "--output-dir", outdir)
        assert code == EXIT_CONFIG

    def test_freerun_and_plot(self, fast_config, outdir, capsys, tmp_path):
        cache = tmp_path / "calcache"
        assert run_cli("train", "--system", "lorenz", "--topology", "line",
                       "--seed", "4", "--output-dir", outdir,
                       "--config", fast_config,
                       "--calibration-cache", cache) == EXIT_OK
        snap = outdir / "reservoir_lorenz_line_4.json"
        code = run_cli("freerun", "--snapshot", snap, "--duration", "2",
                       "--seed", "4", "--output-dir", outdir,
                       "--config", fast_config, "--calibration-cache", cache)
        assert code == EXIT_OK
        csv_file = outdir / "freerun_lorenz_line_4.csv"
        assert csv_file.exists()
        code = run_cli("plot", "--freerun", csv_file, "--output-dir", outdir,
                       "--out", outdir / "replot.svg")
        assert code == EXIT_OK
        assert (outdir / "replot.svg").exists()

    def test_plot_requires_an_input(self, outdir):
        assert run_cli("plot", "--output-dir", outdir) == EXIT_CONFIG


class TestConfigFile:
    def test_flags_override_file(self, tmp_path, outdir):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("seed = 9\nnodes = 40\n")
        from esncast.cli import _resolve_config

        args = build_parser().parse_args(
            ["calibrate", "--system", "lorenz", "--seed", "2",
             "--config", str(cfg), "--output-dir", str(outdir)])
        resolved = _resolve_config(args)
        assert resolved.seed == 2       # flag wins
        assert resolved.n_nodes == 40   # file fills the gap

    def test_malformed_file_is_config_error(self, tmp_path, outdir, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("this is not a key value line\n")
        code = run_cli("calibrate", "--system", "lorenz", "--config", cfg,
                       "--output-dir", outdir)
        assert code == EXIT_CONFIG

    def test_schedule_validation_is_config_error(self, outdir, capsys):
        code = run_cli("optimize", "--system", "lorenz", "--t-train", "400",
                       "--output-dir", outdir)
        assert code == EXIT_CONFIG


class TestExitCodes:
    def test_numeric_failure_maps_to_exit_3(self, outdir, monkeypatch, capsys):
        from esncast.cli import EXIT_NUMERIC
        from esncast.integrate import IntegrationError
        import esncast.cli as cli_mod

        def boom(cfg):
            raise IntegrationError("synthetic divergence", time=1.0)

        monkeypatch.setattr(cli_mod, "_cmd_calibrate", boom)
        code = run_cli("calibrate", "--system", "lorenz", "--output-dir", outdir)
        assert code == EXIT_NUMERIC
        assert "numeric failure" in capsys.readouterr().err
