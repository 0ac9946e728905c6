import subprocess
import sys

import pytest

from metasplit.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from metasplit.harness import read_csv


def test_rates_command_writes_outputs(tmp_path, capsys):
    code = main(["rates", "--out", str(tmp_path), "--no-chart"])
    assert code == EXIT_OK
    assert read_csv(tmp_path / "rates.csv")
    assert not (tmp_path / "rates.svg").exists()
    assert "csv:" in capsys.readouterr().out


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("experiment = fig_b\nseed = 1\nd = 5\nn = 6\nn1 = 2\nlambda = 1\nt_grid = 30,60\nreplicates = 2\nmc_samples = 20\n")
    assert main(["fig-b", "--config", str(cfg), "--seed", "9", "--out", str(tmp_path / "o"), "--threads", "2"]) == EXIT_OK
    assert '"seed": 9' in (tmp_path / "o" / "fig_b.metadata.json").read_text()


def test_figure_runs_need_a_seed(tmp_path):
    assert main(["fig-a", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_config_errors_exit_2(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("experiment = fig_c\nseed = 1\n")
    assert main(["fig-b", "--config", str(cfg)]) == EXIT_CONFIG
    assert main(["fig-b", "--config", str(tmp_path / "missing.cfg"), "--seed", "1"]) == EXIT_CONFIG
    assert main(["fig-b", "--seed", "1", "--threads", "0"]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as exc:
        main(["fig-q"])
    assert exc.value.code == EXIT_CONFIG


def test_singular_hessian_exits_3(tmp_path):
    cfg = tmp_path / "c.cfg"
    # a single task cannot identify a 60-dimensional centroid
    cfg.write_text("experiment = fig_b\nseed = 1\nlambda = 1\nt_grid = 1\nreplicates = 1\nmc_samples = 20\n")
    assert main(["fig-b", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_NUMERIC


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "metasplit", "rates", "--out", str(tmp_path), "--no-chart"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
