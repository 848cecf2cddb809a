"""CLI tests: exit codes, output file creation, error reporting."""

import json

import pytest

from plotkit.cli import main


@pytest.fixture
def summary(tmp_path):
    path = tmp_path / "summary.json"
    path.write_text(
        json.dumps(
            {
                "name": "cli-demo",
                "algorithms": {
                    "alpha": {
                        "mean_cum_utility": [1.0, 2.0, 3.0],
                        "std_cum_utility": [0.1, 0.1, 0.1],
                        "mean_cum_regret": [0.0, 0.0, 0.0],
                    }
                },
            }
        )
    )
    return path


def test_plot_command_writes_file(summary, tmp_path, capsys):
    out = tmp_path / "fig.png"
    assert main(["plot", "--summary", str(summary), "--out", str(out)]) == 0
    assert out.exists() and out.stat().st_size > 0
    assert str(out) in capsys.readouterr().out


def test_plot_command_label_override(summary, tmp_path):
    out = tmp_path / "fig.png"
    code = main(
        ["plot", "--summary", str(summary), "--out", str(out), "--label", "alpha=First"]
    )
    assert code == 0 and out.exists()


def test_plot_command_missing_algorithm_exits_2(summary, tmp_path, capsys):
    out = tmp_path / "fig.png"
    code = main(
        ["plot", "--summary", str(summary), "--out", str(out), "--algorithms", "alpha,ghost"]
    )
    assert code == 2
    stderr = capsys.readouterr().err
    assert "ghost" in stderr and not out.exists()


def test_plot_command_missing_file_exits_2(tmp_path, capsys):
    code = main(
        ["plot", "--summary", str(tmp_path / "none.json"), "--out", str(tmp_path / "o.png")]
    )
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_plot_command_bad_label_exits_2(summary, tmp_path, capsys):
    code = main(
        ["plot", "--summary", str(summary), "--out", str(tmp_path / "o.png"),
         "--label", "nonsense"]
    )
    assert code == 2
    assert "TAG=TEXT" in capsys.readouterr().err
