"""figview: schema validation, slope recomputation, rendering, and the
end-to-end render from a demo table produced by the qfilt CLI."""

import csv
import math
import subprocess
import sys
import warnings
from pathlib import Path

import numpy as np
import pytest

from figview.render import (
    REQUIRED_COLUMNS,
    FigureSpec,
    SchemaError,
    crosscheck_slopes,
    load_table,
    recompute_slope,
    render_scaling_figure,
)
from figview.cli import main as cli_main


def _write_rows(path: Path, rows: list[dict]) -> Path:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REQUIRED_COLUMNS)
        for row in rows:
            writer.writerow([row[c] for c in REQUIRED_COLUMNS])
    return path


def _synthetic_rows(case="1d-linear", strategy="trunc_gauss", slope=-1.0, t_max=4,
                    grid=(3, 9, 15, 21, 30), c0=5.0):
    rows = []
    grid_arr = np.array(grid, dtype=float)
    for t in range(1, t_max + 1):
        L = c0 * grid_arr ** slope
        eps = recompute_slope(grid_arr, L)
        for n, L_n in zip(grid, L):
            rows.append(
                {
                    "case": case,
                    "strategy": strategy,
                    "n_alpha": n,
                    "n_beta": round(2 * n / 3),
                    "t": t,
                    "mean_L": repr(float(L_n)),
                    "sem_L": repr(0.01),
                    "epsilon_t": repr(float(eps)),
                    "lambda1": repr(0.88),
                    "lambda2": repr(0.72),
                    "sigma_v": repr(9e-8),
                    "sigma_F": repr(2.6e-5),
                    "seed": 1,
                }
            )
    return rows


class TestSchema:
    def test_loads_valid_table(self, tmp_path):
        path = _write_rows(tmp_path / "results.csv", _synthetic_rows())
        table = load_table(path)
        assert table["n_alpha"].dtype.kind == "i"
        assert table["mean_L"].dtype.kind == "f"

    def test_missing_column_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([c for c in REQUIRED_COLUMNS if c != "epsilon_t"])
        with pytest.raises(SchemaError, match="epsilon_t"):
            load_table(path)

    def test_unexpected_column_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(REQUIRED_COLUMNS + ["extra"])
        with pytest.raises(SchemaError, match="extra"):
            load_table(path)

    def test_cli_exits_nonzero_on_mismatch(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n", encoding="utf-8")
        assert cli_main(["--csv", str(path), "--out", str(tmp_path)]) == 2
        assert "mismatch" in capsys.readouterr().err


class TestSlopes:
    def test_exact_inverse_law_recovers_minus_one(self, tmp_path):
        path = _write_rows(tmp_path / "results.csv", _synthetic_rows(slope=-1.0))
        table = load_table(path)
        slopes = crosscheck_slopes(table)
        for value in slopes.values():
            assert value == pytest.approx(-1.0, abs=1e-2)
            assert abs(value - (-1.0)) <= 0.01  # annotation would read -1.00

    def test_drifted_epsilon_column_rejected(self, tmp_path):
        rows = _synthetic_rows()
        rows[0]["epsilon_t"] = repr(float(rows[0]["epsilon_t"]) + 1e-6)
        path = _write_rows(tmp_path / "results.csv", rows)
        with pytest.raises(SchemaError, match="drifts"):
            crosscheck_slopes(load_table(path))

    def test_recompute_matches_stored_to_tolerance(self, tmp_path):
        path = _write_rows(tmp_path / "results.csv", _synthetic_rows(slope=-0.42))
        table = load_table(path)
        slopes = crosscheck_slopes(table)
        for (case, strategy, t), val in slopes.items():
            sel = (table["t"] == t) & (table["strategy"] == strategy)
            assert abs(val - float(table["epsilon_t"][sel][0])) <= 1e-9


class TestRendering:
    def test_renders_synthetic_table(self, tmp_path):
        path = _write_rows(tmp_path / "results.csv", _synthetic_rows())
        spec = FigureSpec(input_csv=path, out_dir=tmp_path / "figs", fmt="png")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # no manifest beside the synthetic table
            written = render_scaling_figure(spec)
        assert len(written) == 1
        assert written[0].exists() and written[0].suffix == ".png"

    def test_single_cell_table_suppresses_inset(self, tmp_path):
        rows = _synthetic_rows(grid=(3,), t_max=1)
        rows[0]["epsilon_t"] = repr(float("nan"))
        path = _write_rows(tmp_path / "results.csv", rows)
        spec = FigureSpec(input_csv=path, out_dir=tmp_path, fmt="svg")
        with pytest.warns(UserWarning):
            written = render_scaling_figure(spec)
        assert written[0].exists()

    def test_missing_case_skipped_with_warning(self, tmp_path):
        path = _write_rows(tmp_path / "results.csv", _synthetic_rows())
        spec = FigureSpec(input_csv=path, out_dir=tmp_path, cases=("2d-square",))
        with pytest.warns(UserWarning, match="not present"):
            written = render_scaling_figure(spec)
        assert written == []

    def test_rendering_is_idempotent(self, tmp_path):
        path = _write_rows(tmp_path / "results.csv", _synthetic_rows())
        spec = FigureSpec(input_csv=path, out_dir=tmp_path / "figs")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            first = render_scaling_figure(spec)
            second = render_scaling_figure(spec)
        assert first == second
        assert (path.read_bytes(), True) == (path.read_bytes(), first[0].exists())


@pytest.fixture(scope="module")
def demo_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("demo")
    subprocess.run(
        [
            sys.executable, "-m", "qfilt", "demo",
            "--case", "1d-linear", "--out", str(out),
            "--d", "9", "--repetitions", "3", "--t-max", "12",
        ],
        check=True,
        capture_output=True,
    )
    return out


class TestEndToEnd:
    def test_renders_demo_csv_without_error(self, demo_dir, tmp_path):
        spec = FigureSpec(input_csv=demo_dir / "results.csv", out_dir=tmp_path, fmt="svg")
        written = render_scaling_figure(spec)
        assert len(written) == 1
        assert written[0].stat().st_size > 0

    def test_demo_slopes_match_harness_to_1e9(self, demo_dir):
        table = load_table(demo_dir / "results.csv")
        slopes = crosscheck_slopes(table)
        assert slopes, "demo table produced no fittable cells"
        for (case, strategy, t), val in slopes.items():
            sel = (
                (table["case"] == case)
                & (table["strategy"] == strategy)
                & (table["t"] == t)
            )
            assert abs(val - float(table["epsilon_t"][sel][0])) <= 1e-9

    def test_cli_renders_demo(self, demo_dir, tmp_path, capsys):
        code = cli_main(
            ["--csv", str(demo_dir / "results.csv"), "--out", str(tmp_path), "--format", "svg"]
        )
        assert code == 0
        out_lines = capsys.readouterr().out.strip().splitlines()
        assert len(out_lines) == 1
        assert Path(out_lines[0]).exists()
