"""Read a qfilt results.csv and render per-case scaling figures.

Each case gets a three-element figure: the fitted error-scaling slope
against iteration for every strategy in the table, a log-log inset of mean
error against particle number at the final iteration with dashed best-fit
lines, and a heat-map inset of the true field (taken from the sibling
manifest.json when available).

Slopes are recomputed here from the raw mean-error columns and cross-checked
against the table's stored slope column; any drift beyond 1e-9 means the
file does not match this schema revision and rendering refuses to proceed.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

REQUIRED_COLUMNS = [
    "case",
    "strategy",
    "n_alpha",
    "n_beta",
    "t",
    "mean_L",
    "sem_L",
    "epsilon_t",
    "lambda1",
    "lambda2",
    "sigma_v",
    "sigma_F",
    "seed",
]

_INT_COLUMNS = {"n_alpha", "n_beta", "t", "seed"}
_STR_COLUMNS = {"case", "strategy"}

SLOPE_MATCH_TOL = 1e-9


class SchemaError(ValueError):
    """The CSV columns (or stored fit values) do not match the harness
    schema."""


@dataclass(frozen=True)
class FigureSpec:
    """What to render: the input table, an optional case filter, the output
    directory/format, and which panels to draw."""

    input_csv: str | Path
    out_dir: str | Path = "."
    fmt: str = "png"
    cases: tuple[str, ...] | None = None
    manifest: str | Path | None = None
    panels: tuple[str, ...] = ("main", "loglog", "field")

    def __post_init__(self) -> None:
        if self.fmt not in ("png", "svg"):
            raise ValueError("format must be png or svg")


def load_table(path: str | Path) -> dict[str, np.ndarray]:
    """Parse a results.csv into typed column arrays, enforcing the schema."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty CSV") from None
        rows = list(reader)
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    unexpected = [c for c in header if c not in REQUIRED_COLUMNS]
    if missing or unexpected:
        raise SchemaError(
            f"column mismatch: missing {missing or 'none'}, unexpected {unexpected or 'none'}"
        )
    idx = {c: header.index(c) for c in REQUIRED_COLUMNS}
    table: dict[str, np.ndarray] = {}
    for col in REQUIRED_COLUMNS:
        raw = [row[idx[col]] for row in rows]
        if col in _STR_COLUMNS:
            table[col] = np.array(raw, dtype=object)
        elif col in _INT_COLUMNS:
            table[col] = np.array([int(v) for v in raw], dtype=int)
        else:
            table[col] = np.array([float(v) for v in raw], dtype=float)
    return table


def recompute_slope(n_alpha: np.ndarray, mean_L: np.ndarray) -> float:
    """Best-fit slope of log(mean error) on log(particle number); the same
    least-squares definition the harness uses."""
    slope, _ = np.polyfit(np.log(np.asarray(n_alpha, float)), np.log(np.asarray(mean_L, float)), 1)
    return float(slope)


def _series(table, case, strategy):
    mask = (table["case"] == case) & (table["strategy"] == strategy)
    return {k: v[mask] for k, v in table.items()}


def crosscheck_slopes(table: dict[str, np.ndarray]) -> dict[tuple[str, str, int], float]:
    """Recompute every per-iteration slope from the raw mean-error column
    and verify it against the stored one. Returns the recomputed slopes."""
    out: dict[tuple[str, str, int], float] = {}
    for case in np.unique(table["case"]):
        for strategy in np.unique(table["strategy"]):
            sub = _series(table, case, strategy)
            if sub["t"].size == 0:
                continue
            for t in np.unique(sub["t"]):
                sel = sub["t"] == t
                n = sub["n_alpha"][sel]
                if np.unique(n).size < 3 or np.any(sub["mean_L"][sel] <= 0):
                    continue
                slope = recompute_slope(n, sub["mean_L"][sel])
                stored = float(sub["epsilon_t"][sel][0])
                if abs(slope - stored) > SLOPE_MATCH_TOL:
                    raise SchemaError(
                        f"stored slope drifts from recomputed fit at "
                        f"({case}, {strategy}, t={int(t)}): {stored} vs {slope}"
                    )
                out[(str(case), str(strategy), int(t))] = slope
    return out


def _load_manifest_field(spec: FigureSpec):
    path = Path(spec.manifest) if spec.manifest else Path(spec.input_csv).with_name("manifest.json")
    if not path.exists():
        return None
    doc = json.loads(path.read_text(encoding="utf-8"))
    world = doc.get("world", {})
    if "field" not in world or "geometry" not in world:
        return None
    return world


_STRATEGY_STYLE = {
    "uniform": {"color": "#c0392b", "marker": "x"},
    "trunc_gauss": {"color": "#2060b0", "marker": "o"},
}


def _style(strategy: str) -> dict:
    return _STRATEGY_STYLE.get(strategy, {"color": "#444444", "marker": "s"})


def render_scaling_figure(spec: FigureSpec) -> list[Path]:
    """Render one figure per case found in (and selected from) the table.

    Returns the written file paths. Rendering is read-only over its inputs
    and overwrites its own outputs, so repeated invocations are idempotent.
    """
    table = load_table(spec.input_csv)
    crosscheck_slopes(table)
    world = _load_manifest_field(spec)
    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    cases_present = [str(c) for c in np.unique(table["case"])]
    wanted = list(spec.cases) if spec.cases else cases_present
    written: list[Path] = []
    for case in wanted:
        if case not in cases_present:
            warnings.warn(f"case {case!r} not present in the table; skipping", stacklevel=2)
            continue
        fig = _render_case(table, case, world, spec.panels)
        path = out_dir / f"scaling_{case}.{spec.fmt}"
        fig.savefig(path, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written


def _render_case(table, case, world, panels):
    fig = plt.figure(figsize=(9.0, 4.2))
    grid = fig.add_gridspec(2, 2, width_ratios=[2.1, 1.0], hspace=0.45, wspace=0.3)
    ax_main = fig.add_subplot(grid[:, 0])
    ax_fit = fig.add_subplot(grid[0, 1])
    ax_field = fig.add_subplot(grid[1, 1])

    strategies = [s for s in np.unique(table["strategy"]) if _series(table, case, s)["t"].size]

    if "main" in panels:
        for strategy in strategies:
            sub = _series(table, case, strategy)
            t_values = np.unique(sub["t"])
            eps = [float(sub["epsilon_t"][sub["t"] == t][0]) for t in t_values]
            ax_main.plot(
                t_values, eps, label=strategy, lw=0.9, ms=3.5, **_style(str(strategy))
            )
        ax_main.axhline(0.0, color="0.6", lw=0.7)
        ax_main.axhline(-1.0, color="0.6", lw=0.7, ls=":")
        ax_main.set_xlabel("iteration t")
        ax_main.set_ylabel("error-scaling slope")
        ax_main.set_title(case)
        ax_main.legend(frameon=False, fontsize=8)

    if "loglog" in panels:
        drew = False
        for strategy in strategies:
            sub = _series(table, case, strategy)
            t_max = int(sub["t"].max())
            sel = sub["t"] == t_max
            n = sub["n_alpha"][sel]
            L = sub["mean_L"][sel]
            if np.unique(n).size < 3 or np.any(L <= 0):
                continue
            style = _style(str(strategy))
            ax_fit.plot(np.log(n), np.log(L), ls="none", ms=4, **style)
            slope = recompute_slope(n, L)
            intercept = float(np.polyfit(np.log(n), np.log(L), 1)[1])
            xs = np.linspace(np.log(n.min()), np.log(n.max()), 20)
            ax_fit.plot(xs, slope * xs + intercept, ls="--", lw=0.9, color=style["color"])
            ax_fit.annotate(
                f"{slope:+.2f}",
                xy=(xs[-1], slope * xs[-1] + intercept),
                fontsize=7,
                color=style["color"],
            )
            drew = True
        if drew:
            ax_fit.set_xlabel("log n")
            ax_fit.set_ylabel("log mean error")
            ax_fit.set_title("final iteration", fontsize=8)
        else:
            warnings.warn(
                f"log-log inset for {case!r} suppressed (fewer than 3 grid points)",
                stacklevel=3,
            )
            ax_fit.set_axis_off()

    if "field" in panels and world is not None:
        values = np.asarray(world["field"]["values"], dtype=float)
        kind = world["geometry"]["kind"]
        img = values.reshape(1, -1) if kind == "chain_1d" else values.reshape(
            int(math.isqrt(values.size)), -1
        )
        im = ax_field.imshow(img, cmap="viridis", aspect="auto")
        ax_field.set_title("true field", fontsize=8)
        ax_field.set_xticks([])
        ax_field.set_yticks([])
        fig.colorbar(im, ax=ax_field, fraction=0.046)
    else:
        if "field" in panels:
            warnings.warn("no manifest.json found; field inset skipped", stacklevel=3)
        ax_field.set_axis_off()
    return fig
