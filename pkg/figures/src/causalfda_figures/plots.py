"""Figure builders for result CSVs and curve dumps.

All functions return the matplotlib Figure after saving it, so callers and
tests can introspect the rendered artists. Styling is pinned through a fixed
rc context, which keeps re-renders of the same inputs pixel-identical.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg", force=False)

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from .io import SchemaError, load_dump, load_results

ESTIMATOR_COLORS = {"dr": "tab:blue", "ipw": "tab:orange", "or": "tab:green"}
TRUTH_COLOR = "tab:purple"
NOMINAL_LEVEL = 0.95

_RC = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "causalfda-figures",
}


def _save(fig, out_image) -> None:
    out = Path(out_image)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, metadata={"Software": "causalfda-figures"})


def _color(name: str) -> str:
    return ESTIMATOR_COLORS.get(name, "tab:gray")


def plot_band(curve_dump_json, out_image):
    """Truth, estimates, and (when present) the simultaneous band from one dump."""
    dump = load_dump(curve_dump_json)
    grid = np.asarray(dump["grid"])
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        if dump["band"] is not None:
            band = dump["band"]
            ax.fill_between(
                grid,
                np.asarray(band["lower"]),
                np.asarray(band["upper"]),
                color=_color("dr"),
                alpha=0.2,
                label=f"{band['level']:.0%} simultaneous band",
            )
        ax.plot(grid, np.asarray(dump["beta_true"]), color=TRUTH_COLOR, lw=2, label="truth")
        for name in sorted(dump["estimates"]):
            ax.plot(grid, np.asarray(dump["estimates"][name]), color=_color(name),
                    lw=1.5, label=name)
        ax.set_xlabel("t")
        ax.set_ylabel("effect curve")
        ax.set_title(f"{dump['scenario_id']} (seed {dump['seed']})")
        ax.legend(loc="best")
        fig.tight_layout()
        _save(fig, out_image)
        plt.close(fig)
    return fig


def _slice_frame(frame: pd.DataFrame, slice_axis: str) -> pd.DataFrame:
    if slice_axis not in ("alpha_pi", "alpha_mu"):
        raise SchemaError(f"slice must be 'alpha_pi' or 'alpha_mu', got {slice_axis!r}")
    other = "alpha_mu" if slice_axis == "alpha_pi" else "alpha_pi"
    sub = frame[frame[other] == 0.0]
    sub = sub[sub[slice_axis].notna()]
    if sub.empty:
        raise SchemaError(
            f"results contain no rows with {other} = 0; cannot slice along {slice_axis}"
        )
    return sub


def plot_mse_vs_alpha(results_csv, slice_axis, out_image):
    """Mean error (with Monte Carlo error bars) per estimator along one corruption axis."""
    frame = load_results(results_csv)
    sub = _slice_frame(frame, slice_axis)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for name, group in sub.groupby("estimator"):
            stats = group.groupby(slice_axis)["mse"].agg(["mean", "sem", "count"]).reset_index()
            err = np.where(stats["count"] > 1, stats["sem"].fillna(0.0), 0.0)
            ax.errorbar(
                stats[slice_axis],
                stats["mean"],
                yerr=err,
                marker="o",
                capsize=3,
                color=_color(name),
                label=str(name),
            )
        ax.set_xlabel(slice_axis)
        ax.set_ylabel("mean integrated squared error")
        ax.set_title(f"estimation error vs {slice_axis}")
        ax.legend(loc="best")
        fig.tight_layout()
        _save(fig, out_image)
        plt.close(fig)
    return fig


def coverage_table(frame: pd.DataFrame) -> pd.DataFrame:
    """Empirical simultaneous coverage of the banded estimator per corruption cell."""
    banded = frame[(frame["estimator"] == "dr") & frame["simul_covered"].notna()]
    if banded.empty:
        raise SchemaError("results contain no coverage columns for the banded estimator")
    rows = []
    for axis, other in (("alpha_pi", "alpha_mu"), ("alpha_mu", "alpha_pi")):
        sub = banded[(banded[other] == 0.0) & banded[axis].notna()]
        for alpha, group in sub.groupby(axis):
            rows.append(
                {
                    "axis": axis,
                    "alpha": float(alpha),
                    "coverage": float(group["simul_covered"].mean()),
                    "replicates": int(len(group)),
                }
            )
    if not rows:
        raise SchemaError("no corruption cells with a zero complementary axis to plot")
    return pd.DataFrame(rows).sort_values(["axis", "alpha"]).reset_index(drop=True)


def plot_coverage(results_csv, out_image, nominal=NOMINAL_LEVEL):
    """Simultaneous coverage along both corruption axes with the nominal reference line."""
    frame = load_results(results_csv)
    table = coverage_table(frame)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        styles = {"alpha_pi": ("tab:brown", "propensity corrupted"),
                  "alpha_mu": ("tab:cyan", "outcome model corrupted")}
        for axis, group in table.groupby("axis"):
            color, label = styles[str(axis)]
            ax.plot(group["alpha"], group["coverage"], marker="o", color=color, label=label)
        ax.axhline(nominal, color="gray", ls="--", lw=1.2, label=f"nominal {nominal:.0%}")
        ax.set_xlabel("corruption weight")
        ax.set_ylabel("empirical simultaneous coverage")
        ax.set_ylim(0.0, 1.05)
        ax.set_title("band coverage under misspecification")
        ax.legend(loc="lower left")
        fig.tight_layout()
        _save(fig, out_image)
        plt.close(fig)
    return fig


def plot_mse_box(results_csv, out_image):
    """Boxplots of per-replicate error for every estimator in every cell."""
    frame = load_results(results_csv)
    if frame["mse"].isna().all():
        raise SchemaError("results contain no error values to plot")
    cells = sorted(frame["scenario_id"].unique())
    estimators = sorted(frame["estimator"].unique())
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(max(6.0, 1.8 * len(cells)), 4.0))
        width = 0.8 / len(estimators)
        for k, name in enumerate(estimators):
            data = [
                frame[(frame["scenario_id"] == cell) & (frame["estimator"] == name)]["mse"].dropna()
                for cell in cells
            ]
            positions = np.arange(len(cells)) + (k - (len(estimators) - 1) / 2) * width
            ax.boxplot(
                data,
                positions=positions,
                widths=width * 0.9,
                patch_artist=True,
                boxprops={"facecolor": _color(name), "alpha": 0.6},
                medianprops={"color": "black"},
                flierprops={"markersize": 3},
            )
            ax.plot([], [], color=_color(name), label=name, lw=6, alpha=0.6)
        ax.set_xticks(np.arange(len(cells)))
        ax.set_xticklabels(cells, rotation=30, ha="right", fontsize=8)
        ax.set_ylabel("integrated squared error")
        ax.set_title("error distribution per cell")
        ax.legend(loc="best")
        fig.tight_layout()
        _save(fig, out_image)
        plt.close(fig)
    return fig


def make_all(results_dir, out_dir) -> list[Path]:
    """Render the standard panel set from a simulation output directory.

    Produces the band panel (first curve dump, when any), the two one-axis
    error panels, the coverage panel, and the boxplot view. Panels whose
    slice is absent from the results are skipped with a notice rather than
    failing the batch.
    """
    results_dir = Path(results_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results_csv = results_dir / "results.csv"
    if not results_csv.exists():
        raise SchemaError(f"{results_dir} has no results.csv")
    written: list[Path] = []

    dumps = sorted((results_dir / "dumps").glob("*.json")) if (results_dir / "dumps").is_dir() else []
    if dumps:
        plot_band(dumps[0], out_dir / "band.png")
        written.append(out_dir / "band.png")

    for axis in ("alpha_pi", "alpha_mu"):
        target = out_dir / f"mse_vs_{axis}.png"
        try:
            plot_mse_vs_alpha(results_csv, axis, target)
        except SchemaError as exc:
            print(f"skipping {target.name}: {exc}")
            continue
        written.append(target)

    try:
        plot_coverage(results_csv, out_dir / "coverage.png")
        written.append(out_dir / "coverage.png")
    except SchemaError as exc:
        print(f"skipping coverage.png: {exc}")

    plot_mse_box(results_csv, out_dir / "mse_box.png")
    written.append(out_dir / "mse_box.png")
    return written
