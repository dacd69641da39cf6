#!/usr/bin/env python3
"""Turn metrics.csv files from one or more runs into comparison figures.

Each series is a label plus the csv paths of its seeds. The figure shows,
per series, the across-seed mean of the chosen column with a min-max band,
optionally smoothed by a trailing moving average. The aggregated values
are also written next to the figure as ``<figure>.agg.csv`` so plots can
be diffed numerically.

Usage:
    plot.py --series untargeted=runs/s0/metrics.csv,runs/s1/metrics.csv \
            --series baseline=runs/r0/metrics.csv \
            --column eval_return --out fig.png [--smooth 5]
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass
from pathlib import Path

EXPECTED_HEADER = [
    "episode",
    "eval_return",
    "success_rate",
    "drops_expiry",
    "drops_shift",
    "drops_residual",
    "mean_delay",
]
COLUMNS = ("eval_return", "success_rate")


class PlotError(ValueError):
    pass


@dataclass
class SeriesSpec:
    label: str
    paths: list[Path]
    column: str
    smoothing_window: int = 5


@dataclass
class Aggregated:
    label: str
    episodes: list[int]
    mean: list[float]
    low: list[float]
    high: list[float]


def read_column(path: Path, column: str) -> tuple[list[int], list[float]]:
    """Episode numbers and values for one run; empty or malformed files error."""
    if column not in COLUMNS:
        raise PlotError(f"unsupported column {column!r}, expected one of {COLUMNS}")
    with path.open() as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PlotError(f"{path}: empty csv") from None
        if header != EXPECTED_HEADER:
            raise PlotError(f"{path}: header {header} does not match the metrics contract")
        episodes: list[int] = []
        values: list[float] = []
        idx = header.index(column)
        for row in reader:
            cell = row[idx]
            if cell == "":
                continue  # column absent for this evaluation (e.g. untargeted SR)
            episodes.append(int(row[0]))
            values.append(float(cell))
    if not values:
        raise PlotError(f"{path}: no values in column {column!r}")
    return episodes, values


def smooth(values: list[float], window: int) -> list[float]:
    """Trailing moving average; window 1 returns the input unchanged."""
    if window < 1:
        raise PlotError(f"smoothing window must be >= 1, got {window}")
    out = []
    for i in range(len(values)):
        lo = max(0, i - window + 1)
        out.append(sum(values[lo : i + 1]) / (i + 1 - lo))
    return out


def aggregate(spec: SeriesSpec) -> Aggregated:
    """Across-seed mean and min-max band on the common episode prefix."""
    runs = [read_column(p, spec.column) for p in spec.paths]
    first_eps = runs[0][0]
    n = min(len(eps) for eps, _ in runs)
    for eps, _ in runs[1:]:
        if eps[:n] != first_eps[:n]:
            raise PlotError(f"series {spec.label!r}: runs disagree on evaluation episodes")
    table = [[values[i] for _, values in runs] for i in range(n)]
    mean = smooth([sum(row) / len(row) for row in table], spec.smoothing_window)
    low = smooth([min(row) for row in table], spec.smoothing_window)
    high = smooth([max(row) for row in table], spec.smoothing_window)
    return Aggregated(spec.label, first_eps[:n], mean, low, high)


def write_aggregate_csv(path: Path, aggregated: list[Aggregated]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "episode", "mean", "low", "high"])
        for agg in aggregated:
            for i, ep in enumerate(agg.episodes):
                writer.writerow([agg.label, ep, repr(agg.mean[i]), repr(agg.low[i]), repr(agg.high[i])])


def plot(series: list[SeriesSpec], out: Path) -> list[Aggregated]:
    """Render one chart with a mean line and min-max band per series."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not series:
        raise PlotError("no series given")
    aggregated = [aggregate(s) for s in series]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for agg in aggregated:
        (line,) = ax.plot(agg.episodes, agg.mean, label=agg.label)
        ax.fill_between(agg.episodes, agg.low, agg.high, alpha=0.2, color=line.get_color())
    ax.set_xlabel("episode")
    ax.set_ylabel(series[0].column.replace("_", " "))
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    write_aggregate_csv(out.with_suffix(out.suffix + ".agg.csv"), aggregated)
    return aggregated


def parse_series(raw: list[str], column: str, window: int) -> list[SeriesSpec]:
    out = []
    for item in raw:
        label, sep, paths = item.partition("=")
        if not sep or not paths:
            raise PlotError(f"--series expects label=path[,path...], got {item!r}")
        out.append(SeriesSpec(label, [Path(p) for p in paths.split(",")], column, window))
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--series", action="append", required=True, metavar="LABEL=CSV[,CSV...]")
    parser.add_argument("--column", default="eval_return", choices=COLUMNS)
    parser.add_argument("--out", required=True, type=Path)
    parser.add_argument("--smooth", type=int, default=5, help="trailing moving-average window (1 = raw)")
    args = parser.parse_args(argv)
    try:
        series = parse_series(args.series, args.column, args.smooth)
        plot(series, args.out)
    except (PlotError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(f"wrote {args.out} and {args.out.with_suffix(args.out.suffix + '.agg.csv')}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
