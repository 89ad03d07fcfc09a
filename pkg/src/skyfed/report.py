"""Query reports: the delimited result plus rendered figures.

Every report lands in one directory: result.csv, a sky scatter of the
matched positions colored by the match statistic, and (when counts from a
planning run are supplied) a bar chart of per-archive in-area counts.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .table import ResultTable  # noqa: E402


def _find_radec_columns(table: ResultTable) -> tuple[str, str] | None:
    names = table.column_names()
    if "_ra" in names and "_dec" in names:
        return "_ra", "_dec"
    # Otherwise any alias-qualified ra/dec pair from the same alias.
    by_alias: dict[str, dict[str, str]] = {}
    for name in table.column_names():
        alias, _, col = name.rpartition(".")
        if col.lower() in ("ra", "dec"):
            by_alias.setdefault(alias, {})[col.lower()] = name
    for alias in sorted(by_alias):
        pair = by_alias[alias]
        if "ra" in pair and "dec" in pair:
            return pair["ra"], pair["dec"]
    return None


def write_report(table: ResultTable, outdir: str,
                 counts: dict[str, int] | None = None,
                 title: str = "cross-identification result") -> list[str]:
    """Write result.csv plus figures; returns the paths written."""
    os.makedirs(outdir, exist_ok=True)
    written = []

    csv_path = os.path.join(outdir, "result.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(table.to_csv())
    written.append(csv_path)

    radec = _find_radec_columns(table)
    names = table.column_names()
    if radec is not None and table.rows:
        ra = table.column_values(radec[0])
        dec = table.column_values(radec[1])
        color = (table.column_values("_xmatch_sigma")
                 if "_xmatch_sigma" in names else None)
        fig, ax = plt.subplots(figsize=(7, 6))
        sc = ax.scatter(ra, dec, c=color, s=12, cmap="viridis")
        if color is not None:
            fig.colorbar(sc, ax=ax, label="match statistic (sigma)")
        ax.set_xlabel("ra (deg)")
        ax.set_ylabel("dec (deg)")
        ax.invert_xaxis()  # sky convention: ra increases leftward
        ax.set_title(f"{title}: {len(table.rows)} matches")
        fig.tight_layout()
        sky_path = os.path.join(outdir, "sky_matches.png")
        fig.savefig(sky_path, dpi=120)
        plt.close(fig)
        written.append(sky_path)

    if "_xmatch_sigma" in names and table.rows:
        sig = table.column_values("_xmatch_sigma")
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.hist(sig, bins=min(40, max(5, len(sig) // 3)))
        ax.set_xlabel("match statistic (sigma)")
        ax.set_ylabel("tuples")
        ax.set_title("match statistic distribution")
        fig.tight_layout()
        hist_path = os.path.join(outdir, "sigma_hist.png")
        fig.savefig(hist_path, dpi=120)
        plt.close(fig)
        written.append(hist_path)

    if counts:
        fig, ax = plt.subplots(figsize=(6, 4))
        labels = sorted(counts)
        ax.bar(labels, [counts[k] for k in labels])
        ax.set_xlabel("query alias")
        ax.set_ylabel("in-area rows")
        ax.set_title("per-archive candidate counts")
        fig.tight_layout()
        counts_path = os.path.join(outdir, "archive_counts.png")
        fig.savefig(counts_path, dpi=120)
        plt.close(fig)
        written.append(counts_path)

    return written
