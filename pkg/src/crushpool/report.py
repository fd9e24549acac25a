"""Figures and delimited summaries for a completed run directory.

Works off the stitched destination directory (which holds the per-job
output.* documents and the event log): writes summary.csv next to
results.txt, a p-value chart, and a slot-occupancy timeline that makes the
wave structure of the run visible.
"""

from __future__ import annotations

import csv
from pathlib import Path

from .pool import parse_log_events
from .stitch import parse_job_output


class ReportError(RuntimeError):
    """The run directory is missing the artifacts a report needs."""


def extract_outcome_rows(dest_dir: str | Path) -> list[dict]:
    """One row per test-bearing job document found in the directory."""
    base = Path(dest_dir)
    paths = sorted(base.glob("output.*"), key=lambda p: int(p.suffix[1:]))
    if not paths:
        raise ReportError(f"no output.* documents in {base}")
    rows = []
    for path in paths:
        doc = parse_job_output(path.read_text(encoding="utf-8"))
        if doc.header_only:
            continue
        fields = {}
        for line in doc.body:
            key, _, value = line.partition(":")
            fields[key.strip().split()[0]] = value.strip()
        for line in doc.summary:
            if line.startswith(" p-value:"):
                fields["p-value"] = line.split(":", 1)[1].strip()
            elif line.startswith(" verdict:"):
                fields["verdict"] = line.split(":", 1)[1].strip()
        name = next((ln.split(":", 1)[1].strip() for ln in doc.body if ln.startswith("test ")), "")
        rows.append({
            "proc": int(path.suffix[1:]),
            "name": name,
            "family": name.split()[0] if name else "",
            "samples": int(fields.get("samples", 0)),
            "statistic": float(fields.get("statistic", "nan")),
            "p_value": float(fields.get("p-value", "nan")),
            "verdict": fields.get("verdict", ""),
        })
    return rows


def write_summary_csv(dest_dir: str | Path, rows: list[dict] | None = None) -> Path:
    base = Path(dest_dir)
    rows = extract_outcome_rows(base) if rows is None else rows
    out = base / "summary.csv"
    with open(out, "w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(
            handle,
            fieldnames=["proc", "name", "family", "samples", "statistic", "p_value", "verdict"],
        )
        writer.writeheader()
        writer.writerows(rows)
    return out


def _occupancy_series(dest_dir: Path) -> tuple[list[float], list[int]]:
    log_path = dest_dir / "log"
    if not log_path.is_file():
        raise ReportError(f"no event log in {dest_dir}")
    times, counts = [0.0], [0]
    running: set[tuple[int, int]] = set()
    for ev in parse_log_events(log_path):
        if ev.kind != "job":
            continue
        if ev.event == "STARTED":
            running.add((ev.cluster, ev.proc))
        elif ev.event in ("COMPLETED", "PREEMPTED", "REMOVED"):
            running.discard((ev.cluster, ev.proc))
        else:
            continue
        times.append(ev.time)
        counts.append(len(running))
    return times, counts


def render_figures(dest_dir: str | Path, rows: list[dict] | None = None) -> list[Path]:
    """Write occupancy.png and pvalues.png into the run directory."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    base = Path(dest_dir)
    rows = extract_outcome_rows(base) if rows is None else rows
    written = []

    times, counts = _occupancy_series(base)
    fig, ax = plt.subplots(figsize=(8, 3.2))
    ax.step(times, counts, where="post")
    ax.set_xlabel("virtual time [s]")
    ax.set_ylabel("running jobs")
    ax.set_title("slot occupancy (waves)")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    occupancy = base / "occupancy.png"
    fig.savefig(occupancy, dpi=110)
    plt.close(fig)
    written.append(occupancy)

    procs = [r["proc"] for r in rows]
    pvals = [max(r["p_value"], 1e-12) for r in rows]
    colors = {"PASS": "tab:green", "SUSPECT": "tab:orange", "FAIL": "tab:red"}
    fig, ax = plt.subplots(figsize=(8, 3.2))
    ax.scatter(procs, pvals, s=14, c=[colors.get(r["verdict"], "tab:gray") for r in rows])
    ax.axhline(1e-3, color="tab:orange", lw=0.8, ls="--", label="suspect")
    ax.axhline(1e-10, color="tab:red", lw=0.8, ls="--", label="fail")
    ax.set_yscale("log")
    ax.set_ylim(1e-13, 2.0)
    ax.set_xlabel("job index")
    ax.set_ylabel("p-value")
    ax.set_title("per-test p-values")
    ax.legend(loc="lower right", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    pvalues_png = base / "pvalues.png"
    fig.savefig(pvalues_png, dpi=110)
    plt.close(fig)
    written.append(pvalues_png)
    return written


def write_report(dest_dir: str | Path) -> list[Path]:
    """summary.csv plus both figures; returns everything written."""
    rows = extract_outcome_rows(dest_dir)
    paths = [write_summary_csv(dest_dir, rows)]
    paths += render_figures(dest_dir, rows)
    return paths
