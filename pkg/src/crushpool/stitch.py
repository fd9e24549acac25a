"""Assemble per-job output files into results.txt and stats.txt.

Every job document carries the same 6-line header (banner, job, generator,
seed, started, separator). results.txt takes the header from output.0 once,
then the bodies of the test-bearing jobs in index order. For Crush and
BigCrush the summary block of each body moves to stats.txt under the job
number; for SmallCrush bodies are appended whole and stats.txt stays empty.

Documents are split structurally on the first line starting with "Summary"
rather than by line-offset arithmetic, so the format can change shape
without silently corrupting the stitched output.
"""

from __future__ import annotations

import os
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .battery import BatterySpec, TestOutcome, battery_spec
from .pool import format_sim_time

HEADER_LINES = 6
_SEPARATOR = "-" * 40


class StitchError(RuntimeError):
    """Missing or malformed job output, or an unusable destination."""


@dataclass(frozen=True)
class JobMeta:
    """Header fields of one job document."""

    battery_name: str
    proc: int
    generator_name: str
    effective_seed: int
    started: float | str  # virtual seconds, or a pre-formatted string


@dataclass(frozen=True)
class JobOutputDoc:
    header: tuple[str, ...]
    body: tuple[str, ...]
    summary: tuple[str, ...]

    @property
    def header_only(self) -> bool:
        return not self.body and not self.summary


@dataclass(frozen=True)
class StitchReport:
    results_path: Path
    stats_path: Path
    dest_dir: Path
    jobs_stitched: int
    dest_created: bool


def render_job_output(outcome: TestOutcome | None, meta: JobMeta) -> str:
    """One job's output document; header-only when outcome is None."""
    started = meta.started if isinstance(meta.started, str) else format_sim_time(meta.started)
    lines = [
        f"========== {meta.battery_name} ==========",
        f"job: {meta.proc}",
        f"generator: {meta.generator_name}",
        f"seed: {meta.effective_seed}",
        f"started: {started}",
        _SEPARATOR,
    ]
    if outcome is not None:
        lines += [
            f"test {outcome.index}: {outcome.name}",
            f"samples: {outcome.samples_used}",
            f"statistic: {outcome.statistic:.6f}",
            "Summary",
            f" test: {outcome.name}",
            f" p-value: {outcome.p_value:.6f}",
            f" verdict: {outcome.verdict.value}",
        ]
    return "\n".join(lines) + "\n"


def parse_job_output(text: str) -> JobOutputDoc:
    lines = text.splitlines()
    if len(lines) < HEADER_LINES:
        raise StitchError(f"job output has fewer than {HEADER_LINES} lines")
    header = tuple(lines[:HEADER_LINES])
    rest = lines[HEADER_LINES:]
    if not rest:
        return JobOutputDoc(header=header, body=(), summary=())
    for i, line in enumerate(rest):
        if line.startswith("Summary"):
            return JobOutputDoc(header=header, body=tuple(rest[:i]), summary=tuple(rest[i:]))
    raise StitchError("missing summary block in test-bearing job output")


def assemble_results(docs: list[JobOutputDoc], spec: BatterySpec) -> str:
    """results.txt: output.0's header, then test-bearing bodies in order."""
    lines: list[str] = list(docs[0].header)
    if spec.code == 0:
        # SmallCrush: every job bears a test; bodies are appended whole
        for doc in docs:
            lines += list(doc.body) + list(doc.summary)
    else:
        for doc in docs[1:]:
            lines += list(doc.body)
    return "\n".join(lines) + "\n"


def assemble_stats(docs: list[JobOutputDoc], spec: BatterySpec) -> str:
    """stats.txt: numbered summary blocks for Crush/BigCrush, empty for SmallCrush."""
    if spec.code == 0:
        return ""
    lines: list[str] = []
    for proc, doc in enumerate(docs):
        if proc == 0:
            continue
        lines.append(str(proc))
        lines += list(doc.summary)
        lines.append("")
    return "\n".join(lines) + "\n" if lines else ""


def stitched_job_count(spec: BatterySpec) -> int:
    """Jobs whose bodies land in results.txt (11 / 96 / 106)."""
    return spec.job_count if spec.code == 0 else spec.test_count


def stitch_results(
    directory: str | Path,
    battery: str,
    dest: str | Path,
    echo: Callable[[str], None] | None = None,
) -> StitchReport:
    """Stitch a completed run's directory into dest; see module docstring.

    Validates and parses every expected output file before touching anything,
    so a malformed run aborts with the inputs intact.
    """
    spec = battery_spec(battery)
    base = Path(directory)
    dest_dir = Path(dest)

    docs: list[JobOutputDoc] = []
    for proc in range(spec.job_count):
        path = base / f"output.{proc}"
        if not path.is_file():
            raise StitchError(f"missing output file: output.{proc}")
        try:
            docs.append(parse_job_output(path.read_text(encoding="utf-8")))
        except StitchError as exc:
            raise StitchError(f"output.{proc}: {exc}") from exc

    dest_created = not dest_dir.exists()
    if dest_created:
        try:
            dest_dir.mkdir(parents=True)
        except OSError as exc:
            raise StitchError(f"cannot create destination {dest_dir}: {exc}") from exc
    else:
        if not dest_dir.is_dir():
            raise StitchError(f"destination exists and is not a directory: {dest_dir}")
        if echo:
            echo("directory exists")

    for name in ("results.txt", "stats.txt"):
        try:
            (base / name).unlink()
        except FileNotFoundError:
            pass

    if echo:
        procs = list(range(spec.job_count))
        for chunk_start in range(0, len(procs), 10):
            echo(" ".join(str(p) for p in procs[chunk_start:chunk_start + 10]))

    results_path = base / "results.txt"
    stats_path = base / "stats.txt"
    results_path.write_text(assemble_results(docs, spec), encoding="utf-8", newline="")
    stats_path.write_text(assemble_stats(docs, spec), encoding="utf-8", newline="")

    for path in sorted(base.glob("output.*")):
        os.replace(path, dest_dir / path.name)
    shutil.copyfile(results_path, dest_dir / "results.txt")
    shutil.copyfile(stats_path, dest_dir / "stats.txt")
    log_path = base / "log"
    if log_path.is_file():
        os.replace(log_path, dest_dir / "log")

    return StitchReport(
        results_path=results_path,
        stats_path=stats_path,
        dest_dir=dest_dir,
        jobs_stitched=stitched_job_count(spec),
        dest_created=dest_created,
    )
